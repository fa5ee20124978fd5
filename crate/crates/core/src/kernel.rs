//! Maximum-entropy transition kernel.
//!
//! A short step from x is distributed as P(x'|x) proportional to
//! exp(S(x') - (alpha/2) dl^2), where S is the entropy field of the
//! statistical manifold and dl^2 the squared metric step length. Large
//! alpha makes steps short: the drift scales as 1/alpha and fluctuations
//! as 1/sqrt(alpha), so trajectories become non-differentiable in the
//! continuum limit. Sampling uses the Gaussian approximation of the kernel
//! (exact in that limit) with a quality gate on the entropy variation per
//! step.

use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::manifold::{entropy, entropy_gradient, ConfigSpace, ConformalFactor};
use crate::rng::Stream;
use crate::scalar::Scalar;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

/// Step-size bookkeeping: alpha = tau / dt ties the multiplier to the
/// chosen time resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams<S> {
    pub tau: S,
    pub dt: S,
}

impl<S: Scalar> StepParams<S> {
    pub fn new(tau: S, dt: S) -> Result<Self> {
        if !(tau > S::zero()) || !(dt > S::zero()) {
            return Err(CoreError::usage("tau and dt must be positive"));
        }
        Ok(StepParams { tau, dt })
    }

    #[inline]
    pub fn alpha(&self) -> S {
        self.tau / self.dt
    }
}

/// Maximum entropy-field variation across one step standard deviation
/// before the Gaussian approximation of the kernel is considered suspect.
pub const GATE_THRESHOLD_NATS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityGate {
    Off,
    /// Count violations but keep sampling.
    Warn,
    /// Refuse to sample when the gate trips.
    Error,
}

/// Quadrature box for the exact kernel, centered on the source point and
/// scaled per axis by the step standard deviation sigma / sqrt(alpha).
#[derive(Debug, Clone, Copy)]
pub struct StepGrid {
    /// Half-width in units of the step standard deviation.
    pub half_width: f64,
    /// Quadrature points per axis (midpoint rule).
    pub points_per_axis: usize,
}

impl Default for StepGrid {
    fn default() -> Self {
        StepGrid {
            half_width: 6.0,
            points_per_axis: 64,
        }
    }
}

/// Relative probability mass allowed in the outermost quadrature shell.
pub const COVERAGE_LIMIT: f64 = 1e-6;

/// Result of checking the discretized maximum-entropy problem against the
/// analytic kernel.
#[derive(Debug, Clone)]
pub struct MaximizerReport<S> {
    /// sup |p_opt - p_analytic| / sup p_analytic on the grid.
    pub sup_deviation: S,
    /// Multiplier recovered from the constrained optimization.
    pub alpha_recovered: S,
    /// Entropy objective at the numerical optimizer.
    pub objective_numeric: S,
    /// Entropy objective at the analytic kernel.
    pub objective_analytic: S,
}

type CacheKey = (Vec<u64>, u64, usize);

struct ZetaCache<S> {
    map: HashMap<CacheKey, S>,
    order: Vec<CacheKey>,
    cap: usize,
}

impl<S: Scalar> ZetaCache<S> {
    fn new(cap: usize) -> Self {
        ZetaCache {
            map: HashMap::new(),
            order: Vec::new(),
            cap,
        }
    }

    fn get(&self, k: &CacheKey) -> Option<S> {
        self.map.get(k).copied()
    }

    fn put(&mut self, k: CacheKey, v: S) {
        if self.map.len() >= self.cap && !self.map.contains_key(&k) {
            if let Some(old) = self.order.first().cloned() {
                self.map.remove(&old);
                self.order.remove(0);
            }
        }
        if self.map.insert(k.clone(), v).is_none() {
            self.order.push(k);
        }
    }
}

/// The transition kernel over a fixed manifold. Evaluation is pure; the
/// only interior state is a bounded normalizer cache, which never needs
/// invalidation because the kernel borrows its manifold immutably and step
/// parameters are fixed at construction.
pub struct TransitionKernel<'a, S> {
    pub space: &'a ConfigSpace<S>,
    pub phi: &'a ConformalFactor<S>,
    pub params: StepParams<S>,
    pub gate: QualityGate,
    cache: Mutex<ZetaCache<S>>,
    gate_warnings: AtomicU64,
}

impl<'a, S: Scalar> TransitionKernel<'a, S> {
    pub fn new(
        space: &'a ConfigSpace<S>,
        phi: &'a ConformalFactor<S>,
        params: StepParams<S>,
    ) -> Self {
        TransitionKernel {
            space,
            phi,
            params,
            gate: QualityGate::Warn,
            cache: Mutex::new(ZetaCache::new(1024)),
            gate_warnings: AtomicU64::new(0),
        }
    }

    pub fn with_gate(mut self, gate: QualityGate) -> Self {
        self.gate = gate;
        self
    }

    pub fn gate_warning_count(&self) -> u64 {
        self.gate_warnings.load(Ordering::Relaxed)
    }

    pub fn entropy_at(&self, x: &[S]) -> Result<S> {
        entropy(x, self.space, self.phi)
    }

    pub fn entropy_gradient_at(&self, x: &[S]) -> Result<Vec<S>> {
        entropy_gradient(x, self.space, self.phi)
    }

    /// Step standard deviation along axis `a`: sigma_a / sqrt(alpha).
    #[inline]
    pub fn step_std(&self, a: usize) -> S {
        self.space.sigma_of_axis(a) / self.params.alpha().sqrt()
    }

    /// Unnormalized log-weight: S(x') - (alpha/2) |x' - x|^2_gamma.
    pub fn log_transition_weight(&self, x_new: &[S], x: &[S]) -> Result<S> {
        self.space.check_point(x)?;
        self.space.check_point(x_new)?;
        let s = entropy(x_new, self.space, self.phi)?;
        let dx: Vec<S> = x_new.iter().zip(x).map(|(&a, &b)| a - b).collect();
        let l2 = self.space.metric_norm_sq(&dx);
        Ok(s - self.params.alpha() / S::lit(2.0) * l2)
    }

    fn quadrature_offsets(&self, grid: &StepGrid) -> (Vec<Vec<S>>, S) {
        let d = self.space.dim();
        let n = grid.points_per_axis;
        let mut axes = Vec::with_capacity(d);
        let mut vol = S::one();
        for a in 0..d {
            let hw = S::lit(grid.half_width) * self.step_std(a);
            let cell = S::lit(2.0) * hw / S::from_usize(n).unwrap();
            vol = vol * cell;
            let mut pts = Vec::with_capacity(n);
            for i in 0..n {
                pts.push(-hw + (S::from_usize(i).unwrap() + S::lit(0.5)) * cell);
            }
            axes.push(pts);
        }
        (axes, vol)
    }

    /// Walks the product quadrature grid, reporting each offset point's
    /// weight contribution and whether it lies in the outermost shell.
    fn zeta_scan(
        &self,
        x: &[S],
        grid: &StepGrid,
        alpha: S,
        mut visit: impl FnMut(&[S], S, bool),
    ) -> Result<()> {
        let d = self.space.dim();
        if d > 3 {
            return Err(CoreError::numerical(
                "exact-kernel quadrature restricted to D <= 3",
            ));
        }
        let (axes, vol) = self.quadrature_offsets(grid);
        let n = grid.points_per_axis;
        let mut idx = vec![0usize; d];
        let mut xp = x.to_vec();
        let half = S::lit(0.5);
        loop {
            let mut shell = false;
            for (a, &i) in idx.iter().enumerate() {
                xp[a] = x[a] + axes[a][i];
                if i == 0 || i == n - 1 {
                    shell = true;
                }
            }
            let s = entropy(&xp, self.space, self.phi)?;
            let dx: Vec<S> = xp.iter().zip(x).map(|(&a, &b)| a - b).collect();
            let l2 = self.space.metric_norm_sq(&dx);
            let w = (s - alpha * half * l2).exp() * vol;
            visit(&xp, w, shell);
            let mut k = 0;
            loop {
                if k == d {
                    return Ok(());
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn zeta_with_alpha(&self, x: &[S], grid: &StepGrid, alpha: S) -> Result<S> {
        let mut total = S::zero();
        let mut shell = S::zero();
        self.zeta_scan(x, grid, alpha, |_, w, on_shell| {
            total += w;
            if on_shell {
                shell += w;
            }
        })?;
        if shell / total > S::lit(COVERAGE_LIMIT) {
            return Err(CoreError::coverage(format!(
                "step grid too small: boundary shell holds {:e} of the kernel mass",
                shell / total
            )));
        }
        Ok(total)
    }

    /// Normalizer zeta(x) by midpoint quadrature, cached per (x, grid).
    pub fn zeta(&self, x: &[S], grid: &StepGrid) -> Result<S> {
        let key: CacheKey = (
            x.iter().map(|v| v.to_f64_lossy().to_bits()).collect(),
            grid.half_width.to_bits(),
            grid.points_per_axis,
        );
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let v = self.zeta_with_alpha(x, grid, self.params.alpha())?;
        self.cache.lock().unwrap().put(key, v);
        Ok(v)
    }

    /// Normalized transition density on the step grid.
    pub fn transition_density_exact(&self, x_new: &[S], x: &[S], grid: &StepGrid) -> Result<S> {
        let z = self.zeta(x, grid)?;
        Ok(self.log_transition_weight(x_new, x)?.exp() / z)
    }

    /// Mean squared step length under the exact kernel.
    pub fn lambda_sq_quadrature(&self, x: &[S], grid: &StepGrid) -> Result<S> {
        let mut total = S::zero();
        let mut weighted = S::zero();
        let alpha = self.params.alpha();
        self.zeta_scan(x, grid, alpha, |xp, w, _| {
            let dx: Vec<S> = xp.iter().zip(x).map(|(&a, &b)| a - b).collect();
            let l2 = self.space.metric_norm_sq(&dx);
            total += w;
            weighted += w * l2;
        })?;
        Ok(weighted / total)
    }

    /// Mean squared step length from the thermodynamic identity
    /// lambda^2 = -2 d(log zeta)/d(alpha), by central difference.
    pub fn lambda_sq_from_zeta(&self, x: &[S], grid: &StepGrid) -> Result<S> {
        let alpha = self.params.alpha();
        let h = alpha * S::lit(1e-5);
        let zp = self.zeta_with_alpha(x, grid, alpha + h)?;
        let zm = self.zeta_with_alpha(x, grid, alpha - h)?;
        Ok(-(zp.ln() - zm.ln()) / h)
    }

    /// Most probable step: (1/alpha) gamma^{ab} d_b S.
    pub fn most_probable_step(&self, x: &[S]) -> Result<Vec<S>> {
        let grad = entropy_gradient(x, self.space, self.phi)?;
        let alpha = self.params.alpha();
        Ok(grad
            .iter()
            .enumerate()
            .map(|(a, &g)| {
                let s = self.space.sigma_of_axis(a);
                s * s * g / alpha
            })
            .collect())
    }

    /// Forward drift velocity: b^a = (sigma_a^2 / tau) d_a S.
    pub fn forward_drift(&self, x: &[S]) -> Result<Vec<S>> {
        let grad = entropy_gradient(x, self.space, self.phi)?;
        Ok(grad
            .iter()
            .enumerate()
            .map(|(a, &g)| {
                let s = self.space.sigma_of_axis(a);
                s * s * g / self.params.tau
            })
            .collect())
    }

    /// Backward drift from Bayesian time reversal:
    /// b*^a = b^a - (sigma_a^2 / tau) d_a log rho.
    pub fn backward_drift(&self, x: &[S], rho: &Field<S>) -> Result<Vec<S>> {
        let b = self.forward_drift(x)?;
        let r = rho.value(x);
        if !(r > S::zero()) || !r.is_finite() {
            return Err(CoreError::domain(format!(
                "density must be positive to reverse drift, got {r}"
            )));
        }
        let grad = rho.gradient(x);
        Ok(b
            .iter()
            .enumerate()
            .map(|(a, &ba)| {
                let s = self.space.sigma_of_axis(a);
                ba - s * s / self.params.tau * grad[a] / r
            })
            .collect())
    }

    /// Entropy-field variation across one step standard deviation, in nats.
    pub fn entropy_span(&self, x: &[S]) -> Result<S> {
        let grad = entropy_gradient(x, self.space, self.phi)?;
        let mut acc = S::zero();
        for (a, &g) in grad.iter().enumerate() {
            let v = g * self.step_std(a);
            acc += v * v;
        }
        Ok(acc.sqrt())
    }

    /// One sampled step of the Gaussian kernel approximation:
    /// x' = x + b dt + dw with per-axis noise variance (sigma_a^2 / tau) dt.
    /// The stream must be keyed by (seed, walker, step) by the caller.
    pub fn sample_step(&self, x: &[S], stream: &mut Stream) -> Result<Vec<S>> {
        if self.gate != QualityGate::Off {
            let span = self.entropy_span(x)?;
            if span > S::lit(GATE_THRESHOLD_NATS) {
                match self.gate {
                    QualityGate::Error => {
                        return Err(CoreError::numerical(format!(
                            "entropy varies by {span} nats across one step deviation \
                             (limit {GATE_THRESHOLD_NATS}); the Gaussian step law is unreliable"
                        )));
                    }
                    QualityGate::Warn => {
                        self.gate_warnings.fetch_add(1, Ordering::Relaxed);
                    }
                    QualityGate::Off => {}
                }
            }
        }
        let b = self.forward_drift(x)?;
        let d = self.space.dim();
        let mut noise = vec![S::zero(); d];
        stream.fill_normals(&mut noise);
        let dt = self.params.dt;
        Ok((0..d)
            .map(|a| {
                let s = self.space.sigma_of_axis(a);
                let std = (s * s / self.params.tau * dt).sqrt();
                x[a] + b[a] * dt + std * noise[a]
            })
            .collect())
    }

    /// Solves the discretized maximum-entropy problem on a 1D step grid and
    /// compares the optimizer against the analytic kernel.
    ///
    /// The constrained problem (normalization plus fixed mean squared step
    /// length, taken from the analytic kernel by quadrature) is solved by
    /// multiplier bisection on the step-length constraint, never assuming
    /// the analytic normalizer or the input alpha. The recovered multiplier
    /// should equal alpha and the optimizer should coincide with the kernel.
    pub fn verify_me_maximizer(&self, x: &[S], points: usize) -> Result<MaximizerReport<S>> {
        if self.space.dim() != 1 {
            return Err(CoreError::usage(
                "the maximizer check is defined on a 1D step grid",
            ));
        }
        let alpha = self.params.alpha();
        let hw = S::lit(6.0) * self.step_std(0);
        let n = points;
        let h = S::lit(2.0) * hw / S::from_usize(n).unwrap();
        let mut xs = Vec::with_capacity(n);
        let mut svals = Vec::with_capacity(n);
        let mut lsq = Vec::with_capacity(n);
        for i in 0..n {
            let xp = x[0] - hw + (S::from_usize(i).unwrap() + S::lit(0.5)) * h;
            xs.push(xp);
            svals.push(entropy(&[xp], self.space, self.phi)?);
            let dx = [xp - x[0]];
            lsq.push(self.space.metric_norm_sq(&dx));
        }
        let half = S::lit(0.5);
        // Analytic kernel restricted to the grid.
        let normalize = |logw: &[S]| -> Vec<S> {
            let m = logw.iter().copied().fold(S::neg_infinity(), S::max);
            let mass: S = logw.iter().map(|&l| (l - m).exp()).sum::<S>() * h;
            logw.iter().map(|&l| (l - m).exp() / mass).collect()
        };
        let log_analytic: Vec<S> = svals
            .iter()
            .zip(&lsq)
            .map(|(&s, &l)| s - alpha * half * l)
            .collect();
        let p_analytic = normalize(&log_analytic);
        let lambda_sq: S = p_analytic
            .iter()
            .zip(&lsq)
            .map(|(&p, &l)| p * l)
            .sum::<S>()
            * h;
        // Multiplier bisection: p(beta) maximizes the entropy objective under
        // normalization for a given step-length multiplier; the constraint
        // <l^2> = lambda^2 pins beta. Monotone decreasing in beta.
        let mean_lsq = |beta: S| -> S {
            let logw: Vec<S> = svals
                .iter()
                .zip(&lsq)
                .map(|(&s, &l)| s - beta * l)
                .collect();
            let p = normalize(&logw);
            p.iter().zip(&lsq).map(|(&pi, &l)| pi * l).sum::<S>() * h
        };
        let mut lo = S::zero();
        let mut hi = S::one();
        while mean_lsq(hi) > lambda_sq {
            hi = hi * S::lit(2.0);
            if hi > S::lit(1e18) {
                return Err(CoreError::numerical("multiplier bracket failed"));
            }
        }
        for _ in 0..200 {
            let mid = half * (lo + hi);
            if mean_lsq(mid) > lambda_sq {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= hi * S::epsilon() {
                break;
            }
        }
        let beta = half * (lo + hi);
        let logw: Vec<S> = svals.iter().zip(&lsq).map(|(&s, &l)| s - beta * l).collect();
        let p_numeric = normalize(&logw);
        let sup_p = p_analytic.iter().copied().fold(S::zero(), S::max);
        let sup_dev = p_numeric
            .iter()
            .zip(&p_analytic)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max)
            / sup_p;
        let meas = self.space.sqrt_det_gamma();
        let objective = |p: &[S]| -> S {
            p.iter()
                .zip(&svals)
                .map(|(&pi, &s)| {
                    if pi > S::zero() {
                        (-pi * (pi / meas).ln() + pi * s) * h
                    } else {
                        S::zero()
                    }
                })
                .sum()
        };
        Ok(MaximizerReport {
            sup_deviation: sup_dev,
            alpha_recovered: S::lit(2.0) * beta,
            objective_numeric: objective(&p_numeric),
            objective_analytic: objective(&p_analytic),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    fn space1() -> ConfigSpace<f64> {
        ConfigSpace::single(1, 1.0).unwrap()
    }

    fn exp_phi(k: f64) -> ConformalFactor<f64> {
        ConformalFactor::new(Field::Exp {
            scale: 1.0,
            rate: vec![k],
        })
    }

    #[test]
    fn zeta_matches_closed_form_for_constant_factor() {
        // Constant phi: S is constant, the kernel is Gaussian, and
        // zeta = exp(S0) prod_a sqrt(2 pi sigma_a^2 / alpha).
        let space = ConfigSpace::new(1, 2, vec![1.0, 1.5]).unwrap();
        let phi = ConformalFactor::constant(1.9);
        let kernel = TransitionKernel::new(&space, &phi, StepParams::new(1.0, 1e-3).unwrap());
        let grid = StepGrid::default();
        let x = [0.2, -0.4];
        let z = kernel.zeta(&x, &grid).unwrap();
        let alpha = 1000.0;
        let s0: f64 = entropy(&x, &space, &phi).unwrap();
        let closed = s0.exp()
            * (2.0 * std::f64::consts::PI * 1.0 / alpha).sqrt()
            * (2.0 * std::f64::consts::PI * 2.25 / alpha).sqrt();
        assert!(
            ((z - closed) / closed).abs() < 1e-6,
            "zeta {z} vs closed {closed}"
        );
    }

    #[test]
    fn transition_density_is_normalized_gaussian_for_constant_factor() {
        let space = space1();
        let phi = ConformalFactor::constant(1.0);
        let kernel = TransitionKernel::new(&space, &phi, StepParams::new(1.0, 1e-4).unwrap());
        let grid = StepGrid::default();
        let x = [0.0];
        let std = kernel.step_std(0);
        let v = kernel.transition_density_exact(&[std], &x, &grid).unwrap();
        let gauss = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt() / std;
        assert!(((v - gauss) / gauss).abs() < 1e-6, "{v} vs {gauss}");
    }

    #[test]
    fn coverage_error_when_step_grid_too_small() {
        let space = space1();
        let phi = ConformalFactor::constant(1.0);
        let kernel = TransitionKernel::new(&space, &phi, StepParams::new(1.0, 1e-3).unwrap());
        let tight = StepGrid {
            half_width: 2.0,
            points_per_axis: 32,
        };
        let err = kernel.zeta(&[0.0], &tight).unwrap_err();
        assert!(matches!(err, CoreError::Coverage(_)), "{err}");
    }

    #[test]
    fn most_probable_step_linear_entropy() {
        // phi = exp(kx) gives dS = -k/2, so the mode sits at sigma^2 dS / alpha.
        let space = space1();
        let k = 0.8;
        let phi = exp_phi(k);
        let params = StepParams::new(1.0, 1e-3).unwrap();
        let kernel = TransitionKernel::new(&space, &phi, params);
        let step = kernel.most_probable_step(&[0.3]).unwrap();
        let expect = -k / 2.0 / params.alpha();
        assert!((step[0] - expect).abs() < 1e-15, "{} vs {expect}", step[0]);
    }

    #[test]
    fn density_argmax_matches_most_probable_step() {
        let space = space1();
        let phi = exp_phi(0.6);
        let kernel = TransitionKernel::new(&space, &phi, StepParams::new(1.0, 1e-2).unwrap());
        let grid = StepGrid::default();
        let x = [0.1];
        let (axes, _) = kernel.quadrature_offsets(&grid);
        let mut best = (f64::NEG_INFINITY, 0.0);
        for &off in &axes[0] {
            let v = kernel
                .transition_density_exact(&[x[0] + off], &x, &grid)
                .unwrap();
            if v > best.0 {
                best = (v, off);
            }
        }
        let mode = kernel.most_probable_step(&x).unwrap()[0];
        let cell = axes[0][1] - axes[0][0];
        assert!(
            (best.1 - mode).abs() <= cell,
            "argmax {} vs mode {mode} (cell {cell})",
            best.1
        );
    }

    #[test]
    fn drift_and_fluctuation_scaling_with_alpha() {
        // Deterministic part scales as 1/alpha, noise as alpha^(-1/2).
        let space = space1();
        let phi = exp_phi(0.5);
        let alphas = [1e2, 1e4, 1e6];
        let mut log_drift = Vec::new();
        let mut log_rms = Vec::new();
        for (ai, &alpha) in alphas.iter().enumerate() {
            let params = StepParams::new(1.0, 1.0 / alpha).unwrap();
            let kernel = TransitionKernel::new(&space, &phi, params);
            let x = [0.2];
            let mode = kernel.most_probable_step(&x).unwrap()[0];
            log_drift.push(mode.abs().ln());
            let drift = kernel.forward_drift(&x).unwrap()[0] * params.dt;
            let m = 20_000;
            let mut sumsq = 0.0;
            for w in 0..m {
                let mut stream = Stream::new(9, Purpose::Step, w as u64, ai as u64);
                let xp = kernel.sample_step(&x, &mut stream).unwrap();
                let fluct = xp[0] - x[0] - drift;
                sumsq += fluct * fluct;
            }
            log_rms.push((sumsq / m as f64).sqrt().ln());
        }
        let slope = |ys: &[f64]| {
            // Least squares on log alpha.
            let xs: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
            let xm = xs.iter().sum::<f64>() / xs.len() as f64;
            let ym = ys.iter().sum::<f64>() / ys.len() as f64;
            let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
            let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
            num / den
        };
        let sd = slope(&log_drift);
        let sf = slope(&log_rms);
        assert!((sd + 1.0).abs() < 0.05, "drift slope {sd}");
        assert!((sf + 0.5).abs() < 0.05, "fluctuation slope {sf}");
    }

    #[test]
    fn lambda_sq_identity_between_quadrature_and_zeta_derivative() {
        let space = space1();
        let phi = exp_phi(0.4);
        let kernel = TransitionKernel::new(&space, &phi, StepParams::new(1.0, 1e-3).unwrap());
        let grid = StepGrid::default();
        let x = [0.5];
        let direct = kernel.lambda_sq_quadrature(&x, &grid).unwrap();
        let via_zeta = kernel.lambda_sq_from_zeta(&x, &grid).unwrap();
        assert!(
            ((direct - via_zeta) / direct).abs() < 1e-4,
            "{direct} vs {via_zeta}"
        );
    }

    #[test]
    fn maximizer_reproduces_analytic_kernel() {
        let space = space1();
        let phi = exp_phi(0.5);
        let params = StepParams::new(1.0, 1e-4).unwrap();
        let kernel = TransitionKernel::new(&space, &phi, params);
        let report = kernel.verify_me_maximizer(&[0.2], 401).unwrap();
        assert!(report.sup_deviation < 1e-6, "sup dev {}", report.sup_deviation);
        let alpha = params.alpha();
        assert!(
            ((report.alpha_recovered - alpha) / alpha).abs() < 1e-4,
            "alpha {} vs {alpha}",
            report.alpha_recovered
        );
        assert!(report.objective_numeric <= report.objective_analytic + 1e-12);
    }

    #[test]
    fn maximizer_constant_entropy_is_pure_gaussian() {
        let space = space1();
        let phi = ConformalFactor::constant(2.0);
        let params = StepParams::new(1.0, 1e-3).unwrap();
        let kernel = TransitionKernel::new(&space, &phi, params);
        let report = kernel.verify_me_maximizer(&[0.0], 401).unwrap();
        assert!(report.sup_deviation < 1e-9, "sup dev {}", report.sup_deviation);
        assert!(((report.alpha_recovered - 1000.0) / 1000.0).abs() < 1e-6);
    }

    #[test]
    fn feasible_perturbations_decrease_the_objective() {
        // Independent optimality check: project random directions onto the
        // constraint null space and verify the objective drops.
        let space = space1();
        let phi = exp_phi(0.5);
        let params = StepParams::new(1.0, 1e-3).unwrap();
        let kernel = TransitionKernel::new(&space, &phi, params);
        let alpha = params.alpha();
        let n = 201;
        let hw = 6.0 * kernel.step_std(0);
        let h = 2.0 * hw / n as f64;
        let xs: Vec<f64> = (0..n).map(|i| -hw + (i as f64 + 0.5) * h).collect();
        let svals: Vec<f64> = xs
            .iter()
            .map(|&x| entropy(&[x], &space, &phi).unwrap())
            .collect();
        let lsq: Vec<f64> = xs.iter().map(|&x| x * x).collect();
        let logw: Vec<f64> = svals
            .iter()
            .zip(&lsq)
            .map(|(&s, &l)| s - alpha / 2.0 * l)
            .collect();
        let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mass: f64 = logw.iter().map(|&l| (l - m).exp()).sum::<f64>() * h;
        let p: Vec<f64> = logw.iter().map(|&l| (l - m).exp() / mass).collect();
        let objective = |q: &[f64]| -> f64 {
            q.iter()
                .zip(&svals)
                .map(|(&qi, &s)| if qi > 0.0 { (-qi * qi.ln() + qi * s) * h } else { 0.0 })
                .sum()
        };
        let f0 = objective(&p);
        let mut stream = Stream::new(3, Purpose::Observable, 0, 0);
        for _ in 0..8 {
            let mut r: Vec<f64> = (0..n).map(|_| {
                let (a, _): (f64, f64) = stream.next_normal_pair();
                a
            }).collect();
            // Project out the two constraint directions (1 and lsq) with
            // two Gram-Schmidt passes for numerical cleanliness.
            for _ in 0..2 {
                let dot1: f64 = r.iter().sum::<f64>();
                let n1 = n as f64;
                let dotl: f64 = r.iter().zip(&lsq).map(|(a, b)| a * b).sum();
                let ll: f64 = lsq.iter().map(|l| l * l).sum();
                for i in 0..n {
                    r[i] -= dot1 / n1 + (dotl / ll) * lsq[i];
                }
            }
            // Small enough that positivity survives where p has mass.
            let scale = 1e-4 * p.iter().cloned().fold(0.0, f64::max)
                / r.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let q: Vec<f64> = p.iter().zip(&r).map(|(&pi, &ri)| (pi + scale * ri).max(0.0)).collect();
            let f1 = objective(&q);
            assert!(f1 <= f0 + 1e-12, "perturbation raised objective: {f1} > {f0}");
        }
    }

    #[test]
    fn backward_drift_matches_closed_form() {
        // Constant phi so b = 0; Gaussian density of variance s^2 gives
        // b*(x) = (sigma^2 / tau) x / s^2.
        let space = space1();
        let phi = ConformalFactor::constant(1.0);
        let params = StepParams::new(1.0, 1e-2).unwrap();
        let kernel = TransitionKernel::new(&space, &phi, params);
        let s = 1.3;
        let rho = Field::GaussianDensity {
            mean: vec![0.0],
            std: vec![s],
        };
        for &x in &[-1.0, 0.4, 2.0] {
            let bstar = kernel.backward_drift(&[x], &rho).unwrap()[0];
            let expect = x / (s * s);
            assert!((bstar - expect).abs() < 1e-12, "{bstar} vs {expect}");
        }
    }

    #[test]
    fn empirical_forward_drift_converges_with_dt() {
        // E[dx | x] / dt -> b(x); the finite-dt bias is linear, so Richardson
        // combination of two step sizes lands closer than either alone.
        let space = space1();
        let phi = ConformalFactor::new(Field::GaussianBump {
            base: 1.0,
            amplitude: 2.0,
            center: vec![0.0],
            width: 0.6,
        });
        let x = [0.5];
        let b_true = {
            let params = StepParams::new(1.0, 1e-3).unwrap();
            TransitionKernel::new(&space, &phi, params)
                .forward_drift(&x)
                .unwrap()[0]
        };
        let estimate = |dt: f64, n: usize, salt: u64| -> (f64, f64) {
            let params = StepParams::new(1.0, dt).unwrap();
            let kernel = TransitionKernel::new(&space, &phi, params);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for w in 0..n {
                let mut stream = Stream::new(77 + salt, Purpose::Step, w as u64, 0);
                let xp = kernel.sample_step(&x, &mut stream).unwrap();
                let v = (xp[0] - x[0]) / dt;
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n as f64;
            let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
            (mean, se)
        };
        // Envelope check across three step sizes.
        for &dt in &[1e-2, 1e-3, 1e-4] {
            let (est, se) = estimate(dt, 200_000, 0);
            let bias_budget = 12.0 * dt;
            assert!(
                (est - b_true).abs() < 3.0 * se + bias_budget,
                "dt {dt}: {est} vs {b_true} (se {se})"
            );
        }
        // Richardson at the two largest: 2 e(dt/2) - e(dt) cancels the
        // linear bias, which dominates the noise at these sizes.
        let n_big = 4_000_000;
        let (e1, se1) = estimate(1e-2, n_big, 1);
        let (e2, se2) = estimate(5e-3, n_big, 2);
        let rich = 2.0 * e2 - e1;
        let err_rich = (rich - b_true).abs();
        let err_raw = (e1 - b_true).abs();
        assert!(
            err_rich < err_raw + 3.0 * (se1 + se2),
            "richardson {err_rich} vs raw {err_raw}"
        );
        assert!(err_raw > 4.0 * se1, "bias should be resolved at dt=1e-2");
    }

    #[test]
    fn quality_gate_warns_or_refuses_on_steep_entropy() {
        let space = space1();
        // Strong exponential factor: dS = -k/2 = -60 per unit length, and
        // the step std at dt=1 is 1, so 60 nats per step deviation.
        let phi = exp_phi(120.0);
        let params = StepParams::new(1.0, 1.0).unwrap();
        let warn_kernel = TransitionKernel::new(&space, &phi, params);
        let mut stream = Stream::new(1, Purpose::Step, 0, 0);
        warn_kernel.sample_step(&[0.0], &mut stream).unwrap();
        assert_eq!(warn_kernel.gate_warning_count(), 1);
        let err_kernel =
            TransitionKernel::new(&space, &phi, params).with_gate(QualityGate::Error);
        let err = err_kernel.sample_step(&[0.0], &mut stream).unwrap_err();
        assert!(matches!(err, CoreError::Numerical(_)));
    }

    #[test]
    fn sampling_is_deterministic_per_key() {
        let space = space1();
        let phi = exp_phi(0.3);
        let kernel = TransitionKernel::new(&space, &phi, StepParams::new(1.0, 1e-2).unwrap());
        let a = {
            let mut s = Stream::new(5, Purpose::Step, 10, 3);
            kernel.sample_step(&[0.1], &mut s).unwrap()
        };
        let b = {
            let mut s = Stream::new(5, Purpose::Step, 10, 3);
            kernel.sample_step(&[0.1], &mut s).unwrap()
        };
        assert_eq!(a, b);
    }
}
