//! The statistical manifold: configuration space carries, at every point x,
//! a Gaussian distribution over microstates y whose precision is set by the
//! conformal factor field. This module computes that model's density, its
//! entropy relative to the metric volume, and its Fisher information metric,
//! both in closed form and by quadrature.

use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::grid::GridField;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Positivity floor applied to grid-loaded conformal factors.
pub const CONFORMAL_FLOOR: f64 = 1e-12;

/// Configuration space of `particles` particles in `d` spatial dimensions,
/// with one length scale per particle. Total dimension is `d * particles`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace<S> {
    d: usize,
    particles: usize,
    sigma: Vec<S>,
}

impl<S: Scalar> ConfigSpace<S> {
    pub fn new(d: usize, particles: usize, sigma: Vec<S>) -> Result<Self> {
        if d == 0 || d > 3 {
            return Err(CoreError::usage(format!(
                "spatial dimension must be 1..=3, got {d}"
            )));
        }
        if particles == 0 {
            return Err(CoreError::usage("need at least one particle"));
        }
        if sigma.len() != particles {
            return Err(CoreError::usage(format!(
                "expected {particles} length scales, got {}",
                sigma.len()
            )));
        }
        if sigma.iter().any(|s| !(*s > S::zero()) || !s.is_finite()) {
            return Err(CoreError::domain("length scales must be positive and finite"));
        }
        Ok(ConfigSpace { d, particles, sigma })
    }

    /// Single particle with one length scale.
    pub fn single(d: usize, sigma: S) -> Result<Self> {
        Self::new(d, 1, vec![sigma])
    }

    pub fn spatial_dim(&self) -> usize {
        self.d
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.d * self.particles
    }

    /// Length scale governing axis `a` (axes are grouped per particle).
    #[inline]
    pub fn sigma_of_axis(&self, a: usize) -> S {
        self.sigma[a / self.d]
    }

    pub fn sigmas(&self) -> &[S] {
        &self.sigma
    }

    /// Diagonal metric entry along axis `a`: 1 / sigma^2.
    #[inline]
    pub fn gamma_diag(&self, a: usize) -> S {
        let s = self.sigma_of_axis(a);
        S::one() / (s * s)
    }

    /// Squared metric length of a step.
    pub fn metric_norm_sq(&self, v: &[S]) -> S {
        v.iter()
            .enumerate()
            .map(|(a, &vi)| vi * vi * self.gamma_diag(a))
            .sum()
    }

    /// sqrt(det gamma): volume density of the metric measure.
    pub fn sqrt_det_gamma(&self) -> S {
        let mut acc = S::one();
        for &s in &self.sigma {
            for _ in 0..self.d {
                acc = acc / s;
            }
        }
        acc
    }

    pub fn check_point(&self, x: &[S]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(CoreError::usage(format!(
                "point has {} coordinates, space has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// The positive conformal factor field controlling microstate precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalFactor<S> {
    pub field: Field<S>,
    pub floor: S,
}

impl<S: Scalar> ConformalFactor<S> {
    pub fn new(field: Field<S>) -> Self {
        ConformalFactor {
            field,
            floor: S::lit(CONFORMAL_FLOOR),
        }
    }

    pub fn constant(value: S) -> Self {
        Self::new(Field::Constant { value })
    }

    /// Grid-sampled factor; values are clamped to the positivity floor.
    pub fn from_grid(mut values: GridField<S>) -> Self {
        let floor = S::lit(CONFORMAL_FLOOR);
        for v in values.data.iter_mut() {
            if *v < floor {
                *v = floor;
            }
        }
        ConformalFactor {
            field: Field::Grid { values },
            floor,
        }
    }

    pub fn from_grid_csv(path: &std::path::Path) -> Result<Self> {
        Ok(Self::from_grid(GridField::read_csv(path)?))
    }

    /// Value with positivity check.
    pub fn value(&self, x: &[S]) -> Result<S> {
        let v = self.field.value(x);
        if !v.is_finite() || v <= S::zero() {
            return Err(CoreError::domain(format!(
                "conformal factor must be positive and finite, got {v} at {x:?}"
            )));
        }
        Ok(v)
    }

    pub fn gradient(&self, x: &[S]) -> Vec<S> {
        self.field.gradient(x)
    }
}

// ---------------------------------------------------------------------------
// Gauss-Hermite quadrature
// ---------------------------------------------------------------------------

/// Nodes and weights for integrals against exp(-t^2). Built from the
/// orthonormal Hermite recurrence with bisection bracketing and Newton
/// polishing, so weights stay O(1) at any order.
#[derive(Debug, Clone)]
pub struct GaussHermite<S> {
    pub nodes: Vec<S>,
    pub weights: Vec<S>,
}

impl<S: Scalar> GaussHermite<S> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "need at least two nodes");
        // Orthonormal recurrence: p_{k+1} = (x p_k - sqrt(k/2) p_{k-1}) / sqrt((k+1)/2)
        let eval = |x: S| -> (S, S) {
            let mut pm = S::zero();
            let mut p = S::lit(std::f64::consts::PI.powf(-0.25));
            for k in 0..n {
                let a = (S::from_usize(k + 1).unwrap() / S::lit(2.0)).sqrt();
                let b = (S::from_usize(k).unwrap() / S::lit(2.0)).sqrt();
                let next = (x * p - b * pm) / a;
                pm = p;
                p = next;
            }
            // p = p_n, pm = p_{n-1}; p_n' = sqrt(2n) p_{n-1}
            let dp = (S::lit(2.0) * S::from_usize(n).unwrap()).sqrt() * pm;
            (p, dp)
        };
        // All roots lie inside |x| < sqrt(2n+1).
        let bound = (S::lit(2.0) * S::from_usize(n).unwrap() + S::lit(1.0)).sqrt();
        let scan = 8 * n;
        let step = S::lit(2.0) * bound / S::from_usize(scan).unwrap();
        let mut nodes = Vec::with_capacity(n);
        let mut prev_x = -bound;
        let mut prev_f = eval(prev_x).0;
        for i in 1..=scan {
            let x = -bound + S::from_usize(i).unwrap() * step;
            let f = eval(x).0;
            if prev_f == S::zero() {
                nodes.push(prev_x);
            } else if (prev_f < S::zero()) != (f < S::zero()) {
                // Bisect then Newton-polish.
                let (mut a, mut b) = (prev_x, x);
                let mut fa = prev_f;
                for _ in 0..40 {
                    let m = (a + b) / S::lit(2.0);
                    let fm = eval(m).0;
                    if (fa < S::zero()) == (fm < S::zero()) {
                        a = m;
                        fa = fm;
                    } else {
                        b = m;
                    }
                }
                let mut r = (a + b) / S::lit(2.0);
                for _ in 0..4 {
                    let (f, df) = eval(r);
                    if df != S::zero() {
                        r = r - f / df;
                    }
                }
                nodes.push(r);
            }
            prev_x = x;
            prev_f = f;
        }
        assert_eq!(nodes.len(), n, "found {} of {} quadrature nodes", nodes.len(), n);
        // Christoffel weights: w_i = 1 / sum_k p_k(x_i)^2 over k < n.
        let weights = nodes
            .iter()
            .map(|&x| {
                let mut pm = S::zero();
                let mut p = S::lit(std::f64::consts::PI.powf(-0.25));
                let mut sum = p * p;
                for k in 0..(n - 1) {
                    let a = (S::from_usize(k + 1).unwrap() / S::lit(2.0)).sqrt();
                    let b = (S::from_usize(k).unwrap() / S::lit(2.0)).sqrt();
                    let next = (x * p - b * pm) / a;
                    pm = p;
                    p = next;
                    sum += p * p;
                }
                S::one() / sum
            })
            .collect();
        GaussHermite { nodes, weights }
    }

    /// Expectation of `f` under a standard normal in one dimension.
    pub fn expect_normal(&self, f: impl Fn(S) -> S) -> S {
        let sqrt2 = S::lit(std::f64::consts::SQRT_2);
        let sqrt_pi = S::PI().sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(sqrt2 * t))
            .sum::<S>()
            / sqrt_pi
    }
}

// ---------------------------------------------------------------------------
// Small dense symmetric matrices
// ---------------------------------------------------------------------------

/// Row-major square matrix just big enough for metric work.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<S> {
    pub n: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> SquareMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![S::zero(); n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.n + j] = v;
    }

    pub fn frobenius(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        SquareMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    /// True iff the matrix is symmetric positive definite (Cholesky succeeds).
    pub fn is_spd(&self, tol: S) -> bool {
        let n = self.n;
        let mut l = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum = sum - l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= S::zero() {
                        return false;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        true
    }
}

// ---------------------------------------------------------------------------
// Manifold operations
// ---------------------------------------------------------------------------

/// Log-density of the microstate model: a product Gaussian centered at x
/// whose per-axis variance is sigma^2 / phi(x).
pub fn log_gaussian_density<S: Scalar>(
    y: &[S],
    x: &[S],
    space: &ConfigSpace<S>,
    phi: &ConformalFactor<S>,
) -> Result<S> {
    space.check_point(x)?;
    space.check_point(y)?;
    let p = phi.value(x)?;
    let two_pi = S::PI() * S::lit(2.0);
    let half = S::lit(0.5);
    let mut logp = S::zero();
    for a in 0..space.dim() {
        let s = space.sigma_of_axis(a);
        let dy = y[a] - x[a];
        logp = logp + half * (p / (two_pi * s * s)).ln() - half * p * dy * dy / (s * s);
    }
    Ok(logp)
}

pub fn gaussian_density<S: Scalar>(
    y: &[S],
    x: &[S],
    space: &ConfigSpace<S>,
    phi: &ConformalFactor<S>,
) -> Result<S> {
    Ok(log_gaussian_density(y, x, space, phi)?.exp())
}

/// Entropy of the microstate model relative to the metric volume:
/// S(x) = (D/2) (1 - log(phi(x) / 2 pi)). Independent of the length scales
/// because the metric measure absorbs them.
pub fn entropy<S: Scalar>(
    x: &[S],
    space: &ConfigSpace<S>,
    phi: &ConformalFactor<S>,
) -> Result<S> {
    space.check_point(x)?;
    let p = phi.value(x)?;
    let two_pi = S::PI() * S::lit(2.0);
    let half_d = S::from_usize(space.dim()).unwrap() / S::lit(2.0);
    Ok(half_d * (S::one() - (p / two_pi).ln()))
}

/// Gradient of the entropy field: -(D/2) grad(phi) / phi.
pub fn entropy_gradient<S: Scalar>(
    x: &[S],
    space: &ConfigSpace<S>,
    phi: &ConformalFactor<S>,
) -> Result<Vec<S>> {
    space.check_point(x)?;
    let p = phi.value(x)?;
    let half_d = S::from_usize(space.dim()).unwrap() / S::lit(2.0);
    Ok(phi
        .gradient(x)
        .iter()
        .map(|&g| -half_d * g / p)
        .collect())
}

/// Closed-form information metric:
/// g_ab = phi gamma_ab + (D / 2 phi^2) (d_a phi)(d_b phi).
pub fn info_metric_closed<S: Scalar>(
    x: &[S],
    space: &ConfigSpace<S>,
    phi: &ConformalFactor<S>,
) -> Result<SquareMatrix<S>> {
    space.check_point(x)?;
    let p = phi.value(x)?;
    let grad = phi.gradient(x);
    let d = space.dim();
    let half_d = S::from_usize(d).unwrap() / S::lit(2.0);
    let mut g = SquareMatrix::zeros(d);
    for a in 0..d {
        for b in 0..d {
            let mut v = half_d * grad[a] * grad[b] / (p * p);
            if a == b {
                v += p * space.gamma_diag(a);
            }
            g.set(a, b, v);
        }
    }
    Ok(g)
}

/// Conformal approximation of the metric: g_ab = phi gamma_ab.
pub fn info_metric_conformal<S: Scalar>(
    x: &[S],
    space: &ConfigSpace<S>,
    phi: &ConformalFactor<S>,
) -> Result<SquareMatrix<S>> {
    space.check_point(x)?;
    let p = phi.value(x)?;
    let d = space.dim();
    let mut g = SquareMatrix::zeros(d);
    for a in 0..d {
        g.set(a, a, p * space.gamma_diag(a));
    }
    Ok(g)
}

/// Fisher information metric by product Gauss-Hermite quadrature of its
/// definition, E[(d_a log p)(d_b log p)]. Deliberately never calls the
/// closed form; this is the independent route the closed form is tested
/// against. Restricted to D <= 3 (node count is quad.nodes.len()^D).
pub fn info_metric_quadrature<S: Scalar>(
    x: &[S],
    space: &ConfigSpace<S>,
    phi: &ConformalFactor<S>,
    quad: &GaussHermite<S>,
) -> Result<SquareMatrix<S>> {
    space.check_point(x)?;
    let d = space.dim();
    if d > 3 {
        return Err(CoreError::numerical(format!(
            "metric quadrature restricted to D <= 3, got {d}"
        )));
    }
    let p = phi.value(x)?;
    let grad = phi.gradient(x);
    let rel: Vec<S> = grad.iter().map(|&g| g / p).collect();
    let dn = S::from_usize(d).unwrap();
    let half = S::lit(0.5);
    let sqrt2 = S::lit(std::f64::consts::SQRT_2);
    let sqrt_pi_d = S::PI().sqrt().powi(d as i32);
    let m = quad.nodes.len();
    let mut g = SquareMatrix::zeros(d);
    let mut idx = vec![0usize; d];
    // Score of the model in standardized coordinates z = (y - x) sqrt(phi)/sigma:
    // d_a log p = (grad_a phi / phi) (D - |z|^2) / 2 + sqrt(phi) z_a / sigma_a.
    loop {
        let mut w = S::one();
        let mut z = vec![S::zero(); d];
        for (k, &i) in idx.iter().enumerate() {
            w = w * quad.weights[i];
            z[k] = sqrt2 * quad.nodes[i];
        }
        let z2: S = z.iter().map(|&v| v * v).sum();
        let mut score = vec![S::zero(); d];
        for a in 0..d {
            let s = space.sigma_of_axis(a);
            score[a] = rel[a] * (dn - z2) * half + p.sqrt() * z[a] / s;
        }
        for a in 0..d {
            for b in 0..d {
                let cur = g.get(a, b);
                g.set(a, b, cur + w * score[a] * score[b]);
            }
        }
        // Advance the product index.
        let mut k = 0;
        loop {
            if k == d {
                break;
            }
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    for v in g.data.iter_mut() {
        *v = *v / sqrt_pi_d;
    }
    Ok(g)
}

/// Entropy by quadrature of -E[log(p / sqrt(det gamma))]; the independent
/// route for the closed-form entropy.
pub fn entropy_quadrature<S: Scalar>(
    x: &[S],
    space: &ConfigSpace<S>,
    phi: &ConformalFactor<S>,
    quad: &GaussHermite<S>,
) -> Result<S> {
    space.check_point(x)?;
    let d = space.dim();
    if d > 3 {
        return Err(CoreError::numerical("entropy quadrature restricted to D <= 3"));
    }
    let p = phi.value(x)?;
    let sqrt2 = S::lit(std::f64::consts::SQRT_2);
    let sqrt_pi_d = S::PI().sqrt().powi(d as i32);
    let log_meas = space.sqrt_det_gamma().ln();
    let m = quad.nodes.len();
    let mut acc = S::zero();
    let mut idx = vec![0usize; d];
    loop {
        let mut w = S::one();
        let mut y = x.to_vec();
        for (k, &i) in idx.iter().enumerate() {
            w = w * quad.weights[i];
            let s = space.sigma_of_axis(k);
            y[k] = x[k] + sqrt2 * quad.nodes[i] * s / p.sqrt();
        }
        let logp = log_gaussian_density(&y, x, space, phi)?;
        acc += w * (logp - log_meas);
        let mut k = 0;
        loop {
            if k == d {
                break;
            }
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    Ok(-acc / sqrt_pi_d)
}

/// Dimensionless validity ratio for the conformal approximation:
/// r(x) = gamma^{ab} (d_a phi / phi)(d_b phi / phi) / phi.
/// The gradient part of the metric is negligible where r << 1.
pub fn conformal_validity<S: Scalar>(
    x: &[S],
    space: &ConfigSpace<S>,
    phi: &ConformalFactor<S>,
) -> Result<S> {
    space.check_point(x)?;
    let p = phi.value(x)?;
    let grad = phi.gradient(x);
    let mut num = S::zero();
    for a in 0..space.dim() {
        let s = space.sigma_of_axis(a);
        let rel = grad[a] / p;
        num += s * s * rel * rel;
    }
    Ok(num / p)
}

/// Default ratio below which the conformal form may replace the exact metric.
pub const CONFORMAL_VALIDITY_THRESHOLD: f64 = 1e-3;

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_space() -> ConfigSpace<f64> {
        ConfigSpace::single(1, 1.0).unwrap()
    }

    #[test]
    fn gauss_hermite_integrates_polynomials_exactly() {
        let q: GaussHermite<f64> = GaussHermite::new(40);
        assert_eq!(q.nodes.len(), 40);
        // E[z^0], E[z^2], E[z^4], E[z^6] for standard normal: 1, 1, 3, 15.
        assert!((q.expect_normal(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!((q.expect_normal(|z| z * z) - 1.0).abs() < 1e-12);
        assert!((q.expect_normal(|z| z.powi(4)) - 3.0).abs() < 1e-11);
        assert!((q.expect_normal(|z| z.powi(6)) - 15.0).abs() < 1e-10);
        // Non-polynomial sanity: E[cos z] = exp(-1/2).
        assert!((q.expect_normal(|z| z.cos()) - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn density_normalizes_by_trapezoid_oracle() {
        // Independent wide-window trapezoid over the microstate space.
        let space = unit_space();
        let phi = ConformalFactor::constant(1.7);
        let x = [0.4];
        let std = (1.0f64 / 1.7).sqrt();
        let n = 4001;
        let (lo, hi) = (x[0] - 10.0 * std, x[0] + 10.0 * std);
        let h = (hi - lo) / (n - 1) as f64;
        let mut mass = 0.0;
        for i in 0..n {
            let y = [lo + i as f64 * h];
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            mass += w * gaussian_density(&y, &x, &space, &phi).unwrap();
        }
        mass *= h;
        assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    }

    #[test]
    fn density_peak_matches_frozen_value() {
        // d=1, sigma=1, phi=1 at y=x: (2 pi)^(-1/2).
        let space = unit_space();
        let phi = ConformalFactor::constant(1.0);
        let v = gaussian_density(&[0.0], &[0.0], &space, &phi).unwrap();
        assert!((v - 0.3989422804014327).abs() < 1e-15);
    }

    #[test]
    fn microstate_covariance_scales_inversely_with_phi() {
        // d=3, constant phi: covariance of y is (sigma^2/phi) I. Checked by
        // Gauss-Hermite second moments of the density itself.
        let space = ConfigSpace::single(3, 0.8).unwrap();
        let phi0 = 2.5;
        let phi = ConformalFactor::constant(phi0);
        let quad: GaussHermite<f64> = GaussHermite::new(24);
        let x = [0.1, -0.3, 0.7];
        let std = 0.8 / phi0_sqrt(phi0);
        // E[(y_a - x_a)^2] under the model, per axis, via 1D quadrature of
        // the conditional (axes are independent).
        let second = quad.expect_normal(|z| (std * z) * (std * z));
        assert!((second - 0.8 * 0.8 / phi0).abs() < 1e-12);
        // And the full density at a probe point agrees with the product form.
        let y = [0.3, -0.1, 0.5];
        let v = gaussian_density(&y, &x, &space, &phi).unwrap();
        let mut expect = 1.0;
        for a in 0..3 {
            let dy: f64 = y[a] - x[a];
            expect *= (phi0 / (2.0 * std::f64::consts::PI * 0.64)).sqrt()
                * (-phi0 * dy * dy / (2.0 * 0.64)).exp();
        }
        assert!((v - expect).abs() < 1e-14 * expect.abs());
    }

    fn phi0_sqrt(p: f64) -> f64 {
        p.sqrt()
    }

    #[test]
    fn entropy_closed_form_frozen_values() {
        // D=3: phi = 2 pi gives 3/2; phi = 2 pi e gives 0.
        let space = ConfigSpace::single(3, 1.0).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let s1 = entropy(&[0.0; 3], &space, &ConformalFactor::constant(tau)).unwrap();
        assert!((s1 - 1.5).abs() < 1e-14);
        let s2 = entropy(
            &[0.0; 3],
            &space,
            &ConformalFactor::constant(tau * std::f64::consts::E),
        )
        .unwrap();
        assert!(s2.abs() < 1e-14);
        // D=1, phi = 1 + x^2 at x=2: 0.5 (1 - ln(5 / 2 pi)).
        let space1 = unit_space();
        let phi = ConformalFactor::new(Field::Quadratic {
            offset: 1.0,
            coeff: vec![1.0],
            center: vec![0.0],
        });
        let s3 = entropy(&[2.0], &space1, &phi).unwrap();
        assert!((s3 - 0.6142195769876225).abs() < 1e-12, "{s3}");
    }

    #[test]
    fn entropy_matches_quadrature_oracle() {
        let quad: GaussHermite<f64> = GaussHermite::new(40);
        let cases: Vec<(ConfigSpace<f64>, Vec<f64>, ConformalFactor<f64>)> = vec![
            (unit_space(), vec![2.0], ConformalFactor::new(Field::Quadratic {
                offset: 1.0,
                coeff: vec![1.0],
                center: vec![0.0],
            })),
            (unit_space(), vec![-0.7], ConformalFactor::new(Field::Exp {
                scale: 1.0,
                rate: vec![0.4],
            })),
            (ConfigSpace::single(2, 1.3).unwrap(), vec![0.2, 0.5],
             ConformalFactor::new(Field::GaussianBump {
                 base: 0.8,
                 amplitude: 0.5,
                 center: vec![0.0, 0.1],
                 width: 1.1,
             })),
            (ConfigSpace::new(1, 2, vec![1.0, 1.6]).unwrap(), vec![0.3, -0.2],
             ConformalFactor::constant(2.2)),
            (ConfigSpace::single(3, 0.9).unwrap(), vec![0.1, 0.0, -0.4],
             ConformalFactor::new(Field::LinearRamp {
                 base: 2.0,
                 slope: vec![0.1, -0.05, 0.08],
             })),
        ];
        for (space, x, phi) in &cases {
            let closed = entropy(x, space, phi).unwrap();
            let quadrature = entropy_quadrature(x, space, phi, &quad).unwrap();
            assert!(
                (closed - quadrature).abs() < 1e-8,
                "closed {closed} vs quadrature {quadrature}"
            );
        }
    }

    #[test]
    fn metric_exact_1d_exponential_factor() {
        // D=1, sigma=1, phi=exp(kx): g = phi + k^2/2, frozen at k=0.7, x=0.3.
        let space = unit_space();
        let k = 0.7;
        let phi = ConformalFactor::new(Field::Exp { scale: 1.0, rate: vec![k] });
        let g = info_metric_closed(&[0.3], &space, &phi).unwrap();
        let expect = (0.7f64 * 0.3).exp() + 0.5 * k * k;
        assert!((g.get(0, 0) - 1.4786780599567432).abs() < 1e-13);
        assert!((g.get(0, 0) - expect).abs() < 1e-13);
    }

    #[test]
    fn metric_closed_matches_quadrature_oracle() {
        let quad: GaussHermite<f64> = GaussHermite::new(40);
        let cases: Vec<(ConfigSpace<f64>, Vec<f64>, ConformalFactor<f64>)> = vec![
            (unit_space(), vec![0.3], ConformalFactor::new(Field::Exp {
                scale: 1.0,
                rate: vec![0.7],
            })),
            (ConfigSpace::single(2, 1.2).unwrap(), vec![0.4, -0.1],
             ConformalFactor::new(Field::GaussianBump {
                 base: 1.0,
                 amplitude: 0.6,
                 center: vec![0.0, 0.0],
                 width: 0.9,
             })),
            (ConfigSpace::single(3, 0.7).unwrap(), vec![0.0, 0.2, -0.3],
             ConformalFactor::new(Field::LinearRamp {
                 base: 1.5,
                 slope: vec![0.2, -0.1, 0.15],
             })),
            (ConfigSpace::new(1, 3, vec![0.8, 1.0, 1.4]).unwrap(), vec![0.1, 0.0, 0.2],
             ConformalFactor::new(Field::Exp {
                 scale: 0.9,
                 rate: vec![0.3, -0.2, 0.1],
             })),
        ];
        for (space, x, phi) in &cases {
            let closed = info_metric_closed(&x, &space, &phi).unwrap();
            let numeric = info_metric_quadrature(&x, &space, &phi, &quad).unwrap();
            let diff = closed.sub(&numeric).frobenius();
            let scale = closed.frobenius();
            assert!(
                diff / scale < 1e-6,
                "relative metric deviation {} for {:?}",
                diff / scale,
                phi
            );
            assert!(closed.is_spd(1e-12), "metric must be positive definite");
        }
    }

    #[test]
    fn conformal_validity_exponential_profile() {
        // D=1, sigma=1, phi=exp(kx): r = k^2 / phi = k^2 exp(-kx).
        let space = unit_space();
        let k = 0.4;
        let phi = ConformalFactor::new(Field::Exp { scale: 1.0, rate: vec![k] });
        for &x in &[-1.0, 0.0, 2.0] {
            let r = conformal_validity(&[x], &space, &phi).unwrap();
            let expect = k * k * (-k * x).exp();
            assert!((r - expect).abs() < 1e-12, "r {r} vs {expect}");
        }
    }

    #[test]
    fn conformal_bound_controls_metric_deviation() {
        // Wherever r < 1e-3, exact and conformal forms differ by < 2e-3
        // relative Frobenius.
        let space = unit_space();
        let phi = ConformalFactor::new(Field::Exp { scale: 1.0, rate: vec![0.02] });
        for &x in &[-2.0, 0.0, 1.0, 3.0] {
            let r = conformal_validity(&[x], &space, &phi).unwrap();
            assert!(r < 1e-3, "test premise");
            let exact = info_metric_closed(&[x], &space, &phi).unwrap();
            let approx = info_metric_conformal(&[x], &space, &phi).unwrap();
            let rel = exact.sub(&approx).frobenius() / exact.frobenius();
            assert!(rel < 2e-3, "relative deviation {rel} with r {r}");
        }
    }

    #[test]
    fn grid_factor_is_floored() {
        let spec = crate::grid::GridSpec::line(-1.0, 1.0, 16, crate::grid::Boundary::DirichletZero)
            .unwrap();
        let raw = GridField::from_fn(spec, |x| x[0]); // negative on half the domain
        let phi = ConformalFactor::from_grid(raw);
        let v = phi.value(&[-0.5]).unwrap();
        assert!(v >= CONFORMAL_FLOOR && v <= 1e-10);
    }

    #[test]
    fn entropy_gradient_matches_finite_difference() {
        let space = unit_space();
        let phi = ConformalFactor::new(Field::GaussianBump {
            base: 1.0,
            amplitude: 0.5,
            center: vec![0.3],
            width: 0.8,
        });
        let h = 1e-6;
        for &x in &[-0.5, 0.1, 1.2] {
            let g = entropy_gradient(&[x], &space, &phi).unwrap()[0];
            let fd = (entropy(&[x + h], &space, &phi).unwrap()
                - entropy(&[x - h], &space, &phi).unwrap())
                / (2.0 * h);
            assert!((g - fd).abs() < 1e-7, "at {x}: {g} vs {fd}");
        }
    }
}
