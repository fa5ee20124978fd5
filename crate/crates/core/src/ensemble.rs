//! Walker ensembles driven by the transition kernel.
//!
//! Positions are stored flat (walker-major, D scalars per walker). Every
//! random draw comes from a counter-based stream keyed by (seed, purpose,
//! walker, step), so results are independent of thread count and schedule.
//! Reductions over walkers run over fixed 4096-walker chunks combined in
//! chunk order, keeping floating-point sums bit-stable as well.

use crate::error::{CoreError, Result};
use crate::grid::{GridField, GridSpec};
use crate::kernel::TransitionKernel;
use crate::rng::{Purpose, Stream};
use crate::scalar::Scalar;
use rayon::prelude::*;
use std::io::Write as IoWrite;
use std::sync::atomic::{AtomicU64, Ordering};

/// Walker chunk size for deterministic parallel reductions.
const CHUNK: usize = 4096;

/// Initial distribution of walker positions.
#[derive(Debug, Clone)]
pub enum DensitySpec<S> {
    /// Independent Gaussian per axis.
    GaussianProduct { mean: Vec<S>, std: Vec<S> },
    /// Tabulated density. 1D uses inverse-CDF sampling; higher dimensions
    /// use rejection against the grid maximum.
    Grid(GridField<S>),
}

/// What happens when a proposed step leaves the domain box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Mirror the excess across the wall (default).
    Reflect,
    /// Freeze the walker outside the statistics and count the loss.
    Absorb,
}

#[derive(Debug, Clone)]
pub struct Ensemble<S> {
    dim: usize,
    seed: u64,
    step_index: u64,
    last_dt: Option<S>,
    positions: Vec<S>,
    /// Positions one step ago, for conditional-moment estimates.
    previous: Option<Vec<S>>,
    active: Vec<bool>,
    absorbed: u64,
}

/// Per-cell conditional step statistics. `forward` bins (x' - x)/dt by the
/// source cell of x; `backward` bins the same quantity by the destination
/// cell of x', which estimates the time-reversed drift.
#[derive(Debug, Clone)]
pub struct DriftEstimate<S> {
    pub spec: GridSpec<S>,
    pub dt: S,
    pub forward_count: Vec<u64>,
    pub forward_mean: Vec<Vec<S>>,
    pub forward_se: Vec<Vec<S>>,
    pub backward_count: Vec<u64>,
    pub backward_mean: Vec<Vec<S>>,
    pub backward_se: Vec<Vec<S>>,
}

impl<S: Scalar> DriftEstimate<S> {
    /// Cells with enough samples for the normal-theory error bar to mean
    /// anything.
    pub fn well_sampled(&self, cell: usize, min_count: u64) -> bool {
        self.forward_count[cell] >= min_count && self.backward_count[cell] >= min_count
    }
}

impl<S: Scalar> Ensemble<S> {
    /// Draws `m` walkers from `spec`. Each walker consumes its own stream,
    /// so the result is independent of walker count ordering.
    pub fn init(dim: usize, spec: &DensitySpec<S>, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(CoreError::usage("ensemble needs at least one walker"));
        }
        match spec {
            DensitySpec::GaussianProduct { mean, std } => {
                if mean.len() != dim || std.len() != dim {
                    return Err(CoreError::usage(
                        "mean and std must match the configuration dimension",
                    ));
                }
                if std.iter().any(|&s| !(s > S::zero())) {
                    return Err(CoreError::usage("std must be positive"));
                }
            }
            DensitySpec::Grid(f) => {
                if f.spec.dim() != dim {
                    return Err(CoreError::usage(
                        "density grid dimension must match the configuration dimension",
                    ));
                }
                if f.data.iter().any(|&v| v < S::zero() || !v.is_finite()) {
                    return Err(CoreError::domain("density grid must be non-negative"));
                }
            }
        }
        let mut positions = vec![S::zero(); m * dim];
        let cdf = match spec {
            DensitySpec::Grid(f) if dim == 1 => Some(Self::cumulative_1d(f)),
            _ => None,
        };
        positions
            .par_chunks_mut(dim)
            .enumerate()
            .for_each(|(w, out)| {
                let mut stream = Stream::new(seed, Purpose::Init, w as u64, 0);
                match spec {
                    DensitySpec::GaussianProduct { mean, std } => {
                        let mut z = vec![S::zero(); dim];
                        stream.fill_normals(&mut z);
                        for a in 0..dim {
                            out[a] = mean[a] + std[a] * z[a];
                        }
                    }
                    DensitySpec::Grid(f) => {
                        if let Some((nodes, cum)) = &cdf {
                            let u = stream.next_unit::<S>() * cum[cum.len() - 1];
                            out[0] = Self::invert_cdf(nodes, cum, u);
                        } else {
                            Self::rejection_sample(f, &mut stream, out);
                        }
                    }
                }
            });
        Ok(Ensemble {
            dim,
            seed,
            step_index: 0,
            last_dt: None,
            positions,
            previous: None,
            active: vec![true; m],
            absorbed: 0,
        })
    }

    fn cumulative_1d(f: &GridField<S>) -> (Vec<S>, Vec<S>) {
        let n = f.spec.axes[0].n;
        let h = f.spec.spacing(0);
        let mut cum = Vec::with_capacity(n);
        let mut nodes = Vec::with_capacity(n);
        let mut acc = S::zero();
        cum.push(S::zero());
        nodes.push(f.spec.axes[0].lo);
        for i in 1..n {
            acc += (f.data[i - 1] + f.data[i]) * S::lit(0.5) * h;
            cum.push(acc);
            nodes.push(f.spec.axes[0].lo + S::from_usize(i).unwrap() * h);
        }
        (nodes, cum)
    }

    fn invert_cdf(nodes: &[S], cum: &[S], u: S) -> S {
        let mut lo = 0;
        let mut hi = cum.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if cum[mid] < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let seg = cum[hi] - cum[lo];
        let t = if seg > S::zero() { (u - cum[lo]) / seg } else { S::lit(0.5) };
        nodes[lo] + t * (nodes[hi] - nodes[lo])
    }

    fn rejection_sample(f: &GridField<S>, stream: &mut Stream, out: &mut [S]) {
        let fmax = f.max_value();
        let d = f.spec.dim();
        loop {
            for a in 0..d {
                let ax = &f.spec.axes[a];
                out[a] = ax.lo + stream.next_unit::<S>() * (ax.hi - ax.lo);
            }
            let v = f.interp(out);
            if stream.next_unit::<S>() * fmax <= v {
                return;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn absorbed_count(&self) -> u64 {
        self.absorbed
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn positions(&self) -> &[S] {
        &self.positions
    }

    pub fn walker(&self, w: usize) -> &[S] {
        &self.positions[w * self.dim..(w + 1) * self.dim]
    }

    pub fn is_active(&self, w: usize) -> bool {
        self.active[w]
    }

    /// Advances every active walker by one kernel step. The stream for
    /// walker w at this step is keyed by (seed, Step, w, step_index), so a
    /// run is reproducible for any thread count.
    pub fn step(
        &mut self,
        kernel: &TransitionKernel<'_, S>,
        policy: BoundaryPolicy,
        domain: &GridSpec<S>,
    ) -> Result<()> {
        if domain.dim() != self.dim {
            return Err(CoreError::usage("domain dimension mismatch"));
        }
        let prev = self.positions.clone();
        let seed = self.seed;
        let step_index = self.step_index;
        let dim = self.dim;
        let absorbed = AtomicU64::new(0);
        let results: Vec<Result<()>> = self
            .positions
            .par_chunks_mut(dim)
            .zip(self.active.par_iter_mut())
            .enumerate()
            .map(|(w, (pos, active))| {
                if !*active {
                    return Ok(());
                }
                let mut stream = Stream::new(seed, Purpose::Step, w as u64, step_index);
                let mut xp = kernel.sample_step(pos, &mut stream)?;
                match policy {
                    BoundaryPolicy::Reflect => reflect_into(&mut xp, domain),
                    BoundaryPolicy::Absorb => {
                        if !domain.contains(&xp) {
                            *active = false;
                            absorbed.fetch_add(1, Ordering::Relaxed);
                            return Ok(());
                        }
                    }
                }
                pos.copy_from_slice(&xp);
                Ok(())
            })
            .collect();
        for r in results {
            r?;
        }
        self.absorbed += absorbed.load(Ordering::Relaxed);
        self.previous = Some(prev);
        self.last_dt = Some(kernel.params.dt);
        self.step_index += 1;
        Ok(())
    }

    pub fn evolve(
        &mut self,
        kernel: &TransitionKernel<'_, S>,
        steps: u64,
        policy: BoundaryPolicy,
        domain: &GridSpec<S>,
    ) -> Result<()> {
        for _ in 0..steps {
            self.step(kernel, policy, domain)?;
        }
        Ok(())
    }

    /// Histogram density estimate: integer cell counts divided by
    /// (active walkers x cell volume). Deterministic by construction.
    pub fn density_histogram(&self, spec: &GridSpec<S>) -> Result<GridField<S>> {
        if spec.dim() != self.dim {
            return Err(CoreError::usage("histogram grid dimension mismatch"));
        }
        let mut counts = vec![0u64; spec.len()];
        let mut total = 0u64;
        for w in 0..self.len() {
            if !self.active[w] {
                continue;
            }
            let x = self.walker(w);
            if spec.contains(x) {
                counts[spec.nearest_node(x)] += 1;
            }
            total += 1;
        }
        if total == 0 {
            return Err(CoreError::usage("no active walkers to histogram"));
        }
        let vol = spec.cell_volume();
        let norm = S::from_u64(total).unwrap() * vol;
        let data = counts
            .iter()
            .map(|&c| S::from_u64(c).unwrap() / norm)
            .collect();
        Ok(GridField {
            spec: spec.clone(),
            data,
        })
    }

    /// Gaussian product-kernel density estimate, evaluated on grid nodes.
    /// Parallel over cells; each cell sums walkers in index order, so the
    /// result does not depend on the thread count. Renormalized to unit
    /// mass on the grid.
    pub fn density_kde(&self, spec: &GridSpec<S>, bandwidth: &[S]) -> Result<GridField<S>> {
        if spec.dim() != self.dim || bandwidth.len() != self.dim {
            return Err(CoreError::usage("KDE grid or bandwidth dimension mismatch"));
        }
        if bandwidth.iter().any(|&b| !(b > S::zero())) {
            return Err(CoreError::usage("bandwidth must be positive"));
        }
        let dim = self.dim;
        let positions = &self.positions;
        let active = &self.active;
        let m_active = self.active_count();
        if m_active == 0 {
            return Err(CoreError::usage("no active walkers for KDE"));
        }
        let inv2: Vec<S> = bandwidth
            .iter()
            .map(|&b| S::lit(0.5) / (b * b))
            .collect();
        let mut data = vec![S::zero(); spec.len()];
        data.par_iter_mut().enumerate().for_each(|(cell, out)| {
            let xc = spec.position(cell);
            let mut acc = S::zero();
            for w in 0..active.len() {
                if !active[w] {
                    continue;
                }
                let xw = &positions[w * dim..(w + 1) * dim];
                let mut q = S::zero();
                for a in 0..dim {
                    let d = xc[a] - xw[a];
                    q += d * d * inv2[a];
                }
                if q < S::lit(40.0) {
                    acc += (-q).exp();
                }
            }
            *out = acc;
        });
        let mut field = GridField {
            spec: spec.clone(),
            data,
        };
        let mass = field.integrate();
        if !(mass > S::zero()) {
            return Err(CoreError::numerical("KDE mass vanished"));
        }
        for v in &mut field.data {
            *v /= mass;
        }
        Ok(field)
    }

    /// Conditional step moments binned on `spec`, using the last recorded
    /// step pair. Forward statistics condition on the source point, backward
    /// on the destination point.
    pub fn empirical_drifts(&self, spec: &GridSpec<S>) -> Result<DriftEstimate<S>> {
        let prev = self
            .previous
            .as_ref()
            .ok_or_else(|| CoreError::usage("no step recorded yet"))?;
        let dt = self.last_dt.unwrap();
        if spec.dim() != self.dim {
            return Err(CoreError::usage("drift grid dimension mismatch"));
        }
        let d = self.dim;
        let cells = spec.len();
        let mut fwd_count = vec![0u64; cells];
        let mut bwd_count = vec![0u64; cells];
        let mut fwd_sum = vec![vec![S::zero(); cells]; d];
        let mut fwd_sumsq = vec![vec![S::zero(); cells]; d];
        let mut bwd_sum = vec![vec![S::zero(); cells]; d];
        let mut bwd_sumsq = vec![vec![S::zero(); cells]; d];
        for w in 0..self.len() {
            if !self.active[w] {
                continue;
            }
            let x0 = &prev[w * d..(w + 1) * d];
            let x1 = self.walker(w);
            for (sum, sumsq, count, at) in [
                (&mut fwd_sum, &mut fwd_sumsq, &mut fwd_count, x0),
                (&mut bwd_sum, &mut bwd_sumsq, &mut bwd_count, x1),
            ] {
                if !spec.contains(at) {
                    continue;
                }
                let cell = spec.nearest_node(at);
                count[cell] += 1;
                for a in 0..d {
                    let v = (x1[a] - x0[a]) / dt;
                    sum[a][cell] += v;
                    sumsq[a][cell] += v * v;
                }
            }
        }
        let finish = |sum: Vec<Vec<S>>, sumsq: Vec<Vec<S>>, count: &[u64]| {
            let mut mean = vec![vec![S::zero(); cells]; d];
            let mut se = vec![vec![S::zero(); cells]; d];
            for a in 0..d {
                for c in 0..cells {
                    if count[c] == 0 {
                        continue;
                    }
                    let n = S::from_u64(count[c]).unwrap();
                    let m = sum[a][c] / n;
                    mean[a][c] = m;
                    if count[c] > 1 {
                        let var = (sumsq[a][c] / n - m * m).max(S::zero());
                        se[a][c] = (var / n).sqrt();
                    }
                }
            }
            (mean, se)
        };
        let (forward_mean, forward_se) = finish(fwd_sum, fwd_sumsq, &fwd_count);
        let (backward_mean, backward_se) = finish(bwd_sum, bwd_sumsq, &bwd_count);
        Ok(DriftEstimate {
            spec: spec.clone(),
            dt,
            forward_count: fwd_count,
            forward_mean,
            forward_se,
            backward_count: bwd_count,
            backward_mean,
            backward_se,
        })
    }

    /// Per-axis mean and variance over active walkers, reduced in fixed
    /// chunk order for bit-stable results.
    pub fn moments(&self) -> (Vec<S>, Vec<S>) {
        let d = self.dim;
        let chunks: Vec<(Vec<S>, Vec<S>, u64)> = self
            .positions
            .par_chunks(CHUNK * d)
            .zip(self.active.par_chunks(CHUNK))
            .map(|(pos, act)| {
                let mut sum = vec![S::zero(); d];
                let mut sumsq = vec![S::zero(); d];
                let mut n = 0u64;
                for (w, &a) in act.iter().enumerate() {
                    if !a {
                        continue;
                    }
                    n += 1;
                    for k in 0..d {
                        let v = pos[w * d + k];
                        sum[k] += v;
                        sumsq[k] += v * v;
                    }
                }
                (sum, sumsq, n)
            })
            .collect();
        let mut sum = vec![S::zero(); d];
        let mut sumsq = vec![S::zero(); d];
        let mut n = 0u64;
        for (s, sq, c) in chunks {
            for k in 0..d {
                sum[k] += s[k];
                sumsq[k] += sq[k];
            }
            n += c;
        }
        let nn = S::from_u64(n.max(1)).unwrap();
        let mean: Vec<S> = sum.iter().map(|&s| s / nn).collect();
        let var: Vec<S> = sumsq
            .iter()
            .zip(&mean)
            .map(|(&sq, &m)| (sq / nn - m * m).max(S::zero()))
            .collect();
        (mean, var)
    }

    /// Appends one CSV row per active walker: step, walker_id, x_1..x_D.
    pub fn write_trajectory_rows<W: IoWrite>(&self, out: &mut W) -> Result<()> {
        for w in 0..self.len() {
            if !self.active[w] {
                continue;
            }
            write!(out, "{},{}", self.step_index, w)?;
            for v in self.walker(w) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Trajectory CSV header for dimension `d`.
pub fn trajectory_header(d: usize) -> String {
    let mut s = String::from("step,walker_id");
    for a in 1..=d {
        s.push_str(&format!(",x_{a}"));
    }
    s
}

fn reflect_into<S: Scalar>(x: &mut [S], domain: &GridSpec<S>) {
    for (a, ax) in domain.axes.iter().enumerate() {
        let width = ax.hi - ax.lo;
        let two = S::lit(2.0);
        // Successive mirroring; steps are short so this rarely loops twice.
        let mut v = x[a];
        for _ in 0..64 {
            if v < ax.lo {
                v = two * ax.lo - v;
            } else if v > ax.hi {
                v = two * ax.hi - v;
            } else {
                break;
            }
        }
        if v < ax.lo || v > ax.hi {
            // Pathological step length; fold by modular arithmetic.
            let span = two * width;
            let mut t = (v - ax.lo) % span;
            if t < S::zero() {
                t += span;
            }
            v = if t > width { span - t } else { t } + ax.lo;
        }
        x[a] = v;
    }
}
