//! Uniform tensor-product grids and scalar fields sampled on them.
//!
//! Grids are node-centered: axis k holds `n` nodes from `lo` to `hi`
//! inclusive (Dirichlet) or `n` nodes with `hi` excluded (periodic).
//! Derivative stencils are second-order central differences, with
//! second-order one-sided stencils at Dirichlet walls; both are exact on
//! quadratics, which the field solvers rely on.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Default cap on total grid cells; guards against typo-sized allocations.
pub const DEFAULT_MAX_CELLS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Field vanishes at the walls; solvers use padded domains so this is
    /// exact to the stated tolerances.
    DirichletZero,
    /// Wrap-around topology; `hi` identifies with `lo`.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis<S> {
    pub lo: S,
    pub hi: S,
    pub n: usize,
}

/// Geometry of a uniform grid over up to three axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<S> {
    pub axes: Vec<Axis<S>>,
    pub boundary: Boundary,
}

impl<S: Scalar> GridSpec<S> {
    pub fn new(axes: Vec<Axis<S>>, boundary: Boundary) -> Result<Self> {
        Self::with_cap(axes, boundary, DEFAULT_MAX_CELLS)
    }

    pub fn with_cap(axes: Vec<Axis<S>>, boundary: Boundary, cap: usize) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(CoreError::usage(format!(
                "grids support 1..=3 axes, got {}",
                axes.len()
            )));
        }
        let mut total = 1usize;
        for (k, ax) in axes.iter().enumerate() {
            if ax.n < 8 {
                return Err(CoreError::usage(format!(
                    "axis {k}: need at least 8 nodes, got {}",
                    ax.n
                )));
            }
            if !(ax.hi > ax.lo) {
                return Err(CoreError::usage(format!(
                    "axis {k}: extent [{}, {}] is empty",
                    ax.lo, ax.hi
                )));
            }
            total = total
                .checked_mul(ax.n)
                .ok_or_else(|| CoreError::usage("grid size overflows usize"))?;
        }
        if total > cap {
            return Err(CoreError::usage(format!(
                "grid has {total} cells, cap is {cap}"
            )));
        }
        Ok(GridSpec { axes, boundary })
    }

    /// Convenience 1D constructor.
    pub fn line(lo: S, hi: S, n: usize, boundary: Boundary) -> Result<Self> {
        Self::new(vec![Axis { lo, hi, n }], boundary)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing along axis k.
    pub fn spacing(&self, k: usize) -> S {
        let ax = &self.axes[k];
        let denom = match self.boundary {
            Boundary::DirichletZero => ax.n - 1,
            Boundary::Periodic => ax.n,
        };
        (ax.hi - ax.lo) / S::from_usize(denom).unwrap()
    }

    /// Volume element of one node cell.
    pub fn cell_volume(&self) -> S {
        (0..self.dim()).map(|k| self.spacing(k)).fold(S::one(), |a, b| a * b)
    }

    pub fn node_coord(&self, k: usize, i: usize) -> S {
        self.axes[k].lo + S::from_usize(i).unwrap() * self.spacing(k)
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].n;
        }
        s
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let strides = self.strides();
        idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let strides = self.strides();
        strides
            .iter()
            .map(|s| {
                let i = flat / s;
                flat %= s;
                i
            })
            .collect()
    }

    pub fn position(&self, flat: usize) -> Vec<S> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.node_coord(k, i))
            .collect()
    }

    /// Flat index of the node closest to `x`, clamped to the domain so
    /// callers can count wall hits separately.
    pub fn nearest_node(&self, x: &[S]) -> usize {
        let idx: Vec<usize> = x
            .iter()
            .enumerate()
            .map(|(k, &xi)| {
                let h = self.spacing(k);
                let t = ((xi - self.axes[k].lo) / h).round();
                let i = t.to_f64_lossy().max(0.0) as usize;
                i.min(self.axes[k].n - 1)
            })
            .collect();
        self.flat_index(&idx)
    }

    pub fn contains(&self, x: &[S]) -> bool {
        x.iter()
            .zip(&self.axes)
            .all(|(&xi, ax)| xi >= ax.lo && xi <= ax.hi)
    }

    /// Visits every line along `axis` as `(start_flat_index, stride, len)`.
    pub fn for_each_line(&self, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
        let strides = self.strides();
        let stride = strides[axis];
        let len = self.axes[axis].n;
        let total = self.len();
        let mut start = 0usize;
        let mut visited = 0usize;
        let line_count = total / len;
        // Enumerate starts: all flat indices whose coordinate along `axis` is 0.
        let mut idx = vec![0usize; self.dim()];
        while visited < line_count {
            f(start, stride, len);
            visited += 1;
            // Increment multi-index, skipping `axis`.
            let mut k = self.dim();
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                if k == axis {
                    continue;
                }
                idx[k] += 1;
                if idx[k] < self.axes[k].n {
                    break;
                }
                idx[k] = 0;
            }
            start = self.flat_index(&idx);
        }
    }

    /// Re-expresses the geometry in another scalar type (f64 configs feeding
    /// f32 runs and vice versa). Goes through f64, so f32 -> f64 is exact.
    pub fn cast<T: Scalar>(&self) -> GridSpec<T> {
        GridSpec {
            axes: self
                .axes
                .iter()
                .map(|ax| Axis {
                    lo: T::lit(ax.lo.to_f64_lossy()),
                    hi: T::lit(ax.hi.to_f64_lossy()),
                    n: ax.n,
                })
                .collect(),
            boundary: self.boundary,
        }
    }
}

/// Scalar samples on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField<S> {
    pub spec: GridSpec<S>,
    pub data: Vec<S>,
}

impl<S: Scalar> GridField<S> {
    pub fn zeros(spec: GridSpec<S>) -> Self {
        let n = spec.len();
        GridField {
            spec,
            data: vec![S::zero(); n],
        }
    }

    pub fn from_fn(spec: GridSpec<S>, mut f: impl FnMut(&[S]) -> S) -> Self {
        let n = spec.len();
        let mut data = Vec::with_capacity(n);
        for flat in 0..n {
            let x = spec.position(flat);
            data.push(f(&x));
        }
        GridField { spec, data }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        GridField {
            spec: self.spec.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts samples to another scalar type; see [`GridSpec::cast`].
    pub fn cast<T: Scalar>(&self) -> GridField<T> {
        GridField {
            spec: self.spec.cast(),
            data: self.data.iter().map(|v| T::lit(v.to_f64_lossy())).collect(),
        }
    }

    /// Trapezoid integral (Dirichlet) or full-cell sum (periodic); for fields
    /// decaying at the walls the two coincide.
    pub fn integrate(&self) -> S {
        let vol = self.spec.cell_volume();
        match self.spec.boundary {
            Boundary::Periodic => self.data.iter().copied().sum::<S>() * vol,
            Boundary::DirichletZero => {
                let mut total = S::zero();
                for (flat, &v) in self.data.iter().enumerate() {
                    let idx = self.spec.multi_index(flat);
                    let mut w = S::one();
                    for (k, &i) in idx.iter().enumerate() {
                        if i == 0 || i == self.spec.axes[k].n - 1 {
                            w = w * S::lit(0.5);
                        }
                    }
                    total += v * w;
                }
                total * vol
            }
        }
    }

    pub fn min_value(&self) -> S {
        self.data.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn max_value(&self) -> S {
        self.data.iter().copied().fold(S::neg_infinity(), S::max)
    }

    /// First derivative along `axis`; exact on quadratics everywhere.
    pub fn derivative(&self, axis: usize) -> GridField<S> {
        self.derivative_impl(axis, false)
    }

    /// First derivative of a phase-like field: on periodic grids each
    /// difference is wrapped to the nearest branch of 2*pi so a winding
    /// phase has a smooth gradient across the seam.
    pub fn derivative_phase(&self, axis: usize) -> GridField<S> {
        self.derivative_impl(axis, true)
    }

    fn derivative_impl(&self, axis: usize, wrap_phase: bool) -> GridField<S> {
        let h = self.spec.spacing(axis);
        let two_pi = S::PI() * S::lit(2.0);
        let wrap = |d: S| -> S {
            if wrap_phase {
                d - two_pi * (d / two_pi).round()
            } else {
                d
            }
        };
        let mut out = vec![S::zero(); self.data.len()];
        let periodic = self.spec.boundary == Boundary::Periodic;
        self.spec.for_each_line(axis, |start, stride, len| {
            let at = |i: usize| self.data[start + i * stride];
            for i in 0..len {
                let v = if periodic {
                    let ip = (i + 1) % len;
                    let im = (i + len - 1) % len;
                    let fwd = wrap(at(ip) - at(i));
                    let bwd = wrap(at(i) - at(im));
                    (fwd + bwd) / (S::lit(2.0) * h)
                } else if i == 0 {
                    (S::lit(-3.0) * at(0) + S::lit(4.0) * at(1) - at(2)) / (S::lit(2.0) * h)
                } else if i == len - 1 {
                    (S::lit(3.0) * at(len - 1) - S::lit(4.0) * at(len - 2) + at(len - 3))
                        / (S::lit(2.0) * h)
                } else {
                    (at(i + 1) - at(i - 1)) / (S::lit(2.0) * h)
                };
                out[start + i * stride] = v;
            }
        });
        GridField {
            spec: self.spec.clone(),
            data: out,
        }
    }

    /// Second derivative along `axis`; exact on quadratics everywhere.
    pub fn second_derivative(&self, axis: usize) -> GridField<S> {
        self.second_derivative_impl(axis, false)
    }

    /// Second derivative of a phase-like field: periodic neighbor
    /// differences are wrapped to the nearest branch of 2*pi, matching
    /// [`GridField::derivative_phase`].
    pub fn second_derivative_phase(&self, axis: usize) -> GridField<S> {
        self.second_derivative_impl(axis, true)
    }

    fn second_derivative_impl(&self, axis: usize, wrap_phase: bool) -> GridField<S> {
        let h = self.spec.spacing(axis);
        let h2 = h * h;
        let two_pi = S::PI() * S::lit(2.0);
        let wrap = |d: S| -> S {
            if wrap_phase {
                d - two_pi * (d / two_pi).round()
            } else {
                d
            }
        };
        let mut out = vec![S::zero(); self.data.len()];
        let periodic = self.spec.boundary == Boundary::Periodic;
        self.spec.for_each_line(axis, |start, stride, len| {
            let at = |i: usize| self.data[start + i * stride];
            for i in 0..len {
                let v = if periodic {
                    let ip = (i + 1) % len;
                    let im = (i + len - 1) % len;
                    (wrap(at(ip) - at(i)) - wrap(at(i) - at(im))) / h2
                } else if i == 0 {
                    (S::lit(2.0) * at(0) - S::lit(5.0) * at(1) + S::lit(4.0) * at(2) - at(3)) / h2
                } else if i == len - 1 {
                    (S::lit(2.0) * at(len - 1) - S::lit(5.0) * at(len - 2)
                        + S::lit(4.0) * at(len - 3)
                        - at(len - 4))
                        / h2
                } else {
                    (at(i + 1) - S::lit(2.0) * at(i) + at(i - 1)) / h2
                };
                out[start + i * stride] = v;
            }
        });
        GridField {
            spec: self.spec.clone(),
            data: out,
        }
    }

    /// Multilinear interpolation; coordinates are clamped to the domain.
    pub fn interp(&self, x: &[S]) -> S {
        let d = self.spec.dim();
        debug_assert_eq!(x.len(), d);
        let mut base = [0usize; 3];
        let mut frac = [S::zero(); 3];
        for k in 0..d {
            let ax = &self.spec.axes[k];
            let h = self.spec.spacing(k);
            let max_cell = match self.spec.boundary {
                Boundary::DirichletZero => ax.n - 2,
                Boundary::Periodic => ax.n - 1,
            };
            let t = (x[k] - ax.lo) / h;
            let tf = t.floor();
            let mut i = tf.to_f64_lossy().max(0.0) as usize;
            let mut f = t - tf;
            if self.spec.boundary == Boundary::DirichletZero && i > max_cell {
                i = max_cell;
                f = S::one();
            }
            if self.spec.boundary == Boundary::Periodic {
                i %= ax.n;
            }
            if t < S::zero() {
                i = 0;
                f = S::zero();
            }
            base[k] = i.min(max_cell);
            frac[k] = f.max(S::zero()).min(S::one());
        }
        let strides = self.spec.strides();
        let mut acc = S::zero();
        for corner in 0..(1usize << d) {
            let mut w = S::one();
            let mut flat = 0usize;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                let ik = if up {
                    match self.spec.boundary {
                        Boundary::Periodic => (base[k] + 1) % self.spec.axes[k].n,
                        Boundary::DirichletZero => base[k] + 1,
                    }
                } else {
                    base[k]
                };
                w = w * if up { frac[k] } else { S::one() - frac[k] };
                flat += ik * strides[k];
            }
            acc += w * self.data[flat];
        }
        acc
    }

    /// Density moments: total mass, per-axis mean and variance.
    pub fn moments(&self) -> (S, Vec<S>, Vec<S>) {
        let d = self.spec.dim();
        let vol = self.spec.cell_volume();
        let mut mass = S::zero();
        let mut mean = vec![S::zero(); d];
        for (flat, &v) in self.data.iter().enumerate() {
            let x = self.spec.position(flat);
            mass += v;
            for k in 0..d {
                mean[k] += v * x[k];
            }
        }
        mass = mass * vol;
        for m in mean.iter_mut() {
            *m = *m * vol / mass;
        }
        let mut var = vec![S::zero(); d];
        for (flat, &v) in self.data.iter().enumerate() {
            let x = self.spec.position(flat);
            for k in 0..d {
                let dx = x[k] - mean[k];
                var[k] += v * dx * dx;
            }
        }
        for vr in var.iter_mut() {
            *vr = *vr * vol / mass;
        }
        (mass, mean, var)
    }

    /// Probability mass sitting in the outermost node layer.
    pub fn boundary_mass(&self) -> S {
        let vol = self.spec.cell_volume();
        let mut m = S::zero();
        for (flat, &v) in self.data.iter().enumerate() {
            let idx = self.spec.multi_index(flat);
            let on_wall = idx
                .iter()
                .enumerate()
                .any(|(k, &i)| i == 0 || i == self.spec.axes[k].n - 1);
            if on_wall {
                m += v;
            }
        }
        m * vol
    }

    /// Writes the shared CSV grid format: a header row
    /// `axes,boundary,n_1,lo_1,hi_1[,...]`, then values row-major with one
    /// line per trailing-axis run. Floats use the shortest representation
    /// that round-trips.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        let bc = match self.spec.boundary {
            Boundary::DirichletZero => "dirichlet",
            Boundary::Periodic => "periodic",
        };
        let mut header = format!("{},{}", self.spec.dim(), bc);
        for ax in &self.spec.axes {
            header.push_str(&format!(",{},{},{}", ax.n, ax.lo, ax.hi));
        }
        writeln!(w, "{header}")?;
        let row_len = self.spec.axes[self.spec.dim() - 1].n;
        for row in self.data.chunks(row_len) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads the CSV grid format written by [`GridField::write_csv`].
    pub fn read_csv(path: &Path) -> Result<GridField<S>> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::usage("empty grid file"))??;
        let parts: Vec<&str> = header.trim().split(',').collect();
        if parts.len() < 5 {
            return Err(CoreError::usage("grid header too short"));
        }
        let dim: usize = parts[0]
            .parse()
            .map_err(|_| CoreError::usage("bad axis count in grid header"))?;
        let boundary = match parts[1] {
            "dirichlet" => Boundary::DirichletZero,
            "periodic" => Boundary::Periodic,
            other => {
                return Err(CoreError::usage(format!(
                    "unknown boundary tag '{other}'"
                )))
            }
        };
        if parts.len() != 2 + 3 * dim {
            return Err(CoreError::usage("grid header field count mismatch"));
        }
        let mut axes = Vec::with_capacity(dim);
        for k in 0..dim {
            let n: usize = parts[2 + 3 * k]
                .parse()
                .map_err(|_| CoreError::usage(format!("bad node count on axis {k}")))?;
            let lo: f64 = parts[3 + 3 * k]
                .parse()
                .map_err(|_| CoreError::usage(format!("bad lo on axis {k}")))?;
            let hi: f64 = parts[4 + 3 * k]
                .parse()
                .map_err(|_| CoreError::usage(format!("bad hi on axis {k}")))?;
            axes.push(Axis {
                lo: S::lit(lo),
                hi: S::lit(hi),
                n,
            });
        }
        let spec = GridSpec::new(axes, boundary)?;
        let mut data = Vec::with_capacity(spec.len());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.trim().split(',') {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| CoreError::usage(format!("bad value '{tok}' in grid file")))?;
                data.push(S::lit(v));
            }
        }
        if data.len() != spec.len() {
            return Err(CoreError::usage(format!(
                "grid file holds {} values, header promises {}",
                data.len(),
                spec.len()
            )));
        }
        Ok(GridField { spec, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_spec(n: usize) -> GridSpec<f64> {
        GridSpec::line(-2.0, 2.0, n, Boundary::DirichletZero).unwrap()
    }

    #[test]
    fn rejects_tiny_and_oversized_grids() {
        assert!(GridSpec::<f64>::line(0.0, 1.0, 4, Boundary::DirichletZero).is_err());
        let axes = vec![
            Axis { lo: 0.0, hi: 1.0, n: 4096 },
            Axis { lo: 0.0, hi: 1.0, n: 4096 },
            Axis { lo: 0.0, hi: 1.0, n: 4096 },
        ];
        assert!(GridSpec::<f64>::new(axes, Boundary::DirichletZero).is_err());
    }

    #[test]
    fn derivatives_exact_on_quadratics() {
        let spec = line_spec(33);
        let f = GridField::from_fn(spec, |x| 1.5 * x[0] * x[0] - 0.7 * x[0] + 2.0);
        let d1 = f.derivative(0);
        let d2 = f.second_derivative(0);
        for (flat, &v) in d1.data.iter().enumerate() {
            let x = d1.spec.position(flat)[0];
            assert!((v - (3.0 * x - 0.7)).abs() < 1e-12, "d1 at {x}: {v}");
        }
        for &v in &d2.data {
            assert!((v - 3.0).abs() < 1e-11, "d2: {v}");
        }
    }

    #[test]
    fn periodic_phase_gradient_handles_winding() {
        // phi = k*x with k*L = 2*pi*3: winds three times around the box.
        let n = 64;
        let lo = 0.0;
        let hi = 4.0;
        let k = 2.0 * std::f64::consts::PI * 3.0 / (hi - lo);
        let spec = GridSpec::line(lo, hi, n, Boundary::Periodic).unwrap();
        let f = GridField::from_fn(spec, |x| k * x[0]);
        let g = f.derivative_phase(0);
        for &v in &g.data {
            assert!((v - k).abs() < 1e-10, "wrapped gradient {v} vs {k}");
        }
    }

    #[test]
    fn integrate_matches_gaussian_mass() {
        let spec: GridSpec<f64> = GridSpec::line(-8.0, 8.0, 801, Boundary::DirichletZero).unwrap();
        let f = GridField::from_fn(spec, |x| {
            (-(x[0] * x[0]) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        });
        assert!((f.integrate() - 1.0).abs() < 1e-10);
        let (mass, mean, var) = f.moments();
        assert!((mass - 1.0).abs() < 1e-10);
        assert!(mean[0].abs() < 1e-12);
        assert!((var[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn interp_reproduces_linear_fields() {
        let spec: GridSpec<f64> = GridSpec::new(
            vec![
                Axis { lo: -1.0, hi: 1.0, n: 9 },
                Axis { lo: 0.0, hi: 2.0, n: 11 },
            ],
            Boundary::DirichletZero,
        )
        .unwrap();
        let f = GridField::from_fn(spec, |x| 2.0 * x[0] - 3.0 * x[1] + 0.5);
        for &(a, b) in &[(0.13, 0.77), (-0.9, 1.99), (0.0, 0.0), (1.0, 2.0)] {
            let got = f.interp(&[a, b]);
            let want = 2.0 * a - 3.0 * b + 0.5;
            assert!((got - want).abs() < 1e-12, "at ({a},{b}): {got} vs {want}");
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = std::env::temp_dir().join("entrodyn_grid_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.csv");
        let spec: GridSpec<f64> = GridSpec::new(
            vec![
                Axis { lo: -1.5, hi: 1.5, n: 8 },
                Axis { lo: 0.0, hi: 1.0, n: 9 },
            ],
            Boundary::Periodic,
        )
        .unwrap();
        let f = GridField::from_fn(spec, |x| (x[0] * 1.7).sin() * (x[1] + 0.3).cos());
        f.write_csv(&path).unwrap();
        let g: GridField<f64> = GridField::read_csv(&path).unwrap();
        assert_eq!(f.spec, g.spec);
        assert_eq!(f.data, g.data);
    }
}
