//! Continuum field descriptions of the walker dynamics.
//!
//! Two levels coexist. The probability density rho alone obeys a
//! Fokker-Planck equation driven by the entropic drift. The pair
//! (rho, phi), with phi the dynamical phase, obeys coupled continuity and
//! Hamilton-Jacobi equations whose quantum-potential coefficient carries
//! the osmotic mass mu; at mu = m the pair is exactly a Schrodinger wave
//! function taken apart into modulus and phase.
//!
//! Units: velocities are (eta/m) phase gradients; each particle's inertial
//! mass is tied to its microstate width by m_n = eta tau / sigma_n^2, which
//! makes the diffusion constant eta/2m_n.

pub mod classical;
pub mod fokker_planck;
pub mod madelung;
pub mod nonlinear;
pub mod schrodinger;

use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::grid::{Boundary, GridField, GridSpec};
use crate::manifold::ConfigSpace;
use crate::scalar::Scalar;
use num_complex::Complex;

/// Default mask level: cells with rho below this are excluded from
/// velocity fields and energy quadrature, where dividing by rho would
/// amplify tail noise.
pub const RHO_FLOOR: f64 = 1e-12;

/// Default stability fraction for explicit time steps.
pub const CFL_FRACTION: f64 = 0.25;

/// Physical parameters shared by all field solvers.
#[derive(Debug, Clone)]
pub struct ModelParams<S> {
    pub space: ConfigSpace<S>,
    /// Action scale relating phase gradients to velocities.
    pub eta: S,
    /// Kernel time scale; together with sigma_n it fixes the masses.
    pub tau: S,
    /// Osmotic-to-inertial mass ratio mu/m, the linearity dial.
    pub mu_over_m: S,
    pub potential: Field<S>,
    pub rho_floor: S,
    pub cfl: S,
}

impl<S: Scalar> ModelParams<S> {
    pub fn new(
        space: ConfigSpace<S>,
        eta: S,
        tau: S,
        mu_over_m: S,
        potential: Field<S>,
    ) -> Result<Self> {
        if !(eta > S::zero()) || !(tau > S::zero()) || !(mu_over_m > S::zero()) {
            return Err(CoreError::usage("eta, tau and mu/m must be positive"));
        }
        Ok(ModelParams {
            space,
            eta,
            tau,
            mu_over_m,
            potential,
            rho_floor: S::lit(RHO_FLOOR),
            cfl: S::lit(CFL_FRACTION),
        })
    }

    pub fn with_rho_floor(mut self, floor: S) -> Self {
        self.rho_floor = floor;
        self
    }

    pub fn with_cfl(mut self, cfl: S) -> Self {
        self.cfl = cfl;
        self
    }

    /// Inertial mass of the particle owning axis `a`: eta tau / sigma^2.
    pub fn mass_of_axis(&self, a: usize) -> S {
        let s = self.space.sigma_of_axis(a);
        self.eta * self.tau / (s * s)
    }

    /// Osmotic mass of the particle owning axis `a`.
    pub fn mu_of_axis(&self, a: usize) -> S {
        self.mu_over_m * self.mass_of_axis(a)
    }

    /// Diffusion constant along axis `a`: sigma^2 / 2 tau = eta / 2 m.
    pub fn diffusion_of_axis(&self, a: usize) -> S {
        let s = self.space.sigma_of_axis(a);
        s * s / (S::lit(2.0) * self.tau)
    }
}

/// Density and phase on a shared grid at one instant.
#[derive(Debug, Clone)]
pub struct FieldState<S> {
    pub rho: GridField<S>,
    pub phi: GridField<S>,
    pub t: S,
}

impl<S: Scalar> FieldState<S> {
    pub fn new(rho: GridField<S>, phi: GridField<S>, t: S) -> Result<Self> {
        if rho.spec.axes != phi.spec.axes || rho.spec.boundary != phi.spec.boundary {
            return Err(CoreError::usage("rho and phi must share one grid"));
        }
        if rho.data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::domain("rho must be finite"));
        }
        if rho.data.iter().any(|&v| v < S::zero()) {
            return Err(CoreError::domain("rho must be non-negative"));
        }
        Ok(FieldState { rho, phi, t })
    }

    /// Rescales rho to unit mass, returning the applied factor.
    pub fn normalize_mass(&mut self) -> Result<S> {
        let mass = self.rho.integrate();
        if !(mass > S::zero()) || !mass.is_finite() {
            return Err(CoreError::numerical(format!(
                "cannot normalize: total mass {mass}"
            )));
        }
        let f = S::one() / mass;
        for v in &mut self.rho.data {
            *v *= f;
        }
        Ok(f)
    }
}

/// Complex wave function on a grid.
#[derive(Debug, Clone)]
pub struct WaveFunction<S> {
    pub spec: GridSpec<S>,
    pub data: Vec<Complex<S>>,
    pub t: S,
}

impl<S: Scalar> WaveFunction<S> {
    pub fn from_fn(spec: GridSpec<S>, f: impl Fn(&[S]) -> Complex<S>) -> Self {
        let data = (0..spec.len()).map(|i| f(&spec.position(i))).collect();
        WaveFunction {
            spec,
            data,
            t: S::zero(),
        }
    }

    pub fn density(&self) -> GridField<S> {
        GridField {
            spec: self.spec.clone(),
            data: self.data.iter().map(|c| c.norm_sqr()).collect(),
        }
    }

    pub fn norm_sq(&self) -> S {
        self.density().integrate()
    }

    pub fn normalize(&mut self) -> Result<S> {
        let n2 = self.norm_sq();
        if !(n2 > S::zero()) || !n2.is_finite() {
            return Err(CoreError::numerical(format!(
                "cannot normalize wave function with |psi|^2 mass {n2}"
            )));
        }
        let f = S::one() / n2.sqrt();
        for c in &mut self.data {
            *c = *c * f;
        }
        Ok(f)
    }

    /// Overlap |<self|other>| / (|self| |other|), a phase-free fidelity.
    pub fn fidelity(&self, other: &WaveFunction<S>) -> Result<S> {
        if self.spec.axes != other.spec.axes {
            return Err(CoreError::usage("fidelity needs matching grids"));
        }
        let mut inner = Complex::new(S::zero(), S::zero());
        for (a, b) in self.data.iter().zip(&other.data) {
            inner += a.conj() * b;
        }
        // Common grid, common quadrature weight; the cell volume cancels.
        let na: S = self.data.iter().map(|c| c.norm_sqr()).sum();
        let nb: S = other.data.iter().map(|c| c.norm_sqr()).sum();
        Ok(inner.norm() / (na * nb).sqrt())
    }
}

/// Flow and osmotic velocity fields per axis: v = (eta/m) d phi,
/// u = -(eta/2m) d log rho. Cells with rho below the floor are zeroed.
pub fn velocities<S: Scalar>(
    state: &FieldState<S>,
    params: &ModelParams<S>,
) -> Result<(Vec<GridField<S>>, Vec<GridField<S>>)> {
    let d = state.rho.spec.dim();
    if d != params.space.dim() {
        return Err(CoreError::usage("state and params dimension mismatch"));
    }
    let periodic = state.rho.spec.boundary == Boundary::Periodic;
    let mut flow = Vec::with_capacity(d);
    let mut osmotic = Vec::with_capacity(d);
    let floor = params.rho_floor;
    for a in 0..d {
        let m = params.mass_of_axis(a);
        let dphi = if periodic {
            state.phi.derivative_phase(a)
        } else {
            state.phi.derivative(a)
        };
        let drho = state.rho.derivative(a);
        let mut v = dphi;
        let mut u = drho;
        for i in 0..state.rho.data.len() {
            let r = state.rho.data[i];
            if r < floor {
                v.data[i] = S::zero();
                u.data[i] = S::zero();
            } else {
                v.data[i] = params.eta / m * v.data[i];
                u.data[i] = -params.eta / (S::lit(2.0) * m) * u.data[i] / r;
            }
        }
        flow.push(v);
        osmotic.push(u);
    }
    Ok((flow, osmotic))
}

/// Total energy functional:
/// E = integral rho [ sum_a (eta^2/2m_a)(d_a phi)^2
///   + (mu_a eta^2 / 8 m_a^2)(d_a log rho)^2 + V ].
/// Cells below the density floor are excluded from the quadrature.
pub fn energy<S: Scalar>(state: &FieldState<S>, params: &ModelParams<S>) -> Result<S> {
    let d = state.rho.spec.dim();
    if d != params.space.dim() {
        return Err(CoreError::usage("state and params dimension mismatch"));
    }
    let periodic = state.rho.spec.boundary == Boundary::Periodic;
    let two = S::lit(2.0);
    let eight = S::lit(8.0);
    let mut dphi = Vec::with_capacity(d);
    let mut drho = Vec::with_capacity(d);
    for a in 0..d {
        dphi.push(if periodic {
            state.phi.derivative_phase(a)
        } else {
            state.phi.derivative(a)
        });
        drho.push(state.rho.derivative(a));
    }
    let mut density = GridField::zeros(state.rho.spec.clone());
    for i in 0..state.rho.data.len() {
        let r = state.rho.data[i];
        if r < params.rho_floor {
            continue;
        }
        let x = state.rho.spec.position(i);
        let mut e = params.potential.value(&x);
        for a in 0..d {
            let m = params.mass_of_axis(a);
            let mu = params.mu_of_axis(a);
            let gp = dphi[a].data[i];
            let gl = drho[a].data[i] / r;
            e += params.eta * params.eta / (two * m) * gp * gp
                + mu * params.eta * params.eta / (eight * m * m) * gl * gl;
        }
        density.data[i] = r * e;
    }
    Ok(density.integrate())
}

/// Builds psi = sqrt(rho) exp(i phi) on the state's grid.
pub fn wavefunction_from_fields<S: Scalar>(state: &FieldState<S>) -> Result<WaveFunction<S>> {
    let data = state
        .rho
        .data
        .iter()
        .zip(&state.phi.data)
        .map(|(&r, &p)| Complex::from_polar(r.sqrt(), p))
        .collect();
    Ok(WaveFunction {
        spec: state.rho.spec.clone(),
        data,
        t: state.t,
    })
}

/// Splits psi into rho = |psi|^2 and a phase unwrapped to a smooth field.
///
/// The phase is anchored at the central node and unwrapped axis by axis
/// (each jump folded to the nearest 2 pi branch), which is well defined
/// only where the density does not vanish. Nodes (zero density away from
/// the domain boundary) make the phase ill-defined and are reported as an
/// error naming the offending cells.
pub fn fields_from_wavefunction<S: Scalar>(psi: &WaveFunction<S>) -> Result<FieldState<S>> {
    let spec = &psi.spec;
    let d = spec.dim();
    let rho: Vec<S> = psi.data.iter().map(|c| c.norm_sqr()).collect();
    let peak = rho.iter().copied().fold(S::zero(), S::max);
    if !(peak > S::zero()) {
        return Err(CoreError::domain("wave function is identically zero"));
    }
    // A cell this far below the peak cannot anchor a phase; it is either a
    // node or deep tail. Nodes in the interior bulk are errors; tail cells
    // inherit the phase of their neighbor, which is harmless because every
    // consumer masks them.
    let node_level = peak * S::lit(1e-24);
    let mut nodes = Vec::new();
    let bulk_level = peak * S::lit(1e-8);
    for i in 0..rho.len() {
        if rho[i] <= node_level {
            // Only flag cells adjacent to substantial density; isolated
            // deep-tail zeros are not phase singularities.
            let midx = spec.multi_index(i);
            let mut near_bulk = false;
            for a in 0..d {
                for step in [-1isize, 1] {
                    let j = midx[a] as isize + step;
                    if j < 0 || j >= spec.axes[a].n as isize {
                        continue;
                    }
                    let mut nidx = midx.clone();
                    nidx[a] = j as usize;
                    if rho[spec.flat_index(&nidx)] >= bulk_level {
                        near_bulk = true;
                    }
                }
            }
            if near_bulk {
                nodes.push(i);
            }
        }
    }
    if !nodes.is_empty() {
        let list: Vec<String> = nodes.iter().take(8).map(|i| i.to_string()).collect();
        return Err(CoreError::domain(format!(
            "phase is undefined at {} node cell(s), first at flat indices [{}]",
            nodes.len(),
            list.join(", ")
        )));
    }
    let mut phase: Vec<S> = psi.data.iter().map(|c| c.im.atan2(c.re)).collect();
    let center: Vec<usize> = spec.axes.iter().map(|ax| ax.n / 2).collect();
    let two_pi = S::lit(std::f64::consts::TAU);
    let unwrap_line = |phase: &mut [S], start: usize, stride: usize, len: usize, anchor: usize| {
        // anchor is the in-line index to sweep outward from.
        for i in (anchor + 1)..len {
            let prev = phase[start + (i - 1) * stride];
            let cur = phase[start + i * stride];
            let k = ((cur - prev) / two_pi).round();
            phase[start + i * stride] = cur - k * two_pi;
        }
        for i in (0..anchor).rev() {
            let prev = phase[start + (i + 1) * stride];
            let cur = phase[start + i * stride];
            let k = ((cur - prev) / two_pi).round();
            phase[start + i * stride] = cur - k * two_pi;
        }
    };
    let strides = spec.strides();
    // Axis 0: the single line through the grid center.
    {
        let mut idx = center.clone();
        idx[0] = 0;
        let start = spec.flat_index(&idx);
        unwrap_line(&mut phase, start, strides[0], spec.axes[0].n, center[0]);
    }
    // Each further axis sweeps lines anchored on the already-unwrapped
    // lower-dimensional slab: axes below `a` range fully, axes above stay
    // pinned at center until their own sweep. For d <= 3 this covers the
    // whole grid with every anchor already unwrapped.
    for a in 1..d {
        let mut idx: Vec<usize> = center.clone();
        for v in idx.iter_mut().take(a) {
            *v = 0;
        }
        loop {
            let mut line_idx = idx.clone();
            line_idx[a] = 0;
            let start = spec.flat_index(&line_idx);
            unwrap_line(&mut phase, start, strides[a], spec.axes[a].n, center[a]);
            // Odometer over axes 0..a.
            let mut k = 0;
            loop {
                if k == a {
                    break;
                }
                idx[k] += 1;
                if idx[k] < spec.axes[k].n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == a {
                break;
            }
        }
    }
    Ok(FieldState {
        rho: GridField {
            spec: spec.clone(),
            data: rho,
        },
        phi: GridField {
            spec: spec.clone(),
            data: phase,
        },
        t: psi.t,
    })
}

/// Regraduation of the action scale: eta -> eta/kappa, phi -> kappa phi,
/// mu -> kappa^2 mu, tau -> kappa tau. Masses, sigma, rho, and the
/// potential are untouched, and the coupled field equations are exactly
/// form-invariant under this change.
pub fn regraduate_params<S: Scalar>(
    params: &ModelParams<S>,
    kappa: S,
) -> Result<ModelParams<S>> {
    if !(kappa > S::zero()) || !kappa.is_finite() {
        return Err(CoreError::usage("kappa must be positive and finite"));
    }
    let mut p = params.clone();
    p.eta = params.eta / kappa;
    p.tau = params.tau * kappa;
    p.mu_over_m = params.mu_over_m * kappa * kappa;
    Ok(p)
}

/// Companion state transformation: the phase rescales by kappa.
pub fn regraduate_state<S: Scalar>(state: &FieldState<S>, kappa: S) -> Result<FieldState<S>> {
    if !(kappa > S::zero()) || !kappa.is_finite() {
        return Err(CoreError::usage("kappa must be positive and finite"));
    }
    let mut s = state.clone();
    for v in &mut s.phi.data {
        *v *= kappa;
    }
    Ok(s)
}

/// The kappa that maps mu/m to exactly one.
pub fn kappa_to_unit_mass_ratio<S: Scalar>(params: &ModelParams<S>) -> S {
    S::one() / params.mu_over_m.sqrt()
}

/// L1 distance between two densities on one grid.
pub fn l1_distance<S: Scalar>(a: &GridField<S>, b: &GridField<S>) -> Result<S> {
    check_same_grid(a, b)?;
    let diff = GridField {
        spec: a.spec.clone(),
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| (x - y).abs())
            .collect(),
    };
    Ok(diff.integrate())
}

/// L2 distance between two densities on one grid.
pub fn l2_distance<S: Scalar>(a: &GridField<S>, b: &GridField<S>) -> Result<S> {
    check_same_grid(a, b)?;
    let diff = GridField {
        spec: a.spec.clone(),
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| (x - y) * (x - y))
            .collect(),
    };
    Ok(diff.integrate().sqrt())
}

/// Kullback-Leibler divergence KL(p || q) with support bookkeeping: mass of
/// p living where q vanishes is reported separately and makes the
/// divergence infinite.
pub struct KlResult<S> {
    pub nats: S,
    pub unsupported_mass: S,
}

pub fn kl_divergence<S: Scalar>(p: &GridField<S>, q: &GridField<S>) -> Result<KlResult<S>> {
    check_same_grid(p, q)?;
    let mut integrand = GridField::zeros(p.spec.clone());
    let mut orphan = GridField::zeros(p.spec.clone());
    for i in 0..p.data.len() {
        let pi = p.data[i];
        let qi = q.data[i];
        if pi <= S::zero() {
            continue;
        }
        if qi <= S::zero() {
            orphan.data[i] = pi;
        } else {
            integrand.data[i] = pi * (pi / qi).ln();
        }
    }
    let unsupported = orphan.integrate();
    let nats = if unsupported > S::zero() {
        S::infinity()
    } else {
        integrand.integrate()
    };
    Ok(KlResult {
        nats,
        unsupported_mass: unsupported,
    })
}

fn check_same_grid<S: Scalar>(a: &GridField<S>, b: &GridField<S>) -> Result<()> {
    if a.spec.axes != b.spec.axes || a.spec.boundary != b.spec.boundary {
        return Err(CoreError::usage("fields live on different grids"));
    }
    Ok(())
}
