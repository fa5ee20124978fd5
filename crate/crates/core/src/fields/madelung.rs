//! Coupled continuity and Hamilton-Jacobi solver in log-density form.
//!
//! The state (rho, phi) is advanced by integrating (L, phi) with L = ln rho:
//!
//!   dL/dt   = - sum_a (eta/m_a) (d_a L d_a phi + d_a^2 phi)
//!   dphi/dt = - sum_a (eta/2 m_a)(d_a phi)^2 - V/eta
//!             + sum_a (mu_a eta / 2 m_a^2)(d_a^2 L / 2 + (d_a L)^2 / 4)
//!
//! using classic RK4. The last bracket is the quantum potential written in
//! L, whose coefficient carries the osmotic mass; at mu = m the system is
//! a Schrodinger equation in disguise. Working in L keeps Gaussian tails
//! polynomial instead of exponentially small: the central stencils are
//! exact on quadratic (L, phi), so Gaussian states evolve with time
//! discretization error only.
//!
//! Each step rescales rho to unit mass. The factor is a solver diagnostic:
//! it must stay within RENORM_TOL of one or the step errors out.

use super::{FieldState, ModelParams};
use crate::error::{CoreError, Result};
use crate::grid::{Boundary, GridField, GridSpec};
use crate::scalar::Scalar;

/// Allowed per-step deviation of the mass renormalization factor from one.
pub const RENORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct MadelungReport<S> {
    /// Factor applied to rho after the step to restore unit mass.
    pub renorm_factor: S,
}

pub struct Madelung<S> {
    pub spec: GridSpec<S>,
    /// V(x)/eta at every node.
    v_over_eta: Vec<S>,
    /// eta/m_a per axis.
    eta_over_m: Vec<S>,
    /// mu_a eta / (2 m_a^2) per axis.
    q_coef: Vec<S>,
    rho_floor: S,
}

impl<S: Scalar> Madelung<S> {
    pub fn new(params: &ModelParams<S>, spec: GridSpec<S>) -> Result<Self> {
        let d = spec.dim();
        if d != params.space.dim() {
            return Err(CoreError::usage("grid and parameter dimension mismatch"));
        }
        let v_over_eta = (0..spec.len())
            .map(|i| params.potential.value(&spec.position(i)) / params.eta)
            .collect();
        let two = S::lit(2.0);
        let eta_over_m: Vec<S> = (0..d).map(|a| params.eta / params.mass_of_axis(a)).collect();
        let q_coef: Vec<S> = (0..d)
            .map(|a| {
                let m = params.mass_of_axis(a);
                params.mu_of_axis(a) * params.eta / (two * m * m)
            })
            .collect();
        Ok(Madelung {
            spec,
            v_over_eta,
            eta_over_m,
            q_coef,
            rho_floor: params.rho_floor,
        })
    }

    /// Dispersion-limited explicit step: cfl * min_a h_a^2 m_a / eta.
    pub fn max_stable_dt(&self, cfl: S) -> S {
        let mut dt = S::infinity();
        for a in 0..self.spec.dim() {
            let h = self.spec.spacing(a);
            dt = dt.min(h * h / self.eta_over_m[a]);
        }
        cfl * dt
    }

    /// Time derivatives of (L, phi).
    fn rhs(&self, l: &GridField<S>, phi: &GridField<S>) -> (Vec<S>, Vec<S>) {
        let d = self.spec.dim();
        let n = l.data.len();
        let periodic = self.spec.boundary == Boundary::Periodic;
        let half = S::lit(0.5);
        let quarter = S::lit(0.25);
        let mut dl = vec![S::zero(); n];
        let mut dphi = vec![S::zero(); n];
        for (o, &v) in dphi.iter_mut().zip(&self.v_over_eta) {
            *o = -v;
        }
        for a in 0..d {
            let gl = l.derivative(a);
            let gll = l.second_derivative(a);
            let (gp, gpp) = if periodic {
                (phi.derivative_phase(a), phi.second_derivative_phase(a))
            } else {
                (phi.derivative(a), phi.second_derivative(a))
            };
            let em = self.eta_over_m[a];
            let qc = self.q_coef[a];
            for i in 0..n {
                dl[i] -= em * (gl.data[i] * gp.data[i] + gpp.data[i]);
                dphi[i] += qc * (half * gll.data[i] + quarter * gl.data[i] * gl.data[i])
                    - half * em * gp.data[i] * gp.data[i];
            }
        }
        (dl, dphi)
    }

    /// One RK4 step of size `dt`. Errors if rho is non-positive or
    /// non-finite anywhere (naming the first offending cell), or if the
    /// mass renormalization factor leaves 1 +/- RENORM_TOL.
    pub fn step(&self, state: &mut FieldState<S>, dt: S) -> Result<MadelungReport<S>> {
        if state.rho.spec.axes != self.spec.axes || state.rho.spec.boundary != self.spec.boundary {
            return Err(CoreError::usage("state grid does not match the solver"));
        }
        let t = state.t.to_f64_lossy();
        for (i, &r) in state.rho.data.iter().enumerate() {
            if !(r > S::zero()) || !r.is_finite() {
                return Err(CoreError::Solver {
                    cell: i,
                    time: t,
                    message: format!("density {r} is not positive"),
                });
            }
        }
        for (i, &p) in state.phi.data.iter().enumerate() {
            if !p.is_finite() {
                return Err(CoreError::Solver {
                    cell: i,
                    time: t,
                    message: format!("phase {p} is not finite"),
                });
            }
        }
        let spec = self.spec.clone();
        let mk = |data: Vec<S>| GridField {
            spec: spec.clone(),
            data,
        };
        let l0 = mk(state.rho.data.iter().map(|r| r.ln()).collect());
        let p0 = &state.phi;
        let half = S::lit(0.5);
        let (k1l, k1p) = self.rhs(&l0, p0);
        let stage = |kl: &[S], kp: &[S], w: S| {
            let l = mk(l0
                .data
                .iter()
                .zip(kl)
                .map(|(&v, &k)| v + w * k)
                .collect());
            let p = mk(p0
                .data
                .iter()
                .zip(kp)
                .map(|(&v, &k)| v + w * k)
                .collect());
            (l, p)
        };
        let (l1, p1) = stage(&k1l, &k1p, half * dt);
        let (k2l, k2p) = self.rhs(&l1, &p1);
        let (l2, p2) = stage(&k2l, &k2p, half * dt);
        let (k3l, k3p) = self.rhs(&l2, &p2);
        let (l3, p3) = stage(&k3l, &k3p, dt);
        let (k4l, k4p) = self.rhs(&l3, &p3);
        let sixth = dt / S::lit(6.0);
        let two = S::lit(2.0);
        let mut lnew = l0;
        for i in 0..lnew.data.len() {
            lnew.data[i] += sixth * (k1l[i] + two * k2l[i] + two * k3l[i] + k4l[i]);
            state.phi.data[i] += sixth * (k1p[i] + two * k2p[i] + two * k3p[i] + k4p[i]);
        }
        for (i, (out, &l)) in state.rho.data.iter_mut().zip(&lnew.data).enumerate() {
            let r = l.exp();
            if !r.is_finite() {
                return Err(CoreError::Solver {
                    cell: i,
                    time: t,
                    message: format!("density overflowed (log-density {l})"),
                });
            }
            *out = r;
        }
        let factor = state.normalize_mass()?;
        if (factor - S::one()).abs() > S::lit(RENORM_TOL) {
            return Err(CoreError::Solver {
                cell: 0,
                time: t,
                message: format!(
                    "mass renormalization factor {factor} outside 1 +/- {RENORM_TOL}; \
                     the step is not trustworthy"
                ),
            });
        }
        state.t += dt;
        Ok(MadelungReport {
            renorm_factor: factor,
        })
    }

    /// Advances by `span` in uniform substeps under the stability limit.
    /// Returns (steps, dt, worst |renorm - 1|).
    pub fn advance(&self, state: &mut FieldState<S>, span: S, cfl: S) -> Result<(u64, S, S)> {
        if !(span > S::zero()) {
            return Err(CoreError::usage("time span must be positive"));
        }
        let dt_max = self.max_stable_dt(cfl);
        let steps = ((span / dt_max).ceil().to_f64_lossy() as u64).max(1);
        let dt = span / S::from_u64(steps).unwrap();
        let mut worst = S::zero();
        for _ in 0..steps {
            let rep = self.step(state, dt)?;
            worst = worst.max((rep.renorm_factor - S::one()).abs());
        }
        Ok((steps, dt, worst))
    }

    pub fn rho_floor(&self) -> S {
        self.rho_floor
    }
}
