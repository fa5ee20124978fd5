//! Split-step solver for the wave equation with independent osmotic mass:
//! i eta d psi/dt = H psi + W[|psi|] psi, where
//! W = sum_a (eta^2/2m_a)(1 - mu_a/m_a) (d_a^2 |psi|) / |psi|.
//!
//! W vanishes identically at mu = m, where a step reduces to plain
//! Crank-Nicolson (the half-phase factors become exact multiplications by
//! one). Strang splitting: half phase, full linear step, half phase with W
//! recomputed from the post-step amplitude. W is real, so every factor is
//! unitary and the norm is conserved to rounding for any mu.

use super::schrodinger::CrankNicolson;
use super::{ModelParams, WaveFunction};
use crate::error::{CoreError, Result};
use crate::grid::{GridField, GridSpec};
use crate::scalar::Scalar;
use num_complex::Complex;

pub struct NonlinearSchrodinger<S> {
    pub cn: CrankNicolson<S>,
    /// (eta^2 / 2 m_a)(1 - mu_a/m_a) per axis.
    w_coef: Vec<S>,
    eta: S,
    rho_floor: S,
}

impl<S: Scalar> NonlinearSchrodinger<S> {
    pub fn new(params: &ModelParams<S>, spec: GridSpec<S>) -> Result<Self> {
        let d = spec.dim();
        let two = S::lit(2.0);
        let w_coef = (0..d)
            .map(|a| {
                let m = params.mass_of_axis(a);
                params.eta * params.eta / (two * m) * (S::one() - params.mu_over_m)
            })
            .collect();
        Ok(NonlinearSchrodinger {
            cn: CrankNicolson::new(params, spec)?,
            w_coef,
            eta: params.eta,
            rho_floor: params.rho_floor,
        })
    }

    /// The amplitude-curvature potential W at every node; cells whose
    /// density sits below the floor contribute zero, since dividing by a
    /// vanishing amplitude there is pure noise.
    pub fn w_field(&self, psi: &WaveFunction<S>) -> Vec<S> {
        let amp = GridField {
            spec: self.cn.spec.clone(),
            data: psi.data.iter().map(|c| c.norm()).collect(),
        };
        let floor_amp = self.rho_floor.sqrt();
        let mut w = vec![S::zero(); amp.data.len()];
        for a in 0..self.cn.spec.dim() {
            let d2 = amp.second_derivative(a);
            for i in 0..w.len() {
                if amp.data[i] > floor_amp {
                    w[i] += self.w_coef[a] * d2.data[i] / amp.data[i];
                }
            }
        }
        w
    }

    fn apply_phase(&self, psi: &mut WaveFunction<S>, w: &[S], dt_half: S) {
        let scale = -dt_half / self.eta;
        for (c, &wi) in psi.data.iter_mut().zip(w) {
            let rot = Complex::from_polar(S::one(), scale * wi);
            *c = *c * rot;
        }
    }

    /// One Strang step of size `dt`.
    pub fn step(&self, psi: &mut WaveFunction<S>, dt: S) -> Result<()> {
        let half = dt / S::lit(2.0);
        let w = self.w_field(psi);
        self.apply_phase(psi, &w, half);
        self.cn.step(psi, dt)?;
        let w = self.w_field(psi);
        self.apply_phase(psi, &w, half);
        Ok(())
    }

    /// Advances by `span` using steps no larger than `dt_target`.
    pub fn advance(&self, psi: &mut WaveFunction<S>, span: S, dt_target: S) -> Result<(u64, S)> {
        if !(span > S::zero()) || !(dt_target > S::zero()) {
            return Err(CoreError::usage("span and dt must be positive"));
        }
        let steps = ((span / dt_target).ceil().to_f64_lossy() as u64).max(1);
        let dt = span / S::from_u64(steps).unwrap();
        for _ in 0..steps {
            self.step(psi, dt)?;
        }
        Ok((steps, dt))
    }
}
