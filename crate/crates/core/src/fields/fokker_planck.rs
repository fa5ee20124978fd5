//! Explicit conservative Fokker-Planck solver.
//!
//! d rho / dt = -div(b rho) + sum_a D_a d^2_a rho, in flux form with
//! centered face values. Faces on a Dirichlet wall carry zero flux, so the
//! plain node sum of rho is conserved to rounding; periodic faces wrap.

use crate::error::{CoreError, Result};
use crate::grid::{Boundary, GridField, GridSpec};
use crate::kernel::TransitionKernel;
use crate::scalar::Scalar;
use rayon::prelude::*;

pub struct FokkerPlanck<S> {
    pub spec: GridSpec<S>,
    /// Drift velocity at every node, one component field per axis.
    pub drift: Vec<GridField<S>>,
    /// Diffusion constant per axis.
    pub diffusion: Vec<S>,
}

impl<S: Scalar> FokkerPlanck<S> {
    pub fn new(
        spec: GridSpec<S>,
        diffusion: Vec<S>,
        drift_fn: impl Fn(&[S]) -> Vec<S>,
    ) -> Result<Self> {
        let d = spec.dim();
        if diffusion.len() != d {
            return Err(CoreError::usage("one diffusion constant per axis"));
        }
        if diffusion.iter().any(|&v| !(v >= S::zero())) {
            return Err(CoreError::usage("diffusion must be non-negative"));
        }
        let mut drift = vec![GridField::zeros(spec.clone()); d];
        for i in 0..spec.len() {
            let b = drift_fn(&spec.position(i));
            for a in 0..d {
                drift[a].data[i] = b[a];
            }
        }
        Ok(FokkerPlanck {
            spec,
            drift,
            diffusion,
        })
    }

    /// Builds the solver for a kernel's drift (sigma_a^2 / tau) d_a S and
    /// diffusion sigma_a^2 / 2 tau.
    pub fn from_kernel(kernel: &TransitionKernel<'_, S>, spec: GridSpec<S>) -> Result<Self> {
        let d = spec.dim();
        if d != kernel.space.dim() {
            return Err(CoreError::usage("grid and kernel dimension mismatch"));
        }
        let two = S::lit(2.0);
        let diffusion: Vec<S> = (0..d)
            .map(|a| {
                let s = kernel.space.sigma_of_axis(a);
                s * s / (two * kernel.params.tau)
            })
            .collect();
        let mut drift = vec![GridField::zeros(spec.clone()); d];
        for i in 0..spec.len() {
            let b = kernel.forward_drift(&spec.position(i))?;
            for a in 0..d {
                drift[a].data[i] = b[a];
            }
        }
        Ok(FokkerPlanck {
            spec,
            drift,
            diffusion,
        })
    }

    /// Largest explicit step the combined diffusion and advection limits
    /// allow, scaled by `cfl`.
    pub fn max_stable_dt(&self, cfl: S) -> S {
        let d = self.spec.dim();
        let mut diff_rate = S::zero();
        let mut adv_dt = S::infinity();
        for a in 0..d {
            let h = self.spec.spacing(a);
            diff_rate += S::lit(2.0) * self.diffusion[a] / (h * h);
            let bmax = self.drift[a]
                .data
                .iter()
                .map(|v| v.abs())
                .fold(S::zero(), S::max);
            if bmax > S::zero() {
                adv_dt = adv_dt.min(h / bmax);
            }
        }
        let diff_dt = if diff_rate > S::zero() {
            S::one() / diff_rate
        } else {
            S::infinity()
        };
        cfl * diff_dt.min(adv_dt)
    }

    /// One explicit Euler step in flux form. Each cell's update is computed
    /// independently from frozen neighbor data, so the parallel loop is
    /// deterministic; the face flux is evaluated identically on both sides
    /// and the node sum telescopes exactly.
    pub fn step(&self, rho: &mut GridField<S>, dt: S) -> Result<()> {
        if rho.spec.axes != self.spec.axes || rho.spec.boundary != self.spec.boundary {
            return Err(CoreError::usage("density grid does not match the solver"));
        }
        let d = self.spec.dim();
        let periodic = self.spec.boundary == Boundary::Periodic;
        let half = S::lit(0.5);
        let data = &rho.data;
        let mut delta = vec![S::zero(); data.len()];
        let spec = &self.spec;
        delta.par_iter_mut().enumerate().for_each(|(i, out)| {
            let midx = spec.multi_index(i);
            let mut acc = S::zero();
            for a in 0..d {
                let n = spec.axes[a].n;
                let h = spec.spacing(a);
                let db = self.diffusion[a];
                let bfield = &self.drift[a].data;
                // Face flux toward +a between local index j and j+1, where
                // either side may wrap on a periodic axis.
                let flux = |j: usize, jp: usize| -> S {
                    let mut mi = midx.clone();
                    mi[a] = j;
                    let il = spec.flat_index(&mi);
                    mi[a] = jp;
                    let ir = spec.flat_index(&mi);
                    let bface = half * (bfield[il] + bfield[ir]);
                    let rface = half * (data[il] + data[ir]);
                    bface * rface - db * (data[ir] - data[il]) / h
                };
                let j = midx[a];
                let plus = if j + 1 < n {
                    flux(j, j + 1)
                } else if periodic {
                    flux(j, 0)
                } else {
                    S::zero()
                };
                let minus = if j > 0 {
                    flux(j - 1, j)
                } else if periodic {
                    flux(n - 1, j)
                } else {
                    S::zero()
                };
                acc -= (plus - minus) / h;
            }
            *out = acc;
        });
        for (v, dv) in rho.data.iter_mut().zip(&delta) {
            *v += dt * *dv;
            if !v.is_finite() {
                return Err(CoreError::numerical(
                    "density became non-finite during a diffusion step",
                ));
            }
        }
        Ok(())
    }

    /// Advances by `span` using uniform substeps within the stability
    /// limit. Returns (steps taken, step size used).
    pub fn advance(&self, rho: &mut GridField<S>, span: S, cfl: S) -> Result<(u64, S)> {
        if !(span > S::zero()) {
            return Err(CoreError::usage("time span must be positive"));
        }
        let dt_max = self.max_stable_dt(cfl);
        let steps = (span / dt_max).ceil().to_f64_lossy() as u64;
        let steps = steps.max(1);
        let dt = span / S::from_u64(steps).unwrap();
        for _ in 0..steps {
            self.step(rho, dt)?;
        }
        Ok((steps, dt))
    }
}
