//! Classical-limit diagnostics.
//!
//! Along a solution of the coupled field equations, the action J = eta phi
//! satisfies the classical Hamilton-Jacobi equation up to exactly the
//! quantum-potential term, whose prefactor mu eta^2 / 2m^2 is quadratic in
//! eta. Shrinking eta at fixed masses must therefore shrink the HJ
//! residual with slope two on a log-log plot, and packet centers must
//! approach classical trajectories.

use super::madelung::Madelung;
use super::{FieldState, ModelParams};
use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::grid::{Boundary, GridField, GridSpec};
use crate::manifold::ConfigSpace;
use crate::scalar::Scalar;

/// rho-weighted L2 norm of the Hamilton-Jacobi residual
/// R = eta dphi/dt + sum_a (eta^2/2m_a)(d_a phi)^2 + V,
/// with the time derivative taken centrally between `prev` and `next`
/// and all fields evaluated on `mid`. Cells below the density floor are
/// excluded.
pub fn hj_residual_norm<S: Scalar>(
    prev: &FieldState<S>,
    mid: &FieldState<S>,
    next: &FieldState<S>,
    params: &ModelParams<S>,
) -> Result<S> {
    let spec = &mid.rho.spec;
    if prev.rho.spec.axes != spec.axes || next.rho.spec.axes != spec.axes {
        return Err(CoreError::usage("states live on different grids"));
    }
    let dt2 = next.t - prev.t;
    if !(dt2 > S::zero()) {
        return Err(CoreError::usage("states must be time ordered"));
    }
    let d = spec.dim();
    let periodic = spec.boundary == Boundary::Periodic;
    let two = S::lit(2.0);
    let mut grads = Vec::with_capacity(d);
    for a in 0..d {
        grads.push(if periodic {
            mid.phi.derivative_phase(a)
        } else {
            mid.phi.derivative(a)
        });
    }
    let mut weighted = GridField::zeros(spec.clone());
    for i in 0..spec.len() {
        let rho = mid.rho.data[i];
        if rho < params.rho_floor {
            continue;
        }
        let x = spec.position(i);
        let mut r = params.eta * (next.phi.data[i] - prev.phi.data[i]) / dt2
            + params.potential.value(&x);
        for a in 0..d {
            let m = params.mass_of_axis(a);
            let g = grads[a].data[i];
            r += params.eta * params.eta / (two * m) * g * g;
        }
        weighted.data[i] = rho * r * r;
    }
    Ok(weighted.integrate().sqrt())
}

/// One point of the eta-scaling study.
#[derive(Debug, Clone, Copy)]
pub struct ScalingPoint<S> {
    pub eta: S,
    pub residual: S,
}

/// Least-squares slope of ln(residual) against ln(eta).
pub fn fit_loglog_slope<S: Scalar>(points: &[ScalingPoint<S>]) -> Result<S> {
    if points.len() < 2 {
        return Err(CoreError::usage("need at least two scaling points"));
    }
    let n = S::from_usize(points.len()).unwrap();
    let xs: Vec<S> = points.iter().map(|p| p.eta.ln()).collect();
    let ys: Vec<S> = points.iter().map(|p| p.residual.ln()).collect();
    let xm = xs.iter().copied().sum::<S>() / n;
    let ym = ys.iter().copied().sum::<S>() / n;
    let mut num = S::zero();
    let mut den = S::zero();
    for (x, y) in xs.iter().zip(&ys) {
        num += (*x - xm) * (*y - ym);
        den += (*x - xm) * (*x - xm);
    }
    if !(den > S::zero()) {
        return Err(CoreError::usage("scaling points share one eta"));
    }
    Ok(num / den)
}

/// Runs the coupled solver from (rho0, phi = 0) for each eta, measuring the
/// HJ residual at `t_probe` by central differencing adjacent solver states.
/// The masses are held fixed by scaling tau with 1/eta, so only the
/// quantum term's prefactor changes.
pub fn classical_limit_scaling<S: Scalar>(
    space: &ConfigSpace<S>,
    potential: &Field<S>,
    mu_over_m: S,
    spec: &GridSpec<S>,
    rho0: &GridField<S>,
    etas: &[S],
    t_probe: S,
) -> Result<Vec<ScalingPoint<S>>> {
    if etas.is_empty() {
        return Err(CoreError::usage("need at least one eta"));
    }
    let mut out = Vec::with_capacity(etas.len());
    for &eta in etas {
        // tau = m sigma^2 / eta keeps every mass at its eta-independent value.
        let sigma0 = space.sigma_of_axis(0);
        let tau = sigma0 * sigma0 / eta;
        let params = ModelParams::new(space.clone(), eta, tau, mu_over_m, potential.clone())?;
        let solver = Madelung::new(&params, spec.clone())?;
        let mut state = FieldState::new(rho0.clone(), GridField::zeros(spec.clone()), S::zero())?;
        state.normalize_mass()?;
        let dt = solver.max_stable_dt(params.cfl);
        let steps = ((t_probe / dt).ceil().to_f64_lossy() as u64).max(2);
        let dt = t_probe / S::from_u64(steps).unwrap();
        for _ in 0..steps - 1 {
            solver.step(&mut state, dt)?;
        }
        let prev = state.clone();
        solver.step(&mut state, dt)?;
        let mid = state.clone();
        solver.step(&mut state, dt)?;
        let residual = hj_residual_norm(&prev, &mid, &state, &params)?;
        out.push(ScalingPoint { eta, residual });
    }
    Ok(out)
}

/// Classical point trajectory x'' = -grad V / m by RK4.
pub fn classical_trajectory<S: Scalar>(
    potential: &Field<S>,
    mass: S,
    x0: &[S],
    v0: &[S],
    dt: S,
    steps: u64,
) -> Vec<Vec<S>> {
    let d = x0.len();
    let acc = |x: &[S]| -> Vec<S> {
        potential
            .gradient(x)
            .iter()
            .map(|&g| -g / mass)
            .collect()
    };
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut path = Vec::with_capacity(steps as usize + 1);
    path.push(x.clone());
    let half = S::lit(0.5);
    let sixth = S::lit(1.0 / 6.0);
    let two = S::lit(2.0);
    for _ in 0..steps {
        let a1 = acc(&x);
        let x2: Vec<S> = (0..d).map(|k| x[k] + half * dt * v[k]).collect();
        let v2: Vec<S> = (0..d).map(|k| v[k] + half * dt * a1[k]).collect();
        let a2 = acc(&x2);
        let x3: Vec<S> = (0..d).map(|k| x[k] + half * dt * v2[k]).collect();
        let v3: Vec<S> = (0..d).map(|k| v[k] + half * dt * a2[k]).collect();
        let a3 = acc(&x3);
        let x4: Vec<S> = (0..d).map(|k| x[k] + dt * v3[k]).collect();
        let v4: Vec<S> = (0..d).map(|k| v[k] + dt * a3[k]).collect();
        let a4 = acc(&x4);
        for k in 0..d {
            x[k] += dt * sixth * (v[k] + two * v2[k] + two * v3[k] + v4[k]);
            v[k] += dt * sixth * (a1[k] + two * a2[k] + two * a3[k] + a4[k]);
        }
        path.push(x.clone());
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn grid1(lo: f64, hi: f64, n: usize) -> GridSpec<f64> {
        GridSpec::new(vec![Axis { lo, hi, n }], Boundary::DirichletZero).unwrap()
    }

    fn gaussian(spec: &GridSpec<f64>, c: f64, s: f64) -> GridField<f64> {
        GridField::from_fn(spec.clone(), |x| {
            (-(x[0] - c) * (x[0] - c) / (2.0 * s * s)).exp()
                / (s * (2.0 * std::f64::consts::PI).sqrt())
        })
    }

    #[test]
    fn slope_fit_recovers_a_pure_power_law() {
        let points: Vec<ScalingPoint<f64>> = [1.0, 0.5, 0.25]
            .iter()
            .map(|&e: &f64| ScalingPoint {
                eta: e,
                residual: 0.7 * e.powi(2),
            })
            .collect();
        let slope = fit_loglog_slope(&points).unwrap();
        assert!((slope - 2.0).abs() < 1e-12, "{slope}");
    }

    #[test]
    fn residual_norm_matches_the_harmonic_closed_form() {
        // Analytic ground-state trajectory: phi(t) = -t/2, rho static.
        // R = (x^2 - 1)/2, and its rho-weighted norm is sqrt(3)/4 ~ 0.4330.
        let spec = grid1(-9.0, 9.0, 600);
        let space = ConfigSpace::single(1, 1.0).unwrap();
        let potential = Field::Quadratic {
            offset: 0.0,
            coeff: vec![0.5],
            center: vec![0.0],
        };
        let params =
            ModelParams::new(space, 1.0, 1.0, 1.0, potential).unwrap();
        let rho = gaussian(&spec, 0.0, 0.5f64.sqrt());
        let state_at = |t: f64| FieldState {
            rho: rho.clone(),
            phi: GridField::from_fn(spec.clone(), |_| -t / 2.0),
            t,
        };
        let dt = 1e-3;
        let r = hj_residual_norm(&state_at(-dt), &state_at(0.0), &state_at(dt), &params).unwrap();
        let expect = 3.0f64.sqrt() / 4.0;
        assert!((r - expect).abs() < 1e-4, "residual {r} vs {expect}");
    }

    #[test]
    fn residual_scales_as_eta_squared() {
        let spec = grid1(-10.0, 10.0, 320);
        let space = ConfigSpace::single(1, 1.0).unwrap();
        let rho0 = gaussian(&spec, 0.0, 1.0);
        let etas = [1.0, 0.5, 0.25, 0.125];
        let points = classical_limit_scaling(
            &space,
            &Field::zero(),
            1.0,
            &spec,
            &rho0,
            &etas,
            0.02,
        )
        .unwrap();
        let slope = fit_loglog_slope(&points).unwrap();
        assert!((slope - 2.0).abs() < 0.02, "slope {slope}");
        // Early-time closed form: residual = eta^2 sqrt(3) / 8 for s0 = 1.
        let expect = 3.0f64.sqrt() / 8.0;
        let got = points[0].residual;
        assert!(
            ((got - expect) / expect).abs() < 0.02,
            "residual {got} vs {expect}"
        );
    }

    #[test]
    fn packet_centers_approach_the_classical_path_as_eta_shrinks() {
        // Quartic well V = x^4/4 (not Ehrenfest-exact), packet width scaled
        // with sqrt(eta) as in a coherent-state limit.
        let spec = grid1(-2.2, 2.2, 440);
        let space = ConfigSpace::single(1, 1.0).unwrap();
        let quartic = Field::Grid {
            values: GridField::from_fn(spec.clone(), |x| x[0] * x[0] * x[0] * x[0] / 4.0),
        };
        let t_end = 1.0;
        let mut errs = Vec::new();
        for &eta in &[1.0, 0.5, 0.25] {
            let tau = 1.0 / eta;
            let params = ModelParams::new(
                space.clone(),
                eta,
                tau,
                1.0,
                quartic.clone(),
            )
            .unwrap();
            let solver = Madelung::new(&params, spec.clone()).unwrap();
            let s0 = 0.3 * eta.sqrt();
            let rho0 = gaussian(&spec, 1.0, s0);
            let mut state =
                FieldState::new(rho0, GridField::zeros(spec.clone()), 0.0).unwrap();
            state.normalize_mass().unwrap();
            let dt = solver.max_stable_dt(0.25);
            let steps = ((t_end / dt).ceil() as u64).max(1);
            let dt = t_end / steps as f64;
            let classical = classical_trajectory(&quartic, 1.0, &[1.0], &[0.0], dt, steps);
            let mut worst = 0.0f64;
            for k in 0..steps {
                solver.step(&mut state, dt).unwrap();
                let (_, mean, _) = state.rho.moments();
                let err = (mean[0] - classical[k as usize + 1][0]).abs();
                worst = worst.max(err);
            }
            errs.push(worst);
        }
        assert!(errs[0] < 0.05, "eta = 1 center error {} too large", errs[0]);
        assert!(
            errs[2] < 0.5 * errs[0],
            "center error did not shrink: {errs:?}"
        );
        assert!(errs[1] < 1.2 * errs[0], "non-monotone blowup: {errs:?}");
    }
}
