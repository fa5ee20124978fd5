//! Crank-Nicolson solver for the linear wave equation
//! i eta d psi/dt = [ - sum_a (eta^2/2m_a) d_a^2 + V ] psi.
//!
//! Each step applies the Cayley transform (I + i dt H / 2 eta)^{-1}
//! (I - i dt H / 2 eta), which is unitary for Hermitian H, so the norm is
//! conserved to rounding at any step size. In more than one dimension the
//! transform is factored per axis (the potential split evenly), which
//! remains exactly unitary and, for separable potentials, also conserves
//! the energy expectation exactly.
//!
//! Dirichlet lines solve a complex tridiagonal system (Thomas algorithm);
//! periodic lines add the corner couplings via one Sherman-Morrison
//! correction.

use super::{ModelParams, WaveFunction};
use crate::error::{CoreError, Result};
use crate::grid::{Boundary, GridSpec};
use crate::scalar::Scalar;
use num_complex::Complex;

pub struct CrankNicolson<S> {
    pub spec: GridSpec<S>,
    /// Potential at every node.
    v: Vec<S>,
    /// Kinetic coefficient -eta^2/2m_a per axis.
    kin: Vec<S>,
    eta: S,
}

impl<S: Scalar> CrankNicolson<S> {
    pub fn new(params: &ModelParams<S>, spec: GridSpec<S>) -> Result<Self> {
        let d = spec.dim();
        if d != params.space.dim() {
            return Err(CoreError::usage("grid and parameter dimension mismatch"));
        }
        let v = (0..spec.len())
            .map(|i| params.potential.value(&spec.position(i)))
            .collect();
        let two = S::lit(2.0);
        let kin = (0..d)
            .map(|a| -params.eta * params.eta / (two * params.mass_of_axis(a)))
            .collect();
        Ok(CrankNicolson {
            spec,
            v,
            kin,
            eta: params.eta,
        })
    }

    /// One Cayley step of size `dt`, factored per axis.
    pub fn step(&self, psi: &mut WaveFunction<S>, dt: S) -> Result<()> {
        if psi.spec.axes != self.spec.axes || psi.spec.boundary != self.spec.boundary {
            return Err(CoreError::usage("wave function grid does not match the solver"));
        }
        let d = self.spec.dim();
        let lambda = dt / (S::lit(2.0) * self.eta);
        let share = S::one() / S::from_usize(d).unwrap();
        let periodic = self.spec.boundary == Boundary::Periodic;
        for a in 0..d {
            self.sweep_axis(psi, a, lambda, share, periodic)?;
        }
        psi.t += dt;
        Ok(())
    }

    fn sweep_axis(
        &self,
        psi: &mut WaveFunction<S>,
        axis: usize,
        lambda: S,
        share: S,
        periodic: bool,
    ) -> Result<()> {
        let h = self.spec.spacing(axis);
        let c = self.kin[axis];
        let coff = c / (h * h);
        // Off-diagonal of (I + i lambda H_a).
        let od_plus = Complex::new(S::zero(), lambda * coff);
        let n = self.spec.axes[axis].n;
        let mut rhs = vec![Complex::new(S::zero(), S::zero()); n];
        let mut diag = vec![Complex::new(S::zero(), S::zero()); n];
        let mut scratch = vec![Complex::new(S::zero(), S::zero()); n];
        let mut scratch2 = vec![Complex::new(S::zero(), S::zero()); n];
        let mut lines: Vec<(usize, usize)> = Vec::new();
        self.spec.for_each_line(axis, |start, stride, _| {
            lines.push((start, stride));
        });
        for (start, stride) in lines {
            let at = |k: usize| start + k * stride;
            // Assemble (I - i lambda H_a) psi and the implicit diagonal.
            for j in 0..n {
                let hjj = -S::lit(2.0) * coff + share * self.v[at(j)];
                let up = if j + 1 < n {
                    psi.data[at(j + 1)]
                } else if periodic {
                    psi.data[at(0)]
                } else {
                    Complex::new(S::zero(), S::zero())
                };
                let dn = if j > 0 {
                    psi.data[at(j - 1)]
                } else if periodic {
                    psi.data[at(n - 1)]
                } else {
                    Complex::new(S::zero(), S::zero())
                };
                let hpsi = (up + dn) * coff + psi.data[at(j)] * hjj;
                rhs[j] = psi.data[at(j)] - Complex::new(S::zero(), lambda) * hpsi;
                diag[j] = Complex::new(S::one(), lambda * hjj);
            }
            if periodic {
                solve_cyclic(&diag, od_plus, &rhs, &mut scratch, &mut scratch2)?;
            } else {
                solve_tridiag(&diag, od_plus, &rhs, &mut scratch)?;
            }
            let solved = if periodic { &scratch2 } else { &scratch };
            for j in 0..n {
                psi.data[at(j)] = solved[j];
            }
        }
        Ok(())
    }

    /// Applies the full H (unsplit potential) to psi.
    pub fn apply_h(&self, psi: &WaveFunction<S>) -> Result<Vec<Complex<S>>> {
        if psi.spec.axes != self.spec.axes {
            return Err(CoreError::usage("wave function grid does not match the solver"));
        }
        let d = self.spec.dim();
        let periodic = self.spec.boundary == Boundary::Periodic;
        let mut out: Vec<Complex<S>> = psi
            .data
            .iter()
            .zip(&self.v)
            .map(|(&p, &v)| p * v)
            .collect();
        for a in 0..d {
            let h = self.spec.spacing(a);
            let coff = self.kin[a] / (h * h);
            let n = self.spec.axes[a].n;
            self.spec.for_each_line(a, |start, stride, _| {
                let at = |k: usize| start + k * stride;
                for j in 0..n {
                    let up = if j + 1 < n {
                        psi.data[at(j + 1)]
                    } else if periodic {
                        psi.data[at(0)]
                    } else {
                        Complex::new(S::zero(), S::zero())
                    };
                    let dn = if j > 0 {
                        psi.data[at(j - 1)]
                    } else if periodic {
                        psi.data[at(n - 1)]
                    } else {
                        Complex::new(S::zero(), S::zero())
                    };
                    out[at(j)] += (up + dn - psi.data[at(j)] * S::lit(2.0)) * coff;
                }
            });
        }
        Ok(out)
    }

    /// Energy expectation Re <psi|H|psi> / <psi|psi>.
    pub fn energy(&self, psi: &WaveFunction<S>) -> Result<S> {
        let hpsi = self.apply_h(psi)?;
        let mut num = Complex::new(S::zero(), S::zero());
        let mut den = S::zero();
        for (p, hp) in psi.data.iter().zip(&hpsi) {
            num += p.conj() * hp;
            den += p.norm_sqr();
        }
        if !(den > S::zero()) {
            return Err(CoreError::numerical("cannot take energy of a null state"));
        }
        Ok(num.re / den)
    }

    /// Advances by `span` using steps no larger than `dt_target`.
    /// Returns (steps, dt).
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

/// Thomas algorithm for a symmetric tridiagonal system with constant
/// off-diagonal `od` and given diagonal. Writes the solution into `x`.
fn solve_tridiag<S: Scalar>(
    diag: &[Complex<S>],
    od: Complex<S>,
    rhs: &[Complex<S>],
    x: &mut [Complex<S>],
) -> Result<()> {
    let n = diag.len();
    let mut cp = vec![Complex::new(S::zero(), S::zero()); n];
    let mut dp = vec![Complex::new(S::zero(), S::zero()); n];
    let mut denom = diag[0];
    if denom.norm_sqr() == S::zero() {
        return Err(CoreError::numerical("singular tridiagonal pivot"));
    }
    cp[0] = od / denom;
    dp[0] = rhs[0] / denom;
    for j in 1..n {
        denom = diag[j] - od * cp[j - 1];
        if denom.norm_sqr() == S::zero() {
            return Err(CoreError::numerical("singular tridiagonal pivot"));
        }
        cp[j] = od / denom;
        dp[j] = (rhs[j] - od * dp[j - 1]) / denom;
    }
    x[n - 1] = dp[n - 1];
    for j in (0..n - 1).rev() {
        x[j] = dp[j] - cp[j] * x[j + 1];
    }
    Ok(())
}

/// Cyclic variant via one Sherman-Morrison rank-one correction; both corner
/// couplings equal `od`. Solution lands in `x`.
fn solve_cyclic<S: Scalar>(
    diag: &[Complex<S>],
    od: Complex<S>,
    rhs: &[Complex<S>],
    work: &mut [Complex<S>],
    x: &mut [Complex<S>],
) -> Result<()> {
    let n = diag.len();
    if n < 3 {
        return Err(CoreError::usage("cyclic solve needs at least three nodes"));
    }
    let gamma = -diag[0];
    let mut dmod = diag.to_vec();
    dmod[0] = diag[0] - gamma;
    dmod[n - 1] = diag[n - 1] - od * od / gamma;
    solve_tridiag(&dmod, od, rhs, x)?;
    let mut u = vec![Complex::new(S::zero(), S::zero()); n];
    u[0] = gamma;
    u[n - 1] = od;
    solve_tridiag(&dmod, od, &u, work)?;
    // v = (1, 0, ..., od/gamma)
    let vy = x[0] + x[n - 1] * od / gamma;
    let vz = Complex::new(S::one(), S::zero()) + work[0] + work[n - 1] * od / gamma;
    if vz.norm_sqr() == S::zero() {
        return Err(CoreError::numerical("singular cyclic correction"));
    }
    let f = vy / vz;
    for j in 0..n {
        x[j] -= f * work[j];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::grid::Axis;
    use crate::manifold::ConfigSpace;

    fn grid1(lo: f64, hi: f64, n: usize, boundary: Boundary) -> GridSpec<f64> {
        GridSpec::new(vec![Axis { lo, hi, n }], boundary).unwrap()
    }

    fn params1(potential: Field<f64>) -> ModelParams<f64> {
        let space = ConfigSpace::single(1, 1.0).unwrap();
        ModelParams::new(space, 1.0, 1.0, 1.0, potential).unwrap()
    }

    fn free_packet_psi(spec: &GridSpec<f64>, s0: f64, k0: f64, x0: f64) -> WaveFunction<f64> {
        let norm = 1.0 / (2.0 * std::f64::consts::PI * s0 * s0).powf(0.25);
        WaveFunction::from_fn(spec.clone(), |x| {
            let d = x[0] - x0;
            Complex::from_polar(norm * (-d * d / (4.0 * s0 * s0)).exp(), k0 * d)
        })
    }

    /// Analytic free Gaussian at time t (eta = m = 1).
    fn free_packet_exact(spec: &GridSpec<f64>, s0: f64, k0: f64, x0: f64, t: f64) -> WaveFunction<f64> {
        let theta = t / (2.0 * s0 * s0);
        let s2t = s0 * s0 * (1.0 + theta * theta);
        let xc = x0 + k0 * t;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * s2t).powf(0.25);
        WaveFunction::from_fn(spec.clone(), |x| {
            let d = x[0] - xc;
            let amp = norm * (-d * d / (4.0 * s2t)).exp();
            let phase = theta * d * d / (4.0 * s0 * s0 * (1.0 + theta * theta)) + k0 * (x[0] - x0)
                - k0 * k0 * t / 2.0
                - 0.5 * theta.atan();
            Complex::from_polar(amp, phase)
        })
    }

    #[test]
    fn free_packet_matches_the_analytic_solution() {
        let spec = grid1(-12.0, 12.0, 768, Boundary::DirichletZero);
        let p = params1(Field::zero());
        let cn = CrankNicolson::new(&p, spec.clone()).unwrap();
        let mut psi = free_packet_psi(&spec, 1.0, 0.5, -0.5);
        psi.normalize().unwrap();
        let t_end = 1.0;
        cn.advance(&mut psi, t_end, 5e-4).unwrap();
        let mut exact = free_packet_exact(&spec, 1.0, 0.5, -0.5, t_end);
        exact.normalize().unwrap();
        let fid = psi.fidelity(&exact).unwrap();
        assert!(fid > 1.0 - 1e-6, "fidelity {fid}");
        let rho = psi.density();
        let rho_ref = exact.density();
        let peak = rho_ref.max_value();
        for i in 0..spec.len() {
            let d = (rho.data[i] - rho_ref.data[i]).abs() / peak;
            assert!(d < 5e-4, "cell {i}: density err {d:e}");
        }
    }

    #[test]
    fn norm_is_conserved_to_rounding() {
        let spec = grid1(-10.0, 10.0, 300, Boundary::DirichletZero);
        let p = params1(Field::Quadratic {
            offset: 0.0,
            coeff: vec![0.5],
            center: vec![0.0],
        });
        let cn = CrankNicolson::new(&p, spec.clone()).unwrap();
        let mut psi = free_packet_psi(&spec, 0.8, 1.0, 0.5);
        psi.normalize().unwrap();
        for _ in 0..1000 {
            cn.step(&mut psi, 1e-3).unwrap();
        }
        assert!(
            (psi.norm_sq() - 1.0).abs() < 1e-12,
            "norm drifted to {}",
            psi.norm_sq()
        );
    }

    #[test]
    fn energy_is_conserved_to_rounding() {
        let spec = grid1(-10.0, 10.0, 300, Boundary::DirichletZero);
        let p = params1(Field::Quadratic {
            offset: 0.0,
            coeff: vec![0.5],
            center: vec![0.0],
        });
        let cn = CrankNicolson::new(&p, spec.clone()).unwrap();
        let mut psi = free_packet_psi(&spec, 0.8, 0.0, 1.0);
        psi.normalize().unwrap();
        let e0 = cn.energy(&psi).unwrap();
        cn.advance(&mut psi, 3.0, 1e-3).unwrap();
        let e1 = cn.energy(&psi).unwrap();
        assert!(
            ((e1 - e0) / e0).abs() < 1e-12,
            "energy drifted {e0} -> {e1}"
        );
    }

    #[test]
    fn harmonic_ground_state_density_is_static() {
        let spec = grid1(-9.0, 9.0, 384, Boundary::DirichletZero);
        let p = params1(Field::Quadratic {
            offset: 0.0,
            coeff: vec![0.5],
            center: vec![0.0],
        });
        let cn = CrankNicolson::new(&p, spec.clone()).unwrap();
        let mut psi = WaveFunction::from_fn(spec.clone(), |x| {
            Complex::new((-x[0] * x[0] / 2.0).exp(), 0.0)
        });
        psi.normalize().unwrap();
        let rho0 = psi.density();
        cn.advance(&mut psi, 1.0, 1e-3).unwrap();
        let rho1 = psi.density();
        let peak = rho0.max_value();
        for i in 0..spec.len() {
            let d = (rho1.data[i] - rho0.data[i]).abs() / peak;
            assert!(d < 1e-4, "cell {i} moved by {d:e}");
        }
        // Eigenstate phase: psi(t) = psi(0) exp(-i E t) with E near 1/2.
        let mid = spec.nearest_node(&[0.0]);
        let phase = -(psi.data[mid].im.atan2(psi.data[mid].re));
        assert!((phase - 0.5).abs() < 1e-3, "eigenphase rate {phase}");
    }

    #[test]
    fn periodic_plane_wave_is_an_exact_discrete_eigenstate() {
        let n = 128;
        let length = 8.0;
        let spec = grid1(0.0, length, n, Boundary::Periodic);
        let p = params1(Field::zero());
        let cn = CrankNicolson::new(&p, spec.clone()).unwrap();
        let k = 2.0 * std::f64::consts::PI * 5.0 / length;
        let mut psi = WaveFunction::from_fn(spec.clone(), |x| Complex::from_polar(1.0, k * x[0]));
        psi.normalize().unwrap();
        let psi0 = psi.clone();
        let h = spec.spacing(0);
        // Discrete dispersion of the three-point Laplacian.
        let e_disc = (2.0 - 2.0 * (k * h).cos()) / (2.0 * h * h);
        let dt = 2e-3;
        let steps = 500;
        for _ in 0..steps {
            cn.step(&mut psi, dt).unwrap();
        }
        // Cayley phase per step: -2 atan(lambda E) with lambda = dt/2 eta.
        let per_step = -2.0 * (dt / 2.0 * e_disc).atan();
        let rot = Complex::from_polar(1.0, per_step * steps as f64);
        for i in 0..n {
            let want = psi0.data[i] * rot;
            let got = psi.data[i];
            assert!(
                (got - want).norm() < 1e-10,
                "cell {i}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn two_axis_packet_spreads_per_axis_mass() {
        // Different sigma per particle: masses differ, spreading differs.
        let space: ConfigSpace<f64> = ConfigSpace::new(1, 2, vec![1.0, 1.6]).unwrap();
        let p = ModelParams::new(space, 1.0, 1.0, 1.0, Field::zero()).unwrap();
        let spec = GridSpec::new(
            vec![
                Axis { lo: -10.0, hi: 10.0, n: 160 },
                Axis { lo: -13.0, hi: 13.0, n: 208 },
            ],
            Boundary::DirichletZero,
        )
        .unwrap();
        let cn = CrankNicolson::new(&p, spec.clone()).unwrap();
        let s0 = 1.0;
        let mut psi = WaveFunction::from_fn(spec.clone(), |x| {
            Complex::new(
                (-(x[0] * x[0] + x[1] * x[1]) / (4.0 * s0 * s0)).exp(),
                0.0,
            )
        });
        psi.normalize().unwrap();
        let t = 1.0;
        cn.advance(&mut psi, t, 2e-3).unwrap();
        let (_, _, var) = psi.density().moments();
        for a in 0..2 {
            let m = p.mass_of_axis(a);
            let theta = t / (2.0 * m * s0 * s0);
            let expect = s0 * s0 * (1.0 + theta * theta);
            assert!(
                (var[a] - expect).abs() < 2e-3,
                "axis {a}: var {} vs {expect}",
                var[a]
            );
        }
    }

    #[test]
    fn tridiag_and_cyclic_solvers_invert_their_matrices() {
        let n = 12;
        let diag: Vec<Complex<f64>> = (0..n)
            .map(|j| Complex::new(2.5 + 0.1 * j as f64, 0.3))
            .collect();
        let od = Complex::new(0.4, -0.2);
        let rhs: Vec<Complex<f64>> = (0..n)
            .map(|j| Complex::new((j as f64).sin(), (j as f64 * 0.7).cos()))
            .collect();
        let mut x = vec![Complex::new(0.0, 0.0); n];
        solve_tridiag(&diag, od, &rhs, &mut x).unwrap();
        for j in 0..n {
            let mut v = diag[j] * x[j];
            if j > 0 {
                v += od * x[j - 1];
            }
            if j + 1 < n {
                v += od * x[j + 1];
            }
            assert!((v - rhs[j]).norm() < 1e-12, "row {j}");
        }
        let mut work = vec![Complex::new(0.0, 0.0); n];
        let mut xc = vec![Complex::new(0.0, 0.0); n];
        solve_cyclic(&diag, od, &rhs, &mut work, &mut xc).unwrap();
        for j in 0..n {
            let mut v = diag[j] * xc[j];
            v += od * xc[(j + n - 1) % n];
            v += od * xc[(j + 1) % n];
            assert!((v - rhs[j]).norm() < 1e-12, "cyclic row {j}");
        }
    }
}
