//! Canned simulation setups, their closed-form references, and observable
//! extraction shared by the test suite and the executable.
//!
//! A [`Scenario`] is pure data: plain `f64` fields, JSON-serializable, no
//! behaviour beyond validation. The typed accessors build the generic engine
//! objects on demand, so one manifest drives f32 and f64 runs alike, and
//! reloading a serialized manifest reproduces the identical run.

use crate::ensemble::DensitySpec;
use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::fields::{FieldState, ModelParams, WaveFunction};
use crate::fields::schrodinger::CrankNicolson;
use crate::grid::{GridField, GridSpec};
use crate::manifold::{ConfigSpace, ConformalFactor};
use crate::scalar::Scalar;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Product-Gaussian initial packet with a plane-wave phase factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialPacket {
    pub center: Vec<f64>,
    pub width: Vec<f64>,
    pub wavevector: Vec<f64>,
}

/// Which closed-form reference tracks a scenario, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// Spreading Gaussian, valid for zero potential and unit mass ratio.
    FreePacket,
    /// Stationary ground state of a quadratic well.
    HarmonicGround,
    /// Rigidly oscillating displaced ground state of a quadratic well.
    HarmonicCoherent,
    /// No closed form shipped.
    None,
}

/// A fully pinned simulation setup. Everything a run needs is in here;
/// the executable adds only mode, seed overrides, and output paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    /// Spatial dimension d of one particle.
    pub spatial_dim: usize,
    pub particles: usize,
    /// Per-particle microstate length scale; axis a uses sigma[a / d].
    pub sigma: Vec<f64>,
    pub eta: f64,
    pub tau: f64,
    /// Osmotic-to-inertial mass ratio; 1 is the linear regime.
    pub mu_over_m: f64,
    pub conformal: Field<f64>,
    pub potential: Field<f64>,
    pub grid: GridSpec<f64>,
    pub initial: InitialPacket,
    /// Horizon T.
    pub t_end: f64,
    /// Times at which observables are recorded; always includes 0 and T.
    pub sample_times: Vec<f64>,
    /// Pinned solver/walker time step. `None` lets the driver pick a stable one.
    pub dt: Option<f64>,
    pub walkers: usize,
    pub seed: u64,
    /// Kernel-density bandwidth for empirical densities (None: histogram).
    pub kde_bandwidth: Option<f64>,
    pub reference: Reference,
}

impl Scenario {
    /// Configuration-space dimension d * N.
    pub fn dim(&self) -> usize {
        self.spatial_dim * self.particles
    }

    /// Inertial mass of the particle owning axis `a`: eta * tau / sigma^2.
    pub fn mass_of_axis(&self, a: usize) -> f64 {
        let s = self.sigma[a / self.spatial_dim.max(1)];
        self.eta * self.tau / (s * s)
    }

    /// Collects every schema violation instead of stopping at the first.
    pub fn check(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut complain = |c: bool, msg: String| {
            if c {
                bad.push(msg);
            }
        };
        complain(self.name.is_empty(), "name: must be non-empty".into());
        complain(
            !(1..=3).contains(&self.spatial_dim),
            format!("spatial_dim: must be 1..=3, got {}", self.spatial_dim),
        );
        complain(self.particles == 0, "particles: must be at least 1".into());
        complain(
            self.sigma.len() != self.particles,
            format!(
                "sigma: expected {} entries, got {}",
                self.particles,
                self.sigma.len()
            ),
        );
        for (i, &s) in self.sigma.iter().enumerate() {
            complain(
                !(s > 0.0) || !s.is_finite(),
                format!("sigma[{i}]: must be positive and finite, got {s}"),
            );
        }
        complain(
            !(self.eta > 0.0) || !self.eta.is_finite(),
            format!("eta: must be positive and finite, got {}", self.eta),
        );
        complain(
            !(self.tau > 0.0) || !self.tau.is_finite(),
            format!("tau: must be positive and finite, got {}", self.tau),
        );
        complain(
            !(self.mu_over_m > 0.0) || !self.mu_over_m.is_finite(),
            format!("mu_over_m: must be positive and finite, got {}", self.mu_over_m),
        );
        let dim = self.dim();
        complain(
            self.grid.axes.len() != dim,
            format!(
                "grid: expected {} axes for {} particle(s) in {}D, got {}",
                dim,
                self.particles,
                self.spatial_dim,
                self.grid.axes.len()
            ),
        );
        if let Err(e) = GridSpec::new(self.grid.axes.clone(), self.grid.boundary) {
            complain(true, format!("grid: {e}"));
        }
        for (label, v) in [
            ("initial.center", &self.initial.center),
            ("initial.width", &self.initial.width),
            ("initial.wavevector", &self.initial.wavevector),
        ] {
            complain(
                v.len() != dim,
                format!("{label}: expected {dim} entries, got {}", v.len()),
            );
        }
        for (i, &w) in self.initial.width.iter().enumerate() {
            complain(
                !(w > 0.0) || !w.is_finite(),
                format!("initial.width[{i}]: must be positive and finite, got {w}"),
            );
        }
        complain(
            !(self.t_end > 0.0) || !self.t_end.is_finite(),
            format!("t_end: must be positive and finite, got {}", self.t_end),
        );
        complain(self.sample_times.is_empty(), "sample_times: must be non-empty".into());
        let sorted = self
            .sample_times
            .windows(2)
            .all(|w| w[0] < w[1]);
        complain(!sorted, "sample_times: must be strictly increasing".into());
        if let (Some(&first), Some(&last)) = (self.sample_times.first(), self.sample_times.last()) {
            complain(
                first < 0.0 || last > self.t_end + 1e-12 * self.t_end.abs(),
                "sample_times: must lie within [0, t_end]".into(),
            );
        }
        if let Some(dt) = self.dt {
            complain(
                !(dt > 0.0) || !dt.is_finite(),
                format!("dt: must be positive and finite, got {dt}"),
            );
        }
        complain(self.walkers == 0, "walkers: must be at least 1".into());
        if let Some(b) = self.kde_bandwidth {
            complain(
                !(b > 0.0) || !b.is_finite(),
                format!("kde_bandwidth: must be positive and finite, got {b}"),
            );
        }
        bad
    }

    /// `check` folded into a single error listing every violation.
    pub fn validate(&self) -> Result<()> {
        let bad = self.check();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CoreError::Config { violations: bad })
        }
    }

    pub fn config_space<S: Scalar>(&self) -> Result<ConfigSpace<S>> {
        ConfigSpace::new(
            self.spatial_dim,
            self.particles,
            self.sigma.iter().map(|&s| S::lit(s)).collect(),
        )
    }

    pub fn grid_spec<S: Scalar>(&self) -> Result<GridSpec<S>> {
        let cast = self.grid.cast::<S>();
        GridSpec::new(cast.axes, cast.boundary)
    }

    pub fn model_params<S: Scalar>(&self) -> Result<ModelParams<S>> {
        ModelParams::new(
            self.config_space()?,
            S::lit(self.eta),
            S::lit(self.tau),
            S::lit(self.mu_over_m),
            self.potential.cast(),
        )
    }

    pub fn conformal_factor<S: Scalar>(&self) -> ConformalFactor<S> {
        ConformalFactor::new(self.conformal.cast())
    }

    /// Walker initial distribution matching the field initial condition.
    pub fn density_spec<S: Scalar>(&self) -> DensitySpec<S> {
        DensitySpec::GaussianProduct {
            mean: self.initial.center.iter().map(|&v| S::lit(v)).collect(),
            std: self.initial.width.iter().map(|&v| S::lit(v)).collect(),
        }
    }

    /// Pinned step if given, else a conservative default off the horizon.
    pub fn dt_or_default(&self) -> f64 {
        self.dt.unwrap_or(self.t_end / 1000.0)
    }

    /// Initial (rho, phi) on the scenario grid, mass-normalized.
    pub fn initial_state<S: Scalar>(&self) -> Result<FieldState<S>> {
        self.validate()?;
        let (rho64, phi64) = self.initial_fields_f64()?;
        let mut state = FieldState::new(rho64.cast::<S>(), phi64.cast::<S>(), S::zero())?;
        state.normalize_mass()?;
        Ok(state)
    }

    /// Initial wave function sqrt(rho) e^{i phi}, unit norm.
    pub fn initial_wavefunction<S: Scalar>(&self) -> Result<WaveFunction<S>> {
        self.validate()?;
        let (rho64, phi64) = self.initial_fields_f64()?;
        let spec = self.grid_spec::<S>()?;
        let mut psi = WaveFunction {
            spec,
            data: rho64
                .data
                .iter()
                .zip(&phi64.data)
                .map(|(&r, &p)| {
                    Complex::from_polar(S::lit(r).sqrt(), S::lit(p))
                })
                .collect(),
            t: S::zero(),
        };
        psi.normalize()?;
        Ok(psi)
    }

    fn initial_fields_f64(&self) -> Result<(GridField<f64>, GridField<f64>)> {
        let spec = GridSpec::<f64>::new(self.grid.axes.clone(), self.grid.boundary)?;
        let c = &self.initial.center;
        let w = &self.initial.width;
        let k = &self.initial.wavevector;
        let rho = GridField::from_fn(spec.clone(), |x| {
            let mut v = 1.0;
            for a in 0..x.len() {
                let d = x[a] - c[a];
                let s2 = w[a] * w[a];
                v *= (-d * d / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
            }
            v
        });
        let phi = GridField::from_fn(spec, |x| {
            x.iter().zip(k).map(|(&xi, &ki)| ki * xi).sum()
        });
        Ok((rho, phi))
    }

    /// The named shipped scenario, if any.
    pub fn by_name(name: &str) -> Option<Scenario> {
        builtin().into_iter().find(|s| s.name == name)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// The shipped scenarios; the smallest set exercising every operation.
pub fn builtin() -> Vec<Scenario> {
    let unit_conformal = Field::Constant { value: 1.0 };
    let root_half = 0.5f64.sqrt();
    let two_pi = 2.0 * std::f64::consts::PI;
    vec![
        Scenario {
            name: "free-packet-1d".into(),
            description: "Spreading Gaussian packet, zero potential, unit mass ratio; \
                          the closed-form width and center laws apply."
                .into(),
            spatial_dim: 1,
            particles: 1,
            sigma: vec![1.0],
            eta: 1.0,
            tau: 1.0,
            mu_over_m: 1.0,
            conformal: unit_conformal.clone(),
            potential: Field::zero(),
            grid: GridSpec::line(-11.0, 11.0, 1024, crate::grid::Boundary::DirichletZero)
                .unwrap(),
            initial: InitialPacket {
                center: vec![-0.5],
                width: vec![1.0],
                wavevector: vec![0.5],
            },
            t_end: 2.0,
            sample_times: linspace(0.0, 2.0, 9),
            dt: Some(1.0e-4),
            walkers: 100_000,
            seed: 101,
            kde_bandwidth: None,
            reference: Reference::FreePacket,
        },
        Scenario {
            name: "harmonic-ground-1d".into(),
            description: "Ground state of a unit-frequency quadratic well; density \
                          must stay put for a full period."
                .into(),
            spatial_dim: 1,
            particles: 1,
            sigma: vec![1.0],
            eta: 1.0,
            tau: 1.0,
            mu_over_m: 1.0,
            conformal: unit_conformal.clone(),
            potential: Field::Quadratic {
                offset: 0.0,
                coeff: vec![0.5],
                center: vec![0.0],
            },
            grid: GridSpec::line(-8.0, 8.0, 512, crate::grid::Boundary::DirichletZero)
                .unwrap(),
            initial: InitialPacket {
                center: vec![0.0],
                width: vec![root_half],
                wavevector: vec![0.0],
            },
            t_end: two_pi,
            sample_times: linspace(0.0, two_pi, 9),
            dt: Some(2.0e-4),
            walkers: 100_000,
            seed: 102,
            kde_bandwidth: None,
            reference: Reference::HarmonicGround,
        },
        Scenario {
            name: "harmonic-coherent-1d".into(),
            description: "Displaced ground state oscillating rigidly for three periods; \
                          center follows x0 cos(w t) with constant width."
                .into(),
            spatial_dim: 1,
            particles: 1,
            sigma: vec![1.0],
            eta: 1.0,
            tau: 1.0,
            mu_over_m: 1.0,
            conformal: unit_conformal.clone(),
            potential: Field::Quadratic {
                offset: 0.0,
                coeff: vec![0.5],
                center: vec![0.0],
            },
            grid: GridSpec::line(-8.0, 8.0, 512, crate::grid::Boundary::DirichletZero)
                .unwrap(),
            initial: InitialPacket {
                center: vec![1.5],
                width: vec![root_half],
                wavevector: vec![0.0],
            },
            t_end: 3.0 * two_pi,
            sample_times: linspace(0.0, 3.0 * two_pi, 25),
            dt: Some(2.0e-4),
            walkers: 100_000,
            seed: 103,
            kde_bandwidth: None,
            reference: Reference::HarmonicCoherent,
        },
        Scenario {
            name: "diffusion-only-1d".into(),
            description: "Constant conformal factor, zero drift: pure diffusion at \
                          coefficient sigma^2/2tau; variance grows linearly."
                .into(),
            spatial_dim: 1,
            particles: 1,
            sigma: vec![1.0],
            eta: 1.0,
            tau: 1.0,
            mu_over_m: 1.0,
            conformal: unit_conformal.clone(),
            potential: Field::zero(),
            grid: GridSpec::line(-12.0, 12.0, 256, crate::grid::Boundary::DirichletZero)
                .unwrap(),
            initial: InitialPacket {
                center: vec![0.0],
                width: vec![1.0],
                wavevector: vec![0.0],
            },
            t_end: 1.0,
            sample_times: linspace(0.0, 1.0, 11),
            dt: Some(1.0e-3),
            walkers: 200_000,
            seed: 104,
            kde_bandwidth: Some(0.1),
            reference: Reference::None,
        },
        Scenario {
            name: "phi-gradient-1d".into(),
            description: "Exponential conformal factor e^{x/2} producing a constant \
                          entropic drift of -1/4; exercises kernel-driven transport."
                .into(),
            spatial_dim: 1,
            particles: 1,
            sigma: vec![1.0],
            eta: 1.0,
            tau: 1.0,
            mu_over_m: 1.0,
            conformal: Field::Exp {
                scale: 1.0,
                rate: vec![0.5],
            },
            potential: Field::zero(),
            grid: GridSpec::line(-8.0, 8.0, 256, crate::grid::Boundary::DirichletZero)
                .unwrap(),
            initial: InitialPacket {
                center: vec![0.0],
                width: vec![1.0],
                wavevector: vec![0.0],
            },
            t_end: 1.0,
            sample_times: linspace(0.0, 1.0, 11),
            dt: Some(5.0e-4),
            walkers: 100_000,
            seed: 105,
            kde_bandwidth: Some(0.1),
            reference: Reference::None,
        },
        Scenario {
            name: "nonlinear-mu-2m-1d".into(),
            description: "Free packet with osmotic mass twice the inertial mass; the \
                          extra term accelerates spreading, so the linear closed form \
                          is a deliberate mismatch."
                .into(),
            spatial_dim: 1,
            particles: 1,
            sigma: vec![1.0],
            eta: 1.0,
            tau: 1.0,
            mu_over_m: 2.0,
            conformal: unit_conformal.clone(),
            potential: Field::zero(),
            grid: GridSpec::line(-14.0, 14.0, 1024, crate::grid::Boundary::DirichletZero)
                .unwrap(),
            initial: InitialPacket {
                center: vec![0.0],
                width: vec![1.0],
                wavevector: vec![0.0],
            },
            t_end: 1.0,
            sample_times: linspace(0.0, 1.0, 11),
            dt: Some(5.0e-5),
            walkers: 100_000,
            seed: 106,
            kde_bandwidth: None,
            reference: Reference::FreePacket,
        },
        Scenario {
            name: "two-particle-1d".into(),
            description: "Two non-interacting particles with unequal microstate \
                          scales on a 2D configuration grid; per-axis masses differ."
                .into(),
            spatial_dim: 1,
            particles: 2,
            sigma: vec![1.0, 1.6],
            eta: 1.0,
            tau: 1.0,
            mu_over_m: 1.0,
            conformal: unit_conformal,
            potential: Field::zero(),
            grid: GridSpec::new(
                vec![
                    crate::grid::Axis {
                        lo: -10.0,
                        hi: 10.0,
                        n: 128,
                    },
                    crate::grid::Axis {
                        lo: -10.0,
                        hi: 10.0,
                        n: 128,
                    },
                ],
                crate::grid::Boundary::DirichletZero,
            )
            .unwrap(),
            initial: InitialPacket {
                center: vec![-1.0, 1.0],
                width: vec![0.8, 1.0],
                wavevector: vec![0.3, -0.2],
            },
            t_end: 1.0,
            sample_times: linspace(0.0, 1.0, 11),
            dt: Some(5.0e-4),
            walkers: 200_000,
            seed: 107,
            kde_bandwidth: None,
            reference: Reference::FreePacket,
        },
    ]
}

/// Closed-form spreading Gaussian for zero potential and unit mass ratio:
/// per-axis width^2(t) = s0^2 (1 + (eta t / 2 m s0^2)^2), center moving at
/// eta k0 / m. Returns (rho, phase) on the scenario grid.
pub fn analytic_free_packet<S: Scalar>(
    scn: &Scenario,
    t: f64,
) -> Result<(GridField<S>, GridField<S>)> {
    scn.validate()?;
    let spec = GridSpec::<f64>::new(scn.grid.axes.clone(), scn.grid.boundary)?;
    let dim = spec.dim();
    // Per-axis closed-form ingredients.
    let mut theta = vec![0.0; dim];
    let mut st2 = vec![0.0; dim];
    let mut xc = vec![0.0; dim];
    for a in 0..dim {
        let m = scn.mass_of_axis(a);
        let s0 = scn.initial.width[a];
        let k0 = scn.initial.wavevector[a];
        theta[a] = scn.eta * t / (2.0 * m * s0 * s0);
        st2[a] = s0 * s0 * (1.0 + theta[a] * theta[a]);
        xc[a] = scn.initial.center[a] + scn.eta * k0 * t / m;
    }
    let rho = GridField::from_fn(spec.clone(), |x| {
        let mut v = 1.0;
        for a in 0..dim {
            let d = x[a] - xc[a];
            v *= (-d * d / (2.0 * st2[a])).exp()
                / (2.0 * std::f64::consts::PI * st2[a]).sqrt();
        }
        v
    });
    let phase = GridField::from_fn(spec, |x| {
        let mut p = 0.0;
        for a in 0..dim {
            let m = scn.mass_of_axis(a);
            let k0 = scn.initial.wavevector[a];
            let d = x[a] - xc[a];
            p += theta[a] * d * d / (4.0 * st2[a]) + k0 * x[a]
                - scn.eta * k0 * k0 * t / (2.0 * m)
                - 0.5 * theta[a].atan();
        }
        p
    });
    Ok((rho.cast(), phase.cast()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarmonicMode {
    Ground,
    Coherent,
}

/// Closed-form quadratic-well references. The well frequency and center are
/// read off the scenario potential, which must be quadratic with positive
/// curvature on every axis. Ground: stationary Gaussian of width
/// eta/(2 m w). Coherent: that Gaussian displaced by the initial center,
/// oscillating rigidly (requires zero initial wavevector).
pub fn analytic_harmonic<S: Scalar>(
    scn: &Scenario,
    mode: HarmonicMode,
    t: f64,
) -> Result<(GridField<S>, GridField<S>)> {
    scn.validate()?;
    let (coeff, well_center) = match &scn.potential {
        Field::Quadratic { offset: _, coeff, center } => (coeff.clone(), center.clone()),
        other => {
            return Err(CoreError::usage(format!(
                "harmonic reference needs a quadratic potential, got {other:?}"
            )))
        }
    };
    let spec = GridSpec::<f64>::new(scn.grid.axes.clone(), scn.grid.boundary)?;
    let dim = spec.dim();
    if coeff.len() != dim || well_center.len() != dim {
        return Err(CoreError::usage("quadratic potential rank does not match grid"));
    }
    let mut omega = vec![0.0; dim];
    let mut svar = vec![0.0; dim];
    for a in 0..dim {
        if !(coeff[a] > 0.0) {
            return Err(CoreError::usage(format!(
                "harmonic reference needs positive curvature, axis {a} has {}",
                coeff[a]
            )));
        }
        let m = scn.mass_of_axis(a);
        omega[a] = (2.0 * coeff[a] / m).sqrt();
        svar[a] = scn.eta / (2.0 * m * omega[a]);
    }
    if mode == HarmonicMode::Coherent && scn.initial.wavevector.iter().any(|&k| k != 0.0) {
        return Err(CoreError::usage(
            "coherent reference assumes release from rest (zero wavevector)",
        ));
    }
    // Center trajectory and its phase bookkeeping.
    let mut xc = vec![0.0; dim];
    let mut kc = vec![0.0; dim];
    let mut accum = 0.0;
    for a in 0..dim {
        let m = scn.mass_of_axis(a);
        match mode {
            HarmonicMode::Ground => {
                xc[a] = well_center[a];
            }
            HarmonicMode::Coherent => {
                let x0 = scn.initial.center[a] - well_center[a];
                xc[a] = well_center[a] + x0 * (omega[a] * t).cos();
                kc[a] = -(m * omega[a] * x0 / scn.eta) * (omega[a] * t).sin();
                // Time integral of the classical Lagrangian over eta.
                accum -= m * x0 * x0 * omega[a] / (4.0 * scn.eta)
                    * (2.0 * omega[a] * t).sin();
            }
        }
        // Zero-point phase per axis.
        accum -= 0.5 * omega[a] * t;
    }
    let rho = GridField::from_fn(spec.clone(), |x| {
        let mut v = 1.0;
        for a in 0..dim {
            let d = x[a] - xc[a];
            v *= (-d * d / (2.0 * svar[a])).exp()
                / (2.0 * std::f64::consts::PI * svar[a]).sqrt();
        }
        v
    });
    let phase = GridField::from_fn(spec, |x| {
        let mut p = accum;
        for a in 0..dim {
            p += kc[a] * (x[a] - xc[a]);
        }
        p
    });
    Ok((rho.cast(), phase.cast()))
}

/// One row of the observable time series. Columns are fixed:
/// t, norm, E, mean_1..D, var_1..D, boundary_mass, min_rho.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRow {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub boundary_mass: f64,
    pub min_rho: f64,
}

impl ObservableRow {
    pub fn from_density<S: Scalar>(t: S, rho: &GridField<S>, energy: S) -> ObservableRow {
        let (_, mean, var) = rho.moments();
        ObservableRow {
            t: t.to_f64_lossy(),
            norm: rho.integrate().to_f64_lossy(),
            energy: energy.to_f64_lossy(),
            mean: mean.iter().map(|v| v.to_f64_lossy()).collect(),
            var: var.iter().map(|v| v.to_f64_lossy()).collect(),
            boundary_mass: rho.boundary_mass().to_f64_lossy(),
            min_rho: rho.min_value().to_f64_lossy(),
        }
    }

    pub fn csv_header(dim: usize) -> String {
        let mut s = String::from("t,norm,E");
        for a in 1..=dim {
            s.push_str(&format!(",mean_{a}"));
        }
        for a in 1..=dim {
            s.push_str(&format!(",var_{a}"));
        }
        s.push_str(",boundary_mass,min_rho");
        s
    }

    /// Shortest round-trip scientific notation, so byte equality of emitted
    /// files is exactly value equality.
    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            format!("{:e}", self.t),
            format!("{:e}", self.norm),
            format!("{:e}", self.energy),
        ];
        cols.extend(self.mean.iter().map(|v| format!("{v:e}")));
        cols.extend(self.var.iter().map(|v| format!("{v:e}")));
        cols.push(format!("{:e}", self.boundary_mass));
        cols.push(format!("{:e}", self.min_rho));
        cols.join(",")
    }
}

/// Observables of a density-phase state; energy via the conserved functional.
pub fn observables<S: Scalar>(
    state: &FieldState<S>,
    params: &ModelParams<S>,
) -> Result<ObservableRow> {
    let e = crate::fields::energy(state, params)?;
    Ok(ObservableRow::from_density(state.t, &state.rho, e))
}

/// Observables of a wave function; energy via the Hamiltonian expectation.
pub fn observables_psi<S: Scalar>(
    psi: &WaveFunction<S>,
    params: &ModelParams<S>,
) -> Result<ObservableRow> {
    let cn = CrankNicolson::new(params, psi.spec.clone())?;
    let e = cn.energy(psi)?;
    Ok(ObservableRow::from_density(psi.t, &psi.density(), e))
}
