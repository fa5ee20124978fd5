//! Scalar fields over configuration space, as closed forms or grid samples.
//!
//! Closed forms carry analytic gradients; grid-sampled fields interpolate
//! multilinearly and differentiate by central differences of the
//! interpolant (one-sided at Dirichlet walls).

use crate::grid::{Boundary, GridField};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Field<S> {
    Constant { value: S },
    /// `base + amplitude * exp(-|x - center|^2 / (2 width^2))`
    GaussianBump {
        base: S,
        amplitude: S,
        center: Vec<S>,
        width: S,
    },
    /// `base + slope . x`
    LinearRamp { base: S, slope: Vec<S> },
    /// `scale * exp(rate . x)`
    Exp { scale: S, rate: Vec<S> },
    /// Normalized product Gaussian density.
    GaussianDensity { mean: Vec<S>, std: Vec<S> },
    /// `offset + sum_k coeff_k (x_k - center_k)^2`
    Quadratic {
        offset: S,
        coeff: Vec<S>,
        center: Vec<S>,
    },
    /// `offset + coeff . x`
    Linear { offset: S, coeff: Vec<S> },
    Grid { values: GridField<S> },
}

impl<S: Scalar> Field<S> {
    pub fn zero() -> Self {
        Field::Constant { value: S::zero() }
    }

    pub fn value(&self, x: &[S]) -> S {
        match self {
            Field::Constant { value } => *value,
            Field::GaussianBump {
                base,
                amplitude,
                center,
                width,
            } => {
                let q: S = x
                    .iter()
                    .zip(center)
                    .map(|(&xi, &ci)| (xi - ci) * (xi - ci))
                    .sum();
                *base + *amplitude * (-q / (S::lit(2.0) * *width * *width)).exp()
            }
            Field::LinearRamp { base, slope } => {
                *base + x.iter().zip(slope).map(|(&xi, &si)| xi * si).sum()
            }
            Field::Exp { scale, rate } => {
                *scale * x.iter().zip(rate).map(|(&xi, &ki)| xi * ki).sum::<S>().exp()
            }
            Field::GaussianDensity { mean, std } => {
                let mut logp = S::zero();
                let two_pi = S::PI() * S::lit(2.0);
                for ((&xi, &mi), &si) in x.iter().zip(mean).zip(std) {
                    let z = (xi - mi) / si;
                    logp = logp - z * z / S::lit(2.0) - (two_pi.sqrt() * si).ln();
                }
                logp.exp()
            }
            Field::Quadratic {
                offset,
                coeff,
                center,
            } => {
                *offset
                    + x.iter()
                        .zip(coeff)
                        .zip(center)
                        .map(|((&xi, &ai), &ci)| ai * (xi - ci) * (xi - ci))
                        .sum()
            }
            Field::Linear { offset, coeff } => {
                *offset + x.iter().zip(coeff).map(|(&xi, &ki)| xi * ki).sum()
            }
            Field::Grid { values } => values.interp(x),
        }
    }

    pub fn gradient(&self, x: &[S]) -> Vec<S> {
        match self {
            Field::Constant { .. } => vec![S::zero(); x.len()],
            Field::GaussianBump {
                amplitude,
                center,
                width,
                ..
            } => {
                let q: S = x
                    .iter()
                    .zip(center)
                    .map(|(&xi, &ci)| (xi - ci) * (xi - ci))
                    .sum();
                let w2 = *width * *width;
                let e = *amplitude * (-q / (S::lit(2.0) * w2)).exp();
                x.iter()
                    .zip(center)
                    .map(|(&xi, &ci)| -e * (xi - ci) / w2)
                    .collect()
            }
            Field::LinearRamp { slope, .. } => slope.clone(),
            Field::Exp { .. } => {
                let v = self.value(x);
                match self {
                    Field::Exp { rate, .. } => rate.iter().map(|&k| k * v).collect(),
                    _ => unreachable!(),
                }
            }
            Field::GaussianDensity { mean, std } => {
                let v = self.value(x);
                x.iter()
                    .zip(mean)
                    .zip(std)
                    .map(|((&xi, &mi), &si)| -v * (xi - mi) / (si * si))
                    .collect()
            }
            Field::Quadratic { coeff, center, .. } => x
                .iter()
                .zip(coeff)
                .zip(center)
                .map(|((&xi, &ai), &ci)| S::lit(2.0) * ai * (xi - ci))
                .collect(),
            Field::Linear { coeff, .. } => coeff.clone(),
            Field::Grid { values } => {
                // Central differences of the interpolant at grid spacing;
                // one-sided at Dirichlet walls.
                let d = values.spec.dim();
                let mut g = vec![S::zero(); d];
                let mut xp = x.to_vec();
                for k in 0..d {
                    let h = values.spec.spacing(k);
                    let ax = &values.spec.axes[k];
                    let periodic = values.spec.boundary == Boundary::Periodic;
                    let (lo_ok, hi_ok) = if periodic {
                        (true, true)
                    } else {
                        (x[k] - h >= ax.lo, x[k] + h <= ax.hi)
                    };
                    let v = if lo_ok && hi_ok {
                        xp[k] = x[k] + h;
                        let fp = values.interp(&xp);
                        xp[k] = x[k] - h;
                        let fm = values.interp(&xp);
                        (fp - fm) / (S::lit(2.0) * h)
                    } else if hi_ok {
                        xp[k] = x[k] + h;
                        let f1 = values.interp(&xp);
                        xp[k] = x[k] + h + h;
                        let f2 = values.interp(&xp);
                        let f0 = values.interp(x);
                        (S::lit(-3.0) * f0 + S::lit(4.0) * f1 - f2) / (S::lit(2.0) * h)
                    } else {
                        xp[k] = x[k] - h;
                        let f1 = values.interp(&xp);
                        xp[k] = x[k] - h - h;
                        let f2 = values.interp(&xp);
                        let f0 = values.interp(x);
                        (S::lit(3.0) * f0 - S::lit(4.0) * f1 + f2) / (S::lit(2.0) * h)
                    };
                    g[k] = v;
                    xp[k] = x[k];
                }
                g
            }
        }
    }

    /// Samples the field onto a grid.
    pub fn sample(&self, spec: crate::grid::GridSpec<S>) -> GridField<S> {
        GridField::from_fn(spec, |x| self.value(x))
    }

    /// Converts the closed-form description to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Field<T> {
        let c = |v: &S| T::lit(v.to_f64_lossy());
        let cv = |v: &[S]| v.iter().map(|x| T::lit(x.to_f64_lossy())).collect();
        match self {
            Field::Constant { value } => Field::Constant { value: c(value) },
            Field::GaussianBump {
                base,
                amplitude,
                center,
                width,
            } => Field::GaussianBump {
                base: c(base),
                amplitude: c(amplitude),
                center: cv(center),
                width: c(width),
            },
            Field::LinearRamp { base, slope } => Field::LinearRamp {
                base: c(base),
                slope: cv(slope),
            },
            Field::Exp { scale, rate } => Field::Exp {
                scale: c(scale),
                rate: cv(rate),
            },
            Field::GaussianDensity { mean, std } => Field::GaussianDensity {
                mean: cv(mean),
                std: cv(std),
            },
            Field::Quadratic {
                offset,
                coeff,
                center,
            } => Field::Quadratic {
                offset: c(offset),
                coeff: cv(coeff),
                center: cv(center),
            },
            Field::Linear { offset, coeff } => Field::Linear {
                offset: c(offset),
                coeff: cv(coeff),
            },
            Field::Grid { values } => Field::Grid {
                values: values.cast(),
            },
        }
    }
}
