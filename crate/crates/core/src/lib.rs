//! Simulation engine for entropic dynamics: diffusion generated by a
//! maximum-entropy step kernel on a statistical manifold, with walker
//! ensembles, Fokker-Planck evolution, and coupled density-phase field
//! solvers that recover linear quantum evolution when the osmotic and
//! inertial masses agree.
//!
//! Everything numerical is generic over [`scalar::Scalar`]; the `*64` /
//! `*32` aliases below pin the two concrete instantiations.

pub mod ensemble;
pub mod error;
pub mod field;
pub mod fields;
pub mod grid;
pub mod kernel;
pub mod manifold;
pub mod rng;
pub mod scalar;
pub mod scenarios;

pub use error::{CoreError, Result};
pub use scalar::Scalar;

// Concrete aliases for the main public types.

pub type ConfigSpace64 = manifold::ConfigSpace<f64>;
pub type ConfigSpace32 = manifold::ConfigSpace<f32>;
pub type ConformalFactor64 = manifold::ConformalFactor<f64>;
pub type ConformalFactor32 = manifold::ConformalFactor<f32>;
pub type Field64 = field::Field<f64>;
pub type Field32 = field::Field<f32>;
pub type GridSpec64 = grid::GridSpec<f64>;
pub type GridSpec32 = grid::GridSpec<f32>;
pub type GridField64 = grid::GridField<f64>;
pub type GridField32 = grid::GridField<f32>;
pub type Kernel64<'a> = kernel::TransitionKernel<'a, f64>;
pub type Kernel32<'a> = kernel::TransitionKernel<'a, f32>;
pub type Ensemble64 = ensemble::Ensemble<f64>;
pub type Ensemble32 = ensemble::Ensemble<f32>;
pub type ModelParams64 = fields::ModelParams<f64>;
pub type ModelParams32 = fields::ModelParams<f32>;
pub type FieldState64 = fields::FieldState<f64>;
pub type FieldState32 = fields::FieldState<f32>;
pub type WaveFunction64 = fields::WaveFunction<f64>;
pub type WaveFunction32 = fields::WaveFunction<f32>;
// Scenario manifests are pure f64 data; the typed accessors instantiate
// either precision, so no per-precision alias is needed.
pub use scenarios::Scenario;
