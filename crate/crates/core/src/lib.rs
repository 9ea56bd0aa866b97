//! Periodic one-dimensional compressible fluid models with local and
//! nonlocal (fractional) alignment, together with the spectral operators,
//! time integration and entropy diagnostics they need.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

pub mod diag;
pub mod error;
pub mod integrator;
pub mod kernel;
pub mod model;
pub mod scalar;
pub mod topo;
pub mod torus;

pub use diag::{DiagConfig, DiagRecord, DiagnosticsEngine, Dissipations};
pub use error::{Error, Result};
pub use integrator::{InitPreset, StepControl, TerminalStatus, Trajectory};
pub use kernel::FracKernelSpec;
pub use model::{Forcing, ForcingKind, ModelParams, State, Tendency};
pub use scalar::Scalar;
pub use torus::{Field, Grid};

pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type State64 = State<f64>;
pub type ModelParams64 = ModelParams<f64>;
pub type StepControl64 = StepControl<f64>;
pub type Forcing64 = Forcing<f64>;
pub type InitPreset64 = InitPreset<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type DiagnosticsEngine64 = DiagnosticsEngine<f64>;
