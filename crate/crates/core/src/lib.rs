//! Reduced order modeling of chaotic dynamics.
//!
//! The crate builds non-intrusive reduced order models (ROMs) of the
//! Lorenz '96 system and evaluates their forecast quality:
//!
//! - [`lorenz96`]: the full order model and trajectory dataset generation,
//! - [`ode`]: explicit trapezoidal integration with embedded error control
//!   and optional per-step manifold projection,
//! - [`nn`]: a from-scratch one-hidden-layer MLP with reverse-mode
//!   gradients, ADAM, and a cyclic learning-rate schedule,
//! - [`dmd`]: dynamic mode decomposition with analytic forecasting,
//! - [`quadratic`]: quadratic-manifold ROMs fit by ridge least squares,
//! - [`neural`]: the autoencoder ROM and its spherically constrained
//!   variant, trained through the solver with a rollout loss,
//! - [`eval`]: KDE densities, the approximate KL divergence, and the
//!   forecast experiments,
//! - [`rom`], [`persist`]: a unified forecasting front and the text model
//!   format shared by the CLI.

pub mod dmd;
pub mod eval;
pub mod lorenz96;
pub mod neural;
pub mod nn;
pub mod ode;
pub mod persist;
pub mod quadratic;
pub mod rom;
pub mod traj;

pub use dmd::{DmdError, DmdModel};
pub use eval::{EvalError, KdeModel, KlReport, KlValue, LogDensity};
pub use lorenz96::{DataError, DatasetConfig, Lorenz96};
pub use neural::{NeuralError, NeuralHyper, NeuralRom, TrainConfig};
pub use nn::{AdamState, CyclicLrSchedule, MlpParams, NnError};
pub use ode::{OdeError, Projection, SolverConfig, StepResult};
pub use persist::PersistError;
pub use quadratic::{QuadError, QuadraticModel};
pub use rom::{Forecaster, Rom, RomKind};
pub use traj::Trajectory;

/// Model time units per simulated day (six hours correspond to 0.05 units).
pub const UNITS_PER_DAY: f64 = 0.2;

/// Any error produced by the crate, for callers that drive whole pipelines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dmd(#[from] DmdError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the root cause is numerical divergence (blow-up or failed
    /// step-size control), as opposed to bad input or I/O.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Ode(e) => e.is_divergence(),
            Error::Neural(e) => e.is_divergence(),
            Error::Quad(QuadError::Ode(e)) => e.is_divergence(),
            Error::Data(DataError::Solver(e)) => e.is_divergence(),
            _ => false,
        }
    }
}
