//! A unified forecasting front over the truth model and the three ROM
//! families, used by the evaluation pipeline and the CLI.

use nalgebra::{Complex, DVector};

use crate::dmd::DmdModel;
use crate::lorenz96::Lorenz96;
use crate::neural::{AdvanceMode, NeuralRom};
use crate::ode::{self, OdeError, SolverConfig};
use crate::quadratic::QuadraticModel;
use crate::{Error, NeuralError};

type C64 = Complex<f64>;

/// Model kind tag, also the kind token of the persistence format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RomKind {
    Truth,
    Dmd,
    Quad,
    Ae,
    Syco,
}

impl RomKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RomKind::Truth => "truth",
            RomKind::Dmd => "dmd",
            RomKind::Quad => "quad",
            RomKind::Ae => "ae",
            RomKind::Syco => "syco",
        }
    }
}

impl std::fmt::Display for RomKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Any forecastable model: the full order system or a fitted ROM.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Rom {
    Truth(Lorenz96),
    Dmd(DmdModel),
    Quadratic(QuadraticModel),
    Neural(NeuralRom),
}

impl Rom {
    pub fn kind(&self) -> RomKind {
        match self {
            Rom::Truth(_) => RomKind::Truth,
            Rom::Dmd(_) => RomKind::Dmd,
            Rom::Quadratic(_) => RomKind::Quad,
            Rom::Neural(m) if m.constrained => RomKind::Syco,
            Rom::Neural(_) => RomKind::Ae,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Rom::Truth(m) => m.dim(),
            Rom::Dmd(m) => m.state_dim(),
            Rom::Quadratic(m) => m.state_dim(),
            Rom::Neural(m) => m.state_dim(),
        }
    }

    /// Start a forecast from the full-order state `x0`.
    pub fn forecaster(&self, x0: &DVector<f64>) -> Result<Forecaster<'_>, Error> {
        if x0.len() != self.state_dim() {
            return Err(Error::Neural(NeuralError::Invalid(format!(
                "initial state has dimension {}, the model expects {}",
                x0.len(),
                self.state_dim()
            ))));
        }
        let state = match self {
            Rom::Truth(_) => Cursor::Full(x0.clone()),
            Rom::Dmd(m) => Cursor::Modal(m.encode(x0)),
            Rom::Quadratic(m) => Cursor::Latent(m.encode(x0)),
            Rom::Neural(m) => Cursor::Latent(m.encode(x0).map_err(Error::Neural)?),
        };
        Ok(Forecaster { rom: self, t: 0.0, state })
    }
}

#[derive(Debug, Clone)]
enum Cursor {
    Full(DVector<f64>),
    Modal(DVector<C64>),
    Latent(DVector<f64>),
}

/// Incremental forecast state for one initial condition.
#[derive(Debug, Clone)]
pub struct Forecaster<'m> {
    rom: &'m Rom,
    t: f64,
    state: Cursor,
}

impl Forecaster<'_> {
    /// Time since the forecast start, in model units.
    pub fn time(&self) -> f64 {
        self.t
    }

    /// Advance by `dt` model units. Divergence errors carry the absolute
    /// forecast time.
    pub fn advance(&mut self, dt: f64, solver: &SolverConfig) -> Result<(), Error> {
        let t0 = self.t;
        let lift = |e: OdeError| match e {
            OdeError::Divergence { t, state } => OdeError::Divergence { t: t0 + t, state },
            other => other,
        };
        match (&self.rom, &mut self.state) {
            (Rom::Truth(m), Cursor::Full(x)) => {
                let mut rhs = |u: &DVector<f64>| m.rhs(u);
                *x = ode::integrate_adaptive(&mut rhs, x, 0.0, dt, solver, None).map_err(lift)?;
            }
            (Rom::Dmd(_), Cursor::Modal(_)) => {
                // analytic propagation happens in `state()`
            }
            (Rom::Quadratic(m), Cursor::Latent(u)) => {
                let mut rhs = |v: &DVector<f64>| m.latent_rhs(v);
                *u = ode::integrate_adaptive(&mut rhs, u, 0.0, dt, solver, None).map_err(lift)?;
            }
            (Rom::Neural(m), Cursor::Latent(u)) => {
                *u = m
                    .advance(u, dt, &AdvanceMode::Adaptive(solver.clone()))
                    .map_err(|e| match e {
                        NeuralError::Ode(inner) => NeuralError::Ode(lift(inner)),
                        other => other,
                    })
                    .map_err(Error::Neural)?;
            }
            _ => unreachable!("cursor kind always matches rom kind"),
        }
        self.t += dt;
        Ok(())
    }

    /// Reconstructed full-order state at the current time.
    pub fn state(&self) -> DVector<f64> {
        match (&self.rom, &self.state) {
            (Rom::Truth(_), Cursor::Full(x)) => x.clone(),
            (Rom::Dmd(m), Cursor::Modal(u0)) => m.decode(&m.advance_latent(u0, self.t)),
            (Rom::Quadratic(m), Cursor::Latent(u)) => m.decode(u),
            (Rom::Neural(m), Cursor::Latent(u)) => m.decode(u).expect("latent shape is fixed"),
            _ => unreachable!("cursor kind always matches rom kind"),
        }
    }
}
