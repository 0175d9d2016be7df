//! Cutoff solvers, pseudo-true estimators and learning dynamics for agents
//! who expect reversal between draws and only see the second draw when
//! they keep going.

pub mod dynamics;
pub mod error;
pub mod gauss;
pub mod inference;
pub mod mom;
pub mod montecarlo;
pub mod multiperiod;
pub mod sequential;
pub mod stage_game;

pub use error::{Error, Result};
pub use gauss::GaussianSpec;

pub use inference::{CensoringSpec, PseudoTrueEstimate};
pub use stage_game::{Direction, StageGame, SubjectiveModel, TrueModel};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
