//! Nonlocal games, device models, the spot-checking protocol and the device-independent protocol grammar.

mod bq;
mod di;
mod entropy;
mod game;
mod spotcheck;

use thiserror::Error;

pub use bq::{b_q_distribution, rational_approx, RationalB, MAX_EXACT_ROUNDS};
pub use di::{build_di_protocol, DiProtocol, ProtocolStepDI};
pub use entropy::{min_entropy_cq, EntropyMethod, MinEntropyReport};
pub use game::{chsh_game, classical_value, game_bindings, game_diagram, game_value, measurement_process, DeviceMode, DeviceStrategy, Game};
pub use spotcheck::{abort_frequency, RNG_NAME, play_round, spotcheck_run, RoundRecord, RunReport, SpotCheckParams};

use crate::diagram::DiagramError;
use crate::regcalc::CalcError;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}
