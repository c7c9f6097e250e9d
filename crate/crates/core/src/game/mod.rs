//! Game lifecycle: authoring, code-gated discovery, sessions, the two play
//! phases, answer collection and monitoring.
//!
//! ```text
//! game:     created -> phase1_open -> phase2_open -> closed
//! session:  phase1 -> (waiting) -> phase2 -> done
//! ```

mod clock;
mod code;
mod journal;
mod model;
mod service;

pub use clock::{Clock, ManualClock, SystemClock};
pub use code::AccessCode;
pub use journal::{Mutation, ReplayError};
pub use model::{
    AdvanceMode, Answer, AnswerId, AnswerSummary, DiagramVersion, Game, GameId, GameListing, GamePhase, GameSummary,
    MonitorSnapshot, Preview, Session, SessionPhase, SessionToken, SessionView, StudentId,
};
pub use service::{Advanced, DiagramAccepted, GameCreated, GameService, Joined, NewGame, PathsAccepted, ServiceState};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("unknown or expired session")]
    UnknownSession,
    #[error("access denied")]
    AccessDenied,
    #[error("game unavailable: {0}")]
    Unavailable(String),
    #[error("cannot {action} a game in phase {actual}")]
    WrongPhase { action: &'static str, actual: GamePhase },
    #[error("{0}")]
    OrderViolation(String),
    #[error("invalid reference: {0}")]
    InvalidReference(String),
    #[error("{0}")]
    InvalidInput(String),
}
