//! State changes as replayable records.
//!
//! Every accepted mutating operation on [`GameService`](super::GameService)
//! emits exactly one [`Mutation`]. Ids, timestamps and analysis results are
//! captured inside the record, so replaying a journal over the state it was
//! produced from reproduces the same state byte for byte.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{AnswerId, Game, GameId, Session, SessionToken};
use crate::diagram::Diagram;
use crate::grading::AnalysisReport;
use crate::path::NodePath;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Mutation {
    GameCreated {
        game: Game,
    },
    GameOpened {
        game_id: GameId,
    },
    GameAdvanced {
        game_id: GameId,
    },
    GameClosed {
        game_id: GameId,
    },
    SessionJoined {
        session: Session,
    },
    DiagramSubmitted {
        session_token: SessionToken,
        /// Id for the answer record if this is the session's first submission.
        answer_id: AnswerId,
        diagram: Diagram,
        at: DateTime<Utc>,
    },
    PathsSubmitted {
        session_token: SessionToken,
        answer_id: AnswerId,
        paths: Vec<NodePath>,
        analysis: AnalysisReport,
        at: DateTime<Utc>,
    },
    AnswerDeleted {
        answer_id: AnswerId,
    },
}

/// A journal record that does not fit the state it is replayed onto.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot replay {record}: {reason}")]
pub struct ReplayError {
    pub record: &'static str,
    pub reason: String,
}

impl Mutation {
    pub fn kind(&self) -> &'static str {
        match self {
            Mutation::GameCreated { .. } => "game_created",
            Mutation::GameOpened { .. } => "game_opened",
            Mutation::GameAdvanced { .. } => "game_advanced",
            Mutation::GameClosed { .. } => "game_closed",
            Mutation::SessionJoined { .. } => "session_joined",
            Mutation::DiagramSubmitted { .. } => "diagram_submitted",
            Mutation::PathsSubmitted { .. } => "paths_submitted",
            Mutation::AnswerDeleted { .. } => "answer_deleted",
        }
    }
}
