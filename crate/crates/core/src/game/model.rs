use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::code::AccessCode;
use super::GameError;
use crate::diagram::Diagram;
use crate::grading::AnalysisReport;
use crate::path::NodePath;

macro_rules! opaque_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub(crate) fn random() -> Self {
                Self(uuid::Uuid::new_v4().simple().to_string())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

opaque_id!(GameId);
opaque_id!(
    /// Secret handed to a student on join; it authenticates every later call.
    SessionToken
);
opaque_id!(AnswerId);

/// Student identification number (AM).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentId(String);

impl StudentId {
    pub const MAX_LEN: usize = 32;

    pub fn parse(raw: &str) -> Result<Self, GameError> {
        let s = raw.trim();
        if s.is_empty() || s.chars().count() > Self::MAX_LEN || s.chars().any(char::is_control) {
            return Err(GameError::InvalidInput(format!(
                "student id must be 1 to {} printable characters",
                Self::MAX_LEN
            )));
        }
        Ok(Self(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvanceMode {
    /// Phase 2 starts for everybody when the professor advances the game.
    ProfessorTriggered,
    /// Each student enters phase 2 as soon as their diagram is in.
    Individual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GamePhase {
    Created,
    Phase1Open,
    Phase2Open,
    Closed,
}

impl fmt::Display for GamePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GamePhase::Created => "created",
            GamePhase::Phase1Open => "phase1_open",
            GamePhase::Phase2Open => "phase2_open",
            GamePhase::Closed => "closed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    Phase1,
    /// Diagram in, waiting for the professor to start phase 2.
    Waiting,
    Phase2,
    Done,
}

impl fmt::Display for SessionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionPhase::Phase1 => "phase1",
            SessionPhase::Waiting => "waiting",
            SessionPhase::Phase2 => "phase2",
            SessionPhase::Done => "done",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Game {
    pub game_id: GameId,
    pub game_number: u32,
    pub code: AccessCode,
    pub reference_diagram: Diagram,
    pub reference_paths: Vec<NodePath>,
    pub reference_cc: u32,
    pub advance_mode: AdvanceMode,
    pub phase: GamePhase,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_token: SessionToken,
    pub student_id: StudentId,
    pub game_id: GameId,
    pub session_phase: SessionPhase,
    pub joined_at: DateTime<Utc>,
    pub diagram_submitted: bool,
    pub answer_id: Option<AnswerId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramVersion {
    pub diagram: Diagram,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub answer_id: AnswerId,
    pub student_id: StudentId,
    pub game_id: GameId,
    pub game_number: u32,
    /// When the student joined the game.
    pub played_at: DateTime<Utc>,
    pub submitted_at_diagram: Option<DateTime<Utc>>,
    pub submitted_at_paths: Option<DateTime<Utc>>,
    pub diagram: Option<Diagram>,
    /// Superseded diagram submissions, oldest first.
    pub diagram_history: Vec<DiagramVersion>,
    pub resubmitted: bool,
    /// Paths arrived from a session that never submitted a diagram.
    pub diagram_missing: bool,
    pub paths: Option<Vec<NodePath>>,
    pub analysis: Option<AnalysisReport>,
}

impl Answer {
    pub fn is_complete(&self) -> bool {
        self.paths.is_some()
    }

    pub fn summary(&self) -> AnswerSummary {
        AnswerSummary {
            answer_id: self.answer_id.clone(),
            student_id: self.student_id.clone(),
            game_id: self.game_id.clone(),
            game_number: self.game_number,
            played_at: self.played_at,
            submitted_at_diagram: self.submitted_at_diagram,
            submitted_at_paths: self.submitted_at_paths,
            resubmitted: self.resubmitted,
            diagram_missing: self.diagram_missing,
            complete: self.is_complete(),
        }
    }
}

/// One row of the professor's answer list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSummary {
    pub answer_id: AnswerId,
    pub student_id: StudentId,
    pub game_id: GameId,
    pub game_number: u32,
    pub played_at: DateTime<Utc>,
    pub submitted_at_diagram: Option<DateTime<Utc>>,
    pub submitted_at_paths: Option<DateTime<Utc>>,
    pub resubmitted: bool,
    pub diagram_missing: bool,
    pub complete: bool,
}

/// What a student sees after entering a code: no game content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameListing {
    pub game_number: u32,
    pub phase: GamePhase,
}

/// Professor-side view of a game in the pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSummary {
    pub game_id: GameId,
    pub game_number: u32,
    pub code: AccessCode,
    pub phase: GamePhase,
    pub advance_mode: AdvanceMode,
    pub reference_cc: u32,
    pub created_at: DateTime<Utc>,
}

impl From<&Game> for GameSummary {
    fn from(g: &Game) -> Self {
        Self {
            game_id: g.game_id.clone(),
            game_number: g.game_number,
            code: g.code.clone(),
            phase: g.phase,
            advance_mode: g.advance_mode,
            reference_cc: g.reference_cc,
            created_at: g.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preview {
    pub student_id: StudentId,
    pub diagram: Diagram,
}

/// Live counters for the professor.
///
/// `diagrams_submitted <= players_count` and `paths_submitted <=
/// diagrams_submitted` always hold. Students who reached phase 2 without a
/// diagram and then sent paths are counted in `paths_without_diagram`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorSnapshot {
    pub game_id: GameId,
    pub game_number: u32,
    pub phase: GamePhase,
    pub players_count: usize,
    pub diagrams_submitted: usize,
    pub paths_submitted: usize,
    pub paths_without_diagram: usize,
    pub previews: Vec<Preview>,
}

/// A student's own view of their session, used to resync after a reconnect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub student_id: StudentId,
    pub game_id: GameId,
    pub game_number: u32,
    pub session_phase: SessionPhase,
    pub game_phase: GamePhase,
    pub diagram_submitted: bool,
}
