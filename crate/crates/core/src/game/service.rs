use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::clock::{Clock, SystemClock};
use super::code::AccessCode;
use super::journal::{Mutation, ReplayError};
use super::model::*;
use super::GameError;
use crate::diagram::Diagram;
use crate::grading::analyze_answer;
use crate::path::{NodePath, PathIndex};

/// Everything the service knows. Serializes deterministically, which makes it
/// usable as a snapshot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceState {
    pub games: BTreeMap<GameId, Game>,
    pub sessions: BTreeMap<SessionToken, Session>,
    /// In arrival order.
    pub answers: Vec<Answer>,
}

#[derive(Debug, Clone)]
pub struct NewGame {
    pub reference_diagram: Diagram,
    pub reference_paths: Vec<NodePath>,
    pub code: String,
    pub advance_mode: AdvanceMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameCreated {
    pub game_id: GameId,
    pub game_number: u32,
    pub reference_cc: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Joined {
    pub session_token: SessionToken,
    pub game_id: GameId,
    pub session_phase: SessionPhase,
    pub resumed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramAccepted {
    pub accepted: bool,
    pub session_phase: SessionPhase,
    pub resubmitted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advanced {
    pub game_id: GameId,
    /// Sessions that moved into phase 2.
    pub moved: Vec<SessionToken>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathsAccepted {
    pub accepted: bool,
    pub done: bool,
    /// The same paths had already been accepted; nothing changed.
    pub repeated: bool,
}

/// The single authority over games, sessions and answers.
///
/// Operations validate first and change nothing on error. Every accepted
/// mutation is recorded as a [`Mutation`] that callers drain with
/// [`GameService::take_journal`] and persist before acknowledging.
pub struct GameService {
    state: ServiceState,
    clock: Arc<dyn Clock>,
    journal: Vec<Mutation>,
}

impl Default for GameService {
    fn default() -> Self {
        Self::new(Arc::new(SystemClock))
    }
}

impl GameService {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            state: ServiceState::default(),
            clock,
            journal: Vec::new(),
        }
    }

    /// Rebuilds a service from a snapshot and the records written after it.
    pub fn restore(
        state: ServiceState,
        records: impl IntoIterator<Item = Mutation>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ReplayError> {
        let mut service = Self {
            state,
            clock,
            journal: Vec::new(),
        };
        for m in records {
            service.apply(&m)?;
        }
        Ok(service)
    }

    pub fn state(&self) -> &ServiceState {
        &self.state
    }

    /// Mutations accepted since the last call.
    pub fn take_journal(&mut self) -> Vec<Mutation> {
        std::mem::take(&mut self.journal)
    }

    fn commit(&mut self, m: Mutation) {
        self.apply(&m).expect("validated mutation applies");
        self.journal.push(m);
    }

    // ---- professor operations ----------------------------------------

    pub fn create_game(&mut self, new: NewGame) -> Result<GameCreated, GameError> {
        let code = AccessCode::parse(&new.code)?;
        let metrics = new.reference_diagram.metrics();
        if metrics.n == 0 {
            return Err(GameError::InvalidReference(
                "reference diagram has no process nodes".into(),
            ));
        }
        if !metrics.connected {
            return Err(GameError::InvalidReference("reference diagram is not connected".into()));
        }
        let cc = metrics.cc_structural.unwrap_or(0);
        let reference_cc = u32::try_from(cc)
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| GameError::InvalidReference(format!("reference CC {cc} is below 1")))?;
        let index = PathIndex::new(&new.reference_diagram);
        for (i, p) in new.reference_paths.iter().enumerate() {
            let verdict = index.validate(p);
            if let Some((from, to)) = verdict.missing_pair() {
                return Err(GameError::InvalidReference(format!(
                    "path #{} ({p}) has no edge {from}->{to}",
                    i + 1
                )));
            }
            if !verdict.is_valid() {
                return Err(GameError::InvalidReference(format!(
                    "path #{} ({p}) names a node that does not exist",
                    i + 1
                )));
            }
        }
        if new.reference_paths.len() != reference_cc as usize {
            return Err(GameError::InvalidReference(format!(
                "{} reference paths given but the diagram's CC is {reference_cc}",
                new.reference_paths.len()
            )));
        }

        let game = Game {
            game_id: GameId::random(),
            game_number: self.state.games.len() as u32 + 1,
            code,
            reference_diagram: new.reference_diagram,
            reference_paths: new.reference_paths,
            reference_cc,
            advance_mode: new.advance_mode,
            phase: GamePhase::Created,
            created_at: self.clock.now(),
        };
        let created = GameCreated {
            game_id: game.game_id.clone(),
            game_number: game.game_number,
            reference_cc,
        };
        self.commit(Mutation::GameCreated { game });
        Ok(created)
    }

    pub fn open_game(&mut self, game_id: &GameId) -> Result<GamePhase, GameError> {
        self.transition(game_id, "open", GamePhase::Created)?;
        self.commit(Mutation::GameOpened {
            game_id: game_id.clone(),
        });
        Ok(GamePhase::Phase1Open)
    }

    /// Ends phase 1 for everybody still in it, including students who never
    /// submitted a diagram.
    pub fn advance_game(&mut self, game_id: &GameId) -> Result<Advanced, GameError> {
        self.transition(game_id, "advance", GamePhase::Phase1Open)?;
        let moved = self
            .sessions_of(game_id)
            .filter(|s| matches!(s.session_phase, SessionPhase::Phase1 | SessionPhase::Waiting))
            .map(|s| s.session_token.clone())
            .collect();
        self.commit(Mutation::GameAdvanced {
            game_id: game_id.clone(),
        });
        Ok(Advanced {
            game_id: game_id.clone(),
            moved,
        })
    }

    pub fn close_game(&mut self, game_id: &GameId) -> Result<GamePhase, GameError> {
        self.transition(game_id, "close", GamePhase::Phase2Open)?;
        self.commit(Mutation::GameClosed {
            game_id: game_id.clone(),
        });
        Ok(GamePhase::Closed)
    }

    fn transition(&self, game_id: &GameId, action: &'static str, from: GamePhase) -> Result<(), GameError> {
        let game = self.game(game_id)?;
        if game.phase != from {
            return Err(GameError::WrongPhase {
                action,
                actual: game.phase,
            });
        }
        Ok(())
    }

    pub fn game(&self, game_id: &GameId) -> Result<&Game, GameError> {
        self.state
            .games
            .get(game_id)
            .ok_or_else(|| GameError::NotFound(format!("game {game_id}")))
    }

    /// All games in the pool by game number.
    pub fn games(&self) -> Vec<GameSummary> {
        let mut list: Vec<GameSummary> = self.state.games.values().map(GameSummary::from).collect();
        list.sort_by_key(|g| g.game_number);
        list
    }

    pub fn monitor(&self, game_id: &GameId) -> Result<MonitorSnapshot, GameError> {
        let game = self.game(game_id)?;
        let mut snap = MonitorSnapshot {
            game_id: game.game_id.clone(),
            game_number: game.game_number,
            phase: game.phase,
            players_count: 0,
            diagrams_submitted: 0,
            paths_submitted: 0,
            paths_without_diagram: 0,
            previews: Vec::new(),
        };
        for s in self.sessions_of(game_id) {
            snap.players_count += 1;
            let done = s.session_phase == SessionPhase::Done;
            match (s.diagram_submitted, done) {
                (true, true) => {
                    snap.diagrams_submitted += 1;
                    snap.paths_submitted += 1;
                }
                (true, false) => snap.diagrams_submitted += 1,
                (false, true) => snap.paths_without_diagram += 1,
                (false, false) => {}
            }
        }
        snap.previews = self
            .state
            .answers
            .iter()
            .filter(|a| &a.game_id == game_id)
            .filter_map(|a| {
                a.diagram.as_ref().map(|d| Preview {
                    student_id: a.student_id.clone(),
                    diagram: d.clone(),
                })
            })
            .collect();
        Ok(snap)
    }

    pub fn list_answers(&self, game_id: Option<&GameId>) -> Vec<AnswerSummary> {
        self.state
            .answers
            .iter()
            .filter(|a| game_id.is_none_or(|g| &a.game_id == g))
            .map(Answer::summary)
            .collect()
    }

    pub fn answer(&self, answer_id: &AnswerId) -> Result<&Answer, GameError> {
        self.state
            .answers
            .iter()
            .find(|a| &a.answer_id == answer_id)
            .ok_or_else(|| GameError::NotFound(format!("answer {answer_id}")))
    }

    pub fn delete_answer(&mut self, answer_id: &AnswerId) -> Result<(), GameError> {
        self.answer(answer_id)?;
        self.commit(Mutation::AnswerDeleted {
            answer_id: answer_id.clone(),
        });
        Ok(())
    }

    // ---- student operations ------------------------------------------

    /// Games unlocked by `code` that can be played right now. Unknown codes
    /// yield an empty list.
    pub fn list_games(&self, code: &str) -> Vec<GameListing> {
        let mut list: Vec<GameListing> = self
            .state
            .games
            .values()
            .filter(|g| g.code.matches(code))
            .filter(|g| matches!(g.phase, GamePhase::Phase1Open | GamePhase::Phase2Open))
            .map(|g| GameListing {
                game_number: g.game_number,
                phase: g.phase,
            })
            .collect();
        list.sort_by_key(|g| g.game_number);
        list
    }

    /// Joins or resumes. One session exists per (student, game).
    pub fn join(&mut self, code: &str, student_id: &str, game_number: u32) -> Result<Joined, GameError> {
        let student_id = StudentId::parse(student_id)?;
        let game = self
            .state
            .games
            .values()
            .find(|g| g.game_number == game_number && g.code.matches(code))
            .ok_or(GameError::AccessDenied)?;
        let session_phase = match game.phase {
            GamePhase::Phase1Open => SessionPhase::Phase1,
            GamePhase::Phase2Open => SessionPhase::Phase2,
            GamePhase::Created => return Err(GameError::Unavailable("the game has not started".into())),
            GamePhase::Closed => return Err(GameError::Unavailable("the game is closed".into())),
        };
        let game_id = game.game_id.clone();
        if let Some(existing) = self.sessions_of(&game_id).find(|s| s.student_id == student_id) {
            return Ok(Joined {
                session_token: existing.session_token.clone(),
                game_id: existing.game_id.clone(),
                session_phase: existing.session_phase,
                resumed: true,
            });
        }
        let session = Session {
            session_token: SessionToken::random(),
            student_id,
            game_id: game_id.clone(),
            session_phase,
            joined_at: self.clock.now(),
            diagram_submitted: false,
            answer_id: None,
        };
        let joined = Joined {
            session_token: session.session_token.clone(),
            game_id,
            session_phase,
            resumed: false,
        };
        self.commit(Mutation::SessionJoined { session });
        Ok(joined)
    }

    pub fn session(&self, token: &SessionToken) -> Result<&Session, GameError> {
        self.state.sessions.get(token).ok_or(GameError::UnknownSession)
    }

    pub fn session_view(&self, token: &SessionToken) -> Result<SessionView, GameError> {
        let s = self.session(token)?;
        let g = self.game(&s.game_id)?;
        Ok(SessionView {
            student_id: s.student_id.clone(),
            game_id: g.game_id.clone(),
            game_number: g.game_number,
            session_phase: s.session_phase,
            game_phase: g.phase,
            diagram_submitted: s.diagram_submitted,
        })
    }

    /// The reference diagram, once the session has reached phase 2.
    pub fn phase2_payload(&self, token: &SessionToken) -> Result<&Diagram, GameError> {
        let s = self.session(token)?;
        match s.session_phase {
            SessionPhase::Phase2 | SessionPhase::Done => Ok(&self.game(&s.game_id)?.reference_diagram),
            phase => Err(GameError::OrderViolation(format!(
                "the reference diagram is shown in phase 2; session is in {phase}"
            ))),
        }
    }

    /// Stores the student's diagram. A second submission while phase 1 is
    /// still open replaces the first and flags the answer as resubmitted.
    pub fn submit_diagram(&mut self, token: &SessionToken, diagram: Diagram) -> Result<DiagramAccepted, GameError> {
        let s = self.session(token)?;
        let game = self.game(&s.game_id)?;
        if game.phase == GamePhase::Closed {
            return Err(GameError::Unavailable("the game is closed".into()));
        }
        if !matches!(s.session_phase, SessionPhase::Phase1 | SessionPhase::Waiting)
            || game.phase != GamePhase::Phase1Open
        {
            return Err(GameError::OrderViolation(
                "phase 1 is over; diagrams are no longer accepted".into(),
            ));
        }
        let resubmitted = s.diagram_submitted;
        let session_phase = match game.advance_mode {
            AdvanceMode::Individual => SessionPhase::Phase2,
            AdvanceMode::ProfessorTriggered => SessionPhase::Waiting,
        };
        let answer_id = s.answer_id.clone().unwrap_or_else(AnswerId::random);
        let at = self.clock.now();
        self.commit(Mutation::DiagramSubmitted {
            session_token: token.clone(),
            answer_id,
            diagram,
            at,
        });
        Ok(DiagramAccepted {
            accepted: true,
            session_phase,
            resubmitted,
        })
    }

    /// Stores the student's path list and grades the answer. Sending the
    /// identical list again is acknowledged without effect.
    pub fn submit_paths(&mut self, token: &SessionToken, paths: Vec<NodePath>) -> Result<PathsAccepted, GameError> {
        let s = self.session(token)?;
        let game = self.game(&s.game_id)?;
        if game.phase == GamePhase::Closed {
            return Err(GameError::Unavailable("the game is closed".into()));
        }
        let answer = s
            .answer_id
            .as_ref()
            .and_then(|id| self.state.answers.iter().find(|a| &a.answer_id == id));
        match s.session_phase {
            SessionPhase::Phase2 => {}
            SessionPhase::Done => {
                if answer.and_then(|a| a.paths.as_ref()) == Some(&paths) {
                    return Ok(PathsAccepted {
                        accepted: true,
                        done: true,
                        repeated: true,
                    });
                }
                return Err(GameError::OrderViolation("paths were already submitted".into()));
            }
            phase => {
                return Err(GameError::OrderViolation(format!(
                    "paths are submitted in phase 2; session is in {phase}"
                )))
            }
        }

        let blank;
        let submitted = match answer.and_then(|a| a.diagram.as_ref()) {
            Some(d) => d,
            None => {
                blank = Diagram::new(game.reference_diagram.canvas());
                &blank
            }
        };
        let analysis = analyze_answer(submitted, &paths, Some(&game.reference_diagram), game.reference_cc)
            .expect("stored games have a positive reference CC");
        let answer_id = answer.map(|a| a.answer_id.clone()).unwrap_or_else(AnswerId::random);
        let at = self.clock.now();
        self.commit(Mutation::PathsSubmitted {
            session_token: token.clone(),
            answer_id,
            paths,
            analysis,
            at,
        });
        Ok(PathsAccepted {
            accepted: true,
            done: true,
            repeated: false,
        })
    }

    fn sessions_of<'a>(&'a self, game_id: &'a GameId) -> impl Iterator<Item = &'a Session> + 'a {
        self.state.sessions.values().filter(move |s| &s.game_id == game_id)
    }

    // ---- replay ------------------------------------------------------

    /// Applies one record. Used both for live commits and for restore.
    pub fn apply(&mut self, m: &Mutation) -> Result<(), ReplayError> {
        let fail = |reason: String| ReplayError {
            record: m.kind(),
            reason,
        };
        let state = &mut self.state;
        match m {
            Mutation::GameCreated { game } => {
                if state.games.contains_key(&game.game_id) {
                    return Err(fail(format!("game {} exists", game.game_id)));
                }
                state.games.insert(game.game_id.clone(), game.clone());
            }
            Mutation::GameOpened { game_id } => {
                set_phase(state, game_id, GamePhase::Created, GamePhase::Phase1Open).map_err(fail)?
            }
            Mutation::GameAdvanced { game_id } => {
                set_phase(state, game_id, GamePhase::Phase1Open, GamePhase::Phase2Open).map_err(fail)?;
                for s in state.sessions.values_mut().filter(|s| &s.game_id == game_id) {
                    if matches!(s.session_phase, SessionPhase::Phase1 | SessionPhase::Waiting) {
                        s.session_phase = SessionPhase::Phase2;
                    }
                }
            }
            Mutation::GameClosed { game_id } => {
                set_phase(state, game_id, GamePhase::Phase2Open, GamePhase::Closed).map_err(fail)?
            }
            Mutation::SessionJoined { session } => {
                if !state.games.contains_key(&session.game_id) {
                    return Err(fail(format!("unknown game {}", session.game_id)));
                }
                if state.sessions.contains_key(&session.session_token) {
                    return Err(fail("session exists".into()));
                }
                state.sessions.insert(session.session_token.clone(), session.clone());
            }
            Mutation::DiagramSubmitted {
                session_token,
                answer_id,
                diagram,
                at,
            } => {
                let session = state
                    .sessions
                    .get_mut(session_token)
                    .ok_or_else(|| fail("unknown session".into()))?;
                let game = state
                    .games
                    .get(&session.game_id)
                    .ok_or_else(|| fail("unknown game".into()))?;
                session.diagram_submitted = true;
                session.session_phase = match game.advance_mode {
                    AdvanceMode::Individual => SessionPhase::Phase2,
                    AdvanceMode::ProfessorTriggered => SessionPhase::Waiting,
                };
                session.answer_id = Some(answer_id.clone());
                match state.answers.iter_mut().find(|a| &a.answer_id == answer_id) {
                    Some(answer) => {
                        if let (Some(old), Some(old_at)) = (answer.diagram.take(), answer.submitted_at_diagram) {
                            answer.diagram_history.push(DiagramVersion {
                                diagram: old,
                                submitted_at: old_at,
                            });
                        }
                        answer.diagram = Some(diagram.clone());
                        answer.submitted_at_diagram = Some(*at);
                        answer.resubmitted = true;
                    }
                    None => state.answers.push(Answer {
                        answer_id: answer_id.clone(),
                        student_id: session.student_id.clone(),
                        game_id: game.game_id.clone(),
                        game_number: game.game_number,
                        played_at: session.joined_at,
                        submitted_at_diagram: Some(*at),
                        submitted_at_paths: None,
                        diagram: Some(diagram.clone()),
                        diagram_history: Vec::new(),
                        resubmitted: false,
                        diagram_missing: false,
                        paths: None,
                        analysis: None,
                    }),
                }
            }
            Mutation::PathsSubmitted {
                session_token,
                answer_id,
                paths,
                analysis,
                at,
            } => {
                let session = state
                    .sessions
                    .get_mut(session_token)
                    .ok_or_else(|| fail("unknown session".into()))?;
                let game = state
                    .games
                    .get(&session.game_id)
                    .ok_or_else(|| fail("unknown game".into()))?;
                session.session_phase = SessionPhase::Done;
                session.answer_id = Some(answer_id.clone());
                let answer = match state.answers.iter().position(|a| &a.answer_id == answer_id) {
                    Some(i) => &mut state.answers[i],
                    None => {
                        state.answers.push(Answer {
                            answer_id: answer_id.clone(),
                            student_id: session.student_id.clone(),
                            game_id: game.game_id.clone(),
                            game_number: game.game_number,
                            played_at: session.joined_at,
                            submitted_at_diagram: None,
                            submitted_at_paths: None,
                            diagram: None,
                            diagram_history: Vec::new(),
                            resubmitted: false,
                            diagram_missing: true,
                            paths: None,
                            analysis: None,
                        });
                        state.answers.last_mut().expect("just pushed")
                    }
                };
                answer.paths = Some(paths.clone());
                answer.analysis = Some(analysis.clone());
                answer.submitted_at_paths = Some(*at);
            }
            Mutation::AnswerDeleted { answer_id } => {
                let before = state.answers.len();
                state.answers.retain(|a| &a.answer_id != answer_id);
                if state.answers.len() == before {
                    return Err(fail(format!("unknown answer {answer_id}")));
                }
                for s in state.sessions.values_mut() {
                    if s.answer_id.as_ref() == Some(answer_id) {
                        s.answer_id = None;
                    }
                }
            }
        }
        Ok(())
    }
}

fn set_phase(state: &mut ServiceState, game_id: &GameId, from: GamePhase, to: GamePhase) -> Result<(), String> {
    let game = state
        .games
        .get_mut(game_id)
        .ok_or_else(|| format!("unknown game {game_id}"))?;
    if game.phase != from {
        return Err(format!("game {game_id} is {} not {from}", game.phase));
    }
    game.phase = to;
    Ok(())
}
