//! Live event fan-out.
//!
//! Every subscriber (one student session, or the professor) owns a mailbox
//! of recent events. Publishing only appends to mailboxes, so it never waits
//! on a slow reader. Sequence numbers are `epoch << 32 | n`, with `n`
//! counting per mailbox and `epoch` bumped on every server start; they
//! increase strictly for each subscriber, including across restarts.
//!
//! A reader presents the last sequence number it processed. If the mailbox
//! can no longer serve everything after it (older epoch, or events dropped
//! for capacity), the reader is told to resync and gets the whole buffer.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use flowclass_core::game::{GameId, SessionToken};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::watch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PhaseAdvanced,
    GameOpened,
    GameClosed,
    MonitorUpdate,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PhaseAdvanced => "phase_advanced",
            EventKind::GameOpened => "game_opened",
            EventKind::GameClosed => "game_closed",
            EventKind::MonitorUpdate => "monitor_update",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMessage {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub game_id: GameId,
    pub sequence_number: u64,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Audience {
    Professor,
    Session(SessionToken),
}

/// Result of reading a mailbox.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    /// The reader missed events and must refetch state.
    pub resync: bool,
    pub events: Vec<EventMessage>,
}

#[derive(Default)]
struct Mailbox {
    sent: u32,
    buffer: VecDeque<EventMessage>,
}

pub struct Hub {
    epoch: u32,
    capacity: usize,
    mailboxes: Mutex<HashMap<Audience, Mailbox>>,
    published: watch::Sender<u64>,
}

pub fn epoch_of(seq: u64) -> u32 {
    (seq >> 32) as u32
}

impl Hub {
    pub fn new(epoch: u32, capacity: usize) -> Self {
        Self {
            epoch,
            capacity: capacity.max(1),
            mailboxes: Mutex::new(HashMap::new()),
            published: watch::channel(0).0,
        }
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn publish(&self, to: Audience, kind: EventKind, game_id: &GameId, payload: Value) {
        {
            let mut boxes = self.mailboxes.lock().expect("hub lock");
            let mailbox = boxes.entry(to).or_default();
            mailbox.sent += 1;
            mailbox.buffer.push_back(EventMessage {
                kind,
                game_id: game_id.clone(),
                sequence_number: (u64::from(self.epoch) << 32) | u64::from(mailbox.sent),
                payload,
            });
            if mailbox.buffer.len() > self.capacity {
                mailbox.buffer.pop_front();
            }
        }
        self.published.send_modify(|v| *v += 1);
    }

    /// Events after `after` (everything buffered when `None`).
    pub fn read(&self, who: &Audience, after: Option<u64>) -> Batch {
        let boxes = self.mailboxes.lock().expect("hub lock");
        let Some(mailbox) = boxes.get(who) else {
            return Batch {
                resync: after.is_some_and(|a| epoch_of(a) != self.epoch),
                events: Vec::new(),
            };
        };
        let all = || mailbox.buffer.iter().cloned().collect();
        match after {
            None => Batch {
                resync: false,
                events: all(),
            },
            Some(a) if epoch_of(a) != self.epoch => Batch {
                resync: true,
                events: all(),
            },
            Some(a) => {
                let first_buffered = mailbox.buffer.front().map_or(u64::MAX, |e| e.sequence_number);
                let next_unsent = (u64::from(self.epoch) << 32) | u64::from(mailbox.sent + 1);
                if a + 1 < first_buffered && a + 1 < next_unsent {
                    // the events right after `a` were evicted
                    Batch {
                        resync: true,
                        events: all(),
                    }
                } else {
                    Batch {
                        resync: false,
                        events: mailbox
                            .buffer
                            .iter()
                            .filter(|e| e.sequence_number > a)
                            .cloned()
                            .collect(),
                    }
                }
            }
        }
    }

    pub fn watch(&self) -> watch::Receiver<u64> {
        self.published.subscribe()
    }
}
