//! Classroom load simulator: a professor plus `n` students playing one game
//! end to end over the wire protocol, checking the server's books afterwards.

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{anyhow, Context};
use flowclass_core::game::{AdvanceMode, GameId, SessionPhase, SessionToken};
use flowclass_core::{samples, Canvas, Diagram, NodeType, Point};
use futures::StreamExt;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;
use tokio::task::JoinSet;

use crate::api::CreateGameRequest;
use crate::client::Client;
use crate::events::{EventKind, EventMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Everybody plays both phases.
    AllComplete,
    /// The second half of the class leaves after phase 1.
    HalfDrop,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub server: String,
    pub secret: String,
    pub students: usize,
    pub profile: Profile,
    pub seed: u64,
    /// Upper bound of the random pause before each student action.
    pub jitter: Duration,
    /// How long a student waits for phase 2 to start.
    pub phase_timeout: Duration,
}

impl SimConfig {
    pub fn new(server: impl Into<String>, secret: impl Into<String>, students: usize) -> Self {
        Self {
            server: server.into(),
            secret: secret.into(),
            students,
            profile: Profile::AllComplete,
            seed: 1,
            jitter: Duration::from_millis(40),
            phase_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub players: usize,
    pub diagrams: usize,
    pub paths: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StudentOutcome {
    pub student_id: String,
    pub diagram_acknowledged: bool,
    pub paths_acknowledged: bool,
    /// Distinct `phase_advanced` events after dropping repeated sequence numbers.
    pub phase_advanced_seen: usize,
    pub duplicates_dropped: usize,
    pub resyncs: usize,
    pub reconnects: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimReport {
    pub students: usize,
    pub profile: Option<Profile>,
    pub game_id: Option<GameId>,
    pub expected_complete: usize,
    pub answers_stored: usize,
    pub answers_complete: usize,
    pub monitor_after_phase1: Counters,
    pub monitor_final: Counters,
    pub outcomes: Vec<StudentOutcome>,
    pub failures: Vec<String>,
}

impl SimReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// What one student's event listener has seen so far.
#[derive(Default)]
struct Seen {
    last_seq: u64,
    phase_advanced: usize,
    duplicates: usize,
    resyncs: usize,
    reconnects: usize,
}

struct Student {
    id: String,
    token: SessionToken,
    completes: bool,
    seen: Arc<Mutex<Seen>>,
    advanced: watch::Receiver<usize>,
    diagram_ack: bool,
}

/// Runs one game. `between_phases` is awaited after every student has
/// submitted a diagram and before the professor opens phase 2; tests use it
/// to restart the server.
pub async fn simulate<F, Fut>(cfg: SimConfig, between_phases: F) -> anyhow::Result<SimReport>
where
    F: FnOnce() -> Fut,
    Fut: Future<Output = anyhow::Result<()>>,
{
    let mut report = SimReport {
        students: cfg.students,
        profile: Some(cfg.profile),
        ..SimReport::default()
    };
    if cfg.students == 0 {
        return Ok(report);
    }
    let prof = Client::professor(&cfg.server, &cfg.secret);
    prof.health().await.context("server unreachable")?;

    let sample = samples::loop_with_branch();
    let created = prof
        .create_game(&CreateGameRequest {
            reference_diagram: sample.diagram.clone(),
            reference_paths: sample.basis.clone(),
            code: None,
            advance_mode: AdvanceMode::ProfessorTriggered,
        })
        .await?;
    let game = created.game_id.clone();
    report.game_id = Some(game.clone());
    prof.open_game(&game).await?;

    let completing = match cfg.profile {
        Profile::AllComplete => cfg.students,
        Profile::HalfDrop => cfg.students - cfg.students / 2,
    };
    report.expected_complete = completing;
    let (stop_tx, stop_rx) = watch::channel(false);
    let mut listeners = JoinSet::new();

    // phase 1
    let mut tasks = JoinSet::new();
    for i in 0..cfg.students {
        let client = Client::new(&cfg.server);
        let code = created.code.clone();
        let jitter = cfg.jitter;
        let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        tasks.spawn(async move {
            let mut rng = StdRng::seed_from_u64(seed);
            let id = format!("AM{:06}", 100_000 + i);
            pause(&mut rng, jitter).await;
            let joined = client.join(&code, &id, created.game_number).await?;
            let diagram = student_diagram(&mut rng);
            pause(&mut rng, jitter).await;
            let ack = client.submit_diagram(&joined.session_token, &diagram).await?;
            anyhow::Ok((i, id, joined.session_token, ack.accepted))
        });
    }
    let mut students: BTreeMap<usize, Student> = BTreeMap::new();
    while let Some(res) = tasks.join_next().await {
        let (i, id, token, diagram_ack) = res??;
        let seen = Arc::new(Mutex::new(Seen::default()));
        let (adv_tx, adv_rx) = watch::channel(0usize);
        listeners.spawn(listen(
            Client::new(&cfg.server),
            token.clone(),
            seen.clone(),
            adv_tx,
            stop_rx.clone(),
        ));
        students.insert(
            i,
            Student {
                id,
                token,
                completes: i < completing,
                seen,
                advanced: adv_rx,
                diagram_ack,
            },
        );
    }

    let m = prof.monitor(&game).await?;
    report.monitor_after_phase1 = Counters {
        players: m.players_count,
        diagrams: m.diagrams_submitted,
        paths: m.paths_submitted,
    };
    expect(
        &mut report.failures,
        "monitor after phase 1",
        report.monitor_after_phase1,
        Counters {
            players: cfg.students,
            diagrams: cfg.students,
            paths: 0,
        },
    );

    between_phases().await.context("between-phases hook")?;

    prof.advance_game(&game).await?;

    // phase 2
    let basis = sample.basis.clone();
    let mut tasks = JoinSet::new();
    for (&i, s) in &students {
        let client = Client::new(&cfg.server);
        let token = s.token.clone();
        let completes = s.completes;
        let mut advanced = s.advanced.clone();
        let paths = basis.clone();
        let jitter = cfg.jitter;
        let timeout = cfg.phase_timeout;
        let seed = cfg.seed.wrapping_mul(7_919).wrapping_add(i as u64);
        tasks.spawn(async move {
            let arrived = matches!(
                tokio::time::timeout(timeout, advanced.wait_for(|&n| n > 0)).await,
                Ok(Ok(_))
            );
            if !arrived {
                return Err(anyhow!("student {i} saw no phase_advanced within {timeout:?}"));
            }
            if !completes {
                return Ok((i, false));
            }
            let mut rng = StdRng::seed_from_u64(seed);
            pause(&mut rng, jitter).await;
            let _ = client.phase2(&token).await?;
            let ack = client.submit_paths(&token, &paths).await?;
            Ok((i, ack.accepted))
        });
    }
    let mut paths_ack = BTreeMap::new();
    while let Some(res) = tasks.join_next().await {
        match res? {
            Ok((i, ack)) => {
                paths_ack.insert(i, ack);
            }
            Err(e) => report.failures.push(e.to_string()),
        }
    }

    // books
    let m = prof.monitor(&game).await?;
    report.monitor_final = Counters {
        players: m.players_count,
        diagrams: m.diagrams_submitted,
        paths: m.paths_submitted,
    };
    expect(
        &mut report.failures,
        "final monitor",
        report.monitor_final,
        Counters {
            players: cfg.students,
            diagrams: cfg.students,
            paths: completing,
        },
    );
    let answers = prof.list_answers(Some(&game)).await?;
    report.answers_stored = answers.len();
    report.answers_complete = answers.iter().filter(|a| a.complete).count();
    expect(
        &mut report.failures,
        "stored answers",
        report.answers_stored,
        cfg.students,
    );
    expect(
        &mut report.failures,
        "complete answers",
        report.answers_complete,
        completing,
    );
    let by_student: BTreeMap<&str, _> = answers.iter().map(|a| (a.student_id.as_str(), a)).collect();

    prof.close_game(&game).await?;
    stop_tx.send_replace(true);
    while listeners.join_next().await.is_some() {}

    for (i, s) in &students {
        let seen = s.seen.lock().expect("seen lock");
        let out = StudentOutcome {
            student_id: s.id.clone(),
            diagram_acknowledged: s.diagram_ack,
            paths_acknowledged: paths_ack.get(i).copied().unwrap_or(false),
            phase_advanced_seen: seen.phase_advanced,
            duplicates_dropped: seen.duplicates,
            resyncs: seen.resyncs,
            reconnects: seen.reconnects,
        };
        if out.phase_advanced_seen != 1 {
            report.failures.push(format!(
                "{}: {} phase_advanced events after dedup, expected 1",
                s.id, out.phase_advanced_seen
            ));
        }
        match by_student.get(s.id.as_str()) {
            None if out.diagram_acknowledged => report.failures.push(format!("{}: acknowledged answer missing", s.id)),
            Some(a) if out.paths_acknowledged && !a.complete => {
                report.failures.push(format!("{}: acknowledged paths missing", s.id))
            }
            _ => {}
        }
        report.outcomes.push(out);
    }
    Ok(report)
}

fn expect<T: PartialEq + std::fmt::Debug>(failures: &mut Vec<String>, what: &str, got: T, want: T) {
    if got != want {
        failures.push(format!("{what}: expected {want:?}, got {got:?}"));
    }
}

async fn pause(rng: &mut StdRng, jitter: Duration) {
    let ms = jitter.as_millis() as u64;
    if ms > 0 {
        tokio::time::sleep(Duration::from_millis(rng.random_range(0..=ms))).await;
    }
}

/// The reference flow graph, renumbered at random and redrawn with small
/// position changes. Structurally it is still the reference.
pub fn student_diagram(rng: &mut impl Rng) -> Diagram {
    let reference = samples::loop_with_branch().diagram;
    let canvas: Canvas = reference.canvas();
    let n = reference.process_count() as u32;
    let mut order: Vec<u32> = (1..=n).collect();
    order.shuffle(rng);
    let jitter = |p: Point, rng: &mut dyn rand::RngCore| {
        let dx = rng.random_range(-1..=1);
        let dy = rng.random_range(-1..=1);
        Point::new(
            (p.x + dx).clamp(0, canvas.w as i32),
            (p.y + dy).clamp(0, canvas.h as i32),
        )
    };
    let mut d = Diagram::new(canvas);
    // new number k + 1 is old node order[k]
    let mut renumber = vec![0u32; n as usize + 1];
    for (k, &old) in order.iter().enumerate() {
        let node = reference.node_by_number(old).expect("numbers are dense");
        d.insert_node(NodeType::Process, jitter(node.position, rng))
            .expect("inside canvas");
        renumber[old as usize] = k as u32 + 1;
    }
    for star in reference.nodes().iter().filter(|n| n.is_star()) {
        d.insert_node(NodeType::Star, jitter(star.position, rng))
            .expect("inside canvas");
    }
    for (edge, (from, to)) in reference.edges().iter().zip(reference.numbered_edges()) {
        d.connect(renumber[from as usize], renumber[to as usize], edge.shape)
            .expect("edges of a valid diagram");
    }
    d
}

/// Keeps an event stream open until told to stop, reconnecting with the last
/// processed sequence number and following the resync contract.
async fn listen(
    client: Client,
    token: SessionToken,
    seen: Arc<Mutex<Seen>>,
    advanced: watch::Sender<usize>,
    mut stop: watch::Receiver<bool>,
) {
    let mut first = true;
    while !*stop.borrow() {
        let last = seen.lock().expect("seen lock").last_seq;
        if !first {
            seen.lock().expect("seen lock").reconnects += 1;
        }
        first = false;
        let stream = tokio::select! {
            s = client.session_events(&token, (last > 0).then_some(last)) => s,
            _ = stop.changed() => return,
        };
        let Ok(mut stream) = stream else {
            tokio::time::sleep(Duration::from_millis(100)).await;
            continue;
        };
        loop {
            let frame = tokio::select! {
                f = stream.next() => f,
                _ = stop.changed() => return,
            };
            let Some(Ok(frame)) = frame else { break };
            if frame.event.as_deref() == Some("resync") {
                seen.lock().expect("seen lock").resyncs += 1;
                // resync contract: refetch state; phase is then driven by it
                if let Ok(view) = client.session_state(&token).await {
                    if matches!(view.session_phase, SessionPhase::Phase2 | SessionPhase::Done) {
                        advanced.send_if_modified(|n| {
                            let was_zero = *n == 0;
                            *n = (*n).max(1);
                            was_zero
                        });
                    }
                }
                continue;
            }
            let Ok(msg) = serde_json::from_str::<EventMessage>(&frame.data) else {
                continue;
            };
            let mut s = seen.lock().expect("seen lock");
            if msg.sequence_number <= s.last_seq {
                s.duplicates += 1;
                continue;
            }
            s.last_seq = msg.sequence_number;
            if msg.kind == EventKind::PhaseAdvanced {
                s.phase_advanced += 1;
                advanced.send_replace(s.phase_advanced);
            }
        }
        // stream closed: server went away or restarted
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}
