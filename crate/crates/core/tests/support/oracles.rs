//! Brute-force reference implementations and randomized drivers shared by the
//! core integration tests and the workspace acceptance target.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use flowclass_core::game::{
    AdvanceMode, GameError, GameId, GamePhase, GameService, ManualClock, Mutation, NewGame, ServiceState, SessionPhase,
    SessionToken,
};
use flowclass_core::grading::graphs_equivalent;
use flowclass_core::{
    samples, Canvas, Diagram, EdgeShape, NodePath, NodeType, PathFailure, PathIndex, PathVerdict, Point,
};
use rand::seq::SliceRandom;
use rand::Rng;

// ---- graphs -------------------------------------------------------------

pub fn build(n: u32, edges: &[(u32, u32)]) -> Diagram {
    let mut d = Diagram::new(Canvas::new(64, 64).unwrap());
    for i in 0..n {
        d.insert_node(NodeType::Process, Point::new(i as i32, (i * 7 % 11) as i32))
            .unwrap();
    }
    for &(a, b) in edges {
        d.connect(a, b, EdgeShape::Straight).unwrap();
    }
    d
}

/// Every ordered pair over `1..=n` (self-loops included) with probability `p`.
pub fn random_edges(rng: &mut impl Rng, n: u32, p: f64) -> Vec<(u32, u32)> {
    let mut edges = Vec::new();
    for a in 1..=n {
        for b in 1..=n {
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges.shuffle(rng);
    edges
}

// ---- path validation ----------------------------------------------------

/// Adjacency matrix indexed by node number; row and column 0 unused.
pub struct Matrix {
    n: u32,
    adj: Vec<Vec<bool>>,
}

impl Matrix {
    pub fn new(n: u32, edges: &[(u32, u32)]) -> Self {
        let mut adj = vec![vec![false; n as usize + 1]; n as usize + 1];
        for &(a, b) in edges {
            adj[a as usize][b as usize] = true;
        }
        Self { n, adj }
    }

    fn known(&self, k: u32) -> bool {
        (1..=self.n).contains(&k)
    }

    /// The first offending index is the smallest of: an index holding an
    /// unknown number, or an index `i` whose pair `(i, i + 1)` has two known
    /// endpoints but no edge.
    pub fn verdict(&self, path: &[u32]) -> PathVerdict {
        let unknown = path.iter().position(|&k| !self.known(k));
        let missing = path
            .windows(2)
            .position(|w| self.known(w[0]) && self.known(w[1]) && !self.adj[w[0] as usize][w[1] as usize]);
        match (unknown, missing) {
            (None, None) => PathVerdict::Valid,
            (Some(u), m) if m.is_none_or(|m| u <= m) => PathVerdict::Invalid {
                position: u,
                failure: PathFailure::UnknownNode { number: path[u] },
            },
            (_, None) => unreachable!("handled above"),
            (_, Some(m)) => PathVerdict::Invalid {
                position: m,
                failure: PathFailure::MissingEdge {
                    from: path[m],
                    to: path[m + 1],
                },
            },
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Tally {
    pub graphs: u64,
    pub checks: u64,
    pub disagreements: u64,
}

/// Calls `f` for every sequence of length `len` over `lo..=hi`, reusing one buffer.
fn for_each_sequence(len: usize, lo: u32, hi: u32, buf: &mut [u32; 8], mut f: impl FnMut(&[u32])) {
    buf[..len].fill(lo);
    loop {
        f(&buf[..len]);
        let mut i = len;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if buf[i] < hi {
                buf[i] += 1;
                break;
            }
            buf[i] = lo;
        }
    }
}

/// Every digraph on `n` nodes (self-loops included), every path of 2 to
/// `max_len` entries over `lo..=hi`.
pub fn exhaustive_paths(n: u32, max_len: usize, lo: u32, hi: u32) -> Tally {
    let pairs: Vec<(u32, u32)> = (1..=n).flat_map(|a| (1..=n).map(move |b| (a, b))).collect();
    let mut tally = Tally::default();
    let mut buf = [0u32; 8];
    for mask in 0u64..(1u64 << pairs.len()) {
        let edges: Vec<(u32, u32)> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &p)| p)
            .collect();
        let index = PathIndex::new(&build(n, &edges));
        let oracle = Matrix::new(n, &edges);
        tally.graphs += 1;
        for len in 2..=max_len {
            for_each_sequence(len, lo, hi, &mut buf, |path| {
                tally.checks += 1;
                if index.check(path).unwrap() != oracle.verdict(path) {
                    tally.disagreements += 1;
                }
            });
        }
    }
    tally
}

/// Random digraphs with `n <= max_n` and random paths over `0..=n + 1`.
pub fn random_paths(rng: &mut impl Rng, cases: u64, max_n: u32) -> Tally {
    let mut tally = Tally::default();
    for _ in 0..cases {
        let n = rng.random_range(1..=max_n);
        let p = rng.random_range(0.1..0.9);
        let edges = random_edges(rng, n, p);
        let index = PathIndex::new(&build(n, &edges));
        let oracle = Matrix::new(n, &edges);
        let len = rng.random_range(2..=12);
        // bias towards walks so valid paths are common
        let walk = rng.random_bool(0.5);
        let mut path = vec![rng.random_range(0..=n + 1)];
        while path.len() < len {
            let last = *path.last().unwrap();
            let succ: Vec<u32> = edges.iter().filter(|e| e.0 == last).map(|e| e.1).collect();
            let next = if walk && !succ.is_empty() && rng.random_bool(0.9) {
                succ[rng.random_range(0..succ.len())]
            } else {
                rng.random_range(0..=n + 1)
            };
            path.push(next);
        }
        tally.graphs += 1;
        tally.checks += 1;
        if index.check(&path).unwrap() != oracle.verdict(&path) {
            tally.disagreements += 1;
        }
    }
    tally
}

// ---- isomorphism ---------------------------------------------------------

/// Heap's algorithm over all permutations of `0..n`.
fn permutations(n: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    if f(&p) {
        return true;
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            if f(&p) {
                return true;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    false
}

pub fn isomorphic_by_enumeration(n: u32, a: &[(u32, u32)], b: &[(u32, u32)]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let target: BTreeSet<(u32, u32)> = b.iter().copied().collect();
    permutations(n as usize, |p| {
        a.iter()
            .all(|&(x, y)| target.contains(&(p[x as usize - 1] as u32 + 1, p[y as usize - 1] as u32 + 1)))
    })
}

pub fn relabel(rng: &mut impl Rng, n: u32, edges: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let mut p: Vec<u32> = (1..=n).collect();
    p.shuffle(rng);
    let mut out: Vec<(u32, u32)> = edges
        .iter()
        .map(|&(a, b)| (p[a as usize - 1], p[b as usize - 1]))
        .collect();
    out.shuffle(rng);
    out
}

#[derive(Debug, Default, Clone, Copy)]
pub struct IsoTally {
    pub pairs: u64,
    pub isomorphic: u64,
    pub disagreements: u64,
    pub label_exact_without_iso: u64,
}

/// Half the pairs are relabelings, the rest independent graphs with the same
/// node and edge counts.
pub fn isomorphism_pairs(rng: &mut impl Rng, pairs: u64, max_n: u32) -> IsoTally {
    let mut tally = IsoTally::default();
    for i in 0..pairs {
        let n = rng.random_range(1..=max_n);
        let p = rng.random_range(0.15..0.7);
        let a = random_edges(rng, n, p);
        let b = if i % 2 == 0 {
            relabel(rng, n, &a)
        } else {
            let mut b = random_edges(rng, n, 1.0);
            b.truncate(a.len());
            b
        };
        let expected = isomorphic_by_enumeration(n, &a, &b);
        let eq = graphs_equivalent(&build(n, &a), &build(n, &b));
        tally.pairs += 1;
        tally.isomorphic += expected as u64;
        if eq.is_isomorphic() != Some(expected) {
            tally.disagreements += 1;
        }
        if eq.label_exact && eq.is_isomorphic() != Some(true) {
            tally.label_exact_without_iso += 1;
        }
    }
    tally
}

// ---- numbering -----------------------------------------------------------

/// One random editing sequence; returns the first violation found.
pub fn numbering_sequence(rng: &mut impl Rng, len: usize) -> Result<(), String> {
    let mut d = Diagram::new(Canvas::new(30, 20).unwrap());
    let sorted_numbers = |d: &Diagram| {
        let mut v: Vec<u32> = d.process_nodes().filter_map(|n| n.number()).collect();
        v.sort_unstable();
        v
    };
    for step in 0..len {
        match rng.random_range(0..10) {
            0..=4 => {
                let used = sorted_numbers(&d);
                let smallest = (1..).find(|k| !used.contains(k)).unwrap();
                let star = rng.random_bool(0.2);
                let kind = if star { NodeType::Star } else { NodeType::Process };
                let ins = d
                    .insert_node(kind, Point::new(rng.random_range(0..=30), rng.random_range(0..=20)))
                    .map_err(|e| e.to_string())?;
                if !star && ins.number != Some(smallest) {
                    return Err(format!(
                        "step {step}: got {:?}, smallest free is {smallest}",
                        ins.number
                    ));
                }
            }
            5..=7 => {
                let ids: Vec<_> = d
                    .nodes()
                    .iter()
                    .map(|n| n.id.clone())
                    .chain(d.edges().iter().map(|e| e.id.clone()))
                    .collect();
                if !ids.is_empty() {
                    d.delete_item(&ids[rng.random_range(0..ids.len())])
                        .map_err(|e| e.to_string())?;
                }
            }
            8 => {
                let n = d.process_count() as u32;
                if n > 0 {
                    let _ = d.connect(rng.random_range(1..=n), rng.random_range(1..=n), EdgeShape::Straight);
                }
            }
            _ => {
                if rng.random_bool(0.2) {
                    d.reset();
                }
            }
        }
        let n = d.process_count() as u32;
        if sorted_numbers(&d) != (1..=n).collect::<Vec<_>>() {
            return Err(format!("step {step}: numbers {:?} for n = {n}", sorted_numbers(&d)));
        }
    }
    Ok(())
}

// ---- lifecycle -------------------------------------------------------------

const CODES: [&str; 2] = ["ALPHA1", "BRAVO2"];

#[derive(Debug, Clone)]
struct ModelGame {
    id: GameId,
    number: u32,
    code: usize,
    mode: AdvanceMode,
    phase: GamePhase,
}

#[derive(Debug, Clone)]
struct ModelSession {
    token: SessionToken,
    game: usize,
    student: String,
    phase: SessionPhase,
    diagram: bool,
    has_answer: bool,
    paths: Option<Vec<NodePath>>,
}

#[derive(Default)]
struct Model {
    games: Vec<ModelGame>,
    sessions: Vec<ModelSession>,
}

#[derive(Debug, Default, Clone)]
pub struct LifecycleTally {
    pub sequences: u64,
    pub operations: u64,
    pub accepted: u64,
    pub illegal_accepted: u64,
    pub legal_rejected: u64,
    pub invariant_violations: u64,
    pub replay_mismatches: u64,
    pub first_problem: Option<String>,
}

impl LifecycleTally {
    pub fn clean(&self) -> bool {
        self.illegal_accepted == 0
            && self.legal_rejected == 0
            && self.invariant_violations == 0
            && self.replay_mismatches == 0
    }

    fn note(&mut self, msg: String) {
        if self.first_problem.is_none() {
            self.first_problem = Some(msg);
        }
    }
}

fn candidate_paths(rng: &mut impl Rng) -> Vec<NodePath> {
    match rng.random_range(0..3) {
        0 => samples::loop_with_branch().basis,
        1 => samples::mistaken_paths(),
        _ => vec!["1-2".parse().unwrap()],
    }
}

pub fn lifecycle_fuzz(rng: &mut impl Rng, sequences: u64, max_len: usize) -> LifecycleTally {
    let mut tally = LifecycleTally::default();
    for seq in 0..sequences {
        let start = chrono::DateTime::from_timestamp(1_770_000_000 + seq as i64, 0).unwrap();
        let mut svc = GameService::new(Arc::new(ManualClock::starting_at(start)));
        let mut model = Model::default();
        let mut last_counts: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
        let len = rng.random_range(1..=max_len);
        for step in 0..len {
            let (legal, result, what) = step_once(rng, &mut svc, &mut model);
            tally.operations += 1;
            match (legal, result) {
                (true, Ok(())) => tally.accepted += 1,
                (false, Err(_)) => {}
                (false, Ok(())) => {
                    tally.illegal_accepted += 1;
                    tally.note(format!("seq {seq} step {step}: illegal {what} accepted"));
                }
                (true, Err(e)) => {
                    tally.legal_rejected += 1;
                    tally.note(format!("seq {seq} step {step}: legal {what} rejected: {e}"));
                }
            }
            if let Err(msg) = check_invariants(&svc, &model, &mut last_counts) {
                tally.invariant_violations += 1;
                tally.note(format!("seq {seq} step {step} after {what}: {msg}"));
            }
        }
        let journal: Vec<Mutation> = svc.take_journal();
        let text: Vec<String> = journal.iter().map(|m| serde_json::to_string(m).unwrap()).collect();
        let decoded = text.iter().map(|t| serde_json::from_str::<Mutation>(t).unwrap());
        match GameService::restore(
            ServiceState::default(),
            decoded,
            Arc::new(ManualClock::starting_at(start)),
        ) {
            Ok(r) if r.state() == svc.state() => {}
            _ => {
                tally.replay_mismatches += 1;
                tally.note(format!("seq {seq}: journal replay differs"));
            }
        }
        tally.sequences += 1;
    }
    tally
}

fn step_once(rng: &mut impl Rng, svc: &mut GameService, m: &mut Model) -> (bool, Result<(), GameError>, &'static str) {
    match rng.random_range(0..100) {
        0..=7 => {
            let valid = rng.random_bool(0.85);
            let code = rng.random_range(0..CODES.len());
            let mode = if rng.random_bool(0.5) {
                AdvanceMode::ProfessorTriggered
            } else {
                AdvanceMode::Individual
            };
            let sample = if rng.random_bool(0.5) {
                samples::loop_with_branch()
            } else {
                samples::diamond()
            };
            let mut paths = sample.basis;
            if !valid {
                paths.push("1-2".parse().unwrap());
            }
            let res = svc.create_game(NewGame {
                reference_diagram: sample.diagram,
                reference_paths: paths,
                code: CODES[code].into(),
                advance_mode: mode,
            });
            if let Ok(created) = &res {
                if valid {
                    m.games.push(ModelGame {
                        id: created.game_id.clone(),
                        number: m.games.len() as u32 + 1,
                        code,
                        mode,
                        phase: GamePhase::Created,
                    });
                    if created.game_number != m.games.len() as u32 {
                        return (
                            valid,
                            Err(GameError::InvalidInput("wrong game number".into())),
                            "create",
                        );
                    }
                }
            }
            (valid, res.map(|_| ()), "create")
        }
        8..=20 => {
            let Some(g) = pick_game(rng, m) else {
                return (false, Err(GameError::AccessDenied), "noop");
            };
            let (from, to, what) = match rng.random_range(0..3) {
                0 => (GamePhase::Created, GamePhase::Phase1Open, "open"),
                1 => (GamePhase::Phase1Open, GamePhase::Phase2Open, "advance"),
                _ => (GamePhase::Phase2Open, GamePhase::Closed, "close"),
            };
            let id = m.games[g].id.clone();
            let res = match what {
                "open" => svc.open_game(&id).map(|_| ()),
                "advance" => svc.advance_game(&id).map(|_| ()),
                _ => svc.close_game(&id).map(|_| ()),
            };
            let legal = m.games[g].phase == from;
            if legal && res.is_ok() {
                m.games[g].phase = to;
                if what == "advance" {
                    for s in m.sessions.iter_mut().filter(|s| s.game == g) {
                        if matches!(s.phase, SessionPhase::Phase1 | SessionPhase::Waiting) {
                            s.phase = SessionPhase::Phase2;
                        }
                    }
                }
            }
            (legal, res, what)
        }
        21..=45 => {
            let number = rng.random_range(1..=m.games.len() as u32 + 1);
            let student = format!("S{}", rng.random_range(0..6));
            let code = if rng.random_bool(0.9) {
                m.games.get(number as usize - 1).map_or(0, |g| g.code)
            } else {
                rng.random_range(0..CODES.len())
            };
            let res = svc.join(CODES[code], &student, number);
            let target = m
                .games
                .iter()
                .position(|g| g.number == number && g.code == code)
                .filter(|&g| matches!(m.games[g].phase, GamePhase::Phase1Open | GamePhase::Phase2Open));
            let legal = target.is_some();
            if let (Some(g), Ok(joined)) = (target, &res) {
                let existing = m.sessions.iter().find(|s| s.game == g && s.student == student);
                match existing {
                    Some(s) if !joined.resumed || s.token != joined.session_token => {
                        return (
                            legal,
                            Err(GameError::InvalidInput("rejoin did not resume".into())),
                            "join",
                        )
                    }
                    Some(_) => {}
                    None => m.sessions.push(ModelSession {
                        token: joined.session_token.clone(),
                        game: g,
                        student,
                        phase: if m.games[g].phase == GamePhase::Phase1Open {
                            SessionPhase::Phase1
                        } else {
                            SessionPhase::Phase2
                        },
                        diagram: false,
                        has_answer: false,
                        paths: None,
                    }),
                }
            }
            (legal, res.map(|_| ()), "join")
        }
        46..=65 => {
            let Some(i) = pick_session(rng, m) else {
                let res = svc.submit_diagram(&SessionToken::new("forged"), samples::diamond().diagram);
                return (false, res.map(|_| ()), "submit_diagram");
            };
            let diagram = if rng.random_bool(0.5) {
                samples::loop_with_branch()
            } else {
                samples::diamond()
            }
            .diagram;
            let res = svc.submit_diagram(&m.sessions[i].token.clone(), diagram);
            let s = &m.sessions[i];
            let game = &m.games[s.game];
            let legal =
                game.phase == GamePhase::Phase1Open && matches!(s.phase, SessionPhase::Phase1 | SessionPhase::Waiting);
            if legal && res.is_ok() {
                let mode = game.mode;
                let s = &mut m.sessions[i];
                s.diagram = true;
                s.has_answer = true;
                s.phase = match mode {
                    AdvanceMode::Individual => SessionPhase::Phase2,
                    AdvanceMode::ProfessorTriggered => SessionPhase::Waiting,
                };
            }
            (legal, res.map(|_| ()), "submit_diagram")
        }
        66..=89 => {
            let Some(i) = pick_session(rng, m) else {
                return (false, Err(GameError::UnknownSession), "noop");
            };
            let paths = candidate_paths(rng);
            let res = svc.submit_paths(&m.sessions[i].token.clone(), paths.clone());
            let s = &m.sessions[i];
            let open = m.games[s.game].phase != GamePhase::Closed;
            let legal = open
                && match s.phase {
                    SessionPhase::Phase2 => true,
                    SessionPhase::Done => s.has_answer && s.paths.as_ref() == Some(&paths),
                    _ => false,
                };
            if legal && res.is_ok() && s.phase == SessionPhase::Phase2 {
                let s = &mut m.sessions[i];
                s.phase = SessionPhase::Done;
                s.has_answer = true;
                s.paths = Some(paths);
            }
            (legal, res.map(|_| ()), "submit_paths")
        }
        _ => {
            let owners: Vec<usize> = (0..m.sessions.len()).filter(|&i| m.sessions[i].has_answer).collect();
            if owners.is_empty() || rng.random_bool(0.1) {
                let res = svc.delete_answer(&flowclass_core::game::AnswerId::new("missing"));
                return (false, res, "delete_answer");
            }
            let i = owners[rng.random_range(0..owners.len())];
            let Some(id) = svc.session(&m.sessions[i].token).ok().and_then(|s| s.answer_id.clone()) else {
                return (
                    true,
                    Err(GameError::NotFound("session has no answer".into())),
                    "delete_answer",
                );
            };
            let res = svc.delete_answer(&id);
            if res.is_ok() {
                m.sessions[i].has_answer = false;
                m.sessions[i].paths = None;
            }
            (true, res, "delete_answer")
        }
    }
}

fn pick_game(rng: &mut impl Rng, m: &Model) -> Option<usize> {
    (!m.games.is_empty()).then(|| rng.random_range(0..m.games.len()))
}

fn pick_session(rng: &mut impl Rng, m: &Model) -> Option<usize> {
    (!m.sessions.is_empty()).then(|| rng.random_range(0..m.sessions.len()))
}

fn check_invariants(
    svc: &GameService,
    m: &Model,
    last: &mut BTreeMap<usize, (usize, usize, usize)>,
) -> Result<(), String> {
    for (g, game) in m.games.iter().enumerate() {
        let actual = svc.game(&game.id).map_err(|e| e.to_string())?;
        if actual.phase != game.phase {
            return Err(format!(
                "game {} is {} in the service, {} in the model",
                game.number, actual.phase, game.phase
            ));
        }
        let snap = svc.monitor(&game.id).map_err(|e| e.to_string())?;
        let mine: Vec<&ModelSession> = m.sessions.iter().filter(|s| s.game == g).collect();
        let done = |s: &&&ModelSession| s.phase == SessionPhase::Done;
        let expected = (
            mine.len(),
            mine.iter().filter(|s| s.diagram).count(),
            mine.iter().filter(|s| s.diagram).filter(done).count(),
        );
        let got = (snap.players_count, snap.diagrams_submitted, snap.paths_submitted);
        if got != expected {
            return Err(format!("monitor {got:?}, model {expected:?}"));
        }
        if snap.paths_without_diagram != mine.iter().filter(|s| !s.diagram).filter(done).count() {
            return Err("paths_without_diagram off".into());
        }
        if !(got.2 <= got.1 && got.1 <= got.0) {
            return Err(format!("counter order broken: {got:?}"));
        }
        let prev = last.insert(g, got).unwrap_or((0, 0, 0));
        if got.0 < prev.0 || got.1 < prev.1 || got.2 < prev.2 {
            return Err(format!("counters went down: {prev:?} -> {got:?}"));
        }
    }
    for s in &m.sessions {
        let actual = svc.session(&s.token).map_err(|e| e.to_string())?;
        if actual.session_phase != s.phase {
            return Err(format!(
                "session {} is {} not {}",
                s.student, actual.session_phase, s.phase
            ));
        }
        match (&actual.answer_id, s.has_answer) {
            (Some(id), true) => {
                let a = svc.answer(id).map_err(|e| e.to_string())?;
                if a.student_id != actual.student_id || a.game_id != actual.game_id {
                    return Err("answer attributed to the wrong session".into());
                }
            }
            (None, false) => {}
            _ => return Err(format!("answer presence differs for {}", s.student)),
        }
    }
    let live = m.sessions.iter().filter(|s| s.has_answer).count();
    if svc.list_answers(None).len() != live {
        return Err(format!(
            "{} answers stored, {live} expected",
            svc.list_answers(None).len()
        ));
    }
    for (c, code) in CODES.iter().enumerate() {
        let listed: Vec<u32> = svc.list_games(code).iter().map(|g| g.game_number).collect();
        let expected: Vec<u32> = m
            .games
            .iter()
            .filter(|g| g.code == c && matches!(g.phase, GamePhase::Phase1Open | GamePhase::Phase2Open))
            .map(|g| g.number)
            .collect();
        if listed != expected {
            return Err(format!("code {code} lists {listed:?}, expected {expected:?}"));
        }
    }
    Ok(())
}
