#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use flowclass_core::game::AdvanceMode;
use flowclass_core::samples;
use flowclass_server::api::CreateGameRequest;
use flowclass_server::client::{EventStream, SseFrame};
use flowclass_server::{start, RunningServer, ServerConfig};
use futures::StreamExt;
use serde_json::Value;

pub const SECRET: &str = "prof-secret";

pub async fn boot(dir: &Path) -> RunningServer {
    boot_with(ServerConfig::new(0, dir.to_owned(), SECRET)).await
}

pub async fn boot_with(config: ServerConfig) -> RunningServer {
    start(config).await.expect("server starts")
}

pub fn loop_game(code: &str) -> CreateGameRequest {
    let sample = samples::loop_with_branch();
    CreateGameRequest {
        reference_diagram: sample.diagram,
        reference_paths: sample.basis,
        code: Some(code.into()),
        advance_mode: AdvanceMode::ProfessorTriggered,
    }
}

/// Reads frames until `want` have arrived or `limit` passes.
pub async fn take_frames(stream: &mut EventStream, want: usize, limit: Duration) -> Vec<SseFrame> {
    let mut out = Vec::new();
    let _ = tokio::time::timeout(limit, async {
        while out.len() < want {
            match stream.next().await {
                Some(Ok(f)) => out.push(f),
                _ => break,
            }
        }
    })
    .await;
    out
}

/// Replaces generated identifiers and timestamps with stable placeholders so
/// transcripts compare byte for byte across runs.
#[derive(Default)]
pub struct Scrubber {
    names: HashMap<String, String>,
}

impl Scrubber {
    pub fn id(&mut self, raw: &str) -> String {
        let next = self.names.len() + 1;
        self.names
            .entry(raw.to_owned())
            .or_insert_with(|| format!("<id-{next}>"))
            .clone()
    }

    pub fn text(&mut self, raw: &str) -> String {
        let mut out = raw.to_owned();
        for (k, v) in &self.names {
            out = out.replace(k.as_str(), v);
        }
        out
    }

    pub fn json(&mut self, v: &mut Value) {
        match v {
            Value::String(s) => {
                if is_generated_id(s) {
                    *s = self.id(s);
                } else if chrono::DateTime::parse_from_rfc3339(s).is_ok() {
                    *s = "<time>".into();
                } else {
                    *s = self.text(s);
                }
            }
            Value::Array(items) => items.iter_mut().for_each(|x| self.json(x)),
            Value::Object(map) => map.values_mut().for_each(|x| self.json(x)),
            _ => {}
        }
    }

    /// Pretty JSON if the body parses, the raw text otherwise.
    pub fn body(&mut self, raw: &str) -> String {
        match serde_json::from_str::<Value>(raw) {
            Ok(mut v) => {
                self.json(&mut v);
                serde_json::to_string_pretty(&v).expect("serializable")
            }
            Err(_) => self.text(raw),
        }
    }
}

fn is_generated_id(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// The `flowclass` binary serving `dir`, killed on drop.
pub struct ServerProcess {
    pub child: std::process::Child,
    pub url: String,
}

impl ServerProcess {
    /// Starts the binary; `port` 0 lets the system choose.
    pub fn spawn(dir: &Path, port: u16) -> Self {
        use std::io::BufRead;
        let mut child = std::process::Command::new(env!("CARGO_BIN_EXE_flowclass"))
            .args(["serve", "--port", &port.to_string(), "--data-dir"])
            .arg(dir)
            .args(["--professor-secret", SECRET])
            .env("RUST_LOG", "warn")
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::null())
            .spawn()
            .expect("spawn flowclass");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut line = String::new();
        std::io::BufReader::new(stdout)
            .read_line(&mut line)
            .expect("read address");
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
            .to_owned();
        Self { child, url }
    }

    pub fn port(&self) -> u16 {
        self.url
            .rsplit(':')
            .next()
            .and_then(|p| p.parse().ok())
            .expect("port in url")
    }

    /// SIGKILL, no shutdown path runs.
    pub fn kill(mut self) {
        self.child.kill().ok();
        self.child.wait().ok();
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        self.child.kill().ok();
        self.child.wait().ok();
    }
}

/// Identifiers collected while playing [`play_step`].
#[derive(Default)]
pub struct Play {
    pub games: Vec<flowclass_core::game::GameId>,
    pub tokens: Vec<flowclass_core::game::SessionToken>,
}

/// Number of steps in [`play_step`].
pub const PLAY_STEPS: usize = 17;

/// Step `i` of a fixed two-game session that touches every kind of accepted
/// mutation. Each step commits exactly one record.
pub async fn play_step(url: &str, play: &mut Play, i: usize) -> anyhow::Result<()> {
    let prof = flowclass_server::client::Client::professor(url, SECRET);
    let student = flowclass_server::client::Client::new(url);
    let sample = samples::loop_with_branch();
    match i {
        0 => play.games.push(prof.create_game(&loop_game("ALPHA1")).await?.game_id),
        1 => {
            let mut req = loop_game("BRAVO2");
            req.advance_mode = AdvanceMode::Individual;
            play.games.push(prof.create_game(&req).await?.game_id);
        }
        2 => {
            prof.open_game(&play.games[0]).await?;
        }
        3 => {
            prof.open_game(&play.games[1]).await?;
        }
        4 => play
            .tokens
            .push(student.join("ALPHA1", "AM000001", 1).await?.session_token),
        5 => play
            .tokens
            .push(student.join("ALPHA1", "AM000002", 1).await?.session_token),
        6 => {
            student
                .submit_diagram(&play.tokens[0], &samples::diamond().diagram)
                .await?;
        }
        7 => {
            student.submit_diagram(&play.tokens[0], &sample.diagram).await?;
        }
        8 => play
            .tokens
            .push(student.join("BRAVO2", "AM000003", 2).await?.session_token),
        9 => {
            student.submit_diagram(&play.tokens[2], &sample.diagram).await?;
        }
        10 => {
            student.submit_paths(&play.tokens[2], &sample.basis).await?;
        }
        11 => {
            prof.advance_game(&play.games[0]).await?;
        }
        12 => {
            student.submit_paths(&play.tokens[1], &sample.basis[..1]).await?;
        }
        13 => {
            student
                .submit_paths(&play.tokens[0], &samples::mistaken_paths())
                .await?;
        }
        14 => play
            .tokens
            .push(student.join("ALPHA1", "AM000004", 1).await?.session_token),
        15 => {
            let answers = prof.list_answers(Some(&play.games[0])).await?;
            let target = answers
                .iter()
                .find(|a| a.student_id.as_str() == "AM000002")
                .ok_or_else(|| anyhow::anyhow!("no answer to delete"))?;
            prof.delete_answer(&target.answer_id).await?;
        }
        16 => {
            prof.close_game(&play.games[0]).await?;
        }
        _ => anyhow::bail!("no step {i}"),
    }
    Ok(())
}

/// Everything a professor can read, as the server sends it.
pub async fn observable(url: &str, play: &Play) -> String {
    let prof = flowclass_server::client::Client::professor(url, SECRET);
    let mut out = prof.list_answers_text(None).await.expect("answers");
    let games = prof.games().await.expect("games");
    out.push('\n');
    out.push_str(&games.to_string());
    for g in &play.games {
        let m = prof.monitor(g).await.expect("monitor");
        out.push('\n');
        out.push_str(&serde_json::to_string(&m).expect("serializable"));
    }
    out
}

/// Plays every step, restarting the server in process after each one and
/// requiring the answer list to come back byte for byte. Returns the number of
/// restarts checked.
pub async fn restart_after_every_step(dir: &Path, snapshot_every: usize) -> Result<usize, String> {
    let config = || {
        let mut c = ServerConfig::new(0, dir.to_owned(), SECRET);
        c.snapshot_every = snapshot_every;
        c
    };
    let mut server = boot_with(config()).await;
    let mut play = Play::default();
    for i in 0..PLAY_STEPS {
        play_step(&server.url(), &mut play, i)
            .await
            .map_err(|e| format!("step {i}: {e}"))?;
        let prof = flowclass_server::client::Client::professor(server.url(), SECRET);
        let answers = prof.list_answers_text(None).await.map_err(|e| e.to_string())?;
        let before = observable(&server.url(), &play).await;
        server.shutdown().await.map_err(|e| e.to_string())?;
        server = boot_with(config()).await;
        let prof = flowclass_server::client::Client::professor(server.url(), SECRET);
        let after = prof.list_answers_text(None).await.map_err(|e| e.to_string())?;
        if answers != after {
            return Err(format!("list_answers changed across the restart after step {i}"));
        }
        if before != observable(&server.url(), &play).await {
            return Err(format!("professor view changed across the restart after step {i}"));
        }
    }
    server.shutdown().await.map_err(|e| e.to_string())?;
    Ok(PLAY_STEPS)
}
