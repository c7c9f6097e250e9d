//! Durable state: `snapshot.json` holds the whole service state as of some
//! record number, `journal.log` holds the records after it, one JSON document
//! per line. Both are plain text and meant to be readable with `jq`.
//!
//! A record is fsynced before the request that produced it is answered. On
//! open, the journal is read up to the first line that is torn, unparsable,
//! out of sequence or rejected by the caller; everything from there on is cut
//! off and the cut is reported.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use flowclass_core::game::{Mutation, ServiceState};
use serde::{Deserialize, Serialize};

const JOURNAL: &str = "journal.log";
const SNAPSHOT: &str = "snapshot.json";
const EPOCH: &str = "epoch";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("data directory {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("snapshot {path} is unreadable: {reason}")]
    Snapshot { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    seq: u64,
    record: Mutation,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    state: ServiceState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    /// 1-based line number of the first dropped line.
    pub line: usize,
    pub byte_offset: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RestoreReport {
    pub snapshot_seq: Option<u64>,
    pub replayed: usize,
    pub truncated: Option<Truncation>,
}

pub struct Store {
    dir: PathBuf,
    journal: File,
    next_seq: u64,
    since_snapshot: usize,
    snapshot_every: usize,
}

impl Store {
    /// Loads the snapshot, hands it to `init`, then feeds every journal record
    /// after it to `apply`.
    pub fn open<S>(
        dir: &Path,
        snapshot_every: usize,
        init: impl FnOnce(ServiceState) -> S,
        mut apply: impl FnMut(&mut S, &Mutation) -> Result<(), String>,
    ) -> Result<(Self, S, RestoreReport), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut report = RestoreReport::default();

        let snap_path = dir.join(SNAPSHOT);
        let (mut last_seq, snapshot) = match fs::read(&snap_path) {
            Ok(bytes) => {
                let snap: Snapshot = serde_json::from_slice(&bytes).map_err(|e| StoreError::Snapshot {
                    path: snap_path.clone(),
                    reason: e.to_string(),
                })?;
                report.snapshot_seq = Some(snap.seq);
                (snap.seq, snap.state)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => (0, ServiceState::default()),
            Err(e) => return Err(io_err(&snap_path)(e)),
        };

        let mut state = init(snapshot);
        let journal_path = dir.join(JOURNAL);
        let bytes = match fs::read(&journal_path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&journal_path)(e)),
        };
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < bytes.len() {
            line_no += 1;
            let rest = &bytes[offset..];
            let cut = |reason: String| Truncation {
                line: line_no,
                byte_offset: offset as u64,
                reason,
            };
            let Some(end) = rest.iter().position(|&b| b == b'\n') else {
                report.truncated = Some(cut("torn write: no line terminator".into()));
                break;
            };
            let parsed: Line = match serde_json::from_slice(&rest[..end]) {
                Ok(l) => l,
                Err(e) => {
                    report.truncated = Some(cut(format!("unparsable record: {e}")));
                    break;
                }
            };
            if parsed.seq <= last_seq && report.replayed == 0 && report.snapshot_seq.is_some() {
                // already folded into the snapshot
                offset += end + 1;
                continue;
            }
            if parsed.seq != last_seq + 1 {
                report.truncated = Some(cut(format!("expected record {}, found {}", last_seq + 1, parsed.seq)));
                break;
            }
            if let Err(reason) = apply(&mut state, &parsed.record) {
                report.truncated = Some(cut(format!("record rejected on replay: {reason}")));
                break;
            }
            last_seq = parsed.seq;
            report.replayed += 1;
            offset += end + 1;
        }

        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(io_err(&journal_path))?;
        if report.truncated.is_some() {
            journal.set_len(offset as u64).map_err(io_err(&journal_path))?;
            journal.sync_all().map_err(io_err(&journal_path))?;
        }
        let store = Store {
            dir: dir.to_owned(),
            journal,
            next_seq: last_seq + 1,
            since_snapshot: report.replayed,
            snapshot_every: snapshot_every.max(1),
        };
        Ok((store, state, report))
    }

    /// Appends records and waits for them to reach the disk.
    pub fn append(&mut self, records: &[Mutation]) -> io::Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for record in records {
            let line = Line {
                seq: self.next_seq,
                record: record.clone(),
            };
            serde_json::to_writer(&mut buf, &line)?;
            buf.push(b'\n');
            self.next_seq += 1;
        }
        self.journal.write_all(&buf)?;
        self.journal.sync_data()?;
        self.since_snapshot += records.len();
        Ok(())
    }

    pub fn snapshot_due(&self) -> bool {
        self.since_snapshot >= self.snapshot_every
    }

    /// Writes `state` (which must include every appended record) as the new
    /// snapshot and empties the journal.
    pub fn snapshot(&mut self, state: &ServiceState) -> io::Result<()> {
        let snap = Snapshot {
            seq: self.next_seq - 1,
            state: state.clone(),
        };
        write_atomically(&self.dir.join(SNAPSHOT), &serde_json::to_vec(&snap)?)?;
        // a crash here leaves records the snapshot already covers; open() skips them
        self.journal.set_len(0)?;
        self.journal.sync_all()?;
        self.since_snapshot = 0;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records written so far, across snapshots.
    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }
}

/// Bumps and returns the restart counter kept in `dir`.
pub fn next_epoch(dir: &Path) -> Result<u32, StoreError> {
    let path = dir.join(EPOCH);
    let current = match fs::read_to_string(&path) {
        Ok(s) => s.trim().parse::<u32>().unwrap_or(0),
        Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
        Err(e) => return Err(io_err(&path)(e)),
    };
    let next = current.wrapping_add(1).max(1);
    write_atomically(&path, next.to_string().as_bytes()).map_err(io_err(&path))?;
    Ok(next)
}

fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(parent) = path.parent() {
        // persist the rename itself
        File::open(parent)?.sync_all()?;
    }
    Ok(())
}
