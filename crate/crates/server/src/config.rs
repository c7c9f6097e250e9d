use std::path::PathBuf;

pub const DEFAULT_MAX_BODY_BYTES: usize = 256 * 1024;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// 0 picks a free port.
    pub port: u16,
    pub data_dir: PathBuf,
    pub professor_secret: String,
    pub max_body_bytes: usize,
    /// Records between two snapshots of the whole state.
    pub snapshot_every: usize,
    /// Buffered events per subscriber before it is sent to resync.
    pub mailbox_capacity: usize,
}

impl ServerConfig {
    pub fn new(port: u16, data_dir: impl Into<PathBuf>, professor_secret: impl Into<String>) -> Self {
        Self {
            port,
            data_dir: data_dir.into(),
            professor_secret: professor_secret.into(),
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            snapshot_every: 256,
            mailbox_capacity: 512,
        }
    }
}
