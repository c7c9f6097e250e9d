use std::fs;
use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use flowclass_core::game::{GameService, SystemClock};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::api::{self, AppState};
use crate::config::ServerConfig;
use crate::events::Hub;
use crate::store::{self, RestoreReport, Store};

pub struct RunningServer {
    pub addr: SocketAddr,
    pub epoch: u32,
    pub restore: RestoreReport,
    state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}", self.addr.port())
    }

    /// Stops accepting, closes event streams and waits for in-flight requests.
    pub async fn shutdown(mut self) -> anyhow::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.state.close_streams();
        self.task.await.context("server task panicked")??;
        Ok(())
    }

    /// Runs until the process is interrupted.
    pub async fn run_until_ctrl_c(self) -> anyhow::Result<()> {
        tokio::signal::ctrl_c().await?;
        tracing::info!("shutting down");
        self.shutdown().await
    }
}

/// Restores state from `data_dir` and starts listening.
pub async fn start(config: ServerConfig) -> anyhow::Result<RunningServer> {
    let dir = &config.data_dir;
    fs::create_dir_all(dir).with_context(|| format!("cannot create data directory {}", dir.display()))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"ok").with_context(|| format!("data directory {} is not writable", dir.display()))?;
    fs::remove_file(&probe).ok();

    let epoch = store::next_epoch(dir)?;
    let (store, service, restore) = Store::open(
        dir,
        config.snapshot_every,
        |state| GameService::restore(state, [], Arc::new(SystemClock)).expect("no records to replay"),
        |svc, record| svc.apply(record).map_err(|e| e.to_string()),
    )?;
    if let Some(cut) = &restore.truncated {
        tracing::warn!(line = cut.line, offset = cut.byte_offset, reason = %cut.reason, "journal truncated");
    }
    tracing::info!(epoch, replayed = restore.replayed, snapshot = ?restore.snapshot_seq, "state restored");

    let listener = TcpListener::bind(("0.0.0.0", config.port))
        .await
        .with_context(|| format!("cannot listen on port {}", config.port))?;
    let addr = listener.local_addr()?;

    let hub = Hub::new(epoch, config.mailbox_capacity);
    let state = Arc::new(AppState::new(
        service,
        store,
        hub,
        config.professor_secret.clone(),
        config.max_body_bytes,
    ));
    let app = api::router(state.clone());
    let (stop, stopped) = oneshot::channel::<()>();
    let streams = state.clone();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = stopped.await;
                streams.close_streams();
            })
            .await
    });
    tracing::info!(%addr, "listening");
    Ok(RunningServer {
        addr,
        epoch,
        restore,
        state,
        stop: Some(stop),
        task,
    })
}
