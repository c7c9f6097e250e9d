use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use flowclass_core::game::AccessCode;
use flowclass_server::config::DEFAULT_MAX_BODY_BYTES;
use flowclass_server::grade::{batch_grade, load_reference};
use flowclass_server::simulate::{simulate, Profile, SimConfig};
use flowclass_server::ServerConfig;

#[derive(Parser)]
#[command(name = "flowclass", version, about = "Classroom flow-graph games: server and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the game server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "./flowclass-data")]
        data_dir: PathBuf,
        #[arg(long, env = "FLOWCLASS_PROFESSOR_SECRET")]
        professor_secret: String,
        #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
        max_body_bytes: usize,
    },
    /// Play one game with virtual students against a running server.
    Simulate {
        #[arg(long)]
        students: usize,
        #[arg(long)]
        server: String,
        #[arg(long, env = "FLOWCLASS_PROFESSOR_SECRET")]
        secret: String,
        #[arg(long, value_enum, default_value = "all-complete")]
        profile: Profile,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        jitter_ms: u64,
    },
    /// Grade a directory of answer files against a reference.
    Grade {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Print a fresh access code.
    GenCode,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve {
            port,
            data_dir,
            professor_secret,
            max_body_bytes,
        } => {
            let mut config = ServerConfig::new(port, data_dir, professor_secret);
            config.max_body_bytes = max_body_bytes;
            runtime()?.block_on(async {
                let server = flowclass_server::start(config).await?;
                // first stdout line, for scripts that start on port 0
                println!("listening on {}", server.url());
                if let Some(cut) = &server.restore.truncated {
                    eprintln!(
                        "journal truncated at line {} (byte {}): {}",
                        cut.line, cut.byte_offset, cut.reason
                    );
                }
                server.run_until_ctrl_c().await
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            students,
            server,
            secret,
            profile,
            seed,
            jitter_ms,
        } => {
            let mut cfg = SimConfig::new(server, secret, students);
            cfg.profile = profile;
            cfg.seed = seed;
            cfg.jitter = Duration::from_millis(jitter_ms);
            let report = runtime()?.block_on(simulate(cfg, || async { Ok(()) }))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Grade { answers, reference } => {
            let (diagram, cc) = load_reference(&reference)?;
            let batch = batch_grade(&answers, &diagram, cc)?;
            println!("{}", serde_json::to_string_pretty(&batch)?);
            Ok(if batch.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::GenCode => {
            println!("{}", AccessCode::generate(&mut rand::rng()));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("cannot start the async runtime")
}
