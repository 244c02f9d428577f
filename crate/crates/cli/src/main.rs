//! `jtms-learn`: validate curricula, drive sessions against a store, export
//! maps, check replay, and run the HTTP service.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation or domain failure,
//! 3 store or I/O failure.

use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jtms_learn::curriculum::{Curriculum, CurriculumError, Mode};
use jtms_learn::engine::{AppError, Engine};
use jtms_learn::persistence::StoreError;
use jtms_learn_api::{router, ApiConfig, TokenTable};
use log::error;

#[derive(Parser)]
#[command(
    name = "jtms-learn",
    version,
    about = "Adaptive learning paths on a truth maintenance network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StoreArg {
    /// Store directory; created on first use.
    #[arg(long, env = "JTMS_STORE")]
    store: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check a curriculum document; violations go to stderr.
    Validate { file: PathBuf },
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// JSON token file: {"tokens": [{"token", "role", "subject_id"}]}.
        #[arg(long, env = "JTMS_TOKENS")]
        tokens: PathBuf,
        /// Allowed CORS origin; repeatable, `*` for any.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
    },
    /// Create a student profile.
    AddStudent {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        student: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// Validate and register a curriculum document.
    Register {
        #[command(flatten)]
        store: StoreArg,
        file: PathBuf,
    },
    /// Enroll a student in a registered curriculum.
    Enroll {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        student: String,
        #[arg(long)]
        curriculum: String,
        /// Defaults to the curriculum's own default mode.
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Record an assessment attempt; prints the state delta.
    Attempt {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        enrollment: String,
        #[arg(long)]
        milestone: String,
        #[arg(long)]
        assessment: String,
        #[arg(long, allow_negative_numbers = true)]
        score: f64,
    },
    /// Withdraw a pass; prints the state delta.
    Revoke {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        enrollment: String,
        #[arg(long)]
        milestone: String,
        #[arg(long, default_value = "")]
        reason: String,
    },
    /// Switch an enrollment between open and locked mode.
    SetMode {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        enrollment: String,
        #[arg(long)]
        mode: Mode,
    },
    /// Print the ordered recommendation list.
    Recommend {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        enrollment: String,
        #[arg(long)]
        json: bool,
    },
    /// Print one line per milestone: id, status, color, level.
    Map {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        enrollment: String,
        #[arg(long)]
        json: bool,
    },
    /// Graphviz export of an enrollment's map.
    ExportDot {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        enrollment: String,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Replay the log and compare it with the stored snapshot.
    ReplayCheck {
        #[command(flatten)]
        store: StoreArg,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<AppError> for Failure {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Store(StoreError::SchemaViolation(_)) => Failure::validation(e.to_string()),
            AppError::Store(_) | AppError::Replay { .. } => Failure::io(e.to_string()),
            AppError::InvalidCurriculum(report) => {
                Failure::validation(report.to_string().trim_end().to_owned())
            }
            other => Failure::validation(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_file(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn load_curriculum(path: &PathBuf) -> Result<Curriculum, Failure> {
    let text = read_file(path)?;
    let curriculum =
        Curriculum::from_json(&text).map_err(|e| Failure::validation(e.to_string()))?;
    match curriculum.ensure_valid() {
        Ok(()) => Ok(curriculum),
        Err(CurriculumError::Invalid(report)) => Err(Failure::validation(format!(
            "{} is invalid:\n{}",
            path.display(),
            report.to_string().trim_end()
        ))),
        Err(e) => Err(Failure::validation(e.to_string())),
    }
}

fn open(store: &StoreArg) -> Result<Engine, Failure> {
    Ok(Engine::open(&store.store)?)
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string(value).expect("output serializes")
    );
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate { file } => {
            let c = load_curriculum(&file)?;
            println!("ok {} ({} milestones)", c.id, c.milestones.len());
        }
        Command::Serve {
            store,
            bind,
            tokens,
            cors_origins,
        } => {
            let tokens = TokenTable::load(&tokens).map_err(|e| Failure::io(e.to_string()))?;
            let engine = open(&store)?;
            let app = router(
                engine,
                ApiConfig {
                    tokens,
                    cors_origins,
                },
            );
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::io(e.to_string()))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(bind)
                    .await
                    .map_err(|e| Failure::io(format!("cannot bind {bind}: {e}")))?;
                let local = listener
                    .local_addr()
                    .map_err(|e| Failure::io(e.to_string()))?;
                println!("listening on http://{local}");
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                };
                jtms_learn_api::serve(listener, app, shutdown)
                    .await
                    .map_err(|e| {
                        error!("server stopped: {e}");
                        Failure::io(e.to_string())
                    })
            })?;
        }
        Command::AddStudent {
            store,
            student,
            name,
        } => {
            let name = name.unwrap_or_else(|| student.clone());
            print_json(&open(&store)?.create_student(&student, &name)?);
        }
        Command::Register { store, file } => {
            let c = load_curriculum(&file)?;
            let (id, n) = (c.id.clone(), c.milestones.len());
            open(&store)?.register_curriculum(c)?;
            print_json(&serde_json::json!({ "curriculum_id": id, "milestones": n }));
        }
        Command::Enroll {
            store,
            student,
            curriculum,
            mode,
        } => {
            let mut engine = open(&store)?;
            let mode = match mode {
                Some(m) => m,
                None => engine.state().curriculum(&curriculum)?.mode_default,
            };
            print_json(&engine.enroll(&student, &curriculum, mode)?);
        }
        Command::Attempt {
            store,
            enrollment,
            milestone,
            assessment,
            score,
        } => {
            print_json(&open(&store)?.record_attempt(
                &enrollment,
                &milestone,
                &assessment,
                score,
            )?);
        }
        Command::Revoke {
            store,
            enrollment,
            milestone,
            reason,
        } => {
            print_json(&open(&store)?.revoke_pass(&enrollment, &milestone, &reason)?);
        }
        Command::SetMode {
            store,
            enrollment,
            mode,
        } => {
            let changes = open(&store)?.set_mode(&enrollment, mode)?;
            print_json(
                &serde_json::json!({ "enrollment_id": enrollment, "mode": mode, "changes": changes }),
            );
        }
        Command::Recommend {
            store,
            enrollment,
            json,
        } => {
            let list = open(&store)?.recommend(&enrollment)?;
            if json {
                print_json(&list);
            } else {
                for r in &list.items {
                    println!(
                        "{}\t{}\t{}\t{}\t{}",
                        r.rank,
                        r.kind,
                        r.milestone,
                        r.assets.join(","),
                        r.rationale
                    );
                }
            }
        }
        Command::Map {
            store,
            enrollment,
            json,
        } => {
            let engine = open(&store)?;
            let map = engine.state().map(&enrollment, engine.policy())?;
            if json {
                print_json(&map);
            } else {
                for m in &map.milestones {
                    let level = m
                        .mastering_level
                        .map_or("-".to_owned(), |l| l.get().to_string());
                    println!("{}\t{}\t{}\t{}", m.milestone_id, m.status, m.color, level);
                }
            }
        }
        Command::ExportDot {
            store,
            enrollment,
            output,
        } => {
            let dot = open(&store)?.state().export_dot(&enrollment)?;
            match output {
                Some(path) => fs::write(&path, dot)
                    .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?,
                None => print!("{dot}"),
            }
        }
        Command::ReplayCheck { store } => {
            let check = open(&store)?.replay_check()?;
            if !check.ok() {
                return Err(Failure::validation(format!(
                    "replay mismatch: snapshot covers seq {} (matches replay: {}), log ends at seq {} (live state matches replay: {})",
                    check.snapshot_seq, check.snapshot_matches, check.log_seq, check.live_matches
                )));
            }
            println!(
                "ok: snapshot at seq {} equals replay of {} events",
                check.snapshot_seq, check.log_seq
            );
        }
    }
    Ok(())
}
