//! `iotsam`: plan, run, assess and report IoT security assessment campaigns.

mod commands;
mod error;
mod files;
mod manual;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "iotsam", version, about = "Model-based security assessment of consumer IoT devices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct StoreArg {
    /// Campaign store directory.
    #[arg(long, env = "IOTSAM_STORE")]
    store: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Machine,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check documents against their schema and invariants.
    Validate {
        /// Document to check; repeatable.
        #[arg(long = "file", required = true, num_args = 1..)]
        files: Vec<PathBuf>,
    },
    /// Select the applicable test cases for a device and profile.
    Plan {
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        /// Where to write the plan document.
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute automated entries and optionally collect manual results.
    Run {
        #[command(flatten)]
        store: StoreArg,
        /// Plan to start a new session from; needs --device, --profile and --catalog.
        #[arg(long, conflicts_with = "session_id", requires_all = ["device", "profile", "catalog"])]
        plan: Option<PathBuf>,
        #[arg(long)]
        device: Option<PathBuf>,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Resume an existing session.
        #[arg(long, required_unless_present = "plan")]
        session_id: Option<String>,
        /// Prompt on standard input for pending manual entries.
        #[arg(long)]
        interactive: bool,
        /// Recorded as the author of manual results.
        #[arg(long, env = "IOTSAM_ASSESSOR", default_value = "assessor")]
        assessor: String,
        /// Automated entries run concurrently.
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
    },
    /// Derive the binary verdict; exits 0 for SECURE and 3 for INSECURE.
    Assess {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        session_id: String,
        /// Scheme id known to the store, or a scheme document path.
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Print the assessment report of an assessed session.
    Report {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        session_id: String,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API over a store.
    Serve {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, default_value = iotsam_service::DEFAULT_LISTEN)]
        listen: SocketAddr,
    },
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Validate { files } => commands::validate(&files),
        Command::Plan {
            device,
            profile,
            catalog,
            out,
        } => commands::plan(&device, &profile, &catalog, &out),
        Command::Run {
            store,
            plan,
            device,
            profile,
            catalog,
            session_id,
            interactive,
            assessor,
            parallelism,
        } => {
            let source = match (session_id, plan, device, profile, catalog) {
                (Some(id), ..) => commands::RunSource::Session(id),
                (None, Some(plan), Some(device), Some(profile), Some(catalog)) => commands::RunSource::Documents {
                    plan,
                    device,
                    profile,
                    catalog,
                },
                _ => return Err(CliError::Usage("run needs --session-id or --plan with its documents".into())),
            };
            commands::run(&store.store, source, interactive, &assessor, parallelism)
        }
        Command::Assess {
            store,
            session_id,
            scheme,
        } => commands::assess(&store.store, &session_id, scheme.as_deref()),
        Command::Report {
            store,
            session_id,
            format,
            out,
        } => commands::report(&store.store, &session_id, format == ReportFormat::Machine, out.as_deref()),
        Command::Serve { store, listen } => commands::serve(&store.store, listen),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
