use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use iotsam_core::campaign::{self, resolve_scheme};
use iotsam_core::{
    coverage_report, filter_catalog, serialize_document, AssessmentResult, AssessmentScheme,
    CampaignStore, DeviceModel, ExecutionProtocol, HarnessOptions, Session, TestCaseCatalog, TestPlan,
    TestingProfile,
};
use iotsam_probes::bundled_registry;
use iotsam_service::AppState;

use crate::error::CliError;
use crate::files;
use crate::manual;

pub fn validate(paths: &[PathBuf]) -> Result<ExitCode, CliError> {
    // Unreadable files are usage errors; report them before checking anything.
    let contents = paths.iter().map(|p| files::read(p)).collect::<Result<Vec<_>, _>>()?;
    let mut failed = false;
    for (path, bytes) in paths.iter().zip(contents) {
        match files::check(&bytes) {
            Ok(kind) => println!("{}: OK ({kind})", path.display()),
            Err(e) => {
                failed = true;
                println!("{}", files::located(path, &e));
            }
        }
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

pub fn plan(device: &Path, profile: &Path, catalog: &Path, out: &Path) -> Result<ExitCode, CliError> {
    let device: DeviceModel = files::load(device)?;
    let profile: TestingProfile = files::load(profile)?;
    let catalog: TestCaseCatalog = files::load(catalog)?;
    let plan = filter_catalog(&catalog, &device, &profile)?;
    files::write(out, &serialize_document(&plan))?;
    println!(
        "plan {} for {} under {}: {} of {} cases selected, {} entries",
        plan.plan_id,
        plan.device_id,
        plan.profile_id,
        plan.entries.iter().map(|e| &e.case_id).collect::<std::collections::BTreeSet<_>>().len(),
        catalog.cases.len(),
        plan.entries.len()
    );
    print!("{}", coverage_report(&plan));
    if plan.entries.is_empty() {
        eprintln!("warning: no test case applies; the plan is empty");
    }
    Ok(ExitCode::SUCCESS)
}

pub enum RunSource {
    Session(String),
    Documents {
        plan: PathBuf,
        device: PathBuf,
        profile: PathBuf,
        catalog: PathBuf,
    },
}

fn open_store(root: &Path) -> Result<CampaignStore, CliError> {
    Ok(CampaignStore::open(root)?)
}

fn print_protocol(protocol: &ExecutionProtocol) {
    println!(
        "  {:<28} {:<13} {}",
        protocol.plan_entry_id,
        protocol.outcome.as_str(),
        protocol.outcome_rationale
    );
    let _ = io::stdout().flush();
}

fn print_status(session: &Session) {
    let pending = session.pending_manual();
    println!(
        "session {} is {}: {} of {} entries recorded, {} manual pending",
        session.session_id,
        session.state.as_str(),
        session.protocols.len(),
        session.plan.entries.len(),
        pending.len()
    );
    if pending.is_empty() {
        println!("next: iotsam assess --session-id {}", session.session_id);
    } else {
        println!("next: iotsam run --session-id {} --interactive", session.session_id);
    }
}

pub fn run(
    store_root: &Path,
    source: RunSource,
    interactive: bool,
    assessor: &str,
    parallelism: usize,
) -> Result<ExitCode, CliError> {
    let store = open_store(store_root)?;
    let session_id = match source {
        RunSource::Session(id) => id,
        RunSource::Documents {
            plan,
            device,
            profile,
            catalog,
        } => {
            let plan: TestPlan = files::load(&plan)?;
            let device: DeviceModel = files::load(&device)?;
            let profile: TestingProfile = files::load(&profile)?;
            let catalog: TestCaseCatalog = files::load(&catalog)?;
            let id = store.create_session(&device, &profile, &catalog, &plan)?;
            println!("session {id} created for plan {}", plan.plan_id);
            id
        }
    };
    let options = HarnessOptions::default().with_parallelism(parallelism);
    let registry = bundled_registry();
    let before = store.load_session(&session_id)?;
    if !before.pending_automated().is_empty() {
        println!("automated entries:");
    }
    let session = campaign::run_automated(&store, &session_id, &registry, &options, &print_protocol)?;
    let session = if interactive {
        let stdin = io::stdin();
        let mut input = stdin.lock();
        manual::collect(&store, &session, assessor, &mut input as &mut dyn BufRead, &mut io::stdout())?
    } else {
        session
    };
    print_status(&session);
    Ok(ExitCode::SUCCESS)
}

fn scheme_from(store_root: &Path, scheme: Option<&str>) -> Result<AssessmentScheme, CliError> {
    match scheme {
        Some(s) if s.ends_with(".json") || Path::new(s).is_file() => files::load(Path::new(s)),
        other => Ok(resolve_scheme(store_root, other)?),
    }
}

pub fn assess(store_root: &Path, session_id: &str, scheme: Option<&str>) -> Result<ExitCode, CliError> {
    let store = open_store(store_root)?;
    let scheme = scheme_from(store_root, scheme)?;
    let (record, _) = campaign::assess_session(&store, session_id, &scheme)?;
    print!("{}", iotsam_core::assessment::render_text(&record.report));
    Ok(match record.report.overall.result {
        AssessmentResult::Secure => ExitCode::SUCCESS,
        AssessmentResult::Insecure => ExitCode::from(3),
    })
}

pub fn report(store_root: &Path, session_id: &str, machine: bool, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let store = open_store(store_root)?;
    let session = store.load_session(session_id)?;
    let (report, text) = campaign::session_report(&session)?;
    let bytes = if machine { serialize_document(report) } else { text.into_bytes() };
    match out {
        Some(path) => files::write(path, &bytes)?,
        None => io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Failed(format!("writing report: {e}")))?,
    }
    Ok(ExitCode::SUCCESS)
}

pub fn serve(store_root: &Path, listen: SocketAddr) -> Result<ExitCode, CliError> {
    let store = open_store(store_root)?;
    let state = AppState::with_options(store, bundled_registry(), HarnessOptions::default());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(format!("starting runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| CliError::Failed(format!("cannot listen on {listen}: {e}")))?;
        println!("serving {} on http://{listen}/api/v1", store_root.display());
        iotsam_service::serve(listener, state)
            .await
            .map_err(|e| CliError::Failed(format!("server stopped: {e}")))
    })?;
    Ok(ExitCode::SUCCESS)
}
