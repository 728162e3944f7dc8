//! The scripted fixture campaign: vulnerable mock device, bundled catalog,
//! lab profile, manual answers piped into `run --interactive`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use iotsam_core::{
    parse_document, serialize_document, AssessmentReport, CampaignStore, DeviceModel, ExecutionProtocol, TestPlan,
};
use iotsam_probes::mock::{self, MockDevice, RunningMock};

use super::{fixture, iotsam, Outcome};

pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub device: PathBuf,
    pub plan: PathBuf,
    pub mock: RunningMock,
}

/// Starts the vulnerable mock and plans against a device model pointing at it.
pub fn prepare() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let fixture_mock: MockDevice = parse_document(&std::fs::read(fixture("mock/smart-lock.mock.json")).unwrap()).unwrap();
    let running = fixture_mock.start_isolated().expect("mock starts (needs permission to bind port 23)");
    let device: DeviceModel = parse_document(&std::fs::read(fixture("smart-lock.devicemodel.json")).unwrap()).unwrap();
    let device_path = dir.path().join("device.json");
    std::fs::write(&device_path, serialize_document(&mock::retarget(&device, running.host()))).unwrap();
    let plan_path = dir.path().join("plan.json");
    let out = iotsam(
        &[
            &"plan",
            &"--device",
            &device_path,
            &"--profile",
            &fixture("lab.profile.json"),
            &"--catalog",
            &fixture("mini.catalog.json"),
            &"--out",
            &plan_path,
        ],
        "",
    );
    assert_eq!(out.code, 0, "{}", out.describe());
    Workspace {
        dir,
        device: device_path,
        plan: plan_path,
        mock: running,
    }
}

/// Piped answers for every manual-path entry of `plan`, in plan order:
/// one observation per step, PASS, and a rationale.
pub fn answers(plan: &TestPlan) -> String {
    let mut script = String::new();
    for entry in plan.entries.iter().filter(|e| e.execution_mode.is_manual_path()) {
        for i in 0..entry.instantiated_guide.len() {
            script.push_str(&format!("step {} observed as expected\n", i + 1));
        }
        script.push_str("PASS\nno deviation found\n");
    }
    script
}

pub struct Campaign {
    pub session_id: String,
    pub store: PathBuf,
    pub run: Outcome,
    pub assess: Outcome,
    pub report_path: PathBuf,
    pub report: AssessmentReport,
    /// Plan order.
    pub protocols: Vec<ExecutionProtocol>,
    pub elapsed: Duration,
}

/// Runs one full campaign into a fresh store below the workspace.
pub fn run(ws: &Workspace, name: &str) -> Campaign {
    let started = Instant::now();
    let store = ws.dir.path().join(name);
    let plan: TestPlan = parse_document(&std::fs::read(&ws.plan).unwrap()).unwrap();
    let run = iotsam(
        &[
            &"run",
            &"--store",
            &store,
            &"--plan",
            &ws.plan,
            &"--device",
            &ws.device,
            &"--profile",
            &fixture("lab.profile.json"),
            &"--catalog",
            &fixture("mini.catalog.json"),
            &"--interactive",
            &"--assessor",
            &"lab-assessor",
        ],
        &answers(&plan),
    );
    assert_eq!(run.code, 0, "{}", run.describe());
    let session_id = run
        .stdout
        .lines()
        .find_map(|l| l.strip_prefix("session ").and_then(|r| r.split_whitespace().next()))
        .expect("session id printed")
        .to_string();
    let assess = iotsam(&[&"assess", &"--store", &store, &"--session-id", &session_id], "");
    let report_path = ws.dir.path().join(format!("{name}-report.json"));
    let report_out = iotsam(
        &[
            &"report",
            &"--store",
            &store,
            &"--session-id",
            &session_id,
            &"--format",
            &"machine",
            &"--out",
            &report_path,
        ],
        "",
    );
    assert_eq!(report_out.code, 0, "{}", report_out.describe());
    let report = parse_document(&std::fs::read(&report_path).unwrap()).unwrap();
    let session = CampaignStore::open(&store).unwrap().load_session(&session_id).unwrap();
    let protocols = session.protocols_in_plan_order().into_iter().cloned().collect();
    Campaign {
        session_id,
        store,
        run,
        assess,
        report_path,
        report,
        protocols,
        elapsed: started.elapsed(),
    }
}

/// Protocols as JSON with timestamps masked.
pub fn masked(protocols: &[ExecutionProtocol]) -> Vec<serde_json::Value> {
    protocols
        .iter()
        .map(|p| {
            let mut v: serde_json::Value = serde_json::from_slice(&serialize_document(p)).unwrap();
            super::mask_timestamps(&mut v);
            v
        })
        .collect()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
