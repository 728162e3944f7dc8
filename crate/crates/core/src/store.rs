//! Append-only campaign store.
//!
//! Every session is a directory of numbered record files, `NNNN-<kind>.json`,
//! each a canonical `store-record` document wrapping one pipeline artifact.
//! Records carry the SHA-256 digest of their predecessor, so truncation or
//! tampering in the middle of a log is detected on load. Session state is
//! never stored; it is derived by replaying the records in order.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assessment::AssessmentReport;
use crate::clock::{Clock, SystemClock};
use crate::filter::{PlannedTest, TestPlan};
use crate::harness::ExecutionProtocol;
use crate::model::{
    parse_body, parse_document, serialize_document, to_canonical_value, AssessmentScheme, DeviceModel, Document,
    DocumentError, ExecutionMode, TestCaseCatalog, TestingProfile,
};

/// Environment variable naming the store root when no flag is given.
pub const STORE_ENV: &str = "IOTSAM_STORE";
const GENESIS_DIGEST: &str = "0000000000000000000000000000000000000000000000000000000000000000";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("INCONSISTENT_REFERENCES: {0}")]
    InconsistentReferences(String),
    #[error("DUPLICATE_ENTRY: entry `{plan_entry_id}` already has a protocol in session `{session_id}`")]
    DuplicateEntry { session_id: String, plan_entry_id: String },
    #[error("WRONG_STATE: cannot {operation} while session `{session_id}` is {state}; {hint}")]
    WrongState {
        session_id: String,
        state: SessionState,
        operation: &'static str,
        hint: String,
    },
    #[error("NOT_FOUND: no session `{0}`")]
    NotFound(String),
    #[error("CORRUPT_LOG: session `{session_id}`: {detail}")]
    CorruptLog { session_id: String, detail: String },
    #[error("LOCKED: session `{0}` is being written by another process")]
    Locked(String),
    #[error("IO: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InconsistentReferences(_) => "INCONSISTENT_REFERENCES",
            Self::DuplicateEntry { .. } => "DUPLICATE_ENTRY",
            Self::WrongState { .. } => "WRONG_STATE",
            Self::NotFound(_) => "NOT_FOUND",
            Self::CorruptLog { .. } => "CORRUPT_LOG",
            Self::Locked(_) => "LOCKED",
            Self::Io { .. } => "IO",
        }
    }
}

fn io_err(context: impl fmt::Display) -> impl FnOnce(io::Error) -> StoreError {
    let context = context.to_string();
    move |source| StoreError::Io { context, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    Planned,
    Executing,
    AwaitingManual,
    Assessed,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Planned => "PLANNED",
            Self::Executing => "EXECUTING",
            Self::AwaitingManual => "AWAITING_MANUAL",
            Self::Assessed => "ASSESSED",
        }
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Explicit state transition. Only the move into EXECUTING is recorded this
/// way; the other transitions follow from the records themselves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct StateChange {
    pub to: SessionState,
}

impl Document for StateChange {
    const KIND: &'static str = "state-change";
}

/// Outcome of assessing a session: the scheme applied and the resulting report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AssessmentRecord {
    pub scheme: AssessmentScheme,
    pub report: AssessmentReport,
}

impl Document for AssessmentRecord {
    const KIND: &'static str = "assessment-record";

    fn validate(&self) -> Result<(), DocumentError> {
        self.scheme.validate()?;
        self.report.validate()
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct StoreRecord {
    pub sequence: u64,
    pub document_kind: String,
    pub appended_at: DateTime<Utc>,
    pub previous_digest: String,
    pub digest: String,
    /// The artifact in canonical form, including its `kind` and `schema-version`.
    pub document: Value,
}

impl Document for StoreRecord {
    const KIND: &'static str = "store-record";
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct DigestInput<'a> {
    sequence: u64,
    document_kind: &'a str,
    appended_at: &'a DateTime<Utc>,
    previous_digest: &'a str,
    document: &'a Value,
}

impl StoreRecord {
    fn compute_digest(&self) -> String {
        let input = DigestInput {
            sequence: self.sequence,
            document_kind: &self.document_kind,
            appended_at: &self.appended_at,
            previous_digest: &self.previous_digest,
            document: &self.document,
        };
        let bytes = serde_json::to_vec(&input).expect("record serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn file_name(&self) -> String {
        format!("{:04}-{}.json", self.sequence, self.document_kind)
    }
}

/// A campaign reconstructed from its log.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub state: SessionState,
    pub created_at: DateTime<Utc>,
    pub device: DeviceModel,
    pub profile: TestingProfile,
    pub catalog: TestCaseCatalog,
    pub plan: TestPlan,
    /// In append order.
    pub protocols: Vec<ExecutionProtocol>,
    pub assessment: Option<AssessmentRecord>,
    pub records: Vec<StoreRecord>,
}

impl Session {
    pub fn protocol(&self, plan_entry_id: &str) -> Option<&ExecutionProtocol> {
        self.protocols.iter().find(|p| p.plan_entry_id == plan_entry_id)
    }

    fn uncovered(&self) -> impl Iterator<Item = &PlannedTest> {
        self.plan
            .entries
            .iter()
            .filter(|e| self.protocol(&e.plan_entry_id).is_none())
    }

    /// Automated entries without a protocol, in plan order.
    pub fn pending_automated(&self) -> Vec<&PlannedTest> {
        self.uncovered()
            .filter(|e| e.execution_mode == ExecutionMode::Automated)
            .collect()
    }

    /// Manual and semi-automated entries without a protocol, in plan order.
    pub fn pending_manual(&self) -> Vec<&PlannedTest> {
        self.uncovered().filter(|e| e.execution_mode.is_manual_path()).collect()
    }

    /// Every plan entry has a protocol.
    pub fn all_covered(&self) -> bool {
        self.uncovered().next().is_none()
    }

    /// Protocols in plan order.
    pub fn protocols_in_plan_order(&self) -> Vec<&ExecutionProtocol> {
        self.plan
            .entries
            .iter()
            .filter_map(|e| self.protocol(&e.plan_entry_id))
            .collect()
    }
}

/// Replays records one at a time, checking transitions as the log is read.
#[derive(Default)]
struct Replay {
    session_id: String,
    created_at: Option<DateTime<Utc>>,
    device: Option<DeviceModel>,
    profile: Option<TestingProfile>,
    catalog: Option<TestCaseCatalog>,
    plan: Option<TestPlan>,
    state: Option<SessionState>,
    protocols: Vec<ExecutionProtocol>,
    assessment: Option<AssessmentRecord>,
    records: Vec<StoreRecord>,
}

fn body<T: Document>(record: &StoreRecord) -> Result<T, String> {
    let mut value = record.document.clone();
    let kind = value
        .as_object_mut()
        .and_then(|m| {
            let kind = m.shift_remove("kind");
            m.shift_remove("schema-version");
            kind
        })
        .ok_or("record document has no kind")?;
    if kind != T::KIND {
        return Err(format!("record declares `{}` but holds `{kind}`", record.document_kind));
    }
    parse_body::<T>(value).map_err(|e| e.to_string())
}

impl Replay {
    fn apply(&mut self, record: StoreRecord) -> Result<(), String> {
        let expected_sequence = self.records.len() as u64 + 1;
        if record.sequence != expected_sequence {
            return Err(format!("expected record {expected_sequence}, found {}", record.sequence));
        }
        let previous = self.records.last().map_or(GENESIS_DIGEST, |r| r.digest.as_str());
        if record.previous_digest != previous {
            return Err(format!("record {} does not chain to its predecessor", record.sequence));
        }
        if record.compute_digest() != record.digest {
            return Err(format!("record {} digest mismatch", record.sequence));
        }
        let seq = record.sequence;
        match (seq, record.document_kind.as_str()) {
            (1, DeviceModel::KIND) => {
                self.created_at = Some(record.appended_at);
                self.device = Some(body(&record)?);
            }
            (2, TestingProfile::KIND) => self.profile = Some(body(&record)?),
            (3, TestCaseCatalog::KIND) => self.catalog = Some(body(&record)?),
            (4, TestPlan::KIND) => {
                let plan: TestPlan = body(&record)?;
                check_references(
                    self.device.as_ref().expect("record 1"),
                    self.profile.as_ref().expect("record 2"),
                    self.catalog.as_ref().expect("record 3"),
                    &plan,
                )
                .map_err(|e| e.to_string())?;
                self.plan = Some(plan);
                self.state = Some(SessionState::Planned);
            }
            (1..=4, kind) => return Err(format!("record {seq} has unexpected kind `{kind}`")),
            (_, StateChange::KIND) => {
                let change: StateChange = body(&record)?;
                if change.to != SessionState::Executing || self.state != Some(SessionState::Planned) {
                    return Err(format!("invalid transition to {} in record {seq}", change.to));
                }
                self.state = Some(SessionState::Executing);
            }
            (_, ExecutionProtocol::KIND) => {
                let protocol: ExecutionProtocol = body(&record)?;
                self.check_protocol(&protocol).map_err(|e| e.to_string())?;
                self.protocols.push(protocol);
                self.settle_state();
            }
            (_, AssessmentRecord::KIND) => {
                let assessment: AssessmentRecord = body(&record)?;
                let session = self.snapshot();
                check_assessable(&session).map_err(|e| e.to_string())?;
                if assessment.report.plan_id != session.plan.plan_id {
                    return Err(format!("assessment in record {seq} belongs to another plan"));
                }
                self.assessment = Some(assessment);
                self.state = Some(SessionState::Assessed);
            }
            (_, kind) => return Err(format!("record {seq} has unknown kind `{kind}`")),
        }
        self.records.push(record);
        Ok(())
    }

    fn check_protocol(&self, protocol: &ExecutionProtocol) -> Result<(), StoreError> {
        let state = self.state.unwrap_or(SessionState::Planned);
        if !matches!(state, SessionState::Executing | SessionState::AwaitingManual) {
            return Err(wrong_state(&self.session_id, state, "append a protocol"));
        }
        let plan = self.plan.as_ref().expect("state implies plan");
        if protocol.plan_id != plan.plan_id {
            return Err(StoreError::InconsistentReferences(format!(
                "protocol `{}` belongs to plan `{}`, session plan is `{}`",
                protocol.protocol_id, protocol.plan_id, plan.plan_id
            )));
        }
        let Some(entry) = plan.entry(&protocol.plan_entry_id) else {
            return Err(StoreError::InconsistentReferences(format!(
                "protocol `{}` references unknown entry `{}`",
                protocol.protocol_id, protocol.plan_entry_id
            )));
        };
        if entry.case_id != protocol.case_id {
            return Err(StoreError::InconsistentReferences(format!(
                "protocol `{}` names case `{}` but entry `{}` is case `{}`",
                protocol.protocol_id, protocol.case_id, entry.plan_entry_id, entry.case_id
            )));
        }
        if self.protocols.iter().any(|p| p.plan_entry_id == protocol.plan_entry_id) {
            return Err(StoreError::DuplicateEntry {
                session_id: self.session_id.clone(),
                plan_entry_id: protocol.plan_entry_id.clone(),
            });
        }
        Ok(())
    }

    /// EXECUTING becomes AWAITING_MANUAL once no automated entry is left but manual ones are.
    fn settle_state(&mut self) {
        if self.state != Some(SessionState::Executing) {
            return;
        }
        let plan = self.plan.as_ref().expect("state implies plan");
        let covered = |e: &&PlannedTest| self.protocols.iter().any(|p| p.plan_entry_id == e.plan_entry_id);
        let automated_left = plan.automated_entries().any(|e| !covered(&e));
        let manual_left = plan.manual_entries().any(|e| !covered(&e));
        if !automated_left && manual_left {
            self.state = Some(SessionState::AwaitingManual);
        }
    }

    fn snapshot(&self) -> Session {
        Session {
            session_id: self.session_id.clone(),
            state: self.state.expect("snapshot after plan record"),
            created_at: self.created_at.expect("snapshot after first record"),
            device: self.device.clone().expect("device record"),
            profile: self.profile.clone().expect("profile record"),
            catalog: self.catalog.clone().expect("catalog record"),
            plan: self.plan.clone().expect("plan record"),
            protocols: self.protocols.clone(),
            assessment: self.assessment.clone(),
            records: self.records.clone(),
        }
    }

    fn finish(self) -> Result<Session, String> {
        if self.plan.is_none() {
            return Err(format!(
                "log ends after {} record(s), before the plan is recorded",
                self.records.len()
            ));
        }
        Ok(Session {
            session_id: self.session_id,
            state: self.state.expect("plan implies state"),
            created_at: self.created_at.expect("plan implies first record"),
            device: self.device.expect("plan implies device"),
            profile: self.profile.expect("plan implies profile"),
            catalog: self.catalog.expect("plan implies catalog"),
            plan: self.plan.expect("checked"),
            protocols: self.protocols,
            assessment: self.assessment,
            records: self.records,
        })
    }
}

fn wrong_state(session_id: &str, state: SessionState, operation: &'static str) -> StoreError {
    let hint = match state {
        SessionState::Planned => "execute the plan first",
        SessionState::Executing => "finish the automated entries first",
        SessionState::AwaitingManual => "record the pending manual entries first",
        SessionState::Assessed => "the session is closed; start a new session to re-run the campaign",
    };
    StoreError::WrongState {
        session_id: session_id.to_string(),
        state,
        operation,
        hint: hint.to_string(),
    }
}

fn check_assessable(session: &Session) -> Result<(), StoreError> {
    match session.state {
        SessionState::Executing | SessionState::AwaitingManual if session.all_covered() => Ok(()),
        SessionState::Executing | SessionState::AwaitingManual => {
            let pending = session.pending_automated().len() + session.pending_manual().len();
            let mut err = wrong_state(&session.session_id, session.state, "assess");
            if let StoreError::WrongState { hint, .. } = &mut err {
                *hint = format!("{pending} plan entries still lack a protocol; {hint}");
            }
            Err(err)
        }
        state => Err(wrong_state(&session.session_id, state, "assess")),
    }
}

/// Checks that the plan was derived from exactly these documents.
pub fn check_references(
    device: &DeviceModel,
    profile: &TestingProfile,
    catalog: &TestCaseCatalog,
    plan: &TestPlan,
) -> Result<(), StoreError> {
    let mismatch = |what: &str, planned: &str, supplied: &str| {
        Err(StoreError::InconsistentReferences(format!(
            "plan `{}` references {what} `{planned}` but `{supplied}` was supplied",
            plan.plan_id
        )))
    };
    if plan.device_id != device.device_id {
        return mismatch("device", &plan.device_id, &device.device_id);
    }
    if plan.profile_id != profile.profile_id {
        return mismatch("profile", &plan.profile_id, &profile.profile_id);
    }
    if plan.catalog_id != catalog.catalog_id {
        return mismatch("catalog", &plan.catalog_id, &catalog.catalog_id);
    }
    if plan.catalog_version != catalog.version {
        return mismatch("catalog version", &plan.catalog_version, &catalog.version);
    }
    for entry in &plan.entries {
        if catalog.case(&entry.case_id).is_none() {
            return Err(StoreError::InconsistentReferences(format!(
                "plan entry `{}` references case `{}` missing from the catalog",
                entry.plan_entry_id, entry.case_id
            )));
        }
        if device.component(&entry.target_component_id).is_none() {
            return Err(StoreError::InconsistentReferences(format!(
                "plan entry `{}` targets component `{}` missing from the device model",
                entry.plan_entry_id, entry.target_component_id
            )));
        }
    }
    Ok(())
}

/// Exclusive writer lock on one session directory, released on drop.
struct SessionLock {
    path: PathBuf,
}

impl Drop for SessionLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn process_alive(pid: u32) -> bool {
    let proc_root = Path::new("/proc");
    if !proc_root.is_dir() {
        return true;
    }
    proc_root.join(pid.to_string()).exists()
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn parse_record_name(name: &str) -> Option<u64> {
    let stem = name.strip_suffix(".json")?;
    let (number, kind) = stem.split_once('-')?;
    if number.len() < 4 || !number.bytes().all(|b| b.is_ascii_digit()) || kind.is_empty() {
        return None;
    }
    number.parse().ok()
}

/// Flat-file store rooted at one directory.
pub struct CampaignStore {
    root: PathBuf,
    clock: Box<dyn Clock>,
    lock_timeout: Duration,
}

impl fmt::Debug for CampaignStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CampaignStore").field("root", &self.root).finish_non_exhaustive()
    }
}

impl CampaignStore {
    /// Opens (and creates if needed) the store at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(format!("creating store root {}", root.display())))?;
        Ok(Self {
            root,
            clock: Box::new(SystemClock),
            lock_timeout: Duration::from_secs(10),
        })
    }

    pub fn with_clock(mut self, clock: Box<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_lock_timeout(mut self, timeout: Duration) -> Self {
        self.lock_timeout = timeout;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_dir(&self, session_id: &str) -> Result<PathBuf, StoreError> {
        if !valid_session_id(session_id) {
            return Err(StoreError::NotFound(session_id.to_string()));
        }
        let dir = self.root.join(session_id);
        if !dir.is_dir() {
            return Err(StoreError::NotFound(session_id.to_string()));
        }
        Ok(dir)
    }

    fn lock(&self, session_id: &str, dir: &Path) -> Result<SessionLock, StoreError> {
        let path = dir.join(LOCK_FILE);
        let deadline = Instant::now() + self.lock_timeout;
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut file) => {
                    let _ = write!(file, "{}", std::process::id());
                    return Ok(SessionLock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).ok().and_then(|s| s.trim().parse::<u32>().ok());
                    if let Some(pid) = holder {
                        if !process_alive(pid) {
                            tracing::warn!(session_id, pid, "removing stale session lock");
                            let _ = fs::remove_file(&path);
                            continue;
                        }
                    }
                    if Instant::now() >= deadline {
                        return Err(StoreError::Locked(session_id.to_string()));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(io_err(format!("locking session {session_id}"))(e)),
            }
        }
    }

    fn write_record(dir: &Path, record: &StoreRecord) -> Result<(), StoreError> {
        let final_path = dir.join(record.file_name());
        let tmp_path = dir.join(format!("{}.tmp", record.file_name()));
        let bytes = serialize_document(record);
        let write = || -> io::Result<()> {
            let mut file = File::create(&tmp_path)?;
            file.write_all(&bytes)?;
            file.sync_all()?;
            fs::rename(&tmp_path, &final_path)?;
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
            Ok(())
        };
        write().map_err(io_err(format!("writing {}", final_path.display())))
    }

    fn make_record<T: Document>(&self, previous: Option<&StoreRecord>, document: &T) -> StoreRecord {
        let mut record = StoreRecord {
            sequence: previous.map_or(1, |r| r.sequence + 1),
            document_kind: T::KIND.to_string(),
            appended_at: self.clock.now(),
            previous_digest: previous.map_or(GENESIS_DIGEST.to_string(), |r| r.digest.clone()),
            digest: String::new(),
            document: to_canonical_value(document),
        };
        record.digest = record.compute_digest();
        record
    }

    fn read_records(&self, session_id: &str, dir: &Path) -> Result<Vec<StoreRecord>, StoreError> {
        let corrupt = |detail: String| StoreError::CorruptLog {
            session_id: session_id.to_string(),
            detail,
        };
        let mut files = Vec::new();
        for item in fs::read_dir(dir).map_err(io_err(format!("reading {}", dir.display())))? {
            let item = item.map_err(io_err(format!("reading {}", dir.display())))?;
            let name = item.file_name().to_string_lossy().into_owned();
            if let Some(sequence) = parse_record_name(&name) {
                files.push((sequence, item.path()));
            }
        }
        files.sort();
        let mut records = Vec::with_capacity(files.len());
        for (sequence, path) in files {
            let bytes = fs::read(&path).map_err(io_err(format!("reading {}", path.display())))?;
            let record: StoreRecord = parse_document(&bytes)
                .map_err(|e| corrupt(format!("record {sequence} is unreadable: {e}")))?;
            let expected_name = record.file_name();
            if path.file_name().and_then(|n| n.to_str()) != Some(expected_name.as_str()) {
                return Err(corrupt(format!(
                    "file {} holds record {} ({})",
                    path.display(),
                    record.sequence,
                    record.document_kind
                )));
            }
            records.push(record);
        }
        Ok(records)
    }

    fn replay(session_id: &str, records: Vec<StoreRecord>) -> Result<Session, StoreError> {
        let corrupt = |detail: String| StoreError::CorruptLog {
            session_id: session_id.to_string(),
            detail,
        };
        let mut replay = Replay {
            session_id: session_id.to_string(),
            ..Replay::default()
        };
        for record in records {
            replay.apply(record).map_err(corrupt)?;
        }
        replay.finish().map_err(corrupt)
    }

    /// Persists a new session in PLANNED state and returns its id.
    pub fn create_session(
        &self,
        device: &DeviceModel,
        profile: &TestingProfile,
        catalog: &TestCaseCatalog,
        plan: &TestPlan,
    ) -> Result<String, StoreError> {
        let invalid = |e: DocumentError| StoreError::InconsistentReferences(format!("invalid document: {e}"));
        device.validate().map_err(invalid)?;
        profile.validate().map_err(invalid)?;
        catalog.validate().map_err(invalid)?;
        plan.validate().map_err(invalid)?;
        check_references(device, profile, catalog, plan)?;

        let (session_id, dir) = loop {
            let id = format!("S-{}", uuid::Uuid::now_v7().simple());
            let dir = self.root.join(&id);
            match fs::create_dir(&dir) {
                Ok(()) => break (id, dir),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(io_err(format!("creating {}", dir.display()))(e)),
            }
        };
        let _lock = self.lock(&session_id, &dir)?;
        let r1 = self.make_record(None, device);
        let r2 = self.make_record(Some(&r1), profile);
        let r3 = self.make_record(Some(&r2), catalog);
        let r4 = self.make_record(Some(&r3), plan);
        for record in [&r1, &r2, &r3, &r4] {
            Self::write_record(&dir, record)?;
        }
        tracing::debug!(session_id, plan_id = %plan.plan_id, "session created");
        Ok(session_id)
    }

    pub fn load_session(&self, session_id: &str) -> Result<Session, StoreError> {
        let dir = self.session_dir(session_id)?;
        let records = self.read_records(session_id, &dir)?;
        Self::replay(session_id, records)
    }

    /// Session ids in creation order.
    pub fn list_sessions(&self) -> Result<Vec<String>, StoreError> {
        let mut sessions = Vec::new();
        for item in fs::read_dir(&self.root).map_err(io_err(format!("reading {}", self.root.display())))? {
            let item = item.map_err(io_err(format!("reading {}", self.root.display())))?;
            let name = item.file_name().to_string_lossy().into_owned();
            if !valid_session_id(&name) || !item.path().is_dir() {
                continue;
            }
            let Some(first) = fs::read_dir(item.path())
                .ok()
                .into_iter()
                .flatten()
                .flatten()
                .find(|f| f.file_name().to_string_lossy().starts_with("0001-"))
            else {
                continue;
            };
            let created = fs::read(first.path())
                .ok()
                .and_then(|b| parse_document::<StoreRecord>(&b).ok())
                .map(|r| r.appended_at);
            sessions.push((created, name));
        }
        sessions.sort();
        Ok(sessions.into_iter().map(|(_, id)| id).collect())
    }

    /// Loads the session under its writer lock, lets `op` produce the next
    /// record, and applies it to the loaded state before writing.
    fn append_with<T: Document>(
        &self,
        session_id: &str,
        op: impl FnOnce(&Session) -> Result<T, StoreError>,
    ) -> Result<Session, StoreError> {
        self.append_if(session_id, |session| op(session).map(Some))
    }

    /// Like [`Self::append_with`], but `op` may decline to append by returning `None`.
    fn append_if<T: Document>(
        &self,
        session_id: &str,
        op: impl FnOnce(&Session) -> Result<Option<T>, StoreError>,
    ) -> Result<Session, StoreError> {
        let dir = self.session_dir(session_id)?;
        let _lock = self.lock(session_id, &dir)?;
        let records = self.read_records(session_id, &dir)?;
        let session = Self::replay(session_id, records.clone())?;
        let Some(document) = op(&session)? else {
            return Ok(session);
        };
        let record = self.make_record(records.last(), &document);

        let mut replay = Replay {
            session_id: session_id.to_string(),
            ..Replay::default()
        };
        for r in records {
            replay.apply(r).expect("log was just replayed");
        }
        replay.apply(record.clone()).map_err(|detail| StoreError::CorruptLog {
            session_id: session_id.to_string(),
            detail,
        })?;
        Self::write_record(&dir, &record)?;
        replay.finish().map_err(|detail| StoreError::CorruptLog {
            session_id: session_id.to_string(),
            detail,
        })
    }

    /// Moves a PLANNED session to EXECUTING. A session already executing is returned unchanged.
    pub fn begin_execution(&self, session_id: &str) -> Result<Session, StoreError> {
        let current = self.load_session(session_id)?;
        match current.state {
            SessionState::Planned => {}
            SessionState::Executing | SessionState::AwaitingManual => return Ok(current),
            state => return Err(wrong_state(session_id, state, "start execution")),
        }
        // Re-checked under the lock: a concurrent caller may have started it meanwhile.
        self.append_if(session_id, |session| match session.state {
            SessionState::Planned => Ok(Some(StateChange {
                to: SessionState::Executing,
            })),
            SessionState::Executing | SessionState::AwaitingManual => Ok(None),
            state => Err(wrong_state(session_id, state, "start execution")),
        })
    }

    /// Appends one protocol and returns the updated session.
    pub fn append_protocol(&self, session_id: &str, protocol: &ExecutionProtocol) -> Result<Session, StoreError> {
        protocol
            .validate()
            .map_err(|e| StoreError::InconsistentReferences(format!("invalid protocol: {e}")))?;
        self.append_with(session_id, |session| {
            let replay = Replay {
                session_id: session.session_id.clone(),
                plan: Some(session.plan.clone()),
                state: Some(session.state),
                protocols: session.protocols.clone(),
                ..Replay::default()
            };
            replay.check_protocol(protocol)?;
            Ok(protocol.clone())
        })
    }

    /// Records the assessment and closes the session.
    pub fn record_assessment(&self, session_id: &str, assessment: &AssessmentRecord) -> Result<Session, StoreError> {
        self.append_with(session_id, |session| {
            check_assessable(session)?;
            if assessment.report.plan_id != session.plan.plan_id {
                return Err(StoreError::InconsistentReferences(format!(
                    "report for plan `{}` cannot close session of plan `{}`",
                    assessment.report.plan_id, session.plan.plan_id
                )));
            }
            Ok(assessment.clone())
        })
    }

    /// Fails with WRONG_STATE unless `session` can be assessed now.
    pub fn ensure_assessable(session: &Session) -> Result<(), StoreError> {
        check_assessable(session)
    }

    /// Writes a loaded session's records into this store under the same id.
    pub fn save_session(&self, session: &Session) -> Result<(), StoreError> {
        if !valid_session_id(&session.session_id) {
            return Err(StoreError::InconsistentReferences(format!(
                "`{}` is not a valid session id",
                session.session_id
            )));
        }
        let verified = Self::replay(&session.session_id, session.records.clone())?;
        if verified != *session {
            return Err(StoreError::InconsistentReferences(
                "session state does not match its records".into(),
            ));
        }
        let dir = self.root.join(&session.session_id);
        fs::create_dir(&dir).map_err(io_err(format!("creating {}", dir.display())))?;
        let _lock = self.lock(&session.session_id, &dir)?;
        for record in &session.records {
            Self::write_record(&dir, record)?;
        }
        Ok(())
    }

    /// Path of the record file of `sequence` in a session, if it exists.
    pub fn record_path(&self, session_id: &str, sequence: u64) -> Result<Option<PathBuf>, StoreError> {
        let dir = self.session_dir(session_id)?;
        let session_records = self.read_records(session_id, &dir)?;
        Ok(session_records
            .iter()
            .find(|r| r.sequence == sequence)
            .map(|r| dir.join(r.file_name())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SteppingClock;
    use crate::filter::{plan_entry_id, GuideStep, ResolvedExecutor};
    use crate::harness::{ExecutorIdentity, ProtocolOutcome};
    use crate::model::{
        AuthorizationAccessLevel, ComponentKind, ComponentSelector, DataSensitivityLevel, DeviceComponent,
        ExecutorRef, PhysicalAccessLevel, SecurityImpactLevel, Severity, StepTemplate, TestCase, VerificationLevel,
    };
    use std::collections::{BTreeMap, BTreeSet};

    fn fixtures() -> (DeviceModel, TestingProfile, TestCaseCatalog, TestPlan) {
        let device = DeviceModel {
            device_id: "dev".into(),
            display_name: "Device".into(),
            components: vec![DeviceComponent::new("svc", ComponentKind::NetworkService)],
            metadata: BTreeMap::new(),
        };
        let profile = TestingProfile {
            profile_id: "prof".into(),
            granted_physical: PhysicalAccessLevel::Remote,
            granted_authorization: AuthorizationAccessLevel::Unauthorized,
            device_data_sensitivity: DataSensitivityLevel::Personal,
            device_security_impact: SecurityImpactLevel::PropertyPrivacy,
            verification_level: VerificationLevel::Standard,
            ecosystem: vec![],
            verification_overrides: BTreeMap::new(),
        };
        let case = |id: &str, mode: ExecutionMode| TestCase {
            case_id: id.into(),
            title: id.into(),
            description: String::new(),
            selector: ComponentSelector::kind(ComponentKind::NetworkService),
            required_physical: PhysicalAccessLevel::Remote,
            required_authorization: AuthorizationAccessLevel::Unauthorized,
            min_data_sensitivity: DataSensitivityLevel::NonPersonal,
            min_security_impact: SecurityImpactLevel::Inconvenience,
            verification_levels: BTreeSet::from([VerificationLevel::Standard]),
            severity: Severity::Major,
            execution_mode: mode,
            executor_ref: (mode != ExecutionMode::Manual).then(|| ExecutorRef {
                capability: "x".into(),
                parameters: BTreeMap::new(),
            }),
            manual_steps: if mode == ExecutionMode::Automated {
                vec![]
            } else {
                vec![StepTemplate {
                    instruction: "look".into(),
                    expected_observation: "ok".into(),
                }]
            },
            references: vec![],
        };
        let catalog = TestCaseCatalog {
            catalog_id: "cat".into(),
            version: "1".into(),
            cases: vec![case("A", ExecutionMode::Automated), case("M", ExecutionMode::Manual)],
        };
        let entry = |id: &str, mode: ExecutionMode| PlannedTest {
            plan_entry_id: plan_entry_id(id, "svc"),
            case_id: id.into(),
            title: id.into(),
            target_component_id: "svc".into(),
            severity: Severity::Major,
            execution_mode: mode,
            instantiated_guide: if mode == ExecutionMode::Automated {
                vec![]
            } else {
                vec![GuideStep {
                    instruction: "look".into(),
                    expected_observation: "ok".into(),
                }]
            },
            executor: (mode != ExecutionMode::Manual).then(|| ResolvedExecutor {
                capability: "x".into(),
                parameters: BTreeMap::new(),
            }),
        };
        let plan = TestPlan {
            plan_id: "PLAN-1".into(),
            device_id: "dev".into(),
            profile_id: "prof".into(),
            catalog_id: "cat".into(),
            catalog_version: "1".into(),
            created_at: SteppingClock::default().now(),
            ecosystem_scope: vec![],
            entries: vec![entry("A", ExecutionMode::Automated), entry("M", ExecutionMode::Manual)],
        };
        (device, profile, catalog, plan)
    }

    fn protocol(entry: &str, case: &str, outcome: ProtocolOutcome) -> ExecutionProtocol {
        let at = SteppingClock::default().now();
        ExecutionProtocol {
            protocol_id: ExecutionProtocol::id_for(entry),
            plan_id: "PLAN-1".into(),
            plan_entry_id: entry.into(),
            case_id: case.into(),
            executor: ExecutorIdentity::manual("tester"),
            started_at: at,
            ended_at: at,
            steps_performed: vec![],
            outcome,
            outcome_rationale: "r".into(),
        }
    }

    fn store() -> (tempfile::TempDir, CampaignStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = CampaignStore::open(dir.path()).unwrap();
        (dir, store)
    }

    #[test]
    fn create_and_load_round_trip() {
        let (_dir, store) = store();
        let (d, p, c, plan) = fixtures();
        let id = store.create_session(&d, &p, &c, &plan).unwrap();
        let session = store.load_session(&id).unwrap();
        assert_eq!(session.state, SessionState::Planned);
        assert_eq!((session.device, session.profile, session.catalog, session.plan), (d, p, c, plan));
        assert!(store.root().join(&id).join("0004-test-plan.json").is_file());
    }

    #[test]
    fn inconsistent_references() {
        let (_dir, store) = store();
        let (d, p, c, mut plan) = fixtures();
        plan.device_id = "other".into();
        let err = store.create_session(&d, &p, &c, &plan).unwrap_err();
        assert_eq!(err.code(), "INCONSISTENT_REFERENCES");
    }

    #[test]
    fn state_walkthrough() {
        let (_dir, store) = store();
        let (d, p, c, plan) = fixtures();
        let id = store.create_session(&d, &p, &c, &plan).unwrap();
        let err = store
            .append_protocol(&id, &protocol("A@svc", "A", ProtocolOutcome::Pass))
            .unwrap_err();
        assert_eq!(err.code(), "WRONG_STATE");
        assert_eq!(store.begin_execution(&id).unwrap().state, SessionState::Executing);
        let s = store.append_protocol(&id, &protocol("A@svc", "A", ProtocolOutcome::Pass)).unwrap();
        assert_eq!(s.state, SessionState::AwaitingManual);
        assert!(!s.all_covered());
        let err = store
            .append_protocol(&id, &protocol("A@svc", "A", ProtocolOutcome::Fail))
            .unwrap_err();
        assert_eq!(err.code(), "DUPLICATE_ENTRY");
        let s = store.append_protocol(&id, &protocol("M@svc", "M", ProtocolOutcome::Pass)).unwrap();
        assert!(s.all_covered());
        assert_eq!(store.load_session(&id).unwrap(), s);
    }

    #[test]
    fn unknown_session_is_not_found() {
        let (_dir, store) = store();
        assert_eq!(store.load_session("S-missing").unwrap_err().code(), "NOT_FOUND");
        assert_eq!(store.load_session("../etc").unwrap_err().code(), "NOT_FOUND");
    }

    #[test]
    fn truncated_record_is_corrupt() {
        let (_dir, store) = store();
        let (d, p, c, plan) = fixtures();
        let id = store.create_session(&d, &p, &c, &plan).unwrap();
        let path = store.record_path(&id, 3).unwrap().unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert_eq!(store.load_session(&id).unwrap_err().code(), "CORRUPT_LOG");
    }

    #[test]
    fn tampered_record_breaks_the_chain() {
        let (_dir, store) = store();
        let (d, p, c, plan) = fixtures();
        let id = store.create_session(&d, &p, &c, &plan).unwrap();
        let path = store.record_path(&id, 1).unwrap().unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("\"Device\"", "\"Devicf\"");
        fs::write(&path, text).unwrap();
        assert_eq!(store.load_session(&id).unwrap_err().code(), "CORRUPT_LOG");
    }

    #[test]
    fn sessions_list_in_creation_order() {
        let (_dir, store) = store();
        let (d, p, c, plan) = fixtures();
        let ids: Vec<_> = (0..3).map(|_| store.create_session(&d, &p, &c, &plan).unwrap()).collect();
        assert_eq!(store.list_sessions().unwrap(), ids);
        assert_ne!(ids[0], ids[1]);
    }

    #[test]
    fn stale_lock_is_reclaimed() {
        let (_dir, store) = store();
        let (d, p, c, plan) = fixtures();
        let id = store.create_session(&d, &p, &c, &plan).unwrap();
        // pid far above any default pid_max
        fs::write(store.root().join(&id).join(LOCK_FILE), "4000000000").unwrap();
        assert!(store.begin_execution(&id).is_ok());
    }

    #[test]
    fn live_lock_blocks_writers() {
        let (_dir, store) = store();
        let store = store.with_lock_timeout(Duration::from_millis(50));
        let (d, p, c, plan) = fixtures();
        let id = store.create_session(&d, &p, &c, &plan).unwrap();
        fs::write(store.root().join(&id).join(LOCK_FILE), std::process::id().to_string()).unwrap();
        assert_eq!(store.begin_execution(&id).unwrap_err().code(), "LOCKED");
        assert!(store.load_session(&id).is_ok());
    }
}
