//! Session-level pipeline steps shared by the command line and the HTTP service.
//!
//! Each function loads the session from a [`CampaignStore`], runs one stage
//! and appends its artifacts, so a campaign can be driven from several
//! front ends and resumed at any point.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::assessment::{assess, render_report, render_text, AssessmentError, AssessmentReport};
use crate::clock::Clock;
use crate::filter::PlannedTest;
use crate::harness::{
    execute_entries, record_manual_result, ExecutionProtocol, ExecutorRegistry, HarnessError, HarnessOptions,
    ManualSubmission,
};
use crate::model::{parse_document, AssessmentScheme, DocumentError, DEFAULT_SCHEME_ID};
use crate::store::{AssessmentRecord, CampaignStore, Session, StoreError};

/// Directory below the store root holding additional assessment schemes.
pub const SCHEMES_DIR: &str = "schemes";

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Assessment(#[from] AssessmentError),
    #[error("UNKNOWN_ENTRY: plan `{plan_id}` has no entry `{plan_entry_id}`")]
    UnknownEntry { plan_id: String, plan_entry_id: String },
    #[error("UNKNOWN_SCHEME: no assessment scheme `{0}`")]
    UnknownScheme(String),
    #[error("INVALID_SCHEME: {path}: {source}")]
    InvalidScheme {
        path: String,
        #[source]
        source: DocumentError,
    },
    #[error("NOT_ASSESSED: session `{0}` has no assessment yet")]
    NotAssessed(String),
}

impl CampaignError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Store(e) => e.code(),
            Self::Harness(e) => e.code(),
            Self::Assessment(e) => e.code(),
            Self::UnknownEntry { .. } => "UNKNOWN_ENTRY",
            Self::UnknownScheme(_) => "UNKNOWN_SCHEME",
            Self::InvalidScheme { .. } => "INVALID_SCHEME",
            Self::NotAssessed(_) => "NOT_ASSESSED",
        }
    }
}

/// Runs every automated entry that has no protocol yet, appending each
/// protocol as soon as it is emitted. `on_protocol` sees them in plan order.
pub fn run_automated(
    store: &CampaignStore,
    session_id: &str,
    registry: &ExecutorRegistry,
    options: &HarnessOptions,
    on_protocol: &(dyn Fn(&ExecutionProtocol) + Sync),
) -> Result<Session, CampaignError> {
    let session = store.begin_execution(session_id)?;
    let pending: Vec<PlannedTest> = session.pending_automated().into_iter().cloned().collect();
    let sink = |protocol: &ExecutionProtocol| {
        store.append_protocol(session_id, protocol).map_err(|e| e.to_string())?;
        on_protocol(protocol);
        Ok(())
    };
    execute_entries(&session.plan.plan_id, &pending, registry, &sink, options)?;
    Ok(store.load_session(session_id)?)
}

/// Validates assessor input for one entry and appends the resulting protocol.
pub fn submit_manual(
    store: &CampaignStore,
    session_id: &str,
    submission: &ManualSubmission,
    clock: &dyn Clock,
) -> Result<(ExecutionProtocol, Session), CampaignError> {
    let session = store.load_session(session_id)?;
    let entry = session
        .plan
        .entry(&submission.plan_entry_id)
        .ok_or_else(|| CampaignError::UnknownEntry {
            plan_id: session.plan.plan_id.clone(),
            plan_entry_id: submission.plan_entry_id.clone(),
        })?;
    let protocol = record_manual_result(&session.plan.plan_id, entry, submission, clock)?;
    store.begin_execution(session_id)?;
    let session = store.append_protocol(session_id, &protocol)?;
    Ok((protocol, session))
}

/// Assesses a fully covered session under `scheme` and closes it.
pub fn assess_session(
    store: &CampaignStore,
    session_id: &str,
    scheme: &AssessmentScheme,
) -> Result<(AssessmentRecord, Session), CampaignError> {
    let session = store.load_session(session_id)?;
    CampaignStore::ensure_assessable(&session)?;
    let protocols: Vec<ExecutionProtocol> = session.protocols_in_plan_order().into_iter().cloned().collect();
    let assessment = assess(&session.plan, &protocols, scheme)?;
    let (report, _) = render_report(&session.plan, &protocols, &assessment.verdicts, &assessment.overall)?;
    let record = AssessmentRecord {
        scheme: scheme.clone(),
        report,
    };
    let session = store.record_assessment(session_id, &record)?;
    Ok((record, session))
}

/// Machine and text report of an assessed session.
pub fn session_report(session: &Session) -> Result<(&AssessmentReport, String), CampaignError> {
    let record = session
        .assessment
        .as_ref()
        .ok_or_else(|| CampaignError::NotAssessed(session.session_id.clone()))?;
    Ok((&record.report, render_text(&record.report)))
}

/// The built-in scheme followed by every scheme file in `<store>/schemes`,
/// ordered by id. A file may replace the built-in scheme by reusing its id.
pub fn available_schemes(store_root: &Path) -> Result<Vec<AssessmentScheme>, CampaignError> {
    let mut schemes = vec![AssessmentScheme::default_scheme()];
    let dir = store_root.join(SCHEMES_DIR);
    let Ok(listing) = fs::read_dir(&dir) else {
        return Ok(schemes);
    };
    let mut paths: Vec<_> = listing
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let invalid = |source| CampaignError::InvalidScheme {
            path: path.display().to_string(),
            source,
        };
        let bytes = fs::read(&path).map_err(|e| invalid(DocumentError::schema("$", e.to_string())))?;
        let scheme: AssessmentScheme = parse_document(&bytes).map_err(invalid)?;
        schemes.retain(|s| s.scheme_id != scheme.scheme_id);
        schemes.push(scheme);
    }
    schemes.sort_by(|a, b| a.scheme_id.cmp(&b.scheme_id));
    Ok(schemes)
}

/// Looks up `scheme_id` among [`available_schemes`]; `None` selects the default.
pub fn resolve_scheme(store_root: &Path, scheme_id: Option<&str>) -> Result<AssessmentScheme, CampaignError> {
    let wanted = scheme_id.unwrap_or(DEFAULT_SCHEME_ID);
    available_schemes(store_root)?
        .into_iter()
        .find(|s| s.scheme_id == wanted)
        .ok_or_else(|| CampaignError::UnknownScheme(wanted.to_string()))
}
