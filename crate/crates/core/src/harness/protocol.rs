use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::observation::Observation;
use crate::model::{Document, DocumentError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProtocolOutcome {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
    Error,
}

impl ProtocolOutcome {
    pub const ALL: [ProtocolOutcome; 5] = [Self::Pass, Self::Fail, Self::Inconclusive, Self::Skipped, Self::Error];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::Inconclusive => "INCONCLUSIVE",
            Self::Skipped => "SKIPPED",
            Self::Error => "ERROR",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.as_str().eq_ignore_ascii_case(token.trim()))
    }
}

impl fmt::Display for ProtocolOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Who produced a protocol: an executor with its version, or `manual` with the assessor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExecutorIdentity {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessor_id: Option<String>,
}

impl ExecutorIdentity {
    pub const MANUAL: &'static str = "manual";

    pub fn executor(name: impl Into<String>, version: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            version: Some(version.into()),
            assessor_id: None,
        }
    }

    pub fn manual(assessor_id: impl Into<String>) -> Self {
        Self {
            name: Self::MANUAL.into(),
            version: None,
            assessor_id: Some(assessor_id.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PerformedStep {
    pub step: String,
    pub observations: Vec<Observation>,
}

impl PerformedStep {
    pub fn new(step: impl Into<String>, observations: Vec<Observation>) -> Self {
        Self {
            step: step.into(),
            observations,
        }
    }
}

/// Machine-readable record of one plan entry's execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExecutionProtocol {
    pub protocol_id: String,
    pub plan_id: String,
    pub plan_entry_id: String,
    pub case_id: String,
    pub executor: ExecutorIdentity,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub steps_performed: Vec<PerformedStep>,
    pub outcome: ProtocolOutcome,
    pub outcome_rationale: String,
}

impl ExecutionProtocol {
    /// Protocol id for an entry. One protocol exists per entry, so the id is derived from it.
    pub fn id_for(plan_entry_id: &str) -> String {
        format!("PR:{plan_entry_id}")
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.steps_performed.iter().flat_map(|s| s.observations.iter())
    }
}

impl Document for ExecutionProtocol {
    const KIND: &'static str = "execution-protocol";

    fn validate(&self) -> Result<(), DocumentError> {
        if self.ended_at < self.started_at {
            return Err(DocumentError::invariant(
                "ended-not-before-started",
                "$.ended-at",
                format!("protocol `{}` ends before it starts", self.protocol_id),
            ));
        }
        if self.plan_entry_id.trim().is_empty() {
            return Err(DocumentError::invariant(
                "references-plan-entry",
                "$.plan-entry-id",
                "protocol must reference a plan entry",
            ));
        }
        Ok(())
    }
}

/// Assessor input for a manual or semi-automated entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ManualSubmission {
    pub plan_entry_id: String,
    pub assessor_id: String,
    /// One list per instantiated guide step, possibly empty.
    pub step_observations: Vec<Vec<Observation>>,
    pub outcome: ProtocolOutcome,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<DateTime<Utc>>,
}

impl Document for ManualSubmission {
    const KIND: &'static str = "manual-submission";
}
