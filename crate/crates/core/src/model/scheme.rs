use serde::{Deserialize, Serialize};

use super::device::require_token;
use super::document::{Document, DocumentError};

/// Handling of critical failures. Not configurable: any critical failure fails the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CriticalRule {
    #[default]
    #[serde(rename = "AUTO_FAIL")]
    AutoFail,
}

/// Handling of skipped cases. Not configurable: skipped cases never count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SkippedPolicy {
    #[default]
    #[serde(rename = "EXCLUDE")]
    Exclude,
}

/// How INCONCLUSIVE (and ERROR) protocol outcomes enter the assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InconclusivePolicy {
    TreatAsFail,
    TreatAsSkip,
}

/// Threshold rules mapping case verdicts onto a secure/insecure result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AssessmentScheme {
    pub scheme_id: String,
    pub critical_rule: CriticalRule,
    /// Largest number of MAJOR failures still assessed as secure.
    pub major_fail_threshold: u32,
    /// Largest number of MINOR failures still assessed as secure.
    pub minor_fail_threshold: u32,
    pub inconclusive_policy: InconclusivePolicy,
    pub skipped_policy: SkippedPolicy,
}

impl AssessmentScheme {
    pub fn new(
        scheme_id: impl Into<String>,
        major_fail_threshold: u32,
        minor_fail_threshold: u32,
        inconclusive_policy: InconclusivePolicy,
    ) -> Self {
        Self {
            scheme_id: scheme_id.into(),
            critical_rule: CriticalRule::AutoFail,
            major_fail_threshold,
            minor_fail_threshold,
            inconclusive_policy,
            skipped_policy: SkippedPolicy::Exclude,
        }
    }
}

/// Id of the built-in scheme available in every store.
pub const DEFAULT_SCHEME_ID: &str = "default";

impl AssessmentScheme {
    /// Built-in scheme: any critical failure, more than one major or more than
    /// three minor failures make the device insecure; inconclusive counts as fail.
    pub fn default_scheme() -> Self {
        Self::new(DEFAULT_SCHEME_ID, 1, 3, InconclusivePolicy::TreatAsFail)
    }
}

impl Document for AssessmentScheme {
    const KIND: &'static str = "assessment-scheme";

    fn validate(&self) -> Result<(), DocumentError> {
        require_token("$.scheme-id", &self.scheme_id)
    }
}
