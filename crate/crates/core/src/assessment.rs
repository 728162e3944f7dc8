//! Case verdicts, threshold aggregation and the assessment report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{coverage_report, CoverageSummary, PlannedTest, TestPlan};
use crate::harness::{ExecutionProtocol, ObservationPayload, ProtocolOutcome};
use crate::model::{AssessmentScheme, Document, DocumentError, ExecutionMode, InconclusivePolicy, Severity};

pub const RULE_CRITICAL: &str = "critical-auto-fail";
pub const RULE_MAJOR: &str = "major-fail-threshold";
pub const RULE_MINOR: &str = "minor-fail-threshold";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssessmentError {
    #[error("ENTRY_MISMATCH: protocol `{protocol_id}` records `{recorded}`, not entry `{expected}`")]
    EntryMismatch {
        protocol_id: String,
        recorded: String,
        expected: String,
    },
    #[error("MIXED_PLAN: verdict for `{plan_entry_id}` belongs to plan `{found}`, expected `{expected}`")]
    MixedPlan {
        plan_entry_id: String,
        expected: String,
        found: String,
    },
    #[error("CROSS_REFERENCE: {0}")]
    CrossReference(String),
}

impl AssessmentError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EntryMismatch { .. } => "ENTRY_MISMATCH",
            Self::MixedPlan { .. } => "MIXED_PLAN",
            Self::CrossReference(_) => "CROSS_REFERENCE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EffectiveOutcome {
    Pass,
    Fail,
    Skipped,
}

impl EffectiveOutcome {
    pub const ALL: [EffectiveOutcome; 3] = [Self::Pass, Self::Fail, Self::Skipped];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::Skipped => "SKIPPED",
        }
    }
}

impl fmt::Display for EffectiveOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a recorded protocol outcome under `policy`. ERROR follows the inconclusive policy.
pub fn effective_outcome(outcome: ProtocolOutcome, policy: InconclusivePolicy) -> EffectiveOutcome {
    match (outcome, policy) {
        (ProtocolOutcome::Pass, _) => EffectiveOutcome::Pass,
        (ProtocolOutcome::Fail, _) => EffectiveOutcome::Fail,
        (ProtocolOutcome::Skipped, _) => EffectiveOutcome::Skipped,
        (ProtocolOutcome::Inconclusive | ProtocolOutcome::Error, InconclusivePolicy::TreatAsFail) => {
            EffectiveOutcome::Fail
        }
        (ProtocolOutcome::Inconclusive | ProtocolOutcome::Error, InconclusivePolicy::TreatAsSkip) => {
            EffectiveOutcome::Skipped
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CaseVerdict {
    pub case_id: String,
    pub plan_id: String,
    pub plan_entry_id: String,
    pub recorded_outcome: ProtocolOutcome,
    pub effective_outcome: EffectiveOutcome,
    pub severity: Severity,
    pub protocol_id: String,
}

pub fn derive_case_verdict(
    protocol: &ExecutionProtocol,
    entry: &PlannedTest,
    scheme: &AssessmentScheme,
) -> Result<CaseVerdict, AssessmentError> {
    if protocol.plan_entry_id != entry.plan_entry_id || protocol.case_id != entry.case_id {
        return Err(AssessmentError::EntryMismatch {
            protocol_id: protocol.protocol_id.clone(),
            recorded: protocol.plan_entry_id.clone(),
            expected: entry.plan_entry_id.clone(),
        });
    }
    Ok(CaseVerdict {
        case_id: entry.case_id.clone(),
        plan_id: protocol.plan_id.clone(),
        plan_entry_id: entry.plan_entry_id.clone(),
        recorded_outcome: protocol.outcome,
        effective_outcome: effective_outcome(protocol.outcome, scheme.inconclusive_policy),
        severity: entry.severity,
        protocol_id: protocol.protocol_id.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssessmentResult {
    Secure,
    Insecure,
}

impl AssessmentResult {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Secure => "SECURE",
            Self::Insecure => "INSECURE",
        }
    }
}

impl fmt::Display for AssessmentResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TriggeredRule {
    pub rule: String,
    pub detail: String,
}

/// Verdict counts of one severity tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TierCounts {
    pub severity: Severity,
    pub pass: u32,
    pub fail: u32,
    pub skipped: u32,
}

impl TierCounts {
    pub fn empty(severity: Severity) -> Self {
        Self {
            severity,
            pass: 0,
            fail: 0,
            skipped: 0,
        }
    }

    fn add(&mut self, outcome: EffectiveOutcome) {
        match outcome {
            EffectiveOutcome::Pass => self.pass += 1,
            EffectiveOutcome::Fail => self.fail += 1,
            EffectiveOutcome::Skipped => self.skipped += 1,
        }
    }
}

/// Counts per severity × effective outcome, one row per tier in severity order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerdictCounts(pub Vec<TierCounts>);

impl Default for VerdictCounts {
    fn default() -> Self {
        Self(Severity::ALL.into_iter().map(TierCounts::empty).collect())
    }
}

impl VerdictCounts {
    pub fn tally<'a>(verdicts: impl IntoIterator<Item = &'a CaseVerdict>) -> Self {
        let mut counts = Self::default();
        for v in verdicts {
            counts.tier_mut(v.severity).add(v.effective_outcome);
        }
        counts
    }

    pub fn tier(&self, severity: Severity) -> TierCounts {
        self.0
            .iter()
            .find(|t| t.severity == severity)
            .copied()
            .unwrap_or(TierCounts::empty(severity))
    }

    fn tier_mut(&mut self, severity: Severity) -> &mut TierCounts {
        let at = self.0.iter().position(|t| t.severity == severity).expect("every tier present");
        &mut self.0[at]
    }

    pub fn fails(&self, severity: Severity) -> u32 {
        self.tier(severity).fail
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|t| t.pass + t.fail + t.skipped).sum()
    }
}

/// Evaluates the scheme's rules on `counts`. SKIPPED never counts.
pub fn evaluate(counts: &VerdictCounts, scheme: &AssessmentScheme) -> (AssessmentResult, Vec<TriggeredRule>) {
    let mut rules = Vec::new();
    let critical = counts.fails(Severity::Critical);
    if critical > 0 {
        rules.push(TriggeredRule {
            rule: RULE_CRITICAL.into(),
            detail: format!("{critical} CRITICAL case(s) failed"),
        });
    }
    let major = counts.fails(Severity::Major);
    if major > scheme.major_fail_threshold {
        rules.push(TriggeredRule {
            rule: RULE_MAJOR.into(),
            detail: format!("{major} MAJOR failures exceed threshold {}", scheme.major_fail_threshold),
        });
    }
    let minor = counts.fails(Severity::Minor);
    if minor > scheme.minor_fail_threshold {
        rules.push(TriggeredRule {
            rule: RULE_MINOR.into(),
            detail: format!("{minor} MINOR failures exceed threshold {}", scheme.minor_fail_threshold),
        });
    }
    let result = if rules.is_empty() {
        AssessmentResult::Secure
    } else {
        AssessmentResult::Insecure
    };
    (result, rules)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OverallVerdict {
    pub result: AssessmentResult,
    pub triggered_rules: Vec<TriggeredRule>,
    pub counts: VerdictCounts,
    pub scheme_id: String,
    pub plan_id: String,
    /// No case verdict was aggregated; the SECURE result is vacuous.
    pub empty_plan: bool,
}

impl OverallVerdict {
    /// Result recomputed from the counts alone.
    pub fn recompute(&self, scheme: &AssessmentScheme) -> AssessmentResult {
        evaluate(&self.counts, scheme).0
    }
}

pub fn aggregate(
    plan_id: &str,
    verdicts: &[CaseVerdict],
    scheme: &AssessmentScheme,
) -> Result<OverallVerdict, AssessmentError> {
    if let Some(stray) = verdicts.iter().find(|v| v.plan_id != plan_id) {
        return Err(AssessmentError::MixedPlan {
            plan_entry_id: stray.plan_entry_id.clone(),
            expected: plan_id.to_string(),
            found: stray.plan_id.clone(),
        });
    }
    let counts = VerdictCounts::tally(verdicts);
    let (result, mut triggered_rules) = evaluate(&counts, scheme);
    // Note where INCONCLUSIVE or ERROR outcomes were counted as failures.
    for rule in &mut triggered_rules {
        let severity = match rule.rule.as_str() {
            RULE_CRITICAL => Severity::Critical,
            RULE_MAJOR => Severity::Major,
            _ => Severity::Minor,
        };
        let mapped: Vec<&str> = verdicts
            .iter()
            .filter(|v| {
                v.severity == severity
                    && v.effective_outcome == EffectiveOutcome::Fail
                    && v.recorded_outcome != ProtocolOutcome::Fail
            })
            .map(|v| v.plan_entry_id.as_str())
            .collect();
        if !mapped.is_empty() {
            let _ = write!(
                rule.detail,
                "; {} of them recorded INCONCLUSIVE or ERROR and counted as FAIL by TREAT_AS_FAIL ({})",
                mapped.len(),
                mapped.join(", ")
            );
        }
    }
    Ok(OverallVerdict {
        result,
        triggered_rules,
        counts,
        scheme_id: scheme.scheme_id.clone(),
        plan_id: plan_id.to_string(),
        empty_plan: verdicts.is_empty(),
    })
}

/// Verdicts and overall verdict of a plan whose entries all have protocols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assessment {
    pub verdicts: Vec<CaseVerdict>,
    pub overall: OverallVerdict,
}

/// Derives one verdict per plan entry (in plan order) and aggregates them.
pub fn assess(
    plan: &TestPlan,
    protocols: &[ExecutionProtocol],
    scheme: &AssessmentScheme,
) -> Result<Assessment, AssessmentError> {
    let by_entry = index_protocols(plan, protocols)?;
    let verdicts = plan
        .entries
        .iter()
        .map(|entry| {
            let protocol = by_entry.get(entry.plan_entry_id.as_str()).ok_or_else(|| {
                AssessmentError::CrossReference(format!("entry `{}` has no protocol", entry.plan_entry_id))
            })?;
            derive_case_verdict(protocol, entry, scheme)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let overall = aggregate(&plan.plan_id, &verdicts, scheme)?;
    Ok(Assessment { verdicts, overall })
}

fn index_protocols<'a>(
    plan: &TestPlan,
    protocols: &'a [ExecutionProtocol],
) -> Result<BTreeMap<&'a str, &'a ExecutionProtocol>, AssessmentError> {
    let mut by_entry = BTreeMap::new();
    for p in protocols {
        if p.plan_id != plan.plan_id {
            return Err(AssessmentError::CrossReference(format!(
                "protocol `{}` belongs to plan `{}`, not `{}`",
                p.protocol_id, p.plan_id, plan.plan_id
            )));
        }
        if plan.entry(&p.plan_entry_id).is_none() {
            return Err(AssessmentError::CrossReference(format!(
                "protocol `{}` references unknown entry `{}`",
                p.protocol_id, p.plan_entry_id
            )));
        }
        if by_entry.insert(p.plan_entry_id.as_str(), p).is_some() {
            return Err(AssessmentError::CrossReference(format!(
                "entry `{}` has more than one protocol",
                p.plan_entry_id
            )));
        }
    }
    Ok(by_entry)
}

/// One row of the per-case table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ReportRow {
    pub plan_entry_id: String,
    pub case_id: String,
    pub title: String,
    pub target_component_id: String,
    pub severity: Severity,
    pub execution_mode: ExecutionMode,
    pub recorded_outcome: ProtocolOutcome,
    pub effective_outcome: EffectiveOutcome,
    pub protocol_id: String,
    pub executor: String,
    pub rationale: String,
    /// `algorithm:hex` of every evidence digest observation.
    pub evidence_digests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AssessmentReport {
    pub plan_id: String,
    pub device_id: String,
    pub profile_id: String,
    pub catalog_id: String,
    pub catalog_version: String,
    pub overall: OverallVerdict,
    /// Plan order.
    pub cases: Vec<ReportRow>,
    pub coverage: CoverageSummary,
    pub empty_plan: bool,
}

impl AssessmentReport {
    pub fn failed(&self) -> impl Iterator<Item = &ReportRow> {
        self.cases.iter().filter(|r| r.effective_outcome == EffectiveOutcome::Fail)
    }
}

impl Document for AssessmentReport {
    const KIND: &'static str = "assessment-report";

    fn validate(&self) -> Result<(), DocumentError> {
        let mut ids = BTreeSet::new();
        for (i, row) in self.cases.iter().enumerate() {
            if !ids.insert(row.plan_entry_id.as_str()) {
                return Err(DocumentError::invariant(
                    "unique-plan-entry-id",
                    format!("$.cases[{i}].plan-entry-id"),
                    format!("duplicate row for `{}`", row.plan_entry_id),
                ));
            }
        }
        if self.overall.plan_id != self.plan_id {
            return Err(DocumentError::invariant(
                "single-plan",
                "$.overall.plan-id",
                "overall verdict belongs to a different plan",
            ));
        }
        Ok(())
    }
}

fn evidence_digests(protocol: &ExecutionProtocol) -> Vec<String> {
    protocol
        .observations()
        .filter_map(|o| match &o.payload {
            ObservationPayload::EvidenceDigest(d) => Some(format!("{}:{}", d.algorithm, d.digest)),
            _ => None,
        })
        .collect()
}

/// Builds the machine-readable report and the text report.
pub fn render_report(
    plan: &TestPlan,
    protocols: &[ExecutionProtocol],
    verdicts: &[CaseVerdict],
    overall: &OverallVerdict,
) -> Result<(AssessmentReport, String), AssessmentError> {
    if overall.plan_id != plan.plan_id {
        return Err(AssessmentError::CrossReference(format!(
            "overall verdict references plan `{}`, not `{}`",
            overall.plan_id, plan.plan_id
        )));
    }
    let by_entry = index_protocols(plan, protocols)?;
    let mut by_verdict = BTreeMap::new();
    for v in verdicts {
        if plan.entry(&v.plan_entry_id).is_none() {
            return Err(AssessmentError::CrossReference(format!(
                "verdict references unknown entry `{}`",
                v.plan_entry_id
            )));
        }
        by_verdict.insert(v.plan_entry_id.as_str(), v);
    }
    let mut cases = Vec::with_capacity(plan.entries.len());
    for entry in &plan.entries {
        let id = entry.plan_entry_id.as_str();
        let (Some(protocol), Some(verdict)) = (by_entry.get(id), by_verdict.get(id)) else {
            return Err(AssessmentError::CrossReference(format!(
                "entry `{id}` lacks a protocol or verdict"
            )));
        };
        if verdict.protocol_id != protocol.protocol_id {
            return Err(AssessmentError::CrossReference(format!(
                "verdict for `{id}` cites protocol `{}`, found `{}`",
                verdict.protocol_id, protocol.protocol_id
            )));
        }
        let executor = match (&protocol.executor.version, &protocol.executor.assessor_id) {
            (_, Some(assessor)) => format!("{} ({assessor})", protocol.executor.name),
            (Some(version), None) => format!("{} {version}", protocol.executor.name),
            (None, None) => protocol.executor.name.clone(),
        };
        cases.push(ReportRow {
            plan_entry_id: entry.plan_entry_id.clone(),
            case_id: entry.case_id.clone(),
            title: entry.title.clone(),
            target_component_id: entry.target_component_id.clone(),
            severity: entry.severity,
            execution_mode: entry.execution_mode,
            recorded_outcome: protocol.outcome,
            effective_outcome: verdict.effective_outcome,
            protocol_id: protocol.protocol_id.clone(),
            executor,
            rationale: protocol.outcome_rationale.clone(),
            evidence_digests: evidence_digests(protocol),
        });
    }
    let report = AssessmentReport {
        plan_id: plan.plan_id.clone(),
        device_id: plan.device_id.clone(),
        profile_id: plan.profile_id.clone(),
        catalog_id: plan.catalog_id.clone(),
        catalog_version: plan.catalog_version.clone(),
        overall: overall.clone(),
        cases,
        coverage: coverage_report(plan),
        empty_plan: plan.entries.is_empty(),
    };
    let text = render_text(&report);
    Ok((report, text))
}

/// Human-readable report: failed cases first, then the rest, each in plan order.
pub fn render_text(report: &AssessmentReport) -> String {
    let mut out = String::new();
    let o = &report.overall;
    let _ = writeln!(out, "Security assessment of {}", report.device_id);
    let _ = writeln!(out, "plan {}  profile {}  catalog {} v{}", report.plan_id, report.profile_id, report.catalog_id, report.catalog_version);
    let _ = writeln!(out, "scheme {}", o.scheme_id);
    let _ = writeln!(out);
    let _ = writeln!(out, "RESULT: {}", o.result);
    if report.empty_plan {
        let _ = writeln!(out, "warning: the plan has no entries; the result is vacuous");
    }
    for rule in &o.triggered_rules {
        let _ = writeln!(out, "  rule {}: {}", rule.rule, rule.detail);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<9} {:>5} {:>5} {:>8}", "severity", "pass", "fail", "skipped");
    for t in &o.counts.0 {
        let _ = writeln!(out, "{:<9} {:>5} {:>5} {:>8}", t.severity.as_str(), t.pass, t.fail, t.skipped);
    }
    let _ = writeln!(out);
    let _ = write!(out, "{}", report.coverage);

    let (failed, rest): (Vec<&ReportRow>, Vec<&ReportRow>) = report
        .cases
        .iter()
        .partition(|r| r.effective_outcome == EffectiveOutcome::Fail);
    let _ = writeln!(out);
    let _ = writeln!(out, "FAILED CASES ({})", failed.len());
    for row in &failed {
        write_row(&mut out, row);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "OTHER CASES ({})", rest.len());
    for row in &rest {
        write_row(&mut out, row);
    }
    out
}

fn write_row(out: &mut String, row: &ReportRow) {
    let recorded = if row.recorded_outcome.as_str() == row.effective_outcome.as_str() {
        String::new()
    } else {
        format!(" (recorded {})", row.recorded_outcome)
    };
    let _ = writeln!(
        out,
        "- [{}] {} {} on {}: {}{}",
        row.severity, row.case_id, row.title, row.target_component_id, row.effective_outcome, recorded
    );
    let _ = writeln!(out, "    mode {}, executed by {}", row.execution_mode.as_str(), row.executor);
    for line in row.rationale.lines() {
        let _ = writeln!(out, "    {line}");
    }
    for digest in &row.evidence_digests {
        let _ = writeln!(out, "    evidence {digest}");
    }
}
