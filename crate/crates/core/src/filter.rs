//! Applicability filtering of a catalog against a device model and testing profile.
//!
//! A test case yields one plan entry per device component that satisfies all six
//! prerequisites: the four ordinal level checks, membership of the component's
//! effective verification level in the case's level set, and the component selector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::model::{
    level_leq, ComponentKind, DeviceComponent, DeviceModel, Document, DocumentError, ExecutionMode, KindFilter,
    OrdinalLevel, Severity, TestCase, TestCaseCatalog, TestingProfile, VerificationLevel,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("UNRESOLVED_PLACEHOLDER: `{placeholder}` in case {case_id} cannot be resolved for component `{component_id}`")]
    UnresolvedPlaceholder {
        placeholder: String,
        case_id: String,
        component_id: String,
    },
}

impl FilterError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnresolvedPlaceholder { .. } => "UNRESOLVED_PLACEHOLDER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prerequisite {
    RequiredPhysical,
    RequiredAuthorization,
    MinDataSensitivity,
    MinSecurityImpact,
    VerificationLevels,
    Selector,
}

impl Prerequisite {
    pub const ALL: [Prerequisite; 6] = [
        Self::RequiredPhysical,
        Self::RequiredAuthorization,
        Self::MinDataSensitivity,
        Self::MinSecurityImpact,
        Self::VerificationLevels,
        Self::Selector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RequiredPhysical => "required-physical",
            Self::RequiredAuthorization => "required-authorization",
            Self::MinDataSensitivity => "min-data-sensitivity",
            Self::MinSecurityImpact => "min-security-impact",
            Self::VerificationLevels => "verification-levels",
            Self::Selector => "selector",
        }
    }
}

impl fmt::Display for Prerequisite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evaluation of one prerequisite of a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PrerequisiteCheck {
    pub prerequisite: Prerequisite,
    pub required: String,
    pub actual: String,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ApplicabilityResult {
    pub case_id: String,
    pub applicable: bool,
    /// Always all six prerequisites, in [`Prerequisite::ALL`] order.
    pub reasons: Vec<PrerequisiteCheck>,
    /// Components matched by the case's selector.
    pub matched_components: Vec<String>,
}

impl ApplicabilityResult {
    pub fn reason(&self, prerequisite: Prerequisite) -> &PrerequisiteCheck {
        self.reasons
            .iter()
            .find(|r| r.prerequisite == prerequisite)
            .expect("all prerequisites are evaluated")
    }

    pub fn unsatisfied(&self) -> impl Iterator<Item = &PrerequisiteCheck> {
        self.reasons.iter().filter(|r| !r.satisfied)
    }
}

fn level_check<L: OrdinalLevel>(prerequisite: Prerequisite, required: L, granted: L) -> PrerequisiteCheck {
    PrerequisiteCheck {
        prerequisite,
        required: required.to_string(),
        actual: granted.to_string(),
        satisfied: level_leq(required, granted),
    }
}

fn describe_levels(levels: &BTreeSet<VerificationLevel>) -> String {
    levels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("|")
}

fn describe_selector(case: &TestCase) -> String {
    let kind = match case.selector.kind {
        KindFilter::Any => "ANY".to_string(),
        KindFilter::Kind(k) => k.to_string(),
    };
    let constraints: Vec<String> = case
        .selector
        .constraints
        .iter()
        .map(|c| match &c.value {
            Some(v) => format!("{} {} {v}", c.attribute, c.operator.as_str()),
            None => format!("{} {}", c.attribute, c.operator.as_str()),
        })
        .collect();
    if constraints.is_empty() {
        kind
    } else {
        format!("{kind} [{}]", constraints.join(", "))
    }
}

/// Evaluates the six prerequisites of `case` against the device and profile.
///
/// The verification-level prerequisite is satisfied when at least one matched
/// component's effective level is listed by the case; without matched
/// components the profile-wide level is used.
pub fn is_applicable(case: &TestCase, device: &DeviceModel, profile: &TestingProfile) -> ApplicabilityResult {
    let matched: Vec<&DeviceComponent> = device.components.iter().filter(|c| case.selector.matches(c)).collect();

    let verification = if matched.is_empty() {
        PrerequisiteCheck {
            prerequisite: Prerequisite::VerificationLevels,
            required: describe_levels(&case.verification_levels),
            actual: profile.verification_level.to_string(),
            satisfied: case.verification_levels.contains(&profile.verification_level),
        }
    } else {
        let effective: Vec<(String, VerificationLevel)> = matched
            .iter()
            .map(|c| (c.component_id.clone(), profile.effective_verification_level(c.kind)))
            .collect();
        PrerequisiteCheck {
            prerequisite: Prerequisite::VerificationLevels,
            required: describe_levels(&case.verification_levels),
            actual: effective
                .iter()
                .map(|(id, level)| format!("{id}={level}"))
                .collect::<Vec<_>>()
                .join(", "),
            satisfied: effective.iter().any(|(_, l)| case.verification_levels.contains(l)),
        }
    };

    let selector = PrerequisiteCheck {
        prerequisite: Prerequisite::Selector,
        required: describe_selector(case),
        actual: if matched.is_empty() {
            "no matching component".to_string()
        } else {
            matched.iter().map(|c| c.component_id.as_str()).collect::<Vec<_>>().join(", ")
        },
        satisfied: !matched.is_empty(),
    };

    let reasons = vec![
        level_check(Prerequisite::RequiredPhysical, case.required_physical, profile.granted_physical),
        level_check(
            Prerequisite::RequiredAuthorization,
            case.required_authorization,
            profile.granted_authorization,
        ),
        level_check(
            Prerequisite::MinDataSensitivity,
            case.min_data_sensitivity,
            profile.device_data_sensitivity,
        ),
        level_check(
            Prerequisite::MinSecurityImpact,
            case.min_security_impact,
            profile.device_security_impact,
        ),
        verification,
        selector,
    ];
    let matched_components: Vec<String> = matched.iter().map(|c| c.component_id.clone()).collect();
    ApplicabilityResult {
        case_id: case.case_id.clone(),
        applicable: reasons.iter().all(|r| r.satisfied) && !matched_components.is_empty(),
        reasons,
        matched_components,
    }
}

/// A guide step after placeholder substitution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GuideStep {
    pub instruction: String,
    pub expected_observation: String,
}

/// Executor capability with fully substituted parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ResolvedExecutor {
    pub capability: String,
    pub parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstantiatedGuide {
    pub steps: Vec<GuideStep>,
    pub executor: Option<ResolvedExecutor>,
}

fn placeholder_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"\{\{([^{}]*)\}\}").expect("static pattern"))
}

/// `true` if `text` still contains a `{{...}}` placeholder.
pub fn has_placeholder(text: &str) -> bool {
    placeholder_pattern().is_match(text)
}

struct Substitution<'a> {
    case: &'a TestCase,
    component: &'a DeviceComponent,
    device: &'a DeviceModel,
}

impl Substitution<'_> {
    fn render(&self, template: &str) -> Result<String, FilterError> {
        let mut out = String::with_capacity(template.len());
        let mut last = 0;
        for cap in placeholder_pattern().captures_iter(template) {
            let whole = cap.get(0).expect("group 0");
            out.push_str(&template[last..whole.start()]);
            out.push_str(&self.resolve(whole.as_str(), cap[1].trim())?);
            last = whole.end();
        }
        out.push_str(&template[last..]);
        if let Some(left) = placeholder_pattern().find(&out) {
            return Err(self.unresolved(left.as_str()));
        }
        Ok(out)
    }

    fn resolve(&self, raw: &str, inner: &str) -> Result<String, FilterError> {
        let value = match inner.split_once(':') {
            Some(("attr", name)) => self.component.attribute(name.trim()).map(|v| v.to_string()),
            Some(("device", key)) => match key.trim() {
                "device-id" => Some(self.device.device_id.clone()),
                "display-name" => Some(self.device.display_name.clone()),
                key => self.device.metadata.get(key).cloned(),
            },
            _ => None,
        };
        value.ok_or_else(|| self.unresolved(raw))
    }

    fn unresolved(&self, placeholder: &str) -> FilterError {
        FilterError::UnresolvedPlaceholder {
            placeholder: placeholder.to_string(),
            case_id: self.case.case_id.clone(),
            component_id: self.component.component_id.clone(),
        }
    }
}

/// Substitutes `{{attr:NAME}}` with the component's attribute and `{{device:KEY}}`
/// with device metadata (`device-id` and `display-name` are also accepted) in
/// every step and executor parameter of `case`.
pub fn instantiate_guide(
    case: &TestCase,
    component: &DeviceComponent,
    device: &DeviceModel,
) -> Result<InstantiatedGuide, FilterError> {
    let sub = Substitution { case, component, device };
    let steps = case
        .manual_steps
        .iter()
        .map(|step| {
            Ok(GuideStep {
                instruction: sub.render(&step.instruction)?,
                expected_observation: sub.render(&step.expected_observation)?,
            })
        })
        .collect::<Result<Vec<_>, FilterError>>()?;
    let executor = case
        .executor_ref
        .as_ref()
        .map(|exec| {
            let parameters = exec
                .parameters
                .iter()
                .map(|(name, template)| Ok((name.clone(), sub.render(template)?)))
                .collect::<Result<BTreeMap<_, _>, FilterError>>()?;
            Ok::<_, FilterError>(ResolvedExecutor {
                capability: exec.capability.clone(),
                parameters,
            })
        })
        .transpose()?;
    Ok(InstantiatedGuide { steps, executor })
}

/// One test to execute against one device component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PlannedTest {
    pub plan_entry_id: String,
    pub case_id: String,
    pub title: String,
    pub target_component_id: String,
    pub severity: Severity,
    pub execution_mode: ExecutionMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instantiated_guide: Vec<GuideStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executor: Option<ResolvedExecutor>,
}

impl PlannedTest {
    /// Key of the canonical plan order.
    pub fn order_key(&self) -> (u8, &str, &str) {
        (self.severity.order(), &self.case_id, &self.target_component_id)
    }
}

/// Stable identifier of the entry for `case_id` on `component_id`.
pub fn plan_entry_id(case_id: &str, component_id: &str) -> String {
    format!("{case_id}@{component_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TestPlan {
    pub plan_id: String,
    pub device_id: String,
    pub profile_id: String,
    pub catalog_id: String,
    pub catalog_version: String,
    pub created_at: DateTime<Utc>,
    /// In-scope ecosystem systems of the profile. They do not produce entries.
    #[serde(default)]
    pub ecosystem_scope: Vec<String>,
    pub entries: Vec<PlannedTest>,
}

impl TestPlan {
    pub fn entry(&self, plan_entry_id: &str) -> Option<&PlannedTest> {
        self.entries.iter().find(|e| e.plan_entry_id == plan_entry_id)
    }

    pub fn automated_entries(&self) -> impl Iterator<Item = &PlannedTest> {
        self.entries.iter().filter(|e| e.execution_mode == ExecutionMode::Automated)
    }

    pub fn manual_entries(&self) -> impl Iterator<Item = &PlannedTest> {
        self.entries.iter().filter(|e| e.execution_mode.is_manual_path())
    }
}

impl Document for TestPlan {
    const KIND: &'static str = "test-plan";

    fn validate(&self) -> Result<(), DocumentError> {
        let mut ids = BTreeSet::new();
        for (i, entry) in self.entries.iter().enumerate() {
            let path = format!("$.entries[{i}]");
            if !ids.insert(entry.plan_entry_id.as_str()) {
                return Err(DocumentError::invariant(
                    "unique-plan-entry-id",
                    format!("{path}.plan-entry-id"),
                    format!("duplicate plan-entry-id `{}`", entry.plan_entry_id),
                ));
            }
            if i > 0 && self.entries[i - 1].order_key() >= entry.order_key() {
                return Err(DocumentError::invariant(
                    "canonical-entry-order",
                    path,
                    format!("entry `{}` is out of severity/case/component order", entry.plan_entry_id),
                ));
            }
            if (entry.execution_mode != ExecutionMode::Manual) != entry.executor.is_some() {
                return Err(DocumentError::invariant(
                    "executor-iff-not-manual",
                    format!("{path}.executor"),
                    format!("entry `{}` executor does not match its execution mode", entry.plan_entry_id),
                ));
            }
            let texts = entry
                .instantiated_guide
                .iter()
                .flat_map(|s| [&s.instruction, &s.expected_observation])
                .chain(entry.executor.iter().flat_map(|e| e.parameters.values()));
            for text in texts {
                if has_placeholder(text) {
                    return Err(DocumentError::invariant(
                        "no-unresolved-placeholder",
                        path,
                        format!("entry `{}` contains an unresolved placeholder", entry.plan_entry_id),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Filters `catalog` into a plan with a fresh plan id and the current time.
pub fn filter_catalog(
    catalog: &TestCaseCatalog,
    device: &DeviceModel,
    profile: &TestingProfile,
) -> Result<TestPlan, FilterError> {
    let plan_id = format!("PLAN-{}", uuid::Uuid::now_v7().simple());
    filter_catalog_with(catalog, device, profile, plan_id, SystemClock.now())
}

/// Filters `catalog` with caller-supplied plan id and creation time.
pub fn filter_catalog_with(
    catalog: &TestCaseCatalog,
    device: &DeviceModel,
    profile: &TestingProfile,
    plan_id: String,
    created_at: DateTime<Utc>,
) -> Result<TestPlan, FilterError> {
    let mut entries = Vec::new();
    for case in &catalog.cases {
        let result = is_applicable(case, device, profile);
        if !result.applicable {
            continue;
        }
        for component_id in &result.matched_components {
            let component = device.component(component_id).expect("matched component exists");
            if !case
                .verification_levels
                .contains(&profile.effective_verification_level(component.kind))
            {
                continue;
            }
            let guide = instantiate_guide(case, component, device)?;
            entries.push(PlannedTest {
                plan_entry_id: plan_entry_id(&case.case_id, component_id),
                case_id: case.case_id.clone(),
                title: case.title.clone(),
                target_component_id: component_id.clone(),
                severity: case.severity,
                execution_mode: case.execution_mode,
                instantiated_guide: guide.steps,
                executor: guide.executor,
            });
        }
    }
    entries.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    Ok(TestPlan {
        plan_id,
        device_id: device.device_id.clone(),
        profile_id: profile.profile_id.clone(),
        catalog_id: catalog.catalog_id.clone(),
        catalog_version: catalog.version.clone(),
        created_at,
        ecosystem_scope: profile
            .ecosystem
            .iter()
            .filter(|s| s.in_scope)
            .map(|s| s.system_id.clone())
            .collect(),
        entries,
    })
}

/// Exact fraction `numerator / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Fraction {
    pub numerator: u64,
    pub denominator: u64,
}

impl Fraction {
    pub fn as_f64(self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ModeCoverage {
    pub execution_mode: ExecutionMode,
    pub count: u64,
    pub fraction: Fraction,
}

/// Share of plan entries per execution mode.
///
/// Fractions share the entry count as denominator, so their numerators sum to
/// it exactly. An empty plan reports `0/0` for every mode and sets `empty`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CoverageSummary {
    pub total: u64,
    pub empty: bool,
    pub modes: Vec<ModeCoverage>,
}

impl CoverageSummary {
    pub fn mode(&self, mode: ExecutionMode) -> &ModeCoverage {
        self.modes
            .iter()
            .find(|m| m.execution_mode == mode)
            .expect("every mode is reported")
    }
}

impl fmt::Display for CoverageSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "automation coverage over {} entries", self.total)?;
        if self.empty {
            writeln!(f, "  warning: plan is empty")?;
        }
        for m in &self.modes {
            writeln!(
                f,
                "  {:<15} {:>4}  {:>7}  {:>6.1}%",
                m.execution_mode.as_str(),
                m.count,
                m.fraction.to_string(),
                m.fraction.as_f64() * 100.0
            )?;
        }
        Ok(())
    }
}

pub fn coverage_report(plan: &TestPlan) -> CoverageSummary {
    let total = plan.entries.len() as u64;
    let modes = ExecutionMode::ALL
        .into_iter()
        .map(|mode| {
            let count = plan.entries.iter().filter(|e| e.execution_mode == mode).count() as u64;
            ModeCoverage {
                execution_mode: mode,
                count,
                fraction: Fraction {
                    numerator: count,
                    denominator: total,
                },
            }
        })
        .collect();
    CoverageSummary {
        total,
        empty: total == 0,
        modes,
    }
}

/// Components of `kind` in `device`, in model order.
pub fn components_of_kind(device: &DeviceModel, kind: ComponentKind) -> impl Iterator<Item = &DeviceComponent> {
    device.components.iter().filter(move |c| c.kind == kind)
}
