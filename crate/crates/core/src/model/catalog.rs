//! Test cases, selectors and the versioned catalog that holds them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::device::{require_token, AttributeValue, ComponentKind, DeviceComponent};
use super::document::{Document, DocumentError};
use super::levels::{
    AuthorizationAccessLevel, DataSensitivityLevel, PhysicalAccessLevel, SecurityImpactLevel, VerificationLevel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Critical,
    Major,
    Minor,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Self::Critical, Self::Major, Self::Minor];

    /// Position in plan order: critical first.
    pub fn order(self) -> u8 {
        match self {
            Self::Critical => 0,
            Self::Major => 1,
            Self::Minor => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Critical => "CRITICAL",
            Self::Major => "MAJOR",
            Self::Minor => "MINOR",
        }
    }
}

impl PartialOrd for Severity {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Severity {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order().cmp(&other.order())
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecutionMode {
    Automated,
    SemiAutomated,
    Manual,
}

impl ExecutionMode {
    pub const ALL: [ExecutionMode; 3] = [Self::Automated, Self::SemiAutomated, Self::Manual];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Automated => "AUTOMATED",
            Self::SemiAutomated => "SEMI_AUTOMATED",
            Self::Manual => "MANUAL",
        }
    }

    pub fn is_manual_path(self) -> bool {
        !matches!(self, Self::Automated)
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kind restriction of a selector: a single component kind or `ANY`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KindFilter {
    Any,
    Kind(ComponentKind),
}

impl KindFilter {
    pub fn admits(self, kind: ComponentKind) -> bool {
        match self {
            Self::Any => true,
            Self::Kind(k) => k == kind,
        }
    }
}

impl Serialize for KindFilter {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Any => serializer.serialize_str("ANY"),
            Self::Kind(kind) => kind.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for KindFilter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let token = String::deserialize(deserializer)?;
        if token == "ANY" {
            return Ok(Self::Any);
        }
        ComponentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == token)
            .map(Self::Kind)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown component kind `{token}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConstraintOperator {
    Eq,
    Neq,
    Present,
}

impl ConstraintOperator {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Eq => "EQ",
            Self::Neq => "NEQ",
            Self::Present => "PRESENT",
        }
    }
}

/// One attribute test inside a selector.
///
/// Values are compared through their textual rendering, so `23` and `"23"`
/// are equal. `NEQ` is the negation of `EQ` and therefore also holds when the
/// attribute is absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AttributeConstraint {
    pub attribute: String,
    pub operator: ConstraintOperator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<AttributeValue>,
}

impl AttributeConstraint {
    pub fn eq(attribute: impl Into<String>, value: impl Into<AttributeValue>) -> Self {
        Self {
            attribute: attribute.into(),
            operator: ConstraintOperator::Eq,
            value: Some(value.into()),
        }
    }

    pub fn neq(attribute: impl Into<String>, value: impl Into<AttributeValue>) -> Self {
        Self {
            attribute: attribute.into(),
            operator: ConstraintOperator::Neq,
            value: Some(value.into()),
        }
    }

    pub fn present(attribute: impl Into<String>) -> Self {
        Self {
            attribute: attribute.into(),
            operator: ConstraintOperator::Present,
            value: None,
        }
    }

    pub fn holds_for(&self, component: &DeviceComponent) -> bool {
        let actual = component.attribute(&self.attribute);
        match self.operator {
            ConstraintOperator::Present => actual.is_some(),
            ConstraintOperator::Eq => self.equals(actual),
            ConstraintOperator::Neq => !self.equals(actual),
        }
    }

    fn equals(&self, actual: Option<&AttributeValue>) -> bool {
        match (actual, &self.value) {
            (Some(a), Some(b)) => a.to_string() == b.to_string(),
            _ => false,
        }
    }
}

/// Maps a test case onto the device components it applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ComponentSelector {
    pub kind: KindFilter,
    #[serde(default)]
    pub constraints: Vec<AttributeConstraint>,
}

impl ComponentSelector {
    pub fn any() -> Self {
        Self {
            kind: KindFilter::Any,
            constraints: vec![],
        }
    }

    pub fn kind(kind: ComponentKind) -> Self {
        Self {
            kind: KindFilter::Kind(kind),
            constraints: vec![],
        }
    }

    pub fn with(mut self, constraint: AttributeConstraint) -> Self {
        self.constraints.push(constraint);
        self
    }

    pub fn matches(&self, component: &DeviceComponent) -> bool {
        self.kind.admits(component.kind) && self.constraints.iter().all(|c| c.holds_for(component))
    }
}

/// Executor capability plus parameter templates for non-manual cases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExecutorRef {
    pub capability: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct StepTemplate {
    pub instruction: String,
    pub expected_observation: String,
}

impl StepTemplate {
    pub fn new(instruction: impl Into<String>, expected_observation: impl Into<String>) -> Self {
        Self {
            instruction: instruction.into(),
            expected_observation: expected_observation.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TestCase {
    pub case_id: String,
    pub title: String,
    pub description: String,
    pub required_physical: PhysicalAccessLevel,
    pub required_authorization: AuthorizationAccessLevel,
    pub min_data_sensitivity: DataSensitivityLevel,
    pub min_security_impact: SecurityImpactLevel,
    pub verification_levels: BTreeSet<VerificationLevel>,
    pub selector: ComponentSelector,
    pub severity: Severity,
    pub execution_mode: ExecutionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executor_ref: Option<ExecutorRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub manual_steps: Vec<StepTemplate>,
    #[serde(default)]
    pub references: Vec<String>,
}

impl TestCase {
    fn validate_at(&self, path: &str) -> Result<(), DocumentError> {
        require_token(&format!("{path}.case-id"), &self.case_id)?;
        if self.verification_levels.is_empty() {
            return Err(DocumentError::invariant(
                "non-empty-verification-levels",
                format!("{path}.verification-levels"),
                format!("case `{}` lists no verification level", self.case_id),
            ));
        }
        for (j, constraint) in self.selector.constraints.iter().enumerate() {
            let cpath = format!("{path}.selector.constraints[{j}].value");
            match (constraint.operator, &constraint.value) {
                (ConstraintOperator::Present, Some(_)) => {
                    return Err(DocumentError::invariant(
                        "present-without-value",
                        cpath,
                        format!("case `{}`: PRESENT takes no value", self.case_id),
                    ))
                }
                (ConstraintOperator::Eq | ConstraintOperator::Neq, None) => {
                    return Err(DocumentError::invariant(
                        "comparison-needs-value",
                        cpath,
                        format!("case `{}`: EQ/NEQ need a value", self.case_id),
                    ))
                }
                _ => {}
            }
        }
        let needs_executor = self.execution_mode != ExecutionMode::Manual;
        if needs_executor != self.executor_ref.is_some() {
            let message = if needs_executor {
                format!("case `{}` is {} and needs an executor-ref", self.case_id, self.execution_mode)
            } else {
                format!("case `{}` is MANUAL and must not carry an executor-ref", self.case_id)
            };
            return Err(DocumentError::invariant(
                "executor-ref-iff-not-manual",
                format!("{path}.executor-ref"),
                message,
            ));
        }
        let needs_steps = self.execution_mode != ExecutionMode::Automated;
        if needs_steps == self.manual_steps.is_empty() {
            let message = if needs_steps {
                format!("case `{}` is {} and needs manual-steps", self.case_id, self.execution_mode)
            } else {
                format!("case `{}` is AUTOMATED and must not carry manual-steps", self.case_id)
            };
            return Err(DocumentError::invariant(
                "manual-steps-iff-not-automated",
                format!("{path}.manual-steps"),
                message,
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TestCaseCatalog {
    pub catalog_id: String,
    pub version: String,
    pub cases: Vec<TestCase>,
}

impl TestCaseCatalog {
    pub fn case(&self, case_id: &str) -> Option<&TestCase> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }
}

impl Document for TestCaseCatalog {
    const KIND: &'static str = "test-catalog";

    fn validate(&self) -> Result<(), DocumentError> {
        require_token("$.catalog-id", &self.catalog_id)?;
        if self.version.trim().is_empty() {
            return Err(DocumentError::invariant(
                "non-empty-version",
                "$.version",
                "catalog version must not be empty",
            ));
        }
        let mut seen = BTreeSet::new();
        for (i, case) in self.cases.iter().enumerate() {
            let path = format!("$.cases[{i}]");
            if !seen.insert(case.case_id.as_str()) {
                return Err(DocumentError::invariant(
                    "unique-case-id",
                    format!("{path}.case-id"),
                    format!("duplicate case-id `{}`", case.case_id),
                ));
            }
            case.validate_at(&path)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::document::{parse_document, serialize_document};
    use crate::model::levels::OrdinalLevel;

    fn automated_case(id: &str) -> TestCase {
        TestCase {
            case_id: id.into(),
            title: "Telnet exposed".into(),
            description: "d".into(),
            required_physical: PhysicalAccessLevel::Remote,
            required_authorization: AuthorizationAccessLevel::Unauthorized,
            min_data_sensitivity: DataSensitivityLevel::lowest(),
            min_security_impact: SecurityImpactLevel::lowest(),
            verification_levels: VerificationLevel::ALL.into_iter().collect(),
            selector: ComponentSelector::kind(ComponentKind::NetworkService)
                .with(AttributeConstraint::eq("service", "telnet")),
            severity: Severity::Critical,
            execution_mode: ExecutionMode::Automated,
            executor_ref: Some(ExecutorRef {
                capability: "net.port-scan".into(),
                parameters: BTreeMap::from([("host".into(), "{{attr:host}}".into())]),
            }),
            manual_steps: vec![],
            references: vec!["OWASP-IoT-Top10 #2".into()],
        }
    }

    fn catalog(cases: Vec<TestCase>) -> TestCaseCatalog {
        TestCaseCatalog {
            catalog_id: "cat".into(),
            version: "1.0".into(),
            cases,
        }
    }

    #[test]
    fn duplicate_case_id_names_the_offender() {
        let doc = serialize_document(&catalog(vec![automated_case("TC-1"), automated_case("TC-1")]));
        let err = parse_document::<TestCaseCatalog>(&doc).unwrap_err();
        assert_eq!(err.code(), "INVARIANT");
        assert!(err.to_string().contains("TC-1"), "{err}");
    }

    #[test]
    fn mode_field_consistency() {
        let mut case = automated_case("TC-2");
        case.executor_ref = None;
        let err = parse_document::<TestCaseCatalog>(&serialize_document(&catalog(vec![case]))).unwrap_err();
        assert!(matches!(err, DocumentError::Invariant { invariant: "executor-ref-iff-not-manual", .. }));

        let mut case = automated_case("TC-3");
        case.execution_mode = ExecutionMode::SemiAutomated;
        let err = parse_document::<TestCaseCatalog>(&serialize_document(&catalog(vec![case.clone()]))).unwrap_err();
        assert!(matches!(err, DocumentError::Invariant { invariant: "manual-steps-iff-not-automated", .. }));
        case.manual_steps = vec![StepTemplate::new("look", "nothing")];
        parse_document::<TestCaseCatalog>(&serialize_document(&catalog(vec![case]))).unwrap();
    }

    #[test]
    fn present_forbids_value_and_eq_requires_one() {
        let mut case = automated_case("TC-4");
        case.selector.constraints = vec![AttributeConstraint {
            attribute: "port".into(),
            operator: ConstraintOperator::Present,
            value: Some(AttributeValue::Integer(1)),
        }];
        let err = parse_document::<TestCaseCatalog>(&serialize_document(&catalog(vec![case.clone()]))).unwrap_err();
        assert_eq!(err.path(), "$.cases[0].selector.constraints[0].value");
        case.selector.constraints[0].operator = ConstraintOperator::Eq;
        case.selector.constraints[0].value = None;
        assert!(parse_document::<TestCaseCatalog>(&serialize_document(&catalog(vec![case]))).is_err());
    }

    #[test]
    fn closed_severity_vocabulary() {
        let text = String::from_utf8(serialize_document(&catalog(vec![automated_case("TC-5")]))).unwrap();
        let broken = text.replace("\"CRITICAL\"", "\"BLOCKER\"");
        assert_eq!(parse_document::<TestCaseCatalog>(broken.as_bytes()).unwrap_err().code(), "SCHEMA");
    }

    #[test]
    fn selector_semantics() {
        let telnet = DeviceComponent::new("t", ComponentKind::NetworkService)
            .with_attribute("service", "telnet")
            .with_attribute("port", 23i64);
        let ble = DeviceComponent::new("b", ComponentKind::WirelessInterface).with_attribute("protocol", "ble");

        assert!(ComponentSelector::any().matches(&telnet));
        assert!(ComponentSelector::any().matches(&ble));
        let port = ComponentSelector::any().with(AttributeConstraint::eq("port", "23"));
        assert!(port.matches(&telnet), "values compare textually");
        assert!(!port.matches(&ble));
        let not_telnet = ComponentSelector::any().with(AttributeConstraint::neq("service", "telnet"));
        assert!(!not_telnet.matches(&telnet));
        assert!(not_telnet.matches(&ble), "NEQ holds for absent attributes");
        let has_port = ComponentSelector::kind(ComponentKind::NetworkService).with(AttributeConstraint::present("port"));
        assert!(has_port.matches(&telnet));
        assert!(!has_port.matches(&ble));
    }

    #[test]
    fn kind_filter_tokens() {
        assert_eq!(serde_json::to_string(&KindFilter::Any).unwrap(), "\"ANY\"");
        assert_eq!(
            serde_json::from_str::<KindFilter>("\"FIRMWARE\"").unwrap(),
            KindFilter::Kind(ComponentKind::Firmware)
        );
        assert!(serde_json::from_str::<KindFilter>("\"any\"").is_err());
    }
}
