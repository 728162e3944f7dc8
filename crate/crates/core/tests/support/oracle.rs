//! Brute-force reference evaluation of plan membership, written against the
//! document representation rather than the library's predicate helpers.

use iotsam_core::model::{ConstraintOperator, DeviceComponent, DeviceModel, KindFilter, TestCase, TestingProfile};
use iotsam_core::Severity;

fn rank(token: &str) -> usize {
    const SCALES: [[&str; 4]; 5] = [
        ["REMOTE", "ADJACENT", "NONINVASIVE", "INVASIVE"],
        ["UNAUTHORIZED", "USER", "ADMIN", "MANUFACTURER"],
        ["NONPERSONAL", "BEHAVIORAL", "PERSONAL", "CRITICAL"],
        ["INCONVENIENCE", "PROPERTY_PRIVACY", "SAFETY_LIMITED", "SAFETY_CRITICAL"],
        ["OVERALL", "STANDARD", "RIGOROUS", "FORMAL"],
    ];
    SCALES
        .iter()
        .find_map(|scale| scale.iter().position(|t| *t == token))
        .map(|p| p + 1)
        .unwrap_or_else(|| panic!("unknown level token {token}"))
}

fn token<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_value(value).unwrap().as_str().unwrap().to_string()
}

fn render(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn selector_matches(case: &TestCase, component: &DeviceComponent) -> bool {
    if let KindFilter::Kind(kind) = case.selector.kind {
        if kind != component.kind {
            return false;
        }
    }
    case.selector.constraints.iter().all(|c| {
        let actual = component
            .attributes
            .get(&c.attribute)
            .map(|v| render(&serde_json::to_value(v).unwrap()));
        let wanted = c.value.as_ref().map(|v| render(&serde_json::to_value(v).unwrap()));
        match c.operator {
            ConstraintOperator::Present => actual.is_some(),
            ConstraintOperator::Eq => actual.is_some() && actual == wanted,
            ConstraintOperator::Neq => !(actual.is_some() && actual == wanted),
        }
    })
}

/// The six-predicate conjunction for one (case, component) pair.
pub fn entry_expected(case: &TestCase, component: &DeviceComponent, profile: &TestingProfile) -> bool {
    let leq = |required: String, granted: String| rank(&required) <= rank(&granted);
    let effective = profile
        .verification_overrides
        .get(&component.kind)
        .copied()
        .unwrap_or(profile.verification_level);
    leq(token(&case.required_physical), token(&profile.granted_physical))
        && leq(token(&case.required_authorization), token(&profile.granted_authorization))
        && leq(token(&case.min_data_sensitivity), token(&profile.device_data_sensitivity))
        && leq(token(&case.min_security_impact), token(&profile.device_security_impact))
        && case.verification_levels.contains(&effective)
        && selector_matches(case, component)
}

fn severity_rank(s: Severity) -> u8 {
    match token(&s).as_str() {
        "CRITICAL" => 0,
        "MAJOR" => 1,
        _ => 2,
    }
}

/// Expected `(case-id, component-id)` pairs in canonical plan order.
pub fn expected_entries(
    cases: &[TestCase],
    device: &DeviceModel,
    profile: &TestingProfile,
) -> Vec<(String, String)> {
    let mut pairs: Vec<(u8, String, String)> = Vec::new();
    for case in cases {
        for component in &device.components {
            if entry_expected(case, component, profile) {
                pairs.push((severity_rank(case.severity), case.case_id.clone(), component.component_id.clone()));
            }
        }
    }
    pairs.sort();
    pairs.into_iter().map(|(_, c, k)| (c, k)).collect()
}
