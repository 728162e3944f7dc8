//! Seeded random generators for every document kind.
//!
//! Values are drawn from small pools so that selectors, constraints and
//! attributes collide often enough to exercise both sides of every predicate.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::assessment::{effective_outcome, CaseVerdict};
use crate::filter::{plan_entry_id, GuideStep, PlannedTest, ResolvedExecutor, TestPlan};
use crate::harness::{
    BannerPayload, Credential, CredentialResultPayload, EvidenceDigestPayload, ExecutionProtocol, ExecutorIdentity,
    ManualSubmission, Observation, ObservationPayload, PerformedStep, PortListPayload, ProtocolOutcome,
    TlsPosturePayload, TlsVersion,
};
use crate::model::{
    AssessmentScheme, AttributeConstraint, AttributeValue, ComponentKind, ComponentSelector, ConstraintOperator,
    DeviceComponent, DeviceModel, EcosystemKind, EcosystemSystem, ExecutionMode, ExecutorRef, InconclusivePolicy,
    KindFilter, OrdinalLevel, Severity, StepTemplate, TestCase, TestCaseCatalog, TestingProfile, VerificationLevel,
    WIRELESS_PROTOCOLS,
};

const SERVICES: [&str; 5] = ["telnet", "ssh", "http", "https", "mqtt"];
const PORTS: [i64; 6] = [22, 23, 80, 443, 1883, 8080];
const VENDORS: [&str; 3] = ["acme", "globex", "initech"];
const WORDS: [&str; 12] = [
    "inspect", "verify", "the", "service", "port", "record", "banner", "firmware", "radio", "pairing", "log", "status",
];
const CAPABILITIES: [&str; 4] = ["net.port-scan", "net.banner-grab", "net.tls-posture", "net.default-credentials"];

pub fn level<L: OrdinalLevel>(rng: &mut impl Rng) -> L {
    L::ALL[rng.random_range(0..4)]
}

fn pick<'a, T>(rng: &mut impl Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("non-empty pool")
}

fn words(rng: &mut impl Rng, n: usize) -> String {
    (0..n).map(|_| *pick(rng, &WORDS)).collect::<Vec<_>>().join(" ")
}

pub fn timestamp(rng: &mut impl Rng) -> DateTime<Utc> {
    let millis = rng.random_range(1_704_067_200_000i64..1_798_761_600_000);
    Utc.timestamp_millis_opt(millis).single().expect("in range")
}

fn port_value(rng: &mut impl Rng) -> AttributeValue {
    let port = *pick(rng, &PORTS);
    // Ports appear both as integers and as text; they compare equal by rendering.
    if rng.random_bool(0.3) {
        AttributeValue::Text(port.to_string())
    } else {
        AttributeValue::Integer(port)
    }
}

/// A value from the pool of `attribute`.
fn attribute_value(rng: &mut impl Rng, attribute: &str) -> AttributeValue {
    match attribute {
        "protocol" => AttributeValue::Text(pick(rng, &WIRELESS_PROTOCOLS).to_string()),
        "service" => AttributeValue::Text(pick(rng, &SERVICES).to_string()),
        "port" => port_value(rng),
        "host" => AttributeValue::Text(format!("192.0.2.{}", rng.random_range(1..4))),
        "vendor" => AttributeValue::Text(pick(rng, &VENDORS).to_string()),
        "encrypted" => AttributeValue::Bool(rng.random_bool(0.5)),
        _ => AttributeValue::Integer(rng.random_range(1..4)),
    }
}

const GENERIC_ATTRIBUTES: [&str; 3] = ["vendor", "encrypted", "version"];
const ALL_ATTRIBUTES: [&str; 7] = ["protocol", "service", "port", "host", "vendor", "encrypted", "version"];

pub fn component(rng: &mut impl Rng, component_id: String) -> DeviceComponent {
    let kind = *pick(rng, &ComponentKind::ALL);
    let mut c = DeviceComponent::new(component_id, kind);
    match kind {
        ComponentKind::WirelessInterface => {
            if rng.random_bool(0.9) {
                c = c.with_attribute("protocol", attribute_value(rng, "protocol"));
            }
        }
        ComponentKind::NetworkService => {
            for name in ["host", "port", "service"] {
                if rng.random_bool(0.9) {
                    c = c.with_attribute(name, attribute_value(rng, name));
                }
            }
        }
        _ => {}
    }
    for name in GENERIC_ATTRIBUTES {
        if rng.random_bool(0.3) {
            c = c.with_attribute(name, attribute_value(rng, name));
        }
    }
    c
}

/// Device with 1..=`max_components` components.
pub fn device(rng: &mut impl Rng, max_components: usize) -> DeviceModel {
    let n = rng.random_range(1..=max_components.max(1));
    let mut metadata = BTreeMap::new();
    if rng.random_bool(0.7) {
        metadata.insert("vendor".to_string(), pick(rng, &VENDORS).to_string());
    }
    if rng.random_bool(0.5) {
        metadata.insert("firmware".to_string(), format!("{}.{}", rng.random_range(0..5), rng.random_range(0..10)));
    }
    DeviceModel {
        device_id: format!("dev-{}", rng.random_range(0..1000)),
        display_name: words(rng, 2),
        components: (0..n).map(|i| component(rng, format!("c{i:02}"))).collect(),
        metadata,
    }
}

pub fn profile(rng: &mut impl Rng) -> TestingProfile {
    let mut overrides = BTreeMap::new();
    for _ in 0..rng.random_range(0..3) {
        overrides.insert(*pick(rng, &ComponentKind::ALL), level(rng));
    }
    let ecosystem = (0..rng.random_range(0..4))
        .map(|i| EcosystemSystem {
            system_id: format!("sys-{i}"),
            kind: *pick(
                rng,
                &[
                    EcosystemKind::CloudBackend,
                    EcosystemKind::MobileApp,
                    EcosystemKind::HubGateway,
                    EcosystemKind::ThirdPartyApi,
                ],
            ),
            endpoint: format!("https://backend-{i}.example"),
            in_scope: rng.random_bool(0.6),
        })
        .collect();
    TestingProfile {
        profile_id: format!("prof-{}", rng.random_range(0..1000)),
        granted_physical: level(rng),
        granted_authorization: level(rng),
        device_data_sensitivity: level(rng),
        device_security_impact: level(rng),
        verification_level: level(rng),
        ecosystem,
        verification_overrides: overrides,
    }
}

fn constraint(rng: &mut impl Rng) -> AttributeConstraint {
    let attribute = *pick(rng, &ALL_ATTRIBUTES);
    match rng.random_range(0..3) {
        0 => AttributeConstraint::eq(attribute, attribute_value(rng, attribute)),
        1 => AttributeConstraint::neq(attribute, attribute_value(rng, attribute)),
        _ => AttributeConstraint::present(attribute),
    }
}

fn selector(rng: &mut impl Rng) -> ComponentSelector {
    let kind = if rng.random_bool(0.2) {
        KindFilter::Any
    } else {
        KindFilter::Kind(*pick(rng, &ComponentKind::ALL))
    };
    ComponentSelector {
        kind,
        constraints: (0..rng.random_range(0..3)).map(|_| constraint(rng)).collect(),
    }
}

/// Template text using only placeholders that resolve for every component the selector matches.
fn template(rng: &mut impl Rng, selector: &ComponentSelector) -> String {
    let mut text = words(rng, 3);
    let guaranteed: Vec<&str> = selector
        .constraints
        .iter()
        .filter(|c| c.operator != ConstraintOperator::Neq)
        .map(|c| c.attribute.as_str())
        .collect();
    if let Some(attribute) = guaranteed.choose(rng) {
        if rng.random_bool(0.6) {
            text.push_str(&format!(" {{{{attr:{attribute}}}}}"));
        }
    }
    if rng.random_bool(0.3) {
        text.push_str(" on {{device:device-id}}");
    }
    text
}

pub fn test_case(rng: &mut impl Rng, case_id: String) -> TestCase {
    let selector = selector(rng);
    let execution_mode = *pick(rng, &ExecutionMode::ALL);
    let mut verification_levels = BTreeSet::new();
    while verification_levels.is_empty() {
        for l in VerificationLevel::ALL {
            if rng.random_bool(0.5) {
                verification_levels.insert(l);
            }
        }
    }
    let executor_ref = (execution_mode != ExecutionMode::Manual).then(|| {
        let mut parameters = BTreeMap::new();
        if rng.random_bool(0.5) {
            parameters.insert("note".to_string(), template(rng, &selector));
        }
        ExecutorRef {
            capability: pick(rng, &CAPABILITIES).to_string(),
            parameters,
        }
    });
    let manual_steps = if execution_mode == ExecutionMode::Automated {
        vec![]
    } else {
        (0..rng.random_range(1..4))
            .map(|_| StepTemplate::new(template(rng, &selector), template(rng, &selector)))
            .collect()
    };
    TestCase {
        title: words(rng, 3),
        description: words(rng, 6),
        required_physical: level(rng),
        required_authorization: level(rng),
        min_data_sensitivity: level(rng),
        min_security_impact: level(rng),
        verification_levels,
        selector,
        severity: *pick(rng, &Severity::ALL),
        execution_mode,
        executor_ref,
        manual_steps,
        references: if rng.random_bool(0.3) {
            vec![format!("REF-{}", rng.random_range(1..100))]
        } else {
            vec![]
        },
        case_id,
    }
}

/// Catalog with 0..=`max_cases` cases.
pub fn catalog(rng: &mut impl Rng, max_cases: usize) -> TestCaseCatalog {
    let n = rng.random_range(0..=max_cases);
    TestCaseCatalog {
        catalog_id: format!("cat-{}", rng.random_range(0..1000)),
        version: format!("{}.{}", rng.random_range(1..3), rng.random_range(0..10)),
        cases: (0..n).map(|i| test_case(rng, format!("TC-{i:03}"))).collect(),
    }
}

/// Plan with up to `max_entries` entries drawn directly, without a catalog.
///
/// Non-manual entries reference one of `capabilities`.
pub fn plan(rng: &mut impl Rng, max_entries: usize, capabilities: &[&str]) -> TestPlan {
    let n = rng.random_range(0..=max_entries);
    let mut entries: Vec<PlannedTest> = (0..n)
        .map(|i| {
            let case_id = format!("TC-{i:03}");
            let component = format!("c{:02}", rng.random_range(0..5));
            let execution_mode = *pick(rng, &ExecutionMode::ALL);
            PlannedTest {
                plan_entry_id: plan_entry_id(&case_id, &component),
                title: words(rng, 3),
                severity: *pick(rng, &Severity::ALL),
                execution_mode,
                instantiated_guide: if execution_mode == ExecutionMode::Automated {
                    vec![]
                } else {
                    (0..rng.random_range(1..4))
                        .map(|_| GuideStep {
                            instruction: words(rng, 4),
                            expected_observation: words(rng, 3),
                        })
                        .collect()
                },
                executor: (execution_mode != ExecutionMode::Manual).then(|| ResolvedExecutor {
                    capability: pick(rng, capabilities).to_string(),
                    parameters: BTreeMap::new(),
                }),
                case_id,
                target_component_id: component,
            }
        })
        .collect();
    entries.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    TestPlan {
        plan_id: format!("PLAN-{:08x}", rng.random::<u32>()),
        device_id: format!("dev-{}", rng.random_range(0..1000)),
        profile_id: format!("prof-{}", rng.random_range(0..1000)),
        catalog_id: "cat".into(),
        catalog_version: "1".into(),
        created_at: timestamp(rng),
        ecosystem_scope: vec![],
        entries,
    }
}

pub fn observation(rng: &mut impl Rng) -> Observation {
    let at = timestamp(rng);
    let host = format!("192.0.2.{}", rng.random_range(1..255));
    let port = *pick(rng, &[23u16, 80, 443, 8443]);
    let payload = match rng.random_range(0..6) {
        0 => ObservationPayload::Text { text: words(rng, 5) },
        1 => {
            let mut ports: Vec<u16> = (0..rng.random_range(0..5)).map(|_| rng.random_range(1..1025)).collect();
            ports.sort_unstable();
            ports.dedup();
            ObservationPayload::PortList(PortListPayload { host, ports })
        }
        2 => {
            let banner = words(rng, 3);
            ObservationPayload::Banner(BannerPayload {
                host,
                port,
                byte_count: banner.len(),
                banner,
                unprompted: rng.random_bool(0.5),
            })
        }
        3 => ObservationPayload::TlsPosture(TlsPosturePayload {
            host,
            port,
            versions: TlsVersion::ALL.into_iter().filter(|_| rng.random_bool(0.5)).collect(),
            self_signed: rng.random_bool(0.5),
            certificate_expiry: rng.random_bool(0.8).then(|| timestamp(rng)),
        }),
        4 => ObservationPayload::CredentialResult(CredentialResultPayload {
            host,
            port,
            service_kind: pick(rng, &["telnet", "http-basic"]).to_string(),
            attempted: rng.random_range(0..20),
            accepted: if rng.random_bool(0.5) {
                vec![Credential::new("admin", "admin")]
            } else {
                vec![]
            },
        }),
        _ => {
            let bytes: Vec<u8> = (0..16).map(|_| rng.random()).collect();
            ObservationPayload::EvidenceDigest(EvidenceDigestPayload::sha256(&bytes, "application/octet-stream", words(rng, 2)))
        }
    };
    Observation::new(payload, at)
}

fn steps(rng: &mut impl Rng, n: usize) -> Vec<PerformedStep> {
    (0..n)
        .map(|_| PerformedStep::new(words(rng, 4), (0..rng.random_range(0..3)).map(|_| observation(rng)).collect()))
        .collect()
}

/// Protocol for `entry` with a random outcome. Manual-path entries get manual identities.
pub fn protocol_for(rng: &mut impl Rng, plan_id: &str, entry: &PlannedTest) -> ExecutionProtocol {
    let started_at = timestamp(rng);
    let ended_at = started_at + chrono::Duration::milliseconds(rng.random_range(0..60_000));
    let manual = entry.execution_mode.is_manual_path();
    let outcome = if manual {
        *pick(rng, &ProtocolOutcome::ALL[..4])
    } else {
        *pick(rng, &ProtocolOutcome::ALL)
    };
    let executor = if manual {
        ExecutorIdentity::manual(format!("assessor-{}", rng.random_range(0..3)))
    } else {
        ExecutorIdentity::executor(
            entry.executor.as_ref().map_or("net.port-scan", |e| e.capability.as_str()),
            "0.1.0",
        )
    };
    let n = if manual {
        entry.instantiated_guide.len()
    } else {
        rng.random_range(0..3)
    };
    ExecutionProtocol {
        protocol_id: ExecutionProtocol::id_for(&entry.plan_entry_id),
        plan_id: plan_id.to_string(),
        plan_entry_id: entry.plan_entry_id.clone(),
        case_id: entry.case_id.clone(),
        executor,
        started_at,
        ended_at,
        steps_performed: steps(rng, n),
        outcome,
        outcome_rationale: words(rng, 6),
    }
}

pub fn manual_submission(rng: &mut impl Rng, entry: &PlannedTest) -> ManualSubmission {
    ManualSubmission {
        plan_entry_id: entry.plan_entry_id.clone(),
        assessor_id: format!("assessor-{}", rng.random_range(0..3)),
        step_observations: entry
            .instantiated_guide
            .iter()
            .map(|_| (0..rng.random_range(0..3)).map(|_| observation(rng)).collect())
            .collect(),
        outcome: *pick(rng, &ProtocolOutcome::ALL[..4]),
        rationale: words(rng, 5),
        started_at: rng.random_bool(0.5).then(|| timestamp(rng)),
    }
}

pub fn scheme(rng: &mut impl Rng) -> AssessmentScheme {
    AssessmentScheme::new(
        format!("scheme-{}", rng.random_range(0..100)),
        rng.random_range(0..11),
        rng.random_range(0..11),
        if rng.random_bool(0.5) {
            InconclusivePolicy::TreatAsFail
        } else {
            InconclusivePolicy::TreatAsSkip
        },
    )
}

/// `n` verdicts of one plan with random severities and recorded outcomes.
pub fn verdicts(rng: &mut impl Rng, plan_id: &str, n: usize, policy: InconclusivePolicy) -> Vec<CaseVerdict> {
    (0..n)
        .map(|i| {
            let recorded = *pick(rng, &ProtocolOutcome::ALL);
            let entry = plan_entry_id(&format!("TC-{i:03}"), "c00");
            CaseVerdict {
                case_id: format!("TC-{i:03}"),
                plan_id: plan_id.to_string(),
                protocol_id: ExecutionProtocol::id_for(&entry),
                plan_entry_id: entry,
                recorded_outcome: recorded,
                effective_outcome: effective_outcome(recorded, policy),
                severity: *pick(rng, &Severity::ALL),
            }
        })
        .collect()
}

/// A plan together with one protocol per entry.
pub fn campaign(rng: &mut impl Rng, max_entries: usize) -> (TestPlan, Vec<ExecutionProtocol>) {
    let plan = plan(rng, max_entries, &CAPABILITIES);
    let protocols = plan.entries.iter().map(|e| protocol_for(rng, &plan.plan_id, e)).collect();
    (plan, protocols)
}
