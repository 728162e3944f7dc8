use std::sync::Arc;
use std::time::Duration;

use iotsam_core::harness::{
    parse_port_range, ExecutorDescriptor, ExecutorFailure, ExecutorRegistry, ExecutorReport, ExecutorVerdict,
    Invocation, Observation, ObservationKind, ObservationPayload, ParameterSpec, ParameterType, PerformedStep,
};
use iotsam_core::HarnessError;

use crate::banner::service_banner_grab;
use crate::credentials::{bundled_credentials, default_credential_check, parse_credential_list, ServiceKind};
use crate::error::ProbeError;
use crate::scan::tcp_port_scan;
use crate::target::ProbeTarget;
use crate::tls::tls_posture_check;
use crate::verdict::verdict_map;

pub const PORT_SCAN: &str = "net.port-scan";
pub const BANNER_GRAB: &str = "net.banner-grab";
pub const TLS_POSTURE: &str = "net.tls-posture";
pub const DEFAULT_CREDENTIALS: &str = "net.default-credentials";
pub const CAPABILITIES: [&str; 4] = [BANNER_GRAB, DEFAULT_CREDENTIALS, PORT_SCAN, TLS_POSTURE];

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn descriptor(capability: &str, parameters: Vec<ParameterSpec>, produces: ObservationKind) -> ExecutorDescriptor {
    ExecutorDescriptor {
        capability: capability.into(),
        version: VERSION.into(),
        parameters,
        produces: vec![produces],
    }
}

fn required(invocation: &Invocation, name: &str) -> Result<String, ExecutorFailure> {
    invocation
        .parameter(name)
        .map(str::to_string)
        .ok_or_else(|| ExecutorFailure::new(format!("missing parameter `{name}`")))
}

fn number(invocation: &Invocation, name: &str, default: u64) -> Result<u64, ExecutorFailure> {
    match invocation.parameter(name) {
        None => Ok(default),
        Some(raw) => raw
            .parse::<u64>()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| ExecutorFailure::new(format!("parameter `{name}` must be a positive integer"))),
    }
}

fn target(invocation: &Invocation) -> Result<ProbeTarget, ExecutorFailure> {
    let port = required(invocation, "port")?
        .parse::<u16>()
        .map_err(|_| ExecutorFailure::new("parameter `port` is not a port"))?;
    Ok(ProbeTarget::new(required(invocation, "host")?, port)
        .with_connect_timeout_ms(number(invocation, "connect-timeout-ms", 1000)?))
}

fn failed(step: &str, err: ProbeError) -> ExecutorFailure {
    ExecutorFailure::new(format!("{}: {err}", err.code())).with_steps(vec![PerformedStep::new(step, vec![])])
}

/// Wraps one probe result into a report judged by the case's verdict rule.
fn report(invocation: &Invocation, step: String, payload: ObservationPayload) -> ExecutorReport {
    let observations = vec![Observation::new(payload, invocation.clock.now())];
    let (verdict, rationale) = match verdict_map(&invocation.case_id, &observations) {
        Ok(judged) => judged,
        Err(err) => (
            ExecutorVerdict::Inconclusive,
            format!("{err}; observations recorded for review"),
        ),
    };
    ExecutorReport {
        steps: vec![PerformedStep::new(step, observations)],
        verdict,
        rationale,
    }
}

fn port_scan(invocation: &Invocation) -> Result<ExecutorReport, ExecutorFailure> {
    let host = required(invocation, "host")?;
    let ports = required(invocation, "ports")?;
    let range = parse_port_range(&ports).map_err(ExecutorFailure::new)?;
    let parallelism = number(invocation, "parallelism", 64)? as usize;
    let timeout = Duration::from_millis(number(invocation, "connect-timeout-ms", 500)?);
    let step = format!("TCP connect scan of {host} ports {ports}");
    let list = tcp_port_scan(&host, range, parallelism, timeout).map_err(|e| failed(&step, e))?;
    Ok(report(invocation, step, ObservationPayload::PortList(list)))
}

fn banner_grab(invocation: &Invocation) -> Result<ExecutorReport, ExecutorFailure> {
    let target = target(invocation)?;
    let wait = Duration::from_millis(number(invocation, "wait-ms", 2000)?);
    let step = format!("read unprompted data from {}:{}", target.host, target.port);
    let banner = service_banner_grab(&target, wait).map_err(|e| failed(&step, e))?;
    Ok(report(invocation, step, ObservationPayload::Banner(banner)))
}

fn tls_posture(invocation: &Invocation) -> Result<ExecutorReport, ExecutorFailure> {
    let target = target(invocation)?;
    let timeout = Duration::from_millis(number(invocation, "io-timeout-ms", 3000)?);
    let step = format!("TLS handshake per version against {}:{}", target.host, target.port);
    let posture = tls_posture_check(&target, timeout).map_err(|e| failed(&step, e))?;
    Ok(report(invocation, step, ObservationPayload::TlsPosture(posture)))
}

fn default_credentials(invocation: &Invocation) -> Result<ExecutorReport, ExecutorFailure> {
    let target = target(invocation)?;
    let kind = ServiceKind::parse(&required(invocation, "service-kind")?).map_err(|e| ExecutorFailure::new(e.to_string()))?;
    let timeout = Duration::from_millis(number(invocation, "io-timeout-ms", 3000)?);
    let list = match invocation.parameter("credential-list") {
        None => bundled_credentials(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ExecutorFailure::new(format!("cannot read credential list `{path}`: {e}")))?;
            parse_credential_list(&text).map_err(|e| ExecutorFailure::new(e.to_string()))?
        }
    };
    let step = format!(
        "try {} {} credential pairs against {}:{}",
        list.len(),
        kind,
        target.host,
        target.port
    );
    let result = default_credential_check(&target, kind, &list, timeout).map_err(|e| failed(&step, e))?;
    Ok(report(invocation, step, ObservationPayload::CredentialResult(result)))
}

fn endpoint_parameters(extra: &[(&str, ParameterType, bool)]) -> Vec<ParameterSpec> {
    let mut specs = vec![
        ParameterSpec::required("host", ParameterType::Host),
        ParameterSpec::required("port", ParameterType::Port),
        ParameterSpec::optional("connect-timeout-ms", ParameterType::Integer),
    ];
    specs.extend(extra.iter().map(|(name, kind, needed)| {
        if *needed {
            ParameterSpec::required(*name, *kind)
        } else {
            ParameterSpec::optional(*name, *kind)
        }
    }));
    specs
}

/// Adds the four network executors to `registry`.
pub fn register_bundled(registry: &mut ExecutorRegistry) -> Result<(), HarnessError> {
    registry.register(
        descriptor(
            PORT_SCAN,
            vec![
                ParameterSpec::required("host", ParameterType::Host),
                ParameterSpec::required("ports", ParameterType::PortRange),
                ParameterSpec::optional("parallelism", ParameterType::Integer),
                ParameterSpec::optional("connect-timeout-ms", ParameterType::Integer),
            ],
            ObservationKind::PortList,
        ),
        Arc::new(port_scan),
    )?;
    registry.register(
        descriptor(
            BANNER_GRAB,
            endpoint_parameters(&[("wait-ms", ParameterType::Integer, false)]),
            ObservationKind::Banner,
        ),
        Arc::new(banner_grab),
    )?;
    registry.register(
        descriptor(
            TLS_POSTURE,
            endpoint_parameters(&[("io-timeout-ms", ParameterType::Integer, false)]),
            ObservationKind::TlsPosture,
        ),
        Arc::new(tls_posture),
    )?;
    registry.register(
        descriptor(
            DEFAULT_CREDENTIALS,
            endpoint_parameters(&[
                ("service-kind", ParameterType::Text, true),
                ("credential-list", ParameterType::Text, false),
                ("io-timeout-ms", ParameterType::Integer, false),
            ]),
            ObservationKind::CredentialResult,
        ),
        Arc::new(default_credentials),
    )
}

/// Registry holding exactly the bundled network executors.
pub fn bundled_registry() -> ExecutorRegistry {
    let mut registry = ExecutorRegistry::new();
    register_bundled(&mut registry).expect("bundled capabilities are distinct");
    registry
}
