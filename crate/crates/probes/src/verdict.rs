use std::sync::OnceLock;

use iotsam_core::harness::{ExecutorVerdict, Observation, ObservationPayload};
use regex::Regex;

use crate::error::ProbeError;

/// Case ids with a verdict rule.
pub const BUNDLED_CASES: [&str; 6] = ["TC-NET-001", "TC-NET-002", "TC-NET-003", "TC-NET-004", "TC-NET-005", "TC-NET-006"];

const TELNET_PORT: u16 = 23;

fn version_token() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"\d+(\.\d+)+").expect("valid pattern"))
}

fn first<'a, T>(
    observations: &'a [Observation],
    pick: impl Fn(&'a Observation) -> Option<T>,
) -> Option<T> {
    observations.iter().find_map(pick)
}

fn missing(what: &str) -> (ExecutorVerdict, String) {
    (ExecutorVerdict::Inconclusive, format!("no {what} observation to judge"))
}

fn verdict(fail: bool, rationale: String) -> (ExecutorVerdict, String) {
    let v = if fail { ExecutorVerdict::Fail } else { ExecutorVerdict::Pass };
    (v, rationale)
}

/// Pure PASS/FAIL rule of a bundled case over the observations of its probe.
/// A missing observation yields INCONCLUSIVE.
pub fn verdict_map(case_id: &str, observations: &[Observation]) -> Result<(ExecutorVerdict, String), ProbeError> {
    let result = match case_id {
        "TC-NET-001" => match first(observations, |o| match &o.payload {
            ObservationPayload::PortList(p) => Some(p),
            _ => None,
        }) {
            Some(list) => verdict(
                list.ports.contains(&TELNET_PORT),
                if list.ports.contains(&TELNET_PORT) {
                    format!("port {TELNET_PORT} (telnet) is open on {}", list.host)
                } else {
                    format!("port {TELNET_PORT} is closed; open ports: {:?}", list.ports)
                },
            ),
            None => missing("PORT_LIST"),
        },
        "TC-NET-002" => match first(observations, |o| match &o.payload {
            ObservationPayload::Banner(b) => Some(b),
            _ => None,
        }) {
            Some(b) => {
                let token = version_token().find(&b.banner).filter(|_| b.unprompted);
                match token {
                    Some(t) => verdict(true, format!("unprompted banner discloses version `{}`", t.as_str())),
                    None if b.unprompted => verdict(false, "unprompted banner carries no version".into()),
                    None => verdict(false, "service sends nothing unprompted".into()),
                }
            }
            None => missing("BANNER"),
        },
        "TC-NET-003" => match first(observations, |o| match &o.payload {
            ObservationPayload::TlsPosture(t) => Some(t),
            _ => None,
        }) {
            Some(t) => {
                let legacy: Vec<_> = t.versions.iter().filter(|v| v.is_legacy()).map(|v| v.as_str()).collect();
                if legacy.is_empty() {
                    verdict(false, "no legacy TLS version accepted".into())
                } else {
                    verdict(true, format!("legacy versions accepted: {}", legacy.join(", ")))
                }
            }
            None => missing("TLS_POSTURE"),
        },
        "TC-NET-004" | "TC-NET-006" => match first(observations, |o| match &o.payload {
            ObservationPayload::CredentialResult(c) => Some(c),
            _ => None,
        }) {
            Some(c) if c.accepted.is_empty() => {
                verdict(false, format!("none of {} default credentials accepted", c.attempted))
            }
            Some(c) => {
                let pairs: Vec<_> = c.accepted.iter().map(|p| format!("{}/{}", p.username, p.password)).collect();
                verdict(true, format!("default credentials accepted: {}", pairs.join(", ")))
            }
            None => missing("CREDENTIAL_RESULT"),
        },
        "TC-NET-005" => match observations.iter().find_map(|o| match &o.payload {
            ObservationPayload::TlsPosture(t) => Some((t, o.captured_at)),
            _ => None,
        }) {
            Some((t, at)) => match t.certificate_expiry {
                Some(expiry) if expiry < at => verdict(true, format!("certificate expired at {}", expiry.to_rfc3339())),
                Some(expiry) => verdict(false, format!("certificate valid until {}", expiry.to_rfc3339())),
                None => (ExecutorVerdict::Inconclusive, "no certificate expiry observed".into()),
            },
            None => missing("TLS_POSTURE"),
        },
        other => return Err(ProbeError::UnknownCase(other.to_string())),
    };
    Ok(result)
}
