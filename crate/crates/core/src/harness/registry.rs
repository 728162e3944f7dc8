use std::collections::BTreeMap;
use std::fmt;
use std::net::IpAddr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::observation::ObservationKind;
use super::protocol::PerformedStep;
use super::HarnessError;
use crate::clock::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParameterType {
    Text,
    Integer,
    /// Decimal number, e.g. `0.5`.
    Number,
    Boolean,
    /// IP literal or hostname.
    Host,
    /// Port in `1..=65535`.
    Port,
    /// `first-last` with `1 <= first <= last <= 65535`, or a single port.
    PortRange,
}

impl ParameterType {
    pub fn check(self, value: &str) -> Result<(), String> {
        let ok = match self {
            Self::Text => true,
            Self::Integer => value.parse::<i64>().is_ok(),
            Self::Number => value.parse::<f64>().is_ok_and(|v| v.is_finite()),
            Self::Boolean => matches!(value, "true" | "false"),
            Self::Host => value.parse::<IpAddr>().is_ok() || is_hostname(value),
            Self::Port => value.parse::<u16>().is_ok_and(|p| p >= 1),
            Self::PortRange => parse_port_range(value).is_ok(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("`{value}` is not a valid {self}"))
        }
    }
}

impl fmt::Display for ParameterType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Text => "text",
            Self::Integer => "integer",
            Self::Number => "number",
            Self::Boolean => "boolean",
            Self::Host => "host",
            Self::Port => "port",
            Self::PortRange => "port-range",
        };
        f.write_str(name)
    }
}

fn is_hostname(value: &str) -> bool {
    !value.is_empty()
        && value.len() <= 253
        && value.split('.').all(|label| {
            !label.is_empty()
                && label.len() <= 63
                && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
                && !label.starts_with('-')
                && !label.ends_with('-')
        })
}

/// Parses `first-last` (or a single port) into an inclusive range.
pub fn parse_port_range(value: &str) -> Result<(u16, u16), String> {
    let (first, last) = match value.split_once('-') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (value.trim(), value.trim()),
    };
    let parse = |s: &str| {
        s.parse::<u16>()
            .ok()
            .filter(|p| *p >= 1)
            .ok_or_else(|| format!("`{s}` is not a port in 1-65535"))
    };
    let (first, last) = (parse(first)?, parse(last)?);
    if first > last {
        return Err(format!("empty port range {first}-{last}"));
    }
    Ok((first, last))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ParameterSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ParameterType,
    pub required: bool,
}

impl ParameterSpec {
    pub fn required(name: impl Into<String>, kind: ParameterType) -> Self {
        Self {
            name: name.into(),
            kind,
            required: true,
        }
    }

    pub fn optional(name: impl Into<String>, kind: ParameterType) -> Self {
        Self {
            name: name.into(),
            kind,
            required: false,
        }
    }
}

/// Name of the per-entry timeout parameter every executor accepts.
pub const TIMEOUT_PARAMETER: &str = "timeout-seconds";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExecutorDescriptor {
    pub capability: String,
    pub version: String,
    pub parameters: Vec<ParameterSpec>,
    pub produces: Vec<ObservationKind>,
}

impl ExecutorDescriptor {
    /// Checks resolved parameters against the schema. `timeout-seconds` is always accepted.
    pub fn check_parameters(&self, parameters: &BTreeMap<String, String>) -> Result<(), String> {
        for spec in &self.parameters {
            match parameters.get(&spec.name) {
                Some(value) => spec.kind.check(value).map_err(|e| format!("parameter `{}`: {e}", spec.name))?,
                None if spec.required => return Err(format!("missing required parameter `{}`", spec.name)),
                None => {}
            }
        }
        for name in parameters.keys() {
            if name == TIMEOUT_PARAMETER {
                ParameterType::Number
                    .check(&parameters[name])
                    .map_err(|e| format!("parameter `{name}`: {e}"))?;
            } else if !self.parameters.iter().any(|s| &s.name == name) {
                return Err(format!("unknown parameter `{name}` for `{}`", self.capability));
            }
        }
        Ok(())
    }
}

/// Input handed to an executor.
#[derive(Clone)]
pub struct Invocation {
    pub case_id: String,
    pub plan_entry_id: String,
    pub parameters: BTreeMap<String, String>,
    pub clock: Arc<dyn Clock>,
}

impl fmt::Debug for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Invocation")
            .field("case_id", &self.case_id)
            .field("plan_entry_id", &self.plan_entry_id)
            .field("parameters", &self.parameters)
            .finish_non_exhaustive()
    }
}

impl Invocation {
    pub fn parameter(&self, name: &str) -> Option<&str> {
        self.parameters.get(name).map(String::as_str)
    }
}

/// Verdict an executor can reach. ERROR is produced by the harness from failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutorVerdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutorReport {
    pub steps: Vec<PerformedStep>,
    pub verdict: ExecutorVerdict,
    pub rationale: String,
}

/// Executor-side failure; recorded as an ERROR outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutorFailure {
    pub message: String,
    pub steps: Vec<PerformedStep>,
}

impl ExecutorFailure {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            steps: vec![],
        }
    }

    pub fn with_steps(mut self, steps: Vec<PerformedStep>) -> Self {
        self.steps = steps;
        self
    }
}

pub trait Executor: Send + Sync {
    fn execute(&self, invocation: &Invocation) -> Result<ExecutorReport, ExecutorFailure>;
}

impl<F> Executor for F
where
    F: Fn(&Invocation) -> Result<ExecutorReport, ExecutorFailure> + Send + Sync,
{
    fn execute(&self, invocation: &Invocation) -> Result<ExecutorReport, ExecutorFailure> {
        self(invocation)
    }
}

#[derive(Clone)]
pub struct RegisteredExecutor {
    pub descriptor: ExecutorDescriptor,
    pub behavior: Arc<dyn Executor>,
}

/// Capability token → executor. Read-only while a plan executes.
#[derive(Clone, Default)]
pub struct ExecutorRegistry {
    executors: BTreeMap<String, RegisteredExecutor>,
}

impl fmt::Debug for ExecutorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.executors.keys()).finish()
    }
}

impl ExecutorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: ExecutorDescriptor, behavior: Arc<dyn Executor>) -> Result<(), HarnessError> {
        if self.executors.contains_key(&descriptor.capability) {
            return Err(HarnessError::DuplicateCapability {
                capability: descriptor.capability,
            });
        }
        self.executors
            .insert(descriptor.capability.clone(), RegisteredExecutor { descriptor, behavior });
        Ok(())
    }

    pub fn lookup(&self, capability: &str) -> Option<&RegisteredExecutor> {
        self.executors.get(capability)
    }

    /// Descriptors ordered by capability token.
    pub fn descriptors(&self) -> Vec<&ExecutorDescriptor> {
        self.executors.values().map(|e| &e.descriptor).collect()
    }

    pub fn len(&self) -> usize {
        self.executors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.executors.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descriptor(token: &str) -> ExecutorDescriptor {
        ExecutorDescriptor {
            capability: token.into(),
            version: "1".into(),
            parameters: vec![
                ParameterSpec::required("host", ParameterType::Host),
                ParameterSpec::optional("ports", ParameterType::PortRange),
            ],
            produces: vec![ObservationKind::PortList],
        }
    }

    fn noop() -> Arc<dyn Executor> {
        Arc::new(|_: &Invocation| {
            Ok(ExecutorReport {
                steps: vec![],
                verdict: ExecutorVerdict::Pass,
                rationale: String::new(),
            })
        })
    }

    #[test]
    fn register_then_lookup() {
        let mut registry = ExecutorRegistry::new();
        registry.register(descriptor("net.port-scan"), noop()).unwrap();
        assert!(registry.lookup("net.port-scan").is_some());
        assert!(registry.lookup("net.nonexistent").is_none());
    }

    #[test]
    fn duplicate_capability_is_rejected() {
        let mut registry = ExecutorRegistry::new();
        registry.register(descriptor("net.port-scan"), noop()).unwrap();
        let err = registry.register(descriptor("net.port-scan"), noop()).unwrap_err();
        assert_eq!(err.code(), "DUPLICATE_CAPABILITY");
        assert_eq!(registry.len(), 1);
    }

    #[test]
    fn listing_is_sorted_by_token() {
        let mut registry = ExecutorRegistry::new();
        for token in ["net.tls", "net.banner", "net.port-scan"] {
            registry.register(descriptor(token), noop()).unwrap();
        }
        let tokens: Vec<_> = registry.descriptors().iter().map(|d| d.capability.clone()).collect();
        assert_eq!(tokens, vec!["net.banner", "net.port-scan", "net.tls"]);
    }

    #[test]
    fn parameter_schema_checks() {
        let d = descriptor("x");
        let params = |pairs: &[(&str, &str)]| {
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>()
        };
        assert!(d.check_parameters(&params(&[("host", "192.0.2.10")])).is_ok());
        assert!(d.check_parameters(&params(&[("host", "lock.local"), ("ports", "1-1024")])).is_ok());
        assert!(d.check_parameters(&params(&[("host", "h"), ("timeout-seconds", "0.5")])).is_ok());
        assert!(d.check_parameters(&params(&[])).is_err());
        assert!(d.check_parameters(&params(&[("host", "h"), ("ports", "100-90")])).is_err());
        assert!(d.check_parameters(&params(&[("host", "bad host")])).is_err());
        assert!(d.check_parameters(&params(&[("host", "h"), ("colour", "red")])).is_err());
    }

    #[test]
    fn port_ranges() {
        assert_eq!(parse_port_range("1-1024"), Ok((1, 1024)));
        assert_eq!(parse_port_range("23"), Ok((23, 23)));
        assert!(parse_port_range("0-10").is_err());
        assert!(parse_port_range("100-90").is_err());
        assert!(parse_port_range("1-70000").is_err());
    }
}
