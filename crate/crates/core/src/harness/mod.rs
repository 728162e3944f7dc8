//! Execution of test plans.
//!
//! Automated entries are dispatched to registered executors, each on its own
//! thread bounded by a timeout; a panicking, failing or diverging executor is
//! recorded as an ERROR protocol and never aborts the run. Manual and
//! semi-automated entries are returned as pending and completed through
//! [`record_manual_result`].

mod observation;
mod protocol;
mod registry;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::Duration;

use thiserror::Error;

pub use observation::{
    BannerPayload, Credential, CredentialResultPayload, EvidenceDigestPayload, Observation, ObservationKind,
    ObservationPayload, PortListPayload, TlsPosturePayload, TlsVersion,
};
pub use protocol::{ExecutionProtocol, ExecutorIdentity, ManualSubmission, PerformedStep, ProtocolOutcome};
pub use registry::{
    parse_port_range, ExecutorDescriptor, Executor, ExecutorFailure, ExecutorRegistry, ExecutorReport,
    ExecutorVerdict, Invocation, ParameterSpec, ParameterType, RegisteredExecutor, TIMEOUT_PARAMETER,
};

use crate::clock::{Clock, SystemClock};
use crate::filter::{PlannedTest, TestPlan};
use crate::model::ExecutionMode;

/// Environment variable overriding the default executor timeout, in seconds.
pub const TIMEOUT_ENV: &str = "IOTSAM_PROBE_TIMEOUT_SECS";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("UNKNOWN_CAPABILITY: entry `{plan_entry_id}` references unregistered executor `{capability}`")]
    UnknownCapability { capability: String, plan_entry_id: String },
    #[error("DUPLICATE_CAPABILITY: executor `{capability}` is already registered")]
    DuplicateCapability { capability: String },
    #[error("INVALID_PARAMETERS: entry `{plan_entry_id}`: {message}")]
    InvalidParameters { plan_entry_id: String, message: String },
    #[error("MODE_MISMATCH: entry `{plan_entry_id}` is {mode}, {message}")]
    ModeMismatch {
        plan_entry_id: String,
        mode: ExecutionMode,
        message: &'static str,
    },
    #[error("STEP_COUNT_MISMATCH: entry `{plan_entry_id}` has {expected} guide steps but {actual} observation lists were given")]
    StepCountMismatch {
        plan_entry_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("INVALID_OUTCOME: {outcome} cannot be recorded manually")]
    InvalidOutcome { outcome: ProtocolOutcome },
    #[error("ENTRY_MISMATCH: submission for `{submitted}` does not belong to entry `{expected}`")]
    EntryMismatch { submitted: String, expected: String },
    #[error("INVALID_PARALLELISM: parallelism limit must be at least 1")]
    InvalidParallelism,
    #[error("SINK: {0}")]
    Sink(String),
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownCapability { .. } => "UNKNOWN_CAPABILITY",
            Self::DuplicateCapability { .. } => "DUPLICATE_CAPABILITY",
            Self::InvalidParameters { .. } => "INVALID_PARAMETERS",
            Self::ModeMismatch { .. } => "MODE_MISMATCH",
            Self::StepCountMismatch { .. } => "STEP_COUNT_MISMATCH",
            Self::InvalidOutcome { .. } => "INVALID_OUTCOME",
            Self::EntryMismatch { .. } => "ENTRY_MISMATCH",
            Self::InvalidParallelism => "INVALID_PARALLELISM",
            Self::Sink(_) => "SINK",
        }
    }
}

/// Settings shared by all executions of one run.
#[derive(Clone)]
pub struct HarnessOptions {
    pub parallelism: usize,
    pub default_timeout: Duration,
    pub clock: Arc<dyn Clock>,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            parallelism: 4,
            default_timeout: timeout_from_env().unwrap_or(DEFAULT_TIMEOUT),
            clock: Arc::new(SystemClock),
        }
    }
}

impl HarnessOptions {
    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_default_timeout(mut self, timeout: Duration) -> Self {
        self.default_timeout = timeout;
        self
    }
}

/// Timeout configured through [`TIMEOUT_ENV`], if set to a positive number.
pub fn timeout_from_env() -> Option<Duration> {
    std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s > 0.0)
        .map(Duration::from_secs_f64)
}

fn entry_timeout(entry_parameters: &BTreeMap<String, String>, default: Duration) -> Duration {
    entry_parameters
        .get(TIMEOUT_PARAMETER)
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s > 0.0)
        .map(Duration::from_secs_f64)
        .unwrap_or(default)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// Runs one automated entry.
///
/// Executor failures, panics and timeouts produce an ERROR protocol; only a
/// malformed request (wrong mode, unknown capability, parameters violating the
/// executor's schema) is returned as an error.
pub fn execute_automated(
    plan_id: &str,
    entry: &PlannedTest,
    registry: &ExecutorRegistry,
    options: &HarnessOptions,
) -> Result<ExecutionProtocol, HarnessError> {
    if entry.execution_mode != ExecutionMode::Automated {
        return Err(HarnessError::ModeMismatch {
            plan_entry_id: entry.plan_entry_id.clone(),
            mode: entry.execution_mode,
            message: "only AUTOMATED entries run on executors",
        });
    }
    let Some(resolved) = entry.executor.as_ref() else {
        return Err(HarnessError::ModeMismatch {
            plan_entry_id: entry.plan_entry_id.clone(),
            mode: entry.execution_mode,
            message: "but carries no executor reference",
        });
    };
    let registered = registry
        .lookup(&resolved.capability)
        .ok_or_else(|| HarnessError::UnknownCapability {
            capability: resolved.capability.clone(),
            plan_entry_id: entry.plan_entry_id.clone(),
        })?;
    registered
        .descriptor
        .check_parameters(&resolved.parameters)
        .map_err(|message| HarnessError::InvalidParameters {
            plan_entry_id: entry.plan_entry_id.clone(),
            message,
        })?;

    let timeout = entry_timeout(&resolved.parameters, options.default_timeout);
    let invocation = Invocation {
        case_id: entry.case_id.clone(),
        plan_entry_id: entry.plan_entry_id.clone(),
        parameters: resolved.parameters.clone(),
        clock: Arc::clone(&options.clock),
    };
    let started_at = options.clock.now();
    let (tx, rx) = mpsc::channel();
    let behavior = Arc::clone(&registered.behavior);
    let spawned = thread::Builder::new()
        .name(format!("executor:{}", entry.plan_entry_id))
        .spawn(move || {
            let result = catch_unwind(AssertUnwindSafe(|| behavior.execute(&invocation)));
            let _ = tx.send(result.map_err(panic_message));
        });

    let (steps, outcome, rationale) = match spawned {
        Err(e) => (vec![], ProtocolOutcome::Error, format!("could not start executor thread: {e}")),
        Ok(_) => match rx.recv_timeout(timeout) {
            Ok(Ok(Ok(report))) => {
                let outcome = match report.verdict {
                    ExecutorVerdict::Pass => ProtocolOutcome::Pass,
                    ExecutorVerdict::Fail => ProtocolOutcome::Fail,
                    ExecutorVerdict::Inconclusive => ProtocolOutcome::Inconclusive,
                };
                (report.steps, outcome, report.rationale)
            }
            Ok(Ok(Err(failure))) => (
                failure.steps,
                ProtocolOutcome::Error,
                format!("executor `{}` failed: {}", resolved.capability, failure.message),
            ),
            Ok(Err(panic)) => (
                vec![],
                ProtocolOutcome::Error,
                format!("executor `{}` crashed: {panic}", resolved.capability),
            ),
            Err(mpsc::RecvTimeoutError::Timeout) => (
                vec![],
                ProtocolOutcome::Error,
                format!(
                    "executor `{}` exceeded its timeout of {:.3} s",
                    resolved.capability,
                    timeout.as_secs_f64()
                ),
            ),
            Err(mpsc::RecvTimeoutError::Disconnected) => (
                vec![],
                ProtocolOutcome::Error,
                format!("executor `{}` terminated without a result", resolved.capability),
            ),
        },
    };
    let ended_at = options.clock.now().max(started_at);
    Ok(ExecutionProtocol {
        protocol_id: ExecutionProtocol::id_for(&entry.plan_entry_id),
        plan_id: plan_id.to_string(),
        plan_entry_id: entry.plan_entry_id.clone(),
        case_id: entry.case_id.clone(),
        executor: ExecutorIdentity::executor(&registered.descriptor.capability, &registered.descriptor.version),
        started_at,
        ended_at,
        steps_performed: steps,
        outcome,
        outcome_rationale: rationale,
    })
}

/// Builds the protocol of a manual or semi-automated entry from assessor input.
pub fn record_manual_result(
    plan_id: &str,
    entry: &PlannedTest,
    submission: &ManualSubmission,
    clock: &dyn Clock,
) -> Result<ExecutionProtocol, HarnessError> {
    if submission.plan_entry_id != entry.plan_entry_id {
        return Err(HarnessError::EntryMismatch {
            submitted: submission.plan_entry_id.clone(),
            expected: entry.plan_entry_id.clone(),
        });
    }
    if !entry.execution_mode.is_manual_path() {
        return Err(HarnessError::ModeMismatch {
            plan_entry_id: entry.plan_entry_id.clone(),
            mode: entry.execution_mode,
            message: "automated entries cannot be recorded manually",
        });
    }
    if submission.outcome == ProtocolOutcome::Error {
        return Err(HarnessError::InvalidOutcome {
            outcome: submission.outcome,
        });
    }
    if submission.step_observations.len() != entry.instantiated_guide.len() {
        return Err(HarnessError::StepCountMismatch {
            plan_entry_id: entry.plan_entry_id.clone(),
            expected: entry.instantiated_guide.len(),
            actual: submission.step_observations.len(),
        });
    }
    let ended_at = clock.now();
    let started_at = submission.started_at.map_or(ended_at, |s| s.min(ended_at));
    let steps_performed = entry
        .instantiated_guide
        .iter()
        .zip(&submission.step_observations)
        .map(|(step, observations)| PerformedStep::new(step.instruction.clone(), observations.clone()))
        .collect();
    Ok(ExecutionProtocol {
        protocol_id: ExecutionProtocol::id_for(&entry.plan_entry_id),
        plan_id: plan_id.to_string(),
        plan_entry_id: entry.plan_entry_id.clone(),
        case_id: entry.case_id.clone(),
        executor: ExecutorIdentity::manual(&submission.assessor_id),
        started_at,
        ended_at,
        steps_performed,
        outcome: submission.outcome,
        outcome_rationale: submission.rationale.clone(),
    })
}

/// Receives protocols in canonical plan order. Called from worker threads,
/// one call at a time.
pub trait ProtocolSink: Send + Sync {
    fn accept(&self, protocol: &ExecutionProtocol) -> Result<(), String>;
}

impl<F> ProtocolSink for F
where
    F: Fn(&ExecutionProtocol) -> Result<(), String> + Send + Sync,
{
    fn accept(&self, protocol: &ExecutionProtocol) -> Result<(), String> {
        self(protocol)
    }
}

/// Sink that drops every protocol.
pub struct DiscardSink;

impl ProtocolSink for DiscardSink {
    fn accept(&self, _: &ExecutionProtocol) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanExecution {
    /// One protocol per automated entry, in plan order.
    pub protocols: Vec<ExecutionProtocol>,
    /// Manual and semi-automated entries awaiting assessor input, in plan order.
    pub pending: Vec<PlannedTest>,
}

fn error_protocol(plan_id: &str, entry: &PlannedTest, error: &HarnessError, clock: &dyn Clock) -> ExecutionProtocol {
    let at = clock.now();
    ExecutionProtocol {
        protocol_id: ExecutionProtocol::id_for(&entry.plan_entry_id),
        plan_id: plan_id.to_string(),
        plan_entry_id: entry.plan_entry_id.clone(),
        case_id: entry.case_id.clone(),
        executor: ExecutorIdentity::executor(
            entry.executor.as_ref().map_or("unresolved", |e| e.capability.as_str()),
            "unavailable",
        ),
        started_at: at,
        ended_at: at,
        steps_performed: vec![],
        outcome: ProtocolOutcome::Error,
        outcome_rationale: error.to_string(),
    }
}

struct Emitter<'a> {
    slots: Vec<Option<ExecutionProtocol>>,
    next: usize,
    sink: &'a dyn ProtocolSink,
    sink_error: Option<String>,
}

impl Emitter<'_> {
    fn store(&mut self, index: usize, protocol: ExecutionProtocol) {
        self.slots[index] = Some(protocol);
        while let Some(Some(ready)) = self.slots.get(self.next) {
            if self.sink_error.is_none() {
                if let Err(e) = self.sink.accept(ready) {
                    self.sink_error = Some(e);
                }
            }
            self.next += 1;
        }
    }
}

/// Executes automated `entries` with up to `options.parallelism` concurrent
/// executors and forwards protocols to `sink` in the order of `entries`.
///
/// Entries that cannot be dispatched (unknown capability, invalid parameters)
/// yield ERROR protocols.
pub fn execute_entries(
    plan_id: &str,
    entries: &[PlannedTest],
    registry: &ExecutorRegistry,
    sink: &dyn ProtocolSink,
    options: &HarnessOptions,
) -> Result<Vec<ExecutionProtocol>, HarnessError> {
    if options.parallelism == 0 {
        return Err(HarnessError::InvalidParallelism);
    }
    let emitter = Mutex::new(Emitter {
        slots: vec![None; entries.len()],
        next: 0,
        sink,
        sink_error: None,
    });
    let cursor = AtomicUsize::new(0);
    let workers = options.parallelism.min(entries.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = entries.get(index) else { break };
                let protocol = execute_automated(plan_id, entry, registry, options)
                    .unwrap_or_else(|e| error_protocol(plan_id, entry, &e, options.clock.as_ref()));
                emitter.lock().expect("emitter lock").store(index, protocol);
            });
        }
    });
    let emitter = emitter.into_inner().expect("emitter lock");
    if let Some(e) = emitter.sink_error {
        return Err(HarnessError::Sink(e));
    }
    Ok(emitter.slots.into_iter().map(|p| p.expect("every slot filled")).collect())
}

/// Executes every automated entry of `plan` and returns the rest as pending.
pub fn execute_plan(
    plan: &TestPlan,
    registry: &ExecutorRegistry,
    sink: &dyn ProtocolSink,
    options: &HarnessOptions,
) -> Result<PlanExecution, HarnessError> {
    let (automated, pending): (Vec<PlannedTest>, Vec<PlannedTest>) = plan
        .entries
        .iter()
        .cloned()
        .partition(|e| e.execution_mode == ExecutionMode::Automated);
    let protocols = execute_entries(&plan.plan_id, &automated, registry, sink, options)?;
    Ok(PlanExecution { protocols, pending })
}
