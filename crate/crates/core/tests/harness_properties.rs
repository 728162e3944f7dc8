use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use iotsam_core::harness::{
    execute_plan, ExecutorDescriptor, ExecutorFailure, ExecutorRegistry, ExecutorReport, ExecutorVerdict,
    HarnessOptions, Invocation, ObservationKind, PerformedStep, ProtocolOutcome,
};
use iotsam_core::testing;
use iotsam_core::model::Severity;
use iotsam_core::{ExecutionMode, ExecutionProtocol, PlannedTest, ResolvedExecutor, SteppingClock, TestPlan};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

const CAPABILITIES: [&str; 5] = ["t.pass", "t.fail", "t.crash", "t.hang", "t.missing"];

fn registry() -> ExecutorRegistry {
    let descriptor = |capability: &str| ExecutorDescriptor {
        capability: capability.into(),
        version: "1".into(),
        parameters: vec![],
        produces: vec![ObservationKind::Text],
    };
    let verdict = |v: ExecutorVerdict| {
        move |_: &Invocation| -> Result<ExecutorReport, ExecutorFailure> {
            Ok(ExecutorReport {
                steps: vec![PerformedStep::new("probe", vec![])],
                verdict: v,
                rationale: format!("{v:?}"),
            })
        }
    };
    let mut r = ExecutorRegistry::new();
    r.register(descriptor("t.pass"), Arc::new(verdict(ExecutorVerdict::Pass))).unwrap();
    r.register(descriptor("t.fail"), Arc::new(verdict(ExecutorVerdict::Fail))).unwrap();
    r.register(
        descriptor("t.crash"),
        Arc::new(|_: &Invocation| -> Result<ExecutorReport, ExecutorFailure> { panic!("boom") }),
    )
    .unwrap();
    r.register(
        descriptor("t.hang"),
        Arc::new(|_: &Invocation| -> Result<ExecutorReport, ExecutorFailure> {
            std::thread::sleep(Duration::from_millis(400));
            Err(ExecutorFailure::new("woke up too late"))
        }),
    )
    .unwrap();
    r
}

fn expected_outcome(capability: &str) -> ProtocolOutcome {
    match capability {
        "t.pass" => ProtocolOutcome::Pass,
        "t.fail" => ProtocolOutcome::Fail,
        _ => ProtocolOutcome::Error,
    }
}

fn comparable(p: &ExecutionProtocol) -> (String, ProtocolOutcome, usize, String) {
    (p.plan_entry_id.clone(), p.outcome, p.steps_performed.len(), p.executor.name.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn every_entry_is_accounted_for(seed in any::<u64>(), parallelism in 1usize..9) {
        let mut rng = StdRng::seed_from_u64(seed);
        let plan = testing::plan(&mut rng, 25, &CAPABILITIES);
        let options = HarnessOptions::default()
            .with_parallelism(parallelism)
            .with_clock(Arc::new(SteppingClock::default()))
            .with_default_timeout(Duration::from_millis(50));
        let emitted = Mutex::new(Vec::new());
        let sink = |p: &ExecutionProtocol| {
            emitted.lock().unwrap().push(p.plan_entry_id.clone());
            Ok(())
        };
        let run = execute_plan(&plan, &registry(), &sink, &options).unwrap();

        prop_assert_eq!(run.protocols.len() + run.pending.len(), plan.entries.len());
        let mut seen: Vec<&str> = run
            .protocols
            .iter()
            .map(|p| p.plan_entry_id.as_str())
            .chain(run.pending.iter().map(|e| e.plan_entry_id.as_str()))
            .collect();
        seen.sort_unstable();
        let mut ids: Vec<&str> = plan.entries.iter().map(|e| e.plan_entry_id.as_str()).collect();
        ids.sort_unstable();
        prop_assert_eq!(seen, ids);

        let automated: Vec<String> = plan.automated_entries().map(|e| e.plan_entry_id.clone()).collect();
        prop_assert_eq!(&*emitted.lock().unwrap(), &automated);
        for (p, entry) in run.protocols.iter().zip(plan.automated_entries()) {
            let capability = &entry.executor.as_ref().unwrap().capability;
            prop_assert_eq!(p.outcome, expected_outcome(capability));
            prop_assert!(p.ended_at >= p.started_at);
        }
    }

    #[test]
    fn parallelism_does_not_change_contents(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let plan = testing::plan(&mut rng, 15, &["t.pass", "t.fail", "t.crash", "t.missing"]);
        let run = |parallelism| {
            let options = HarnessOptions::default()
                .with_parallelism(parallelism)
                .with_clock(Arc::new(SteppingClock::default()));
            let sink = |_: &ExecutionProtocol| Ok(());
            execute_plan(&plan, &registry(), &sink, &options).unwrap()
        };
        let one: Vec<_> = run(1).protocols.iter().map(comparable).collect();
        let eight: Vec<_> = run(8).protocols.iter().map(comparable).collect();
        prop_assert_eq!(one, eight);
    }
}

fn automated_entry(id: &str, capability: &str, parameters: BTreeMap<String, String>) -> PlannedTest {
    PlannedTest {
        plan_entry_id: format!("{id}@c"),
        case_id: id.into(),
        title: id.into(),
        target_component_id: "c".into(),
        severity: Severity::Major,
        execution_mode: ExecutionMode::Automated,
        instantiated_guide: vec![],
        executor: Some(ResolvedExecutor {
            capability: capability.into(),
            parameters,
        }),
    }
}

fn single_entry_plan(entry: PlannedTest) -> TestPlan {
    let mut plan = testing::plan(&mut StdRng::seed_from_u64(0), 0, &["t.pass"]);
    plan.entries = vec![entry];
    plan
}

#[test]
fn sink_failure_is_reported_after_the_run() {
    let plan = single_entry_plan(automated_entry("A", "t.pass", BTreeMap::new()));
    let sink = |_: &ExecutionProtocol| Err("disk full".to_string());
    let options = HarnessOptions::default().with_clock(Arc::new(SteppingClock::default()));
    let err = execute_plan(&plan, &registry(), &sink, &options).unwrap_err();
    assert_eq!(err.code(), "SINK");
}

#[test]
fn timeout_parameter_overrides_default() {
    let parameters = BTreeMap::from([("timeout-seconds".to_string(), "5".to_string())]);
    let plan = single_entry_plan(automated_entry("H", "t.hang", parameters));
    let options = HarnessOptions::default()
        .with_clock(Arc::new(SteppingClock::default()))
        .with_default_timeout(Duration::from_millis(10));
    let sink = |_: &ExecutionProtocol| Ok(());
    let run = execute_plan(&plan, &registry(), &sink, &options).unwrap();
    // With a 5 s budget the executor reports its own failure instead of timing out.
    assert!(run.protocols[0].outcome_rationale.contains("woke up too late"));
}
