//! Model-based security assessment of consumer IoT devices.
//!
//! The pipeline runs in stages: a [`DeviceModel`] and a [`TestingProfile`]
//! select the applicable cases of a [`TestCaseCatalog`] into a [`TestPlan`];
//! the [`harness`] executes automated entries and records manual ones as
//! [`ExecutionProtocol`]s; [`assessment`] turns protocols into a binary
//! verdict under an [`AssessmentScheme`]. The [`store`] persists a campaign as
//! an append-only log.

pub mod any;
pub mod assessment;
pub mod campaign;
pub mod clock;
pub mod filter;
pub mod harness;
pub mod model;
pub mod store;

pub use clock::{Clock, SteppingClock, SystemClock};
pub use filter::{
    coverage_report, filter_catalog, filter_catalog_with, instantiate_guide, is_applicable, ApplicabilityResult,
    CoverageSummary, FilterError, Fraction, GuideStep, InstantiatedGuide, ModeCoverage, PlannedTest, Prerequisite,
    PrerequisiteCheck, ResolvedExecutor, TestPlan,
};
pub use harness::{
    execute_automated, execute_entries, execute_plan, record_manual_result, ExecutionProtocol, ExecutorDescriptor,
    ExecutorIdentity, ExecutorRegistry, HarnessError, HarnessOptions, ManualSubmission, Observation,
    ObservationKind, ObservationPayload, PerformedStep, PlanExecution, ProtocolOutcome, ProtocolSink,
};
pub use model::*;
pub use any::{parse_any, AnyDocument};
pub use assessment::{
    aggregate, assess, derive_case_verdict, render_report, Assessment, AssessmentError, AssessmentReport,
    AssessmentResult, CaseVerdict, EffectiveOutcome, OverallVerdict,
};
pub use campaign::CampaignError;
pub use store::{AssessmentRecord, CampaignStore, Session, SessionState, StoreError};

#[cfg(feature = "testing")]
pub mod testing;
