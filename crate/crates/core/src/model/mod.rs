//! Domain types for devices, profiles, catalogs and assessment schemes, and
//! the canonical document format they are exchanged in.

pub mod catalog;
pub mod device;
pub mod document;
pub mod levels;
pub mod profile;
pub mod scheme;

pub use catalog::{
    AttributeConstraint, ComponentSelector, ConstraintOperator, ExecutionMode, ExecutorRef, KindFilter, Severity,
    StepTemplate, TestCase, TestCaseCatalog,
};
pub use device::{AttributeValue, ComponentKind, DeviceComponent, DeviceModel, WIRELESS_PROTOCOLS};
pub use document::{
    parse_body, parse_document, serialize_document, serialize_document_compact, split_envelope, to_canonical_value,
    Document,
    DocumentError, SCHEMA_VERSION,
};
pub use levels::{
    level_leq, AuthorizationAccessLevel, DataSensitivityLevel, OrdinalLevel, PhysicalAccessLevel,
    SecurityImpactLevel, VerificationLevel,
};
pub use profile::{EcosystemKind, EcosystemSystem, TestingProfile};
pub use scheme::{AssessmentScheme, CriticalRule, InconclusivePolicy, SkippedPolicy, DEFAULT_SCHEME_ID};
