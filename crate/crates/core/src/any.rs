//! Parsing a document whose kind is only known from its envelope.

use crate::assessment::AssessmentReport;
use crate::filter::TestPlan;
use crate::harness::{ExecutionProtocol, ManualSubmission};
use crate::model::{
    parse_body, serialize_document, split_envelope, AssessmentScheme, DeviceModel, Document, DocumentError, TestCaseCatalog,
    TestingProfile,
};
use crate::store::{AssessmentRecord, StateChange, StoreRecord};

#[derive(Debug, Clone, PartialEq)]
pub enum AnyDocument {
    DeviceModel(DeviceModel),
    TestingProfile(TestingProfile),
    TestCaseCatalog(TestCaseCatalog),
    TestPlan(TestPlan),
    ExecutionProtocol(ExecutionProtocol),
    ManualSubmission(ManualSubmission),
    AssessmentScheme(AssessmentScheme),
    AssessmentReport(AssessmentReport),
    AssessmentRecord(AssessmentRecord),
    StateChange(StateChange),
    StoreRecord(StoreRecord),
}

/// Document kinds understood by [`parse_any`].
pub const KNOWN_KINDS: [&str; 11] = [
    DeviceModel::KIND,
    TestingProfile::KIND,
    TestCaseCatalog::KIND,
    TestPlan::KIND,
    ExecutionProtocol::KIND,
    ManualSubmission::KIND,
    AssessmentScheme::KIND,
    AssessmentReport::KIND,
    AssessmentRecord::KIND,
    StateChange::KIND,
    StoreRecord::KIND,
];

impl AnyDocument {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::DeviceModel(_) => DeviceModel::KIND,
            Self::TestingProfile(_) => TestingProfile::KIND,
            Self::TestCaseCatalog(_) => TestCaseCatalog::KIND,
            Self::TestPlan(_) => TestPlan::KIND,
            Self::ExecutionProtocol(_) => ExecutionProtocol::KIND,
            Self::ManualSubmission(_) => ManualSubmission::KIND,
            Self::AssessmentScheme(_) => AssessmentScheme::KIND,
            Self::AssessmentReport(_) => AssessmentReport::KIND,
            Self::AssessmentRecord(_) => AssessmentRecord::KIND,
            Self::StateChange(_) => StateChange::KIND,
            Self::StoreRecord(_) => StoreRecord::KIND,
        }
    }

    /// Canonical serialization of the wrapped document.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Self::DeviceModel(d) => serialize_document(d),
            Self::TestingProfile(d) => serialize_document(d),
            Self::TestCaseCatalog(d) => serialize_document(d),
            Self::TestPlan(d) => serialize_document(d),
            Self::ExecutionProtocol(d) => serialize_document(d),
            Self::ManualSubmission(d) => serialize_document(d),
            Self::AssessmentScheme(d) => serialize_document(d),
            Self::AssessmentReport(d) => serialize_document(d),
            Self::AssessmentRecord(d) => serialize_document(d),
            Self::StateChange(d) => serialize_document(d),
            Self::StoreRecord(d) => serialize_document(d),
        }
    }
}

/// Parses and validates any known document kind.
pub fn parse_any(bytes: &[u8]) -> Result<AnyDocument, DocumentError> {
    let (kind, body) = split_envelope(bytes)?;
    Ok(match kind.as_str() {
        DeviceModel::KIND => AnyDocument::DeviceModel(parse_body(body)?),
        TestingProfile::KIND => AnyDocument::TestingProfile(parse_body(body)?),
        TestCaseCatalog::KIND => AnyDocument::TestCaseCatalog(parse_body(body)?),
        TestPlan::KIND => AnyDocument::TestPlan(parse_body(body)?),
        ExecutionProtocol::KIND => AnyDocument::ExecutionProtocol(parse_body(body)?),
        ManualSubmission::KIND => AnyDocument::ManualSubmission(parse_body(body)?),
        AssessmentScheme::KIND => AnyDocument::AssessmentScheme(parse_body(body)?),
        AssessmentReport::KIND => AnyDocument::AssessmentReport(parse_body(body)?),
        AssessmentRecord::KIND => AnyDocument::AssessmentRecord(parse_body(body)?),
        StateChange::KIND => AnyDocument::StateChange(parse_body(body)?),
        StoreRecord::KIND => AnyDocument::StoreRecord(parse_body(body)?),
        other => {
            return Err(DocumentError::schema(
                "$.kind",
                format!("unknown document kind `{other}`"),
            ))
        }
    })
}
