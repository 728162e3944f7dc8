use std::fs;
use std::path::Path;

use iotsam_core::model::split_envelope;
use iotsam_core::{parse_any, parse_document, Document, DocumentError};
use iotsam_probes::mock::MockDevice;

use crate::error::CliError;

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// `file:path: error`, locating a document error inside its file.
pub fn located(path: &Path, e: &DocumentError) -> String {
    format!("{}:{}: {e}", path.display(), e.path())
}

pub fn load<T: Document>(path: &Path) -> Result<T, CliError> {
    let bytes = read(path)?;
    parse_document(&bytes).map_err(|e| CliError::Failed(located(path, &e)))
}

/// Parses any known document, including mock device descriptions. Returns its kind.
pub fn check(bytes: &[u8]) -> Result<&'static str, DocumentError> {
    let (kind, _) = split_envelope(bytes)?;
    if kind == MockDevice::KIND {
        parse_document::<MockDevice>(bytes)?;
        return Ok(MockDevice::KIND);
    }
    Ok(parse_any(bytes)?.kind())
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))
}
