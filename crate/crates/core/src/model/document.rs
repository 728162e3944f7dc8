//! Canonical machine-readable document format.
//!
//! Every pipeline artifact is a UTF-8 JSON object with a leading `kind` and
//! `schema-version` field followed by the artifact's own fields in declaration
//! order. Serialization is pretty-printed with two-space indentation and a
//! trailing newline, so that `serialize(parse(d)) == d` holds byte for byte for
//! every canonical document `d`.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "1";

/// Errors raised while reading a document.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("SYNTAX: {message}")]
    Syntax { message: String },
    #[error("SCHEMA at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("INVARIANT {invariant} at {path}: {message}")]
    Invariant {
        invariant: &'static str,
        path: String,
        message: String,
    },
}

impl DocumentError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn invariant(invariant: &'static str, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invariant {
            invariant,
            path: path.into(),
            message: message.into(),
        }
    }

    /// Stable machine code: `SYNTAX`, `SCHEMA` or `INVARIANT`.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Syntax { .. } => "SYNTAX",
            Self::Schema { .. } => "SCHEMA",
            Self::Invariant { .. } => "INVARIANT",
        }
    }

    /// Location path inside the document, `$` for the root.
    pub fn path(&self) -> &str {
        match self {
            Self::Syntax { .. } => "$",
            Self::Schema { path, .. } | Self::Invariant { path, .. } => path,
        }
    }
}

/// A top-level artifact with a canonical document representation.
pub trait Document: Serialize + DeserializeOwned {
    /// Value of the `kind` field.
    const KIND: &'static str;

    /// Checks the invariants serde cannot express.
    fn validate(&self) -> Result<(), DocumentError> {
        Ok(())
    }
}

/// Parses and validates a document of the expected kind.
pub fn parse_document<T: Document>(bytes: &[u8]) -> Result<T, DocumentError> {
    let (kind, body) = split_envelope(bytes)?;
    if kind != T::KIND {
        return Err(DocumentError::schema(
            "$.kind",
            format!("expected kind `{}`, found `{kind}`", T::KIND),
        ));
    }
    parse_body(body)
}

/// Deserializes an already-separated document body (no `kind` or `schema-version`).
pub fn parse_body<T: Document>(body: Value) -> Result<T, DocumentError> {
    let value: T = serde_path_to_error::deserialize(body).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { format!("$.{path}") };
        DocumentError::schema(path, e.into_inner().to_string())
    })?;
    value.validate()?;
    Ok(value)
}

/// Reads the envelope of a canonical document and returns its kind and remaining fields.
pub fn split_envelope(bytes: &[u8]) -> Result<(String, Value), DocumentError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DocumentError::Syntax {
        message: format!("document is not valid UTF-8: {e}"),
    })?;
    if text.trim().is_empty() {
        return Err(DocumentError::Syntax {
            message: "empty document".into(),
        });
    }
    let value: Value = serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
        message: e.to_string(),
    })?;
    let Value::Object(mut map) = value else {
        return Err(DocumentError::schema("$", "document must be a JSON object"));
    };
    let kind = match map.shift_remove("kind") {
        Some(Value::String(kind)) => kind,
        Some(_) => return Err(DocumentError::schema("$.kind", "`kind` must be a string")),
        None => return Err(DocumentError::schema("$.kind", "missing field `kind`")),
    };
    match map.shift_remove("schema-version") {
        Some(Value::String(v)) if v == SCHEMA_VERSION => {}
        Some(Value::String(v)) => {
            return Err(DocumentError::schema(
                "$.schema-version",
                format!("unsupported schema version `{v}`, expected `{SCHEMA_VERSION}`"),
            ))
        }
        Some(_) => {
            return Err(DocumentError::schema(
                "$.schema-version",
                "`schema-version` must be a string",
            ))
        }
        None => {
            return Err(DocumentError::schema(
                "$.schema-version",
                "missing field `schema-version`",
            ))
        }
    }
    Ok((kind, Value::Object(map)))
}

/// Builds the canonical JSON value of a document, envelope first.
pub fn to_canonical_value<T: Document>(value: &T) -> Value {
    let body = serde_json::to_value(value).expect("document types serialize to JSON objects");
    let Value::Object(fields) = body else {
        panic!("document `{}` did not serialize to an object", T::KIND);
    };
    let mut map = Map::with_capacity(fields.len() + 2);
    map.insert("kind".into(), Value::String(T::KIND.into()));
    map.insert("schema-version".into(), Value::String(SCHEMA_VERSION.into()));
    map.extend(fields);
    Value::Object(map)
}

/// Canonical byte form of a document.
pub fn serialize_document<T: Document>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&to_canonical_value(value)).expect("JSON values serialize");
    out.push(b'\n');
    out
}

/// Single-line canonical form, used for event streams.
pub fn serialize_document_compact<T: Document>(value: &T) -> String {
    serde_json::to_string(&to_canonical_value(value)).expect("JSON values serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(rename_all = "kebab-case", deny_unknown_fields)]
    struct Probe {
        probe_id: String,
    }

    impl Document for Probe {
        const KIND: &'static str = "probe";
    }

    #[test]
    fn empty_input_is_a_syntax_error() {
        let err = parse_document::<Probe>(b"").unwrap_err();
        assert_eq!(err.code(), "SYNTAX");
        assert_eq!(parse_document::<Probe>(b"{").unwrap_err().code(), "SYNTAX");
    }

    #[test]
    fn envelope_comes_first_and_round_trips() {
        let probe = Probe { probe_id: "p-1".into() };
        let bytes = serialize_document(&probe);
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "{\n  \"kind\": \"probe\",\n  \"schema-version\": \"1\",\n  \"probe-id\": \"p-1\"\n}\n"
        );
        assert_eq!(parse_document::<Probe>(&bytes).unwrap(), probe);
    }

    #[test]
    fn wrong_kind_version_and_extra_fields_are_schema_errors() {
        let other = br#"{"kind":"other","schema-version":"1","probe-id":"x"}"#;
        assert_eq!(parse_document::<Probe>(other).unwrap_err().path(), "$.kind");
        let v2 = br#"{"kind":"probe","schema-version":"2","probe-id":"x"}"#;
        assert_eq!(parse_document::<Probe>(v2).unwrap_err().path(), "$.schema-version");
        let extra = br#"{"kind":"probe","schema-version":"1","probe-id":"x","color":"red"}"#;
        let err = parse_document::<Probe>(extra).unwrap_err();
        assert_eq!(err.code(), "SCHEMA");
        assert!(err.to_string().contains("color"), "{err}");
        let missing = br#"{"kind":"probe","schema-version":"1"}"#;
        assert!(parse_document::<Probe>(missing).unwrap_err().to_string().contains("probe-id"));
    }
}
