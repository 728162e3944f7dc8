use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObservationKind {
    Text,
    PortList,
    Banner,
    TlsPosture,
    CredentialResult,
    EvidenceDigest,
}

/// TLS protocol versions a service may offer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TlsVersion {
    #[serde(rename = "tls1.0")]
    Tls10,
    #[serde(rename = "tls1.1")]
    Tls11,
    #[serde(rename = "tls1.2")]
    Tls12,
    #[serde(rename = "tls1.3")]
    Tls13,
}

impl TlsVersion {
    pub const ALL: [TlsVersion; 4] = [Self::Tls10, Self::Tls11, Self::Tls12, Self::Tls13];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tls10 => "tls1.0",
            Self::Tls11 => "tls1.1",
            Self::Tls12 => "tls1.2",
            Self::Tls13 => "tls1.3",
        }
    }

    pub fn is_legacy(self) -> bool {
        matches!(self, Self::Tls10 | Self::Tls11)
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == token)
    }
}

impl fmt::Display for TlsVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Credential {
    pub username: String,
    pub password: String,
}

impl Credential {
    pub fn new(username: impl Into<String>, password: impl Into<String>) -> Self {
        Self {
            username: username.into(),
            password: password.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PortListPayload {
    pub host: String,
    pub ports: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BannerPayload {
    pub host: String,
    pub port: u16,
    /// Received bytes, decoded lossily as UTF-8.
    pub banner: String,
    pub byte_count: usize,
    /// The service sent data before the client wrote anything.
    pub unprompted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TlsPosturePayload {
    pub host: String,
    pub port: u16,
    pub versions: BTreeSet<TlsVersion>,
    pub self_signed: bool,
    pub certificate_expiry: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CredentialResultPayload {
    pub host: String,
    pub port: u16,
    pub service_kind: String,
    pub attempted: usize,
    pub accepted: Vec<Credential>,
}

/// Digest of evidence bytes stored outside the protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvidenceDigestPayload {
    pub algorithm: String,
    pub digest: String,
    pub media_type: String,
    pub description: String,
}

impl EvidenceDigestPayload {
    /// SHA-256 digest of `bytes`.
    pub fn sha256(bytes: &[u8], media_type: impl Into<String>, description: impl Into<String>) -> Self {
        use sha2::{Digest, Sha256};
        Self {
            algorithm: "sha256".into(),
            digest: hex::encode(Sha256::digest(bytes)),
            media_type: media_type.into(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObservationPayload {
    Text { text: String },
    PortList(PortListPayload),
    Banner(BannerPayload),
    TlsPosture(TlsPosturePayload),
    CredentialResult(CredentialResultPayload),
    EvidenceDigest(EvidenceDigestPayload),
}

impl ObservationPayload {
    pub fn kind(&self) -> ObservationKind {
        match self {
            Self::Text { .. } => ObservationKind::Text,
            Self::PortList(_) => ObservationKind::PortList,
            Self::Banner(_) => ObservationKind::Banner,
            Self::TlsPosture(_) => ObservationKind::TlsPosture,
            Self::CredentialResult(_) => ObservationKind::CredentialResult,
            Self::EvidenceDigest(_) => ObservationKind::EvidenceDigest,
        }
    }
}

/// One captured observation; the payload shape is determined by `kind`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Observation {
    #[serde(flatten)]
    pub payload: ObservationPayload,
    pub captured_at: DateTime<Utc>,
}

impl Observation {
    pub fn new(payload: ObservationPayload, captured_at: DateTime<Utc>) -> Self {
        Self { payload, captured_at }
    }

    pub fn text(text: impl Into<String>, captured_at: DateTime<Utc>) -> Self {
        Self::new(ObservationPayload::Text { text: text.into() }, captured_at)
    }

    pub fn kind(&self) -> ObservationKind {
        self.payload.kind()
    }
}
