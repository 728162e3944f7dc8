use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("invalid probe input: {0}")]
    Precondition(String),
    #[error("host `{host}` is unreachable: {detail}")]
    HostUnreachable { host: String, detail: String },
    #[error("connection to {host}:{port} refused")]
    ConnectionRefused { host: String, port: u16 },
    #[error("connection to {host}:{port} failed: {detail}")]
    Connect { host: String, port: u16, detail: String },
    #[error("{host}:{port} completed no TLS handshake")]
    NotTls { host: String, port: u16 },
    #[error("{host}:{port} does not speak {expected}")]
    ServiceMismatch { host: String, port: u16, expected: String },
    #[error("no verdict rule for case `{0}`")]
    UnknownCase(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl ProbeError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Precondition(_) => "PRECONDITION",
            Self::HostUnreachable { .. } => "HOST_UNREACHABLE",
            Self::ConnectionRefused { .. } => "CONNECTION_REFUSED",
            Self::Connect { .. } => "CONNECT_FAILED",
            Self::NotTls { .. } => "NOT_TLS",
            Self::ServiceMismatch { .. } => "SERVICE_MISMATCH",
            Self::UnknownCase(_) => "UNKNOWN_CASE",
            Self::Io(_) => "IO",
        }
    }
}
