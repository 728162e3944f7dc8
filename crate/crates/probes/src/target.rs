use std::io;
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::error::ProbeError;

pub const DEFAULT_CONNECT_TIMEOUT_MS: u64 = 1000;

/// One TCP endpoint to probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeTarget {
    pub host: String,
    pub port: u16,
    pub connect_timeout_ms: u64,
}

impl ProbeTarget {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        Self {
            host: host.into(),
            port,
            connect_timeout_ms: DEFAULT_CONNECT_TIMEOUT_MS,
        }
    }

    pub fn with_connect_timeout_ms(mut self, ms: u64) -> Self {
        self.connect_timeout_ms = ms;
        self
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.port == 0 {
            return Err(ProbeError::Precondition("port must be in 1-65535".into()));
        }
        if self.connect_timeout_ms == 0 {
            return Err(ProbeError::Precondition("connect timeout must be positive".into()));
        }
        if self.host.trim().is_empty() {
            return Err(ProbeError::Precondition("host must not be empty".into()));
        }
        Ok(())
    }

    pub fn connect_timeout(&self) -> Duration {
        Duration::from_millis(self.connect_timeout_ms)
    }

    pub fn resolve(&self) -> Result<SocketAddr, ProbeError> {
        resolve(&self.host, self.port)
    }

    /// Opens a blocking connection with read and write timeouts set to `io_timeout`.
    pub fn connect(&self, io_timeout: Duration) -> Result<TcpStream, ProbeError> {
        self.validate()?;
        let addr = self.resolve()?;
        let stream = TcpStream::connect_timeout(&addr, self.connect_timeout()).map_err(|e| self.connect_error(e))?;
        stream
            .set_read_timeout(Some(io_timeout))
            .and_then(|_| stream.set_write_timeout(Some(io_timeout)))
            .map_err(|e| ProbeError::Io(e.to_string()))?;
        Ok(stream)
    }

    pub(crate) fn connect_error(&self, err: io::Error) -> ProbeError {
        match err.kind() {
            io::ErrorKind::ConnectionRefused => ProbeError::ConnectionRefused {
                host: self.host.clone(),
                port: self.port,
            },
            io::ErrorKind::HostUnreachable | io::ErrorKind::NetworkUnreachable => ProbeError::HostUnreachable {
                host: self.host.clone(),
                detail: err.to_string(),
            },
            _ => ProbeError::Connect {
                host: self.host.clone(),
                port: self.port,
                detail: err.to_string(),
            },
        }
    }
}

pub(crate) fn resolve(host: &str, port: u16) -> Result<SocketAddr, ProbeError> {
    let unreachable = |detail: String| ProbeError::HostUnreachable {
        host: host.to_string(),
        detail,
    };
    (host, port)
        .to_socket_addrs()
        .map_err(|e| unreachable(e.to_string()))?
        .next()
        .ok_or_else(|| unreachable("name resolved to no address".into()))
}
