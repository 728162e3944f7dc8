use std::fmt;
use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use iotsam_core::harness::{Credential, CredentialResultPayload};

use crate::error::ProbeError;
use crate::target::ProbeTarget;

/// Attempts never start closer together than this (at most two per second).
pub const MIN_ATTEMPT_INTERVAL: Duration = Duration::from_millis(500);

const BUNDLED_LIST: &str = include_str!("../data/default-credentials.txt");
/// Silence before the Telnet probe presses enter to provoke a login prompt.
const NUDGE_AFTER: Duration = Duration::from_millis(300);
const IDLE_GAP: Duration = Duration::from_millis(300);
const FAILURE_MARKERS: [&str; 5] = ["incorrect", "failed", "denied", "invalid", "login:"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceKind {
    Telnet,
    HttpBasic,
}

impl ServiceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Telnet => "telnet",
            Self::HttpBasic => "http-basic",
        }
    }

    pub fn parse(token: &str) -> Result<Self, ProbeError> {
        match token {
            "telnet" => Ok(Self::Telnet),
            "http-basic" => Ok(Self::HttpBasic),
            other => Err(ProbeError::Precondition(format!(
                "unsupported service kind `{other}` (expected telnet or http-basic)"
            ))),
        }
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parses `username:password` lines. Blank lines and `#` comments are skipped;
/// the password may be empty.
pub fn parse_credential_list(text: &str) -> Result<Vec<Credential>, ProbeError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i, line.trim_end_matches('\r')))
        .filter(|(_, line)| !line.trim().is_empty() && !line.trim_start().starts_with('#'))
        .map(|(i, line)| {
            line.split_once(':')
                .map(|(user, pass)| Credential::new(user, pass))
                .ok_or_else(|| ProbeError::Precondition(format!("line {}: expected `username:password`", i + 1)))
        })
        .collect()
}

/// The 20-pair list shipped with the probes.
pub fn bundled_credentials() -> Vec<Credential> {
    parse_credential_list(BUNDLED_LIST).expect("bundled credential list parses")
}

/// Tries every pair in order, throttled to [`MIN_ATTEMPT_INTERVAL`], and
/// reports the accepted ones.
pub fn default_credential_check(
    target: &ProbeTarget,
    kind: ServiceKind,
    credentials: &[Credential],
    io_timeout: Duration,
) -> Result<CredentialResultPayload, ProbeError> {
    target.validate()?;
    if credentials.is_empty() {
        return Err(ProbeError::Precondition("credential list is empty".into()));
    }
    let mut accepted = Vec::new();
    let mut last_start: Option<Instant> = None;
    for credential in credentials {
        if let Some(previous) = last_start {
            let due = previous + MIN_ATTEMPT_INTERVAL;
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        last_start = Some(Instant::now());
        let ok = match kind {
            ServiceKind::Telnet => telnet_attempt(target, credential, io_timeout)?,
            ServiceKind::HttpBasic => http_basic_attempt(target, credential, io_timeout)?,
        };
        tracing::debug!(host = %target.host, port = target.port, user = %credential.username, ok, "credential attempt");
        if ok {
            accepted.push(credential.clone());
        }
    }
    Ok(CredentialResultPayload {
        host: target.host.clone(),
        port: target.port,
        service_kind: kind.as_str().to_string(),
        attempted: credentials.len(),
        accepted,
    })
}

fn mismatch(target: &ProbeTarget, kind: ServiceKind) -> ProbeError {
    ProbeError::ServiceMismatch {
        host: target.host.clone(),
        port: target.port,
        expected: kind.as_str().to_string(),
    }
}

fn io_error(e: io::Error) -> ProbeError {
    ProbeError::Io(e.to_string())
}

const IAC: u8 = 255;
const SB: u8 = 250;
const SE: u8 = 240;
const WILL: u8 = 251;
const WONT: u8 = 252;
const DO: u8 = 253;
const DONT: u8 = 254;

/// Telnet client side of a login dialogue. Option negotiation is refused.
struct TelnetSession {
    stream: TcpStream,
    /// Lower-cased text received since the last `clear`.
    text: String,
    pending: Vec<u8>,
    closed: bool,
}

impl TelnetSession {
    fn new(stream: TcpStream) -> Self {
        Self {
            stream,
            text: String::new(),
            pending: Vec::new(),
            closed: false,
        }
    }

    /// Reads once, waiting at most `wait`. Returns `false` on timeout or close.
    fn read_some(&mut self, wait: Duration) -> Result<bool, ProbeError> {
        if self.closed || wait.is_zero() {
            return Ok(false);
        }
        self.stream.set_read_timeout(Some(wait)).map_err(io_error)?;
        let mut buf = [0u8; 512];
        match self.stream.read(&mut buf) {
            Ok(0) => {
                self.closed = true;
                Ok(false)
            }
            Ok(n) => {
                self.pending.extend_from_slice(&buf[..n]);
                self.absorb()?;
                Ok(true)
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(false),
            Err(e) if matches!(e.kind(), io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted) => {
                self.closed = true;
                Ok(false)
            }
            Err(e) => Err(io_error(e)),
        }
    }

    /// Moves decoded text from `pending` into `text`, answering negotiations.
    fn absorb(&mut self) -> Result<(), ProbeError> {
        let mut plain = Vec::new();
        let mut replies = Vec::new();
        let mut i = 0;
        while i < self.pending.len() {
            let byte = self.pending[i];
            if byte != IAC {
                plain.push(byte);
                i += 1;
                continue;
            }
            let Some(&command) = self.pending.get(i + 1) else { break };
            match command {
                IAC => {
                    plain.push(IAC);
                    i += 2;
                }
                WILL | WONT | DO | DONT => {
                    let Some(&option) = self.pending.get(i + 2) else { break };
                    match command {
                        DO => replies.extend_from_slice(&[IAC, WONT, option]),
                        WILL => replies.extend_from_slice(&[IAC, DONT, option]),
                        _ => {}
                    }
                    i += 3;
                }
                SB => match self.pending[i..].windows(2).position(|w| w == [IAC, SE]) {
                    Some(end) => i += end + 2,
                    None => break,
                },
                _ => i += 2,
            }
        }
        self.pending.drain(..i);
        if !replies.is_empty() {
            self.stream.write_all(&replies).map_err(io_error)?;
        }
        self.text.push_str(&String::from_utf8_lossy(&plain).to_lowercase());
        Ok(())
    }

    fn send_line(&mut self, line: &str) -> Result<(), ProbeError> {
        self.text.clear();
        self.stream.write_all(format!("{line}\r\n").as_bytes()).map_err(io_error)
    }

    /// Waits until the received text contains one of `patterns`.
    fn expect(&mut self, patterns: &[&str], timeout: Duration, nudge: bool) -> Result<bool, ProbeError> {
        let started = Instant::now();
        let deadline = started + timeout;
        let mut nudged = !nudge;
        loop {
            if patterns.iter().any(|p| self.text.contains(p)) {
                return Ok(true);
            }
            let now = Instant::now();
            if self.closed || now >= deadline {
                return Ok(false);
            }
            let mut wait = deadline - now;
            if !nudged {
                wait = wait.min((started + NUDGE_AFTER).saturating_duration_since(now));
            }
            if !self.read_some(wait)? && !nudged && Instant::now() >= started + NUDGE_AFTER {
                nudged = true;
                self.stream.write_all(b"\r\n").map_err(io_error)?;
            }
        }
    }

    /// Reads until the peer closes or falls silent.
    fn drain(&mut self, timeout: Duration) -> Result<(), ProbeError> {
        let deadline = Instant::now() + timeout;
        while !self.closed {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() || !self.read_some(IDLE_GAP.min(left))? {
                break;
            }
        }
        Ok(())
    }
}

fn telnet_attempt(target: &ProbeTarget, credential: &Credential, io_timeout: Duration) -> Result<bool, ProbeError> {
    let mut session = TelnetSession::new(target.connect(io_timeout)?);
    if !session.expect(&["login:", "username:"], io_timeout, true)? {
        return Err(mismatch(target, ServiceKind::Telnet));
    }
    session.send_line(&credential.username)?;
    if !session.expect(&["password:"], io_timeout, false)? {
        return Ok(false);
    }
    session.send_line(&credential.password)?;
    session.drain(io_timeout)?;
    let reply = session.text.trim_end();
    let rejected = FAILURE_MARKERS.iter().any(|m| reply.contains(m));
    let shell = reply.ends_with('#') || reply.ends_with('$') || reply.ends_with('>');
    if shell && !session.closed {
        let _ = session.send_line("exit");
    }
    Ok(shell && !rejected)
}

fn http_basic_attempt(target: &ProbeTarget, credential: &Credential, io_timeout: Duration) -> Result<bool, ProbeError> {
    let mut stream = target.connect(io_timeout)?;
    let token = BASE64.encode(format!("{}:{}", credential.username, credential.password));
    let request = format!(
        "GET / HTTP/1.0\r\nHost: {}\r\nAuthorization: Basic {token}\r\nConnection: close\r\n\r\n",
        target.host
    );
    stream.write_all(request.as_bytes()).map_err(io_error)?;
    let mut response = Vec::new();
    let mut buf = [0u8; 1024];
    while response.len() < 16 * 1024 {
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                response.extend_from_slice(&buf[..n]);
                if response.windows(4).any(|w| w == b"\r\n\r\n") {
                    break;
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => break,
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => break,
            Err(e) => return Err(io_error(e)),
        }
    }
    let head = String::from_utf8_lossy(&response);
    let status = head
        .strip_prefix("HTTP/")
        .and_then(|rest| rest.split_whitespace().nth(1))
        .and_then(|code| code.parse::<u16>().ok())
        .ok_or_else(|| mismatch(target, ServiceKind::HttpBasic))?;
    Ok((200..300).contains(&status))
}
