//! Fake network services for exercising the probes without hardware.
//!
//! A [`MockDevice`] document lists services by port. [`MockDevice::start`]
//! binds all of them on the configured host and serves each connection on
//! its own thread until the returned [`RunningMock`] is dropped.

use std::collections::{BTreeSet, HashSet};
use std::hash::{BuildHasher, Hasher};
use std::io::{self, Read, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use chrono::{DateTime, Utc};
use iotsam_core::harness::{Credential, TlsVersion};
use iotsam_core::model::{AttributeValue, DeviceModel, Document, DocumentError};
use openssl::asn1::Asn1Time;
use openssl::bn::BigNum;
use openssl::ec::{EcGroup, EcKey};
use openssl::error::ErrorStack;
use openssl::hash::MessageDigest;
use openssl::nid::Nid;
use openssl::pkey::{PKey, Private};
use openssl::ssl::{Ssl, SslContext, SslMethod, SslOptions};
use openssl::x509::extension::BasicConstraints;
use openssl::x509::{X509Name, X509};
use serde::{Deserialize, Serialize};

use crate::tls::{ssl_version, PERMISSIVE_CIPHERS};

const CONNECTION_TIMEOUT: Duration = Duration::from_secs(5);
const ACCEPT_POLL: Duration = Duration::from_millis(5);

fn default_host() -> String {
    "127.0.0.1".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TelnetService {
    pub port: u16,
    /// Sent on connect; the login prompt follows the client's first input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub banner: Option<String>,
    #[serde(default)]
    pub accepted_credentials: Vec<Credential>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct HttpBasicService {
    pub port: u16,
    pub realm: String,
    #[serde(default)]
    pub accepted_credentials: Vec<Credential>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CertificateSpec {
    pub common_name: String,
    /// `false` issues the certificate from a throwaway test CA.
    pub self_signed: bool,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TlsService {
    pub port: u16,
    pub versions: BTreeSet<TlsVersion>,
    pub certificate: CertificateSpec,
}

/// Accepts connections and never sends anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SilentService {
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MockService {
    Telnet(TelnetService),
    HttpBasic(HttpBasicService),
    Tls(TlsService),
    Silent(SilentService),
}

impl MockService {
    pub fn port(&self) -> u16 {
        match self {
            Self::Telnet(s) => s.port,
            Self::HttpBasic(s) => s.port,
            Self::Tls(s) => s.port,
            Self::Silent(s) => s.port,
        }
    }
}

/// Configuration of a fake device: which ports are open and how they behave.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MockDevice {
    pub mock_id: String,
    #[serde(default = "default_host")]
    pub host: String,
    pub services: Vec<MockService>,
}

impl Document for MockDevice {
    const KIND: &'static str = "mock-device";

    fn validate(&self) -> Result<(), DocumentError> {
        if self.mock_id.trim().is_empty() {
            return Err(DocumentError::invariant("non-empty-id", "$.mock-id", "identifier must not be empty"));
        }
        if self.host.parse::<IpAddr>().is_err() {
            return Err(DocumentError::invariant("ip-literal-host", "$.host", "host must be an IP literal"));
        }
        let mut ports = HashSet::new();
        for (i, service) in self.services.iter().enumerate() {
            let path = format!("$.services[{i}]");
            if service.port() == 0 || !ports.insert(service.port()) {
                return Err(DocumentError::invariant(
                    "unique-port",
                    format!("{path}.port"),
                    format!("port {} is zero or used twice", service.port()),
                ));
            }
            if let MockService::Tls(tls) = service {
                if tls.versions.is_empty() {
                    return Err(DocumentError::invariant(
                        "non-empty-versions",
                        format!("{path}.versions"),
                        "a TLS service needs at least one version",
                    ));
                }
                if tls.certificate.not_after <= tls.certificate.not_before {
                    return Err(DocumentError::invariant(
                        "certificate-validity",
                        format!("{path}.certificate.not-after"),
                        "not-after must be later than not-before",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Services of a started [`MockDevice`]. Dropping it stops the listeners.
pub struct RunningMock {
    host: String,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl RunningMock {
    pub fn host(&self) -> &str {
        &self.host
    }
}

impl Drop for RunningMock {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for handle in self.threads.drain(..) {
            let _ = handle.join();
        }
    }
}

impl MockDevice {
    /// Binds every service on `self.host`.
    pub fn start(&self) -> io::Result<RunningMock> {
        self.start_on(&self.host)
    }

    pub fn start_on(&self, host: &str) -> io::Result<RunningMock> {
        let ip: IpAddr = host
            .parse()
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, format!("`{host}` is not an IP literal")))?;
        let mut bound = Vec::with_capacity(self.services.len());
        for service in &self.services {
            let listener = TcpListener::bind(SocketAddr::new(ip, service.port()))?;
            listener.set_nonblocking(true)?;
            let handler = Handler::prepare(service).map_err(io::Error::other)?;
            bound.push((listener, Arc::new(handler)));
        }
        let stop = Arc::new(AtomicBool::new(false));
        let threads = bound
            .into_iter()
            .map(|(listener, handler)| {
                let stop = Arc::clone(&stop);
                thread::spawn(move || accept_loop(listener, handler, stop))
            })
            .collect();
        tracing::debug!(mock = %self.mock_id, host, "mock device listening");
        Ok(RunningMock {
            host: host.to_string(),
            stop,
            threads,
        })
    }

    /// Starts on a fresh `127.x.y.z` address so concurrent mocks do not share ports.
    pub fn start_isolated(&self) -> io::Result<RunningMock> {
        let mut last_error = None;
        for _ in 0..32 {
            let host = fresh_loopback().to_string();
            match self.start_on(&host) {
                Ok(running) => return Ok(running),
                Err(e) if e.kind() == io::ErrorKind::AddrInUse => last_error = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_error.unwrap_or_else(|| io::Error::other("no free loopback address")))
    }
}

fn fresh_loopback() -> Ipv4Addr {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let mut hasher = std::hash::RandomState::new().build_hasher();
    hasher.write_u32(std::process::id());
    hasher.write_u64(COUNTER.fetch_add(1, Ordering::Relaxed));
    let bits = hasher.finish();
    let [_, b, c, d, ..] = bits.to_le_bytes();
    // Stay clear of 127.0.0.0/16 and of .0/.255 host octets.
    Ipv4Addr::new(127, b.clamp(1, 254), c, d.clamp(1, 254))
}

/// Copy of `device` whose `host` attributes and `management-host` metadata point at `host`.
pub fn retarget(device: &DeviceModel, host: &str) -> DeviceModel {
    let mut device = device.clone();
    for component in &mut device.components {
        if let Some(value) = component.attributes.get_mut("host") {
            *value = AttributeValue::Text(host.to_string());
        }
    }
    if let Some(value) = device.metadata.get_mut("management-host") {
        *value = host.to_string();
    }
    device
}

fn accept_loop(listener: TcpListener, handler: Arc<Handler>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let handler = Arc::clone(&handler);
                thread::spawn(move || {
                    if stream.set_nonblocking(false).is_ok()
                        && stream.set_read_timeout(Some(CONNECTION_TIMEOUT)).is_ok()
                        && stream.set_write_timeout(Some(CONNECTION_TIMEOUT)).is_ok()
                    {
                        handler.serve(stream);
                    }
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => {
                tracing::warn!(error = %e, "mock accept failed");
                thread::sleep(ACCEPT_POLL);
            }
        }
    }
}

enum Handler {
    Telnet(TelnetService),
    HttpBasic(HttpBasicService),
    Tls(SslContext),
    Silent,
}

impl Handler {
    fn prepare(service: &MockService) -> Result<Self, ErrorStack> {
        Ok(match service {
            MockService::Telnet(s) => Self::Telnet(s.clone()),
            MockService::HttpBasic(s) => Self::HttpBasic(s.clone()),
            MockService::Tls(s) => Self::Tls(server_context(s)?),
            MockService::Silent(_) => Self::Silent,
        })
    }

    fn serve(&self, stream: TcpStream) {
        let result = match self {
            Self::Telnet(config) => serve_telnet(config, stream),
            Self::HttpBasic(config) => serve_http(config, stream),
            Self::Tls(context) => serve_tls(context, stream),
            Self::Silent => drain(stream),
        };
        if let Err(e) = result {
            tracing::trace!(error = %e, "mock connection ended");
        }
    }
}

fn drain(mut stream: TcpStream) -> io::Result<()> {
    let mut buf = [0u8; 512];
    while stream.read(&mut buf)? > 0 {}
    Ok(())
}

/// Reads one line, dropping Telnet command sequences and the line terminator.
fn read_line(stream: &mut TcpStream) -> io::Result<Option<String>> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if stream.read(&mut byte)? == 0 {
            return Ok(None);
        }
        match byte[0] {
            b'\n' => break,
            b'\r' | 0 => {}
            255 => {
                let mut command = [0u8; 2];
                stream.read_exact(&mut command)?;
            }
            b => line.push(b),
        }
    }
    Ok(Some(String::from_utf8_lossy(&line).into_owned()))
}

fn serve_telnet(config: &TelnetService, mut stream: TcpStream) -> io::Result<()> {
    if let Some(banner) = &config.banner {
        stream.write_all(format!("{banner}\r\n").as_bytes())?;
    }
    if read_line(&mut stream)?.is_none() {
        return Ok(());
    }
    stream.write_all(b"login: ")?;
    let Some(username) = read_line(&mut stream)? else { return Ok(()) };
    stream.write_all(b"Password: ")?;
    let Some(password) = read_line(&mut stream)? else { return Ok(()) };
    if config.accepted_credentials.contains(&Credential::new(username, password)) {
        stream.write_all(b"\r\n\r\nBusyBox built-in shell (ash)\r\n# ")?;
        let _ = read_line(&mut stream)?;
    } else {
        stream.write_all(b"\r\nLogin incorrect\r\n")?;
    }
    Ok(())
}

fn serve_http(config: &HttpBasicService, mut stream: TcpStream) -> io::Result<()> {
    let mut request = Vec::new();
    let mut buf = [0u8; 1024];
    while !request.windows(4).any(|w| w == b"\r\n\r\n") && request.len() < 8 * 1024 {
        let n = stream.read(&mut buf)?;
        if n == 0 {
            break;
        }
        request.extend_from_slice(&buf[..n]);
        if !request[0].is_ascii_uppercase() {
            break;
        }
    }
    let text = String::from_utf8_lossy(&request);
    let response = if !text.starts_with(|c: char| c.is_ascii_uppercase()) || !text.contains(" HTTP/1.") {
        "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_string()
    } else if basic_credential(&text).is_some_and(|c| config.accepted_credentials.contains(&c)) {
        "HTTP/1.1 200 OK\r\nContent-Type: text/plain\r\nContent-Length: 3\r\nConnection: close\r\n\r\nok\n".to_string()
    } else {
        format!(
            "HTTP/1.1 401 Unauthorized\r\nWWW-Authenticate: Basic realm=\"{}\"\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
            config.realm
        )
    };
    stream.write_all(response.as_bytes())?;
    stream.flush()
}

fn basic_credential(request: &str) -> Option<Credential> {
    let value = request.lines().find_map(|line| {
        let (name, value) = line.split_once(':')?;
        name.trim().eq_ignore_ascii_case("authorization").then(|| value.trim())
    })?;
    let token = value.strip_prefix("Basic ").or_else(|| value.strip_prefix("basic "))?;
    let decoded = String::from_utf8(BASE64.decode(token.trim()).ok()?).ok()?;
    let (user, pass) = decoded.split_once(':')?;
    Some(Credential::new(user, pass))
}

fn serve_tls(context: &SslContext, stream: TcpStream) -> io::Result<()> {
    let ssl = Ssl::new(context).map_err(io::Error::other)?;
    let Ok(mut session) = ssl.accept(stream) else { return Ok(()) };
    let mut buf = [0u8; 512];
    while matches!(session.read(&mut buf), Ok(n) if n > 0) {}
    let _ = session.shutdown();
    Ok(())
}

fn ec_key() -> Result<PKey<Private>, ErrorStack> {
    let group = EcGroup::from_curve_name(Nid::X9_62_PRIME256V1)?;
    PKey::from_ec_key(EcKey::generate(&group)?)
}

fn asn1_time(at: DateTime<Utc>) -> Result<Asn1Time, ErrorStack> {
    Asn1Time::from_unix(at.timestamp())
}

fn build_certificate(
    common_name: &str,
    spec: &CertificateSpec,
    key: &PKey<Private>,
    issuer: Option<(&X509, &PKey<Private>)>,
    is_ca: bool,
) -> Result<X509, ErrorStack> {
    let mut name = X509Name::builder()?;
    name.append_entry_by_nid(Nid::COMMONNAME, common_name)?;
    let name = name.build();
    let mut builder = X509::builder()?;
    builder.set_version(2)?;
    let serial = BigNum::from_u32(if is_ca { 1 } else { 2 })?.to_asn1_integer()?;
    builder.set_serial_number(&serial)?;
    builder.set_subject_name(&name)?;
    builder.set_pubkey(key)?;
    let (not_before, not_after) = (asn1_time(spec.not_before)?, asn1_time(spec.not_after)?);
    builder.set_not_before(&not_before)?;
    builder.set_not_after(&not_after)?;
    if is_ca {
        builder.append_extension(BasicConstraints::new().critical().ca().build()?)?;
    }
    match issuer {
        Some((ca, ca_key)) => {
            builder.set_issuer_name(ca.subject_name())?;
            builder.sign(ca_key, MessageDigest::sha256())?;
        }
        None => {
            builder.set_issuer_name(&name)?;
            builder.sign(key, MessageDigest::sha256())?;
        }
    }
    Ok(builder.build())
}

fn server_context(service: &TlsService) -> Result<SslContext, ErrorStack> {
    let spec = &service.certificate;
    let key = ec_key()?;
    let mut builder = SslContext::builder(SslMethod::tls_server())?;
    builder.set_security_level(0);
    builder.set_cipher_list(PERMISSIVE_CIPHERS)?;
    let lowest = *service.versions.first().expect("validated non-empty");
    let highest = *service.versions.last().expect("validated non-empty");
    builder.set_min_proto_version(Some(ssl_version(lowest)))?;
    builder.set_max_proto_version(Some(ssl_version(highest)))?;
    for (version, option) in [
        (TlsVersion::Tls10, SslOptions::NO_TLSV1),
        (TlsVersion::Tls11, SslOptions::NO_TLSV1_1),
        (TlsVersion::Tls12, SslOptions::NO_TLSV1_2),
        (TlsVersion::Tls13, SslOptions::NO_TLSV1_3),
    ] {
        if !service.versions.contains(&version) {
            builder.set_options(option);
        }
    }
    if spec.self_signed {
        let leaf = build_certificate(&spec.common_name, spec, &key, None, false)?;
        builder.set_certificate(&leaf)?;
    } else {
        let ca_key = ec_key()?;
        let ca = build_certificate(&format!("{} Test CA", spec.common_name), spec, &ca_key, None, true)?;
        let leaf = build_certificate(&spec.common_name, spec, &key, Some((&ca, &ca_key)), false)?;
        builder.set_certificate(&leaf)?;
        builder.add_extra_chain_cert(ca)?;
    }
    builder.set_private_key(&key)?;
    builder.check_private_key()?;
    Ok(builder.build())
}
