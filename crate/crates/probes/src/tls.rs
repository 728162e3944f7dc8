use std::collections::BTreeSet;
use std::time::Duration;

use chrono::{DateTime, Utc};
use iotsam_core::harness::{TlsPosturePayload, TlsVersion};
use openssl::asn1::{Asn1Time, Asn1TimeRef};
use openssl::ssl::{Ssl, SslContext, SslMethod, SslVerifyMode, SslVersion};
use openssl::x509::{X509Ref, X509VerifyResult};

use crate::error::ProbeError;
use crate::target::ProbeTarget;

/// Versions offered by a TLS service plus properties of its certificate.
pub type TlsPosture = TlsPosturePayload;

pub(crate) fn ssl_version(version: TlsVersion) -> SslVersion {
    match version {
        TlsVersion::Tls10 => SslVersion::TLS1,
        TlsVersion::Tls11 => SslVersion::TLS1_1,
        TlsVersion::Tls12 => SslVersion::TLS1_2,
        TlsVersion::Tls13 => SslVersion::TLS1_3,
    }
}

/// Legacy versions are only negotiable with security level 0.
pub(crate) const PERMISSIVE_CIPHERS: &str = "ALL:@SECLEVEL=0";

fn client_context(version: TlsVersion) -> Result<SslContext, openssl::error::ErrorStack> {
    let mut builder = SslContext::builder(SslMethod::tls_client())?;
    builder.set_verify(SslVerifyMode::NONE);
    builder.set_security_level(0);
    builder.set_cipher_list(PERMISSIVE_CIPHERS)?;
    builder.set_min_proto_version(Some(ssl_version(version)))?;
    builder.set_max_proto_version(Some(ssl_version(version)))?;
    Ok(builder.build())
}

struct Certificate {
    self_signed: bool,
    expiry: Option<DateTime<Utc>>,
}

fn asn1_to_utc(time: &Asn1TimeRef) -> Option<DateTime<Utc>> {
    let epoch = Asn1Time::from_unix(0).ok()?;
    let diff = epoch.diff(time).ok()?;
    DateTime::from_timestamp(i64::from(diff.days) * 86_400 + i64::from(diff.secs), 0)
}

fn inspect(cert: &X509Ref) -> Certificate {
    let issued_by_itself = cert.issued(cert) == X509VerifyResult::OK;
    let self_signed = issued_by_itself && cert.public_key().and_then(|key| cert.verify(&key)).unwrap_or(false);
    Certificate {
        self_signed,
        expiry: asn1_to_utc(cert.not_after()),
    }
}

enum Attempt {
    Accepted(Option<Certificate>),
    Rejected,
}

fn attempt(target: &ProbeTarget, version: TlsVersion, io_timeout: Duration) -> Result<Attempt, ProbeError> {
    let stream = target.connect(io_timeout)?;
    let context = client_context(version).map_err(|e| ProbeError::Io(e.to_string()))?;
    let mut ssl = Ssl::new(&context).map_err(|e| ProbeError::Io(e.to_string()))?;
    if target.host.parse::<std::net::IpAddr>().is_err() {
        ssl.set_hostname(&target.host).map_err(|e| ProbeError::Io(e.to_string()))?;
    }
    match ssl.connect(stream) {
        Ok(mut session) => {
            let certificate = session.ssl().peer_certificate().map(|c| inspect(&c));
            let _ = session.shutdown();
            Ok(Attempt::Accepted(certificate))
        }
        Err(_) => Ok(Attempt::Rejected),
    }
}

/// One handshake per protocol version, each pinned to exactly that version.
pub fn tls_posture_check(target: &ProbeTarget, io_timeout: Duration) -> Result<TlsPosture, ProbeError> {
    target.validate()?;
    let mut versions = BTreeSet::new();
    let mut certificate = None;
    for version in TlsVersion::ALL {
        if let Attempt::Accepted(cert) = attempt(target, version, io_timeout)? {
            versions.insert(version);
            // Prefer the certificate served on the newest version.
            if cert.is_some() {
                certificate = cert;
            }
        }
    }
    if versions.is_empty() {
        return Err(ProbeError::NotTls {
            host: target.host.clone(),
            port: target.port,
        });
    }
    Ok(TlsPosture {
        host: target.host.clone(),
        port: target.port,
        versions,
        self_signed: certificate.as_ref().is_some_and(|c| c.self_signed),
        certificate_expiry: certificate.and_then(|c| c.expiry),
    })
}
