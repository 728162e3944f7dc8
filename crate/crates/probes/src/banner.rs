use std::io::{self, Read};
use std::time::Duration;

use iotsam_core::harness::BannerPayload;

use crate::error::ProbeError;
use crate::target::ProbeTarget;

pub const MAX_BANNER_BYTES: usize = 1024;
/// Silence after the first received bytes that ends the banner.
const IDLE_GAP: Duration = Duration::from_millis(300);

/// Reads what the service sends without being asked. Nothing is written to
/// the connection, so a silent service yields an empty banner.
pub fn service_banner_grab(target: &ProbeTarget, wait: Duration) -> Result<BannerPayload, ProbeError> {
    if wait.is_zero() {
        return Err(ProbeError::Precondition("banner wait must be positive".into()));
    }
    let mut stream = target.connect(wait)?;
    let mut received = Vec::with_capacity(MAX_BANNER_BYTES);
    let mut buf = [0u8; MAX_BANNER_BYTES];
    while received.len() < MAX_BANNER_BYTES {
        match stream.read(&mut buf[..MAX_BANNER_BYTES - received.len()]) {
            Ok(0) => break,
            Ok(n) => {
                received.extend_from_slice(&buf[..n]);
                stream
                    .set_read_timeout(Some(IDLE_GAP.min(wait)))
                    .map_err(|e| ProbeError::Io(e.to_string()))?;
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => break,
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => break,
            Err(e) => return Err(ProbeError::Io(e.to_string())),
        }
    }
    Ok(BannerPayload {
        host: target.host.clone(),
        port: target.port,
        banner: String::from_utf8_lossy(&received).trim_end().to_string(),
        byte_count: received.len(),
        unprompted: !received.is_empty(),
    })
}
