use std::io;
use std::net::{SocketAddr, TcpStream};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use iotsam_core::harness::PortListPayload;

use crate::error::ProbeError;
use crate::target::resolve;

enum Probe {
    Open,
    Closed,
    Unreachable(String),
}

fn probe(addr: SocketAddr, timeout: Duration) -> Probe {
    match TcpStream::connect_timeout(&addr, timeout) {
        Ok(_) => Probe::Open,
        Err(e) if matches!(e.kind(), io::ErrorKind::HostUnreachable | io::ErrorKind::NetworkUnreachable) => {
            Probe::Unreachable(e.to_string())
        }
        Err(_) => Probe::Closed,
    }
}

/// TCP connect scan of `first..=last`. Returns the sorted list of ports that
/// accepted a connection.
pub fn tcp_port_scan(
    host: &str,
    (first, last): (u16, u16),
    parallelism: usize,
    timeout: Duration,
) -> Result<PortListPayload, ProbeError> {
    if first == 0 || first > last {
        return Err(ProbeError::Precondition(format!("empty port range {first}-{last}")));
    }
    if parallelism == 0 || timeout.is_zero() {
        return Err(ProbeError::Precondition("parallelism and timeout must be positive".into()));
    }
    let base = resolve(host, first)?;
    let next = AtomicU32::new(u32::from(first));
    let open = Mutex::new(Vec::new());
    let unreachable = Mutex::new(None::<String>);
    let workers = parallelism.min(usize::from(last - first) + 1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let port = next.fetch_add(1, Ordering::Relaxed);
                if port > u32::from(last) {
                    break;
                }
                let port = port as u16;
                let mut addr = base;
                addr.set_port(port);
                match probe(addr, timeout) {
                    Probe::Open => open.lock().expect("scan lock").push(port),
                    Probe::Closed => {}
                    Probe::Unreachable(detail) => {
                        unreachable.lock().expect("scan lock").get_or_insert(detail);
                    }
                }
            });
        }
    });

    let mut ports = open.into_inner().expect("scan lock");
    if ports.is_empty() {
        if let Some(detail) = unreachable.into_inner().expect("scan lock") {
            return Err(ProbeError::HostUnreachable {
                host: host.to_string(),
                detail,
            });
        }
    }
    ports.sort_unstable();
    Ok(PortListPayload {
        host: host.to_string(),
        ports,
    })
}
