//! Network probes for automated IoT test cases.
//!
//! Four probes cover the network-level part of a baseline catalog: a TCP
//! port scan, a banner grab, a TLS posture check and a default credential
//! check against Telnet or HTTP basic authentication. [`verdict_map`] turns
//! their observations into PASS/FAIL for the bundled cases and
//! [`bundled_registry`] exposes everything as harness executors.
//!
//! [`mock::MockDevice`] serves configurable fake services on loopback so the
//! whole pipeline can run without hardware.

mod banner;
mod credentials;
mod error;
mod executors;
pub mod mock;
mod scan;
mod target;
mod tls;
mod verdict;

pub use banner::service_banner_grab;
pub use credentials::{
    bundled_credentials, default_credential_check, parse_credential_list, ServiceKind, MIN_ATTEMPT_INTERVAL,
};
pub use error::ProbeError;
pub use executors::{bundled_registry, register_bundled, CAPABILITIES};
pub use scan::tcp_port_scan;
pub use target::ProbeTarget;
pub use tls::{tls_posture_check, TlsPosture};
pub use verdict::{verdict_map, BUNDLED_CASES};
