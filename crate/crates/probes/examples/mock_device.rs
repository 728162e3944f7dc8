//! Serves a mock-device fixture until interrupted.
//!
//! `cargo run -p iotsam-probes --example mock_device -- fixtures/mock/smart-lock.mock.json [HOST]`

use iotsam_core::model::parse_document;
use iotsam_probes::mock::MockDevice;

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: mock_device FIXTURE.json [HOST]");
        std::process::exit(2);
    };
    let bytes = std::fs::read(&path).unwrap_or_else(|e| {
        eprintln!("{path}: {e}");
        std::process::exit(1)
    });
    let mock: MockDevice = parse_document(&bytes).unwrap_or_else(|e| {
        eprintln!("{path}: {e}");
        std::process::exit(1)
    });
    let host = args.next().unwrap_or_else(|| mock.host.clone());
    let _running = mock.start_on(&host).unwrap_or_else(|e| {
        eprintln!("cannot bind on {host}: {e}");
        std::process::exit(1)
    });
    let ports: Vec<String> = mock.services.iter().map(|s| s.port().to_string()).collect();
    println!("{} listening on {host} ports {}", mock.mock_id, ports.join(", "));
    loop {
        std::thread::park();
    }
}
