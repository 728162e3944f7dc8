mod support;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use iotsam_core::harness::{Credential, TlsVersion};
use iotsam_core::model::{parse_document, serialize_document};
use iotsam_probes::mock::{MockDevice, MockService, SilentService, TelnetService};
use iotsam_probes::{
    bundled_credentials, default_credential_check, service_banner_grab, tcp_port_scan, tls_posture_check, ProbeTarget,
    ServiceKind, MIN_ATTEMPT_INTERVAL,
};
use support::{hardened, port_of, vulnerable};

const WAIT: Duration = Duration::from_secs(2);
const SCAN_TIMEOUT: Duration = Duration::from_millis(500);

fn mock_with(services: Vec<MockService>) -> MockDevice {
    MockDevice {
        mock_id: "adhoc".into(),
        host: "127.0.0.1".into(),
        services,
    }
}

fn silent(port: u16) -> MockService {
    MockService::Silent(SilentService { port })
}

#[test]
fn fixtures_are_canonical_documents() {
    for name in ["smart-lock.mock.json", "hardened.mock.json"] {
        let bytes = std::fs::read(support::fixture_path(&format!("mock/{name}"))).unwrap();
        let mock: MockDevice = parse_document(&bytes).unwrap();
        assert_eq!(serialize_document(&mock), bytes, "{name} is not in canonical form");
    }
}

#[test]
fn port_scan_reports_open_ports_inside_the_range() {
    let mock = mock_with(vec![silent(23), silent(80), silent(8883)]);
    let running = mock.start_isolated().unwrap();
    let list = tcp_port_scan(running.host(), (1, 1024), 64, SCAN_TIMEOUT).unwrap();
    let expected: Vec<u16> = mock.services.iter().map(MockService::port).filter(|p| (1..=1024).contains(p)).collect();
    assert_eq!(list.ports, expected);
    assert_eq!(list.ports, vec![23, 80]);
}

#[test]
fn port_scan_preconditions_and_empty_result() {
    let err = tcp_port_scan("127.0.0.1", (100, 90), 4, SCAN_TIMEOUT).unwrap_err();
    assert_eq!(err.code(), "PRECONDITION");
    let running = mock_with(vec![]).start_isolated().unwrap();
    assert!(tcp_port_scan(running.host(), (1, 64), 8, SCAN_TIMEOUT).unwrap().ports.is_empty());
    let err = tcp_port_scan("no-such-host.invalid", (1, 4), 4, SCAN_TIMEOUT).unwrap_err();
    assert_eq!(err.code(), "HOST_UNREACHABLE");
}

#[test]
fn banner_grab_cases() {
    let mock = mock_with(vec![
        MockService::Telnet(TelnetService {
            port: 23,
            banner: Some("BusyBox v1.19".into()),
            accepted_credentials: vec![],
        }),
        silent(8883),
    ]);
    let running = mock.start_isolated().unwrap();
    let banner = service_banner_grab(&ProbeTarget::new(running.host(), 23), WAIT).unwrap();
    assert_eq!(banner.banner, "BusyBox v1.19");
    assert!(banner.unprompted);

    let quiet = service_banner_grab(&ProbeTarget::new(running.host(), 8883), WAIT).unwrap();
    assert_eq!(quiet.banner, "");
    assert!(!quiet.unprompted);

    let err = service_banner_grab(&ProbeTarget::new(running.host(), 24), WAIT).unwrap_err();
    assert_eq!(err.code(), "CONNECTION_REFUSED");
}

#[test]
fn tls_posture_matches_fixture_configuration() {
    for mock in [vulnerable(), hardened()] {
        let running = mock.start_isolated().unwrap();
        for service in &mock.services {
            let MockService::Tls(config) = service else { continue };
            let posture = tls_posture_check(&ProbeTarget::new(running.host(), config.port), WAIT).unwrap();
            assert_eq!(posture.versions, config.versions, "{} port {}", mock.mock_id, config.port);
            assert_eq!(posture.self_signed, config.certificate.self_signed);
            assert_eq!(posture.certificate_expiry, Some(config.certificate.not_after));
        }
    }
}

#[test]
fn tls_examples() {
    let running = vulnerable().start_isolated().unwrap();
    let legacy = tls_posture_check(&ProbeTarget::new(running.host(), 443), WAIT).unwrap();
    assert_eq!(legacy.versions, BTreeSet::from([TlsVersion::Tls10]));
    assert!(legacy.self_signed);
    let err = tls_posture_check(&ProbeTarget::new(running.host(), 80), WAIT).unwrap_err();
    assert_eq!(err.code(), "NOT_TLS");

    let running = hardened().start_isolated().unwrap();
    let modern = tls_posture_check(&ProbeTarget::new(running.host(), 443), WAIT).unwrap();
    assert_eq!(modern.versions, BTreeSet::from([TlsVersion::Tls12, TlsVersion::Tls13]));
    assert!(!modern.self_signed);
}

#[test]
fn bundled_list_finds_the_fixture_default_login() {
    let mock = vulnerable();
    let MockService::Telnet(telnet) = &mock.services[0] else { panic!("telnet first") };
    let list = bundled_credentials();
    let expected: Vec<Credential> = list.iter().filter(|c| telnet.accepted_credentials.contains(c)).cloned().collect();

    let running = mock.start_isolated().unwrap();
    let started = Instant::now();
    let result = default_credential_check(&ProbeTarget::new(running.host(), telnet.port), ServiceKind::Telnet, &list, WAIT)
        .unwrap();
    assert_eq!(result.accepted, expected);
    assert_eq!(result.accepted, vec![Credential::new("admin", "admin")]);
    assert_eq!(result.attempted, 20);
    assert!(started.elapsed() >= MIN_ATTEMPT_INTERVAL * 19, "attempts were not throttled");
}

#[test]
fn credential_check_against_locked_down_and_foreign_services() {
    let short = vec![Credential::new("root", "root"), Credential::new("admin", "admin")];
    let running = hardened().start_isolated().unwrap();
    let telnet = port_of(&hardened(), |s| matches!(s, MockService::Telnet(_)));
    let result =
        default_credential_check(&ProbeTarget::new(running.host(), telnet), ServiceKind::Telnet, &short, WAIT).unwrap();
    assert!(result.accepted.is_empty());
    let result =
        default_credential_check(&ProbeTarget::new(running.host(), 80), ServiceKind::HttpBasic, &short, WAIT).unwrap();
    assert!(result.accepted.is_empty());

    let running = vulnerable().start_isolated().unwrap();
    let result =
        default_credential_check(&ProbeTarget::new(running.host(), 80), ServiceKind::HttpBasic, &short, WAIT).unwrap();
    assert_eq!(result.accepted, vec![Credential::new("admin", "admin")]);
    let err = default_credential_check(&ProbeTarget::new(running.host(), 23), ServiceKind::HttpBasic, &short, WAIT)
        .unwrap_err();
    assert_eq!(err.code(), "SERVICE_MISMATCH");
    let err = default_credential_check(&ProbeTarget::new(running.host(), 23), ServiceKind::Telnet, &[], WAIT).unwrap_err();
    assert_eq!(err.code(), "PRECONDITION");
}
