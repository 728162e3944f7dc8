mod support;

use std::collections::BTreeSet;
use std::time::Duration;

use iotsam_core::assessment::EffectiveOutcome;
use iotsam_core::{serialize_document, AssessmentResult, ProtocolOutcome};
use support::campaign;
use support::{http_get, iotsam, Server};

#[test]
fn scripted_fixture_campaign() {
    let ws = campaign::prepare();
    let first = campaign::run(&ws, "store-a");
    let second = campaign::run(&ws, "store-b");

    for c in [&first, &second] {
        assert_eq!(c.assess.code, 3, "{}", c.assess.describe());
        assert_eq!(c.report.overall.result, AssessmentResult::Insecure);
        assert!(c.elapsed < Duration::from_secs(60), "campaign took {:?}", c.elapsed);
        let failed: BTreeSet<&str> = c
            .report
            .cases
            .iter()
            .filter(|r| r.effective_outcome == EffectiveOutcome::Fail)
            .map(|r| r.case_id.as_str())
            .collect();
        assert_eq!(failed, BTreeSet::from(["TC-NET-001", "TC-NET-003", "TC-NET-004"]));
        assert_eq!(c.protocols.len(), 9);
        assert!(c
            .protocols
            .iter()
            .all(|p| matches!(p.outcome, ProtocolOutcome::Pass | ProtocolOutcome::Fail)));
    }
    assert_eq!(campaign::masked(&first.protocols), campaign::masked(&second.protocols));

    // Every machine-readable artifact re-validates.
    let out = iotsam(&[&"validate", &"--file", &ws.plan, &"--file", &first.report_path], "");
    assert_eq!(out.code, 0, "{}", out.describe());

    // The service serves the same bytes the command line wrote.
    let server = Server::start(&first.store);
    let (status, plan) = http_get(&server.addr, &format!("/api/v1/sessions/{}/plan", first.session_id));
    assert_eq!(status, 200);
    assert_eq!(plan, std::fs::read(&ws.plan).unwrap());
    let (status, report) = http_get(
        &server.addr,
        &format!("/api/v1/sessions/{}/report?format=machine", first.session_id),
    );
    assert_eq!(status, 200);
    assert_eq!(report, std::fs::read(&first.report_path).unwrap());
    assert_eq!(report, serialize_document(&first.report));
    let (status, text) = http_get(&server.addr, &format!("/api/v1/sessions/{}/report?format=text", first.session_id));
    assert_eq!(status, 200);
    let cli_text = iotsam(
        &[&"report", &"--store", &first.store, &"--session-id", &first.session_id],
        "",
    );
    assert_eq!(String::from_utf8(text).unwrap(), cli_text.stdout);
    let (status, _) = http_get(&server.addr, "/api/v1/sessions/S-unknown");
    assert_eq!(status, 404);
}
