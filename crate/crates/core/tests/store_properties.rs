use std::fs;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use iotsam_core::store::{AssessmentRecord, CampaignStore, SessionState};
use iotsam_core::testing;
use iotsam_core::{assess, filter_catalog_with, render_report};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

/// Creates a session from random documents and drives it to ASSESSED.
fn campaign(store: &CampaignStore, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let catalog = testing::catalog(&mut rng, 30);
    let device = testing::device(&mut rng, 6);
    let profile = testing::profile(&mut rng);
    let at = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let plan = filter_catalog_with(&catalog, &device, &profile, format!("PLAN-{seed}"), at).unwrap();
    let id = store.create_session(&device, &profile, &catalog, &plan).unwrap();
    store.begin_execution(&id).unwrap();
    let protocols: Vec<_> = plan
        .entries
        .iter()
        .map(|e| testing::protocol_for(&mut rng, &plan.plan_id, e))
        .collect();
    for p in &protocols {
        let session = store.append_protocol(&id, p).unwrap();
        assert_eq!(session, store.load_session(&id).unwrap());
    }
    let scheme = testing::scheme(&mut rng);
    let a = assess(&plan, &protocols, &scheme).unwrap();
    let (report, _) = render_report(&plan, &protocols, &a.verdicts, &a.overall).unwrap();
    let closed = store.record_assessment(&id, &AssessmentRecord { scheme, report }).unwrap();
    assert_eq!(closed.state, SessionState::Assessed);
    id
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn every_log_prefix_replays(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let store = CampaignStore::open(dir.path()).unwrap();
        let id = campaign(&store, seed);
        let full = store.load_session(&id).unwrap();
        let n = full.records.len();
        let mut later_state = full.state;
        // Remove records from the end, one at a time, as a crash would leave them.
        for keep in (4..n).rev() {
            let path = store.record_path(&id, keep as u64 + 1).unwrap().unwrap();
            fs::remove_file(path).unwrap();
            let session = store.load_session(&id).unwrap();
            prop_assert_eq!(session.records.len(), keep);
            // Shorter prefixes never show a later state.
            prop_assert!(session.state <= later_state);
            later_state = session.state;
        }
        prop_assert_eq!(store.load_session(&id).unwrap().state, SessionState::Planned);
        // Fewer than the four creation records is not a session.
        let path = store.record_path(&id, 4).unwrap().unwrap();
        fs::remove_file(path).unwrap();
        prop_assert_eq!(store.load_session(&id).unwrap_err().code(), "CORRUPT_LOG");
    }

    #[test]
    fn reload_after_save_is_identity(seed in any::<u64>()) {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let source = CampaignStore::open(a.path()).unwrap();
        let target = CampaignStore::open(b.path()).unwrap();
        let id = campaign(&source, seed);
        let loaded = source.load_session(&id).unwrap();
        target.save_session(&loaded).unwrap();
        prop_assert_eq!(target.load_session(&id).unwrap(), loaded);
    }
}

#[test]
fn concurrent_duplicate_appends_admit_exactly_one() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(CampaignStore::open(dir.path()).unwrap());
    let mut rng = StdRng::seed_from_u64(11);
    let (catalog, device, profile, plan) = loop {
        let catalog = testing::catalog(&mut rng, 40);
        let device = testing::device(&mut rng, 8);
        let profile = testing::profile(&mut rng);
        let at = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
        let plan = filter_catalog_with(&catalog, &device, &profile, "PLAN-C".into(), at).unwrap();
        if !plan.entries.is_empty() {
            break (catalog, device, profile, plan);
        }
    };
    let id = store.create_session(&device, &profile, &catalog, &plan).unwrap();
    store.begin_execution(&id).unwrap();
    let protocol = testing::protocol_for(&mut rng, &plan.plan_id, &plan.entries[0]);
    let results: Vec<_> = (0..8)
        .map(|_| {
            let store = Arc::clone(&store);
            let id = id.clone();
            let protocol = protocol.clone();
            std::thread::spawn(move || store.append_protocol(&id, &protocol).map(|_| ()))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|h| h.join().unwrap())
        .collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    for err in results.into_iter().filter_map(Result::err) {
        assert_eq!(err.code(), "DUPLICATE_ENTRY");
    }
    assert_eq!(store.load_session(&id).unwrap().protocols.len(), 1);
}

#[test]
fn concurrent_begin_execution_writes_one_transition() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(CampaignStore::open(dir.path()).unwrap());
    let mut rng = StdRng::seed_from_u64(12);
    let catalog = testing::catalog(&mut rng, 20);
    let device = testing::device(&mut rng, 6);
    let profile = testing::profile(&mut rng);
    let at = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let plan = filter_catalog_with(&catalog, &device, &profile, "PLAN-B".into(), at).unwrap();
    let id = store.create_session(&device, &profile, &catalog, &plan).unwrap();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let store = Arc::clone(&store);
            let id = id.clone();
            std::thread::spawn(move || store.begin_execution(&id).map(|s| s.state))
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap().unwrap(), SessionState::Executing);
    }
    // Four creation records plus a single state change.
    assert_eq!(store.load_session(&id).unwrap().records.len(), 5);
}
