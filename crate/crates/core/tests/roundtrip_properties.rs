//! parse∘serialize and serialize∘parse are identities for every document kind.

use iotsam_core::model::{parse_document, serialize_document, Document};
use iotsam_core::testing;
use iotsam_core::{assess, parse_any, render_report, TestPlan};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn both_laws<T: Document + PartialEq + std::fmt::Debug>(doc: &T) -> Result<(), TestCaseError> {
    let bytes = serialize_document(doc);
    let parsed: T = parse_document(&bytes).map_err(|e| TestCaseError::fail(format!("{}: {e}", T::KIND)))?;
    prop_assert_eq!(&parsed, doc);
    prop_assert_eq!(serialize_document(&parsed), bytes.clone());
    let any = parse_any(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(any.kind(), T::KIND);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_kind_round_trips(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        both_laws(&testing::device(&mut rng, 20))?;
        both_laws(&testing::profile(&mut rng))?;
        both_laws(&testing::catalog(&mut rng, 20))?;
        let scheme = testing::scheme(&mut rng);
        both_laws(&scheme)?;
        let (plan, protocols): (TestPlan, _) = testing::campaign(&mut rng, 20);
        both_laws(&plan)?;
        for p in &protocols {
            both_laws(p)?;
        }
        for entry in plan.manual_entries() {
            both_laws(&testing::manual_submission(&mut rng, entry))?;
        }
        let assessment = assess(&plan, &protocols, &scheme).unwrap();
        let (report, _) = render_report(&plan, &protocols, &assessment.verdicts, &assessment.overall).unwrap();
        both_laws(&report)?;
    }

    #[test]
    fn serialized_form_is_stable_under_reparse(seed in any::<u64>()) {
        // serialize(parse(bytes)) == bytes for canonical bytes.
        let mut rng = StdRng::seed_from_u64(seed);
        let bytes = serialize_document(&testing::catalog(&mut rng, 10));
        let again = serialize_document(&parse_document::<iotsam_core::TestCaseCatalog>(&bytes).unwrap());
        prop_assert_eq!(again, bytes);
    }
}
