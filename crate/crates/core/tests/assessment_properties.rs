use iotsam_core::assessment::{aggregate, evaluate, AssessmentResult, EffectiveOutcome, RULE_CRITICAL};
use iotsam_core::model::{AssessmentScheme, InconclusivePolicy, Severity};
use iotsam_core::testing;
use iotsam_core::ProtocolOutcome;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

/// Reference rule: INSECURE iff any CRITICAL FAIL or a tier's FAIL count exceeds its threshold.
fn expected(verdicts: &[iotsam_core::CaseVerdict], scheme: &AssessmentScheme) -> AssessmentResult {
    let fails = |s: Severity| {
        verdicts
            .iter()
            .filter(|v| v.severity == s && v.effective_outcome == EffectiveOutcome::Fail)
            .count() as u32
    };
    if fails(Severity::Critical) > 0
        || fails(Severity::Major) > scheme.major_fail_threshold
        || fails(Severity::Minor) > scheme.minor_fail_threshold
    {
        AssessmentResult::Insecure
    } else {
        AssessmentResult::Secure
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn aggregation_matches_rule_and_ignores_order(seed in any::<u64>(), n in 0usize..40) {
        let mut rng = StdRng::seed_from_u64(seed);
        let scheme = testing::scheme(&mut rng);
        let mut verdicts = testing::verdicts(&mut rng, "P", n, scheme.inconclusive_policy);
        let overall = aggregate("P", &verdicts, &scheme).unwrap();
        prop_assert_eq!(overall.result, expected(&verdicts, &scheme));
        prop_assert_eq!(overall.recompute(&scheme), overall.result);
        verdicts.shuffle(&mut rng);
        let shuffled = aggregate("P", &verdicts, &scheme).unwrap();
        prop_assert_eq!(shuffled.result, overall.result);
        prop_assert_eq!(shuffled.counts, overall.counts);
    }

    #[test]
    fn critical_failure_dominates(seed in any::<u64>(), n in 0usize..30) {
        let mut rng = StdRng::seed_from_u64(seed);
        let scheme = testing::scheme(&mut rng);
        let mut verdicts = testing::verdicts(&mut rng, "P", n, scheme.inconclusive_policy);
        let mut critical = testing::verdicts(&mut rng, "P", 1, scheme.inconclusive_policy).remove(0);
        critical.plan_entry_id = "CRIT@c".into();
        critical.severity = Severity::Critical;
        critical.recorded_outcome = ProtocolOutcome::Fail;
        critical.effective_outcome = EffectiveOutcome::Fail;
        verdicts.push(critical);
        let overall = aggregate("P", &verdicts, &scheme).unwrap();
        prop_assert_eq!(overall.result, AssessmentResult::Insecure);
        prop_assert!(overall.triggered_rules.iter().any(|r| r.rule == RULE_CRITICAL));
    }

    #[test]
    fn pass_to_fail_never_secures(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = StdRng::seed_from_u64(seed);
        let scheme = testing::scheme(&mut rng);
        let verdicts = testing::verdicts(&mut rng, "P", n, scheme.inconclusive_policy);
        let before = aggregate("P", &verdicts, &scheme).unwrap().result;
        for i in 0..verdicts.len() {
            if verdicts[i].effective_outcome != EffectiveOutcome::Pass {
                continue;
            }
            let mut flipped = verdicts.clone();
            flipped[i].recorded_outcome = ProtocolOutcome::Fail;
            flipped[i].effective_outcome = EffectiveOutcome::Fail;
            let after = aggregate("P", &flipped, &scheme).unwrap().result;
            prop_assert!(!(before == AssessmentResult::Insecure && after == AssessmentResult::Secure));
        }
    }

    #[test]
    fn thresholds_are_exact(major in 0u32..=10, minor in 0u32..=10, tier_is_major: bool) {
        let scheme = AssessmentScheme::new("s", major, minor, InconclusivePolicy::TreatAsFail);
        let (severity, threshold) = if tier_is_major { (Severity::Major, major) } else { (Severity::Minor, minor) };
        let fails = |k: u32| {
            let mut counts = iotsam_core::assessment::VerdictCounts::default();
            counts.0.iter_mut().find(|t| t.severity == severity).unwrap().fail = k;
            evaluate(&counts, &scheme).0
        };
        prop_assert_eq!(fails(threshold), AssessmentResult::Secure);
        prop_assert_eq!(fails(threshold + 1), AssessmentResult::Insecure);
    }
}
