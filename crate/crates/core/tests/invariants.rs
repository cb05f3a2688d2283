use proptest::prelude::*;

use shardcalc::failure::{delta_exact_binomial, delta_exact_hypergeometric, theorem1_bounds};
use shardcalc::probcore::{binomial_tail_and_cdf, kl_divergence, stable_complement_product};
use shardcalc::{AdversaryModel, CommitteeLayout, FailureQuery, LogProb, Rate};

fn rate() -> impl Strategy<Value = Rate> {
    (1u64..1000).prop_map(|n| Rate::ratio(n, 1000).unwrap())
}

fn layout() -> impl Strategy<Value = CommitteeLayout> {
    prop::collection::vec(1u64..40, 1..6).prop_map(|s| CommitteeLayout::new(s).unwrap())
}

proptest! {
    #[test]
    fn kl_is_non_negative(q in rate(), p in rate()) {
        let d = kl_divergence(q, p);
        prop_assert!(d >= 0.0);
        if q == p {
            prop_assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn binomial_cdf_is_monotone_and_complementary(n in 1u64..200, p in rate()) {
        let mut last = f64::NEG_INFINITY;
        for k in 0..=n {
            let (cdf, tail) = binomial_tail_and_cdf(n, p, k).unwrap();
            prop_assert!(cdf.ln() >= last - 1e-12);
            last = cdf.ln();
            prop_assert!((cdf.prob() + tail.prob() - 1.0).abs() < 1e-12);
        }
        prop_assert!(last.abs() < 1e-12);
    }

    #[test]
    fn complement_product_matches_naive(ps in prop::collection::vec(0.0f64..0.9, 1..20)) {
        let logs: Vec<LogProb> = ps.iter().map(|&p| LogProb::from_prob(p).unwrap()).collect();
        let naive = 1.0 - ps.iter().map(|p| 1.0 - p).product::<f64>();
        prop_assert!((stable_complement_product(&logs).prob() - naive).abs() < 1e-12);
    }

    #[test]
    fn exact_deltas_are_probabilities(layout in layout(), p in rate(), m in 0u64..200) {
        let a = Rate::ratio(1, 3).unwrap();
        let avg = FailureQuery::new(layout.clone(), AdversaryModel::uniform(p), a).unwrap();
        let d = delta_exact_binomial(&avg).unwrap().delta();
        prop_assert!((0.0..=1.0).contains(&d));
        let m = m.min(layout.total());
        let exact = FailureQuery::new(layout, AdversaryModel::Exact { count: m }, a).unwrap();
        let d = delta_exact_hypergeometric(&exact).unwrap().delta();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn more_adversaries_never_help(layout in layout(), m in 0u64..199) {
        let a = Rate::ratio(1, 3).unwrap();
        let m = m.min(layout.total().saturating_sub(1));
        let at = |count| {
            let q = FailureQuery::new(layout.clone(), AdversaryModel::Exact { count }, a).unwrap();
            delta_exact_hypergeometric(&q).unwrap().delta()
        };
        prop_assert!(at(m) <= at(m + 1) + 1e-12);
    }

    #[test]
    fn theorem1_lower_never_exceeds_exact(layout in layout(), p in rate()) {
        let a = Rate::ratio(1, 3).unwrap();
        let q = FailureQuery::new(layout, AdversaryModel::uniform(p), a).unwrap();
        let exact = delta_exact_binomial(&q).unwrap().delta();
        let b = theorem1_bounds(&q).unwrap();
        prop_assert!(b.lower.delta() <= exact * (1.0 + 1e-12) + 1e-300);
        prop_assert!(exact <= b.upper_ferrante.delta() * (1.0 + 1e-12) + 1e-300);
    }
}
