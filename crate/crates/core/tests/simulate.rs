use shardcalc::failure::delta_exact_binomial;
use shardcalc::simulate::{
    estimate_delta, sample_counts_exact, sample_rng, AverageSampler, ExactSampler, SimulationPlan,
};
use shardcalc::{AdversaryModel, AverageRates, CommitteeLayout, FailureQuery, Rate};

/// `|observed - expected| <= 4 sigma` for every bin.
fn assert_frequencies(observed: &[u64], expected: &[f64], draws: u64) {
    let n = draws as f64;
    for (bin, (&o, &p)) in observed.iter().zip(expected).enumerate() {
        let sigma = (n * p * (1.0 - p)).sqrt();
        let diff = (o as f64 - n * p).abs();
        assert!(diff <= 4.0 * sigma.max(1e-9), "bin {bin}: observed {o}, expected {}", n * p);
    }
}

fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    let c: f64 = (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product();
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

#[test]
fn average_sampler_matches_binomial() {
    let layout = CommitteeLayout::new(vec![5, 5]).unwrap();
    let sampler = AverageSampler::new(&layout, &AverageRates::Uniform(Rate::new(0.25).unwrap())).unwrap();
    let draws = 1_000_000;
    let mut hist = [[0u64; 6]; 2];
    for i in 0..draws {
        let c = sampler.sample(&mut sample_rng(11, i));
        hist[0][c.0[0] as usize] += 1;
        hist[1][c.0[1] as usize] += 1;
    }
    let expected: Vec<f64> = (0..=5).map(|k| binomial_pmf(5, 0.25, k)).collect();
    assert_frequencies(&hist[0], &expected, draws);
    assert_frequencies(&hist[1], &expected, draws);
}

#[test]
fn exact_sampler_matches_enumeration() {
    let layout = CommitteeLayout::new(vec![2, 2]).unwrap();
    let draws = 1_000_000;
    let mut hist = [0u64; 3];
    let mut rng = sample_rng(12, 0);
    for _ in 0..draws {
        let c = sample_counts_exact(&layout, 2, &mut rng).unwrap();
        assert_eq!(c.total(), 2);
        hist[c.0[0] as usize] += 1;
    }
    assert_frequencies(&[hist[2], hist[1], hist[0]], &[1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], draws);
}

#[test]
fn exact_sampler_marginals() {
    // Committee 2 of (6, 9, 5) with M = 8 of 20: Hypergeometric(20, 8, 9).
    let layout = CommitteeLayout::new(vec![6, 9, 5]).unwrap();
    let sampler = ExactSampler::new(&layout, 8).unwrap();
    let draws = 200_000;
    let mut hist = [0u64; 10];
    for i in 0..draws {
        hist[sampler.sample(&mut sample_rng(13, i)).0[1] as usize] += 1;
    }
    let choose = |n: u64, k: u64| -> f64 {
        if k > n {
            return 0.0;
        }
        (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
    };
    let expected: Vec<f64> = (0..=9)
        .map(|x| choose(8, x) * choose(12, 9 - x) / choose(20, 9))
        .collect();
    assert_frequencies(&hist, &expected, draws);
}

fn plan(query: FailureQuery, samples: u64, seed: u64, workers: usize) -> SimulationPlan {
    SimulationPlan {
        query,
        samples,
        seed,
        workers,
    }
}

#[test]
fn average_estimate_near_exact() {
    let q = FailureQuery::new(
        CommitteeLayout::new(vec![5, 5]).unwrap(),
        AdversaryModel::uniform(Rate::new(0.25).unwrap()),
        Rate::ratio(1, 3).unwrap(),
    )
    .unwrap();
    let exact = delta_exact_binomial(&q).unwrap().delta();
    assert!((exact - 0.59954833984375).abs() < 1e-14);
    let est = estimate_delta(&plan(q, 1_000_000, 7, 1)).unwrap();
    assert!((est.delta_hat - exact).abs() <= 5.0 * est.std_error, "{est:?}");
    assert!(est.ci95.0 <= est.delta_hat && est.delta_hat <= est.ci95.1);
}

#[test]
fn exact_estimate_near_enumeration() {
    let q = FailureQuery::new(
        CommitteeLayout::new(vec![2, 2]).unwrap(),
        AdversaryModel::Exact { count: 2 },
        Rate::ratio(1, 2).unwrap(),
    )
    .unwrap();
    let est = estimate_delta(&plan(q, 1_000_000, 8, 1)).unwrap();
    assert!((est.delta_hat - 1.0 / 3.0).abs() <= 5.0 * est.std_error, "{est:?}");
}

#[test]
fn results_do_not_depend_on_workers() {
    let a = Rate::ratio(1, 3).unwrap();
    let p = Rate::ratio(1, 4).unwrap();
    for q in [
        FailureQuery::average_split(1000, 17, p, a).unwrap(),
        FailureQuery::exact_split(1000, 17, p, a).unwrap(),
    ] {
        let one = estimate_delta(&plan(q.clone(), 30_001, 99, 1)).unwrap();
        let four = estimate_delta(&plan(q.clone(), 30_001, 99, 4)).unwrap();
        assert_eq!(one, four);
        let other_seed = estimate_delta(&plan(q, 30_001, 100, 1)).unwrap();
        assert_ne!(one.failures, other_seed.failures);
    }
}

#[test]
fn single_sample_is_zero_or_one() {
    let q = FailureQuery::average_split(10, 2, Rate::new(0.25).unwrap(), Rate::ratio(1, 3).unwrap()).unwrap();
    let est = estimate_delta(&plan(q, 1, 1, 1)).unwrap();
    assert!(est.delta_hat == 0.0 || est.delta_hat == 1.0);
}
