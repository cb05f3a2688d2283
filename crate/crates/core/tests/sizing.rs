use shardcalc::failure::delta_exact_binomial;
use shardcalc::sizing::{max_committees, max_committees_scan, min_committee_size, size_bracket, SizingModel};
use shardcalc::{FailureQuery, Rate};

fn third() -> Rate {
    Rate::ratio(1, 3).unwrap()
}

/// Largest K with delta(K) <= target, scanning every K and taking K = 1 as
/// the fallback the search starts from.
fn scan_oracle(nodes: u64, target: f64, a: Rate, p: Rate) -> u64 {
    (2..=nodes)
        .filter(|&k| {
            let q = FailureQuery::average_split(nodes, k, p, a).unwrap();
            delta_exact_binomial(&q).unwrap().delta() <= target
        })
        .max()
        .unwrap_or(1)
}

#[test]
fn n20_matches_scan() {
    let p = Rate::ratio(1, 4).unwrap();
    let got = max_committees(20, Rate::new(0.5).unwrap(), third(), p).unwrap();
    assert_eq!(got.k, scan_oracle(20, 0.5, third(), p));
    assert_eq!(got.n * got.k + got.r, 20);
}

#[test]
fn n1000_lands_inside_bracket() {
    let target = Rate::new(1e-3).unwrap();
    let p = Rate::ratio(1, 4).unwrap();
    let got = max_committees(1000, target, third(), p).unwrap();
    assert!(got.prob <= 1e-3);
    let b = size_bracket(got.k, target, third(), p).unwrap();
    assert!(b.lower <= got.n as f64 && got.n as f64 <= b.upper, "{got:?} {b:?}");
}

#[test]
fn bracket_contains_min_size() {
    let target = Rate::new(1e-3).unwrap();
    let p = Rate::ratio(1, 4).unwrap();
    for k in [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000] {
        let b = size_bracket(k, target, third(), p).unwrap();
        let n = min_committee_size(k, target, third(), p, SizingModel::Average).unwrap().n as f64;
        assert!(b.lower <= n && n <= b.upper, "K={k}: {} <= {n} <= {}", b.lower, b.upper);
    }
}

#[test]
fn min_size_non_decreasing_in_k() {
    let target = Rate::new(1e-3).unwrap();
    let p = Rate::ratio(1, 4).unwrap();
    let mut prev = 0;
    for k in 1..=60 {
        let n = min_committee_size(k, target, third(), p, SizingModel::Average).unwrap().n;
        assert!(n >= prev, "K={k}: {n} < {prev}");
        prev = n;
    }
}

/// Count at which an increasing search first exceeds the target, minus one.
fn first_exceedance_oracle(nodes: u64, target: f64, a: Rate, p: Rate) -> u64 {
    (2..=nodes)
        .find(|&k| {
            let q = FailureQuery::average_split(nodes, k, p, a).unwrap();
            delta_exact_binomial(&q).unwrap().delta() > target
        })
        .map_or(nodes, |k| k - 1)
}

fn grid() -> impl Iterator<Item = (Rate, f64, u64)> {
    [Rate::new(0.1).unwrap(), Rate::ratio(1, 4).unwrap()]
        .into_iter()
        .flat_map(|p| [0.5, 0.1, 1e-3].into_iter().map(move |t| (p, t)))
        .flat_map(|(p, t)| (1..=500).map(move |n| (p, t, n)))
}

#[test]
fn algorithm_stops_at_first_exceedance() {
    for (p, target, nodes) in grid() {
        let got = max_committees(nodes, Rate::new(target).unwrap(), third(), p).unwrap();
        assert_eq!(got.k, first_exceedance_oracle(nodes, target, third(), p), "{nodes} {target} {p}");
        assert_eq!(got.n * got.k + got.r, nodes);
        assert!(got.n >= 1 && got.r < got.k);
    }
}

#[test]
fn scan_variant_matches_scan_oracle() {
    for (p, target, nodes) in grid().filter(|&(_, _, n)| n % 7 == 0 || n < 60) {
        let got = max_committees_scan(nodes, Rate::new(target).unwrap(), third(), p).unwrap();
        assert_eq!(got.k, scan_oracle(nodes, target, third(), p), "{nodes} {target} {p}");
    }
}

#[test]
fn delta_is_not_monotone_in_k() {
    // Sizes 4-5 tolerate one adversary, as do sizes of 3 at K = 14.
    let p = Rate::new(0.1).unwrap();
    let target = Rate::new(0.5).unwrap();
    assert_eq!(max_committees(43, target, third(), p).unwrap().k, 8);
    assert_eq!(max_committees_scan(43, target, third(), p).unwrap().k, 14);
}

#[test]
fn exact_model_needs_no_larger_committees() {
    let target = Rate::new(1e-3).unwrap();
    let p = Rate::ratio(1, 4).unwrap();
    for k in 1..=50 {
        let avg = min_committee_size(k, target, third(), p, SizingModel::Average).unwrap();
        let exact = min_committee_size(k, target, third(), p, SizingModel::Exact).unwrap();
        assert!(exact.n <= avg.n, "K={k}: exact {} > average {}", exact.n, avg.n);
        assert_eq!(exact.method, shardcalc::Method::ExactHypergeometric);
    }
}

#[test]
fn exact_model_switches_to_asymptotic_above_cap() {
    let opts = shardcalc::sizing::MinSizeOptions {
        dp_node_cap: 1_000,
        ..Default::default()
    };
    let target = Rate::new(1e-3).unwrap();
    let p = Rate::ratio(1, 4).unwrap();
    let got =
        shardcalc::sizing::min_committee_size_with(20, target, third(), p, SizingModel::Exact, &opts)
            .unwrap();
    assert_eq!(got.method, shardcalc::Method::Asymptotic);
    assert!(got.delta <= 1e-3);
}
