//! Choosing committee counts and sizes for a target failure probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::failure::{
    delta_exact_hypergeometric_capped, failure_threshold, hypergeometric_log_tail, FailureQuery,
    Method, DEFAULT_DP_NODE_CAP,
};
use crate::partitions::{round_count, AdversaryModel, CommitteeLayout};
use crate::probcore::{binomial_tail_and_cdf, kl, log1m_exp, Rate};
use crate::saddle::delta_asymptotic;

/// Output of the committee-count search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    /// Number of committees.
    pub k: u64,
    /// Base committee size; `r` committees get `n + 1`.
    pub n: u64,
    pub r: u64,
    /// Failure probability recorded for the returned configuration.
    pub prob: f64,
    /// Number of committee counts evaluated.
    pub iterations: u64,
}

/// `ln P(Binomial(size, p) <= floor(A size))`, the per-committee survival.
fn committee_log_cdf(size: u64, a: Rate, p: Rate) -> f64 {
    let fail_at = failure_threshold(a, size);
    if fail_at > size {
        return 0.0;
    }
    let (cdf, tail) = binomial_tail_and_cdf(size, p, fail_at - 1).expect("fail_at <= size");
    if tail.ln() < -std::f64::consts::LN_2 {
        log1m_exp(tail.ln())
    } else {
        cdf.ln()
    }
}

/// `delta` of the `N = nK + r` split under the average model, as `ln(1 - delta)`.
pub fn split_log_survival(nodes: u64, committees: u64, a: Rate, p: Rate) -> f64 {
    let n = nodes / committees;
    let r = nodes % committees;
    let mut survival = (committees - r) as f64 * committee_log_cdf(n, a, p);
    if r > 0 {
        survival += r as f64 * committee_log_cdf(n + 1, a, p);
    }
    survival
}

fn split_delta(nodes: u64, committees: u64, a: Rate, p: Rate) -> f64 {
    -split_log_survival(nodes, committees, a, p).exp_m1()
}

fn check_sizing_args(delta_target: f64, a: Rate, p: Rate) -> Result<()> {
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return Err(Error::Domain(format!("target delta {delta_target} outside (0, 1)")));
    }
    if !(a.value() > 0.0 && a.value() < 1.0) {
        return Err(Error::Domain(format!("threshold {} outside (0, 1)", a.value())));
    }
    if p.value() >= 1.0 {
        return Err(Error::Domain("adversary fraction must be below 1".into()));
    }
    Ok(())
}

/// Largest committee count whose failure probability stays within
/// `delta_target`, increasing `K` from 1 until the target is exceeded.
///
/// The `K = 1` configuration is reported with `prob = 0` without being
/// evaluated, and the search also stops at `K = N` where committees reach a
/// single node.
pub fn max_committees(nodes: u64, delta_target: Rate, a: Rate, p: Rate) -> Result<SizingResult> {
    if nodes == 0 {
        return Err(Error::Domain("need at least one node".into()));
    }
    check_sizing_args(delta_target.value(), a, p)?;
    let target = delta_target.value();

    let mut current = SizingResult {
        k: 1,
        n: nodes,
        r: 0,
        prob: 0.0,
        iterations: 0,
    };
    let mut iterations = 0;
    loop {
        if current.k == nodes {
            break;
        }
        let saved = current.clone();
        let k = saved.k + 1;
        iterations += 1;
        current = SizingResult {
            k,
            n: nodes / k,
            r: nodes % k,
            prob: split_delta(nodes, k, a, p),
            iterations,
        };
        if current.prob > target {
            current = saved;
            break;
        }
    }
    current.iterations = iterations;
    Ok(current)
}

/// Largest `K` in `1..=N` with `delta(K) <= delta_target`, scanning every
/// count. `delta(K)` is not monotone in `K` (committee sizes cross multiples
/// of `1/A`), so this can exceed [`max_committees`], which stops at the first
/// count over the target.
pub fn max_committees_scan(nodes: u64, delta_target: Rate, a: Rate, p: Rate) -> Result<SizingResult> {
    if nodes == 0 {
        return Err(Error::Domain("need at least one node".into()));
    }
    check_sizing_args(delta_target.value(), a, p)?;
    let target = delta_target.value();
    let mut best = SizingResult {
        k: 1,
        n: nodes,
        r: 0,
        prob: split_delta(nodes, 1, a, p),
        iterations: nodes,
    };
    for k in 2..=nodes {
        let prob = split_delta(nodes, k, a, p);
        if prob <= target {
            best = SizingResult {
                k,
                n: nodes / k,
                r: nodes % k,
                prob,
                iterations: nodes,
            };
        }
    }
    Ok(best)
}

/// Which adversary model a size search evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizingModel {
    Average,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinSizeOptions {
    /// Largest committee size tried.
    pub max_size: u64,
    /// Node cap above which the exact model switches to the asymptotic.
    pub dp_node_cap: u64,
}

impl Default for MinSizeOptions {
    fn default() -> Self {
        MinSizeOptions {
            max_size: 1_000_000,
            dp_node_cap: DEFAULT_DP_NODE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinCommitteeSize {
    /// Smallest `n` feasible at both `n` and `n + 1`.
    pub n: u64,
    /// Smallest `n` feasible at `n` alone.
    pub first_feasible: u64,
    /// `delta` at `n`.
    pub delta: f64,
    /// Method that produced `delta` at `n`.
    pub method: Method,
}

/// `(delta, method)` for `K` committees of size `n`. For the exact model a
/// returned `delta` above `target` may be a lower bound rather than exact.
fn uniform_layout_delta(
    k: u64,
    n: u64,
    a: Rate,
    p: Rate,
    model: SizingModel,
    target: f64,
    options: &MinSizeOptions,
) -> Result<(f64, Method)> {
    match model {
        SizingModel::Average => {
            let survival = k as f64 * committee_log_cdf(n, a, p);
            Ok((-survival.exp_m1(), Method::ExactBinomial))
        }
        SizingModel::Exact => {
            let layout = CommitteeLayout::new(vec![n; k as usize])?;
            let nodes = layout.total();
            let m = round_count(nodes, p);
            if nodes <= options.dp_node_cap {
                // Hypergeometric counts are negatively associated, so survival
                // is at most the product of the marginal survivals. When that
                // already rules `n` out, skip the DP.
                let tail = hypergeometric_log_tail(n, nodes, m, failure_threshold(a, n));
                let lower = -(k as f64 * log1m_exp(tail)).exp_m1();
                if lower > target * (1.0 + 1e-9) {
                    return Ok((lower, Method::ExactHypergeometric));
                }
                let q = FailureQuery::new(layout, AdversaryModel::Exact { count: m }, a)?;
                let d = delta_exact_hypergeometric_capped(&q, options.dp_node_cap)?;
                return Ok((d.delta(), Method::ExactHypergeometric));
            }
            if m == 0 {
                return Ok((0.0, Method::Asymptotic));
            }
            match delta_asymptotic(&layout, m, a) {
                Ok(d) => Ok((d.delta(), Method::Asymptotic)),
                // No saddle: committees too small to hold M/N below their caps.
                Err(Error::NoSaddle { .. }) => Ok((1.0, Method::Asymptotic)),
                Err(e) => Err(e),
            }
        }
    }
}

pub fn min_committee_size(
    k: u64,
    delta_target: Rate,
    a: Rate,
    p: Rate,
    model: SizingModel,
) -> Result<MinCommitteeSize> {
    min_committee_size_with(k, delta_target, a, p, model, &MinSizeOptions::default())
}

/// Smallest committee size `n` for `K` equal committees meeting the target.
///
/// `floor(A n)` makes `delta(n)` jump, so an isolated feasible `n` can sit
/// below infeasible neighbours; `n` is accepted only when `n + 1` is
/// feasible too.
pub fn min_committee_size_with(
    k: u64,
    delta_target: Rate,
    a: Rate,
    p: Rate,
    model: SizingModel,
    options: &MinSizeOptions,
) -> Result<MinCommitteeSize> {
    if k == 0 {
        return Err(Error::Domain("need at least one committee".into()));
    }
    check_sizing_args(delta_target.value(), a, p)?;
    if model == SizingModel::Exact && p.value() >= a.value() {
        return Err(Error::Domain(format!(
            "exact model needs P = {} below A = {}",
            p.value(),
            a.value()
        )));
    }
    let target = delta_target.value();
    min_size_by(options.max_size, target, |n| {
        uniform_layout_delta(k, n, a, p, model, target, options)
    })
}

/// The two-point search behind [`min_committee_size`] for any per-size
/// evaluator returning `(delta, method)`; bounds on `delta` give bound-derived
/// sizes.
pub fn min_size_by(
    max_size: u64,
    target: f64,
    mut eval: impl FnMut(u64) -> Result<(f64, Method)>,
) -> Result<MinCommitteeSize> {
    let mut first_feasible = None;
    let mut previous: Option<(u64, f64, Method)> = None;
    for n in 1..=max_size.saturating_add(1) {
        let (delta, method) = eval(n)?;
        let feasible = delta <= target;
        if feasible && first_feasible.is_none() {
            first_feasible = Some(n);
        }
        if let Some((prev_n, prev_delta, prev_method)) = previous {
            if feasible && prev_delta <= target {
                return Ok(MinCommitteeSize {
                    n: prev_n,
                    first_feasible: first_feasible.unwrap_or(prev_n),
                    delta: prev_delta,
                    method: prev_method,
                });
            }
        }
        previous = Some((n, delta, method));
    }
    Err(Error::NotFound { limit: max_size })
}

/// Analytic bounds on the minimal committee size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBracket {
    pub lower: f64,
    pub upper: f64,
    /// `max_n f(A + 1/n)`.
    pub f_tilde: f64,
}

/// Default scan limit for `f_tilde`.
pub const F_TILDE_SCAN: u64 = 10_000;

/// `-ln(1 - (1 - delta)^(1/K))`, stable for very large `K`.
pub fn log_committee_budget(delta: f64, k: u64) -> f64 {
    let per_committee = ((-delta).ln_1p() / k as f64).exp_m1();
    -(-per_committee).ln()
}

/// `f(x) = D(x || P) + ln(x (1 - x)) / (2n)`.
fn f_shift(x: f64, p: f64, n: u64) -> f64 {
    kl(x, p) + (x * (1.0 - x)).ln() / (2.0 * n as f64)
}

pub fn size_bracket(k: u64, delta_target: Rate, a: Rate, p: Rate) -> Result<SizeBracket> {
    size_bracket_with(k, delta_target, a, p, F_TILDE_SCAN)
}

/// Upper bound `L / D(A || P)` and lower bound
/// `(1 - ln 8 + 2 L) / (2 f_tilde + 1)` with `L = -ln(1 - (1 - delta)^(1/K))`.
pub fn size_bracket_with(k: u64, delta_target: Rate, a: Rate, p: Rate, scan: u64) -> Result<SizeBracket> {
    let (av, pv, d) = (a.value(), p.value(), delta_target.value());
    if k == 0 {
        return Err(Error::Domain("need at least one committee".into()));
    }
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!("target delta {d} outside (0, 1)")));
    }
    if !(pv > 0.0 && pv < av && av < 1.0) {
        return Err(Error::Domain(format!(
            "bracket needs 0 < P < A < 1, got P = {pv}, A = {av}"
        )));
    }
    let budget = log_committee_budget(d, k);
    let upper = budget / kl(av, pv);
    let f_tilde = (1..=scan)
        .filter_map(|n| {
            let x = av + 1.0 / n as f64;
            (x > pv && x < 1.0).then(|| f_shift(x, pv, n))
        })
        .fold(f64::NEG_INFINITY, f64::max);
    if !f_tilde.is_finite() {
        return Err(Error::Domain("no admissible n for f_tilde".into()));
    }
    let lower = (1.0 - 8f64.ln() + 2.0 * budget) / (2.0 * f_tilde + 1.0);
    Ok(SizeBracket {
        lower,
        upper,
        f_tilde,
    })
}

/// Truncated series for `-ln(1 - (1 - delta)^(1/K))`: the large-`K` form
/// through `K^-4` and the small-`delta` form through `delta^1`.
pub fn bracket_expansions(delta_target: f64, k: u64) -> Result<(f64, f64)> {
    if !(delta_target > 0.0 && delta_target < 1.0) || k == 0 {
        return Err(Error::Domain(format!(
            "expansions need 0 < delta < 1 and K >= 1, got {delta_target}, {k}"
        )));
    }
    let kf = k as f64;
    let l = (-delta_target).ln_1p();
    let large_k = -(-l).ln() + kf.ln() - l / (2.0 * kf) - l * l / (24.0 * kf * kf)
        + l.powi(4) / (2880.0 * kf.powi(4));
    let small_delta = kf.ln() - delta_target.ln() - (kf - 1.0) / (2.0 * kf) * delta_target;
    Ok((large_k, small_delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: f64) -> Rate {
        Rate::new(v).unwrap()
    }

    fn third() -> Rate {
        Rate::ratio(1, 3).unwrap()
    }

    fn quarter() -> Rate {
        Rate::ratio(1, 4).unwrap()
    }

    #[test]
    fn falls_back_to_single_committee() {
        let s = max_committees(20, r(1e-6), third(), quarter()).unwrap();
        assert_eq!((s.k, s.n, s.r, s.prob), (1, 20, 0, 0.0));
        let s = max_committees(20, r(1e-9), third(), quarter()).unwrap();
        assert_eq!((s.k, s.n, s.r, s.prob), (1, 20, 0, 0.0));
    }

    #[test]
    fn single_node_stops_immediately() {
        let s = max_committees(1, r(0.5), third(), quarter()).unwrap();
        assert_eq!((s.k, s.n, s.r), (1, 1, 0));
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn zero_adversaries_reach_one_node_per_committee() {
        let s = max_committees(12, r(0.5), third(), r(0.0)).unwrap();
        assert_eq!((s.k, s.n, s.r, s.prob), (12, 1, 0, 0.0));
    }

    #[test]
    fn n20_half_target() {
        let s = max_committees(20, r(0.5), third(), quarter()).unwrap();
        assert_eq!((s.k, s.n, s.r), (2, 10, 0));
        assert!(s.prob <= 0.5);
    }

    #[test]
    fn min_size_examples() {
        let m = min_committee_size(1, r(1e-3), third(), quarter(), SizingModel::Average).unwrap();
        assert!(m.n <= 398, "{}", m.n);
        assert!(m.first_feasible <= m.n);
        let m = min_committee_size(1, r(0.5), third(), r(0.0), SizingModel::Average).unwrap();
        assert_eq!(m.n, 1);
        assert!(min_committee_size(3, r(0.5), third(), r(0.4), SizingModel::Exact).is_err());
    }

    #[test]
    fn min_size_not_found() {
        let opts = MinSizeOptions {
            max_size: 5,
            ..MinSizeOptions::default()
        };
        assert!(matches!(
            min_committee_size_with(10, r(1e-6), third(), quarter(), SizingModel::Average, &opts),
            Err(Error::NotFound { limit: 5 })
        ));
    }

    #[test]
    fn bracket_single_committee() {
        let b = size_bracket(1, r(1e-3), third(), quarter()).unwrap();
        assert!((b.upper - 397.637_297_260_572).abs() < 1e-8, "{}", b.upper);
        assert!(b.lower <= b.upper);
        assert!(size_bracket(1, r(1e-3), quarter(), third()).is_err());
    }

    #[test]
    fn bracket_upper_grows_like_log_k() {
        let d = kl(1.0 / 3.0, 0.25);
        let step = std::f64::consts::LN_10 / d;
        let mut prev = size_bracket(1_000, r(1e-3), third(), quarter()).unwrap().upper;
        for k in [10_000u64, 100_000, 1_000_000, 10_000_000, 100_000_000, 1_000_000_000] {
            let u = size_bracket(k, r(1e-3), third(), quarter()).unwrap().upper;
            assert!(((u - prev) - step).abs() / step < 1e-3, "{k}: {}", u - prev);
            prev = u;
        }
    }

    #[test]
    fn budget_is_stable_at_huge_k() {
        let b = log_committee_budget(1e-3, 1_000_000_000);
        // -ln(-ln(1 - 1e-3)) + ln(1e9) to leading order.
        let approx = -(-(-1e-3f64).ln_1p()).ln() + 1e9f64.ln();
        assert!((b - approx).abs() < 1e-9);
    }

    #[test]
    fn expansions_match_exact() {
        let (large, _) = bracket_expansions(0.5, 1_000_000).unwrap();
        let exact = log_committee_budget(0.5, 1_000_000);
        assert!(((large - exact) / exact).abs() < 1e-10);

        let (_, small) = bracket_expansions(1e-8, 10).unwrap();
        let exact = log_committee_budget(1e-8, 10);
        assert!(((small - exact) / exact).abs() < 1e-6);

        // Leading terms at tiny delta.
        let (_, small) = bracket_expansions(1e-12, 7).unwrap();
        assert!((small - (7f64.ln() + 1e12f64.ln())).abs() < 1e-11);
        assert!(bracket_expansions(0.0, 3).is_err());
    }
}
