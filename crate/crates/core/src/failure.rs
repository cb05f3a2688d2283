//! Failure probability `delta`: exact values and bounds.
//!
//! A committee of size `N_mu` fails when it holds at least
//! `floor(A * N_mu) + 1` adversarial nodes; `delta` is the probability that
//! at least one committee fails.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::partitions::{
    marginal_by_committee, AdversaryModel, AverageRates, CommitteeLayout,
};
use crate::probcore::{
    binomial_tail_and_cdf, kl, ln_choose, log1m_exp, log_add_exp, log_sum_exp, LogProb, Rate,
};

/// Default node cap for the coefficient-extraction DP.
pub const DEFAULT_DP_NODE_CAP: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureQuery {
    pub layout: CommitteeLayout,
    pub adversary: AdversaryModel,
    /// Tolerated adversarial fraction `A` per committee.
    pub threshold: Rate,
}

impl FailureQuery {
    pub fn new(layout: CommitteeLayout, adversary: AdversaryModel, threshold: Rate) -> Result<Self> {
        adversary.validate(&layout)?;
        Ok(FailureQuery {
            layout,
            adversary,
            threshold,
        })
    }

    /// Split layout with a uniform average rate.
    pub fn average_split(nodes: u64, committees: u64, p: Rate, threshold: Rate) -> Result<Self> {
        FailureQuery::new(
            CommitteeLayout::from_split(nodes, committees)?,
            AdversaryModel::uniform(p),
            threshold,
        )
    }

    /// Split layout with exactly `round(N * p)` adversaries.
    pub fn exact_split(nodes: u64, committees: u64, p: Rate, threshold: Rate) -> Result<Self> {
        FailureQuery::new(
            CommitteeLayout::from_split(nodes, committees)?,
            AdversaryModel::exact_from_fraction(nodes, p),
            threshold,
        )
    }

    fn average_rates(&self) -> Result<&AverageRates> {
        match &self.adversary {
            AdversaryModel::Average(r) => Ok(r),
            AdversaryModel::Exact { .. } => Err(Error::Domain(
                "operation needs the average adversary model".into(),
            )),
        }
    }

    fn exact_count(&self) -> Result<u64> {
        match self.adversary {
            AdversaryModel::Exact { count } => Ok(count),
            AdversaryModel::Average(_) => Err(Error::Domain(
                "operation needs the exact adversary model".into(),
            )),
        }
    }

    fn require_open_threshold(&self) -> Result<()> {
        let a = self.threshold.value();
        if a <= 0.0 || a >= 1.0 {
            return Err(Error::Domain(format!("bounds need 0 < A < 1, got {a}")));
        }
        Ok(())
    }

    pub fn threshold_for(&self, committee_size: u64) -> u64 {
        failure_threshold(self.threshold, committee_size)
    }
}

/// Smallest adversarial count at which a committee of `committee_size` fails.
pub fn failure_threshold(threshold: Rate, committee_size: u64) -> u64 {
    threshold.floor_mul(committee_size) + 1
}

/// `Q(mu) = (floor(A N_mu) + 1) / N_mu`.
pub fn tilted_rate(threshold: Rate, committee_size: u64) -> f64 {
    failure_threshold(threshold, committee_size) as f64 / committee_size as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactBinomial,
    ExactHypergeometric,
    Theorem1Lower,
    Theorem1UpperAsh,
    Theorem1UpperFerrante,
    UnionRandom,
    UnionRandomSimple,
    UnionFixed,
    UnionHyperExact,
    UnionHyperHoeffding,
    Asymptotic,
    MonteCarlo,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::ExactBinomial,
        Method::ExactHypergeometric,
        Method::Theorem1Lower,
        Method::Theorem1UpperAsh,
        Method::Theorem1UpperFerrante,
        Method::UnionRandom,
        Method::UnionRandomSimple,
        Method::UnionFixed,
        Method::UnionHyperExact,
        Method::UnionHyperHoeffding,
        Method::Asymptotic,
        Method::MonteCarlo,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::ExactBinomial => "exact-binomial",
            Method::ExactHypergeometric => "exact-hypergeometric",
            Method::Theorem1Lower => "theorem1-lower",
            Method::Theorem1UpperAsh => "theorem1-upper-ash",
            Method::Theorem1UpperFerrante => "theorem1-upper-ferrante",
            Method::UnionRandom => "union-random",
            Method::UnionRandomSimple => "union-random-simple",
            Method::UnionFixed => "union-fixed",
            Method::UnionHyperExact => "union-hyper-exact",
            Method::UnionHyperHoeffding => "union-hyper-hoeffding",
            Method::Asymptotic => "asymptotic",
            Method::MonteCarlo => "monte-carlo",
        }
    }

    /// Whether the method evaluates the exact adversary model.
    pub fn uses_exact_model(self) -> bool {
        matches!(
            self,
            Method::ExactHypergeometric
                | Method::UnionHyperExact
                | Method::UnionHyperHoeffding
                | Method::Asymptotic
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// The raw value lay outside `[0, 1]` and was clamped.
    pub clamped: bool,
    pub precondition_satisfied: bool,
    /// Natural log of the unclamped value.
    pub raw_log_value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            clamped: false,
            precondition_satisfied: true,
            raw_log_value: f64::NEG_INFINITY,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult {
    pub method: Method,
    /// `ln delta`, clamped into `[0, 1]`.
    pub log_delta: LogProb,
    /// `ln(1 - delta)`.
    pub log_survival: f64,
    pub diagnostics: Diagnostics,
}

impl DeltaResult {
    /// From the log of a (possibly > 1) failure value.
    pub(crate) fn from_log_delta(method: Method, raw: f64, diagnostics: Diagnostics) -> Self {
        let clamped = raw > 0.0;
        let log_delta = LogProb::saturating(raw);
        DeltaResult {
            method,
            log_delta,
            log_survival: log1m_exp(log_delta.ln()),
            diagnostics: Diagnostics {
                clamped: diagnostics.clamped || clamped,
                raw_log_value: raw,
                ..diagnostics
            },
        }
    }

    /// From the log of a survival probability; `delta = 1 - e^survival`.
    pub(crate) fn from_log_survival(method: Method, survival: f64, diagnostics: Diagnostics) -> Self {
        let clamped = survival > 0.0;
        let survival = survival.min(0.0);
        let raw = log1m_exp(survival);
        DeltaResult {
            method,
            log_delta: LogProb::saturating(raw),
            log_survival: survival,
            diagnostics: Diagnostics {
                clamped: diagnostics.clamped || clamped,
                raw_log_value: raw,
                ..diagnostics
            },
        }
    }

    pub fn delta(&self) -> f64 {
        self.log_delta.prob()
    }

    /// The unclamped value in linear space.
    pub fn raw_value(&self) -> f64 {
        self.diagnostics.raw_log_value.exp()
    }
}

/// What to do when a bound's precondition fails for some committee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionPolicy {
    /// Flag the result and use the trivial per-committee bound.
    #[default]
    Degrade,
    Strict,
}

/// `ln(1 - tail)` picking whichever side of the split keeps precision.
fn committee_log_survival(ln_cdf: f64, ln_tail: f64) -> f64 {
    if ln_tail < -std::f64::consts::LN_2 {
        log1m_exp(ln_tail)
    } else {
        ln_cdf
    }
}

/// `(ln P(X <= t - 1), ln P(X >= t))` for a committee that fails at `t`.
fn committee_binomial_split(size: u64, p: Rate, fail_at: u64) -> (f64, f64) {
    if fail_at > size {
        return (0.0, f64::NEG_INFINITY);
    }
    let (cdf, tail) = binomial_tail_and_cdf(size, p, fail_at - 1)
        .expect("fail_at - 1 < size by construction");
    (cdf.ln(), tail.ln())
}

/// Per-committee values, computed once per distinct (size, rate) pair.
fn per_committee<T: Clone>(
    layout: &CommitteeLayout,
    rates: &AverageRates,
    mut f: impl FnMut(u64, Rate) -> T,
) -> Vec<T> {
    match rates {
        AverageRates::Uniform(p) => {
            let classes: Vec<(u64, T)> = layout
                .size_classes()
                .into_iter()
                .map(|(s, _)| (s, f(s, *p)))
                .collect();
            layout
                .sizes()
                .iter()
                .map(|s| {
                    classes
                        .iter()
                        .find(|(size, _)| size == s)
                        .map(|(_, v)| v.clone())
                        .expect("every size has a class")
                })
                .collect()
        }
        AverageRates::PerCommittee(r) => layout
            .sizes()
            .iter()
            .zip(r)
            .map(|(&s, &p)| f(s, p))
            .collect(),
    }
}

/// `delta = 1 - prod_mu P(Binomial(N_mu, P(alpha|mu)) <= floor(A N_mu))`.
pub fn delta_exact_binomial(query: &FailureQuery) -> Result<DeltaResult> {
    let rates = query.average_rates()?;
    let a = query.threshold;
    let survivals = per_committee(&query.layout, rates, |s, p| {
        let (c, t) = committee_binomial_split(s, p, failure_threshold(a, s));
        committee_log_survival(c, t)
    });
    let survival: f64 = survivals.iter().sum();
    Ok(DeltaResult::from_log_survival(
        Method::ExactBinomial,
        survival,
        Diagnostics::default(),
    ))
}

/// Exact `delta` for the exact adversary model with the default node cap.
pub fn delta_exact_hypergeometric(query: &FailureQuery) -> Result<DeltaResult> {
    delta_exact_hypergeometric_capped(query, DEFAULT_DP_NODE_CAP)
}

/// Exact `delta` for `M` adversaries placed without replacement.
///
/// The survival probability is `[z^M] prod_mu phi_A(z | N_mu) / C(N, M)`,
/// where `phi_A(z | n) = sum_{j <= floor(A n)} C(n, j) z^j`. The coefficient
/// is built committee by committee in log space, truncated at degree `M`.
pub fn delta_exact_hypergeometric_capped(query: &FailureQuery, node_cap: u64) -> Result<DeltaResult> {
    let m = query.exact_count()?;
    let total = query.layout.total();
    if m > total {
        return Err(Error::Domain(format!("{m} adversaries among {total} nodes")));
    }
    if total > node_cap {
        return Err(Error::Domain(format!(
            "{total} nodes exceed the exact evaluation cap of {node_cap}"
        )));
    }
    let ln_coeff = truncated_product_coefficient(&query.layout, query.threshold, m);
    let survival = ln_coeff - ln_choose(total, m);
    Ok(DeltaResult::from_log_survival(
        Method::ExactHypergeometric,
        survival,
        Diagnostics::default(),
    ))
}

/// `ln [z^m] prod_mu phi_A(z | N_mu)`.
pub(crate) fn truncated_product_coefficient(layout: &CommitteeLayout, a: Rate, m: u64) -> f64 {
    let m = m as usize;
    let mut coeffs = vec![f64::NEG_INFINITY; m + 1];
    coeffs[0] = 0.0;
    let mut next = vec![f64::NEG_INFINITY; m + 1];
    let mut row: Vec<f64> = Vec::new();
    let mut row_size = None;
    let mut reach = 0usize;
    for &size in layout.sizes() {
        let top = (a.floor_mul(size).min(size) as usize).min(m);
        if row_size != Some(size) {
            row = (0..=top).map(|j| ln_choose(size, j as u64)).collect();
            row_size = Some(size);
        }
        let new_reach = (reach + top).min(m);
        for (target, slot) in next.iter_mut().enumerate().take(new_reach + 1) {
            let lo = target.saturating_sub(reach);
            let hi = top.min(target);
            let mut best = f64::NEG_INFINITY;
            for j in lo..=hi {
                best = best.max(coeffs[target - j] + row[j]);
            }
            if best == f64::NEG_INFINITY {
                *slot = best;
                continue;
            }
            let mut s = 0.0;
            for j in lo..=hi {
                s += (coeffs[target - j] + row[j] - best).exp();
            }
            *slot = best + s.ln();
        }
        reach = new_reach;
        std::mem::swap(&mut coeffs, &mut next);
    }
    coeffs[m]
}

/// Lower and upper bounds on `delta` for the average model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bounds {
    pub lower: DeltaResult,
    pub upper_ash: DeltaResult,
    pub upper_ferrante: DeltaResult,
}

#[derive(Debug, Clone, Copy)]
enum CommitteeBoundCase {
    /// `floor(A N_mu) + 1 > N_mu`: the committee cannot fail.
    NeverFails,
    /// `P(alpha|mu) < Q(mu) < 1`.
    Valid { q: f64, p: f64, ln_chernoff: f64 },
    Violated { q: f64, p: f64 },
}

fn classify(size: u64, p: Rate, a: Rate) -> CommitteeBoundCase {
    let fail_at = failure_threshold(a, size);
    if fail_at > size {
        return CommitteeBoundCase::NeverFails;
    }
    let q = fail_at as f64 / size as f64;
    let p = p.value();
    if p < q && q < 1.0 {
        CommitteeBoundCase::Valid {
            q,
            p,
            ln_chernoff: -(size as f64) * kl(q, p),
        }
    } else {
        CommitteeBoundCase::Violated { q, p }
    }
}

fn precondition_error(committee: usize, q: f64, p: f64) -> Error {
    Error::Precondition {
        committee,
        detail: format!("need P(alpha|mu) = {p} < Q(mu) = {q} < 1"),
    }
}

/// Tracks precondition status while bounds are assembled.
struct PreconditionTracker {
    policy: PreconditionPolicy,
    violated: Vec<usize>,
    never_fails: usize,
}

impl PreconditionTracker {
    fn new(policy: PreconditionPolicy) -> Self {
        PreconditionTracker {
            policy,
            violated: Vec::new(),
            never_fails: 0,
        }
    }

    fn violation(&mut self, committee: usize, q: f64, p: f64) -> Result<()> {
        if self.policy == PreconditionPolicy::Strict {
            return Err(precondition_error(committee, q, p));
        }
        self.violated.push(committee);
        Ok(())
    }

    fn diagnostics(&self) -> Diagnostics {
        let mut notes = Vec::new();
        if !self.violated.is_empty() {
            notes.push(format!(
                "precondition P(alpha|mu) < Q(mu) < 1 fails for {} committee(s); trivial bound used",
                self.violated.len()
            ));
        }
        if self.never_fails > 0 {
            notes.push(format!(
                "{} committee(s) have floor(A N_mu) + 1 > N_mu and never fail",
                self.never_fails
            ));
        }
        Diagnostics {
            precondition_satisfied: self.violated.is_empty(),
            notes,
            ..Diagnostics::default()
        }
    }
}

pub fn theorem1_bounds(query: &FailureQuery) -> Result<Theorem1Bounds> {
    theorem1_bounds_with(query, PreconditionPolicy::default())
}

/// Product-form bounds: the lower bound and the upper bound from the
/// Chernoff tail estimate, plus the refined upper bound with the geometric
/// prefactor `1/(1 - r)`.
pub fn theorem1_bounds_with(query: &FailureQuery, policy: PreconditionPolicy) -> Result<Theorem1Bounds> {
    query.require_open_threshold()?;
    let rates = query.average_rates()?;
    let a = query.threshold;
    let cases = per_committee(&query.layout, rates, |s, p| classify(s, p, a));
    let mut tracker = PreconditionTracker::new(policy);
    // Each entry is ln of a per-committee tail bound.
    let mut lower = Vec::with_capacity(cases.len());
    let mut ash = Vec::with_capacity(cases.len());
    let mut ferrante = Vec::with_capacity(cases.len());
    for (mu, (case, &size)) in cases.iter().zip(query.layout.sizes()).enumerate() {
        let n = size as f64;
        match *case {
            CommitteeBoundCase::NeverFails => {
                tracker.never_fails += 1;
                lower.push(f64::NEG_INFINITY);
                ash.push(f64::NEG_INFINITY);
                ferrante.push(f64::NEG_INFINITY);
            }
            CommitteeBoundCase::Valid { q, p, ln_chernoff } => {
                let var = q * (1.0 - q);
                lower.push((ln_chernoff - 0.5 * (8.0 * n * var).ln()).min(0.0));
                ash.push(ln_chernoff.min(0.0));
                let r = p * (1.0 - q) / (q * (1.0 - p));
                let ln_f = ln_chernoff
                    - (-r).ln_1p()
                    - 0.5 * (2.0 * std::f64::consts::PI * var * n).ln();
                ferrante.push(ln_f.min(0.0));
            }
            CommitteeBoundCase::Violated { q, p } => {
                tracker.violation(mu, q, p)?;
                lower.push(f64::NEG_INFINITY);
                ash.push(0.0);
                ferrante.push(0.0);
            }
        }
    }
    let combine = |method: Method, tails: &[f64]| {
        let survival: f64 = tails.iter().map(|&t| log1m_exp(t)).sum();
        DeltaResult::from_log_survival(method, survival, tracker.diagnostics())
    };
    Ok(Theorem1Bounds {
        lower: combine(Method::Theorem1Lower, &lower),
        upper_ash: combine(Method::Theorem1UpperAsh, &ash),
        upper_ferrante: combine(Method::Theorem1UpperFerrante, &ferrante),
    })
}

/// Sum of `e^{-N_mu D(Q(mu) || P(alpha|mu))}` over committees.
pub fn union_bound_fixed_sizes(query: &FailureQuery) -> Result<DeltaResult> {
    union_bound_fixed_sizes_with(query, PreconditionPolicy::default())
}

pub fn union_bound_fixed_sizes_with(query: &FailureQuery, policy: PreconditionPolicy) -> Result<DeltaResult> {
    query.require_open_threshold()?;
    let rates = query.average_rates()?;
    let a = query.threshold;
    let cases = per_committee(&query.layout, rates, |s, p| classify(s, p, a));
    let mut tracker = PreconditionTracker::new(policy);
    let mut raw = f64::NEG_INFINITY;
    for (mu, case) in cases.iter().enumerate() {
        let term = match *case {
            CommitteeBoundCase::NeverFails => {
                tracker.never_fails += 1;
                f64::NEG_INFINITY
            }
            CommitteeBoundCase::Valid { ln_chernoff, .. } => ln_chernoff,
            CommitteeBoundCase::Violated { q, p } => {
                tracker.violation(mu, q, p)?;
                0.0
            }
        };
        raw = log_add_exp(raw, term);
    }
    Ok(DeltaResult::from_log_delta(
        Method::UnionFixed,
        raw,
        tracker.diagnostics(),
    ))
}

/// How `Q(mu)` is chosen when committee sizes are themselves random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiltRule {
    /// Evaluate `Q(mu)` at the expected size `round(N P(mu))`.
    ExpectedSize,
    /// Evaluate `Q(mu)` at the given sizes.
    Sizes(Vec<u64>),
    /// Use the given `Q(mu)` directly.
    Explicit(Vec<f64>),
}

/// Union bounds for committees of random size: the `Phi` form and the
/// looser form with `phi = 1 - e^{-D}`.
pub fn union_bound_random_sizes(
    nodes: u64,
    committee_probs: &[Rate],
    rates: &[Rate],
    threshold: Rate,
    rule: &TiltRule,
) -> Result<(DeltaResult, DeltaResult)> {
    union_bound_random_sizes_with(
        nodes,
        committee_probs,
        rates,
        threshold,
        rule,
        PreconditionPolicy::default(),
    )
}

pub fn union_bound_random_sizes_with(
    nodes: u64,
    committee_probs: &[Rate],
    rates: &[Rate],
    threshold: Rate,
    rule: &TiltRule,
    policy: PreconditionPolicy,
) -> Result<(DeltaResult, DeltaResult)> {
    let k = committee_probs.len();
    if k == 0 || rates.len() != k {
        return Err(Error::Domain(format!(
            "{k} committee probabilities but {} adversary rates",
            rates.len()
        )));
    }
    let norm: f64 = committee_probs.iter().map(|p| p.value()).sum();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "committee probabilities sum to {norm}, not 1"
        )));
    }
    let a = threshold.value();
    if a <= 0.0 || a >= 1.0 {
        return Err(Error::Domain(format!("bounds need 0 < A < 1, got {a}")));
    }
    let tilts: Vec<f64> = match rule {
        TiltRule::ExpectedSize => committee_probs
            .iter()
            .map(|pm| {
                let size = crate::partitions::round_count(nodes, *pm).max(1);
                tilted_rate(threshold, size)
            })
            .collect(),
        TiltRule::Sizes(sizes) if sizes.len() == k && sizes.iter().all(|&s| s > 0) => {
            sizes.iter().map(|&s| tilted_rate(threshold, s)).collect()
        }
        TiltRule::Explicit(q) if q.len() == k => q.clone(),
        _ => {
            return Err(Error::Domain(
                "tilt rule does not match the committee count".into(),
            ))
        }
    };
    let mut tracker = PreconditionTracker::new(policy);
    let n = nodes as f64;
    let mut phi_form = f64::NEG_INFINITY;
    let mut simple_form = f64::NEG_INFINITY;
    for mu in 0..k {
        let (q, p, pm) = (tilts[mu], rates[mu].value(), committee_probs[mu].value());
        let (t_phi, t_simple) = if p < q && q < 1.0 {
            let d = kl(q, p);
            // Phi = -ln(P(mu) e^{-D} + 1 - P(mu))
            let big_phi = -(pm * (-d).exp_m1()).ln_1p();
            let small_phi = -(-d).exp_m1();
            (-n * big_phi, -n * pm * small_phi)
        } else {
            tracker.violation(mu, q, p)?;
            (0.0, 0.0)
        };
        phi_form = log_add_exp(phi_form, t_phi);
        simple_form = log_add_exp(simple_form, t_simple);
    }
    Ok((
        DeltaResult::from_log_delta(Method::UnionRandom, phi_form, tracker.diagnostics()),
        DeltaResult::from_log_delta(Method::UnionRandomSimple, simple_form, tracker.diagnostics()),
    ))
}

/// Union bounds for the exact model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypergeometricUnionBounds {
    /// Sum of the exact univariate hypergeometric tails.
    pub exact_tail_sum: DeltaResult,
    /// Sum of `e^{-N_mu D(Q(mu) || M/N)}`.
    pub hoeffding: DeltaResult,
}

/// `ln P(N^alpha_mu >= fail_at)` under the univariate marginal.
pub(crate) fn hypergeometric_log_tail(size: u64, total: u64, m: u64, fail_at: u64) -> f64 {
    let top = size.min(m);
    if fail_at > top {
        return f64::NEG_INFINITY;
    }
    let terms: Vec<f64> = (fail_at..=top)
        .map(|x| marginal_by_committee(x, size, total, m))
        .collect();
    log_sum_exp(&terms)
}

pub fn union_bound_hypergeometric(query: &FailureQuery) -> Result<HypergeometricUnionBounds> {
    union_bound_hypergeometric_with(query, PreconditionPolicy::default())
}

pub fn union_bound_hypergeometric_with(
    query: &FailureQuery,
    policy: PreconditionPolicy,
) -> Result<HypergeometricUnionBounds> {
    let m = query.exact_count()?;
    let total = query.layout.total();
    let a = query.threshold;
    let rate = Rate::new(m as f64 / total as f64)?;
    let uniform = AverageRates::Uniform(rate);

    let tails = per_committee(&query.layout, &uniform, |s, _| {
        hypergeometric_log_tail(s, total, m, failure_threshold(a, s))
    });
    let tail_sum = tails.iter().fold(f64::NEG_INFINITY, |acc, &t| log_add_exp(acc, t));

    let mut tracker = PreconditionTracker::new(policy);
    let cases = per_committee(&query.layout, &uniform, |s, p| classify(s, p, a));
    let mut hoeffding = f64::NEG_INFINITY;
    for (mu, case) in cases.iter().enumerate() {
        let term = match *case {
            CommitteeBoundCase::NeverFails => {
                tracker.never_fails += 1;
                f64::NEG_INFINITY
            }
            CommitteeBoundCase::Valid { ln_chernoff, .. } => ln_chernoff,
            CommitteeBoundCase::Violated { q, p } => {
                tracker.violation(mu, q, p)?;
                0.0
            }
        };
        hoeffding = log_add_exp(hoeffding, term);
    }
    Ok(HypergeometricUnionBounds {
        exact_tail_sum: DeltaResult::from_log_delta(
            Method::UnionHyperExact,
            tail_sum,
            Diagnostics::default(),
        ),
        hoeffding: DeltaResult::from_log_delta(
            Method::UnionHyperHoeffding,
            hoeffding,
            tracker.diagnostics(),
        ),
    })
}
