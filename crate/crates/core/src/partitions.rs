//! Committee layouts and the distributions of adversarial counts over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::{binomial_log_pmf, ln_choose, LogProb, Rate};

/// Fixed committee sizes `N_1..N_K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeLayout {
    sizes: Vec<u64>,
    total: u64,
}

impl CommitteeLayout {
    /// Builds a layout from explicit sizes, kept in the order given.
    pub fn new(sizes: Vec<u64>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Domain("layout needs at least one committee".into()));
        }
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Domain(format!("committee {pos} is empty")));
        }
        let total = sizes.iter().sum();
        Ok(CommitteeLayout { sizes, total })
    }

    /// `N = nK + r`: `K - r` committees of `n` followed by `r` committees of `n + 1`.
    pub fn from_split(nodes: u64, committees: u64) -> Result<Self> {
        if committees == 0 || committees > nodes {
            return Err(Error::Domain(format!(
                "cannot split {nodes} nodes into {committees} non-empty committees"
            )));
        }
        let n = nodes / committees;
        let r = nodes % committees;
        let mut sizes = vec![n; (committees - r) as usize];
        sizes.extend(std::iter::repeat_n(n + 1, r as usize));
        Ok(CommitteeLayout {
            sizes,
            total: nodes,
        })
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn committee_count(&self) -> usize {
        self.sizes.len()
    }

    /// `(n, r)` if the layout is an `N = nK + r` split.
    pub fn split(&self) -> Option<(u64, u64)> {
        let k = self.sizes.len() as u64;
        let n = self.total / k;
        let r = self.total % k;
        let expected = (0..k).map(|i| if i < k - r { n } else { n + 1 });
        self.sizes.iter().copied().eq(expected).then_some((n, r))
    }

    /// Distinct sizes with their multiplicities, in order of first appearance.
    pub fn size_classes(&self) -> Vec<(u64, usize)> {
        let mut classes: Vec<(u64, usize)> = Vec::new();
        for &s in &self.sizes {
            match classes.iter_mut().find(|(size, _)| *size == s) {
                Some((_, count)) => *count += 1,
                None => classes.push((s, 1)),
            }
        }
        classes
    }
}

/// How adversarial nodes are placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryModel {
    /// Every node in committee `mu` is adversarial independently with rate `P(alpha|mu)`.
    Average(AverageRates),
    /// Exactly `count` adversarial nodes placed without replacement.
    Exact { count: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageRates {
    Uniform(Rate),
    PerCommittee(Vec<Rate>),
}

impl AdversaryModel {
    pub fn uniform(p: Rate) -> Self {
        AdversaryModel::Average(AverageRates::Uniform(p))
    }

    /// `M = round(N * P)` with ties to even; exact when `P` is a fraction.
    pub fn exact_from_fraction(total: u64, p: Rate) -> Self {
        AdversaryModel::Exact {
            count: round_count(total, p),
        }
    }

    /// Checks the model against a layout.
    pub fn validate(&self, layout: &CommitteeLayout) -> Result<()> {
        match self {
            AdversaryModel::Average(AverageRates::Uniform(_)) => Ok(()),
            AdversaryModel::Average(AverageRates::PerCommittee(rates)) => {
                if rates.len() != layout.committee_count() {
                    return Err(Error::Domain(format!(
                        "{} rates for {} committees",
                        rates.len(),
                        layout.committee_count()
                    )));
                }
                Ok(())
            }
            AdversaryModel::Exact { count } => {
                if *count > layout.total() {
                    return Err(Error::Domain(format!(
                        "{count} adversaries among {} nodes",
                        layout.total()
                    )));
                }
                Ok(())
            }
        }
    }
}

impl AverageRates {
    pub fn rate(&self, committee: usize) -> Rate {
        match self {
            AverageRates::Uniform(p) => *p,
            AverageRates::PerCommittee(rates) => rates[committee],
        }
    }

    pub fn uniform_value(&self) -> Option<Rate> {
        match self {
            AverageRates::Uniform(p) => Some(*p),
            AverageRates::PerCommittee(_) => None,
        }
    }
}

/// `round(total * p)`, ties to even.
pub fn round_count(total: u64, p: Rate) -> u64 {
    match p.as_ratio() {
        Some((num, den)) => {
            let prod = total as u128 * num as u128;
            let (q, rem) = (prod / den as u128, prod % den as u128);
            let twice = 2 * rem;
            let up = twice > den as u128 || (twice == den as u128 && q % 2 == 1);
            (q + up as u128) as u64
        }
        None => {
            let x = total as f64 * p.value();
            let r = x.round();
            let r = if (x - x.trunc()).abs() == 0.5 && r % 2.0 != 0.0 {
                r - x.signum()
            } else {
                r
            };
            r as u64
        }
    }
}

/// Adversarial counts `N^alpha_1..N^alpha_K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountVector(pub Vec<u64>);

impl CountVector {
    pub fn validate(&self, layout: &CommitteeLayout) -> Result<()> {
        if self.0.len() != layout.committee_count() {
            return Err(Error::Domain(format!(
                "{} counts for {} committees",
                self.0.len(),
                layout.committee_count()
            )));
        }
        for (mu, (&c, &s)) in self.0.iter().zip(layout.sizes()).enumerate() {
            if c > s {
                return Err(Error::Domain(format!(
                    "committee {mu} holds {c} adversaries but has {s} nodes"
                )));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// Multinomial law of committee sizes given `N` and committee probabilities `P(mu)`.
pub fn multinomial_log_pmf(counts: &[u64], nodes: u64, committee_probs: &[Rate]) -> Result<LogProb> {
    if counts.len() != committee_probs.len() {
        return Err(Error::Domain(format!(
            "{} counts for {} committee probabilities",
            counts.len(),
            committee_probs.len()
        )));
    }
    let norm: f64 = committee_probs.iter().map(|p| p.value()).sum();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "committee probabilities sum to {norm}, not 1"
        )));
    }
    if counts.iter().sum::<u64>() != nodes {
        return Ok(LogProb::ZERO);
    }
    let mut acc = 0.0;
    let mut remaining = nodes;
    for (&c, p) in counts.iter().zip(committee_probs) {
        // N! / prod N_mu! as a chain of binomial coefficients.
        acc += ln_choose(remaining, c);
        remaining -= c;
        if c > 0 {
            if p.value() == 0.0 {
                return Ok(LogProb::ZERO);
            }
            acc += c as f64 * p.value().ln();
        }
    }
    Ok(LogProb::saturating(acc))
}

/// `sum_mu ln Binomial(N^alpha_mu; N_mu, P(alpha|mu))`.
pub fn product_binomial_log_pmf(
    counts: &CountVector,
    layout: &CommitteeLayout,
    rates: &AverageRates,
) -> Result<LogProb> {
    counts.validate(layout)?;
    if let AverageRates::PerCommittee(r) = rates {
        if r.len() != layout.committee_count() {
            return Err(Error::Domain("rate count does not match layout".into()));
        }
    }
    let acc: f64 = counts
        .0
        .iter()
        .zip(layout.sizes())
        .enumerate()
        .map(|(mu, (&c, &s))| binomial_log_pmf(s, rates.rate(mu).value(), c))
        .sum();
    Ok(LogProb::saturating(acc))
}

/// `prod_mu C(N_mu, N^alpha_mu) / C(N, M)` on the slice `sum N^alpha_mu = M`.
pub fn multivariate_hypergeometric_log_pmf(
    counts: &CountVector,
    layout: &CommitteeLayout,
    adversaries: u64,
) -> Result<LogProb> {
    counts.validate(layout)?;
    if adversaries > layout.total() {
        return Err(Error::Domain(format!(
            "{adversaries} adversaries among {} nodes",
            layout.total()
        )));
    }
    if counts.total() != adversaries {
        return Ok(LogProb::ZERO);
    }
    let num: f64 = counts
        .0
        .iter()
        .zip(layout.sizes())
        .map(|(&c, &s)| ln_choose(s, c))
        .sum();
    Ok(LogProb::saturating(num - ln_choose(layout.total(), adversaries)))
}

fn marginal_args_ok(committee_size: u64, total: u64, adversaries: u64) -> Result<()> {
    if committee_size > total || adversaries > total {
        return Err(Error::Domain(format!(
            "marginal needs committee size {committee_size} and M = {adversaries} within N = {total}"
        )));
    }
    Ok(())
}

/// Committee-centred form: `C(N_mu, x) C(N - N_mu, M - x) / C(N, M)`.
pub fn hypergeometric_marginal_by_committee(
    n_alpha: u64,
    committee_size: u64,
    total: u64,
    adversaries: u64,
) -> Result<f64> {
    marginal_args_ok(committee_size, total, adversaries)?;
    Ok(marginal_by_committee(n_alpha, committee_size, total, adversaries))
}

/// Adversary-centred form: `C(M, x) C(N - M, N_mu - x) / C(N, N_mu)`.
pub fn hypergeometric_marginal_by_adversaries(
    n_alpha: u64,
    committee_size: u64,
    total: u64,
    adversaries: u64,
) -> Result<f64> {
    marginal_args_ok(committee_size, total, adversaries)?;
    Ok(marginal_by_adversaries(n_alpha, committee_size, total, adversaries))
}

fn in_support(x: u64, size: u64, total: u64, m: u64) -> bool {
    x <= size && x <= m && m - x <= total - size
}

pub(crate) fn marginal_by_committee(x: u64, size: u64, total: u64, m: u64) -> f64 {
    if !in_support(x, size, total, m) {
        return f64::NEG_INFINITY;
    }
    ln_choose(size, x) + ln_choose(total - size, m - x) - ln_choose(total, m)
}

pub(crate) fn marginal_by_adversaries(x: u64, size: u64, total: u64, m: u64) -> f64 {
    if !in_support(x, size, total, m) {
        return f64::NEG_INFINITY;
    }
    ln_choose(m, x) + ln_choose(total - m, size - x) - ln_choose(total, size)
}

/// Univariate marginal `P(N^alpha_mu = n_alpha | N_mu; M)` of the multivariate hypergeometric.
///
/// Out-of-support arguments give probability zero.
pub fn hypergeometric_marginal_log_pmf(
    n_alpha: u64,
    committee_size: u64,
    total: u64,
    adversaries: u64,
) -> Result<LogProb> {
    marginal_args_ok(committee_size, total, adversaries)?;
    let a = marginal_by_committee(n_alpha, committee_size, total, adversaries);
    debug_assert!({
        let b = marginal_by_adversaries(n_alpha, committee_size, total, adversaries);
        a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0)
    });
    Ok(LogProb::saturating(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: LogProb, p: f64) -> bool {
        (a.prob() - p).abs() < 1e-14
    }

    #[test]
    fn split_examples() {
        let l = CommitteeLayout::from_split(10, 3).unwrap();
        assert_eq!(l.sizes(), &[3, 3, 4]);
        assert_eq!(l.split(), Some((3, 1)));
        assert_eq!(CommitteeLayout::from_split(1000, 4).unwrap().sizes(), &[250; 4]);
        assert_eq!(CommitteeLayout::from_split(7, 7).unwrap().sizes(), &[1; 7]);
        assert!(CommitteeLayout::from_split(3, 4).is_err());
        assert!(CommitteeLayout::from_split(3, 0).is_err());
    }

    #[test]
    fn split_covers_all_nodes() {
        for nodes in (1..=10_000u64).step_by(37) {
            for k in [1, 2, 3, 7, 64, 999, nodes] {
                if k > nodes {
                    continue;
                }
                let l = CommitteeLayout::from_split(nodes, k).unwrap();
                let (n, r) = l.split().unwrap();
                assert_eq!((k - r) * n + r * (n + 1), nodes);
                assert_eq!(l.sizes().iter().sum::<u64>(), nodes);
            }
        }
    }

    #[test]
    fn layout_rejects_empty() {
        assert!(CommitteeLayout::new(vec![]).is_err());
        assert!(CommitteeLayout::new(vec![2, 0]).is_err());
        assert_eq!(CommitteeLayout::new(vec![4, 2]).unwrap().split(), None);
    }

    #[test]
    fn multinomial_examples() {
        let half = Rate::new(0.5).unwrap();
        assert!(close(multinomial_log_pmf(&[1, 1], 2, &[half, half]).unwrap(), 0.5));
        let one = Rate::new(1.0).unwrap();
        let zero = Rate::new(0.0).unwrap();
        assert_eq!(multinomial_log_pmf(&[2, 0], 2, &[one, zero]).unwrap().ln(), 0.0);
        assert!(multinomial_log_pmf(&[1, 2], 2, &[half, half]).unwrap().is_zero());
        assert!(multinomial_log_pmf(&[1, 1], 2, &[half, one]).is_err());
    }

    #[test]
    fn product_binomial_examples() {
        let layout = CommitteeLayout::new(vec![2, 2]).unwrap();
        let half = AverageRates::Uniform(Rate::new(0.5).unwrap());
        let p = product_binomial_log_pmf(&CountVector(vec![1, 1]), &layout, &half).unwrap();
        assert!(close(p, 0.25));
        let p = product_binomial_log_pmf(&CountVector(vec![2, 0]), &layout, &half).unwrap();
        assert!(close(p, 0.0625));
        let zero = AverageRates::Uniform(Rate::new(0.0).unwrap());
        let p = product_binomial_log_pmf(&CountVector(vec![0, 0]), &layout, &zero).unwrap();
        assert_eq!(p.ln(), 0.0);
        assert!(product_binomial_log_pmf(&CountVector(vec![3, 0]), &layout, &half).is_err());
    }

    #[test]
    fn multivariate_hypergeometric_examples() {
        let layout = CommitteeLayout::new(vec![2, 2]).unwrap();
        let p = multivariate_hypergeometric_log_pmf(&CountVector(vec![1, 1]), &layout, 2).unwrap();
        assert!(close(p, 2.0 / 3.0));
        let p = multivariate_hypergeometric_log_pmf(&CountVector(vec![2, 0]), &layout, 2).unwrap();
        assert!(close(p, 1.0 / 6.0));
        let p = multivariate_hypergeometric_log_pmf(&CountVector(vec![1, 0]), &layout, 2).unwrap();
        assert!(p.is_zero());
        assert!(multivariate_hypergeometric_log_pmf(&CountVector(vec![1, 0]), &layout, 5).is_err());
    }

    #[test]
    fn marginal_examples() {
        assert!(close(hypergeometric_marginal_log_pmf(1, 2, 4, 2).unwrap(), 2.0 / 3.0));
        assert_eq!(hypergeometric_marginal_log_pmf(0, 7, 20, 0).unwrap().ln(), 0.0);
        assert!(close(hypergeometric_marginal_log_pmf(2, 2, 4, 2).unwrap(), 1.0 / 6.0));
        // M - x exceeds the nodes outside the committee.
        assert!(hypergeometric_marginal_log_pmf(0, 2, 4, 3).unwrap().is_zero());
        assert!(hypergeometric_marginal_log_pmf(0, 5, 4, 3).is_err());
    }

    #[test]
    fn rounding_half_even() {
        let quarter = Rate::ratio(1, 4).unwrap();
        assert_eq!(round_count(1000, quarter), 250);
        assert_eq!(round_count(10, quarter), 2); // 2.5 -> 2
        assert_eq!(round_count(14, quarter), 4); // 3.5 -> 4
        assert_eq!(round_count(10, Rate::new(0.25).unwrap()), 2);
        assert_eq!(round_count(14, Rate::new(0.25).unwrap()), 4);
        assert_eq!(round_count(13, Rate::new(0.25).unwrap()), 3);
    }
}
