//! Seeded Monte Carlo estimates of `delta`.
//!
//! Sample `i` draws from its own ChaCha stream (`seed`, stream `i`), so a run
//! is a pure function of the plan and does not depend on how many workers
//! share the samples.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::failure::{failure_threshold, FailureQuery};
use crate::partitions::{marginal_by_committee, AdversaryModel, AverageRates, CommitteeLayout, CountVector};
use crate::probcore::binomial_log_pmf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub query: FailureQuery,
    pub samples: u64,
    pub seed: u64,
    /// Worker threads; does not affect the result.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub failures: u64,
    pub samples: u64,
    pub delta_hat: f64,
    pub std_error: f64,
    /// 95% interval, clipped to `[0, 1]`.
    pub ci95: (f64, f64),
}

/// One-sided 95% Poisson upper limits for 0..=4 observed events.
const POISSON_UPPER_95: [f64; 5] = [2.996, 4.744, 6.296, 7.754, 9.154];

impl DeltaEstimate {
    pub fn from_counts(failures: u64, samples: u64) -> Self {
        let n = samples as f64;
        let delta_hat = failures as f64 / n;
        let std_error = (delta_hat * (1.0 - delta_hat) / n).sqrt();
        let successes = samples - failures;
        let ci95 = if failures < 5 {
            // Rule of three and its small-count extension.
            (0.0, (POISSON_UPPER_95[failures as usize] / n).min(1.0))
        } else if successes < 5 {
            (1.0 - (POISSON_UPPER_95[successes as usize] / n).min(1.0), 1.0)
        } else {
            let half = 1.96 * std_error;
            ((delta_hat - half).max(0.0), (delta_hat + half).min(1.0))
        };
        DeltaEstimate {
            failures,
            samples,
            delta_hat,
            std_error,
            ci95,
        }
    }
}

/// Independent binomial counts per committee, by CDF inversion.
#[derive(Debug, Clone)]
pub struct AverageSampler {
    tables: Vec<Vec<f64>>,
    /// Table index per committee.
    committee_table: Vec<usize>,
}

impl AverageSampler {
    pub fn new(layout: &CommitteeLayout, rates: &AverageRates) -> Result<Self> {
        if let AverageRates::PerCommittee(r) = rates {
            if r.len() != layout.committee_count() {
                return Err(Error::Domain(format!(
                    "{} rates for {} committees",
                    r.len(),
                    layout.committee_count()
                )));
            }
        }
        let mut index: BTreeMap<(u64, u64), usize> = BTreeMap::new();
        let mut tables = Vec::new();
        let committee_table = layout
            .sizes()
            .iter()
            .enumerate()
            .map(|(mu, &size)| {
                let p = rates.rate(mu).value();
                *index.entry((size, p.to_bits())).or_insert_with(|| {
                    tables.push(binomial_cdf_table(size, p));
                    tables.len() - 1
                })
            })
            .collect();
        Ok(AverageSampler {
            tables,
            committee_table,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, committee: usize, rng: &mut R) -> u64 {
        let cdf = &self.tables[self.committee_table[committee]];
        let u: f64 = rng.random();
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CountVector {
        CountVector((0..self.committee_table.len()).map(|mu| self.draw(mu, rng)).collect())
    }

    /// Draws committees in order until one reaches its `fail_at` count.
    pub fn fails<R: Rng + ?Sized>(&self, fail_at: &[u64], rng: &mut R) -> bool {
        (0..self.committee_table.len()).any(|mu| self.draw(mu, rng) >= fail_at[mu])
    }
}

fn binomial_cdf_table(n: u64, p: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = (0..=n)
        .map(|j| {
            acc += binomial_log_pmf(n, p, j).exp();
            acc
        })
        .collect();
    *cdf.last_mut().expect("n + 1 entries") = f64::INFINITY;
    cdf
}

/// Multivariate hypergeometric counts from sequential univariate draws.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    sizes: Vec<u64>,
    total: u64,
    adversaries: u64,
}

impl ExactSampler {
    pub fn new(layout: &CommitteeLayout, adversaries: u64) -> Result<Self> {
        if adversaries > layout.total() {
            return Err(Error::Domain(format!(
                "{adversaries} adversaries among {} nodes",
                layout.total()
            )));
        }
        Ok(ExactSampler {
            sizes: layout.sizes().to_vec(),
            total: layout.total(),
            adversaries,
        })
    }

    /// Visits committee counts in order; stops early when `visit` returns true.
    fn walk<R: Rng + ?Sized>(&self, rng: &mut R, mut visit: impl FnMut(usize, u64) -> bool) -> bool {
        let mut pool = self.total;
        let mut left = self.adversaries;
        for (mu, &size) in self.sizes.iter().enumerate() {
            let x = hypergeometric_draw(pool, left, size, rng);
            if visit(mu, x) {
                return true;
            }
            pool -= size;
            left -= x;
        }
        false
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CountVector {
        let mut counts = Vec::with_capacity(self.sizes.len());
        self.walk(rng, |_, x| {
            counts.push(x);
            false
        });
        CountVector(counts)
    }

    pub fn fails<R: Rng + ?Sized>(&self, fail_at: &[u64], rng: &mut R) -> bool {
        self.walk(rng, |mu, x| x >= fail_at[mu])
    }
}

/// Adversaries among `draws` nodes taken without replacement from `pool`
/// nodes holding `marked` adversaries. Inversion outward from the mode.
fn hypergeometric_draw<R: Rng + ?Sized>(pool: u64, marked: u64, draws: u64, rng: &mut R) -> u64 {
    let lo_support = (draws + marked).saturating_sub(pool);
    let hi_support = draws.min(marked);
    let u: f64 = rng.random();
    if lo_support == hi_support {
        return lo_support;
    }
    let mode = (((draws + 1) as f64 * (marked + 1) as f64 / (pool + 2) as f64) as u64)
        .clamp(lo_support, hi_support);
    let p_mode = marginal_by_committee(mode, draws, pool, marked).exp();
    let (n, m, s) = (pool as f64, marked as f64, draws as f64);

    let mut u = u - p_mode;
    if u < 0.0 {
        return mode;
    }
    let (mut lo, mut hi) = (mode, mode);
    let (mut p_lo, mut p_hi) = (p_mode, p_mode);
    while lo > lo_support || hi < hi_support {
        if lo > lo_support {
            let x = lo as f64;
            p_lo *= x * (n - m - s + x) / ((m - x + 1.0) * (s - x + 1.0));
            lo -= 1;
            u -= p_lo;
            if u < 0.0 {
                return lo;
            }
        }
        if hi < hi_support {
            let x = hi as f64;
            p_hi *= (m - x) * (s - x) / ((x + 1.0) * (n - m - s + x + 1.0));
            hi += 1;
            u -= p_hi;
            if u < 0.0 {
                return hi;
            }
        }
    }
    // Rounding left a sliver of mass unassigned.
    mode
}

pub fn sample_counts_average<R: Rng + ?Sized>(
    layout: &CommitteeLayout,
    rates: &AverageRates,
    rng: &mut R,
) -> Result<CountVector> {
    Ok(AverageSampler::new(layout, rates)?.sample(rng))
}

pub fn sample_counts_exact<R: Rng + ?Sized>(
    layout: &CommitteeLayout,
    adversaries: u64,
    rng: &mut R,
) -> Result<CountVector> {
    Ok(ExactSampler::new(layout, adversaries)?.sample(rng))
}

enum Sampler {
    Average(AverageSampler),
    Exact(ExactSampler),
}

impl Sampler {
    fn fails(&self, fail_at: &[u64], rng: &mut ChaCha8Rng) -> bool {
        match self {
            Sampler::Average(s) => s.fails(fail_at, rng),
            Sampler::Exact(s) => s.fails(fail_at, rng),
        }
    }
}

const CHUNK: u64 = 1 << 12;

/// Generator for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn estimate_delta(plan: &SimulationPlan) -> Result<DeltaEstimate> {
    if plan.samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    if plan.workers == 0 {
        return Err(Error::Domain("need at least one worker".into()));
    }
    let query = &plan.query;
    let sampler = match &query.adversary {
        AdversaryModel::Average(rates) => Sampler::Average(AverageSampler::new(&query.layout, rates)?),
        AdversaryModel::Exact { count } => Sampler::Exact(ExactSampler::new(&query.layout, *count)?),
    };
    let fail_at: Vec<u64> = query
        .layout
        .sizes()
        .iter()
        .map(|&s| failure_threshold(query.threshold, s))
        .collect();
    let base = ChaCha8Rng::seed_from_u64(plan.seed);

    let run_chunk = |chunk: u64| -> u64 {
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(plan.samples);
        (start..end)
            .filter(|&i| {
                let mut rng = base.clone();
                rng.set_stream(i);
                sampler.fails(&fail_at, &mut rng)
            })
            .count() as u64
    };
    let chunks = plan.samples.div_ceil(CHUNK);
    let failures = if plan.workers == 1 {
        (0..chunks).map(run_chunk).sum()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.workers)
            .build()
            .map_err(|e| Error::Numeric(format!("worker pool: {e}")))?;
        pool.install(|| (0..chunks).into_par_iter().map(run_chunk).sum())
    };
    Ok(DeltaEstimate::from_counts(failures, plan.samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probcore::Rate;

    fn layout(sizes: &[u64]) -> CommitteeLayout {
        CommitteeLayout::new(sizes.to_vec()).unwrap()
    }

    #[test]
    fn degenerate_rates() {
        let l = layout(&[3, 4, 5]);
        let mut rng = sample_rng(1, 0);
        let zero = AverageRates::Uniform(Rate::new(0.0).unwrap());
        let one = AverageRates::Uniform(Rate::new(1.0).unwrap());
        for _ in 0..100 {
            assert_eq!(sample_counts_average(&l, &zero, &mut rng).unwrap().0, vec![0, 0, 0]);
            assert_eq!(sample_counts_average(&l, &one, &mut rng).unwrap().0, vec![3, 4, 5]);
            assert_eq!(sample_counts_exact(&l, 0, &mut rng).unwrap().0, vec![0, 0, 0]);
            assert_eq!(sample_counts_exact(&l, 12, &mut rng).unwrap().0, vec![3, 4, 5]);
        }
    }

    #[test]
    fn exact_counts_sum_to_m() {
        let l = layout(&[7, 3, 11, 1, 9]);
        let mut rng = sample_rng(5, 0);
        for m in 0..=31 {
            for _ in 0..50 {
                assert_eq!(sample_counts_exact(&l, m, &mut rng).unwrap().total(), m);
            }
        }
    }

    #[test]
    fn interval_fallbacks() {
        let e = DeltaEstimate::from_counts(0, 1000);
        assert_eq!(e.ci95, (0.0, 2.996e-3));
        let e = DeltaEstimate::from_counts(1000, 1000);
        assert_eq!(e.delta_hat, 1.0);
        assert!((e.ci95.0 - (1.0 - 2.996e-3)).abs() < 1e-15 && e.ci95.1 == 1.0);
        let e = DeltaEstimate::from_counts(500, 1000);
        assert!((e.ci95.1 - e.ci95.0 - 2.0 * 1.96 * e.std_error).abs() < 1e-15);
        let e = DeltaEstimate::from_counts(1, 1);
        assert_eq!(e.ci95, (0.0, 1.0));
    }

    #[test]
    fn zero_rate_never_fails() {
        let q = FailureQuery::average_split(100, 7, Rate::new(0.0).unwrap(), Rate::ratio(1, 3).unwrap())
            .unwrap();
        let plan = SimulationPlan {
            query: q,
            samples: 10_000,
            seed: 3,
            workers: 1,
        };
        assert_eq!(estimate_delta(&plan).unwrap().delta_hat, 0.0);
    }
}
