//! Saddle-point asymptotics for the exact adversary model.
//!
//! The survival probability `[z^M] prod_mu phi_A(z | N_mu) / C(N, M)` is
//! approximated at large `N` by
//!
//! ```text
//! sqrt(N P (1 - P) / sum_mu Var_mu) * exp(N Psi[Q])
//! ```
//!
//! where `P = M / N`, `Var_mu` is the variance of a `Binomial(N_mu, Q)`
//! truncated to `j <= floor(A N_mu)`, and `Q` is the tilt at which the
//! truncated means average to `P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::failure::{DeltaResult, Diagnostics, Method};
use crate::partitions::CommitteeLayout;
use crate::probcore::{binomial_log_pmf, kl, ln_choose, Rate};

const BRACKET_LO: f64 = 1e-12;
const BRACKET_HI: f64 = 1.0 - 1e-12;
const RESIDUAL_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200;

/// Moments of `Binomial(n, Q)` conditioned on `j <= floor(A n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedBinomialSummary {
    /// `ln P(j <= floor(A n))` under the untruncated law.
    pub log_mass: f64,
    pub mean: f64,
    pub second_moment: f64,
    /// Central second moment, accumulated directly rather than as
    /// `second_moment - mean^2`.
    pub variance: f64,
    /// Whether the truncation point is below `n`.
    pub truncated: bool,
}

/// Computes the truncated summary for a committee of `committee_size`.
pub fn truncated_binomial_summary(committee_size: u64, q: Rate, a: Rate) -> TruncatedBinomialSummary {
    let top = a.floor_mul(committee_size).min(committee_size);
    summarize(committee_size, q.value(), top)
}

fn summarize(n: u64, q: f64, top: u64) -> TruncatedBinomialSummary {
    let logs: Vec<f64> = (0..=top).map(|j| binomial_log_pmf(n, q, j)).collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|&l| (l - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mean = weights
        .iter()
        .enumerate()
        .map(|(j, w)| j as f64 * w)
        .sum::<f64>()
        / total;
    let variance = weights
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let d = j as f64 - mean;
            d * d * w
        })
        .sum::<f64>()
        / total;
    TruncatedBinomialSummary {
        log_mass: (peak + total.ln()).min(0.0),
        mean,
        second_moment: variance + mean * mean,
        variance,
        truncated: top < n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    /// Tilt `Q` solving `P = (1/N) sum_mu <N^alpha>_{A,Q,N_mu}`.
    pub q: f64,
    /// `Psi[Q] = D(P || Q) + (1/N) sum_mu log_mass_mu`.
    pub psi: f64,
    /// `sum_mu Var_mu` under the truncated `Q`-binomials.
    pub variance_sum: f64,
    /// `|P - (1/N) sum_mu <N^alpha>|` at the returned `Q`.
    pub mean_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Committees whose truncation point reaches their size.
    pub unconstrained_committees: usize,
}

impl SaddleSolution {
    /// `ln sqrt(N P (1 - P) / variance_sum)`.
    pub fn ln_prefactor(&self, nodes: u64, p: f64) -> f64 {
        0.5 * ((nodes as f64 * p * (1.0 - p)).ln() - self.variance_sum.ln())
    }
}

/// Per-size-class evaluation of the saddle quantities.
struct Classes {
    classes: Vec<(u64, usize, u64)>,
    nodes: f64,
}

impl Classes {
    fn new(layout: &CommitteeLayout, a: Rate) -> Self {
        let classes = layout
            .size_classes()
            .into_iter()
            .map(|(size, count)| (size, count, a.floor_mul(size).min(size)))
            .collect();
        Classes {
            classes,
            nodes: layout.total() as f64,
        }
    }

    fn summaries(&self, q: f64) -> Vec<(TruncatedBinomialSummary, usize)> {
        self.classes
            .iter()
            .map(|&(size, count, top)| (summarize(size, q, top), count))
            .collect()
    }

    fn average_mean(&self, q: f64) -> f64 {
        self.summaries(q)
            .iter()
            .map(|(s, c)| s.mean * *c as f64)
            .sum::<f64>()
            / self.nodes
    }

    /// Upper end of the range of the average truncated mean.
    fn mean_ceiling(&self) -> f64 {
        self.classes
            .iter()
            .map(|&(_, count, top)| (top * count as u64) as f64)
            .sum::<f64>()
            / self.nodes
    }

    fn untruncated(&self) -> bool {
        self.classes.iter().all(|&(size, _, top)| top >= size)
    }

    fn unconstrained(&self) -> usize {
        self.classes
            .iter()
            .filter(|&&(size, _, top)| top >= size)
            .map(|&(_, c, _)| c)
            .sum()
    }
}

/// Solves the saddle equation by bisection on `Q`.
///
/// The truncated mean is strictly increasing in `Q` (it is the mean of an
/// exponential tilt), so the root is unique when it exists.
pub fn solve_saddle(layout: &CommitteeLayout, p: Rate, a: Rate) -> Result<SaddleSolution> {
    let pv = p.value();
    let av = a.value();
    if pv <= 0.0 || pv >= 1.0 {
        return Err(Error::Domain(format!("saddle needs 0 < P < 1, got {pv}")));
    }
    if pv >= av {
        return Err(Error::NoSaddle { p: pv, a: av });
    }
    let classes = Classes::new(layout, a);
    if pv >= classes.mean_ceiling() {
        return Err(Error::NoSaddle {
            p: pv,
            a: classes.mean_ceiling(),
        });
    }

    let (q, iterations) = if classes.untruncated() {
        (pv, 0)
    } else {
        let (mut lo, mut hi) = (BRACKET_LO, BRACKET_HI);
        let mut best = (f64::INFINITY, 0.5);
        let mut iterations = 0;
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            let f = classes.average_mean(mid) - pv;
            if f.abs() < best.0 {
                best = (f.abs(), mid);
            }
            if f < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        (best.1, iterations)
    };

    let summaries = classes.summaries(q);
    let mean: f64 = summaries.iter().map(|(s, c)| s.mean * *c as f64).sum::<f64>() / classes.nodes;
    let log_mass: f64 = summaries.iter().map(|(s, c)| s.log_mass * *c as f64).sum();
    let variance_sum: f64 = summaries.iter().map(|(s, c)| s.variance * *c as f64).sum();
    let residual = (pv - mean).abs();
    Ok(SaddleSolution {
        q,
        psi: kl(pv, q) + log_mass / classes.nodes,
        variance_sum,
        mean_residual: residual,
        converged: residual <= RESIDUAL_TOL,
        iterations,
        unconstrained_committees: classes.unconstrained(),
    })
}

/// Second `z`-derivative of `Psi_A(z) = -P ln z + (1/N) sum_mu ln phi_A(z | N_mu)`.
///
/// Evaluated from the raw generating-function sums `phi`, `phi'` and `phi''`
/// with weights `C(N_mu, j) z^j`, independently of the `Q`-moment route.
pub fn psi_second_derivative(layout: &CommitteeLayout, p: f64, a: Rate, z: f64) -> f64 {
    let nodes = layout.total() as f64;
    let lz = z.ln();
    let mut acc = 0.0;
    for (size, count) in layout.size_classes() {
        let top = a.floor_mul(size).min(size);
        let logs: Vec<f64> = (0..=top).map(|j| ln_choose(size, j) + j as f64 * lz).collect();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut phi, mut dphi, mut ddphi) = (0.0, 0.0, 0.0);
        for (j, l) in logs.iter().enumerate() {
            let w = (l - peak).exp();
            let j = j as f64;
            phi += w;
            dphi += j * w;
            ddphi += j * (j - 1.0) * w;
        }
        // z phi'/phi and z^2 phi''/phi in the common scale.
        let first = dphi / phi;
        let second = ddphi / phi;
        acc += count as f64 * (second - first * first) / (z * z);
    }
    p / (z * z) + acc / nodes
}

/// Prefactor in the ratio form `(z0(1) / z0(A)) sqrt(Psi_1'' / Psi_A'')`.
pub fn prefactor_ratio_form(layout: &CommitteeLayout, p: f64, a: Rate, q: f64) -> f64 {
    let one = Rate::ratio(1, 1).expect("1/1 is a rate");
    let z_a = q / (1.0 - q);
    let z_1 = p / (1.0 - p);
    let curvature_a = psi_second_derivative(layout, p, a, z_a);
    let curvature_1 = psi_second_derivative(layout, p, one, z_1);
    (z_1 / z_a) * (curvature_1 / curvature_a).sqrt()
}

/// Leading-order saddle-point estimate of `delta` for `M` adversaries.
pub fn delta_asymptotic(layout: &CommitteeLayout, adversaries: u64, a: Rate) -> Result<DeltaResult> {
    let nodes = layout.total();
    if adversaries == 0 || adversaries >= nodes {
        return Err(Error::Domain(format!(
            "asymptotic needs 0 < M < N, got M = {adversaries}, N = {nodes}"
        )));
    }
    let p = adversaries as f64 / nodes as f64;
    let solution = solve_saddle(layout, Rate::new(p)?, a)?;
    let mut diagnostics = Diagnostics::default();
    if !solution.converged {
        diagnostics.notes.push(format!(
            "saddle residual {:.3e} above tolerance",
            solution.mean_residual
        ));
    }
    if solution.unconstrained_committees > 0 && solution.unconstrained_committees < layout.committee_count() {
        diagnostics.notes.push(format!(
            "{} committee(s) have floor(A N_mu) = N_mu and are unconstrained",
            solution.unconstrained_committees
        ));
    }
    let survival = if solution.unconstrained_committees == layout.committee_count() {
        0.0
    } else {
        solution.ln_prefactor(nodes, p) + nodes as f64 * solution.psi
    };
    if survival.is_nan() {
        return Err(Error::Numeric(format!(
            "asymptotic survival is NaN (Q = {}, psi = {}, variance_sum = {})",
            solution.q, solution.psi, solution.variance_sum
        )));
    }
    Ok(DeltaResult::from_log_survival(
        Method::Asymptotic,
        survival,
        diagnostics,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: f64) -> Rate {
        Rate::new(v).unwrap()
    }

    fn frac(n: u64, d: u64) -> Rate {
        Rate::ratio(n, d).unwrap()
    }

    #[test]
    fn untruncated_summary() {
        let s = truncated_binomial_summary(12, r(0.3), frac(1, 1));
        assert!(s.log_mass.abs() < 1e-15);
        assert!((s.mean - 3.6).abs() < 1e-13);
        assert!((s.second_moment - (12.0 * 0.3 * 0.7 + 3.6 * 3.6)).abs() < 1e-12);
        assert!(!s.truncated);
    }

    #[test]
    fn truncated_summary_examples() {
        let s = truncated_binomial_summary(2, r(0.5), frac(1, 2));
        assert!((s.log_mass.exp() - 0.75).abs() < 1e-15);
        assert!((s.mean - 2.0 / 3.0).abs() < 1e-15);
        // E[j^2] = 0.5 / 0.75
        assert!((s.second_moment - 2.0 / 3.0).abs() < 1e-15);

        let s = truncated_binomial_summary(5, r(0.25), frac(1, 3));
        assert!((s.log_mass.exp() - 0.6328125).abs() < 1e-15);
        assert!((s.mean - 0.625).abs() < 1e-15);
        assert!(s.second_moment >= s.mean * s.mean);
    }

    #[test]
    fn saddle_at_full_threshold_is_closed_form() {
        let layout = CommitteeLayout::from_split(103, 7).unwrap();
        let s = solve_saddle(&layout, r(0.25), frac(1, 1)).unwrap();
        assert_eq!(s.q, 0.25);
        assert!(s.psi.abs() < 1e-15);
        let want = 103.0 * 0.25 * 0.75;
        assert!(((s.variance_sum - want) / want).abs() < 1e-12);
    }

    #[test]
    fn saddle_matches_grid_scan() {
        let layout = CommitteeLayout::new(vec![5, 5]).unwrap();
        // floor(5/3) = 1 caps the truncated mean at 1 = 0.2 * 5, reached only as Q -> 1.
        assert!(matches!(
            solve_saddle(&layout, r(0.2), frac(1, 3)),
            Err(Error::NoSaddle { .. })
        ));
        let s = solve_saddle(&layout, r(0.15), frac(1, 3)).unwrap();
        assert!(s.converged);
        // Brute-force scan of the per-committee truncated mean on a 1e-6 grid.
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..1_000_000u32 {
            let q = i as f64 * 1e-6;
            let w: Vec<f64> = (0..=1u64)
                .map(|j| {
                    let c = if j == 0 { 1.0 } else { 5.0 };
                    c * q.powi(j as i32) * (1.0 - q).powi(5 - j as i32)
                })
                .collect();
            let mean = w[1] / (w[0] + w[1]);
            let err = (mean / 5.0 - 0.15).abs();
            if err < best.0 {
                best = (err, q);
            }
        }
        assert!((s.q - best.1).abs() < 1e-6, "{} vs {}", s.q, best.1);
    }

    #[test]
    fn saddle_mixed_sizes_residual() {
        let layout = CommitteeLayout::new(vec![3, 4]).unwrap();
        let s = solve_saddle(&layout, r(0.1), frac(1, 3)).unwrap();
        assert!(s.mean_residual <= 1e-12);
        assert!(s.converged);
        assert!(s.q > 0.0 && s.q < 1.0);
        assert!(s.psi.is_finite());
    }

    #[test]
    fn saddle_rejects_out_of_range() {
        let layout = CommitteeLayout::new(vec![6, 6]).unwrap();
        assert!(matches!(
            solve_saddle(&layout, r(0.4), frac(1, 3)),
            Err(Error::NoSaddle { .. })
        ));
        assert!(matches!(
            solve_saddle(&layout, frac(1, 3), frac(1, 3)),
            Err(Error::NoSaddle { .. })
        ));
        assert!(matches!(
            solve_saddle(&layout, r(0.0), frac(1, 3)),
            Err(Error::Domain(_))
        ));
        // P < A but above sum floor(A N_mu) / N = 2/7.
        let layout = CommitteeLayout::new(vec![7]).unwrap();
        assert!(solve_saddle(&layout, r(0.3), frac(1, 3)).is_err());
    }

    #[test]
    fn prefactor_forms_agree() {
        let layout = CommitteeLayout::from_split(1000, 37).unwrap();
        let s = solve_saddle(&layout, r(0.25), frac(1, 3)).unwrap();
        let direct = s.ln_prefactor(1000, 0.25).exp();
        let ratio = prefactor_ratio_form(&layout, 0.25, frac(1, 3), s.q);
        assert!(((direct - ratio) / direct).abs() < 1e-10, "{direct} vs {ratio}");
    }

    #[test]
    fn asymptotic_at_full_threshold_is_zero() {
        let layout = CommitteeLayout::from_split(100, 4).unwrap();
        let d = delta_asymptotic(&layout, 25, frac(1, 1)).unwrap();
        assert_eq!(d.delta(), 0.0);
        assert_eq!(d.log_survival, 0.0);
    }

    #[test]
    fn asymptotic_small_instance_is_finite() {
        let layout = CommitteeLayout::new(vec![5, 5]).unwrap();
        let d = delta_asymptotic(&layout, 2, frac(1, 2)).unwrap();
        let exact = crate::failure::delta_exact_hypergeometric(
            &crate::failure::FailureQuery::new(
                layout,
                crate::partitions::AdversaryModel::Exact { count: 2 },
                frac(1, 2),
            )
            .unwrap(),
        )
        .unwrap();
        assert!(d.delta() >= 0.0 && d.delta() <= 1.0);
        assert!((d.delta() - exact.delta()).abs() < 0.5);
    }

    #[test]
    fn asymptotic_errors() {
        let layout = CommitteeLayout::new(vec![5, 5]).unwrap();
        assert!(delta_asymptotic(&layout, 0, frac(1, 2)).is_err());
        assert!(delta_asymptotic(&layout, 10, frac(1, 2)).is_err());
        assert!(matches!(
            delta_asymptotic(&layout, 5, frac(1, 3)),
            Err(Error::NoSaddle { .. })
        ));
    }
}
