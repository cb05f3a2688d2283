//! Log-domain probability primitives.
//!
//! Everything that crosses a module boundary is carried as a [`LogProb`];
//! linear values are only produced when results are rendered.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Natural logarithm of a probability. `-inf` encodes probability zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    /// Wraps a log-value, rejecting NaN and positive values beyond rounding noise.
    pub fn new(ln: f64) -> Result<Self> {
        if ln.is_nan() || ln > 1e-12 {
            return Err(Error::Domain(format!("{ln} is not the log of a probability")));
        }
        Ok(LogProb(ln.min(0.0)))
    }

    /// Clamps any log-value into the valid range. NaN maps to zero probability.
    pub(crate) fn saturating(ln: f64) -> Self {
        if ln.is_nan() {
            LogProb::ZERO
        } else {
            LogProb(ln.min(0.0))
        }
    }

    pub fn from_prob(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        Ok(LogProb(p.ln()))
    }

    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// `log(1 - p)`.
    pub fn complement(self) -> LogProb {
        LogProb::saturating(log1m_exp(self.0))
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.prob())
    }
}

/// A probability parameter in `[0, 1]`.
///
/// A rate may remember the exact fraction it was parsed from (`"1/3"`), in
/// which case [`Rate::floor_mul`] uses integer arithmetic. At `A = 1/3` and a
/// committee of 3 the float product is `0.999..` and the floor would be off by
/// one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exact: Option<(u64, u64)>,
}

impl Rate {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!("rate {value} outside [0, 1]")));
        }
        Ok(Rate { value, exact: None })
    }

    pub fn ratio(numerator: u64, denominator: u64) -> Result<Self> {
        if denominator == 0 || numerator > denominator {
            return Err(Error::Domain(format!(
                "fraction {numerator}/{denominator} is not a rate in [0, 1]"
            )));
        }
        let g = gcd(numerator, denominator);
        let (num, den) = (numerator / g, denominator / g);
        Ok(Rate {
            value: num as f64 / den as f64,
            exact: Some((num, den)),
        })
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn as_ratio(self) -> Option<(u64, u64)> {
        self.exact
    }

    /// `floor(self * n)`, exact when the rate is a fraction.
    pub fn floor_mul(self, n: u64) -> u64 {
        match self.exact {
            Some((num, den)) => ((num as u128 * n as u128) / den as u128) as u64,
            None => (self.value * n as f64).floor() as u64,
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some((num, den)) => write!(f, "{num}/{den}"),
            None => write!(f, "{}", self.value),
        }
    }
}

impl std::str::FromStr for Rate {
    type Err = Error;

    /// Accepts decimal (`0.25`, `1e-3`) or fraction (`1/4`) syntax.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let num: u64 = num
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad fraction numerator in {s:?}")))?;
            let den: u64 = den
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad fraction denominator in {s:?}")))?;
            Rate::ratio(num, den)
        } else {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Parse(format!("bad rate {s:?}")))?;
            Rate::new(v)
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// `ln(1 - e^x)` for `x <= 0`.
#[inline]
pub fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum(e^x))` in the order given.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

// Stirling series remainder: ln(n!) - [(n + 1/2) ln n - n + ln(2 pi)/2].
fn stirling_remainder(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let nn = n * n;
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

// Below this, ln C(n, k) is summed directly as a product of ratios.
const DIRECT_LIMIT: u64 = 30;

/// `ln C(n, k)`.
pub fn log_binomial_coefficient(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain(format!("C({n}, {k}) with k > n")));
    }
    Ok(ln_choose(n, k))
}

pub(crate) fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    if k == 0 {
        return 0.0;
    }
    if k <= DIRECT_LIMIT {
        let mut acc = 0.0;
        let mut prod = 1.0f64;
        for i in 0..k {
            prod *= (n - i) as f64 / (i + 1) as f64;
            if prod > 1e250 {
                acc += prod.ln();
                prod = 1.0;
            }
        }
        return acc + prod.ln();
    }
    // Both k and n - k exceed DIRECT_LIMIT, so the series remainders converge
    // to full precision and every remaining term is non-negative.
    let nf = n as f64;
    let kf = k as f64;
    let jf = (n - k) as f64;
    let entropy = kf * (nf / kf).ln() - jf * (-kf / nf).ln_1p();
    let prefactor = 0.5 * (nf / (2.0 * std::f64::consts::PI * kf * jf)).ln();
    entropy + prefactor + stirling_remainder(nf) - stirling_remainder(kf) - stirling_remainder(jf)
}

/// `ln P(X = j)` for `X ~ Binomial(n, p)`.
pub(crate) fn binomial_log_pmf(n: u64, p: f64, j: u64) -> f64 {
    if j > n {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if j == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_choose(n, j) + j as f64 * p.ln() + (n - j) as f64 * (-p).ln_1p()
}

/// `(ln P(X <= k), ln P(X >= k + 1))` for `X ~ Binomial(n, p)`.
///
/// Both sides are log-sum-exp sums of pmf terms in ascending order; neither
/// is obtained by subtracting the other.
pub fn binomial_tail_and_cdf(n: u64, p: Rate, k: u64) -> Result<(LogProb, LogProb)> {
    if k > n {
        return Err(Error::Domain(format!("binomial cdf at k={k} > n={n}")));
    }
    let p = p.value();
    let terms: Vec<f64> = (0..=n).map(|j| binomial_log_pmf(n, p, j)).collect();
    let (lower, upper) = terms.split_at(k as usize + 1);
    Ok((
        LogProb::saturating(log_sum_exp(lower)),
        LogProb::saturating(log_sum_exp(upper)),
    ))
}

/// Kullback-Leibler divergence `D(q || p)` between Bernoulli laws.
///
/// Uses `0 ln 0 = 0`; returns `+inf` when `p` is degenerate and `q != p`.
pub fn kl_divergence(q: Rate, p: Rate) -> f64 {
    kl(q.value(), p.value())
}

pub(crate) fn kl(q: f64, p: f64) -> f64 {
    if q == p {
        return 0.0;
    }
    let term = |a: f64, b: f64| -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    (term(q, p) + term(1.0 - q, 1.0 - p)).max(0.0)
}

/// `ln(1 - prod(1 - p_i))` given `ln p_i`.
pub fn stable_complement_product(log_terms: &[LogProb]) -> LogProb {
    let log_survival: f64 = log_terms.iter().map(|t| log1m_exp(t.ln())).sum();
    LogProb::saturating(log1m_exp(log_survival))
}
