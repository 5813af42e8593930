//! Summary statistics, correlations and the Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::EvalError;

/// Differences and tie gaps at or below this magnitude count as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Largest sample handled with the exact null distribution.
pub const EXACT_MAX_N: usize = 25;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1). Zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Mean, SD and a two-sided Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn summarize(xs: &[f64], level: f64) -> Summary {
    let n = xs.len();
    let m = if n == 0 { 0.0 } else { mean(xs) };
    let sd = sample_sd(xs);
    let half = if n < 2 || sd == 0.0 {
        0.0
    } else {
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
        t.inverse_cdf(0.5 + level / 2.0) * sd / (n as f64).sqrt()
    };
    Summary { n, mean: m, sd, ci_level: level, ci_low: m - half, ci_high: m + half }
}

/// Pearson correlation, or `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson inputs differ in length");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let scale = (n as f64).sqrt() * 1e-12;
    if sxx.sqrt() <= scale * mx.abs().max(1.0) || syy.sqrt() <= scale * my.abs().max(1.0) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Point-biserial correlation of `x` with a binary label; 0 for a constant `x`
/// or a single-class label.
pub fn point_biserial(x: &[f64], y: &[u8]) -> f64 {
    let yf: Vec<f64> = y.iter().map(|v| f64::from(*v)).collect();
    pearson(x, &yf).unwrap_or(0.0)
}

/// Pearson r with its two-sided t-test p-value. Degenerate inputs give
/// `(0, 1)`.
pub fn pearson_test(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    let Some(r) = pearson(x, y) else { return (0.0, 1.0) };
    if n < 3 {
        return (r, 1.0);
    }
    if r.abs() >= 1.0 {
        return (r, 0.0);
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (r, (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

/// Average ranks (1-based) of `values`, grouping near-equal values.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] - values[order[i]] <= TIE_TOLERANCE {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Matched-pairs rank-biserial correlation, in magnitude.
    pub rank_biserial: f64,
    pub method: WilcoxonMethod,
}

/// Two-sided Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are dropped and tied magnitudes share their average
/// rank. Up to [`EXACT_MAX_N`] differences the p-value comes from the exact
/// permutation distribution of the (possibly tied) ranks; above that a
/// normal approximation with continuity and tie corrections is used.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult, EvalError> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(EvalError::NonFinite("paired difference"));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| d.abs() > TIE_TOLERANCE).collect();
    if nz.is_empty() {
        return Err(EvalError::AllZeroDifferences);
    }
    let n = nz.len();
    let ranks = average_ranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, statistic), WilcoxonMethod::Exact)
    } else {
        (normal_p(&ranks, statistic), WilcoxonMethod::Normal)
    };
    Ok(WilcoxonResult {
        n,
        w_plus,
        w_minus,
        statistic,
        p_value,
        rank_biserial: (w_plus - w_minus).abs() / total,
        method,
    })
}

/// `min(1, 2 P(T <= w))` where T is the sum of a random subset of `ranks`.
fn exact_p(ranks: &[f64], w: f64) -> f64 {
    // Average ranks are multiples of 1/2, so doubled ranks are integers.
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let limit = (2.0 * w).round() as usize;
    let tail: f64 = counts[..=limit.min(max)].iter().sum();
    (2.0 * tail / 2f64.powi(ranks.len() as i32)).min(1.0)
}

fn normal_p(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len() as f64;
    let mu = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// Wilcoxon comparison of paired per-fold scores `a` against `b`.
pub fn paired_comparison(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nonzero = diffs.iter().filter(|d| d.abs() > TIE_TOLERANCE).count();
    if nonzero == 0 {
        return Err(EvalError::AllZeroDifferences);
    }
    if nonzero < 5 {
        return Err(EvalError::TooFewDifferences(nonzero));
    }
    wilcoxon_signed_rank(&diffs)
}
