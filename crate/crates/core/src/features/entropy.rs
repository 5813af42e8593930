//! Sample entropy and the rescaled-range Hurst exponent.

use super::signal::{mean, std};

pub const SAMPEN_M: usize = 2;
pub const SAMPEN_R_FACTOR: f64 = 0.2;
/// Smallest block used by the R/S estimator.
pub const HURST_MIN_BLOCK: usize = 8;

/// Sample entropy with embedding `m` and absolute tolerance `r`.
///
/// Uses the N - m templates of length m (so both template lengths are drawn
/// from the same set), Chebyshev distance, and `<= r` matching. Returns
/// `None` when no template pair matches at either length.
pub fn sample_entropy(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let n = x.len();
    if n <= m + 1 {
        return None;
    }
    let templates = n - m;
    let mut b = 0u64;
    let mut a = 0u64;
    for i in 0..templates {
        for j in (i + 1)..templates {
            let mut ok = true;
            for k in 0..m {
                if (x[i + k] - x[j + k]).abs() > r {
                    ok = false;
                    break;
                }
            }
            if ok {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if a == 0 || b == 0 {
        return None;
    }
    Some(-(a as f64 / b as f64).ln())
}

/// Sample entropy with m = 2 and r = 0.2 times the population SD of `x`.
pub fn sampen(x: &[f64]) -> Option<f64> {
    sample_entropy(x, SAMPEN_M, SAMPEN_R_FACTOR * std(x))
}

/// Hurst exponent by rescaled-range analysis.
///
/// Block sizes are n/2, n/4, ... down to [`HURST_MIN_BLOCK`]; for each size
/// the R/S ratio is averaged over non-overlapping blocks, and the exponent
/// is the least-squares slope of log(R/S) against log(size).
pub fn hurst_rs(x: &[f64]) -> Option<f64> {
    let n = x.len();
    let mut sizes = Vec::new();
    let mut s = n / 2;
    while s >= HURST_MIN_BLOCK {
        sizes.push(s);
        s /= 2;
    }
    let mut logs = Vec::new();
    let mut log_rs = Vec::new();
    for size in sizes {
        let mut acc = 0.0;
        let mut count = 0usize;
        for block in x.chunks_exact(size) {
            let m = mean(block);
            let sd = std(block);
            if sd <= 0.0 {
                continue;
            }
            let mut cum = 0.0;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in block {
                cum += v - m;
                lo = lo.min(cum);
                hi = hi.max(cum);
            }
            acc += (hi - lo) / sd;
            count += 1;
        }
        if count > 0 && acc > 0.0 {
            logs.push((size as f64).ln());
            log_rs.push((acc / count as f64).ln());
        }
    }
    if logs.len() < 2 {
        return None;
    }
    Some(super::signal::slope(&logs, &log_rs))
}

/// Fraction of samples beyond median +/- 3 scaled MAD.
pub fn outlier_proportion(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let med = super::signal::median(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    let mad = super::signal::median(&dev) * 1.4826;
    if mad <= 0.0 {
        return 0.0;
    }
    x.iter().filter(|v| (*v - med).abs() > 3.0 * mad).count() as f64 / x.len() as f64
}
