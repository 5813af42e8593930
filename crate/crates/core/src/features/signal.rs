//! Descriptive statistics, zero-phase band-pass filtering and Welch spectra.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation (divide by n).
pub fn std(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn range(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

pub fn max(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Population skewness m3 / m2^1.5. NaN for constant input.
pub fn skewness(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Population excess kurtosis m4 / m2^2 - 3. NaN for constant input.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(&x[..n]), mean(&y[..n]));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let (a, b) = (x[i] - mx, y[i] - my);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Least-squares slope of `y` against `t`.
pub fn slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let (mt, my) = (mean(&t[..n]), mean(&y[..n]));
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        num += (t[i] - mt) * (y[i] - my);
        den += (t[i] - mt).powi(2);
    }
    if den <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Linear-interpolated percentile, `q` in [0, 100].
pub fn percentile(x: &[f64], q: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(x: &[f64]) -> f64 {
    percentile(x, 50.0)
}

/// Finite-difference derivative scaled to per-second units.
pub fn derivative(x: &[f64], fs: f64) -> Vec<f64> {
    x.windows(2).map(|w| (w[1] - w[0]) * fs).collect()
}

/// Centered moving average of odd width, shrinking at the edges.
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Zero-phase band-pass by spectral masking of the mirror-extended signal.
///
/// The signal is mean-removed and concatenated with its reversal, so the
/// periodic extension seen by the FFT is continuous. Bins outside
/// `[low_hz, high_hz]` (and the DC bin) are zeroed. A constant offset in the
/// input has no effect on the output.
pub fn bandpass(x: &[f64], fs: f64, low_hz: f64, high_hz: f64) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let m = mean(x);
    let len = 2 * n;
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .chain(x.iter().rev())
        .map(|&v| Complex::new(v - m, 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let df = fs / len as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = if k <= len / 2 { k } else { len - k };
        let f = kk as f64 * df;
        if kk == 0 || f < low_hz || f > high_hz {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf[..n].iter().map(|c| c.re / len as f64).collect()
}

/// One-sided power spectral density.
#[derive(Debug, Clone)]
pub struct Psd {
    pub df: f64,
    pub freqs: Vec<f64>,
    pub density: Vec<f64>,
}

impl Psd {
    /// Integrated power over bins with `low <= f < high`.
    pub fn band_power(&self, low: f64, high: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= low && **f < high)
            .map(|(_, p)| p * self.df)
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.df
    }
}

/// Maximum Welch segment length in samples.
pub const WELCH_SEGMENT: usize = 256;
/// Minimum FFT length; short segments are zero-padded to this size.
pub const WELCH_MIN_NFFT: usize = 4096;

/// Welch periodogram: Hann window, segments of `min(n, 256)` samples with
/// 50 % overlap, per-segment mean removal, density scaling.
pub fn welch(x: &[f64], fs: f64) -> Psd {
    let n = x.len();
    let seg = n.min(WELCH_SEGMENT);
    let nfft = seg.next_power_of_two().max(WELCH_MIN_NFFT);
    let df = fs / nfft as f64;
    let bins = nfft / 2 + 1;
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * df).collect();
    if seg < 2 {
        return Psd { df, freqs, density: vec![0.0; bins] };
    }
    let window: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let hop = (seg / 2).max(1);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut density = vec![0.0; bins];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg <= n {
        let part = &x[start..start + seg];
        let m = mean(part);
        let mut buf = vec![Complex::new(0.0, 0.0); nfft];
        for i in 0..seg {
            buf[i] = Complex::new((part[i] - m) * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, d) in density.iter_mut().enumerate() {
            *d += buf[k].norm_sqr();
        }
        count += 1;
        start += hop;
    }
    let scale = 1.0 / (fs * wss * count as f64);
    for (k, d) in density.iter_mut().enumerate() {
        *d *= scale;
        if k != 0 && !(nfft % 2 == 0 && k == nfft / 2) {
            *d *= 2.0;
        }
    }
    Psd { df, freqs, density }
}

/// Ratio that maps 0/0 and x/0 to 0.
pub fn safe_ratio(num: f64, den: f64) -> f64 {
    if den.abs() < 1e-300 {
        0.0
    } else {
        num / den
    }
}
