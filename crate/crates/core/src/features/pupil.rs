//! Pupil blink repair, band-pass filtering and the 16 pupil features.

use serde::{Deserialize, Serialize};

use super::entropy::sampen;
use super::schema::N_PUPIL;
use super::signal::{
    bandpass, derivative, excess_kurtosis, max, mean, median, range, safe_ratio, skewness, std, welch,
};
use super::FeatureError;

pub const BLINK_SIGMA: f64 = 2.5;
pub const BLINK_DILATION_S: f64 = 0.05;
pub const MAX_MASKED_FRACTION: f64 = 0.8;
pub const PUPIL_BAND: (f64, f64) = (0.01, 4.0);
pub const PUPIL_LF: (f64, f64) = (0.04, 0.15);
pub const PUPIL_HF: (f64, f64) = (0.15, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlinkEvent {
    pub start: f64,
    pub end: f64,
    pub duration: f64,
}

impl BlinkEvent {
    fn new(start: f64, end: f64) -> Self {
        Self { start, end, duration: end - start }
    }

    /// The part of this event inside `[lo, hi)`, if any.
    pub fn clip(&self, lo: f64, hi: f64) -> Option<BlinkEvent> {
        let s = self.start.max(lo);
        let e = self.end.min(hi);
        (e > s).then(|| BlinkEvent::new(s, e))
    }
}

/// Output of [`preprocess_pupil`].
#[derive(Debug, Clone)]
pub struct CleanPupil {
    pub fs: f64,
    /// Blink-interpolated pupil trace at its original level.
    pub repaired: Vec<f64>,
    /// `repaired` after the 0.01-4 Hz band-pass.
    pub filtered: Vec<f64>,
    pub blinks: Vec<BlinkEvent>,
    pub masked_fraction: f64,
}

/// Detect blinks (samples below median - 2.5 SD), dilate each by 50 ms on both
/// sides, bridge the gaps by linear interpolation, then band-pass 0.01-4 Hz.
pub fn preprocess_pupil(t: &[f64], pupil: &[f64]) -> Result<CleanPupil, FeatureError> {
    let n = t.len();
    if n < 2 || t[n - 1] - t[0] < 2.0 - 1e-9 {
        return Err(FeatureError::TooShort { what: "pupil series", len: n, needed: "2 s of samples".into() });
    }
    let period = crate::dataio::median_period(t);
    let fs = 1.0 / period;

    let threshold = median(pupil) - BLINK_SIGMA * std(pupil);
    let mut blinks: Vec<BlinkEvent> = Vec::new();
    let t_end = t[n - 1] + period;
    let mut i = 0;
    while i < n {
        if pupil[i] < threshold {
            let first = i;
            while i < n && pupil[i] < threshold {
                i += 1;
            }
            let count = i - first;
            let start = (t[first] - BLINK_DILATION_S).max(t[0]);
            let end = (t[first] + count as f64 * period + BLINK_DILATION_S).min(t_end);
            match blinks.last_mut() {
                Some(prev) if start <= prev.end => *prev = BlinkEvent::new(prev.start, end.max(prev.end)),
                _ => blinks.push(BlinkEvent::new(start, end)),
            }
        } else {
            i += 1;
        }
    }

    let mut masked = vec![false; n];
    let mut k = 0;
    for b in &blinks {
        while k < n && t[k] < b.start - 1e-12 {
            k += 1;
        }
        let mut j = k;
        while j < n && t[j] < b.end - 1e-12 {
            masked[j] = true;
            j += 1;
        }
    }
    let masked_count = masked.iter().filter(|m| **m).count();
    let masked_fraction = masked_count as f64 / n as f64;
    if masked_fraction > MAX_MASKED_FRACTION {
        return Err(FeatureError::AllBlink { fraction: masked_fraction });
    }

    let repaired = interpolate_masked(t, pupil, &masked);
    let filtered = bandpass(&repaired, fs, PUPIL_BAND.0, PUPIL_BAND.1);
    Ok(CleanPupil { fs, repaired, filtered, blinks, masked_fraction })
}

fn interpolate_masked(t: &[f64], x: &[f64], masked: &[bool]) -> Vec<f64> {
    let n = x.len();
    let mut out = x.to_vec();
    let mut i = 0;
    while i < n {
        if !masked[i] {
            i += 1;
            continue;
        }
        let lo = i;
        while i < n && masked[i] {
            i += 1;
        }
        let left = lo.checked_sub(1);
        let right = (i < n).then_some(i);
        for j in lo..i {
            out[j] = match (left, right) {
                (Some(a), Some(b)) => {
                    let w = (t[j] - t[a]) / (t[b] - t[a]);
                    x[a] + w * (x[b] - x[a])
                }
                (Some(a), None) => x[a],
                (None, Some(b)) => x[b],
                (None, None) => x[j],
            };
        }
    }
    out
}

/// The 16 pupil features of one window.
///
/// `pupil_mean` (and the coefficient of variation through it) reads the
/// blink-repaired level; every other feature reads the band-passed trace.
pub fn extract_pupil_features(repaired: &[f64], filtered: &[f64], fs: f64) -> Result<[f64; N_PUPIL], FeatureError> {
    let n = filtered.len();
    if n < 8 || repaired.len() != n {
        return Err(FeatureError::TooShort { what: "pupil window", len: n, needed: "8 samples".into() });
    }
    let level = mean(repaired);
    let sd = std(filtered);
    let degenerate = sd <= 1e-12 * (1.0 + level.abs());

    let d1: Vec<f64> = derivative(filtered, fs).into_iter().map(f64::abs).collect();
    let d2: Vec<f64> = derivative(&derivative(filtered, fs), fs).into_iter().map(f64::abs).collect();
    let psd = welch(filtered, fs);
    let lf = psd.band_power(PUPIL_LF.0, PUPIL_LF.1);
    let hf = psd.band_power(PUPIL_HF.0, PUPIL_HF.1);
    let (skew, kurt, entropy) = if degenerate {
        (0.0, 0.0, 0.0)
    } else {
        (skewness(filtered), excess_kurtosis(filtered), sampen(filtered).unwrap_or(f64::NAN))
    };

    Ok([
        level,
        sd,
        range(filtered),
        skew,
        kurt,
        mean(&d1),
        std(&d1),
        max(&d1),
        mean(&d2),
        std(&d2),
        max(&d2),
        lf,
        hf,
        safe_ratio(lf, hf),
        entropy,
        safe_ratio(sd, level.abs()),
    ])
}
