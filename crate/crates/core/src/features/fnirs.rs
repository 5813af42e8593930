//! fNIRS channel pruning, band-pass filtering and the 48 fNIRS features.

use serde::{Deserialize, Serialize};

use super::entropy::{hurst_rs, outlier_proportion, sampen};
use super::schema::N_FNIRS;
use super::signal::{bandpass, derivative, mean, pearson, range, safe_ratio, skewness, slope, std, welch};
use super::FeatureError;
use crate::dataio::FNIRS_CHANNELS;

pub const FLAT_CHANNEL_SD: f64 = 1e-10;
pub const FNIRS_BAND: (f64, f64) = (0.01, 0.2);
pub const FNIRS_VLF: (f64, f64) = (0.01, 0.04);
pub const FNIRS_LF: (f64, f64) = (0.04, 0.1);
pub const FNIRS_HF: (f64, f64) = (0.1, 0.2);

/// Channel groups used by the symmetry block. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Montage {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub anterior: Vec<usize>,
    pub posterior: Vec<usize>,
}

impl Default for Montage {
    fn default() -> Self {
        Self {
            left: vec![0, 1, 2, 3],
            right: vec![4, 5, 6, 7],
            anterior: vec![0, 1, 4, 5],
            posterior: vec![2, 3, 6, 7],
        }
    }
}

impl Montage {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let groups = [&self.left, &self.right, &self.anterior, &self.posterior];
        if groups.iter().any(|g| g.is_empty() || g.iter().any(|&c| c >= FNIRS_CHANNELS)) {
            return Err(FeatureError::Montage(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Filtered fNIRS channels. Pruned channels are kept as zero rows so channel
/// indices stay stable; `active[c]` tells which survived.
#[derive(Debug, Clone)]
pub struct CleanFnirs {
    pub fs: f64,
    pub channels: Vec<Vec<f64>>,
    pub active: Vec<bool>,
}

impl CleanFnirs {
    pub fn pruned(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&c| !self.active[c]).collect()
    }
}

/// Drop channels with SD below 1e-10 and band-pass the rest 0.01-0.2 Hz.
pub fn preprocess_fnirs(channels: &[Vec<f64>], fs: f64) -> Result<CleanFnirs, FeatureError> {
    if channels.len() != FNIRS_CHANNELS {
        return Err(FeatureError::ChannelCount { found: channels.len() });
    }
    let active: Vec<bool> = channels.iter().map(|c| std(c) >= FLAT_CHANNEL_SD).collect();
    if !active.iter().any(|a| *a) {
        return Err(FeatureError::AllChannelsFlat);
    }
    let filtered = channels
        .iter()
        .zip(&active)
        .map(|(c, &on)| if on { bandpass(c, fs, FNIRS_BAND.0, FNIRS_BAND.1) } else { vec![0.0; c.len()] })
        .collect();
    Ok(CleanFnirs { fs, channels: filtered, active })
}

/// Per-sample mean over the active members of `group`, or `None` when every
/// member was pruned.
fn group_mean(channels: &[&[f64]], active: &[bool], group: &[usize]) -> Option<Vec<f64>> {
    let members: Vec<usize> = group.iter().copied().filter(|&c| active[c]).collect();
    if members.is_empty() {
        return None;
    }
    let n = channels[members[0]].len();
    Some((0..n).map(|i| members.iter().map(|&c| channels[c][i]).sum::<f64>() / members.len() as f64).collect())
}

fn contrast(a: Option<Vec<f64>>, b: Option<Vec<f64>>, t: &[f64]) -> [f64; 4] {
    match (a, b) {
        (Some(a), Some(b)) => {
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            [mean(&d), std(&d), slope(t, &d), pearson(&a, &b)]
        }
        _ => [0.0; 4],
    }
}

fn moments(x: &[f64]) -> [f64; 4] {
    let sd = std(x);
    let skew = if sd > 1e-12 * (1.0 + mean(x).abs()) { skewness(x) } else { 0.0 };
    [mean(x), sd, skew, range(x)]
}

/// The 48 fNIRS features of one window of filtered channels.
///
/// Global, spectral and complexity blocks read the mean over active
/// channels. Each channel is its own region; pruned regions emit zeros.
pub fn extract_fnirs_features(
    channels: &[&[f64]],
    active: &[bool],
    fs: f64,
    montage: &Montage,
) -> Result<[f64; N_FNIRS], FeatureError> {
    let all: Vec<usize> = (0..channels.len()).collect();
    let global = group_mean(channels, active, &all).ok_or(FeatureError::NoChannels)?;
    let n = global.len();
    if n < 4 {
        return Err(FeatureError::TooShort { what: "fNIRS window", len: n, needed: "4 samples".into() });
    }
    let t: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
    let mut out = Vec::with_capacity(N_FNIRS);

    out.extend(moments(&global));
    out.extend(moments(&derivative(&global, fs)));

    let psd = welch(&global, fs);
    let vlf = psd.band_power(FNIRS_VLF.0, FNIRS_VLF.1);
    let lf = psd.band_power(FNIRS_LF.0, FNIRS_LF.1);
    let hf = psd.band_power(FNIRS_HF.0, FNIRS_HF.1);
    out.extend([vlf, lf, hf, safe_ratio(lf, hf), safe_ratio(vlf, lf)]);

    for c in 0..FNIRS_CHANNELS {
        if c < channels.len() && active[c] {
            let x = channels[c];
            let sd = std(x);
            let entropy = if sd > 0.0 { sampen(x).unwrap_or(f64::NAN) } else { 0.0 };
            out.extend([mean(x), sd, entropy]);
        } else {
            out.extend([0.0; 3]);
        }
    }

    out.extend(contrast(
        group_mean(channels, active, &montage.left),
        group_mean(channels, active, &montage.right),
        &t,
    ));
    out.extend(contrast(
        group_mean(channels, active, &montage.anterior),
        group_mean(channels, active, &montage.posterior),
        &t,
    ));

    let entropy = if std(&global) > 0.0 { sampen(&global).unwrap_or(f64::NAN) } else { 0.0 };
    out.extend([entropy, hurst_rs(&global).unwrap_or(f64::NAN), outlier_proportion(&global)]);

    Ok(out.try_into().expect("fNIRS block has 48 entries"))
}
