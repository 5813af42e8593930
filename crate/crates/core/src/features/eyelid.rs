//! Blink-derived eyelid features.
//!
//! Slots: rate (per minute), duration mean/SD, inter-blink interval mean/SD
//! (onset to onset), PERCLOS total, PERCLOS weighted, duration max. PERCLOS
//! weighted scales each blink's duration by duration / max duration before
//! summing. Empty or single-blink windows fill undefined statistics with 0.

use super::pupil::BlinkEvent;
use super::schema::N_EYELID;
use super::signal::{mean, std};

pub fn extract_eyelid_features(blinks: &[BlinkEvent], window_s: f64) -> [f64; N_EYELID] {
    if blinks.is_empty() || window_s <= 0.0 {
        return [0.0; N_EYELID];
    }
    let durations: Vec<f64> = blinks.iter().map(|b| b.duration).collect();
    let longest = durations.iter().copied().fold(0.0, f64::max);
    let ibi: Vec<f64> = blinks.windows(2).map(|w| w[1].start - w[0].start).collect();
    let total: f64 = durations.iter().sum();
    let weighted: f64 = if longest > 0.0 { durations.iter().map(|d| d * d / longest).sum() } else { 0.0 };
    [
        blinks.len() as f64 / window_s * 60.0,
        mean(&durations),
        std(&durations),
        mean(&ibi),
        std(&ibi),
        total / window_s,
        weighted / window_s,
        longest,
    ]
}

/// Blink events clipped to the window `[start, end)`.
pub fn blinks_in_window(blinks: &[BlinkEvent], start: f64, end: f64) -> Vec<BlinkEvent> {
    blinks.iter().filter_map(|b| b.clip(start, end)).collect()
}
