//! Gaze dispersion, kinematics, I-VT events and trend features.

use std::f64::consts::PI;

use super::entropy::sampen;
use super::schema::N_OCULOMOTOR;
use super::signal::{max, mean, moving_average, pearson, percentile, slope, std};
use super::FeatureError;

/// I-VT saccade threshold in deg/s.
pub const SACCADE_THRESHOLD: f64 = 30.0;
pub const VELOCITY_SMOOTHING: usize = 5;
pub const SPATIAL_GRID: usize = 8;
pub const MIN_VALID_FRACTION: f64 = 0.5;

/// Shannon entropy of gaze occupancy over an 8x8 grid spanning the bounding
/// box, normalized by ln(64).
pub fn spatial_entropy(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n == 0 {
        return 0.0;
    }
    let bounds = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    let (x0, x1) = bounds(&x[..n]);
    let (y0, y1) = bounds(&y[..n]);
    let cell = |v: f64, lo: f64, hi: f64| -> usize {
        if hi <= lo {
            0
        } else {
            (((v - lo) / (hi - lo) * SPATIAL_GRID as f64) as usize).min(SPATIAL_GRID - 1)
        }
    };
    let mut counts = [0usize; SPATIAL_GRID * SPATIAL_GRID];
    for i in 0..n {
        counts[cell(y[i], y0, y1) * SPATIAL_GRID + cell(x[i], x0, x1)] += 1;
    }
    let h: f64 = counts
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum();
    h / ((SPATIAL_GRID * SPATIAL_GRID) as f64).ln()
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// The 18 oculomotor features of one window.
///
/// Invalid samples are dropped first. Velocities are finite differences over
/// the remaining samples, smoothed component-wise with a 5-sample moving
/// average; a saccade is a maximal run of smoothed speed above 30 deg/s.
pub fn extract_oculomotor_features(
    t: &[f64],
    gx: &[f64],
    gy: &[f64],
    valid: &[bool],
    window_s: f64,
) -> Result<[f64; N_OCULOMOTOR], FeatureError> {
    let n = t.len();
    let keep: Vec<usize> = (0..n).filter(|&i| valid[i]).collect();
    let fraction = if n == 0 { 0.0 } else { keep.len() as f64 / n as f64 };
    if fraction < MIN_VALID_FRACTION || keep.len() < 3 {
        return Err(FeatureError::TooFewValidSamples { fraction });
    }
    let tv: Vec<f64> = keep.iter().map(|&i| t[i]).collect();
    let xv: Vec<f64> = keep.iter().map(|&i| gx[i]).collect();
    let yv: Vec<f64> = keep.iter().map(|&i| gy[i]).collect();

    let m = tv.len();
    let mut vx = Vec::with_capacity(m - 1);
    let mut vy = Vec::with_capacity(m - 1);
    let mut dts = Vec::with_capacity(m - 1);
    for i in 0..m - 1 {
        let dt = (tv[i + 1] - tv[i]).max(1e-9);
        vx.push((xv[i + 1] - xv[i]) / dt);
        vy.push((yv[i + 1] - yv[i]) / dt);
        dts.push(dt);
    }
    let vx = moving_average(&vx, VELOCITY_SMOOTHING);
    let vy = moving_average(&vy, VELOCITY_SMOOTHING);
    let speed: Vec<f64> = vx.iter().zip(&vy).map(|(a, b)| a.hypot(*b)).collect();
    let accel: Vec<f64> = speed.windows(2).zip(&dts).map(|(w, dt)| ((w[1] - w[0]) / dt).abs()).collect();

    let mut saccades = 0usize;
    let mut above_prev = false;
    let mut below = 0usize;
    for &s in &speed {
        let above = s > SACCADE_THRESHOLD;
        if above && !above_prev {
            saccades += 1;
        }
        if !above {
            below += 1;
        }
        above_prev = above;
    }

    let angles: Vec<f64> = vx
        .iter()
        .zip(&vy)
        .filter(|(a, b)| a.hypot(**b) > 0.0)
        .map(|(a, b)| b.atan2(*a))
        .collect();
    let turn: Vec<f64> = angles.windows(2).map(|w| wrap_angle(w[1] - w[0]).abs()).collect();
    let speed_sd = std(&speed);
    let speed_entropy = if speed_sd > 0.0 { sampen(&speed).unwrap_or(f64::NAN) } else { 0.0 };

    Ok([
        std(&xv),
        std(&yv),
        pearson(&xv, &yv),
        spatial_entropy(&xv, &yv),
        mean(&speed),
        speed_sd,
        max(&speed),
        percentile(&speed, 90.0),
        mean(&accel),
        std(&accel),
        max(&accel),
        saccades as f64 / window_s,
        below as f64 / speed.len() as f64,
        slope(&tv, &xv),
        slope(&tv, &yv),
        mean(&turn),
        std(&turn),
        speed_entropy,
    ])
}
