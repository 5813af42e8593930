//! Segmentation of a session into fixed-length overlapping windows.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::session::{Phase, RecordingSession};
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_s: f64,
    pub overlap: f64,
    pub align_hz: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { window_s: 10.0, overlap: 0.5, align_hz: 10.0 }
    }
}

impl WindowConfig {
    pub fn step_s(&self) -> f64 {
        self.window_s * (1.0 - self.overlap)
    }

    fn validate(&self) -> Result<(), DataError> {
        if !(self.window_s > 0.0) || !(0.0..1.0).contains(&self.overlap) || !(self.align_hz > 0.0) {
            return Err(DataError::InvalidSpec(format!(
                "window_s must be > 0, overlap in [0,1), align_hz > 0 (got {:?})",
                self
            )));
        }
        Ok(())
    }
}

/// Number of windows that fit fully inside a phase of `duration` seconds.
pub fn window_count(duration: f64, window_s: f64, overlap: f64) -> usize {
    if duration + 1e-9 < window_s {
        return 0;
    }
    let step = window_s * (1.0 - overlap);
    ((duration - window_s) / step + 1e-9).floor() as usize + 1
}

/// fNIRS resampled onto a uniform grid shared by all windows of a session.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFnirs {
    pub rate_hz: f64,
    pub t: Vec<f64>,
    pub channels: Vec<Vec<f64>>,
}

/// One labelled window, described by index ranges into the session's eye
/// stream and into the aligned fNIRS grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSlice {
    pub participant_id: String,
    pub window_index: usize,
    pub phase: Phase,
    pub label: u8,
    pub start: f64,
    pub end: f64,
    pub eye: Range<usize>,
    pub fnirs: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct SegmentedSession {
    pub windows: Vec<WindowSlice>,
    pub fnirs: AlignedFnirs,
}

/// Linear interpolation of `(t_src, x_src)` at `t_dst`, holding end values outside.
pub fn resample_linear(t_src: &[f64], x_src: &[f64], t_dst: &[f64]) -> Vec<f64> {
    let n = t_src.len();
    if n == 0 {
        return vec![0.0; t_dst.len()];
    }
    let mut out = Vec::with_capacity(t_dst.len());
    let mut j = 0;
    for &t in t_dst {
        if t <= t_src[0] {
            out.push(x_src[0]);
            continue;
        }
        if t >= t_src[n - 1] {
            out.push(x_src[n - 1]);
            continue;
        }
        while j + 1 < n && t_src[j + 1] < t {
            j += 1;
        }
        let (t0, t1) = (t_src[j], t_src[j + 1]);
        let w = (t - t0) / (t1 - t0);
        out.push(x_src[j] + w * (x_src[j + 1] - x_src[j]));
    }
    out
}

pub fn align_fnirs(session: &RecordingSession, rate_hz: f64) -> AlignedFnirs {
    let t = &session.fnirs.t;
    if t.is_empty() {
        return AlignedFnirs { rate_hz, t: Vec::new(), channels: vec![Vec::new(); session.fnirs.channels.len()] };
    }
    let k0 = (t[0] * rate_hz - 1e-9).ceil() as i64;
    let k1 = (t[t.len() - 1] * rate_hz + 1e-9).floor() as i64;
    let grid: Vec<f64> = (k0..=k1).map(|k| k as f64 / rate_hz).collect();
    let channels = session.fnirs.channels.iter().map(|c| resample_linear(t, c, &grid)).collect();
    AlignedFnirs { rate_hz, t: grid, channels }
}

fn index_range(t: &[f64], start: f64, end: f64) -> Range<usize> {
    let lo = t.partition_point(|&x| x < start - 1e-9);
    let hi = t.partition_point(|&x| x < end - 1e-9);
    lo..hi
}

/// Cut a session into labelled windows lying fully inside the alert and
/// post-task phases. Induction windows, and windows that would straddle a
/// phase boundary, are dropped.
pub fn segment_windows(session: &RecordingSession, cfg: &WindowConfig) -> Result<SegmentedSession, DataError> {
    cfg.validate()?;
    let fnirs = align_fnirs(session, cfg.align_hz);
    let mut marks: Vec<_> = session.phases.iter().filter(|m| m.phase != Phase::Induction).collect();
    marks.sort_by(|a, b| a.start.total_cmp(&b.start));

    let step = cfg.step_s();
    let mut windows = Vec::new();
    for mark in marks {
        let label = mark.phase.label().expect("induction filtered above");
        let n = window_count(mark.duration(), cfg.window_s, cfg.overlap);
        if n == 0 {
            return Err(DataError::PhaseTooShort {
                participant: session.participant_id.clone(),
                phase: mark.phase,
                duration: mark.duration(),
                window_s: cfg.window_s,
            });
        }
        for k in 0..n {
            let start = mark.start + k as f64 * step;
            let end = start + cfg.window_s;
            windows.push(WindowSlice {
                participant_id: session.participant_id.clone(),
                window_index: windows.len(),
                phase: mark.phase,
                label,
                start,
                end,
                eye: index_range(&session.eye.t, start, end),
                fnirs: index_range(&fnirs.t, start, end),
            });
        }
    }
    Ok(SegmentedSession { windows, fnirs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::session::{EyeStream, FnirsStream, PhaseMark};

    fn session_with(phases: Vec<PhaseMark>, total: f64) -> RecordingSession {
        let mut eye = EyeStream::default();
        let n = (total * 50.0) as usize;
        for i in 0..n {
            eye.push(i as f64 / 50.0, 0.0, 0.0, 1.0, true);
        }
        let mut fnirs = FnirsStream::with_channels(8);
        let m = (total * 8.0) as usize;
        for i in 0..m {
            fnirs.t.push(i as f64 / 8.0);
            for ch in fnirs.channels.iter_mut() {
                ch.push(i as f64);
            }
        }
        RecordingSession { participant_id: "S".into(), eye, fnirs, phases }
    }

    #[test]
    fn sixty_second_phase_gives_eleven_windows() {
        assert_eq!(window_count(60.0, 10.0, 0.5), 11);
        let s = session_with(vec![PhaseMark { start: 0.0, end: 60.0, phase: Phase::AlertBaseline }], 61.0);
        let seg = segment_windows(&s, &WindowConfig::default()).unwrap();
        assert_eq!(seg.windows.len(), 11);
        assert!(seg.windows.iter().all(|w| w.end <= 60.0 + 1e-9));
    }

    #[test]
    fn nine_second_phase_is_too_short() {
        let s = session_with(vec![PhaseMark { start: 0.0, end: 9.0, phase: Phase::AlertBaseline }], 10.0);
        let err = segment_windows(&s, &WindowConfig::default()).unwrap_err();
        assert!(matches!(err, DataError::PhaseTooShort { .. }));
    }

    #[test]
    fn zero_overlap_tiles() {
        assert_eq!(window_count(30.0, 10.0, 0.0), 3);
        let s = session_with(vec![PhaseMark { start: 0.0, end: 30.0, phase: Phase::PostTask }], 31.0);
        let cfg = WindowConfig { overlap: 0.0, ..Default::default() };
        let seg = segment_windows(&s, &cfg).unwrap();
        assert_eq!(seg.windows.len(), 3);
        assert_eq!(seg.windows[1].eye, 500..1000);
        assert_eq!(seg.windows[1].fnirs.len(), 100);
    }

    #[test]
    fn induction_windows_are_dropped() {
        let s = session_with(
            vec![
                PhaseMark { start: 0.0, end: 20.0, phase: Phase::AlertBaseline },
                PhaseMark { start: 20.0, end: 50.0, phase: Phase::Induction },
                PhaseMark { start: 50.0, end: 70.0, phase: Phase::PostTask },
            ],
            71.0,
        );
        let seg = segment_windows(&s, &WindowConfig::default()).unwrap();
        assert_eq!(seg.windows.len(), 6);
        assert!(seg.windows.iter().all(|w| w.phase != Phase::Induction));
        assert_eq!(seg.windows.iter().filter(|w| w.label == 1).count(), 3);
        let idx: Vec<_> = seg.windows.iter().map(|w| w.window_index).collect();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn resampling_is_exact_on_linear_signals() {
        let t: Vec<f64> = (0..80).map(|i| i as f64 / 8.0).collect();
        let x: Vec<f64> = t.iter().map(|&t| 3.0 * t - 1.0).collect();
        let grid: Vec<f64> = (0..90).map(|i| i as f64 / 10.0).collect();
        let y = resample_linear(&t, &x, &grid);
        for (g, v) in grid.iter().zip(&y) {
            if *g <= t[79] {
                assert!((v - (3.0 * g - 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_config_is_rejected() {
        let s = session_with(vec![PhaseMark { start: 0.0, end: 30.0, phase: Phase::PostTask }], 31.0);
        let cfg = WindowConfig { overlap: 1.0, ..Default::default() };
        assert!(segment_windows(&s, &cfg).is_err());
    }

    proptest::proptest! {
        #[test]
        fn count_formula_matches_enumeration(dur in 10.0f64..400.0, w in 1.0f64..20.0, ov in 0.0f64..0.9) {
            let n = window_count(dur, w, ov);
            let step = w * (1.0 - ov);
            let mut brute = 0;
            let mut start = 0.0;
            while start + w <= dur + 1e-9 {
                brute += 1;
                start = brute as f64 * step;
            }
            proptest::prop_assert_eq!(n, brute);
        }
    }
}
