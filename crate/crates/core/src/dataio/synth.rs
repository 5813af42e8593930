//! Synthetic cohort generator.
//!
//! Each subject carries four latent drivers, one per concept the model is
//! meant to discover. A driver is a unit-variance AR(1) process (phi = 0.9,
//! stepped at 10 Hz) plus a phase-dependent mean shift: zero during the alert
//! baseline, ramping through induction, and `effect` SD units during the
//! post-task phase. Drivers map onto the observable streams:
//!
//! | driver | observable effect of a positive shift                          |
//! |--------|----------------------------------------------------------------|
//! | 0      | larger fixational jitter (higher gaze velocity/acceleration)   |
//! | 1      | more fixation drift, fewer saccades                             |
//! | 2      | weaker 0.07 Hz prefrontal oscillation (lower fNIRS band power) |
//! | 3      | smaller pupil, longer and more frequent blinks, fNIRS offset   |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::session::{EyeStream, FnirsStream, Phase, PhaseMark, RecordingSession, FNIRS_CHANNELS};
use super::window::WindowConfig;
use super::DataError;

pub const LATENT_DRIVERS: usize = 4;
const LATENT_HZ: f64 = 10.0;
const AR_PHI: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCohortSpec {
    pub n_subjects: usize,
    pub windows_per_phase: usize,
    pub concept_effect_sizes: [f64; LATENT_DRIVERS],
    /// Scale of constant per-subject offsets added to every latent driver.
    pub subject_noise_sd: f64,
    /// Per-subject probability that one latent driver's shift is reversed.
    pub polarity_flips: f64,
    /// Optional per-subject SD of extra within-subject latent noise. Empty
    /// means none; otherwise one entry per subject.
    pub subject_noise_grade: Vec<f64>,
    pub seed: u64,
    pub eye_hz: f64,
    pub fnirs_hz: f64,
    pub induction_s: f64,
    pub window: WindowConfig,
}

impl Default for SyntheticCohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 6,
            windows_per_phase: 24,
            concept_effect_sizes: [1.5; LATENT_DRIVERS],
            subject_noise_sd: 0.0,
            polarity_flips: 0.0,
            subject_noise_grade: Vec::new(),
            seed: 42,
            eye_hz: 100.0,
            fnirs_hz: 8.0,
            induction_s: 30.0,
            window: WindowConfig::default(),
        }
    }
}

impl SyntheticCohortSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.n_subjects < 2 {
            return bad(format!("n_subjects must be >= 2 (got {})", self.n_subjects));
        }
        if self.windows_per_phase < 4 {
            return bad(format!("windows_per_phase must be >= 4 (got {})", self.windows_per_phase));
        }
        if self.concept_effect_sizes.iter().any(|e| !e.is_finite()) {
            return bad("effect sizes must be finite".into());
        }
        if !(self.subject_noise_sd >= 0.0) || !self.subject_noise_sd.is_finite() {
            return bad("subject_noise_sd must be a finite non-negative number".into());
        }
        if !(0.0..=1.0).contains(&self.polarity_flips) {
            return bad("polarity_flips must be a probability".into());
        }
        if !self.subject_noise_grade.is_empty() && self.subject_noise_grade.len() != self.n_subjects {
            return bad(format!(
                "subject_noise_grade has {} entries for {} subjects",
                self.subject_noise_grade.len(),
                self.n_subjects
            ));
        }
        if self.subject_noise_grade.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return bad("subject_noise_grade entries must be finite and non-negative".into());
        }
        if !(self.eye_hz >= 20.0) || !(self.fnirs_hz >= 1.0) || !(self.induction_s >= 0.0) {
            return bad("eye_hz >= 20, fnirs_hz >= 1 and induction_s >= 0 required".into());
        }
        Ok(())
    }

    /// Duration of the alert and post phases: exactly `windows_per_phase` windows.
    pub fn phase_duration(&self) -> f64 {
        self.window.window_s + (self.windows_per_phase as f64 - 1.0) * self.window.step_s()
    }

    pub fn participant_id(i: usize) -> String {
        format!("S{:02}", i + 1)
    }
}

/// Generate a deterministic cohort.
pub fn generate_synthetic_cohort(spec: &SyntheticCohortSpec) -> Result<Vec<RecordingSession>, DataError> {
    spec.validate()?;
    Ok((0..spec.n_subjects).into_par_iter().map(|s| generate_subject(spec, s)).collect())
}

struct SubjectPlan {
    offsets: [f64; LATENT_DRIVERS],
    directions: [f64; LATENT_DRIVERS],
    extra_noise: f64,
}

fn subject_rng(seed: u64, subject: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((subject as u64) << 8 | purpose);
    rng
}

fn plan_subject(spec: &SyntheticCohortSpec, s: usize) -> SubjectPlan {
    let mut rng = subject_rng(spec.seed, s, 0);
    let mut offsets = [0.0; LATENT_DRIVERS];
    for o in offsets.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *o = z * spec.subject_noise_sd;
    }
    let mut directions = [1.0; LATENT_DRIVERS];
    let flip: f64 = rng.random();
    let which = rng.random_range(0..LATENT_DRIVERS);
    if flip < spec.polarity_flips {
        directions[which] = -1.0;
    }
    let extra_noise = spec.subject_noise_grade.get(s).copied().unwrap_or(0.0);
    SubjectPlan { offsets, directions, extra_noise }
}

/// Latent drivers sampled on a 10 Hz grid covering the session.
struct Latents {
    values: [Vec<f64>; LATENT_DRIVERS],
}

impl Latents {
    fn at(&self, k: usize, t: f64) -> f64 {
        let v = &self.values[k];
        let x = t * LATENT_HZ;
        let i = (x.floor() as usize).min(v.len() - 2);
        let w = (x - i as f64).clamp(0.0, 1.0);
        v[i] + w * (v[i + 1] - v[i])
    }
}

fn ar1(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let innov = (1.0 - AR_PHI * AR_PHI).sqrt();
    let mut x: f64 = StandardNormal.sample(rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        let e: f64 = StandardNormal.sample(rng);
        x = AR_PHI * x + innov * e;
    }
    out
}

fn build_latents(spec: &SyntheticCohortSpec, plan: &SubjectPlan, s: usize, phases: &[PhaseMark], total: f64) -> Latents {
    let mut rng = subject_rng(spec.seed, s, 1);
    let n = (total * LATENT_HZ).ceil() as usize + 2;
    let progress = |t: f64| -> f64 {
        for m in phases {
            if m.contains(t) {
                return match m.phase {
                    Phase::AlertBaseline => 0.0,
                    Phase::Induction => (t - m.start) / m.duration().max(1e-9),
                    Phase::PostTask => 1.0,
                };
            }
        }
        1.0
    };
    let values = std::array::from_fn(|k| {
        let base = ar1(&mut rng, n);
        let extra = ar1(&mut rng, n);
        base.iter()
            .zip(&extra)
            .enumerate()
            .map(|(i, (b, e))| {
                let t = i as f64 / LATENT_HZ;
                b + plan.extra_noise * e
                    + plan.offsets[k]
                    + plan.directions[k] * spec.concept_effect_sizes[k] * progress(t)
            })
            .collect()
    });
    Latents { values }
}

fn generate_subject(spec: &SyntheticCohortSpec, s: usize) -> RecordingSession {
    let plan = plan_subject(spec, s);
    let d = spec.phase_duration();
    let i_len = spec.induction_s;
    let mut phases = vec![PhaseMark { start: 0.0, end: d, phase: Phase::AlertBaseline }];
    if i_len > 0.0 {
        phases.push(PhaseMark { start: d, end: d + i_len, phase: Phase::Induction });
    }
    phases.push(PhaseMark { start: d + i_len, end: 2.0 * d + i_len, phase: Phase::PostTask });
    // Streams run one second past the last phase so the final window is complete.
    let total = 2.0 * d + i_len + 1.0;
    let latents = build_latents(spec, &plan, s, &phases, total);

    let eye = generate_eye(spec, s, &latents, total);
    let fnirs = generate_fnirs(spec, s, &latents, total);
    RecordingSession { participant_id: SyntheticCohortSpec::participant_id(s), eye, fnirs, phases }
}

fn generate_eye(spec: &SyntheticCohortSpec, s: usize, lat: &Latents, total: f64) -> EyeStream {
    let mut rng = subject_rng(spec.seed, s, 2);
    let dt = 1.0 / spec.eye_hz;
    let n = (total * spec.eye_hz).floor() as usize;
    let mut eye = EyeStream::default();

    let (mut cx, mut cy) = (0.0f64, 0.0f64);
    // Active saccade: (from, to, samples done, samples total).
    let mut saccade: Option<((f64, f64), (f64, f64), usize, usize)> = None;
    let mut blink_left = 0usize;
    let ramp = ((0.04 * spec.eye_hz).round() as usize).max(2);
    let pupil_noise = Normal::new(0.0, 4.0).expect("valid sd");

    for i in 0..n {
        let t = i as f64 * dt;
        let (l0, l1, l3) = (lat.at(0, t), lat.at(1, t), lat.at(3, t));

        // Fixation drift and saccades.
        let drift_sd = 0.02 * (0.4 * l1).exp();
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        if let Some((from, to, done, len)) = saccade.as_mut() {
            *done += 1;
            let w = *done as f64 / *len as f64;
            cx = from.0 + w * (to.0 - from.0);
            cy = from.1 + w * (to.1 - from.1);
            if *done >= *len {
                saccade = None;
            }
        } else {
            cx += drift_sd * z1;
            cy += drift_sd * z2;
            let rate = 1.2 * (-0.3 * l1).exp();
            if rng.random::<f64>() < rate * dt {
                let amp = rng.random_range(2.0..10.0);
                let ang = rng.random_range(0.0..std::f64::consts::TAU);
                let tx = (cx + amp * ang.cos()).clamp(-15.0, 15.0);
                let ty = (cy + amp * ang.sin()).clamp(-12.0, 12.0);
                saccade = Some(((cx, cy), (tx, ty), 0, ramp));
            }
        }
        let jitter = 0.04 * (0.35 * l0).exp();
        let jx: f64 = StandardNormal.sample(&mut rng);
        let jy: f64 = StandardNormal.sample(&mut rng);
        let gx = cx + jitter * jx;
        let gy = cy + jitter * jy;

        // Blinks.
        if blink_left == 0 {
            let rate = 0.25 * (0.3 * l3).exp();
            if rng.random::<f64>() < rate * dt {
                let dur = (0.12 * (0.35 * l3).exp()).clamp(0.05, 0.6);
                blink_left = (dur * spec.eye_hz).round().max(1.0) as usize;
            }
        }
        let pupil_level = 3500.0 - 120.0 * l3 + 25.0 * lat.at(2, t);
        let (pupil, valid) = if blink_left > 0 {
            blink_left -= 1;
            (0.0, false)
        } else {
            (pupil_level + pupil_noise.sample(&mut rng), true)
        };
        let (gx, gy) = if valid {
            (gx, gy)
        } else {
            let last = eye.len().checked_sub(1);
            last.map(|j| (eye.gaze_x[j], eye.gaze_y[j])).unwrap_or((gx, gy))
        };
        eye.push(t, gx, gy, pupil, valid);
    }
    eye
}

fn generate_fnirs(spec: &SyntheticCohortSpec, s: usize, lat: &Latents, total: f64) -> FnirsStream {
    let mut rng = subject_rng(spec.seed, s, 3);
    let dt = 1.0 / spec.fnirs_hz;
    let n = (total * spec.fnirs_hz).floor() as usize;
    let gains: Vec<f64> = (0..FNIRS_CHANNELS).map(|_| rng.random_range(0.8..1.2)).collect();
    let phases: Vec<f64> = (0..FNIRS_CHANNELS).map(|_| rng.random_range(0.0..0.6)).collect();
    let bases: Vec<f64> = (0..FNIRS_CHANNELS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise = Normal::new(0.0, 0.05).expect("valid sd");

    let mut out = FnirsStream::with_channels(FNIRS_CHANNELS);
    for i in 0..n {
        let t = i as f64 * dt;
        let (l2, l3) = (lat.at(2, t), lat.at(3, t));
        let amp = 0.6 * (-0.45 * l2).exp();
        out.t.push(t);
        for c in 0..FNIRS_CHANNELS {
            let osc = (std::f64::consts::TAU * 0.07 * t + phases[c]).sin();
            let v = bases[c] + 0.2 * gains[c] * l2 + 0.15 * l3 + amp * gains[c] * osc + noise.sample(&mut rng);
            out.channels[c].push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::window::segment_windows;

    fn small() -> SyntheticCohortSpec {
        SyntheticCohortSpec { n_subjects: 3, windows_per_phase: 4, induction_s: 10.0, ..Default::default() }
    }

    #[test]
    fn determinism() {
        let a = generate_synthetic_cohort(&small()).unwrap();
        let b = generate_synthetic_cohort(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_cohort(&SyntheticCohortSpec { seed: 7, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spec_bounds() {
        assert!(generate_synthetic_cohort(&SyntheticCohortSpec { n_subjects: 1, ..small() }).is_err());
        assert!(generate_synthetic_cohort(&SyntheticCohortSpec { windows_per_phase: 3, ..small() }).is_err());
        let nan = SyntheticCohortSpec { concept_effect_sizes: [f64::NAN, 0.0, 0.0, 0.0], ..small() };
        assert!(generate_synthetic_cohort(&nan).is_err());
        let grade = SyntheticCohortSpec { subject_noise_grade: vec![0.1], ..small() };
        assert!(generate_synthetic_cohort(&grade).is_err());
    }

    #[test]
    fn phases_fit_exact_window_counts() {
        let spec = small();
        for s in generate_synthetic_cohort(&spec).unwrap() {
            assert_eq!(s.fnirs.channels.len(), FNIRS_CHANNELS);
            assert!(s.eye.t.windows(2).all(|w| w[1] > w[0]));
            let seg = segment_windows(&s, &spec.window).unwrap();
            assert_eq!(seg.windows.len(), 2 * spec.windows_per_phase);
        }
    }

    #[test]
    fn fatigued_phase_has_larger_jitter_and_smaller_pupil() {
        let spec = SyntheticCohortSpec { n_subjects: 2, windows_per_phase: 6, ..Default::default() };
        let s = &generate_synthetic_cohort(&spec).unwrap()[0];
        let d = spec.phase_duration();
        let post0 = d + spec.induction_s;
        let mean_abs_step = |lo: f64, hi: f64| {
            let mut acc = 0.0;
            let mut n = 0.0;
            for i in 1..s.eye.len() {
                if s.eye.t[i] >= lo && s.eye.t[i] < hi && s.eye.valid[i] && s.eye.valid[i - 1] {
                    acc += (s.eye.gaze_x[i] - s.eye.gaze_x[i - 1]).abs();
                    n += 1.0;
                }
            }
            acc / n
        };
        let pupil_mean = |lo: f64, hi: f64| {
            let v: Vec<f64> = (0..s.eye.len())
                .filter(|&i| s.eye.t[i] >= lo && s.eye.t[i] < hi && s.eye.valid[i])
                .map(|i| s.eye.pupil[i])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_abs_step(post0, post0 + d) > mean_abs_step(0.0, d));
        assert!(pupil_mean(post0, post0 + d) < pupil_mean(0.0, d));
    }
}
