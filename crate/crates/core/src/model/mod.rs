//! Concept bottleneck and differentiable rule layer.
//!
//! Two attention-gated encoders map the eye (42) and fNIRS (48) slices of a
//! normalized window to hidden states; four heads produce concept degrees
//! C1..C4, which are soft-thresholded and combined by three fuzzy rules into
//! a fatigue probability.

mod fuzzy;
mod params;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{N_EYE, N_FEATURES, N_FNIRS};

pub use fuzzy::OperatorFamily;
pub use params::{Checkpoint, EncoderParams, HeadParams, ModelParams, Slot, SlotMut, TensorRecord, CHECKPOINT_VERSION};

pub const HIDDEN: usize = 64;
pub const N_CONCEPTS: usize = 4;
pub const N_RULES: usize = 3;
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("expected {expected} inputs, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Initial aggregation weights `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AggInit {
    /// `w = (1, 1, 1)`, `b = 0`.
    Ones,
    /// Uniform on `(-1/sqrt(3), 1/sqrt(3))`.
    FanIn,
    /// `w = (1, 1, 1)` with the bias set so that the logit is zero when
    /// every thresholded concept sits at 0.5.
    #[default]
    Centered,
}

impl AggInit {
    pub fn weights<R: Rng>(self, rng: &mut R) -> [f64; N_RULES] {
        match self {
            AggInit::Ones | AggInit::Centered => [1.0; N_RULES],
            AggInit::FanIn => {
                let b = 1.0 / (N_RULES as f64).sqrt();
                [rng.random_range(-b..b), rng.random_range(-b..b), rng.random_range(-b..b)]
            }
        }
    }

    pub fn bias(self, family: OperatorFamily) -> f64 {
        match self {
            AggInit::Ones | AggInit::FanIn => 0.0,
            AggInit::Centered => -(1.0 + family.or(0.5, 0.5)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub family: OperatorFamily,
    pub temperature: f64,
    pub dropout: f64,
    /// Replace the rule layer with a linear head on the raw concepts.
    pub no_logic: bool,
    /// Hold every threshold at tau = sigmoid(0) = 0.5.
    pub freeze_tau: bool,
    pub agg_init: AggInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: OperatorFamily::Product,
            temperature: 2.0,
            dropout: 0.3,
            no_logic: false,
            freeze_tau: false,
            agg_init: AggInit::default(),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + statrs::function::erf::erf(z * FRAC_1_SQRT_2))
}

pub fn gelu_grad(z: f64) -> f64 {
    let cdf = 0.5 * (1.0 + statrs::function::erf::erf(z * FRAC_1_SQRT_2));
    let pdf = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    cdf + z * pdf
}

pub fn softmax(w: &[f64; N_CONCEPTS]) -> [f64; N_CONCEPTS] {
    let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = w.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Inverted-dropout multipliers for one forward pass: 0 or 1/(1-p).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub eye: Vec<f64>,
    pub fnirs: Vec<f64>,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(p: f64, rng: &mut R) -> Self {
        let keep = 1.0 - p;
        let mut draw = || (0..HIDDEN).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let eye = draw();
        let fnirs = draw();
        Self { eye, fnirs }
    }
}

/// Intermediates of one encoder pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderTrace {
    pub x: Vec<f64>,
    /// Attention `sigmoid(W_a x)`.
    pub a: Vec<f64>,
    /// Gated input `x * a`.
    pub g: Vec<f64>,
    /// Layer-normalized pre-activation (before gain and bias).
    pub n_hat: Vec<f64>,
    pub inv_std: f64,
    /// `gain * n_hat + bias`.
    pub z: Vec<f64>,
    /// Dropout multipliers applied to `GELU(z)`; all ones at inference.
    pub mask: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn encode(p: &EncoderParams, x: &[f64], mask: Option<&[f64]>) -> Result<EncoderTrace, ModelError> {
    let d = p.d_in;
    if x.len() != d {
        return Err(ModelError::DimensionMismatch { expected: d, found: x.len() });
    }
    let a: Vec<f64> = p.w_a.chunks_exact(d).map(|row| sigmoid(dot(row, x))).collect();
    let g: Vec<f64> = x.iter().zip(&a).map(|(x, a)| x * a).collect();
    let u: Vec<f64> = p.w_h.chunks_exact(d).map(|row| dot(row, &g)).collect();
    let mu = u.iter().sum::<f64>() / HIDDEN as f64;
    let var = u.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / HIDDEN as f64;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let n_hat: Vec<f64> = u.iter().map(|v| (v - mu) * inv_std).collect();
    let z: Vec<f64> = n_hat.iter().zip(&p.ln_gain).zip(&p.ln_bias).map(|((n, g), b)| g * n + b).collect();
    let mask = mask.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; HIDDEN]);
    let h: Vec<f64> = z.iter().zip(&mask).map(|(z, m)| gelu(*z) * m).collect();
    if h.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteActivation("encoder hidden state"));
    }
    Ok(EncoderTrace { x: x.to_vec(), a, g, n_hat, inv_std, z, mask, h })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Everything a forward pass produced for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub eye: EncoderTrace,
    pub fnirs: EncoderTrace,
    /// Concept degrees after any knockout.
    pub c: [f64; N_CONCEPTS],
    pub knockout: [bool; N_CONCEPTS],
    pub tau: [f64; N_CONCEPTS],
    pub c_tilde: [f64; N_CONCEPTS],
    pub alpha: [f64; N_CONCEPTS],
    /// `C~2 (+) C~3` before the rule weight.
    pub disjunction: f64,
    pub f: [f64; N_RULES],
    pub logit: f64,
    pub y_hat: f64,
}

impl ForwardTrace {
    /// Class decision; a tie at exactly 0.5 goes to fatigued.
    pub fn predicted(&self) -> u8 {
        u8::from(self.y_hat >= 0.5)
    }
}

pub fn soft_threshold(c: &[f64; N_CONCEPTS], tau_hat: &[f64; N_CONCEPTS], t: f64) -> [f64; N_CONCEPTS] {
    std::array::from_fn(|i| sigmoid(t * (c[i] - sigmoid(tau_hat[i]))))
}

pub fn fire_rules(
    c_tilde: &[f64; N_CONCEPTS],
    beta: &[f64; N_RULES],
    w_alpha: &[f64; N_CONCEPTS],
    family: OperatorFamily,
) -> [f64; N_RULES] {
    let alpha = softmax(w_alpha);
    [
        beta[0] * c_tilde[0],
        beta[1] * family.or(c_tilde[1], c_tilde[2]),
        beta[2] * dot(&alpha, c_tilde),
    ]
}

pub fn aggregate(f: &[f64; N_RULES], w: &[f64; N_RULES], b: f64) -> f64 {
    sigmoid(dot(w, f) + b)
}

pub fn forward(
    p: &ModelParams,
    cfg: &ModelConfig,
    x: &[f64],
    dropout: Option<&DropoutMasks>,
    knockout: [bool; N_CONCEPTS],
) -> Result<ForwardTrace, ModelError> {
    if x.len() != N_FEATURES {
        return Err(ModelError::DimensionMismatch { expected: N_FEATURES, found: x.len() });
    }
    let eye = encode(&p.eye, &x[..N_EYE], dropout.map(|m| m.eye.as_slice()))?;
    let fnirs = encode(&p.fnirs, &x[N_EYE..N_EYE + N_FNIRS], dropout.map(|m| m.fnirs.as_slice()))?;
    let joint: Vec<f64> = eye.h.iter().chain(&fnirs.h).copied().collect();
    let inputs: [&[f64]; N_CONCEPTS] = [&eye.h, &eye.h, &fnirs.h, &joint];
    let c: [f64; N_CONCEPTS] =
        std::array::from_fn(|i| if knockout[i] { 0.0 } else { sigmoid(dot(&p.heads[i].v, inputs[i]) + p.heads[i].b) });

    let tau = p.tau_hat.map(sigmoid);
    let c_tilde: [f64; N_CONCEPTS] = std::array::from_fn(|i| sigmoid(cfg.temperature * (c[i] - tau[i])));
    let alpha = softmax(&p.w_alpha);
    let disjunction = cfg.family.or(c_tilde[1], c_tilde[2]);
    let f = [p.beta[0] * c_tilde[0], p.beta[1] * disjunction, p.beta[2] * dot(&alpha, &c_tilde)];
    let logit = if cfg.no_logic { dot(&p.lin_u, &c) + p.lin_c } else { dot(&p.agg_w, &f) + p.agg_b };
    if !logit.is_finite() {
        return Err(ModelError::NonFiniteActivation("output logit"));
    }
    Ok(ForwardTrace { eye, fnirs, c, knockout, tau, c_tilde, alpha, disjunction, f, logit, y_hat: sigmoid(logit) })
}

/// Inference-mode forward over many windows.
pub fn predict(
    p: &ModelParams,
    cfg: &ModelConfig,
    xs: &[&[f64]],
    knockout: [bool; N_CONCEPTS],
) -> Result<Vec<ForwardTrace>, ModelError> {
    xs.iter().map(|x| forward(p, cfg, x, None, knockout)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..N_FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn zero_input_gives_half_attention_and_half_concepts() {
        let cfg = ModelConfig::default();
        let p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let t = forward(&p, &cfg, &vec![0.0; N_FEATURES], None, [false; 4]).unwrap();
        assert!(t.eye.a.iter().all(|a| *a == 0.5));
        assert!(t.eye.h.iter().all(|h| *h == 0.0));
        assert!(t.c.iter().all(|c| *c == 0.5));
    }

    #[test]
    fn zero_params_predict_half() {
        let cfg = ModelConfig::default();
        let mut p = ModelParams::zeros();
        p.agg_w = [0.0; 3];
        let t = forward(&p, &cfg, &random_input(2), None, [false; 4]).unwrap();
        assert_eq!(t.y_hat, 0.5);
        assert_eq!(t.predicted(), 1);
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = ModelConfig::default();
        let p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let x = random_input(3);
        assert_eq!(forward(&p, &cfg, &x, None, [false; 4]), forward(&p, &cfg, &x, None, [false; 4]));
    }

    #[test]
    fn saturated_attention_reduces_to_plain_mlp() {
        let cfg = ModelConfig::default();
        let mut p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
        // Positive inputs with a large positive attention matrix: a -> 1.
        let x: Vec<f64> = random_input(5).iter().map(|v| v.abs() + 0.1).collect();
        p.eye.w_a.iter_mut().for_each(|w| *w = 1e3);
        let t = forward(&p, &cfg, &x, None, [false; 4]).unwrap();
        // Plain MLP oracle: GELU(LN(W_h x)) with unit gain and zero bias.
        let xe = &x[..N_EYE];
        let u: Vec<f64> = p.eye.w_h.chunks_exact(N_EYE).map(|r| r.iter().zip(xe).map(|(a, b)| a * b).sum()).collect();
        let m = u.iter().sum::<f64>() / 64.0;
        let v = u.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 64.0;
        for (h, ui) in t.eye.h.iter().zip(&u) {
            let z = (ui - m) / (v + LN_EPS).sqrt();
            assert!((h - gelu(z)).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_threshold_values() {
        let ct = soft_threshold(&[1.0, 0.5, 0.5, 0.0], &[0.0; 4], 2.0);
        assert!((ct[0] - 0.7310585786300049).abs() < 1e-15);
        assert_eq!(ct[1], 0.5);
    }

    #[test]
    fn sharper_temperature_moves_toward_step() {
        for c in [0.1, 0.3, 0.6, 0.95] {
            let step = if c > 0.5 { 1.0 } else { 0.0 };
            let mut last = f64::INFINITY;
            for t in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
                let gap = (soft_threshold(&[c; 4], &[0.0; 4], t)[0] - step).abs();
                assert!(gap < last);
                last = gap;
            }
        }
    }

    #[test]
    fn rule_examples() {
        let ct = [0.2, 0.5, 0.5, 0.9];
        let beta = [1.0; 3];
        assert_eq!(fire_rules(&ct, &beta, &[0.0; 4], OperatorFamily::Product)[1], 0.75);
        assert_eq!(fire_rules(&ct, &beta, &[0.0; 4], OperatorFamily::Lukasiewicz)[1], 1.0);
        assert_eq!(fire_rules(&ct, &beta, &[0.0; 4], OperatorFamily::Goedel)[1], 0.5);
        let f = fire_rules(&ct, &beta, &[0.0; 4], OperatorFamily::Product);
        assert!((f[2] - (0.2 + 0.5 + 0.5 + 0.9) / 4.0).abs() < 1e-15);
        let no3 = [0.2, 0.6, 0.0, 0.9];
        for fam in OperatorFamily::ALL {
            assert_eq!(fire_rules(&no3, &[1.0, 2.0, 1.0], &[0.0; 4], fam)[1], 1.2);
        }
    }

    #[test]
    fn aggregate_limits() {
        assert_eq!(aggregate(&[0.3, 0.2, 0.1], &[0.0; 3], 0.0), 0.5);
        assert!(aggregate(&[0.3, 0.2, 0.1], &[1.0; 3], 50.0) > 1.0 - 1e-15);
    }

    #[test]
    fn hand_set_scalar_oracle() {
        let ct = [0.8, 0.3, 0.6, 0.1];
        let beta = [0.5, 1.5, 2.0];
        let w_alpha = [0.1, -0.2, 0.3, 0.0];
        let f = fire_rules(&ct, &beta, &w_alpha, OperatorFamily::Product);
        let e: Vec<f64> = w_alpha.iter().map(|v: &f64| v.exp()).collect();
        let s: f64 = e.iter().sum();
        let f3 = 2.0 * (0.8 * e[0] + 0.3 * e[1] + 0.6 * e[2] + 0.1 * e[3]) / s;
        let f2 = 1.5 * (0.3 + 0.6 - 0.18);
        let y = 1.0 / (1.0 + (-(0.7 * 0.4 + -0.3 * f2 + 1.1 * f3 - 0.2) as f64).exp());
        assert!((f[1] - f2).abs() < 1e-15);
        assert!((f[2] - f3).abs() < 1e-15);
        assert!((aggregate(&f, &[0.7, -0.3, 1.1], -0.2) - y).abs() < 1e-15);
    }

    #[test]
    fn trace_matches_composition_of_ops() {
        let cfg = ModelConfig { family: OperatorFamily::Goedel, ..Default::default() };
        let mut p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(6));
        p.tau_hat = [0.2, -0.4, 0.1, 0.3];
        p.w_alpha = [0.5, 0.0, -1.0, 0.2];
        p.beta = [1.2, 0.7, 0.9];
        let t = forward(&p, &cfg, &random_input(7), None, [false; 4]).unwrap();
        let ct = soft_threshold(&t.c, &p.tau_hat, 2.0);
        assert_eq!(ct, t.c_tilde);
        let f = fire_rules(&ct, &p.beta, &p.w_alpha, cfg.family);
        assert_eq!(f, t.f);
        assert_eq!(aggregate(&f, &p.agg_w, p.agg_b), t.y_hat);
    }

    #[test]
    fn knocking_out_c4_changes_only_f3() {
        let cfg = ModelConfig::default();
        let p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(8));
        let x = random_input(9);
        let a = forward(&p, &cfg, &x, None, [false; 4]).unwrap();
        let b = forward(&p, &cfg, &x, None, [false, false, false, true]).unwrap();
        assert_eq!(b.c[3], 0.0);
        assert_eq!(a.f[0], b.f[0]);
        assert_eq!(a.f[1], b.f[1]);
        assert_ne!(a.f[2], b.f[2]);
    }

    #[test]
    fn dropout_masks_are_inverted() {
        let m = DropoutMasks::sample(0.3, &mut ChaCha8Rng::seed_from_u64(10));
        assert!(m.eye.iter().all(|v| *v == 0.0 || (*v - 1.0 / 0.7).abs() < 1e-15));
        let kept = m.eye.iter().chain(&m.fnirs).filter(|v| **v > 0.0).count();
        assert!(kept > 60 && kept < 120);
    }

    #[test]
    fn wrong_width_rejected() {
        let cfg = ModelConfig::default();
        let p = ModelParams::zeros();
        assert_eq!(
            forward(&p, &cfg, &[0.0; 10], None, [false; 4]).unwrap_err(),
            ModelError::DimensionMismatch { expected: 90, found: 10 }
        );
    }
}
