//! Learnable parameters, initialization and the JSON checkpoint format.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, HIDDEN, N_CONCEPTS, N_RULES};
use crate::features::{N_EYE, N_FNIRS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub d_in: usize,
    /// Attention matrix, `d_in x d_in`, row-major.
    pub w_a: Vec<f64>,
    /// Hidden projection, `HIDDEN x d_in`, row-major.
    pub w_h: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
}

impl EncoderParams {
    pub fn init<R: Rng>(d_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Self {
            d_in,
            w_a: uniform(d_in * d_in, bound, rng),
            w_h: uniform(HIDDEN * d_in, bound, rng),
            ln_gain: vec![1.0; HIDDEN],
            ln_bias: vec![0.0; HIDDEN],
        }
    }

    pub fn zeros(d_in: usize) -> Self {
        Self { d_in, w_a: vec![0.0; d_in * d_in], w_h: vec![0.0; HIDDEN * d_in], ln_gain: vec![0.0; HIDDEN], ln_bias: vec![0.0; HIDDEN] }
    }
}

/// Concept head `C = sigmoid(v . h + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub v: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub eye: EncoderParams,
    pub fnirs: EncoderParams,
    /// Heads for C1..C4. C1, C2 read the eye hidden state, C3 the fNIRS one,
    /// C4 their concatenation.
    pub heads: Vec<HeadParams>,
    pub tau_hat: [f64; N_CONCEPTS],
    pub w_alpha: [f64; N_CONCEPTS],
    pub beta: [f64; N_RULES],
    pub agg_w: [f64; N_RULES],
    pub agg_b: f64,
    /// Linear head used when the rule layer is ablated.
    pub lin_u: [f64; N_CONCEPTS],
    pub lin_c: f64,
}

fn uniform<R: Rng>(n: usize, bound: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

pub(crate) const HEAD_INPUTS: [usize; N_CONCEPTS] = [HIDDEN, HIDDEN, HIDDEN, 2 * HIDDEN];

/// One named parameter tensor.
pub struct Slot<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
    /// Whether decoupled weight decay applies.
    pub decay: bool,
}

pub struct SlotMut<'a> {
    pub name: &'static str,
    pub data: &'a mut [f64],
    pub decay: bool,
}

const HEAD_NAMES: [(&str, &str); N_CONCEPTS] =
    [("head1.v", "head1.b"), ("head2.v", "head2.b"), ("head3.v", "head3.b"), ("head4.v", "head4.b")];

impl ModelParams {
    /// Fan-in uniform init for the encoder and head weights; the logic layer
    /// starts from tau_hat = 0, w_alpha = 0, beta = 1 and the configured
    /// aggregation init.
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let eye = EncoderParams::init(N_EYE, rng);
        let fnirs = EncoderParams::init(N_FNIRS, rng);
        let heads = HEAD_INPUTS
            .iter()
            .map(|&d| HeadParams { v: uniform(d, 1.0 / (d as f64).sqrt(), rng), b: 0.0 })
            .collect();
        let agg_w = cfg.agg_init.weights(rng);
        let lin_u = {
            let u = uniform(N_CONCEPTS, 0.5, rng);
            [u[0], u[1], u[2], u[3]]
        };
        Self {
            eye,
            fnirs,
            heads,
            tau_hat: [0.0; N_CONCEPTS],
            w_alpha: [0.0; N_CONCEPTS],
            beta: [1.0; N_RULES],
            agg_w,
            agg_b: cfg.agg_init.bias(cfg.family),
            lin_u,
            lin_c: 0.0,
        }
    }

    /// All-zero parameters of the right shapes (used for gradients and
    /// optimizer moments).
    pub fn zeros() -> Self {
        Self {
            eye: EncoderParams::zeros(N_EYE),
            fnirs: EncoderParams::zeros(N_FNIRS),
            heads: HEAD_INPUTS.iter().map(|&d| HeadParams { v: vec![0.0; d], b: 0.0 }).collect(),
            tau_hat: [0.0; N_CONCEPTS],
            w_alpha: [0.0; N_CONCEPTS],
            beta: [0.0; N_RULES],
            agg_w: [0.0; N_RULES],
            agg_b: 0.0,
            lin_u: [0.0; N_CONCEPTS],
            lin_c: 0.0,
        }
    }

    pub fn slots(&self) -> Vec<Slot<'_>> {
        let mut out = Vec::with_capacity(25);
        for (prefix, e) in [("eye", &self.eye), ("fnirs", &self.fnirs)] {
            let names: [&'static str; 4] = if prefix == "eye" {
                ["eye.w_a", "eye.w_h", "eye.ln_gain", "eye.ln_bias"]
            } else {
                ["fnirs.w_a", "fnirs.w_h", "fnirs.ln_gain", "fnirs.ln_bias"]
            };
            out.push(Slot { name: names[0], shape: vec![e.d_in, e.d_in], data: &e.w_a, decay: true });
            out.push(Slot { name: names[1], shape: vec![HIDDEN, e.d_in], data: &e.w_h, decay: true });
            out.push(Slot { name: names[2], shape: vec![HIDDEN], data: &e.ln_gain, decay: false });
            out.push(Slot { name: names[3], shape: vec![HIDDEN], data: &e.ln_bias, decay: false });
        }
        for (h, (vn, bn)) in self.heads.iter().zip(HEAD_NAMES) {
            out.push(Slot { name: vn, shape: vec![h.v.len()], data: &h.v, decay: true });
            out.push(Slot { name: bn, shape: vec![], data: std::slice::from_ref(&h.b), decay: false });
        }
        out.push(Slot { name: "logic.tau_hat", shape: vec![N_CONCEPTS], data: &self.tau_hat, decay: false });
        out.push(Slot { name: "logic.w_alpha", shape: vec![N_CONCEPTS], data: &self.w_alpha, decay: false });
        out.push(Slot { name: "logic.beta", shape: vec![N_RULES], data: &self.beta, decay: false });
        out.push(Slot { name: "logic.agg_w", shape: vec![N_RULES], data: &self.agg_w, decay: true });
        out.push(Slot { name: "logic.agg_b", shape: vec![], data: std::slice::from_ref(&self.agg_b), decay: false });
        out.push(Slot { name: "linear.u", shape: vec![N_CONCEPTS], data: &self.lin_u, decay: true });
        out.push(Slot { name: "linear.c", shape: vec![], data: std::slice::from_ref(&self.lin_c), decay: false });
        out
    }

    /// Mutable view of every tensor, in the same order as [`slots`](Self::slots).
    pub fn slots_mut(&mut self) -> Vec<SlotMut<'_>> {
        let mut out = Vec::with_capacity(25);
        let Self { eye, fnirs, heads, tau_hat, w_alpha, beta, agg_w, agg_b, lin_u, lin_c } = self;
        for (names, e) in [
            (["eye.w_a", "eye.w_h", "eye.ln_gain", "eye.ln_bias"], eye),
            (["fnirs.w_a", "fnirs.w_h", "fnirs.ln_gain", "fnirs.ln_bias"], fnirs),
        ] {
            out.push(SlotMut { name: names[0], data: &mut e.w_a, decay: true });
            out.push(SlotMut { name: names[1], data: &mut e.w_h, decay: true });
            out.push(SlotMut { name: names[2], data: &mut e.ln_gain, decay: false });
            out.push(SlotMut { name: names[3], data: &mut e.ln_bias, decay: false });
        }
        for (h, (vn, bn)) in heads.iter_mut().zip(HEAD_NAMES) {
            out.push(SlotMut { name: vn, data: &mut h.v, decay: true });
            out.push(SlotMut { name: bn, data: std::slice::from_mut(&mut h.b), decay: false });
        }
        out.push(SlotMut { name: "logic.tau_hat", data: tau_hat, decay: false });
        out.push(SlotMut { name: "logic.w_alpha", data: w_alpha, decay: false });
        out.push(SlotMut { name: "logic.beta", data: beta, decay: false });
        out.push(SlotMut { name: "logic.agg_w", data: agg_w, decay: true });
        out.push(SlotMut { name: "logic.agg_b", data: std::slice::from_mut(agg_b), decay: false });
        out.push(SlotMut { name: "linear.u", data: lin_u, decay: true });
        out.push(SlotMut { name: "linear.c", data: std::slice::from_mut(lin_c), decay: false });
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.slots().iter().map(|s| s.data.len()).sum()
    }

    /// Flattened parameter vector in slot order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.slots().iter().flat_map(|s| s.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        for slot in self.slots_mut() {
            let n = slot.data.len();
            slot.data.copy_from_slice(&flat[k..k + n]);
            k += n;
        }
        assert_eq!(k, flat.len(), "flat vector length mismatch");
    }

    pub fn is_finite(&self) -> bool {
        self.slots().iter().all(|s| s.data.iter().all(|v| v.is_finite()))
    }
}

pub const CHECKPOINT_FORMAT: &str = "fatigue-nesy-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, config: &ModelConfig) -> Self {
        let tensors = params
            .slots()
            .into_iter()
            .map(|s| TensorRecord { name: s.name.to_string(), shape: s.shape, data: s.data.to_vec() })
            .collect();
        Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, config: config.clone(), tensors }
    }

    pub fn params(&self) -> Result<ModelParams, ModelError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported checkpoint {} v{}", self.format, self.version)));
        }
        let mut params = ModelParams::zeros();
        let expected: Vec<(&'static str, Vec<usize>)> = params.slots().into_iter().map(|s| (s.name, s.shape)).collect();
        if expected.len() != self.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            let numel: usize = shape.iter().product();
            if t.name != *name || t.shape != *shape || t.data.len() != numel {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {} {:?} ({} values) does not match expected {} {:?}",
                    t.name,
                    t.shape,
                    t.data.len(),
                    name,
                    shape
                )));
            }
        }
        let flat: Vec<f64> = self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect();
        params.set_flat(&flat);
        Ok(params)
    }
}
