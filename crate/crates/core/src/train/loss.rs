//! Composite loss and its reverse-mode gradient.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::{softplus, EncoderParams, EncoderTrace, ForwardTrace, ModelConfig, ModelParams, HIDDEN, N_CONCEPTS};
use crate::model::gelu_grad;

pub const LAMBDA_DIV: f64 = 0.05;
pub const LAMBDA_SPARSE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: LAMBDA_DIV, lambda2: LAMBDA_SPARSE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub diversity: f64,
    pub sparsity: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Column norms below this are treated as a constant concept.
const DEGENERATE_NORM: f64 = 1e-9;

/// Mean squared off-diagonal Pearson correlation between the concept
/// columns, and its gradient with respect to every concept value.
pub fn diversity(cs: &[[f64; N_CONCEPTS]]) -> (f64, Vec<[f64; N_CONCEPTS]>) {
    let n = cs.len();
    let mut grad = vec![[0.0; N_CONCEPTS]; n];
    if n < 2 {
        return (0.0, grad);
    }
    let centered: Vec<Vec<f64>> = (0..N_CONCEPTS)
        .map(|i| {
            let m = cs.iter().map(|c| c[i]).sum::<f64>() / n as f64;
            cs.iter().map(|c| c[i] - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let pairs = (N_CONCEPTS * (N_CONCEPTS - 1) / 2) as f64;
    let mut value = 0.0;
    for i in 0..N_CONCEPTS {
        for j in (i + 1)..N_CONCEPTS {
            let (na, nb) = (norms[i], norms[j]);
            if na <= DEGENERATE_NORM * (n as f64).sqrt() || nb <= DEGENERATE_NORM * (n as f64).sqrt() {
                continue;
            }
            let (a, b) = (&centered[i], &centered[j]);
            let r = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
            value += r * r / pairs;
            let scale = 2.0 * r / pairs;
            for k in 0..n {
                grad[k][i] += scale * (b[k] / (na * nb) - r * a[k] / (na * na));
                grad[k][j] += scale * (a[k] / (na * nb) - r * b[k] / (nb * nb));
            }
        }
    }
    (value, grad)
}

/// Shannon entropy of `alpha` and its gradient with respect to the logits.
pub fn alpha_entropy(alpha: &[f64; N_CONCEPTS]) -> (f64, [f64; N_CONCEPTS]) {
    let h: f64 = -alpha.iter().filter(|a| **a > 0.0).map(|a| a * a.ln()).sum::<f64>();
    let grad = std::array::from_fn(|k| if alpha[k] > 0.0 { -alpha[k] * (alpha[k].ln() + h) } else { 0.0 });
    (h, grad)
}

/// Binary cross-entropy on the logit: `softplus(z) - y z`.
pub fn bce_with_logit(z: f64, y: u8) -> f64 {
    softplus(z) - f64::from(y) * z
}

pub fn compute_loss(
    traces: &[ForwardTrace],
    labels: &[u8],
    weights: &LossWeights,
) -> Result<LossBreakdown, TrainError> {
    if traces.is_empty() || traces.len() != labels.len() {
        return Err(TrainError::MissingTrace { traces: traces.len(), labels: labels.len() });
    }
    let n = traces.len() as f64;
    let ce = traces.iter().zip(labels).map(|(t, y)| bce_with_logit(t.logit, *y)).sum::<f64>() / n;
    let cs: Vec<[f64; N_CONCEPTS]> = traces.iter().map(|t| t.c).collect();
    let (div, _) = diversity(&cs);
    let (sparsity, _) = alpha_entropy(&traces[0].alpha);
    Ok(LossBreakdown {
        total: ce + weights.lambda1 * div + weights.lambda2 * sparsity,
        ce,
        diversity: div,
        sparsity,
        lambda1: weights.lambda1,
        lambda2: weights.lambda2,
    })
}

/// Loss and exact gradients for one batch of training-mode traces. Dropout
/// masks recorded in the traces are reused.
pub fn backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    traces: &[ForwardTrace],
    labels: &[u8],
    weights: &LossWeights,
) -> Result<(LossBreakdown, ModelParams), TrainError> {
    let loss = compute_loss(traces, labels, weights)?;
    let n = traces.len() as f64;
    let cs: Vec<[f64; N_CONCEPTS]> = traces.iter().map(|t| t.c).collect();
    let (_, div_grad) = diversity(&cs);
    let mut grads = ModelParams::zeros();
    for ((t, y), dc_div) in traces.iter().zip(labels).zip(&div_grad) {
        let dz = (t.y_hat - f64::from(*y)) / n;
        let dc_extra = dc_div.map(|g| weights.lambda1 * g);
        backward_window(params, cfg, t, dz, dc_extra, &mut grads);
    }
    let (_, dh) = alpha_entropy(&traces[0].alpha);
    for k in 0..N_CONCEPTS {
        grads.w_alpha[k] += weights.lambda2 * dh[k];
    }
    if cfg.freeze_tau {
        grads.tau_hat = [0.0; N_CONCEPTS];
    }
    Ok((loss, grads))
}

/// Accumulate the gradient of one window given the upstream derivative on
/// its logit and any extra derivative on its concept values.
pub fn backward_window(
    p: &ModelParams,
    cfg: &ModelConfig,
    t: &ForwardTrace,
    dz: f64,
    dc_extra: [f64; N_CONCEPTS],
    g: &mut ModelParams,
) {
    let mut dc = dc_extra;
    if cfg.no_logic {
        for i in 0..N_CONCEPTS {
            g.lin_u[i] += dz * t.c[i];
            dc[i] += dz * p.lin_u[i];
        }
        g.lin_c += dz;
    } else {
        let mut df = [0.0; 3];
        for j in 0..3 {
            g.agg_w[j] += dz * t.f[j];
            df[j] = dz * p.agg_w[j];
        }
        g.agg_b += dz;

        let ct = &t.c_tilde;
        let mut dct = [0.0; N_CONCEPTS];
        g.beta[0] += df[0] * ct[0];
        dct[0] += df[0] * p.beta[0];

        g.beta[1] += df[1] * t.disjunction;
        let dd = df[1] * p.beta[1];
        let (ga, gb) = cfg.family.or_grad(ct[1], ct[2]);
        dct[1] += dd * ga;
        dct[2] += dd * gb;

        let s: f64 = t.alpha.iter().zip(ct).map(|(a, c)| a * c).sum();
        g.beta[2] += df[2] * s;
        let ds = df[2] * p.beta[2];
        let dalpha: [f64; N_CONCEPTS] = std::array::from_fn(|i| ds * ct[i]);
        let mean_dalpha: f64 = t.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        for i in 0..N_CONCEPTS {
            dct[i] += ds * t.alpha[i];
            g.w_alpha[i] += t.alpha[i] * (dalpha[i] - mean_dalpha);
        }

        for i in 0..N_CONCEPTS {
            let dq = dct[i] * ct[i] * (1.0 - ct[i]) * cfg.temperature;
            dc[i] += dq;
            if !cfg.freeze_tau {
                g.tau_hat[i] += -dq * t.tau[i] * (1.0 - t.tau[i]);
            }
        }
    }

    let mut dh_eye = vec![0.0; HIDDEN];
    let mut dh_fnirs = vec![0.0; HIDDEN];
    for i in 0..N_CONCEPTS {
        if t.knockout[i] {
            continue;
        }
        let dk = dc[i] * t.c[i] * (1.0 - t.c[i]);
        if dk == 0.0 {
            continue;
        }
        let head = &p.heads[i];
        let gh = &mut g.heads[i];
        gh.b += dk;
        match i {
            0 | 1 => accumulate_head(&head.v, &t.eye.h, dk, &mut gh.v, &mut dh_eye),
            2 => accumulate_head(&head.v, &t.fnirs.h, dk, &mut gh.v, &mut dh_fnirs),
            _ => {
                let (gv_eye, gv_fnirs) = gh.v.split_at_mut(HIDDEN);
                accumulate_head(&head.v[..HIDDEN], &t.eye.h, dk, gv_eye, &mut dh_eye);
                accumulate_head(&head.v[HIDDEN..], &t.fnirs.h, dk, gv_fnirs, &mut dh_fnirs);
            }
        }
    }
    encoder_backward(&p.eye, &t.eye, &dh_eye, &mut g.eye);
    encoder_backward(&p.fnirs, &t.fnirs, &dh_fnirs, &mut g.fnirs);
}

fn accumulate_head(v: &[f64], h: &[f64], dk: f64, gv: &mut [f64], dh: &mut [f64]) {
    for k in 0..h.len() {
        gv[k] += dk * h[k];
        dh[k] += dk * v[k];
    }
}

fn encoder_backward(p: &EncoderParams, t: &EncoderTrace, dh: &[f64], g: &mut EncoderParams) {
    if dh.iter().all(|v| *v == 0.0) {
        return;
    }
    let d = p.d_in;
    // Through dropout and GELU to the LayerNorm output.
    let dz: Vec<f64> = (0..HIDDEN).map(|k| dh[k] * t.mask[k] * gelu_grad(t.z[k])).collect();
    let mut dn = vec![0.0; HIDDEN];
    for k in 0..HIDDEN {
        g.ln_gain[k] += dz[k] * t.n_hat[k];
        g.ln_bias[k] += dz[k];
        dn[k] = dz[k] * p.ln_gain[k];
    }
    let mean_dn = dn.iter().sum::<f64>() / HIDDEN as f64;
    let mean_dn_n = dn.iter().zip(&t.n_hat).map(|(a, b)| a * b).sum::<f64>() / HIDDEN as f64;
    let du: Vec<f64> = (0..HIDDEN).map(|k| t.inv_std * (dn[k] - mean_dn - t.n_hat[k] * mean_dn_n)).collect();

    let mut dg = vec![0.0; d];
    for (k, row) in p.w_h.chunks_exact(d).enumerate() {
        let gk = &mut g.w_h[k * d..(k + 1) * d];
        for c in 0..d {
            gk[c] += du[k] * t.g[c];
            dg[c] += du[k] * row[c];
        }
    }
    for r in 0..d {
        let dza = dg[r] * t.x[r] * t.a[r] * (1.0 - t.a[r]);
        if dza == 0.0 {
            continue;
        }
        let gr = &mut g.w_a[r * d..(r + 1) * d];
        for c in 0..d {
            gr[c] += dza * t.x[c];
        }
    }
}
