//! Helpers shared by the integration tests.
#![allow(dead_code)]

use fatigue_nesy::features::N_FEATURES;
use fatigue_nesy::model::{forward, DropoutMasks, ModelConfig, ModelParams, OperatorFamily};
use fatigue_nesy::train::{backward, compute_loss, LossWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub struct GradDraw {
    pub params: ModelParams,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<u8>,
    pub masks: Vec<DropoutMasks>,
}

/// Random parameters, a small batch and fixed dropout masks, redrawn until
/// every window sits at least `margin` away from the family's kinks.
pub fn draw(cfg: &ModelConfig, seed: u64, batch: usize, margin: f64) -> GradDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut p = ModelParams::init(cfg, &mut rng);
        for v in p.tau_hat.iter_mut().chain(p.w_alpha.iter_mut()) {
            *v = rng.random_range(-1.0..1.0);
        }
        for v in p.beta.iter_mut() {
            *v = rng.random_range(0.5..1.5);
        }
        for v in p.agg_w.iter_mut().chain(p.lin_u.iter_mut()) {
            *v = rng.random_range(-1.5..1.5);
        }
        p.agg_b = rng.random_range(-0.5..0.5);
        p.lin_c = rng.random_range(-0.5..0.5);
        for h in p.heads.iter_mut() {
            h.b = rng.random_range(-0.5..0.5);
        }
        for e in [&mut p.eye, &mut p.fnirs] {
            for g in e.ln_gain.iter_mut() {
                *g = rng.random_range(0.5..1.5);
            }
            for b in e.ln_bias.iter_mut() {
                *b = rng.random_range(-0.3..0.3);
            }
        }
        let xs: Vec<Vec<f64>> = (0..batch).map(|_| (0..N_FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mut ys: Vec<u8> = (0..batch).map(|i| (i % 2) as u8).collect();
        ys.rotate_left(rng.random_range(0..batch));
        let masks: Vec<DropoutMasks> = (0..batch).map(|_| DropoutMasks::sample(cfg.dropout, &mut rng)).collect();
        let ok = xs.iter().zip(&masks).all(|(x, m)| {
            let t = forward(&p, cfg, x, Some(m), [false; 4]).unwrap();
            cfg.family.kink_distance(t.c_tilde[1], t.c_tilde[2]) > margin
        });
        if ok {
            return GradDraw { params: p, xs, ys, masks };
        }
    }
}

pub fn loss_at(p: &ModelParams, cfg: &ModelConfig, d: &GradDraw, w: &LossWeights) -> f64 {
    let traces: Vec<_> = d.xs.iter().zip(&d.masks).map(|(x, m)| forward(p, cfg, x, Some(m), [false; 4]).unwrap()).collect();
    compute_loss(&traces, &d.ys, w).unwrap().total
}

pub struct GradReport {
    pub checked: usize,
    pub failures: Vec<(usize, f64, f64)>,
    pub worst_rel: f64,
    pub worst_abs: f64,
}

/// Compare every analytic gradient entry with a central difference.
pub fn check_gradients(cfg: &ModelConfig, d: &GradDraw, h: f64, rel_tol: f64, abs_tol: f64) -> GradReport {
    let w = LossWeights::default();
    let traces: Vec<_> =
        d.xs.iter().zip(&d.masks).map(|(x, m)| forward(&d.params, cfg, x, Some(m), [false; 4]).unwrap()).collect();
    let (_, grads) = backward(&d.params, cfg, &traces, &d.ys, &w).unwrap();
    let analytic = grads.to_flat();
    let base = d.params.to_flat();
    let results: Vec<(usize, f64, f64, f64)> = (0..base.len())
        .into_par_iter()
        .map(|k| {
            let mut p = d.params.clone();
            let mut flat = base.clone();
            flat[k] = base[k] + h;
            p.set_flat(&flat);
            let up = loss_at(&p, cfg, d, &w);
            flat[k] = base[k] - h;
            p.set_flat(&flat);
            let dn = loss_at(&p, cfg, d, &w);
            let fd = (up - dn) / (2.0 * h);
            let g = analytic[k];
            let diff = (g - fd).abs();
            let rel = if diff <= abs_tol { 0.0 } else { diff / g.abs().max(fd.abs()) };
            (k, g, fd, rel)
        })
        .collect();
    let worst_abs = results.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);
    let worst_rel = results.iter().map(|r| r.3).fold(0.0, f64::max);
    let failures = results.iter().filter(|r| r.3 >= rel_tol).map(|r| (r.0, r.1, r.2)).collect();
    GradReport { checked: results.len(), failures, worst_rel, worst_abs }
}

pub fn family_config(family: OperatorFamily) -> ModelConfig {
    ModelConfig { family, ..Default::default() }
}
