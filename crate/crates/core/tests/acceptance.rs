//! Acceptance suite. Each test checks one criterion and prints a single
//! PASS/FAIL line to stdout (written directly, so it shows without
//! `--nocapture`).

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{check_gradients, draw, family_config};
use fatigue_nesy::dataio::{generate_synthetic_cohort, SyntheticCohortSpec};
use fatigue_nesy::eval::{
    fidelity_report, point_biserial, run_ablations, run_loso, wilcoxon_signed_rank, AblationSelection, LosoConfig,
    NesyClassifier, Suite,
};
use fatigue_nesy::features::entropy::{hurst_rs, sample_entropy};
use fatigue_nesy::features::{
    extract_cohort_features, extract_eyelid_features, preprocess_pupil, BlinkEvent, FeatureConfig, FeatureWindow,
    N_FEATURES,
};
use fatigue_nesy::model::{forward, ModelConfig, OperatorFamily, N_CONCEPTS};
use fatigue_nesy::normalize::{make_strategy, NormalizeOptions, Strategy};
use fatigue_nesy::train::{rng_for, train_model, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("acceptance {id:>2} {:<4} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn cohort_features(spec: &SyntheticCohortSpec) -> Vec<FeatureWindow> {
    let sessions = generate_synthetic_cohort(spec).expect("valid spec");
    extract_cohort_features(&sessions, &FeatureConfig::default()).expect("features")
}

#[test]
fn c01_gradient_correctness() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut failures = Vec::new();
    let mut checked = 0;
    for (f, family) in OperatorFamily::ALL.into_iter().enumerate() {
        let cfg = family_config(family);
        for k in 0..20u64 {
            let d = draw(&cfg, 1000 * (f as u64 + 1) + k, 2, 1e-3);
            let r = check_gradients(&cfg, &d, 1e-5, 1e-4, 1e-7);
            checked += r.checked;
            worst = worst.max(r.worst_rel);
            worst_abs = worst_abs.max(r.worst_abs);
            failures.extend(r.failures.iter().map(|x| (family, k, *x)));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    report(
        1,
        "gradient correctness",
        pass,
        &format!(
            "{checked} parameter checks over 60 draws, worst abs diff {worst_abs:.1e}, worst rel err {worst:.1e}, \
             {} failures, {:.1}s",
            failures.len(),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c02_fuzzy_axioms() {
    let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let (p, l, g) = (OperatorFamily::Product, OperatorFamily::Lukasiewicz, OperatorFamily::Goedel);
    let mut violations = BTreeMap::<&str, usize>::new();
    let mut bump = |k: &'static str, bad: bool| *violations.entry(k).or_insert(0) += usize::from(bad);
    for (i, &a) in grid.iter().enumerate() {
        for (j, &b) in grid.iter().enumerate() {
            for fam in OperatorFamily::ALL {
                bump("or commutative", fam.or(a, b) != fam.or(b, a));
                bump("and commutative", fam.and(a, b) != fam.and(b, a));
                if j + 1 < grid.len() {
                    let b2 = grid[j + 1];
                    bump("or monotone", fam.or(a, b) > fam.or(a, b2));
                    bump("and monotone", fam.and(a, b) > fam.and(a, b2));
                }
                if i + 1 < grid.len() {
                    let a2 = grid[i + 1];
                    bump("or monotone", fam.or(a, b) > fam.or(a2, b));
                    bump("and monotone", fam.and(a, b) > fam.and(a2, b));
                }
            }
            bump("or ordering", !(g.or(a, b) <= p.or(a, b) && p.or(a, b) <= l.or(a, b)));
            bump("and ordering", !(l.and(a, b) <= p.and(a, b) && p.and(a, b) <= g.and(a, b)));
        }
        for fam in OperatorFamily::ALL {
            bump("or identity 0", fam.or(a, 0.0) != a || fam.or(0.0, a) != a);
            bump("and identity 1", fam.and(a, 1.0) != a || fam.and(1.0, a) != a);
        }
    }
    let total: usize = violations.values().sum();
    let detail = violations.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ");
    report(2, "fuzzy operator axioms", total == 0, &format!("101x101 grid, violations: {detail}"));
}

fn sampen_oracle(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let n = x.len();
    let close = |i: usize, j: usize, len: usize| (0..len).all(|k| (x[i + k] - x[j + k]).abs() <= r);
    let mut b = 0u64;
    let mut a = 0u64;
    for i in 0..n - m {
        for j in 0..n - m {
            if i != j {
                b += u64::from(close(i, j, m));
                a += u64::from(close(i, j, m + 1));
            }
        }
    }
    (a > 0 && b > 0).then(|| (b as f64 / a as f64).ln())
}

/// Fractional Gaussian noise by circulant embedding of its autocovariance.
fn fgn(n: usize, hurst: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let h2 = 2.0 * hurst;
    let gamma = |k: f64| 0.5 * ((k + 1.0).abs().powf(h2) - 2.0 * k.abs().powf(h2) + (k - 1.0).abs().powf(h2));
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|k| {
            let lag = if k <= n { k } else { m - k };
            Complex::new(gamma(lag as f64), 0.0)
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(m);
    fft.process(&mut row);
    let mut w: Vec<Complex<f64>> = row
        .iter()
        .map(|l| {
            let s = (l.re.max(0.0) / m as f64).sqrt();
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            Complex::new(s * z1, s * z2)
        })
        .collect();
    fft.process(&mut w);
    w[..n].iter().map(|c| c.re).collect()
}

#[test]
fn c03_feature_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sampen_worst: f64 = 0.0;
    let mut sampen_mismatch = 0;
    for case in 0..50 {
        let n = rng.random_range(20..=500);
        let x: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        } else {
            (0..n).map(|_| f64::from(rng.random_range(0..4u8))).collect()
        };
        let sd = fatigue_nesy::features::signal::std(&x);
        let r = 0.2 * sd;
        match (sample_entropy(&x, 2, r), sampen_oracle(&x, 2, r)) {
            (Some(a), Some(b)) => sampen_worst = sampen_worst.max((a - b).abs()),
            (None, None) => {}
            _ => sampen_mismatch += 1,
        }
    }
    let sampen_ok = sampen_worst < 1e-9 && sampen_mismatch == 0;

    let mean_h = |hurst: Option<f64>| {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let hs: Vec<f64> = (0..20)
            .map(|_| {
                let x: Vec<f64> = match hurst {
                    None => (0..2048).map(|_| rng.sample(StandardNormal)).collect(),
                    Some(h) => fgn(2048, h, &mut rng),
                };
                hurst_rs(&x).expect("hurst defined")
            })
            .collect();
        hs.iter().sum::<f64>() / hs.len() as f64
    };
    let h_white = mean_h(None);
    let h_fgn = mean_h(Some(0.7));
    let hurst_ok = (h_white - 0.5).abs() <= 0.1 && (h_fgn - 0.7).abs() <= 0.1;

    // Hand-built blink arithmetic: three blinks in an 8 s window.
    let blinks = [
        BlinkEvent { start: 1.0, end: 1.25, duration: 0.25 },
        BlinkEvent { start: 3.0, end: 3.5, duration: 0.5 },
        BlinkEvent { start: 6.5, end: 6.75, duration: 0.25 },
    ];
    let f = extract_eyelid_features(&blinks, 8.0);
    let sd_dur = ((2.0 * (0.25f64 - 1.0 / 3.0).powi(2) + (0.5f64 - 1.0 / 3.0).powi(2)) / 3.0).sqrt();
    let eyelid_ok = f[0] == 22.5
        && f[1] == 1.0 / 3.0
        && (f[2] - sd_dur).abs() < 1e-15
        && f[3] == 2.75
        && f[4] == 0.75
        && f[5] == 0.125
        && f[6] == (0.125 + 0.5 + 0.125) / 8.0
        && f[7] == 0.5;
    // One 0.2 s dip in a flat 100 Hz trace: blink dilated by 50 ms each side.
    let t: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
    let pupil: Vec<f64> = (0..1000).map(|i| if (300..320).contains(&i) { 1.0 } else { 4.0 }).collect();
    let clean = preprocess_pupil(&t, &pupil).expect("pupil");
    let dip_ok = clean.blinks.len() == 1
        && (clean.blinks[0].start - 2.95).abs() < 1e-9
        && (clean.blinks[0].duration - 0.3).abs() < 1e-9
        && (extract_eyelid_features(&clean.blinks, 10.0)[5] - 0.03).abs() < 1e-9;

    report(
        3,
        "feature oracles",
        sampen_ok && hurst_ok && eyelid_ok && dip_ok,
        &format!(
            "SampEn max |diff| {sampen_worst:.1e} over 50 series; Hurst white {h_white:.3}, fGn(0.7) {h_fgn:.3}; \
             eyelid arithmetic {eyelid_ok}; dip blink {dip_ok}"
        ),
    );
}

#[test]
fn c04_normalization_contract() {
    let mut ws = cohort_features(&SyntheticCohortSpec { n_subjects: 5, subject_noise_sd: 1.0, seed: 11, ..Default::default() });
    // A second, arbitrary cohort with wildly different scales per subject.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for s in 0..4 {
        let scale = 10f64.powi(rng.random_range(-3..4));
        for i in 0..30 {
            let label = u8::from(i >= 12);
            ws.push(FeatureWindow {
                participant_id: format!("R{s}"),
                window_index: i,
                label,
                phase: fatigue_nesy::dataio::Phase::from_label(label),
                features: (0..N_FEATURES).map(|_| scale * (rng.random::<f64>() + 3.0 * f64::from(label))).collect(),
            });
        }
    }
    let ids = fatigue_nesy::eval::subjects(&ws);
    let opts = NormalizeOptions::default();
    let mut worst: f64 = 0.0;
    let mut leaks = 0;
    let mut fatigued_sources = 0;
    for test in &ids {
        let train: Vec<FeatureWindow> = ws.iter().filter(|w| &w.participant_id != test).cloned().collect();
        let held: Vec<FeatureWindow> = ws.iter().filter(|w| &w.participant_id == test).cloned().collect();
        let norm = make_strategy(Strategy::ParticipantAware, &train, Some(test), Some(&held), &opts).unwrap();
        leaks += usize::from(norm.check_leakage(test).is_err());
        fatigued_sources += norm.provenance().filter(|r| &r.participant_id == test && r.label == 1).count();
        for pid in &ids {
            let alert: Vec<FeatureWindow> =
                ws.iter().filter(|w| &w.participant_id == pid && w.label == 0).map(|w| norm.apply(w).unwrap()).collect();
            for k in 0..N_FEATURES {
                let m = alert.iter().map(|w| w.features[k]).sum::<f64>() / alert.len() as f64;
                worst = worst.max(m.abs());
            }
        }
    }
    // The guard must also catch a normalizer that did read fatigued test windows.
    let test = &ids[0];
    let poisoned: Vec<FeatureWindow> =
        ws.iter().filter(|w| &w.participant_id == test).map(|w| FeatureWindow { label: 0, ..w.clone() }).collect();
    let train: Vec<FeatureWindow> = ws.iter().filter(|w| &w.participant_id != test).cloned().collect();
    let mut bad = make_strategy(Strategy::ParticipantAware, &train, Some(test), Some(&poisoned), &opts).unwrap();
    for b in bad.baselines.get_mut(test).unwrap().sources.iter_mut() {
        b.label = ws.iter().find(|w| &w.participant_id == test && w.window_index == b.window_index).unwrap().label;
    }
    let caught = bad.check_leakage(test).is_err();
    let pass = worst < 1e-9 && leaks == 0 && fatigued_sources == 0 && caught;
    report(
        4,
        "normalization contract",
        pass,
        &format!(
            "{} subjects x {} folds, max |alert mean| {worst:.1e}, leakage flags {leaks}, fatigued test sources \
             {fatigued_sources}, poisoned normalizer caught {caught}",
            ids.len(),
            ids.len()
        ),
    );
}

#[test]
fn c05_end_to_end_loso() {
    let start = Instant::now();
    let classifier = NesyClassifier::default();
    let cfg = LosoConfig::default();
    let spec = SyntheticCohortSpec { n_subjects: 6, concept_effect_sizes: [1.5; 4], seed: 42, ..Default::default() };
    let signal = run_loso(&cohort_features(&spec), &classifier, &cfg).unwrap();
    let null_spec = SyntheticCohortSpec { concept_effect_sizes: [0.0; 4], ..spec };
    let null = run_loso(&cohort_features(&null_spec), &classifier, &cfg).unwrap();
    let elapsed = start.elapsed();
    let (a, b) = (signal.summary.mean, null.summary.mean);
    let pass = a >= 0.90 && (0.40..=0.60).contains(&b) && elapsed < Duration::from_secs(600);
    report(
        5,
        "end-to-end synthetic LOSO",
        pass,
        &format!(
            "effect 1.5: {a:.4} (>= 0.90), effect 0: {b:.4} (in [0.40, 0.60]), seeds {:?}, {:.1}s",
            cfg.seeds,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c06_fidelity_accuracy_relationship() {
    let grade: Vec<f64> = (0..12).map(|i| 4.0 * i as f64 / 11.0).collect();
    let cfg = LosoConfig { seeds: vec![42], ..Default::default() };
    let mut hits = 0;
    let mut results = Vec::new();
    for seed in 1..=5u64 {
        let spec = SyntheticCohortSpec { n_subjects: 12, subject_noise_grade: grade.clone(), seed, ..Default::default() };
        let loso = run_loso(&cohort_features(&spec), &NesyClassifier::default(), &cfg).unwrap();
        let fid = fidelity_report(&loso.folds).unwrap();
        let (r, p) = (fid.fidelity_accuracy_r, fid.fidelity_accuracy_p);
        hits += usize::from(r > 0.5 && p < 0.05);
        results.push(format!("{r:.2}/{p:.1e}"));
    }
    report(
        6,
        "fidelity-accuracy relationship",
        hits >= 4,
        &format!("{hits}/5 generator seeds with r > 0.5 and p < 0.05 (r/p: {})", results.join(", ")),
    );
}

#[test]
fn c07_ablation_machinery() {
    let windows = cohort_features(&SyntheticCohortSpec { n_subjects: 4, windows_per_phase: 12, seed: 3, ..Default::default() });
    let norm = make_strategy(Strategy::ParticipantAware, &windows, None, None, &NormalizeOptions::default()).unwrap();
    let data = norm.apply_all(&windows).unwrap();
    let tcfg = TrainConfig { max_epochs: 25, patience: 10, ..Default::default() };

    // Frozen thresholds: no tau gradient at any step, tau unchanged.
    let frozen = ModelConfig { freeze_tau: true, ..Default::default() };
    let out = train_model(&data, &[], &frozen, &tcfg, &mut rng_for(1, 0)).unwrap();
    let frozen_ok = out.log.iter().all(|e| e.tau_grad_max == 0.0) && out.params.tau_hat == [0.0; N_CONCEPTS];
    let learned = train_model(&data, &[], &ModelConfig::default(), &tcfg, &mut rng_for(1, 0)).unwrap();
    let learned_moves = learned.log.iter().any(|e| e.tau_grad_max > 0.0);

    // Knocking out C4 changes f3 and nothing upstream of it or in f1, f2.
    let cfg = ModelConfig::default();
    let mut only_f3 = true;
    let mut f3_changed = 0;
    for w in &data {
        let a = forward(&learned.params, &cfg, &w.features, None, [false; 4]).unwrap();
        let b = forward(&learned.params, &cfg, &w.features, None, [false, false, false, true]).unwrap();
        only_f3 &= a.c_tilde[..3] == b.c_tilde[..3] && a.f[0] == b.f[0] && a.f[1] == b.f[1];
        f3_changed += usize::from(a.f[2] != b.f[2]);
    }
    let knockout_ok = only_f3 && f3_changed == data.len();

    // Switching the family recomputes f2 from the logged thresholded concepts.
    let mut family_worst: f64 = 0.0;
    let mut others_equal = true;
    for w in &data {
        let base = forward(&learned.params, &cfg, &w.features, None, [false; 4]).unwrap();
        for family in OperatorFamily::ALL {
            let c = ModelConfig { family, ..cfg.clone() };
            let t = forward(&learned.params, &c, &w.features, None, [false; 4]).unwrap();
            let (a, b) = (t.c_tilde[1], t.c_tilde[2]);
            let s = match family {
                OperatorFamily::Product => a + b - a * b,
                OperatorFamily::Lukasiewicz => (a + b).min(1.0),
                OperatorFamily::Goedel => a.max(b),
            };
            family_worst = family_worst.max((t.f[1] - learned.params.beta[1] * s).abs());
            others_equal &= t.c_tilde == base.c_tilde && t.f[0] == base.f[0] && t.f[2] == base.f[2];
        }
    }
    let family_ok = family_worst < 1e-15 && others_equal;

    // Suite structure: every base row equals the main run; deltas in pp.
    let classifier = NesyClassifier { train: tcfg.clone(), ..Default::default() };
    let lcfg = LosoConfig { seeds: vec![42], ..Default::default() };
    let main = run_loso(&windows, &classifier, &lcfg).unwrap();
    let (_, ab) = run_ablations(&windows, &classifier, &lcfg, &AblationSelection::default(), Some(main.clone())).unwrap();
    let counts: Vec<usize> = Suite::ALL.iter().map(|s| ab.suite(*s).count()).collect();
    let bases_ok = Suite::ALL.iter().all(|s| {
        let base: Vec<_> = ab.suite(*s).filter(|r| r.is_base).collect();
        base.len() == 1 && base[0].accuracy == main.summary.mean && base[0].delta_pp == 0.0
    });
    let deltas_ok = ab.rows.iter().all(|r| (r.delta_pp - 100.0 * (r.accuracy - main.summary.mean)).abs() < 1e-12);
    let structure_ok = counts == [3, 5, 3, 2] && bases_ok && deltas_ok;

    report(
        7,
        "ablation machinery",
        frozen_ok && learned_moves && knockout_ok && family_ok && structure_ok,
        &format!(
            "frozen tau grads zero {frozen_ok} (learned run nonzero {learned_moves}); C4 knockout alters only f3 \
             {knockout_ok} ({f3_changed}/{} windows); f2 per family max err {family_worst:.1e}; suite rows {counts:?}, \
             base rows match main run {bases_ok}",
            data.len()
        ),
    );
}

/// Brute-force null distribution of W+ over all 2^n sign assignments.
fn enumerate_p(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len();
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        hits += u64::from(s <= w + 1e-9);
    }
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

fn ranks_of(mags: &[f64]) -> Vec<f64> {
    mags.iter()
        .map(|m| {
            let below = mags.iter().filter(|x| *x < m).count() as f64;
            let equal = mags.iter().filter(|x| *x == m).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

#[test]
fn c08_statistics_oracles() {
    let mut patterns = 0;
    let mut mismatches = 0;
    for n in 1..=12usize {
        for tied in [false, true] {
            let mags: Vec<f64> = (0..n).map(|i| if tied { (1 + i / 3) as f64 } else { (i + 1) as f64 * 0.5 }).collect();
            let ranks = ranks_of(&mags);
            for mask in 0u32..(1 << n) {
                let diffs: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { -mags[i] } else { mags[i] }).collect();
                let r = wilcoxon_signed_rank(&diffs).unwrap();
                let w_plus: f64 = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| ranks[i]).sum();
                let total = (n * (n + 1)) as f64 / 2.0;
                let w = w_plus.min(total - w_plus);
                let p = enumerate_p(&ranks, w);
                patterns += 1;
                if r.w_plus != w_plus || r.statistic != w || (r.p_value - p).abs() > 1e-12 {
                    mismatches += 1;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pb_worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(5..200);
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        y[0] = 0;
        y[1] = 1;
        let x: Vec<f64> = y.iter().map(|v| f64::from(*v) * rng.random::<f64>() + rng.random::<f64>()).collect();
        // Classical point-biserial formula: (M1 - M0) / s_n * sqrt(p q).
        let n1 = y.iter().filter(|v| **v == 1).count() as f64;
        let n0 = n as f64 - n1;
        let m1 = x.iter().zip(&y).filter(|(_, v)| **v == 1).map(|(a, _)| a).sum::<f64>() / n1;
        let m0 = x.iter().zip(&y).filter(|(_, v)| **v == 0).map(|(a, _)| a).sum::<f64>() / n0;
        let mean = x.iter().sum::<f64>() / n as f64;
        let sn = (x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let classical = (m1 - m0) / sn * (n1 / n as f64 * n0 / n as f64).sqrt();
        pb_worst = pb_worst.max((point_biserial(&x, &y) - classical).abs());
    }
    report(
        8,
        "statistics oracles",
        mismatches == 0 && pb_worst < 1e-12,
        &format!(
            "Wilcoxon: {mismatches} mismatches over {patterns} sign patterns (n <= 12, distinct and tied); \
             point-biserial max |diff| {pb_worst:.1e} over 100 cases"
        ),
    );
}

fn payload_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let mut bytes = std::fs::read(&p).unwrap();
            if rel == "summary.json" {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("metadata");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.insert(rel, bytes);
        }
    }
    out
}

#[test]
fn c09_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "seeds = [42, 123]\n[train]\nmax_epochs = 20\npatience = 8\n[data.synthetic]\nn_subjects = 4\nwindows_per_phase = 10\nseed = 5\n",
    )
    .unwrap();
    let run = |jobs: &str, out: &Path| {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_fatigue-nesy"))
            .args(["--config", cfg.to_str().unwrap(), "--jobs", jobs, "loso", "--out", out.to_str().unwrap()])
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success());
        payload_files(out)
    };
    // Same --out for both runs so the recorded config is identical too.
    let out = tmp.path().join("run");
    let a = run("1", &out);
    std::fs::rename(&out, tmp.path().join("first")).unwrap();
    let b = run("3", &out);
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let pass = a.len() == b.len() && differing.is_empty() && a.contains_key("summary.json");
    report(
        9,
        "determinism",
        pass,
        &format!("{} payload files compared across --jobs 1 and --jobs 3, {} differ", a.len(), differing.len()),
    );
}

#[test]
fn c10_overfit_single_subject() {
    let windows = cohort_features(&SyntheticCohortSpec { n_subjects: 2, seed: 10, ..Default::default() });
    let subject: Vec<FeatureWindow> = windows.into_iter().filter(|w| w.participant_id == "S01").collect();
    let norm = make_strategy(Strategy::ParticipantAware, &subject, None, None, &NormalizeOptions::default()).unwrap();
    let data = norm.apply_all(&subject).unwrap();
    let cfg = TrainConfig::default();
    let out = train_model(&data, &[], &ModelConfig::default(), &cfg, &mut rng_for(42, 0)).unwrap();
    let (_, acc) = fatigue_nesy::train::evaluate(&out.params, &ModelConfig::default(), &data, &cfg.loss_weights()).unwrap();
    report(
        10,
        "overfit sanity",
        acc >= 0.95 && out.epochs_run <= 150,
        &format!("training accuracy {acc:.4} on {} windows after {} epochs", data.len(), out.epochs_run),
    );
}
