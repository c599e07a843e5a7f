//! End-to-end acceptance suite. Prints one PASS/FAIL/SKIP line per
//! criterion and exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use neurcam::data::{load_csv, load_labels};
use neurcam::explain::{explain, reconstruct_logits};
use neurcam::gates::{entmax, Bank};
use neurcam::kmeans::{mbk_fit, KmeansConfig};
use neurcam::metrics::{adjusted_rand, nmi, unsup_accuracy, PartitionPair};
use neurcam::model::{init_model, ModelState};
use neurcam::objectives::{total_loss, total_loss_value, Phase};
use neurcam::synth::gaussian_blobs;
use neurcam::tensor::{finite_diff_grad, Matrix};
use neurcam::trainer::{fit, fit_multi_seed};
use neurcam::{Ablation, DualDataset, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, name: &str, check: impl FnOnce() -> Outcome) {
        let started = Instant::now();
        let outcome = check();
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail} [{secs:.1}s]");
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

// ---------------------------------------------------------------- gradients

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (n, d, k, r) = (12, 6, 3, 4);
    let cfg = TrainConfig {
        k,
        num_single: 4,
        num_pair: 2,
        hidden: 6,
        basis: 4,
        ..TrainConfig::default()
    };
    let x = random_matrix(&mut rng, n, d, 2.0);
    let x_t = random_matrix(&mut rng, n, r, 2.0);
    let z = random_matrix(&mut rng, k, r, 1.0);
    let mut model = init_model(&cfg, d, 3, &z).unwrap();
    let mut snapshot = init_model(&cfg, d, 4, &z).unwrap();
    for m in [&mut model, &mut snapshot] {
        // spread the gate logits so entmax has partial support
        for id in [m.gates.single_logits, m.gates.pair_logits] {
            for v in m.params.get_mut(id).data_mut() {
                *v = rng.random_range(-1.5..1.5);
            }
        }
        // non-zero biases keep every ReLU input away from exactly 0, where
        // the loss has a kink and central differences are meaningless
        let biases: Vec<_> = m.params.ids().filter(|&id| m.params.name(id).ends_with("bias")).collect();
        for id in biases.into_iter().chain([m.intercept]) {
            for v in m.params.get_mut(id).data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    model.gates.temp_single = 0.7;
    model.gates.temp_pair = 0.4;

    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    for (phase, snap) in [(Phase::Warmup, None), (Phase::Anneal, Some(&snapshot))] {
        let (_, tape) = total_loss(&model, snap, &x, &x_t, &cfg, phase).unwrap();
        for id in model.params.ids() {
            let theta = model.params.get(id).data().to_vec();
            let mut probe = model.clone();
            let fd = finite_diff_grad(
                |t| {
                    probe.params.get_mut(id).data_mut().copy_from_slice(t);
                    total_loss_value(&probe, snap, &x, &x_t, &cfg, phase).unwrap()
                },
                &theta,
                1e-6,
            )
            .unwrap();
            let an = tape.get(id).data();
            let diff: f64 = fd.iter().zip(an).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(an.iter().map(|v| v * v).sum::<f64>().sqrt());
            let rel = if norm < 1e-10 { diff } else { diff / norm };
            if rel > worst {
                worst = rel;
                worst_name = format!("{} ({phase:?})", model.params.name(id));
            }
        }
    }
    let elapsed = started.elapsed();
    verdict(
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!("max relative error {worst:.2e} at {worst_name}, {:.2}s", elapsed.as_secs_f64()),
    )
}

// ------------------------------------------------------------------- entmax

/// Entmax-1.5 from a nested grid search over the threshold.
fn entmax_grid_oracle(z: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = z.iter().map(|v| 0.5 * v).collect();
    let total = |tau: f64| s.iter().map(|&v| (v - tau).max(0.0).powi(2)).sum::<f64>();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (max - 1.0, max);
    for _ in 0..4 {
        let steps = 2000;
        let h = (hi - lo) / steps as f64;
        let mut next = (lo, hi);
        for i in 0..steps {
            let a = lo + i as f64 * h;
            if total(a) >= 1.0 && total(a + h) <= 1.0 {
                next = (a, a + h);
                break;
            }
        }
        (lo, hi) = next;
    }
    let tau = 0.5 * (lo + hi);
    let p: Vec<f64> = s.iter().map(|&v| (v - tau).max(0.0).powi(2)).collect();
    let sum: f64 = p.iter().sum();
    p.iter().map(|v| v / sum).collect()
}

fn entmax_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut worst, mut worst_sum) = (0.0f64, 0.0f64);
    let mut argmax_ok = true;
    for _ in 0..500 {
        let dim = rng.random_range(2..=16);
        let scale = rng.random_range(0.1..5.0);
        let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-scale..scale)).collect();
        let p = entmax(&z, 1.5);
        let q = entmax_grid_oracle(&z);
        worst = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        let am = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, &x)| if x > v[b] { i } else { b });
        argmax_ok &= am(&p) == am(&z);
    }
    verdict(
        worst < 1e-6 && worst_sum < 1e-10 && argmax_ok,
        format!("max deviation {worst:.2e}, max |sum-1| {worst_sum:.2e}, argmax preserved: {argmax_ok}"),
    )
}

// --------------------------------------------------------------- valid GAM

fn valid_gam_checks(model: &ModelState, data: &DualDataset, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let x = data.x_interp();
    let base = model.logits_batch(x).map_err(|e| e.to_string())?;
    let mut used: Vec<usize> = model.gates.selected_features(&model.params, Bank::Single);
    used.extend(model.gates.selected_features(&model.params, Bank::Pair));
    let unused: Vec<usize> = (0..model.d).filter(|f| !used.contains(f)).collect();
    for &f in &unused {
        let mut xp = x.clone();
        for r in 0..xp.rows() {
            xp.set(r, f, xp.get(r, f) + rng.random_range(-5.0..5.0));
        }
        let perturbed = model.logits_batch(&xp).map_err(|e| e.to_string())?;
        let same = base.data().iter().zip(perturbed.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(format!("perturbing unused feature {f} changed the logits"));
        }
    }
    let shapes = explain(model, data, 256).map_err(|e| e.to_string())?;
    let rebuilt = reconstruct_logits(&shapes);
    let err = base.data().iter().zip(rebuilt.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if err > 1e-6 {
        return Err(format!("reconstruction error {err:.2e}"));
    }
    Ok(format!("{} unused features, reconstruction error {err:.1e}", unused.len()))
}

fn valid_gam(blob_model: Option<&(ModelState, DualDataset)>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, _) = gaussian_blobs(400, 10, 3, 5.0, 21);
    let data = DualDataset::single(x, None, None).unwrap();
    let cfg = TrainConfig {
        k: 3,
        num_single: 3,
        num_pair: 2,
        hidden: 16,
        basis: 8,
        batch_size: 128,
        warmup_epochs: 30,
        temper_epochs: 10,
        total_epochs: Some(60),
        ..TrainConfig::default()
    };
    let (model, report) = match fit(&data, &cfg, 1) {
        Ok(v) => v,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let mut details = Vec::new();
    match valid_gam_checks(&model, &data, &mut rng) {
        Ok(d) => details.push(format!("GA2M fit (pairs {:?}): {d}", report.selected_pair)),
        Err(e) => return Outcome::Fail(e),
    }
    if let Some((m, d)) = blob_model {
        match valid_gam_checks(m, d, &mut rng) {
            Ok(s) => details.push(format!("blob fit: {s}")),
            Err(e) => return Outcome::Fail(e),
        }
    }
    Outcome::Pass(details.join("; "))
}

// ------------------------------------------------------------------ metrics

fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (sa, sb) = (a[i] == a[j], b[i] == b[j]);
            both += f64::from(u8::from(sa && sb));
            in_a += f64::from(u8::from(sa));
            in_b += f64::from(u8::from(sb));
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    let expected = in_a * in_b / total;
    (both - expected) / (0.5 * (in_a + in_b) - expected)
}

fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut joint = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        joint[x][y] += 1.0 / n;
    }
    let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let pb: Vec<f64> = (0..kb).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let h = |p: &[f64]| -> f64 { p.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum() };
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            if joint[i][j] > 0.0 {
                mi += joint[i][j] * (joint[i][j] / (pa[i] * pb[j])).ln();
            }
        }
    }
    mi / (0.5 * (h(&pa) + h(&pb)))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut ari_err, mut nmi_err) = (0.0f64, 0.0f64);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(4..=50);
        let (ka, kb) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let (oa, on) = (ari_oracle(&a, &b), nmi_oracle(&a, &b));
        if !oa.is_finite() || !on.is_finite() {
            continue;
        }
        let p = PartitionPair::new(&a, &b).unwrap();
        ari_err = ari_err.max((adjusted_rand(&p) - oa).abs());
        nmi_err = nmi_err.max((nmi(&p) - on.clamp(0.0, 1.0)).abs());
        checked += 1;
    }
    let mut acc_err = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(2..=6);
        let n = rng.random_range(k..=80);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let brute = permutations(k)
            .iter()
            .map(|perm| a.iter().zip(&b).filter(|&(&x, &y)| perm[x] == y).count())
            .max()
            .unwrap() as f64
            / n as f64;
        acc_err = acc_err.max((unsup_accuracy(&PartitionPair::new(&a, &b).unwrap()) - brute).abs());
    }
    verdict(
        ari_err < 1e-10 && nmi_err < 1e-10 && acc_err < 1e-12,
        format!("ARI err {ari_err:.1e}, NMI err {nmi_err:.1e}, ACC err {acc_err:.1e}"),
    )
}

// -------------------------------------------------------------------- blobs

/// Shared desk-scale training configuration for the blob criteria.
fn blob_config() -> TrainConfig {
    TrainConfig {
        k: 4,
        num_single: 8,
        num_pair: 0,
        hidden: 32,
        basis: 16,
        batch_size: 256,
        warmup_epochs: 60,
        temper_epochs: 20,
        total_epochs: Some(100),
        seeds: (0..5).collect(),
        ..TrainConfig::default()
    }
}

struct Blobs {
    data: DualDataset,
    labels: Vec<usize>,
    kmeans_inertia: f64,
}

fn blobs() -> Blobs {
    let (x, labels) = gaussian_blobs(2000, 8, 4, 6.0, 0);
    let km = mbk_fit(
        &x,
        &KmeansConfig {
            k: 4,
            seed: 0,
            ..KmeansConfig::default()
        },
    )
    .unwrap();
    Blobs {
        data: DualDataset::single(x, None, Some(labels.clone())).unwrap(),
        labels,
        kmeans_inertia: km.inertia / 2000.0,
    }
}

fn blob_quality(b: &Blobs, cfg: &TrainConfig, best: &mut Option<(ModelState, f64)>) -> Outcome {
    let started = Instant::now();
    let fitted = match fit_multi_seed(&b.data, cfg) {
        Ok(f) => f,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let elapsed = started.elapsed();
    let pred = fitted.best.predict_batch(b.data.x_interp()).unwrap();
    let acc = unsup_accuracy(&PartitionPair::new(&pred, &b.labels).unwrap());
    let inertia = fitted.best_report().final_inertia;
    let ratio = inertia / b.kmeans_inertia;
    *best = Some((fitted.best.clone(), inertia));
    verdict(
        acc >= 0.95 && ratio <= 1.10 && elapsed < Duration::from_secs(300),
        format!(
            "ACC {acc:.4}, inertia {inertia:.4} vs k-means {:.4} (ratio {ratio:.4}), {:.1}s",
            b.kmeans_inertia,
            elapsed.as_secs_f64()
        ),
    )
}

fn gate_count_ablation(b: &Blobs) -> Outcome {
    let mut ratios = Vec::new();
    for p in [1, 2, 4] {
        let cfg = TrainConfig {
            num_single: 0,
            num_pair: p,
            ..blob_config()
        };
        match fit_multi_seed(&b.data, &cfg) {
            Ok(f) => ratios.push(f.best_report().final_inertia / b.kmeans_inertia),
            Err(e) => return Outcome::Fail(e.to_string()),
        }
    }
    let monotone = ratios.windows(2).all(|w| w[1] <= w[0]);
    verdict(
        monotone && ratios[2] <= 1.2,
        format!("inertia ratio at P=1,2,4: {:.4}, {:.4}, {:.4}", ratios[0], ratios[1], ratios[2]),
    )
}

fn loss_ablation(b: &Blobs, full_min: Option<f64>) -> Outcome {
    let cfg = blob_config();
    let full = match full_min {
        Some(v) => v,
        None => match fit_multi_seed(&b.data, &cfg) {
            Ok(f) => f.best_report().final_inertia,
            Err(e) => return Outcome::Fail(e.to_string()),
        },
    };
    let no_kl = match fit_multi_seed(&b.data, &cfg.with_ablation(Ablation::NoKl)) {
        Ok(f) => f.best_report().final_inertia,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    verdict(full <= no_kl, format!("min inertia full {full:.4}, no-KL {no_kl:.4}"))
}

// ---------------------------------------------------------------- pendigits

fn env_path(key: &str) -> Option<PathBuf> {
    std::env::var_os(key).map(PathBuf::from).filter(|p| p.exists())
}

fn pendigits() -> Outcome {
    let (Some(xp), Some(ep), Some(lp)) = (
        env_path("NEURCAM_PENDIGITS_X"),
        env_path("NEURCAM_PENDIGITS_EMBEDDING"),
        env_path("NEURCAM_PENDIGITS_LABELS"),
    ) else {
        return Outcome::Skip(
            "set NEURCAM_PENDIGITS_X, NEURCAM_PENDIGITS_EMBEDDING and NEURCAM_PENDIGITS_LABELS to run".into(),
        );
    };
    let run = || -> neurcam::Result<f64> {
        let (x, names) = load_csv(&xp, true)?;
        let (e, _) = load_csv(&ep, true)?;
        let labels = load_labels(&lp)?;
        let data = DualDataset::new(x, e, names, Some(labels.clone()))?;
        let (data, _, _) = data.standardized(false);
        let cfg = TrainConfig {
            k: 10,
            num_single: data.num_features(),
            ..TrainConfig::default()
        };
        let fitted = fit_multi_seed(&data, &cfg)?;
        let pred = fitted.best.predict_batch(data.x_interp())?;
        Ok(adjusted_rand(&PartitionPair::new(&pred, &labels)?))
    };
    match run() {
        Ok(ari) => verdict((0.70..=0.80).contains(&ari), format!("ARI {ari:.3} (reference 0.754)")),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn main() -> ExitCode {
    let mut suite = Suite { failures: 0 };
    suite.run("gradient suite", gradient_suite);
    suite.run("entmax oracle", entmax_oracle);
    suite.run("metric oracles", metric_oracles);

    let b = blobs();
    let mut best = None;
    suite.run("blob clustering quality", || blob_quality(&b, &blob_config(), &mut best));
    let blob_model = best.as_ref().map(|(m, _)| (m.clone(), b.data.clone()));
    suite.run("valid GAM invariant", || valid_gam(blob_model.as_ref()));
    suite.run("gate-count ablation", || gate_count_ablation(&b));
    suite.run("loss ablation", || loss_ablation(&b, best.as_ref().map(|(_, i)| *i)));
    suite.run("pendigits spot check", pendigits);

    if suite.failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", suite.failures);
        ExitCode::FAILURE
    }
}
