//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qibonn::data::{Dataset, SyntheticSpec};
use qibonn::encoding::DimensionSpec;
use qibonn::harness::{default_noise_grid, noise_sweep, run_method_on, DatasetRef, Method, RunConfig, RunReport};
use qibonn::metrics::{average_precision, roc_auc};
use qibonn::nn::{build, loss_and_grad, ArchKind, Architecture, MlpModel};
use qibonn::optimizer::{self, init_swarm, qpso_displacement, step};
use qibonn::qsim::{apply_noise, measure, prepare_qubit, rotate, QubitState};
use qibonn::trace::Evaluation;
use qibonn::{DecodedPoint, NoiseKind, NoiseSpec, OptimizerConfig};

fn verdict(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n}: {detail}");
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn aucs(r: &RunReport) -> Vec<f64> {
    r.repeats.iter().map(|x| x.test_roc_auc).collect()
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Bundled binary dataset, Shallow arch, pop 10, 50 iterations, 5 inner
/// epochs, 5 seeds. Shared by the first two criteria.
fn pima_runs() -> &'static (RunReport, RunReport) {
    static RUNS: OnceLock<(RunReport, RunReport)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cfg = RunConfig {
            dataset: DatasetRef::Bundled { name: "pima".into() },
            arch: ArchKind::Shallow,
            optimizer: OptimizerConfig { pop_size: 10, max_iter: 50, ..Default::default() },
            inner_epochs: 5,
            repeats: 5,
            ..Default::default()
        };
        let ds = cfg.dataset.load().unwrap();
        let q = run_method_on(&cfg, Method::Qibonn, &ds).unwrap();
        let v = run_method_on(&cfg, Method::Vnn, &ds).unwrap();
        (q, v)
    })
}

#[test]
fn criterion_1_tuning_lift() {
    let started = Instant::now();
    let (q, _) = pima_runs();
    let m = q.summary.roc_auc_mean;
    verdict(
        1,
        m >= 0.82,
        format!(
            "QIBONN Shallow on pima: mean test ROC-AUC {m:.4} (need >= 0.82) per seed {} [{:.0}s]",
            fmt_list(&aucs(q)),
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_improvement_over_vnn() {
    let (q, v) = pima_runs();
    let gap = q.summary.roc_auc_mean - v.summary.roc_auc_mean;
    verdict(
        2,
        gap >= 0.03,
        format!(
            "QIBONN {:.4} vs VNN {:.4} over 5 paired seeds: gap {gap:.4} (need >= 0.03)",
            q.summary.roc_auc_mean, v.summary.roc_auc_mean
        ),
    );
}

#[test]
fn criterion_3_budget_parity_dominance() {
    let cfg = RunConfig {
        dataset: DatasetRef::Synthetic(SyntheticSpec { d_informative: 5, d_noise: 15, ..Default::default() }),
        repeats: 10,
        ..Default::default()
    };
    let ds: Dataset = cfg.dataset.load().unwrap();
    let informative = ds.informative.clone().unwrap();
    let q = run_method_on(&cfg, Method::Qibonn, &ds).unwrap();
    let r = run_method_on(&cfg, Method::RandomSearch, &ds).unwrap();
    let same_budget = q.budget == r.budget
        && q.trace.len() == r.trace.len()
        && q.repeats.iter().zip(&r.repeats).all(|(a, b)| a.evaluations == b.evaluations && a.evaluations == q.budget);
    let recalls: Vec<usize> = q
        .repeats
        .iter()
        .map(|rep| informative.iter().filter(|&&c| rep.best_h.feature_mask[c]).count())
        .collect();
    let good_masks = recalls.iter().filter(|&&c| c >= 3).count();
    let diff = q.summary.roc_auc_mean - r.summary.roc_auc_mean;
    let pass = same_budget && diff >= -0.01 && good_masks >= 7;
    verdict(
        3,
        pass,
        format!(
            "synthetic 20 features (5 informative), 10 seeds: QIBONN {:.4} vs random search {:.4} (diff {diff:+.4}, need >= -0.01); budgets {} vs {} evaluations; informative recall per seed {recalls:?}, {good_masks}/10 seeds >= 3 (need >= 7)",
            q.summary.roc_auc_mean, r.summary.roc_auc_mean, q.budget, r.budget
        ),
    );
}

#[test]
fn criterion_4_displacement_statistics() {
    let started = Instant::now();
    let n = 100_000;
    let alpha = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let xs: Vec<f64> = (0..n).map(|_| qpso_displacement(1.0, 0.0, alpha, &mut rng)).collect();
    let m = mean(&xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    // Exponential with mean λ⁻¹ = α: sd λ⁻¹, and the sample variance has
    // standard error sqrt(μ4 − σ⁴)/√n = sqrt(8)·λ⁻²/√n.
    let (mu, sigma2) = (alpha, alpha * alpha);
    let se_mean = alpha / (n as f64).sqrt();
    let se_var = (8.0f64).sqrt() * sigma2 / (n as f64).sqrt();
    let elapsed = started.elapsed().as_secs_f64();
    let pass = (m - mu).abs() <= 3.0 * se_mean && (var - sigma2).abs() <= 3.0 * se_var && elapsed < 1.0;
    verdict(
        4,
        pass,
        format!(
            "alpha 0.7, |pb-g|=1, 1e5 draws: mean {m:.5} (0.7 ± {:.5}), variance {var:.5} (0.49 ± {:.5}), {elapsed:.3}s",
            3.0 * se_mean,
            3.0 * se_var
        ),
    );
}

#[test]
fn criterion_5_noise_robustness() {
    let started = Instant::now();
    let cfg = RunConfig {
        dataset: DatasetRef::Bundled { name: "pima".into() },
        optimizer: OptimizerConfig { pop_size: 6, max_iter: 25, ..Default::default() },
        repeats: 5,
        noise_grid: vec![
            NoiseSpec::bit_flip(0.005).unwrap(),
            NoiseSpec::depolarizing(0.02).unwrap(),
            NoiseSpec::amplitude_damping(0.05).unwrap(),
        ],
        ..Default::default()
    };
    let sweep = noise_sweep(&cfg).unwrap();
    let base = sweep.deltas[0].roc_auc_mean;
    let parts: Vec<String> = sweep.deltas[1..]
        .iter()
        .map(|d| format!("{} {:.4} ({:+.4})", d.condition, d.roc_auc_mean, d.delta_roc_auc))
        .collect();
    let pass = sweep.deltas.len() == 4 && sweep.deltas[1..].iter().all(|d| d.delta_roc_auc.abs() <= 0.05);
    verdict(
        5,
        pass,
        format!(
            "pima, 5 repeats, pop 6, 25 iterations: noiseless {base:.4}; {} (need |delta| <= 0.05) [{:.0}s]",
            parts.join("; "),
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_6_variance_inflation() {
    let n = 100_000;
    let q: QubitState<f64> = prepare_qubit(0.5).unwrap();
    let sigma = (0.25 / n as f64).sqrt();
    let stats = |bits: &[bool]| {
        let m = bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64;
        let var = m * (1.0 - m) * bits.len() as f64 / (bits.len() as f64 - 1.0);
        (m, var)
    };
    // The noiseless and noisy arms share the measurement uniforms, so any
    // difference comes from the channel alone.
    let mut meas = ChaCha8Rng::seed_from_u64(6);
    let clean: Vec<bool> = (0..n).map(|_| measure(&q, &mut meas)).collect();
    let (m0, v0) = stats(&clean);

    let mut all_pass = true;
    let mut parts = Vec::new();
    for spec in default_noise_grid().into_iter().filter(|s| !s.is_noiseless()) {
        let mut meas = ChaCha8Rng::seed_from_u64(6);
        let mut chan = ChaCha8Rng::seed_from_u64(60);
        let noisy: Vec<bool> = (0..n).map(|_| measure(&apply_noise(q, &spec, &mut chan), &mut meas)).collect();
        let (m, v) = stats(&noisy);
        let ok = v >= v0 && (m - 0.5).abs() <= 3.0 * sigma;
        all_pass &= ok;
        parts.push(format!("{} mean {m:.4} var {v:.5}{}", spec.label(), if ok { "" } else { " (fails)" }));
    }
    let kinds: Vec<NoiseKind> = default_noise_grid().iter().map(|s| s.kind()).collect();
    for k in [NoiseKind::BitFlip, NoiseKind::Depolarizing, NoiseKind::AmplitudeDamping] {
        assert!(kinds.contains(&k));
    }
    verdict(
        6,
        all_pass,
        format!(
            "P(1)=0.5, 1e5 trials: noiseless mean {m0:.4} var {v0:.5}; {} (need var >= noiseless and |mean-0.5| <= {:.4})",
            parts.join("; "),
            3.0 * sigma
        ),
    );
}

fn qsim_suite() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for _ in 0..10_000 {
        let q: QubitState<f64> = prepare_qubit(rng.random()).unwrap();
        let (a, b) = (rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0));
        let r = rotate(q, a);
        if (r.norm() - 1.0).abs() > 1e-12 {
            return Err(format!("rotation changed the norm to {}", r.norm()));
        }
        let (two, one) = (rotate(r, b), rotate(q, a + b));
        if (two.a - one.a).abs() > 1e-12 || (two.b - one.b).abs() > 1e-12 {
            return Err("Ry(a)·Ry(b) != Ry(a+b)".into());
        }
    }
    let trials = 100_000;
    for p in [0.1, 0.5, 0.83] {
        let q: QubitState<f64> = prepare_qubit(p).unwrap();
        let hits = (0..trials).filter(|_| measure(&q, &mut rng)).count() as f64 / trials as f64;
        if (hits - q.p1()).abs() > 4.0 * (p * (1.0 - p) / trials as f64).sqrt() {
            return Err(format!("Born frequency {hits} for P(1)={p}"));
        }
    }
    Ok(())
}

fn encoding_suite() -> Result<(), String> {
    let dims = [
        DimensionSpec::continuous("c", -1.0, 2.0, 12),
        DimensionSpec::log_continuous("l", 1e-4, 1e-1, 12),
        DimensionSpec::integer_range("i", 0, 4095, 12),
        DimensionSpec::integer_range("j", 8, 64, 6),
        DimensionSpec::categorical("k", vec![32.0, 48.0, 64.0, 96.0, 128.0, 192.0, 256.0, 384.0], 3),
        DimensionSpec::binary_flag("f"),
    ];
    for d in &dims {
        let max = (1u64 << d.bpp) - 1;
        let first = d.decode_code(0);
        let last = d.decode_code(max);
        if (first - d.lo).abs() > 1e-12 * d.lo.abs().max(1.0) || (last - d.hi).abs() > 1e-12 * d.hi.abs().max(1.0) {
            return Err(format!("{}: endpoints {first}, {last}", d.name));
        }
        let mut injective = true;
        let mut prev = f64::NEG_INFINITY;
        for v in 0..=max {
            let x = d.decode_code(v);
            if !d.contains(x) {
                return Err(format!("{}: code {v} decodes outside the range to {x}", d.name));
            }
            injective &= x > prev;
            prev = x;
        }
        if injective {
            for v in 0..=max {
                let back = d.encode_value(d.decode_code(v)).map_err(|e| e.to_string())?;
                if back != v {
                    return Err(format!("{}: code {v} round-trips to {back}", d.name));
                }
            }
        }
    }
    Ok(())
}

fn nn_suite() -> Result<(), String> {
    type R = ChaCha8Rng;
    for kind in ArchKind::ALL {
        for k in [2, 3] {
            let arch = Architecture::new(kind, 4, 5, 2, k, 0.0);
            let m: MlpModel<f64> = build(&arch, &mut R::seed_from_u64(k as u64)).map_err(|e| e.to_string())?;
            let mut rng = R::seed_from_u64(71);
            let x = Array2::from_shape_simple_fn((6, 4), || rng.sample(StandardNormal));
            let y: Vec<usize> = (0..6).map(|i| i % k).collect();
            let loss = |mm: &MlpModel<f64>| loss_and_grad::<f64, R>(mm, &x, &y, 0.01, None).unwrap().0;
            let (_, grads) = loss_and_grad::<f64, R>(&m, &x, &y, 0.01, None).map_err(|e| e.to_string())?;
            let h = 1e-5;
            for li in 0..m.layers.len() {
                let (rows, cols) = m.layers[li].w.dim();
                for idx in (0..rows * cols).map(|p| Some((p / cols, p % cols))).chain((0..cols).map(|_| None)).enumerate() {
                    let (pos, cell) = idx;
                    let bump = |delta: f64| {
                        let mut mm = m.clone();
                        match cell {
                            Some((r, c)) => mm.layers[li].w[[r, c]] += delta,
                            None => mm.layers[li].b[pos - rows * cols] += delta,
                        }
                        loss(&mm)
                    };
                    let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                    let analytic = match cell {
                        Some((r, c)) => grads[li].w[[r, c]],
                        None => grads[li].b[pos - rows * cols],
                    };
                    let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                    if rel >= 1e-4 {
                        return Err(format!("{kind} k={k} layer {li}: relative error {rel:.2e}"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn metrics_suite() -> Result<(), String> {
    let pair_auc = |s: &[f64], l: &[bool]| {
        let (mut good, mut total) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    total += 1.0;
                    good += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        good / total
    };
    let pair_ap = |s: &[f64], l: &[bool]| {
        let above = |j: usize, i: usize| s[j] > s[i] || (s[j] == s[i] && j <= i);
        let pos: Vec<usize> = (0..s.len()).filter(|&i| l[i]).collect();
        pos.iter()
            .map(|&i| {
                let all = (0..s.len()).filter(|&j| above(j, i)).count() as f64;
                let hit = pos.iter().filter(|&&j| above(j, i)).count() as f64;
                hit / all
            })
            .sum::<f64>()
            / pos.len() as f64
    };
    let mut scores = Vec::with_capacity(8);
    let mut labels = Vec::with_capacity(8);
    for n in 2..=8usize {
        let grid = 3usize.pow(n as u32);
        for lab in 1..(1u32 << n) - 1 {
            labels.clear();
            labels.extend((0..n).map(|i| lab >> i & 1 == 1));
            for code in 0..grid {
                scores.clear();
                let mut c = code;
                for _ in 0..n {
                    scores.push((c % 3) as f64);
                    c /= 3;
                }
                let auc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
                if auc != pair_auc(&scores, &labels) {
                    return Err(format!("ROC-AUC mismatch on {scores:?} / {labels:?}"));
                }
                let ap = average_precision(&scores, &labels).map_err(|e| e.to_string())?;
                if (ap - pair_ap(&scores, &labels)).abs() > 1e-12 {
                    return Err(format!("AP mismatch on {scores:?} / {labels:?}"));
                }
            }
        }
    }
    Ok(())
}

fn optimizer_suite() -> Result<(), String> {
    let space = qibonn::default_space(6);
    let target: Vec<bool> = (0..space.total_bits()).map(|i| i % 3 == 0).collect();
    let obj = |p: &DecodedPoint| {
        let bits = space.encode_point(p).unwrap();
        let miss = bits.iter().zip(&target).filter(|(a, b)| a != b).count();
        Evaluation::ok(miss as f64)
    };
    let cfg = OptimizerConfig { pop_size: 5, max_iter: 12, seed: 9, ..Default::default() };
    let mut trace = Vec::new();
    let mut swarm = init_swarm::<f64, _>(&space, &cfg, &obj, &mut trace).map_err(|e| e.to_string())?;
    let mut prev = swarm.g_best_fitness;
    for _ in 0..cfg.max_iter {
        step(&mut swarm, &space, &obj, &cfg, &mut trace);
        if swarm.g_best_fitness > prev {
            return Err(format!("global best rose from {prev} to {}", swarm.g_best_fitness));
        }
        prev = swarm.g_best_fitness;
    }
    if swarm.evaluations != cfg.budget() || trace.len() != cfg.budget() {
        return Err(format!("{} evaluations, {} trace records, budget {}", swarm.evaluations, trace.len(), cfg.budget()));
    }
    let min = trace.iter().map(|r| r.eval.fitness).fold(f64::INFINITY, f64::min);
    if min != swarm.g_best_fitness {
        return Err("global best differs from the best evaluation".into());
    }
    let a = optimizer::run::<f64, _>(&space, &obj, &cfg).map_err(|e| e.to_string())?;
    let b = optimizer::run::<f64, _>(&space, &obj, &cfg).map_err(|e| e.to_string())?;
    if serde_json::to_string(&a.trace).unwrap() != serde_json::to_string(&b.trace).unwrap() {
        return Err("optimizer trace differs between identical runs".into());
    }
    let rs = optimizer::random_search(&space, &obj, &cfg).map_err(|e| e.to_string())?;
    if rs.evaluations != a.evaluations {
        return Err("random search budget differs".into());
    }
    Ok(())
}

fn harness_suite() -> Result<(), String> {
    let cfg = RunConfig {
        dataset: DatasetRef::Synthetic(SyntheticSpec { n: 200, ..Default::default() }),
        optimizer: OptimizerConfig { pop_size: 3, max_iter: 2, ..Default::default() },
        inner_epochs: 2,
        final_epochs: 2,
        repeats: 2,
        ..Default::default()
    };
    let ds = cfg.dataset.load().map_err(|e| e.to_string())?;
    let a = run_method_on(&cfg, Method::Qibonn, &ds).map_err(|e| e.to_string())?;
    let b = run_method_on(&cfg, Method::Qibonn, &ds).map_err(|e| e.to_string())?;
    if serde_json::to_string(&a).unwrap() != serde_json::to_string(&b).unwrap() || a.trace != b.trace {
        return Err("harness output differs between identical runs".into());
    }
    if a.trace.len() != cfg.optimizer.budget() * cfg.repeats {
        return Err("harness trace length differs from the budget".into());
    }
    Ok(())
}

#[test]
fn criterion_7_property_suites() {
    let started = Instant::now();
    let suites: [(&str, fn() -> Result<(), String>); 6] = [
        ("qsim", qsim_suite),
        ("encoding", encoding_suite),
        ("nn", nn_suite),
        ("metrics", metrics_suite),
        ("optimizer", optimizer_suite),
        ("harness", harness_suite),
    ];
    let mut failures = Vec::new();
    for (name, suite) in suites {
        if let Err(e) = suite() {
            failures.push(format!("{name}: {e}"));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = failures.is_empty() && elapsed < 300.0;
    let detail = if failures.is_empty() {
        "qsim, encoding, nn, metrics, optimizer and harness checks green".to_string()
    } else {
        failures.join("; ")
    };
    verdict(7, pass, format!("{detail} [{elapsed:.1}s]"));
}

#[test]
fn criterion_8_multiclass() {
    let cfg = RunConfig {
        dataset: DatasetRef::Synthetic(SyntheticSpec { k: 3, ..Default::default() }),
        repeats: 3,
        ..Default::default()
    };
    let ds = cfg.dataset.load().unwrap();
    assert_eq!(ds.k, 3);
    let q = run_method_on(&cfg, Method::Qibonn, &ds).unwrap();
    let per_seed = aucs(&q);
    let m = mean(&per_seed);
    let clean = q.repeats.iter().all(|r| r.error.is_none());
    verdict(
        8,
        clean && m > 0.7,
        format!("synthetic K=3, 3 seeds: macro OvR ROC-AUC {m:.4} (need > 0.7) per seed {}", fmt_list(&per_seed)),
    );
}
