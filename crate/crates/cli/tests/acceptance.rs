//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pltr::analysis::{head_tail_groups, norm_report, separation_report, PairGroup};
use pltr::gradcheck::{random_problem, run_gradcheck, supported_combinations};
use pltr::loss::sample_gradients;
use pltr::{
    batch_loss, compute_centroids, compute_class_stats, evaluate, init_ncm, predict_linear,
    synth_longtailed, train, train_softmax, DistanceKind, LogitAdjust, PrototypeModel, Sampler,
    SamplerConfig, SamplerKind, SchemeKind, SplitThresholds, SynthSpec, TemperatureScheme,
    TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed of the synthetic long-tailed run shared by criteria 7 and 8.
const LT_SEED: u64 = 3;
/// 99th percentile of chi-square with 9 degrees of freedom.
const CHI2_9_99: f64 = 21.665994333461924;

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Euclidean norm scaled by the largest entry, so tiny gradients do not
/// underflow when squared.
fn norm(v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * v.iter().map(|x| (x / m).powi(2)).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    pltr::linalg::dot(a, b) / (norm(a) * norm(b))
}

fn diff(x: &[f64], c: &[f64]) -> Vec<f64> {
    x.iter().zip(c).map(|(a, b)| a - b).collect()
}

/// 1,000 (model, x, y) draws: Euclidean, no temperatures.
fn euclidean_instances(kind: DistanceKind, scale: f64) -> Vec<(PrototypeModel, Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    (0..1000)
        .map(|_| {
            let p = random_problem(&mut rng, kind, SchemeKind::None).unwrap();
            let (x, y) = p.batch.iter().next().unwrap();
            (p.model, x.iter().map(|v| v * scale).collect(), y)
        })
        .collect()
}

fn gradient_norm_identity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (model, x, y) in euclidean_instances(DistanceKind::Euclidean, 1.0) {
        let g = sample_gradients(&model, &x, y, None).unwrap();
        let p = model.posterior(&x, None).unwrap();
        for z in 0..model.num_classes() {
            let expected = if z == y {
                0.5 * (1.0 - p.probs()[y])
            } else {
                0.5 * p.probs()[z]
            };
            worst = worst.max(rel(norm(g.d_prototypes.row(z)), expected));
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && secs < 5.0,
        format!("max rel err {worst:.2e} over {checked} prototype gradients, {secs:.2}s"),
    )
}

fn gradient_direction_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut degenerate = 0;
    for (model, x, y) in euclidean_instances(DistanceKind::Euclidean, 1.0) {
        let g = sample_gradients(&model, &x, y, None).unwrap();
        for z in 0..model.num_classes() {
            let neg: Vec<f64> = g.d_prototypes.row(z).iter().map(|v| -v).collect();
            if norm(&neg) == 0.0 {
                degenerate += 1;
                continue;
            }
            let target = if z == y { 1.0 } else { -1.0 };
            worst = worst.max((cosine(&neg, &diff(&x, model.prototypes().row(z))) - target).abs());
            checked += 1;
        }
    }
    outcome(
        worst < 1e-9 && checked > 0,
        format!(
            "max |cos - (±1)| {worst:.2e} over {checked} gradients ({degenerate} exactly zero)"
        ),
    )
}

fn outlier_robustness() -> Outcome {
    let mut max_euclid = 0.0f64;
    for scale in [1.0, 1e3] {
        for (model, x, y) in euclidean_instances(DistanceKind::Euclidean, scale) {
            let g = sample_gradients(&model, &x, y, None).unwrap();
            for z in 0..model.num_classes() {
                max_euclid = max_euclid.max(norm(g.d_prototypes.row(z)));
            }
        }
    }
    let mut worst_ratio = 0.0f64;
    let mut max_sq = 0.0f64;
    let mut subnormal = 0;
    for scale in [1.0, 1e3] {
        for (model, x, y) in euclidean_instances(DistanceKind::SquaredEuclidean, scale) {
            let g = sample_gradients(&model, &x, y, None).unwrap();
            let p = model.posterior(&x, None).unwrap();
            for z in 0..model.num_classes() {
                let weight = (p.probs()[z] - f64::from(u8::from(z == y))).abs();
                let predicted = weight * norm(&diff(&x, model.prototypes().row(z)));
                let actual = norm(g.d_prototypes.row(z));
                max_sq = max_sq.max(actual);
                // a ratio needs a weight in the normal floating-point range
                if weight < f64::MIN_POSITIVE {
                    subnormal += 1;
                } else {
                    worst_ratio = worst_ratio.max((actual / predicted - 1.0).abs());
                }
            }
        }
    }
    outcome(
        max_euclid <= 0.5 && worst_ratio < 1e-6 && max_sq > 0.5,
        format!(
            "euclidean max norm {max_euclid:.6} (bound 0.5); squared: |ratio - 1| {worst_ratio:.2e} \
             ({subnormal} zero or subnormal weights excluded), max norm {max_sq:.3e}"
        ),
    )
}

fn finite_difference_oracle() -> Outcome {
    let start = Instant::now();
    let results = run_gradcheck(&supported_combinations(), 100, 1e-6, 1e-4, 0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let summary: Vec<String> = results
        .iter()
        .map(|r| format!("{}/{} {:.1e}", r.distance, r.temps, r.max_rel_error))
        .collect();
    outcome(
        results.len() == 6 && results.iter().all(|r| r.passed) && secs < 30.0,
        format!(
            "{} combinations, worst {worst:.2e}, {secs:.2}s [{}]",
            results.len(),
            summary.join(", ")
        ),
    )
}

fn softmax_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = random_problem(&mut rng, DistanceKind::SquaredEuclidean, SchemeKind::None).unwrap();
        let lin = p.model.as_linear_equivalent().unwrap();
        let x = p.batch.features.row(0);
        let logits: Vec<f64> = (0..lin.num_classes())
            .map(|k| {
                lin.bias()[k]
                    + lin
                        .weights()
                        .row(k)
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let post = p.model.posterior(x, None).unwrap();
        for (a, b) in post.probs().iter().zip(&e) {
            worst = worst.max((a - b / s).abs());
        }
    }
    outcome(worst < 1e-12, format!("max |Δp| {worst:.2e} on 100 inputs"))
}

fn reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut bit_exact = true;
    let mut nll_err = 0.0f64;
    for _ in 0..200 {
        let p = random_problem(&mut rng, DistanceKind::Euclidean, SchemeKind::None).unwrap();
        let (k, d) = (p.model.num_classes(), p.model.dim());
        let cdt = PrototypeModel::new(
            p.model.prototypes().clone(),
            TemperatureScheme::ones(SchemeKind::Channel, k, d),
            DistanceKind::Euclidean,
        )
        .unwrap();
        let mut nll = 0.0;
        for (x, y) in p.batch.iter() {
            let a = p.model.distances(x).unwrap();
            let b = cdt.distances(x).unwrap();
            bit_exact &= a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits());
            let logits: Vec<f64> = a.iter().map(|v| -0.5 * v).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
            nll += lse - logits[y];
        }
        nll /= p.batch.len() as f64;
        let zero_tau = LogitAdjust::new(0.0, &pltr::ClassStats::from_counts(vec![1; k])).unwrap();
        let loss = batch_loss(&p.model, &p.batch, Some(&zero_tau)).unwrap();
        nll_err = nll_err.max((loss - nll).abs());
    }

    let (ds, _) = synth_longtailed(&SynthSpec::default()).unwrap();
    let centroids = compute_centroids(&ds).unwrap();
    let cfg = TrainConfig {
        max_iterations: Some(0),
        ..TrainConfig::default()
    };
    let (trained, _) = train(
        &ds,
        &centroids,
        &cfg,
        SchemeKind::None,
        DistanceKind::Euclidean,
    )
    .unwrap();
    let ncm = init_ncm(&centroids, DistanceKind::Euclidean, SchemeKind::None).unwrap();
    let zero_iter = trained == ncm;
    outcome(
        bit_exact && nll_err < 1e-12 && zero_iter,
        format!("T=1 bit-exact: {bit_exact}; τ=0 vs NLL max err {nll_err:.2e}; 0-iteration == NCM: {zero_iter}"),
    )
}

struct LtRun {
    secs: f64,
    pc_cov: f64,
    sm_cov: f64,
    pc_rho: f64,
    sm_rho: f64,
    pc_few: f64,
    sm_few: f64,
    dist: (f64, f64),
    cos: (f64, f64),
    pc_all: f64,
    ncm_all: f64,
}

fn long_tailed_run() -> LtRun {
    let start = Instant::now();
    let spec = SynthSpec {
        seed: LT_SEED,
        ..SynthSpec::default()
    };
    let (train_set, test_set) = synth_longtailed(&spec).unwrap();
    let stats = compute_class_stats(&train_set);
    let th = SplitThresholds::default();
    let centroids = compute_centroids(&train_set).unwrap();
    let cfg = TrainConfig {
        lr_prototypes: 0.1,
        lr_temps: 0.005,
        seed: LT_SEED,
        ..TrainConfig::default()
    };
    let (pc, _) = train(
        &train_set,
        &centroids,
        &cfg,
        SchemeKind::Channel,
        DistanceKind::Euclidean,
    )
    .unwrap();
    let softmax = train_softmax(&train_set, &cfg, SamplerKind::InstanceBalanced).unwrap();
    let ncm = init_ncm(&centroids, DistanceKind::Euclidean, SchemeKind::None).unwrap();

    let pc_acc = evaluate(|x| pc.predict(x), &test_set, &stats, &th).unwrap();
    let sm_acc = evaluate(|x| predict_linear(&softmax, x), &test_set, &stats, &th).unwrap();
    let ncm_acc = evaluate(|x| ncm.predict(x), &test_set, &stats, &th).unwrap();
    let pc_norms = norm_report(pc.prototypes(), &stats).unwrap();
    let sm_norms = norm_report(softmax.weights(), &stats).unwrap();
    let groups = head_tail_groups(&stats, &th);
    let before = separation_report(&centroids, &groups)
        .unwrap()
        .get(PairGroup::AllAll);
    let after = separation_report(pc.prototypes(), &groups)
        .unwrap()
        .get(PairGroup::AllAll);
    LtRun {
        secs: start.elapsed().as_secs_f64(),
        pc_cov: pc_norms.cov,
        sm_cov: sm_norms.cov,
        pc_rho: pc_norms.spearman,
        sm_rho: sm_norms.spearman,
        pc_few: pc_acc.few.unwrap(),
        sm_few: sm_acc.few.unwrap(),
        dist: (before.mean_dist.unwrap(), after.mean_dist.unwrap()),
        cos: (before.mean_cos.unwrap(), after.mean_cos.unwrap()),
        pc_all: pc_acc.all.unwrap(),
        ncm_all: ncm_acc.all.unwrap(),
    }
}

fn synthetic_long_tailed(r: &LtRun) -> Outcome {
    let a = r.pc_cov < r.sm_cov;
    let b = r.sm_rho > 0.5 && r.pc_rho.abs() < r.sm_rho.abs();
    let c = r.pc_few >= r.sm_few;
    // angular separation grows when the mean cosine similarity falls
    let d = r.dist.1 > r.dist.0 && r.cos.1 < r.cos.0;
    outcome(
        a && b && c && d && r.secs < 60.0,
        format!(
            "(a) CoV pc {:.3} < softmax {:.3}: {a}; (b) spearman softmax {:.3}, pc {:.3}: {b}; \
             (c) few pc {:.3} >= softmax {:.3}: {c}; (d) dist {:.3} -> {:.3}, cos {:.4} -> {:.4}: {d}; {:.2}s",
            r.pc_cov, r.sm_cov, r.sm_rho, r.pc_rho, r.pc_few, r.sm_few, r.dist.0, r.dist.1, r.cos.0, r.cos.1, r.secs
        ),
    )
}

fn pc_beats_ncm(r: &LtRun) -> Outcome {
    outcome(
        r.pc_all >= r.ncm_all,
        format!(
            "seed {LT_SEED}: pc all {:.3} >= ncm all {:.3}",
            r.pc_all, r.ncm_all
        ),
    )
}

fn sampler_statistics() -> Outcome {
    let (ds, _) = synth_longtailed(&SynthSpec::default()).unwrap();
    let cfg = SamplerConfig {
        kind: SamplerKind::ClassBalanced,
        batch_size: 100,
        seed: 0,
    };
    let mut sampler = Sampler::new(cfg, &ds).unwrap();
    let mut hist = vec![0usize; ds.num_classes()];
    for _ in 0..100 {
        for y in sampler.next_indices().into_iter().map(|i| ds.labels()[i]) {
            hist[y] += 1;
        }
    }
    let expected = 10_000.0 / hist.len() as f64;
    let chi2: f64 = hist
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    let ratio = compute_class_stats(&ds).imbalance_ratio;
    outcome(
        chi2 < CHI2_9_99,
        format!("β={ratio}, 10^4 draws, chi2 {chi2:.3} < {CHI2_9_99:.3}, counts {hist:?}"),
    )
}

fn run(bin: &str, args: &[&str]) {
    let out = Command::new(bin).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_pltr");
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    run(bin, &["synth", "--seed", "5", "--out-dir", &p("data")]);
    let train_path = Path::new(&p("data"))
        .join("train.bin")
        .to_string_lossy()
        .into_owned();
    for tag in ["a", "b"] {
        run(
            bin,
            &[
                "train",
                "--train",
                &train_path,
                "--model",
                "pc",
                "--temps",
                "channel",
                "--tau",
                "0.25",
                "--seed",
                "5",
                "--out",
                &p(&format!("{tag}.ckpt")),
                "--trace",
                &p(&format!("{tag}.csv")),
            ],
        );
    }
    let read = |name: &str| std::fs::read(p(name)).unwrap();
    let same_ckpt = read("a.ckpt") == read("b.ckpt");
    let same_trace = read("a.csv") == read("b.csv");
    outcome(
        same_ckpt && same_trace,
        format!(
            "checkpoints identical: {same_ckpt} ({} bytes); traces identical: {same_trace} ({} bytes)",
            read("a.ckpt").len(),
            read("a.csv").len()
        ),
    )
}

fn main() {
    let lt = long_tailed_run();
    let criteria: Vec<Criterion> = vec![
        ("gradient-norm identity", Box::new(gradient_norm_identity)),
        (
            "gradient-direction identity",
            Box::new(gradient_direction_identity),
        ),
        ("outlier robustness", Box::new(outlier_robustness)),
        (
            "finite-difference oracle",
            Box::new(finite_difference_oracle),
        ),
        ("softmax equivalence", Box::new(softmax_equivalence)),
        ("reductions", Box::new(reductions)),
        (
            "synthetic long-tailed experiment",
            Box::new(|| synthetic_long_tailed(&lt)),
        ),
        (
            "prototype classifier vs nearest class mean",
            Box::new(|| pc_beats_ncm(&lt)),
        ),
        (
            "class-balanced sampler uniformity",
            Box::new(sampler_statistics),
        ),
        ("train determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.passed);
        println!(
            "criterion {:>2} {}: {name}: {}",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
