//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use common::{snapshot, Fixture, SMALL_SECTIONS};
use miafex::dataset::Split;
use miafex::features::{
    gabor_features, glcm_haralick_features, hog_features, lbp_features, GaborBankParams, GlcmParams, HogParams,
    LbpParams,
};
use miafex::metrics::{confusion, per_class_metrics, weighted_metrics};
use miafex::model::{classify_head, cross_entropy, forward, loss_and_grad, refine, ModelConfig, ModelParams};
use miafex::numerics::{RngState, Tensor};
use miafex::selection::{de_select, ga_select, pso_select, Algorithm, BitMask, Fitness, FsConfig};
use miafex::synthetic::{grating_images, informative_table};
use miafex::trainer::{evaluate, train, NadamConfig, TrainConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, took: Duration) -> Result<(), String> {
    check(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        image_size: (16, 16),
        patch_size: 8,
        channels: 3,
        embed_dim: 16,
        num_layers: 2,
        num_heads: 2,
        mlp_ratio: 4.0,
        num_classes: 3,
        final_norm: true,
    }
}

fn random_image(cfg: &ModelConfig, rng: &mut RngState) -> Tensor<f64> {
    let (h, w) = cfg.image_size;
    Tensor::new(
        &[h, w, cfg.channels],
        (0..h * w * cfg.channels).map(|_| rng.next_f64()).collect(),
    )
    .unwrap()
}

/// Initialized parameters with extra noise so no path sits in a flat regime.
fn scrambled(cfg: &ModelConfig, rng: &mut RngState, spread: f64) -> ModelParams<f64> {
    let mut p = ModelParams::init(cfg, rng).unwrap();
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.normal(0.0, spread);
        }
    }
    p
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let cfg = toy_config();
    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    for case in 0..3u64 {
        let mut rng = RngState::new(100 + case);
        let params = scrambled(&cfg, &mut rng, 0.3);
        let img = random_image(&cfg, &mut rng);
        let label = case as usize % 3;
        let (_, grads) = loss_and_grad(&img, label, &params).unwrap();
        let loss = |q: &ModelParams<f64>| cross_entropy(&forward(&img, q).unwrap().probs, label).unwrap();
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (g, name) in names.iter().enumerate() {
            let len = params.tensors()[g].len();
            let errs: Vec<f64> = (0..len)
                .into_par_iter()
                .map(|i| {
                    let mut q = params.clone();
                    let x = q.tensors()[g].data()[i];
                    q.tensors_mut()[g].data_mut()[i] = x + h;
                    let up = loss(&q);
                    q.tensors_mut()[g].data_mut()[i] = x - h;
                    let down = loss(&q);
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grads.tensors()[g].data()[i];
                    // Below 1e-5 in magnitude, difference roundoff dominates.
                    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
                })
                .collect();
            let e = errs.into_iter().fold(0.0, f64::max);
            if e > worst.0 {
                worst = (e, name.clone());
            }
        }
    }
    check(worst.0 < 1e-4, || {
        format!("{}: max relative error {:e}", worst.1, worst.0)
    })?;
    within(Duration::from_secs(60), start.elapsed())?;
    Ok(format!(
        "max relative error {:.2e} ({}) in {:.1?}",
        worst.0,
        worst.1,
        start.elapsed()
    ))
}

fn refinement() -> Outcome {
    let cfg = toy_config();
    let mut rng = RngState::new(7);
    let mut params = scrambled(&cfg, &mut rng, 0.2);
    let mut trials = 0;
    for _ in 0..50 {
        let img = random_image(&cfg, &mut rng);
        params.w_refine = Tensor::filled(&[cfg.embed_dim], 1.0);
        let tr = forward(&img, &params).unwrap();
        check(tr.r_f == tr.h_out, || "unit refinement changed h_out".into())?;

        let mut w: Vec<f64> = (0..cfg.embed_dim).map(|_| rng.normal(1.0, 0.5)).collect();
        let i = rng.below(cfg.embed_dim);
        w[i] = 0.0;
        let logits = |h: &[f64]| {
            classify_head(&refine(h, &w).unwrap(), &params.head_weight, params.head_bias.data())
                .unwrap()
                .0
        };
        let base = logits(&tr.h_out);
        for _ in 0..10 {
            let mut h = tr.h_out.clone();
            h[i] += rng.normal(0.0, 10.0);
            let moved = logits(&h);
            check(moved.iter().zip(&base).all(|(a, b)| a.to_bits() == b.to_bits()), || {
                format!("logits moved with zero weight at {i}")
            })?;
            trials += 1;
        }
    }
    Ok(format!(
        "identity exact on 50 images; {trials} zero-weight perturbations left logits bitwise fixed"
    ))
}

fn toy_training() -> Outcome {
    let start = Instant::now();
    let train_set = grating_images::<f64>(3, 50, (32, 32), 0.1, Split::Train, 1000);
    let test_set = grating_images::<f64>(3, 20, (32, 32), 0.1, Split::Test, 2000);
    let cfg = ModelConfig {
        num_classes: 3,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs: 50,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let nc = NadamConfig {
        learning_rate: 1e-4,
        ..NadamConfig::default()
    };
    let mut lines = Vec::new();
    let mut good = 0;
    for seed in 0..5u64 {
        let params = ModelParams::init(&cfg, &mut RngState::new(seed)).unwrap();
        let (params, curve) = train(params, &train_set, &TrainConfig { seed, ..tc.clone() }, &nc).unwrap();
        let acc = evaluate(&params, &test_set).unwrap().accuracy;
        let ratio = curve.last().unwrap() / curve.first().unwrap();
        if acc >= 0.95 && ratio < 0.2 {
            good += 1;
        }
        lines.push(format!("seed {seed}: acc {:.3} ratio {ratio:.3}", acc));
    }
    let detail = lines.join(", ");
    check(good >= 4, || format!("{good}/5 seeds passed ({detail})"))?;
    within(Duration::from_secs(600), start.elapsed())?;
    Ok(format!("{good}/5 seeds ({detail}) in {:.1?}", start.elapsed()))
}

fn wrapper_oracle() -> Outcome {
    let start = Instant::now();
    let (tr, va) = informative_table(200, 8, 0.1, 11)
        .unwrap()
        .stratified_split(0.8, 3)
        .unwrap();
    let fit = Fitness::new(&tr, &va, 5, 0.99).unwrap();
    let optimum = (1..1u64 << 10)
        .map(|i| fit.score(&BitMask::from_index(i, 10)).unwrap())
        .fold(f64::MIN, f64::max);
    let mut parts = Vec::new();
    for alg in Algorithm::ALL {
        let hits = (0..10u64)
            .filter(|&seed| {
                let cfg = FsConfig {
                    algorithm: alg,
                    population: 30,
                    iterations: 200,
                    seed,
                    ..FsConfig::default()
                };
                let r = match alg {
                    Algorithm::Pso => pso_select(&tr, &va, &cfg),
                    Algorithm::De => de_select(&tr, &va, &cfg),
                    Algorithm::Ga => ga_select(&tr, &va, &cfg),
                }
                .unwrap();
                (r.fitness - optimum).abs() <= 1e-9
            })
            .count();
        check(hits >= 9, || format!("{alg} reached the optimum in {hits}/10 seeds"))?;
        parts.push(format!("{alg} {hits}/10"));
    }
    within(Duration::from_secs(300), start.elapsed())?;
    Ok(format!(
        "optimum {optimum:.6}; {} in {:.1?}",
        parts.join(", "),
        start.elapsed()
    ))
}

fn metrics_oracle() -> Outcome {
    let mut rng = RngState::new(99);
    for inst in 0..1000 {
        let c = 2 + rng.below(6);
        let n = 1 + rng.below(300);
        let truth: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
        let preds: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.bernoulli(0.5) { t } else { rng.below(c) })
            .collect();
        let cm = confusion(&preds, &truth, c).unwrap();
        let pc = per_class_metrics(&cm);
        let w = weighted_metrics(&pc).unwrap();
        let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        for k in 0..c {
            let pairs = || preds.iter().zip(&truth);
            let tp = pairs().filter(|(&p, &t)| p == k && t == k).count();
            let fp = pairs().filter(|(&p, &t)| p == k && t != k).count();
            let fn_ = pairs().filter(|(&p, &t)| p != k && t == k).count();
            let support = tp + fn_;
            for j in 0..c {
                let cell = pairs().filter(|(&p, &t)| t == k && p == j).count();
                check(cm.get(k, j) == cell as u64, || {
                    format!("instance {inst}: cell ({k},{j})")
                })?;
            }
            let m = &pc[k];
            let want = (ratio(tp, tp + fp), ratio(tp, support), ratio(2 * tp, 2 * tp + fp + fn_));
            check((m.precision, m.recall, m.f1) == want, || {
                format!("instance {inst}: class {k} metrics")
            })?;
            let term = |a: usize, b: usize| {
                if b == 0 {
                    0.0
                } else {
                    (support as f64 * a as f64) / b as f64
                }
            };
            wp += term(tp, tp + fp);
            wr += term(tp, support);
            wf += term(2 * tp, 2 * tp + fp + fn_);
        }
        let correct = preds.iter().zip(&truth).filter(|(p, t)| p == t).count();
        let acc = correct as f64 / n as f64;
        let want = (acc, wp / n as f64, wr / n as f64, wf / n as f64);
        check((w.accuracy, w.precision, w.recall, w.f1) == want, || {
            format!("instance {inst}: weighted metrics")
        })?;
        check(w.recall == w.accuracy, || {
            format!(
                "instance {inst}: weighted recall {} != accuracy {}",
                w.recall, w.accuracy
            )
        })?;
    }
    Ok("1000 instances exact; weighted recall == accuracy on all".into())
}

fn descriptors() -> Outcome {
    let mut rng = RngState::new(5);
    let noise = |rng: &mut RngState, h: usize, w: usize| {
        Tensor::new(&[h, w], (0..h * w).map(|_| rng.next_f64()).collect()).unwrap()
    };
    let hog = hog_features(&noise(&mut rng, 224, 224), &HogParams::default()).unwrap();
    check(hog.len() == 26244, || format!("HOG dimension {}", hog.len()))?;

    let lbp_p = LbpParams::default();
    for _ in 0..20 {
        let h = lbp_features(&noise(&mut rng, 40, 40), &lbp_p).unwrap();
        let sum: f64 = h.iter().sum();
        check(h.len() == 59, || format!("LBP bins {}", h.len()))?;
        check((sum - 1.0).abs() < 1e-12, || format!("LBP histogram sums to {sum}"))?;
    }
    let flat = lbp_features(&Tensor::<f64>::filled(&[40, 40], 0.6), &lbp_p).unwrap();
    check(
        flat.iter().filter(|&&v| v != 0.0).count() == 1 && flat.contains(&1.0),
        || "constant LBP image spread over several bins".into(),
    )?;

    let glcm = glcm_haralick_features(&Tensor::<f64>::filled(&[16, 16], 0.42), &GlcmParams::default()).unwrap();
    for s in glcm.chunks(5) {
        check(s[0] == 0.0 && s[1] == 1.0 && s[2] == 0.0, || {
            format!("constant GLCM stats {s:?}")
        })?;
    }

    let gp = GaborBankParams::default();
    let g = gabor_features(&noise(&mut rng, 32, 32), &gp).unwrap();
    check(g.len() == 32, || format!("Gabor features {}", g.len()))?;
    let c = gabor_features(&Tensor::<f64>::filled(&[32, 32], 0.3), &gp).unwrap();
    check(c.len() == 32 && c.chunks(2).all(|p| p[1] == 0.0), || {
        "constant Gabor std not zero".into()
    })?;
    Ok("HOG 26244, LBP 59 bins summing to 1, GLCM and Gabor constant-image contracts".into())
}

fn pipeline(fx: &Fixture, out: &Path, threads: &str) {
    let out = out.to_str().unwrap();
    let mask = format!("{out}/selection_miafex_de_mask.txt");
    let steps: [&[&str]; 5] = [
        &["extract", "--extractor", "miafex", "--train-first"],
        &["select", "--extractor", "miafex", "--algorithm", "de"],
        &["classify", "--extractor", "miafex"],
        &["classify", "--extractor", "miafex", "--mask", &mask, "--tag", "wfs"],
        &["report"],
    ];
    for step in steps {
        let mut args = step.to_vec();
        args.extend(["--out", out, "--threads", threads]);
        fx.ok(&args);
    }
}

fn determinism() -> Outcome {
    let fx = Fixture::new(3, 6, 3, (16, 16), SMALL_SECTIONS);
    let root = fx.dir.path();
    pipeline(&fx, &root.join("a"), "1");
    pipeline(&fx, &root.join("b"), "1");
    pipeline(&fx, &root.join("c"), "4");
    let a = snapshot(&root.join("a"));
    let b = snapshot(&root.join("b"));
    check(a == b, || {
        let names: Vec<_> = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.0.clone())
            .collect();
        format!("single-threaded reruns differ: {names:?}")
    })?;
    let metrics = |d: &str| std::fs::read(root.join(d).join("metrics.csv")).unwrap();
    check(metrics("a") == metrics("c"), || "metrics differ with 4 threads".into())?;
    Ok(format!(
        "{} artifacts byte-identical; metrics identical with 4 threads",
        a.len()
    ))
}

fn normalization() -> Outcome {
    let cfg = toy_config();
    let worst = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngState::new(i);
            let spread = 0.1 + 2.0 * rng.next_f64();
            let p = scrambled(&cfg, &mut rng, spread);
            let tr = forward(&random_image(&cfg, &mut rng), &p).unwrap();
            let mut attn: f64 = 0.0;
            for a in tr.attention() {
                for row in a.data().chunks(cfg.seq_len()) {
                    attn = attn.max((row.iter().sum::<f64>() - 1.0).abs());
                }
            }
            (attn, (tr.probs.iter().sum::<f64>() - 1.0).abs())
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    check(worst.0 < 1e-6, || format!("attention row off by {:e}", worst.0))?;
    check(worst.1 < 1e-12, || format!("probabilities off by {:e}", worst.1))?;
    Ok(format!(
        "10000 passes; worst attention {:.1e}, probs {:.1e}",
        worst.0, worst.1
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient correctness", gradients),
        ("refinement identities", refinement),
        ("toy training", toy_training),
        ("wrapper selection oracle", wrapper_oracle),
        ("metrics oracle", metrics_oracle),
        ("descriptor contracts", descriptors),
        ("pipeline determinism", determinism),
        ("softmax and attention normalization", normalization),
    ];
    // `cargo test -- <filter>` style selection by substring.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
