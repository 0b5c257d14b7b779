//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them).
//!
//! The synthetic end-to-end benchmark (criteria 4, 5) trains all three
//! networks per seed at 64x64 and evaluates 49 rotation/modality-perturbed
//! queries against a 100-cluster x 10-frame target corpus.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frameseek_core::dataio::{generate_synthetic, sample_pairs, FrameCorpus, SynthConfig};
use frameseek_core::eval::{evaluate, precision_from_counts, EvalConfig, EvalModels, METHOD_NAMES};
use frameseek_core::gradcheck::{max_rel_error, numerical_grad, FD_REL_TOL, FD_STEP};
use frameseek_core::index::{build_index, decode_index, encode_index, LatentDtype};
use frameseek_core::models::{
    ae_train, siamese_train, vae_train, AeConfig, AeTrainConfig, SiameseConfig,
    SiameseTrainConfig, VaeConfig, VaeTrainConfig,
};
use frameseek_core::retrieval::knn_candidates;
use frameseek_core::{Tape, Tensor};

fn verdict(name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {name}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{name} failed: {detail}");
}

// ------------------------------------------------------------- criterion 1

fn fd_many<F>(name: &str, shape: &[usize], lo: f64, hi: f64, seed: u64, build: F) -> f64
where
    F: for<'t> Fn(&'t Tape<f64>, &Tensor<'t, f64>) -> Tensor<'t, f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();

        let tape = Tape::<f64>::new();
        let x = tape.leaf(shape, x0.clone(), true).unwrap();
        let loss = build(&tape, &x);
        tape.backward(&loss).unwrap();
        let analytic = x.grad().unwrap();

        let forward = |p: &[f64]| -> f64 {
            let tape = Tape::<f64>::new();
            let x = tape.leaf(shape, p.to_vec(), false).unwrap();
            build(&tape, &x).item()
        };
        let numeric = numerical_grad(&forward, &x0, FD_STEP);
        let err = max_rel_error(&analytic, &numeric);
        assert!(
            err <= FD_REL_TOL,
            "{name}: rel error {err} over {FD_REL_TOL}"
        );
        worst = worst.max(err);
    }
    worst
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut worst = 0.0f64;

    worst = worst.max(fd_many("conv2d", &[2, 2, 5, 4], -1.0, 1.0, 901, |t, x| {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let kd: Vec<f64> = (0..3 * 2 * 9).map(|_| r.gen_range(-0.5..0.5)).collect();
        let k = t.constant(&[3, 2, 3, 3], kd).unwrap();
        let b = t.constant(&[3], vec![0.1, -0.2, 0.05]).unwrap();
        let y = x.conv2d(&k, &b, 1).unwrap();
        y.mul(&y).unwrap().mean_all()
    }));
    worst = worst.max(fd_many(
        "conv2d-stride2-kernel",
        &[2, 1, 3, 3],
        -1.0,
        1.0,
        902,
        |t, x| {
            let mut r = ChaCha8Rng::seed_from_u64(12);
            let xd: Vec<f64> = (0..2 * 1 * 6 * 5).map(|_| r.gen_range(-1.0..1.0)).collect();
            let img = t.constant(&[2, 1, 6, 5], xd).unwrap();
            let b = t.constant(&[2], vec![0.0, 0.1]).unwrap();
            let y = img.conv2d(x, &b, 2).unwrap();
            y.mul(&y).unwrap().mean_all()
        },
    ));
    worst = worst.max(fd_many("dense", &[3, 4], -1.0, 1.0, 903, |t, x| {
        let mut r = ChaCha8Rng::seed_from_u64(13);
        let wd: Vec<f64> = (0..5 * 4).map(|_| r.gen_range(-0.6..0.6)).collect();
        let w = t.constant(&[5, 4], wd).unwrap();
        let b = t.constant(&[5], vec![0.1, -0.1, 0.0, 0.2, -0.3]).unwrap();
        let y = x.dense(&w, &b).unwrap();
        y.mul(&y).unwrap().mean_all()
    }));
    worst = worst.max(fd_many("relu", &[3, 5], 0.05, 1.5, 904, |_t, x| {
        x.relu().mul(x).unwrap().sum_all()
    }));
    worst = worst.max(fd_many("sigmoid", &[3, 5], -2.0, 2.0, 905, |_t, x| {
        x.sigmoid().mul(x).unwrap().sum_all()
    }));
    worst = worst.max(fd_many("upsample2", &[1, 2, 3, 4], -1.0, 1.0, 906, |_t, x| {
        let y = x.upsample2().unwrap();
        y.mul(&y).unwrap().mean_all()
    }));
    worst = worst.max(fd_many("downsample2", &[1, 2, 4, 6], -1.0, 1.0, 907, |_t, x| {
        let y = x.downsample2().unwrap();
        y.mul(&y).unwrap().mean_all()
    }));
    worst = worst.max(fd_many("bce", &[3, 4], 0.1, 0.9, 908, |t, x| {
        let mut r = ChaCha8Rng::seed_from_u64(14);
        let td: Vec<f64> = (0..12).map(|_| r.gen_range(0.0..1.0)).collect();
        let tgt = t.constant(&[3, 4], td).unwrap();
        x.bce_loss(&tgt, 1e-7).unwrap()
    }));
    worst = worst.max(fd_many("kl-mu", &[2, 5], -1.5, 1.5, 909, |t, x| {
        let mut r = ChaCha8Rng::seed_from_u64(15);
        let lv: Vec<f64> = (0..10).map(|_| r.gen_range(-1.0..1.0)).collect();
        let lvt = t.constant(&[2, 5], lv).unwrap();
        x.kl_unit_normal(&lvt).unwrap()
    }));
    worst = worst.max(fd_many("kl-logvar", &[2, 5], -1.5, 1.5, 910, |t, x| {
        let mut r = ChaCha8Rng::seed_from_u64(16);
        let mu: Vec<f64> = (0..10).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut_ = t.constant(&[2, 5], mu).unwrap();
        mut_.kl_unit_normal(x).unwrap()
    }));
    worst = worst.max(fd_many("contrastive", &[8], 0.05, 0.8, 911, |_t, x| {
        x.contrastive_loss(&[0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0], 1.0)
            .unwrap()
    }));

    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "1 gradient-correctness",
        elapsed < 60.0,
        &format!("worst rel error {worst:.2e} (tol {FD_REL_TOL:.0e}), 20 instances per op, {elapsed:.1}s"),
    );
}

// ------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_published_arithmetic() {
    // Every TP/FP cell of the published per-patient table; printed
    // precisions are truncated to two decimals (e.g. 473/490 = 0.9653
    // prints as 0.96), so the cells are checked under truncation semantics
    // plus a one-unit-in-the-last-place bound.
    let cells: [(u64, u64, f64); 12] = [
        (356, 134, 0.73),
        (351, 139, 0.71),
        (437, 53, 0.89),
        (417, 73, 0.85),
        (393, 97, 0.80),
        (456, 34, 0.93),
        (399, 91, 0.81),
        (410, 80, 0.83),
        (439, 51, 0.89),
        (437, 53, 0.89),
        (437, 53, 0.89),
        (473, 17, 0.96),
    ];
    let mut worst = 0.0f64;
    for (tp, fp, printed) in cells {
        assert_eq!(tp + fp, 490, "49 queries x 10 retrieved per cell");
        let p = precision_from_counts(tp, fp).unwrap();
        let truncated = (p * 100.0).floor() / 100.0;
        assert!(
            (truncated - printed).abs() < 1e-9,
            "{tp}/{fp}: truncated {truncated} vs printed {printed}"
        );
        assert!((p - printed).abs() < 0.01);
        worst = worst.max((p - printed).abs());
    }
    // cells the paper rounded rather than truncated also meet +/-0.005
    for (tp, fp, printed) in [
        (356u64, 134u64, 0.73),
        (437, 53, 0.89),
        (417, 73, 0.85),
        (393, 97, 0.80),
        (456, 34, 0.93),
        (399, 91, 0.81),
    ] {
        let p = precision_from_counts(tp, fp).unwrap();
        assert!((p - printed).abs() <= 0.005);
    }
    verdict(
        "2 published-arithmetic",
        true,
        &format!("12 cells reproduced, tp+fp = 490 each, worst |p - printed| = {worst:.4}"),
    );
}

// ------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_retrieval_exactness() {
    use frameseek_core::index::{IndexEntry, LatentIndex};
    use frameseek_core::models::ModelKind;

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(333);
    let entries: Vec<IndexEntry> = (0..1000)
        .map(|i| IndexEntry {
            frame_id: format!("f{i:05}"),
            latent: (0..32).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        })
        .collect();
    let index = LatentIndex {
        model_kind: ModelKind::Ae,
        model_checksum: [0; 32],
        dim: 32,
        dtype: LatentDtype::F32,
        entries,
    };

    let mut checked = 0usize;
    for _ in 0..100 {
        let query: Vec<f32> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // oracle: full sort of every entry
        let mut oracle: Vec<(f32, &str)> = index
            .entries
            .iter()
            .map(|e| {
                let d = query
                    .iter()
                    .zip(&e.latent)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f32>()
                    .sqrt();
                (d, e.frame_id.as_str())
            })
            .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        for k in [1usize, 10, 100] {
            let got = knn_candidates(&query, &index, k).unwrap();
            assert_eq!(got.len(), k);
            for (c, (_, want_id)) in got.iter().zip(&oracle[..k]) {
                assert_eq!(c.frame_id.as_str(), *want_id, "k={k}");
            }
            checked += k;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "3 retrieval-exactness",
        elapsed < 30.0,
        &format!("100 queries x k in {{1,10,100}} exact ({checked} ids), {elapsed:.1}s"),
    );
}

// --------------------------------------------------- criteria 4, 5 (shared)

/// Benchmark scale: 100 clusters x 10 target frames, 49 queries drawn from a
/// fresh rotation/modality sampling of the same clusters, all nets at 64x64.
struct BenchmarkOutcome {
    /// Precisions ordered as [`METHOD_NAMES`]: ae, vae, ae-siamese,
    /// vae-siamese.
    precision: [f64; 4],
}

fn benchmark_corpora(seed: u64) -> (FrameCorpus, FrameCorpus) {
    let target_cfg = SynthConfig {
        n_clusters: 100,
        frames_per_cluster: 10,
        image_size: (64, 64),
        seed,
        augment_salt: 0,
        ..SynthConfig::default()
    };
    let query_cfg = SynthConfig {
        frames_per_cluster: 1,
        augment_salt: 1,
        ..target_cfg.clone()
    };
    (
        generate_synthetic(&target_cfg).unwrap(),
        generate_synthetic(&query_cfg).unwrap(),
    )
}

/// Training subset: the first `per_cluster` members of every cluster.
fn training_subset(target: &FrameCorpus, per_cluster: usize) -> FrameCorpus {
    let labels = target.labels.clone().unwrap();
    let frames = target
        .frames
        .iter()
        .filter(|f| {
            f.id
                .rsplit_once("_m")
                .and_then(|(_, m)| m.parse::<usize>().ok())
                .map(|m| m < per_cluster)
                .unwrap_or(false)
        })
        .cloned()
        .collect();
    FrameCorpus {
        frames,
        labels: Some(labels),
    }
}

fn run_benchmark_seed(seed: u64) -> BenchmarkOutcome {
    let (target, queries) = benchmark_corpora(seed);
    let train_corpus = training_subset(&target, 2);

    let (ae, _) = ae_train(
        &train_corpus,
        &AeTrainConfig {
            arch: AeConfig::default(),
            epochs: 16,
            batch_size: 8,
            learning_rate: 1.0,
            seed,
        },
    )
    .unwrap();
    let (vae, _) = vae_train(
        &train_corpus,
        &VaeTrainConfig {
            arch: VaeConfig::default(),
            epochs: 12,
            batch_size: 8,
            learning_rate: 1e-3,
            beta: 1.0,
            seed,
            zero_noise: false,
        },
    )
    .unwrap();
    let pairs = sample_pairs(&target, 480, 0.5, seed).unwrap();
    let (siamese, _) = siamese_train(
        &target,
        &pairs,
        &SiameseTrainConfig {
            arch: SiameseConfig {
                input_size: (64, 64),
                ..SiameseConfig::default()
            },
            epochs: 4,
            iterations_per_epoch: 60,
            batch_size: 12,
            learning_rate: 0.005,
            seed,
        },
    )
    .unwrap();

    let models = EvalModels {
        ae: &ae,
        ae_checksum: [1; 32],
        vae: &vae,
        vae_checksum: [2; 32],
        siamese: &siamese,
    };
    let report = evaluate(
        &queries,
        &target,
        &models,
        &EvalConfig {
            n_queries: 49,
            final_n: 10,
            candidate_k: 100,
            seed,
        },
    )
    .unwrap();
    for m in &report.methods {
        assert_eq!(m.tp + m.fp, 490);
    }
    BenchmarkOutcome {
        precision: [
            report.methods[0].precision,
            report.methods[1].precision,
            report.methods[2].precision,
            report.methods[3].precision,
        ],
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values[values.len() / 2]
}

/// Both end-to-end criteria share one 5-seed run; the second test consumes
/// the memoized outcome.
fn benchmark_outcomes() -> &'static Vec<BenchmarkOutcome> {
    use std::sync::OnceLock;
    static OUTCOMES: OnceLock<Vec<BenchmarkOutcome>> = OnceLock::new();
    OUTCOMES.get_or_init(|| {
        use rayon::prelude::*;
        let seeds: Vec<u64> = (1..=5).collect();
        seeds
            .par_iter()
            .map(|&seed| {
                let outcome = run_benchmark_seed(seed);
                eprintln!(
                    "benchmark seed {seed}: ae {:.3} vae {:.3} ae-s {:.3} vae-s {:.3}",
                    outcome.precision[0],
                    outcome.precision[1],
                    outcome.precision[2],
                    outcome.precision[3]
                );
                outcome
            })
            .collect()
    })
}

#[test]
fn criterion_4_end_to_end_improvement() {
    let start = Instant::now();
    let outcomes = benchmark_outcomes();

    let mut ae_delta: Vec<f64> = outcomes.iter().map(|o| o.precision[2] - o.precision[0]).collect();
    let mut vae_delta: Vec<f64> = outcomes.iter().map(|o| o.precision[3] - o.precision[1]).collect();
    let ae_med = median(&mut ae_delta);
    let vae_med = median(&mut vae_delta);
    let vae_best = vae_delta.iter().copied().fold(f64::MIN, f64::max);
    let elapsed = start.elapsed().as_secs_f64();

    verdict(
        "4 end-to-end-improvement",
        ae_med >= 0.0 && vae_med >= 0.0 && vae_best >= 0.03 && elapsed < 1800.0,
        &format!(
            "median dP(ae-siamese - ae) = {ae_med:+.3}, median dP(vae-siamese - vae) = {vae_med:+.3}, best vae delta {vae_best:+.3}, {elapsed:.0}s"
        ),
    );
}

#[test]
fn criterion_5_method_orderings() {
    let outcomes = benchmark_outcomes();
    let med = |idx: usize| {
        let mut v: Vec<f64> = outcomes.iter().map(|o| o.precision[idx]).collect();
        median(&mut v)
    };
    let (ae, vae, ae_s, vae_s) = (med(0), med(1), med(2), med(3));
    verdict(
        "5 method-orderings",
        ae >= vae && ae_s >= ae && ae_s >= vae && ae_s >= vae_s,
        &format!(
            "median precisions: ae {ae:.3}, vae {vae:.3}, ae-siamese {ae_s:.3}, vae-siamese {vae_s:.3}"
        ),
    );
}

// ------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_compression_accounting() {
    use frameseek_core::models::{AeModel, VaeModel};

    let start = Instant::now();
    let corpus = generate_synthetic(&SynthConfig {
        n_clusters: 25,
        frames_per_cluster: 4,
        image_size: (32, 32),
        seed: 66,
        ..SynthConfig::default()
    })
    .unwrap();
    let ae = AeModel::new(
        AeConfig {
            input_size: (32, 32),
            channels: [6, 8, 12],
            latent_dim: 32,
        },
        1,
    )
    .unwrap();
    let vae = VaeModel::new(
        VaeConfig {
            input_size: (32, 32),
            channels: [6, 8, 12],
            latent_dim: 10,
            zero_init_heads: false,
        },
        2,
    )
    .unwrap();

    let mut ok = true;
    let mut details = Vec::new();
    for dtype in [LatentDtype::F32, LatentDtype::F16] {
        let (ai, _) = build_index(&ae, [1; 32], &corpus, dtype).unwrap();
        let (vi, _) = build_index(&vae, [2; 32], &corpus, dtype).unwrap();
        let ae_payload = ai.len() * ai.dim * dtype.bytes();
        let vae_payload = vi.len() * vi.dim * dtype.bytes();
        // exact 10:32 at default dims, straight from the format spec
        ok &= vae_payload * 32 == ae_payload * 10;
        details.push(format!("{dtype:?}: vae {vae_payload}B vs ae {ae_payload}B"));
    }

    // bit-exact f32 round trip
    let (index, _) = build_index(&ae, [1; 32], &corpus, LatentDtype::F32).unwrap();
    let back = decode_index(&encode_index(&index)).unwrap();
    ok &= back == index;
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 10.0;

    verdict(
        "6 compression-accounting",
        ok,
        &format!("{}; f32 round trip bit-exact, {elapsed:.1}s", details.join(", ")),
    );
}

// ------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_cli_determinism() {
    let start = Instant::now();
    let binary = env!("CARGO_BIN_EXE_frameseek");

    let run_pipeline = |root: &std::path::Path| -> Vec<u8> {
        let run = |args: &[&str]| {
            let output = std::process::Command::new(binary)
                .current_dir(root)
                .args(args)
                .output()
                .expect("spawn frameseek");
            assert!(
                output.status.success(),
                "frameseek {:?} failed:\n{}",
                args,
                String::from_utf8_lossy(&output.stderr)
            );
        };
        run(&["gen-data", "--out", "target", "--clusters", "12", "--per-cluster", "4",
              "--size", "32", "--seed", "77"]);
        run(&["gen-data", "--out", "queries", "--clusters", "12", "--per-cluster", "1",
              "--size", "32", "--seed", "77", "--augment-salt", "1"]);
        run(&["train-ae", "--data", "target", "--out", "ae.lvwt", "--epochs", "4",
              "--batch-size", "8", "--input-size", "32", "--channels", "6,8,12",
              "--latent-dim", "16", "--seed", "77"]);
        run(&["train-vae", "--data", "target", "--out", "vae.lvwt", "--epochs", "4",
              "--batch-size", "8", "--input-size", "32", "--channels", "6,8,12",
              "--latent-dim", "8", "--seed", "77"]);
        run(&["train-siamese", "--data", "target", "--out", "s.lvwt", "--pairs", "64",
              "--epochs", "2", "--iterations", "8", "--batch-size", "8",
              "--input-size", "32", "--channels", "6,8,12", "--embed-dim", "12",
              "--seed", "77"]);
        run(&["build-index", "--model", "ae.lvwt", "--data", "target", "--out", "t.lvix"]);
        run(&["eval", "--target", "target", "--queries", "queries", "--ae", "ae.lvwt",
              "--vae", "vae.lvwt", "--siamese", "s.lvwt", "--out", "report.csv",
              "--n-queries", "8", "--final-n", "5", "--candidate-k", "20", "--seed", "77"]);
        std::fs::read(root.join("report.csv")).expect("report.csv written")
    };

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let csv_a = run_pipeline(dir_a.path());
    let csv_b = run_pipeline(dir_b.path());
    let elapsed = start.elapsed().as_secs_f64();

    verdict(
        "7 determinism",
        csv_a == csv_b && !csv_a.is_empty(),
        &format!(
            "gen-data -> train-* -> build-index -> eval twice: byte-identical {}-byte CSV, {elapsed:.0}s",
            csv_a.len()
        ),
    );
}

// ------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_overfit_sanity() {
    let start = Instant::now();
    let corpus = generate_synthetic(&SynthConfig {
        n_clusters: 1,
        frames_per_cluster: 10,
        image_size: (64, 64),
        seed: 88,
        ..SynthConfig::default()
    })
    .unwrap();

    let (_, ae_report) = ae_train(
        &corpus,
        &AeTrainConfig {
            arch: AeConfig::default(),
            epochs: 200,
            batch_size: 2,
            learning_rate: 1.0,
            seed: 8,
        },
    )
    .unwrap();
    let ae_first = ae_report.losses[0] as f64;
    let ae_last = *ae_report.losses.last().unwrap() as f64;

    let (_, vae_report) = vae_train(
        &corpus,
        &VaeTrainConfig {
            arch: VaeConfig::default(),
            epochs: 30,
            batch_size: 2,
            learning_rate: 1e-3,
            beta: 1.0,
            seed: 8,
            zero_noise: false,
        },
    )
    .unwrap();
    let vae_first = vae_report.losses[0] as f64;
    let vae_last = *vae_report.losses.last().unwrap() as f64;

    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "8 overfit-sanity",
        ae_last < 0.5 * ae_first && vae_last < vae_first && elapsed < 300.0,
        &format!(
            "ae {ae_first:.4} -> {ae_last:.4} (target < {:.4}) in 200 epochs; vae {vae_first:.4} -> {vae_last:.4}; {elapsed:.0}s",
            0.5 * ae_first
        ),
    );
}
