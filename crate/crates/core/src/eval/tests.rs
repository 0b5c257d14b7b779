use super::*;
use crate::dataio::{generate_synthetic, SynthConfig};
use crate::models::{AeConfig, AeModel, SiameseConfig, SiameseModel, VaeConfig, VaeModel};
use crate::retrieval::RetrievalResult;

#[test]
fn precision_reproduces_published_cells() {
    // printed cells are truncated to two decimals, not rounded
    // (473/490 = 0.9653 prints as 0.96)
    for (tp, fp, printed) in [(417u64, 73u64, 0.85), (437, 53, 0.89), (473, 17, 0.96)] {
        assert_eq!(tp + fp, 490, "49 queries x 10 retrieved");
        let p = precision_from_counts(tp, fp).unwrap();
        assert_eq!((p * 100.0).floor() / 100.0, printed, "{tp}/{fp} -> {p}");
        assert!((p - printed).abs() < 0.01);
    }
    assert!((precision_from_counts(417, 73).unwrap() - 0.8510204081632653).abs() < 1e-12);
}

#[test]
fn precision_rejects_empty_counts() {
    assert!(precision_from_counts(0, 0).is_err());
    assert_eq!(precision_from_counts(0, 10).unwrap(), 0.0);
    assert_eq!(precision_from_counts(10, 0).unwrap(), 1.0);
}

fn tiny_models(size: usize, seed: u64) -> (AeModel, VaeModel, SiameseModel) {
    let ae = AeModel::new(
        AeConfig {
            input_size: (size, size),
            channels: [4, 6, 8],
            latent_dim: 8,
        },
        seed,
    )
    .unwrap();
    let vae = VaeModel::new(
        VaeConfig {
            input_size: (size, size),
            channels: [4, 6, 8],
            latent_dim: 4,
            zero_init_heads: false,
        },
        seed + 1,
    )
    .unwrap();
    let siamese = SiameseModel::new(
        SiameseConfig {
            input_size: (size, size),
            channels: [4, 6, 8],
            embed_dim: 8,
            margin: 1.0,
        },
        seed + 2,
    )
    .unwrap();
    (ae, vae, siamese)
}

fn corpus(n_clusters: usize, per: usize, size: usize, seed: u64, salt: u64) -> crate::dataio::FrameCorpus {
    generate_synthetic(&SynthConfig {
        n_clusters,
        frames_per_cluster: per,
        image_size: (size, size),
        seed,
        augment_salt: salt,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn all_matching_target_gives_perfect_precision() {
    let target = corpus(1, 12, 16, 5, 0);
    let queries = corpus(1, 4, 16, 5, 1);
    let (ae, vae, siamese) = tiny_models(16, 1);
    let models = EvalModels {
        ae: &ae,
        ae_checksum: [1; 32],
        vae: &vae,
        vae_checksum: [2; 32],
        siamese: &siamese,
    };
    let config = EvalConfig {
        n_queries: 4,
        final_n: 10,
        candidate_k: 12,
        seed: 3,
    };
    let report = evaluate(&queries, &target, &models, &config).unwrap();
    for m in &report.methods {
        assert_eq!(m.tp + m.fp, 40);
        assert_eq!(m.precision, 1.0);
    }
}

#[test]
fn disjoint_clusters_give_zero_precision() {
    let target = corpus(2, 8, 16, 6, 0);
    let mut queries = corpus(2, 3, 16, 6, 1);
    // shift query cluster ids out of the target's id space
    let labels = queries.labels.as_mut().unwrap();
    for label in labels.values_mut() {
        label.cluster_id += 1000;
    }
    let (ae, vae, siamese) = tiny_models(16, 2);
    let models = EvalModels {
        ae: &ae,
        ae_checksum: [1; 32],
        vae: &vae,
        vae_checksum: [2; 32],
        siamese: &siamese,
    };
    let config = EvalConfig {
        n_queries: 6,
        final_n: 10,
        candidate_k: 16,
        seed: 4,
    };
    let report = evaluate(&queries, &target, &models, &config).unwrap();
    for m in &report.methods {
        assert_eq!(m.tp, 0);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.tp + m.fp, 60);
    }
}

#[test]
fn counts_are_reproducible_from_breakdown_and_csv_is_deterministic() {
    let target = corpus(4, 6, 16, 7, 0);
    let queries = corpus(4, 3, 16, 7, 1);
    let (ae, vae, siamese) = tiny_models(16, 3);
    let models = EvalModels {
        ae: &ae,
        ae_checksum: [1; 32],
        vae: &vae,
        vae_checksum: [2; 32],
        siamese: &siamese,
    };
    let config = EvalConfig {
        n_queries: 8,
        final_n: 5,
        candidate_k: 20,
        seed: 9,
    };
    let r1 = evaluate(&queries, &target, &models, &config).unwrap();
    let r2 = evaluate(&queries, &target, &models, &config).unwrap();
    assert_eq!(r1.to_csv(), r2.to_csv());
    assert_eq!(r1.per_query.len(), 8);

    let agg = r1.recompute_from_breakdown();
    for (i, m) in r1.methods.iter().enumerate() {
        assert_eq!(agg[i], (m.tp, m.fp), "sum check for {}", METHOD_NAMES[i]);
    }
    // tp + fp is exactly n_queries * final_n for every method
    for m in &r1.methods {
        assert_eq!(m.tp + m.fp, 40);
    }
    assert!(r1.to_csv().starts_with("method,tp,fp,precision\n"));
}

#[test]
fn rejects_unlabeled_and_oversampled_inputs() {
    let target = corpus(2, 3, 16, 8, 0);
    let mut unlabeled = target.clone();
    unlabeled.labels = None;
    let (ae, vae, siamese) = tiny_models(16, 4);
    let models = EvalModels {
        ae: &ae,
        ae_checksum: [1; 32],
        vae: &vae,
        vae_checksum: [2; 32],
        siamese: &siamese,
    };
    let config = EvalConfig {
        n_queries: 2,
        final_n: 3,
        candidate_k: 6,
        seed: 0,
    };
    assert!(matches!(
        evaluate(&unlabeled, &target, &models, &config),
        Err(crate::error::Error::Unlabeled(_))
    ));
    let too_many = EvalConfig {
        n_queries: 1000,
        ..config
    };
    assert!(evaluate(&target, &target, &models, &too_many).is_err());
}

#[test]
fn siamese_toggle_preserves_candidate_membership() {
    use crate::index::{build_index, LatentDtype};
    use crate::retrieval::{retrieve, QueryRequest, RetrievalModels};

    let target = corpus(3, 5, 16, 11, 0);
    let (ae, _, siamese) = tiny_models(16, 5);
    let (index, _) = build_index(&ae, [1; 32], &target, LatentDtype::F32).unwrap();
    let query = &target.frames[4].pixels;
    let ids = |use_siamese: bool| -> Vec<String> {
        let models = RetrievalModels {
            encoder: &ae,
            encoder_checksum: [1; 32],
            siamese: use_siamese.then_some(&siamese),
            ae_decoder: None,
        };
        let request = QueryRequest {
            query_frame: query,
            candidate_k: 9,
            final_n: 9,
            use_siamese,
            rerank_blend: 0.0,
        };
        let mut ids: Vec<String> = retrieve(&request, &models, &index, Some(&target))
            .unwrap()
            .ranked
            .into_iter()
            .map(|r| r.frame_id)
            .collect();
        ids.sort();
        ids
    };
    assert_eq!(ids(false), ids(true), "re-ranking only permutes candidates");
}

#[test]
fn gallery_renders_self_contained_html() {
    let dir = tempfile::tempdir().unwrap();
    let target = corpus(2, 10, 16, 12, 0);

    // empty gallery still renders
    let empty_path = dir.path().join("empty.html");
    render_gallery(&[], &target, &empty_path).unwrap();
    let empty = std::fs::read_to_string(&empty_path).unwrap();
    assert!(empty.contains("No queries to display"));
    assert!(empty.contains("</html>"));

    // 2 queries x 4 methods x 10 results: 80 result cells + 2 query cells
    let ranked = |offset: usize| -> RetrievalResult {
        RetrievalResult {
            ranked: (0..10)
                .map(|i| crate::retrieval::RankedFrame {
                    frame_id: target.frames[(offset + i) % target.len()].id.clone(),
                    l2_score: i as f32 * 0.1,
                    siamese_distance: Some(i as f32 * 0.05),
                    final_rank: i + 1,
                })
                .collect(),
            timings: Default::default(),
            clamped_k: false,
            reconstructed_candidates: false,
        }
    };
    let entries: Vec<GalleryEntry> = (0..2)
        .map(|q| GalleryEntry {
            query_id: format!("q{q}"),
            query_pixels: target.frames[q].pixels.clone(),
            methods: METHOD_NAMES
                .iter()
                .map(|m| (m.to_string(), ranked(q)))
                .collect(),
        })
        .collect();
    let path = dir.path().join("gallery.html");
    render_gallery(&entries, &target, &path).unwrap();
    let html = std::fs::read_to_string(&path).unwrap();
    assert_eq!(html.matches("<img ").count(), 82);
    assert!(!html.contains("http://") && !html.contains("https://"), "offline only");
    assert!(html.contains("data:image/png;base64,"));
}
