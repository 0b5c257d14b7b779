use super::*;
use crate::dataio::{generate_synthetic, sample_pairs, PairLabel, SynthConfig};
use crate::error::Error;
use crate::models::ae::{AeConfig, AeTrainConfig};
use crate::models::siamese::{embedding_distance, SiameseConfig, SiameseTrainConfig};
use crate::models::vae::{vae_batch_losses, VaeConfig, VaeTrainConfig};
use crate::models::weights::{decode_model, encode_model};
use crate::tensor::Tape;

fn tiny_corpus(n_clusters: usize, per_cluster: usize, size: usize, seed: u64) -> crate::dataio::FrameCorpus {
    generate_synthetic(&SynthConfig {
        n_clusters,
        frames_per_cluster: per_cluster,
        image_size: (size, size),
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn small_ae_train(size: usize, epochs: usize, seed: u64) -> AeTrainConfig {
    AeTrainConfig {
        arch: AeConfig {
            input_size: (size, size),
            channels: [8, 12, 16],
            latent_dim: 8,
        },
        epochs,
        batch_size: 4,
        learning_rate: 1.0,
        seed,
    }
}

#[test]
fn default_vae_has_fewer_parameters_than_default_ae() {
    let ae = AeModel::new(AeConfig::default(), 0).unwrap();
    let vae = VaeModel::new(VaeConfig::default(), 0).unwrap();
    assert!(
        vae.count_parameters() < ae.count_parameters(),
        "vae {} vs ae {}",
        vae.count_parameters(),
        ae.count_parameters()
    );
}

#[test]
fn ae_encode_has_latent_dim_entries_and_is_pure() {
    let model = AeModel::new(AeConfig::default(), 3).unwrap();
    let corpus = tiny_corpus(1, 1, 64, 5);
    let z1 = model.encode(&corpus.frames[0].pixels).unwrap();
    let z2 = model.encode(&corpus.frames[0].pixels).unwrap();
    assert_eq!(z1.len(), 32);
    assert_eq!(z1, z2);
    assert!(z1.iter().all(|v| v.is_finite()));
}

#[test]
fn ae_zero_epochs_returns_initial_weights_and_empty_losses() {
    let corpus = tiny_corpus(1, 2, 16, 1);
    let config = small_ae_train(16, 0, 9);
    let (model, report) = ae_train(&corpus, &config).unwrap();
    assert!(report.losses.is_empty());
    let fresh = AeModel::new(config.arch.clone(), derive_seed(9, "ae.init")).unwrap();
    assert_eq!(params_checksum(&model.params), params_checksum(&fresh.params));
}

#[test]
fn ae_training_is_seed_deterministic() {
    let corpus = tiny_corpus(2, 2, 16, 2);
    let config = small_ae_train(16, 3, 42);
    let (m1, r1) = ae_train(&corpus, &config).unwrap();
    let (m2, r2) = ae_train(&corpus, &config).unwrap();
    assert_eq!(params_checksum(&m1.params), params_checksum(&m2.params));
    assert_eq!(r1.losses, r2.losses);
}

#[test]
fn ae_overfits_single_frame() {
    let corpus = tiny_corpus(1, 1, 32, 7);
    let config = AeTrainConfig {
        arch: AeConfig {
            input_size: (32, 32),
            channels: [8, 12, 16],
            latent_dim: 16,
        },
        epochs: 900,
        batch_size: 1,
        learning_rate: 1.0,
        seed: 11,
    };
    let (model, report) = ae_train(&corpus, &config).unwrap();
    let first = report.losses[0];
    let last = *report.losses.last().unwrap();
    assert!(
        last < 0.5 * first,
        "loss did not halve: first {first}, last {last}"
    );

    // reconstruction of the training frame is close per pixel
    let frame = &corpus.frames[0].pixels;
    let recon = model.reconstruct(frame).unwrap();
    let resized = frame.resize_bilinear(32, 32);
    let mae: f32 = recon
        .data
        .iter()
        .zip(&resized.data)
        .map(|(a, b)| (a - b).abs())
        .sum::<f32>()
        / recon.data.len() as f32;
    assert!(mae < 0.15, "reconstruction MAE {mae}");
}

#[test]
fn ae_empty_corpus_rejected() {
    let empty = crate::dataio::FrameCorpus::default();
    assert!(matches!(
        ae_train(&empty, &small_ae_train(16, 1, 0)),
        Err(Error::EmptyCorpus(_))
    ));
}

#[test]
fn ae_zero_learning_rate_freezes_weights() {
    let corpus = tiny_corpus(1, 2, 16, 3);
    let mut config = small_ae_train(16, 2, 5);
    config.learning_rate = 0.0;
    let (model, _) = ae_train(&corpus, &config).unwrap();
    let fresh = AeModel::new(config.arch.clone(), derive_seed(5, "ae.init")).unwrap();
    assert_eq!(params_checksum(&model.params), params_checksum(&fresh.params));
}

#[test]
fn vae_kl_is_zero_at_zero_initialized_heads() {
    let model = VaeModel::new(
        VaeConfig {
            input_size: (16, 16),
            channels: [4, 6, 8],
            latent_dim: 5,
            zero_init_heads: true,
        },
        1,
    )
    .unwrap();
    let corpus = tiny_corpus(1, 2, 16, 8);
    let frames: Vec<_> = corpus.frames.iter().map(|f| &f.pixels).collect();
    let (_, kl, _) = vae_batch_losses(&model, &frames, 1.0, None).unwrap();
    assert_eq!(kl, 0.0);
}

#[test]
fn vae_total_loss_dominates_bce_for_nonnegative_beta() {
    let model = VaeModel::new(
        VaeConfig {
            input_size: (16, 16),
            channels: [4, 6, 8],
            latent_dim: 5,
            zero_init_heads: false,
        },
        2,
    )
    .unwrap();
    let corpus = tiny_corpus(2, 2, 16, 9);
    let frames: Vec<_> = corpus.frames.iter().map(|f| &f.pixels).collect();
    for beta in [0.0, 0.5, 1.0, 3.0] {
        let (bce, kl, total) = vae_batch_losses(&model, &frames, beta, None).unwrap();
        assert!(kl >= 0.0);
        assert!(total >= bce);
    }
}

#[test]
fn vae_training_reduces_loss_and_is_deterministic() {
    let corpus = tiny_corpus(4, 3, 16, 10);
    let config = VaeTrainConfig {
        arch: VaeConfig {
            input_size: (16, 16),
            channels: [6, 8, 12],
            latent_dim: 4,
            zero_init_heads: true,
        },
        epochs: 25,
        batch_size: 4,
        learning_rate: 2e-3,
        beta: 1.0,
        seed: 13,
        zero_noise: false,
    };
    let (_, r1) = vae_train(&corpus, &config).unwrap();
    let (_, r2) = vae_train(&corpus, &config).unwrap();
    assert_eq!(r1.losses, r2.losses, "same seed, same losses");
    assert!(
        r1.losses.last().unwrap() < r1.losses.first().unwrap(),
        "loss did not decrease: {:?}",
        r1.losses
    );
}

#[test]
fn vae_encode_mu_is_deterministic_with_default_dim() {
    let model = VaeModel::new(VaeConfig::default(), 4).unwrap();
    let corpus = tiny_corpus(1, 1, 64, 12);
    let a = model.encode_mu(&corpus.frames[0].pixels).unwrap();
    let b = model.encode_mu(&corpus.frames[0].pixels).unwrap();
    assert_eq!(a.len(), 10);
    assert_eq!(a, b, "mean path has no sampling");
}

#[test]
fn vae_mean_path_decode_is_deterministic() {
    let corpus = tiny_corpus(1, 2, 16, 14);
    let config = VaeTrainConfig {
        arch: VaeConfig {
            input_size: (16, 16),
            channels: [4, 6, 8],
            latent_dim: 3,
            zero_init_heads: true,
        },
        epochs: 2,
        batch_size: 2,
        learning_rate: 1e-3,
        beta: 1.0,
        seed: 3,
        zero_noise: true,
    };
    let (model, _) = vae_train(&corpus, &config).unwrap();
    let r1 = model.reconstruct_mean(&corpus.frames[0].pixels).unwrap();
    let r2 = model.reconstruct_mean(&corpus.frames[0].pixels).unwrap();
    assert_eq!(r1.data, r2.data);
}

fn small_siamese_arch(size: usize) -> SiameseConfig {
    SiameseConfig {
        input_size: (size, size),
        channels: [8, 12, 16],
        embed_dim: 16,
        margin: 1.0,
    }
}

#[test]
fn siamese_distance_is_symmetric_and_zero_on_self() {
    let model = SiameseModel::new(small_siamese_arch(32), 21).unwrap();
    let corpus = tiny_corpus(2, 2, 32, 15);
    let (a, b) = (&corpus.frames[0].pixels, &corpus.frames[2].pixels);
    let dab = siamese_distance(&model, a, b).unwrap();
    let dba = siamese_distance(&model, b, a).unwrap();
    assert_eq!(dab, dba, "shared weights make the distance exactly symmetric");
    assert!(siamese_distance(&model, a, a).unwrap() <= 1e-6);

    // the distance equals a direct norm of the embedding difference
    let (ea, eb) = (model.embed(a).unwrap(), model.embed(b).unwrap());
    let direct: f32 = ea
        .iter()
        .zip(&eb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f32>()
        .sqrt();
    assert!((dab - direct).abs() <= 1e-6);
    assert!((embedding_distance(&ea, &eb) - direct).abs() <= 1e-7);
}

#[test]
fn saturated_hinge_has_zero_loss_and_zero_gradient() {
    // all pairs dissimilar with distances at or beyond the margin
    let tape = Tape::<f32>::new();
    let d = tape.leaf(&[4], vec![1.0, 1.5, 2.0, 7.0], true).unwrap();
    let loss = d.contrastive_loss(&[1.0; 4], 1.0).unwrap();
    assert_eq!(loss.item(), 0.0);
    tape.backward(&loss).unwrap();
    assert_eq!(d.grad().unwrap(), vec![0.0; 4]);
}

#[test]
fn siamese_single_class_stream_rejected() {
    let corpus = tiny_corpus(3, 3, 16, 16);
    let pairs = sample_pairs(&corpus, 12, 1.0, 0).unwrap();
    assert!(pairs.iter().all(|p| p.label == PairLabel::Similar));
    let config = SiameseTrainConfig {
        arch: small_siamese_arch(16),
        epochs: 1,
        iterations_per_epoch: 2,
        batch_size: 4,
        learning_rate: 0.005,
        seed: 0,
    };
    assert!(matches!(
        siamese_train(&corpus, &pairs, &config),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn siamese_training_separates_pair_classes() {
    let corpus = tiny_corpus(6, 4, 32, 17);
    let train_pairs = sample_pairs(&corpus, 120, 0.5, 1).unwrap();
    let held_out = sample_pairs(&corpus, 40, 0.5, 2).unwrap();
    let config = SiameseTrainConfig {
        arch: small_siamese_arch(32),
        epochs: 3,
        iterations_per_epoch: 15,
        batch_size: 8,
        learning_rate: 0.005,
        seed: 23,
    };
    let (model, report) = siamese_train(&corpus, &train_pairs, &config).unwrap();
    assert_eq!(report.losses.len(), 3);

    let mean_dist = |label: PairLabel| -> f32 {
        let picked: Vec<_> = held_out.iter().filter(|p| p.label == label).collect();
        let sum: f32 = picked
            .iter()
            .map(|p| {
                siamese_distance(
                    &model,
                    &corpus.frame(&p.a).unwrap().pixels,
                    &corpus.frame(&p.b).unwrap().pixels,
                )
                .unwrap()
            })
            .sum();
        sum / picked.len() as f32
    };
    let similar = mean_dist(PairLabel::Similar);
    let dissimilar = mean_dist(PairLabel::Dissimilar);
    assert!(
        similar < dissimilar,
        "held-out separation failed: similar {similar} vs dissimilar {dissimilar}"
    );

    // same seed reproduces the loss trace
    let (_, report2) = siamese_train(&corpus, &train_pairs, &config).unwrap();
    assert_eq!(report.losses, report2.losses);
}

#[test]
fn weights_round_trip_reproduces_encodes_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(1, 1, 16, 18);
    let frame = &corpus.frames[0].pixels;

    let (ae, _) = ae_train(&corpus, &small_ae_train(16, 1, 31)).unwrap();
    let path = dir.path().join("ae.lvwt");
    let saved_checksum = save_model(&AnyModel::Ae(ae.clone()), &path).unwrap();
    let (loaded, loaded_checksum) = load_model(&path).unwrap();
    assert_eq!(saved_checksum, loaded_checksum);
    let AnyModel::Ae(loaded) = loaded else {
        panic!("kind changed in round trip")
    };
    assert_eq!(ae.encode(frame).unwrap(), loaded.encode(frame).unwrap());

    let vae = VaeModel::new(
        VaeConfig {
            input_size: (16, 16),
            channels: [4, 6, 8],
            latent_dim: 5,
            zero_init_heads: false,
        },
        7,
    )
    .unwrap();
    let vpath = dir.path().join("vae.lvwt");
    save_model(&AnyModel::Vae(vae.clone()), &vpath).unwrap();
    let (AnyModel::Vae(vloaded), _) = load_model(&vpath).unwrap() else {
        panic!("kind changed in round trip")
    };
    assert_eq!(
        vae.encode_mu(frame).unwrap(),
        vloaded.encode_mu(frame).unwrap()
    );

    let siam = SiameseModel::new(small_siamese_arch(16), 8).unwrap();
    let spath = dir.path().join("siamese.lvwt");
    save_model(&AnyModel::Siamese(siam.clone()), &spath).unwrap();
    let (AnyModel::Siamese(sloaded), _) = load_model(&spath).unwrap() else {
        panic!("kind changed in round trip")
    };
    assert_eq!(siam.embed(frame).unwrap(), sloaded.embed(frame).unwrap());
    assert_eq!(siam.config.margin, sloaded.config.margin);
}

#[test]
fn weights_file_errors_are_distinct() {
    let model = AnyModel::Siamese(SiameseModel::new(small_siamese_arch(16), 1).unwrap());
    let mut bytes = encode_model(&model);

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(decode_model(&bad_magic), Err(Error::BadMagic { .. })));

    let mut bad_version = bytes.clone();
    bad_version[4] = 99;
    assert!(matches!(
        decode_model(&bad_version),
        Err(Error::UnsupportedVersion { .. })
    ));

    bytes.truncate(bytes.len() - 10);
    assert!(matches!(decode_model(&bytes), Err(Error::Truncated(_))));
}

#[test]
fn paper_resolution_config_builds_and_mirrors() {
    // 124 halves to 62, 31, 16; the decoder crops back through the mirror
    let model = AeModel::new(
        AeConfig {
            channels: [4, 4, 4],
            ..AeConfig::paper_resolution()
        },
        0,
    )
    .unwrap();
    let corpus = tiny_corpus(1, 1, 32, 19);
    let recon = model.reconstruct(&corpus.frames[0].pixels).unwrap();
    assert_eq!((recon.height, recon.width), (124, 124));
}

#[test]
fn derive_seed_separates_domains() {
    assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
    assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
}
