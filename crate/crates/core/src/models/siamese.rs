//! Weight-shared Siamese network over a contrastive loss.
//!
//! Both sister passes consume the same parameter leaves on one tape, so
//! weight sharing is structural: any update keeps the two sides identical
//! and the pairwise distance symmetric.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ae::init_params;
use super::{
    collect_grads, derive_seed, epoch_batches, frame_to_chw, param_leaves, run_layers,
    stage_sizes, ModelKind, TrainReport,
};
use crate::dataio::{FrameCorpus, Image, PairLabel, PairSample};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, OptimizerKind, OptimizerState, Param};
use crate::tensor::Tape;

/// Keeps the distance gradient finite at zero.
const DIST_EPS: f32 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseConfig {
    /// Frames are rescaled to this extent before embedding.
    pub input_size: (usize, usize),
    pub channels: [usize; 3],
    pub embed_dim: usize,
    /// Contrastive margin `m`.
    pub margin: f32,
}

impl Default for SiameseConfig {
    fn default() -> Self {
        SiameseConfig {
            input_size: (100, 100),
            channels: [16, 32, 64],
            embed_dim: 64,
            margin: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SiameseModel {
    pub config: SiameseConfig,
    pub embedding: Vec<LayerSpec>,
    pub params: Vec<Param>,
}

fn embedding_specs(config: &SiameseConfig, flat: usize) -> Vec<LayerSpec> {
    let [c0, c1, c2] = config.channels;
    vec![
        LayerSpec::Conv2d {
            in_channels: 3,
            out_channels: c0,
            kernel: 3,
            stride: 2,
        },
        LayerSpec::Relu,
        LayerSpec::Conv2d {
            in_channels: c0,
            out_channels: c1,
            kernel: 3,
            stride: 2,
        },
        LayerSpec::Relu,
        LayerSpec::Conv2d {
            in_channels: c1,
            out_channels: c2,
            kernel: 3,
            stride: 2,
        },
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_features: flat,
            out_features: config.embed_dim,
        },
    ]
}

impl SiameseModel {
    pub fn new(config: SiameseConfig, seed: u64) -> Result<Self> {
        let (h, w) = config.input_size;
        if h == 0 || w == 0 || config.embed_dim == 0 {
            return Err(Error::InvalidConfig(
                "siamese extents and embed_dim must be positive".into(),
            ));
        }
        if config.margin <= 0.0 {
            return Err(Error::InvalidConfig("siamese margin must be positive".into()));
        }
        let bottom = stage_sizes(config.input_size, 3)[3];
        let flat = config.channels[2] * bottom.0 * bottom.1;
        let embedding = embedding_specs(&config, flat);
        for spec in &embedding {
            spec.validate()?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(&embedding, "embed.", &mut rng);
        Ok(SiameseModel {
            config,
            embedding,
            params,
        })
    }

    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(Param::numel).sum()
    }

    pub(crate) fn embed_chw(&self, chw: &[f32], batch: usize) -> Result<Vec<f32>> {
        let (h, w) = self.config.input_size;
        let tape = Tape::new();
        let leaves = param_leaves(&tape, &self.params);
        let x = tape.constant(&[batch, 3, h, w], chw.to_vec())?;
        let mut cursor = 0;
        let e = run_layers(x, &self.embedding, &leaves, &mut cursor, &mut [].iter())?;
        Ok(e.to_vec())
    }

    /// Embedding vector of one frame (resized as needed).
    pub fn embed(&self, frame: &Image) -> Result<Vec<f32>> {
        let chw = frame_to_chw(frame, self.config.input_size);
        let e = self.embed_chw(&chw, 1)?;
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding component".into()));
        }
        Ok(e)
    }
}

/// Euclidean distance between the sister-network outputs for two frames.
/// Symmetric because both sides share one weight set.
pub fn siamese_distance(model: &SiameseModel, a: &Image, b: &Image) -> Result<f32> {
    let ea = model.embed(a)?;
    let eb = model.embed(b)?;
    Ok(embedding_distance(&ea, &eb))
}

/// L2 distance between two embedding vectors.
pub fn embedding_distance(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f32>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseTrainConfig {
    pub arch: SiameseConfig,
    pub epochs: usize,
    /// Minibatch steps per epoch; one iteration consumes one minibatch of
    /// pairs.
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for SiameseTrainConfig {
    fn default() -> Self {
        SiameseTrainConfig {
            arch: SiameseConfig::default(),
            epochs: 1000,
            iterations_per_epoch: 100,
            batch_size: 32,
            learning_rate: 0.005,
            seed: 0,
        }
    }
}

/// Train a fresh Siamese network on labeled pairs with Adam minimizing the
/// contrastive loss. Requires both pair classes in the stream.
pub fn siamese_train(
    corpus: &FrameCorpus,
    pairs: &[PairSample],
    config: &SiameseTrainConfig,
) -> Result<(SiameseModel, TrainReport)> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus("siamese_train requires pairs".into()));
    }
    let has_similar = pairs.iter().any(|p| p.label == PairLabel::Similar);
    let has_dissimilar = pairs.iter().any(|p| p.label == PairLabel::Dissimilar);
    if !has_similar || !has_dissimilar {
        return Err(Error::InvalidConfig(
            "contrastive training needs both similar and dissimilar pairs".into(),
        ));
    }

    let start = Instant::now();
    let mut model = SiameseModel::new(config.arch.clone(), derive_seed(config.seed, "siamese.init"))?;
    let (h, w) = model.config.input_size;
    let margin = model.config.margin;

    // resize each distinct frame once
    let mut cache: std::collections::BTreeMap<&str, Vec<f32>> = Default::default();
    for pair in pairs {
        for id in [pair.a.as_str(), pair.b.as_str()] {
            if !cache.contains_key(id) {
                let frame = corpus
                    .frame(id)
                    .ok_or_else(|| Error::FrameNotFound { frame_id: id.into() })?;
                cache.insert(id, frame_to_chw(&frame.pixels, (h, w)));
            }
        }
    }
    let resolved: Vec<(&[f32], &[f32], f32)> = pairs
        .iter()
        .map(|p| {
            (
                cache[p.a.as_str()].as_slice(),
                cache[p.b.as_str()].as_slice(),
                p.label.as_f32(),
            )
        })
        .collect();

    let mut optimizer = OptimizerState::new(OptimizerKind::adam(config.learning_rate), &model.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "siamese.shuffle"));
    let mut losses = Vec::with_capacity(config.epochs);
    let frame_len = 3 * h * w;

    for epoch in 0..config.epochs {
        let plan = epoch_batches(resolved.len(), config.batch_size, &mut shuffle_rng);
        let mut epoch_loss = 0.0f64;
        let mut steps = 0usize;
        for batch in plan.iter().cycle().take(config.iterations_per_epoch) {
            let n = batch.len();
            let mut chw_a = Vec::with_capacity(n * frame_len);
            let mut chw_b = Vec::with_capacity(n * frame_len);
            let mut labels = Vec::with_capacity(n);
            for &i in batch {
                let (a, b, y) = resolved[i];
                chw_a.extend_from_slice(a);
                chw_b.extend_from_slice(b);
                labels.push(y);
            }

            let tape = Tape::new();
            let leaves = param_leaves(&tape, &model.params);
            let xa = tape.constant(&[n, 3, h, w], chw_a)?;
            let xb = tape.constant(&[n, 3, h, w], chw_b)?;
            // both passes reuse the same leaves: exact weight sharing
            let mut cursor = 0;
            let ea = run_layers(xa, &model.embedding, &leaves, &mut cursor, &mut [].iter())?;
            cursor = 0;
            let eb = run_layers(xb, &model.embedding, &leaves, &mut cursor, &mut [].iter())?;
            let diff = ea.sub(&eb)?;
            let dist = diff.mul(&diff)?.sum_rows()?.sqrt_eps(DIST_EPS);
            let loss = dist.contrastive_loss(&labels, margin)?;

            let loss_val = loss.item();
            if !loss_val.is_finite() {
                return Err(Error::Numeric(format!(
                    "siamese_train diverged: non-finite loss at epoch {epoch}"
                )));
            }
            tape.backward(&loss)?;
            let grads = collect_grads(&leaves);
            optimizer.step(&mut model.params, &grads)?;
            epoch_loss += loss_val as f64;
            steps += 1;
        }
        losses.push((epoch_loss / steps.max(1) as f64) as f32);
    }

    let report = TrainReport {
        losses,
        epochs: config.epochs,
        wall_seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
    };
    Ok((model, report))
}

impl super::LatentEncoder for SiameseModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Siamese
    }

    fn latent_dim(&self) -> usize {
        self.config.embed_dim
    }

    fn encode_frame(&self, frame: &Image) -> Result<Vec<f32>> {
        self.embed(frame)
    }
}
