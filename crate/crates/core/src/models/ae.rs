//! Classical convolutional autoencoder: three stride-2 conv stages into a
//! dense bottleneck, mirrored decoder, cross-entropy reconstruction loss
//! under Adadelta.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    check_nonempty, collect_grads, derive_seed, epoch_batches, frame_to_chw, param_leaves,
    run_layers, stage_sizes, LatentEncoder, ModelKind, TrainReport,
};
use crate::dataio::{FrameCorpus, Image};
use crate::error::{Error, Result};
use crate::nn::init::{init_layer, InitKind};
use crate::nn::{LayerSpec, OptimizerKind, OptimizerState, Param};
use crate::tensor::Tape;

/// Prediction clamp for the cross-entropy loss.
pub const BCE_CLIP: f32 = 1e-7;

/// Architecture of the classical autoencoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AeConfig {
    /// (height, width); any extents work, mirror stages crop as needed.
    pub input_size: (usize, usize),
    /// Encoder conv channel progression.
    pub channels: [usize; 3],
    pub latent_dim: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            input_size: (64, 64),
            channels: [16, 32, 64],
            latent_dim: 32,
        }
    }
}

impl AeConfig {
    /// The configuration at the published training resolution.
    pub fn paper_resolution() -> Self {
        AeConfig {
            input_size: (124, 124),
            ..AeConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct AeModel {
    pub config: AeConfig,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub params: Vec<Param>,
    n_encoder_params: usize,
    /// Decoder crop targets after each upsample, largest last.
    crops: Vec<(usize, usize)>,
}

fn encoder_specs(config: &AeConfig, flat: usize) -> Vec<LayerSpec> {
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
            out_features: config.latent_dim,
        },
    ]
}

pub(crate) fn decoder_specs_for(config: &AeConfig, bottom: (usize, usize), flat: usize) -> Vec<LayerSpec> {
    let [c0, c1, c2] = config.channels;
    vec![
        LayerSpec::Dense {
            in_features: config.latent_dim,
            out_features: flat,
        },
        LayerSpec::Relu,
        LayerSpec::Unflatten {
            channels: c2,
            height: bottom.0,
            width: bottom.1,
        },
        LayerSpec::Upsample2,
        LayerSpec::Conv2d {
            in_channels: c2,
            out_channels: c1,
            kernel: 3,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::Upsample2,
        LayerSpec::Conv2d {
            in_channels: c1,
            out_channels: c0,
            kernel: 3,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::Upsample2,
        LayerSpec::Conv2d {
            in_channels: c0,
            out_channels: 3,
            kernel: 3,
            stride: 1,
        },
        LayerSpec::Sigmoid,
    ]
}

/// Initialization style per layer: fan-in-scaled for relu stages, fan-average
/// for layers feeding sigmoid or linear outputs.
fn init_kind_for(specs: &[LayerSpec], idx: usize) -> InitKind {
    match specs.get(idx + 1) {
        Some(LayerSpec::Relu) => InitKind::HeUniform,
        _ => InitKind::GlorotUniform,
    }
}

pub(crate) fn init_params(specs: &[LayerSpec], prefix: &str, rng: &mut ChaCha8Rng) -> Vec<Param> {
    let mut params = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        if spec.param_count() == 0 {
            continue;
        }
        let kind = init_kind_for(specs, i);
        params.extend(init_layer(spec, kind, &format!("{prefix}{i}"), rng));
    }
    params
}

impl AeModel {
    pub fn new(config: AeConfig, seed: u64) -> Result<Self> {
        let (h, w) = config.input_size;
        if h == 0 || w == 0 || config.latent_dim == 0 {
            return Err(Error::InvalidConfig(
                "autoencoder extents and latent_dim must be positive".into(),
            ));
        }
        let sizes = stage_sizes(config.input_size, 3);
        let bottom = sizes[3];
        let flat = config.channels[2] * bottom.0 * bottom.1;
        let encoder = encoder_specs(&config, flat);
        let decoder = decoder_specs_for(&config, bottom, flat);
        for spec in encoder.iter().chain(&decoder) {
            spec.validate()?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = init_params(&encoder, "encoder.", &mut rng);
        let n_encoder_params = params.len();
        params.extend(init_params(&decoder, "decoder.", &mut rng));
        // mirror sizes, smallest-to-largest as the decoder upsamples
        let crops = vec![sizes[2], sizes[1], sizes[0]];
        Ok(AeModel {
            config,
            encoder,
            decoder,
            params,
            n_encoder_params,
            crops,
        })
    }

    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(Param::numel).sum()
    }

    /// Encode a batch of CHW-packed inputs into latent rows.
    pub(crate) fn encode_chw(&self, chw: &[f32], batch: usize) -> Result<Vec<f32>> {
        let (h, w) = self.config.input_size;
        debug_assert_eq!(chw.len(), batch * 3 * h * w);
        let tape = Tape::new();
        let leaves = param_leaves(&tape, &self.params[..self.n_encoder_params]);
        let x = tape.constant(&[batch, 3, h, w], chw.to_vec())?;
        let mut cursor = 0;
        let z = run_layers(x, &self.encoder, &leaves, &mut cursor, &mut [].iter())?;
        Ok(z.to_vec())
    }

    /// Latent vector of one frame (resized as needed). Pure in
    /// (weights, frame).
    pub fn encode(&self, frame: &Image) -> Result<Vec<f32>> {
        let chw = frame_to_chw(frame, self.config.input_size);
        let z = self.encode_chw(&chw, 1)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite latent component".into()));
        }
        Ok(z)
    }

    /// Decode a latent vector back to an image.
    pub fn decode_latent(&self, latent: &[f32]) -> Result<Image> {
        if latent.len() != self.config.latent_dim {
            return Err(Error::DimMismatch {
                expected: self.config.latent_dim,
                found: latent.len(),
            });
        }
        let tape = Tape::new();
        let leaves = param_leaves(&tape, &self.params[self.n_encoder_params..]);
        let z = tape.constant(&[1, self.config.latent_dim], latent.to_vec())?;
        let mut cursor = 0;
        let out = run_layers(z, &self.decoder, &leaves, &mut cursor, &mut self.crops.iter())?;
        let (h, w) = self.config.input_size;
        Ok(Image::from_chw(h, w, &out.to_vec()))
    }

    /// Encode-then-decode a frame.
    pub fn reconstruct(&self, frame: &Image) -> Result<Image> {
        self.decode_latent(&self.encode(frame)?)
    }
}

impl LatentEncoder for AeModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Ae
    }

    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn encode_frame(&self, frame: &Image) -> Result<Vec<f32>> {
        self.encode(frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeTrainConfig {
    pub arch: AeConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Adadelta update scale; the classical method uses 1.0.
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        AeTrainConfig {
            arch: AeConfig::default(),
            epochs: 500,
            batch_size: 32,
            learning_rate: 1.0,
            seed: 0,
        }
    }
}

/// Train a fresh autoencoder to reconstruct the corpus under mean BCE with
/// Adadelta. Deterministic given the config seed.
pub fn ae_train(corpus: &FrameCorpus, config: &AeTrainConfig) -> Result<(AeModel, TrainReport)> {
    check_nonempty(corpus, "ae_train")?;
    let start = Instant::now();
    let mut model = AeModel::new(config.arch.clone(), derive_seed(config.seed, "ae.init"))?;
    let (h, w) = model.config.input_size;
    let inputs: Vec<Vec<f32>> = corpus
        .frames
        .iter()
        .map(|f| frame_to_chw(&f.pixels, (h, w)))
        .collect();

    let mut optimizer = OptimizerState::new(
        OptimizerKind::Adadelta {
            rho: 0.95,
            eps: 1e-6,
            lr: config.learning_rate,
        },
        &model.params,
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "ae.shuffle"));
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0f64;
        for batch in epoch_batches(inputs.len(), config.batch_size, &mut shuffle_rng) {
            let n = batch.len();
            let mut chw = Vec::with_capacity(n * 3 * h * w);
            for &i in &batch {
                chw.extend_from_slice(&inputs[i]);
            }
            let tape = Tape::new();
            let leaves = param_leaves(&tape, &model.params);
            let x = tape.constant(&[n, 3, h, w], chw)?;
            let mut cursor = 0;
            let z = run_layers(x.clone(), &model.encoder, &leaves, &mut cursor, &mut [].iter())?;
            let recon = run_layers(z, &model.decoder, &leaves, &mut cursor, &mut model.crops.iter())?;
            let loss = recon.bce_loss(&x, BCE_CLIP)?;
            let loss_val = loss.item();
            if !loss_val.is_finite() {
                return Err(Error::Numeric(format!(
                    "ae_train diverged: non-finite loss at epoch {epoch}"
                )));
            }
            tape.backward(&loss)?;
            let grads = collect_grads(&leaves);
            optimizer.step(&mut model.params, &grads)?;
            epoch_loss += loss_val as f64 * n as f64;
        }
        losses.push((epoch_loss / inputs.len() as f64) as f32);
    }

    let report = TrainReport {
        losses,
        epochs: config.epochs,
        wall_seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
    };
    Ok((model, report))
}
