//! Variational autoencoder: shared conv trunk, mean and log-variance heads
//! over a small latent space, reparameterized sampling, BCE + KL objective
//! under Adam. Retrieval compares mean embeddings only.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ae::{init_params, BCE_CLIP};
use super::{
    check_nonempty, collect_grads, derive_seed, epoch_batches, frame_to_chw, param_leaves,
    run_layers, stage_sizes, LatentEncoder, ModelKind, TrainReport,
};
use crate::dataio::{FrameCorpus, Image};
use crate::error::{Error, Result};
use crate::nn::init::{init_layer, InitKind};
use crate::nn::{LayerSpec, OptimizerKind, OptimizerState, Param};
use crate::tensor::Tape;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaeConfig {
    pub input_size: (usize, usize),
    pub channels: [usize; 3],
    /// Latent dimensionality `n`.
    pub latent_dim: usize,
    /// Start both heads at zero so the initial coding is exactly unit normal
    /// (KL = 0).
    pub zero_init_heads: bool,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            input_size: (64, 64),
            channels: [16, 32, 64],
            latent_dim: 10,
            zero_init_heads: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub trunk: Vec<LayerSpec>,
    pub mu_head: LayerSpec,
    pub log_var_head: LayerSpec,
    pub decoder: Vec<LayerSpec>,
    pub params: Vec<Param>,
    // parameter group boundaries: [trunk | mu | log_var | decoder]
    n_trunk: usize,
    n_mu: usize,
    n_log_var: usize,
    crops: Vec<(usize, usize)>,
}

fn trunk_specs(channels: [usize; 3]) -> Vec<LayerSpec> {
    let [c0, c1, c2] = channels;
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
    ]
}

impl VaeModel {
    pub fn new(config: VaeConfig, seed: u64) -> Result<Self> {
        let (h, w) = config.input_size;
        if h == 0 || w == 0 || config.latent_dim == 0 {
            return Err(Error::InvalidConfig(
                "vae extents and latent_dim must be positive".into(),
            ));
        }
        let sizes = stage_sizes(config.input_size, 3);
        let bottom = sizes[3];
        let flat = config.channels[2] * bottom.0 * bottom.1;
        let trunk = trunk_specs(config.channels);
        let head = LayerSpec::Dense {
            in_features: flat,
            out_features: config.latent_dim,
        };
        // decoder mirrors the classical autoencoder at latent_dim = n
        let ae_cfg = super::ae::AeConfig {
            input_size: config.input_size,
            channels: config.channels,
            latent_dim: config.latent_dim,
        };
        let decoder = super::ae::decoder_specs_for(&ae_cfg, bottom, flat);
        for spec in trunk.iter().chain([&head]).chain(&decoder) {
            spec.validate()?;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = init_params(&trunk, "trunk.", &mut rng);
        let n_trunk = params.len();
        let head_kind = if config.zero_init_heads {
            InitKind::Zero
        } else {
            InitKind::GlorotUniform
        };
        params.extend(init_layer(&head, head_kind, "mu_head", &mut rng));
        let n_mu = params.len();
        params.extend(init_layer(&head, head_kind, "log_var_head", &mut rng));
        let n_log_var = params.len();
        params.extend(init_params(&decoder, "decoder.", &mut rng));

        Ok(VaeModel {
            config,
            trunk,
            mu_head: head.clone(),
            log_var_head: head,
            decoder,
            params,
            n_trunk,
            n_mu,
            n_log_var,
            crops: vec![sizes[2], sizes[1], sizes[0]],
        })
    }

    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(Param::numel).sum()
    }

    /// Mean and log-variance rows for a CHW-packed batch.
    pub(crate) fn encode_heads_chw(
        &self,
        chw: &[f32],
        batch: usize,
        want_log_var: bool,
    ) -> Result<(Vec<f32>, Option<Vec<f32>>)> {
        let (h, w) = self.config.input_size;
        let tape = Tape::new();
        let trunk_leaves = param_leaves(&tape, &self.params[..self.n_trunk]);
        let mu_leaves = param_leaves(&tape, &self.params[self.n_trunk..self.n_mu]);
        let x = tape.constant(&[batch, 3, h, w], chw.to_vec())?;
        let mut cursor = 0;
        let feat = run_layers(x, &self.trunk, &trunk_leaves, &mut cursor, &mut [].iter())?;
        let mu = feat.dense(&mu_leaves[0], &mu_leaves[1])?;
        let log_var = if want_log_var {
            let lv_leaves = param_leaves(&tape, &self.params[self.n_mu..self.n_log_var]);
            Some(feat.dense(&lv_leaves[0], &lv_leaves[1])?.to_vec())
        } else {
            None
        };
        Ok((mu.to_vec(), log_var))
    }

    /// Mean embedding of one frame; no sampling on this path, so repeated
    /// calls agree exactly.
    pub fn encode_mu(&self, frame: &Image) -> Result<Vec<f32>> {
        let chw = frame_to_chw(frame, self.config.input_size);
        let (mu, _) = self.encode_heads_chw(&chw, 1, false)?;
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite latent component".into()));
        }
        Ok(mu)
    }

    /// Decode a latent vector (gallery rendering uses the mean, i.e. the
    /// noise forced to zero).
    pub fn decode_latent(&self, latent: &[f32]) -> Result<Image> {
        if latent.len() != self.config.latent_dim {
            return Err(Error::DimMismatch {
                expected: self.config.latent_dim,
                found: latent.len(),
            });
        }
        let tape = Tape::new();
        let leaves = param_leaves(&tape, &self.params[self.n_log_var..]);
        let z = tape.constant(&[1, self.config.latent_dim], latent.to_vec())?;
        let mut cursor = 0;
        let out = run_layers(z, &self.decoder, &leaves, &mut cursor, &mut self.crops.iter())?;
        let (h, w) = self.config.input_size;
        Ok(Image::from_chw(h, w, &out.to_vec()))
    }

    /// Reconstruction through the mean path (noise = 0): deterministic end
    /// to end.
    pub fn reconstruct_mean(&self, frame: &Image) -> Result<Image> {
        self.decode_latent(&self.encode_mu(frame)?)
    }
}

impl LatentEncoder for VaeModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Vae
    }

    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn encode_frame(&self, frame: &Image) -> Result<Vec<f32>> {
        self.encode_mu(frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeTrainConfig {
    pub arch: VaeConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// KL weight in `BCE + beta * KL`.
    pub beta: f32,
    pub seed: u64,
    /// Force the reparameterization noise to zero (used by determinism
    /// tests; training quality needs real noise).
    pub zero_noise: bool,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            arch: VaeConfig::default(),
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            beta: 1.0,
            seed: 0,
            zero_noise: false,
        }
    }
}

/// Train a fresh VAE on `BCE + beta * KL` with Adam and seeded
/// reparameterization noise.
pub fn vae_train(corpus: &FrameCorpus, config: &VaeTrainConfig) -> Result<(VaeModel, TrainReport)> {
    check_nonempty(corpus, "vae_train")?;
    let start = Instant::now();
    let mut model = VaeModel::new(config.arch.clone(), derive_seed(config.seed, "vae.init"))?;
    let (h, w) = model.config.input_size;
    let n_latent = model.config.latent_dim;
    let inputs: Vec<Vec<f32>> = corpus
        .frames
        .iter()
        .map(|f| frame_to_chw(&f.pixels, (h, w)))
        .collect();

    let mut optimizer = OptimizerState::new(OptimizerKind::adam(config.learning_rate), &model.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "vae.shuffle"));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "vae.noise"));
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0f64;
        for batch in epoch_batches(inputs.len(), config.batch_size, &mut shuffle_rng) {
            let n = batch.len();
            let mut chw = Vec::with_capacity(n * 3 * h * w);
            for &i in &batch {
                chw.extend_from_slice(&inputs[i]);
            }
            let noise: Vec<f32> = if config.zero_noise {
                vec![0.0; n * n_latent]
            } else {
                (0..n * n_latent)
                    .map(|_| StandardNormal.sample(&mut noise_rng))
                    .collect()
            };

            let tape = Tape::new();
            let trunk_leaves = param_leaves(&tape, &model.params[..model.n_trunk]);
            let mu_leaves = param_leaves(&tape, &model.params[model.n_trunk..model.n_mu]);
            let lv_leaves = param_leaves(&tape, &model.params[model.n_mu..model.n_log_var]);
            let dec_leaves = param_leaves(&tape, &model.params[model.n_log_var..]);

            let x = tape.constant(&[n, 3, h, w], chw)?;
            let mut cursor = 0;
            let feat = run_layers(x.clone(), &model.trunk, &trunk_leaves, &mut cursor, &mut [].iter())?;
            let mu = feat.dense(&mu_leaves[0], &mu_leaves[1])?;
            let log_var = feat.dense(&lv_leaves[0], &lv_leaves[1])?;

            // z = mu + exp(log_var / 2) * eps
            let eps = tape.constant(&[n, n_latent], noise)?;
            let sigma = log_var.scale(0.5).exp();
            let z = mu.add(&sigma.mul(&eps)?)?;

            let mut cursor = 0;
            let recon = run_layers(z, &model.decoder, &dec_leaves, &mut cursor, &mut model.crops.iter())?;
            let bce = recon.bce_loss(&x, BCE_CLIP)?;
            let kl = mu.kl_unit_normal(&log_var)?;
            let loss = bce.add(&kl.scale(config.beta))?;

            let loss_val = loss.item();
            if !loss_val.is_finite() {
                return Err(Error::Numeric(format!(
                    "vae_train diverged: non-finite loss at epoch {epoch}"
                )));
            }
            tape.backward(&loss)?;
            let mut grads = collect_grads(&trunk_leaves);
            grads.extend(collect_grads(&mu_leaves));
            grads.extend(collect_grads(&lv_leaves));
            grads.extend(collect_grads(&dec_leaves));
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

/// KL and total-loss terms for one batch at the current weights, without
/// updating anything (used by loss-composition tests).
pub fn vae_batch_losses(
    model: &VaeModel,
    frames: &[&Image],
    beta: f32,
    noise: Option<&[f32]>,
) -> Result<(f32, f32, f32)> {
    let (h, w) = model.config.input_size;
    let n = frames.len();
    let n_latent = model.config.latent_dim;
    let mut chw = Vec::with_capacity(n * 3 * h * w);
    for f in frames {
        chw.extend_from_slice(&frame_to_chw(f, (h, w)));
    }
    let noise = match noise {
        Some(v) => v.to_vec(),
        None => vec![0.0; n * n_latent],
    };

    let tape = Tape::new();
    let trunk_leaves = param_leaves(&tape, &model.params[..model.n_trunk]);
    let mu_leaves = param_leaves(&tape, &model.params[model.n_trunk..model.n_mu]);
    let lv_leaves = param_leaves(&tape, &model.params[model.n_mu..model.n_log_var]);
    let dec_leaves = param_leaves(&tape, &model.params[model.n_log_var..]);
    let x = tape.constant(&[n, 3, h, w], chw)?;
    let mut cursor = 0;
    let feat = run_layers(x.clone(), &model.trunk, &trunk_leaves, &mut cursor, &mut [].iter())?;
    let mu = feat.dense(&mu_leaves[0], &mu_leaves[1])?;
    let log_var = feat.dense(&lv_leaves[0], &lv_leaves[1])?;
    let eps = tape.constant(&[n, n_latent], noise)?;
    let z = mu.add(&log_var.scale(0.5).exp().mul(&eps)?)?;
    let mut cursor = 0;
    let recon = run_layers(z, &model.decoder, &dec_leaves, &mut cursor, &mut model.crops.iter())?;
    let bce = recon.bce_loss(&x, BCE_CLIP)?.item();
    let kl = mu.kl_unit_normal(&log_var)?.item();
    Ok((bce, kl, bce + beta * kl))
}
