//! The three networks and their trainers.
//!
//! Weights live in plain [`Param`] buffers owned by the model structs; every
//! training step records a fresh tape, runs backward, and feeds gradients to
//! the optimizer. Frozen models are immutable and safe to share across
//! threads for encoding.

pub mod ae;
pub mod siamese;
pub mod vae;
pub mod weights;

pub use ae::{ae_train, AeConfig, AeModel, AeTrainConfig};
pub use siamese::{siamese_distance, siamese_train, SiameseConfig, SiameseModel, SiameseTrainConfig};
pub use vae::{vae_train, VaeConfig, VaeModel, VaeTrainConfig};
pub use weights::{load_model, save_model, AnyModel};

use sha2::{Digest, Sha256};

use crate::dataio::Image;
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Param};
use crate::tensor::{Tape, Tensor};

/// Which network a weights file or index was produced by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ae,
    Vae,
    Siamese,
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Ae => 0,
            ModelKind::Vae => 1,
            ModelKind::Siamese => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ModelKind::Ae),
            1 => Some(ModelKind::Vae),
            2 => Some(ModelKind::Siamese),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ae => "ae",
            ModelKind::Vae => "vae",
            ModelKind::Siamese => "siamese",
        }
    }
}

/// Anything that maps a frame to the latent vector used for indexing and
/// retrieval (the AE bottleneck, or the VAE mean head).
pub trait LatentEncoder: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn latent_dim(&self) -> usize;
    fn encode_frame(&self, frame: &Image) -> Result<Vec<f32>>;
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss per completed epoch.
    pub losses: Vec<f32>,
    pub epochs: usize,
    pub wall_seconds: f64,
    pub seed: u64,
}

/// Deterministic sub-seed derivation, domain-separated by a tag.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// SHA-256 of the parameter buffers in declaration order; cheap fingerprint
/// for determinism tests.
pub fn params_checksum(params: &[Param]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for p in params {
        hasher.update(p.name.as_bytes());
        for v in &p.data {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher.finalize().into()
}

/// Spatial extents after each stride-2 encoder stage, starting at the input.
pub(crate) fn stage_sizes(input: (usize, usize), stages: usize) -> Vec<(usize, usize)> {
    let mut sizes = vec![input];
    for _ in 0..stages {
        let (h, w) = *sizes.last().expect("nonempty");
        sizes.push((h.div_ceil(2), w.div_ceil(2)));
    }
    sizes
}

/// Run a layer sequence. Parameterized layers consume leaves from `leaves`
/// in order via `cursor`; after every `Upsample2` the next target in
/// `crop_targets` is applied when it is smaller than the doubled extent
/// (mirroring an encoder whose stride-2 stages rounded up).
pub(crate) fn run_layers<'t>(
    mut x: Tensor<'t, f32>,
    specs: &[LayerSpec],
    leaves: &[Tensor<'t, f32>],
    cursor: &mut usize,
    crop_targets: &mut std::slice::Iter<'_, (usize, usize)>,
) -> Result<Tensor<'t, f32>> {
    for spec in specs {
        x = match *spec {
            LayerSpec::Conv2d { stride, .. } => {
                let kernel = &leaves[*cursor];
                let bias = &leaves[*cursor + 1];
                *cursor += 2;
                x.conv2d(kernel, bias, stride)?
            }
            LayerSpec::Dense { .. } => {
                let weight = &leaves[*cursor];
                let bias = &leaves[*cursor + 1];
                *cursor += 2;
                x.dense(weight, bias)?
            }
            LayerSpec::Relu => x.relu(),
            LayerSpec::Sigmoid => x.sigmoid(),
            LayerSpec::Downsample2 => x.downsample2()?,
            LayerSpec::Upsample2 => {
                let up = x.upsample2()?;
                match crop_targets.next() {
                    Some(&(th, tw)) if (th, tw) != (up.shape()[2], up.shape()[3]) => {
                        up.crop2d_center(th, tw)?
                    }
                    _ => up,
                }
            }
            LayerSpec::Flatten => x.flatten()?,
            LayerSpec::Unflatten {
                channels,
                height,
                width,
            } => x.unflatten(channels, height, width)?,
        };
    }
    Ok(x)
}

/// Push every parameter onto a tape as a gradient-carrying leaf.
pub(crate) fn param_leaves<'t>(tape: &'t Tape<f32>, params: &[Param]) -> Vec<Tensor<'t, f32>> {
    params
        .iter()
        .map(|p| {
            tape.leaf(&p.shape, p.data.clone(), true)
                .expect("param shape matches its buffer")
        })
        .collect()
}

/// Gradients for each leaf after backward; leaves never touched by the loss
/// yield empty buffers, which the optimizer skips.
pub(crate) fn collect_grads(leaves: &[Tensor<'_, f32>]) -> Vec<Vec<f32>> {
    leaves
        .iter()
        .map(|l| l.grad().unwrap_or_default())
        .collect()
}

/// Resize + CHW-pack a frame for network input.
pub(crate) fn frame_to_chw(frame: &Image, size: (usize, usize)) -> Vec<f32> {
    frame.resize_bilinear(size.0, size.1).to_chw()
}

/// Shuffled minibatch index plan for one epoch.
pub(crate) fn epoch_batches(
    n: usize,
    batch_size: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}

pub(crate) fn check_nonempty(corpus: &crate::dataio::FrameCorpus, what: &str) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(format!("{what} requires a nonempty corpus")));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
