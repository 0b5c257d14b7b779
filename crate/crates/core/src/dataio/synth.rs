//! Synthetic endoscopy-like corpus generation.
//!
//! Each cluster gets one seeded base texture (layered low-frequency color
//! fields plus vessel-like curves); members are the base under sampled
//! rotations and an optional fixed color remap standing in for the WL->NBI
//! modality change. Everything is a pure function of [`SynthConfig`].

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Frame, FrameCorpus, FrameLabel, Image, Modality};
use crate::error::{Error, Result};

/// Fixed WL->NBI color remap: suppresses red, boosts green/blue contrast.
/// Columns are the images of the R, G, B basis vectors; the matrix is
/// invertible so the transform loses information only through clamping.
pub const WL_TO_NBI_MATRIX: [[f32; 3]; 3] = [
    [0.30, 0.10, 0.00],
    [0.05, 1.15, 0.10],
    [0.00, 0.20, 1.20],
];

/// Configuration for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_clusters: usize,
    pub frames_per_cluster: usize,
    /// (height, width)
    pub image_size: (usize, usize),
    /// Angles the per-member rotation is drawn from, degrees in `[0, 360)`.
    pub rotation_angles: Vec<f32>,
    /// Fraction of members rendered in the NBI modality.
    pub modality_fraction: f64,
    pub seed: u64,
    /// Varies the rotation/modality draws while keeping the cluster base
    /// textures fixed; lets a query corpus share clusters with a target
    /// corpus generated from the same `seed`.
    pub augment_salt: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clusters: 100,
            frames_per_cluster: 10,
            image_size: (64, 64),
            rotation_angles: (0..8).map(|i| i as f32 * 45.0).collect(),
            modality_fraction: 0.5,
            seed: 0,
            augment_salt: 0,
        }
    }
}

/// Domain-separated deterministic rng derivation.
fn derive_rng(parts: &[u64], tag: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Apply the fixed WL->NBI color matrix with clamping. Deterministic; maps
/// black to black.
pub fn modality_transform(frame: &Image) -> Image {
    let mut out = frame.clone();
    let m = &WL_TO_NBI_MATRIX;
    for px in out.data.chunks_mut(3) {
        let (r, g, b) = (px[0], px[1], px[2]);
        px[0] = (m[0][0] * r + m[0][1] * g + m[0][2] * b).clamp(0.0, 1.0);
        px[1] = (m[1][0] * r + m[1][1] * g + m[1][2] * b).clamp(0.0, 1.0);
        px[2] = (m[2][0] * r + m[2][1] * g + m[2][2] * b).clamp(0.0, 1.0);
    }
    out
}

/// Bilinear rotation about the image center; out-of-bounds samples are
/// black. The angle is normalized into `[0, 360)`; 0 degrees is the exact
/// identity.
pub fn rotate_frame(frame: &Image, theta_deg: f32) -> Image {
    let theta = theta_deg.rem_euclid(360.0);
    if theta == 0.0 {
        return frame.clone();
    }
    let (h, w) = (frame.height, frame.width);
    let cy = (h as f32 - 1.0) / 2.0;
    let cx = (w as f32 - 1.0) / 2.0;
    let rad = theta.to_radians();
    let (sin, cos) = (rad.sin(), rad.cos());
    let mut out = Image::black(h, w);
    for y in 0..h {
        for x in 0..w {
            // inverse mapping: rotate the output coordinate by -theta
            let dy = y as f32 - cy;
            let dx = x as f32 - cx;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            if sx < -1.0 || sy < -1.0 || sx > w as f32 || sy > h as f32 {
                continue;
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let (wx, wy) = (sx - x0, sy - y0);
            let mut rgb = [0.0f32; 3];
            for (dyi, wyi) in [(0i64, 1.0 - wy), (1, wy)] {
                let yy = y0 as i64 + dyi;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for (dxi, wxi) in [(0i64, 1.0 - wx), (1, wx)] {
                    let xx = x0 as i64 + dxi;
                    if xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    let p = frame.pixel(yy as usize, xx as usize);
                    let wgt = wyi * wxi;
                    rgb[0] += wgt * p[0];
                    rgb[1] += wgt * p[1];
                    rgb[2] += wgt * p[2];
                }
            }
            out.set_pixel(y, x, rgb);
        }
    }
    out
}

/// One cluster's base texture: a smooth high-contrast color field inside a
/// dark circular vignette (the endoscope field-of-view look) plus a few
/// vessel-like quadratic curves. Visually distinct across seeds; the mostly
/// bright-or-dark pixel mass keeps the cross-entropy reconstruction floor
/// low.
fn base_texture(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Image {
    let mut img = Image::black(height, width);

    // smooth color field, contrast-boosted toward the extremes
    let mut channel_base = [0.0f32; 3];
    let mut waves: [[(f32, f32, f32, f32); 3]; 3] = [[(0.0, 0.0, 0.0, 0.0); 3]; 3];
    for c in 0..3 {
        channel_base[c] = rng.gen_range(0.3..0.7);
        for wave in &mut waves[c] {
            *wave = (
                rng.gen_range(0.12..0.30),                       // amplitude
                rng.gen_range(-1.4..1.4f32),                     // fx cycles
                rng.gen_range(-1.4..1.4f32),                     // fy cycles
                rng.gen_range(0.0..std::f32::consts::TAU),       // phase
            );
        }
    }
    let cy = (height as f32 - 1.0) / 2.0;
    let cx = (width as f32 - 1.0) / 2.0;
    let fov_radius = 0.44 * height.min(width) as f32;
    let fade = 0.12 * height.min(width) as f32;
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f32 / width as f32, y as f32 / height as f32);
            // circular field of view: fade smoothly to black at the border
            let r = ((y as f32 - cy).powi(2) + (x as f32 - cx).powi(2)).sqrt();
            let vignette = (1.0 - (r - fov_radius + fade) / fade).clamp(0.0, 1.0);
            let mut rgb = [0.0f32; 3];
            for c in 0..3 {
                let mut acc = channel_base[c];
                for &(a, fx, fy, phase) in &waves[c] {
                    acc += a * (std::f32::consts::TAU * (fx * u + fy * v) + phase).cos();
                }
                // push toward 0/1 so reconstruction has a low entropy floor
                let boosted = 0.5 + (acc - 0.5) * 2.6;
                rgb[c] = (boosted * vignette).clamp(0.0, 1.0);
            }
            img.set_pixel(y, x, rgb);
        }
    }

    // vessel-like curves: quadratic Beziers stamped as soft disks
    let n_vessels = rng.gen_range(2..=3);
    for _ in 0..n_vessels {
        let pick = |rng: &mut ChaCha8Rng| {
            (
                rng.gen_range(0.0..width as f32),
                rng.gen_range(0.0..height as f32),
            )
        };
        let (p0, p1, p2) = (pick(rng), pick(rng), pick(rng));
        let color = [
            rng.gen_range(0.3..0.5),
            rng.gen_range(0.05..0.15),
            rng.gen_range(0.05..0.15),
        ];
        let radius = rng.gen_range(1.4..2.6f32);
        let steps = 3 * (width + height);
        for s in 0..=steps {
            let t = s as f32 / steps as f32;
            let omt = 1.0 - t;
            let bx = omt * omt * p0.0 + 2.0 * omt * t * p1.0 + t * t * p2.0;
            let by = omt * omt * p0.1 + 2.0 * omt * t * p1.1 + t * t * p2.1;
            stamp_disk(&mut img, bx, by, radius, color);
        }
    }
    img
}

fn stamp_disk(img: &mut Image, cx: f32, cy: f32, radius: f32, color: [f32; 3]) {
    let r_out = radius + 2.0;
    let y_lo = (cy - r_out).floor().max(0.0) as usize;
    let y_hi = ((cy + r_out).ceil() as usize).min(img.height.saturating_sub(1));
    let x_lo = (cx - r_out).floor().max(0.0) as usize;
    let x_hi = ((cx + r_out).ceil() as usize).min(img.width.saturating_sub(1));
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let d = ((y as f32 - cy).powi(2) + (x as f32 - cx).powi(2)).sqrt();
            // soft edge over two pixels
            let alpha = ((1.0 - (d - radius) / 2.0) as f32).clamp(0.0, 1.0);
            if alpha <= 0.0 {
                continue;
            }
            let p = img.pixel(y, x);
            img.set_pixel(
                y,
                x,
                [
                    p[0] * (1.0 - alpha) + color[0] * alpha,
                    p[1] * (1.0 - alpha) + color[1] * alpha,
                    p[2] * (1.0 - alpha) + color[2] * alpha,
                ],
            );
        }
    }
}

/// Render the base texture of one cluster (exposed so oracles can invert the
/// member construction).
pub fn cluster_base(config: &SynthConfig, cluster: usize) -> Image {
    let mut rng = derive_rng(&[config.seed, cluster as u64], "frameseek.synth.base");
    base_texture(&mut rng, config.image_size.0, config.image_size.1)
}

/// Generate the full labeled corpus. Pure in `config`, including the seed.
pub fn generate_synthetic(config: &SynthConfig) -> Result<FrameCorpus> {
    if config.n_clusters == 0 {
        return Err(Error::InvalidConfig("n_clusters must be positive".into()));
    }
    if config.frames_per_cluster == 0 {
        return Err(Error::InvalidConfig(
            "frames_per_cluster must be positive".into(),
        ));
    }
    if config.rotation_angles.is_empty() {
        return Err(Error::InvalidConfig(
            "rotation_angles must not be empty".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.modality_fraction) {
        return Err(Error::InvalidConfig(
            "modality_fraction must lie in [0, 1]".into(),
        ));
    }

    let mut frames = Vec::with_capacity(config.n_clusters * config.frames_per_cluster);
    let mut labels = BTreeMap::new();
    for cluster in 0..config.n_clusters {
        let base = cluster_base(config, cluster);
        for member in 0..config.frames_per_cluster {
            let mut rng = derive_rng(
                &[
                    config.seed,
                    config.augment_salt,
                    cluster as u64,
                    member as u64,
                ],
                "frameseek.synth.aug",
            );
            let theta = config.rotation_angles[rng.gen_range(0..config.rotation_angles.len())];
            let nbi = rng.gen_bool(config.modality_fraction);
            let rotated = rotate_frame(&base, theta);
            let pixels = if nbi {
                modality_transform(&rotated)
            } else {
                rotated
            };
            let id = format!("c{cluster:04}_m{member:03}");
            labels.insert(
                id.clone(),
                FrameLabel {
                    cluster_id: cluster as u32,
                    modality: if nbi { Modality::Nbi } else { Modality::Wl },
                    rotation_deg: theta,
                },
            );
            frames.push(Frame { id, pixels });
        }
    }
    Ok(FrameCorpus {
        frames,
        labels: Some(labels),
    })
}
