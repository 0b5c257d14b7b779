//! Offline latent indexing of a target corpus.
//!
//! Index file layout (all integers little endian):
//!
//! ```text
//! magic          "LVIX"      4 bytes
//! version        u16         currently 1
//! model_kind     u8          0 = AE, 1 = VAE
//! dtype          u8          0 = f32, 1 = f16
//! dim            u32
//! count          u64
//! model_checksum 32 bytes    SHA-256 of the weights file
//! id table       count x (u32 length + utf8 bytes)
//! latents        count x dim scalars, row-major
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::dataio::FrameCorpus;
use crate::error::{Error, Result};
use crate::models::{LatentEncoder, ModelKind};

pub const INDEX_MAGIC: [u8; 4] = *b"LVIX";
pub const INDEX_VERSION: u16 = 1;

/// On-disk element type for latents. Search always widens to f32.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentDtype {
    F32,
    F16,
}

impl LatentDtype {
    pub fn bytes(self) -> usize {
        match self {
            LatentDtype::F32 => 4,
            LatentDtype::F16 => 2,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            LatentDtype::F32 => 0,
            LatentDtype::F16 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LatentDtype::F32),
            1 => Some(LatentDtype::F16),
            _ => None,
        }
    }
}

/// One indexed frame: id plus its latent vector (held widened to f32).
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub frame_id: String,
    pub latent: Vec<f32>,
}

/// Compressed per-corpus table of latent vectors, sorted by frame id.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentIndex {
    pub model_kind: ModelKind,
    pub model_checksum: [u8; 32],
    pub dim: usize,
    pub dtype: LatentDtype,
    pub entries: Vec<IndexEntry>,
}

/// Size accounting for one index build.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionStats {
    pub n_frames: usize,
    /// Uncompressed RGB bytes at the corpus's native resolution.
    pub raw_bytes: u64,
    /// Exact on-disk index size.
    pub index_bytes: u64,
    /// `raw_bytes / index_bytes`; absent for an empty corpus.
    pub ratio: Option<f64>,
    pub encode_seconds: f64,
}

impl LatentIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact serialized size, computed from the format, never measured.
    pub fn file_size_bytes(&self) -> u64 {
        let header = 4 + 2 + 1 + 1 + 4 + 8 + 32;
        let id_table: usize = self.entries.iter().map(|e| 4 + e.frame_id.len()).sum();
        let payload = self.entries.len() * self.dim * self.dtype.bytes();
        (header + id_table + payload) as u64
    }

    /// Reject use with a model other than the one that built the index.
    pub fn validate_model(&self, checksum: &[u8; 32]) -> Result<()> {
        if &self.model_checksum != checksum {
            return Err(Error::ChecksumMismatch);
        }
        Ok(())
    }
}

fn f16_round_trip(v: f32) -> f32 {
    half::f16::from_f32(v).to_f32()
}

/// Encode every corpus frame with the model. Entries come out sorted by
/// frame id; f16 indexes hold the values after half-precision rounding so
/// in-memory search equals a load-from-disk search.
pub fn build_index(
    encoder: &dyn LatentEncoder,
    model_checksum: [u8; 32],
    corpus: &FrameCorpus,
    dtype: LatentDtype,
) -> Result<(LatentIndex, CompressionStats)> {
    let kind = encoder.kind();
    if kind == ModelKind::Siamese {
        return Err(Error::InvalidConfig(
            "indexes are built from AE or VAE encoders".into(),
        ));
    }
    let dim = encoder.latent_dim();
    let start = Instant::now();

    let mut entries: Vec<IndexEntry> = corpus
        .frames
        .par_iter()
        .map(|frame| {
            let mut latent = encoder.encode_frame(&frame.pixels).map_err(|e| {
                Error::Numeric(format!("encoding frame '{}' failed: {e}", frame.id))
            })?;
            if latent.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: latent.len(),
                });
            }
            if dtype == LatentDtype::F16 {
                for v in &mut latent {
                    *v = f16_round_trip(*v);
                }
            }
            Ok(IndexEntry {
                frame_id: frame.id.clone(),
                latent,
            })
        })
        .collect::<Result<_>>()?;
    entries.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));

    let encode_seconds = start.elapsed().as_secs_f64();
    let raw_bytes: u64 = corpus
        .frames
        .iter()
        .map(|f| (f.pixels.height * f.pixels.width * 3) as u64)
        .sum();
    let index = LatentIndex {
        model_kind: kind,
        model_checksum,
        dim,
        dtype,
        entries,
    };
    let index_bytes = index.file_size_bytes();
    let stats = CompressionStats {
        n_frames: corpus.len(),
        raw_bytes,
        index_bytes,
        ratio: if corpus.is_empty() {
            None
        } else {
            Some(raw_bytes as f64 / index_bytes as f64)
        },
        encode_seconds,
    };
    Ok((index, stats))
}

pub fn encode_index(index: &LatentIndex) -> Vec<u8> {
    let mut buf = Vec::with_capacity(index.file_size_bytes() as usize);
    buf.extend_from_slice(&INDEX_MAGIC);
    buf.extend_from_slice(&INDEX_VERSION.to_le_bytes());
    buf.push(index.model_kind.code());
    buf.push(index.dtype.code());
    buf.extend_from_slice(&(index.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(index.entries.len() as u64).to_le_bytes());
    buf.extend_from_slice(&index.model_checksum);
    for e in &index.entries {
        buf.extend_from_slice(&(e.frame_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(e.frame_id.as_bytes());
    }
    for e in &index.entries {
        match index.dtype {
            LatentDtype::F32 => {
                for &v in &e.latent {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            LatentDtype::F16 => {
                for &v in &e.latent {
                    buf.extend_from_slice(&half::f16::from_f32(v).to_le_bytes());
                }
            }
        }
    }
    buf
}

pub fn save_index(index: &LatentIndex, path: &Path) -> Result<()> {
    fs::write(path, encode_index(index)).map_err(|e| Error::io(path, e))
}

pub fn decode_index(bytes: &[u8]) -> Result<LatentIndex> {
    let mut cur = Cursor::new(bytes);
    let mut take = |n: usize, what: &str| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        cur.read_exact(&mut buf)
            .map_err(|_| Error::Truncated(what.to_string()))?;
        Ok(buf)
    };

    let magic: [u8; 4] = take(4, "magic")?.try_into().expect("4 bytes");
    if magic != INDEX_MAGIC {
        return Err(Error::BadMagic {
            expected: INDEX_MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes(take(2, "version")?.try_into().expect("2 bytes"));
    if version != INDEX_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: INDEX_VERSION,
        });
    }
    let kind = ModelKind::from_code(take(1, "model kind")?[0])
        .ok_or_else(|| Error::InvalidConfig("unknown model kind in index".into()))?;
    let dtype = LatentDtype::from_code(take(1, "dtype")?[0])
        .ok_or_else(|| Error::InvalidConfig("unknown latent dtype in index".into()))?;
    let dim = u32::from_le_bytes(take(4, "dim")?.try_into().expect("4 bytes")) as usize;
    let count = u64::from_le_bytes(take(8, "count")?.try_into().expect("8 bytes")) as usize;
    let model_checksum: [u8; 32] = take(32, "model checksum")?.try_into().expect("32 bytes");

    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32::from_le_bytes(take(4, "id length")?.try_into().expect("4 bytes")) as usize;
        let id = String::from_utf8(take(len, "frame id")?)
            .map_err(|_| Error::InvalidConfig("non-utf8 frame id in index".into()))?;
        ids.push(id);
    }
    let mut entries = Vec::with_capacity(count);
    for frame_id in ids {
        let mut latent = Vec::with_capacity(dim);
        match dtype {
            LatentDtype::F32 => {
                let raw = take(4 * dim, "latent payload")?;
                for c in raw.chunks_exact(4) {
                    latent.push(f32::from_le_bytes(c.try_into().expect("4 bytes")));
                }
            }
            LatentDtype::F16 => {
                let raw = take(2 * dim, "latent payload")?;
                for c in raw.chunks_exact(2) {
                    latent.push(half::f16::from_le_bytes(c.try_into().expect("2 bytes")).to_f32());
                }
            }
        }
        entries.push(IndexEntry { frame_id, latent });
    }
    Ok(LatentIndex {
        model_kind: kind,
        model_checksum,
        dim,
        dtype,
        entries,
    })
}

pub fn load_index(path: &Path) -> Result<LatentIndex> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&bytes)
}
