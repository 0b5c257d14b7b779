//! Binary weights files.
//!
//! Layout (all integers little endian):
//!
//! ```text
//! magic   "LVWT"          4 bytes
//! version u16             currently 1
//! kind    u8              0 = AE, 1 = VAE, 2 = Siamese
//! config  kind-specific:  input h/w (u32 x2), channels (u32 x3),
//!                         latent/embed dim (u32), margin (f32, Siamese only)
//! layers  u32 count, then per layer: kind u8 + four u32 fields
//! params  u32 count, then per param: name (u16 len + utf8), rank u8,
//!                         extents u32 x rank
//! payload f32 little-endian parameter tensors in declaration order
//! ```
//!
//! Reloading reproduces encode outputs bit-identically (exact f32 round
//! trip).

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{AeConfig, AeModel, ModelKind, SiameseConfig, SiameseModel, VaeConfig, VaeModel};
use crate::error::{Error, Result};
use crate::nn::LayerSpec;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"LVWT";
pub const WEIGHTS_VERSION: u16 = 1;

/// A loaded model of any kind.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Ae(AeModel),
    Vae(VaeModel),
    Siamese(SiameseModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Ae(_) => ModelKind::Ae,
            AnyModel::Vae(_) => ModelKind::Vae,
            AnyModel::Siamese(_) => ModelKind::Siamese,
        }
    }

    pub fn count_parameters(&self) -> usize {
        match self {
            AnyModel::Ae(m) => m.count_parameters(),
            AnyModel::Vae(m) => m.count_parameters(),
            AnyModel::Siamese(m) => m.count_parameters(),
        }
    }
}

fn layer_record(spec: &LayerSpec) -> (u8, [u32; 4]) {
    match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => (
            0,
            [
                in_channels as u32,
                out_channels as u32,
                kernel as u32,
                stride as u32,
            ],
        ),
        LayerSpec::Dense {
            in_features,
            out_features,
        } => (1, [in_features as u32, out_features as u32, 0, 0]),
        LayerSpec::Relu => (2, [0; 4]),
        LayerSpec::Sigmoid => (3, [0; 4]),
        LayerSpec::Downsample2 => (4, [0; 4]),
        LayerSpec::Upsample2 => (5, [0; 4]),
        LayerSpec::Flatten => (6, [0; 4]),
        LayerSpec::Unflatten {
            channels,
            height,
            width,
        } => (7, [channels as u32, height as u32, width as u32, 0]),
    }
}

fn layer_from_record(kind: u8, f: [u32; 4]) -> Result<LayerSpec> {
    Ok(match kind {
        0 => LayerSpec::Conv2d {
            in_channels: f[0] as usize,
            out_channels: f[1] as usize,
            kernel: f[2] as usize,
            stride: f[3] as usize,
        },
        1 => LayerSpec::Dense {
            in_features: f[0] as usize,
            out_features: f[1] as usize,
        },
        2 => LayerSpec::Relu,
        3 => LayerSpec::Sigmoid,
        4 => LayerSpec::Downsample2,
        5 => LayerSpec::Upsample2,
        6 => LayerSpec::Flatten,
        7 => LayerSpec::Unflatten {
            channels: f[0] as usize,
            height: f[1] as usize,
            width: f[2] as usize,
        },
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown layer kind {other} in weights file"
            )))
        }
    })
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn layers(&mut self, specs: &[LayerSpec]) {
        self.u32(specs.len() as u32);
        for spec in specs {
            let (kind, fields) = layer_record(spec);
            self.u8(kind);
            for f in fields {
                self.u32(f);
            }
        }
    }
}

/// Serialize a model; returns the SHA-256 of the file's bytes (the checksum
/// indexes are stamped with).
pub fn save_model(model: &AnyModel, path: &Path) -> Result<[u8; 32]> {
    let bytes = encode_model(model);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).into())
}

pub fn encode_model(model: &AnyModel) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&WEIGHTS_MAGIC);
    w.u16(WEIGHTS_VERSION);
    w.u8(model.kind().code());

    let params = match model {
        AnyModel::Ae(m) => {
            w.u32(m.config.input_size.0 as u32);
            w.u32(m.config.input_size.1 as u32);
            for c in m.config.channels {
                w.u32(c as u32);
            }
            w.u32(m.config.latent_dim as u32);
            let all: Vec<LayerSpec> = m.encoder.iter().chain(&m.decoder).cloned().collect();
            w.layers(&all);
            &m.params
        }
        AnyModel::Vae(m) => {
            w.u32(m.config.input_size.0 as u32);
            w.u32(m.config.input_size.1 as u32);
            for c in m.config.channels {
                w.u32(c as u32);
            }
            w.u32(m.config.latent_dim as u32);
            let all: Vec<LayerSpec> = m
                .trunk
                .iter()
                .chain([&m.mu_head, &m.log_var_head])
                .chain(&m.decoder)
                .cloned()
                .collect();
            w.layers(&all);
            &m.params
        }
        AnyModel::Siamese(m) => {
            w.u32(m.config.input_size.0 as u32);
            w.u32(m.config.input_size.1 as u32);
            for c in m.config.channels {
                w.u32(c as u32);
            }
            w.u32(m.config.embed_dim as u32);
            w.f32(m.config.margin);
            w.layers(&m.embedding);
            &m.params
        }
    };

    w.u32(params.len() as u32);
    for p in params {
        let name = p.name.as_bytes();
        w.u16(name.len() as u16);
        w.buf.extend_from_slice(name);
        w.u8(p.shape.len() as u8);
        for &d in &p.shape {
            w.u32(d as u32);
        }
    }
    for p in params {
        for &v in &p.data {
            w.f32(v);
        }
    }
    w.buf
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.cur
            .read_exact(&mut buf)
            .map_err(|_| Error::Truncated(what.to_string()))?;
        Ok(buf)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take::<1>(what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(what)?))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(what)?))
    }
    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(what)?))
    }
    fn layers(&mut self) -> Result<Vec<LayerSpec>> {
        let count = self.u32("layer count")?;
        let mut specs = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let kind = self.u8("layer kind")?;
            let mut fields = [0u32; 4];
            for f in &mut fields {
                *f = self.u32("layer field")?;
            }
            specs.push(layer_from_record(kind, fields)?);
        }
        Ok(specs)
    }
}

/// Load a weights file; returns the model plus the file checksum.
pub fn load_model(path: &Path) -> Result<(AnyModel, [u8; 32])> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let checksum: [u8; 32] = Sha256::digest(&bytes).into();
    let model = decode_model(&bytes)?;
    Ok((model, checksum))
}

pub fn decode_model(bytes: &[u8]) -> Result<AnyModel> {
    let mut r = Reader {
        cur: Cursor::new(bytes),
    };
    let magic: [u8; 4] = r.take("magic")?;
    if magic != WEIGHTS_MAGIC {
        return Err(Error::BadMagic {
            expected: WEIGHTS_MAGIC,
            found: magic,
        });
    }
    let version = r.u16("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: WEIGHTS_VERSION,
        });
    }
    let kind = ModelKind::from_code(r.u8("model kind")?)
        .ok_or_else(|| Error::InvalidConfig("unknown model kind".into()))?;

    let input_h = r.u32("input height")? as usize;
    let input_w = r.u32("input width")? as usize;
    let channels = [
        r.u32("channels[0]")? as usize,
        r.u32("channels[1]")? as usize,
        r.u32("channels[2]")? as usize,
    ];
    let dim = r.u32("latent dim")? as usize;
    let margin = if kind == ModelKind::Siamese {
        r.f32("margin")?
    } else {
        0.0
    };
    let stored_layers = r.layers()?;

    // rebuild the model skeleton from config, then overwrite parameters
    let mut model = match kind {
        ModelKind::Ae => AnyModel::Ae(AeModel::new(
            AeConfig {
                input_size: (input_h, input_w),
                channels,
                latent_dim: dim,
            },
            0,
        )?),
        ModelKind::Vae => AnyModel::Vae(VaeModel::new(
            VaeConfig {
                input_size: (input_h, input_w),
                channels,
                latent_dim: dim,
                zero_init_heads: true,
            },
            0,
        )?),
        ModelKind::Siamese => AnyModel::Siamese(SiameseModel::new(
            SiameseConfig {
                input_size: (input_h, input_w),
                channels,
                embed_dim: dim,
                margin,
            },
            0,
        )?),
    };

    // the stored layer table must agree with the rebuilt architecture
    let expected: Vec<LayerSpec> = match &model {
        AnyModel::Ae(m) => m.encoder.iter().chain(&m.decoder).cloned().collect(),
        AnyModel::Vae(m) => m
            .trunk
            .iter()
            .chain([&m.mu_head, &m.log_var_head])
            .chain(&m.decoder)
            .cloned()
            .collect(),
        AnyModel::Siamese(m) => m.embedding.clone(),
    };
    if stored_layers != expected {
        return Err(Error::InvalidConfig(
            "weights file layer table does not match its config block".into(),
        ));
    }

    let n_params = r.u32("param count")? as usize;
    let mut metas = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name_len = r.u16("param name length")? as usize;
        let mut name = vec![0u8; name_len];
        r.cur
            .read_exact(&mut name)
            .map_err(|_| Error::Truncated("param name".into()))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::InvalidConfig("non-utf8 parameter name".into()))?;
        let rank = r.u8("param rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("param extent")? as usize);
        }
        metas.push((name, shape));
    }

    let params = match &mut model {
        AnyModel::Ae(m) => &mut m.params,
        AnyModel::Vae(m) => &mut m.params,
        AnyModel::Siamese(m) => &mut m.params,
    };
    if metas.len() != params.len() {
        return Err(Error::InvalidConfig(format!(
            "weights file has {} parameters, architecture expects {}",
            metas.len(),
            params.len()
        )));
    }
    for ((name, shape), param) in metas.into_iter().zip(params.iter_mut()) {
        if shape != param.shape {
            return Err(Error::InvalidConfig(format!(
                "parameter '{name}' has shape {shape:?}, architecture expects {:?}",
                param.shape
            )));
        }
        param.name = name;
        for v in param.data.iter_mut() {
            *v = r.f32("param payload")?;
        }
    }
    Ok(model)
}

/// SHA-256 of an existing weights file.
pub fn model_file_checksum(path: &Path) -> Result<[u8; 32]> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).into())
}
