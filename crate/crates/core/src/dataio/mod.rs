//! Frame ingestion and corpus management.
//!
//! A corpus is an ordered set of RGB frames in `[0,1]`, optionally labeled
//! with `(cluster_id, modality, rotation_deg)` ground truth from a CSV
//! manifest (`frame_id,cluster_id,modality,rotation_deg`).

pub mod pairs;
pub mod synth;

pub use pairs::{sample_pairs, PairLabel, PairSample};
pub use synth::{generate_synthetic, modality_transform, rotate_frame, SynthConfig};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// RGB image, interleaved HWC, values in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn black(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Self {
        debug_assert_eq!(bytes.len(), height * width * 3);
        Image {
            height,
            width,
            data: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    /// Bilinear resample to the target extents.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Image {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Image::black(height, width);
        let sy = self.height as f32 / height as f32;
        let sx = self.width as f32 / width as f32;
        for y in 0..height {
            // sample at pixel centers
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, self.height as f32 - 1.0);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, self.width as f32 - 1.0);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                let mut rgb = [0.0f32; 3];
                for (c, out_c) in rgb.iter_mut().enumerate() {
                    let p00 = self.pixel(y0, x0)[c];
                    let p01 = self.pixel(y0, x1)[c];
                    let p10 = self.pixel(y1, x0)[c];
                    let p11 = self.pixel(y1, x1)[c];
                    *out_c = p00 * (1.0 - wy) * (1.0 - wx)
                        + p01 * (1.0 - wy) * wx
                        + p10 * wy * (1.0 - wx)
                        + p11 * wy * wx;
                }
                out.set_pixel(y, x, rgb);
            }
        }
        out
    }

    /// Planar CHW layout for network input.
    pub fn to_chw(&self) -> Vec<f32> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; 3 * hw];
        for i in 0..hw {
            out[i] = self.data[i * 3];
            out[hw + i] = self.data[i * 3 + 1];
            out[2 * hw + i] = self.data[i * 3 + 2];
        }
        out
    }

    pub fn from_chw(height: usize, width: usize, chw: &[f32]) -> Image {
        let hw = height * width;
        debug_assert_eq!(chw.len(), 3 * hw);
        let mut data = vec![0.0; 3 * hw];
        for i in 0..hw {
            data[i * 3] = chw[i];
            data[i * 3 + 1] = chw[hw + i];
            data[i * 3 + 2] = chw[2 * hw + i];
        }
        Image {
            height,
            width,
            data,
        }
    }
}

/// Endoscope imaging modality of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    /// White light.
    Wl,
    /// Narrow-band imaging.
    Nbi,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Wl => "WL",
            Modality::Nbi => "NBI",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        match s.trim().to_ascii_uppercase().as_str() {
            "WL" => Some(Modality::Wl),
            "NBI" => Some(Modality::Nbi),
            _ => None,
        }
    }
}

/// Ground-truth label attached to a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLabel {
    pub cluster_id: u32,
    pub modality: Modality,
    pub rotation_deg: f32,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub id: String,
    pub pixels: Image,
}

/// Ordered set of frames with optional labels.
#[derive(Debug, Clone, Default)]
pub struct FrameCorpus {
    pub frames: Vec<Frame>,
    pub labels: Option<BTreeMap<String, FrameLabel>>,
}

impl FrameCorpus {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, id: &str) -> Option<&Frame> {
        self.frames.iter().find(|f| f.id == id)
    }

    pub fn label_of(&self, id: &str) -> Option<&FrameLabel> {
        self.labels.as_ref().and_then(|m| m.get(id))
    }

    /// Frame indices grouped by cluster id; errors when any frame is
    /// unlabeled.
    pub fn clusters(&self) -> Result<BTreeMap<u32, Vec<usize>>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Unlabeled("corpus has no manifest labels".into()))?;
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, frame) in self.frames.iter().enumerate() {
            let label = labels.get(&frame.id).ok_or_else(|| {
                Error::Unlabeled(format!("frame '{}' has no label", frame.id))
            })?;
            map.entry(label.cluster_id).or_default().push(i);
        }
        Ok(map)
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.frames {
            if !seen.insert(f.id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate frame id '{}'",
                    f.id
                )));
            }
        }
        Ok(())
    }
}

/// Name of the manifest written next to saved corpora.
pub const MANIFEST_FILE: &str = "manifest.csv";

fn decode_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    Ok(Image::from_rgb8(
        rgb.height() as usize,
        rgb.width() as usize,
        rgb.as_raw(),
    ))
}

/// Load every PNG/PPM under `dir` (sorted by filename) and, when given, the
/// label manifest.
pub fn load_corpus(dir: &Path, manifest: Option<&Path>) -> Result<FrameCorpus> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::io(dir, e))?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|s| s.to_str())
                .map(|ext| {
                    let ext = ext.to_ascii_lowercase();
                    ext == "png" || ext == "ppm"
                })
                .unwrap_or(false)
        })
        .collect();
    files.sort();

    let mut frames = Vec::with_capacity(files.len());
    for path in &files {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Decode {
                path: path.clone(),
                message: "non-utf8 file name".into(),
            })?
            .to_string();
        frames.push(Frame {
            id,
            pixels: decode_image(path)?,
        });
    }

    let mut corpus = FrameCorpus {
        frames,
        labels: None,
    };
    corpus.check_unique_ids()?;

    if let Some(manifest_path) = manifest {
        corpus.labels = Some(read_manifest(manifest_path, &corpus)?);
    }
    Ok(corpus)
}

fn read_manifest(path: &Path, corpus: &FrameCorpus) -> Result<BTreeMap<String, FrameLabel>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut labels = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let bad = |msg: &str| Error::Manifest {
            path: path.to_path_buf(),
            message: format!("{msg} in row {row:?}"),
        };
        let frame_id = row.get(0).ok_or_else(|| bad("missing frame_id"))?.to_string();
        let cluster_id: u32 = row
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad cluster_id"))?;
        let modality = row
            .get(2)
            .and_then(Modality::parse)
            .ok_or_else(|| bad("bad modality"))?;
        let rotation_deg: f32 = row
            .get(3)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad rotation_deg"))?;
        if corpus.frame(&frame_id).is_none() {
            return Err(Error::ManifestMissingFrame { frame_id });
        }
        labels.insert(
            frame_id,
            FrameLabel {
                cluster_id,
                modality,
                rotation_deg,
            },
        );
    }
    Ok(labels)
}

/// Write the corpus as 8-bit PNGs plus a manifest when labels are present.
pub fn save_corpus(corpus: &FrameCorpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for frame in &corpus.frames {
        let path = dir.join(format!("{}.png", frame.id));
        let buf = frame.pixels.to_rgb8();
        image::save_buffer(
            &path,
            &buf,
            frame.pixels.width as u32,
            frame.pixels.height as u32,
            image::ColorType::Rgb8,
        )
        .map_err(|e| Error::Decode {
            path: path.clone(),
            message: e.to_string(),
        })?;
    }
    if let Some(labels) = &corpus.labels {
        write_manifest(labels, &dir.join(MANIFEST_FILE))?;
    }
    Ok(())
}

pub fn write_manifest(labels: &BTreeMap<String, FrameLabel>, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let fail = |e: csv::Error| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    writer
        .write_record(["frame_id", "cluster_id", "modality", "rotation_deg"])
        .map_err(fail)?;
    for (id, label) in labels {
        writer
            .write_record([
                id.as_str(),
                &label.cluster_id.to_string(),
                label.modality.as_str(),
                &format!("{}", label.rotation_deg),
            ])
            .map_err(fail)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
