//! The combined retrieval pipeline: encode query, exact L2 sort against the
//! index, top-k candidates, optional Siamese re-ranking, top-n results.

use std::path::PathBuf;
use std::time::Instant;

use crate::dataio::{FrameCorpus, Image};
use crate::error::{Error, Result};
use crate::index::LatentIndex;
use crate::models::siamese::embedding_distance;
use crate::models::{AeModel, LatentEncoder, SiameseModel};

/// Maps a frame id back to pixels for the re-ranker.
pub trait CorpusAccess: Sync {
    fn pixels(&self, frame_id: &str) -> Result<Image>;
}

impl CorpusAccess for FrameCorpus {
    fn pixels(&self, frame_id: &str) -> Result<Image> {
        self.frame(frame_id)
            .map(|f| f.pixels.clone())
            .ok_or_else(|| Error::FrameNotFound {
                frame_id: frame_id.to_string(),
            })
    }
}

/// Directory-backed access: loads `<dir>/<frame_id>.png` (or `.ppm`) on
/// demand.
pub struct DirCorpusAccess {
    pub dir: PathBuf,
}

impl CorpusAccess for DirCorpusAccess {
    fn pixels(&self, frame_id: &str) -> Result<Image> {
        for ext in ["png", "ppm"] {
            let path = self.dir.join(format!("{frame_id}.{ext}"));
            if path.exists() {
                let img = image::open(&path).map_err(|e| Error::Decode {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let rgb = img.to_rgb8();
                return Ok(Image::from_rgb8(
                    rgb.height() as usize,
                    rgb.width() as usize,
                    rgb.as_raw(),
                ));
            }
        }
        Err(Error::FrameNotFound {
            frame_id: frame_id.to_string(),
        })
    }
}

/// Euclidean distance between two equal-length vectors.
pub fn l2_distance(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "l2_distance: lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f32>()
        .sqrt())
}

/// A candidate produced by the L2 stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub frame_id: String,
    pub l2_score: f32,
}

/// The `min(k, len)` exact nearest entries under L2, ascending, ties broken
/// by frame id. Full scan; no approximation.
pub fn knn_candidates(
    query_latent: &[f32],
    index: &LatentIndex,
    k: usize,
) -> Result<Vec<Candidate>> {
    if query_latent.len() != index.dim {
        return Err(Error::DimMismatch {
            expected: index.dim,
            found: query_latent.len(),
        });
    }
    let mut scored: Vec<(f32, &str)> = index
        .entries
        .iter()
        .map(|e| {
            let d = l2_distance(query_latent, &e.latent).expect("index latents have dim length");
            (d, e.frame_id.as_str())
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(l2_score, frame_id)| Candidate {
            frame_id: frame_id.to_string(),
            l2_score,
        })
        .collect())
}

/// One row of a finished retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFrame {
    pub frame_id: String,
    pub l2_score: f32,
    pub siamese_distance: Option<f32>,
    /// 1-based position in the final ordering.
    pub final_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timings {
    pub encode_s: f64,
    pub search_s: f64,
    pub rerank_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub ranked: Vec<RankedFrame>,
    pub timings: Timings,
    /// True when `candidate_k` exceeded the index size and was clamped.
    pub clamped_k: bool,
    /// True when candidate pixels came from the decoder fallback instead of
    /// the corpus store.
    pub reconstructed_candidates: bool,
}

/// Retrieval request over one query frame.
pub struct QueryRequest<'a> {
    pub query_frame: &'a Image,
    pub candidate_k: usize,
    pub final_n: usize,
    pub use_siamese: bool,
    /// Final score `(1-blend) * siamese + blend * l2`; 0 sorts purely by
    /// Siamese distance.
    pub rerank_blend: f32,
}

impl<'a> QueryRequest<'a> {
    pub fn new(query_frame: &'a Image) -> Self {
        QueryRequest {
            query_frame,
            candidate_k: 100,
            final_n: 10,
            use_siamese: false,
            rerank_blend: 0.0,
        }
    }
}

/// Everything retrieve needs besides the index: the latent encoder (with the
/// checksum of its weights file), the optional re-ranker, and the optional
/// decoder used when candidate pixels are unavailable.
pub struct RetrievalModels<'a> {
    pub encoder: &'a dyn LatentEncoder,
    pub encoder_checksum: [u8; 32],
    pub siamese: Option<&'a SiameseModel>,
    pub ae_decoder: Option<&'a AeModel>,
}

/// Re-rank candidates by Siamese distance to the query, ascending; ties fall
/// back to the L2 score, then the frame id. Membership never changes.
pub fn rerank(
    candidates: &[Candidate],
    query_frame: &Image,
    siamese: &SiameseModel,
    corpus: &dyn CorpusAccess,
    blend: f32,
) -> Result<Vec<RankedFrame>> {
    let query_embedding = siamese.embed(query_frame)?;
    let mut rows: Vec<RankedFrame> = candidates
        .iter()
        .map(|c| {
            let pixels = corpus.pixels(&c.frame_id)?;
            let emb = siamese.embed(&pixels)?;
            Ok(RankedFrame {
                frame_id: c.frame_id.clone(),
                l2_score: c.l2_score,
                siamese_distance: Some(embedding_distance(&query_embedding, &emb)),
                final_rank: 0,
            })
        })
        .collect::<Result<_>>()?;
    sort_reranked(&mut rows, blend);
    Ok(rows)
}

fn sort_reranked(rows: &mut [RankedFrame], blend: f32) {
    let score = |r: &RankedFrame| {
        let s = r.siamese_distance.expect("reranked rows carry a distance");
        (1.0 - blend) * s + blend * r.l2_score
    };
    rows.sort_by(|a, b| {
        score(a)
            .total_cmp(&score(b))
            .then_with(|| a.l2_score.total_cmp(&b.l2_score))
            .then_with(|| a.frame_id.cmp(&b.frame_id))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.final_rank = i + 1;
    }
}

/// Full pipeline: encode, L2 candidates, optional Siamese re-rank, truncate.
pub fn retrieve(
    request: &QueryRequest<'_>,
    models: &RetrievalModels<'_>,
    index: &LatentIndex,
    corpus: Option<&dyn CorpusAccess>,
) -> Result<RetrievalResult> {
    index.validate_model(&models.encoder_checksum)?;
    if request.final_n == 0 || request.candidate_k == 0 {
        return Err(Error::InvalidConfig(
            "candidate_k and final_n must be positive".into(),
        ));
    }

    let t0 = Instant::now();
    let query_latent = models.encoder.encode_frame(request.query_frame)?;
    let encode_s = t0.elapsed().as_secs_f64();

    let clamped_k = request.candidate_k > index.len();
    let k = request.candidate_k.min(index.len());
    let t1 = Instant::now();
    let candidates = knn_candidates(&query_latent, index, k)?;
    let search_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut reconstructed = false;
    let mut ranked: Vec<RankedFrame> = if request.use_siamese {
        let siamese = models.siamese.ok_or_else(|| {
            Error::InvalidConfig("use_siamese set but no Siamese model supplied".into())
        })?;
        match corpus {
            Some(store) => rerank(&candidates, request.query_frame, siamese, store, request.rerank_blend)?,
            None => {
                // decoder fallback: compare against reconstructions
                let decoder = models.ae_decoder.ok_or_else(|| {
                    Error::InvalidConfig(
                        "no corpus access and no decoder available for re-ranking".into(),
                    )
                })?;
                reconstructed = true;
                let store = DecodedCandidates { decoder, index };
                rerank(&candidates, request.query_frame, siamese, &store, request.rerank_blend)?
            }
        }
    } else {
        candidates
            .iter()
            .enumerate()
            .map(|(i, c)| RankedFrame {
                frame_id: c.frame_id.clone(),
                l2_score: c.l2_score,
                siamese_distance: None,
                final_rank: i + 1,
            })
            .collect()
    };
    let rerank_s = t2.elapsed().as_secs_f64();

    ranked.truncate(request.final_n);
    Ok(RetrievalResult {
        ranked,
        timings: Timings {
            encode_s,
            search_s,
            rerank_s,
        },
        clamped_k,
        reconstructed_candidates: reconstructed,
    })
}

/// Candidate pixels reconstructed from indexed latents through the decoder.
struct DecodedCandidates<'a> {
    decoder: &'a AeModel,
    index: &'a LatentIndex,
}

impl CorpusAccess for DecodedCandidates<'_> {
    fn pixels(&self, frame_id: &str) -> Result<Image> {
        let entry = self
            .index
            .entries
            .iter()
            .find(|e| e.frame_id == frame_id)
            .ok_or_else(|| Error::FrameNotFound {
                frame_id: frame_id.to_string(),
            })?;
        self.decoder.decode_latent(&entry.latent)
    }
}
