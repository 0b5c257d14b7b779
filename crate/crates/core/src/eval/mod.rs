//! Retrieval evaluation: TP/FP/precision over sampled queries for the four
//! methods (AE, VAE, AE-Siamese, VAE-Siamese), with cluster-label equality
//! as the relevance rule.

pub mod gallery;
pub mod report;

pub use gallery::{render_gallery, GalleryEntry};
pub use report::compression_report;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataio::FrameCorpus;
use crate::error::{Error, Result};
use crate::index::{build_index, LatentDtype};
use crate::models::{AeModel, SiameseModel, VaeModel};
use crate::retrieval::{retrieve, QueryRequest, RetrievalModels};

/// `tp / (tp + fp)`.
pub fn precision_from_counts(tp: u64, fp: u64) -> Result<f64> {
    if tp + fp == 0 {
        return Err(Error::InvalidConfig(
            "precision undefined for tp + fp = 0".into(),
        ));
    }
    Ok(tp as f64 / (tp + fp) as f64)
}

/// The four evaluated methods, in report order.
pub const METHOD_NAMES: [&str; 4] = ["ae", "vae", "ae-siamese", "vae-siamese"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub n_queries: usize,
    pub final_n: usize,
    pub candidate_k: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_queries: 49,
            final_n: 10,
            candidate_k: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodStats {
    pub tp: u64,
    pub fp: u64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryBreakdown {
    pub query_id: String,
    /// True positives per method, ordered as [`METHOD_NAMES`].
    pub tp: [u64; 4],
    /// Retrieved count per method (tp + fp).
    pub retrieved: [u64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Aggregates ordered as [`METHOD_NAMES`].
    pub methods: [MethodStats; 4],
    pub per_query: Vec<QueryBreakdown>,
    pub config: EvalConfig,
}

impl EvalReport {
    /// Machine-readable report: fixed column order, deterministic formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,tp,fp,precision\n");
        for (name, m) in METHOD_NAMES.iter().zip(&self.methods) {
            out.push_str(&format!("{name},{},{},{:.6}\n", m.tp, m.fp, m.precision));
        }
        out
    }

    /// Re-derive the aggregate counts from the per-query breakdown.
    pub fn recompute_from_breakdown(&self) -> [(u64, u64); 4] {
        let mut agg = [(0u64, 0u64); 4];
        for q in &self.per_query {
            for (i, slot) in agg.iter_mut().enumerate() {
                slot.0 += q.tp[i];
                slot.1 += q.retrieved[i] - q.tp[i];
            }
        }
        agg
    }
}

/// The trained models evaluate runs against, with their weights-file
/// checksums.
pub struct EvalModels<'a> {
    pub ae: &'a AeModel,
    pub ae_checksum: [u8; 32],
    pub vae: &'a VaeModel,
    pub vae_checksum: [u8; 32],
    pub siamese: &'a SiameseModel,
}

/// Run all four methods over `n_queries` frames sampled from the query
/// corpus, retrieving from the target corpus. A retrieved frame is a true
/// positive iff its cluster id equals the query's. Deterministic given the
/// config seed.
pub fn evaluate(
    query_corpus: &FrameCorpus,
    target_corpus: &FrameCorpus,
    models: &EvalModels<'_>,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let query_labels = query_corpus
        .labels
        .as_ref()
        .ok_or_else(|| Error::Unlabeled("query corpus has no labels".into()))?;
    target_corpus
        .labels
        .as_ref()
        .ok_or_else(|| Error::Unlabeled("target corpus has no labels".into()))?;
    if config.n_queries > query_corpus.len() {
        return Err(Error::InvalidConfig(format!(
            "n_queries = {} exceeds the {} available query frames",
            config.n_queries,
            query_corpus.len()
        )));
    }
    if target_corpus.len() < config.final_n {
        return Err(Error::InvalidConfig(format!(
            "target corpus has {} frames, final_n = {} cannot be filled",
            target_corpus.len(),
            config.final_n
        )));
    }

    let (ae_index, _) = build_index(models.ae, models.ae_checksum, target_corpus, LatentDtype::F32)?;
    let (vae_index, _) =
        build_index(models.vae, models.vae_checksum, target_corpus, LatentDtype::F32)?;
    let target_labels = target_corpus.labels.as_ref().expect("checked above");

    let mut picked: Vec<usize> = (0..query_corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    picked.shuffle(&mut rng);
    picked.truncate(config.n_queries);
    picked.sort_unstable();

    let per_query: Vec<QueryBreakdown> = picked
        .par_iter()
        .map(|&qi| -> Result<QueryBreakdown> {
            let frame = &query_corpus.frames[qi];
            let query_cluster = query_labels
                .get(&frame.id)
                .ok_or_else(|| Error::Unlabeled(format!("query frame '{}' has no label", frame.id)))?
                .cluster_id;

            let mut tp = [0u64; 4];
            let mut retrieved = [0u64; 4];
            for (mi, method) in METHOD_NAMES.iter().enumerate() {
                let use_siamese = method.ends_with("siamese");
                let (encoder, checksum, index): (&dyn crate::models::LatentEncoder, _, _) =
                    if method.starts_with("ae") {
                        (models.ae, models.ae_checksum, &ae_index)
                    } else {
                        (models.vae, models.vae_checksum, &vae_index)
                    };
                let request = QueryRequest {
                    query_frame: &frame.pixels,
                    candidate_k: config.candidate_k,
                    final_n: config.final_n,
                    use_siamese,
                    rerank_blend: 0.0,
                };
                let retrieval_models = RetrievalModels {
                    encoder,
                    encoder_checksum: checksum,
                    siamese: if use_siamese { Some(models.siamese) } else { None },
                    ae_decoder: None,
                };
                let result = retrieve(&request, &retrieval_models, index, Some(target_corpus))?;
                retrieved[mi] = result.ranked.len() as u64;
                tp[mi] = result
                    .ranked
                    .iter()
                    .filter(|r| {
                        target_labels
                            .get(&r.frame_id)
                            .map(|l| l.cluster_id == query_cluster)
                            .unwrap_or(false)
                    })
                    .count() as u64;
            }
            Ok(QueryBreakdown {
                query_id: frame.id.clone(),
                tp,
                retrieved,
            })
        })
        .collect::<Result<_>>()?;

    let mut methods = [MethodStats {
        tp: 0,
        fp: 0,
        precision: 0.0,
    }; 4];
    for q in &per_query {
        for (i, m) in methods.iter_mut().enumerate() {
            m.tp += q.tp[i];
            m.fp += q.retrieved[i] - q.tp[i];
        }
    }
    for m in &mut methods {
        m.precision = precision_from_counts(m.tp, m.fp)?;
    }

    Ok(EvalReport {
        methods,
        per_query,
        config: *config,
    })
}

#[cfg(test)]
mod tests;
