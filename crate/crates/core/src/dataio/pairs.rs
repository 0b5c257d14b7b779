//! Labeled pair sampling for Siamese training.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FrameCorpus;
use crate::error::{Error, Result};

/// Pair class: 0 pulls the pair together, 1 pushes it beyond the margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLabel {
    Similar = 0,
    Dissimilar = 1,
}

impl PairLabel {
    pub fn as_f32(self) -> f32 {
        match self {
            PairLabel::Similar => 0.0,
            PairLabel::Dissimilar => 1.0,
        }
    }

    pub fn try_from_f64(y: f64) -> Result<Self> {
        if y == 0.0 {
            Ok(PairLabel::Similar)
        } else if y == 1.0 {
            Ok(PairLabel::Dissimilar)
        } else {
            Err(Error::InvalidPairLabel(y))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSample {
    pub a: String,
    pub b: String,
    pub label: PairLabel,
}

/// Draw `n_pairs` frame pairs with an exact similar/dissimilar split:
/// `round(similar_fraction * n_pairs)` pairs share a cluster, the rest cross
/// clusters. Deterministic given the seed.
pub fn sample_pairs(
    corpus: &FrameCorpus,
    n_pairs: usize,
    similar_fraction: f64,
    seed: u64,
) -> Result<Vec<PairSample>> {
    if !(0.0..=1.0).contains(&similar_fraction) {
        return Err(Error::InvalidConfig(
            "similar_fraction must lie in [0, 1]".into(),
        ));
    }
    let clusters = corpus.clusters()?;
    let cluster_ids: Vec<u32> = clusters.keys().copied().collect();
    if cluster_ids.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "pair sampling needs at least 2 clusters, corpus has {}",
            cluster_ids.len()
        )));
    }
    let multi: Vec<u32> = clusters
        .iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|(&k, _)| k)
        .collect();
    let n_similar = (similar_fraction * n_pairs as f64).round() as usize;
    if n_similar > 0 && multi.is_empty() {
        return Err(Error::InvalidConfig(
            "no cluster has 2+ frames; cannot draw similar pairs".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_pairs);
    for _ in 0..n_similar {
        let cid = multi[rng.gen_range(0..multi.len())];
        let members = &clusters[&cid];
        let i = rng.gen_range(0..members.len());
        let j = loop {
            let j = rng.gen_range(0..members.len());
            if j != i {
                break j;
            }
        };
        out.push(PairSample {
            a: corpus.frames[members[i]].id.clone(),
            b: corpus.frames[members[j]].id.clone(),
            label: PairLabel::Similar,
        });
    }
    for _ in n_similar..n_pairs {
        let ca = rng.gen_range(0..cluster_ids.len());
        let cb = loop {
            let cb = rng.gen_range(0..cluster_ids.len());
            if cb != ca {
                break cb;
            }
        };
        let ma = &clusters[&cluster_ids[ca]];
        let mb = &clusters[&cluster_ids[cb]];
        out.push(PairSample {
            a: corpus.frames[ma[rng.gen_range(0..ma.len())]].id.clone(),
            b: corpus.frames[mb[rng.gen_range(0..mb.len())]].id.clone(),
            label: PairLabel::Dissimilar,
        });
    }
    out.shuffle(&mut rng);
    Ok(out)
}
