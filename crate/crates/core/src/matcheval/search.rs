//! Pair scoring and gallery search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::template::Template;
use super::{fuse_scores, FusionWeights};
use crate::error::{Error, Result};
use crate::minutiae::{match_minutiae, MatchParams};
use crate::representation::texture_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Texture,
    Minutiae,
    Fused,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub matcher: MatchParams,
    pub fusion: FusionWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub s_t: f64,
    pub s_m: f64,
    pub fused: f64,
}

pub fn texture_score(probe: &Template, gallery: &Template) -> Result<f64> {
    texture_similarity(&probe.embedding, &gallery.embedding)
}

pub fn minutiae_score(probe: &Template, gallery: &Template, params: &MatchParams) -> f64 {
    match_minutiae(&probe.minutiae, &gallery.minutiae, params).score
}

pub fn pair_scores(probe: &Template, gallery: &Template, cfg: &SearchConfig) -> Result<PairScore> {
    let s_t = texture_score(probe, gallery)?;
    let s_m = minutiae_score(probe, gallery, &cfg.matcher);
    Ok(PairScore {
        s_t,
        s_m,
        fused: fuse_scores(s_t, s_m, cfg.fusion)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Position in the gallery.
    pub index: usize,
    /// Score the candidate was ranked by.
    pub score: f64,
    pub s_t: Option<f64>,
    pub s_m: Option<f64>,
}

fn sort_candidates(c: &mut [Candidate]) {
    c.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
}

fn score_one(probe: &Template, g: &Template, index: usize, scorer: Scorer, cfg: &SearchConfig) -> Result<Candidate> {
    Ok(match scorer {
        Scorer::Texture => {
            let s_t = texture_score(probe, g)?;
            Candidate { index, score: s_t, s_t: Some(s_t), s_m: None }
        }
        Scorer::Minutiae => {
            let s_m = minutiae_score(probe, g, &cfg.matcher);
            Candidate { index, score: s_m, s_t: None, s_m: Some(s_m) }
        }
        Scorer::Fused => {
            let p = pair_scores(probe, g, cfg)?;
            Candidate { index, score: p.fused, s_t: Some(p.s_t), s_m: Some(p.s_m) }
        }
    })
}

/// Scores the whole gallery and sorts descending; ties keep gallery order.
pub fn rank_n_search(probe: &Template, gallery: &[Template], scorer: Scorer, cfg: &SearchConfig) -> Result<Vec<Candidate>> {
    if gallery.is_empty() {
        return Err(Error::EmptyInput("gallery"));
    }
    let mut out = gallery
        .par_iter()
        .enumerate()
        .map(|(i, g)| score_one(probe, g, i, scorer, cfg))
        .collect::<Result<Vec<_>>>()?;
    sort_candidates(&mut out);
    Ok(out)
}

/// Texture ranking, then fused re-scoring of the top `k`. Candidates past
/// `k` follow the re-sorted block in their texture order.
pub fn two_stage_search(probe: &Template, gallery: &[Template], k: usize, cfg: &SearchConfig) -> Result<Vec<Candidate>> {
    if k == 0 || k > gallery.len() {
        return Err(Error::param(format!("shortlist size {k} outside 1..={}", gallery.len())));
    }
    let ranked = rank_n_search(probe, gallery, Scorer::Texture, cfg)?;
    rerank_shortlist(probe, gallery, ranked, k, cfg)
}

/// Second stage of [`two_stage_search`]: fused re-scoring of the first `k`
/// entries of a texture ranking.
pub fn rerank_shortlist(
    probe: &Template,
    gallery: &[Template],
    mut ranked: Vec<Candidate>,
    k: usize,
    cfg: &SearchConfig,
) -> Result<Vec<Candidate>> {
    if k == 0 || k > ranked.len() {
        return Err(Error::param(format!("shortlist size {k} outside 1..={}", ranked.len())));
    }
    let head = ranked[..k]
        .par_iter()
        .map(|c| {
            let s_t = c.score;
            let s_m = minutiae_score(probe, &gallery[c.index], &cfg.matcher);
            Ok(Candidate {
                index: c.index,
                score: fuse_scores(s_t, s_m, cfg.fusion)?,
                s_t: Some(s_t),
                s_m: Some(s_m),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked[..k].copy_from_slice(&head);
    sort_candidates(&mut ranked[..k]);
    Ok(ranked)
}

/// Zero-based position of `target` in the texture-only ranking.
pub fn shortlist_rank(probe: &Template, gallery: &[Template], target: usize, cfg: &SearchConfig) -> Result<usize> {
    let ranked = rank_n_search(probe, gallery, Scorer::Texture, cfg)?;
    ranked
        .iter()
        .position(|c| c.index == target)
        .ok_or_else(|| Error::param(format!("target index {target} not in gallery")))
}
