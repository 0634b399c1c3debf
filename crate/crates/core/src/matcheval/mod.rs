//! Score fusion, verification protocols and metrics, ROC comparison, and
//! rank-N / two-stage identification.

mod mann_whitney;
mod metrics;
mod protocol;
mod report;
mod search;
pub(crate) mod template;

pub use mann_whitney::{mann_whitney_roc_test, RocTestMethod, RocTestMode, RocTestResult, EXACT_LIMIT};
pub use metrics::{eer, roc, tar_at_far, RocPoint, TarAtFar};
pub use protocol::{gen_protocol, FingerGroup, ImposterRule, Pair, PairLabel, Protocol, SampleInfo};
pub use report::{read_scores_csv, write_scores_csv, Counts, MetricReport, ScoreRecord, TarEntry, REPORT_FARS};
pub use search::{minutiae_score, pair_scores, rerank_shortlist, texture_score, rank_n_search, shortlist_rank, two_stage_search, Candidate, PairScore, Scorer, SearchConfig};
pub use template::{sample_id, CaptureKind, IndexEntry, Template, TemplateStore, INDEX_FILE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TEXTURE_WEIGHT: f64 = 0.5;
pub const DEFAULT_MINUTIAE_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub texture: f64,
    pub minutiae: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            texture: DEFAULT_TEXTURE_WEIGHT,
            minutiae: DEFAULT_MINUTIAE_WEIGHT,
        }
    }
}

fn check_unit(v: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(format!("{what} {v} outside [0,1]")));
    }
    Ok(())
}

/// Weighted sum `w_t * s_t + w_m * s_m` of two scores in `[0, 1]`.
pub fn fuse_scores(s_t: f64, s_m: f64, w: FusionWeights) -> Result<f64> {
    check_unit(s_t, "texture score")?;
    check_unit(s_m, "minutiae score")?;
    if !(w.texture >= 0.0 && w.minutiae >= 0.0 && w.texture.is_finite() && w.minutiae.is_finite()) {
        return Err(Error::param("fusion weights must be finite and nonnegative"));
    }
    Ok(w.texture * s_t + w.minutiae * s_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerFusionRule {
    Sum,
    Mean,
}

/// Combines per-finger scores of one subject.
pub fn multi_finger_fuse(scores: &[f64], rule: FingerFusionRule) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("per-finger scores"));
    }
    for s in scores {
        check_unit(*s, "finger score")?;
    }
    let sum: f64 = scores.iter().sum();
    Ok(match rule {
        FingerFusionRule::Sum => sum,
        FingerFusionRule::Mean => sum / scores.len() as f64,
    })
}

/// Genuine and imposter scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub imposter: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, imposter: Vec<f64>) -> Result<Self> {
        for s in genuine.iter().chain(&imposter) {
            if !s.is_finite() {
                return Err(Error::param("scores must be finite"));
            }
            check_unit(*s, "score")?;
        }
        Ok(Self { genuine, imposter })
    }

    pub(crate) fn require_both(&self) -> Result<()> {
        if self.genuine.is_empty() {
            return Err(Error::EmptyInput("genuine scores"));
        }
        if self.imposter.is_empty() {
            return Err(Error::EmptyInput("imposter scores"));
        }
        Ok(())
    }
}
