use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batch::{build_templates, FailureRecord};
use super::config::PipelineConfig;
use super::manifest::DatasetManifest;
use crate::error::{Error, Result};
use crate::matcheval::{rank_n_search, rerank_shortlist, Candidate, CaptureKind, Scorer, Template};

/// Ranks reported in hit-rate tables.
pub const RANKS: [usize; 4] = [1, 10, 100, 500];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub gallery_size: usize,
    pub probes: usize,
    /// Probes without any enrolled mate; excluded from the hit-rate denominators.
    pub unmatchable: usize,
    pub k: usize,
    /// Hit rates keyed `rank-N` after two-stage re-ranking.
    pub two_stage: BTreeMap<String, f64>,
    /// Hit rates of the texture-only first stage.
    pub texture_only: BTreeMap<String, f64>,
    /// Fraction of matchable probes whose mate survives the shortlist.
    pub shortlist_recall: f64,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTiming {
    pub extraction_s: f64,
    pub stage1_s: f64,
    pub stage2_s: f64,
    pub stage1_per_probe_ms: f64,
    pub stage2_per_probe_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutput {
    pub report: SearchReport,
    pub timing: SearchTiming,
}

/// Contactless captures search the gallery of contact captures.
pub fn run_search(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<SearchOutput> {
    let t0 = Instant::now();
    let batch = build_templates(manifest, cfg);
    let extraction_s = t0.elapsed().as_secs_f64();
    let (probes, gallery): (Vec<Template>, Vec<Template>) = batch
        .templates
        .into_values()
        .partition(|t| t.capture_kind() == CaptureKind::Contactless);
    let mut out = run_search_on(&probes, &gallery, cfg)?;
    out.report.failures = batch.failures;
    out.timing.extraction_s = extraction_s;
    Ok(out)
}

fn mate_rank(ranked: &[Candidate], mates: &[usize]) -> usize {
    ranked
        .iter()
        .position(|c| mates.contains(&c.index))
        .expect("mates are gallery members")
}

fn rates(ranks: &[usize]) -> BTreeMap<String, f64> {
    RANKS
        .iter()
        .map(|&n| {
            let hits = ranks.iter().filter(|r| **r < n).count();
            let rate = if ranks.is_empty() { 0.0 } else { hits as f64 / ranks.len() as f64 };
            (format!("rank-{n}"), rate)
        })
        .collect()
}

pub fn run_search_on(probes: &[Template], gallery: &[Template], cfg: &PipelineConfig) -> Result<SearchOutput> {
    if gallery.is_empty() {
        return Err(Error::EmptyInput("gallery"));
    }
    let search = cfg.search_config();
    let k = cfg.search_k.min(gallery.len());
    let mut stage1_s = 0.0;
    let mut stage2_s = 0.0;
    let (mut texture_ranks, mut final_ranks) = (Vec::new(), Vec::new());
    let mut unmatchable = 0;
    for probe in probes {
        let mates: Vec<usize> = gallery
            .iter()
            .enumerate()
            .filter(|(_, g)| g.finger_key() == probe.finger_key())
            .map(|(i, _)| i)
            .collect();
        let t = Instant::now();
        let ranked = rank_n_search(probe, gallery, Scorer::Texture, &search)?;
        stage1_s += t.elapsed().as_secs_f64();
        if !mates.is_empty() {
            texture_ranks.push(mate_rank(&ranked, &mates));
        }
        let t = Instant::now();
        let reranked = rerank_shortlist(probe, gallery, ranked, k, &search)?;
        stage2_s += t.elapsed().as_secs_f64();
        if mates.is_empty() {
            unmatchable += 1;
        } else {
            final_ranks.push(mate_rank(&reranked, &mates));
        }
    }
    let recall = if texture_ranks.is_empty() {
        0.0
    } else {
        texture_ranks.iter().filter(|r| **r < k).count() as f64 / texture_ranks.len() as f64
    };
    let per = |s: f64| if probes.is_empty() { 0.0 } else { 1e3 * s / probes.len() as f64 };
    Ok(SearchOutput {
        report: SearchReport {
            gallery_size: gallery.len(),
            probes: probes.len(),
            unmatchable,
            k,
            two_stage: rates(&final_ranks),
            texture_only: rates(&texture_ranks),
            shortlist_recall: recall,
            failures: Vec::new(),
        },
        timing: SearchTiming {
            extraction_s: 0.0,
            stage1_s,
            stage2_s,
            stage1_per_probe_ms: per(stage1_s),
            stage2_per_probe_ms: per(stage2_s),
        },
    })
}
