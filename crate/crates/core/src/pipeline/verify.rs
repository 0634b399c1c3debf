use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::{build_templates, FailureRecord};
use super::config::PipelineConfig;
use super::manifest::DatasetManifest;
use crate::error::Result;
use crate::matcheval::{gen_protocol, pair_scores, MetricReport, PairLabel, ScoreRecord, ScoreSet, Template};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationCounts {
    /// Pairs generated by the protocol.
    pub genuine: u64,
    pub imposter: u64,
    /// Pairs actually scored (both templates available).
    pub scored_genuine: usize,
    pub scored_imposter: usize,
    pub skipped_pairs: u64,
}

/// Deterministic for a fixed manifest, configuration and seed; timings are
/// kept separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Fused-score metrics; `None` when insufficient.
    pub eer: Option<f64>,
    pub fused: Option<MetricReport>,
    pub texture: Option<MetricReport>,
    pub minutiae: Option<MetricReport>,
    pub counts: VerificationCounts,
    /// No genuine or no imposter scores were available.
    pub insufficient: bool,
    pub missing_templates: Vec<String>,
    pub excluded_fingers: Vec<String>,
    pub failures: Vec<FailureRecord>,
    pub manifest_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationTiming {
    pub extraction_s: f64,
    pub scoring_s: f64,
    pub metrics_s: f64,
}

#[derive(Debug, Clone)]
pub struct VerificationOutput {
    pub report: VerificationReport,
    pub records: Vec<ScoreRecord>,
    pub timing: VerificationTiming,
}

pub fn run_verification(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<VerificationOutput> {
    let t0 = Instant::now();
    let batch = build_templates(manifest, cfg);
    let extraction_s = t0.elapsed().as_secs_f64();
    let mut out = run_verification_on(manifest, &batch.templates, cfg)?;
    out.report.failures = batch.failures;
    out.timing.extraction_s = extraction_s;
    Ok(out)
}

/// Protocol run over already built templates, keyed by sample id.
pub fn run_verification_on(
    manifest: &DatasetManifest,
    templates: &BTreeMap<String, Template>,
    cfg: &PipelineConfig,
) -> Result<VerificationOutput> {
    let protocol = gen_protocol(&manifest.samples(), cfg.protocol)?;
    let search = cfg.search_config();
    let t1 = Instant::now();
    let mut missing = BTreeSet::new();
    let mut jobs = Vec::new();
    let mut skipped = 0u64;
    for pair in protocol.pairs() {
        let (p, g) = (protocol.probe_id(&pair), protocol.gallery_id(&pair));
        match (templates.get(p), templates.get(g)) {
            (Some(tp), Some(tg)) => jobs.push((tp, tg, pair.label)),
            (a, b) => {
                skipped += 1;
                if a.is_none() {
                    missing.insert(p.to_string());
                }
                if b.is_none() {
                    missing.insert(g.to_string());
                }
            }
        }
    }
    let records = jobs
        .par_iter()
        .map(|(p, g, label)| {
            let s = pair_scores(p, g, &search)?;
            Ok(ScoreRecord {
                probe_id: p.id(),
                gallery_id: g.id(),
                label: *label,
                s_t: s.s_t,
                s_m: s.s_m,
                fused: s.fused,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scoring_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let split = |f: fn(&ScoreRecord) -> f64| -> Result<ScoreSet> {
        let gen = records.iter().filter(|r| r.label == PairLabel::Genuine).map(f).collect();
        let imp = records.iter().filter(|r| r.label == PairLabel::Imposter).map(f).collect();
        ScoreSet::new(gen, imp)
    };
    let fused_set = split(|r| r.fused)?;
    let insufficient = fused_set.genuine.is_empty() || fused_set.imposter.is_empty();
    let metric = |s: ScoreSet| -> Result<Option<MetricReport>> {
        if insufficient {
            Ok(None)
        } else {
            MetricReport::from_scores(&s).map(Some)
        }
    };
    let counts = VerificationCounts {
        genuine: protocol.genuine_count(),
        imposter: protocol.imposter_count(),
        scored_genuine: fused_set.genuine.len(),
        scored_imposter: fused_set.imposter.len(),
        skipped_pairs: skipped,
    };
    let fused = metric(fused_set)?;
    let report = VerificationReport {
        eer: fused.as_ref().map(|m| m.eer),
        fused,
        texture: metric(split(|r| r.s_t)?)?,
        minutiae: metric(split(|r| r.s_m)?)?,
        counts,
        insufficient,
        missing_templates: missing.into_iter().collect(),
        excluded_fingers: protocol.excluded,
        failures: Vec::new(),
        manifest_size: manifest.len(),
    };
    if insufficient {
        log::warn!("verification has no genuine or no imposter scores; metrics omitted");
    }
    Ok(VerificationOutput {
        report,
        records,
        timing: VerificationTiming {
            extraction_s: 0.0,
            scoring_s,
            metrics_s: t2.elapsed().as_secs_f64(),
        },
    })
}
