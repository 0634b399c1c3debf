//! Score files and metric reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{eer, roc, tar_at_far, TarAtFar};
use super::protocol::PairLabel;
use super::ScoreSet;
use crate::error::Result;

/// One row of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub probe_id: String,
    pub gallery_id: String,
    pub label: PairLabel,
    pub s_t: f64,
    pub s_m: f64,
    pub fused: f64,
}

pub fn write_scores_csv(path: impl AsRef<Path>, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub type TarEntry = TarAtFar;

/// FAR targets reported by default.
pub const REPORT_FARS: [(&str, f64); 3] = [("1e-2", 1e-2), ("1e-3", 1e-3), ("1e-4", 1e-4)];
/// ROC curves longer than this are thinned evenly (endpoints kept).
pub const MAX_ROC_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub genuine: usize,
    pub imposter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub eer: f64,
    pub tar_at_far: BTreeMap<String, TarEntry>,
    /// `(FAR, TAR)` pairs.
    pub roc_points: Vec<[f64; 2]>,
    pub counts: Counts,
}

impl MetricReport {
    pub fn from_scores(s: &ScoreSet) -> Result<Self> {
        let curve = roc(s)?;
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(curve.len().min(MAX_ROC_POINTS) + 1);
        pts.push([0.0, 0.0]);
        if curve.len() <= MAX_ROC_POINTS {
            pts.extend(curve.iter().map(|p| [p.far, p.tar]));
        } else {
            let step = (curve.len() - 1) as f64 / (MAX_ROC_POINTS - 1) as f64;
            pts.extend((0..MAX_ROC_POINTS).map(|k| {
                let p = curve[((k as f64 * step).round() as usize).min(curve.len() - 1)];
                [p.far, p.tar]
            }));
        }
        let mut tars = BTreeMap::new();
        for (name, far) in REPORT_FARS {
            tars.insert(name.to_string(), tar_at_far(s, far)?);
        }
        Ok(Self {
            eer: eer(s)?,
            tar_at_far: tars,
            roc_points: pts,
            counts: Counts {
                genuine: s.genuine.len(),
                imposter: s.imposter.len(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let rows = vec![
            ScoreRecord { probe_id: "a".into(), gallery_id: "b".into(), label: PairLabel::Genuine, s_t: 0.9, s_m: 0.5, fused: 0.7 },
            ScoreRecord { probe_id: "a".into(), gallery_id: "c".into(), label: PairLabel::Imposter, s_t: 0.1, s_m: 0.0, fused: 0.05 },
        ];
        write_scores_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("probe_id,gallery_id,label,s_t,s_m,fused\n"));
        assert_eq!(read_scores_csv(&p).unwrap(), rows);
    }

    #[test]
    fn report_fields() {
        let s = ScoreSet::new(vec![0.9, 0.8, 0.4], vec![0.1, 0.5, 0.2, 0.3]).unwrap();
        let r = MetricReport::from_scores(&s).unwrap();
        assert_eq!(r.counts.genuine, 3);
        assert_eq!(r.tar_at_far.len(), 3);
        assert!(r.tar_at_far["1e-4"].floor);
        let j: serde_json::Value = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        for k in ["eer", "tar_at_far", "roc_points", "counts"] {
            assert!(j.get(k).is_some());
        }
    }
}
