use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{WarpParams, MAX_PERIOD, MIN_PERIOD};
use crate::imaging::{ClaheParams, DEFAULT_CANVAS};
use crate::matcheval::{FusionWeights, ImposterRule, SearchConfig};
use crate::minutiae::{ExtractParams, MatchParams};
use crate::representation::TextureParams;
use crate::segmentation::SegmentParams;

/// Where the geometric normalization of contactless images comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum WarpSource {
    /// Scale from the estimated ridge period; the spline stage is left at
    /// zero unless a spline file is given.
    Estimated {
        #[serde(default)]
        tps_file: Option<PathBuf>,
    },
    /// Affine and spline parameters read from a warp JSON file (ridge period
    /// is not estimated).
    File { path: PathBuf },
}

impl Default for WarpSource {
    fn default() -> Self {
        WarpSource::Estimated { tps_file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub segment: SegmentParams,
    pub clahe: ClaheParams,
    pub canvas: usize,
    pub target_ridge_period: f64,
    pub warp: WarpSource,
    /// Pass images through `preprocess_one` unchanged.
    pub skip_preprocess: bool,
    /// Also preprocess contact captures (normally used as they are).
    pub preprocess_contact: bool,
    pub extract: ExtractParams,
    pub texture: TextureParams,
    pub matcher: MatchParams,
    pub fusion: FusionWeights,
    pub protocol: ImposterRule,
    pub search_k: usize,
    /// Seeds every random draw (matcher consensus sampling).
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            segment: SegmentParams::default(),
            clahe: ClaheParams::default(),
            canvas: DEFAULT_CANVAS,
            target_ridge_period: 9.0,
            warp: WarpSource::default(),
            skip_preprocess: false,
            preprocess_contact: false,
            extract: ExtractParams::default(),
            texture: TextureParams::default(),
            matcher: MatchParams::default(),
            fusion: FusionWeights::default(),
            protocol: ImposterRule::FullCross,
            search_k: 500,
            seed: 0x5eed,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_PERIOD..=MAX_PERIOD).contains(&self.target_ridge_period) {
            return Err(Error::param(format!(
                "target_ridge_period {} outside [{MIN_PERIOD}, {MAX_PERIOD}]",
                self.target_ridge_period
            )));
        }
        if !(64..=4096).contains(&self.canvas) {
            return Err(Error::param(format!("canvas {} outside [64, 4096]", self.canvas)));
        }
        if self.search_k == 0 {
            return Err(Error::param("search_k must be at least 1"));
        }
        let w = self.fusion;
        if !(w.texture >= 0.0 && w.minutiae >= 0.0 && w.texture.is_finite() && w.minutiae.is_finite()) {
            return Err(Error::param("fusion weights must be finite and nonnegative"));
        }
        if w.texture + w.minutiae > 1.0 + 1e-12 {
            return Err(Error::param("fusion weights must sum to at most 1 so fused scores stay in [0,1]"));
        }
        if !(self.matcher.min_scale > 0.0 && self.matcher.min_scale <= self.matcher.max_scale) {
            return Err(Error::param("matcher scale range is empty"));
        }
        if let WarpSource::File { path } = &self.warp {
            WarpParams::from_json(&std::fs::read_to_string(path)?)?;
        }
        Ok(())
    }

    /// Matching settings with the run seed applied.
    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            matcher: MatchParams {
                seed: self.seed,
                ..self.matcher.clone()
            },
            fusion: self.fusion,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = PipelineConfig::default();
        let back: PipelineConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let partial: PipelineConfig = serde_json::from_str(r#"{"search_k": 50, "warp": {"mode": "estimated"}}"#).unwrap();
        assert_eq!(partial.search_k, 50);
        assert_eq!(partial.canvas, 480);
        partial.validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let mut c = PipelineConfig::default();
        c.target_ridge_period = 40.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.fusion.texture = 0.9;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.warp = WarpSource::File { path: "/nonexistent/warp.json".into() };
        assert!(c.validate().is_err());
    }
}
