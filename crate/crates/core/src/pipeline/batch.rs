use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, WarpSource};
use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::geometry::{estimate_ridge_period, warp_source_coords, AffineParams, TpsField, WarpParams, DEFAULT_GRID, DEFAULT_PERIOD_BLOCK};
use crate::imaging::io::{load_gray, load_mask};
use crate::imaging::{apply_mask, clahe, invert, resize_pad, Image, PadRecord};
use crate::matcheval::{CaptureKind, Template};
use crate::minutiae::extract_minutiae;
use crate::representation::texture_from_analysis;
use crate::segmentation::{segment_distal, Mask};

/// Output of [`preprocess_one`] with every applied parameter.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub image: Image<f64>,
    pub warp: WarpParams,
    pub mask: Mask,
    pub pad: Option<PadRecord>,
    /// Ridge period measured before scaling, when estimated.
    pub period: Option<f64>,
    pub warnings: Vec<String>,
}

fn mask_to_image(m: &Mask) -> Image<f64> {
    let (w, h) = m.dims();
    Image::from_fn(w, h, |x, y| if m.get(x, y) { 1.0 } else { 0.0 })
}

/// Segment, mask, contrast-equalize, pad onto the canvas, invert, then
/// scale and spline-warp in a single resampling. Background ends up white
/// (1.0), like a contact impression.
pub fn preprocess_one(img: &Image<f64>, mask: Option<&Mask>, cfg: &PipelineConfig) -> Result<Preprocessed> {
    let (w, h) = img.dims();
    if cfg.skip_preprocess {
        return Ok(Preprocessed {
            image: img.clone(),
            warp: WarpParams::identity(w, h),
            mask: Mask::filled(w, h, true),
            pad: None,
            period: None,
            warnings: Vec::new(),
        });
    }
    let mut warnings = Vec::new();
    let mask = match mask {
        Some(m) => m.clone(),
        None => {
            let seg = segment_distal(img, &cfg.segment)?;
            if seg.low_confidence {
                warnings.push(format!("segmentation coverage {:.3} outside plausible range", seg.mask.coverage()));
            }
            seg.mask
        }
    };
    let equalized = clahe(&apply_mask(img, &mask)?, &cfg.clahe)?;
    let (canvas, pad) = resize_pad(&equalized, cfg.canvas)?;
    let (mask_canvas, _) = resize_pad(&mask_to_image(&mask), cfg.canvas)?;
    let n = cfg.canvas;
    let inside = |v: f64| v >= 0.5;
    let inv = invert(&canvas);
    let flat = Image::from_fn(n, n, |x, y| if inside(mask_canvas.get(x, y)) { inv.get(x, y) } else { 1.0 });

    let (affine, field, period) = match &cfg.warp {
        WarpSource::Estimated { tps_file } => {
            let est = estimate_ridge_period(&flat, DEFAULT_PERIOD_BLOCK)?;
            let affine = AffineParams::scale(cfg.target_ridge_period / est.period)?;
            let field = match tps_file {
                Some(p) => {
                    let f: TpsField<f64> = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                    f.validate(n, n)?;
                    f
                }
                None => TpsField::lattice(DEFAULT_GRID, n, n),
            };
            (affine, field, Some(est.period))
        }
        WarpSource::File { path } => {
            let wp = WarpParams::from_json(&std::fs::read_to_string(path)?)?;
            if (wp.width, wp.height) != (n, n) {
                return Err(Error::DimensionMismatch {
                    expected: (n, n),
                    actual: (wp.width, wp.height),
                });
            }
            (wp.affine()?, wp.field()?, None)
        }
    };
    let coords = warp_source_coords(n, n, &affine, Some(&field))?;
    let mut bits = Vec::with_capacity(n * n);
    let mut pixels = Vec::with_capacity(n * n);
    for c in &coords {
        let m = inside(mask_canvas.sample_bilinear(c[0], c[1]));
        bits.push(m);
        pixels.push(if m { flat.sample_bilinear(c[0], c[1]) } else { 1.0 });
    }
    Ok(Preprocessed {
        image: Image::new(n, n, pixels)?.with_ppi(Some(500.0)),
        warp: WarpParams::new(&affine, &field, n, n),
        mask: Mask::new(n, n, bits)?,
        pad: Some(pad),
        period,
        warnings,
    })
}

/// Minutiae and texture embedding of a preprocessed image.
pub fn extract_one(img: &Image<f64>, entry: &ManifestEntry, cfg: &PipelineConfig) -> Result<Template> {
    let ex = extract_minutiae(img, &cfg.extract);
    let embedding = texture_from_analysis(ex.analysis.as_ref(), img, &cfg.texture);
    let mut t = Template::new(
        entry.subject_id.clone(),
        entry.finger_position.clone(),
        entry.impression_index,
        entry.capture_kind,
        embedding,
        ex.minutiae,
        entry.device.clone(),
    )?;
    if ex.no_ridge_structure {
        t.warnings.push("no ridge structure".into());
    } else if t.minutiae.is_empty() {
        t.warnings.push("no minutiae found".into());
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchResult {
    pub templates: BTreeMap<String, Template>,
    pub failures: Vec<FailureRecord>,
}

impl BatchResult {
    pub fn processed(&self) -> usize {
        self.templates.len()
    }
}

pub fn load_entry_image(entry: &ManifestEntry) -> Result<(Image<f64>, Option<Mask>)> {
    let img = load_gray(&entry.image_path)?;
    let mask = match &entry.mask_path {
        Some(p) => {
            let m = load_mask(p)?;
            if m.dims() != img.dims() {
                return Err(Error::DimensionMismatch {
                    expected: img.dims(),
                    actual: m.dims(),
                });
            }
            Some(m)
        }
        None => None,
    };
    Ok((img, mask))
}

fn process_entry(entry: &ManifestEntry, cfg: &PipelineConfig) -> std::result::Result<Template, FailureRecord> {
    let fail = |stage: &str, e: Error| FailureRecord {
        id: entry.id(),
        stage: stage.to_string(),
        message: e.to_string(),
    };
    let (img, mask) = load_entry_image(entry).map_err(|e| fail("load", e))?;
    let contact_passthrough = entry.capture_kind == CaptureKind::Contact && !cfg.preprocess_contact;
    let (image, warnings) = if contact_passthrough || cfg.skip_preprocess {
        (img, Vec::new())
    } else {
        let p = preprocess_one(&img, mask.as_ref(), cfg).map_err(|e| fail("preprocess", e))?;
        (p.image, p.warnings)
    };
    let mut t = extract_one(&image, entry, cfg).map_err(|e| fail("extract", e))?;
    t.warnings.splice(0..0, warnings);
    Ok(t)
}

/// Preprocesses and extracts every manifest entry in parallel. Per-entry
/// failures are recorded, never fatal; templates and failures together
/// account for every entry.
pub fn build_templates(manifest: &DatasetManifest, cfg: &PipelineConfig) -> BatchResult {
    let results: Vec<_> = manifest.entries.par_iter().map(|e| process_entry(e, cfg)).collect();
    let mut out = BatchResult::default();
    for r in results {
        match r {
            Ok(t) => {
                out.templates.insert(t.id(), t);
            }
            Err(f) => {
                log::warn!("{} failed at {}: {}", f.id, f.stage, f.message);
                out.failures.push(f);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::iou;
    use crate::synthetic::{contactless_surrogate, DegradeParams, MasterParams, MasterPrint};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(kind: CaptureKind) -> ManifestEntry {
        ManifestEntry {
            subject_id: "s".into(),
            finger_position: "R-index".into(),
            impression_index: 0,
            capture_kind: kind,
            image_path: "unused.png".into(),
            mask_path: None,
            device: "synthetic".into(),
        }
    }

    #[test]
    fn contactless_stages_are_applied() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = MasterPrint::random(&mut rng, &MasterParams::default());
        let cl = contactless_surrogate(&m, &mut rng, &DegradeParams::default()).unwrap();
        let cfg = PipelineConfig::default();
        let p = preprocess_one(&cl.image, None, &cfg).unwrap();
        assert_eq!(p.image.dims(), (480, 480));
        assert_eq!(p.image.ppi(), Some(500.0));
        // the applied scale undoes the surrogate's scale up to the period ratio
        let expect = cfg.target_ridge_period / (m.period * cl.warp.s);
        assert!((p.warp.s / expect - 1.0).abs() < 0.12, "{} vs {}", p.warp.s, expect);
        // background is white, ridges dark after inversion
        for (v, b) in p.image.pixels().iter().zip(p.mask.bits()) {
            if !*b {
                assert_eq!(*v, 1.0);
            }
        }
        let est = estimate_ridge_period(&p.image, DEFAULT_PERIOD_BLOCK).unwrap();
        assert!((est.period - 9.0).abs() < 1.0, "{}", est.period);
        let wp = WarpParams::from_json(&p.warp.to_json().unwrap()).unwrap();
        assert_eq!(wp, p.warp);
        // supplying the true mask gives the same geometry as segmentation
        let q = preprocess_one(&cl.image, Some(&cl.mask), &cfg).unwrap();
        assert!(iou(&q.mask, &p.mask).unwrap() > 0.95);
    }

    #[test]
    fn skip_preprocess_is_identity() {
        let img = Image::from_fn(50, 40, |x, y| ((x + y) % 7) as f64 / 7.0);
        let cfg = PipelineConfig {
            skip_preprocess: true,
            ..PipelineConfig::default()
        };
        let p = preprocess_one(&img, None, &cfg).unwrap();
        assert_eq!(p.image, img);
        assert_eq!(p.warp, WarpParams::identity(50, 40));
    }

    #[test]
    fn extraction_is_deterministic_and_flags_blank_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = MasterPrint::random(&mut rng, &MasterParams::default());
        let img = m.render_contact(&mut rng, 0.03);
        let cfg = PipelineConfig::default();
        let e = entry(CaptureKind::Contact);
        let a = extract_one(&img, &e, &cfg).unwrap();
        let b = extract_one(&img, &e, &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert!(!a.minutiae.is_empty());
        assert!((a.embedding.norm() - 1.0).abs() < 1e-9);
        assert!(a.embedding.informative);
        let blank = extract_one(&Image::filled(480, 480, 1.0), &e, &cfg).unwrap();
        assert!(blank.minutiae.is_empty());
        assert!(!blank.embedding.informative);
        assert!(!blank.warnings.is_empty());
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.png");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = MasterPrint::random(&mut rng, &MasterParams::default());
        crate::imaging::io::save_gray(&m.render_contact(&mut rng, 0.03), &good).unwrap();
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, b"not a png").unwrap();
        let mut e1 = entry(CaptureKind::Contact);
        e1.image_path = good;
        let mut e2 = entry(CaptureKind::Contactless);
        e2.image_path = bad;
        let manifest = DatasetManifest::new(vec![e1, e2], true).unwrap();
        let r = build_templates(&manifest, &PipelineConfig::default());
        assert_eq!(r.processed() + r.failures.len(), manifest.len());
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].stage, "load");
    }
}
