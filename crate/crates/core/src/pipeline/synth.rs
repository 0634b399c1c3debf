use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::Result;
use crate::imaging::io::save_gray;
use crate::matcheval::{sample_id, CaptureKind};
use crate::synthetic::{contactless_surrogate, DegradeParams, MasterParams, MasterPrint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub fingers: usize,
    /// Contactless impressions per finger.
    pub contactless: u32,
    /// Contact impressions per finger.
    pub contact: u32,
    pub seed: u64,
}

/// Finger `f` of a synthetic dataset draws from its own stream, so datasets
/// of different sizes share their leading fingers.
pub fn finger_rng(seed: u64, finger: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(finger as u64);
    rng
}

/// Writes PNG renderings of random master prints (contact impressions and
/// contactless surrogates) plus `manifest.jsonl` into `dir`.
pub fn synth_dataset(dir: &Path, spec: &SynthSpec) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let per_finger: Vec<Vec<ManifestEntry>> = (0..spec.fingers)
        .into_par_iter()
        .map(|f| -> Result<Vec<ManifestEntry>> {
            let mut rng = finger_rng(spec.seed, f);
            let master = MasterPrint::random(&mut rng, &MasterParams::default());
            let subject = format!("{f:04}");
            let finger = "R-index";
            let mut out = Vec::new();
            for (kind, count) in [(CaptureKind::Contactless, spec.contactless), (CaptureKind::Contact, spec.contact)] {
                for i in 0..count {
                    let img = match kind {
                        CaptureKind::Contactless => contactless_surrogate(&master, &mut rng, &DegradeParams::default())?.image,
                        CaptureKind::Contact => master.render_contact(&mut rng, 0.03),
                    };
                    let name = format!("{}.png", sample_id(&subject, finger, kind, i));
                    save_gray(&img, dir.join(&name))?;
                    out.push(ManifestEntry {
                        subject_id: subject.clone(),
                        finger_position: finger.to_string(),
                        impression_index: i,
                        capture_kind: kind,
                        image_path: dir.join(name),
                        mask_path: None,
                        device: format!("synthetic-{kind}"),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest::new(per_finger.into_iter().flatten().collect(), true)?;
    manifest.write_jsonl(dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
