//! Mean wall-clock per stage over a few synthetic fingers.

use std::time::Instant;

use ridgebridge::matcheval::{pair_scores, CaptureKind};
use ridgebridge::pipeline::{extract_one, finger_rng, preprocess_one, ManifestEntry, PipelineConfig};
use ridgebridge::synthetic::{contactless_surrogate, DegradeParams, MasterParams, MasterPrint};

fn main() {
    let cfg = PipelineConfig::default();
    let entry = |kind| ManifestEntry {
        subject_id: "s".into(),
        finger_position: "R-index".into(),
        impression_index: 0,
        capture_kind: kind,
        image_path: "x".into(),
        mask_path: None,
        device: String::new(),
    };
    let n = 10;
    let (mut tr, mut tc, mut tp, mut te) = (0.0, 0.0, 0.0, 0.0);
    let mut cts = vec![];
    let mut cls = vec![];
    for f in 0..n {
        let mut rng = finger_rng(1, f);
        let t = Instant::now();
        let m = MasterPrint::random(&mut rng, &MasterParams::default());
        let contact = m.render_contact(&mut rng, 0.03);
        let cl = contactless_surrogate(&m, &mut rng, &DegradeParams::default()).unwrap();
        tr += t.elapsed().as_secs_f64();
        let t = Instant::now();
        cts.push(extract_one(&contact, &entry(CaptureKind::Contact), &cfg).unwrap());
        tc += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let p = preprocess_one(&cl.image, None, &cfg).unwrap();
        tp += t.elapsed().as_secs_f64();
        let t = Instant::now();
        cls.push(extract_one(&p.image, &entry(CaptureKind::Contactless), &cfg).unwrap());
        te += t.elapsed().as_secs_f64();
    }
    let sc = cfg.search_config();
    let t = Instant::now();
    let mut k = 0;
    for a in &cls {
        for b in &cts {
            pair_scores(a, b, &sc).unwrap();
            k += 1;
        }
    }
    let tm = t.elapsed().as_secs_f64() / k as f64;
    let nf = n as f64;
    println!("render {:.3}s contact-extract {:.3}s preprocess {:.3}s cl-extract {:.3}s pair {:.2}ms", tr / nf, tc / nf, tp / nf, te / nf, tm * 1e3);
}
