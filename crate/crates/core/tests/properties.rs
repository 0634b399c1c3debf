use proptest::prelude::*;

use ridgebridge::matcheval::{
    eer, fuse_scores, gen_protocol, roc, tar_at_far, CaptureKind, FusionWeights, ImposterRule, SampleInfo, ScoreSet,
    Template,
};
use ridgebridge::minutiae::{Minutia, MinutiaKind, MinutiaeSet};
use ridgebridge::representation::{texture_similarity, Embedding};

fn samples(shape: &[(u32, u32)]) -> Vec<SampleInfo> {
    let mut v = Vec::new();
    for (f, (cl, c)) in shape.iter().enumerate() {
        for (kind, n) in [(CaptureKind::Contactless, *cl), (CaptureKind::Contact, *c)] {
            for i in 0..n {
                v.push(SampleInfo {
                    subject_id: f.to_string(),
                    finger_position: "L-thumb".into(),
                    impression_index: i,
                    capture_kind: kind,
                    id: format!("{f}-{kind:?}-{i}"),
                });
            }
        }
    }
    v
}

proptest! {
    #[test]
    fn protocol_counts_match_closed_form(shape in prop::collection::vec((1u32..5, 1u32..5), 1..8)) {
        let full = gen_protocol(&samples(&shape), ImposterRule::FullCross).unwrap();
        let genuine: u64 = shape.iter().map(|(a, b)| (*a * *b) as u64).sum();
        let cl: u64 = shape.iter().map(|s| s.0 as u64).sum();
        let c: u64 = shape.iter().map(|s| s.1 as u64).sum();
        prop_assert_eq!(full.genuine_count(), genuine);
        prop_assert_eq!(full.genuine_count() + full.imposter_count(), cl * c);
        prop_assert_eq!(full.pairs().count() as u64, cl * c);
        let first = gen_protocol(&samples(&shape), ImposterRule::FirstImpression).unwrap();
        let f = shape.len() as u64;
        prop_assert_eq!(first.imposter_count(), f * (f - 1));
    }

    #[test]
    fn fused_score_stays_in_unit_interval(s_t in 0.0..=1.0f64, s_m in 0.0..=1.0f64, wt in 0.0..=1.0f64, frac in 0.0..=1.0f64) {
        let w = FusionWeights { texture: wt, minutiae: (1.0 - wt) * frac };
        let f = fuse_scores(s_t, s_m, w).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(f <= s_t.max(s_m) + 1e-12);
    }

    #[test]
    fn curve_metrics_are_consistent(
        g in prop::collection::vec(0.0..=1.0f64, 1..60),
        i in prop::collection::vec(0.0..=1.0f64, 1..60),
    ) {
        let s = ScoreSet::new(g, i).unwrap();
        let e = eer(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        let pts = roc(&s).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].far >= w[0].far && w[1].tar >= w[0].tar && w[1].threshold < w[0].threshold);
        }
        let mut prev = 0.0;
        for far in [1e-3, 1e-2, 1e-1, 0.5] {
            let t = tar_at_far(&s, far).unwrap();
            prop_assert!(t.far <= far && t.tar >= prev);
            prev = t.tar;
        }
    }

    #[test]
    fn template_bytes_round_trip(
        emb in prop::collection::vec(-1.0..1.0f64, 512),
        pts in prop::collection::vec((0.0..480.0f64, 0.0..480.0f64, 0.0..6.28f64, any::<bool>(), 0.0..=1.0f64), 0..40),
        imp in 0u32..20,
    ) {
        prop_assume!(emb.iter().any(|v| v.abs() > 1e-3));
        let m = pts
            .into_iter()
            .map(|(x, y, t, b, q)| Minutia::new(x, y, t, if b { MinutiaKind::Bifurcation } else { MinutiaKind::Ending }, q))
            .collect();
        let t = Template::new(
            "s1".to_string(),
            "R-ring",
            imp,
            CaptureKind::Contactless,
            Embedding::unit(emb).unwrap(),
            MinutiaeSet::new(m, (480, 480)),
            "dev",
        )
        .unwrap();
        let back = Template::from_bytes(&t.to_bytes()).unwrap();
        prop_assert_eq!(&back, &t);
        let sim = texture_similarity(&t.embedding, &back.embedding).unwrap();
        prop_assert!((sim - 1.0).abs() < 1e-9);
    }
}
