use proptest::prelude::*;

use avaface::avatar::{obj_string, parse_obj, HeadRig, MorphWeights, MORPH_COUNT, MORPH_NAMES};
use avaface::eval::{pessimistic_rank, SetResult};
use avaface::features::{
    appearance_descriptor, structure_descriptor, AppearanceDescriptor, FaceTemplate, FilterBank, Patch,
    StructureDescriptor,
};
use avaface::matcher::{identify, FusionWeights, Gallery, MatchConfig, ScoringMode};
use avaface::normalize::{EyeLandmarks, Point, SimilarityTransform};

fn rig() -> &'static HeadRig {
    static RIG: std::sync::OnceLock<HeadRig> = std::sync::OnceLock::new();
    RIG.get_or_init(HeadRig::new)
}

fn template(values: &[f64]) -> FaceTemplate {
    let appearance = values
        .chunks(3)
        .map(|c| AppearanceDescriptor::from_values(c.to_vec()))
        .collect();
    let structure = values
        .chunks(3)
        .map(|c| StructureDescriptor::from_values(c.iter().rev().copied().collect()))
        .collect();
    FaceTemplate::from_patches(appearance, structure).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histograms_sum_to_one(pixels in proptest::collection::vec(any::<u8>(), 16 * 16)) {
        let h = appearance_descriptor(&Patch::new(16, pixels).unwrap());
        prop_assert_eq!(h.histogram().len(), 59);
        prop_assert!((h.histogram().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn structure_unit_norm_and_offset_free(
        pixels in proptest::collection::vec(30u8..=200, 16 * 16),
        offset in -30i16..=55,
    ) {
        let bank = FilterBank::new(16);
        let p = Patch::new(16, pixels).unwrap();
        let s = structure_descriptor(&p, &bank).unwrap();
        prop_assume!(!s.is_degenerate());
        prop_assert!((s.responses().iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= 1e-9);
        let shifted = structure_descriptor(&p.map(|v| (i16::from(v) + offset) as u8), &bank).unwrap();
        for (a, b) in s.responses().iter().zip(shifted.responses()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn ranking_ignores_positive_scaling(
        gallery in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 6), 2..8),
        probe in proptest::collection::vec(0.01f64..1.0, 6),
        alphas in proptest::collection::vec(-6.0f64..6.0, 9),
        concat in any::<bool>(),
    ) {
        let config = MatchConfig {
            weights: FusionWeights::default(),
            mode: if concat { ScoringMode::Concat } else { ScoringMode::PatchMean },
        };
        let mut g = Gallery::new();
        let mut scaled = Gallery::new();
        for (i, v) in gallery.iter().enumerate() {
            g.enroll(format!("s{i}"), template(v)).unwrap();
            scaled.enroll(format!("s{i}"), template(v).scaled(10f64.powf(alphas[i]))).unwrap();
        }
        let p = template(&probe);
        let a = identify(&p, &g, g.len(), &config).unwrap();
        let b = identify(&p.scaled(10f64.powf(alphas[8])), &scaled, g.len(), &config).unwrap();
        // near-ties may legitimately swap by an ulp
        let fused: Vec<f64> = a.ranked.iter().map(|s| s.fused).collect();
        prop_assume!(fused.windows(2).all(|w| w[0] - w[1] > 1e-12));
        let ids = |l: &avaface::matcher::CandidateList| l.ranked.iter().map(|s| s.subject_id.clone()).collect::<Vec<_>>();
        prop_assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn cmc_from_any_ranks_is_valid(gallery in 1usize..30, raw in proptest::collection::vec(1usize..100, 1..50)) {
        let ranks: Vec<usize> = raw.iter().map(|r| 1 + (r - 1) % gallery).collect();
        let s = SetResult::from_ranks("B", &ranks, gallery, 0);
        prop_assert!(s.validate(gallery).is_ok());
        let ones = ranks.iter().filter(|&&r| r == 1).count() as f64 / ranks.len() as f64;
        prop_assert_eq!(s.rank1_accuracy(), Some(ones));
        prop_assert_eq!(s.cmc_at(gallery + 5), Some(1.0));
    }

    #[test]
    fn pessimistic_rank_counts_ties(scores in proptest::collection::vec(0u8..4, 1..12), pick in any::<prop::sample::Index>()) {
        let list: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, &s)| (format!("s{i}"), f64::from(s))).collect();
        let t = pick.index(list.len());
        let rank = pessimistic_rank(&list, &list[t].0).unwrap();
        let higher = list.iter().filter(|(_, s)| *s > list[t].1).count();
        prop_assert!(rank > higher && rank <= list.len());
        prop_assert_eq!(rank, list.iter().filter(|(_, s)| *s >= list[t].1).count());
    }

    #[test]
    fn blendshapes_are_linear(a in proptest::array::uniform8(0.0f64..=1.0), b in proptest::array::uniform8(0.0f64..=0.5)) {
        let rig = rig();
        let sum: [f64; MORPH_COUNT] = std::array::from_fn(|k| a[k] + b[k]);
        let (ma, mb, ms) = (rig.pose(&a), rig.pose(&b), rig.pose(&sum));
        for i in 0..ms.vertices.len() {
            for c in 0..3 {
                let base = rig.base().vertices[i][c];
                let lhs = ms.vertices[i][c] - base;
                let rhs = (ma.vertices[i][c] - base) + (mb.vertices[i][c] - base);
                prop_assert!((lhs - rhs).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn obj_round_trip(w in proptest::array::uniform8(0.0f64..=1.0)) {
        let mesh = rig().pose(&w);
        let back = parse_obj(&obj_string(&mesh)).unwrap();
        prop_assert_eq!(&back.triangles, &mesh.triangles);
        for (p, q) in mesh.vertices.iter().zip(&back.vertices) {
            for c in 0..3 {
                prop_assert!((p[c] - q[c]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn morph_weights_clamp_into_unit_range(name in prop::sample::select(MORPH_NAMES.to_vec()), v in -10.0f64..10.0) {
        let mut w = MorphWeights::uniform(0.5);
        w.set(name, v).unwrap();
        let arr = w.to_array();
        let k = MORPH_NAMES.iter().position(|n| *n == name).unwrap();
        prop_assert_eq!(arr[k], v.clamp(0.0, 1.0));
        prop_assert!(arr.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn alignment_sends_eyes_to_canonical(
        lx in 10.0f64..70.0, ly in 10.0f64..150.0,
        dx in 10.0f64..80.0, dy in -20.0f64..20.0,
    ) {
        let eyes = EyeLandmarks::new(Point { x: lx, y: ly }, Point { x: lx + dx, y: ly + dy });
        let t = SimilarityTransform::between(&eyes, &EyeLandmarks::canonical()).unwrap();
        let c = EyeLandmarks::canonical();
        for (p, q) in [(eyes.left, c.left), (eyes.right, c.right)] {
            let m = t.apply(p);
            prop_assert!((m.x - q.x).abs() < 1e-9 && (m.y - q.y).abs() < 1e-9);
        }
    }
}
