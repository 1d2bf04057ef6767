use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fishlen::dataset::{Category, GtInstance, Prediction};
use fishlen::evallen::{aggregation_curve, length_report, FishSamples, LengthPair, LengthUnit};
use fishlen::evalseg::{coco_thresholds, evaluate_segmentation, SegReport};
use fishlen::maskops::{BinaryMask, RleMask};

const SIDE: usize = 16;

fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> RleMask {
    RleMask::from_mask(
        &BinaryMask::from_fn(SIDE, SIDE, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y)).unwrap(),
    )
}

struct Scene {
    gts: Vec<GtInstance>,
    preds: Vec<Prediction>,
    categories: Vec<Category>,
}

/// Ground truths are disjoint 4x4 tiles; predictions are jittered copies and
/// strays with coarse scores.
fn scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categories = vec![
        Category { id: 1, name: "a".into() },
        Category { id: 2, name: "b".into() },
    ];
    let mut gts = Vec::new();
    let mut preds: Vec<Prediction> = Vec::new();
    for image_id in 1..=3u64 {
        let mut tiles: Vec<(usize, usize)> = (0..4).flat_map(|i| (0..4).map(move |j| (4 * i, 4 * j))).collect();
        for _ in 0..rng.random_range(0..5) {
            let (x, y) = tiles.swap_remove(rng.random_range(0..tiles.len()));
            let category_id = rng.random_range(1..=2);
            gts.push(GtInstance {
                annotation_id: gts.len() as u64 + 1,
                image_id,
                category_id,
                fish_id: gts.len() as u64 + 1,
                length_mm: 100,
                mask: rect(x, y, x + 4, y + 4),
            });
            for _ in 0..rng.random_range(0..3) {
                let dx = rng.random_range(0..=1);
                let dy = rng.random_range(0..=1);
                preds.push(Prediction {
                    index: preds.len(),
                    image_id,
                    category_id,
                    mask: rect(x + dx, y + dy, (x + 4 + dx).min(SIDE), (y + 4).min(SIDE)),
                    score: rng.random_range(1..=10) as f64 / 10.0,
                    length_mm: None,
                });
            }
        }
        for _ in 0..rng.random_range(0..3) {
            let x = rng.random_range(0..SIDE - 3);
            let y = rng.random_range(0..SIDE - 3);
            preds.push(Prediction {
                index: preds.len(),
                image_id,
                category_id: rng.random_range(1..=2),
                mask: rect(x, y, x + 3, y + 3),
                score: rng.random_range(1..=10) as f64 / 10.0,
                length_mm: None,
            });
        }
    }
    Scene { gts, preds, categories }
}

fn evaluate(s: &Scene, preds: &[Prediction]) -> SegReport {
    evaluate_segmentation(preds, &s.gts, &s.categories, &coco_thresholds()).unwrap()
}

fn pairs() -> impl Strategy<Value = Vec<LengthPair>> {
    prop::collection::vec((1u64..50, 100.0..600.0f64, -30.0..30.0f64), 1..60).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (fish_id, truth, err))| LengthPair {
                image_id: i as u64,
                fish_id,
                estimate: truth + err,
                truth,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn ap_never_rises_with_the_threshold(seed in any::<u64>()) {
        let s = scene(seed);
        let r = evaluate(&s, &s.preds);
        for c in &r.classes {
            prop_assert!(c.ap.windows(2).all(|w| w[1] <= w[0]), "{:?}", c.ap);
            prop_assert!(c.ap.iter().all(|a| (0.0..=1.0).contains(a)));
        }
    }

    #[test]
    fn increasing_score_maps_leave_ap_unchanged(seed in any::<u64>(), power in 0.2..5.0f64) {
        let s = scene(seed);
        let base = evaluate(&s, &s.preds);
        let remapped: Vec<Prediction> = s
            .preds
            .iter()
            .map(|p| Prediction { score: p.score.powf(power), ..p.clone() })
            .collect();
        let r = evaluate(&s, &remapped);
        prop_assert_eq!(r.classes, base.classes);
        prop_assert_eq!(r.map, base.map);
        prop_assert_eq!(r.diagnostics.matched, base.diagnostics.matched);
        prop_assert_eq!(r.diagnostics.mean_matched_iou, base.diagnostics.mean_matched_iou);
    }

    #[test]
    fn lower_scored_duplicate_of_a_perfect_match_never_raises_ap(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let s = scene(seed);
        prop_assume!(!s.gts.is_empty());
        let g = &s.gts[pick.index(s.gts.len())];
        let mut preds = s.preds.clone();
        let perfect = Prediction {
            index: preds.len(),
            image_id: g.image_id,
            category_id: g.category_id,
            mask: g.mask.clone(),
            score: 1.0,
            length_mm: None,
        };
        preds.push(perfect.clone());
        let base = evaluate(&s, &preds);
        preds.push(Prediction { index: preds.len(), score: 0.05, ..perfect });
        let dup = evaluate(&s, &preds);
        for (a, b) in dup.classes.iter().zip(&base.classes) {
            for (x, y) in a.ap.iter().zip(&b.ap) {
                prop_assert!(x <= y, "{x} > {y}");
            }
        }
    }

    #[test]
    fn length_report_ignores_pair_order(p in pairs(), seed in any::<u64>()) {
        let mut shuffled = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = length_report(&p, LengthUnit::Mm, 5.0, 0.5).unwrap();
        let b = length_report(&shuffled, LengthUnit::Mm, 5.0, 0.5).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn centimetre_inputs_give_the_same_report(p in pairs()) {
        let cm: Vec<LengthPair> = p
            .iter()
            .map(|q| LengthPair { estimate: q.estimate / 10.0, truth: q.truth / 10.0, ..*q })
            .collect();
        let a = length_report(&p, LengthUnit::Mm, 5.0, 0.5).unwrap();
        let b = length_report(&cm, LengthUnit::Cm, 5.0, 0.5).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn fish_with_noise(seed: u64, noise: impl Fn(&mut ChaCha8Rng) -> f64) -> BTreeMap<u64, FishSamples> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..120u64)
        .map(|id| {
            let truth = rng.random_range(150.0..600.0);
            let estimates = (0..6).map(|_| truth + noise(&mut rng)).collect();
            (id, FishSamples { truth, estimates })
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn aggregation_is_reproducible(seed in any::<u64>(), curve_seed in any::<u64>()) {
        let fish = fish_with_noise(seed, |r| r.random_range(-20.0..20.0));
        let a = aggregation_curve(&fish, LengthUnit::Mm, &[1, 2, 3, 5], 50, curve_seed).unwrap();
        let b = aggregation_curve(&fish, LengthUnit::Mm, &[1, 2, 3, 5], 50, curve_seed).unwrap();
        prop_assert_eq!(a, b);
    }

    /// Symmetric zero-mean noise (uniform, Gaussian-like or Laplace): the median
    /// of three is no worse than one draw, at 99% one-sided confidence.
    #[test]
    fn median_of_three_beats_one_draw(seed in any::<u64>(), kind in 0..3u8, scale in 2.0..20.0f64) {
        let noise = move |r: &mut ChaCha8Rng| -> f64 {
            match kind {
                0 => r.random_range(-scale..scale),
                1 => (0..12).map(|_| r.random_range(-0.5..0.5)).sum::<f64>() * scale,
                _ => {
                    let u: f64 = r.random_range(-0.5..0.5);
                    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                }
            }
        };
        let fish = fish_with_noise(seed, noise);
        let trials = 200;
        let c = aggregation_curve(&fish, LengthUnit::Mm, &[1, 3], trials, seed ^ 1).unwrap();
        let se = (c.std_cm[0].powi(2) + c.std_cm[1].powi(2)).sqrt() / (trials as f64).sqrt();
        prop_assert!(c.mae_cm[1] <= c.mae_cm[0] + 2.33 * se, "{:?}", c.mae_cm);
    }
}
