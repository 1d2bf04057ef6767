use proptest::prelude::*;

use fishlen::geometry::{calibrate_planar, CalibrationOptions};
use fishlen::maskops::convex_hull;
use fishlen::synth::{generate_calibration_views, SynthCamera, SynthFishSpec, WidthProfile};

fn fish() -> impl Strategy<Value = SynthFishSpec> {
    (
        150.0..600.0f64,
        -0.02..0.02f64,
        -0.008..0.008f64,
        any::<bool>(),
        (-50.0..50.0f64, -50.0..50.0f64),
        0.0..std::f64::consts::TAU,
    )
        .prop_map(|(len, sag, bend, fork, (cx, cy), angle)| {
            SynthFishSpec::new(7, len, sag, bend, WidthProfile::for_length(len, fork), [cx, cy], angle).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hull_of_the_rendered_mask_holds_the_spine(f in fish()) {
        let camera = SynthCamera::default();
        let model = camera.model().unwrap();
        let [w, h] = camera.image_size;
        let rle = f.render(&model, w, h).unwrap();
        let (crop, (ox, oy)) = rle.to_cropped_mask(0).unwrap();
        let hull = convex_hull(&crop).unwrap();
        // the tips taper to zero width, so only interior samples are checked
        let n = 200;
        for b in &f.spine_belt_points(n)[2..=n - 2] {
            let p = model.belt_to_pixel(*b).unwrap();
            prop_assert!(hull.contains((p[0] - ox as f64, p[1] - oy as f64)), "{p:?} outside");
        }
    }

    #[test]
    fn quadrature_matches_a_dense_polyline(f in fish()) {
        let dense = f.polyline_length(200_000);
        prop_assert!((f.true_length_mm - dense).abs() < 1e-4 * dense);
    }
}

#[test]
fn one_corrupted_corner_inflates_the_refined_error() {
    let camera = SynthCamera::default();
    for (seed, noise) in [(1, 0.0), (2, 0.0), (3, 0.05), (4, 0.05)] {
        let mut file = generate_calibration_views(&camera, 20, seed, noise).unwrap();
        let clean = calibrate_planar(&file.views, &CalibrationOptions::default()).unwrap();
        file.views[7].correspondences[30].image_xy[0] += 50.0;
        let dirty = calibrate_planar(&file.views, &CalibrationOptions::default()).unwrap();
        assert!(
            dirty.rms_refined_px >= 10.0 * clean.rms_refined_px,
            "seed {seed}: {} vs clean {}",
            dirty.rms_refined_px,
            clean.rms_refined_px
        );
    }
}
