use nalgebra::Matrix3;
use proptest::prelude::*;

use fishlen::geometry::{CameraModel, Homography};
use fishlen::length::measure_mask;
use fishlen::maskops::BinaryMask;
use fishlen::synth::{SynthFishSpec, WidthProfile};

const SCALE: f64 = 0.406;
const SIDE: usize = 1600;

fn planar(m: Matrix3<f64>) -> CameraModel {
    CameraModel::planar(Homography::from_matrix(m).unwrap())
}

/// A synthetic fish rendered under a pure scaling, cropped to its content.
fn fish_mask() -> impl Strategy<Value = BinaryMask> {
    (150.0..600.0f64, -0.02..0.02f64, -0.008..0.008f64, any::<bool>(), 0.0..std::f64::consts::TAU).prop_map(
        |(len, sag, bend, fork, angle)| {
            let c = 0.5 * SIDE as f64 * SCALE;
            let fish = SynthFishSpec::new(1, len, sag, bend, WidthProfile::for_length(len, fork), [c, c], angle)
                .unwrap();
            let rle = fish.render(&planar(scaling(SCALE)), SIDE, SIDE).unwrap();
            rle.to_cropped_mask(2).unwrap().0
        },
    )
}

fn scaling(s: f64) -> Matrix3<f64> {
    Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0)
}

fn length(mask: &BinaryMask, m: Matrix3<f64>, step: f64) -> f64 {
    measure_mask(mask, (0, 0), &planar(m), step).unwrap().1.length_mm
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lengths_scale_with_the_plane_map(mask in fish_mask(), s in 0.05..20.0f64) {
        let base = length(&mask, scaling(SCALE), 1.0);
        let scaled = length(&mask, scaling(SCALE * s), 1.0);
        prop_assert!((scaled - s * base).abs() <= 1e-12 * s * base);
    }

    #[test]
    fn quarter_turn_with_compensating_map_is_stable(mask in fish_mask()) {
        let base = length(&mask, scaling(SCALE), 1.0);
        // rotate90 sends (x, y) to (y, w - 1 - x); undo it before the scaling
        let w = mask.width() as f64;
        let undo = Matrix3::new(0.0, -1.0, w - 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let turned = length(&mask.rotate90(), scaling(SCALE) * undo, 1.0);
        prop_assert!((turned - base).abs() < 0.005 * base, "{base} vs {turned}");
    }

    #[test]
    fn halving_the_step_barely_moves_the_estimate(mask in fish_mask()) {
        let a = length(&mask, scaling(SCALE), 1.0);
        let b = length(&mask, scaling(SCALE), 0.5);
        prop_assert!((a - b).abs() < 1e-3 * a, "{a} vs {b}");
    }
}
