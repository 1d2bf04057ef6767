use nalgebra::Matrix3;
use proptest::prelude::*;

use fishlen::geometry::{estimate_homography, CameraModel, Distortion, Homography, Intrinsics, PointPair};

fn homography() -> impl Strategy<Value = Matrix3<f64>> {
    (
        0.5..2.0f64,
        -0.5..0.5f64,
        -200.0..200.0f64,
        -0.5..0.5f64,
        0.5..2.0f64,
        -200.0..200.0f64,
        -1e-3..1e-3f64,
        -1e-3..1e-3f64,
    )
        .prop_map(|(a, b, c, d, e, f, g, h)| Matrix3::new(a, b, c, d, e, f, g, h, 1.0))
}

fn similarity() -> impl Strategy<Value = Matrix3<f64>> {
    (0.2..5.0f64, -3.2..3.2f64, -500.0..500.0f64, -500.0..500.0f64).prop_map(|(s, th, tx, ty)| {
        let (sn, cs) = th.sin_cos();
        Matrix3::new(s * cs, -s * sn, tx, s * sn, s * cs, ty, 0.0, 0.0, 1.0)
    })
}

fn apply(m: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let v = m * nalgebra::Vector3::new(p[0], p[1], 1.0);
    [v.x / v.z, v.y / v.z]
}

fn normalized(m: &Matrix3<f64>) -> Matrix3<f64> {
    let n = m / m.norm();
    if n[(2, 2)] < 0.0 {
        -n
    } else {
        n
    }
}

fn points() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0..1000.0f64, 0.0..1000.0f64).prop_map(|(x, y)| [x, y]), 8..24)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimation_is_similarity_equivariant(
        h in homography(),
        pre in similarity(),
        post in similarity(),
        src in points(),
    ) {
        let pairs: Vec<PointPair> = src.iter().map(|&p| PointPair::new(p, apply(&h, p))).collect();
        let base = *estimate_homography(&pairs).unwrap().homography.matrix();
        // (pre src) -> (post dst) is fitted by post * H * pre^-1
        let pre_inv = pre.try_inverse().unwrap();
        let moved: Vec<PointPair> = pairs
            .iter()
            .map(|p| PointPair::new(apply(&pre, p.src), apply(&post, p.dst)))
            .collect();
        let est = *estimate_homography(&moved).unwrap().homography.matrix();
        let expected = post * base * pre_inv;
        let err = (normalized(&est) - normalized(&expected)).norm();
        prop_assert!(err <= 1e-9, "error {err:e}");
    }

    #[test]
    fn undistort_inverts_distort(
        k1 in -0.25..0.05f64,
        k2 in -0.05..0.05f64,
        p1 in -1e-3..1e-3f64,
        p2 in -1e-3..1e-3f64,
        x in 0.0..2464.0f64,
        y in 0.0..2056.0f64,
    ) {
        let camera = CameraModel::new(
            Intrinsics::new(3696.0, 3696.0, 1231.5, 1027.5),
            Distortion { k1, k2, k3: 0.0, p1, p2 },
            Homography::identity(),
        )
        .unwrap();
        let d = camera.distort_pixel([x, y]);
        let u = camera.undistort_point(d).unwrap();
        prop_assert!((u[0] - x).hypot(u[1] - y) < 1e-6);
    }
}
