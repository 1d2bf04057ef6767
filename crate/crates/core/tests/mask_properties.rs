use proptest::prelude::*;

use fishlen::maskops::{
    convex_hull, decode_counts_string, encode_counts_string, is_thin, mask_iou, rasterize, skeletonize,
    BinaryMask, RleMask, Segmentation,
};

fn mask(max_side: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<bool>(), w * h)
            .prop_map(move |bits| BinaryMask::from_bits(w, h, bits).unwrap())
    })
}

/// Union of filled ellipses, the kind of shape the thinning is run on.
fn blob() -> impl Strategy<Value = BinaryMask> {
    let ellipse = (4.0..36.0f64, 4.0..36.0f64, 2.0..14.0f64, 2.0..8.0f64, 0.0..std::f64::consts::PI);
    prop::collection::vec(ellipse, 1..4).prop_map(|es| {
        BinaryMask::from_fn(40, 40, |x, y| {
            es.iter().any(|&(cx, cy, a, b, th)| {
                let (s, c) = th.sin_cos();
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            })
        })
        .unwrap()
    })
}

fn same_size_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=16usize, 1..=16usize).prop_flat_map(|(w, h)| {
        let bits = || prop::collection::vec(any::<bool>(), w * h);
        (bits(), bits()).prop_map(move |(a, b)| {
            (BinaryMask::from_bits(w, h, a).unwrap(), BinaryMask::from_bits(w, h, b).unwrap())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rle_round_trip(m in mask(20)) {
        let rle = RleMask::from_mask(&m);
        prop_assert_eq!(rle.area(), m.count());
        prop_assert_eq!(&rle.to_mask(), &m);
        let text = encode_counts_string(rle.counts());
        let counts = decode_counts_string(&text).unwrap();
        let back = RleMask::from_counts(m.width(), m.height(), &counts).unwrap();
        prop_assert_eq!(back, rle);
    }

    #[test]
    fn rasterizing_an_encoded_mask_is_a_fixed_point(m in mask(20)) {
        let seg = Segmentation::from_mask(&m);
        prop_assert_eq!(rasterize(&seg, m.width(), m.height()).unwrap(), m);
    }

    #[test]
    fn iou_is_symmetric((a, b) in same_size_pair()) {
        let ab = mask_iou(&a, &b).unwrap();
        prop_assert_eq!(ab, mask_iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        if !a.is_empty() {
            prop_assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        }
        let (ra, rb) = (RleMask::from_mask(&a), RleMask::from_mask(&b));
        prop_assert_eq!(ra.iou(&rb).unwrap(), ab);
    }

    #[test]
    fn union_and_difference_agree_with_areas((a, b) in same_size_pair()) {
        let (ra, rb) = (RleMask::from_mask(&a), RleMask::from_mask(&b));
        let inter = ra.intersection_area(&rb).unwrap();
        prop_assert_eq!(ra.union(&rb).unwrap().area(), ra.area() + rb.area() - inter);
        prop_assert_eq!(ra.difference(&rb).unwrap().area(), ra.area() - inter);
    }

    #[test]
    fn skeleton_is_an_idempotent_thin_subset(m in blob()) {
        let skel = skeletonize(&m).to_mask();
        prop_assert!(is_thin(&skel));
        prop_assert!(skel.foreground().all(|(x, y)| m.get(x, y)));
        prop_assert_eq!(skeletonize(&skel).to_mask(), skel);
    }

    #[test]
    fn hull_contains_skeleton_and_foreground(m in blob()) {
        let hull = convex_hull(&m).unwrap();
        let skel = skeletonize(&m);
        for &(x, y) in skel.points() {
            prop_assert!(hull.contains((x as f64, y as f64)));
        }
        prop_assert!(m.foreground().all(|(x, y)| hull.contains((x as f64, y as f64))));
    }
}
