use std::collections::BTreeSet;

use proptest::prelude::*;

use fishlen::dataset::{
    select, AnnotationAttributes, CocoAnnotation, CocoCategory, CocoFile, CocoImage, DatasetIndex,
    ImageAttributes, LoadOptions, Regime, Selection, SetKind,
};
use fishlen::maskops::{BinaryMask, Segmentation};

const W: usize = 10;
const H: usize = 8;

#[derive(Debug, Clone)]
struct ImageSpec {
    group: u32,
    set: SetKind,
    /// `(x0, y0, x1, y1, as_polygon)` per annotation.
    boxes: Vec<(usize, usize, usize, usize, bool)>,
}

fn set_kind() -> impl Strategy<Value = SetKind> {
    prop_oneof![Just(SetKind::Set1), Just(SetKind::Set2), Just(SetKind::All)]
}

fn image_spec() -> impl Strategy<Value = ImageSpec> {
    let rect = (0..W - 1, 0..H - 1, 1..W, 1..H, any::<bool>())
        .prop_map(|(x0, y0, dx, dy, poly)| (x0, y0, (x0 + dx).min(W), (y0 + dy).min(H), poly));
    (1..=5u32, set_kind(), prop::collection::vec(rect, 0..4)).prop_map(|(group, set, boxes)| ImageSpec {
        group,
        set,
        boxes,
    })
}

fn regime() -> impl Strategy<Value = Regime> {
    prop_oneof![Just(Regime::Separated), Just(Regime::Touching), Just(Regime::Combined)]
}

fn build(images: &[ImageSpec]) -> DatasetIndex {
    let mut file = CocoFile {
        categories: vec![CocoCategory {
            id: 1,
            name: "fish".into(),
            supercategory: None,
        }],
        ..CocoFile::default()
    };
    let mut ann_id = 0;
    for (i, spec) in images.iter().enumerate() {
        let image_id = i as u64 + 1;
        file.images.push(CocoImage {
            id: image_id,
            file_name: format!("{image_id}.png"),
            width: W,
            height: H,
            attributes: Some(ImageAttributes {
                group: spec.group,
                set: spec.set,
            }),
        });
        for &(x0, y0, x1, y1, poly) in &spec.boxes {
            ann_id += 1;
            let segmentation = if poly {
                let (a, b, c, d) = (x0 as f64, y0 as f64, x1 as f64, y1 as f64);
                Segmentation::Polygons(vec![vec![a, b, c, b, c, d, a, d]])
            } else {
                Segmentation::from_mask(
                    &BinaryMask::from_fn(W, H, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y)).unwrap(),
                )
            };
            file.annotations.push(CocoAnnotation {
                id: ann_id,
                image_id,
                category_id: 1,
                segmentation,
                area: None,
                bbox: None,
                iscrowd: 0,
                attributes: Some(AnnotationAttributes {
                    fish_id: 1000 * spec.group as u64 + ann_id,
                    length_mm: 300,
                }),
            });
        }
    }
    DatasetIndex::from_coco(file, &LoadOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn select_is_idempotent(
        images in prop::collection::vec(image_spec(), 1..20),
        pick in prop::collection::vec(any::<bool>(), 5),
        regime in regime(),
    ) {
        let index = build(&images);
        let groups: BTreeSet<u32> = index
            .groups()
            .keys()
            .copied()
            .filter(|g| pick[*g as usize - 1])
            .collect();
        let sel = Selection::groups(groups, regime);
        let once = select(&index, &sel).unwrap();
        let twice = select(&once, &sel).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn regimes_partition_the_images(
        images in prop::collection::vec(image_spec(), 1..20),
        pick in prop::collection::vec(any::<bool>(), 5),
    ) {
        let index = build(&images);
        let groups: Vec<u32> = index
            .groups()
            .keys()
            .copied()
            .filter(|g| pick[*g as usize - 1])
            .collect();
        let count = |r| select(&index, &Selection::groups(groups.clone(), r)).unwrap().images().len();
        prop_assert_eq!(
            count(Regime::Separated) + count(Regime::Touching),
            count(Regime::Combined)
        );
    }

    #[test]
    fn decode_then_encode_is_mask_identical(images in prop::collection::vec(image_spec(), 1..12)) {
        let index = build(&images);
        let again = DatasetIndex::from_coco(index.to_coco(), &LoadOptions::default()).unwrap();
        prop_assert_eq!(index.instances().len(), again.instances().len());
        for (a, b) in index.instances().iter().zip(again.instances()) {
            prop_assert_eq!(a.mask.to_mask(), b.mask.to_mask());
        }
    }
}
