//! Compares a one-thread pool against the full pool on the SKL stage and on
//! segmentation scoring. Build with `--no-default-features` to time the
//! sequential fallback instead of a one-thread rayon pool.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fishlen::dataset::{DatasetIndex, LoadOptions, Prediction};
use fishlen::evalseg::{coco_thresholds, evaluate_segmentation};
use fishlen::length::{run_skl, SklInput, SklOptions};
use fishlen::synth::{generate_dataset, SynthConfig};

struct Fixture {
    index: DatasetIndex,
    cameras: BTreeMap<u32, fishlen::geometry::CameraModel>,
    predictions: Vec<Prediction>,
}

fn fixture() -> Fixture {
    let cfg = SynthConfig { seed: 1, groups: (1..=4).collect(), ..SynthConfig::default() };
    let data = generate_dataset(&cfg).expect("synthetic dataset");
    let cameras = data.cameras.iter().map(|(g, c)| (*g, c.model().unwrap())).collect();
    let index = DatasetIndex::from_coco(data.annotations, &LoadOptions::default()).unwrap();
    let predictions = index
        .instances()
        .iter()
        .enumerate()
        .map(|(i, g)| Prediction {
            index: i,
            image_id: g.image_id,
            category_id: g.category_id,
            mask: g.mask.clone(),
            score: 1.0 - (i % 10) as f64 / 20.0,
            length_mm: None,
        })
        .collect();
    Fixture { index, cameras, predictions }
}

fn pools() -> Vec<(usize, rayon::ThreadPool)> {
    let full = rayon::current_num_threads();
    let mut sizes = vec![1];
    if full > 1 {
        sizes.push(full);
    }
    sizes
        .into_iter()
        .map(|n| (n, rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()))
        .collect()
}

fn bench(c: &mut Criterion) {
    let f = fixture();
    let mut skl = c.benchmark_group("skl_gt");
    skl.sample_size(10);
    for (n, pool) in pools() {
        skl.bench_with_input(BenchmarkId::new("threads", n), &n, |b, _| {
            b.iter(|| {
                pool.install(|| run_skl(SklInput::GroundTruth(&f.index), &f.cameras, &SklOptions::default()).unwrap())
            })
        });
    }
    skl.finish();

    let thresholds = coco_thresholds();
    let mut seg = c.benchmark_group("eval_seg");
    seg.sample_size(10);
    for (n, pool) in pools() {
        seg.bench_with_input(BenchmarkId::new("threads", n), &n, |b, _| {
            b.iter(|| {
                pool.install(|| {
                    evaluate_segmentation(&f.predictions, f.index.instances(), f.index.categories(), &thresholds)
                        .unwrap()
                })
            })
        });
    }
    seg.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
