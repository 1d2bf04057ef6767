use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetIndex, Prediction};
use crate::length::LengthRecord;
use crate::maskops::{MaskError, RleMask};

/// Minimum mask IoU for associating a prediction with a ground-truth fish.
pub const PD_MIN_IOU: f64 = 0.5;

/// An estimate paired with the ground-truth length of its fish, both in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthPair {
    pub image_id: u64,
    pub fish_id: u64,
    pub estimate: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSummary {
    pub pairs: Vec<LengthPair>,
    pub unmatched_estimates: usize,
    pub unmatched_truths: usize,
}

/// Ground-truth lengths per (image, fish), from the annotations.
fn truth_table(index: &DatasetIndex) -> BTreeMap<(u64, u64), u32> {
    index
        .instances()
        .iter()
        .map(|g| ((g.image_id, g.fish_id), g.length_mm))
        .collect()
}

/// Pairs records with ground truth by `(image_id, fish_id)`.
pub fn match_lengths_gt(records: &[LengthRecord], index: &DatasetIndex) -> MatchSummary {
    let truth = truth_table(index);
    let mut used: BTreeMap<(u64, u64), bool> = truth.keys().map(|&k| (k, false)).collect();
    let mut out = MatchSummary::default();
    for r in records {
        let key = r.fish_id.map(|f| (r.image_id, f));
        match key.and_then(|k| truth.get(&k).map(|&t| (k, t))) {
            Some((k, t)) if !used[&k] => {
                used.insert(k, true);
                out.pairs.push(LengthPair {
                    image_id: k.0,
                    fish_id: k.1,
                    estimate: r.length_mm,
                    truth: t as f64,
                });
            }
            _ => out.unmatched_estimates += 1,
        }
    }
    out.unmatched_truths = used.values().filter(|&&u| !u).count();
    out
}

/// Pairs records carrying a prediction index with ground-truth fish by mask IoU.
///
/// Per image, records are taken in descending prediction score (then file
/// order); each claims the unclaimed fish with the highest IoU `>= PD_MIN_IOU`.
/// Same-id ground-truth pieces are unioned first.
pub fn match_lengths_pd(
    records: &[LengthRecord],
    predictions: &[Prediction],
    index: &DatasetIndex,
) -> Result<MatchSummary, MaskError> {
    let by_index: HashMap<usize, &Prediction> = predictions.iter().map(|p| (p.index, p)).collect();
    let mut fish: BTreeMap<(u64, u64), (RleMask, u32)> = BTreeMap::new();
    for g in index.instances() {
        match fish.get_mut(&(g.image_id, g.fish_id)) {
            Some((m, _)) => *m = m.union(&g.mask)?,
            None => {
                fish.insert((g.image_id, g.fish_id), (g.mask.clone(), g.length_mm));
            }
        }
    }
    let mut out = MatchSummary::default();
    let mut per_image: BTreeMap<u64, Vec<(&LengthRecord, &Prediction)>> = BTreeMap::new();
    for r in records {
        match r.prediction.and_then(|i| by_index.get(&i)) {
            Some(&p) if p.image_id == r.image_id => per_image.entry(r.image_id).or_default().push((r, p)),
            _ => out.unmatched_estimates += 1,
        }
    }
    let mut claimed: BTreeMap<(u64, u64), bool> = fish.keys().map(|&k| (k, false)).collect();
    for (image_id, mut items) in per_image {
        items.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.1.index.cmp(&b.1.index)));
        let candidates: Vec<(&(u64, u64), &(RleMask, u32))> =
            fish.range((image_id, 0)..=(image_id, u64::MAX)).collect();
        for (r, p) in items {
            let mut best: Option<((u64, u64), u32, f64)> = None;
            for &(&key, (mask, len)) in &candidates {
                if claimed[&key] {
                    continue;
                }
                let iou = p.mask.iou(mask)?;
                if iou >= PD_MIN_IOU && best.is_none_or(|b| iou > b.2) {
                    best = Some((key, *len, iou));
                }
            }
            match best {
                Some((key, len, _)) => {
                    claimed.insert(key, true);
                    out.pairs.push(LengthPair {
                        image_id,
                        fish_id: key.1,
                        estimate: r.length_mm,
                        truth: len as f64,
                    });
                }
                None => out.unmatched_estimates += 1,
            }
        }
    }
    out.unmatched_truths = claimed.values().filter(|&&c| !c).count();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CocoFile, LoadOptions};
    use crate::maskops::{BinaryMask, Segmentation};

    fn bar(x0: usize, x1: usize) -> BinaryMask {
        BinaryMask::from_fn(40, 10, |x, y| (x0..x1).contains(&x) && (2..6).contains(&y)).unwrap()
    }

    fn index() -> DatasetIndex {
        let ann = |id: u64, fish: u64, len: u32, m: &BinaryMask| {
            serde_json::json!({"id": id, "image_id": 1, "category_id": 1,
                "segmentation": Segmentation::from_mask(m),
                "attributes": {"fish_id": fish, "length_mm": len}})
        };
        let f: CocoFile = serde_json::from_value(serde_json::json!({
            "images": [{"id": 1, "width": 40, "height": 10, "attributes": {"group": 1, "set": "all"}}],
            "annotations": [ann(1, 10, 300, &bar(0, 10)), ann(2, 11, 350, &bar(12, 22)),
                            ann(3, 12, 400, &bar(25, 35))],
            "categories": [{"id": 1, "name": "fish"}]
        }))
        .unwrap();
        DatasetIndex::from_coco(f, &LoadOptions::default()).unwrap()
    }

    fn rec(fish: Option<u64>, pred: Option<usize>, len: f64) -> LengthRecord {
        LengthRecord {
            image_id: 1,
            fish_id: fish,
            method: "skl".into(),
            length_mm: len,
            flags: vec![],
            prediction: pred,
            score: None,
        }
    }

    fn prediction(index: usize, m: &BinaryMask, score: f64) -> Prediction {
        Prediction {
            index,
            image_id: 1,
            category_id: 1,
            mask: RleMask::from_mask(m),
            score,
            length_mm: None,
        }
    }

    #[test]
    fn gt_mode_pairs_by_fish_id() {
        let idx = index();
        let recs = vec![rec(Some(12), None, 401.0), rec(Some(10), None, 299.0), rec(Some(11), None, 360.0)];
        let m = match_lengths_gt(&recs, &idx);
        assert_eq!(m.pairs.len(), 3);
        assert_eq!((m.unmatched_estimates, m.unmatched_truths), (0, 0));
        assert_eq!(m.pairs[0].truth, 400.0);
    }

    #[test]
    fn pd_mode_excludes_low_overlap() {
        let idx = index();
        let preds = vec![prediction(0, &bar(0, 10), 0.95), prediction(1, &bar(36, 40), 0.95)];
        let recs = vec![rec(None, Some(0), 310.0), rec(None, Some(1), 100.0)];
        let m = match_lengths_pd(&recs, &preds, &idx).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].fish_id, 10);
        assert_eq!((m.unmatched_estimates, m.unmatched_truths), (1, 2));
    }

    #[test]
    fn pd_mode_higher_confidence_claims_first() {
        let idx = index();
        // both overlap fish 11; the confident one is slightly worse but claims it
        let preds = vec![prediction(0, &bar(12, 22), 0.91), prediction(1, &bar(13, 22), 0.99)];
        let recs = vec![rec(None, Some(0), 1.0), rec(None, Some(1), 2.0)];
        let m = match_lengths_pd(&recs, &preds, &idx).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].estimate, 2.0);
    }
}
