//! Instance-segmentation evaluation: greedy matching per IoU threshold and
//! 101-point interpolated average precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Category, GtInstance, Prediction};
use crate::maskops::MaskError;
use crate::par;

/// Confidence above which a matched prediction counts as confident in the diagnostics.
pub const CONFIDENT_SCORE: f64 = 0.9;
const RECALL_POINTS: usize = 101;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub category_id: u64,
    pub name: String,
    pub gt_count: usize,
    pub prediction_count: usize,
    /// AP at each threshold, aligned with [`SegReport::thresholds`].
    pub ap: Vec<f64>,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegDiagnostics {
    /// Predictions matched at the lowest threshold.
    pub matched: usize,
    pub mean_matched_iou: f64,
    /// Share of matched predictions with score above [`CONFIDENT_SCORE`].
    pub fraction_confident: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReport {
    pub thresholds: Vec<f64>,
    pub classes: Vec<ClassReport>,
    /// Mean of the per-class mAPs over classes with ground truth.
    pub map: f64,
    /// Predicted classes without any ground truth, left out of `map`.
    pub excluded_classes: Vec<u64>,
    pub diagnostics: SegDiagnostics,
}

impl SegReport {
    /// Long-format CSV: one row per class and threshold.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("category_id,category,iou_threshold,ap\n");
        for c in &self.classes {
            for (t, ap) in self.thresholds.iter().zip(&c.ap) {
                let _ = writeln!(s, "{},{},{:.2},{:.6}", c.category_id, c.name, t, ap);
            }
        }
        s
    }
}

/// Per-threshold outcome for one class: each prediction's matched gt, in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub category_id: u64,
    pub threshold: f64,
    /// `(prediction index, matched gt position in the input slice)`, by descending rank.
    pub matches: Vec<(usize, Option<usize>)>,
    pub gt_matched: Vec<(usize, bool)>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid IoU threshold {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// IoUs between the predictions and ground truths of one image and class.
struct Cell {
    preds: Vec<usize>,
    gts: Vec<usize>,
    /// `iou[p][g]`
    iou: Vec<Vec<f64>>,
}

/// Rank key: score, then best IoU, then input order.
fn rank_order(preds: &[Prediction], best_iou: &[f64], ids: &mut [usize]) {
    ids.sort_by(|&a, &b| {
        preds[b]
            .score
            .total_cmp(&preds[a].score)
            .then(best_iou[b].total_cmp(&best_iou[a]))
            .then(preds[a].index.cmp(&preds[b].index))
            .then(a.cmp(&b))
    });
}

/// Greedy matching at `t`: in rank order, each prediction takes the unmatched
/// gt of highest IoU `>= t` (lowest position on ties).
fn greedy(cell: &Cell, order: &[usize], t: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; cell.gts.len()];
    let mut out = vec![None; cell.preds.len()];
    for &pi in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, &iou) in cell.iou[pi].iter().enumerate() {
            if taken[gi] || iou < t {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
            out[pi] = Some(gi);
        }
    }
    out
}

/// 101-point interpolated AP from ranked true-positive flags.
pub fn interpolated_ap(tp_ranked: &[bool], npos: usize) -> f64 {
    if npos == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp_ranked.len());
    let mut recall = Vec::with_capacity(tp_ranked.len());
    let mut tp = 0usize;
    for (i, &hit) in tp_ranked.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / npos as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut k = 0;
    for j in 0..RECALL_POINTS {
        let r = j as f64 / (RECALL_POINTS - 1) as f64;
        while k < recall.len() && recall[k] < r {
            k += 1;
        }
        if k < recall.len() {
            sum += precision[k];
        }
    }
    sum / RECALL_POINTS as f64
}

/// Full evaluation; also returns the per-class, per-threshold matchings.
pub fn evaluate_segmentation_detailed(
    preds: &[Prediction],
    gts: &[GtInstance],
    categories: &[Category],
    thresholds: &[f64],
) -> Result<(SegReport, Vec<MatchResult>), EvalError> {
    for &t in thresholds {
        if !(0.0..=1.0).contains(&t) {
            return Err(EvalError::InvalidThreshold(t));
        }
    }
    let gt_classes: BTreeSet<u64> = gts.iter().map(|g| g.category_id).collect();
    let excluded_classes: Vec<u64> = preds
        .iter()
        .map(|p| p.category_id)
        .filter(|c| !gt_classes.contains(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for c in &excluded_classes {
        log::warn!("category {c} has predictions but no ground truth; excluded from mAP");
    }

    let mut keys: BTreeMap<(u64, u64), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        keys.entry((g.category_id, g.image_id)).or_default().1.push(i);
    }
    for (i, p) in preds.iter().enumerate() {
        if gt_classes.contains(&p.category_id) {
            keys.entry((p.category_id, p.image_id)).or_default().0.push(i);
        }
    }
    let key_list: Vec<((u64, u64), (Vec<usize>, Vec<usize>))> = keys.into_iter().collect();
    let cells: Vec<Result<Cell, MaskError>> = par::map(&key_list, |(_, (pi, gi))| {
        let mut iou = Vec::with_capacity(pi.len());
        for &p in pi {
            let row: Result<Vec<f64>, MaskError> =
                gi.iter().map(|&g| preds[p].mask.iou(&gts[g].mask)).collect();
            iou.push(row?);
        }
        Ok(Cell {
            preds: pi.clone(),
            gts: gi.clone(),
            iou,
        })
    });
    let mut by_class: BTreeMap<u64, Vec<Cell>> = BTreeMap::new();
    for ((key, _), cell) in key_list.iter().zip(cells) {
        by_class.entry(key.0).or_default().push(cell?);
    }

    let mut best_iou = vec![0.0; preds.len()];
    for cells in by_class.values() {
        for cell in cells {
            for (k, &p) in cell.preds.iter().enumerate() {
                best_iou[p] = cell.iou[k].iter().copied().fold(0.0, f64::max);
            }
        }
    }

    let names: BTreeMap<u64, &str> = categories.iter().map(|c| (c.id, c.name.as_str())).collect();
    let mut classes = Vec::new();
    let mut details = Vec::new();
    let (mut matched, mut iou_sum, mut confident) = (0usize, 0.0, 0usize);
    for (&cat, cells) in &by_class {
        let npos: usize = cells.iter().map(|c| c.gts.len()).sum();
        let mut ranked: Vec<usize> = cells.iter().flat_map(|c| c.preds.iter().copied()).collect();
        rank_order(preds, &best_iou, &mut ranked);
        let rank_of: BTreeMap<usize, usize> =
            ranked.iter().enumerate().map(|(r, &p)| (p, r)).collect();
        let mut ap = Vec::with_capacity(thresholds.len());
        for (ti, &t) in thresholds.iter().enumerate() {
            let mut hit = vec![false; ranked.len()];
            let mut matches = vec![(0usize, None); ranked.len()];
            let mut gt_matched = Vec::with_capacity(npos);
            for cell in cells {
                let mut local: Vec<usize> = (0..cell.preds.len()).collect();
                local.sort_by_key(|&k| rank_of[&cell.preds[k]]);
                let m = greedy(cell, &local, t);
                let mut taken = vec![false; cell.gts.len()];
                for (k, &p) in cell.preds.iter().enumerate() {
                    let r = rank_of[&p];
                    hit[r] = m[k].is_some();
                    matches[r] = (preds[p].index, m[k].map(|g| cell.gts[g]));
                    if let Some(g) = m[k] {
                        taken[g] = true;
                        if ti == 0 {
                            matched += 1;
                            iou_sum += cell.iou[k][g];
                            confident += (preds[p].score > CONFIDENT_SCORE) as usize;
                        }
                    }
                }
                gt_matched.extend(cell.gts.iter().zip(&taken).map(|(&g, &t)| (g, t)));
            }
            ap.push(interpolated_ap(&hit, npos));
            details.push(MatchResult {
                category_id: cat,
                threshold: t,
                matches,
                gt_matched,
            });
        }
        let map = if ap.is_empty() {
            0.0
        } else {
            ap.iter().sum::<f64>() / ap.len() as f64
        };
        classes.push(ClassReport {
            category_id: cat,
            name: names.get(&cat).map_or_else(|| cat.to_string(), |n| n.to_string()),
            gt_count: npos,
            prediction_count: ranked.len(),
            ap,
            map,
        });
    }
    let map = if classes.is_empty() {
        0.0
    } else {
        classes.iter().map(|c| c.map).sum::<f64>() / classes.len() as f64
    };
    let diagnostics = SegDiagnostics {
        matched,
        mean_matched_iou: if matched > 0 { iou_sum / matched as f64 } else { 0.0 },
        fraction_confident: if matched > 0 {
            confident as f64 / matched as f64
        } else {
            0.0
        },
    };
    Ok((
        SegReport {
            thresholds: thresholds.to_vec(),
            classes,
            map,
            excluded_classes,
            diagnostics,
        },
        details,
    ))
}

pub fn evaluate_segmentation(
    preds: &[Prediction],
    gts: &[GtInstance],
    categories: &[Category],
    thresholds: &[f64],
) -> Result<SegReport, EvalError> {
    evaluate_segmentation_detailed(preds, gts, categories, thresholds).map(|(r, _)| r)
}
