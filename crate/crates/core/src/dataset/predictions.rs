use std::path::Path;

use super::coco::PredictionRecord;
use super::{read_json, DatasetError, DatasetIndex};
use crate::maskops::{rasterize_rle, RleMask, Segmentation};
use crate::par;

/// A decoded model output. `index` is the position in the source file and
/// breaks remaining ties deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub image_id: u64,
    pub category_id: u64,
    pub mask: RleMask,
    pub score: f64,
    pub length_mm: Option<f64>,
}

impl Prediction {
    pub fn to_record(&self) -> PredictionRecord {
        PredictionRecord {
            image_id: self.image_id,
            category_id: self.category_id,
            segmentation: Segmentation::from_rle(&self.mask),
            score: self.score,
            length_mm: self.length_mm,
        }
    }
}

pub fn predictions_from_records(
    records: &[PredictionRecord],
    index: &DatasetIndex,
) -> Result<Vec<Prediction>, DatasetError> {
    for (i, r) in records.iter().enumerate() {
        let loc = || format!("predictions[{i}]");
        if index.image(r.image_id).is_none() {
            return Err(DatasetError::invalid(loc(), format!("unknown image id {}", r.image_id)));
        }
        if index.category(r.category_id).is_none() {
            return Err(DatasetError::invalid(
                loc(),
                format!("unknown category id {}", r.category_id),
            ));
        }
        if !(0.0..=1.0).contains(&r.score) {
            return Err(DatasetError::invalid(
                loc(),
                format!("score must be in [0, 1], got {}", r.score),
            ));
        }
        if let Some(l) = r.length_mm {
            if !(l.is_finite() && l > 0.0) {
                return Err(DatasetError::invalid(loc(), format!("length_mm must be positive, got {l}")));
            }
        }
    }
    let masks = par::map(records, |r| {
        let img = index.image(r.image_id).expect("checked");
        rasterize_rle(&r.segmentation, img.width, img.height)
    });
    records
        .iter()
        .zip(masks)
        .enumerate()
        .map(|(i, (r, mask))| {
            let mask = mask.map_err(|source| DatasetError::Mask {
                location: format!("predictions[{i}]"),
                source,
            })?;
            if mask.area() == 0 {
                return Err(DatasetError::invalid(
                    format!("predictions[{i}]"),
                    "segmentation decodes to an empty mask",
                ));
            }
            Ok(Prediction {
                index: i,
                image_id: r.image_id,
                category_id: r.category_id,
                mask,
                score: r.score,
                length_mm: r.length_mm,
            })
        })
        .collect()
}

pub fn load_predictions(path: &Path, index: &DatasetIndex) -> Result<Vec<Prediction>, DatasetError> {
    let records: Vec<PredictionRecord> = read_json(path)?;
    let preds = predictions_from_records(&records, index).map_err(|e| e.in_file(path))?;
    log::info!("{}: {} predictions", path.display(), preds.len());
    Ok(preds)
}

pub fn write_predictions(preds: &[Prediction]) -> String {
    let records: Vec<PredictionRecord> = preds.iter().map(Prediction::to_record).collect();
    serde_json::to_string(&records).expect("plain data serializes")
}
