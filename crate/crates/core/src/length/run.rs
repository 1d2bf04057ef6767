use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{measure_rle, FitFlag, LengthError, DEFAULT_STEP_PX};
use crate::dataset::{DatasetError, DatasetIndex, Prediction};
use crate::geometry::CameraModel;
use crate::maskops::RleMask;
use crate::par;

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy)]
pub enum SklInput<'a> {
    /// One estimate per (image, fish id); same-id pieces are unioned first.
    GroundTruth(&'a DatasetIndex),
    /// One estimate per prediction with `score >= threshold`.
    Predictions {
        index: &'a DatasetIndex,
        predictions: &'a [Prediction],
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SklOptions {
    pub conf_threshold: f64,
    pub step_px: f64,
}

impl Default for SklOptions {
    fn default() -> Self {
        Self {
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            step_px: DEFAULT_STEP_PX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthEstimate {
    pub image_id: u64,
    pub fish_id: Option<u64>,
    pub prediction: Option<usize>,
    pub score: Option<f64>,
    pub length_mm: f64,
    pub samples: usize,
    pub flags: Vec<FitFlag>,
}

impl LengthEstimate {
    pub fn to_record(&self, method: &str) -> LengthRecord {
        LengthRecord {
            image_id: self.image_id,
            fish_id: self.fish_id,
            method: method.to_string(),
            length_mm: self.length_mm,
            flags: self.flags.iter().map(|f| f.name().to_string()).collect(),
            prediction: self.prediction,
            score: self.score,
        }
    }
}

/// One line of a length output file. Other estimators write the same shape
/// with their own `method`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRecord {
    pub image_id: u64,
    pub fish_id: Option<u64>,
    pub method: String,
    pub length_mm: f64,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// An instance whose mask could not be measured (too small to thin, for instance).
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedInstance {
    pub image_id: u64,
    pub fish_id: Option<u64>,
    pub prediction: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SklOutput {
    pub estimates: Vec<LengthEstimate>,
    pub skipped: Vec<SkippedInstance>,
}

struct Unit<'a> {
    image_id: u64,
    group: u32,
    fish_id: Option<u64>,
    prediction: Option<usize>,
    score: Option<f64>,
    mask: std::borrow::Cow<'a, RleMask>,
}

/// Runs SKL over every instance, in parallel, with output ordered by
/// `(image_id, fish_id)` or `(image_id, prediction index)`.
///
/// Masks that cannot be measured are listed in `skipped`; failures of the
/// pixel-to-belt mapping abort the run.
pub fn run_skl(
    input: SklInput<'_>,
    cameras: &BTreeMap<u32, CameraModel>,
    options: &SklOptions,
) -> Result<SklOutput, LengthError> {
    if !(0.0..=1.0).contains(&options.conf_threshold) {
        return Err(LengthError::InvalidThreshold(options.conf_threshold));
    }
    if !(options.step_px > 0.0 && options.step_px.is_finite()) {
        return Err(LengthError::InvalidStep(options.step_px));
    }
    let index = match input {
        SklInput::GroundTruth(i) | SklInput::Predictions { index: i, .. } => i,
    };
    let group_of = |image_id: u64| index.image(image_id).map(|im| im.group).unwrap_or(0);

    let mut units: Vec<Unit<'_>> = Vec::new();
    match input {
        SklInput::GroundTruth(idx) => {
            let mut merged: BTreeMap<(u64, u64), std::borrow::Cow<'_, RleMask>> = BTreeMap::new();
            for g in idx.instances() {
                match merged.entry((g.image_id, g.fish_id)) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(std::borrow::Cow::Borrowed(&g.mask));
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        let u = e.get().union(&g.mask)?;
                        e.insert(std::borrow::Cow::Owned(u));
                    }
                }
            }
            units.extend(merged.into_iter().map(|((image_id, fish_id), mask)| Unit {
                image_id,
                group: group_of(image_id),
                fish_id: Some(fish_id),
                prediction: None,
                score: None,
                mask,
            }));
        }
        SklInput::Predictions { predictions, .. } => {
            let mut kept: Vec<&Prediction> = predictions
                .iter()
                .filter(|p| p.score >= options.conf_threshold)
                .collect();
            kept.sort_by_key(|p| (p.image_id, p.index));
            units.extend(kept.into_iter().map(|p| Unit {
                image_id: p.image_id,
                group: group_of(p.image_id),
                fish_id: None,
                prediction: Some(p.index),
                score: Some(p.score),
                mask: std::borrow::Cow::Borrowed(&p.mask),
            }));
            if units.is_empty() {
                log::warn!(
                    "no prediction reaches confidence {}; nothing to measure",
                    options.conf_threshold
                );
            }
        }
    }

    for u in &units {
        if !cameras.contains_key(&u.group) {
            return Err(LengthError::MissingCamera(u.group));
        }
    }

    let results = par::map(&units, |u| measure_rle(&u.mask, &cameras[&u.group], options.step_px));
    let mut out = SklOutput::default();
    for (u, r) in units.iter().zip(results) {
        match r {
            Ok((fit, len)) => out.estimates.push(LengthEstimate {
                image_id: u.image_id,
                fish_id: u.fish_id,
                prediction: u.prediction,
                score: u.score,
                length_mm: len.length_mm,
                samples: len.samples,
                flags: fit.flags,
            }),
            Err(LengthError::Geometry(e)) => return Err(LengthError::Geometry(e)),
            Err(e) => {
                log::warn!(
                    "image {} {}: skipped ({e})",
                    u.image_id,
                    match (u.fish_id, u.prediction) {
                        (Some(f), _) => format!("fish {f}"),
                        (_, Some(p)) => format!("prediction {p}"),
                        _ => String::new(),
                    }
                );
                out.skipped.push(SkippedInstance {
                    image_id: u.image_id,
                    fish_id: u.fish_id,
                    prediction: u.prediction,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Length records from lengths carried in a prediction file (for estimators run elsewhere).
pub fn lengths_from_predictions(
    predictions: &[Prediction],
    conf_threshold: f64,
    method: &str,
) -> Vec<LengthRecord> {
    let mut kept: Vec<&Prediction> = predictions
        .iter()
        .filter(|p| p.score >= conf_threshold && p.length_mm.is_some())
        .collect();
    kept.sort_by_key(|p| (p.image_id, p.index));
    kept.into_iter()
        .map(|p| LengthRecord {
            image_id: p.image_id,
            fish_id: None,
            method: method.to_string(),
            length_mm: p.length_mm.expect("filtered"),
            flags: Vec::new(),
            prediction: Some(p.index),
            score: Some(p.score),
        })
        .collect()
}

pub fn read_length_records(path: &Path) -> Result<Vec<LengthRecord>, DatasetError> {
    let records: Vec<LengthRecord> = crate::dataset::read_json(path)?;
    for (i, r) in records.iter().enumerate() {
        if !(r.length_mm.is_finite() && r.length_mm > 0.0) {
            return Err(DatasetError::invalid(
                format!("{}: lengths[{i}]", path.display()),
                format!("length_mm must be positive, got {}", r.length_mm),
            ));
        }
    }
    Ok(records)
}
