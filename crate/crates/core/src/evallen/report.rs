use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EvalLenError, LengthPair};

pub const DEFAULT_CLIP_CM: f64 = 5.0;
pub const DEFAULT_BIN_CM: f64 = 0.25;

/// Unit of the lengths handed to [`length_report`]. Reports are always in centimetres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    Mm,
    Cm,
}

impl LengthUnit {
    #[inline]
    pub fn to_cm(self, v: f64) -> f64 {
        match self {
            LengthUnit::Mm => v / 10.0,
            LengthUnit::Cm => v,
        }
    }
}

/// Signed-error histogram with bins centred on multiples of `bin_cm`; errors
/// beyond `±clip_cm` land in the outermost bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_cm: f64,
    pub clip_cm: f64,
    pub centers_cm: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn new(clip: f64, bin: f64) -> Self {
        let half = (clip / bin - 1e-9).ceil() as i64;
        Self {
            bin_cm: bin,
            clip_cm: clip,
            centers_cm: (-half..=half).map(|k| k as f64 * bin).collect(),
            counts: vec![0; (2 * half + 1) as usize],
        }
    }

    fn add(&mut self, e: f64) {
        let half = (self.counts.len() / 2) as i64;
        let k = (e.clamp(-self.clip_cm, self.clip_cm) / self.bin_cm).round() as i64;
        self.counts[(k.clamp(-half, half) + half) as usize] += 1;
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("center_cm,count\n");
        for (c, n) in self.centers_cm.iter().zip(&self.counts) {
            let _ = writeln!(s, "{c:.4},{n}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    pub count: usize,
    pub mae_cm: f64,
    pub mape_pct: f64,
    pub mean_error_cm: f64,
    pub std_error_cm: f64,
    /// Signed errors `estimate - truth`, ascending.
    pub errors_cm: Vec<f64>,
    pub histogram: Histogram,
}

/// Sum in a fixed order so results do not depend on input order.
fn ordered_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// MAE and MAPE on unclipped errors; clipping only shapes the histogram.
pub fn length_report(
    pairs: &[LengthPair],
    unit: LengthUnit,
    clip_cm: f64,
    bin_cm: f64,
) -> Result<LengthReport, EvalLenError> {
    if pairs.is_empty() {
        return Err(EvalLenError::NoPairs);
    }
    if !(clip_cm > 0.0 && clip_cm.is_finite() && bin_cm > 0.0 && bin_cm.is_finite()) {
        return Err(EvalLenError::InvalidHistogram {
            clip: clip_cm,
            bin: bin_cm,
        });
    }
    let mut errors = Vec::with_capacity(pairs.len());
    let mut rel = Vec::with_capacity(pairs.len());
    for p in pairs {
        let truth = unit.to_cm(p.truth);
        if !(truth > 0.0) {
            return Err(EvalLenError::NonPositiveTruth(p.truth));
        }
        let e = unit.to_cm(p.estimate) - truth;
        errors.push(e);
        rel.push(e.abs() / truth);
    }
    errors.sort_by(f64::total_cmp);
    let n = errors.len() as f64;
    let mae = ordered_sum(errors.iter().map(|e| e.abs()).collect()) / n;
    let mape = 100.0 * ordered_sum(rel) / n;
    let mean = errors.iter().sum::<f64>() / n;
    let var = if errors.len() > 1 {
        errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut histogram = Histogram::new(clip_cm, bin_cm);
    for &e in &errors {
        histogram.add(e);
    }
    Ok(LengthReport {
        regime: None,
        count: errors.len(),
        mae_cm: mae,
        mape_pct: mape,
        mean_error_cm: mean,
        std_error_cm: var.sqrt(),
        errors_cm: errors,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(est: f64, truth: f64) -> LengthPair {
        LengthPair {
            image_id: 0,
            fish_id: 0,
            estimate: est,
            truth,
        }
    }

    #[test]
    fn one_centimetre_over_forty() {
        let r = length_report(&[pair(410.0, 400.0)], LengthUnit::Mm, 5.0, 0.25).unwrap();
        assert!((r.mae_cm - 1.0).abs() < 1e-12);
        assert!((r.mape_pct - 2.5).abs() < 1e-12);
    }

    #[test]
    fn exact_estimates_fill_zero_bin() {
        let pairs: Vec<_> = (1..20).map(|i| pair(i as f64 * 25.0, i as f64 * 25.0)).collect();
        let r = length_report(&pairs, LengthUnit::Mm, 5.0, 0.25).unwrap();
        assert_eq!((r.mae_cm, r.mape_pct), (0.0, 0.0));
        assert_eq!(r.histogram.counts.len(), 41);
        assert_eq!(r.histogram.counts[20], 19);
        assert_eq!(r.histogram.centers_cm[20], 0.0);
    }

    #[test]
    fn outliers_go_to_outer_bins_but_count_in_mae() {
        let r = length_report(&[pair(600.0, 400.0), pair(300.0, 400.0)], LengthUnit::Mm, 5.0, 0.25)
            .unwrap();
        assert_eq!(r.histogram.counts[0], 1);
        assert_eq!(*r.histogram.counts.last().unwrap(), 1);
        assert!((r.mae_cm - 15.0).abs() < 1e-12);
    }

    #[test]
    fn unit_flag_matches_external_conversion() {
        let mm = [pair(412.0, 405.0), pair(233.0, 240.0), pair(512.5, 500.0)];
        let cm: Vec<_> = mm.iter().map(|p| pair(p.estimate / 10.0, p.truth / 10.0)).collect();
        assert_eq!(
            length_report(&mm, LengthUnit::Mm, 5.0, 0.25).unwrap(),
            length_report(&cm, LengthUnit::Cm, 5.0, 0.25).unwrap()
        );
    }

    #[test]
    fn rejects_empty_and_bad_bins() {
        assert_eq!(length_report(&[], LengthUnit::Mm, 5.0, 0.25), Err(EvalLenError::NoPairs));
        assert!(length_report(&[pair(1.0, 1.0)], LengthUnit::Mm, 0.0, 0.25).is_err());
    }
}
