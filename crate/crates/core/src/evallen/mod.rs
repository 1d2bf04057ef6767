//! Length evaluation: estimate/ground-truth association, MAE and MAPE with a
//! clipped error histogram, and per-fish median aggregation curves.

mod aggregate;
mod matching;
mod report;

pub use aggregate::{aggregation_curve, group_by_fish, AggregationCurve, FishSamples};
pub use matching::{match_lengths_gt, match_lengths_pd, LengthPair, MatchSummary, PD_MIN_IOU};
pub use report::{length_report, Histogram, LengthReport, LengthUnit, DEFAULT_BIN_CM, DEFAULT_CLIP_CM};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalLenError {
    #[error("no estimate/ground-truth pairs to evaluate")]
    NoPairs,
    #[error("histogram needs positive finite clip and bin widths, got clip {clip} and bin {bin}")]
    InvalidHistogram { clip: f64, bin: f64 },
    #[error("no sample counts requested")]
    EmptySampleCounts,
    #[error("sample counts and trials must be positive")]
    ZeroSamples,
    #[error("no fish has at least {0} estimates")]
    NoFishWithSamples(usize),
    #[error("ground-truth length must be positive, got {0}")]
    NonPositiveTruth(f64),
}
