//! Skeleton-based fish length (SKL): thin the mask, fit a degree-4 centerline in
//! the principal-axis frame, extend it over the convex hull, and sum its length
//! on the belt plane.

mod fit;
mod run;

pub use fit::{axis_frame, fit_centerline, AxisFrame, CenterlineFit, FitFlag, MAX_DEGREE};
pub use run::{
    lengths_from_predictions, read_length_records, run_skl, LengthEstimate, LengthRecord, SklInput,
    SklOptions, SklOutput, SkippedInstance, DEFAULT_CONF_THRESHOLD,
};

use crate::geometry::{CameraModel, GeometryError};
use crate::maskops::{convex_hull, skeletonize, BinaryMask, MaskError, RleMask};

/// Default spacing of curve samples along the rotated abscissa, in pixels.
pub const DEFAULT_STEP_PX: f64 = 1.0;
const CROP_MARGIN: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum LengthError {
    #[error("skeleton is empty")]
    EmptySkeleton,
    #[error("centerline has zero extent along its axis")]
    ZeroExtent,
    #[error("sampling step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("no camera for group {0}")]
    MissingCamera(u32),
    #[error("invalid confidence threshold {0}")]
    InvalidThreshold(f64),
}

/// Belt-plane length of a sampled centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredLength {
    pub length_mm: f64,
    pub samples: usize,
}

/// Samples `fit` every `step` pixels of rotated abscissa, maps each sample to the
/// belt plane and sums consecutive distances.
pub fn estimate_length(
    fit: &CenterlineFit,
    camera: &CameraModel,
    step: f64,
) -> Result<MeasuredLength, LengthError> {
    let pts = fit.sample(step)?;
    let mut prev: Option<[f64; 2]> = None;
    let mut total = 0.0;
    for p in &pts {
        let b = camera.pixel_to_belt(*p)?;
        if let Some(q) = prev {
            total += (b[0] - q[0]).hypot(b[1] - q[1]);
        }
        prev = Some(b);
    }
    if !(total > 0.0) {
        return Err(LengthError::ZeroExtent);
    }
    Ok(MeasuredLength {
        length_mm: total,
        samples: pts.len(),
    })
}

/// Full SKL on one mask whose pixel `(0, 0)` sits at `offset` in the image.
pub fn measure_mask(
    mask: &BinaryMask,
    offset: (i64, i64),
    camera: &CameraModel,
    step: f64,
) -> Result<(CenterlineFit, MeasuredLength), LengthError> {
    let (frame, axis_flags) = axis_frame(mask)?;
    let skeleton = skeletonize(mask);
    let hull = convex_hull(mask)?;
    let mut fit = fit_centerline(&skeleton, &hull, frame)?;
    fit.flags.extend(axis_flags);
    fit.flags.sort();
    fit.flags.dedup();
    let fit = fit.translated(offset.0 as f64, offset.1 as f64);
    let length = estimate_length(&fit, camera, step)?;
    Ok((fit, length))
}

/// [`measure_mask`] on a run-length mask, decoding only its bounding box.
pub fn measure_rle(
    mask: &RleMask,
    camera: &CameraModel,
    step: f64,
) -> Result<(CenterlineFit, MeasuredLength), LengthError> {
    let (crop, offset) = mask.to_cropped_mask(CROP_MARGIN).ok_or(MaskError::EmptyMask)?;
    measure_mask(&crop, offset, camera, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Distortion, Homography, Intrinsics};

    fn planar(scale: f64) -> CameraModel {
        CameraModel::planar(Homography::scaling(scale).unwrap())
    }

    #[test]
    fn straight_bar_at_0406() {
        let m = BinaryMask::from_fn(1040, 40, |x, y| (20..1021).contains(&x) && (14..26).contains(&y))
            .unwrap();
        let (fit, len) = measure_mask(&m, (0, 0), &planar(0.406), 1.0).unwrap();
        // hull spans pixel centers 20..=1020: 1000 px
        assert!((len.length_mm - 406.0).abs() < 1.0, "{}", len.length_mm);
        assert!(fit.flags.is_empty());
    }

    #[test]
    fn scale_covariance_is_exact() {
        let m = BinaryMask::from_fn(300, 120, |x, y| {
            let c = 60.0 + 0.002 * (x as f64 - 150.0).powi(2);
            (20..280).contains(&x) && (y as f64 - c).abs() < 8.0
        })
        .unwrap();
        let a = measure_mask(&m, (0, 0), &planar(0.5), 1.0).unwrap().1.length_mm;
        let b = measure_mask(&m, (0, 0), &planar(1.5), 1.0).unwrap().1.length_mm;
        assert!((b / a - 3.0).abs() < 1e-12);
    }

    #[test]
    fn corner_fish_under_barrel_distortion() {
        // a straight belt segment imaged through k1 = -0.1, measured back
        let intr = Intrinsics::new(3696.0, 3696.0, 1232.0, 1028.0);
        let belt = Homography::scaling(0.406).unwrap();
        let cam = CameraModel::new(intr, Distortion::radial(-0.1, 0.0), belt).unwrap();
        let (x0, x1, yc) = (60.0, 660.0, 120.0);
        let half = 10.0;
        let m = BinaryMask::from_fn(760, 260, |x, y| {
            let u = cam.undistort_point([x as f64, y as f64]).unwrap();
            (x0..=x1).contains(&u[0]) && (u[1] - yc).abs() <= half
        })
        .unwrap();
        let want = (x1 - x0) * 0.406;
        let got = measure_mask(&m, (0, 0), &cam, 1.0).unwrap().1.length_mm;
        assert!((got - want).abs() / want < 0.005, "{got} vs {want}");
    }

    #[test]
    fn step_halving_is_stable() {
        let m = BinaryMask::from_fn(400, 200, |x, y| {
            let c = 100.0 + 40.0 * ((x as f64 - 30.0) / 340.0 * 3.0).sin();
            (30..370).contains(&x) && (y as f64 - c).abs() < 10.0
        })
        .unwrap();
        let a = measure_mask(&m, (0, 0), &planar(1.0), 1.0).unwrap().1.length_mm;
        let b = measure_mask(&m, (0, 0), &planar(1.0), 0.5).unwrap().1.length_mm;
        assert!((a - b).abs() / a < 1e-3);
    }

    #[test]
    fn invalid_step() {
        let m = BinaryMask::from_fn(50, 10, |x, y| x > 5 && x < 45 && y > 2 && y < 7).unwrap();
        assert!(matches!(
            measure_mask(&m, (0, 0), &planar(1.0), 0.0),
            Err(LengthError::InvalidStep(_))
        ));
    }
}
