//! Camera geometry: homographies, lens distortion, planar calibration and the
//! pixel to belt-plane mapping.

mod calibrate;
mod camera;
mod homography;
pub mod lm;

pub use calibrate::{
    belt_homography, calibrate_planar, project, BoardSpec, CalibrationFile, CalibrationOptions,
    CalibrationResult, Correspondence, PlanarView, ViewPose,
};
pub use camera::{
    CalibrationSummary, CameraFile, CameraModel, Distortion, Intrinsics, CAMERA_FORMAT,
    UNDISTORT_MAX_ITERATIONS, UNDISTORT_TOLERANCE_PX,
};
pub use homography::{
    estimate_homography, refine_homography, rms_transfer, Homography, HomographyEstimate,
    PointPair, DET_FLOOR, W_FLOOR,
};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("need at least {needed} correspondences, found {found}")]
    TooFewCorrespondences { needed: usize, found: usize },
    #[error("need at least {needed} calibration views, found {found}")]
    TooFewViews { needed: usize, found: usize },
    #[error("no calibration view is marked as lying flat on the belt")]
    NoFlatView,
    #[error("view {view}: {source}")]
    View {
        view: usize,
        #[source]
        source: Box<GeometryError>,
    },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("ill-conditioned calibration: {0}")]
    IllConditioned(String),
    #[error("invalid calibration board: {0}")]
    InvalidBoard(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("point ({}, {}) maps to the plane at infinity", point[0], point[1])]
    PlaneAtInfinity { point: [f64; 2] },
    #[error("undistortion did not converge at pixel ({}, {})", point[0], point[1])]
    NonConvergence { point: [f64; 2] },
}
