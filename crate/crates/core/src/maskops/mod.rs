//! Binary mask primitives: rasterization, run-length coding, thinning, convex
//! hull, principal axis and IoU.

mod axis;
mod hull;
mod mask;
mod raster;
mod rle;
mod thinning;

pub use axis::{principal_axis, principal_axis_of_points, PrincipalAxis, ISOTROPY_RATIO};
pub use hull::{convex_hull, ConvexHull};
pub use mask::{mask_iou, BinaryMask};
pub use raster::{rasterize, rasterize_rle, RleCounts, RleSegmentation, Segmentation};
pub use rle::{decode_counts_string, encode_counts_string, RleMask};
pub use thinning::{is_thin, skeletonize, Skeleton};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("mask dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("malformed segmentation: {0}")]
    Malformed(String),
    #[error("mask has no foreground")]
    EmptyMask,
    #[error("need at least {needed} foreground pixels, found {found}")]
    TooFewPixels { needed: usize, found: usize },
    #[error("foreground has zero second moments")]
    DegenerateMoments,
}
