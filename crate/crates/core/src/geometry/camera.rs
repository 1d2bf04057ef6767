use nalgebra::{Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Homography};

/// Convergence tolerance of the inverse distortion iteration, in pixels.
pub const UNDISTORT_TOLERANCE_PX: f64 = 1e-8;
/// Total iteration cap of the inverse distortion (fixed point, then Newton).
pub const UNDISTORT_MAX_ITERATIONS: usize = 50;
const FIXED_POINT_ITERATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.skew];
        if all.iter().any(|v| !v.is_finite()) || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive and finite, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_to_normalized(&self, p: [f64; 2]) -> [f64; 2] {
        let y = (p[1] - self.cy) / self.fy;
        let x = (p[0] - self.cx - self.skew * y) / self.fx;
        [x, y]
    }

    #[inline]
    pub fn normalized_to_pixel(&self, n: [f64; 2]) -> [f64; 2] {
        [
            self.fx * n[0] + self.skew * n[1] + self.cx,
            self.fy * n[1] + self.cy,
        ]
    }
}

/// Brown–Conrady lens distortion: radial `k1, k2, k3`, tangential `p1, p2`,
/// acting on normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distortion {
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub k3: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
}

impl Distortion {
    pub fn radial(k1: f64, k2: f64) -> Self {
        Self {
            k1,
            k2,
            ..Self::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    #[inline]
    pub fn apply(&self, n: [f64; 2]) -> [f64; 2] {
        let [x, y] = n;
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        [
            x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        ]
    }

    fn jacobian(&self, n: [f64; 2]) -> Matrix2<f64> {
        let [x, y] = n;
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let d_radial = self.k1 + 2.0 * self.k2 * r2 + 3.0 * self.k3 * r2 * r2; // d radial / d r2
        let dxdx = radial + 2.0 * x * x * d_radial + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
        let dxdy = 2.0 * x * y * d_radial + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dydx = 2.0 * x * y * d_radial + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dydy = radial + 2.0 * y * y * d_radial + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
        Matrix2::new(dxdx, dxdy, dydx, dydy)
    }
}

/// Pinhole camera with lens distortion and a homography from undistorted pixels
/// to belt-plane millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
    pub belt: Homography,
}

impl CameraModel {
    pub fn new(
        intrinsics: Intrinsics,
        distortion: Distortion,
        belt: Homography,
    ) -> Result<Self, GeometryError> {
        intrinsics.validate()?;
        Ok(Self {
            intrinsics,
            distortion,
            belt,
        })
    }

    /// Treats pixels directly as belt coordinates under `belt`, with no distortion.
    pub fn planar(belt: Homography) -> Self {
        Self {
            intrinsics: Intrinsics::new(1.0, 1.0, 0.0, 0.0),
            distortion: Distortion::default(),
            belt,
        }
    }

    /// Maps an ideal (undistorted) pixel to where the lens actually images it.
    pub fn distort_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        let n = self.intrinsics.pixel_to_normalized(p);
        self.intrinsics.normalized_to_pixel(self.distortion.apply(n))
    }

    /// Inverts the lens distortion: fixed-point iteration, then Newton if the
    /// fixed point has not converged.
    pub fn undistort_point(&self, p: [f64; 2]) -> Result<[f64; 2], GeometryError> {
        if self.distortion.is_zero() {
            return Ok(p);
        }
        let target = self.intrinsics.pixel_to_normalized(p);
        let d = &self.distortion;
        // a root past the fold of the radial polynomial is not a valid inverse
        let residual_px = |n: [f64; 2]| {
            let r2 = n[0] * n[0] + n[1] * n[1];
            let radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
            if radial <= 0.0 || d.jacobian(n).determinant() <= 0.0 {
                return f64::INFINITY;
            }
            let q = self.intrinsics.normalized_to_pixel(d.apply(n));
            (q[0] - p[0]).hypot(q[1] - p[1])
        };
        let mut n = target;
        let mut iterations = 0;
        while iterations < FIXED_POINT_ITERATIONS {
            if residual_px(n) < UNDISTORT_TOLERANCE_PX {
                return Ok(self.intrinsics.normalized_to_pixel(n));
            }
            let [x, y] = n;
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
            if radial <= 0.0 || !radial.is_finite() {
                break;
            }
            let tx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
            let ty = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
            n = [(target[0] - tx) / radial, (target[1] - ty) / radial];
            iterations += 1;
        }
        if !(n[0].is_finite() && n[1].is_finite()) {
            n = target;
        }
        while iterations < UNDISTORT_MAX_ITERATIONS {
            if residual_px(n) < UNDISTORT_TOLERANCE_PX {
                return Ok(self.intrinsics.normalized_to_pixel(n));
            }
            let f = d.apply(n);
            let r = Vector2::new(f[0] - target[0], f[1] - target[1]);
            let Some(inv) = d.jacobian(n).try_inverse() else {
                break;
            };
            let step = inv * r;
            n = [n[0] - step.x, n[1] - step.y];
            iterations += 1;
        }
        if residual_px(n) < UNDISTORT_TOLERANCE_PX {
            return Ok(self.intrinsics.normalized_to_pixel(n));
        }
        Err(GeometryError::NonConvergence { point: p })
    }

    /// Distorted pixel → belt-plane millimetres.
    pub fn pixel_to_belt(&self, p: [f64; 2]) -> Result<[f64; 2], GeometryError> {
        let u = self.undistort_point(p)?;
        self.belt.apply(u)
    }

    /// Belt-plane millimetres → distorted pixel.
    pub fn belt_to_pixel(&self, b: [f64; 2]) -> Result<[f64; 2], GeometryError> {
        let u = self.belt.inverse()?.apply(b)?;
        Ok(self.distort_pixel(u))
    }
}

/// Versioned on-disk form of a [`CameraModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
    #[serde(default)]
    pub distortion: Distortion,
    pub belt_homography: Homography,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub views: usize,
    pub flat_views: usize,
    pub rms_reprojection_closed_form_px: f64,
    pub rms_reprojection_px: f64,
    pub belt_rms_transfer_mm: f64,
}

pub const CAMERA_FORMAT: u32 = 1;

impl CameraFile {
    pub fn from_model(model: &CameraModel) -> Self {
        let i = model.intrinsics;
        Self {
            format: CAMERA_FORMAT,
            group: None,
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            skew: i.skew,
            distortion: model.distortion,
            belt_homography: model.belt,
            image_size: None,
            calibration: None,
        }
    }

    pub fn to_model(&self) -> Result<CameraModel, GeometryError> {
        if self.format != CAMERA_FORMAT {
            return Err(GeometryError::InvalidCamera(format!(
                "unsupported camera file format {} (expected {CAMERA_FORMAT})",
                self.format
            )));
        }
        CameraModel::new(
            Intrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
                skew: self.skew,
            },
            self.distortion,
            self.belt_homography,
        )
    }
}
