use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::geometry::{
    project, BoardSpec, CalibrationFile, CameraModel, Correspondence, Distortion, Homography, Intrinsics,
    PlanarView, ViewPose,
};

/// A camera looking down at the belt. The belt frame has its origin where the
/// optical axis meets the belt, with the belt's z axis pointing away from the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthCamera {
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
    pub height_mm: f64,
    /// Rotation of the camera about its x and y axes, radians.
    pub tilt: [f64; 2],
    pub image_size: [usize; 2],
    /// Usable belt area, centred on the belt origin.
    pub belt_size_mm: [f64; 2],
}

impl Default for SynthCamera {
    fn default() -> Self {
        Self {
            intrinsics: Intrinsics::new(3696.0, 3696.0, 1231.5, 1027.5),
            distortion: Distortion::radial(-0.1, 0.0),
            height_mm: 1500.0,
            tilt: [0.0, 0.0],
            image_size: [2464, 2056],
            belt_size_mm: [960.0, 800.0],
        }
    }
}

impl SynthCamera {
    /// Belt-to-camera pose: belt point `X` maps to `R X + t`.
    pub fn belt_pose(&self) -> ViewPose {
        ViewPose {
            rotation: Rotation3::from_euler_angles(self.tilt[0], self.tilt[1], 0.0),
            translation: Vector3::new(0.0, 0.0, self.height_mm),
        }
    }

    /// The generating camera as a [`CameraModel`].
    pub fn model(&self) -> Result<CameraModel, SynthError> {
        let pose = self.belt_pose();
        let r = pose.rotation.matrix();
        let g = self.intrinsics.matrix()
            * Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), pose.translation]);
        let inv = g
            .try_inverse()
            .ok_or_else(|| SynthError::CameraNotWellPosed("belt plane passes through the camera".into()))?;
        Ok(CameraModel::new(self.intrinsics, self.distortion, Homography::from_matrix(inv)?)?)
    }

    pub fn belt_contains(&self, p: [f64; 2], margin: f64) -> bool {
        p[0].abs() <= 0.5 * self.belt_size_mm[0] - margin && p[1].abs() <= 0.5 * self.belt_size_mm[1] - margin
    }

    /// Checks the camera is in front of the belt and sees all of it.
    pub fn validate(&self) -> Result<(), SynthError> {
        self.intrinsics.validate()?;
        if !(self.height_mm > 0.0) {
            return Err(SynthError::CameraNotWellPosed("camera height must be positive".into()));
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return Err(SynthError::CameraNotWellPosed("image size must be positive".into()));
        }
        let pose = self.belt_pose();
        let [bw, bh] = self.belt_size_mm;
        let (w, h) = (self.image_size[0] as f64, self.image_size[1] as f64);
        for i in 0..=40 {
            let s = i as f64 / 40.0 - 0.5;
            for b in [[s * bw, -0.5 * bh], [s * bw, 0.5 * bh], [-0.5 * bw, s * bh], [0.5 * bw, s * bh]] {
                let p = project(&self.intrinsics, &self.distortion, &pose, b);
                match p {
                    Some(p) if p[0] >= -0.5 && p[1] >= -0.5 && p[0] <= w - 0.5 && p[1] <= h - 0.5 => {}
                    _ => {
                        return Err(SynthError::CameraNotWellPosed(format!(
                            "belt point {b:?} is outside the {}x{} image",
                            self.image_size[0], self.image_size[1]
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

pub const CALIBRATION_BOARD: BoardSpec = BoardSpec {
    square_mm: 20.0,
    cols: 11,
    rows: 8,
};

const VIEW_ATTEMPTS: usize = 500;
const IMAGE_MARGIN_PX: f64 = 10.0;

/// `n` checkerboard views: the first lies flat on the belt, the rest are tilted
/// and raised towards the camera. Corner positions get Gaussian noise of
/// `noise_px` standard deviation.
pub fn generate_calibration_views(
    camera: &SynthCamera,
    n: usize,
    seed: u64,
    noise_px: f64,
) -> Result<CalibrationFile, SynthError> {
    camera.validate()?;
    if n < 3 {
        return Err(SynthError::InvalidConfig(format!("need at least 3 calibration views, got {n}")));
    }
    if !(noise_px >= 0.0 && noise_px.is_finite()) {
        return Err(SynthError::InvalidConfig(format!("noise must be non-negative, got {noise_px}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_px).expect("finite non-negative std");
    let board = CALIBRATION_BOARD;
    let corners = board.corners();
    let centre = [
        0.5 * board.square_mm * (board.cols - 1) as f64,
        0.5 * board.square_mm * (board.rows - 1) as f64,
    ];
    let cam = camera.belt_pose();
    let (w, h) = (camera.image_size[0] as f64, camera.image_size[1] as f64);
    let [bw, bh] = camera.belt_size_mm;
    let mut views = Vec::with_capacity(n);
    for i in 0..n {
        let flat = i == 0;
        let mut found = None;
        for _ in 0..VIEW_ATTEMPTS {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let (rot, lift) = if flat {
                (Rotation3::from_euler_angles(0.0, 0.0, phi), 0.0)
            } else {
                let tilt = |rng: &mut ChaCha8Rng| {
                    let a: f64 = rng.random_range(0.15..0.7);
                    if rng.random_bool(0.5) { a } else { -a }
                };
                let (a, b) = (tilt(&mut rng), tilt(&mut rng));
                (
                    Rotation3::from_euler_angles(0.0, 0.0, phi) * Rotation3::from_euler_angles(a, b, 0.0),
                    rng.random_range(0.0..0.45 * camera.height_mm),
                )
            };
            let c = Vector3::new(
                rng.random_range(-0.45 * bw..0.45 * bw),
                rng.random_range(-0.45 * bh..0.45 * bh),
                -lift,
            );
            let pose = ViewPose {
                rotation: cam.rotation * rot,
                translation: cam.rotation * (c - rot * Vector3::new(centre[0], centre[1], 0.0)) + cam.translation,
            };
            let projected: Option<Vec<[f64; 2]>> = corners
                .iter()
                .map(|&b| {
                    project(&camera.intrinsics, &camera.distortion, &pose, b).filter(|p| {
                        p[0] >= IMAGE_MARGIN_PX
                            && p[1] >= IMAGE_MARGIN_PX
                            && p[0] <= w - 1.0 - IMAGE_MARGIN_PX
                            && p[1] <= h - 1.0 - IMAGE_MARGIN_PX
                    })
                })
                .collect();
            if let Some(p) = projected {
                found = Some(p);
                break;
            }
        }
        let projected = found.ok_or_else(|| {
            SynthError::CameraNotWellPosed(format!("no calibration view {i} keeps the board inside the image"))
        })?;
        let correspondences = projected
            .into_iter()
            .zip(&corners)
            .map(|(p, &b)| Correspondence {
                image_xy: [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)],
                board_xy: b,
            })
            .collect();
        views.push(PlanarView {
            flat_on_belt: flat,
            correspondences,
        });
    }
    Ok(CalibrationFile {
        format: 1,
        group: None,
        image_size: Some(camera.image_size),
        board,
        views,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{calibrate_planar, CalibrationOptions};

    #[test]
    fn nadir_scale_and_origin() {
        let cam = SynthCamera::default();
        cam.validate().unwrap();
        let m = cam.model().unwrap();
        let o = m.belt_to_pixel([0.0, 0.0]).unwrap();
        assert!((o[0] - 1231.5).abs() < 1e-9 && (o[1] - 1027.5).abs() < 1e-9);
        let p = m.belt.apply([1331.5, 1027.5]).unwrap();
        assert!((p[0] - 100.0 * 1500.0 / 3696.0).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn oversized_belt_is_rejected() {
        let cam = SynthCamera {
            belt_size_mm: [2000.0, 800.0],
            ..SynthCamera::default()
        };
        assert!(matches!(cam.validate(), Err(SynthError::CameraNotWellPosed(_))));
    }

    #[test]
    fn views_have_one_flat_and_close_the_loop() {
        let cam = SynthCamera {
            tilt: [0.03, -0.02],
            ..SynthCamera::default()
        };
        let file = generate_calibration_views(&cam, 20, 3, 0.0).unwrap();
        file.validate().unwrap();
        assert_eq!(file.views.len(), 20);
        assert_eq!(file.views.iter().filter(|v| v.flat_on_belt).count(), 1);
        let res = calibrate_planar(&file.views, &CalibrationOptions::default()).unwrap();
        let got = res.camera.intrinsics;
        assert!((got.fx / cam.intrinsics.fx - 1.0).abs() < 1e-6, "{got:?}");
        assert!((res.camera.distortion.k1 / cam.distortion.k1 - 1.0).abs() < 1e-4);
        // the flat board fixes the belt frame up to an in-plane rigid motion, so
        // distances measured through the calibrated camera agree with the truth
        let truth = cam.model().unwrap();
        let d = |m: &CameraModel, a: [f64; 2], b: [f64; 2]| {
            let (p, q) = (m.pixel_to_belt(a).unwrap(), m.pixel_to_belt(b).unwrap());
            (p[0] - q[0]).hypot(p[1] - q[1])
        };
        let (a, b) = ([300.0, 400.0], [2100.0, 1700.0]);
        assert!((d(&res.camera, a, b) - d(&truth, a, b)).abs() < 1e-4);
    }

    #[test]
    fn same_seed_same_views() {
        let cam = SynthCamera::default();
        let a = generate_calibration_views(&cam, 6, 11, 0.2).unwrap();
        let b = generate_calibration_views(&cam, 6, 11, 0.2).unwrap();
        assert_eq!(a, b);
    }
}
