use std::f64::consts::{FRAC_PI_2, PI};

use super::{BinaryMask, MaskError};

/// Eigenvalue ratio below which the foreground is treated as having no dominant direction.
pub const ISOTROPY_RATIO: f64 = 1.05;

/// Dominant orientation of a mask's foreground from its second moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxis {
    /// Angle of the major axis in image coordinates (x right, y down), in `(-pi/2, pi/2]`.
    pub angle: f64,
    /// Foreground centroid in pixels.
    pub centroid: (f64, f64),
    /// Major over minor covariance eigenvalue (infinite for a one-pixel-wide line).
    pub eigen_ratio: f64,
}

impl PrincipalAxis {
    pub fn is_isotropic(&self) -> bool {
        self.eigen_ratio < ISOTROPY_RATIO
    }
}

pub(crate) fn wrap_half_turn(mut a: f64) -> f64 {
    while a <= -FRAC_PI_2 {
        a += PI;
    }
    while a > FRAC_PI_2 {
        a -= PI;
    }
    a
}

pub fn principal_axis(mask: &BinaryMask) -> Result<PrincipalAxis, MaskError> {
    let points: Vec<(f64, f64)> = mask.foreground().map(|(x, y)| (x as f64, y as f64)).collect();
    principal_axis_of_points(&points)
}

pub fn principal_axis_of_points(points: &[(f64, f64)]) -> Result<PrincipalAxis, MaskError> {
    let mut n = 0usize;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(x, y) in points {
        n += 1;
        sx += x;
        sy += y;
    }
    if n < 2 {
        return Err(MaskError::TooFewPixels { needed: 2, found: n });
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / n as f64, syy / n as f64, sxy / n as f64);
    if sxx + syy <= 0.0 {
        return Err(MaskError::DegenerateMoments);
    }
    let half_trace = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let major = half_trace + disc;
    let minor = half_trace - disc;
    let angle = wrap_half_turn(0.5 * (2.0 * sxy).atan2(sxx - syy));
    let eigen_ratio = if minor <= major * 1e-15 {
        f64::INFINITY
    } else {
        major / minor
    };
    Ok(PrincipalAxis {
        angle,
        centroid: (mx, my),
        eigen_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotated_bar(angle_deg: f64) -> BinaryMask {
        let (s, c) = angle_deg.to_radians().sin_cos();
        BinaryMask::from_fn(200, 200, |x, y| {
            let (dx, dy) = (x as f64 - 100.0, y as f64 - 100.0);
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            u.abs() <= 70.3 && v.abs() <= 6.3
        })
        .unwrap()
    }

    #[test]
    fn horizontal_bar_is_zero() {
        let m = BinaryMask::from_fn(50, 10, |x, y| (5..45).contains(&x) && (3..7).contains(&y)).unwrap();
        let a = principal_axis(&m).unwrap();
        assert!(a.angle.abs() < 1e-12);
        assert!(!a.is_isotropic());
    }

    #[test]
    fn rotated_bar_recovers_angle() {
        for deg in [30.0, -30.0, 75.0, 90.0] {
            let a = principal_axis(&rotated_bar(deg)).unwrap();
            let want = wrap_half_turn(f64::to_radians(deg));
            assert!((a.angle - want).abs().to_degrees() < 0.5, "{deg}: {}", a.angle.to_degrees());
        }
    }

    #[test]
    fn disk_is_isotropic() {
        let m = BinaryMask::from_fn(61, 61, |x, y| {
            let (dx, dy) = (x as f64 - 30.0, y as f64 - 30.0);
            dx * dx + dy * dy <= 625.0
        })
        .unwrap();
        assert!(principal_axis(&m).unwrap().is_isotropic());
    }

    #[test]
    fn single_pixel_errors() {
        let m = BinaryMask::from_fn(3, 3, |x, y| x == 1 && y == 1).unwrap();
        assert!(principal_axis(&m).is_err());
    }
}
