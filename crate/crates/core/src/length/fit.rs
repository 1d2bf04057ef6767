use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LengthError;
use crate::maskops::{principal_axis, BinaryMask, ConvexHull, MaskError, Skeleton};

pub const MAX_DEGREE: usize = 4;
const RANK_TOLERANCE: f64 = 1e-10;

/// Conditions worth surfacing alongside a length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// No dominant orientation; the longer bounding-box side was used.
    IsotropicAxis,
    /// Too few distinct abscissae for a full-rank degree-4 fit.
    DegreeLowered,
    /// A higher-degree fit left the band around the hull and was replaced.
    SanityLowered,
}

impl FitFlag {
    pub fn name(self) -> &'static str {
        match self {
            FitFlag::IsotropicAxis => "isotropic_axis",
            FitFlag::DegreeLowered => "degree_lowered",
            FitFlag::SanityLowered => "sanity_lowered",
        }
    }
}

/// Rotated frame: `u` along the axis, `v` across it, origin at `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFrame {
    pub angle: f64,
    pub center: (f64, f64),
}

impl AxisFrame {
    #[inline]
    pub fn to_frame(&self, p: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (p.0 - self.center.0, p.1 - self.center.1);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    #[inline]
    pub fn to_image(&self, u: f64, v: f64) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [self.center.0 + c * u - s * v, self.center.1 + s * u + c * v]
    }
}

/// Principal-axis frame of a mask, falling back to the longer bounding-box side
/// when the foreground has no dominant direction.
pub fn axis_frame(mask: &BinaryMask) -> Result<(AxisFrame, Vec<FitFlag>), MaskError> {
    let axis = principal_axis(mask)?;
    if !axis.is_isotropic() {
        return Ok((
            AxisFrame {
                angle: axis.angle,
                center: axis.centroid,
            },
            Vec::new(),
        ));
    }
    let (x0, y0, x1, y1) = mask.bounding_box().ok_or(MaskError::EmptyMask)?;
    let angle = if x1 - x0 >= y1 - y0 { 0.0 } else { FRAC_PI_2 };
    Ok((
        AxisFrame {
            angle,
            center: axis.centroid,
        },
        vec![FitFlag::IsotropicAxis],
    ))
}

/// Polynomial centerline `v = sum c_k t^k` in an axis frame, where
/// `u = mid + half * t` and the curve is evaluated for `t` in `domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterlineFit {
    pub frame: AxisFrame,
    pub coeffs: Vec<f64>,
    pub mid: f64,
    pub half: f64,
    pub domain: (f64, f64),
    pub flags: Vec<FitFlag>,
}

impl CenterlineFit {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Domain in the unscaled rotated abscissa, pixels.
    pub fn u_range(&self) -> (f64, f64) {
        (
            self.mid + self.half * self.domain.0,
            self.mid + self.half * self.domain.1,
        )
    }

    pub fn point_at_u(&self, u: f64) -> [f64; 2] {
        let v = self.eval((u - self.mid) / self.half);
        self.frame.to_image(u, v)
    }

    /// Image points every `step` pixels of abscissa (spacing shrunk so both ends are hit).
    pub fn sample(&self, step: f64) -> Result<Vec<[f64; 2]>, LengthError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(LengthError::InvalidStep(step));
        }
        let (lo, hi) = self.u_range();
        if !(hi > lo) {
            return Err(LengthError::ZeroExtent);
        }
        let n = ((hi - lo) / step).ceil().max(1.0) as usize;
        Ok((0..=n)
            .map(|i| self.point_at_u(lo + (hi - lo) * i as f64 / n as f64))
            .collect())
    }

    /// The same curve with image coordinates shifted by `(dx, dy)`.
    pub fn translated(mut self, dx: f64, dy: f64) -> Self {
        self.frame.center = (self.frame.center.0 + dx, self.frame.center.1 + dy);
        self
    }
}

fn vandermonde(ts: &[f64], degree: usize) -> DMatrix<f64> {
    DMatrix::from_fn(ts.len(), degree + 1, |i, j| ts[i].powi(j as i32))
}

/// Least-squares polynomial by SVD, or `None` when the design is rank-deficient.
fn solve(ts: &[f64], vs: &DVector<f64>, degree: usize) -> Option<Vec<f64>> {
    let a = vandermonde(ts, degree);
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let (smax, smin) = (s.max(), s.min());
    if !(smax > 0.0) || smin <= RANK_TOLERANCE * smax {
        return None;
    }
    let x = svd.solve(vs, 0.0).ok()?;
    Some(x.iter().copied().collect())
}

/// Fits the centerline to the skeleton and sets its domain to the hull's abscissa extent.
///
/// The degree drops below 4 when the design is rank-deficient, and again while the
/// curve strays from the band `|v - v_mid| <= extent` across the hull.
pub fn fit_centerline(
    skeleton: &Skeleton,
    hull: &ConvexHull,
    frame: AxisFrame,
) -> Result<CenterlineFit, LengthError> {
    if skeleton.is_empty() {
        return Err(LengthError::EmptySkeleton);
    }
    let uv: Vec<(f64, f64)> = skeleton
        .points()
        .iter()
        .map(|&(x, y)| frame.to_frame((x as f64, y as f64)))
        .collect();
    let (umin, umax) = uv
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let mid = 0.5 * (umin + umax);
    let half = (0.5 * (umax - umin)).max(0.5);
    let ts: Vec<f64> = uv.iter().map(|p| (p.0 - mid) / half).collect();
    let vs = DVector::from_iterator(uv.len(), uv.iter().map(|p| p.1));

    let mut sorted = ts.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    let distinct = sorted.len();

    let hull_uv: Vec<(f64, f64)> = hull
        .vertices()
        .iter()
        .map(|&(x, y)| frame.to_frame((x as f64, y as f64)))
        .collect();
    let (hu0, hu1, hv0, hv1) = hull_uv.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p.0), b.max(p.0), c.min(p.1), d.max(p.1)),
    );
    let domain = ((hu0 - mid) / half, (hu1 - mid) / half);
    let band_mid = 0.5 * (hv0 + hv1);
    let band = (hv1 - hv0).max(1.0);

    let mut flags = Vec::new();
    let mut degree = MAX_DEGREE.min(distinct - 1);
    if degree < MAX_DEGREE {
        flags.push(FitFlag::DegreeLowered);
    }
    loop {
        let Some(coeffs) = solve(&ts, &vs, degree) else {
            if degree == 0 {
                return Err(LengthError::EmptySkeleton);
            }
            degree -= 1;
            if !flags.contains(&FitFlag::DegreeLowered) {
                flags.push(FitFlag::DegreeLowered);
            }
            continue;
        };
        let fit = CenterlineFit {
            frame,
            coeffs,
            mid,
            half,
            domain,
            flags: flags.clone(),
        };
        if degree == 0 || within_band(&fit, band_mid, band) {
            return Ok(fit);
        }
        degree -= 1;
        if !flags.contains(&FitFlag::SanityLowered) {
            flags.push(FitFlag::SanityLowered);
        }
    }
}

fn within_band(fit: &CenterlineFit, mid: f64, band: f64) -> bool {
    let (lo, hi) = fit.u_range();
    let n = ((hi - lo).ceil().max(1.0)) as usize;
    (0..=n).all(|i| {
        let u = lo + (hi - lo) * i as f64 / n as f64;
        (fit.eval((u - fit.mid) / fit.half) - mid).abs() <= band
    })
}
