use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::lm::{self, LeastSquares, LmConfig};
use super::GeometryError;

/// Smallest admissible `|det H|` after normalizing `H[2][2]` to 1.
pub const DET_FLOOR: f64 = 1e-12;
/// Smallest admissible homogeneous `w` when mapping a point.
pub const W_FLOOR: f64 = 1e-12;

/// Planar projective map, stored with the bottom-right entry equal to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::Degenerate("non-finite homography entry".into()));
        }
        let scale = m.norm();
        if scale == 0.0 || m[(2, 2)].abs() <= 1e-14 * scale {
            return Err(GeometryError::Degenerate(
                "homography bottom-right entry is zero".into(),
            ));
        }
        let m = m / m[(2, 2)];
        if m.determinant().abs() < DET_FLOOR {
            return Err(GeometryError::Degenerate(format!(
                "homography determinant {:.3e} below floor",
                m.determinant()
            )));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_row_slice(&rows.concat()))
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn scaling(s: f64) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn apply(&self, p: [f64; 2]) -> Result<[f64; 2], GeometryError> {
        let v = self.m * Vector3::new(p[0], p[1], 1.0);
        if v.z.abs() < W_FLOOR {
            return Err(GeometryError::PlaneAtInfinity { point: p });
        }
        Ok([v.x / v.z, v.y / v.z])
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| GeometryError::Degenerate("homography is singular".into()))?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self, GeometryError> {
        Self::from_matrix(self.m * other.m)
    }

    /// Relative Frobenius distance between two normalized homographies.
    pub fn relative_error(&self, other: &Homography) -> f64 {
        (self.m - other.m).norm() / other.m.norm()
    }
}

impl Serialize for Homography {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Homography::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// Source ↔ destination correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub src: [f64; 2],
    pub dst: [f64; 2],
}

impl PointPair {
    pub fn new(src: [f64; 2], dst: [f64; 2]) -> Self {
        Self { src, dst }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HomographyEstimate {
    pub homography: Homography,
    /// RMS forward transfer error `|H src - dst|`, in destination units.
    pub rms_transfer: f64,
}

/// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
fn normalizing_transform(points: &[[f64; 2]]) -> Result<Matrix3<f64>, GeometryError> {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p[0] / n, b + p[1] / n));
    let mean_dist = points
        .iter()
        .map(|p| ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return Err(GeometryError::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0))
}

fn collinear(points: &[[f64; 2]]) -> bool {
    // spread of the points along their minor principal direction
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p[0] / n, b + p[1] / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let half = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let minor = half - disc;
    let major = half + disc;
    minor <= 1e-12 * major
}

fn triple_collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let scale = ((b[0] - a[0]).hypot(b[1] - a[1])) * ((c[0] - a[0]).hypot(c[1] - a[1]));
    cross.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)
}

/// Normalized direct linear transform.
///
/// Both point sets are conditioned with a similarity (centroid at the origin, mean
/// distance sqrt(2)), the 2n x 9 design matrix is solved for its right null vector
/// by SVD, and the result is de-normalized.
pub fn estimate_homography(pairs: &[PointPair]) -> Result<HomographyEstimate, GeometryError> {
    if pairs.len() < 4 {
        return Err(GeometryError::TooFewCorrespondences {
            needed: 4,
            found: pairs.len(),
        });
    }
    if pairs.iter().any(|p| p.src.iter().chain(&p.dst).any(|v| !v.is_finite())) {
        return Err(GeometryError::Degenerate("non-finite correspondence".into()));
    }
    let src: Vec<[f64; 2]> = pairs.iter().map(|p| p.src).collect();
    let dst: Vec<[f64; 2]> = pairs.iter().map(|p| p.dst).collect();
    if collinear(&src) || collinear(&dst) {
        return Err(GeometryError::Degenerate("correspondences are collinear".into()));
    }
    if pairs.len() == 4 {
        for skip in 0..4 {
            let idx: Vec<usize> = (0..4).filter(|&i| i != skip).collect();
            for pts in [&src, &dst] {
                if triple_collinear(pts[idx[0]], pts[idx[1]], pts[idx[2]]) {
                    return Err(GeometryError::Degenerate(
                        "three of four points are collinear".into(),
                    ));
                }
            }
        }
    }

    let t_src = normalizing_transform(&src)?;
    let t_dst = normalizing_transform(&dst)?;
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, p) in pairs.iter().enumerate() {
        let s = t_src * Vector3::new(p.src[0], p.src[1], 1.0);
        let d = t_dst * Vector3::new(p.dst[0], p.dst[1], 1.0);
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| GeometryError::Numerical("SVD did not converge".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (smallest, second) = (order[0], order[1]);
    if sv[second] <= 1e-10 * sv[order[order.len() - 1]] {
        return Err(GeometryError::Degenerate(
            "design matrix has a multi-dimensional null space".into(),
        ));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| GeometryError::Numerical("conditioning transform not invertible".into()))?;
    let homography = Homography::from_matrix(t_dst_inv * hn * t_src)?;
    let rms_transfer = rms_transfer(&homography, pairs)?;
    Ok(HomographyEstimate {
        homography,
        rms_transfer,
    })
}

pub fn rms_transfer(h: &Homography, pairs: &[PointPair]) -> Result<f64, GeometryError> {
    let mut sum = 0.0;
    for p in pairs {
        let q = h.apply(p.src)?;
        sum += (q[0] - p.dst[0]).powi(2) + (q[1] - p.dst[1]).powi(2);
    }
    Ok((sum / pairs.len() as f64).sqrt())
}

struct TransferProblem<'a> {
    pairs: &'a [PointPair],
}

fn params_to_matrix(p: &DVector<f64>) -> Matrix3<f64> {
    Matrix3::new(p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], 1.0)
}

impl LeastSquares for TransferProblem<'_> {
    fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let m = params_to_matrix(p);
        let mut r = DVector::zeros(2 * self.pairs.len());
        for (i, pair) in self.pairs.iter().enumerate() {
            let v = m * Vector3::new(pair.src[0], pair.src[1], 1.0);
            if v.z.abs() < W_FLOOR {
                return None;
            }
            r[2 * i] = v.x / v.z - pair.dst[0];
            r[2 * i + 1] = v.y / v.z - pair.dst[1];
        }
        Some(r)
    }
}

/// Levenberg–Marquardt refinement of the forward transfer error, starting from `initial`.
pub fn refine_homography(
    pairs: &[PointPair],
    initial: &Homography,
) -> Result<HomographyEstimate, GeometryError> {
    let r = initial.to_rows();
    let start = DVector::from_vec(vec![
        r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1],
    ]);
    let problem = TransferProblem { pairs };
    let report = lm::minimize(&problem, start, &LmConfig::default())
        .ok_or_else(|| GeometryError::Numerical("initial homography maps a point to infinity".into()))?;
    let homography = Homography::from_matrix(params_to_matrix(&report.params))?;
    let rms_transfer = rms_transfer(&homography, pairs)?;
    Ok(HomographyEstimate {
        homography,
        rms_transfer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs_under(h: &Homography, src: &[[f64; 2]]) -> Vec<PointPair> {
        src.iter().map(|&s| PointPair::new(s, h.apply(s).unwrap())).collect()
    }

    #[test]
    fn unit_square_to_itself_is_identity() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let est = estimate_homography(&pairs_under(&Homography::identity(), &sq)).unwrap();
        assert!(est.homography.relative_error(&Homography::identity()) < 1e-12);
        assert!(est.rms_transfer < 1e-12);
    }

    #[test]
    fn recovers_projective_map() {
        let h = Homography::from_rows([[1.2, 0.1, 30.0], [-0.05, 0.9, -12.0], [1e-4, -2e-4, 1.0]]).unwrap();
        let src: Vec<[f64; 2]> = (0..20)
            .map(|i| [(i % 5) as f64 * 97.0 + (i * i) as f64 * 0.7, (i / 5) as f64 * 83.0 + i as f64])
            .collect();
        let est = estimate_homography(&pairs_under(&h, &src)).unwrap();
        assert!(est.homography.relative_error(&h) < 1e-10);
    }

    #[test]
    fn rejects_collinear_and_too_few() {
        let line: Vec<[f64; 2]> = (0..6).map(|i| [i as f64, 2.0 * i as f64]).collect();
        let pairs = pairs_under(&Homography::identity(), &line);
        assert!(matches!(estimate_homography(&pairs), Err(GeometryError::Degenerate(_))));
        assert!(matches!(
            estimate_homography(&pairs[..3]),
            Err(GeometryError::TooFewCorrespondences { .. })
        ));
        let three_on_line = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]];
        let pairs = pairs_under(&Homography::identity(), &three_on_line);
        assert!(matches!(estimate_homography(&pairs), Err(GeometryError::Degenerate(_))));
    }

    #[test]
    fn apply_rejects_points_at_infinity() {
        let h = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(h.apply([-1.0, 3.0]), Err(GeometryError::PlaneAtInfinity { .. })));
    }

    #[test]
    fn singular_matrix_rejected() {
        assert!(Homography::from_rows([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn refinement_does_not_increase_transfer_error() {
        let h = Homography::from_rows([[0.4, 0.02, 5.0], [0.01, 0.41, -3.0], [2e-5, 1e-5, 1.0]]).unwrap();
        let src: Vec<[f64; 2]> = (0..30).map(|i| [(i % 6) as f64 * 300.0, (i / 6) as f64 * 250.0]).collect();
        let mut pairs = pairs_under(&h, &src);
        for (i, p) in pairs.iter_mut().enumerate() {
            p.dst[0] += ((i * 7919) % 13) as f64 * 0.01 - 0.06;
            p.dst[1] += ((i * 104729) % 11) as f64 * 0.01 - 0.05;
        }
        let dlt = estimate_homography(&pairs).unwrap();
        let refined = refine_homography(&pairs, &dlt.homography).unwrap();
        assert!(refined.rms_transfer <= dlt.rms_transfer + 1e-15);
    }

    #[test]
    fn serde_roundtrip() {
        let h = Homography::from_rows([[2.0, 0.0, 1.0], [0.0, 3.0, -1.0], [0.0, 0.0, 1.0]]).unwrap();
        let s = serde_json::to_string(&h).unwrap();
        let back: Homography = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }
}
