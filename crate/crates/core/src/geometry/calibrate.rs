//! Planar-target calibration: closed-form intrinsics from per-view homographies,
//! followed by joint Levenberg–Marquardt refinement of intrinsics, distortion and
//! every view's pose.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::camera::{CameraModel, Distortion, Intrinsics};
use super::homography::{estimate_homography, refine_homography, Homography, PointPair};
use super::lm::{self, fd_step, LeastSquares, LmConfig};
use super::GeometryError;

/// Checkerboard geometry: `cols` x `rows` inner corners at `square_mm` pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSpec {
    pub square_mm: f64,
    pub cols: usize,
    pub rows: usize,
}

impl BoardSpec {
    /// Inner-corner positions in board millimetres, row by row.
    pub fn corners(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.cols * self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push([c as f64 * self.square_mm, r as f64 * self.square_mm]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub image_xy: [f64; 2],
    pub board_xy: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarView {
    #[serde(default)]
    pub flat_on_belt: bool,
    pub correspondences: Vec<Correspondence>,
}

impl PlanarView {
    /// Board → image pairs.
    fn board_to_image(&self) -> Vec<PointPair> {
        self.correspondences
            .iter()
            .map(|c| PointPair::new(c.board_xy, c.image_xy))
            .collect()
    }
}

/// One group's calibration input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    #[serde(default = "one")]
    pub format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[usize; 2]>,
    pub board: BoardSpec,
    pub views: Vec<PlanarView>,
}

fn one() -> u32 {
    1
}

impl CalibrationFile {
    /// Checks that every board point sits on the declared grid.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let b = &self.board;
        if !(b.square_mm > 0.0) || b.cols == 0 || b.rows == 0 {
            return Err(GeometryError::InvalidBoard(format!(
                "board needs positive pitch and grid size, got {b:?}"
            )));
        }
        for (vi, view) in self.views.iter().enumerate() {
            if view.correspondences.len() < 4 {
                return Err(GeometryError::InvalidBoard(format!(
                    "view {vi} has {} correspondences, need at least 4",
                    view.correspondences.len()
                )));
            }
            for (ci, c) in view.correspondences.iter().enumerate() {
                for (axis, (&v, n)) in c.board_xy.iter().zip([b.cols, b.rows]).enumerate() {
                    let k = v / b.square_mm;
                    let on_grid = (k - k.round()).abs() < 1e-6 && k.round() >= 0.0 && (k.round() as usize) < n;
                    if !on_grid {
                        return Err(GeometryError::InvalidBoard(format!(
                            "view {vi} point {ci}: board coordinate {v} (axis {axis}) is not on the {}x{} grid at {} mm",
                            b.cols, b.rows, b.square_mm
                        )));
                    }
                }
                if c.image_xy.iter().any(|v| !v.is_finite()) {
                    return Err(GeometryError::InvalidBoard(format!(
                        "view {vi} point {ci}: non-finite image coordinate"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CalibrationOptions {
    pub refine: bool,
    pub estimate_tangential: bool,
    pub estimate_k3: bool,
    /// Refine the belt homography's transfer error after the DLT.
    pub refine_belt: bool,
    pub lm: LmConfig,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            refine: true,
            estimate_tangential: true,
            estimate_k3: false,
            refine_belt: true,
            lm: LmConfig {
                max_iterations: 200,
                ..LmConfig::default()
            },
        }
    }
}

/// Board pose: board point `X` maps to camera frame `R X + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewPose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl ViewPose {
    pub fn to_camera(&self, board: [f64; 2]) -> Vector3<f64> {
        self.rotation * Vector3::new(board[0], board[1], 0.0) + self.translation
    }
}

/// Projects a board point through a pose and camera; `None` behind the camera.
pub fn project(
    intrinsics: &Intrinsics,
    distortion: &Distortion,
    pose: &ViewPose,
    board: [f64; 2],
) -> Option<[f64; 2]> {
    let pc = pose.to_camera(board);
    if pc.z <= 1e-9 {
        return None;
    }
    let n = [pc.x / pc.z, pc.y / pc.z];
    Some(intrinsics.normalized_to_pixel(distortion.apply(n)))
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub camera: CameraModel,
    pub poses: Vec<ViewPose>,
    /// RMS reprojection error of the closed-form initialization.
    pub rms_closed_form_px: f64,
    /// RMS reprojection error after refinement (equal to the closed-form error when
    /// refinement is disabled).
    pub rms_refined_px: f64,
    pub per_view_rms_px: Vec<f64>,
    pub belt_rms_transfer_mm: f64,
    pub flat_views: usize,
}

fn v_ij(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 6] {
    let hi = h.column(i);
    let hj = h.column(j);
    [
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ]
}

/// Zhang's closed-form intrinsics (zero skew) from board→image homographies.
fn closed_form_intrinsics(homographies: &[Matrix3<f64>]) -> Result<Intrinsics, GeometryError> {
    // Condition the image side with a similarity so entries are O(1).
    let centroid = homographies
        .iter()
        .map(|h| {
            let c = h * Vector3::new(0.0, 0.0, 1.0);
            (c.x / c.z, c.y / c.z)
        })
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = homographies.len() as f64;
    let (mx, my) = (centroid.0 / n, centroid.1 / n);
    let s = 1.0 / (mx.abs() + my.abs()).max(1.0);
    let cond = Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0);

    let rows = 2 * homographies.len() + 1;
    let mut v = DMatrix::<f64>::zeros(rows.max(6), 6);
    for (k, h) in homographies.iter().enumerate() {
        let mut hc = cond * h;
        hc /= hc.norm();
        let a = v_ij(&hc, 0, 1);
        let b11 = v_ij(&hc, 0, 0);
        let b22 = v_ij(&hc, 1, 1);
        let mut r0 = DVector::from_row_slice(&a);
        let mut r1 = DVector::from_iterator(6, b11.iter().zip(&b22).map(|(x, y)| x - y));
        r0 /= r0.norm().max(f64::MIN_POSITIVE);
        r1 /= r1.norm().max(f64::MIN_POSITIVE);
        v.set_row(2 * k, &r0.transpose());
        v.set_row(2 * k + 1, &r1.transpose());
    }
    // zero skew: B12 = 0
    v[(2 * homographies.len(), 1)] = 1.0;

    let svd = v.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| GeometryError::Numerical("SVD did not converge".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    if sv[order[1]] < 1e-6 * sv[order[order.len() - 1]] {
        return Err(GeometryError::IllConditioned(
            "view orientations are too similar to determine the intrinsics".into(),
        ));
    }
    let mut b = v_t.row(order[0]).transpose();
    if b[0] < 0.0 {
        b = -b;
    }
    let (b11, b12, b22, b13, b23, b33) = (b[0], b[1], b[2], b[3], b[4], b[5]);
    let denom = b11 * b22 - b12 * b12;
    if !(b11 > 0.0) || !(denom > 0.0) {
        return Err(GeometryError::IllConditioned(
            "closed-form intrinsic system is not positive definite".into(),
        ));
    }
    let v0 = (b12 * b13 - b11 * b23) / denom;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    if !(lambda / b11 > 0.0) {
        return Err(GeometryError::IllConditioned(
            "closed-form focal length is imaginary".into(),
        ));
    }
    let alpha = (lambda / b11).sqrt();
    let beta = (lambda * b11 / denom).sqrt();
    let gamma = -b12 * alpha * alpha * beta / lambda;
    let u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;
    // K = cond^-1 * K'
    let kc = Matrix3::new(alpha, gamma, u0, 0.0, beta, v0, 0.0, 0.0, 1.0);
    let k = cond.try_inverse().expect("similarity is invertible") * kc;
    let k = k / k[(2, 2)];
    let intr = Intrinsics::new(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)]);
    intr.validate()?;
    Ok(intr)
}

fn pose_from_homography(k_inv: &Matrix3<f64>, h: &Matrix3<f64>) -> ViewPose {
    let a = k_inv * h;
    let mut lambda = 1.0 / a.column(0).norm();
    if (a.column(2) * lambda).z < 0.0 {
        lambda = -lambda;
    }
    let r1 = a.column(0) * lambda;
    let r2 = a.column(1) * lambda;
    let t = a.column(2) * lambda;
    let r3 = r1.cross(&r2);
    let q = Matrix3::from_columns(&[r1, r2, r3]);
    let svd = q.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * vt;
    }
    ViewPose {
        rotation: Rotation3::from_matrix_unchecked(r),
        translation: t,
    }
}

/// Free intrinsic parameters, in packing order.
#[derive(Debug, Clone, Copy)]
struct Layout {
    tangential: bool,
    k3: bool,
}

impl Layout {
    fn intrinsic_len(&self) -> usize {
        6 + 2 * self.tangential as usize + self.k3 as usize
    }

    fn pack(&self, i: &Intrinsics, d: &Distortion, poses: &[ViewPose]) -> DVector<f64> {
        let mut v = vec![i.fx, i.fy, i.cx, i.cy, d.k1, d.k2];
        if self.tangential {
            v.extend([d.p1, d.p2]);
        }
        if self.k3 {
            v.push(d.k3);
        }
        for p in poses {
            let w = p.rotation.scaled_axis();
            v.extend([w.x, w.y, w.z, p.translation.x, p.translation.y, p.translation.z]);
        }
        DVector::from_vec(v)
    }

    fn unpack_intrinsics(&self, p: &DVector<f64>) -> (Intrinsics, Distortion) {
        let intr = Intrinsics::new(p[0], p[1], p[2], p[3]);
        let mut d = Distortion::radial(p[4], p[5]);
        let mut at = 6;
        if self.tangential {
            d.p1 = p[at];
            d.p2 = p[at + 1];
            at += 2;
        }
        if self.k3 {
            d.k3 = p[at];
        }
        (intr, d)
    }

    fn unpack_pose(&self, p: &DVector<f64>, view: usize) -> ViewPose {
        let o = self.intrinsic_len() + 6 * view;
        ViewPose {
            rotation: Rotation3::from_scaled_axis(Vector3::new(p[o], p[o + 1], p[o + 2])),
            translation: Vector3::new(p[o + 3], p[o + 4], p[o + 5]),
        }
    }
}

struct ReprojectionProblem<'a> {
    views: &'a [PlanarView],
    layout: Layout,
    offsets: Vec<usize>,
}

impl<'a> ReprojectionProblem<'a> {
    fn new(views: &'a [PlanarView], layout: Layout) -> Self {
        let mut offsets = Vec::with_capacity(views.len() + 1);
        let mut at = 0;
        for v in views {
            offsets.push(at);
            at += 2 * v.correspondences.len();
        }
        offsets.push(at);
        Self {
            views,
            layout,
            offsets,
        }
    }

    fn view_residuals(
        &self,
        intr: &Intrinsics,
        dist: &Distortion,
        pose: &ViewPose,
        view: usize,
        out: &mut [f64],
    ) -> Option<()> {
        for (k, c) in self.views[view].correspondences.iter().enumerate() {
            let q = project(intr, dist, pose, c.board_xy)?;
            out[2 * k] = q[0] - c.image_xy[0];
            out[2 * k + 1] = q[1] - c.image_xy[1];
        }
        Some(())
    }
}

impl LeastSquares for ReprojectionProblem<'_> {
    fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let (intr, dist) = self.layout.unpack_intrinsics(p);
        if intr.fx <= 0.0 || intr.fy <= 0.0 {
            return None;
        }
        let mut r = DVector::zeros(*self.offsets.last().unwrap());
        for v in 0..self.views.len() {
            let pose = self.layout.unpack_pose(p, v);
            let (a, b) = (self.offsets[v], self.offsets[v + 1]);
            self.view_residuals(&intr, &dist, &pose, v, &mut r.as_mut_slice()[a..b])?;
        }
        Some(r)
    }

    /// Central differences exploiting the block structure: a view's pose only
    /// touches that view's residuals.
    fn jacobian(&self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let m = *self.offsets.last().unwrap();
        let mut jac = DMatrix::zeros(m, p.len());
        let mut q = p.clone();
        let ni = self.layout.intrinsic_len();
        for j in 0..ni {
            let h = fd_step(p[j]);
            q[j] = p[j] + h;
            let plus = self.residuals(&q)?;
            q[j] = p[j] - h;
            let minus = self.residuals(&q)?;
            q[j] = p[j];
            jac.set_column(j, &((plus - minus) / (2.0 * h)));
        }
        let (intr, dist) = self.layout.unpack_intrinsics(p);
        for v in 0..self.views.len() {
            let (a, b) = (self.offsets[v], self.offsets[v + 1]);
            let mut plus = vec![0.0; b - a];
            let mut minus = vec![0.0; b - a];
            for k in 0..6 {
                let j = ni + 6 * v + k;
                let h = fd_step(p[j]);
                q[j] = p[j] + h;
                self.view_residuals(&intr, &dist, &self.layout.unpack_pose(&q, v), v, &mut plus)?;
                q[j] = p[j] - h;
                self.view_residuals(&intr, &dist, &self.layout.unpack_pose(&q, v), v, &mut minus)?;
                q[j] = p[j];
                for row in 0..b - a {
                    jac[(a + row, j)] = (plus[row] - minus[row]) / (2.0 * h);
                }
            }
        }
        Some(jac)
    }
}

fn rms(r: &DVector<f64>) -> f64 {
    (r.norm_squared() / (r.len() / 2).max(1) as f64).sqrt()
}

fn initial_radial(
    intr: &Intrinsics,
    poses: &[ViewPose],
    views: &[PlanarView],
) -> Distortion {
    // Linear least squares for k1, k2 given the distortion-free projections.
    let mut rows: Vec<[f64; 2]> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for (pose, view) in poses.iter().zip(views) {
        for c in &view.correspondences {
            let pc = pose.to_camera(c.board_xy);
            if pc.z <= 0.0 {
                continue;
            }
            let (x, y) = (pc.x / pc.z, pc.y / pc.z);
            let r2 = x * x + y * y;
            let ideal = intr.normalized_to_pixel([x, y]);
            let du = ideal[0] - intr.cx;
            let dv = ideal[1] - intr.cy;
            rows.push([du * r2, du * r2 * r2]);
            rhs.push(c.image_xy[0] - ideal[0]);
            rows.push([dv * r2, dv * r2 * r2]);
            rhs.push(c.image_xy[1] - ideal[1]);
        }
    }
    if rows.len() < 2 {
        return Distortion::default();
    }
    let a = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
    let b = DVector::from_vec(rhs);
    match a.svd(true, true).solve(&b, 1e-12) {
        Ok(k) if k.iter().all(|v| v.is_finite()) => Distortion::radial(k[0], k[1]),
        _ => Distortion::default(),
    }
}

/// Calibrates from at least three views of a planar board, one or more of them
/// flagged as lying flat on the belt.
pub fn calibrate_planar(
    views: &[PlanarView],
    options: &CalibrationOptions,
) -> Result<CalibrationResult, GeometryError> {
    if views.len() < 3 {
        return Err(GeometryError::TooFewViews {
            needed: 3,
            found: views.len(),
        });
    }
    let flat: Vec<&PlanarView> = views.iter().filter(|v| v.flat_on_belt).collect();
    if flat.is_empty() {
        return Err(GeometryError::NoFlatView);
    }
    let mut homographies = Vec::with_capacity(views.len());
    for (i, v) in views.iter().enumerate() {
        let est = estimate_homography(&v.board_to_image())
            .map_err(|e| GeometryError::View { view: i, source: Box::new(e) })?;
        homographies.push(*est.homography.matrix());
    }
    let intr0 = closed_form_intrinsics(&homographies)?;
    let k_inv = intr0
        .matrix()
        .try_inverse()
        .ok_or_else(|| GeometryError::Numerical("intrinsic matrix is singular".into()))?;
    let poses0: Vec<ViewPose> = homographies
        .iter()
        .map(|h| pose_from_homography(&k_inv, h))
        .collect();
    let dist0 = initial_radial(&intr0, &poses0, views);

    let layout = Layout {
        tangential: options.estimate_tangential,
        k3: options.estimate_k3,
    };
    let problem = ReprojectionProblem::new(views, layout);
    let mut start = layout.pack(&intr0, &dist0, &poses0);
    let mut r0 = problem.residuals(&start);
    if r0.is_none() {
        // fall back to a distortion-free start if the linear radial guess folds a point
        start = layout.pack(&intr0, &Distortion::default(), &poses0);
        r0 = problem.residuals(&start);
    }
    let r0 = r0.ok_or_else(|| {
        GeometryError::Numerical("closed-form poses put board points behind the camera".into())
    })?;
    let rms_closed_form_px = rms(&r0);

    let params = if options.refine {
        lm::minimize(&problem, start.clone(), &options.lm)
            .map(|rep| rep.params)
            .unwrap_or(start)
    } else {
        start
    };
    let r = problem
        .residuals(&params)
        .ok_or_else(|| GeometryError::Numerical("refined model is not evaluable".into()))?;
    let rms_refined_px = rms(&r);
    let (intrinsics, distortion) = layout.unpack_intrinsics(&params);
    intrinsics.validate()?;
    let poses: Vec<ViewPose> = (0..views.len()).map(|v| layout.unpack_pose(&params, v)).collect();
    let per_view_rms_px = (0..views.len())
        .map(|v| {
            let seg = r.rows(problem.offsets[v], problem.offsets[v + 1] - problem.offsets[v]);
            (seg.norm_squared() / (seg.len() / 2).max(1) as f64).sqrt()
        })
        .collect();

    let (belt, belt_rms) = belt_homography(&intrinsics, &distortion, &flat, options.refine_belt)?;
    let camera = CameraModel::new(intrinsics, distortion, belt)?;
    Ok(CalibrationResult {
        camera,
        poses,
        rms_closed_form_px,
        rms_refined_px,
        per_view_rms_px,
        belt_rms_transfer_mm: belt_rms,
        flat_views: flat.len(),
    })
}

/// Least-squares rigid motion (rotation + translation) taking `from` onto `to`.
fn rigid_2d(from: &[[f64; 2]], to: &[[f64; 2]]) -> ([[f64; 2]; 2], [f64; 2]) {
    let n = from.len() as f64;
    let mean = |pts: &[[f64; 2]]| {
        pts.iter()
            .fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n])
    };
    let (ma, mb) = (mean(from), mean(to));
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in from.iter().zip(to) {
        let (ax, ay) = (a[0] - ma[0], a[1] - ma[1]);
        let (bx, by) = (b[0] - mb[0], b[1] - mb[1]);
        sxx += ax * bx + ay * by;
        sxy += ax * by - ay * bx;
    }
    let theta = sxy.atan2(sxx);
    let (s, c) = theta.sin_cos();
    let rot = [[c, -s], [s, c]];
    let t = [
        mb[0] - (c * ma[0] - s * ma[1]),
        mb[1] - (s * ma[0] + c * ma[1]),
    ];
    (rot, t)
}

/// Homography from undistorted pixels to belt millimetres, fitted to the flat
/// views. The first flat view's board frame defines the belt frame; further flat
/// views are brought into it by a rigid in-plane alignment and the homography is
/// re-fitted against the pooled correspondences.
pub fn belt_homography(
    intrinsics: &Intrinsics,
    distortion: &Distortion,
    flat: &[&PlanarView],
    refine: bool,
) -> Result<(Homography, f64), GeometryError> {
    let camera = CameraModel::new(*intrinsics, *distortion, Homography::identity())?;
    let undistorted = |v: &PlanarView| -> Result<Vec<PointPair>, GeometryError> {
        v.correspondences
            .iter()
            .map(|c| Ok(PointPair::new(camera.undistort_point(c.image_xy)?, c.board_xy)))
            .collect()
    };
    let first = flat.first().ok_or(GeometryError::NoFlatView)?;
    let mut pooled = undistorted(first)?;
    let h1 = estimate_homography(&pooled)?.homography;
    for v in &flat[1..] {
        let pairs = undistorted(v)?;
        let in_frame: Vec<[f64; 2]> = pairs
            .iter()
            .map(|p| h1.apply(p.src))
            .collect::<Result<_, _>>()?;
        let board: Vec<[f64; 2]> = pairs.iter().map(|p| p.dst).collect();
        let (rot, t) = rigid_2d(&board, &in_frame);
        pooled.extend(pairs.iter().map(|p| {
            let b = p.dst;
            PointPair::new(
                p.src,
                [
                    rot[0][0] * b[0] + rot[0][1] * b[1] + t[0],
                    rot[1][0] * b[0] + rot[1][1] * b[1] + t[1],
                ],
            )
        }));
    }
    let mut est = estimate_homography(&pooled)?;
    if refine {
        let refined = refine_homography(&pooled, &est.homography)?;
        if refined.rms_transfer <= est.rms_transfer {
            est = refined;
        }
    }
    Ok((est.homography, est.rms_transfer))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn board() -> BoardSpec {
        BoardSpec {
            square_mm: 20.0,
            cols: 9,
            rows: 6,
        }
    }

    fn view(intr: &Intrinsics, d: &Distortion, pose: &ViewPose, flat: bool) -> PlanarView {
        PlanarView {
            flat_on_belt: flat,
            correspondences: board()
                .corners()
                .into_iter()
                .map(|b| Correspondence {
                    image_xy: project(intr, d, pose, b).unwrap(),
                    board_xy: b,
                })
                .collect(),
        }
    }

    fn pose(rx: f64, ry: f64, rz: f64, t: [f64; 3]) -> ViewPose {
        ViewPose {
            rotation: Rotation3::from_euler_angles(rx, ry, rz),
            translation: Vector3::new(t[0], t[1], t[2]),
        }
    }

    fn views(d: &Distortion) -> (Intrinsics, Vec<PlanarView>) {
        let intr = Intrinsics::new(1800.0, 1790.0, 640.0, 500.0);
        let poses = [
            pose(0.0, 0.0, 0.1, [-80.0, -50.0, 900.0]),
            pose(0.4, 0.1, -0.2, [-60.0, -70.0, 800.0]),
            pose(-0.3, 0.35, 0.3, [-100.0, -40.0, 1000.0]),
            pose(0.2, -0.4, 1.2, [20.0, -90.0, 850.0]),
            pose(-0.25, -0.25, -0.7, [-120.0, 10.0, 950.0]),
        ];
        let vs = poses
            .iter()
            .enumerate()
            .map(|(i, p)| view(&intr, d, p, i == 0))
            .collect();
        (intr, vs)
    }

    #[test]
    fn noiseless_views_recover_intrinsics() {
        let d = Distortion::radial(-0.2, 0.05);
        let (intr, vs) = views(&d);
        let res = calibrate_planar(&vs, &CalibrationOptions::default()).unwrap();
        let got = res.camera.intrinsics;
        assert!((got.fx - intr.fx).abs() / intr.fx < 1e-6, "{got:?}");
        assert!((got.fy - intr.fy).abs() / intr.fy < 1e-6);
        assert!((res.camera.distortion.k1 - d.k1).abs() < 1e-5);
        assert!(res.rms_refined_px <= res.rms_closed_form_px);
        assert!(res.rms_refined_px < 1e-6);
    }

    #[test]
    fn flat_view_measures_board_distances() {
        let (_, vs) = views(&Distortion::radial(-0.2, 0.0));
        let res = calibrate_planar(&vs, &CalibrationOptions::default()).unwrap();
        let c = &vs[0].correspondences;
        let a = res.camera.pixel_to_belt(c[0].image_xy).unwrap();
        let b = res.camera.pixel_to_belt(c[c.len() - 1].image_xy).unwrap();
        let want = (160.0f64).hypot(100.0);
        assert!(((a[0] - b[0]).hypot(a[1] - b[1]) - want).abs() < 1e-4);
    }

    #[test]
    fn two_views_is_a_precondition_error() {
        let (_, vs) = views(&Distortion::default());
        assert!(matches!(
            calibrate_planar(&vs[..2], &CalibrationOptions::default()),
            Err(GeometryError::TooFewViews { .. })
        ));
    }

    #[test]
    fn parallel_views_are_ill_conditioned() {
        let intr = Intrinsics::new(1800.0, 1800.0, 640.0, 500.0);
        let d = Distortion::default();
        let vs: Vec<PlanarView> = (0..4)
            .map(|i| view(&intr, &d, &pose(0.0, 0.0, 0.3 * i as f64, [-80.0 + 10.0 * i as f64, -50.0, 900.0 + 30.0 * i as f64]), i == 0))
            .collect();
        assert!(matches!(
            calibrate_planar(&vs, &CalibrationOptions::default()),
            Err(GeometryError::IllConditioned(_))
        ));
    }

    #[test]
    fn missing_flat_view_is_reported() {
        let (_, mut vs) = views(&Distortion::default());
        vs[0].flat_on_belt = false;
        assert!(matches!(
            calibrate_planar(&vs, &CalibrationOptions::default()),
            Err(GeometryError::NoFlatView)
        ));
    }

    #[test]
    fn off_grid_board_point_fails_validation() {
        let (_, mut vs) = views(&Distortion::default());
        vs[1].correspondences[3].board_xy[0] += 3.0;
        let file = CalibrationFile {
            format: 1,
            group: Some(4),
            image_size: None,
            board: board(),
            views: vs,
        };
        assert!(matches!(file.validate(), Err(GeometryError::InvalidBoard(_))));
    }

    #[test]
    fn pooled_flat_views_share_one_frame() {
        let d = Distortion::radial(-0.1, 0.0);
        let (intr, mut vs) = views(&d);
        // second flat view: same belt plane, board shifted and turned in-plane
        let base = pose(0.0, 0.0, 0.1, [-80.0, -50.0, 900.0]);
        let shift = ViewPose {
            rotation: base.rotation * Rotation3::from_euler_angles(0.0, 0.0, 0.4),
            translation: base.rotation * Vector3::new(30.0, 15.0, 0.0) + base.translation,
        };
        vs.push(view(&intr, &d, &shift, true));
        let res = calibrate_planar(&vs, &CalibrationOptions::default()).unwrap();
        assert_eq!(res.flat_views, 2);
        assert!(res.belt_rms_transfer_mm < 1e-6, "{}", res.belt_rms_transfer_mm);
    }
}
