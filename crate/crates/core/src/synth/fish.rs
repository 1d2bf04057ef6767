use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::geometry::CameraModel;
use crate::maskops::{BinaryMask, RleMask};

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Half-width of the body along normalized arc position `tau` in `[0, 1]`:
/// elliptical head, cosine taper to the caudal peduncle, and a widening tail fin
/// that closes in a rounded cap, optionally split by a V-shaped fork into two
/// pointed lobes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthProfile {
    pub peak_mm: f64,
    pub head_frac: f64,
    pub peduncle_frac: f64,
    pub peduncle_ratio: f64,
    pub fin_ratio: f64,
    /// Depth of the fork as a fraction of the length; 0 for a straight tail.
    pub fork_depth_frac: f64,
    /// Half-opening of the fork at the tail end, relative to the fin half-width.
    pub fork_open_ratio: f64,
    /// Share of the length over which the fin closes in an elliptical cap, to a
    /// point on the spine or onto the tips of the fork.
    #[serde(default)]
    pub tail_cap_frac: f64,
}

impl WidthProfile {
    pub fn for_length(length_mm: f64, fork: bool) -> Self {
        Self {
            peak_mm: 0.09 * length_mm,
            head_frac: 0.2,
            peduncle_frac: 0.82,
            peduncle_ratio: 0.3,
            fin_ratio: 0.7,
            fork_depth_frac: if fork { 0.07 } else { 0.0 },
            fork_open_ratio: 0.55,
            tail_cap_frac: 0.06,
        }
    }

    pub fn half_width(&self, tau: f64) -> f64 {
        let w = self.peak_mm;
        let wp = self.peduncle_ratio * w;
        if !(0.0..=1.0).contains(&tau) {
            0.0
        } else if tau < self.head_frac {
            let s = 1.0 - tau / self.head_frac;
            w * (1.0 - s * s).max(0.0).sqrt()
        } else if tau < self.peduncle_frac {
            let s = (tau - self.head_frac) / (self.peduncle_frac - self.head_frac);
            wp + (w - wp) * 0.5 * (1.0 + (std::f64::consts::PI * s).cos())
        } else {
            let s = (tau - self.peduncle_frac) / (1.0 - self.peduncle_frac);
            let fin = wp + (self.fin_ratio * w - wp) * s;
            let cap_start = 1.0 - self.tail_cap_frac;
            if self.tail_cap_frac > 0.0 && tau > cap_start {
                // closes onto the fork tips, or onto the spine without a fork
                let tip = self.fork_tip();
                let c = (tau - cap_start) / self.tail_cap_frac;
                tip + (fin - tip) * (1.0 - c * c).max(0.0).sqrt()
            } else {
                fin
            }
        }
    }

    /// Half-opening of the fork at the tail end; 0 without a fork.
    fn fork_tip(&self) -> f64 {
        if self.fork_depth_frac > 0.0 {
            self.fork_open_ratio * self.fin_ratio * self.peak_mm
        } else {
            0.0
        }
    }

    pub fn in_fork(&self, tau: f64, dist: f64) -> bool {
        if self.fork_depth_frac <= 0.0 {
            return false;
        }
        let start = 1.0 - self.fork_depth_frac;
        if tau <= start {
            return false;
        }
        dist < self.fork_tip() * (tau - start) / self.fork_depth_frac
    }
}

const ARC_NODES: usize = 1024;

/// A fish-shaped tube around a polynomial spine, placed on the belt.
///
/// In the fish frame the spine is `y = sum spine[k] * x^k` for `x` in
/// `[-extent/2, extent/2]`, snout at the negative end. The frame is rotated by
/// `angle` and its origin moved to `center` (belt millimetres).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthFishSpec {
    pub fish_id: u64,
    pub spine: Vec<f64>,
    pub extent_mm: f64,
    pub profile: WidthProfile,
    pub true_length_mm: f64,
    pub center: [f64; 2],
    pub angle: f64,
    #[serde(skip)]
    arc: Vec<f64>,
}

impl SynthFishSpec {
    /// Spine with arc length `length_mm`, bent by `sagitta` (quadratic) and
    /// `s_bend` (cubic), both as fractions of the spine extent.
    pub fn new(
        fish_id: u64,
        length_mm: f64,
        sagitta: f64,
        s_bend: f64,
        profile: WidthProfile,
        center: [f64; 2],
        angle: f64,
    ) -> Result<Self, SynthError> {
        if !(length_mm > 0.0 && length_mm.is_finite()) {
            return Err(SynthError::InvalidConfig(format!("fish length must be positive, got {length_mm}")));
        }
        // unit-extent shape g(s) = a2 s^2 + a3 s^3 on s in [-1/2, 1/2]
        let (a2, a3) = (4.0 * sagitta, 8.0 * s_bend);
        let unit_arc = adaptive_simpson(
            &|s: f64| (1.0 + (2.0 * a2 * s + 3.0 * a3 * s * s).powi(2)).sqrt(),
            -0.5,
            0.5,
            1e-13,
        );
        let extent = length_mm / unit_arc;
        Self::from_spine(
            fish_id,
            vec![0.0, 0.0, a2 / extent, a3 / (extent * extent)],
            extent,
            profile,
            center,
            angle,
        )
    }

    pub fn from_spine(
        fish_id: u64,
        spine: Vec<f64>,
        extent_mm: f64,
        profile: WidthProfile,
        center: [f64; 2],
        angle: f64,
    ) -> Result<Self, SynthError> {
        if spine.len() > 5 || spine.is_empty() {
            return Err(SynthError::InvalidConfig("spine polynomial must have degree 0..=4".into()));
        }
        if !(extent_mm > 0.0) || !(profile.peak_mm > 0.0) {
            return Err(SynthError::InvalidConfig("fish extent and width must be positive".into()));
        }
        let mut fish = Self {
            fish_id,
            spine,
            extent_mm,
            profile,
            true_length_mm: 0.0,
            center,
            angle,
            arc: Vec::new(),
        };
        let half = 0.5 * extent_mm;
        fish.true_length_mm = adaptive_simpson(&|x| fish.speed(x), -half, half, 1e-10);
        let h = extent_mm / ARC_NODES as f64;
        let mut arc = Vec::with_capacity(ARC_NODES + 1);
        arc.push(0.0);
        for i in 0..ARC_NODES {
            let a = -half + i as f64 * h;
            let seg = adaptive_simpson(&|x| fish.speed(x), a, a + h, 1e-12);
            arc.push(arc[i] + seg);
        }
        fish.arc = arc;
        Ok(fish)
    }

    /// Same fish moved to a new pose.
    pub fn placed(&self, center: [f64; 2], angle: f64) -> Self {
        let mut f = self.clone();
        f.center = center;
        f.angle = angle;
        f
    }

    #[inline]
    fn y(&self, x: f64) -> f64 {
        self.spine.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    #[inline]
    fn dy(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.spine.iter().enumerate().skip(1).rev() {
            acc = acc * x + k as f64 * c;
        }
        acc
    }

    #[inline]
    fn ddy(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.spine.iter().enumerate().skip(2).rev() {
            acc = acc * x + (k * (k - 1)) as f64 * c;
        }
        acc
    }

    #[inline]
    fn speed(&self, x: f64) -> f64 {
        (1.0 + self.dy(x).powi(2)).sqrt()
    }

    /// Normalized arc position of spine abscissa `x`.
    fn tau(&self, x: f64) -> f64 {
        let half = 0.5 * self.extent_mm;
        let f = ((x + half) / self.extent_mm * ARC_NODES as f64).clamp(0.0, ARC_NODES as f64);
        let i = (f.floor() as usize).min(ARC_NODES - 1);
        let s = self.arc[i] + (self.arc[i + 1] - self.arc[i]) * (f - i as f64);
        s / self.arc[ARC_NODES]
    }

    pub fn local_to_belt(&self, x: f64, y: f64) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [self.center[0] + c * x - s * y, self.center[1] + s * x + c * y]
    }

    fn belt_to_local(&self, p: [f64; 2]) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Spine points on the belt at `n + 1` evenly spaced abscissae, snout first.
    pub fn spine_belt_points(&self, n: usize) -> Vec<[f64; 2]> {
        let half = 0.5 * self.extent_mm;
        (0..=n)
            .map(|i| {
                let x = -half + self.extent_mm * i as f64 / n as f64;
                self.local_to_belt(x, self.y(x))
            })
            .collect()
    }

    /// Length of the `n`-segment polyline through the spine.
    pub fn polyline_length(&self, n: usize) -> f64 {
        self.spine_belt_points(n)
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }

    /// Points offset by the peak half-width on both sides of the spine.
    pub fn envelope_belt_points(&self, n: usize) -> Vec<[f64; 2]> {
        let half = 0.5 * self.extent_mm;
        let w = self.profile.peak_mm;
        let mut out = Vec::with_capacity(2 * n + 2);
        for i in 0..=n {
            let x = -half + self.extent_mm * i as f64 / n as f64;
            let (y, d) = (self.y(x), self.dy(x));
            let norm = (1.0 + d * d).sqrt();
            let (nx, ny) = (-d / norm, 1.0 / norm);
            out.push(self.local_to_belt(x + w * nx, y + w * ny));
            out.push(self.local_to_belt(x - w * nx, y - w * ny));
        }
        out
    }

    /// Whether a belt point lies inside the fish outline.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (lx, ly) = self.belt_to_local(p);
        let half = 0.5 * self.extent_mm;
        let w = self.profile.peak_mm;
        if lx < -half - w || lx > half + w {
            return false;
        }
        if (ly - self.y(lx.clamp(-half, half))).abs() > 2.0 * w + 1.0 {
            return false;
        }
        // nearest spine point by Newton on the squared distance
        let stationary = |x: f64| (x - lx) + (self.y(x) - ly) * self.dy(x);
        let mut x = lx.clamp(-half, half);
        for _ in 0..30 {
            let (y, d) = (self.y(x), self.dy(x));
            let f = (x - lx) + (y - ly) * d;
            let fp = 1.0 + d * d + (y - ly) * self.ddy(x);
            if fp <= 0.0 {
                break;
            }
            let next = (x - f / fp).clamp(-half, half);
            let step = (next - x).abs();
            x = next;
            if step < 1e-11 {
                break;
            }
        }
        // a clamped foot means the point lies past a perpendicular end cut
        if (x <= -half || x >= half) && stationary(x).abs() > 1e-9 {
            return false;
        }
        let dist = (lx - x).hypot(ly - self.y(x));
        let tau = self.tau(x);
        dist <= self.profile.half_width(tau) && !self.profile.in_fork(tau, dist)
    }

    /// Rasterizes the fish as seen by `camera` on a `width x height` image:
    /// each pixel center is taken to the belt plane and tested for containment.
    /// Only pixels inside the projected outline envelope are tested.
    pub fn render(&self, camera: &CameraModel, width: usize, height: usize) -> Result<RleMask, SynthError> {
        let env = self.envelope_belt_points(64);
        let mut ring = Vec::with_capacity(env.len());
        for b in env.iter().step_by(2).chain(env.iter().skip(1).step_by(2).rev()) {
            ring.push(camera.belt_to_pixel(*b)?);
        }
        let (mut x0, mut y0, mut x1, mut y1) =
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &ring {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        if x1 < -0.5 || y1 < -0.5 || x0 > width as f64 - 0.5 || y0 > height as f64 - 0.5 {
            return Ok(RleMask::from_counts(width, height, &[(width * height) as u64])?);
        }
        const PAD: f64 = 3.0;
        let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64 - 1.0) as usize;
        let (px0, py0) = (clamp((x0 - PAD).floor(), width), clamp((y0 - PAD).floor(), height));
        let (px1, py1) = (clamp((x1 + PAD).ceil(), width), clamp((y1 + PAD).ceil(), height));
        let mut crop = BinaryMask::new(px1 - px0 + 1, py1 - py0 + 1)?;
        let crossings_at = |yy: f64, crossings: &mut Vec<f64>| {
            for i in 0..ring.len() {
                let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
                if (a[1] <= yy) != (b[1] <= yy) {
                    crossings.push(a[0] + (yy - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
                }
            }
        };
        let mut crossings = Vec::new();
        for y in py0..=py1 {
            crossings.clear();
            // rows above and below catch outline bulges between envelope samples
            crossings_at(y as f64 - PAD, &mut crossings);
            crossings_at(y as f64, &mut crossings);
            crossings_at(y as f64 + PAD, &mut crossings);
            if crossings.is_empty() {
                continue;
            }
            let (cmin, cmax) = crossings
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
            let xa = clamp((cmin - PAD).floor(), width).max(px0);
            let xb = clamp((cmax + PAD).ceil(), width).min(px1);
            for x in xa..=xb {
                let b = camera.pixel_to_belt([x as f64, y as f64])?;
                if self.contains(b) {
                    crop.set(x - px0, y - py0, true);
                }
            }
        }
        Ok(RleMask::from_cropped_mask(width, height, &crop, (px0 as i64, py0 as i64))?)
    }

    /// Area in square millimetres by sampling the outline on a `step` grid.
    pub fn sampled_area(&self, step: f64) -> f64 {
        self.sampled_points(step).len() as f64 * step * step
    }

    /// Belt grid points (pitch `step`) inside the fish.
    pub fn sampled_points(&self, step: f64) -> Vec<[f64; 2]> {
        let env = self.envelope_belt_points(64);
        let (mut x0, mut y0, mut x1, mut y1) =
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &env {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        let mut out = Vec::new();
        let mut y = (y0 / step).floor() * step;
        while y <= y1 {
            let mut x = (x0 / step).floor() * step;
            while x <= x1 {
                if self.contains([x, y]) {
                    out.push([x, y]);
                }
                x += step;
            }
            y += step;
        }
        out
    }
}
