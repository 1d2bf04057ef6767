//! Two-subiteration parallel thinning (Zhang & Suen, 1984).
//!
//! Neighbours are labelled clockwise from north:
//!
//! ```text
//!  P9 P2 P3
//!  P8 P1 P4
//!  P7 P6 P5
//! ```
//!
//! A foreground pixel is removed in a subiteration when it has between 2 and 6
//! foreground neighbours, exactly one background-to-foreground transition in the
//! cyclic sequence P2..P9, and (first pass) `P2*P4*P6 = 0`, `P4*P6*P8 = 0` or
//! (second pass) `P2*P4*P8 = 0`, `P2*P6*P8 = 0`. Pixels outside the raster are
//! background.

use super::BinaryMask;

/// Thinned foreground of a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    width: usize,
    height: usize,
    points: Vec<(usize, usize)>,
}

impl Skeleton {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Skeleton pixels in row-major order.
    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_mask(&self) -> BinaryMask {
        let mut m = BinaryMask::new(self.width, self.height).expect("parent dims are nonzero");
        for &(x, y) in &self.points {
            m.set(x, y, true);
        }
        m
    }
}

const OFFSETS: [(i64, i64); 8] = [
    (0, -1),  // P2
    (1, -1),  // P3
    (1, 0),   // P4
    (1, 1),   // P5
    (0, 1),   // P6
    (-1, 1),  // P7
    (-1, 0),  // P8
    (-1, -1), // P9
];

#[inline]
fn neighbourhood(mask: &BinaryMask, x: i64, y: i64) -> [bool; 8] {
    let mut n = [false; 8];
    for (k, (dx, dy)) in OFFSETS.iter().enumerate() {
        n[k] = mask.get_signed(x + dx, y + dy);
    }
    n
}

#[inline]
fn removable(n: &[bool; 8], first_pass: bool) -> bool {
    let b = n.iter().filter(|v| **v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&k| !n[k] && n[(k + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = *n;
    if first_pass {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Thins the mask until neither subiteration removes a pixel.
///
/// Only pixels touching the background can ever satisfy the removal rule, so the
/// scan is restricted to a frontier that is refreshed around every deletion. The
/// result is identical to scanning the full raster on every subiteration.
pub fn skeletonize(mask: &BinaryMask) -> Skeleton {
    let (w, h) = mask.dims();
    let mut work = mask.clone();
    let mut queued = vec![false; w * h];
    let mut frontier: Vec<usize> = Vec::new();

    let push_if_border = |work: &BinaryMask, queued: &mut [bool], frontier: &mut Vec<usize>, idx: usize| {
        if queued[idx] || !work.bits()[idx] {
            return;
        }
        let (x, y) = ((idx % w) as i64, (idx / w) as i64);
        if neighbourhood(work, x, y).iter().any(|v| !*v) {
            queued[idx] = true;
            frontier.push(idx);
        }
    };

    for idx in 0..w * h {
        push_if_border(&work, &mut queued, &mut frontier, idx);
    }

    let mut deletions: Vec<usize> = Vec::new();
    loop {
        let mut changed = false;
        for first_pass in [true, false] {
            deletions.clear();
            for &idx in &frontier {
                let (x, y) = ((idx % w) as i64, (idx / w) as i64);
                if work.bits()[idx] && removable(&neighbourhood(&work, x, y), first_pass) {
                    deletions.push(idx);
                }
            }
            if deletions.is_empty() {
                continue;
            }
            changed = true;
            for &idx in &deletions {
                work.set(idx % w, idx / w, false);
            }
            // rebuild frontier: surviving old entries plus neighbours of deleted pixels
            let mut next: Vec<usize> = Vec::with_capacity(frontier.len());
            for &idx in &frontier {
                queued[idx] = false;
            }
            for &idx in &frontier {
                if work.bits()[idx] && !queued[idx] {
                    queued[idx] = true;
                    next.push(idx);
                }
            }
            for &idx in &deletions {
                let (x, y) = ((idx % w) as i64, (idx / w) as i64);
                for (dx, dy) in OFFSETS {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                        push_if_border(&work, &mut queued, &mut next, ny as usize * w + nx as usize);
                    }
                }
            }
            frontier = next;
        }
        if !changed {
            break;
        }
    }

    Skeleton {
        width: w,
        height: h,
        points: work.foreground().collect(),
    }
}

/// True when no 2x2 block of the mask is entirely foreground.
pub fn is_thin(mask: &BinaryMask) -> bool {
    let (w, h) = mask.dims();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            if mask.get(x, y) && mask.get(x + 1, y) && mask.get(x, y + 1) && mask.get(x + 1, y + 1) {
                return false;
            }
        }
    }
    true
}
