use serde::{Deserialize, Serialize};

use super::rle::{decode_counts_string, RleMask};
use super::{BinaryMask, MaskError};

/// Run-length counts, either as a plain integer list or in COCO's compressed string form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RleCounts {
    Uncompressed(Vec<u64>),
    Compressed(String),
}

/// COCO run-length object; `size` is `[height, width]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleSegmentation {
    pub size: [usize; 2],
    pub counts: RleCounts,
}

impl RleSegmentation {
    pub fn decode(&self) -> Result<RleMask, MaskError> {
        let [height, width] = self.size;
        match &self.counts {
            RleCounts::Uncompressed(c) => RleMask::from_counts(width, height, c),
            RleCounts::Compressed(s) => RleMask::from_counts(width, height, &decode_counts_string(s)?),
        }
    }
}

impl From<&RleMask> for RleSegmentation {
    fn from(rle: &RleMask) -> Self {
        Self {
            size: [rle.height(), rle.width()],
            counts: RleCounts::Uncompressed(rle.counts().iter().map(|&c| c as u64).collect()),
        }
    }
}

/// Instance geometry as found in annotation and prediction files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    /// One or more flat `[x0, y0, x1, y1, ...]` polygons.
    Polygons(Vec<Vec<f64>>),
    /// Several run-length pieces of one instance.
    RleList(Vec<RleSegmentation>),
    Rle(RleSegmentation),
}

impl Segmentation {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Segmentation::Rle(RleSegmentation::from(&RleMask::from_mask(mask)))
    }

    pub fn from_rle(rle: &RleMask) -> Self {
        Segmentation::Rle(RleSegmentation::from(rle))
    }
}

/// Rasterizes a segmentation onto a `width` x `height` grid.
///
/// Polygons use even-odd filling sampled at integer pixel centers with half-open
/// spans, so an axis-aligned `w x h` rectangle with integer corners covers exactly
/// `w * h` pixels. Multiple pieces are unioned.
pub fn rasterize(seg: &Segmentation, width: usize, height: usize) -> Result<BinaryMask, MaskError> {
    match seg {
        Segmentation::Polygons(polys) => {
            let mut mask = BinaryMask::new(width, height)?;
            if polys.is_empty() {
                return Err(MaskError::Malformed("segmentation has no polygons".into()));
            }
            for poly in polys {
                fill_polygon(&mut mask, poly, (0.0, 0.0))?;
            }
            Ok(mask)
        }
        Segmentation::Rle(r) => decode_sized(r, width, height).map(|rle| rle.to_mask()),
        Segmentation::RleList(list) => {
            let mut mask = BinaryMask::new(width, height)?;
            if list.is_empty() {
                return Err(MaskError::Malformed("segmentation has no pieces".into()));
            }
            for r in list {
                mask.union_with(&decode_sized(r, width, height)?.to_mask())?;
            }
            Ok(mask)
        }
    }
}

/// Rasterizes straight into the compact run-length form.
pub fn rasterize_rle(seg: &Segmentation, width: usize, height: usize) -> Result<RleMask, MaskError> {
    match seg {
        Segmentation::Rle(r) => decode_sized(r, width, height),
        Segmentation::Polygons(polys) => {
            if polys.is_empty() {
                return Err(MaskError::Malformed("segmentation has no polygons".into()));
            }
            if width == 0 || height == 0 {
                return Err(MaskError::EmptyDimensions { width, height });
            }
            // fill only the clipped bounding box of the vertices
            let (mut x0, mut y0, mut x1, mut y1) =
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in polys {
                for c in p.chunks_exact(2) {
                    x0 = x0.min(c[0]);
                    x1 = x1.max(c[0]);
                    y0 = y0.min(c[1]);
                    y1 = y1.max(c[1]);
                }
            }
            let clamp = |v: f64, hi: usize| (v.max(0.0).min(hi as f64)) as usize;
            let (bx0, by0) = (clamp(x0.floor(), width), clamp(y0.floor(), height));
            let (bx1, by1) = (clamp(x1.ceil() + 1.0, width), clamp(y1.ceil() + 1.0, height));
            let mut crop = BinaryMask::new((bx1 - bx0).max(1), (by1 - by0).max(1))?;
            for poly in polys {
                fill_polygon(&mut crop, poly, (bx0 as f64, by0 as f64))?;
            }
            RleMask::from_cropped_mask(width, height, &crop, (bx0 as i64, by0 as i64))
        }
        Segmentation::RleList(_) => Ok(RleMask::from_mask(&rasterize(seg, width, height)?)),
    }
}

fn decode_sized(r: &RleSegmentation, width: usize, height: usize) -> Result<RleMask, MaskError> {
    if r.size != [height, width] {
        return Err(MaskError::Malformed(format!(
            "run-length size {:?} does not match image {}x{} (expected [{height}, {width}])",
            r.size, width, height
        )));
    }
    r.decode()
}

/// Fills `flat` into `mask`, whose pixel `(0, 0)` sits at `origin` in polygon coordinates.
fn fill_polygon(mask: &mut BinaryMask, flat: &[f64], origin: (f64, f64)) -> Result<(), MaskError> {
    if flat.len() % 2 != 0 || flat.len() < 6 {
        return Err(MaskError::Malformed(format!(
            "polygon needs an even number (>= 6) of coordinates, got {}",
            flat.len()
        )));
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(MaskError::Malformed("polygon has non-finite coordinate".into()));
    }
    let pts: Vec<(f64, f64)> = flat
        .chunks_exact(2)
        .map(|c| (c[0] - origin.0, c[1] - origin.1))
        .collect();
    let (ymin, ymax) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let row_lo = ymin.ceil().max(0.0) as usize;
    let row_hi = (ymax.ceil() as i64).min(mask.height() as i64);
    let mut xs = Vec::new();
    for y in row_lo..row_hi.max(0) as usize {
        let yf = y as f64;
        xs.clear();
        for i in 0..pts.len() {
            let (x0, y0) = pts[i];
            let (x1, y1) = pts[(i + 1) % pts.len()];
            if (y0 <= yf) != (y1 <= yf) {
                xs.push(x0 + (yf - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let start = pair[0].ceil().max(0.0) as i64;
            let end = (pair[1].ceil() as i64).min(mask.width() as i64);
            // pairs of sorted crossings are the even-odd interior of this polygon;
            // setting rather than toggling unions it with earlier polygons
            for x in start..end {
                mask.set(x as usize, y, true);
            }
        }
    }
    Ok(())
}
