//! Column-major run-length masks in the COCO convention: counts alternate
//! background/foreground starting with background, scanning down each column.

use serde::{Deserialize, Serialize};

use super::{BinaryMask, MaskError};

/// Compact mask storage. Canonical: every run is nonzero except a possible
/// leading empty background run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RleMask {
    width: usize,
    height: usize,
    counts: Vec<u32>,
}

impl RleMask {
    /// Builds from raw counts, validating that they cover exactly `width * height` cells.
    pub fn from_counts(width: usize, height: usize, counts: &[u64]) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        let total: u64 = counts.iter().sum();
        if total != (width * height) as u64 {
            return Err(MaskError::Malformed(format!(
                "run lengths sum to {total}, expected {}",
                width * height
            )));
        }
        let mut out: Vec<u32> = Vec::with_capacity(counts.len());
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let fg = i % 2 == 1;
            let last_is_fg = out.len() % 2 == 0;
            match out.last_mut() {
                Some(last) if last_is_fg == fg => *last += c as u32,
                Some(_) => out.push(c as u32),
                None if fg => out.extend([0, c as u32]),
                None => out.push(c as u32),
            }
        }
        Ok(Self {
            width,
            height,
            counts: out,
        })
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        let (w, h) = mask.dims();
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                let v = mask.get(x, y);
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Self {
            width: w,
            height: h,
            counts,
        }
    }

    /// Builds from a crop whose origin sits at `offset` in a `width x height` raster.
    /// Crop pixels falling outside the raster are dropped.
    pub fn from_cropped_mask(
        width: usize,
        height: usize,
        crop: &BinaryMask,
        offset: (i64, i64),
    ) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        let mut counts = Vec::new();
        let mut pos = 0usize; // linear index just past the last foreground run
        let mut open: Option<(usize, usize)> = None; // (start, len)
        for cx in 0..crop.width() {
            let x = cx as i64 + offset.0;
            if x < 0 || x >= width as i64 {
                continue;
            }
            for cy in 0..crop.height() {
                let y = cy as i64 + offset.1;
                if y < 0 || y >= height as i64 || !crop.get(cx, cy) {
                    continue;
                }
                let idx = x as usize * height + y as usize;
                match &mut open {
                    Some((start, len)) if *start + *len == idx => *len += 1,
                    _ => {
                        if let Some((start, len)) = open.take() {
                            counts.push((start - pos) as u32);
                            counts.push(len as u32);
                            pos = start + len;
                        }
                        open = Some((idx, 1));
                    }
                }
            }
        }
        if let Some((start, len)) = open {
            counts.push((start - pos) as u32);
            counts.push(len as u32);
            pos = start + len;
        }
        let rest = width * height - pos;
        if rest > 0 || counts.is_empty() {
            counts.push(rest as u32);
        }
        Ok(Self {
            width,
            height,
            counts,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn area(&self) -> usize {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as usize).sum()
    }

    /// Foreground runs as `(start, len)` in column-major linear index.
    pub fn runs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut pos = 0usize;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as usize;
            (i % 2 == 1 && c > 0).then_some((start, c as usize))
        })
    }

    pub fn to_mask(&self) -> BinaryMask {
        let mut mask = BinaryMask::new(self.width, self.height).expect("validated dims");
        for (start, len) in self.runs() {
            for idx in start..start + len {
                mask.set(idx / self.height, idx % self.height, true);
            }
        }
        mask
    }

    /// Inclusive foreground bounding box `(x0, y0, x1, y1)`.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (start, len) in self.runs() {
            let end = start + len - 1;
            let (xa, ya) = (start / self.height, start % self.height);
            let (xb, yb) = (end / self.height, end % self.height);
            // a run spanning several columns covers every row in between
            let (ylo, yhi) = if xa == xb { (ya, yb) } else { (0, self.height - 1) };
            bbox = Some(match bbox {
                None => (xa, ylo, xb, yhi),
                Some((x0, y0, x1, y1)) => (x0.min(xa), y0.min(ylo), x1.max(xb), y1.max(yhi)),
            });
        }
        bbox
    }

    /// Decodes only the foreground bounding box plus `margin`, returning the crop and
    /// the offset of its origin.
    pub fn to_cropped_mask(&self, margin: usize) -> Option<(BinaryMask, (i64, i64))> {
        let (x0, y0, x1, y1) = self.bounding_box()?;
        let ox = x0 as i64 - margin as i64;
        let oy = y0 as i64 - margin as i64;
        let w = x1 - x0 + 1 + 2 * margin;
        let h = y1 - y0 + 1 + 2 * margin;
        let mut crop = BinaryMask::new(w, h).expect("nonempty");
        for (start, len) in self.runs() {
            for idx in start..start + len {
                let (x, y) = ((idx / self.height) as i64, (idx % self.height) as i64);
                crop.set((x - ox) as usize, (y - oy) as usize, true);
            }
        }
        Some((crop, (ox, oy)))
    }

    pub fn intersection_area(&self, other: &RleMask) -> Result<usize, MaskError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(MaskError::DimensionMismatch {
                left: (self.width, self.height),
                right: (other.width, other.height),
            });
        }
        let mut a = self.runs().peekable();
        let mut b = other.runs().peekable();
        let mut inter = 0usize;
        while let (Some(&(sa, la)), Some(&(sb, lb))) = (a.peek(), b.peek()) {
            let (ea, eb) = (sa + la, sb + lb);
            let lo = sa.max(sb);
            let hi = ea.min(eb);
            if hi > lo {
                inter += hi - lo;
            }
            if ea <= eb {
                a.next();
            } else {
                b.next();
            }
        }
        Ok(inter)
    }

    /// IoU computed directly on runs; agrees with [`super::mask_iou`] on the decoded rasters.
    pub fn iou(&self, other: &RleMask) -> Result<f64, MaskError> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Ok(0.0);
        }
        Ok(inter as f64 / union as f64)
    }

    /// Union computed on runs.
    pub fn union(&self, other: &RleMask) -> Result<RleMask, MaskError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(MaskError::DimensionMismatch {
                left: (self.width, self.height),
                right: (other.width, other.height),
            });
        }
        let mut runs: Vec<(usize, usize)> = self.runs().chain(other.runs()).collect();
        runs.sort_unstable();
        let mut counts = Vec::with_capacity(2 * runs.len() + 1);
        let mut pos = 0usize;
        let mut open: Option<(usize, usize)> = None; // (start, end)
        for (start, len) in runs {
            let end = start + len;
            match &mut open {
                Some((_, e)) if start <= *e => *e = (*e).max(end),
                _ => {
                    if let Some((s, e)) = open.replace((start, end)) {
                        counts.extend([(s - pos) as u32, (e - s) as u32]);
                        pos = e;
                    }
                }
            }
        }
        if let Some((s, e)) = open {
            counts.extend([(s - pos) as u32, (e - s) as u32]);
            pos = e;
        }
        let rest = self.width * self.height - pos;
        if rest > 0 || counts.is_empty() {
            counts.push(rest as u32);
        }
        Ok(RleMask {
            width: self.width,
            height: self.height,
            counts,
        })
    }

    /// Pixels of `self` not in `other`, computed on runs.
    pub fn difference(&self, other: &RleMask) -> Result<RleMask, MaskError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(MaskError::DimensionMismatch {
                left: (self.width, self.height),
                right: (other.width, other.height),
            });
        }
        let cut: Vec<(usize, usize)> = other.runs().collect();
        let mut counts = Vec::new();
        let mut pos = 0usize;
        let mut j = 0usize;
        let mut emit = |s: usize, e: usize, counts: &mut Vec<u32>| {
            if e > s {
                counts.extend([(s - pos) as u32, (e - s) as u32]);
                pos = e;
            }
        };
        for (start, len) in self.runs() {
            let end = start + len;
            let mut s = start;
            while j < cut.len() && cut[j].0 + cut[j].1 <= s {
                j += 1;
            }
            let mut k = j;
            while s < end && k < cut.len() && cut[k].0 < end {
                let (cs, ce) = (cut[k].0, cut[k].0 + cut[k].1);
                emit(s, cs.max(s).min(end), &mut counts);
                s = s.max(ce);
                k += 1;
            }
            emit(s, end, &mut counts);
        }
        let rest = self.width * self.height - pos;
        if rest > 0 || counts.is_empty() {
            counts.push(rest as u32);
        }
        Ok(RleMask {
            width: self.width,
            height: self.height,
            counts,
        })
    }

    /// COCO compressed string form of the counts.
    pub fn to_compressed_string(&self) -> String {
        encode_counts_string(&self.counts)
    }
}

/// Encodes run counts in the COCO LEB128-like ASCII form.
pub fn encode_counts_string(counts: &[u32]) -> String {
    let mut out = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        let mut more = true;
        while more {
            let mut ch = (x & 0x1f) as u8;
            x >>= 5;
            more = if ch & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                ch |= 0x20;
            }
            out.push((ch + 48) as char);
        }
    }
    out
}

/// Decodes the COCO compressed ASCII counts form.
pub fn decode_counts_string(s: &str) -> Result<Vec<u64>, MaskError> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        let mut more = true;
        while more {
            let Some(&b) = bytes.get(p) else {
                return Err(MaskError::Malformed(
                    "truncated compressed run-length string".into(),
                ));
            };
            if !(48..48 + 64).contains(&b) {
                return Err(MaskError::Malformed(format!(
                    "invalid character {:?} in compressed run-length string",
                    b as char
                )));
            }
            let c = (b - 48) as i64;
            x |= (c & 0x1f) << (5 * k);
            more = c & 0x20 != 0;
            p += 1;
            k += 1;
            if !more && (c & 0x10) != 0 {
                x |= -1i64 << (5 * k);
            }
        }
        let m = counts.len();
        if m > 2 {
            x += counts[m - 2];
        }
        if x < 0 {
            return Err(MaskError::Malformed("negative run length".into()));
        }
        counts.push(x);
    }
    Ok(counts.into_iter().map(|c| c as u64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_known_mask() {
        // 3x2, column-major: col0 = [0,1], col1 = [1,1], col2 = [0,0]
        let m = BinaryMask::from_fn(3, 2, |x, y| (x == 0 && y == 1) || x == 1).unwrap();
        let rle = RleMask::from_mask(&m);
        assert_eq!(rle.counts(), &[1, 3, 2]);
        assert_eq!(rle.area(), 3);
        assert_eq!(rle.to_mask(), m);
    }

    #[test]
    fn leading_foreground_gets_zero_run() {
        let m = BinaryMask::from_fn(2, 2, |x, _| x == 0).unwrap();
        assert_eq!(RleMask::from_mask(&m).counts(), &[0, 2, 2]);
    }

    #[test]
    fn counts_must_cover_raster() {
        assert!(RleMask::from_counts(2, 2, &[1, 2]).is_err());
        // a zero-length foreground run merges the background runs around it
        let rle = RleMask::from_counts(2, 2, &[1, 0, 1, 2]).unwrap();
        assert_eq!(rle.counts(), &[2, 2]);
    }

    #[test]
    fn compressed_string_roundtrip() {
        let counts = vec![5u32, 3, 100, 7, 2, 1000, 1];
        let s = encode_counts_string(&counts);
        let back = decode_counts_string(&s).unwrap();
        assert_eq!(back, counts.iter().map(|&c| c as u64).collect::<Vec<_>>());
    }

    #[test]
    fn compressed_string_rejects_garbage() {
        assert!(decode_counts_string("\u{7f}").is_err());
    }

    #[test]
    fn rle_iou_matches_dense() {
        let a = BinaryMask::from_fn(9, 7, |x, y| (x + 2 * y) % 5 < 2).unwrap();
        let b = BinaryMask::from_fn(9, 7, |x, y| x > 2 && y < 5).unwrap();
        let dense = super::super::mask_iou(&a, &b).unwrap();
        let sparse = RleMask::from_mask(&a).iou(&RleMask::from_mask(&b)).unwrap();
        assert_eq!(dense, sparse);
    }

    #[test]
    fn from_cropped_matches_full() {
        let m = BinaryMask::from_fn(12, 9, |x, y| (x * 3 + y * 5) % 7 < 3 && x > 1).unwrap();
        let (crop, off) = m.crop_to_content(1).unwrap();
        assert_eq!(RleMask::from_cropped_mask(12, 9, &crop, off).unwrap(), RleMask::from_mask(&m));
        let full = BinaryMask::from_fn(3, 2, |_, _| true).unwrap();
        assert_eq!(RleMask::from_cropped_mask(3, 2, &full, (0, 0)).unwrap().counts(), &[0, 6]);
        let empty = BinaryMask::new(2, 2).unwrap();
        assert_eq!(RleMask::from_cropped_mask(3, 2, &empty, (5, 5)).unwrap().counts(), &[6]);
    }

    #[test]
    fn union_matches_dense() {
        let a = BinaryMask::from_fn(9, 7, |x, y| (x + 2 * y) % 5 < 2).unwrap();
        let b = BinaryMask::from_fn(9, 7, |x, y| x > 2 && y < 5).unwrap();
        let mut dense = a.clone();
        dense.union_with(&b).unwrap();
        let sparse = RleMask::from_mask(&a).union(&RleMask::from_mask(&b)).unwrap();
        assert_eq!(sparse, RleMask::from_mask(&dense));
        let empty = RleMask::from_mask(&BinaryMask::new(9, 7).unwrap());
        assert_eq!(empty.union(&empty).unwrap(), empty);
    }

    #[test]
    fn difference_matches_dense() {
        let a = BinaryMask::from_fn(9, 7, |x, y| (x + 2 * y) % 5 < 3).unwrap();
        let b = BinaryMask::from_fn(9, 7, |x, y| (x * y) % 4 == 1 || (x > 5 && y > 2)).unwrap();
        let dense = BinaryMask::from_fn(9, 7, |x, y| a.get(x, y) && !b.get(x, y)).unwrap();
        let sparse = RleMask::from_mask(&a).difference(&RleMask::from_mask(&b)).unwrap();
        assert_eq!(sparse, RleMask::from_mask(&dense));
        let full = RleMask::from_mask(&BinaryMask::from_fn(9, 7, |_, _| true).unwrap());
        assert_eq!(sparse.difference(&full).unwrap().area(), 0);
    }

    #[test]
    fn cropped_decode_matches_full() {
        let m = BinaryMask::from_fn(20, 15, |x, y| (3..9).contains(&x) && (4..12).contains(&y))
            .unwrap();
        let rle = RleMask::from_mask(&m);
        assert_eq!(rle.bounding_box(), Some((3, 4, 8, 11)));
        let (crop, off) = rle.to_cropped_mask(2).unwrap();
        assert_eq!(off, (1, 2));
        assert_eq!((crop, off), m.crop_to_content(2).unwrap());
    }
}
