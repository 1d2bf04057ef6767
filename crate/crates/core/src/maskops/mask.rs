use super::MaskError;

/// Dense binary raster, row-major, pixel `(x, y)` centered at integer coordinates.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, MaskError> {
        let mut mask = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                mask.bits[y * width + x] = f(x, y);
            }
        }
        Ok(mask)
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        if bits.len() != width * height {
            return Err(MaskError::Malformed(format!(
                "raster has {} cells, expected {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get) but treats everything outside the raster as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn union_with(&mut self, other: &BinaryMask) -> Result<(), MaskError> {
        self.check_dims(other)?;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize, MaskError> {
        self.check_dims(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count())
    }

    pub(crate) fn check_dims(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.dims() != other.dims() {
            return Err(MaskError::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the foreground.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.foreground() {
            bbox = Some(match bbox {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bbox
    }

    /// Crops to the foreground bounding box plus `margin` background pixels on each side.
    /// Returns the crop and the offset of its origin in this mask's coordinates
    /// (which may be negative when the margin extends past the border).
    pub fn crop_to_content(&self, margin: usize) -> Option<(BinaryMask, (i64, i64))> {
        let (x0, y0, x1, y1) = self.bounding_box()?;
        let ox = x0 as i64 - margin as i64;
        let oy = y0 as i64 - margin as i64;
        let w = x1 - x0 + 1 + 2 * margin;
        let h = y1 - y0 + 1 + 2 * margin;
        let crop = BinaryMask::from_fn(w, h, |x, y| self.get_signed(ox + x as i64, oy + y as i64))
            .expect("crop is nonempty");
        Some((crop, (ox, oy)))
    }

    /// Number of 8-connected foreground components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.bits.len()];
        let mut stack = Vec::new();
        let mut components = 0;
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % self.width) as i64, (i / self.width) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if self.get_signed(nx, ny) {
                            let j = ny as usize * self.width + nx as usize;
                            if !seen[j] {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
        }
        components
    }

    /// Rotates by 90° counter-clockwise on screen: pixel `(x, y)` moves to `(y, width - 1 - x)`.
    pub fn rotate90(&self) -> BinaryMask {
        let (w, h) = self.dims();
        BinaryMask::from_fn(h, w, |nx, ny| self.get(w - 1 - ny, nx)).expect("nonempty")
    }
}

/// Intersection over union. Two empty masks have IoU 0.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    a.check_dims(b)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (p, q) in a.bits.iter().zip(&b.bits) {
        inter += (*p && *q) as usize;
        union += (*p || *q) as usize;
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1).unwrap()
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = rect(8, 8, 1, 1, 4, 4);
        let b = rect(8, 8, 5, 5, 7, 7);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn iou_two_by_two_squares_sharing_a_strip() {
        let a = rect(4, 4, 0, 0, 2, 2);
        let b = rect(4, 4, 1, 0, 3, 2);
        assert!((mask_iou(&a, &b).unwrap() - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn iou_of_empty_masks_is_zero() {
        let a = BinaryMask::new(3, 3).unwrap();
        assert_eq!(mask_iou(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn iou_rejects_dimension_mismatch() {
        let a = BinaryMask::new(3, 3).unwrap();
        let b = BinaryMask::new(3, 4).unwrap();
        assert!(matches!(
            mask_iou(&a, &b),
            Err(MaskError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_sized_mask_is_rejected() {
        assert!(BinaryMask::new(0, 5).is_err());
    }

    #[test]
    fn components_and_crop() {
        let mut m = rect(10, 10, 1, 1, 3, 3);
        m.union_with(&rect(10, 10, 6, 6, 9, 8)).unwrap();
        assert_eq!(m.component_count(), 2);
        let (crop, off) = m.crop_to_content(1).unwrap();
        assert_eq!(off, (0, 0));
        assert_eq!(crop.dims(), (10, 9));
        assert_eq!(crop.count(), m.count());
    }

    #[test]
    fn rotate90_four_times_is_identity() {
        let m = rect(7, 4, 1, 0, 5, 2);
        let r = m.rotate90();
        assert_eq!(r.dims(), (4, 7));
        assert_eq!(r.rotate90().rotate90().rotate90(), m);
    }
}
