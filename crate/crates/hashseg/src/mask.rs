//! Binary pixel masks.

use crate::error::{Error, Result};
use crate::geometry::PixelBox;

/// Dense binary raster. Row-major, `data[y * width + x]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Mask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[(y * width + x) as usize] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn same_dims(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[(y * self.width + x) as usize] = value;
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Tight bounding box of the set pixels, `None` when empty.
    pub fn tight_bbox(&self) -> Option<PixelBox> {
        let mut x0 = u32::MAX;
        let mut y0 = u32::MAX;
        let mut x1 = 0u32;
        let mut y1 = 0u32;
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| PixelBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    pub fn intersection_count(&self, other: &Mask) -> u64 {
        debug_assert!(self.same_dims(other));
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count() as u64
    }

    pub fn union_count(&self, other: &Mask) -> u64 {
        debug_assert!(self.same_dims(other));
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a || b)
            .count() as u64
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        debug_assert!(self.same_dims(other));
        self.data.iter().zip(&other.data).any(|(&a, &b)| a && b)
    }

    /// Clears every pixel that is set in `other`.
    pub fn subtract(&mut self, other: &Mask) {
        debug_assert!(self.same_dims(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            if b {
                *a = false;
            }
        }
    }

    pub fn union_with(&mut self, other: &Mask) {
        debug_assert!(self.same_dims(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    /// Checks `a` and `b` for equal dimensions, as an error.
    pub fn check_dims(a: &Mask, b: &Mask) -> Result<()> {
        if a.same_dims(b) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: (a.width as usize) * (a.height as usize),
                got: (b.width as usize) * (b.height as usize),
            })
        }
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_bbox_of_empty_mask_is_none() {
        assert_eq!(Mask::new(4, 4).tight_bbox(), None);
    }

    #[test]
    fn tight_bbox_hugs_set_pixels() {
        let mut m = Mask::new(8, 8);
        m.set(2, 3, true);
        m.set(5, 6, true);
        assert_eq!(m.tight_bbox(), Some(PixelBox::new(2, 3, 4, 4)));
    }

    #[test]
    fn subtract_clears_overlap_only() {
        let a = Mask::from_fn(4, 1, |x, _| x < 3);
        let b = Mask::from_fn(4, 1, |x, _| x >= 2);
        let mut c = a.clone();
        c.subtract(&b);
        assert_eq!(c.count_ones(), 2);
        assert!(c.get(0, 0) && c.get(1, 0) && !c.get(2, 0));
    }
}
