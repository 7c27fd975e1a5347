//! Pixel-grid boxes.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Axis-aligned box on the pixel grid; `(x, y)` is the top-left pixel,
/// `w`/`h` are in whole pixels and at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        debug_assert!(w >= 1 && h >= 1, "boxes must span at least one pixel");
        PixelBox { x, y, w, h }
    }

    /// One past the rightmost column.
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    /// One past the bottom row.
    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn intersection_area(&self, other: &PixelBox) -> u64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x0 < x1 && y0 < y1 {
            (x1 - x0) as u64 * (y1 - y0) as u64
        } else {
            0
        }
    }

    /// Smallest box covering both.
    pub fn union_box(&self, other: &PixelBox) -> PixelBox {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        PixelBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// True when the box lies inside a `width` x `height` image.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width && self.bottom() <= height
    }
}

// Boxes travel through manifests as `[x, y, w, h]`.
impl Serialize for PixelBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.w, self.h].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PixelBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y, w, h] = <[u32; 4]>::deserialize(deserializer)?;
        if w < 1 || h < 1 {
            return Err(D::Error::custom("box width and height must be at least 1"));
        }
        Ok(PixelBox { x, y, w, h })
    }
}
