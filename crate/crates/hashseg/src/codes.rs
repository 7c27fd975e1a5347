//! Image codes: fixed-dimension descriptors of box patches.
//!
//! A code is a grid of cell-mean intensities over the box crop: the crop is
//! split into `G x G` equal cells in continuous coordinates and each cell
//! averages its pixels with exact fractional coverage (a pixel straddling a
//! cell boundary contributes proportionally). Components are in `[0, 1]`.
//! The fractional-coverage rule makes codes exactly invariant to translation
//! and to nearest-neighbor upscaling of the patch, so boxes of any size live
//! in one comparable descriptor space. Codes are compared under L1 distance.

use image::RgbImage;

use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::hierarchy::{NodeId, RegionTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    /// Single BT.601 luma channel.
    Luma,
    Rgb,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Luma => 1,
            Channels::Rgb => 3,
        }
    }
}

impl std::str::FromStr for Channels {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "1" | "luma" => Ok(Channels::Luma),
            "3" | "rgb" => Ok(Channels::Rgb),
            other => Err(format!("unknown channel mode {other:?} (use 1 or 3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeConfig {
    /// Cells per side; the descriptor has `grid * grid * channels` components.
    pub grid: u32,
    pub channels: Channels,
    /// For region codes: zero out pixels outside the region's support.
    pub masked: bool,
}

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig {
            grid: 16,
            channels: Channels::Luma,
            masked: false,
        }
    }
}

impl CodeConfig {
    pub fn dim(&self) -> usize {
        (self.grid as usize) * (self.grid as usize) * self.channels.count()
    }
}

/// Descriptor vector; components in `[0, 1]`, laid out cell-major
/// (row-major cells, channels interleaved within a cell).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCode {
    values: Vec<f64>,
}

impl ImageCode {
    pub fn new(values: Vec<f64>) -> Self {
        ImageCode { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

// BT.601 luma in thousandths: (299 R + 587 G + 114 B) / 1000.
const LUMA_WEIGHTS: [u64; 3] = [299, 587, 114];
const LUMA_DEN: u64 = 1000;

/// Code of a box crop of `image`.
pub fn extract_code(image: &RgbImage, bx: PixelBox, cfg: &CodeConfig) -> Result<ImageCode> {
    extract_code_inner(image, bx, cfg, |_, _| true)
}

/// Code of a region: its tight bounding-box crop, with out-of-region pixels
/// contributing zero intensity when `cfg.masked` is set. With `masked` off
/// this equals [`extract_code`] over the region's bbox, putting region codes
/// and detection-box codes in the same space.
pub fn extract_region_code(
    image: &RgbImage,
    tree: &RegionTree,
    id: NodeId,
    cfg: &CodeConfig,
) -> Result<ImageCode> {
    let bbox = tree.node(id)?.bbox;
    if cfg.masked {
        let mask = tree.region_mask(id)?;
        extract_code_inner(image, bbox, cfg, |x, y| mask.get(x, y))
    } else {
        extract_code_inner(image, bbox, cfg, |_, _| true)
    }
}

fn extract_code_inner(
    image: &RgbImage,
    bx: PixelBox,
    cfg: &CodeConfig,
    keep: impl Fn(u32, u32) -> bool,
) -> Result<ImageCode> {
    assert!(cfg.grid >= 2, "descriptor grid must be at least 2");
    if !bx.fits(image.width(), image.height()) {
        return Err(Error::BoxOutOfBounds {
            x: bx.x,
            y: bx.y,
            w: bx.w,
            h: bx.h,
            width: image.width(),
            height: image.height(),
        });
    }

    let g = cfg.grid as u64;
    let (w, h) = (bx.w as u64, bx.h as u64);
    let n_ch = cfg.channels.count();
    let mut values = Vec::with_capacity((g * g) as usize * n_ch);

    // Work in coordinates scaled by G: pixel r spans [r*G, r*G + G), cell i
    // spans [i*h, (i+1)*h). Overlap lengths are exact integers.
    let overlap = |a0: u64, a1: u64, b0: u64, b1: u64| -> u64 {
        let lo = a0.max(b0);
        let hi = a1.min(b1);
        hi.saturating_sub(lo)
    };

    for gy in 0..g {
        let cy0 = gy * h;
        let cy1 = (gy + 1) * h;
        let r0 = cy0 / g;
        let r1 = cy1.div_ceil(g).min(h);
        for gx in 0..g {
            let cx0 = gx * w;
            let cx1 = (gx + 1) * w;
            let c0 = cx0 / g;
            let c1 = cx1.div_ceil(g).min(w);

            let mut acc = [0u64; 3];
            for r in r0..r1 {
                let ay = overlap(r * g, r * g + g, cy0, cy1);
                if ay == 0 {
                    continue;
                }
                for c in c0..c1 {
                    let ax = overlap(c * g, c * g + g, cx0, cx1);
                    if ax == 0 {
                        continue;
                    }
                    let (px, py) = (bx.x + c as u32, bx.y + r as u32);
                    if !keep(px, py) {
                        continue;
                    }
                    let p = image.get_pixel(px, py).0;
                    let weight = ax * ay;
                    match cfg.channels {
                        Channels::Luma => {
                            let luma = LUMA_WEIGHTS[0] * p[0] as u64
                                + LUMA_WEIGHTS[1] * p[1] as u64
                                + LUMA_WEIGHTS[2] * p[2] as u64;
                            acc[0] += luma * weight;
                        }
                        Channels::Rgb => {
                            for ch in 0..3 {
                                acc[ch] += p[ch] as u64 * weight;
                            }
                        }
                    }
                }
            }

            // Cell area in scaled units is w*h regardless of position.
            let den = (w * h * 255) as f64;
            match cfg.channels {
                Channels::Luma => values.push(acc[0] as f64 / (den * LUMA_DEN as f64)),
                Channels::Rgb => {
                    for &channel_acc in &acc {
                        values.push(channel_acc as f64 / den);
                    }
                }
            }
        }
    }

    Ok(ImageCode { values })
}

/// L1 (Manhattan) distance between codes of equal dimension.
pub fn l1_distance(a: &ImageCode, b: &ImageCode) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .sum())
}
