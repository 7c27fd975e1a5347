//! Hierarchical section pruning.
//!
//! Selected instance masks can overlap when one detection resolves to a
//! region higher in the hierarchy than another. Pruning removes the overlap
//! by unselecting the lower-level mask's pixels from the higher-level mask
//! (lower = smaller node strength, then smaller area, then smaller node id),
//! processing pairs in descending box-IoU order and iterating until no pair
//! with bbox IoU above the threshold still shares pixels. Each surviving
//! mask is then reduced to its largest connected component and empty masks
//! are dropped, so the output is a set of disjoint, connected segments.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::hierarchy::RegionTree;
use crate::hsh::InstanceMask;
use crate::mask::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

impl std::str::FromStr for Connectivity {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    /// Pairs whose mask bounding boxes exceed this IoU (and actually share
    /// pixels) trigger pruning. 0 means any positive overlap.
    pub iou_threshold: f64,
    pub connectivity: Connectivity,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            iou_threshold: 0.0,
            connectivity: Connectivity::Four,
        }
    }
}

/// Intersection over union of two boxes, in whole pixels.
pub fn box_iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// The largest connected component of a nonempty mask. Equal-sized
/// components tie-break to the one whose first pixel comes first in
/// row-major order.
pub fn largest_component(mask: &Mask, connectivity: Connectivity) -> Result<Mask> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = (mask.width(), mask.height());
    let mut seen = Mask::new(w, h);
    let mut best: Option<(u64, Vec<(u32, u32)>)> = None;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen.get(x, y) {
                continue;
            }
            // Flood fill; (x, y) is this component's first row-major pixel.
            let mut pixels = vec![(x, y)];
            seen.set(x, y, true);
            let mut head = 0;
            while head < pixels.len() {
                let (cx, cy) = pixels[head];
                head += 1;
                for &(dx, dy) in connectivity.offsets() {
                    let nx = cx as i64 + dx;
                    let ny = cy as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as u32, ny as u32);
                    if mask.get(nx, ny) && !seen.get(nx, ny) {
                        seen.set(nx, ny, true);
                        pixels.push((nx, ny));
                    }
                }
            }
            let size = pixels.len() as u64;
            // Row-major scan order guarantees earlier components win ties.
            if best.as_ref().is_none_or(|(bs, _)| size > *bs) {
                best = Some((size, pixels));
            }
        }
    }
    let mut out = Mask::new(w, h);
    for (x, y) in best.expect("nonempty mask").1 {
        out.set(x, y, true);
    }
    Ok(out)
}

// Instances are ordered by their provenance node: strength, then area, then
// node id; detection fields break exact duplicates so pruning is a function
// of the instance set, not its order.
fn level_key<'a>(inst: &'a InstanceMask, tree: &RegionTree) -> LevelKey<'a> {
    let node = tree
        .node(inst.node_id)
        .expect("instance references a node of this tree");
    LevelKey {
        strength: node.strength,
        area: node.area,
        node_id: node.id,
        class_label: &inst.class_label,
        score: inst.score,
    }
}

struct LevelKey<'a> {
    strength: f64,
    area: u64,
    node_id: u32,
    class_label: &'a str,
    score: f64,
}

impl LevelKey<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.strength
            .total_cmp(&other.strength)
            .then(self.area.cmp(&other.area))
            .then(self.node_id.cmp(&other.node_id))
            .then(self.class_label.cmp(other.class_label))
            .then(self.score.total_cmp(&other.score))
    }
}

/// Resolves overlap among instance masks of one image. Returns the
/// survivors in input order with recomputed tight boxes.
pub fn prune(
    instances: Vec<InstanceMask>,
    tree: &RegionTree,
    cfg: &PruneConfig,
) -> Result<Vec<InstanceMask>> {
    if let Some(first) = instances.first() {
        if let Some(other) = instances.iter().find(|i| i.image_id != first.image_id) {
            return Err(Error::MixedImages(
                first.image_id.clone(),
                other.image_id.clone(),
            ));
        }
    }

    let mut items: Vec<InstanceMask> = instances;
    let mut alive: Vec<bool> = vec![true; items.len()];

    loop {
        let mut changed = false;

        // Subtraction sweeps: list pairs whose recomputed boxes exceed the
        // IoU threshold and whose supports intersect, highest IoU first,
        // then subtract the lower-level mask from the higher-level one.
        // Repeat because shrinking boxes can push new pairs over the
        // threshold.
        loop {
            let boxes: Vec<Option<PixelBox>> = items
                .iter()
                .zip(&alive)
                .map(|(it, &a)| if a { it.mask.tight_bbox() } else { None })
                .collect();
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for i in 0..items.len() {
                let Some(bi) = boxes[i] else { continue };
                for j in (i + 1)..items.len() {
                    let Some(bj) = boxes[j] else { continue };
                    let iou = box_iou(&bi, &bj);
                    if iou > cfg.iou_threshold && items[i].mask.intersects(&items[j].mask) {
                        pairs.push((iou, i, j));
                    }
                }
            }
            if pairs.is_empty() {
                break;
            }
            pairs.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| {
                        let (ai, aj) = order_pair(&items, tree, a.1, a.2);
                        let (bi, bj) = order_pair(&items, tree, b.1, b.2);
                        (items[ai].node_id, items[aj].node_id)
                            .cmp(&(items[bi].node_id, items[bj].node_id))
                            .then(ai.cmp(&bi))
                            .then(aj.cmp(&bj))
                    })
            });
            for (_, i, j) in pairs {
                let (lower, higher) = order_pair(&items, tree, i, j);
                let (lo_mask, hi) = if lower < higher {
                    let (a, b) = items.split_at_mut(higher);
                    (&a[lower].mask, &mut b[0].mask)
                } else {
                    let (a, b) = items.split_at_mut(lower);
                    (&b[0].mask, &mut a[higher].mask)
                };
                hi.subtract(lo_mask);
            }
            changed = true;
        }

        // Cleanup: single connected component per mask, drop empties.
        for (i, item) in items.iter_mut().enumerate() {
            if !alive[i] {
                continue;
            }
            if item.mask.is_empty() {
                alive[i] = false;
                changed = true;
                continue;
            }
            let reduced = largest_component(&item.mask, cfg.connectivity)?;
            if reduced != item.mask {
                item.mask = reduced;
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    let mut out = Vec::new();
    for (item, alive) in items.into_iter().zip(alive) {
        if !alive {
            continue;
        }
        let mut item = item;
        item.bbox = item.mask.tight_bbox().expect("survivors are nonempty");
        out.push(item);
    }
    Ok(out)
}

/// Returns `(lower, higher)` indices of a pair by hierarchy level.
fn order_pair(items: &[InstanceMask], tree: &RegionTree, i: usize, j: usize) -> (usize, usize) {
    let ki = level_key(&items[i], tree);
    let kj = level_key(&items[j], tree);
    match ki.cmp(&kj) {
        Ordering::Greater => (j, i),
        // Exact duplicates keep the earlier instance as the lower level.
        _ => (i, j),
    }
}
