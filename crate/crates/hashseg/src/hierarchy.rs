//! Hierarchical region trees.
//!
//! A region tree is a family of nested partitions of the pixel domain: the
//! leaves are the finest partition (connected regions of the zero-strength
//! boundary graph), the root is the whole image, and every internal node is
//! the union of its children, created when its children merge at some
//! boundary strength. Thresholding the tree at a level reproduces the
//! partition at that level.
//!
//! Trees are built either from an ultrametric contour map ([`UcmGrid`]) or
//! from an explicit leaf-label map plus merge list ([`RegionTree::from_merges`]).
//! Both constructions are deterministic; equal-strength merges are batched so
//! the result does not depend on edge processing order within a level.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::mask::Mask;

pub type NodeId = u32;

/// Boundary-strength grid at doubled resolution: a `width` x `height` image
/// is stored as a `(2*width+1) x (2*height+1)` grid where odd coordinates are
/// pixel cells and even coordinates are inter-pixel boundary positions.
#[derive(Debug, Clone)]
pub struct UcmGrid {
    width: u32,
    height: u32,
    strengths: Vec<f64>,
}

impl UcmGrid {
    pub fn new(width: u32, height: u32, strengths: Vec<f64>) -> Result<Self> {
        if width < 1 || height < 1 {
            return Err(Error::MalformedGrid("image dimensions must be at least 1x1".into()));
        }
        let gw = 2 * width as usize + 1;
        let gh = 2 * height as usize + 1;
        if strengths.len() != gw * gh {
            return Err(Error::MalformedGrid(format!(
                "expected {}x{} = {} grid values, got {}",
                gw,
                gh,
                gw * gh,
                strengths.len()
            )));
        }
        if let Some(v) = strengths.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::MalformedGrid(format!("strength {v} outside [0, 1]")));
        }
        Ok(UcmGrid {
            width,
            height,
            strengths,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn grid_width(&self) -> usize {
        2 * self.width as usize + 1
    }

    /// Strength of the boundary between pixels `(x, y)` and `(x+1, y)`.
    fn boundary_right(&self, x: u32, y: u32) -> f64 {
        self.strengths[(2 * y as usize + 1) * self.grid_width() + (2 * x as usize + 2)]
    }

    /// Strength of the boundary between pixels `(x, y)` and `(x, y+1)`.
    fn boundary_below(&self, x: u32, y: u32) -> f64 {
        self.strengths[(2 * y as usize + 2) * self.grid_width() + (2 * x as usize + 1)]
    }
}

/// Per-pixel leaf labels for the merge-list construction. Labels must be
/// contiguous integers starting at 0.
#[derive(Debug, Clone)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
}

/// One merge event: the listed live nodes become children of a new node at
/// the given strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub children: Vec<NodeId>,
    pub strength: f64,
}

#[derive(Debug, Clone)]
pub struct RegionNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Merge level; 0 for leaves, strictly above every child otherwise.
    pub strength: f64,
    pub area: u64,
    pub bbox: PixelBox,
}

impl RegionNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RegionTree {
    nodes: Vec<RegionNode>,
    root: NodeId,
    width: u32,
    height: u32,
    leaf_count: u32,
    /// Per-pixel leaf node id, row-major.
    leaf_labels: Vec<NodeId>,
    /// Sorted distinct node strengths (0 included), subsampled to at most 256.
    levels: Vec<f64>,
    // CSR layout of pixel indices grouped by leaf, for O(area) mask extraction.
    leaf_pixel_start: Vec<usize>,
    leaf_pixels: Vec<u32>,
}

const MAX_LEVELS: usize = 256;

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != x {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Returns the surviving root.
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return a;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
        a
    }
}

impl RegionTree {
    /// Builds the tree from a UCM grid: leaves are connected regions of the
    /// zero-strength boundary graph, then adjacent regions merge in
    /// increasing boundary-strength order. Merges at equal strength are
    /// batched into one multi-child node per merged component.
    pub fn from_ucm(grid: &UcmGrid) -> Result<Self> {
        let (w, h) = (grid.width, grid.height);
        let n_pixels = w as usize * h as usize;
        let pixel = |x: u32, y: u32| y * w + x;

        // Zero-strength adjacencies define the leaves; the rest are merge edges.
        let mut uf = UnionFind::new(n_pixels);
        let mut edges: Vec<(f64, u32, u32)> = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    let s = grid.boundary_right(x, y);
                    if s == 0.0 {
                        uf.union(pixel(x, y), pixel(x + 1, y));
                    } else {
                        edges.push((s, pixel(x, y), pixel(x + 1, y)));
                    }
                }
                if y + 1 < h {
                    let s = grid.boundary_below(x, y);
                    if s == 0.0 {
                        uf.union(pixel(x, y), pixel(x, y + 1));
                    } else {
                        edges.push((s, pixel(x, y), pixel(x, y + 1)));
                    }
                }
            }
        }

        // Leaf ids in first-pixel row-major order.
        let mut leaf_of_root: HashMap<u32, NodeId> = HashMap::new();
        let mut leaf_labels = vec![0 as NodeId; n_pixels];
        for p in 0..n_pixels as u32 {
            let root = uf.find(p);
            let next = leaf_of_root.len() as NodeId;
            let id = *leaf_of_root.entry(root).or_insert(next);
            leaf_labels[p as usize] = id;
        }
        let leaf_count = leaf_of_root.len() as u32;

        edges.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let merges = merge_sweep(&leaf_labels, leaf_count, &edges);
        Self::assemble(
            LabelMap {
                width: w,
                height: h,
                labels: leaf_labels,
            },
            &merges,
        )
    }

    /// Builds the tree from an explicit leaf partition and merge list.
    /// New nodes are numbered `leaf_count, leaf_count + 1, ...` in list order.
    pub fn from_merges(leaves: &LabelMap, merges: &[MergeStep]) -> Result<Self> {
        if leaves.labels.len() != leaves.width as usize * leaves.height as usize {
            return Err(Error::InvalidMergeList(format!(
                "label map has {} entries for a {}x{} domain",
                leaves.labels.len(),
                leaves.width,
                leaves.height
            )));
        }
        if leaves.labels.is_empty() {
            return Err(Error::InvalidMergeList("empty label map".into()));
        }
        let leaf_count = *leaves.labels.iter().max().unwrap() + 1;
        let mut seen = vec![false; leaf_count as usize];
        for &l in &leaves.labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidMergeList(format!(
                "labels are not contiguous: label {missing} never occurs"
            )));
        }
        Self::assemble(
            LabelMap {
                width: leaves.width,
                height: leaves.height,
                labels: leaves.labels.clone(),
            },
            merges,
        )
    }

    fn assemble(leaves: LabelMap, merges: &[MergeStep]) -> Result<Self> {
        let leaf_count = *leaves.labels.iter().max().unwrap() + 1;
        let n_total = leaf_count as usize + merges.len();

        // Leaf geometry from the label map.
        let mut area = vec![0u64; leaf_count as usize];
        let mut min_x = vec![u32::MAX; leaf_count as usize];
        let mut min_y = vec![u32::MAX; leaf_count as usize];
        let mut max_x = vec![0u32; leaf_count as usize];
        let mut max_y = vec![0u32; leaf_count as usize];
        for (i, &l) in leaves.labels.iter().enumerate() {
            let (x, y) = (i as u32 % leaves.width, i as u32 / leaves.width);
            let l = l as usize;
            area[l] += 1;
            min_x[l] = min_x[l].min(x);
            min_y[l] = min_y[l].min(y);
            max_x[l] = max_x[l].max(x);
            max_y[l] = max_y[l].max(y);
        }

        let mut nodes: Vec<RegionNode> = (0..leaf_count)
            .map(|id| RegionNode {
                id,
                parent: None,
                children: Vec::new(),
                strength: 0.0,
                area: area[id as usize],
                bbox: PixelBox::new(
                    min_x[id as usize],
                    min_y[id as usize],
                    max_x[id as usize] - min_x[id as usize] + 1,
                    max_y[id as usize] - min_y[id as usize] + 1,
                ),
            })
            .collect();

        let mut live = vec![true; n_total];
        let mut live_count = leaf_count as usize;
        let mut prev_strength = 0.0f64;
        for (step_idx, step) in merges.iter().enumerate() {
            let new_id = leaf_count + step_idx as NodeId;
            if step.children.len() < 2 {
                return Err(Error::InvalidMergeList(format!(
                    "merge {step_idx} has fewer than two children"
                )));
            }
            if !(0.0..=1.0).contains(&step.strength) {
                return Err(Error::InvalidMergeList(format!(
                    "merge {step_idx} strength {} outside [0, 1]",
                    step.strength
                )));
            }
            if step.strength < prev_strength {
                return Err(Error::InvalidMergeList(format!(
                    "merge {step_idx} strength {} decreases below {}",
                    step.strength, prev_strength
                )));
            }
            prev_strength = step.strength;

            let mut children = step.children.clone();
            children.sort_unstable();
            children.dedup();
            if children.len() != step.children.len() {
                return Err(Error::InvalidMergeList(format!(
                    "merge {step_idx} repeats a child id"
                )));
            }
            let mut merged_area = 0u64;
            let mut bbox: Option<PixelBox> = None;
            for &c in &children {
                if c >= new_id || !live[c as usize] {
                    return Err(Error::InvalidMergeList(format!(
                        "merge {step_idx} references dead or unknown node {c}"
                    )));
                }
                if nodes[c as usize].strength >= step.strength {
                    return Err(Error::InvalidMergeList(format!(
                        "merge {step_idx} strength {} is not above child {}'s strength {}",
                        step.strength, c, nodes[c as usize].strength
                    )));
                }
                live[c as usize] = false;
                nodes[c as usize].parent = Some(new_id);
                merged_area += nodes[c as usize].area;
                bbox = Some(match bbox {
                    None => nodes[c as usize].bbox,
                    Some(b) => b.union_box(&nodes[c as usize].bbox),
                });
            }
            live_count -= children.len() - 1;
            nodes.push(RegionNode {
                id: new_id,
                parent: None,
                children,
                strength: step.strength,
                area: merged_area,
                bbox: bbox.unwrap(),
            });
        }

        if live_count != 1 {
            return Err(Error::InvalidMergeList(format!(
                "merge list leaves {live_count} roots instead of one"
            )));
        }
        let root = nodes
            .iter()
            .position(|n| live[n.id as usize])
            .expect("exactly one live node") as NodeId;

        // CSR of pixels per leaf.
        let mut counts = vec![0usize; leaf_count as usize];
        for &l in &leaves.labels {
            counts[l as usize] += 1;
        }
        let mut leaf_pixel_start = vec![0usize; leaf_count as usize + 1];
        for i in 0..leaf_count as usize {
            leaf_pixel_start[i + 1] = leaf_pixel_start[i] + counts[i];
        }
        let mut cursor = leaf_pixel_start.clone();
        let mut leaf_pixels = vec![0u32; leaves.labels.len()];
        for (p, &l) in leaves.labels.iter().enumerate() {
            leaf_pixels[cursor[l as usize]] = p as u32;
            cursor[l as usize] += 1;
        }

        let mut levels: Vec<f64> = nodes.iter().map(|n| n.strength).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.len() > MAX_LEVELS {
            let last = levels.len() - 1;
            levels = (0..MAX_LEVELS)
                .map(|i| levels[(i * last) / (MAX_LEVELS - 1)])
                .collect();
            levels.dedup();
        }

        Ok(RegionTree {
            nodes,
            root,
            width: leaves.width,
            height: leaves.height,
            leaf_count,
            leaf_labels: leaves.labels,
            levels,
            leaf_pixel_start,
            leaf_pixels,
        })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn leaf_count(&self) -> u32 {
        self.leaf_count
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&RegionNode> {
        self.nodes.get(id as usize).ok_or(Error::UnknownNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &RegionNode> {
        self.nodes.iter()
    }

    /// Distinct merge levels present in the tree, ascending (0 first).
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Per-pixel leaf node id, row-major.
    pub fn leaf_labels(&self) -> &[NodeId] {
        &self.leaf_labels
    }

    /// The partition at `level`: maximal nodes whose strength does not exceed
    /// it. `level = 0` gives the leaves, `level >= max strength` the root.
    pub fn partition_at(&self, level: f64) -> Vec<NodeId> {
        let level = level.max(0.0);
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if node.strength <= level {
                out.push(id);
            } else {
                stack.extend_from_slice(&node.children);
            }
        }
        out.sort_unstable();
        out
    }

    /// Binary support of a node over the full domain.
    pub fn region_mask(&self, id: NodeId) -> Result<Mask> {
        if id as usize >= self.nodes.len() {
            return Err(Error::UnknownNode(id));
        }
        let mut mask = Mask::new(self.width, self.height);
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.is_leaf() {
                let range =
                    self.leaf_pixel_start[n as usize]..self.leaf_pixel_start[n as usize + 1];
                for &p in &self.leaf_pixels[range] {
                    mask.set(p % self.width, p / self.width, true);
                }
            } else {
                stack.extend_from_slice(&node.children);
            }
        }
        Ok(mask)
    }

    /// All non-root nodes with at least `min_area` pixels, ascending id.
    /// The root is excluded: a whole-image region is never a useful match.
    pub fn eligible_nodes(&self, min_area: u64) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.id != self.root && n.area >= min_area)
            .map(|n| n.id)
            .collect()
    }

    /// The merge list that reproduces this tree via [`RegionTree::from_merges`].
    pub fn merge_list(&self) -> Vec<MergeStep> {
        self.nodes
            .iter()
            .filter(|n| !n.is_leaf())
            .map(|n| MergeStep {
                children: n.children.clone(),
                strength: n.strength,
            })
            .collect()
    }
}

/// Kruskal-style sweep over sorted edges; edges at equal strength are batched
/// so each component that grows at a level becomes a single multi-child node.
/// Returns merge steps referencing leaf ids and previously created node ids.
fn merge_sweep(leaf_labels: &[NodeId], leaf_count: u32, edges: &[(f64, u32, u32)]) -> Vec<MergeStep> {
    let mut uf = UnionFind::new(leaf_count as usize);
    // Current top node id for each union-find root.
    let mut top: Vec<NodeId> = (0..leaf_count).collect();
    let mut merges: Vec<MergeStep> = Vec::new();
    let mut next_id = leaf_count;

    let mut i = 0;
    while i < edges.len() {
        let strength = edges[i].0;
        let mut j = i;
        while j < edges.len() && edges[j].0 == strength {
            j += 1;
        }

        // Union phase: gather the set of previous tops per surviving root.
        let mut pending: HashMap<u32, Vec<NodeId>> = HashMap::new();
        for &(_, pa, pb) in &edges[i..j] {
            let (la, lb) = (leaf_labels[pa as usize], leaf_labels[pb as usize]);
            let (ra, rb) = (uf.find(la), uf.find(lb));
            if ra == rb {
                continue;
            }
            let group_a = pending.remove(&ra).unwrap_or_else(|| vec![top[ra as usize]]);
            let group_b = pending.remove(&rb).unwrap_or_else(|| vec![top[rb as usize]]);
            let root = uf.union(ra, rb);
            let mut joined = group_a;
            joined.extend(group_b);
            pending.insert(root, joined);
        }

        // Node creation in ascending min-child order for deterministic ids.
        let mut created: Vec<(u32, Vec<NodeId>)> = pending.into_iter().collect();
        for (_, children) in created.iter_mut() {
            children.sort_unstable();
        }
        created.sort_by_key(|(_, children)| children[0]);
        for (root, children) in created {
            merges.push(MergeStep { children, strength });
            top[root as usize] = next_id;
            next_id += 1;
        }

        i = j;
    }
    merges
}
