//! Hierarchical section hashing: the per-image segmentation pipeline.
//!
//! Building the map extracts a code for every eligible hierarchy region and
//! fits the LSH index over them ("training" on the image's own hierarchy).
//! Resolving a detection extracts the code of its bounding-box patch,
//! queries the index for the nearest region code, and returns that region's
//! mask. One map serves one image; regions are only meaningful within their
//! own hierarchy.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::codes::{extract_code, extract_region_code, l1_distance, CodeConfig};
use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::hierarchy::{NodeId, RegionTree};
use crate::hsp::{self, box_iou, PruneConfig};
use crate::lsh::{ItemId, LshIndex};
use crate::mask::Mask;

/// One detector output box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    pub score: f64,
    pub bbox: PixelBox,
}

/// A selected region: the instance mask with its provenance node.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub image_id: String,
    pub class_label: String,
    pub score: f64,
    pub node_id: NodeId,
    pub mask: Mask,
    /// Tight box of the mask.
    pub bbox: PixelBox,
}

/// How detection queries resolve against the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchOptions {
    /// Degrade to exact search when every bucket lookup comes back empty.
    /// The raw LSH behavior (report and stop) is kept in the lsh module;
    /// a segmentation pipeline has to emit a mask per detection.
    pub fallback: bool,
    /// Skip matches whose region box does not overlap the detection box,
    /// taking the next-nearest candidate instead.
    pub require_overlap: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            fallback: true,
            require_overlap: false,
        }
    }
}

/// Pipeline parameters for [`segment_image`].
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentParams {
    pub code: CodeConfig,
    pub k: u32,
    pub l: u32,
    pub seed: u64,
    pub min_area: u64,
    pub matching: MatchOptions,
    pub prune: PruneConfig,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            code: CodeConfig::default(),
            k: 24,
            l: 32,
            seed: 0,
            min_area: 1,
            matching: MatchOptions::default(),
            prune: PruneConfig::default(),
        }
    }
}

/// The fitted per-image map: an LSH index over region codes. Item ids in the
/// index are the region node ids themselves.
pub struct HshMap<'t> {
    index: LshIndex,
    tree: &'t RegionTree,
    cfg: CodeConfig,
}

/// Indexes every eligible region (non-root, at least `min_area` pixels) of
/// the image's hierarchy.
pub fn build_hsh<'t>(
    image: &RgbImage,
    tree: &'t RegionTree,
    cfg: CodeConfig,
    k: u32,
    l: u32,
    seed: u64,
    min_area: u64,
) -> Result<HshMap<'t>> {
    let eligible = tree.eligible_nodes(min_area);
    if eligible.is_empty() {
        return Err(Error::EmptyHierarchy);
    }
    let codes = eligible
        .into_iter()
        .map(|id| Ok((id as ItemId, extract_region_code(image, tree, id, &cfg)?)))
        .collect::<Result<_>>()?;
    Ok(HshMap {
        index: LshIndex::fit(codes, k, l, seed)?,
        tree,
        cfg,
    })
}

impl HshMap<'_> {
    pub fn index(&self) -> &LshIndex {
        &self.index
    }

    pub fn tree(&self) -> &RegionTree {
        self.tree
    }

    pub fn cfg(&self) -> &CodeConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// The region node behind an indexed item, if present.
    pub fn node_of(&self, item: ItemId) -> Option<NodeId> {
        self.index.codes().contains_key(&item).then_some(item)
    }

    /// Resolves one detection to its best-matching region mask, with
    /// brute-force fallback on empty buckets.
    pub fn segment_box(&self, image: &RgbImage, det: &Detection) -> Result<InstanceMask> {
        self.segment_box_with(image, det, &MatchOptions::default())
    }

    pub fn segment_box_with(
        &self,
        image: &RgbImage,
        det: &Detection,
        opts: &MatchOptions,
    ) -> Result<InstanceMask> {
        let query = extract_code(image, det.bbox, &self.cfg)?;
        let node = if opts.require_overlap {
            let mut pool: Vec<ItemId> = self.index.candidates(&query)?.into_iter().collect();
            if pool.is_empty() {
                if !opts.fallback {
                    return Err(Error::EmptyCandidates);
                }
                pool = self.index.codes().keys().copied().collect();
            }
            let mut ranked: Vec<(f64, ItemId)> = pool
                .into_iter()
                .map(|id| Ok((l1_distance(&self.index.codes()[&id], &query)?, id)))
                .collect::<Result<_>>()?;
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            ranked
                .iter()
                .find(|(_, id)| box_iou(&self.tree.node(*id).expect("indexed node").bbox, &det.bbox) > 0.0)
                .map(|&(_, id)| id)
                // Nothing overlaps: fall back to the plain nearest match.
                .unwrap_or(ranked[0].1)
        } else {
            self.index.query_nearest(&query, opts.fallback)?.0
        };

        let mask = self.tree.region_mask(node)?;
        let bbox = mask.tight_bbox().expect("regions have at least one pixel");
        Ok(InstanceMask {
            image_id: det.image_id.clone(),
            class_label: det.class_label.clone(),
            score: det.score,
            node_id: node,
            mask,
            bbox,
        })
    }
}

/// Full pipeline for one image: build the map once, resolve every detection,
/// prune the selected masks. Output order follows detection order.
pub fn segment_image(
    image: &RgbImage,
    tree: &RegionTree,
    detections: &[Detection],
    params: &SegmentParams,
) -> Result<Vec<InstanceMask>> {
    if detections.is_empty() {
        return Ok(Vec::new());
    }
    let hsh = build_hsh(
        image,
        tree,
        params.code,
        params.k,
        params.l,
        params.seed,
        params.min_area,
    )?;
    let selected = detections
        .iter()
        .map(|det| hsh.segment_box_with(image, det, &params.matching))
        .collect::<Result<Vec<_>>>()?;
    hsp::prune(selected, tree, &params.prune)
}
