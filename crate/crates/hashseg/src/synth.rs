//! Deterministic synthetic scenes for tests and demos.
//!
//! A scene is a flat background with up to six flat-gray shapes (rectangles
//! or ellipses) placed on a slot grid so they never touch, plus the matching
//! merge-list hierarchy, ground-truth masks, and ground-truth-derived
//! detection boxes (optionally jittered). Gray levels are drawn from a
//! well-separated palette so region codes of different shapes never tie.
//! The same seed always produces byte-identical outputs.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;
use crate::eval::GroundTruthInstance;
use crate::geometry::PixelBox;
use crate::hierarchy::{LabelMap, MergeStep, RegionTree};
use crate::hsh::Detection;
use crate::io;
use crate::mask::Mask;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub seed: u64,
    /// Number of shapes, 1..=6.
    pub shapes: u32,
    /// Detection box jitter radius in pixels (0 = exact GT boxes).
    pub jitter: u32,
    pub width: u32,
    pub height: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            shapes: 3,
            jitter: 0,
            width: 168,
            height: 112,
        }
    }
}

pub struct SynthScene {
    pub image_id: String,
    pub image: RgbImage,
    pub leaves: LabelMap,
    pub merges: Vec<MergeStep>,
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GroundTruthInstance>,
}

impl SynthScene {
    pub fn tree(&self) -> Result<RegionTree> {
        RegionTree::from_merges(&self.leaves, &self.merges)
    }
}

const BACKGROUND_GRAY: u8 = 235;
const SHAPE_GRAYS: [u8; 6] = [25, 60, 95, 130, 165, 200];

pub fn generate(cfg: &SynthConfig) -> SynthScene {
    assert!(
        (1..=6).contains(&cfg.shapes),
        "scenes hold between 1 and 6 shapes"
    );
    assert!(cfg.width >= 60 && cfg.height >= 40, "canvas too small");
    let mut rng = SeededRng::new(cfg.seed);
    let image_id = format!("synth-{:04}", cfg.seed);

    // 3x2 slot grid; each shape stays inside its own slot, so shapes are
    // pairwise disjoint and the background stays connected.
    let (cols, rows) = (3u32, 2u32);
    let (slot_w, slot_h) = (cfg.width / cols, cfg.height / rows);
    let mut slots: Vec<u32> = (0..cols * rows).collect();
    rng.shuffle(&mut slots);

    let mut grays = SHAPE_GRAYS;
    rng.shuffle(&mut grays);

    let mut image = RgbImage::from_pixel(cfg.width, cfg.height, Rgb([BACKGROUND_GRAY; 3]));
    let mut labels = vec![0u32; (cfg.width * cfg.height) as usize];
    let mut ground_truth = Vec::new();
    let mut detections = Vec::new();

    for i in 0..cfg.shapes {
        let slot = slots[i as usize];
        let (sx, sy) = (slot % cols * slot_w, slot / cols * slot_h);
        let margin = 4u32;
        let max_w = slot_w - 2 * margin;
        let max_h = slot_h - 2 * margin;
        let w = rng.uniform_u32(max_w / 2, max_w);
        let h = rng.uniform_u32(max_h / 2, max_h);
        let x = sx + margin + rng.uniform_u32(0, max_w - w);
        let y = sy + margin + rng.uniform_u32(0, max_h - h);
        let gray = grays[i as usize];
        let ellipse = rng.uniform_index(2) == 1;

        let mut mask = Mask::new(cfg.width, cfg.height);
        for py in y..y + h {
            for px in x..x + w {
                let inside = if ellipse {
                    let cx = x as f64 + w as f64 / 2.0;
                    let cy = y as f64 + h as f64 / 2.0;
                    let dx = (px as f64 + 0.5 - cx) / (w as f64 / 2.0);
                    let dy = (py as f64 + 0.5 - cy) / (h as f64 / 2.0);
                    dx * dx + dy * dy <= 1.0
                } else {
                    true
                };
                if inside {
                    mask.set(px, py, true);
                    labels[(py * cfg.width + px) as usize] = i + 1;
                    image.put_pixel(px, py, Rgb([gray; 3]));
                }
            }
        }

        let bbox = mask.tight_bbox().expect("shapes are at least one pixel");
        let class_label = format!("c{}", i + 1);
        ground_truth.push(GroundTruthInstance {
            image_id: image_id.clone(),
            class_label: class_label.clone(),
            mask,
        });
        let score = 0.6 + 0.4 * rng.uniform_f64();
        detections.push(Detection {
            image_id: image_id.clone(),
            class_label,
            score,
            bbox: jitter_box(&mut rng, bbox, cfg.jitter, cfg.width, cfg.height),
        });
    }

    // Background and shapes fold together one at a time at rising strengths.
    let leaf_count = cfg.shapes + 1;
    let merges: Vec<MergeStep> = (0..cfg.shapes)
        .map(|i| {
            let first_child = if i == 0 { 0 } else { leaf_count + i - 1 };
            MergeStep {
                children: vec![first_child, i + 1],
                strength: 0.3 + 0.6 * (i as f64 + 1.0) / cfg.shapes as f64,
            }
        })
        .collect();

    SynthScene {
        image_id,
        image,
        leaves: LabelMap {
            width: cfg.width,
            height: cfg.height,
            labels,
        },
        merges,
        detections,
        ground_truth,
    }
}

/// Jitters each box edge independently by up to `radius` pixels, clamped to
/// the image and to at least one pixel of extent.
fn jitter_box(rng: &mut SeededRng, bbox: PixelBox, radius: u32, width: u32, height: u32) -> PixelBox {
    if radius == 0 {
        return bbox;
    }
    let mut shift = |v: i64| -> i64 {
        v + rng.uniform_u32(0, 2 * radius) as i64 - radius as i64
    };
    let x0 = shift(bbox.x as i64).clamp(0, width as i64 - 1);
    let y0 = shift(bbox.y as i64).clamp(0, height as i64 - 1);
    let x1 = shift(bbox.right() as i64).clamp(x0 + 1, width as i64);
    let y1 = shift(bbox.bottom() as i64).clamp(y0 + 1, height as i64);
    PixelBox::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32)
}

/// File names of an on-disk scene, all relative to its directory.
pub struct ScenePaths {
    pub image: String,
    pub hierarchy: String,
    pub detections: String,
    pub gt_manifest: String,
}

/// Writes the scene in the formats the CLI consumes.
pub fn write_scene(scene: &SynthScene, dir: &Path) -> Result<ScenePaths> {
    let id = &scene.image_id;
    let paths = ScenePaths {
        image: format!("{id}.ppm"),
        hierarchy: format!("{id}_hierarchy.json"),
        detections: format!("{id}_detections.jsonl"),
        gt_manifest: format!("{id}_gt.json"),
    };

    io::netpbm::write_ppm(&dir.join(&paths.image), &scene.image)?;

    let labels_name = format!("{id}_labels.pgm");
    let labels: Vec<u16> = scene.leaves.labels.iter().map(|&l| l as u16).collect();
    io::netpbm::write_pgm16(
        &dir.join(&labels_name),
        scene.leaves.width,
        scene.leaves.height,
        &labels,
    )?;
    let manifest = io::HierarchyManifest {
        leaf_labels: labels_name,
        merges: scene.merges.clone(),
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    io::write_atomic(&dir.join(&paths.hierarchy), &manifest_bytes)?;

    io::write_detections(&dir.join(&paths.detections), &scene.detections)?;

    // Ground truth: instance labels in an 8-bit map (0 = background).
    let gt_name = format!("{id}_gtmap.pgm");
    let gt_samples: Vec<u8> = scene.leaves.labels.iter().map(|&l| l as u8).collect();
    io::netpbm::write_pgm8(
        &dir.join(&gt_name),
        scene.leaves.width,
        scene.leaves.height,
        &gt_samples,
    )?;
    let classes = scene
        .ground_truth
        .iter()
        .enumerate()
        .map(|(i, gt)| ((i + 1).to_string(), gt.class_label.clone()))
        .collect();
    io::write_gt_manifest(
        &dir.join(&paths.gt_manifest),
        &[io::GtManifestEntry {
            image_id: id.clone(),
            label_map: gt_name,
            classes,
        }],
    )?;

    Ok(paths)
}
