//! End-to-end library flows: UCM ingestion through segmentation and
//! evaluation, plus index persistence inside the pipeline.

use std::collections::BTreeMap;

use hashseg::codes::{extract_region_code, CodeConfig};
use hashseg::eval::{evaluate, GroundTruthInstance};
use hashseg::hsh::{build_hsh, segment_image, Detection, SegmentParams};
use hashseg::io;
use hashseg::lsh::LshIndex;
use hashseg::synth::{generate, SynthConfig};
use hashseg::PixelBox;
use image::{Rgb, RgbImage};
use tempfile::tempdir;

/// Writes a UCM whose boundaries carve a bright rectangle out of a dark
/// background, loads it back, and segments a detection on the rectangle.
#[test]
fn ucm_file_to_instance_mask() {
    let (w, h) = (12u32, 8u32);
    let rect = PixelBox::new(3, 2, 5, 4);
    let (gw, gh) = (2 * w + 1, 2 * h + 1);
    let mut strengths = vec![0.0f64; (gw * gh) as usize];
    let inside = |x: i64, y: i64| {
        x >= rect.x as i64
            && x < rect.right() as i64
            && y >= rect.y as i64
            && y < rect.bottom() as i64
    };
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            // Boundary strength 0.6 wherever region membership changes.
            if x + 1 < w as i64 && inside(x, y) != inside(x + 1, y) {
                strengths[((2 * y + 1) * gw as i64 + 2 * x + 2) as usize] = 0.6;
            }
            if y + 1 < h as i64 && inside(x, y) != inside(x, y + 1) {
                strengths[((2 * y + 2) * gw as i64 + 2 * x + 1) as usize] = 0.6;
            }
        }
    }

    let dir = tempdir().unwrap();
    let ucm_path = dir.path().join("scene.pgm");
    io::write_ucm_pgm(&ucm_path, gw, gh, &strengths).unwrap();
    let tree = io::load_hierarchy(&ucm_path).unwrap();
    assert_eq!(tree.leaf_count(), 2);
    assert_eq!(tree.width(), w);

    let image = RgbImage::from_fn(w, h, |x, y| {
        Rgb(if inside(x as i64, y as i64) {
            [220, 220, 220]
        } else {
            [40, 40, 40]
        })
    });
    let det = Detection {
        image_id: "scene".into(),
        class_label: "box".into(),
        score: 0.9,
        bbox: rect,
    };
    let params = SegmentParams {
        k: 6,
        l: 8,
        seed: 3,
        ..SegmentParams::default()
    };
    let out = segment_image(&image, &tree, &[det], &params).unwrap();
    assert_eq!(out.len(), 1);
    let expected: u64 = rect.area();
    assert_eq!(out[0].mask.count_ones(), expected);
    assert_eq!(out[0].bbox, rect);
}

/// The index persisted mid-pipeline answers queries exactly like the live one.
#[test]
fn persisted_index_matches_live_queries() {
    let scene = generate(&SynthConfig {
        seed: 4,
        shapes: 5,
        ..SynthConfig::default()
    });
    let tree = scene.tree().unwrap();
    let cfg = CodeConfig::default();
    let map = build_hsh(&scene.image, &tree, cfg, 12, 16, 42, 1).unwrap();

    let dir = tempdir().unwrap();
    let path = dir.path().join("index.json");
    map.index().save(&path).unwrap();
    let loaded = LshIndex::load(&path).unwrap();

    for det in &scene.detections {
        let q = hashseg::codes::extract_code(&scene.image, det.bbox, &cfg).unwrap();
        assert_eq!(
            map.index().query_nearest(&q, true).unwrap(),
            loaded.query_nearest(&q, true).unwrap()
        );
    }
}

/// Masked region codes produce a working pipeline too (config variant).
#[test]
fn masked_codes_still_segment_flat_scenes() {
    let scene = generate(&SynthConfig {
        seed: 6,
        shapes: 3,
        ..SynthConfig::default()
    });
    let tree = scene.tree().unwrap();
    let params = SegmentParams {
        code: CodeConfig {
            masked: true,
            ..CodeConfig::default()
        },
        k: 8,
        l: 16,
        seed: 11,
        ..SegmentParams::default()
    };
    let out = segment_image(&scene.image, &tree, &scene.detections, &params).unwrap();
    let report = evaluate(&out, &scene.ground_truth, true).unwrap();
    // Masked region codes zero the background inside shape bboxes while the
    // query keeps it, so matches are near rather than exact; the scene is
    // still easy enough to segment well.
    assert!(report.global_instance > 0.9, "got {}", report.global_instance);
}

/// Region codes double as a direct classifier oracle: each detection's code
/// is closest to its own region's code among all indexed codes.
#[test]
fn exact_boxes_hit_their_regions_at_distance_zero() {
    let scene = generate(&SynthConfig {
        seed: 12,
        shapes: 6,
        ..SynthConfig::default()
    });
    let tree = scene.tree().unwrap();
    let cfg = CodeConfig::default();
    let codes: BTreeMap<u32, _> = tree
        .eligible_nodes(1)
        .into_iter()
        .map(|id| (id, extract_region_code(&scene.image, &tree, id, &cfg).unwrap()))
        .collect();
    for (i, det) in scene.detections.iter().enumerate() {
        let q = hashseg::codes::extract_code(&scene.image, det.bbox, &cfg).unwrap();
        let (id, dist) = hashseg::lsh::brute_force_nn(&codes, &q).unwrap();
        assert_eq!(id, i as u32 + 1, "detection {i} matched node {id}");
        assert_eq!(dist, 0.0);
    }
}

/// Ground truth written by the scene writer loads back into equal masks.
#[test]
fn scene_files_roundtrip_ground_truth() {
    let scene = generate(&SynthConfig {
        seed: 8,
        shapes: 4,
        ..SynthConfig::default()
    });
    let dir = tempdir().unwrap();
    let paths = hashseg::synth::write_scene(&scene, dir.path()).unwrap();
    let gts: Vec<GroundTruthInstance> =
        io::load_ground_truth(&dir.path().join(&paths.gt_manifest)).unwrap();
    assert_eq!(gts.len(), scene.ground_truth.len());
    for (a, b) in gts.iter().zip(&scene.ground_truth) {
        assert_eq!(a.class_label, b.class_label);
        assert_eq!(a.mask, b.mask);
    }
    let tree = io::load_hierarchy(&dir.path().join(&paths.hierarchy)).unwrap();
    let original = scene.tree().unwrap();
    assert_eq!(tree.len(), original.len());
    for level in original.levels() {
        assert_eq!(tree.partition_at(*level), original.partition_at(*level));
    }
}
