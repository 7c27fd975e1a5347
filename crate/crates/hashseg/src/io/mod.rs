//! File formats: images, UCM grids, hierarchy manifests, detections,
//! prediction manifests, and ground truth.

pub mod netpbm;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruthInstance;
use crate::geometry::PixelBox;
use crate::hierarchy::{LabelMap, MergeStep, RegionTree, UcmGrid};
use crate::hsh::{Detection, InstanceMask};
use crate::mask::Mask;

/// Loads an 8-bit PNG or binary PPM image.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => netpbm::read_ppm(path),
        _ => {
            let img = image::open(path).map_err(|e| Error::parse(path, e.to_string()))?;
            Ok(img.to_rgb8())
        }
    }
}

/// Loads a UCM from a 16-bit PGM at doubled resolution: a grid of
/// `(2W+1) x (2H+1)` samples where value `v` means strength `v / 65535`.
pub fn load_ucm_pgm(path: &Path) -> Result<UcmGrid> {
    let pgm = netpbm::read_pgm(path)?;
    if pgm.maxval <= 255 {
        return Err(Error::parse(path, "UCM grids must be 16-bit PGM"));
    }
    if pgm.width % 2 != 1 || pgm.height % 2 != 1 || pgm.width < 3 || pgm.height < 3 {
        return Err(Error::MalformedGrid(format!(
            "UCM grid must be (2W+1) x (2H+1), got {} x {}",
            pgm.width, pgm.height
        )));
    }
    let strengths = pgm.samples.iter().map(|&v| v as f64 / 65535.0).collect();
    UcmGrid::new((pgm.width - 1) / 2, (pgm.height - 1) / 2, strengths)
}

pub fn write_ucm_pgm(path: &Path, grid_width: u32, grid_height: u32, strengths: &[f64]) -> Result<()> {
    let samples: Vec<u16> = strengths
        .iter()
        .map(|&s| (s * 65535.0).round() as u16)
        .collect();
    netpbm::write_pgm16(path, grid_width, grid_height, &samples)
}

/// Merge-list hierarchy manifest: a 16-bit PGM label map plus merge steps.
#[derive(Debug, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub leaf_labels: String,
    pub merges: Vec<MergeStep>,
}

pub fn load_hierarchy_manifest(path: &Path) -> Result<RegionTree> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: HierarchyManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    let label_path = sibling(path, &manifest.leaf_labels);
    let pgm = netpbm::read_pgm(&label_path)?;
    let leaves = LabelMap {
        width: pgm.width,
        height: pgm.height,
        labels: pgm.samples.iter().map(|&v| v as u32).collect(),
    };
    RegionTree::from_merges(&leaves, &manifest.merges)
}

/// Loads a hierarchy from either a UCM PGM (`.pgm`) or a merge-list
/// manifest (`.json`).
pub fn load_hierarchy(path: &Path) -> Result<RegionTree> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => RegionTree::from_ucm(&load_ucm_pgm(path)?),
        Some("json") => load_hierarchy_manifest(path),
        _ => Err(Error::parse(
            path,
            "hierarchy must be a .pgm UCM or a .json merge manifest",
        )),
    }
}

/// Detections as JSON Lines: one object per line with `image_id`, `class`,
/// `score`, and `bbox: [x, y, w, h]`.
pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let det: Detection = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        if !(0.0..=1.0).contains(&det.score) {
            return Err(Error::parse(
                path,
                format!("line {}: score {} outside [0, 1]", lineno + 1, det.score),
            ));
        }
        out.push(det);
    }
    Ok(out)
}

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    let mut bytes = Vec::new();
    for det in detections {
        serde_json::to_writer(&mut bytes, det).expect("detections serialize");
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

/// One emitted instance in the prediction manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskManifestEntry {
    pub image_id: String,
    pub class: String,
    pub score: f64,
    pub node_id: u32,
    pub bbox: PixelBox,
    /// Mask PGM path, relative to the manifest file.
    pub mask: String,
}

pub fn write_mask_manifest(path: &Path, entries: &[MaskManifestEntry]) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(entries).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn load_mask_manifest(path: &Path) -> Result<Vec<MaskManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Writes one instance mask as a binary 0/255 PGM.
pub fn write_mask_pgm(path: &Path, mask: &Mask) -> Result<()> {
    let samples: Vec<u8> = (0..mask.height())
        .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
        .map(|(x, y)| if mask.get(x, y) { 255 } else { 0 })
        .collect();
    netpbm::write_pgm8(path, mask.width(), mask.height(), &samples)
}

pub fn read_mask_pgm(path: &Path) -> Result<Mask> {
    let pgm = netpbm::read_pgm(path)?;
    let mut mask = Mask::new(pgm.width, pgm.height);
    for (i, &v) in pgm.samples.iter().enumerate() {
        if v != 0 {
            mask.set(i as u32 % pgm.width, i as u32 / pgm.width, true);
        }
    }
    Ok(mask)
}

/// Loads predictions back from a mask manifest, resolving mask paths
/// relative to the manifest.
pub fn load_predictions(path: &Path) -> Result<Vec<InstanceMask>> {
    let entries = load_mask_manifest(path)?;
    entries
        .into_iter()
        .map(|e| {
            let mask = read_mask_pgm(&sibling(path, &e.mask))?;
            Ok(InstanceMask {
                image_id: e.image_id,
                class_label: e.class,
                score: e.score,
                node_id: e.node_id,
                mask,
                bbox: e.bbox,
            })
        })
        .collect()
}

/// Ground truth for one image: an 8-bit PGM label map (0 = unlabeled) plus
/// label-to-class names.
#[derive(Debug, Serialize, Deserialize)]
pub struct GtManifestEntry {
    pub image_id: String,
    pub label_map: String,
    /// Label value (as a decimal string, JSON keys) to class name.
    pub classes: BTreeMap<String, String>,
}

pub fn write_gt_manifest(path: &Path, entries: &[GtManifestEntry]) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(entries).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthInstance>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<GtManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out = Vec::new();
    for entry in entries {
        let pgm = netpbm::read_pgm(&sibling(path, &entry.label_map))?;
        for (label_text, class) in &entry.classes {
            let label: u16 = label_text
                .parse()
                .map_err(|_| Error::parse(path, format!("bad label {label_text:?}")))?;
            let mut mask = Mask::new(pgm.width, pgm.height);
            for (i, &v) in pgm.samples.iter().enumerate() {
                if v == label {
                    mask.set(i as u32 % pgm.width, i as u32 / pgm.width, true);
                }
            }
            if mask.is_empty() {
                return Err(Error::parse(
                    path,
                    format!("label {label} of {} has no pixels", entry.image_id),
                ));
            }
            out.push(GroundTruthInstance {
                image_id: entry.image_id.clone(),
                class_label: class.clone(),
                mask,
            });
        }
    }
    Ok(out)
}

/// Resolves a manifest-relative path.
pub fn sibling(manifest: &Path, relative: &str) -> PathBuf {
    match manifest.parent() {
        Some(dir) => dir.join(relative),
        None => PathBuf::from(relative),
    }
}

/// Atomic file write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let run = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    run().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detections_jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dets.jsonl");
        let dets = vec![
            Detection {
                image_id: "a".into(),
                class_label: "cat".into(),
                score: 0.75,
                bbox: PixelBox::new(1, 2, 3, 4),
            },
            Detection {
                image_id: "b".into(),
                class_label: "dog".into(),
                score: 1.0,
                bbox: PixelBox::new(0, 0, 10, 10),
            },
        ];
        write_detections(&path, &dets).unwrap();
        assert_eq!(load_detections(&path).unwrap(), dets);
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            r#"{"image_id":"a","class":"c","score":1.5,"bbox":[0,0,1,1]}"#,
        )
        .unwrap();
        assert!(matches!(load_detections(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn ucm_pgm_roundtrip_builds_a_tree() {
        // 2x1 image: 5x3 grid with one vertical boundary at strength ~0.5.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ucm.pgm");
        let mut strengths = vec![0.0; 15];
        strengths[7] = 0.5; // grid (row 1, col 2): between pixels (0,0) and (1,0)
        write_ucm_pgm(&path, 5, 3, &strengths).unwrap();
        let grid = load_ucm_pgm(&path).unwrap();
        let tree = RegionTree::from_ucm(&grid).unwrap();
        assert_eq!(tree.leaf_count(), 2);
        let root = tree.node(tree.root()).unwrap();
        assert!((root.strength - 0.5).abs() < 1e-4); // 16-bit quantization
    }

    #[test]
    fn eight_bit_pgm_is_not_a_ucm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lowdepth.pgm");
        netpbm::write_pgm8(&path, 5, 3, &[0; 15]).unwrap();
        assert!(load_ucm_pgm(&path).is_err());
    }

    #[test]
    fn hierarchy_manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let labels_path = dir.path().join("labels.pgm");
        netpbm::write_pgm16(&labels_path, 4, 1, &[0, 0, 1, 1]).unwrap();
        let manifest = HierarchyManifest {
            leaf_labels: "labels.pgm".into(),
            merges: vec![MergeStep {
                children: vec![0, 1],
                strength: 0.5,
            }],
        };
        let manifest_path = dir.path().join("hierarchy.json");
        std::fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
        let tree = load_hierarchy(&manifest_path).unwrap();
        assert_eq!(tree.len(), 3);
        assert_eq!(tree.node(tree.root()).unwrap().strength, 0.5);
    }

    #[test]
    fn mask_pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pgm");
        let mask = Mask::from_fn(5, 3, |x, y| (x + y) % 2 == 0);
        write_mask_pgm(&path, &mask).unwrap();
        assert_eq!(read_mask_pgm(&path).unwrap(), mask);
        // 0/255 binary payload.
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes[bytes.len() - 15..].iter().all(|&b| b == 0 || b == 255));
    }

    #[test]
    fn ground_truth_loader_builds_class_masks() {
        let dir = tempfile::tempdir().unwrap();
        let gt_map = dir.path().join("img_gt.pgm");
        netpbm::write_pgm8(&gt_map, 4, 2, &[0, 1, 1, 0, 0, 2, 2, 2]).unwrap();
        let manifest_path = dir.path().join("gt.json");
        let entries = vec![GtManifestEntry {
            image_id: "img".into(),
            label_map: "img_gt.pgm".into(),
            classes: BTreeMap::from([
                ("1".into(), "cat".into()),
                ("2".into(), "dog".into()),
            ]),
        }];
        write_gt_manifest(&manifest_path, &entries).unwrap();
        let gts = load_ground_truth(&manifest_path).unwrap();
        assert_eq!(gts.len(), 2);
        assert_eq!(gts[0].class_label, "cat");
        assert_eq!(gts[0].mask.count_ones(), 2);
        assert_eq!(gts[1].mask.count_ones(), 3);
    }
}
