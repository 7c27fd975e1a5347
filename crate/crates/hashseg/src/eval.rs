//! Jaccard and recall metrics.
//!
//! Every ground-truth instance is scored by the best mask IoU any prediction
//! achieves on it (restricted to the instance's class when class-aware).
//! The instance-level global is the mean over all ground-truth instances
//! (instance-count weighted); the class-level global is the unweighted mean
//! of the per-class means. Recall at 0.5 is the fraction of instances whose
//! best overlap reaches 0.5.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsh::InstanceMask;
use crate::mask::Mask;

#[derive(Debug, Clone)]
pub struct GroundTruthInstance {
    pub image_id: String,
    pub class_label: String,
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per-class mean best overlap, aggregated instance-weighted globally.
    pub per_class_instance: BTreeMap<String, f64>,
    /// Per-class Jaccard, aggregated as the unweighted class mean globally.
    pub per_class_class: BTreeMap<String, f64>,
    pub global_instance: f64,
    pub global_class: f64,
    pub recall_at_half: f64,
}

/// Pixel IoU of two same-sized masks.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    Mask::check_dims(a, b)?;
    let union = a.union_count(b);
    if union == 0 {
        return Ok(0.0);
    }
    Ok(a.intersection_count(b) as f64 / union as f64)
}

/// Best overlap any prediction achieves on a ground-truth instance; 0 when
/// no prediction is eligible.
pub fn best_overlap(gt: &GroundTruthInstance, preds: &[InstanceMask], class_aware: bool) -> f64 {
    preds
        .iter()
        .filter(|p| p.image_id == gt.image_id)
        .filter(|p| !class_aware || p.class_label == gt.class_label)
        .map(|p| {
            mask_iou(&gt.mask, &p.mask)
                .expect("predictions must share the ground truth raster size")
        })
        .fold(0.0, f64::max)
}

/// Best overlaps for every ground-truth instance, in ground-truth order.
pub fn best_overlaps(
    preds: &[InstanceMask],
    gts: &[GroundTruthInstance],
    class_aware: bool,
) -> Vec<f64> {
    gts.iter()
        .map(|gt| best_overlap(gt, preds, class_aware))
        .collect()
}

/// Fraction of overlaps at or above a threshold.
pub fn recall_at(overlaps: &[f64], threshold: f64) -> f64 {
    if overlaps.is_empty() {
        return 0.0;
    }
    overlaps.iter().filter(|&&v| v >= threshold).count() as f64 / overlaps.len() as f64
}

pub fn evaluate(
    preds: &[InstanceMask],
    gts: &[GroundTruthInstance],
    class_aware: bool,
) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let overlaps = best_overlaps(preds, gts, class_aware);

    let mut by_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (gt, &v) in gts.iter().zip(&overlaps) {
        by_class.entry(gt.class_label.clone()).or_default().push(v);
    }
    let per_class: BTreeMap<String, f64> = by_class
        .into_iter()
        .map(|(class, vs)| {
            let mean = vs.iter().sum::<f64>() / vs.len() as f64;
            (class, mean)
        })
        .collect();

    let global_instance = overlaps.iter().sum::<f64>() / overlaps.len() as f64;
    let global_class = per_class.values().sum::<f64>() / per_class.len() as f64;

    Ok(EvalReport {
        per_class_instance: per_class.clone(),
        per_class_class: per_class,
        global_instance,
        global_class,
        recall_at_half: recall_at(&overlaps, 0.5),
    })
}

/// Percent at one decimal, rounding half away from zero at the hundredths
/// digit first so values that are exact two-decimal percents (e.g. 43.05)
/// do not flip on the last binary digit.
fn percent_1dp(v: f64) -> f64 {
    let hundredths = (v * 10_000.0).round();
    (hundredths / 10.0).round() / 10.0
}

/// Aligned text table in the published layout: one column per class plus a
/// Global column, instance and class rows, values in percent.
pub fn format_table(report: &EvalReport) -> String {
    let mut columns: Vec<String> = report.per_class_class.keys().cloned().collect();
    columns.push("Global".into());
    let rows = [
        ("Instance Level", &report.per_class_instance, report.global_instance),
        ("Class Level", &report.per_class_class, report.global_class),
    ];

    let label_width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let widths: Vec<usize> = columns.iter().map(|c| c.len().max(5)).collect();

    let mut out = String::new();
    out.push_str(&format!("{:label_width$}", ""));
    for (c, w) in columns.iter().zip(&widths) {
        out.push_str(&format!("  {c:>w$}"));
    }
    out.push('\n');
    for (label, per_class, global) in rows {
        out.push_str(&format!("{label:label_width$}"));
        for (c, w) in columns.iter().zip(&widths) {
            let v = if c == "Global" {
                global
            } else {
                per_class[c.as_str()]
            };
            out.push_str(&format!("  {:>w$.1}", percent_1dp(v)));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "Recall at overlap 0.5: {:.2}\n",
        100.0 * report.recall_at_half
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelBox;

    fn mask_of(w: u32, h: u32, pixels: u64) -> Mask {
        Mask::from_fn(w, h, |x, y| (y as u64 * w as u64 + x as u64) < pixels)
    }

    fn gt(image: &str, class: &str, mask: Mask) -> GroundTruthInstance {
        GroundTruthInstance {
            image_id: image.into(),
            class_label: class.into(),
            mask,
        }
    }

    fn pred(image: &str, class: &str, mask: Mask) -> InstanceMask {
        let bbox = mask.tight_bbox().unwrap_or(PixelBox::new(0, 0, 1, 1));
        InstanceMask {
            image_id: image.into(),
            class_label: class.into(),
            score: 1.0,
            node_id: 0,
            mask,
            bbox,
        }
    }

    #[test]
    fn mask_iou_cases() {
        let a = mask_of(4, 2, 4);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        let b = Mask::from_fn(4, 2, |_, y| y == 1);
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
        let half = mask_of(4, 2, 2);
        assert_eq!(mask_iou(&a, &half).unwrap(), 0.5);
        assert!(matches!(
            mask_iou(&a, &Mask::new(3, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn best_overlap_cases() {
        let g = gt("im", "cat", mask_of(4, 2, 4));
        assert_eq!(best_overlap(&g, &[], true), 0.0);
        let exact = pred("im", "cat", mask_of(4, 2, 4));
        assert_eq!(best_overlap(&g, std::slice::from_ref(&exact), true), 1.0);
        let worse = pred("im", "cat", mask_of(4, 2, 6));
        let better = pred("im", "cat", mask_of(4, 2, 3));
        // IoUs: 4/6 vs 3/4; max wins.
        assert!((best_overlap(&g, &[worse, better], true) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn class_awareness_gates_matches() {
        let g = gt("im", "cat", mask_of(4, 2, 4));
        let wrong_class = pred("im", "dog", mask_of(4, 2, 4));
        assert_eq!(best_overlap(&g, std::slice::from_ref(&wrong_class), true), 0.0);
        assert_eq!(best_overlap(&g, &[wrong_class], false), 1.0);
        let other_image = pred("im2", "cat", mask_of(4, 2, 4));
        assert_eq!(best_overlap(&g, &[other_image], true), 0.0);
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let gts = vec![
            gt("a", "cat", mask_of(4, 2, 4)),
            gt("a", "dog", Mask::from_fn(4, 2, |_, y| y == 1)),
        ];
        let preds: Vec<InstanceMask> = gts
            .iter()
            .map(|g| pred(&g.image_id, &g.class_label, g.mask.clone()))
            .collect();
        let r = evaluate(&preds, &gts, true).unwrap();
        assert_eq!(r.global_instance, 1.0);
        assert_eq!(r.global_class, 1.0);
        assert_eq!(r.recall_at_half, 1.0);
        assert!(r.per_class_class.values().all(|&v| v == 1.0));
    }

    #[test]
    fn weighted_vs_unweighted_globals() {
        // One class with a single 1.0 overlap, one with three 0.5 overlaps.
        let full = mask_of(4, 2, 8);
        let half = mask_of(4, 2, 4);
        let gts = vec![
            gt("a", "one", full.clone()),
            gt("b", "many", full.clone()),
            gt("c", "many", full.clone()),
            gt("d", "many", full.clone()),
        ];
        let preds = vec![
            pred("a", "one", full.clone()),
            pred("b", "many", half.clone()),
            pred("c", "many", half.clone()),
            pred("d", "many", half),
        ];
        let r = evaluate(&preds, &gts, true).unwrap();
        assert!((r.global_class - 0.75).abs() < 1e-12);
        assert!((r.global_instance - 0.625).abs() < 1e-12);
        assert_eq!(r.per_class_instance, r.per_class_class);
    }

    /// Published class-level per-class values, in percent.
    pub(crate) const CLASS_ROW: [(&str, f64); 20] = [
        ("aeroplane", 33.3),
        ("bicycle", 18.5),
        ("bird", 48.1),
        ("boat", 37.5),
        ("bottle", 40.7),
        ("bus", 45.1),
        ("car", 39.4),
        ("cat", 59.9),
        ("chair", 23.3),
        ("cow", 51.0),
        ("table", 43.3),
        ("dog", 60.4),
        ("horse", 39.8),
        ("mbike", 43.1),
        ("person", 34.6),
        ("plant", 37.2),
        ("sheep", 51.0),
        ("sofa", 47.0),
        ("train", 53.6),
        ("tv", 54.2),
    ];

    /// One GT instance of 1000 pixels per class, with a prediction covering
    /// exactly `10 * v` of them, makes the per-class mean best overlap land
    /// on each published value exactly.
    pub(crate) fn class_row_fixture() -> (Vec<InstanceMask>, Vec<GroundTruthInstance>) {
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for (class, percent) in CLASS_ROW {
            let image = format!("im-{class}");
            let covered = (percent * 10.0).round() as u64;
            gts.push(gt(&image, class, mask_of(50, 20, 1000)));
            preds.push(pred(&image, class, mask_of(50, 20, covered)));
        }
        (preds, gts)
    }

    #[test]
    fn published_class_row_aggregates_to_global() {
        let (preds, gts) = class_row_fixture();
        let r = evaluate(&preds, &gts, true).unwrap();
        for (class, percent) in CLASS_ROW {
            assert!(
                (r.per_class_class[class] - percent / 100.0).abs() < 1e-9,
                "class {class}"
            );
        }
        assert!((r.global_class - 0.4305).abs() < 5e-5);
    }

    #[test]
    fn adding_a_prediction_never_lowers_best_overlap() {
        let g = gt("im", "cat", mask_of(4, 2, 4));
        let mut preds = vec![pred("im", "cat", mask_of(4, 2, 2))];
        let before = best_overlap(&g, &preds, true);
        preds.push(pred("im", "cat", mask_of(4, 2, 7)));
        assert!(best_overlap(&g, &preds, true) >= before);
    }

    #[test]
    fn recall_is_monotone_in_threshold() {
        let overlaps = [0.2, 0.35, 0.5, 0.62, 0.9];
        let r3 = recall_at(&overlaps, 0.3);
        let r5 = recall_at(&overlaps, 0.5);
        let r7 = recall_at(&overlaps, 0.7);
        assert!(r3 >= r5 && r5 >= r7);
        assert_eq!(r5, 0.6);
    }

    #[test]
    fn evaluation_is_order_invariant() {
        let (mut preds, mut gts) = class_row_fixture();
        let a = evaluate(&preds, &gts, true).unwrap();
        preds.reverse();
        gts.reverse();
        let b = evaluate(&preds, &gts, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_ground_truth_is_an_error() {
        assert!(matches!(evaluate(&[], &[], true), Err(Error::NoGroundTruth)));
    }

    #[test]
    fn table_layout_includes_global_column() {
        let (preds, gts) = class_row_fixture();
        let r = evaluate(&preds, &gts, true).unwrap();
        let table = format_table(&r);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].trim_end().ends_with("Global"));
        assert!(lines[2].starts_with("Class Level"));
        // 43.05 rounds to 43.1 at one decimal.
        assert!(lines[2].trim_end().ends_with("43.1"));
        assert!(lines[3].starts_with("Recall at overlap 0.5:"));
    }
}
