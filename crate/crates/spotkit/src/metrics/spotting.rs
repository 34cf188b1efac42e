//! End-to-end spotting metrics (Trans / Pos / detection / e2e F) and the
//! field-level F1 used by key information extraction.

use serde::{Deserialize, Serialize};

use super::geo::{point_in_polygon, polygon_area, polygon_iou};
use crate::geometry::PointF;

/// Matching configuration for the spotting protocol.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MatchConfig {
    /// IoU threshold for detection/e2e matches (strict greater-than).
    pub iou_threshold: f64,
    /// Compare transcriptions case-insensitively.
    pub case_insensitive: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            case_insensitive: false,
        }
    }
}

/// One ground-truth text region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    /// Region polygon (axis-aligned boxes serialize as their 4 corners).
    pub region: Vec<PointF>,
    pub text: String,
}

/// One predicted instance: a point, a polygon, or both, plus transcription.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredInstance {
    pub point: Option<PointF>,
    pub polygon: Option<Vec<PointF>>,
    pub text: String,
}

impl PredInstance {
    fn anchor(&self) -> Option<PointF> {
        self.point.or_else(|| {
            self.polygon.as_ref().map(|poly| {
                let n = poly.len().max(1) as f64;
                let (sx, sy) = poly.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
                PointF::new(sx / n, sy / n)
            })
        })
    }
}

/// Precision/recall/F1 triple with raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl PrfScore {
    fn from_counts(tp: usize, pred_count: usize, gt_count: usize) -> Self {
        let precision = if pred_count == 0 {
            1.0
        } else {
            tp as f64 / pred_count as f64
        };
        let recall = if gt_count == 0 { 1.0 } else { tp as f64 / gt_count as f64 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp: pred_count - tp,
            fn_: gt_count - tp,
        }
    }
}

/// Spotting evaluation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpottingReport {
    /// Transcription-only multiset matching.
    pub trans: PrfScore,
    /// Point-in-region plus transcription matching.
    pub pos: PrfScore,
    /// IoU-based detection matching (polygon predictions only).
    pub detection: PrfScore,
    /// IoU plus transcription matching.
    pub e2e: PrfScore,
}

fn greedy_match(
    n_pred: usize,
    n_gt: usize,
    matches: impl Fn(usize, usize) -> bool,
) -> usize {
    let mut used = vec![false; n_gt];
    let mut tp = 0;
    for p in 0..n_pred {
        for (g, used_g) in used.iter_mut().enumerate() {
            if !*used_g && matches(p, g) {
                *used_g = true;
                tp += 1;
                break;
            }
        }
    }
    tp
}

/// Evaluate one document's predictions against ground truth.
///
/// `Trans` matches transcriptions as a multiset, ignoring position. `Pos`
/// additionally requires the prediction's point (or its polygon centroid) to
/// lie inside the ground-truth region. Detection and e2e use polygon IoU
/// strictly above `cfg.iou_threshold`. Assignment is one-to-one and greedy
/// in listed order.
pub fn spotting_e2e(gt: &[GtInstance], pred: &[PredInstance], cfg: &MatchConfig) -> SpottingReport {
    let norm = |s: &str| {
        if cfg.case_insensitive {
            s.to_lowercase()
        } else {
            s.to_string()
        }
    };
    let gt_texts: Vec<String> = gt.iter().map(|g| norm(&g.text)).collect();
    let pred_texts: Vec<String> = pred.iter().map(|p| norm(&p.text)).collect();
    let anchors: Vec<Option<PointF>> = pred.iter().map(PredInstance::anchor).collect();
    let ious: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| {
            gt.iter()
                .map(|g| match &p.polygon {
                    Some(poly) => polygon_iou(poly, &g.region),
                    None => 0.0,
                })
                .collect()
        })
        .collect();

    let trans_tp = greedy_match(pred.len(), gt.len(), |p, g| pred_texts[p] == gt_texts[g]);
    let pos_tp = greedy_match(pred.len(), gt.len(), |p, g| {
        pred_texts[p] == gt_texts[g]
            && anchors[p].is_some_and(|a| point_in_polygon(a, &gt[g].region))
    });
    let det_tp = greedy_match(pred.len(), gt.len(), |p, g| ious[p][g] > cfg.iou_threshold);
    let e2e_tp = greedy_match(pred.len(), gt.len(), |p, g| {
        ious[p][g] > cfg.iou_threshold && pred_texts[p] == gt_texts[g]
    });

    SpottingReport {
        trans: PrfScore::from_counts(trans_tp, pred.len(), gt.len()),
        pos: PrfScore::from_counts(pos_tp, pred.len(), gt.len()),
        detection: PrfScore::from_counts(det_tp, pred.len(), gt.len()),
        e2e: PrfScore::from_counts(e2e_tp, pred.len(), gt.len()),
    }
}

/// Field-level F1: a predicted `(entity, value)` field is a true positive
/// iff it exactly matches a ground-truth field, each ground-truth field
/// consumed at most once (multiset matching).
pub fn field_f1(gt: &[(String, String)], pred: &[(String, String)]) -> PrfScore {
    let tp = greedy_match(pred.len(), gt.len(), |p, g| pred[p] == gt[g]);
    PrfScore::from_counts(tp, pred.len(), gt.len())
}

/// Convenience constructor for axis-aligned box regions.
pub fn box_region(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<PointF> {
    vec![
        PointF::new(x0, y0),
        PointF::new(x1, y0),
        PointF::new(x1, y1),
        PointF::new(x0, y1),
    ]
}

/// Check a region has positive area (degenerate regions break IoU-based
/// matching and are excluded by callers with a diagnostic).
pub fn has_area(region: &[PointF]) -> bool {
    polygon_area(region) > 0.0
}
