//! Panoptic Quality over word/line/paragraph groupings.
//!
//! Groups are unions of axis-aligned rectangles; IoU between unions is
//! computed exactly by coordinate compression. Pairs with IoU > 0.5 are
//! matched (such matches are unique by construction), and
//! `PQ = sum(IoU over TP) / (|TP| + |FP|/2 + |FN|/2)`.

use serde::{Deserialize, Serialize};

/// Grouping granularity being scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupLevel {
    Word,
    Line,
    Paragraph,
}

/// Axis-aligned rectangle `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }
}

/// A group region represented as a union of rectangles.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RectUnion {
    pub rects: Vec<Rect>,
}

impl RectUnion {
    pub fn new(rects: Vec<Rect>) -> Self {
        Self { rects }
    }

    fn covers(&self, x: f64, y: f64) -> bool {
        self.rects.iter().any(|r| r.contains(x, y))
    }
}

/// Exact area of union intersection and union-of-unions via coordinate
/// compression over both groups' rectangle edges.
pub fn union_iou(a: &RectUnion, b: &RectUnion) -> f64 {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for r in a.rects.iter().chain(&b.rects) {
        xs.extend([r.x0, r.x1]);
        ys.extend([r.y0, r.y1]);
    }
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut inter = 0.0;
    let mut union = 0.0;
    for xi in xs.windows(2) {
        let w = xi[1] - xi[0];
        if w <= 0.0 {
            continue;
        }
        let cx = (xi[0] + xi[1]) / 2.0;
        for yi in ys.windows(2) {
            let h = yi[1] - yi[0];
            if h <= 0.0 {
                continue;
            }
            let cy = (yi[0] + yi[1]) / 2.0;
            let in_a = a.covers(cx, cy);
            let in_b = b.covers(cx, cy);
            if in_a && in_b {
                inter += w * h;
            }
            if in_a || in_b {
                union += w * h;
            }
        }
    }
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Exact area of one rectangle union.
pub fn union_area(u: &RectUnion) -> f64 {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for r in &u.rects {
        xs.extend([r.x0, r.x1]);
        ys.extend([r.y0, r.y1]);
    }
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut area = 0.0;
    for xi in xs.windows(2) {
        let w = xi[1] - xi[0];
        for yi in ys.windows(2) {
            let h = yi[1] - yi[0];
            if w > 0.0 && h > 0.0 && u.covers((xi[0] + xi[1]) / 2.0, (yi[0] + yi[1]) / 2.0) {
                area += w * h;
            }
        }
    }
    area
}

/// Panoptic Quality report with its SQ/RQ decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqReport {
    pub level: GroupLevel,
    pub pq: f64,
    /// Segmentation quality: mean IoU over matched pairs.
    pub sq: f64,
    /// Recognition quality: F1-style match rate.
    pub rq: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Zero-area groups dropped before matching (ground truth, prediction).
    pub excluded_zero_area: (usize, usize),
}

/// Compute PQ at one grouping level. Matches are pairs with IoU strictly
/// above 0.5, which are one-to-one by construction. Zero-area groups are
/// excluded and counted in the report.
pub fn panoptic_quality(gt: &[RectUnion], pred: &[RectUnion], level: GroupLevel) -> PqReport {
    let gt_kept: Vec<&RectUnion> = gt.iter().filter(|u| union_area(u) > 0.0).collect();
    let pred_kept: Vec<&RectUnion> = pred.iter().filter(|u| union_area(u) > 0.0).collect();
    let excluded = (gt.len() - gt_kept.len(), pred.len() - pred_kept.len());

    let mut gt_used = vec![false; gt_kept.len()];
    let mut tp = 0usize;
    let mut iou_sum = 0.0;
    for p in &pred_kept {
        for (g, used) in gt_kept.iter().zip(gt_used.iter_mut()) {
            if *used {
                continue;
            }
            let iou = union_iou(p, g);
            if iou > 0.5 {
                *used = true;
                tp += 1;
                iou_sum += iou;
                break;
            }
        }
    }
    let fp = pred_kept.len() - tp;
    let fn_ = gt_kept.len() - tp;
    let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
    let pq = if denom > 0.0 { iou_sum / denom } else { 1.0 };
    let sq = if tp > 0 { iou_sum / tp as f64 } else { 0.0 };
    let rq = if denom > 0.0 { tp as f64 / denom } else { 1.0 };
    PqReport {
        level,
        pq,
        sq,
        rq,
        tp,
        fp,
        fn_,
        excluded_zero_area: excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
        Rect::new(x0, y0, x1, y1)
    }

    fn g(rects: &[Rect]) -> RectUnion {
        RectUnion::new(rects.to_vec())
    }

    #[test]
    fn identical_groupings_score_one() {
        let groups = vec![
            g(&[r(0.0, 0.0, 10.0, 10.0), r(12.0, 0.0, 20.0, 10.0)]),
            g(&[r(0.0, 20.0, 10.0, 30.0)]),
        ];
        let report = panoptic_quality(&groups, &groups, GroupLevel::Line);
        assert_eq!(report.pq, 1.0);
        assert_eq!(report.sq, 1.0);
        assert_eq!(report.rq, 1.0);
    }

    #[test]
    fn permutation_invariance() {
        let gt = vec![
            g(&[r(0.0, 0.0, 10.0, 10.0)]),
            g(&[r(20.0, 0.0, 30.0, 10.0)]),
            g(&[r(40.0, 0.0, 50.0, 10.0)]),
        ];
        let pred_fwd = gt.clone();
        let mut pred_rev = gt.clone();
        pred_rev.reverse();
        let a = panoptic_quality(&gt, &pred_fwd, GroupLevel::Word);
        let b = panoptic_quality(&gt, &pred_rev, GroupLevel::Word);
        assert_eq!(a.pq, b.pq);
    }

    #[test]
    fn split_group_counts_as_miss() {
        // one GT line split into two predictions, each covering half:
        // IoU of each half against the full line is 0.5, not above 0.5
        let gt = vec![g(&[r(0.0, 0.0, 20.0, 10.0)])];
        let pred = vec![g(&[r(0.0, 0.0, 10.0, 10.0)]), g(&[r(10.0, 0.0, 20.0, 10.0)])];
        let report = panoptic_quality(&gt, &pred, GroupLevel::Line);
        assert_eq!(report.tp, 0);
        assert_eq!(report.fp, 2);
        assert_eq!(report.fn_, 1);
        assert_eq!(report.pq, 0.0);
    }

    #[test]
    fn pq_decomposes_into_sq_times_rq() {
        let gt = vec![
            g(&[r(0.0, 0.0, 10.0, 10.0)]),
            g(&[r(20.0, 0.0, 30.0, 10.0)]),
        ];
        let pred = vec![
            g(&[r(0.0, 0.0, 10.0, 8.0)]), // IoU 0.8
            g(&[r(100.0, 0.0, 110.0, 10.0)]),
        ];
        let report = panoptic_quality(&gt, &pred, GroupLevel::Paragraph);
        assert!(report.pq <= 1.0);
        assert!((report.pq - report.sq * report.rq).abs() < 1e-12);
    }

    #[test]
    fn zero_area_groups_are_excluded() {
        let gt = vec![g(&[r(0.0, 0.0, 10.0, 10.0)]), g(&[r(5.0, 5.0, 5.0, 9.0)])];
        let pred = vec![g(&[r(0.0, 0.0, 10.0, 10.0)])];
        let report = panoptic_quality(&gt, &pred, GroupLevel::Word);
        assert_eq!(report.excluded_zero_area, (1, 0));
        assert_eq!(report.pq, 1.0);
    }

    #[test]
    fn union_iou_of_overlapping_unions() {
        let a = g(&[r(0.0, 0.0, 10.0, 10.0), r(10.0, 0.0, 20.0, 10.0)]);
        let b = g(&[r(10.0, 0.0, 30.0, 10.0)]);
        // a covers [0,20)x[0,10), b covers [10,30)x[0,10): inter 100, union 300
        assert!((union_iou(&a, &b) - 100.0 / 300.0).abs() < 1e-12);
    }

    #[test]
    fn union_iou_overlapping_rects_within_one_group() {
        let a = g(&[r(0.0, 0.0, 10.0, 10.0), r(5.0, 0.0, 15.0, 10.0)]);
        let b = g(&[r(0.0, 0.0, 15.0, 10.0)]);
        assert!((union_iou(&a, &b) - 1.0).abs() < 1e-12);
    }
}
