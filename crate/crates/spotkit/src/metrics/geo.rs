//! Polygon containment and overlap arithmetic used by the spotting and
//! panoptic-quality metrics. Intersection areas are exact for convex
//! polygons (all synthetic regions are axis-aligned boxes or convex
//! resamplings of them).

use crate::geometry::PointF;

/// Unsigned polygon area via the shoelace formula.
pub fn polygon_area(pts: &[PointF]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    acc.abs() / 2.0
}

fn on_segment(p: PointF, a: PointF, b: PointF) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if cross.abs() > 1e-9 {
        return false;
    }
    p.x >= a.x.min(b.x) - 1e-9
        && p.x <= a.x.max(b.x) + 1e-9
        && p.y >= a.y.min(b.y) - 1e-9
        && p.y <= a.y.max(b.y) + 1e-9
}

/// Even-odd point-in-polygon test, inclusive of the boundary.
pub fn point_in_polygon(p: PointF, poly: &[PointF]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    for i in 0..poly.len() {
        if on_segment(p, poly[i], poly[(i + 1) % poly.len()]) {
            return true;
        }
    }
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Clip `subject` against one half-plane of the convex `edge` (a -> b keeps
/// the left side for counter-clockwise clips; orientation handled by caller).
fn clip_halfplane(subject: &[PointF], a: PointF, b: PointF, keep_sign: f64) -> Vec<PointF> {
    let side = |p: PointF| ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) * keep_sign;
    let mut out = Vec::with_capacity(subject.len() + 1);
    for i in 0..subject.len() {
        let cur = subject[i];
        let next = subject[(i + 1) % subject.len()];
        let (sc, sn) = (side(cur), side(next));
        if sc >= -1e-12 {
            out.push(cur);
        }
        if (sc > 1e-12 && sn < -1e-12) || (sc < -1e-12 && sn > 1e-12) {
            let t = sc / (sc - sn);
            out.push(PointF::new(
                cur.x + (next.x - cur.x) * t,
                cur.y + (next.y - cur.y) * t,
            ));
        }
    }
    out
}

fn signed_area2(pts: &[PointF]) -> f64 {
    let mut acc = 0.0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    acc
}

/// Intersection area of two convex polygons (Sutherland-Hodgman clip).
pub fn convex_intersection_area(subject: &[PointF], clip: &[PointF]) -> f64 {
    if subject.len() < 3 || clip.len() < 3 {
        return 0.0;
    }
    // orient the clip polygon so the interior is on a consistent side
    let keep_sign = if signed_area2(clip) >= 0.0 { 1.0 } else { -1.0 };
    let mut poly = subject.to_vec();
    for i in 0..clip.len() {
        if poly.len() < 3 {
            return 0.0;
        }
        poly = clip_halfplane(&poly, clip[i], clip[(i + 1) % clip.len()], keep_sign);
    }
    polygon_area(&poly)
}

/// IoU of two convex polygons.
pub fn polygon_iou(a: &[PointF], b: &[PointF]) -> f64 {
    let inter = convex_intersection_area(a, b);
    let union = polygon_area(a) + polygon_area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxp(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<PointF> {
        vec![
            PointF::new(x0, y0),
            PointF::new(x1, y0),
            PointF::new(x1, y1),
            PointF::new(x0, y1),
        ]
    }

    #[test]
    fn area_of_box() {
        assert_eq!(polygon_area(&boxp(0.0, 0.0, 4.0, 3.0)), 12.0);
    }

    #[test]
    fn containment_inclusive_of_boundary() {
        let b = boxp(0.0, 0.0, 10.0, 10.0);
        assert!(point_in_polygon(PointF::new(5.0, 5.0), &b));
        assert!(point_in_polygon(PointF::new(0.0, 0.0), &b));
        assert!(point_in_polygon(PointF::new(10.0, 5.0), &b));
        assert!(!point_in_polygon(PointF::new(10.01, 5.0), &b));
    }

    #[test]
    fn iou_of_overlapping_boxes() {
        let a = boxp(0.0, 0.0, 10.0, 10.0);
        let b = boxp(5.0, 0.0, 15.0, 10.0);
        let iou = polygon_iou(&a, &b);
        assert!((iou - 50.0 / 150.0).abs() < 1e-12);
        assert!((polygon_iou(&a, &a) - 1.0).abs() < 1e-12);
        let c = boxp(20.0, 20.0, 30.0, 30.0);
        assert_eq!(polygon_iou(&a, &c), 0.0);
    }

    #[test]
    fn iou_handles_either_winding() {
        let a = boxp(0.0, 0.0, 10.0, 10.0);
        let mut b = boxp(5.0, 0.0, 15.0, 10.0);
        b.reverse();
        assert!((polygon_iou(&a, &b) - 50.0 / 150.0).abs() < 1e-12);
    }
}
