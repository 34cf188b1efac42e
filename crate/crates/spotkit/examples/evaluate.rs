//! The evaluation protocols on worked fixtures: TEDS against the brute-force
//! oracle, field-level F1, tree-edit accuracy, spotting Trans/Pos, and
//! Panoptic Quality.
//!
//! Run with: cargo run --release --example evaluate

use spotkit::metrics::{
    box_region, field_f1, oracle, panoptic_quality, spotting_e2e, ted_accuracy, teds,
    tree_edit_distance, GroupLevel, GtInstance, MatchConfig, PredInstance, Rect, RectUnion,
};
use spotkit::prompting::PromptRng;

fn main() -> anyhow::Result<()> {
    // --- TEDS ---------------------------------------------------------------
    let gt = "<table><tr><td>alpha</td><td colspan=\"2\">beta</td></tr><tr><td>g</td><td>d</td><td>e</td></tr></table>";
    let missing_cell = "<table><tr><td>alpha</td><td colspan=\"2\">beta</td></tr><tr><td>g</td><td>d</td></tr></table>";
    let wrong_text = gt.replace(">beta<", ">betq<");
    println!("TEDS identical:    {:.4}", teds(gt, gt, false)?);
    println!("TEDS missing cell: {:.4}", teds(gt, &missing_cell.to_string(), false)?);
    println!("TEDS wrong text:   {:.4}", teds(gt, &wrong_text, false)?);
    println!("S-TEDS wrong text: {:.4} (content ignored)", teds(gt, &wrong_text, true)?);

    // the library distance agrees with the exhaustive-search oracle
    let mut rng = PromptRng::new(99);
    let mut max_gap = 0.0f64;
    for _ in 0..50 {
        let a = oracle::random_tree(&mut rng, 8);
        let b = oracle::random_tree(&mut rng, 8);
        let sub = |x: &spotkit::metrics::TreeNode, y: &spotkit::metrics::TreeNode| {
            f64::from(x.label != y.label)
        };
        let fast = tree_edit_distance(&a, &b, sub);
        let slow = oracle::oracle_tree_edit_distance(&a, &b, sub);
        max_gap = max_gap.max((fast - slow).abs());
    }
    println!("max |zhang-shasha - oracle| over 50 random pairs: {max_gap:.2e}");

    // --- KIE ----------------------------------------------------------------
    let gt_fields = vec![
        ("company".to_string(), "ACME".to_string()),
        ("date".to_string(), "2024-01-05".to_string()),
        ("total".to_string(), "12.80".to_string()),
    ];
    let mut pred_fields = gt_fields.clone();
    pred_fields[2].1 = "12.30".into(); // one wrong value
    let score = field_f1(&gt_fields, &pred_fields);
    println!(
        "\nfield F1 with one wrong value: p={:.3} r={:.3} f1={:.3}",
        score.precision, score.recall, score.f1
    );
    println!("tree-edit accuracy: {:.4}", ted_accuracy(&gt_fields, &pred_fields));

    // --- spotting -----------------------------------------------------------
    let gts = vec![
        GtInstance { region: box_region(0.0, 0.0, 100.0, 40.0), text: "north".into() },
        GtInstance { region: box_region(200.0, 0.0, 300.0, 40.0), text: "south".into() },
    ];
    let preds = vec![
        PredInstance {
            point: Some(spotkit::geometry::PointF::new(50.0, 20.0)),
            polygon: Some(box_region(2.0, 2.0, 98.0, 38.0)),
            text: "north".into(),
        },
        PredInstance {
            point: Some(spotkit::geometry::PointF::new(50.0, 220.0)), // right text, wrong spot
            polygon: None,
            text: "south".into(),
        },
    ];
    let rep = spotting_e2e(&gts, &preds, &MatchConfig::default());
    println!(
        "\nspotting: Trans F1 {:.3}, Pos F1 {:.3}, detection F1 {:.3}, e2e F1 {:.3}",
        rep.trans.f1, rep.pos.f1, rep.detection.f1, rep.e2e.f1
    );

    // --- panoptic quality ------------------------------------------------------
    let gt_lines = vec![
        RectUnion::new(vec![Rect::new(0.0, 0.0, 100.0, 20.0), Rect::new(110.0, 0.0, 200.0, 20.0)]),
        RectUnion::new(vec![Rect::new(0.0, 40.0, 150.0, 60.0)]),
    ];
    let mut pred_lines = gt_lines.clone();
    pred_lines[1].rects[0].x1 = 120.0; // shrunk line
    let pq = panoptic_quality(&gt_lines, &pred_lines, GroupLevel::Line);
    println!(
        "PQ line-level: pq={:.4} sq={:.4} rq={:.4} (tp {}, fp {}, fn {})",
        pq.pq, pq.sq, pq.rq, pq.tp, pq.fp, pq.fn_
    );
    Ok(())
}
