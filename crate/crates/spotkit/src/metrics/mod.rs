//! Evaluation protocols: TEDS / S-TEDS for tables, tree-edit-distance
//! accuracy and field-level F1 for KIE, Trans/Pos and IoU-based spotting
//! metrics, and Panoptic Quality for layout grouping.
//!
//! Per-document scoring is pure; aggregation is sum-based and therefore
//! order-independent.

mod geo;
pub mod oracle;
pub mod pq;
pub mod spotting;
pub mod teds;

pub use pq::{panoptic_quality, union_area, union_iou, GroupLevel, PqReport, Rect, RectUnion};
pub use spotting::{
    box_region, field_f1, has_area, spotting_e2e, GtInstance, MatchConfig, PredInstance, PrfScore,
    SpottingReport,
};
pub use teds::{
    entity_tree, html_tree, levenshtein, ted_accuracy, teds, teds_trees, tree_edit_distance,
    TedsError, TreeNode,
};
