//! Structured-points toolkit for unified visual text parsing.
//!
//! Text parsing tasks (spotting, key information extraction, table
//! recognition, layout analysis) share one representation: a stage-1
//! *structured points sequence* of quantized text-center tokens interleaved
//! with task structural tokens, followed by per-point stage-2 *polygon &
//! content* sequences. This crate provides the sequence codecs, the window
//! prompt samplers, ground-truth builders, synthetic corpora, evaluation
//! metrics, and a desk-scale token-router decoder that runs the full
//! two-stage pipeline end to end.
//!
//! Start from the runnable examples:
//!
//! ```bash
//! cargo run --release --example encode_decode
//! cargo run --release --example table_gt
//! cargo run --release --example prompt_sampling
//! cargo run --release --example gen_corpus
//! cargo run --release --example train_spot
//! cargo run --release --example evaluate
//! cargo run --release --example sft_records
//! ```
//!
//! or from the `spotkit` binary, whose subcommands expose the same pipeline
//! for scripting (`spotkit gen-corpus`, `spotkit train`, `spotkit infer`,
//! `spotkit eval`, ...).

pub mod codec;
pub mod corpus;
pub mod geometry;
mod html;
pub mod metrics;
pub mod model;
pub mod prompting;
pub mod report;
pub mod sft;
pub mod table;
pub mod vocab;

pub use codec::{InstanceRecord, PolyContentSequence, StructuredPointsSequence, Task};
pub use geometry::{ImageExtent, PointF, PolyKind, PolygonGeom, QuantizedPoint};
pub use vocab::{Special, Token, TokenCategory, TokenId, TokenVocabulary};
