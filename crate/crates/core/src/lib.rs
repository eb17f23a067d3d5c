//! Paragraph-level machine translation evaluation.
//!
//! Builds paragraph datasets from sentence-level human ratings with a
//! sliding window, scores paragraphs with BLEU or external metrics, and
//! meta-evaluates metrics against the human scores.

pub mod cli;
pub mod error;
pub mod ingest;
pub mod metaeval;
pub mod metrics;
pub mod model;
pub mod parabuild;
pub mod sampling;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    EvalItem, ItemKey, ItemScores, ParagraphInstance, RatingRecord, ScoreMode, ScoreTable,
    ScoreType, SimConfig, TauCalibration, UnitKey,
};
