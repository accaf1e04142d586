//! Character detection, annotation and scribe attribution for medieval manuscripts.
//!
//! The pipeline crops page scans into columns, binarizes them, bootstraps
//! glyph annotations by template matching, and iterates human review with an
//! external detector. Detector confidences then drive scribe attribution.

pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod matcher;
pub mod model;
pub mod orchestrator;
pub mod preprocess;
pub mod synth;

pub use error::{Error, Result};
