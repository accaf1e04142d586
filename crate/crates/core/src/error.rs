use std::path::PathBuf;

use crate::model::{AnnotationId, BBox, ColumnId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variants map one-to-one onto the stable string codes returned by
/// [`Error::code`], which the HTTP API and the C bindings expose.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("box {bbox} does not fit a {width}x{height} raster")]
    BoxOutOfBounds { bbox: BBox, width: u32, height: u32 },
    #[error("degenerate box: width and height must be positive")]
    DegenerateBox,
    #[error("an accepted annotation with the same box and class already exists on {0}")]
    DuplicateAccepted(ColumnId),
    #[error("unknown annotation id {0}")]
    UnknownId(AnnotationId),
    #[error("annotation {0} was already decided differently")]
    AlreadyDecided(AnnotationId),
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("column {0} is registered twice with different geometry")]
    ColumnConflict(ColumnId),
    #[error("region of interest {bbox} exceeds the {width}x{height} page")]
    RoiOutOfBounds { bbox: BBox, width: u32, height: u32 },
    #[error("page layout {page} does not match config layout {config}")]
    LayoutMismatch { page: String, config: String },
    #[error("invalid ROI config: {0}")]
    InvalidRoiConfig(String),
    #[error("empty image")]
    EmptyImage,
    #[error("template {tw}x{th} is larger than the {iw}x{ih} image")]
    TemplateTooLarge { tw: u32, th: u32, iw: u32, ih: u32 },
    #[error("template has constant pixel content")]
    ConstantTemplate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("annotation {0} is not accepted or adjusted")]
    UndecidedAnnotation(AnnotationId),
    #[error("malformed label line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("column {0} is assigned to more than one dataset role")]
    Overlap(ColumnId),
    #[error("malformed detection record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("failed to load model from {path}: {reason}")]
    ModelLoad { path: PathBuf, reason: String },
    #[error("inference failed: {0}")]
    Inference(String),
    #[error("column {0} has no scribe label")]
    UnlabeledColumn(ColumnId),
    #[error("cycle {0} has not been merged")]
    PreviousCycleOpen(u32),
    #[error("cycle {cycle} cannot do this in phase {phase}")]
    InvalidPhase { cycle: u32, phase: String },
    #[error("column {0} is not in the inference set of the open cycle")]
    ColumnNotInInferenceSet(ColumnId),
    #[error("{0} reviews are still pending")]
    PendingReviewsRemain(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("corrupt store log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidId(_) => "invalid_id",
            Error::BoxOutOfBounds { .. } | Error::DegenerateBox => "box_out_of_bounds",
            Error::DuplicateAccepted(_) => "duplicate_accepted",
            Error::UnknownId(_) => "unknown_id",
            Error::AlreadyDecided(_) => "already_decided",
            Error::InvalidAnnotation(_) => "invalid_annotation",
            Error::UnknownColumn(_) => "unknown_column",
            Error::ColumnConflict(_) => "column_conflict",
            Error::RoiOutOfBounds { .. } => "roi_out_of_bounds",
            Error::LayoutMismatch { .. } => "layout_mismatch",
            Error::InvalidRoiConfig(_) => "invalid_roi_config",
            Error::EmptyImage => "empty_image",
            Error::TemplateTooLarge { .. } => "template_too_large",
            Error::ConstantTemplate => "constant_template",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::UndecidedAnnotation(_) => "undecided_annotation",
            Error::MalformedLine { .. } => "malformed_line",
            Error::Overlap(_) => "overlap",
            Error::MalformedRecord { .. } => "malformed_record",
            Error::ConfidenceOutOfRange(_) => "confidence_out_of_range",
            Error::ModelLoad { .. } => "model_load",
            Error::Inference(_) => "inference",
            Error::UnlabeledColumn(_) => "unlabeled_column",
            Error::PreviousCycleOpen(_) => "previous_cycle_open",
            Error::InvalidPhase { .. } => "invalid_phase",
            Error::ColumnNotInInferenceSet(_) => "column_not_in_inference_set",
            Error::PendingReviewsRemain(_) => "pending_reviews_remain",
            Error::Config(_) => "config",
            Error::CorruptLog { .. } => "corrupt_log",
            Error::Io(_) => "io",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
        }
    }
}
