//! Detector training-data exchange: normalized label files, per-cycle
//! manifests, detection files and the exported dataset directory.

mod detections;
mod export;
mod labels;
mod manifest;

pub use detections::{read_detections, read_detections_file, write_detections, write_detections_file};
pub use export::{export_dataset, training_annotations, ExportSummary};
pub use labels::{read_labels, write_labels, LabelLine};
pub use manifest::{build_manifest, is_validation, CycleSpec, DatasetManifest, PageRange};
