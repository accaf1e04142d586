use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{write_labels, DatasetManifest};
use crate::error::{Error, Result};
use crate::model::{Annotation, AnnotationStore, ColumnId};

/// Counts of what [`export_dataset`] wrote.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExportSummary {
    pub train_images: usize,
    pub val_images: usize,
    pub inference_images: usize,
    pub annotations: usize,
}

/// Annotations usable as training labels for the manifest's cycle: accepted
/// or adjusted, produced before that cycle.
pub fn training_annotations<'a>(store: &'a AnnotationStore, column: &ColumnId, cycle: u32) -> Vec<&'a Annotation> {
    store
        .annotations_on(column)
        .filter(|a| a.status.is_positive() && a.cycle < cycle)
        .collect()
}

/// Writes the dataset directory for one cycle:
///
/// ```text
/// out/manifest.json
/// out/images/{train,val,inference}/{column}.png
/// out/labels/{train,val}/{column}.txt
/// ```
///
/// Column images are copied from `columns_dir/{column}.png`.
pub fn export_dataset(
    store: &AnnotationStore,
    manifest: &DatasetManifest,
    columns_dir: &Path,
    out: &Path,
) -> Result<ExportSummary> {
    manifest.check_disjoint()?;
    let mut summary = ExportSummary::default();
    for (role, cols, labeled) in [
        ("train", &manifest.train_columns, true),
        ("val", &manifest.val_columns, true),
        ("inference", &manifest.inference_columns, false),
    ] {
        let img_dir = out.join("images").join(role);
        fs::create_dir_all(&img_dir)?;
        if labeled {
            fs::create_dir_all(out.join("labels").join(role))?;
        }
        for col in cols {
            let info = store.column(col).ok_or_else(|| Error::UnknownColumn(col.to_string()))?;
            let name = format!("{col}.png");
            fs::copy(columns_dir.join(&name), img_dir.join(&name))?;
            if labeled {
                let anns = training_annotations(store, col, manifest.cycle);
                let text = write_labels(&anns, info.width, info.height)?;
                fs::write(out.join("labels").join(role).join(format!("{col}.txt")), text)?;
                summary.annotations += anns.len();
            }
            match role {
                "train" => summary.train_images += 1,
                "val" => summary.val_images += 1,
                _ => summary.inference_images += 1,
            }
        }
    }
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(manifest)?)?;
    Ok(summary)
}
