//! Detection exchange files: one JSON object per line,
//! `{"column":..,"x":..,"y":..,"w":..,"h":..,"class":..,"confidence":..,"model_id":..}`,
//! confidence printed with four decimals.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{BBox, ClassId, ColumnId, DetectionRecord};

pub fn write_detections(records: &[DetectionRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        r.validate()?;
        out.push_str(&format!(
            "{{\"column\":{},\"x\":{},\"y\":{},\"w\":{},\"h\":{},\"class\":{},\"confidence\":{:.4},\"model_id\":{}}}\n",
            serde_json::to_string(&r.column.to_string())?,
            r.bbox.x,
            r.bbox.y,
            r.bbox.w,
            r.bbox.h,
            r.class.value(),
            r.confidence,
            serde_json::to_string(&r.model_id)?,
        ));
    }
    Ok(out)
}

pub fn write_detections_file(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    std::fs::write(path, write_detections(records)?)?;
    Ok(())
}

#[derive(Deserialize)]
struct RawRecord {
    column: String,
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    class: i64,
    confidence: f64,
    model_id: String,
}

pub fn read_detections(text: &str) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::MalformedRecord { line: i + 1, reason };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let column: ColumnId = raw
            .column
            .parse()
            .map_err(|_| bad(format!("bad column id {:?}", raw.column)))?;
        let coord = |v: i64, name: &str| u32::try_from(v).map_err(|_| bad(format!("{name} = {v} out of range")));
        let (x, y, w, h) = (
            coord(raw.x, "x")?,
            coord(raw.y, "y")?,
            coord(raw.w, "w")?,
            coord(raw.h, "h")?,
        );
        let bbox = BBox::new(x, y, w, h).map_err(|_| bad("zero-sized box".into()))?;
        let class = ClassId::from_value(raw.class).ok_or_else(|| bad(format!("class {} is not 0 or 1", raw.class)))?;
        if !(0.0..=1.0).contains(&raw.confidence) {
            return Err(Error::ConfidenceOutOfRange(raw.confidence));
        }
        if raw.model_id.is_empty() {
            return Err(bad("empty model_id".into()));
        }
        out.push(DetectionRecord {
            column,
            bbox,
            class,
            confidence: raw.confidence,
            model_id: raw.model_id,
        });
    }
    Ok(out)
}

pub fn read_detections_file(path: &Path) -> Result<Vec<DetectionRecord>> {
    read_detections(&std::fs::read_to_string(path)?)
}
