//! Detector gateway: ingest externally produced detection files, run an
//! embedded detector over tiled columns, and filter by confidence.

#[cfg(feature = "onnx")]
mod onnx;

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::read_detections_file;
use crate::error::{Error, Result};
use crate::matcher::{match_candidates, ncc_map, nms, Scored, Template};
use crate::model::{
    AnnotationDraft, AnnotationId, AnnotationStore, BBox, ClassId, ColumnImage, DetectionRecord, Origin, Raster,
};
use crate::preprocess::to_gray;

#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    ExternalFile,
    EmbeddedModel,
}

/// Where detections come from: a detection file, or a model artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorHandle {
    pub kind: DetectorKind,
    pub model_id: String,
    pub source: PathBuf,
}

impl DetectorHandle {
    pub fn external_file(model_id: impl Into<String>, source: impl Into<PathBuf>) -> Result<Self> {
        let model_id = model_id.into();
        if model_id.is_empty() {
            return Err(Error::InvalidParameter("model_id must not be empty".into()));
        }
        Ok(Self {
            kind: DetectorKind::ExternalFile,
            model_id,
            source: source.into(),
        })
    }

    /// Handle for a model artifact; the model id comes from its sidecar.
    pub fn embedded_model(source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let load_err = |reason: String| Error::ModelLoad {
            path: source.clone(),
            reason,
        };
        std::fs::metadata(&source).map_err(|e| load_err(e.to_string()))?;
        let sidecar = ModelSidecar::load_for(&source)?;
        if sidecar.model_id.is_empty() {
            return Err(load_err("sidecar model_id is empty".into()));
        }
        Ok(Self {
            kind: DetectorKind::EmbeddedModel,
            model_id: sidecar.model_id,
            source,
        })
    }
}

/// Metadata stored next to a model artifact as `<model>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub model_id: String,
    pub class_names: Vec<String>,
    pub manifest_hash: String,
    #[serde(default = "default_input_size")]
    pub input_size: u32,
}

fn default_input_size() -> u32 {
    640
}

impl ModelSidecar {
    pub fn path_for(model: &Path) -> PathBuf {
        model.with_extension("json")
    }

    pub fn load_for(model: &Path) -> Result<Self> {
        let path = Self::path_for(model);
        let err = |reason: String| Error::ModelLoad {
            path: path.clone(),
            reason,
        };
        let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
        let sidecar: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if sidecar.class_names.len() != 2 {
            return Err(err(format!(
                "expected 2 class names, found {}",
                sidecar.class_names.len()
            )));
        }
        Ok(sidecar)
    }

    pub fn save_for(&self, model: &Path) -> Result<()> {
        std::fs::write(Self::path_for(model), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Validates every record, then stores them all as pending detector
/// annotations of `cycle`. Nothing is written if any record is invalid.
pub fn ingest_records(
    store: &mut AnnotationStore,
    records: &[DetectionRecord],
    cycle: u32,
) -> Result<Vec<AnnotationId>> {
    for r in records {
        let col = store
            .column(&r.column)
            .ok_or_else(|| Error::UnknownColumn(r.column.to_string()))?;
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(Error::ConfidenceOutOfRange(r.confidence));
        }
        r.bbox.check_within(col.width, col.height)?;
    }
    records
        .iter()
        .map(|r| {
            let mut draft = AnnotationDraft::pending(r.column.clone(), r.bbox, r.class, Origin::Detector, cycle);
            draft.confidence = Some(r.confidence);
            draft.model_id = Some(r.model_id.clone());
            store.put_annotation(draft)
        })
        .collect()
}

/// Reads the detection file behind an external-file handle and ingests it.
///
/// Every record must carry the handle's model id.
pub fn ingest(store: &mut AnnotationStore, handle: &DetectorHandle, cycle: u32) -> Result<Vec<DetectionRecord>> {
    if handle.kind != DetectorKind::ExternalFile {
        return Err(Error::InvalidParameter("ingest needs an external_file handle".into()));
    }
    let records = read_detections_file(&handle.source)?;
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.model_id != handle.model_id) {
        return Err(Error::MalformedRecord {
            line: i + 1,
            reason: format!("model_id {:?} differs from {:?}", r.model_id, handle.model_id),
        });
    }
    ingest_records(store, &records, cycle)?;
    Ok(records)
}

/// The records scoring at least `tau`, in their original order.
pub fn filter_by_confidence<T: Scored + Clone>(records: &[T], tau: f64) -> Vec<T> {
    records.iter().filter(|r| r.score() >= tau).cloned().collect()
}

/// A detection in tile pixel coordinates, center format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawDetection {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
    pub class: ClassId,
}

/// A detector that runs on square gray tiles of `input_size` pixels.
pub trait Backend: Sync {
    fn input_size(&self) -> u32;
    /// Detections on one tile with confidence at least `conf_floor`.
    fn detect(&self, tile: &GrayImage, conf_floor: f64) -> Result<Vec<RawDetection>>;
}

/// Square tiles with overlap, covering a column raster edge to edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tiling {
    pub tile: u32,
    pub overlap: u32,
}

impl Tiling {
    /// Overlap of twice the tallest expected glyph, so every glyph lies
    /// whole inside at least one tile.
    pub fn for_glyph_height(tile: u32, max_glyph_height: u32) -> Result<Self> {
        let overlap = 2 * max_glyph_height;
        if overlap >= tile {
            return Err(Error::InvalidParameter(format!(
                "tile {tile} must exceed twice the glyph height {max_glyph_height}"
            )));
        }
        Ok(Self { tile, overlap })
    }

    /// Tile origins along an axis of `len` pixels.
    pub fn starts(&self, len: u32) -> Vec<u32> {
        if len <= self.tile {
            return vec![0];
        }
        let step = self.tile - self.overlap;
        let mut out: Vec<u32> = (0..).map(|k| k * step).take_while(|&s| s + self.tile < len).collect();
        out.push(len - self.tile);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferParams {
    pub conf_floor: f64,
    pub nms_iou: f64,
    pub tiling: Tiling,
}

// Largest f64 below 1; a finite-precision sigmoid can round to exactly 1.
const MAX_CONFIDENCE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Runs `backend` over a column in overlapping tiles and merges the result.
///
/// Boxes are mapped to column coordinates and clipped, records below
/// `conf_floor` dropped, and the rest deduplicated by class-agnostic NMS.
/// Output is ordered by (y, x).
pub fn infer(
    backend: &dyn Backend,
    model_id: &str,
    column: &ColumnImage,
    params: InferParams,
) -> Result<Vec<DetectionRecord>> {
    if !(0.0..=1.0).contains(&params.conf_floor) {
        return Err(Error::InvalidParameter(format!(
            "conf_floor {} not in [0, 1]",
            params.conf_floor
        )));
    }
    if params.tiling.tile != backend.input_size() || params.tiling.overlap >= params.tiling.tile {
        return Err(Error::InvalidParameter("tiling does not match the model input".into()));
    }
    let owned;
    let gray = match &column.pixels {
        Raster::Gray(g) => g,
        Raster::Rgb(rgb) => {
            owned = to_gray(rgb);
            &owned
        }
    };
    let (w, h) = gray.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let tile = params.tiling.tile;
    let origins: Vec<(u32, u32)> = params
        .tiling
        .starts(h)
        .into_iter()
        .flat_map(|y| params.tiling.starts(w).into_iter().map(move |x| (x, y)))
        .collect();
    let per_tile: Vec<Vec<DetectionRecord>> = origins
        .par_iter()
        .map(|&(ox, oy)| {
            let patch = GrayImage::from_fn(tile, tile, |x, y| {
                let (px, py) = (ox + x, oy + y);
                if px < w && py < h {
                    *gray.get_pixel(px, py)
                } else {
                    Luma([255])
                }
            });
            let raw = backend.detect(&patch, params.conf_floor)?;
            let mut out = Vec::with_capacity(raw.len());
            for d in raw {
                if !d.confidence.is_finite() || ![d.cx, d.cy, d.w, d.h].iter().all(|v| v.is_finite()) {
                    return Err(Error::Inference("non-finite detector output".into()));
                }
                let confidence = d.confidence.clamp(0.0, MAX_CONFIDENCE);
                if confidence < params.conf_floor {
                    continue;
                }
                let clip = |v: f64, hi: u32| v.round().clamp(0.0, hi as f64) as u32;
                let x0 = clip(ox as f64 + d.cx - d.w / 2.0, w);
                let y0 = clip(oy as f64 + d.cy - d.h / 2.0, h);
                let x1 = clip(ox as f64 + d.cx + d.w / 2.0, w);
                let y1 = clip(oy as f64 + d.cy + d.h / 2.0, h);
                if x1 <= x0 || y1 <= y0 {
                    continue;
                }
                out.push(DetectionRecord {
                    column: column.id(),
                    bbox: BBox {
                        x: x0,
                        y: y0,
                        w: x1 - x0,
                        h: y1 - y0,
                    },
                    class: d.class,
                    confidence,
                    model_id: model_id.to_string(),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let all: Vec<DetectionRecord> = per_tile.into_iter().flatten().collect();
    let mut kept = nms(&all, params.nms_iou)?;
    kept.sort_by(|a, b| {
        (a.bbox.y, a.bbox.x)
            .cmp(&(b.bbox.y, b.bbox.x))
            .then(b.confidence.total_cmp(&a.confidence))
    });
    Ok(kept)
}

/// A backend that scores tiles by template correlation; useful as a
/// stand-in detector when no trained model is available.
#[derive(Debug, Clone)]
pub struct TemplateBackend {
    pub templates: Vec<Template>,
    pub input_size: u32,
    pub nms_iou: f64,
}

impl Backend for TemplateBackend {
    fn input_size(&self) -> u32 {
        self.input_size
    }

    fn detect(&self, tile: &GrayImage, conf_floor: f64) -> Result<Vec<RawDetection>> {
        let tau = conf_floor.max(f64::MIN_POSITIVE);
        let mut all = Vec::new();
        for t in &self.templates {
            let map = ncc_map(tile, t)?;
            all.extend(match_candidates(&map, tau)?.into_iter().map(|c| (c, t.label)));
        }
        Ok(nms(&all, self.nms_iou)?
            .into_iter()
            .map(|(c, class)| RawDetection {
                cx: c.bbox.x as f64 + c.bbox.w as f64 / 2.0,
                cy: c.bbox.y as f64 + c.bbox.h as f64 / 2.0,
                w: c.bbox.w as f64,
                h: c.bbox.h as f64,
                confidence: c.score,
                class,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ColumnId, ColumnInfo, Layout, ManuscriptId, PageRef, ScribeId, Side, Stage, Status};

    fn page() -> PageRef {
        PageRef {
            manuscript: ManuscriptId::new("ms").unwrap(),
            page_number: 3,
            side: Side::Recto,
            scribe: Some(ScribeId::new("F").unwrap()),
            layout: Layout::TwoColumn,
            width_px: 400,
            height_px: 600,
        }
    }

    fn store() -> AnnotationStore {
        let mut s = AnnotationStore::new();
        for i in 0..2 {
            s.register_column(ColumnInfo {
                id: page().column_id(i),
                page: page(),
                width: 100,
                height: 200,
            })
            .unwrap();
        }
        s
    }

    fn rec(col: usize, x: u32, conf: f64) -> DetectionRecord {
        DetectionRecord {
            column: page().column_id(col),
            bbox: BBox::new(x, 10, 8, 8).unwrap(),
            class: ClassId::Target,
            confidence: conf,
            model_id: "m1".into(),
        }
    }

    #[test]
    fn ingest_ten_records() {
        let mut s = store();
        let recs: Vec<_> = (0..10).map(|i| rec(i % 2, 5 * i as u32, 0.5)).collect();
        let ids = ingest_records(&mut s, &recs, 1).unwrap();
        assert_eq!(ids.len(), 10);
        for id in ids {
            let a = s.get(id).unwrap();
            assert_eq!((a.origin, a.status, a.cycle), (Origin::Detector, Status::Pending, 1));
            assert_eq!(a.model_id.as_deref(), Some("m1"));
        }
    }

    #[test]
    fn ingest_is_atomic() {
        let mut s = store();
        let mut stray = rec(0, 0, 0.5);
        stray.column = "ms_9r_c0".parse::<ColumnId>().unwrap();
        let err = ingest_records(&mut s, &[rec(0, 0, 0.5), stray], 1).unwrap_err();
        assert!(matches!(err, Error::UnknownColumn(_)));
        assert_eq!(s.len(), 0);
        let err = ingest_records(&mut s, &[rec(0, 95, 0.5)], 1).unwrap_err();
        assert!(matches!(err, Error::BoxOutOfBounds { .. }));
        let err = ingest_records(&mut s, &[rec(0, 0, 1.5)], 1).unwrap_err();
        assert!(matches!(err, Error::ConfidenceOutOfRange(_)));
        assert_eq!(s.len(), 0);
    }

    #[test]
    fn ingest_file_checks_model_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        crate::dataset::write_detections_file(&path, &[rec(0, 0, 0.9), rec(1, 0, 0.8)]).unwrap();
        let mut s = store();
        let h = DetectorHandle::external_file("m1", &path).unwrap();
        assert_eq!(ingest(&mut s, &h, 2).unwrap().len(), 2);
        let other = DetectorHandle::external_file("m2", &path).unwrap();
        assert!(matches!(ingest(&mut s, &other, 2), Err(Error::MalformedRecord { .. })));
        assert!(DetectorHandle::external_file("", &path).is_err());
    }

    #[test]
    fn embedded_handle_reads_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let model = dir.path().join("best.onnx");
        assert!(matches!(
            DetectorHandle::embedded_model(&model),
            Err(Error::ModelLoad { .. })
        ));
        std::fs::write(&model, b"x").unwrap();
        assert!(matches!(
            DetectorHandle::embedded_model(&model),
            Err(Error::ModelLoad { .. })
        ));
        let sc = ModelSidecar {
            model_id: "abc".into(),
            class_names: vec!["other".into(), "target".into()],
            manifest_hash: "00".into(),
            input_size: 320,
        };
        sc.save_for(&model).unwrap();
        let h = DetectorHandle::embedded_model(&model).unwrap();
        assert_eq!((h.kind, h.model_id.as_str()), (DetectorKind::EmbeddedModel, "abc"));
        assert_eq!(ModelSidecar::load_for(&model).unwrap(), sc);
    }

    #[test]
    fn filter_is_inclusive_and_ordered() {
        let recs = [rec(0, 0, 0.84), rec(0, 10, 0.83), rec(0, 20, 0.82)];
        let kept = filter_by_confidence(&recs, 0.83);
        assert_eq!(kept.iter().map(|r| r.confidence).collect::<Vec<_>>(), vec![0.84, 0.83]);
        assert_eq!(filter_by_confidence(&recs, 0.0), recs.to_vec());
    }

    #[test]
    fn tile_starts_cover_axis() {
        let t = Tiling::for_glyph_height(64, 10).unwrap();
        assert_eq!(t.starts(50), vec![0]);
        assert_eq!(t.starts(64), vec![0]);
        assert_eq!(t.starts(100), vec![0, 36]);
        assert_eq!(t.starts(200), vec![0, 44, 88, 132, 136]);
        assert!(Tiling::for_glyph_height(20, 10).is_err());
    }

    struct Fixed(Vec<RawDetection>);

    impl Backend for Fixed {
        fn input_size(&self) -> u32 {
            32
        }
        fn detect(&self, _: &GrayImage, floor: f64) -> Result<Vec<RawDetection>> {
            Ok(self.0.iter().copied().filter(|d| d.confidence >= floor).collect())
        }
    }

    fn column(w: u32, h: u32) -> ColumnImage {
        ColumnImage {
            page: page(),
            column_index: 0,
            pixels: Raster::Gray(GrayImage::from_pixel(w, h, Luma([255]))),
            stage: Stage::Binary,
        }
    }

    fn raw(cx: f64, cy: f64, conf: f64) -> RawDetection {
        RawDetection {
            cx,
            cy,
            w: 8.0,
            h: 8.0,
            confidence: conf,
            class: ClassId::Target,
        }
    }

    #[test]
    fn infer_clips_merges_and_floors() {
        let backend = Fixed(vec![raw(2.0, 2.0, 1.0), raw(20.0, 20.0, 0.6), raw(10.0, 10.0, 0.2)]);
        let params = InferParams {
            conf_floor: 0.5,
            nms_iou: 0.3,
            tiling: Tiling { tile: 32, overlap: 8 },
        };
        let out = infer(&backend, "m", &column(30, 50), params).unwrap();
        for r in &out {
            assert!(r.bbox.fits(30, 50));
            assert!(r.confidence >= 0.5 && r.confidence < 1.0);
        }
        for (i, a) in out.iter().enumerate() {
            for b in &out[i + 1..] {
                assert!(a.bbox.iou(&b.bbox) < 0.3);
            }
        }
        assert_eq!(out[0].bbox, BBox::new(0, 0, 6, 6).unwrap());
        let top = InferParams {
            conf_floor: 1.0,
            ..params
        };
        assert!(infer(&backend, "m", &column(30, 50), top).unwrap().is_empty());
        assert_eq!(
            infer(&backend, "m", &column(30, 50), params).unwrap(),
            out,
            "inference is deterministic"
        );
    }

    #[test]
    fn template_backend_finds_planted_glyphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let glyph = GrayImage::from_fn(9, 11, |x, y| {
            let d = (x as i32 - 4).pow(2) + (y as i32 - 5).pow(2);
            Luma([if (6..=16).contains(&d) || (x == 7 && y > 4) {
                0
            } else {
                255
            }])
        });
        let mut img = GrayImage::from_fn(60, 300, |_, _| Luma([if rng.random_ratio(1, 50) { 0 } else { 255 }]));
        let planted: Vec<BBox> = (0..8)
            .map(|k| BBox::new(10 + 20 * (k % 2), 12 + 34 * k, 9, 11).unwrap())
            .collect();
        for b in &planted {
            image::imageops::replace(&mut img, &glyph, b.x as i64, b.y as i64);
        }
        let mut col = column(60, 300);
        col.pixels = Raster::Gray(img);
        let backend = TemplateBackend {
            templates: vec![Template::new(glyph, ScribeId::new("F").unwrap(), ClassId::Target).unwrap()],
            input_size: 64,
            nms_iou: 0.3,
        };
        let params = InferParams {
            conf_floor: 0.6,
            nms_iou: 0.3,
            tiling: Tiling::for_glyph_height(64, 11).unwrap(),
        };
        let out = infer(&backend, "tm", &col, params).unwrap();
        let hits = planted
            .iter()
            .filter(|p| out.iter().any(|d| d.bbox.iou(p) >= 0.5))
            .count();
        assert!(hits >= 7, "{hits} of 8 planted glyphs detected");
    }
}
