//! Embedded inference for YOLO-style ONNX exports.
//!
//! The model takes `[1, 3, S, S]` floats in `[0, 1]` and returns
//! `[1, N, 5 + classes]` rows of `cx, cy, w, h, objectness, class scores...`
//! in input pixels.

use std::path::Path;
use std::sync::Arc;

use image::GrayImage;
use tract_onnx::prelude::*;

use super::{Backend, ModelSidecar, RawDetection};
use crate::error::{Error, Result};
use crate::model::ClassId;

pub struct OnnxBackend {
    plan: Arc<TypedRunnableModel>,
    input_size: u32,
}

impl std::fmt::Debug for OnnxBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxBackend")
            .field("input_size", &self.input_size)
            .finish()
    }
}

impl OnnxBackend {
    /// Loads `path` with the input size named in its sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = ModelSidecar::load_for(path)?;
        let s = sidecar.input_size as usize;
        let err = |e: TractError| Error::ModelLoad {
            path: path.to_path_buf(),
            reason: format!("{e:#}"),
        };
        let plan = tract_onnx::onnx()
            .model_for_path(path)
            .map_err(err)?
            .with_input_fact(0, f32::fact([1, 3, s, s]).into())
            .map_err(err)?
            .into_optimized()
            .map_err(err)?
            .into_runnable()
            .map_err(err)?;
        Ok(Self {
            plan,
            input_size: sidecar.input_size,
        })
    }
}

impl Backend for OnnxBackend {
    fn input_size(&self) -> u32 {
        self.input_size
    }

    fn detect(&self, tile: &GrayImage, conf_floor: f64) -> Result<Vec<RawDetection>> {
        let s = self.input_size as usize;
        if tile.dimensions() != (self.input_size, self.input_size) {
            return Err(Error::Inference(format!("tile must be {s}x{s}")));
        }
        let input: Tensor = tract_ndarray::Array4::from_shape_fn((1, 3, s, s), |(_, _, y, x)| {
            tile.get_pixel(x as u32, y as u32).0[0] as f32 / 255.0
        })
        .into();
        let out = self
            .plan
            .run(tvec!(input.into()))
            .map_err(|e| Error::Inference(format!("{e:#}")))?;
        let view = out[0]
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::Inference(format!("{e:#}")))?;
        let shape = view.shape();
        if shape.len() != 3 || shape[0] != 1 || shape[2] < 6 {
            return Err(Error::Inference(format!("unexpected output shape {shape:?}")));
        }
        let mut dets = Vec::new();
        for row in view.index_axis(tract_ndarray::Axis(0), 0).outer_iter() {
            let obj = row[4] as f64;
            let (best, score) =
                row.iter()
                    .skip(5)
                    .enumerate()
                    .fold((0, f32::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            let confidence = obj * score as f64;
            if confidence < conf_floor {
                continue;
            }
            dets.push(RawDetection {
                cx: row[0] as f64,
                cy: row[1] as f64,
                w: row[2] as f64,
                h: row[3] as f64,
                confidence,
                class: if best == 1 { ClassId::Target } else { ClassId::Other },
            });
        }
        Ok(dets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{infer, InferParams, Tiling};
    use crate::model::{BBox, ColumnImage, Layout, ManuscriptId, PageRef, Raster, Side, Stage};
    use image::Luma;
    use prost::Message;
    use tract_onnx::pb;

    /// A graph whose output ignores the pixels: `dets + 0 * max(images)`.
    fn constant_model(rows: &[[f32; 7]]) -> Vec<u8> {
        let tensor = |name: &str, dims: Vec<i64>, data: Vec<f32>| pb::TensorProto {
            name: name.into(),
            dims,
            data_type: 1,
            float_data: data,
            ..Default::default()
        };
        let node = |op: &str, inputs: &[&str], output: &str, attribute: Vec<pb::AttributeProto>| pb::NodeProto {
            op_type: op.into(),
            input: inputs.iter().map(|s| s.to_string()).collect(),
            output: vec![output.into()],
            attribute,
            ..Default::default()
        };
        let keepdims = pb::AttributeProto {
            name: "keepdims".into(),
            r#type: 2,
            i: 0,
            ..Default::default()
        };
        let graph = pb::GraphProto {
            name: "g".into(),
            node: vec![
                node("ReduceMax", &["images"], "m", vec![keepdims]),
                node("Mul", &["m", "zero"], "z", vec![]),
                node("Add", &["dets", "z"], "output", vec![]),
            ],
            initializer: vec![
                tensor("zero", vec![], vec![0.0]),
                tensor(
                    "dets",
                    vec![1, rows.len() as i64, 7],
                    rows.iter().flatten().copied().collect(),
                ),
            ],
            input: vec![pb::ValueInfoProto {
                name: "images".into(),
                r#type: Some(pb::TypeProto {
                    value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                        elem_type: 1,
                        shape: None,
                    })),
                    ..Default::default()
                }),
                ..Default::default()
            }],
            output: vec![pb::ValueInfoProto {
                name: "output".into(),
                ..Default::default()
            }],
            ..Default::default()
        };
        pb::ModelProto {
            ir_version: 7,
            opset_import: vec![pb::OperatorSetIdProto {
                domain: String::new(),
                version: 13,
            }],
            graph: Some(graph),
            ..Default::default()
        }
        .encode_to_vec()
    }

    fn write_model(dir: &Path, rows: &[[f32; 7]]) -> std::path::PathBuf {
        let path = dir.join("model.onnx");
        std::fs::write(&path, constant_model(rows)).unwrap();
        ModelSidecar {
            model_id: "const".into(),
            class_names: vec!["other".into(), "target".into()],
            manifest_hash: "0".into(),
            input_size: 32,
        }
        .save_for(&path)
        .unwrap();
        path
    }

    #[test]
    fn decodes_yolo_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_model(
            dir.path(),
            &[
                [10.0, 10.0, 8.0, 6.0, 0.9, 0.1, 0.8],
                [20.0, 20.0, 4.0, 4.0, 0.5, 0.9, 0.2],
                [5.0, 5.0, 2.0, 2.0, 0.1, 0.5, 0.5],
            ],
        );
        let backend = OnnxBackend::load(&path).unwrap();
        let dets = backend
            .detect(&GrayImage::from_pixel(32, 32, Luma([255])), 0.3)
            .unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].class, ClassId::Target);
        assert!((dets[0].confidence - 0.72).abs() < 1e-6);
        assert_eq!(dets[1].class, ClassId::Other);

        let col = ColumnImage {
            page: PageRef {
                manuscript: ManuscriptId::new("ms").unwrap(),
                page_number: 1,
                side: Side::Recto,
                scribe: None,
                layout: Layout::TwoColumn,
                width_px: 100,
                height_px: 100,
            },
            column_index: 0,
            pixels: Raster::Gray(GrayImage::from_pixel(30, 30, Luma([255]))),
            stage: Stage::Binary,
        };
        let params = InferParams {
            conf_floor: 0.3,
            nms_iou: 0.5,
            tiling: Tiling { tile: 32, overlap: 8 },
        };
        let out = infer(&backend, "const", &col, params).unwrap();
        assert_eq!(out[0].bbox, BBox::new(6, 7, 8, 6).unwrap());
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn garbage_model_fails_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_model(dir.path(), &[[0.0; 7]]);
        std::fs::write(&path, b"not a model").unwrap();
        assert!(matches!(OnnxBackend::load(&path), Err(Error::ModelLoad { .. })));
    }
}
