//! Template matching by zero-mean normalized cross-correlation, candidate
//! thresholding and greedy non-maximum suppression.

use std::path::Path;

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotationDraft, BBox, ClassId, ColumnImage, DetectionRecord, Origin, Raster, ScribeId};

pub const DEFAULT_TAU: f64 = 0.55;
pub const DEFAULT_NMS_IOU: f64 = 0.3;

/// Reference image of the target character for one scribe.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pixels: GrayImage,
    pub scribe: ScribeId,
    pub label: ClassId,
}

impl Template {
    pub fn new(pixels: GrayImage, scribe: ScribeId, label: ClassId) -> Result<Self> {
        let raw = pixels.as_raw();
        if raw.is_empty() {
            return Err(Error::EmptyImage);
        }
        if raw.iter().all(|&v| v == raw[0]) {
            return Err(Error::ConstantTemplate);
        }
        Ok(Self { pixels, scribe, label })
    }

    pub fn pixels(&self) -> &GrayImage {
        &self.pixels
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.pixels.dimensions()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TemplateSidecar {
    #[serde(rename = "template", default)]
    templates: Vec<TemplateEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateEntry {
    pub file: String,
    pub scribe: ScribeId,
    pub class: ClassId,
}

/// Loads every template listed in `dir/templates.toml`.
pub fn load_templates(dir: &Path) -> Result<Vec<Template>> {
    let text = std::fs::read_to_string(dir.join("templates.toml"))?;
    let sidecar: TemplateSidecar = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    sidecar
        .templates
        .into_iter()
        .map(|e| {
            let img = image::open(dir.join(&e.file))?.to_luma8();
            Template::new(img, e.scribe, e.class)
        })
        .collect()
}

/// Writes `templates.toml` for the given entries.
pub fn write_template_sidecar(dir: &Path, entries: &[TemplateEntry]) -> Result<()> {
    let text = toml::to_string(&TemplateSidecar {
        templates: entries.to_vec(),
    })
    .map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join("templates.toml"), text)?;
    Ok(())
}

/// Correlation scores, one per template placement, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NccMap {
    pub width: u32,
    pub height: u32,
    pub template_width: u32,
    pub template_height: u32,
    data: Vec<f64>,
}

impl NccMap {
    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.data[(v * self.width + u) as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Location and value of the highest score; the first one wins ties.
    pub fn argmax(&self) -> Option<(u32, u32, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in self.data.iter().enumerate() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, s)| (i as u32 % self.width, i as u32 / self.width, s))
    }
}

/// Zero-mean normalized cross-correlation of `tmpl` at every placement in `image`.
///
/// All sums are taken over integers: with `n` template pixels, the score is
/// `Σ I·(n·T − ΣT) / sqrt((n·ΣI² − (ΣI)²)·(n·ΣT² − (ΣT)²))`, which is the
/// usual mean-subtracted formula scaled by `n` top and bottom. Window sums
/// come from integral images; windows with zero variance score 0. Rows are
/// evaluated in parallel.
pub fn ncc_map(image: &GrayImage, tmpl: &Template) -> Result<NccMap> {
    let (iw, ih) = image.dimensions();
    let (tw, th) = tmpl.dimensions();
    if tw > iw || th > ih {
        return Err(Error::TemplateTooLarge { tw, th, iw, ih });
    }
    let n = (tw * th) as i64;
    let t = tmpl.pixels.as_raw();
    let t_sum: i64 = t.iter().map(|&v| v as i64).sum();
    let t_sq: i64 = t.iter().map(|&v| (v as i64).pow(2)).sum();
    let t_var = (n * t_sq - t_sum * t_sum) as f64;
    if t_var <= 0.0 {
        return Err(Error::ConstantTemplate);
    }
    let t_zero: Vec<i64> = t.iter().map(|&v| n * v as i64 - t_sum).collect();

    let integral = Integral::new(image);
    let (ow, oh) = (iw - tw + 1, ih - th + 1);
    let img = image.as_raw();
    let stride = iw as usize;
    let mut data = vec![0.0; (ow * oh) as usize];
    data.par_chunks_mut(ow as usize).enumerate().for_each(|(v, row)| {
        for (u, out) in row.iter_mut().enumerate() {
            let (s, sq) = integral.window(u, v, tw as usize, th as usize);
            let i_var = n * sq - s * s;
            if i_var == 0 {
                *out = 0.0;
                continue;
            }
            let mut num = 0i64;
            for j in 0..th as usize {
                let irow = &img[(v + j) * stride + u..(v + j) * stride + u + tw as usize];
                let trow = &t_zero[j * tw as usize..(j + 1) * tw as usize];
                num += irow.iter().zip(trow).map(|(&a, &b)| a as i64 * b).sum::<i64>();
            }
            let score = num as f64 / ((i_var as f64) * t_var).sqrt();
            *out = score.clamp(-1.0, 1.0);
        }
    });
    Ok(NccMap {
        width: ow,
        height: oh,
        template_width: tw,
        template_height: th,
        data,
    })
}

/// Summed-area tables of intensity and squared intensity.
struct Integral {
    stride: usize,
    sum: Vec<i64>,
    sq: Vec<i64>,
}

impl Integral {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let stride = w + 1;
        let mut sum = vec![0i64; stride * (h + 1)];
        let mut sq = vec![0i64; stride * (h + 1)];
        let raw = img.as_raw();
        for y in 0..h {
            let (mut rs, mut rq) = (0i64, 0i64);
            for x in 0..w {
                let v = raw[y * w + x] as i64;
                rs += v;
                rq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
            }
        }
        Self { stride, sum, sq }
    }

    fn window(&self, x: usize, y: usize, w: usize, h: usize) -> (i64, i64) {
        let s = self.stride;
        let at = |t: &[i64]| t[(y + h) * s + x + w] - t[y * s + x + w] - t[(y + h) * s + x] + t[y * s + x];
        (at(&self.sum), at(&self.sq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchCandidate {
    pub bbox: BBox,
    pub score: f64,
}

/// Every placement scoring at least `tau`, as template-sized boxes, best first.
pub fn match_candidates(map: &NccMap, tau: f64) -> Result<Vec<MatchCandidate>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter(format!("tau {tau} not in (0, 1]")));
    }
    let mut out: Vec<MatchCandidate> = map
        .data
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= tau)
        .map(|(i, &s)| MatchCandidate {
            bbox: BBox {
                x: i as u32 % map.width,
                y: i as u32 / map.width,
                w: map.template_width,
                h: map.template_height,
            },
            score: s,
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then((a.bbox.y, a.bbox.x).cmp(&(b.bbox.y, b.bbox.x)))
    });
    Ok(out)
}

/// Anything with a box and a score that NMS can rank.
pub trait Scored {
    fn bbox(&self) -> BBox;
    fn score(&self) -> f64;
}

impl Scored for MatchCandidate {
    fn bbox(&self) -> BBox {
        self.bbox
    }
    fn score(&self) -> f64 {
        self.score
    }
}

impl Scored for DetectionRecord {
    fn bbox(&self) -> BBox {
        self.bbox
    }
    fn score(&self) -> f64 {
        self.confidence
    }
}

impl<T: Scored> Scored for (T, ClassId) {
    fn bbox(&self) -> BBox {
        self.0.bbox()
    }
    fn score(&self) -> f64 {
        self.0.score()
    }
}

/// Greedy non-maximum suppression.
///
/// Items are visited by descending score (ties by top-left position, then
/// input order); an item survives unless its IoU with an already kept item
/// is `>= iou_thresh`. Survivors keep their input order.
pub fn nms<T: Scored + Clone>(items: &[T], iou_thresh: f64) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&iou_thresh) {
        return Err(Error::InvalidParameter(format!(
            "iou threshold {iou_thresh} not in [0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let (ba, bb) = (items[a].bbox(), items[b].bbox());
        items[b]
            .score()
            .total_cmp(&items[a].score())
            .then((ba.y, ba.x).cmp(&(bb.y, bb.x)))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let b = items[i].bbox();
        if kept.iter().all(|&k| items[k].bbox().iou(&b) < iou_thresh) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    Ok(kept.into_iter().map(|i| items[i].clone()).collect())
}

/// Matching parameters for [`bootstrap_annotate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub tau: f64,
    pub iou_thresh: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            iou_thresh: DEFAULT_NMS_IOU,
        }
    }
}

/// Proposes pending annotations on a column from every template, jointly
/// deduplicated by NMS. Results are ordered by (y, x).
pub fn bootstrap_annotate(
    column: &ColumnImage,
    templates: &[Template],
    params: MatchParams,
    cycle: u32,
) -> Result<Vec<AnnotationDraft>> {
    let gray = match &column.pixels {
        Raster::Gray(g) => g,
        Raster::Rgb(_) => {
            return Err(Error::InvalidParameter(
                "template matching needs a gray or binary column".into(),
            ))
        }
    };
    let mut all = Vec::new();
    for t in templates {
        let map = ncc_map(gray, t)?;
        all.extend(match_candidates(&map, params.tau)?.into_iter().map(|c| (c, t.label)));
    }
    let mut kept = nms(&all, params.iou_thresh)?;
    kept.sort_by_key(|(c, _)| (c.bbox.y, c.bbox.x));
    let id = column.id();
    Ok(kept
        .into_iter()
        .map(|(c, class)| AnnotationDraft::pending(id.clone(), c.bbox, class, Origin::TemplateMatch, cycle))
        .collect())
}
