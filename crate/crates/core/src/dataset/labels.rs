use crate::error::{Error, Result};
use crate::model::{Annotation, BBox, ClassId};

/// One line of a label file: class and a center-format box normalized by
/// the image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelLine {
    pub class: ClassId,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl LabelLine {
    pub fn from_box(class: ClassId, b: BBox, img_w: u32, img_h: u32) -> Self {
        let (iw, ih) = (img_w as f64, img_h as f64);
        Self {
            class,
            cx: (b.x as f64 + b.w as f64 / 2.0) / iw,
            cy: (b.y as f64 + b.h as f64 / 2.0) / ih,
            w: b.w as f64 / iw,
            h: b.h as f64 / ih,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class.value(),
            self.cx,
            self.cy,
            self.w,
            self.h
        )
    }
}

/// Renders accepted or adjusted annotations of one column as label text,
/// one LF-terminated line per annotation, ordered by (y, x).
pub fn write_labels(annotations: &[&Annotation], img_w: u32, img_h: u32) -> Result<String> {
    let mut items = Vec::with_capacity(annotations.len());
    for a in annotations {
        if !a.status.is_positive() {
            return Err(Error::UndecidedAnnotation(a.id));
        }
        let b = a.effective_box();
        b.check_within(img_w, img_h)?;
        items.push((b, a.class));
    }
    items.sort_by_key(|(b, c)| (b.y, b.x, b.w, b.h, *c));
    let mut out = String::new();
    for (b, class) in items {
        out.push_str(&LabelLine::from_box(class, b, img_w, img_h).render());
        out.push('\n');
    }
    Ok(out)
}

const SLACK: f64 = 1e-6;

/// Parses label text back into pixel boxes, rounding to the nearest pixel
/// and clamping to the image.
pub fn read_labels(text: &str, img_w: u32, img_h: u32) -> Result<Vec<(ClassId, BBox)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let bad = |reason: String| Error::MalformedLine { line: line_no, reason };
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", fields.len())));
        }
        let class = fields[0]
            .parse::<i64>()
            .ok()
            .and_then(ClassId::from_value)
            .ok_or_else(|| bad(format!("unknown class {:?}", fields[0])))?;
        let mut v = [0.0f64; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            let x: f64 = f.parse().map_err(|_| bad(format!("not a number: {f:?}")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(bad(format!("value {x} outside [0, 1]")));
            }
            *slot = x;
        }
        let [cx, cy, w, h] = v;
        if cx - w / 2.0 < -SLACK || cx + w / 2.0 > 1.0 + SLACK || cy - h / 2.0 < -SLACK || cy + h / 2.0 > 1.0 + SLACK {
            return Err(bad("box extends outside the image".into()));
        }
        let (iw, ih) = (img_w as f64, img_h as f64);
        let pw = ((w * iw).round() as u32).clamp(1, img_w);
        let ph = ((h * ih).round() as u32).clamp(1, img_h);
        let px = ((cx * iw - w * iw / 2.0).round().max(0.0) as u32).min(img_w - pw);
        let py = ((cy * ih - h * ih / 2.0).round().max(0.0) as u32).min(img_h - ph);
        out.push((
            class,
            BBox {
                x: px,
                y: py,
                w: pw,
                h: ph,
            },
        ));
    }
    Ok(out)
}
