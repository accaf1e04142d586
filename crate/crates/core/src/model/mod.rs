//! Domain types shared by every stage of the pipeline, plus the
//! append-only [`AnnotationStore`].

mod column;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use column::{ColumnImage, Raster, Stage};
pub use store::{AnnotationFilter, AnnotationStore, CycleEvent, LogRecord};

/// Manuscript name: lowercase ASCII alphanumerics and hyphens.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ManuscriptId(String);

impl ManuscriptId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let ok = !name.is_empty()
            && name
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
        if ok {
            Ok(Self(name))
        } else {
            Err(Error::InvalidId(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Scribe code, a single uppercase letter. Which letters are valid for a
/// given manuscript is decided by its configured alphabet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScribeId(String);

impl ScribeId {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        if code.len() == 1 && code.as_bytes()[0].is_ascii_uppercase() {
            Ok(Self(code))
        } else {
            Err(Error::InvalidId(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

macro_rules! string_newtype {
    ($ty:ident) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::new(s).map_err(serde::de::Error::custom)
            }
        }
    };
}

string_newtype!(ManuscriptId);
string_newtype!(ScribeId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Recto,
    Verso,
}

impl Side {
    pub fn suffix(self) -> char {
        match self {
            Side::Recto => 'r',
            Side::Verso => 'v',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    TwoColumn,
    ThreeColumn,
}

impl Layout {
    pub fn columns(self) -> usize {
        match self {
            Layout::TwoColumn => 2,
            Layout::ThreeColumn => 3,
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::TwoColumn => "two_column",
            Layout::ThreeColumn => "three_column",
        })
    }
}

/// One side of one leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRef {
    pub manuscript: ManuscriptId,
    pub page_number: u32,
    pub side: Side,
    pub scribe: Option<ScribeId>,
    pub layout: Layout,
    pub width_px: u32,
    pub height_px: u32,
}

impl PageRef {
    /// `12r`, `7v`, ...
    pub fn label(&self) -> String {
        format!("{}{}", self.page_number, self.side.suffix())
    }

    pub fn column_id(&self, column_index: usize) -> ColumnId {
        ColumnId {
            manuscript: self.manuscript.clone(),
            page_number: self.page_number,
            side: self.side,
            column_index: column_index as u32,
        }
    }
}

/// Identifies one column of one page. Renders as
/// `{manuscript}_{page}{r|v}_c{index}`, which is also the column image
/// file stem.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnId {
    pub manuscript: ManuscriptId,
    pub page_number: u32,
    pub side: Side,
    pub column_index: u32,
}

impl ColumnId {
    pub fn page_label(&self) -> String {
        format!("{}{}", self.page_number, self.side.suffix())
    }
}

impl fmt::Display for ColumnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{}{}_c{}",
            self.manuscript,
            self.page_number,
            self.side.suffix(),
            self.column_index
        )
    }
}

impl FromStr for ColumnId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidId(s.to_string());
        let mut parts = s.split('_');
        let (Some(m), Some(page), Some(col), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let manuscript = ManuscriptId::new(m).map_err(|_| bad())?;
        let side = match page.chars().last() {
            Some('r') => Side::Recto,
            Some('v') => Side::Verso,
            _ => return Err(bad()),
        };
        let page_number: u32 = page[..page.len() - 1].parse().map_err(|_| bad())?;
        if page_number == 0 {
            return Err(bad());
        }
        let column_index: u32 = col.strip_prefix('c').and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        Ok(ColumnId {
            manuscript,
            page_number,
            side,
            column_index,
        })
    }
}

impl Serialize for ColumnId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ColumnId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned pixel box, origin at the top-left corner, y downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::DegenerateBox);
        }
        Ok(Self { x, y, w, h })
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w > 0 && self.h > 0 && self.right() <= width as u64 && self.bottom() <= height as u64
    }

    /// Errors unless the box is non-degenerate and inside a `width`x`height` raster.
    pub fn check_within(&self, width: u32, height: u32) -> Result<()> {
        if self.fits(width, height) {
            Ok(())
        } else {
            Err(Error::BoxOutOfBounds {
                bbox: *self,
                width,
                height,
            })
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let x0 = self.x.max(other.x) as u64;
        let y0 = self.y.max(other.y) as u64;
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        x1.saturating_sub(x0) * y1.saturating_sub(y0)
    }

    /// Intersection over union. Two zero-area boxes have IoU 0.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}x{})", self.x, self.y, self.w, self.h)
    }
}

/// 1 = the target character by the target scribe, 0 = the target character by anyone else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassId {
    Other = 0,
    Target = 1,
}

impl ClassId {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            0 => Some(ClassId::Other),
            1 => Some(ClassId::Target),
            _ => None,
        }
    }
}

impl Serialize for ClassId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.value())
    }
}

impl<'de> Deserialize<'de> for ClassId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        ClassId::from_value(v).ok_or_else(|| serde::de::Error::custom(format!("class {v} is not 0 or 1")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    TemplateMatch,
    Detector,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Accepted,
    Rejected,
    Adjusted,
}

impl Status {
    pub fn is_decided(self) -> bool {
        self != Status::Pending
    }

    /// Accepted or adjusted: usable as training data.
    pub fn is_positive(self) -> bool {
        matches!(self, Status::Accepted | Status::Adjusted)
    }
}

impl FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(Status::Pending),
            "accepted" => Ok(Status::Accepted),
            "rejected" => Ok(Status::Rejected),
            "adjusted" => Ok(Status::Adjusted),
            _ => Err(Error::InvalidParameter(format!("unknown status {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotationId(pub u64);

impl fmt::Display for AnnotationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An annotation before the store has assigned it an id.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationDraft {
    pub column: ColumnId,
    pub bbox: BBox,
    pub class: ClassId,
    pub origin: Origin,
    pub status: Status,
    pub cycle: u32,
    pub confidence: Option<f64>,
    pub model_id: Option<String>,
}

impl AnnotationDraft {
    pub fn pending(column: ColumnId, bbox: BBox, class: ClassId, origin: Origin, cycle: u32) -> Self {
        Self {
            column,
            bbox,
            class,
            origin,
            status: Status::Pending,
            cycle,
            confidence: None,
            model_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: AnnotationId,
    pub column: ColumnId,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class: ClassId,
    pub origin: Origin,
    pub status: Status,
    pub cycle: u32,
    /// Replacement box, set when the status is `adjusted`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adjusted: Option<BBox>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model_id: Option<String>,
}

impl Annotation {
    /// The adjusted box if there is one, otherwise the original.
    pub fn effective_box(&self) -> BBox {
        self.adjusted.unwrap_or(self.bbox)
    }
}

/// A box emitted by a detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub column: ColumnId,
    pub bbox: BBox,
    pub class: ClassId,
    pub confidence: f64,
    pub model_id: String,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::ConfidenceOutOfRange(self.confidence));
        }
        if self.bbox.w == 0 || self.bbox.h == 0 {
            return Err(Error::DegenerateBox);
        }
        Ok(())
    }
}

/// Review outcome for a pending annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
    Adjust(BBox),
}

/// A column as registered in the store: where it comes from and its raster size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub id: ColumnId,
    pub page: PageRef,
    pub width: u32,
    pub height: u32,
}

impl ColumnInfo {
    pub fn scribe(&self) -> Option<&ScribeId> {
        self.page.scribe.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manuscript_id_rules() {
        assert!(ManuscriptId::new("trento").is_ok());
        assert!(ManuscriptId::new("avila-2").is_ok());
        assert!(ManuscriptId::new("").is_err());
        assert!(ManuscriptId::new("Avila").is_err());
        assert!(ManuscriptId::new("a_b").is_err());
    }

    #[test]
    fn column_id_round_trip() {
        let id: ColumnId = "trento_12r_c1".parse().unwrap();
        assert_eq!(id.page_number, 12);
        assert_eq!(id.side, Side::Recto);
        assert_eq!(id.column_index, 1);
        assert_eq!(id.to_string(), "trento_12r_c1");
        assert!("trento_12x_c1".parse::<ColumnId>().is_err());
        assert!("trento_0r_c1".parse::<ColumnId>().is_err());
        assert!("trento_12r".parse::<ColumnId>().is_err());
    }

    #[test]
    fn bbox_rules() {
        assert!(BBox::new(0, 0, 0, 4).is_err());
        let b = BBox::new(90, 0, 10, 10).unwrap();
        assert!(b.fits(100, 10));
        assert!(!b.fits(99, 10));
        assert!(matches!(b.check_within(99, 10), Err(Error::BoxOutOfBounds { .. })));
    }

    #[test]
    fn class_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&ClassId::Target).unwrap(), "1");
        assert!(serde_json::from_str::<ClassId>("2").is_err());
    }
}
