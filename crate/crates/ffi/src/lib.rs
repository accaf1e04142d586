//! C bindings for the annotation store and the numeric kernels.
//!
//! Every entry point returns an [`ScStatus`]; results go through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`sc_last_error`]. Strings returned by the library must be released with
//! [`sc_string_free`], stores with [`sc_store_free`]. Panics never cross the
//! boundary: they are reported as `SC_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use image::GrayImage;
use scriptor::eval;
use scriptor::matcher::{self, Scored, Template};
use scriptor::model::{
    AnnotationDraft, AnnotationId, AnnotationStore, BBox, ClassId, ColumnId, ColumnInfo, Decision, Layout, Origin,
    PageRef, ScribeId, Status,
};
use scriptor::preprocess;
use scriptor::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Conflict = 5,
    OutOfBounds = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Axis-aligned box in pixels, top-left origin.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// A box with a score, the input to [`sc_nms`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScScoredBox {
    pub bbox: ScBox,
    pub score: f64,
}

/// One row of a threshold sweep.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScSweepPoint {
    pub tau: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: f64,
    pub f_score: f64,
}

/// Review actions for [`sc_store_decide`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScAction {
    Accept = 0,
    Reject = 1,
    Adjust = 2,
}

/// Opaque handle to an annotation store.
pub struct ScStore {
    inner: AnnotationStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ScStatus {
    match e {
        Error::UnknownId(_) | Error::UnknownColumn(_) => ScStatus::NotFound,
        Error::AlreadyDecided(_) | Error::DuplicateAccepted(_) | Error::ColumnConflict(_) => ScStatus::Conflict,
        Error::BoxOutOfBounds { .. } | Error::DegenerateBox => ScStatus::OutOfBounds,
        Error::Io(_) | Error::CorruptLog { .. } => ScStatus::Io,
        _ => ScStatus::InvalidArgument,
    }
}

struct Fail(ScStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), format!("{}: {e}", e.code()))
    }
}

/// Runs `f`, turning errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ScStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ScStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            ScStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ScStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(ScStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ScStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn store_arg<'a>(p: *mut ScStore) -> Result<&'a mut AnnotationStore, Fail> {
    p.as_mut().map(|s| &mut s.inner).ok_or_else(|| null("store"))
}

fn to_bbox(b: ScBox) -> Result<BBox, Fail> {
    Ok(BBox::new(b.x, b.y, b.w, b.h)?)
}

fn gray(pixels: &[u8], w: u32, h: u32, what: &str) -> Result<GrayImage, Fail> {
    GrayImage::from_raw(w, h, pixels.to_vec()).ok_or_else(|| invalid(format!("{what} buffer size mismatch")))
}

/// Message of the last failed call on this thread, or null after a success.
///
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates an in-memory store.
#[no_mangle]
pub unsafe extern "C" fn sc_store_new(out: *mut *mut ScStore) -> ScStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(ScStore {
            inner: AnnotationStore::new(),
        }));
        Ok(())
    })
}

/// Opens (or creates) a store backed by the JSONL log at `path`.
#[no_mangle]
pub unsafe extern "C" fn sc_store_open(path: *const c_char, out: *mut *mut ScStore) -> ScStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let inner = AnnotationStore::open(Path::new(path))?;
        *out = Box::into_raw(Box::new(ScStore { inner }));
        Ok(())
    })
}

/// Flushes and releases a store. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sc_store_free(store: *mut ScStore) {
    if !store.is_null() {
        let mut s = Box::from_raw(store);
        let _ = catch_unwind(AssertUnwindSafe(|| s.inner.flush()));
    }
}

/// Registers the column `column_id` (`<manuscript>_<page><r|v>_c<index>`).
///
/// `layout_columns` is 2 or 3. `scribe` may be null for unlabeled pages.
#[no_mangle]
pub unsafe extern "C" fn sc_store_register_column(
    store: *mut ScStore,
    column_id: *const c_char,
    layout_columns: u32,
    page_width: u32,
    page_height: u32,
    width: u32,
    height: u32,
    scribe: *const c_char,
) -> ScStatus {
    guard(|| {
        let store = store_arg(store)?;
        let id: ColumnId = str_arg(column_id, "column_id")?.parse()?;
        let layout = match layout_columns {
            2 => Layout::TwoColumn,
            3 => Layout::ThreeColumn,
            n => return Err(invalid(format!("layout must have 2 or 3 columns, not {n}"))),
        };
        let scribe = if scribe.is_null() {
            None
        } else {
            Some(ScribeId::new(str_arg(scribe, "scribe")?)?)
        };
        let page = PageRef {
            manuscript: id.manuscript.clone(),
            page_number: id.page_number,
            side: id.side,
            scribe,
            layout,
            width_px: page_width,
            height_px: page_height,
        };
        store.register_column(ColumnInfo {
            id,
            page,
            width,
            height,
        })?;
        Ok(())
    })
}

/// Adds a pending annotation. `class` is 0 or 1, `origin` 0 template match,
/// 1 detector, 2 manual. A NaN `confidence` means none.
#[no_mangle]
pub unsafe extern "C" fn sc_store_put_annotation(
    store: *mut ScStore,
    column_id: *const c_char,
    bbox: ScBox,
    class: u8,
    origin: u8,
    cycle: u32,
    confidence: f64,
    out_id: *mut u64,
) -> ScStatus {
    guard(|| {
        let store = store_arg(store)?;
        let out_id = out_arg(out_id, "out_id")?;
        let column: ColumnId = str_arg(column_id, "column_id")?.parse()?;
        let class = ClassId::from_value(class as i64).ok_or_else(|| invalid(format!("class {class}")))?;
        let origin = match origin {
            0 => Origin::TemplateMatch,
            1 => Origin::Detector,
            2 => Origin::Manual,
            o => return Err(invalid(format!("origin {o}"))),
        };
        let draft = AnnotationDraft {
            column,
            bbox: to_bbox(bbox)?,
            class,
            origin,
            status: Status::Pending,
            cycle,
            confidence: (!confidence.is_nan()).then_some(confidence),
            model_id: None,
        };
        *out_id = store.put_annotation(draft)?.0;
        Ok(())
    })
}

/// Records a review decision. `bbox` is read only for `SC_ACTION_ADJUST`.
#[no_mangle]
pub unsafe extern "C" fn sc_store_decide(
    store: *mut ScStore,
    id: u64,
    action: ScAction,
    bbox: *const ScBox,
) -> ScStatus {
    guard(|| {
        let store = store_arg(store)?;
        let decision = match action {
            ScAction::Accept => Decision::Accept,
            ScAction::Reject => Decision::Reject,
            ScAction::Adjust => Decision::Adjust(to_bbox(*bbox.as_ref().ok_or_else(|| null("bbox"))?)?),
        };
        store.decide(AnnotationId(id), decision)?;
        Ok(())
    })
}

/// Number of annotations in the store.
#[no_mangle]
pub unsafe extern "C" fn sc_store_count(store: *mut ScStore, out: *mut usize) -> ScStatus {
    guard(|| {
        let store = store_arg(store)?;
        *out_arg(out, "out")? = store.len();
        Ok(())
    })
}

/// Current state as JSON. Free the result with [`sc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sc_store_snapshot_json(store: *mut ScStore, out: *mut *mut c_char) -> ScStatus {
    guard(|| {
        let store = store_arg(store)?;
        let out = out_arg(out, "out")?;
        *out = CString::new(store.snapshot())
            .map_err(|e| invalid(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Otsu threshold of a 256-bin histogram. Class 0 is `<= threshold`.
#[no_mangle]
pub unsafe extern "C" fn sc_otsu_threshold(hist: *const u64, out: *mut u8) -> ScStatus {
    guard(|| {
        let hist: &[u64; 256] = slice_arg(hist, 256, "hist")?.try_into().expect("256 bins");
        *out_arg(out, "out")? = preprocess::otsu_threshold(hist)?;
        Ok(())
    })
}

/// Normalized cross-correlation of a template at every placement.
///
/// Both images are 8-bit, row-major and unpadded. `out` receives
/// `(iw - tw + 1) * (ih - th + 1)` scores row-major; `out_len` is its
/// capacity and is checked.
#[no_mangle]
pub unsafe extern "C" fn sc_ncc_map(
    image: *const u8,
    iw: u32,
    ih: u32,
    tmpl: *const u8,
    tw: u32,
    th: u32,
    out: *mut f64,
    out_len: usize,
) -> ScStatus {
    guard(|| {
        let img = gray(slice_arg(image, iw as usize * ih as usize, "image")?, iw, ih, "image")?;
        let t = gray(slice_arg(tmpl, tw as usize * th as usize, "tmpl")?, tw, th, "tmpl")?;
        let t = Template::new(t, ScribeId::new("A")?, ClassId::Target)?;
        let map = matcher::ncc_map(&img, &t)?;
        let values = map.values();
        if out_len < values.len() {
            return Err(Fail(
                ScStatus::BufferTooSmall,
                format!("need {} scores, buffer holds {out_len}", values.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// Intersection over union; 0 when both boxes are empty.
#[no_mangle]
pub extern "C" fn sc_iou(a: ScBox, b: ScBox) -> f64 {
    let conv = |b: ScBox| BBox {
        x: b.x,
        y: b.y,
        w: b.w,
        h: b.h,
    };
    conv(a).iou(&conv(b))
}

#[derive(Clone)]
struct Indexed(usize, ScScoredBox);

impl Scored for Indexed {
    fn bbox(&self) -> BBox {
        let b = self.1.bbox;
        BBox {
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }
    fn score(&self) -> f64 {
        self.1.score
    }
}

/// Greedy non-maximum suppression.
///
/// Writes the indices of the kept boxes, ascending, to `keep` (capacity
/// `n`) and their count to `out_kept`.
#[no_mangle]
pub unsafe extern "C" fn sc_nms(
    boxes: *const ScScoredBox,
    n: usize,
    iou_thresh: f64,
    keep: *mut usize,
    out_kept: *mut usize,
) -> ScStatus {
    guard(|| {
        let items: Vec<Indexed> = slice_arg(boxes, n, "boxes")?
            .iter()
            .enumerate()
            .map(|(i, b)| Indexed(i, *b))
            .collect();
        let out_kept = out_arg(out_kept, "out_kept")?;
        let kept = matcher::nms(&items, iou_thresh)?;
        if !kept.is_empty() {
            if keep.is_null() {
                return Err(null("keep"));
            }
            let dst = std::slice::from_raw_parts_mut(keep, kept.len());
            for (d, k) in dst.iter_mut().zip(&kept) {
                *d = k.0;
            }
        }
        *out_kept = kept.len();
        Ok(())
    })
}

/// Confusion counts and metrics at each threshold.
///
/// `positive[i]` is nonzero when sample `i` belongs to the target class; a
/// sample is predicted positive when `confidence[i] >= tau`. `out` holds
/// `n_taus` points.
#[no_mangle]
pub unsafe extern "C" fn sc_sweep(
    confidence: *const f64,
    positive: *const u8,
    n: usize,
    taus: *const f64,
    n_taus: usize,
    out: *mut ScSweepPoint,
) -> ScStatus {
    guard(|| {
        let conf = slice_arg(confidence, n, "confidence")?;
        let pos = slice_arg(positive, n, "positive")?;
        let taus = slice_arg(taus, n_taus, "taus")?;
        if conf.iter().chain(taus).any(|v| !v.is_finite()) {
            return Err(invalid("confidences and thresholds must be finite"));
        }
        let samples: Vec<(f64, bool)> = conf.iter().zip(pos).map(|(&c, &p)| (c, p != 0)).collect();
        let points = eval::sweep(&samples, taus);
        if !points.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            let dst = std::slice::from_raw_parts_mut(out, points.len());
            for (d, p) in dst.iter_mut().zip(&points) {
                *d = ScSweepPoint {
                    tau: p.tau,
                    tp: p.confusion.tp,
                    fp: p.confusion.fp,
                    fn_: p.confusion.fn_,
                    tn: p.confusion.tn,
                    accuracy: p.accuracy,
                    f_score: p.f_score,
                };
            }
        }
        Ok(())
    })
}
