//! Append-only annotation log with an in-memory current-state index.
//!
//! Every mutation is validated, written as one JSON line to the log file
//! (when the store is file-backed), and then applied to the index. Opening a
//! store replays its log, so the index is always a pure function of the log.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Annotation, AnnotationDraft, AnnotationId, BBox, ClassId, ColumnId, ColumnInfo, Decision, Layout, ManuscriptId,
    Origin, PageRef, ScribeId, Side, Status,
};
use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::orchestrator::Phase;

/// One line of the store log. The `record_type` tag is always the first field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record_type", rename_all = "snake_case")]
pub enum LogRecord {
    Column(ColumnRow),
    Annotation(AnnotationRow),
    Detection(AnnotationRow),
    Decision(DecisionRow),
    Cycle(CycleRow),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRow {
    pub manuscript: ManuscriptId,
    pub page: u32,
    pub side: Side,
    pub column: u32,
    pub width: u32,
    pub height: u32,
    pub page_width: u32,
    pub page_height: u32,
    pub layout: Layout,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scribe: Option<ScribeId>,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub id: AnnotationId,
    pub manuscript: ManuscriptId,
    pub page: u32,
    pub side: Side,
    pub column: u32,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub class: ClassId,
    pub origin: Origin,
    pub status: Status,
    pub cycle: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model_id: Option<String>,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub id: AnnotationId,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub h: Option<u32>,
    pub class: ClassId,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub cycle: u32,
    pub phase: Phase,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub manifest: Option<DatasetManifest>,
    pub timestamp: String,
}

/// A phase transition of an annotation cycle, as persisted in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEvent {
    pub cycle: u32,
    pub phase: Phase,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub manifest: Option<DatasetManifest>,
}

/// Conjunctive filter for [`AnnotationStore::query`]; `None` fields match anything.
#[derive(Debug, Clone, Default)]
pub struct AnnotationFilter {
    pub manuscript: Option<ManuscriptId>,
    pub scribe: Option<ScribeId>,
    pub status: Option<Status>,
    pub class: Option<ClassId>,
    pub cycle: Option<u32>,
    pub origin: Option<Origin>,
    pub column: Option<ColumnId>,
}

fn utc_now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub struct AnnotationStore {
    path: Option<PathBuf>,
    writer: Option<BufWriter<File>>,
    log: Vec<LogRecord>,
    columns: BTreeMap<ColumnId, ColumnInfo>,
    annotations: BTreeMap<AnnotationId, Annotation>,
    by_column: BTreeMap<ColumnId, Vec<AnnotationId>>,
    positive: HashMap<(ColumnId, BBox, ClassId), AnnotationId>,
    cycles: Vec<CycleEvent>,
    next_id: u64,
    clock: fn() -> String,
}

impl std::fmt::Debug for AnnotationStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationStore")
            .field("path", &self.path)
            .field("records", &self.log.len())
            .field("columns", &self.columns.len())
            .field("annotations", &self.annotations.len())
            .finish()
    }
}

impl Default for AnnotationStore {
    fn default() -> Self {
        Self::new()
    }
}

impl AnnotationStore {
    /// Empty in-memory store.
    pub fn new() -> Self {
        Self {
            path: None,
            writer: None,
            log: Vec::new(),
            columns: BTreeMap::new(),
            annotations: BTreeMap::new(),
            by_column: BTreeMap::new(),
            positive: HashMap::new(),
            cycles: Vec::new(),
            next_id: 1,
            clock: utc_now,
        }
    }

    /// Opens (or creates) a file-backed store and replays its log.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut store = Self::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: LogRecord = serde_json::from_str(&line).map_err(|e| Error::CorruptLog {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                store.apply(&rec).map_err(|e| Error::CorruptLog {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                store.log.push(rec);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        store.writer = Some(BufWriter::new(file));
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    /// Rebuilds an in-memory store from log records.
    pub fn replay<'a>(records: impl IntoIterator<Item = &'a LogRecord>) -> Result<Self> {
        let mut store = Self::new();
        for (i, rec) in records.into_iter().enumerate() {
            store.apply(rec).map_err(|e| Error::CorruptLog {
                line: i + 1,
                reason: e.to_string(),
            })?;
            store.log.push(rec.clone());
        }
        Ok(store)
    }

    /// Rebuilds an in-memory store from log text (one JSON record per line).
    pub fn replay_str(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| Error::CorruptLog {
                line: i + 1,
                reason: e.to_string(),
            })?);
        }
        Self::replay(&records)
    }

    /// Replaces the timestamp source.
    pub fn with_clock(mut self, clock: fn() -> String) -> Self {
        self.clock = clock;
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    /// The whole log as newline-delimited JSON.
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for rec in &self.log {
            out.push_str(&serde_json::to_string(rec).expect("log records serialize"));
            out.push('\n');
        }
        out
    }

    /// Deterministic JSON rendering of the current state (timestamps excluded).
    pub fn snapshot(&self) -> String {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            columns: Vec<&'a ColumnInfo>,
            annotations: Vec<&'a Annotation>,
            cycles: &'a [CycleEvent],
        }
        serde_json::to_string(&Snapshot {
            columns: self.columns.values().collect(),
            annotations: self.annotations.values().collect(),
            cycles: &self.cycles,
        })
        .expect("snapshot serializes")
    }

    pub fn column(&self, id: &ColumnId) -> Option<&ColumnInfo> {
        self.columns.get(id)
    }

    pub fn columns(&self) -> impl Iterator<Item = &ColumnInfo> {
        self.columns.values()
    }

    pub fn columns_of<'a>(&'a self, manuscript: &'a ManuscriptId) -> impl Iterator<Item = &'a ColumnInfo> {
        self.columns.values().filter(move |c| &c.id.manuscript == manuscript)
    }

    pub fn get(&self, id: AnnotationId) -> Option<&Annotation> {
        self.annotations.get(&id)
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn annotations(&self) -> impl Iterator<Item = &Annotation> {
        self.annotations.values()
    }

    /// Annotations on one column, in insertion order.
    pub fn annotations_on<'a>(&'a self, column: &ColumnId) -> impl Iterator<Item = &'a Annotation> {
        self.by_column
            .get(column)
            .into_iter()
            .flatten()
            .map(|id| &self.annotations[id])
    }

    pub fn cycle_events(&self) -> &[CycleEvent] {
        &self.cycles
    }

    /// Registers a column. Re-registering identical geometry is a no-op.
    pub fn register_column(&mut self, info: ColumnInfo) -> Result<()> {
        if info.id != info.page.column_id(info.id.column_index as usize) {
            return Err(Error::InvalidAnnotation(format!(
                "column id {} does not belong to page {}",
                info.id,
                info.page.label()
            )));
        }
        if info.id.column_index as usize >= info.page.layout.columns() {
            return Err(Error::InvalidAnnotation(format!(
                "column index {} exceeds the {} layout",
                info.id.column_index, info.page.layout
            )));
        }
        if info.width == 0 || info.height == 0 {
            return Err(Error::EmptyImage);
        }
        if let Some(existing) = self.columns.get(&info.id) {
            return if *existing == info {
                Ok(())
            } else {
                Err(Error::ColumnConflict(info.id))
            };
        }
        let rec = LogRecord::Column(ColumnRow {
            manuscript: info.id.manuscript.clone(),
            page: info.id.page_number,
            side: info.id.side,
            column: info.id.column_index,
            width: info.width,
            height: info.height,
            page_width: info.page.width_px,
            page_height: info.page.height_px,
            layout: info.page.layout,
            scribe: info.page.scribe.clone(),
            timestamp: (self.clock)(),
        });
        self.commit(rec)
    }

    /// Validates and appends a new annotation, returning its id.
    pub fn put_annotation(&mut self, a: AnnotationDraft) -> Result<AnnotationId> {
        let col = self
            .columns
            .get(&a.column)
            .ok_or_else(|| Error::UnknownColumn(a.column.to_string()))?;
        a.bbox.check_within(col.width, col.height)?;
        match (a.origin, a.status) {
            (_, Status::Pending) => {}
            (Origin::Manual, Status::Accepted | Status::Rejected) => {}
            (origin, status) => {
                return Err(Error::InvalidAnnotation(format!(
                    "{origin:?} annotations must be created pending, not {status:?}"
                )))
            }
        }
        if let Some(c) = a.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::ConfidenceOutOfRange(c));
            }
        }
        if a.status.is_positive() && self.positive.contains_key(&(a.column.clone(), a.bbox, a.class)) {
            return Err(Error::DuplicateAccepted(a.column));
        }
        let id = AnnotationId(self.next_id);
        let row = AnnotationRow {
            id,
            manuscript: a.column.manuscript.clone(),
            page: a.column.page_number,
            side: a.column.side,
            column: a.column.column_index,
            x: a.bbox.x,
            y: a.bbox.y,
            w: a.bbox.w,
            h: a.bbox.h,
            class: a.class,
            origin: a.origin,
            status: a.status,
            cycle: a.cycle,
            confidence: a.confidence,
            model_id: a.model_id,
            timestamp: (self.clock)(),
        };
        let rec = if a.origin == Origin::Detector {
            LogRecord::Detection(row)
        } else {
            LogRecord::Annotation(row)
        };
        self.commit(rec)?;
        Ok(id)
    }

    /// Records a review decision on a pending annotation.
    ///
    /// Repeating the decision that was already taken returns the current
    /// annotation without writing anything; any other decision on a decided
    /// annotation is [`Error::AlreadyDecided`].
    pub fn decide(&mut self, id: AnnotationId, decision: Decision) -> Result<Annotation> {
        self.decide_as(id, decision, None)
    }

    /// Like [`decide`](Self::decide), optionally relabelling the class on accept/adjust.
    pub fn decide_as(&mut self, id: AnnotationId, decision: Decision, class: Option<ClassId>) -> Result<Annotation> {
        let a = self.annotations.get(&id).ok_or(Error::UnknownId(id))?;
        let col = &self.columns[&a.column];
        if let Decision::Adjust(b) = decision {
            b.check_within(col.width, col.height)?;
        }
        let new_class = match decision {
            Decision::Reject => a.class,
            _ => class.unwrap_or(a.class),
        };
        let (status, new_box) = match decision {
            Decision::Accept => (Status::Accepted, None),
            Decision::Reject => (Status::Rejected, None),
            Decision::Adjust(b) => (Status::Adjusted, Some(b)),
        };
        if a.status.is_decided() {
            let same = a.status == status && a.adjusted == new_box && a.class == new_class;
            return if same {
                Ok(a.clone())
            } else {
                Err(Error::AlreadyDecided(id))
            };
        }
        if status.is_positive() {
            let key = (a.column.clone(), new_box.unwrap_or(a.bbox), new_class);
            if self.positive.contains_key(&key) {
                return Err(Error::DuplicateAccepted(a.column.clone()));
            }
        }
        let rec = LogRecord::Decision(DecisionRow {
            id,
            status,
            x: new_box.map(|b| b.x),
            y: new_box.map(|b| b.y),
            w: new_box.map(|b| b.w),
            h: new_box.map(|b| b.h),
            class: new_class,
            timestamp: (self.clock)(),
        });
        self.commit(rec)?;
        Ok(self.annotations[&id].clone())
    }

    /// Appends a cycle phase transition.
    pub fn record_cycle(&mut self, event: CycleEvent) -> Result<()> {
        let rec = LogRecord::Cycle(CycleRow {
            cycle: event.cycle,
            phase: event.phase,
            manifest: event.manifest,
            timestamp: (self.clock)(),
        });
        self.commit(rec)
    }

    /// Annotations matching every supplied filter field, ordered by
    /// (column, y, x, id).
    pub fn query(&self, filter: &AnnotationFilter) -> Vec<&Annotation> {
        let mut out: Vec<&Annotation> = self
            .annotations
            .values()
            .filter(|a| {
                let col = &self.columns[&a.column];
                filter.manuscript.as_ref().is_none_or(|m| &a.column.manuscript == m)
                    && filter.scribe.as_ref().is_none_or(|s| col.scribe() == Some(s))
                    && filter.status.is_none_or(|s| a.status == s)
                    && filter.class.is_none_or(|c| a.class == c)
                    && filter.cycle.is_none_or(|c| a.cycle == c)
                    && filter.origin.is_none_or(|o| a.origin == o)
                    && filter.column.as_ref().is_none_or(|c| &a.column == c)
            })
            .collect();
        out.sort_by(|a, b| {
            let (ba, bb) = (a.effective_box(), b.effective_box());
            (&a.column, ba.y, ba.x, a.id).cmp(&(&b.column, bb.y, bb.x, b.id))
        });
        out
    }

    /// Forces buffered log lines to disk.
    pub fn flush(&mut self) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
        }
        Ok(())
    }

    fn commit(&mut self, rec: LogRecord) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.apply(&rec)?;
        self.log.push(rec);
        Ok(())
    }

    fn apply(&mut self, rec: &LogRecord) -> Result<()> {
        match rec {
            LogRecord::Column(r) => {
                let page = PageRef {
                    manuscript: r.manuscript.clone(),
                    page_number: r.page,
                    side: r.side,
                    scribe: r.scribe.clone(),
                    layout: r.layout,
                    width_px: r.page_width,
                    height_px: r.page_height,
                };
                let id = page.column_id(r.column as usize);
                if self.columns.contains_key(&id) {
                    return Err(Error::ColumnConflict(id));
                }
                self.columns.insert(
                    id.clone(),
                    ColumnInfo {
                        id,
                        page,
                        width: r.width,
                        height: r.height,
                    },
                );
            }
            LogRecord::Annotation(r) | LogRecord::Detection(r) => {
                let column = ColumnId {
                    manuscript: r.manuscript.clone(),
                    page_number: r.page,
                    side: r.side,
                    column_index: r.column,
                };
                if !self.columns.contains_key(&column) {
                    return Err(Error::UnknownColumn(column.to_string()));
                }
                if self.annotations.contains_key(&r.id) {
                    return Err(Error::InvalidAnnotation(format!("duplicate id {}", r.id)));
                }
                let bbox = BBox::new(r.x, r.y, r.w, r.h)?;
                let a = Annotation {
                    id: r.id,
                    column: column.clone(),
                    bbox,
                    class: r.class,
                    origin: r.origin,
                    status: r.status,
                    cycle: r.cycle,
                    adjusted: None,
                    confidence: r.confidence,
                    model_id: r.model_id.clone(),
                };
                if a.status.is_positive() {
                    self.positive.insert((column.clone(), bbox, a.class), a.id);
                }
                self.by_column.entry(column).or_default().push(a.id);
                self.next_id = self.next_id.max(r.id.0 + 1);
                self.annotations.insert(a.id, a);
            }
            LogRecord::Decision(r) => {
                let a = self.annotations.get_mut(&r.id).ok_or(Error::UnknownId(r.id))?;
                if a.status.is_decided() {
                    return Err(Error::AlreadyDecided(r.id));
                }
                a.status = r.status;
                a.class = r.class;
                a.adjusted = match (r.x, r.y, r.w, r.h) {
                    (Some(x), Some(y), Some(w), Some(h)) => Some(BBox::new(x, y, w, h)?),
                    _ => None,
                };
                if a.status == Status::Adjusted && a.adjusted.is_none() {
                    return Err(Error::InvalidAnnotation("adjusted without a box".into()));
                }
                if a.status.is_positive() {
                    self.positive
                        .insert((a.column.clone(), a.effective_box(), a.class), a.id);
                }
            }
            LogRecord::Cycle(r) => self.cycles.push(CycleEvent {
                cycle: r.cycle,
                phase: r.phase,
                manifest: r.manifest.clone(),
            }),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layout;

    fn fixed_clock() -> String {
        "2025-01-01T00:00:00.000Z".into()
    }

    fn page(m: &str, n: u32, scribe: &str) -> PageRef {
        PageRef {
            manuscript: ManuscriptId::new(m).unwrap(),
            page_number: n,
            side: Side::Recto,
            scribe: Some(ScribeId::new(scribe).unwrap()),
            layout: Layout::TwoColumn,
            width_px: 200,
            height_px: 300,
        }
    }

    fn store_with_column() -> (AnnotationStore, ColumnId) {
        let mut store = AnnotationStore::new().with_clock(fixed_clock);
        let p = page("trento", 1, "B");
        let id = p.column_id(0);
        store
            .register_column(ColumnInfo {
                id: id.clone(),
                page: p,
                width: 100,
                height: 200,
            })
            .unwrap();
        (store, id)
    }

    fn tm(col: &ColumnId, x: u32, y: u32) -> AnnotationDraft {
        AnnotationDraft::pending(
            col.clone(),
            BBox::new(x, y, 10, 10).unwrap(),
            ClassId::Target,
            Origin::TemplateMatch,
            0,
        )
    }

    #[test]
    fn put_appends() {
        let (mut store, col) = store_with_column();
        let before = store.log().len();
        let id = store.put_annotation(tm(&col, 5, 5)).unwrap();
        assert_eq!(store.log().len(), before + 1);
        assert_eq!(store.get(id).unwrap().status, Status::Pending);
    }

    #[test]
    fn zero_width_box_is_rejected() {
        let (mut store, col) = store_with_column();
        let mut d = tm(&col, 5, 5);
        d.bbox = BBox {
            x: 5,
            y: 5,
            w: 0,
            h: 10,
        };
        assert!(matches!(store.put_annotation(d), Err(Error::BoxOutOfBounds { .. })));
        let mut d = tm(&col, 95, 5);
        d.bbox.w = 6;
        assert!(matches!(store.put_annotation(d), Err(Error::BoxOutOfBounds { .. })));
    }

    #[test]
    fn non_manual_must_start_pending() {
        let (mut store, col) = store_with_column();
        let mut d = tm(&col, 5, 5);
        d.status = Status::Accepted;
        assert!(matches!(
            store.put_annotation(d.clone()),
            Err(Error::InvalidAnnotation(_))
        ));
        d.origin = Origin::Manual;
        assert!(store.put_annotation(d).is_ok());
    }

    #[test]
    fn duplicate_accepted_is_rejected() {
        let (mut store, col) = store_with_column();
        let mut d = tm(&col, 5, 5);
        d.origin = Origin::Manual;
        d.status = Status::Accepted;
        store.put_annotation(d.clone()).unwrap();
        assert!(matches!(store.put_annotation(d), Err(Error::DuplicateAccepted(_))));

        let pending = store.put_annotation(tm(&col, 5, 5)).unwrap();
        assert!(matches!(
            store.decide(pending, Decision::Accept),
            Err(Error::DuplicateAccepted(_))
        ));
    }

    #[test]
    fn decide_is_idempotent() {
        let (mut store, col) = store_with_column();
        let id = store.put_annotation(tm(&col, 5, 5)).unwrap();
        let a = store.decide(id, Decision::Accept).unwrap();
        assert_eq!(a.status, Status::Accepted);
        let n = store.log().len();
        let b = store.decide(id, Decision::Accept).unwrap();
        assert_eq!(a, b);
        assert_eq!(store.log().len(), n);
        assert!(matches!(
            store.decide(id, Decision::Reject),
            Err(Error::AlreadyDecided(_))
        ));
    }

    #[test]
    fn adjust_validates_and_stores_box() {
        let (mut store, col) = store_with_column();
        let id = store.put_annotation(tm(&col, 5, 5)).unwrap();
        let oob = BBox::new(95, 0, 10, 10).unwrap();
        assert!(matches!(
            store.decide(id, Decision::Adjust(oob)),
            Err(Error::BoxOutOfBounds { .. })
        ));
        let nb = BBox::new(4, 4, 12, 12).unwrap();
        let a = store.decide(id, Decision::Adjust(nb)).unwrap();
        assert_eq!(a.status, Status::Adjusted);
        assert_eq!(a.effective_box(), nb);
        assert_eq!(a.bbox, BBox::new(5, 5, 10, 10).unwrap());
    }

    #[test]
    fn unknown_id() {
        let (mut store, _) = store_with_column();
        assert!(matches!(
            store.decide(AnnotationId(42), Decision::Accept),
            Err(Error::UnknownId(_))
        ));
    }

    #[test]
    fn query_filters_and_orders() {
        let mut store = AnnotationStore::new();
        let mut expected_b = 0;
        for (n, scribe) in [(1, "A"), (2, "B"), (3, "C"), (4, "B")] {
            let p = page("avila", n, scribe);
            let id = p.column_id(0);
            store
                .register_column(ColumnInfo {
                    id: id.clone(),
                    page: p,
                    width: 100,
                    height: 200,
                })
                .unwrap();
            for k in 0..n {
                store.put_annotation(tm(&id, 50 - 10 * k, 100 - 20 * k)).unwrap();
                if scribe == "B" {
                    expected_b += 1;
                }
            }
        }
        let b = store.query(&AnnotationFilter {
            scribe: Some(ScribeId::new("B").unwrap()),
            ..Default::default()
        });
        assert_eq!(b.len(), expected_b);
        let all = store.query(&AnnotationFilter::default());
        assert_eq!(all.len(), 10);
        for w in all.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!((&a.column, a.bbox.y, a.bbox.x) <= (&b.column, b.bbox.y, b.bbox.x));
        }
        let rejected = store.query(&AnnotationFilter {
            status: Some(Status::Rejected),
            ..Default::default()
        });
        assert!(rejected.is_empty());
    }

    #[test]
    fn file_backed_store_reopens() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trento.jsonl");
        let snapshot;
        {
            let mut store = AnnotationStore::open(&path).unwrap();
            let p = page("trento", 3, "B");
            let col = p.column_id(1);
            store
                .register_column(ColumnInfo {
                    id: col.clone(),
                    page: p,
                    width: 100,
                    height: 200,
                })
                .unwrap();
            let id = store.put_annotation(tm(&col, 1, 2)).unwrap();
            store
                .decide(id, Decision::Adjust(BBox::new(0, 0, 5, 5).unwrap()))
                .unwrap();
            snapshot = store.snapshot();
        }
        let store = AnnotationStore::open(&path).unwrap();
        assert_eq!(store.snapshot(), snapshot);
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().nth(1).unwrap();
        assert!(first.starts_with(
            r#"{"record_type":"annotation","id":1,"manuscript":"trento","page":3,"side":"recto","column":1,"x":1"#
        ));
    }
}
