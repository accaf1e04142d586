use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotationStore, ColumnId, ManuscriptId, ScribeId, Side};

/// Column roles for one annotation cycle.
///
/// Validation columns are drawn from the training pages, so the labeled
/// training set of a cycle is `train_columns ∪ val_columns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub cycle: u32,
    pub manuscript: ManuscriptId,
    pub train_columns: Vec<ColumnId>,
    pub val_columns: Vec<ColumnId>,
    pub inference_columns: Vec<ColumnId>,
    /// Index = class id.
    pub class_names: Vec<String>,
}

impl DatasetManifest {
    /// Every labeled column: training plus validation, sorted.
    pub fn training_set(&self) -> Vec<ColumnId> {
        let mut all: Vec<ColumnId> = self.train_columns.iter().chain(&self.val_columns).cloned().collect();
        all.sort();
        all
    }

    pub fn is_inference(&self, column: &ColumnId) -> bool {
        self.inference_columns.binary_search(column).is_ok()
    }

    /// Errors if any column holds two roles.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in self
            .train_columns
            .iter()
            .chain(&self.val_columns)
            .chain(&self.inference_columns)
        {
            if !seen.insert(c) {
                return Err(Error::Overlap(c.clone()));
            }
        }
        Ok(())
    }
}

/// A slice of one manuscript's pages in page-number order: optionally one
/// side only, skipping `skip` pages and taking at most `take`.
///
/// Text form: `recto:0:60`, `verso`, `recto:210:` (everything after 210),
/// `any:0:10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRange {
    pub side: Option<Side>,
    pub skip: usize,
    pub take: Option<usize>,
}

impl PageRange {
    pub fn side(side: Side, skip: usize, take: Option<usize>) -> Self {
        Self {
            side: Some(side),
            skip,
            take,
        }
    }
}

impl FromStr for PageRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("bad page range {s:?}"));
        let mut parts = s.split(':');
        let side = match parts.next() {
            Some("recto") => Some(Side::Recto),
            Some("verso") => Some(Side::Verso),
            Some("any") => None,
            _ => return Err(bad()),
        };
        let skip = match parts.next() {
            None | Some("") => 0,
            Some(v) => v.parse().map_err(|_| bad())?,
        };
        let take = match parts.next() {
            None | Some("") => None,
            Some(v) => Some(v.parse().map_err(|_| bad())?),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Self { side, skip, take })
    }
}

/// Which pages feed which role in a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSpec {
    pub cycle: u32,
    pub manuscript: ManuscriptId,
    /// Restrict to pages labeled with this scribe.
    pub scribe: Option<ScribeId>,
    pub train: Vec<PageRange>,
    pub inference: Vec<PageRange>,
    pub val_fraction: f64,
}

pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

impl CycleSpec {
    /// The schedule used on the Trento bible: 60 recto pages to train and
    /// the next 150 to annotate, then 210 recto pages to train and the rest
    /// of the manuscript to annotate. Cycles after the second repeat the
    /// second cycle's roles.
    pub fn standard(cycle: u32, manuscript: ManuscriptId, scribe: Option<ScribeId>) -> Self {
        let (train, inference) = match cycle {
            0 | 1 => (
                vec![PageRange::side(Side::Recto, 0, Some(60))],
                vec![PageRange::side(Side::Recto, 60, Some(150))],
            ),
            _ => (
                vec![PageRange::side(Side::Recto, 0, Some(210))],
                vec![
                    PageRange::side(Side::Recto, 210, None),
                    PageRange::side(Side::Verso, 0, None),
                ],
            ),
        };
        Self {
            cycle,
            manuscript,
            scribe,
            train,
            inference,
            val_fraction: DEFAULT_VAL_FRACTION,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Stable validation assignment: FNV-1a of the column id, bucketed per mille.
pub fn is_validation(column: &ColumnId, val_fraction: f64) -> bool {
    let bucket = fnv1a(column.to_string().as_bytes()) % 1000;
    (bucket as f64) < val_fraction * 1000.0
}

/// Resolves a cycle spec against the columns registered in the store.
pub fn build_manifest(store: &AnnotationStore, spec: &CycleSpec) -> Result<DatasetManifest> {
    if !(0.0..1.0).contains(&spec.val_fraction) {
        return Err(Error::InvalidParameter(format!(
            "val fraction {} not in [0, 1)",
            spec.val_fraction
        )));
    }
    // (page, side) -> columns, restricted to the manuscript and scribe
    let mut pages: BTreeMap<(Side, u32), Vec<ColumnId>> = BTreeMap::new();
    for col in store.columns_of(&spec.manuscript) {
        if let Some(s) = &spec.scribe {
            if col.scribe() != Some(s) {
                continue;
            }
        }
        pages
            .entry((col.id.side, col.id.page_number))
            .or_default()
            .push(col.id.clone());
    }
    let select = |ranges: &[PageRange]| -> Vec<ColumnId> {
        let mut out = Vec::new();
        for r in ranges {
            let mut keys: Vec<&(Side, u32)> = pages
                .keys()
                .filter(|(side, _)| r.side.is_none_or(|s| s == *side))
                .collect();
            keys.sort_by_key(|(side, n)| (*n, *side));
            let picked = keys.into_iter().skip(r.skip).take(r.take.unwrap_or(usize::MAX));
            out.extend(picked.flat_map(|k| pages[k].iter().cloned()));
        }
        out.sort();
        out
    };
    let training = select(&spec.train);
    let mut inference = select(&spec.inference);
    inference.dedup();
    if let Some(c) = inference.iter().find(|c| training.binary_search(c).is_ok()) {
        return Err(Error::Overlap(c.clone()));
    }
    let (mut val, mut train): (Vec<ColumnId>, Vec<ColumnId>) =
        training.into_iter().partition(|c| is_validation(c, spec.val_fraction));
    train.dedup();
    val.dedup();
    let manifest = DatasetManifest {
        cycle: spec.cycle,
        manuscript: spec.manuscript.clone(),
        train_columns: train,
        val_columns: val,
        inference_columns: inference,
        class_names: vec!["other".into(), "target".into()],
    };
    manifest.check_disjoint()?;
    Ok(manifest)
}
