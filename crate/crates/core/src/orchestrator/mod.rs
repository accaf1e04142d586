//! Annotation cycles: bootstrap, export, detection intake, review and merge.
//!
//! Cycle state lives in the store log as phase events, so it is rebuilt on
//! every open and survives crashes between steps.

mod server;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{build_manifest, export_dataset, CycleSpec, DatasetManifest, ExportSummary};
use crate::detector::ingest_records;
use crate::error::{Error, Result};
use crate::model::{AnnotationStore, CycleEvent, DetectionRecord, Origin, Status};

pub use server::{router, serve, AppState, JobStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Bootstrapped,
    Exported,
    AwaitingDetections,
    InReview,
    Merged,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Bootstrapped => "bootstrapped",
            Phase::Exported => "exported",
            Phase::AwaitingDetections => "awaiting_detections",
            Phase::InReview => "in_review",
            Phase::Merged => "merged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleState {
    pub cycle: u32,
    pub phase: Phase,
    pub manifest: Option<DatasetManifest>,
    pub pending_count: usize,
}

fn pending_in(store: &AnnotationStore, cycle: u32) -> usize {
    store
        .annotations()
        .filter(|a| a.cycle == cycle && a.status == Status::Pending)
        .count()
}

/// Latest phase of `cycle`, if it has started.
pub fn phase_of(store: &AnnotationStore, cycle: u32) -> Option<Phase> {
    store
        .cycle_events()
        .iter()
        .rev()
        .find(|e| e.cycle == cycle)
        .map(|e| e.phase)
}

/// State of the most recent cycle, rebuilt from the log.
pub fn current_state(store: &AnnotationStore) -> Option<CycleState> {
    let last = store.cycle_events().last()?;
    let manifest = store
        .cycle_events()
        .iter()
        .rev()
        .filter(|e| e.cycle == last.cycle)
        .find_map(|e| e.manifest.clone());
    Some(CycleState {
        cycle: last.cycle,
        phase: last.phase,
        manifest,
        pending_count: pending_in(store, last.cycle),
    })
}

fn require_state(store: &AnnotationStore) -> Result<CycleState> {
    current_state(store).ok_or_else(|| Error::InvalidPhase {
        cycle: 0,
        phase: "none".into(),
    })
}

fn advance(
    store: &mut AnnotationStore,
    cycle: u32,
    phase: Phase,
    manifest: Option<DatasetManifest>,
) -> Result<CycleState> {
    store.record_cycle(CycleEvent { cycle, phase, manifest })?;
    require_state(store)
}

/// Marks template-matching bootstrap as done (cycle 0).
pub fn record_bootstrap(store: &mut AnnotationStore) -> Result<CycleState> {
    match current_state(store) {
        None => advance(store, 0, Phase::Bootstrapped, None),
        Some(s) if s.cycle == 0 && s.phase == Phase::Bootstrapped => Ok(s),
        Some(s) => Err(Error::InvalidPhase {
            cycle: s.cycle,
            phase: s.phase.to_string(),
        }),
    }
}

/// Builds the cycle's manifest and, when `export` names `(columns_dir,
/// out_dir)`, writes the dataset directory.
///
/// Cycle 1 may always start; cycle k > 1 needs cycle k - 1 merged.
pub fn start_cycle(
    store: &mut AnnotationStore,
    spec: &CycleSpec,
    export: Option<(&Path, &Path)>,
) -> Result<(CycleState, Option<ExportSummary>)> {
    let k = spec.cycle;
    if k == 0 {
        return Err(Error::InvalidParameter(
            "cycle 0 is the bootstrap; start cycles from 1".into(),
        ));
    }
    if k > 1 && phase_of(store, k - 1) != Some(Phase::Merged) {
        return Err(Error::PreviousCycleOpen(k - 1));
    }
    if let Some(s) = current_state(store) {
        let fresh = s.cycle < k || (s.cycle == k && s.phase == Phase::Exported);
        if !fresh {
            return Err(Error::InvalidPhase {
                cycle: s.cycle,
                phase: s.phase.to_string(),
            });
        }
    }
    let manifest = build_manifest(store, spec)?;
    let summary = match export {
        Some((columns_dir, out)) => Some(export_dataset(store, &manifest, columns_dir, out)?),
        None => None,
    };
    let state = advance(store, k, Phase::Exported, Some(manifest))?;
    Ok((state, summary))
}

/// Notes that the dataset was handed to the trainer.
pub fn await_detections(store: &mut AnnotationStore) -> Result<CycleState> {
    let s = require_state(store)?;
    match s.phase {
        Phase::Exported => advance(store, s.cycle, Phase::AwaitingDetections, None),
        Phase::AwaitingDetections => Ok(s),
        p => Err(Error::InvalidPhase {
            cycle: s.cycle,
            phase: p.to_string(),
        }),
    }
}

/// Ingests the open cycle's detections as pending review items.
pub fn submit_detections(store: &mut AnnotationStore, records: &[DetectionRecord]) -> Result<CycleState> {
    let s = require_state(store)?;
    if !matches!(s.phase, Phase::Exported | Phase::AwaitingDetections) {
        return Err(Error::InvalidPhase {
            cycle: s.cycle,
            phase: s.phase.to_string(),
        });
    }
    let manifest = s.manifest.as_ref().expect("exported cycles carry a manifest");
    if let Some(r) = records.iter().find(|r| !manifest.is_inference(&r.column)) {
        return Err(Error::ColumnNotInInferenceSet(r.column.clone()));
    }
    ingest_records(store, records, s.cycle)?;
    advance(store, s.cycle, Phase::InReview, None)
}

/// Closes the open cycle once every detection is decided. Accepted and
/// adjusted detections become training labels from the next cycle on.
/// Merging a merged cycle changes nothing.
pub fn merge_cycle(store: &mut AnnotationStore) -> Result<CycleState> {
    let s = require_state(store)?;
    match s.phase {
        Phase::Merged => Ok(s),
        Phase::InReview if s.pending_count > 0 => Err(Error::PendingReviewsRemain(s.pending_count)),
        Phase::InReview => advance(store, s.cycle, Phase::Merged, None),
        p => Err(Error::InvalidPhase {
            cycle: s.cycle,
            phase: p.to_string(),
        }),
    }
}

/// Number of pending annotations of a given origin.
pub fn pending_by_origin(store: &AnnotationStore, origin: Origin) -> usize {
    store
        .annotations()
        .filter(|a| a.origin == origin && a.status == Status::Pending)
        .count()
}
