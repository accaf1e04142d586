//! Detection scoring, confidence sweeps, per-scribe extraction statistics
//! and scribe attribution.

mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::Scored;
use crate::model::{AnnotationStore, BBox, ClassId, DetectionRecord, ManuscriptId, Origin, PageRef, ScribeId};

pub use report::{render_sweep_svg, write_stats_csv, write_sweep_csv};

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_score(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

/// Greedy matching of predictions to ground-truth boxes.
///
/// Predictions are taken by descending confidence (ties by top-left
/// position, then input order); each claims the unmatched ground truth
/// with the highest IoU, if that IoU reaches `iou_min`.
pub fn match_detections<T: Scored>(preds: &[T], gts: &[BBox], iou_min: f64) -> Confusion {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (ba, bb) = (preds[a].bbox(), preds[b].bbox());
        preds[b]
            .score()
            .total_cmp(&preds[a].score())
            .then((ba.y, ba.x).cmp(&(bb.y, bb.x)))
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; gts.len()];
    let mut c = Confusion::default();
    for i in order {
        let b = preds[i].bbox();
        let best = gts
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[*j])
            .map(|(j, g)| (j, g.iou(&b)))
            .fold(None, |acc: Option<(usize, f64)>, (j, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((j, v)),
            });
        match best {
            Some((j, v)) if v >= iou_min => {
                taken[j] = true;
                c.tp += 1;
            }
            _ => c.fp += 1,
        }
    }
    c.fn_ = taken.iter().filter(|t| !**t).count() as u64;
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub confusion: Confusion,
    pub accuracy: f64,
    pub f_score: f64,
}

impl SweepPoint {
    pub fn new(tau: f64, confusion: Confusion) -> Self {
        Self {
            tau,
            confusion,
            accuracy: confusion.accuracy(),
            f_score: confusion.f_score(),
        }
    }
}

/// Confusion matrices of "confidence >= tau" against the truth flags, one per tau.
pub fn sweep(samples: &[(f64, bool)], taus: &[f64]) -> Vec<SweepPoint> {
    let mut pos: Vec<f64> = samples.iter().filter(|s| s.1).map(|s| s.0).collect();
    let mut neg: Vec<f64> = samples.iter().filter(|s| !s.1).map(|s| s.0).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let at_least = |v: &[f64], tau: f64| (v.len() - v.partition_point(|&c| c < tau)) as u64;
    taus.iter()
        .map(|&tau| {
            let tp = at_least(&pos, tau);
            let fp = at_least(&neg, tau);
            SweepPoint::new(
                tau,
                Confusion {
                    tp,
                    fp,
                    fn_: pos.len() as u64 - tp,
                    tn: neg.len() as u64 - fp,
                },
            )
        })
        .collect()
}

/// Parses an inclusive `start:end:step` grid, e.g. `0.70:0.85:0.01`.
/// Values are rounded to six decimals.
pub fn parse_taus(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("bad threshold grid {spec:?}, expected start:end:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(0.0..=1.0).contains(&start) || !(start..=1.0).contains(&end) || step.is_nan() || step <= 0.0 {
        return Err(bad());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| ((start + k as f64 * step) * 1e6).round() / 1e6)
        .collect())
}

/// Extraction statistics for one scribe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScribeStats {
    pub scribe: ScribeId,
    pub occurrences: u64,
    pub columns: u64,
    pub occ_per_column: f64,
    pub mean_confidence: f64,
}

/// Summary across scribes: counts are summed, ratios are averaged over
/// the scribe rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTotal {
    pub occurrences: u64,
    pub columns: u64,
    pub occ_per_column: f64,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<ScribeStats>,
    pub total: StatsTotal,
}

/// Per-scribe detection counts over the registered columns of a manuscript.
///
/// Every column of the manuscript must carry a scribe label. Detections on
/// other manuscripts are ignored.
pub fn scribe_stats(
    store: &AnnotationStore,
    manuscript: &ManuscriptId,
    detections: &[DetectionRecord],
) -> Result<StatsTable> {
    #[derive(Default)]
    struct Acc {
        columns: u64,
        occurrences: u64,
        conf_sum: f64,
    }
    let mut acc: BTreeMap<ScribeId, Acc> = BTreeMap::new();
    for col in store.columns_of(manuscript) {
        let scribe = col.scribe().ok_or_else(|| Error::UnlabeledColumn(col.id.clone()))?;
        acc.entry(scribe.clone()).or_default().columns += 1;
    }
    for d in detections.iter().filter(|d| &d.column.manuscript == manuscript) {
        let col = store
            .column(&d.column)
            .ok_or_else(|| Error::UnknownColumn(d.column.to_string()))?;
        let scribe = col.scribe().ok_or_else(|| Error::UnlabeledColumn(col.id.clone()))?;
        let a = acc.get_mut(scribe).expect("scribe registered with its columns");
        a.occurrences += 1;
        a.conf_sum += d.confidence;
    }
    let rows: Vec<ScribeStats> = acc
        .into_iter()
        .map(|(scribe, a)| ScribeStats {
            scribe,
            occurrences: a.occurrences,
            columns: a.columns,
            occ_per_column: ratio(a.occurrences, a.columns),
            mean_confidence: if a.occurrences == 0 {
                0.0
            } else {
                a.conf_sum / a.occurrences as f64
            },
        })
        .collect();
    let n = rows.len().max(1) as f64;
    let total = StatsTotal {
        occurrences: rows.iter().map(|r| r.occurrences).sum(),
        columns: rows.iter().map(|r| r.columns).sum(),
        occ_per_column: rows.iter().map(|r| r.occ_per_column).sum::<f64>() / n,
        mean_confidence: rows.iter().map(|r| r.mean_confidence).sum::<f64>() / n,
    };
    Ok(StatsTable { rows, total })
}

/// Detector annotations in the store, as detection records.
pub fn stored_detections(store: &AnnotationStore) -> Vec<DetectionRecord> {
    store
        .annotations()
        .filter(|a| a.origin == Origin::Detector)
        .map(|a| DetectionRecord {
            column: a.column.clone(),
            bbox: a.bbox,
            class: a.class,
            confidence: a.confidence.unwrap_or(0.0),
            model_id: a.model_id.clone().unwrap_or_default(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    AnyAbove,
    FractionAbove,
    MajorityVote,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionRule {
    pub kind: RuleKind,
    pub tau: f64,
    /// Required share of detections at or above `tau`, for `fraction_above`.
    pub fraction: f64,
}

impl AttributionRule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidParameter(format!("tau {} not in [0, 1]", self.tau)));
        }
        if self.kind == RuleKind::FractionAbove && !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fraction {} not in (0, 1]",
                self.fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribution {
    TargetScribe,
    Other,
    Abstain,
}

/// Decides whether a column's or page's detections point at the target scribe.
///
/// `majority_vote` counts only detections with confidence at least `tau`
/// and breaks ties toward `other`.
pub fn attribute(detections: &[DetectionRecord], rule: &AttributionRule) -> Result<Attribution> {
    rule.validate()?;
    if detections.is_empty() {
        return Ok(Attribution::Abstain);
    }
    let above = detections.iter().filter(|d| d.confidence >= rule.tau);
    let target = match rule.kind {
        RuleKind::AnyAbove => above.count() > 0,
        RuleKind::FractionAbove => above.count() as f64 / detections.len() as f64 >= rule.fraction,
        RuleKind::MajorityVote => {
            let (ones, zeros) = above.fold((0usize, 0usize), |(o, z), d| match d.class {
                ClassId::Target => (o + 1, z),
                ClassId::Other => (o, z + 1),
            });
            ones > zeros
        }
    };
    Ok(if target {
        Attribution::TargetScribe
    } else {
        Attribution::Other
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageAttribution {
    pub page: String,
    pub scribe: Option<ScribeId>,
    pub detections: usize,
    pub decision: Attribution,
}

/// Attributes every registered page of a manuscript from its detections.
pub fn attribute_pages(
    store: &AnnotationStore,
    manuscript: &ManuscriptId,
    detections: &[DetectionRecord],
    rule: &AttributionRule,
) -> Result<Vec<PageAttribution>> {
    let mut pages: BTreeMap<(u32, u8), (PageRef, Vec<DetectionRecord>)> = BTreeMap::new();
    for col in store.columns_of(manuscript) {
        pages
            .entry((col.id.page_number, col.id.side as u8))
            .or_insert_with(|| (col.page.clone(), Vec::new()));
    }
    for d in detections.iter().filter(|d| &d.column.manuscript == manuscript) {
        let (_, v) = pages
            .get_mut(&(d.column.page_number, d.column.side as u8))
            .ok_or_else(|| Error::UnknownColumn(d.column.to_string()))?;
        v.push(d.clone());
    }
    pages
        .into_values()
        .map(|(page, dets)| {
            Ok(PageAttribution {
                page: page.label(),
                scribe: page.scribe.clone(),
                detections: dets.len(),
                decision: attribute(&dets, rule)?,
            })
        })
        .collect()
}

/// One sample per stored detection: its confidence, and whether its page
/// was written by `target`.
pub fn corpus_samples(store: &AnnotationStore, target: &ScribeId) -> Result<Vec<(f64, bool)>> {
    store
        .annotations()
        .filter(|a| a.origin == Origin::Detector)
        .map(|a| {
            let col = store
                .column(&a.column)
                .ok_or_else(|| Error::UnknownColumn(a.column.to_string()))?;
            let scribe = col.scribe().ok_or_else(|| Error::UnlabeledColumn(col.id.clone()))?;
            Ok((a.confidence.unwrap_or(0.0), scribe == target))
        })
        .collect()
}

/// The sweep point at one threshold over every stored detection.
pub fn classify_corpus(store: &AnnotationStore, target: &ScribeId, tau: f64) -> Result<SweepPoint> {
    let samples = corpus_samples(store, target)?;
    Ok(sweep(&samples, &[tau])[0])
}
