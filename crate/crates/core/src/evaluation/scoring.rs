use std::path::Path;

use serde::Serialize;

use crate::dataset_io::GroundTruth;
use crate::error::{Error, Result};
use crate::sequence::MatchDecision;

/// Confusion counts for one acceptance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Score {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

impl Score {
    /// 1.0 when nothing was accepted.
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    /// 1.0 when no query had a true match.
    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    pub fn accepted(&self) -> usize {
        self.true_positives + self.false_positives
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Ground-truth facts about one decision.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Judged {
    quality: f64,
    correct: bool,
    has_match: bool,
}

fn judge(decisions: &[MatchDecision], gt: &GroundTruth) -> Result<Vec<Judged>> {
    decisions
        .iter()
        .map(|d| {
            if !gt.contains_query(d.query_id) {
                return Err(Error::GroundTruth(format!(
                    "no ground truth for query frame {}",
                    d.query_id
                )));
            }
            Ok(Judged {
                quality: d.quality,
                correct: gt.is_match(d.query_id, d.ref_id)?,
                has_match: gt.has_true_match(d.query_id)?,
            })
        })
        .collect()
}

/// Scores decisions, accepting those with averaged quality at or below
/// `accept_threshold` (the stored accepted flag is ignored).
pub fn score_decisions(
    decisions: &[MatchDecision],
    gt: &GroundTruth,
    accept_threshold: f64,
) -> Result<Score> {
    let mut s = Score::default();
    for j in judge(decisions, gt)? {
        match (j.quality <= accept_threshold, j.correct, j.has_match) {
            (true, true, _) => s.true_positives += 1,
            (true, false, _) => s.false_positives += 1,
            (false, _, true) => s.false_negatives += 1,
            (false, _, false) => s.true_negatives += 1,
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

impl PrPoint {
    pub fn f1(&self) -> f64 {
        f1(self.precision, self.recall)
    }
}

/// Precision/recall at every distinct averaged-quality value, in increasing
/// threshold order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrSummary {
    pub max_f1: f64,
    pub max_f1_threshold: f64,
    pub recall_at_full_precision: f64,
    pub points: usize,
}

impl PrCurve {
    /// Point with the highest F1; the lowest threshold wins ties.
    pub fn best_f1(&self) -> Option<PrPoint> {
        self.points
            .iter()
            .copied()
            .fold(None, |best: Option<PrPoint>, p| match best {
                Some(b) if b.f1() >= p.f1() => Some(b),
                _ => Some(p),
            })
    }

    pub fn max_f1(&self) -> f64 {
        self.best_f1().map_or(0.0, |p| p.f1())
    }

    /// Largest recall at any threshold with no false positives; 0 if none.
    pub fn recall_at_full_precision(&self) -> f64 {
        self.points
            .iter()
            .filter(|p| p.precision == 1.0)
            .map(|p| p.recall)
            .fold(0.0, f64::max)
    }

    pub fn summary(&self) -> PrSummary {
        let best = self.best_f1();
        PrSummary {
            max_f1: best.map_or(0.0, |p| p.f1()),
            max_f1_threshold: best.map_or(f64::NAN, |p| p.threshold),
            recall_at_full_precision: self.recall_at_full_precision(),
            points: self.points.len(),
        }
    }

    /// `threshold,precision,recall` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["threshold", "precision", "recall"])?;
        for p in &self.points {
            w.write_record([
                p.threshold.to_string(),
                p.precision.to_string(),
                p.recall.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sweeps the acceptance threshold over every distinct averaged-quality value.
pub fn sweep_pr(decisions: &[MatchDecision], gt: &GroundTruth) -> Result<PrCurve> {
    if decisions.is_empty() {
        return Err(Error::InvalidInput("no decisions to sweep".into()));
    }
    let mut judged = judge(decisions, gt)?;
    if let Some(j) = judged.iter().find(|j| j.quality.is_nan()) {
        return Err(Error::NonFinite(format!("averaged quality {}", j.quality)));
    }
    judged.sort_by(|a, b| a.quality.total_cmp(&b.quality));
    let with_match = judged.iter().filter(|j| j.has_match).count();

    let (mut tp, mut fp, mut accepted_with_match) = (0usize, 0usize, 0usize);
    let mut points = Vec::new();
    let mut i = 0;
    while i < judged.len() {
        let threshold = judged[i].quality;
        while i < judged.len() && judged[i].quality == threshold {
            let j = judged[i];
            if j.correct {
                tp += 1;
            } else {
                fp += 1;
            }
            if j.has_match {
                accepted_with_match += 1;
            }
            i += 1;
        }
        let fn_ = with_match - accepted_with_match;
        points.push(PrPoint {
            threshold,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
        });
    }
    Ok(PrCurve { points })
}
