//! Category-stratified accuracy and precision/recall threshold sweeps.
//!
//! Precision/recall follow the selective-prediction definitions: recall is
//! the fraction of questions whose confidence clears the threshold
//! ("solvable"), precision is the correct fraction among those.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qdata::{Category, QdataConfig, ScQuestion};
use crate::seq2seq::Model;
use crate::solver::{solve, Prediction};
use crate::tensorcore::Scalar;
use crate::tokenizer::Vocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub count: usize,
    pub correct: usize,
}

impl CategoryStats {
    pub fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_category: BTreeMap<Category, CategoryStats>,
    pub total: usize,
    pub correct: usize,
    pub skipped: usize,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::from("category\tn\taccuracy\n");
        for (cat, stats) in &self.per_category {
            out.push_str(&format!(
                "{cat}\t{}\t{:.4}\n",
                stats.count,
                stats.accuracy()
            ));
        }
        out.push_str(&format!("overall\t{}\t{:.4}\n", self.total, self.accuracy()));
        if self.skipped > 0 {
            out.push_str(&format!("skipped\t{}\t-\n", self.skipped));
        }
        out
    }

    /// Machine record: one "split\tcategory\tn\taccuracy" line per row.
    pub fn to_machine(&self, split: &str) -> String {
        let mut out = String::new();
        for (cat, stats) in &self.per_category {
            out.push_str(&format!(
                "{split}\t{cat}\t{}\t{:.6}\n",
                stats.count,
                stats.accuracy()
            ));
        }
        out.push_str(&format!(
            "{split}\toverall\t{}\t{:.6}\n",
            self.total,
            self.accuracy()
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    /// Absent when no question clears the threshold.
    pub precision: Option<f64>,
    pub recall: f64,
    pub solvable: usize,
    pub solvable_and_correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// Machine record: "tau\tprecision\trecall\tsolvable\tcorrect" lines.
    pub fn to_machine(&self) -> String {
        let mut out = String::from("tau\tprecision\trecall\tsolvable\tcorrect\n");
        for p in &self.points {
            let prec = p
                .precision
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:.4}\t{prec}\t{:.6}\t{}\t{}\n",
                p.threshold, p.recall, p.solvable, p.solvable_and_correct
            ));
        }
        out
    }
}

/// A scored question: its prediction plus the gold answer, cached so a
/// threshold sweep is pure counting.
#[derive(Debug, Clone)]
pub struct ScoredQuestion {
    pub prediction: Prediction,
    pub answer_index: usize,
    pub category: Category,
}

impl ScoredQuestion {
    pub fn is_correct(&self) -> bool {
        self.prediction.chosen_index == self.answer_index
    }
}

/// Runs the solver over every keyed question once. Unkeyed or unsolvable
/// questions are skipped and counted.
pub fn collect_predictions<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    questions: &[ScQuestion],
    qcfg: &QdataConfig,
) -> Result<(Vec<ScoredQuestion>, usize)> {
    if questions.is_empty() {
        return Err(Error::Invalid("empty evaluation dataset".into()));
    }
    let mut scored = Vec::with_capacity(questions.len());
    let mut skipped = 0;
    for q in questions {
        let Some(answer) = q.answer_index else {
            skipped += 1;
            continue;
        };
        match solve(model, vocab, q, qcfg) {
            Ok(prediction) => scored.push(ScoredQuestion {
                prediction,
                answer_index: answer,
                category: q.category,
            }),
            Err(_) => skipped += 1,
        }
    }
    if scored.is_empty() {
        return Err(Error::Invalid("no scorable question in dataset".into()));
    }
    Ok((scored, skipped))
}

pub fn report_from_scored(scored: &[ScoredQuestion], skipped: usize) -> EvalReport {
    let mut per_category: BTreeMap<Category, CategoryStats> = BTreeMap::new();
    let mut correct = 0;
    for s in scored {
        let stats = per_category
            .entry(s.category)
            .or_insert(CategoryStats { count: 0, correct: 0 });
        stats.count += 1;
        if s.is_correct() {
            stats.correct += 1;
            correct += 1;
        }
    }
    EvalReport {
        per_category,
        total: scored.len(),
        correct,
        skipped,
    }
}

/// Overall and per-category accuracy on a keyed dataset.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    questions: &[ScQuestion],
    qcfg: &QdataConfig,
) -> Result<EvalReport> {
    let (scored, skipped) = collect_predictions(model, vocab, questions, qcfg)?;
    Ok(report_from_scored(&scored, skipped))
}

/// One PR point per threshold from cached predictions.
pub fn sweep_from_scored(scored: &[ScoredQuestion], thresholds: &[f64]) -> Result<PrCurve> {
    if thresholds.is_empty() {
        return Err(Error::Invalid("empty threshold list".into()));
    }
    if let Some(bad) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Invalid(format!("threshold {bad} outside [0,1]")));
    }
    let total = scored.len();
    let mut points = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let solvable_set: Vec<&ScoredQuestion> = scored
            .iter()
            .filter(|s| s.prediction.confidence >= tau)
            .collect();
        let solvable = solvable_set.len();
        let solvable_and_correct = solvable_set.iter().filter(|s| s.is_correct()).count();
        let precision = if solvable == 0 {
            None
        } else {
            Some(solvable_and_correct as f64 / solvable as f64)
        };
        points.push(PrPoint {
            threshold: tau,
            precision,
            recall: solvable as f64 / total as f64,
            solvable,
            solvable_and_correct,
            total,
        });
    }
    Ok(PrCurve { points })
}

/// Scores the dataset once, then sweeps the thresholds.
pub fn pr_sweep<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    questions: &[ScQuestion],
    thresholds: &[f64],
    qcfg: &QdataConfig,
) -> Result<PrCurve> {
    let (scored, _) = collect_predictions(model, vocab, questions, qcfg)?;
    sweep_from_scored(&scored, thresholds)
}

/// Default grid: 0.00 to 1.00 inclusive at the given step.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Invalid(format!("grid step {step} outside (0,1]")));
    }
    let n = (1.0 / step).round() as usize;
    Ok((0..=n).map(|i| (i as f64 * step).min(1.0)).collect())
}
