//! Answers a question by scoring every filled candidate with the binary
//! head and picking the option with the highest correct-probability, with
//! optional threshold abstention.
//!
//! Per-candidate probabilities are deliberately not normalized across
//! options: the abstention threshold applies to the raw correct-probability
//! of the selected option.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qdata::{fill, split_option, QdataConfig, ScQuestion};
use crate::seq2seq::Model;
use crate::tensorcore::{Graph, Scalar};
use crate::tokenizer::{encode, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub per_option_p_right: Vec<f64>,
    /// Smallest argmax of `per_option_p_right`.
    pub chosen_index: usize,
    pub confidence: f64,
    /// Options that could not be filled/scored; they carry probability 0.
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    Answered(Prediction),
    Abstained(Prediction, f64),
}

impl Decision {
    pub fn prediction(&self) -> &Prediction {
        match self {
            Decision::Answered(p) => p,
            Decision::Abstained(p, _) => p,
        }
    }

    pub fn is_answered(&self) -> bool {
        matches!(self, Decision::Answered(_))
    }
}

/// Correct-probability of option `i` on the filled sentence, or 0 with a
/// diagnostic if the option cannot be filled.
pub fn score_option<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    q: &ScQuestion,
    i: usize,
    qcfg: &QdataConfig,
) -> Result<(f64, Option<String>)> {
    let sentence = split_option(&q.options[i], qcfg)
        .and_then(|segs| fill(&q.stem, &segs, qcfg));
    let sentence = match sentence {
        Ok(s) => s,
        Err(e) => {
            return Ok((
                0.0,
                Some(format!("option {i} ({:?}) unfillable: {e}", q.options[i])),
            ))
        }
    };
    let ids = encode(&sentence, vocab).ids;
    let mut g = Graph::new();
    let bound = model.bind(&mut g, false)?;
    let logits = match model.forward_classify(&mut g, &bound, &ids) {
        Ok(l) => l,
        Err(e) => {
            return Ok((0.0, Some(format!("option {i} unscorable: {e}"))));
        }
    };
    let (_, p_right) = model.class_probs(&mut g, logits)?;
    Ok((p_right.to_f64c(), None))
}

/// Scores all options and selects the argmax (lowest index on ties).
pub fn solve<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    q: &ScQuestion,
    qcfg: &QdataConfig,
) -> Result<Prediction> {
    if q.num_options() < 2 {
        return Err(Error::Invalid(format!(
            "question {} has fewer than 2 options",
            q.id
        )));
    }
    let mut per_option = Vec::with_capacity(q.num_options());
    let mut diagnostics = Vec::new();
    let mut any_scored = false;
    for i in 0..q.num_options() {
        let (p, diag) = score_option(model, vocab, q, i, qcfg)?;
        if let Some(d) = diag {
            diagnostics.push(d);
        } else {
            any_scored = true;
        }
        per_option.push(p);
    }
    if !any_scored {
        return Err(Error::Invalid(format!(
            "question {}: no option could be scored",
            q.id
        )));
    }
    let (chosen_index, confidence) = argmax(&per_option);
    Ok(Prediction {
        question_id: q.id.clone(),
        per_option_p_right: per_option,
        chosen_index,
        confidence,
        diagnostics,
    })
}

fn argmax(probs: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    (best, probs[best])
}

/// Answers iff the selected option's confidence reaches `tau`.
pub fn solve_with_threshold<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    q: &ScQuestion,
    tau: f64,
    qcfg: &QdataConfig,
) -> Result<Decision> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Invalid(format!("threshold {tau} outside [0,1]")));
    }
    let prediction = solve(model, vocab, q, qcfg)?;
    Ok(decide(prediction, tau))
}

/// Threshold rule applied to an existing prediction.
pub fn decide(prediction: Prediction, tau: f64) -> Decision {
    if prediction.confidence >= tau {
        Decision::Answered(prediction)
    } else {
        Decision::Abstained(prediction, tau)
    }
}

/// One line-delimited output record per solved question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub id: String,
    pub chosen: usize,
    pub per_option_p_right: Vec<f64>,
    pub confidence: f64,
    pub decision: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub diagnostics: Vec<String>,
}

impl SolveRecord {
    pub fn from_decision(d: &Decision, answer_index: Option<usize>) -> SolveRecord {
        let p = d.prediction();
        SolveRecord {
            id: p.question_id.clone(),
            chosen: p.chosen_index,
            per_option_p_right: p.per_option_p_right.clone(),
            confidence: p.confidence,
            decision: if d.is_answered() { "answered" } else { "abstained" }.into(),
            correct: answer_index.map(|a| a == p.chosen_index),
            diagnostics: p.diagnostics.clone(),
        }
    }
}
