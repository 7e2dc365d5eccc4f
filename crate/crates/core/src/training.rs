//! Denoising pretraining and binary fine-tuning loops, plus labeled
//! candidate dataset construction.
//!
//! Pretraining masks individual non-special tokens (MASK substitution, never
//! BOS/EOS) and reconstructs the originals; the loss covers corrupted
//! positions only. Fine-tuning minimizes binary cross-entropy of the
//! classification head over filled candidates, one positive and m-1
//! negatives per keyed question.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qdata::{expand, QdataConfig, ScQuestion};
use crate::seq2seq::Model;
use crate::tensorcore::{Adam, AdamConfig, Graph, Scalar, TensorId};
use crate::tokenizer::{encode, Vocab, NUM_SPECIALS};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps across all epochs, if set.
    pub max_steps: Option<u64>,
    pub mask_rate: f64,
    pub seed: u64,
    /// Optional positive-class loss weight (e.g. m-1 to balance the
    /// 1-vs-(m-1) candidate ratio). None = unweighted.
    pub positive_class_weight: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            epochs: 1,
            max_steps: None,
            mask_rate: 0.15,
            seed: 0,
            positive_class_weight: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::Config(format!(
                "mask_rate must be in (0,1), got {}",
                self.mask_rate
            )));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainExample {
    pub corrupted_ids: Vec<usize>,
    pub original_ids: Vec<usize>,
    pub corrupted_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinetuneExample {
    pub question_id: String,
    pub candidate_ids: Vec<usize>,
    pub label: bool,
}

/// Independently masks each non-special position with probability
/// `mask_rate`; forces at least one mask. BOS/EOS and other specials are
/// never corrupted.
pub fn corrupt(
    ids: &[usize],
    mask_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PretrainExample> {
    let maskable: Vec<usize> = ids
        .iter()
        .enumerate()
        .filter(|(_, &id)| id >= NUM_SPECIALS)
        .map(|(i, _)| i)
        .collect();
    if maskable.is_empty() {
        return Err(Error::Invalid(
            "corrupt: sequence has no maskable position".into(),
        ));
    }
    let mut corrupted = ids.to_vec();
    let mut positions = Vec::new();
    for &i in &maskable {
        if rng.gen_range(0.0..1.0) < mask_rate {
            corrupted[i] = crate::tokenizer::MASK;
            positions.push(i);
        }
    }
    if positions.is_empty() {
        let i = maskable[rng.gen_range(0..maskable.len())];
        corrupted[i] = crate::tokenizer::MASK;
        positions.push(i);
    }
    Ok(PretrainExample {
        corrupted_ids: corrupted,
        original_ids: ids.to_vec(),
        corrupted_positions: positions,
    })
}

fn mean_of_scalars<T: Scalar>(
    g: &mut Graph<T>,
    losses: &[(TensorId, f64)],
) -> Result<TensorId> {
    let total_weight: f64 = losses.iter().map(|(_, w)| w).sum();
    let mut acc: Option<TensorId> = None;
    for &(loss, w) in losses {
        let weighted = if w == 1.0 {
            loss
        } else {
            g.scale(loss, T::from_f64c(w))?
        };
        acc = Some(match acc {
            Some(a) => g.add(a, weighted)?,
            None => weighted,
        });
    }
    let acc = acc.ok_or_else(|| Error::Invalid("empty batch".into()))?;
    g.scale(acc, T::from_f64c(1.0 / total_weight))
}

/// One optimizer step on a batch of denoising examples. Returns the mean
/// token-level cross-entropy at corrupted positions.
pub fn pretrain_step<T: Scalar>(
    model: &mut Model<T>,
    batch: &[PretrainExample],
    adam: &mut Adam<T>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty pretrain batch".into()));
    }
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true)?;
    let mut losses = Vec::with_capacity(batch.len());
    for ex in batch {
        let t = model.forward_states(&mut g, &bound, &ex.corrupted_ids)?;
        let logits = model.lm_logits(&mut g, &bound, t)?;
        let include: Vec<bool> = (0..ex.original_ids.len())
            .map(|i| ex.corrupted_positions.contains(&i))
            .collect();
        let loss = g.cross_entropy_rows(logits, &ex.original_ids, &include)?;
        losses.push((loss, 1.0));
    }
    let loss = mean_of_scalars(&mut g, &losses)?;
    let loss_value = g.values(loss)[0].to_f64c();
    if !loss_value.is_finite() {
        return Err(Error::NonFinite { op: "pretrain_step" });
    }
    g.backward(loss)?;
    let grads = model.grads(&g, &bound);
    adam.step(model.params_mut(), &grads)?;
    Ok(loss_value)
}

/// One optimizer step on a batch of labeled candidates. Returns the
/// (optionally class-weighted) mean binary cross-entropy.
pub fn finetune_step<T: Scalar>(
    model: &mut Model<T>,
    batch: &[FinetuneExample],
    adam: &mut Adam<T>,
    positive_class_weight: Option<f64>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty finetune batch".into()));
    }
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true)?;
    let mut losses = Vec::with_capacity(batch.len());
    for ex in batch {
        let logits = model.forward_classify(&mut g, &bound, &ex.candidate_ids)?;
        let loss = g.cross_entropy_binary(logits, ex.label as usize)?;
        let w = match positive_class_weight {
            Some(w) if ex.label => w,
            _ => 1.0,
        };
        losses.push((loss, w));
    }
    let loss = mean_of_scalars(&mut g, &losses)?;
    let loss_value = g.values(loss)[0].to_f64c();
    if !loss_value.is_finite() {
        return Err(Error::NonFinite { op: "finetune_step" });
    }
    g.backward(loss)?;
    let grads = model.grads(&g, &bound);
    adam.step(model.params_mut(), &grads)?;
    Ok(loss_value)
}

#[derive(Debug)]
pub struct FinetuneDataset {
    pub examples: Vec<FinetuneExample>,
    /// Questions dropped because they were unkeyed or failed expansion.
    pub skipped: usize,
}

/// Expands keyed questions into encoded candidates: m examples per
/// question, exactly one positive. Unkeyed or unexpandable questions are
/// skipped and counted.
pub fn make_finetune_dataset(
    questions: &[ScQuestion],
    vocab: &Vocab,
    qcfg: &QdataConfig,
) -> Result<FinetuneDataset> {
    let mut examples = Vec::new();
    let mut skipped = 0;
    for q in questions {
        if q.answer_index.is_none() {
            skipped += 1;
            continue;
        }
        match expand(q, qcfg) {
            Ok(cands) => {
                for c in cands {
                    examples.push(FinetuneExample {
                        question_id: c.question_id,
                        candidate_ids: encode(&c.sentence, vocab).ids,
                        label: c.label.unwrap(),
                    });
                }
            }
            Err(_) => skipped += 1,
        }
    }
    if examples.is_empty() {
        return Err(Error::Invalid(
            "finetune dataset construction produced no examples".into(),
        ));
    }
    Ok(FinetuneDataset { examples, skipped })
}

/// Full pretraining loop over an encoded corpus. Corruption is re-sampled
/// every epoch; `log` receives (step, loss) after each optimizer step.
pub fn pretrain<T: Scalar>(
    model: &mut Model<T>,
    corpus_ids: &[Vec<usize>],
    cfg: &TrainConfig,
    mut log: impl FnMut(u64, f64),
) -> Result<()> {
    cfg.validate()?;
    if corpus_ids.is_empty() {
        return Err(Error::Invalid("empty pretraining corpus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam(), &model.param_sizes());
    let mut step = 0u64;
    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..corpus_ids.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<PretrainExample> = chunk
                .iter()
                .map(|&i| corrupt(&corpus_ids[i], cfg.mask_rate, &mut rng))
                .collect::<Result<_>>()?;
            let loss = pretrain_step(model, &batch, &mut adam)?;
            step += 1;
            log(step, loss);
            if cfg.max_steps.is_some_and(|m| step >= m) {
                return Ok(());
            }
        }
    }
    Ok(())
}

/// Full fine-tuning loop over labeled candidates.
pub fn finetune<T: Scalar>(
    model: &mut Model<T>,
    examples: &[FinetuneExample],
    cfg: &TrainConfig,
    mut log: impl FnMut(u64, f64),
) -> Result<()> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Invalid("empty finetune dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam(), &model.param_sizes());
    let mut step = 0u64;
    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<FinetuneExample> =
                chunk.iter().map(|&i| examples[i].clone()).collect();
            let loss = finetune_step(model, &batch, &mut adam, cfg.positive_class_weight)?;
            step += 1;
            log(step, loss);
            if cfg.max_steps.is_some_and(|m| step >= m) {
                return Ok(());
            }
        }
    }
    Ok(())
}
