//! Miniature encoder-decoder transformer with a binary classification head
//! over the final decoder state and a tied-embedding LM head for denoising
//! pretraining.
//!
//! Encoder and decoder both consume the same embedded input sequence; the
//! decoder applies causal self-attention plus cross-attention over the
//! encoder output. Pre-norm residual blocks, learned positional embeddings,
//! ReLU in the FFN; the classification head is
//! `softmax(W1 tanh(W0 t_n + b0) + b1)` with tanh kept exactly.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorcore::weights::{read_weights, write_weights, NamedArray};
use crate::tensorcore::{Graph, Scalar, TensorId};

pub const LAYER_NORM_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding / model width.
    pub dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    /// Attention heads; must divide `dim`.
    pub heads: usize,
    /// FFN inner width.
    pub ffn_dim: usize,
    /// Classification head hidden width (1024 in the full-scale setting).
    pub head_hidden: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0
            || self.heads == 0
            || self.ffn_dim == 0
            || self.vocab_size == 0
        {
            return Err(Error::Config("model dims must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "heads ({}) must divide dim ({})",
                self.heads, self.dim
            )));
        }
        if self.head_hidden < 2 {
            return Err(Error::Config("head_hidden must be >= 2".into()));
        }
        if self.max_len < 3 {
            return Err(Error::Config("max_len must be >= 3".into()));
        }
        Ok(())
    }

    /// Desk-scale default used by the CLI pipeline.
    pub fn desk_scale(vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            dim: 32,
            enc_layers: 2,
            dec_layers: 2,
            heads: 2,
            ffn_dim: 64,
            head_hidden: 128,
            vocab_size,
            max_len: 48,
            seed,
        }
    }

    /// Tiny config for gradient checks.
    pub fn tiny(vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            dim: 8,
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            ffn_dim: 16,
            head_hidden: 8,
            vocab_size,
            max_len: 16,
            seed,
        }
    }
}

fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.dim;
    let f = cfg.ffn_dim;
    let h = cfg.head_hidden;
    let mut specs = vec![
        ("tok_emb".to_string(), vec![cfg.vocab_size, d]),
        ("pos_emb".to_string(), vec![cfg.max_len, d]),
    ];
    let attn = |prefix: String, specs: &mut Vec<(String, Vec<usize>)>| {
        for w in ["wq", "wk", "wv", "wo"] {
            specs.push((format!("{prefix}.{w}"), vec![d, d]));
        }
        for b in ["bq", "bk", "bv", "bo"] {
            specs.push((format!("{prefix}.{b}"), vec![d]));
        }
    };
    let ln = |prefix: String, specs: &mut Vec<(String, Vec<usize>)>| {
        specs.push((format!("{prefix}.gamma"), vec![d]));
        specs.push((format!("{prefix}.beta"), vec![d]));
    };
    let ffn = |prefix: String, specs: &mut Vec<(String, Vec<usize>)>| {
        specs.push((format!("{prefix}.w1"), vec![d, f]));
        specs.push((format!("{prefix}.b1"), vec![f]));
        specs.push((format!("{prefix}.w2"), vec![f, d]));
        specs.push((format!("{prefix}.b2"), vec![d]));
    };
    for l in 0..cfg.enc_layers {
        ln(format!("enc{l}.ln1"), &mut specs);
        attn(format!("enc{l}.attn"), &mut specs);
        ln(format!("enc{l}.ln2"), &mut specs);
        ffn(format!("enc{l}.ffn"), &mut specs);
    }
    for l in 0..cfg.dec_layers {
        ln(format!("dec{l}.ln1"), &mut specs);
        attn(format!("dec{l}.self"), &mut specs);
        ln(format!("dec{l}.ln2"), &mut specs);
        attn(format!("dec{l}.cross"), &mut specs);
        ln(format!("dec{l}.ln3"), &mut specs);
        ffn(format!("dec{l}.ffn"), &mut specs);
    }
    specs.push(("head.w0".to_string(), vec![h, d]));
    specs.push(("head.b0".to_string(), vec![h]));
    specs.push(("head.w1".to_string(), vec![2, h]));
    specs.push(("head.b1".to_string(), vec![2]));
    specs
}

fn init_values<T: Scalar>(name: &str, numel: usize, rng: &mut ChaCha8Rng, std: f64) -> Vec<T> {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    if leaf == "gamma" {
        vec![T::one(); numel]
    } else if leaf.starts_with('b') || leaf == "beta" {
        vec![T::zero(); numel]
    } else {
        (0..numel)
            .map(|_| T::from_f64c(sample_normal(rng) * std))
            .collect()
    }
}

// Box-Muller; two uniforms per sample keeps the stream layout simple.
fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Parameter ids bound into one graph, aligned with the model's param order.
pub struct Bound {
    ids: Vec<TensorId>,
}

pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    params: Vec<NamedArray<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Model<T> {
    /// Fresh model with normal(0, 0.02) weights, zero biases, unit LN scale.
    pub fn init(config: ModelConfig) -> Result<Model<T>> {
        Self::init_with_std(config, INIT_STD)
    }

    /// Same but with a custom weight std; gradient checks use a larger std
    /// to keep gradients well away from finite-difference noise.
    pub fn init_with_std(config: ModelConfig, std: f64) -> Result<Model<T>> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::new();
        for (name, shape) in param_specs(&config) {
            let numel = shape.iter().product();
            let values = init_values(&name, numel, &mut rng, std);
            params.push(NamedArray {
                name,
                shape,
                values,
            });
        }
        Ok(Self::from_arrays(config, params))
    }

    fn from_arrays(config: ModelConfig, params: Vec<NamedArray<T>>) -> Model<T> {
        let index = params
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.clone(), i))
            .collect();
        Model {
            config,
            params,
            index,
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|a| a.values.len()).sum()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params.iter().map(|a| a.values.len()).collect()
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn param_values(&self, name: &str) -> Option<&[T]> {
        self.index.get(name).map(|&i| self.params[i].values.as_slice())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.params.iter_mut().map(|a| a.values.as_mut_slice())
    }

    /// Perturb a single flat parameter entry (finite-difference probes).
    pub fn nudge_param(&mut self, tensor_idx: usize, elem: usize, delta: T) {
        self.params[tensor_idx].values[elem] += delta;
    }

    /// Registers every parameter as a graph leaf.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Result<Bound> {
        let mut ids = Vec::with_capacity(self.params.len());
        for a in &self.params {
            ids.push(g.leaf(&a.shape, a.values.clone(), trainable)?);
        }
        Ok(Bound { ids })
    }

    /// Gradients per parameter after `g.backward`, zeros for untouched ones.
    pub fn grads(&self, g: &Graph<T>, bound: &Bound) -> Vec<Vec<T>> {
        self.params
            .iter()
            .zip(&bound.ids)
            .map(|(a, &id)| {
                g.grad(id)
                    .map(|s| s.to_vec())
                    .unwrap_or_else(|| vec![T::zero(); a.values.len()])
            })
            .collect()
    }

    fn p(&self, bound: &Bound, name: &str) -> TensorId {
        bound.ids[self.index[name]]
    }

    /// Token + learned positional embedding: `E[i] = tok[ids[i]] + pos[i]`.
    pub fn embed(&self, g: &mut Graph<T>, bound: &Bound, ids: &[usize]) -> Result<TensorId> {
        let n = ids.len();
        if n == 0 || n > self.config.max_len {
            return Err(Error::Invalid(format!(
                "sequence length {n} outside 1..={}",
                self.config.max_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::Invalid(format!(
                "token id {bad} out of range for vocab {}",
                self.config.vocab_size
            )));
        }
        let tok = g.embedding_lookup(self.p(bound, "tok_emb"), ids)?;
        let positions: Vec<usize> = (0..n).collect();
        let pos = g.embedding_lookup(self.p(bound, "pos_emb"), &positions)?;
        g.add(tok, pos)
    }

    fn attention(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        prefix: &str,
        x_q: TensorId,
        x_kv: TensorId,
        allowed: &[bool],
    ) -> Result<TensorId> {
        let d = self.config.dim;
        let heads = self.config.heads;
        let dk = d / heads;
        let scale = T::from_f64c(1.0 / (dk as f64).sqrt());
        let q = {
            let m = g.matmul(x_q, self.p(bound, &format!("{prefix}.wq")))?;
            g.add_row(m, self.p(bound, &format!("{prefix}.bq")))?
        };
        let k = {
            let m = g.matmul(x_kv, self.p(bound, &format!("{prefix}.wk")))?;
            g.add_row(m, self.p(bound, &format!("{prefix}.bk")))?
        };
        let v = {
            let m = g.matmul(x_kv, self.p(bound, &format!("{prefix}.wv")))?;
            g.add_row(m, self.p(bound, &format!("{prefix}.bv")))?
        };
        let mut head_outputs = Vec::with_capacity(heads);
        for hh in 0..heads {
            let qh = g.slice_cols(q, hh * dk, (hh + 1) * dk)?;
            let kh = g.slice_cols(k, hh * dk, (hh + 1) * dk)?;
            let vh = g.slice_cols(v, hh * dk, (hh + 1) * dk)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let att = g.softmax_rows(scores, Some(allowed))?;
            head_outputs.push(g.matmul(att, vh)?);
        }
        let merged = g.concat_cols(&head_outputs)?;
        let out = g.matmul(merged, self.p(bound, &format!("{prefix}.wo")))?;
        g.add_row(out, self.p(bound, &format!("{prefix}.bo")))
    }

    fn ffn_block(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        prefix: &str,
        x: TensorId,
    ) -> Result<TensorId> {
        let a = g.matmul(x, self.p(bound, &format!("{prefix}.w1")))?;
        let a = g.add_row(a, self.p(bound, &format!("{prefix}.b1")))?;
        let a = g.relu(a)?;
        let a = g.matmul(a, self.p(bound, &format!("{prefix}.w2")))?;
        g.add_row(a, self.p(bound, &format!("{prefix}.b2")))
    }

    fn norm(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        prefix: &str,
        x: TensorId,
    ) -> Result<TensorId> {
        g.layer_norm(
            x,
            self.p(bound, &format!("{prefix}.gamma")),
            self.p(bound, &format!("{prefix}.beta")),
            T::from_f64c(LAYER_NORM_EPS),
        )
    }

    /// Bidirectional encoder stack. `pad_mask[i]` true means position i is
    /// PAD and must be excluded from attention keys everywhere.
    pub fn encode(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        e: TensorId,
        pad_mask: &[bool],
    ) -> Result<TensorId> {
        let n = self.check_seq(g, e, pad_mask)?;
        let mut allowed = vec![true; n * n];
        for i in 0..n {
            for j in 0..n {
                allowed[i * n + j] = !pad_mask[j];
            }
        }
        let mut x = e;
        for l in 0..self.config.enc_layers {
            let normed = self.norm(g, bound, &format!("enc{l}.ln1"), x)?;
            let att = self.attention(g, bound, &format!("enc{l}.attn"), normed, normed, &allowed)?;
            x = g.add(x, att)?;
            let normed = self.norm(g, bound, &format!("enc{l}.ln2"), x)?;
            let ff = self.ffn_block(g, bound, &format!("enc{l}.ffn"), normed)?;
            x = g.add(x, ff)?;
        }
        Ok(x)
    }

    /// Decoder stack: causal self-attention, cross-attention over `h`, FFN.
    /// Input embedding `e` is the same sequence the encoder consumed.
    pub fn decode(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        e: TensorId,
        h: TensorId,
        pad_mask: &[bool],
    ) -> Result<TensorId> {
        let n = self.check_seq(g, e, pad_mask)?;
        if g.shape(h) != [n, self.config.dim] {
            return Err(Error::Shape {
                op: "decode",
                lhs: g.shape(h).to_vec(),
                rhs: vec![n, self.config.dim],
            });
        }
        let mut causal = vec![false; n * n];
        for i in 0..n {
            for j in 0..=i {
                causal[i * n + j] = !pad_mask[j] || j == i;
            }
        }
        let mut cross = vec![true; n * n];
        for i in 0..n {
            for j in 0..n {
                cross[i * n + j] = !pad_mask[j];
            }
        }
        let mut x = e;
        for l in 0..self.config.dec_layers {
            let normed = self.norm(g, bound, &format!("dec{l}.ln1"), x)?;
            let att = self.attention(g, bound, &format!("dec{l}.self"), normed, normed, &causal)?;
            x = g.add(x, att)?;
            let normed = self.norm(g, bound, &format!("dec{l}.ln2"), x)?;
            let att = self.attention(g, bound, &format!("dec{l}.cross"), normed, h, &cross)?;
            x = g.add(x, att)?;
            let normed = self.norm(g, bound, &format!("dec{l}.ln3"), x)?;
            let ff = self.ffn_block(g, bound, &format!("dec{l}.ffn"), normed)?;
            x = g.add(x, ff)?;
        }
        Ok(x)
    }

    fn check_seq(&self, g: &Graph<T>, e: TensorId, pad_mask: &[bool]) -> Result<usize> {
        let shape = g.shape(e);
        let [n, d] = shape else {
            return Err(Error::Shape {
                op: "seq",
                lhs: shape.to_vec(),
                rhs: vec![0, self.config.dim],
            });
        };
        if *d != self.config.dim || pad_mask.len() != *n {
            return Err(Error::Shape {
                op: "seq",
                lhs: shape.to_vec(),
                rhs: vec![pad_mask.len(), self.config.dim],
            });
        }
        Ok(*n)
    }

    /// Binary head logits from the final decoder state (a `[1,d]` row):
    /// `W1 tanh(W0 t_n + b0) + b1`, as `[1,2]`.
    pub fn classify(&self, g: &mut Graph<T>, bound: &Bound, t_n: TensorId) -> Result<TensorId> {
        let w0t = g.transpose(self.p(bound, "head.w0"))?;
        let hidden = g.matmul(t_n, w0t)?;
        let hidden = g.add_row(hidden, self.p(bound, "head.b0"))?;
        let hidden = g.tanh(hidden)?;
        let w1t = g.transpose(self.p(bound, "head.w1"))?;
        let logits = g.matmul(hidden, w1t)?;
        g.add_row(logits, self.p(bound, "head.b1"))
    }

    /// (p_wrong, p_right) from head logits.
    pub fn class_probs(&self, g: &mut Graph<T>, logits: TensorId) -> Result<(T, T)> {
        let probs = g.softmax_rows(logits, None)?;
        let v = g.values(probs);
        Ok((v[0], v[1]))
    }

    /// Per-position vocabulary logits via the tied embedding projection.
    pub fn lm_logits(&self, g: &mut Graph<T>, bound: &Bound, t: TensorId) -> Result<TensorId> {
        let emb_t = g.transpose(self.p(bound, "tok_emb"))?;
        g.matmul(t, emb_t)
    }

    /// Embed -> encode -> decode for one unpadded sequence.
    pub fn forward_states(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        ids: &[usize],
    ) -> Result<TensorId> {
        let pad_mask = vec![false; ids.len()];
        let e = self.embed(g, bound, ids)?;
        let h = self.encode(g, bound, e, &pad_mask)?;
        self.decode(g, bound, e, h, &pad_mask)
    }

    /// Full classification forward: head logits `[1,2]` at the final
    /// (EOS) position of one unpadded sequence.
    pub fn forward_classify(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        ids: &[usize],
    ) -> Result<TensorId> {
        let t = self.forward_states(g, bound, ids)?;
        let n = ids.len();
        let t_n = g.slice_rows(t, n - 1, n)?;
        self.classify(g, bound, t_n)
    }

    pub fn save<W: Write>(&self, out: &mut W) -> Result<()> {
        let config_json = serde_json::to_string(&self.config)?;
        write_weights(
            out,
            &config_json,
            self.params
                .iter()
                .map(|a| (a.name.as_str(), a.shape.as_slice(), a.values.as_slice())),
        )
    }

    pub fn load<R: BufRead>(r: &mut R) -> Result<Model<T>> {
        let (config_json, arrays) = read_weights::<T, R>(r)?;
        let config: ModelConfig = serde_json::from_str(&config_json)?;
        config.validate()?;
        let specs = param_specs(&config);
        if arrays.len() != specs.len() {
            return Err(Error::WeightFile(format!(
                "expected {} arrays, found {}",
                specs.len(),
                arrays.len()
            )));
        }
        for ((name, shape), a) in specs.iter().zip(&arrays) {
            if a.name != *name || a.shape != *shape {
                return Err(Error::WeightFile(format!(
                    "array mismatch: expected {name} {shape:?}, found {} {:?}",
                    a.name, a.shape
                )));
            }
        }
        Ok(Model::from_arrays(config, arrays))
    }

    pub fn save_to_path(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f)
    }

    pub fn load_from_path(path: &std::path::Path) -> Result<Model<T>> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load(&mut f)
    }
}
