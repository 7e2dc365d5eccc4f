//! Flat key=value run configuration with command-line overrides.
//!
//! Config files are diff-able experiment records: one `key=value` per line,
//! `#` comments and blank lines ignored. Flags always win over the file.

use std::collections::BTreeMap;
use std::path::Path;

use sc_core::error::{Error, Result};
use sc_core::seq2seq::ModelConfig;
use sc_core::syngen::GenConfig;
use sc_core::tensorcore::Dtype;
use sc_core::training::TrainConfig;

/// Every key a config file may set.
const KNOWN_KEYS: &[&str] = &[
    "seed",
    "precision",
    "threshold",
    "grid_step",
    "min_freq",
    // generation
    "count_c1",
    "count_c2",
    "count_c3",
    "count_c4",
    "options_per_question",
    "train_fraction",
    // model
    "dim",
    "enc_layers",
    "dec_layers",
    "heads",
    "ffn_dim",
    "head_hidden",
    "max_len",
    // training
    "pretrain_lr",
    "pretrain_epochs",
    "pretrain_batch_size",
    "mask_rate",
    "finetune_lr",
    "finetune_epochs",
    "finetune_batch_size",
    "positive_class_weight",
    "max_steps",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "config line {}: expected key=value, got {raw:?}",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let map = match path {
            Some(p) => parse_config_text(&std::fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        Ok(RunConfig { map })
    }

    /// Command-line override; flags beat the file.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    /// Was this key set explicitly (file or flag)?
    pub fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for key {key:?}"))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed", 0)
    }

    pub fn precision(&self) -> Result<Dtype> {
        let s: String = self.parse("precision", "f32".to_string())?;
        Dtype::parse(&s).ok_or_else(|| Error::Config(format!("precision must be f32 or f64, got {s:?}")))
    }

    pub fn threshold(&self) -> Result<f64> {
        self.parse("threshold", 0.5)
    }

    pub fn grid_step(&self) -> Result<f64> {
        self.parse("grid_step", 0.01)
    }

    pub fn min_freq(&self) -> Result<usize> {
        self.parse("min_freq", 1)
    }

    pub fn gen_config(&self) -> Result<GenConfig> {
        let d = GenConfig::default();
        let cfg = GenConfig {
            counts: [
                self.parse("count_c1", d.counts[0])?,
                self.parse("count_c2", d.counts[1])?,
                self.parse("count_c3", d.counts[2])?,
                self.parse("count_c4", d.counts[3])?,
            ],
            options_per_question: self.parse("options_per_question", d.options_per_question)?,
            seed: self.seed()?,
            train_fraction: self.parse("train_fraction", d.train_fraction)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let d = ModelConfig::desk_scale(vocab_size, self.seed()?);
        let cfg = ModelConfig {
            dim: self.parse("dim", d.dim)?,
            enc_layers: self.parse("enc_layers", d.enc_layers)?,
            dec_layers: self.parse("dec_layers", d.dec_layers)?,
            heads: self.parse("heads", d.heads)?,
            ffn_dim: self.parse("ffn_dim", d.ffn_dim)?,
            head_hidden: self.parse("head_hidden", d.head_hidden)?,
            max_len: self.parse("max_len", d.max_len)?,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn train_common(&self, prefix: &str, d: TrainConfig) -> Result<TrainConfig> {
        let max_steps: i64 = self.parse("max_steps", -1)?;
        let cfg = TrainConfig {
            lr: self.parse(&format!("{prefix}_lr"), d.lr)?,
            epochs: self.parse(&format!("{prefix}_epochs"), d.epochs)?,
            batch_size: self.parse(&format!("{prefix}_batch_size"), d.batch_size)?,
            mask_rate: self.parse("mask_rate", d.mask_rate)?,
            max_steps: if max_steps < 0 { None } else { Some(max_steps as u64) },
            seed: self.seed()?,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pretrain_config(&self) -> Result<TrainConfig> {
        self.train_common(
            "pretrain",
            TrainConfig {
                epochs: 10,
                ..Default::default()
            },
        )
    }

    pub fn finetune_config(&self) -> Result<TrainConfig> {
        let w: f64 = self.parse("positive_class_weight", 0.0)?;
        let mut cfg = self.train_common(
            "finetune",
            TrainConfig {
                epochs: 10,
                // derived seed so pretraining and fine-tuning never share a
                // random stream
                seed: self.seed()?.wrapping_add(1),
                ..Default::default()
            },
        )?;
        cfg.seed = self.seed()?.wrapping_add(1);
        if w > 0.0 {
            cfg.positive_class_weight = Some(w);
        }
        Ok(cfg)
    }

    /// Sorted key=value lines of every explicit setting; hashed into the
    /// manifest so replays are checkable.
    pub fn effective_lines(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}
