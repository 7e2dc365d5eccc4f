//! One function per subcommand. Every command writes its primary output
//! plus a sidecar manifest; all randomness flows from the root seed.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use sc_core::error::{Error, Result};
use sc_core::evalkit::{evaluate, pr_sweep, threshold_grid};
use sc_core::qdata::{parse_dataset, render_dataset, QdataConfig};
use sc_core::seq2seq::Model;
use sc_core::solver::{solve_with_threshold, SolveRecord};
use sc_core::syngen::{corpus, generate, GenConfig};
use sc_core::tensorcore::weights::peek_dtype;
use sc_core::tensorcore::{Dtype, Scalar};
use sc_core::tokenizer::{build_vocab, encode, Vocab, NUM_SPECIALS};
use sc_core::training::{finetune, make_finetune_dataset, pretrain};

use crate::config::RunConfig;
use crate::manifest::Manifest;

pub fn gen_data(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let gen_cfg: GenConfig = cfg.gen_config()?;
    std::fs::create_dir_all(out_dir)?;
    let (train, test) = generate(&gen_cfg)?;
    let sentences = corpus(&gen_cfg)?;

    let train_path = out_dir.join("train.jsonl");
    let test_path = out_dir.join("test.jsonl");
    let corpus_path = out_dir.join("corpus.txt");
    std::fs::write(&train_path, render_dataset(&train)?)?;
    std::fs::write(&test_path, render_dataset(&test)?)?;
    std::fs::write(&corpus_path, sentences.join("\n") + "\n")?;

    let mut m = Manifest::new("gen-data", &cfg.effective_lines());
    for line in gen_cfg.manifest().lines() {
        if let Some((k, v)) = line.split_once('=') {
            m.note(k, v);
        }
    }
    m.note("train_questions", train.len());
    m.note("test_questions", test.len());
    m.output(&train_path)?;
    m.output(&test_path)?;
    m.output(&corpus_path)?;
    m.write(out_dir)?;
    Ok(())
}

/// Sentences contributed by one input file: filled candidates for question
/// datasets (`.jsonl`), raw lines for plain-text corpora.
fn vocab_sentences(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        let qcfg = QdataConfig::default();
        let questions = parse_dataset(&text, &qcfg)?;
        let mut out = Vec::new();
        for q in &questions {
            for c in sc_core::qdata::expand(q, &qcfg)? {
                out.push(c.sentence);
            }
        }
        Ok(out)
    } else {
        Ok(text.lines().map(str::to_string).collect())
    }
}

pub fn build_vocab_cmd(cfg: &RunConfig, data: &[PathBuf], out: &Path) -> Result<()> {
    let mut sentences = Vec::new();
    for path in data {
        sentences.extend(vocab_sentences(path)?);
    }
    let vocab = build_vocab(sentences.iter().map(String::as_str), cfg.min_freq()?)?;
    std::fs::write(out, vocab.to_file_string())?;

    let mut m = Manifest::new("build-vocab", &cfg.effective_lines());
    for path in data {
        m.input(path)?;
    }
    m.note("min_freq", cfg.min_freq()?);
    m.note("vocab_size", vocab.size());
    m.output(out)?;
    m.write(out)?;
    Ok(())
}

fn load_vocab(path: &Path) -> Result<Vocab> {
    Vocab::from_file_string(&std::fs::read_to_string(path)?)
}

/// Dtype stored in a weight file; `requested` (if any) must match it.
pub fn weights_dtype(path: &Path, requested: Option<Dtype>) -> Result<Dtype> {
    let file = std::fs::File::open(path)?;
    let stored = peek_dtype(&mut std::io::BufReader::new(file))?;
    if let Some(r) = requested {
        if r != stored {
            return Err(Error::WeightFile(format!(
                "{} stores {stored} but --precision requests {r}",
                path.display()
            )));
        }
    }
    Ok(stored)
}

fn check_vocab_compat<T: Scalar>(model: &Model<T>, vocab: &Vocab, path: &Path) -> Result<()> {
    if model.config.vocab_size != vocab.size() {
        return Err(Error::Vocab(format!(
            "weight file {} was trained with vocab size {}, vocab file has {}",
            path.display(),
            model.config.vocab_size,
            vocab.size()
        )));
    }
    Ok(())
}

fn log_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.log", out.display()))
}

pub fn pretrain_cmd<T: Scalar>(
    cfg: &RunConfig,
    data: &Path,
    vocab_path: &Path,
    out: &Path,
) -> Result<()> {
    let vocab = load_vocab(vocab_path)?;
    let train_cfg = cfg.pretrain_config()?;
    let model_cfg = cfg.model_config(vocab.size())?;
    let max_len = model_cfg.max_len;
    let mut model: Model<T> = Model::init(model_cfg)?;

    let text = std::fs::read_to_string(data)?;
    let mut skipped = 0usize;
    let corpus_ids: Vec<Vec<usize>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| encode(l, &vocab).ids)
        .filter(|ids| {
            let ok = ids.len() <= max_len && ids.iter().any(|&id| id >= NUM_SPECIALS);
            if !ok {
                skipped += 1;
            }
            ok
        })
        .collect();

    let mut log = std::io::BufWriter::new(std::fs::File::create(log_path(out))?);
    pretrain(&mut model, &corpus_ids, &train_cfg, |step, loss| {
        let _ = writeln!(log, "{step}\t{loss:.6}");
    })?;
    log.flush()?;
    model.save_to_path(out)?;

    let mut m = Manifest::new("pretrain", &cfg.effective_lines());
    m.input(data)?;
    m.input(vocab_path)?;
    m.note("sentences", corpus_ids.len());
    m.note("skipped_sentences", skipped);
    m.output(out)?;
    m.output(&log_path(out))?;
    m.write(out)?;
    Ok(())
}

pub fn finetune_cmd<T: Scalar>(
    cfg: &RunConfig,
    data: &Path,
    vocab_path: &Path,
    weights: &Path,
    out: &Path,
) -> Result<()> {
    let vocab = load_vocab(vocab_path)?;
    let mut model: Model<T> = Model::load_from_path(weights)?;
    check_vocab_compat(&model, &vocab, weights)?;
    let qcfg = QdataConfig::default();
    let questions = parse_dataset(&std::fs::read_to_string(data)?, &qcfg)?;
    let dataset = make_finetune_dataset(&questions, &vocab, &qcfg)?;
    let train_cfg = cfg.finetune_config()?;

    let mut log = std::io::BufWriter::new(std::fs::File::create(log_path(out))?);
    finetune(&mut model, &dataset.examples, &train_cfg, |step, loss| {
        let _ = writeln!(log, "{step}\t{loss:.6}");
    })?;
    log.flush()?;
    model.save_to_path(out)?;

    let mut m = Manifest::new("finetune", &cfg.effective_lines());
    m.input(data)?;
    m.input(vocab_path)?;
    m.input(weights)?;
    m.note("examples", dataset.examples.len());
    m.note("skipped_questions", dataset.skipped);
    m.output(out)?;
    m.output(&log_path(out))?;
    m.write(out)?;
    Ok(())
}

pub fn solve_cmd<T: Scalar>(
    cfg: &RunConfig,
    data: &Path,
    vocab_path: &Path,
    weights: &Path,
    out: &Path,
) -> Result<()> {
    let vocab = load_vocab(vocab_path)?;
    let model: Model<T> = Model::load_from_path(weights)?;
    check_vocab_compat(&model, &vocab, weights)?;
    let tau = cfg.threshold()?;
    let qcfg = QdataConfig::default();
    let questions = parse_dataset(&std::fs::read_to_string(data)?, &qcfg)?;

    let mut answered = 0usize;
    let mut lines = String::new();
    for q in &questions {
        let decision = solve_with_threshold(&model, &vocab, q, tau, &qcfg)?;
        if decision.is_answered() {
            answered += 1;
        }
        let record = SolveRecord::from_decision(&decision, q.answer_index);
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    std::fs::write(out, lines)?;

    let mut m = Manifest::new("solve", &cfg.effective_lines());
    m.input(data)?;
    m.input(vocab_path)?;
    m.input(weights)?;
    m.note("threshold", tau);
    m.note("questions", questions.len());
    m.note("answered", answered);
    m.output(out)?;
    m.write(out)?;
    Ok(())
}

pub fn eval_cmd<T: Scalar>(
    cfg: &RunConfig,
    data: &Path,
    vocab_path: &Path,
    weights: &Path,
    out: &Path,
) -> Result<()> {
    let vocab = load_vocab(vocab_path)?;
    let model: Model<T> = Model::load_from_path(weights)?;
    check_vocab_compat(&model, &vocab, weights)?;
    let qcfg = QdataConfig::default();
    let questions = parse_dataset(&std::fs::read_to_string(data)?, &qcfg)?;
    let report = evaluate(&model, &vocab, &questions, &qcfg)?;

    print!("{}", report.to_table());
    std::fs::write(out, report.to_machine("test"))?;
    let json_path = PathBuf::from(format!("{}.json", out.display()));
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;

    let mut m = Manifest::new("eval", &cfg.effective_lines());
    m.input(data)?;
    m.input(vocab_path)?;
    m.input(weights)?;
    m.note("accuracy", format!("{:.6}", report.accuracy()));
    m.output(out)?;
    m.output(&json_path)?;
    m.write(out)?;
    Ok(())
}

pub fn pr_sweep_cmd<T: Scalar>(
    cfg: &RunConfig,
    data: &Path,
    vocab_path: &Path,
    weights: &Path,
    out: &Path,
) -> Result<()> {
    let vocab = load_vocab(vocab_path)?;
    let model: Model<T> = Model::load_from_path(weights)?;
    check_vocab_compat(&model, &vocab, weights)?;
    let qcfg = QdataConfig::default();
    let questions = parse_dataset(&std::fs::read_to_string(data)?, &qcfg)?;
    let grid = threshold_grid(cfg.grid_step()?)?;
    let curve = pr_sweep(&model, &vocab, &questions, &grid, &qcfg)?;
    std::fs::write(out, curve.to_machine())?;

    let mut m = Manifest::new("pr-sweep", &cfg.effective_lines());
    m.input(data)?;
    m.input(vocab_path)?;
    m.input(weights)?;
    m.note("grid_step", cfg.grid_step()?);
    m.note("points", curve.points.len());
    m.output(out)?;
    m.write(out)?;
    Ok(())
}
