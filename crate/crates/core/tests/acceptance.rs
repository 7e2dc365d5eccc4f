//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/FAIL line (run with `--nocapture` to see them alongside the
//! harness output).

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sc_core::evalkit::{
    evaluate, pr_sweep, report_from_scored, sweep_from_scored, threshold_grid, EvalReport,
    ScoredQuestion,
};
use sc_core::qdata::{
    parse_dataset, parse_question, render_dataset, Category, QdataConfig, QuestionRecord,
};
use sc_core::seq2seq::{Model, ModelConfig};
use sc_core::solver::{solve, Prediction};
use sc_core::syngen::{corpus, generate, GenConfig};
use sc_core::tensorcore::{Adam, AdamConfig, Graph};
use sc_core::tokenizer::{build_vocab, encode, BOS, EOS, MASK, NUM_SPECIALS};
use sc_core::training::{
    corrupt, finetune, finetune_step, make_finetune_dataset, pretrain, pretrain_step,
    FinetuneExample, PretrainExample, TrainConfig,
};

fn criterion(n: usize, name: &str, f: impl FnOnce() -> Result<String, String>) {
    match f() {
        Ok(detail) => println!("ACCEPTANCE {n} ({name}): PASS — {detail}"),
        Err(e) => {
            println!("ACCEPTANCE {n} ({name}): FAIL — {e}");
            panic!("criterion {n} ({name}) failed: {e}");
        }
    }
}

// ---------------------------------------------------------------------------
// 1. Gradient fidelity: full-model finite-difference check in f64.
// ---------------------------------------------------------------------------

/// Denoising + classification loss over a fixed probe input, touching every
/// parameter group (embeddings, both stacks, tied LM head, binary head).
fn probe_loss(
    model: &Model<f64>,
    g: &mut Graph<f64>,
) -> Result<(sc_core::tensorcore::TensorId, sc_core::seq2seq::Bound), String> {
    let bound = model.bind(g, true).map_err(|e| e.to_string())?;
    let corrupted = [BOS, MASK, 9, MASK, 15, EOS];
    let originals = [BOS, 7, 9, 12, 15, EOS];
    let include = [false, true, false, true, false, false];
    let t = model
        .forward_states(g, &bound, &corrupted)
        .map_err(|e| e.to_string())?;
    let lm = model.lm_logits(g, &bound, t).map_err(|e| e.to_string())?;
    let ce = g
        .cross_entropy_rows(lm, &originals, &include)
        .map_err(|e| e.to_string())?;
    let t_n = g.slice_rows(t, 5, 6).map_err(|e| e.to_string())?;
    let logits = model.classify(g, &bound, t_n).map_err(|e| e.to_string())?;
    let bce = g.cross_entropy_binary(logits, 1).map_err(|e| e.to_string())?;
    let total = g.add(ce, bce).map_err(|e| e.to_string())?;
    Ok((total, bound))
}

fn probe_loss_value(model: &Model<f64>) -> f64 {
    let mut g = Graph::new();
    let (loss, _) = probe_loss(model, &mut g).unwrap();
    g.values(loss)[0]
}

#[test]
fn acceptance_1_gradient_fidelity() {
    criterion(1, "gradient fidelity", || {
        let start = Instant::now();
        let cfg = ModelConfig {
            dim: 8,
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            ffn_dim: 16,
            head_hidden: 8,
            vocab_size: 20,
            max_len: 16,
            seed: 11,
        };
        // larger-than-default init keeps gradients clear of FD noise
        let mut model: Model<f64> = Model::init_with_std(cfg, 0.2).map_err(|e| e.to_string())?;

        let mut g = Graph::new();
        let (loss, bound) = probe_loss(&model, &mut g)?;
        g.backward(loss).map_err(|e| e.to_string())?;
        let analytic: Vec<Vec<f64>> = model.grads(&g, &bound);

        let h = 1e-5;
        let mut checked = 0usize;
        let mut max_rel = 0.0f64;
        let sizes = model.param_sizes();
        let names: Vec<String> = model.param_names().iter().map(|s| s.to_string()).collect();
        for ti in 0..sizes.len() {
            for e in 0..sizes[ti] {
                model.nudge_param(ti, e, h);
                let up = probe_loss_value(&model);
                model.nudge_param(ti, e, -2.0 * h);
                let down = probe_loss_value(&model);
                model.nudge_param(ti, e, h);
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[ti][e];
                // the 1e-4 floor turns the check into an absolute tolerance
                // for structurally zero gradients (e.g. attention key biases,
                // which softmax shift-invariance kills), where the central
                // difference returns pure round-off noise (~1e-10)
                let denom = a.abs().max(numeric.abs()).max(1e-4);
                let rel = (a - numeric).abs() / denom;
                if rel >= 1e-5 {
                    return Err(format!(
                        "param {}[{e}]: analytic {a:.3e} vs numeric {numeric:.3e} (rel {rel:.3e})",
                        names[ti]
                    ));
                }
                max_rel = max_rel.max(rel);
                checked += 1;
            }
        }
        let secs = start.elapsed().as_secs_f64();
        if secs >= 60.0 {
            return Err(format!("took {secs:.1}s (budget 60s)"));
        }
        Ok(format!(
            "{checked} parameters, max relative error {max_rel:.2e}, {secs:.1}s"
        ))
    });
}

// ---------------------------------------------------------------------------
// 2. Decoder causality with frozen encoder memory, L' in {1,2}.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_decoder_causality() {
    criterion(2, "decoder causality", || {
        for dec_layers in [1usize, 2] {
            let cfg = ModelConfig {
                dim: 8,
                enc_layers: 1,
                dec_layers,
                heads: 2,
                ffn_dim: 16,
                head_hidden: 8,
                vocab_size: 20,
                max_len: 16,
                seed: 3,
            };
            let model: Model<f64> = Model::init(cfg.clone()).map_err(|e| e.to_string())?;
            let n = 6usize;
            let memory: Vec<f64> = (0..n * cfg.dim).map(|i| (i as f64 * 0.13).sin()).collect();
            let pad = vec![false; n];
            let base_ids = vec![BOS, 6, 7, 8, 9, EOS];

            let states = |ids: &[usize]| -> Result<Vec<f64>, String> {
                let mut g = Graph::new();
                let bound = model.bind(&mut g, false).map_err(|e| e.to_string())?;
                let e = model.embed(&mut g, &bound, ids).map_err(|e| e.to_string())?;
                let mem = g
                    .constant(&[n, cfg.dim], memory.clone())
                    .map_err(|e| e.to_string())?;
                let t = model
                    .decode(&mut g, &bound, e, mem, &pad)
                    .map_err(|e| e.to_string())?;
                Ok(g.values(t).to_vec())
            };

            let reference = states(&base_ids)?;
            for j in 1..n {
                let mut ids = base_ids.clone();
                ids[j] = if ids[j] == 10 { 11 } else { 10 };
                let perturbed = states(&ids)?;
                for i in 0..j {
                    for d in 0..cfg.dim {
                        let (a, b) = (reference[i * cfg.dim + d], perturbed[i * cfg.dim + d]);
                        if a.to_bits() != b.to_bits() {
                            return Err(format!(
                                "L'={dec_layers}: perturbing j={j} changed state[{i},{d}] \
                                 ({a:e} vs {b:e})"
                            ));
                        }
                    }
                }
            }
        }
        Ok("bit-identical prefixes for every perturbed position, L' in {1,2}".into())
    });
}

// ---------------------------------------------------------------------------
// 3. Overfit oracles.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_overfit_oracles() {
    criterion(3, "overfit oracles", || {
        let toy = ModelConfig {
            dim: 16,
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            ffn_dim: 32,
            head_hidden: 16,
            vocab_size: 20,
            max_len: 16,
            seed: 2,
        };
        let adam_cfg = AdamConfig {
            lr: 1e-3,
            ..Default::default()
        };

        let start = Instant::now();
        let mut model: Model<f32> = Model::init(toy.clone()).map_err(|e| e.to_string())?;
        let mut adam = Adam::new(adam_cfg.clone(), &model.param_sizes());
        let ids = vec![BOS, 6, 7, 8, 9, 10, EOS];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch: Vec<PretrainExample> = (0..4)
            .map(|_| corrupt(&ids, 0.3, &mut rng).unwrap())
            .collect();
        let mut pre_loss = f64::MAX;
        let mut pre_steps = 0;
        for step in 1..=500 {
            pre_loss = pretrain_step(&mut model, &batch, &mut adam).map_err(|e| e.to_string())?;
            pre_steps = step;
            if pre_loss < 0.05 {
                break;
            }
        }
        let pre_secs = start.elapsed().as_secs_f64();
        if pre_loss >= 0.05 {
            return Err(format!("pretrain loss {pre_loss:.4} after 500 steps"));
        }
        if pre_secs >= 120.0 {
            return Err(format!("pretrain overfit took {pre_secs:.1}s (budget 120s)"));
        }

        let start = Instant::now();
        let mut model: Model<f32> = Model::init(toy).map_err(|e| e.to_string())?;
        let mut adam = Adam::new(adam_cfg, &model.param_sizes());
        let examples: Vec<FinetuneExample> = (0..8)
            .map(|i| FinetuneExample {
                question_id: format!("q{i}"),
                candidate_ids: vec![BOS, 5 + i, 6 + i, EOS],
                label: i % 2 == 0,
            })
            .collect();
        let mut ft_loss = f64::MAX;
        let mut ft_steps = 0;
        for step in 1..=500 {
            ft_loss =
                finetune_step(&mut model, &examples, &mut adam, None).map_err(|e| e.to_string())?;
            ft_steps = step;
            if ft_loss < 0.05 {
                break;
            }
        }
        let ft_secs = start.elapsed().as_secs_f64();
        if ft_loss >= 0.05 {
            return Err(format!("finetune loss {ft_loss:.4} after 500 steps"));
        }
        if ft_secs >= 120.0 {
            return Err(format!("finetune overfit took {ft_secs:.1}s (budget 120s)"));
        }
        Ok(format!(
            "pretrain {pre_loss:.4} in {pre_steps} steps ({pre_secs:.1}s); \
             finetune {ft_loss:.4} in {ft_steps} steps ({ft_secs:.1}s)"
        ))
    });
}

// ---------------------------------------------------------------------------
// 4. End-to-end desk-scale run.
// ---------------------------------------------------------------------------

struct Pipeline {
    report: EvalReport,
    weight_bytes: Vec<u8>,
}

fn run_pipeline(gen_cfg: &GenConfig, seed: u64, pre_epochs: usize, ft_epochs: usize) -> Result<Pipeline, String> {
    let qcfg = QdataConfig::default();
    let (train, test) = generate(gen_cfg).map_err(|e| e.to_string())?;
    let sentences = corpus(gen_cfg).map_err(|e| e.to_string())?;

    let mut vocab_input: Vec<String> = sentences.clone();
    for q in &train {
        for c in sc_core::qdata::expand(q, &qcfg).map_err(|e| e.to_string())? {
            vocab_input.push(c.sentence);
        }
    }
    let vocab = build_vocab(vocab_input.iter().map(String::as_str), 1).map_err(|e| e.to_string())?;

    let model_cfg = ModelConfig::desk_scale(vocab.size(), seed);
    let max_len = model_cfg.max_len;
    let mut model: Model<f32> = Model::init(model_cfg).map_err(|e| e.to_string())?;

    let corpus_ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| encode(s, &vocab).ids)
        .filter(|ids| ids.len() <= max_len && ids.iter().any(|&id| id >= NUM_SPECIALS))
        .collect();
    let pre_cfg = TrainConfig {
        epochs: pre_epochs,
        seed,
        ..Default::default()
    };
    pretrain(&mut model, &corpus_ids, &pre_cfg, |_, _| {}).map_err(|e| e.to_string())?;

    let dataset = make_finetune_dataset(&train, &vocab, &qcfg).map_err(|e| e.to_string())?;
    let ft_cfg = TrainConfig {
        epochs: ft_epochs,
        seed: seed.wrapping_add(1),
        ..Default::default()
    };
    finetune(&mut model, &dataset.examples, &ft_cfg, |_, _| {}).map_err(|e| e.to_string())?;

    let report = evaluate(&model, &vocab, &test, &qcfg).map_err(|e| e.to_string())?;
    let mut weight_bytes = Vec::new();
    model.save(&mut weight_bytes).map_err(|e| e.to_string())?;
    Ok(Pipeline {
        report,
        weight_bytes,
    })
}

#[test]
fn acceptance_4_end_to_end() {
    criterion(4, "end-to-end desk scale", || {
        let start = Instant::now();
        let gen_cfg = GenConfig {
            seed: 42,
            ..GenConfig::default()
        };
        let p = run_pipeline(&gen_cfg, 42, 10, 10)?;
        let secs = start.elapsed().as_secs_f64();
        if p.report.total != 400 {
            return Err(format!("expected 400 scored test questions, got {}", p.report.total));
        }
        let acc = p.report.accuracy();
        if acc < 0.85 {
            return Err(format!("overall accuracy {acc:.4} < 0.85\n{}", p.report.to_table()));
        }
        for (cat, stats) in &p.report.per_category {
            if stats.accuracy() <= 0.40 {
                return Err(format!("{cat} accuracy {:.4} <= 0.40", stats.accuracy()));
            }
        }
        if secs >= 900.0 {
            return Err(format!("took {secs:.0}s (budget 900s)"));
        }
        Ok(format!(
            "accuracy {acc:.4} ({}); {secs:.0}s",
            p.report
                .per_category
                .iter()
                .map(|(c, s)| format!("{c} {:.2}", s.accuracy()))
                .collect::<Vec<_>>()
                .join(", ")
        ))
    });
}

// ---------------------------------------------------------------------------
// 5. Evaluation identities.
// ---------------------------------------------------------------------------

fn fixture() -> Vec<ScoredQuestion> {
    let mk = |conf: f64, chosen: usize, answer: usize, cat: Category| ScoredQuestion {
        prediction: Prediction {
            question_id: "q".into(),
            per_option_p_right: vec![conf],
            chosen_index: chosen,
            confidence: conf,
            diagnostics: vec![],
        },
        answer_index: answer,
        category: cat,
    };
    let mut v = Vec::new();
    for i in 0..6 {
        v.push(mk(0.55 + 0.07 * i as f64, 0, 0, Category::C1));
    }
    v.push(mk(0.30, 0, 0, Category::C2));
    v.push(mk(0.20, 1, 0, Category::C3));
    v.push(mk(0.45, 1, 0, Category::C3));
    v.push(mk(0.10, 0, 0, Category::C4));
    v
}

#[test]
fn acceptance_5_evaluation_identities() {
    criterion(5, "evaluation identities", || {
        // identities against a real model + dataset
        let gen_cfg = GenConfig {
            counts: [10, 10, 10, 10],
            options_per_question: 4,
            seed: 5,
            train_fraction: 0.5,
        };
        let qcfg = QdataConfig::default();
        let (train, test) = generate(&gen_cfg).map_err(|e| e.to_string())?;
        let mut text: Vec<String> = Vec::new();
        for q in train.iter().chain(&test) {
            for c in sc_core::qdata::expand(q, &qcfg).map_err(|e| e.to_string())? {
                text.push(c.sentence);
            }
        }
        let vocab = build_vocab(text.iter().map(String::as_str), 1).map_err(|e| e.to_string())?;
        let model: Model<f32> = Model::init(ModelConfig {
            max_len: 64,
            ..ModelConfig::tiny(vocab.size(), 1)
        })
        .map_err(|e| e.to_string())?;
        let report = evaluate(&model, &vocab, &test, &qcfg).map_err(|e| e.to_string())?;
        if report.skipped != 0 {
            return Err(format!("{} questions unexpectedly skipped", report.skipped));
        }
        let grid = threshold_grid(0.01).map_err(|e| e.to_string())?;
        let curve = pr_sweep(&model, &vocab, &test, &grid, &qcfg).map_err(|e| e.to_string())?;

        let zero = &curve.points[0];
        if zero.threshold != 0.0 || zero.recall != 1.0 {
            return Err(format!("tau=0 recall {} != 1.0", zero.recall));
        }
        if zero.precision != Some(report.accuracy()) {
            return Err(format!(
                "tau=0 precision {:?} != accuracy {}",
                zero.precision,
                report.accuracy()
            ));
        }
        for w in curve.points.windows(2) {
            if w[1].recall > w[0].recall {
                return Err(format!(
                    "recall increased from {} to {} at tau {}",
                    w[0].recall, w[1].recall, w[1].threshold
                ));
            }
        }

        // brute-force recount on the 10-question fixture
        let fx = fixture();
        let curve = sweep_from_scored(&fx, &grid).map_err(|e| e.to_string())?;
        for p in &curve.points {
            let mut solvable = 0usize;
            let mut correct = 0usize;
            for s in &fx {
                if s.prediction.confidence >= p.threshold {
                    solvable += 1;
                    if s.prediction.chosen_index == s.answer_index {
                        correct += 1;
                    }
                }
            }
            let precision = if solvable == 0 {
                None
            } else {
                Some(correct as f64 / solvable as f64)
            };
            let recall = solvable as f64 / fx.len() as f64;
            if p.solvable != solvable
                || p.solvable_and_correct != correct
                || p.precision != precision
                || p.recall != recall
            {
                return Err(format!("sweep disagrees with recount at tau {}", p.threshold));
            }
        }
        let report = report_from_scored(&fx, 0);
        let zero = &sweep_from_scored(&fx, &[0.0]).map_err(|e| e.to_string())?.points[0];
        if zero.precision != Some(report.accuracy()) {
            return Err("fixture tau=0 precision != accuracy".into());
        }
        Ok("tau=0 identities, monotone recall, exact fixture recount".into())
    });
}

// ---------------------------------------------------------------------------
// 6. Parsing/structure suite.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_parsing_structure() {
    criterion(6, "parsing and structure", || {
        let gen_cfg = GenConfig {
            counts: [250, 250, 250, 250],
            options_per_question: 4,
            seed: 6,
            train_fraction: 0.5,
        };
        let qcfg = QdataConfig::default();
        let (train, test) = generate(&gen_cfg).map_err(|e| e.to_string())?;
        let all: Vec<_> = train.into_iter().chain(test).collect();
        if all.len() != 1000 {
            return Err(format!("expected 1000 questions, got {}", all.len()));
        }
        let rendered = render_dataset(&all).map_err(|e| e.to_string())?;
        let reparsed = parse_dataset(&rendered, &qcfg).map_err(|e| e.to_string())?;
        if reparsed != all {
            return Err("round-trip parse/render mismatch".into());
        }
        for q in &all {
            let derived = sc_core::qdata::categorize(q, &qcfg).map_err(|e| e.to_string())?;
            if derived != q.category {
                return Err(format!("{}: derived {derived} != labeled {}", q.id, q.category));
            }
        }

        let table1 = QuestionRecord {
            id: "table1".into(),
            stem: "— That T-shirt with Yao Ming's picture on it ___ belong to John. \
                   He likes him a lot. — No, it ___ be his. He hates black color."
                .into(),
            options: vec![
                "can; can't".into(),
                "may; needn't".into(),
                "must; mustn't".into(),
                "must; can't".into(),
            ],
            answer: Some(3),
            split: None,
        };
        let q = parse_question(&table1, &qcfg).map_err(|e| e.to_string())?;
        if q.blank_count != 2 || q.options.len() != 4 || q.category != Category::C3 {
            return Err(format!(
                "reference question parsed to {} blanks / {} options / {}",
                q.blank_count,
                q.options.len(),
                q.category
            ));
        }
        Ok("1000/1000 round trip, 1000/1000 category agreement, reference question C3".into())
    });
}

// ---------------------------------------------------------------------------
// 7. Determinism of the full pipeline.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_determinism() {
    criterion(7, "pipeline determinism", || {
        let gen_cfg = GenConfig {
            counts: [24, 24, 24, 24],
            options_per_question: 4,
            seed: 7,
            train_fraction: 0.75,
        };
        let a = run_pipeline(&gen_cfg, 7, 2, 2)?;
        let b = run_pipeline(&gen_cfg, 7, 2, 2)?;
        if a.weight_bytes != b.weight_bytes {
            return Err("weight files differ between identical runs".into());
        }
        if a.report != b.report {
            return Err("eval reports differ between identical runs".into());
        }
        Ok(format!(
            "identical weight bytes ({}) and reports across two runs",
            a.weight_bytes.len()
        ))
    });
}

// ---------------------------------------------------------------------------
// 8. Softmax / probability hygiene.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_probability_hygiene() {
    criterion(8, "probability hygiene", || {
        let cfg = ModelConfig {
            dim: 16,
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            ffn_dim: 32,
            head_hidden: 16,
            vocab_size: 50,
            max_len: 16,
            seed: 8,
        };
        let model: Model<f32> = Model::init(cfg.clone()).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..1000 {
            let n = rng.gen_range(3..=12);
            let mut ids = vec![BOS];
            for _ in 0..n - 2 {
                ids.push(rng.gen_range(NUM_SPECIALS..cfg.vocab_size));
            }
            ids.push(EOS);
            let mut g = Graph::new();
            let bound = model.bind(&mut g, false).map_err(|e| e.to_string())?;
            let logits = model
                .forward_classify(&mut g, &bound, &ids)
                .map_err(|e| e.to_string())?;
            let (pw, pr) = model.class_probs(&mut g, logits).map_err(|e| e.to_string())?;
            let sum = pw as f64 + pr as f64;
            if (sum - 1.0).abs() >= 1e-6 {
                return Err(format!("trial {trial}: probabilities sum to {sum}"));
            }
            if !(0.0..=1.0).contains(&(pr as f64)) || !(0.0..=1.0).contains(&(pw as f64)) {
                return Err(format!("trial {trial}: probability outside [0,1]"));
            }
        }

        // solver confidences on generated questions
        let gen_cfg = GenConfig {
            counts: [8, 8, 8, 8],
            options_per_question: 4,
            seed: 8,
            train_fraction: 0.5,
        };
        let qcfg = QdataConfig::default();
        let (train, test) = generate(&gen_cfg).map_err(|e| e.to_string())?;
        let mut text = Vec::new();
        for q in train.iter().chain(&test) {
            for c in sc_core::qdata::expand(q, &qcfg).map_err(|e| e.to_string())? {
                text.push(c.sentence);
            }
        }
        let vocab = build_vocab(text.iter().map(String::as_str), 1).map_err(|e| e.to_string())?;
        let model: Model<f32> = Model::init(ModelConfig {
            max_len: 64, // C3/C4 stems run past the tiny default
            ..ModelConfig::tiny(vocab.size(), 9)
        })
        .map_err(|e| e.to_string())?;
        for q in train.iter().chain(&test) {
            let p = solve(&model, &vocab, q, &qcfg).map_err(|e| e.to_string())?;
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(format!("{}: confidence {} outside [0,1]", q.id, p.confidence));
            }
            for &v in &p.per_option_p_right {
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("{}: option probability {v} outside [0,1]", q.id));
                }
            }
        }
        Ok("1000 classify sums within 1e-6; all solver probabilities in [0,1]".into())
    });
}

// keep the shared seed-disjointness honest: splits must never share ids
#[test]
fn split_ids_disjoint_desk_scale() {
    let (train, test) = generate(&GenConfig {
        counts: [30, 30, 30, 30],
        options_per_question: 4,
        seed: 1,
        train_fraction: 0.8,
    })
    .unwrap();
    let ids: HashSet<_> = train.iter().map(|q| q.id.clone()).collect();
    assert!(test.iter().all(|q| !ids.contains(&q.id)));
}
