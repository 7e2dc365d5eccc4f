//! Randomized structural invariants for parsing, filling, and tokenizing.

use proptest::prelude::*;

use sc_core::qdata::{
    count_blanks, fill, normalize_whitespace, parse_dataset, parse_question, render_dataset,
    OptionSegments, QdataConfig, QuestionRecord,
};
use sc_core::syngen::{generate, GenConfig};
use sc_core::tokenizer::{build_vocab, decode, encode, tokenize, BOS, EOS};

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,8}"
}

fn words(min: usize, max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(word(), min..=max)
}

proptest! {
    /// A stem built from k blank runs has exactly k blanks, and filling it
    /// puts every segment at its positional slot with no marker left over.
    #[test]
    fn fill_is_positional(
        chunks in prop::collection::vec(words(1, 3), 2..=5),
        segs in words(1, 4),
        run_len in 3usize..6,
    ) {
        let cfg = QdataConfig::default();
        let blanks = chunks.len() - 1;
        prop_assume!(segs.len() >= blanks);
        let segs = &segs[..blanks];
        let marker = "_".repeat(run_len);
        let stem = chunks
            .iter()
            .map(|c| c.join(" "))
            .collect::<Vec<_>>()
            .join(&format!(" {marker} "));
        prop_assert_eq!(count_blanks(&stem, &cfg), blanks);
        if blanks == 0 {
            return Ok(());
        }
        let filled = fill(
            &stem,
            &OptionSegments { segments: segs.to_vec() },
            &cfg,
        )
        .unwrap();
        prop_assert!(!filled.contains("___"));
        // segments appear in order
        let mut rest = filled.as_str();
        for s in segs {
            let at = rest.find(s.as_str());
            prop_assert!(at.is_some(), "{} missing from {}", s, rest);
            rest = &rest[at.unwrap() + s.len()..];
        }
        prop_assert_eq!(filled.clone(), normalize_whitespace(&filled));
    }

    /// Any parseable question survives render -> parse unchanged.
    #[test]
    fn question_round_trip(
        pre in words(1, 4),
        post in words(1, 4),
        opts in prop::collection::hash_set("[a-z]{1,6}", 2..=5),
    ) {
        let cfg = QdataConfig::default();
        let options: Vec<String> = opts.into_iter().collect();
        let record = QuestionRecord {
            id: "p1".into(),
            stem: format!("{} ___ {}.", pre.join(" "), post.join(" ")),
            options: options.clone(),
            answer: Some(0),
            split: Some("train".into()),
        };
        let q = parse_question(&record, &cfg).unwrap();
        let rendered = render_dataset(std::slice::from_ref(&q)).unwrap();
        let reparsed = parse_dataset(&rendered, &cfg).unwrap();
        prop_assert_eq!(reparsed, vec![q]);
    }

    /// encode always brackets with BOS/EOS; decode inverts it back to the
    /// token stream.
    #[test]
    fn tokenizer_round_trip(ws in words(1, 8)) {
        let text = ws.join(" ");
        let vocab = build_vocab([text.as_str()], 1).unwrap();
        let seq = encode(&text, &vocab);
        prop_assert_eq!(seq.ids.first(), Some(&BOS));
        prop_assert_eq!(seq.ids.last(), Some(&EOS));
        let decoded = decode(&seq.ids, &vocab).unwrap();
        prop_assert_eq!(decoded, tokenize(&text).join(" "));
    }

    /// Generated datasets round-trip through the serialized form for any
    /// seed and option count.
    #[test]
    fn generated_round_trip(seed in 0u64..1000, m in 3usize..=5) {
        let cfg = GenConfig {
            counts: [3, 3, 3, 3],
            options_per_question: m,
            seed,
            train_fraction: 0.5,
        };
        let (train, test) = generate(&cfg).unwrap();
        let qcfg = QdataConfig::default();
        for qs in [train, test] {
            let rendered = render_dataset(&qs).unwrap();
            prop_assert_eq!(parse_dataset(&rendered, &qcfg).unwrap(), qs);
        }
    }
}
