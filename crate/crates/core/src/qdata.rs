//! Data model, parsing, categorization, and option-filling expansion of
//! sentence-completion questions.
//!
//! A question is a stem containing one or more blank markers (a run of three
//! or more underscores by default) plus an ordered list of options. Options
//! for multi-blank stems carry one semicolon-separated segment per blank.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker and separator conventions. Exam sources vary, so both are
/// configurable; the defaults match common exam typography.
#[derive(Debug, Clone)]
pub struct QdataConfig {
    /// Minimum run of consecutive underscores that counts as one blank.
    pub blank_min_run: usize,
    /// Separator between per-blank option segments.
    pub option_separator: char,
}

impl Default for QdataConfig {
    fn default() -> Self {
        QdataConfig {
            blank_min_run: 3,
            option_separator: ';',
        }
    }
}

/// Difficulty category by blank count x per-segment token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    /// One blank, every segment a single token.
    C1,
    /// One blank, some segment has more than one token.
    C2,
    /// Many blanks, all segments single tokens.
    C3,
    /// Many blanks, some segment has more than one token.
    C4,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::C1, Category::C2, Category::C3, Category::C4];

    pub fn name(&self) -> &'static str {
        match self {
            Category::C1 => "C1",
            Category::C2 => "C2",
            Category::C3 => "C3",
            Category::C4 => "C4",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-blank pieces of one option.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionSegments {
    pub segments: Vec<String>,
}

impl OptionSegments {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// True if any segment has more than one whitespace-delimited token.
    pub fn has_multi_token_segment(&self) -> bool {
        self.segments
            .iter()
            .any(|s| s.split_whitespace().count() > 1)
    }
}

/// One serialized dataset record: a flat JSON object per line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QuestionRecord {
    pub id: String,
    pub stem: String,
    pub options: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

/// A parsed sentence-completion question. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScQuestion {
    pub id: String,
    pub stem: String,
    pub options: Vec<String>,
    pub answer_index: Option<usize>,
    pub split: Option<String>,
    pub blank_count: usize,
    pub category: Category,
    /// Indices of options whose segment count does not match the blank count.
    /// Such options fail at expansion time; parsing only flags them.
    pub mismatched_options: Vec<usize>,
}

impl ScQuestion {
    pub fn num_options(&self) -> usize {
        self.options.len()
    }

    pub fn to_record(&self) -> QuestionRecord {
        QuestionRecord {
            id: self.id.clone(),
            stem: self.stem.clone(),
            options: self.options.clone(),
            answer: self.answer_index,
            split: self.split.clone(),
        }
    }
}

/// One option substituted into the stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilledCandidate {
    pub question_id: String,
    pub option_index: usize,
    pub sentence: String,
    pub label: Option<bool>,
}

/// Number of non-overlapping blank-marker occurrences in a stem.
pub fn count_blanks(stem: &str, cfg: &QdataConfig) -> usize {
    blank_runs(stem, cfg).len()
}

/// Byte ranges of the blank markers in left-to-right order.
fn blank_runs(stem: &str, cfg: &QdataConfig) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let bytes = stem.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'_' {
            let start = i;
            while i < bytes.len() && bytes[i] == b'_' {
                i += 1;
            }
            if i - start >= cfg.blank_min_run {
                runs.push((start, i));
            }
        } else {
            i += 1;
        }
    }
    runs
}

/// Splits an option into per-blank segments on the configured separator.
pub fn split_option(option_text: &str, cfg: &QdataConfig) -> Result<OptionSegments> {
    if option_text.trim().is_empty() {
        return Err(Error::Structural("empty option text".into()));
    }
    let mut segments = Vec::new();
    for raw in option_text.split(cfg.option_separator) {
        let seg = raw.trim();
        if seg.is_empty() {
            return Err(Error::Structural(format!(
                "empty segment in option {option_text:?}"
            )));
        }
        segments.push(seg.to_string());
    }
    Ok(OptionSegments { segments })
}

/// Collapse whitespace runs to single spaces and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Substitutes segments into the stem's blanks in left-to-right order.
pub fn fill(stem: &str, option: &OptionSegments, cfg: &QdataConfig) -> Result<String> {
    let runs = blank_runs(stem, cfg);
    if runs.len() != option.len() {
        return Err(Error::FillMismatch {
            segments: option.len(),
            blanks: runs.len(),
        });
    }
    let mut out = String::with_capacity(stem.len());
    let mut cursor = 0;
    for ((start, end), segment) in runs.iter().zip(&option.segments) {
        out.push_str(&stem[cursor..*start]);
        out.push_str(segment);
        cursor = *end;
    }
    out.push_str(&stem[cursor..]);
    Ok(normalize_whitespace(&out))
}

fn derive_category(blanks: usize, options: &[OptionSegments]) -> Category {
    let many_token = options.iter().any(|o| o.has_multi_token_segment());
    match (blanks > 1, many_token) {
        (false, false) => Category::C1,
        (false, true) => Category::C2,
        (true, false) => Category::C3,
        (true, true) => Category::C4,
    }
}

/// Category per the blank-count x token-count taxonomy. Only options whose
/// segment count matches the blank count participate; errors if none do.
pub fn categorize(q: &ScQuestion, cfg: &QdataConfig) -> Result<Category> {
    let matching: Vec<OptionSegments> = q
        .options
        .iter()
        .enumerate()
        .filter(|(i, _)| !q.mismatched_options.contains(i))
        .map(|(_, o)| split_option(o, cfg))
        .collect::<Result<_>>()?;
    if matching.is_empty() {
        return Err(Error::Structural(format!(
            "question {}: every option's segment count mismatches the blank count",
            q.id
        )));
    }
    Ok(derive_category(q.blank_count, &matching))
}

/// Parses one dataset record into an [`ScQuestion`].
pub fn parse_question(record: &QuestionRecord, cfg: &QdataConfig) -> Result<ScQuestion> {
    if record.id.is_empty() {
        return Err(Error::parse("id", "must be non-empty"));
    }
    let blank_count = count_blanks(&record.stem, cfg);
    if blank_count == 0 {
        return Err(Error::Structural(format!(
            "question {}: stem contains no blank marker",
            record.id
        )));
    }
    if record.options.len() < 2 {
        return Err(Error::parse(
            "options",
            format!("need at least 2 options, got {}", record.options.len()),
        ));
    }
    let normalized: Vec<String> = record.options.iter().map(|o| normalize_whitespace(o)).collect();
    for i in 0..normalized.len() {
        for j in (i + 1)..normalized.len() {
            if normalized[i] == normalized[j] {
                return Err(Error::Structural(format!(
                    "question {}: duplicate option {:?}",
                    record.id, normalized[i]
                )));
            }
        }
    }
    if let Some(a) = record.answer {
        if a >= record.options.len() {
            return Err(Error::parse(
                "answer",
                format!("index {a} out of range for {} options", record.options.len()),
            ));
        }
    }

    let mut mismatched = Vec::new();
    let mut matching_segments = Vec::new();
    for (i, opt) in record.options.iter().enumerate() {
        let segs = split_option(opt, cfg)?;
        if segs.len() != blank_count {
            mismatched.push(i);
        } else {
            matching_segments.push(segs);
        }
    }
    if matching_segments.is_empty() {
        return Err(Error::Structural(format!(
            "question {}: every option's segment count mismatches the blank count",
            record.id
        )));
    }
    let category = derive_category(blank_count, &matching_segments);

    Ok(ScQuestion {
        id: record.id.clone(),
        stem: record.stem.clone(),
        options: record.options.clone(),
        answer_index: record.answer,
        split: record.split.clone(),
        blank_count,
        category,
        mismatched_options: mismatched,
    })
}

/// Expands a question into its `m` filled candidates, in option order.
///
/// Labels are set iff the question carries an answer key. Any unfillable
/// option fails the whole expansion; inference paths that want to degrade
/// gracefully score options individually via the solver instead.
pub fn expand(q: &ScQuestion, cfg: &QdataConfig) -> Result<Vec<FilledCandidate>> {
    let mut out = Vec::with_capacity(q.options.len());
    for (i, opt) in q.options.iter().enumerate() {
        let segs = split_option(opt, cfg)?;
        let sentence = fill(&q.stem, &segs, cfg)?;
        out.push(FilledCandidate {
            question_id: q.id.clone(),
            option_index: i,
            sentence,
            label: q.answer_index.map(|a| a == i),
        });
    }
    Ok(out)
}

/// Parses a line-delimited dataset (one JSON record per line).
pub fn parse_dataset(text: &str, cfg: &QdataConfig) -> Result<Vec<ScQuestion>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionRecord = serde_json::from_str(line).map_err(|e| {
            Error::parse("record", format!("line {}: {e}", lineno + 1))
        })?;
        out.push(parse_question(&record, cfg)?);
    }
    Ok(out)
}

/// Renders questions back to the line-delimited dataset format.
pub fn render_dataset(questions: &[ScQuestion]) -> Result<String> {
    let mut out = String::new();
    for q in questions {
        out.push_str(&serde_json::to_string(&q.to_record())?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const TABLE1_STEM: &str = "— That T-shirt with Yao Ming's picture on it ___ belong to John. He likes him a lot. — No, it ___ be his. He hates black color.";
    pub const TABLE1_OPTIONS: [&str; 4] = [
        "can; can't",
        "may; needn't",
        "must; mustn't",
        "must; can't",
    ];

    fn cfg() -> QdataConfig {
        QdataConfig::default()
    }

    fn table1_record() -> QuestionRecord {
        QuestionRecord {
            id: "table1".into(),
            stem: TABLE1_STEM.into(),
            options: TABLE1_OPTIONS.iter().map(|s| s.to_string()).collect(),
            answer: Some(3),
            split: None,
        }
    }

    #[test]
    fn count_blanks_cases() {
        assert_eq!(count_blanks("I ___ happy.", &cfg()), 1);
        assert_eq!(count_blanks(TABLE1_STEM, &cfg()), 2);
        assert_eq!(count_blanks("no blanks here", &cfg()), 0);
        // two-underscore run is not a marker at min_run 3
        assert_eq!(count_blanks("a __ b ____ c", &cfg()), 1);
    }

    #[test]
    fn split_option_cases() {
        let s = split_option("must; can't", &cfg()).unwrap();
        assert_eq!(s.segments, vec!["must", "can't"]);
        let s = split_option("went", &cfg()).unwrap();
        assert_eq!(s.segments, vec!["went"]);
        assert!(split_option("a ;; b", &cfg()).is_err());
    }

    #[test]
    fn parse_table1() {
        let q = parse_question(&table1_record(), &cfg()).unwrap();
        assert_eq!(q.num_options(), 4);
        assert_eq!(q.blank_count, 2);
        assert_eq!(q.category, Category::C3);
        assert!(q.mismatched_options.is_empty());
    }

    #[test]
    fn parse_minimal() {
        let record: QuestionRecord =
            serde_json::from_str(r#"{"id":"q1","stem":"I ___ happy.","options":["am","is"],"answer":0}"#)
                .unwrap();
        let q = parse_question(&record, &cfg()).unwrap();
        assert_eq!(q.blank_count, 1);
        assert_eq!(q.num_options(), 2);
        assert_eq!(q.answer_index, Some(0));
    }

    #[test]
    fn parse_flags_mismatched_option() {
        let record = QuestionRecord {
            id: "q".into(),
            stem: "It ___ fine.".into(),
            options: vec!["goes; well".into(), "works".into()],
            answer: None,
            split: None,
        };
        let q = parse_question(&record, &cfg()).unwrap();
        assert_eq!(q.mismatched_options, vec![0]);
        // the mismatched option still fails at expansion time
        assert!(expand(&q, &cfg()).is_err());
    }

    #[test]
    fn parse_errors() {
        let mut r = table1_record();
        r.stem = "no blanks".into();
        assert!(matches!(parse_question(&r, &cfg()), Err(Error::Structural(_))));

        let mut r = table1_record();
        r.options[1] = r.options[0].clone();
        assert!(matches!(parse_question(&r, &cfg()), Err(Error::Structural(_))));

        let mut r = table1_record();
        r.answer = Some(9);
        assert!(matches!(parse_question(&r, &cfg()), Err(Error::Parse { .. })));
    }

    #[test]
    fn categorize_cases() {
        let q = parse_question(&table1_record(), &cfg()).unwrap();
        assert_eq!(categorize(&q, &cfg()).unwrap(), Category::C3);

        let r = QuestionRecord {
            id: "c2".into(),
            stem: "Never ___ smoking.".into(),
            options: vec!["give up".into(), "stop".into()],
            answer: None,
            split: None,
        };
        let q = parse_question(&r, &cfg()).unwrap();
        assert_eq!(q.category, Category::C2);

        let r = QuestionRecord {
            id: "c4".into(),
            stem: "It grows ___ and spreads ___.".into(),
            options: vec!["more and more; quickly".into(), "fast; far".into()],
            answer: None,
            split: None,
        };
        let q = parse_question(&r, &cfg()).unwrap();
        assert_eq!(q.category, Category::C4);
    }

    #[test]
    fn fill_cases() {
        let segs = split_option("must; can't", &cfg()).unwrap();
        let filled = fill(TABLE1_STEM, &segs, &cfg()).unwrap();
        assert!(filled.contains("picture on it must belong to John"));
        assert!(filled.contains("No, it can't be his"));
        assert!(!filled.contains("___"));

        let segs = split_option("am", &cfg()).unwrap();
        assert_eq!(fill("I ___ happy.", &segs, &cfg()).unwrap(), "I am happy.");

        let segs = OptionSegments {
            segments: vec!["am".into(), "so".into()],
        };
        assert!(matches!(
            fill("I ___ happy.", &segs, &cfg()),
            Err(Error::FillMismatch { segments: 2, blanks: 1 })
        ));
    }

    #[test]
    fn fill_is_positional() {
        let a = fill("x ___ y ___ z", &OptionSegments { segments: vec!["p".into(), "q".into()] }, &cfg()).unwrap();
        let b = fill("x ___ y ___ z", &OptionSegments { segments: vec!["q".into(), "p".into()] }, &cfg()).unwrap();
        assert_eq!(a, "x p y q z");
        assert_eq!(b, "x q y p z");
    }

    #[test]
    fn expand_table1() {
        let q = parse_question(&table1_record(), &cfg()).unwrap();
        let cands = expand(&q, &cfg()).unwrap();
        assert_eq!(cands.len(), 4);
        let labels: Vec<bool> = cands.iter().map(|c| c.label.unwrap()).collect();
        assert_eq!(labels, vec![false, false, false, true]);
        assert!(cands.iter().all(|c| !c.sentence.contains("___")));
    }

    #[test]
    fn expand_unkeyed_and_keyed() {
        let r = QuestionRecord {
            id: "q".into(),
            stem: "I ___ happy.".into(),
            options: vec!["am".into(), "is".into()],
            answer: None,
            split: None,
        };
        let q = parse_question(&r, &cfg()).unwrap();
        let cands = expand(&q, &cfg()).unwrap();
        assert!(cands.iter().all(|c| c.label.is_none()));

        let mut r2 = r;
        r2.answer = Some(0);
        let q = parse_question(&r2, &cfg()).unwrap();
        let cands = expand(&q, &cfg()).unwrap();
        assert_eq!(
            cands.iter().map(|c| c.label.unwrap()).collect::<Vec<_>>(),
            vec![true, false]
        );
    }

    #[test]
    fn dataset_round_trip() {
        let q = parse_question(&table1_record(), &cfg()).unwrap();
        let rendered = render_dataset(std::slice::from_ref(&q)).unwrap();
        let reparsed = parse_dataset(&rendered, &cfg()).unwrap();
        assert_eq!(reparsed, vec![q]);
    }
}
