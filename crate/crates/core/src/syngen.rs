//! Deterministic generator of templated ESL-style sentence-completion
//! questions across C1-C4, with construction-guaranteed unique correct
//! answers.
//!
//! Four template families map one-to-one onto the categories:
//! subject-verb agreement (C1), infinitive/gerund verb-phrase choice (C2),
//! paired single-token modals/pronouns/correlatives across two blanks (C3),
//! paired multi-token modal and infinitive phrases across two blanks (C4).
//! Every question is validated against an independent rule checker before
//! it is emitted: exactly one option must satisfy the grammar rule.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qdata::{
    expand, parse_question, split_option, Category, OptionSegments, QdataConfig, QuestionRecord,
    ScQuestion,
};

pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Total questions per category (train + test), indexed C1..C4.
    pub counts: [usize; 4],
    /// Options per question, 3 to 5.
    pub options_per_question: usize,
    pub seed: u64,
    /// Fraction of each category assigned to the train split.
    pub train_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            // desk scale: 500 train / 100 test per category at 5:1
            counts: [600, 600, 600, 600],
            options_per_question: 4,
            seed: 0,
            train_fraction: 5.0 / 6.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(3..=5).contains(&self.options_per_question) {
            return Err(Error::Config(format!(
                "options_per_question must be 3..=5, got {}",
                self.options_per_question
            )));
        }
        if self.counts.iter().sum::<usize>() == 0 {
            return Err(Error::Config("total question count must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0,1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// Sidecar manifest recording seed, counts, and template version.
    pub fn manifest(&self) -> String {
        format!(
            "template_version={}\nseed={}\nc1={}\nc2={}\nc3={}\nc4={}\noptions_per_question={}\ntrain_fraction={}\n",
            TEMPLATE_VERSION,
            self.seed,
            self.counts[0],
            self.counts[1],
            self.counts[2],
            self.counts[3],
            self.options_per_question,
            self.train_fraction
        )
    }
}

struct VerbParadigm {
    base: &'static str,
    third: &'static str,
    past: &'static str,
    gerund: &'static str,
    participle: &'static str,
    complement: &'static str,
}

// Irregular verbs only: the participle must differ from the past form so
// that no distractor form is accidentally grammatical as a finite verb.
const VERBS: &[VerbParadigm] = &[
    VerbParadigm { base: "go", third: "goes", past: "went", gerund: "going", participle: "gone", complement: "to school" },
    VerbParadigm { base: "eat", third: "eats", past: "ate", gerund: "eating", participle: "eaten", complement: "an apple" },
    VerbParadigm { base: "write", third: "writes", past: "wrote", gerund: "writing", participle: "written", complement: "a letter" },
    VerbParadigm { base: "take", third: "takes", past: "took", gerund: "taking", participle: "taken", complement: "the bus" },
    VerbParadigm { base: "see", third: "sees", past: "saw", gerund: "seeing", participle: "seen", complement: "a film" },
    VerbParadigm { base: "give", third: "gives", past: "gave", gerund: "giving", participle: "given", complement: "a speech" },
    VerbParadigm { base: "drive", third: "drives", past: "drove", gerund: "driving", participle: "driven", complement: "to work" },
    VerbParadigm { base: "speak", third: "speaks", past: "spoke", gerund: "speaking", participle: "spoken", complement: "English" },
    VerbParadigm { base: "sing", third: "sings", past: "sang", gerund: "singing", participle: "sung", complement: "a song" },
    VerbParadigm { base: "draw", third: "draws", past: "drew", gerund: "drawing", participle: "drawn", complement: "a picture" },
    VerbParadigm { base: "ride", third: "rides", past: "rode", gerund: "riding", participle: "ridden", complement: "a bike" },
    VerbParadigm { base: "swim", third: "swims", past: "swam", gerund: "swimming", participle: "swum", complement: "in the pool" },
    VerbParadigm { base: "drink", third: "drinks", past: "drank", gerund: "drinking", participle: "drunk", complement: "some milk" },
    VerbParadigm { base: "wear", third: "wears", past: "wore", gerund: "wearing", participle: "worn", complement: "a uniform" },
    VerbParadigm { base: "fly", third: "flies", past: "flew", gerund: "flying", participle: "flown", complement: "a kite" },
    VerbParadigm { base: "grow", third: "grows", past: "grew", gerund: "growing", participle: "grown", complement: "some flowers" },
    VerbParadigm { base: "choose", third: "chooses", past: "chose", gerund: "choosing", participle: "chosen", complement: "a book" },
    VerbParadigm { base: "begin", third: "begins", past: "began", gerund: "beginning", participle: "begun", complement: "the lesson" },
];

const SUBJECTS_3SG: &[&str] = &[
    "She", "He", "Tom", "Mary", "My brother", "His sister", "The teacher",
    "Our neighbor", "The old man", "Her friend", "My uncle", "The little girl",
];
const SUBJECTS_PL: &[&str] = &[
    "They", "We", "You", "The students", "My parents", "His friends",
    "The children", "Those workers", "Her cousins", "The farmers",
];
const ADVERBIALS: &[&str] = &[
    "every day", "every morning", "every weekend", "on Sundays",
    "after dinner", "twice a week", "once a month", "in the afternoon",
];

const MAIN_INFINITIVE: &[&str] = &[
    "decided", "wanted", "hoped", "planned", "promised", "agreed", "refused", "offered",
];
const MAIN_GERUND: &[&str] = &["enjoys", "avoids", "keeps", "suggests", "practices"];
const PAST_ADJUNCTS: &[&str] = &["yesterday", "last week", "this morning", "after lunch"];

const NOUNS: &[&str] = &["T-shirt", "poster", "cap", "bag", "notebook"];
const STAR_NAMES: &[&str] = &["Yao Ming", "Jackson", "Jordan", "Messi"];
const BOY_NAMES: &[&str] = &["John", "Peter", "Mike", "David", "Tony"];
const COLORS: &[&str] = &["black", "blue", "red", "green"];

// inconsistent modal pairs for the deduction frame; the key is (must, can't)
const MODAL_DISTRACTOR_PAIRS: &[(&str, &str)] = &[
    ("can", "can't"),
    ("may", "needn't"),
    ("must", "mustn't"),
    ("may", "mustn't"),
    ("can", "needn't"),
    ("must", "needn't"),
];

const MALE_RELATIONS: &[&str] = &["brother", "father", "uncle", "grandfather"];
const FEMALE_RELATIONS: &[&str] = &["sister", "mother", "aunt", "grandmother"];
const MALE_NAMES: &[&str] = &["Tom", "Jack", "Peter", "Mike", "David"];
const FEMALE_NAMES: &[&str] = &["Mary", "Lucy", "Anna", "Kate", "Alice"];

const SO_THAT_FRAMES: &[(&str, &str)] = &[
    ("tall", "he can reach the shelf"),
    ("strong", "he can lift the box"),
    ("clever", "he can solve the puzzle"),
    ("fast", "he can win the race"),
    ("rich", "he can buy the car"),
];

/// Grammar rule attached to one generated question; the independent oracle
/// used to verify the single-correct-answer guarantee.
#[derive(Debug, Clone)]
pub enum Rule {
    /// Finite present must agree with the subject.
    SubjectVerbAgreement { third: String, base: String, want_third: bool },
    /// Bare infinitive after do-support.
    BareInfinitive { base: String },
    /// "to <base>" after an infinitive-taking verb.
    ToInfinitive { base: String },
    /// Gerund complement after a gerund-taking verb.
    GerundObject { gerund: String, object: String },
    /// Deduction frame: positive certainty + negative impossibility.
    ModalPair,
    /// Gender-consistent subject and possessive pronouns.
    PronounPair { feminine: bool },
    /// "so <adj> that <clause>" correlative.
    SoThat,
    /// Deduction frame with modal + base verb phrases.
    ModalVerbPhrase,
    /// Two infinitive complements, both "to <base>".
    DoubleInfinitive { base1: String, base2: String },
}

/// Does this option satisfy the rule? Independent of how the distractors
/// were produced.
pub fn rule_accepts(rule: &Rule, segs: &OptionSegments) -> bool {
    let s = &segs.segments;
    match rule {
        Rule::SubjectVerbAgreement { third, base, want_third } => {
            s.len() == 1 && s[0] == *if *want_third { third } else { base }
        }
        Rule::BareInfinitive { base } => s.len() == 1 && s[0] == *base,
        Rule::ToInfinitive { base } => s.len() == 1 && s[0] == format!("to {base}"),
        Rule::GerundObject { gerund, object } => {
            s.len() == 1 && s[0] == format!("{gerund} {object}")
        }
        Rule::ModalPair => s.len() == 2 && s[0] == "must" && s[1] == "can't",
        Rule::PronounPair { feminine } => {
            s.len() == 2
                && if *feminine {
                    s[0] == "She" && s[1] == "her"
                } else {
                    s[0] == "He" && s[1] == "his"
                }
        }
        Rule::SoThat => s.len() == 2 && s[0] == "so" && s[1] == "that",
        Rule::ModalVerbPhrase => {
            s.len() == 2 && s[0] == "must belong" && s[1] == "can't be"
        }
        Rule::DoubleInfinitive { base1, base2 } => {
            s.len() == 2 && s[0] == format!("to {base1}") && s[1] == format!("to {base2}")
        }
    }
}

struct Draft {
    stem: String,
    key: String,
    distractors: Vec<String>,
    rule: Rule,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

fn sample_distinct(rng: &mut ChaCha8Rng, pool: &[String], k: usize) -> Option<Vec<String>> {
    let mut unique: Vec<String> = Vec::new();
    for p in pool {
        if !unique.contains(p) {
            unique.push(p.clone());
        }
    }
    if unique.len() < k {
        return None;
    }
    unique.shuffle(rng);
    unique.truncate(k);
    Some(unique)
}

fn draft_c1(rng: &mut ChaCha8Rng, m: usize) -> Option<Draft> {
    let verb = pick(rng, VERBS);
    let adverbial = pick(rng, ADVERBIALS);
    let use_aux = m >= 5 || rng.gen_bool(0.5);
    if use_aux {
        // do-support forces the bare infinitive
        let third_subject = rng.gen_bool(0.5);
        let subject = if third_subject {
            pick(rng, SUBJECTS_3SG)
        } else {
            pick(rng, SUBJECTS_PL)
        };
        let aux = if third_subject { "Does" } else { "Do" };
        let stem = format!(
            "{aux} {} ___ {} {}?",
            lowercase_first(subject),
            verb.complement,
            adverbial
        );
        let pool: Vec<String> = [verb.third, verb.gerund, verb.participle, verb.past]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let distractors = sample_distinct(rng, &pool, m - 1)?;
        Some(Draft {
            stem,
            key: verb.base.to_string(),
            distractors,
            rule: Rule::BareInfinitive { base: verb.base.to_string() },
        })
    } else {
        let want_third = rng.gen_bool(0.5);
        let subject = if want_third {
            pick(rng, SUBJECTS_3SG)
        } else {
            pick(rng, SUBJECTS_PL)
        };
        let stem = format!("{subject} ___ {} {}.", verb.complement, adverbial);
        let (key, wrong_finite) = if want_third {
            (verb.third, verb.base)
        } else {
            (verb.base, verb.third)
        };
        let pool: Vec<String> = [wrong_finite, verb.gerund, verb.participle]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let distractors = sample_distinct(rng, &pool, m - 1)?;
        Some(Draft {
            stem,
            key: key.to_string(),
            distractors,
            rule: Rule::SubjectVerbAgreement {
                third: verb.third.to_string(),
                base: verb.base.to_string(),
                want_third,
            },
        })
    }
}

fn draft_c2(rng: &mut ChaCha8Rng, m: usize) -> Option<Draft> {
    let verb = pick(rng, VERBS);
    if rng.gen_bool(0.5) {
        // infinitive-taking main verb
        let subject = if rng.gen_bool(0.5) {
            pick(rng, SUBJECTS_3SG)
        } else {
            pick(rng, SUBJECTS_PL)
        };
        let main = pick(rng, MAIN_INFINITIVE);
        let adjunct = pick(rng, PAST_ADJUNCTS);
        let stem = format!("{subject} {main} ___ {} {adjunct}.", verb.complement);
        let pool: Vec<String> = [verb.third, verb.gerund, verb.past, verb.participle]
            .iter()
            .map(|f| format!("to {f}"))
            .collect();
        let distractors = sample_distinct(rng, &pool, m - 1)?;
        Some(Draft {
            stem,
            key: format!("to {}", verb.base),
            distractors,
            rule: Rule::ToInfinitive { base: verb.base.to_string() },
        })
    } else {
        // gerund-taking main verb, object inside the option
        let subject = pick(rng, SUBJECTS_3SG);
        let main = pick(rng, MAIN_GERUND);
        let adverbial = pick(rng, ADVERBIALS);
        let stem = format!("{subject} {main} ___ {adverbial}.");
        let obj = verb.complement;
        let pool: Vec<String> = vec![
            format!("to {} {obj}", verb.base),
            format!("{} {obj}", verb.past),
            format!("{} {obj}", verb.third),
            format!("{} {obj}", verb.base),
        ];
        let distractors = sample_distinct(rng, &pool, m - 1)?;
        Some(Draft {
            stem,
            key: format!("{} {obj}", verb.gerund),
            distractors,
            rule: Rule::GerundObject {
                gerund: verb.gerund.to_string(),
                object: obj.to_string(),
            },
        })
    }
}

fn modal_stem(rng: &mut ChaCha8Rng, with_verbs: bool) -> String {
    let noun = pick(rng, NOUNS);
    let star = pick(rng, STAR_NAMES);
    let boy = pick(rng, BOY_NAMES);
    let color = pick(rng, COLORS);
    if with_verbs {
        format!(
            "— That {noun} with {star}'s picture on it ___ belong to {boy}. He likes {star} a lot. — No, it ___ be his. He hates {color} color."
        )
    } else {
        format!(
            "— That {noun} with {star}'s picture on it ___ to {boy}. He likes {star} a lot. — No, it ___ his. He hates {color} color."
        )
    }
}

fn draft_c3(rng: &mut ChaCha8Rng, m: usize) -> Option<Draft> {
    match rng.gen_range(0..3u8) {
        0 => {
            let stem = modal_stem(rng, true);
            let pool: Vec<String> = MODAL_DISTRACTOR_PAIRS
                .iter()
                .map(|(a, b)| format!("{a}; {b}"))
                .collect();
            let distractors = sample_distinct(rng, &pool, m - 1)?;
            Some(Draft {
                stem,
                key: "must; can't".to_string(),
                distractors,
                rule: Rule::ModalPair,
            })
        }
        1 => {
            let feminine = rng.gen_bool(0.5);
            let relation = if feminine {
                pick(rng, FEMALE_RELATIONS)
            } else {
                pick(rng, MALE_RELATIONS)
            };
            let name = if feminine {
                pick(rng, FEMALE_NAMES)
            } else {
                pick(rng, MALE_NAMES)
            };
            let stem = format!("___ is my {relation}, and ___ name is {name}.");
            let key = if feminine { "She; her" } else { "He; his" };
            let pool: Vec<String> = ["He; her", "She; his", "It; its", "They; their", "He; his", "She; her"]
                .iter()
                .filter(|p| **p != key)
                .map(|p| p.to_string())
                .collect();
            let distractors = sample_distinct(rng, &pool, m - 1)?;
            Some(Draft {
                stem,
                key: key.to_string(),
                distractors,
                rule: Rule::PronounPair { feminine },
            })
        }
        _ => {
            let subject = pick(rng, &["He", "My brother", "Tom", "The boy"]);
            let (adj, clause) = pick(rng, SO_THAT_FRAMES);
            let stem = format!("{subject} is ___ {adj} ___ {clause}.");
            let pool: Vec<String> = ["too; that", "so; too", "such; that", "too; to", "very; that"]
                .iter()
                .map(|p| p.to_string())
                .collect();
            let distractors = sample_distinct(rng, &pool, m - 1)?;
            Some(Draft {
                stem,
                key: "so; that".to_string(),
                distractors,
                rule: Rule::SoThat,
            })
        }
    }
}

fn draft_c4(rng: &mut ChaCha8Rng, m: usize) -> Option<Draft> {
    if rng.gen_bool(0.5) {
        let stem = modal_stem(rng, false);
        let pool: Vec<String> = [
            "may belong; needn't be",
            "can belong; mustn't be",
            "must belong; mustn't be",
            "must belongs; can't be",
            "must belong; can't is",
            "must belonging; can't be",
            "may belongs; can't been",
        ]
        .iter()
        .map(|p| p.to_string())
        .collect();
        let distractors = sample_distinct(rng, &pool, m - 1)?;
        Some(Draft {
            stem,
            key: "must belong; can't be".to_string(),
            distractors,
            rule: Rule::ModalVerbPhrase,
        })
    } else {
        let subject = pick(rng, SUBJECTS_PL);
        let main1 = pick(rng, MAIN_INFINITIVE);
        let main2 = pick(rng, MAIN_INFINITIVE);
        let v1 = pick(rng, VERBS);
        let v2 = pick(rng, VERBS);
        if v1.base == v2.base {
            return None;
        }
        let stem = format!(
            "{subject} {main1} ___ {} and {main2} ___ {}.",
            v1.complement, v2.complement
        );
        let key = format!("to {}; to {}", v1.base, v2.base);
        let pool: Vec<String> = vec![
            format!("to {}; to {}", v1.gerund, v2.base),
            format!("to {}; to {}", v1.base, v2.gerund),
            format!("to {}; to {}", v1.past, v2.past),
            format!("to {}; to {}", v1.third, v2.base),
            format!("to {}; to {}", v1.base, v2.third),
        ];
        let distractors = sample_distinct(rng, &pool, m - 1)?;
        Some(Draft {
            stem,
            key,
            distractors,
            rule: Rule::DoubleInfinitive {
                base1: v1.base.to_string(),
                base2: v2.base.to_string(),
            },
        })
    }
}

fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        // proper nouns and "I" keep their capital
        Some(c) if s.len() > 1 && !is_proper(s) => {
            c.to_ascii_lowercase().to_string() + chars.as_str()
        }
        _ => s.to_string(),
    }
}

fn is_proper(s: &str) -> bool {
    matches!(s, "Tom" | "Mary" | "I" | "You")
}

fn sub_seed(seed: u64, category_index: usize) -> u64 {
    seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(category_index as u64 + 1)
}

fn draft_for(category: Category, rng: &mut ChaCha8Rng, m: usize) -> Option<Draft> {
    match category {
        Category::C1 => draft_c1(rng, m),
        Category::C2 => draft_c2(rng, m),
        Category::C3 => draft_c3(rng, m),
        Category::C4 => draft_c4(rng, m),
    }
}

fn build_question(
    draft: Draft,
    id: String,
    rng: &mut ChaCha8Rng,
    category: Category,
    qcfg: &QdataConfig,
) -> Result<ScQuestion> {
    let mut options: Vec<String> = Vec::with_capacity(draft.distractors.len() + 1);
    options.push(draft.key.clone());
    options.extend(draft.distractors);
    options.shuffle(rng);

    // independent oracle: exactly one option may pass the rule
    let mut correct = Vec::new();
    for (i, opt) in options.iter().enumerate() {
        let segs = split_option(opt, qcfg)?;
        if rule_accepts(&draft.rule, &segs) {
            correct.push(i);
        }
    }
    let [answer] = correct.as_slice() else {
        return Err(Error::Structural(format!(
            "template for {category} produced {} rule-satisfying options in {options:?}",
            correct.len()
        )));
    };

    let record = QuestionRecord {
        id,
        stem: draft.stem,
        options,
        answer: Some(*answer),
        split: None,
    };
    let q = parse_question(&record, qcfg)?;
    if q.category != category {
        return Err(Error::Structural(format!(
            "template intended {category} but categorize says {}",
            q.category
        )));
    }
    Ok(q)
}

/// Generates (train, test) datasets: exact per-category counts, id-disjoint
/// splits, every question keyed, byte-identical output for a given config.
pub fn generate(cfg: &GenConfig) -> Result<(Vec<ScQuestion>, Vec<ScQuestion>)> {
    cfg.validate()?;
    let qcfg = QdataConfig::default();
    let m = cfg.options_per_question;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (ci, &category) in Category::ALL.iter().enumerate() {
        let count = cfg.counts[ci];
        if count == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, ci));
        let mut seen: HashSet<String> = HashSet::new();
        let mut questions = Vec::with_capacity(count);
        let mut attempts = 0usize;
        let max_attempts = 200 * count + 10_000;
        while questions.len() < count {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::Structural(format!(
                    "template pool for {category} cannot satisfy {count} distinct questions at m={m}"
                )));
            }
            let Some(draft) = draft_for(category, &mut rng, m) else {
                continue;
            };
            let surface = format!("{}|{}|{}", draft.stem, draft.key, draft.distractors.join("|"));
            if !seen.insert(surface) {
                continue;
            }
            let id = format!("{}-{:05}", category.name().to_lowercase(), questions.len());
            let q = build_question(draft, id, &mut rng, category, &qcfg)?;
            questions.push(q);
        }
        let n_train = ((count as f64) * cfg.train_fraction).round() as usize;
        for (i, mut q) in questions.into_iter().enumerate() {
            if i < n_train {
                q.split = Some("train".into());
                train.push(q);
            } else {
                q.split = Some("test".into());
                test.push(q);
            }
        }
    }
    Ok((train, test))
}

/// Pretraining corpus: the rule-satisfying filled sentences of the train
/// split, deduplicated and filtered against test-question surface forms.
pub fn corpus(cfg: &GenConfig) -> Result<Vec<String>> {
    let (train, test) = generate(cfg)?;
    let qcfg = QdataConfig::default();
    let mut test_correct: HashSet<String> = HashSet::new();
    for q in &test {
        for c in expand(q, &qcfg)? {
            if c.label == Some(true) {
                test_correct.insert(c.sentence);
            }
        }
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for q in &train {
        for c in expand(q, &qcfg)? {
            if c.label == Some(true)
                && !test_correct.contains(&c.sentence)
                && seen.insert(c.sentence.clone())
            {
                out.push(c.sentence);
            }
        }
    }
    Ok(out)
}
