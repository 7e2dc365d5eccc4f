//! Word-level tokenizer with a trainable vocabulary and fixed special ids.
//!
//! Lowercases, splits on whitespace, and detaches punctuation into its own
//! tokens while keeping apostrophe-internal words (can't) whole. No subword
//! units; the synthetic corpus has a closed vocabulary.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const MASK: usize = 4;
pub const NUM_SPECIALS: usize = 5;

const SPECIAL_NAMES: [&str; NUM_SPECIALS] = ["<pad>", "<bos>", "<eos>", "<unk>", "<mask>"];

const PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '—', '-'];

/// Token ids wrapped with BOS/EOS for model input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Immutable token<->id bijection with reserved specials at ids 0..5.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocab {
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(|s| s.as_str())
    }

    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let mut id_to_token: Vec<String> =
            SPECIAL_NAMES.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            token_to_id,
            id_to_token,
        }
    }

    /// Versioned text format: header "VOCAB v1 <V>", then "<id>\t<token>"
    /// lines for ids >= 5.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("VOCAB v1 {}\n", self.size());
        for (id, token) in self.id_to_token.iter().enumerate().skip(NUM_SPECIALS) {
            out.push_str(&format!("{id}\t{token}\n"));
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Vocab> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Vocab("empty vocab file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("VOCAB") || parts.next() != Some("v1") {
            return Err(Error::Vocab(format!("bad header {header:?}")));
        }
        let declared: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Vocab("missing size in header".into()))?;
        let mut tokens = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let (id_str, token) = line
                .split_once('\t')
                .ok_or_else(|| Error::Vocab(format!("bad line {line:?}")))?;
            let id: usize = id_str
                .parse()
                .map_err(|_| Error::Vocab(format!("bad id {id_str:?}")))?;
            if id != NUM_SPECIALS + tokens.len() {
                return Err(Error::Vocab(format!("id {id} out of order")));
            }
            tokens.push(token.to_string());
        }
        let vocab = Vocab::from_tokens(tokens);
        if vocab.size() != declared {
            return Err(Error::Vocab(format!(
                "declared size {declared} but found {}",
                vocab.size()
            )));
        }
        Ok(vocab)
    }
}

/// Lowercases and splits text into surface tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lowered: String = chunk
            .chars()
            .map(|c| if c.is_ascii_uppercase() { c.to_ascii_lowercase() } else { c })
            .collect();
        let chars: Vec<char> = lowered.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        let mut leading = Vec::new();
        let mut trailing = Vec::new();
        while start < end && PUNCT.contains(&chars[start]) && !is_internal_apostrophe(&chars, start)
        {
            leading.push(chars[start].to_string());
            start += 1;
        }
        while end > start && PUNCT.contains(&chars[end - 1]) && !is_internal_apostrophe(&chars, end - 1)
        {
            trailing.push(chars[end - 1].to_string());
            end -= 1;
        }
        trailing.reverse();
        out.extend(leading);
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(trailing);
    }
    out
}

// An apostrophe or hyphen with letters on both sides stays inside the word.
fn is_internal_apostrophe(chars: &[char], i: usize) -> bool {
    (chars[i] == '\'' || chars[i] == '-')
        && i > 0
        && i + 1 < chars.len()
        && chars[i - 1].is_alphanumeric()
        && chars[i + 1].is_alphanumeric()
}

/// Builds a vocabulary from a corpus, keeping tokens with frequency
/// >= `min_freq`, ordered by (frequency desc, token asc).
pub fn build_vocab<'a, I>(corpus: I, min_freq: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = &'a str>,
{
    if min_freq < 1 {
        return Err(Error::Vocab("min_freq must be >= 1".into()));
    }
    let mut freq: HashMap<String, usize> = HashMap::new();
    let mut saw_text = false;
    for text in corpus {
        saw_text = true;
        for token in tokenize(text) {
            *freq.entry(token).or_insert(0) += 1;
        }
    }
    if !saw_text {
        return Err(Error::Vocab("empty corpus".into()));
    }
    let mut kept: Vec<(String, usize)> = freq
        .into_iter()
        .filter(|(_, c)| *c >= min_freq)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocab::from_tokens(kept.into_iter().map(|(t, _)| t).collect()))
}

/// Encodes text as BOS + token ids (OOV -> UNK) + EOS.
pub fn encode(text: &str, vocab: &Vocab) -> TokenSeq {
    let mut ids = vec![BOS];
    for token in tokenize(text) {
        ids.push(vocab.id(&token).unwrap_or(UNK));
    }
    ids.push(EOS);
    TokenSeq { ids }
}

/// Decodes ids back to text: strips specials, joins with single spaces.
pub fn decode(ids: &[usize], vocab: &Vocab) -> Result<String> {
    let mut tokens = Vec::new();
    for &id in ids {
        if id >= vocab.size() {
            return Err(Error::Vocab(format!(
                "id {id} out of range for vocab of size {}",
                vocab.size()
            )));
        }
        if id >= NUM_SPECIALS {
            tokens.push(vocab.token(id).unwrap());
        }
    }
    Ok(tokens.join(" "))
}
