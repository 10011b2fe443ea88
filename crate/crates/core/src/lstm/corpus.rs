use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted character alphabet with a dense id for each character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct Vocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl From<Vec<char>> for Vocab {
    fn from(mut chars: Vec<char>) -> Self {
        chars.sort_unstable();
        chars.dedup();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self { chars, index }
    }
}

impl From<Vocab> for Vec<char> {
    fn from(v: Vocab) -> Self {
        v.chars
    }
}

impl Vocab {
    pub fn from_text(text: &str) -> Self {
        Self::from(text.chars().collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn char(&self, id: usize) -> Option<char> {
        self.chars.get(id).copied()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .enumerate()
            .map(|(pos, c)| {
                self.id(c).ok_or_else(|| {
                    Error::Data(format!(
                        "character {c:?} at position {pos} is not in the vocabulary"
                    ))
                })
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&i| self.char(i)).collect()
    }
}

/// Character ids of a text with a contiguous train/validation split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub ids: Vec<usize>,
    pub vocab: Vocab,
    pub train: Range<usize>,
    pub valid: Range<usize>,
}

impl EncodedCorpus {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn train_ids(&self) -> &[usize] {
        &self.ids[self.train.clone()]
    }

    pub fn valid_ids(&self) -> &[usize] {
        &self.ids[self.valid.clone()]
    }

    pub fn text(&self, range: Range<usize>) -> String {
        self.vocab.decode(&self.ids[range])
    }
}

/// Encodes `text` over its own sorted alphabet; the last
/// `ceil(valid_fraction * len)` characters form the validation range.
pub fn encode_corpus(text: &str, valid_fraction: f64) -> Result<EncodedCorpus> {
    if text.is_empty() {
        return Err(Error::Empty("corpus text"));
    }
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "validation fraction must lie in (0, 1), got {valid_fraction}"
        )));
    }
    let vocab = Vocab::from_text(text);
    let ids = vocab.encode(text)?;
    let total = ids.len();
    let n_valid = (valid_fraction * total as f64).ceil() as usize;
    if n_valid >= total {
        return Err(Error::Data(format!(
            "corpus of {total} characters is too short for a {valid_fraction} validation split"
        )));
    }
    let split = total - n_valid;
    Ok(EncodedCorpus {
        ids,
        vocab,
        train: 0..split,
        valid: split..total,
    })
}
