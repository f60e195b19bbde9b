use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::record::VideoRecord;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const MAX_SENTENCE_LEN: usize = 30;

const RESERVED: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    min_count: usize,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        Vocabulary::from_tokens(f.tokens, f.min_count)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            tokens: v.tokens,
            min_count: v.min_count,
        }
    }
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, min_count: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> &str {
        self.tokens.get(index).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    pub fn is_reserved(index: usize) -> bool {
        index < RESERVED.len()
    }

    /// Encode at most `max_len` tokens followed by EOS.
    pub fn encode(&self, tokens: &[String], max_len: usize) -> Vec<usize> {
        encode_sentence(tokens, self, max_len)
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        decode(indices, self)
    }
}

/// Index tokens with corpus frequency ≥ `min_count`, ordered by descending
/// frequency then lexicographically; reserved tokens occupy 0..4.
pub fn build_vocab(records: &[VideoRecord], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in records {
        for e in &r.events {
            for t in &e.sentence {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count && !RESERVED.contains(&t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(t, _)| t.to_string()))
        .collect();
    Ok(Vocabulary::from_tokens(tokens, min_count))
}

pub fn encode_sentence(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.index_of(t))
        .chain(std::iter::once(EOS))
        .collect()
}

/// Tokens for `indices`, dropping reserved entries.
pub fn decode(indices: &[usize], vocab: &Vocabulary) -> Vec<String> {
    indices
        .iter()
        .filter(|&&i| !Vocabulary::is_reserved(i))
        .map(|&i| vocab.token(i).to_string())
        .collect()
}
