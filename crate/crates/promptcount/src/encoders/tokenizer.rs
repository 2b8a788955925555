//! Word-level tokenizer with hashed out-of-vocabulary buckets.
//!
//! Not an attempt at BPE parity with any real model: text is lowercased,
//! split on non-alphanumeric characters, and mapped through a fixed
//! vocabulary. Unknown words hash into a reserved bucket range so that
//! arbitrary prompts still tokenize deterministically.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Maximum encoded length, end-of-sequence marker included.
pub const MAX_TOKENS: usize = 77;

/// Reserved id for padding.
pub const PAD_ID: u32 = 0;
/// Reserved id for the end-of-sequence marker.
pub const EOS_ID: u32 = 1;

const OOV_BUCKETS: u32 = 8192;

/// 64-bit FNV-1a; stable across platforms, used for OOV bucketing.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Lowercases and splits text into alphanumeric words.
pub fn words_of(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|ch: char| !ch.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: BTreeMap<String, u32>,
    reverse: BTreeMap<u32, String>,
    pub max_len: usize,
}

impl Tokenizer {
    /// Builds a tokenizer over the given vocabulary words.
    ///
    /// Ids 0 and 1 are reserved for pad/eos; vocabulary words get ids from 2
    /// upward in first-seen order, duplicates ignored. Words outside the
    /// vocabulary hash into buckets above the vocabulary range.
    pub fn new<I, S>(vocabulary: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = BTreeMap::new();
        let mut reverse = BTreeMap::new();
        let mut next = EOS_ID + 1;
        for word in vocabulary {
            for w in words_of(word.as_ref()) {
                if !vocab.contains_key(&w) {
                    vocab.insert(w.clone(), next);
                    reverse.insert(next, w);
                    next += 1;
                }
            }
        }
        Tokenizer {
            vocab,
            reverse,
            max_len: MAX_TOKENS,
        }
    }

    /// Tokenizer with an empty vocabulary: every word is hash-bucketed.
    pub fn empty() -> Self {
        Tokenizer::new(std::iter::empty::<&str>())
    }

    /// Vocabulary covering the synthetic shapes corpus and its templates.
    pub fn for_synthetic_corpus() -> Self {
        Tokenizer::new([
            "red", "green", "blue", "yellow", "magenta", "cyan", "orange", "white",
            "disc", "discs", "square", "squares", "triangle", "triangles",
            "object", "objects", "a", "an", "the", "photo", "of", "several",
            "scattered", "on", "dark", "background", "small", "shapes", "many",
            "picture", "showing", "few", "some",
        ])
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    fn oov_id(&self, word: &str) -> u32 {
        let base = EOS_ID + 1 + self.vocab.len() as u32;
        base + (fnv1a_64(word.as_bytes()) % u64::from(OOV_BUCKETS)) as u32
    }

    /// Encodes text to ids, eos-terminated, truncated to `max_len`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = words_of(text)
            .iter()
            .map(|w| self.vocab.get(w).copied().unwrap_or_else(|| self.oov_id(w)))
            .collect();
        ids.truncate(self.max_len - 1);
        ids.push(EOS_ID);
        ids
    }

    /// Like [`Tokenizer::encode`] but padded to exactly `max_len` ids.
    pub fn encode_padded(&self, text: &str) -> Vec<u32> {
        let mut ids = self.encode(text);
        ids.resize(self.max_len, PAD_ID);
        ids
    }

    /// Reconstructs text from ids; in-vocabulary encodes round-trip modulo
    /// casing and whitespace. Hash-bucket ids render as `<unk>`.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .take_while(|&&id| id != EOS_ID)
            .filter(|&&id| id != PAD_ID)
            .map(|id| self.reverse.get(id).map_or("<unk>", String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Errors when the text is empty or all-separator.
    pub fn require_nonempty(&self, text: &str) -> Result<()> {
        if words_of(text).is_empty() {
            return Err(Error::Data(format!("empty text prompt: {text:?}")));
        }
        Ok(())
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::for_synthetic_corpus()
    }
}
