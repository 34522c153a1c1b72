//! Whitespace vocabulary and fixed-length id/mask encoding.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";

const SPECIALS: [&str; 3] = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN];

pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingConfig {
    pub max_len: usize,
    pub max_vocab: usize,
    pub min_freq: usize,
    pub lowercase: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            max_vocab: 30_000,
            min_freq: 1,
            lowercase: true,
        }
    }
}

/// Token to id map with the special tokens at ids 0..3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    lowercase: bool,
}

fn normalize<'a>(token: &'a str, lowercase: bool) -> std::borrow::Cow<'a, str> {
    if lowercase {
        std::borrow::Cow::Owned(token.to_lowercase())
    } else {
        std::borrow::Cow::Borrowed(token)
    }
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, lowercase: bool) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            index,
            lowercase,
        }
    }

    /// Builds a vocabulary ranked by descending frequency, ties broken
    /// lexicographically. `max_size` counts the special tokens.
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        max_size: usize,
        min_freq: usize,
        lowercase: bool,
    ) -> Result<Self> {
        if max_size <= SPECIALS.len() {
            return Err(Error::InvalidArgument(format!(
                "vocabulary size must exceed {} special tokens, got {max_size}",
                SPECIALS.len()
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for token in text.split_whitespace() {
                *counts.entry(normalize(token, lowercase).into_owned()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq.max(1) && !SPECIALS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().take(max_size - SPECIALS.len()).map(|(t, _)| t));
        Ok(Self::from_tokens(tokens, lowercase))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(normalize(token, self.lowercase).as_ref()).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Writes `token<TAB>id` lines in id order.
    pub fn write_tsv(&self, mut out: impl Write) -> Result<()> {
        for (id, token) in self.tokens.iter().enumerate() {
            writeln!(out, "{token}\t{id}").map_err(|e| Error::io("<vocab>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_tsv(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Parses a `token<TAB>id` file. Ids must be dense and the special tokens
    /// must sit at their reserved ids.
    pub fn parse_tsv(input: &str, lowercase: bool) -> Result<Self> {
        let mut entries = Vec::new();
        for (line_no, line) in input.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (token, id) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
                row: line_no + 1,
                message: "expected `token<TAB>id`".into(),
            })?;
            let id: usize = id.trim().parse().map_err(|_| Error::Parse {
                row: line_no + 1,
                message: format!("invalid id `{id}`"),
            })?;
            entries.push((id, token.to_string()));
        }
        entries.sort_by_key(|(id, _)| *id);
        for (expected, (id, _)) in entries.iter().enumerate() {
            if *id != expected {
                return Err(Error::Schema(format!("vocabulary ids are not dense at id {expected}")));
            }
        }
        for (id, special) in SPECIALS.iter().enumerate() {
            if entries.get(id).map(|(_, t)| t.as_str()) != Some(*special) {
                return Err(Error::Schema(format!("expected `{special}` at id {id}")));
            }
        }
        Ok(Self::from_tokens(entries.into_iter().map(|(_, t)| t).collect(), lowercase))
    }

    pub fn load(path: impl AsRef<Path>, lowercase: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, lowercase)
    }

    /// `[CLS]` followed by the first `max_len - 1` tokens, padded to `max_len`.
    pub fn encode(&self, text: &str, max_len: usize) -> (Vec<usize>, Vec<u8>) {
        assert!(max_len >= 2, "max_len must be at least 2");
        let mut ids = Vec::with_capacity(max_len);
        ids.push(CLS_ID);
        ids.extend(
            text.split_whitespace()
                .take(max_len - 1)
                .map(|t| match self.id(t) {
                    // literal special-token strings in the text are not specials
                    Some(id) if id >= SPECIALS.len() => id,
                    _ => UNK_ID,
                }),
        );
        let active = ids.len();
        ids.resize(max_len, PAD_ID);
        let mask = (0..max_len).map(|t| u8::from(t < active)).collect();
        (ids, mask)
    }

    /// Tokens of an encoded row with `[CLS]` and padding stripped.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id != CLS_ID && id != PAD_ID)
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }

    pub fn encode_batch<'a>(&self, texts: impl IntoIterator<Item = &'a str>, max_len: usize) -> EncodedBatch {
        let rows: Vec<_> = texts.into_iter().map(|t| self.encode(t, max_len)).collect();
        let n = rows.len();
        let mut input_ids = Array2::zeros((n, max_len));
        let mut attention_mask = Array2::zeros((n, max_len));
        for (i, (ids, mask)) in rows.into_iter().enumerate() {
            for t in 0..max_len {
                input_ids[[i, t]] = ids[t];
                attention_mask[[i, t]] = mask[t];
            }
        }
        EncodedBatch {
            input_ids,
            attention_mask,
        }
    }
}

/// Token ids and attention mask, one row per text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedBatch {
    pub input_ids: Array2<usize>,
    pub attention_mask: Array2<u8>,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.input_ids.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_len(&self) -> usize {
        self.input_ids.ncols()
    }

    /// Gathers the given rows into a new batch.
    pub fn select(&self, rows: &[usize]) -> EncodedBatch {
        EncodedBatch {
            input_ids: self.input_ids.select(ndarray::Axis(0), rows),
            attention_mask: self.attention_mask.select(ndarray::Axis(0), rows),
        }
    }
}
