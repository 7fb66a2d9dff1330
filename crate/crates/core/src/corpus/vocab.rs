use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
/// Number of reserved entries at the start of every vocabulary.
pub const RESERVED: usize = 2;

pub const DEFAULT_MAX_SIZE: usize = 15_000;

/// Frozen token → index map. Index 0 is padding, index 1 is the unknown token,
/// the rest are ordered by descending corpus frequency (ties lexicographic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, usize>,
    max_size: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    max_size: usize,
    entries: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let index = r.entries.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            entries: r.entries,
            index,
            max_size: r.max_size,
        }
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            max_size: v.max_size,
            entries: v.entries,
        }
    }
}

impl Vocabulary {
    /// Keeps the `max_size` most frequent items across all sequences.
    pub fn build<'a, I, S>(sequences: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if max_size < 1 {
            return Err(Error::invalid("vocabulary max_size must be at least 1"));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut any = false;
        for seq in sequences {
            any = true;
            for t in seq {
                *counts.entry(t.as_ref()).or_default() += 1;
            }
        }
        if !any {
            return Err(Error::EmptyInput("no sequences to build a vocabulary from".into()));
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, _)| *t != PAD && *t != UNK)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);

        let mut entries = Vec::with_capacity(ranked.len() + RESERVED);
        entries.push(PAD.to_string());
        entries.push(UNK.to_string());
        entries.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
        Ok(VocabRepr { max_size, entries }.into())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Unknown items map to [`UNK_ID`].
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Ids of real (non-reserved) entries.
    pub fn content_ids(&self) -> std::ops::Range<usize> {
        RESERVED..self.entries.len()
    }
}
