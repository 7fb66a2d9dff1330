//! Per-patient TF-IDF vectors over word n-grams or extracted concepts.
//!
//! TF is the raw count over the patient's notes; IDF is
//! `ln(N / (1 + df)) + 1` with `N` the number of patients.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::extract::MentionStore;
use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Ngram,
    Concept,
}

/// Sparse, index-sorted TF-IDF weights of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub weights: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Cosine similarity of two sparse vectors; 0 when either is empty.
    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        let (a, b) = (&self.weights, &other.weights);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    /// Feature names, sorted; `weights` index into this.
    pub names: Vec<String>,
    pub vectors: Vec<FeatureVector>,
}

pub fn idf(num_docs: usize, doc_freq: usize) -> f64 {
    (num_docs as f64 / (1.0 + doc_freq as f64)).ln() + 1.0
}

/// TF-IDF from per-patient raw term counts.
pub fn tfidf_from_counts(kind: FeatureKind, counts: &[BTreeMap<String, usize>]) -> FeatureSet {
    let names: Vec<String> = counts
        .iter()
        .flat_map(|c| c.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut df = vec![0usize; names.len()];
    for c in counts {
        for k in c.keys() {
            df[index[k.as_str()]] += 1;
        }
    }
    let n = counts.len();
    let vectors = counts
        .iter()
        .map(|c| {
            let mut weights: Vec<(usize, f64)> = c
                .iter()
                .map(|(k, &tf)| {
                    let i = index[k.as_str()];
                    (i, tf as f64 * idf(n, df[i]))
                })
                .collect();
            weights.sort_by_key(|(i, _)| *i);
            FeatureVector { kind, weights }
        })
        .collect();
    FeatureSet { names, vectors }
}

/// Uni- to `ngram_max`-gram counts per patient. N-grams never cross note
/// boundaries.
pub fn ngram_counts(corpus: &Corpus, ngram_max: usize) -> Vec<BTreeMap<String, usize>> {
    corpus
        .patients
        .iter()
        .map(|p| {
            let mut counts = BTreeMap::new();
            for note in corpus.patient_notes(p.patient_id) {
                let toks = &note.tokens;
                for n in 1..=ngram_max {
                    for w in toks.windows(n) {
                        *counts.entry(w.join(" ")).or_insert(0) += 1;
                    }
                }
            }
            counts
        })
        .collect()
}

pub fn tfidf_features(
    corpus: &Corpus,
    mentions: Option<&MentionStore>,
    kind: FeatureKind,
    ngram_max: usize,
) -> Result<FeatureSet> {
    match kind {
        FeatureKind::Ngram => {
            if ngram_max == 0 {
                return Err(Error::invalid("ngram_max must be at least 1"));
            }
            Ok(tfidf_from_counts(kind, &ngram_counts(corpus, ngram_max)))
        }
        FeatureKind::Concept => {
            let store = mentions.ok_or_else(|| Error::invalid("concept features need a mention store"))?;
            if store.total() == 0 {
                return Err(Error::EmptyInput("no concept mentions anywhere in the corpus".into()));
            }
            Ok(tfidf_from_counts(kind, &store.all_patient_concepts(corpus)))
        }
    }
}
