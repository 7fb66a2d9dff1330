//! Greedy longest-match lexicon scanner.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lexicon::LexiconEntry;
use crate::corpus::{ClinicalNote, Corpus, Patient, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConceptMention {
    pub concept_id: String,
    pub note_id: usize,
    pub start: usize,
    pub length: usize,
}

/// Concept multiset of one patient, keyed by concept id.
pub type ConceptCounts = BTreeMap<String, usize>;

pub struct ConceptMatcher {
    // first token -> candidate (form, entry) pairs, longest form first
    by_first: HashMap<String, Vec<(Vec<String>, usize)>>,
    excluded: Vec<bool>,
    lexicon: Vec<LexiconEntry>,
}

impl ConceptMatcher {
    pub fn new(lexicon: Vec<LexiconEntry>, exclusions: &[String]) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &lexicon {
            if !seen.insert(e.concept_id.as_str()) {
                return Err(Error::invalid(format!("duplicate concept id {}", e.concept_id)));
            }
            if e.surface_forms.iter().any(Vec::is_empty) {
                return Err(Error::invalid(format!("empty surface form for {}", e.concept_id)));
            }
        }
        let lowered: Vec<String> = exclusions.iter().map(|s| s.to_lowercase()).collect();
        let excluded = lexicon
            .iter()
            .map(|e| {
                let ty = e.semantic_type.to_lowercase();
                lowered.iter().any(|x| ty.contains(x.as_str()))
            })
            .collect();
        let mut by_first: HashMap<String, Vec<(Vec<String>, usize)>> = HashMap::new();
        for (idx, e) in lexicon.iter().enumerate() {
            for form in &e.surface_forms {
                by_first.entry(form[0].clone()).or_default().push((form.clone(), idx));
            }
        }
        // stable: among equal lengths, earlier lexicon entries win
        for cands in by_first.values_mut() {
            cands.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        }
        Ok(ConceptMatcher {
            by_first,
            excluded,
            lexicon,
        })
    }

    pub fn lexicon(&self) -> &[LexiconEntry] {
        &self.lexicon
    }

    /// Left-to-right scan taking the longest surface form at each position.
    /// Excluded semantic types still consume their tokens but are not reported.
    pub fn extract(&self, note: &ClinicalNote) -> Vec<ConceptMention> {
        let toks = &note.tokens;
        let mut out = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            let hit = self.by_first.get(&toks[i]).and_then(|cands| {
                cands
                    .iter()
                    .find(|(form, _)| toks.len() - i >= form.len() && toks[i..i + form.len()] == form[..])
            });
            match hit {
                Some((form, idx)) => {
                    if !self.excluded[*idx] {
                        out.push(ConceptMention {
                            concept_id: self.lexicon[*idx].concept_id.clone(),
                            note_id: note.note_id,
                            start: i,
                            length: form.len(),
                        });
                    }
                    i += form.len();
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Mentions of a whole corpus, indexed by note id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionStore {
    pub format_version: u32,
    pub by_note: Vec<Vec<ConceptMention>>,
    /// Semantic type of every concept id seen in the lexicon.
    pub semantic_types: BTreeMap<String, String>,
}

pub const MENTION_FORMAT_VERSION: u32 = 1;

impl MentionStore {
    pub fn extract(corpus: &Corpus, matcher: &ConceptMatcher) -> Self {
        let by_note = corpus.notes.par_iter().map(|n| matcher.extract(n)).collect();
        MentionStore {
            format_version: MENTION_FORMAT_VERSION,
            by_note,
            semantic_types: matcher
                .lexicon()
                .iter()
                .map(|e| (e.concept_id.clone(), e.semantic_type.clone()))
                .collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.by_note.iter().map(Vec::len).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json_atomic(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: MentionStore = crate::io::read_json(path)?;
        if s.format_version != MENTION_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "mention store",
                found: s.format_version,
                expected: MENTION_FORMAT_VERSION,
            });
        }
        Ok(s)
    }

    /// Union of a patient's note mentions, with multiplicity.
    pub fn patient_concepts(&self, patient: &Patient) -> ConceptCounts {
        let mut counts = ConceptCounts::new();
        for &n in &patient.note_ids {
            for m in self.by_note.get(n).into_iter().flatten() {
                *counts.entry(m.concept_id.clone()).or_default() += 1;
            }
        }
        counts
    }

    pub fn all_patient_concepts(&self, corpus: &Corpus) -> Vec<ConceptCounts> {
        corpus.patients.iter().map(|p| self.patient_concepts(p)).collect()
    }

    /// Concept vocabulary over mention frequency (same ranking rule as tokens).
    pub fn concept_vocab(&self, max_size: usize) -> Result<Vocabulary> {
        let seqs: Vec<Vec<&str>> = self
            .by_note
            .iter()
            .map(|ms| ms.iter().map(|m| m.concept_id.as_str()).collect())
            .collect();
        Vocabulary::build(seqs.iter().map(Vec::as_slice), max_size)
    }
}
