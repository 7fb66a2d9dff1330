//! Patient/note store built from raw clinical records.
//!
//! One hospital visit is one patient: records are grouped by the pair
//! `(patient_key, visit_key)`, so two visits of the same person become two
//! independent [`Patient`]s.

mod ingest;
pub mod preprocess;
mod vocab;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ingest::{apply_label_sidecar, ingest, ingest_jsonl, ingest_mimic_csv, InputFormat, RawRecord};
pub use preprocess::{tokenize, Preprocessor, DATE, DEFAULT_MIN_TOKENS, NUM};
pub use vocab::{Vocabulary, DEFAULT_MAX_SIZE, PAD, PAD_ID, RESERVED, UNK, UNK_ID};

use crate::error::{Error, Result};

pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub note_id: usize,
    pub patient_id: usize,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: usize,
    pub patient_key: String,
    pub visit_key: String,
    pub note_ids: Vec<usize>,
    /// Indices into [`Corpus::labels`].
    pub labels: BTreeSet<usize>,
    pub mortality: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub format_version: u32,
    pub patients: Vec<Patient>,
    pub notes: Vec<ClinicalNote>,
    /// Sorted label strings; a patient's label set indexes into this.
    pub labels: Vec<String>,
    pub vocab: Vocabulary,
    pub dropped_notes: usize,
}

impl Corpus {
    /// Preprocesses every record, drops short notes and the patients left
    /// without notes, and freezes the token vocabulary.
    pub fn build(records: &[RawRecord], pre: &Preprocessor, vocab_size: usize) -> Result<Corpus> {
        let processed: Vec<Option<Vec<String>>> = records.par_iter().map(|r| pre.process(&r.text)).collect();

        let mut label_set: BTreeSet<&str> = BTreeSet::new();
        for r in records {
            label_set.extend(r.labels.iter().map(String::as_str));
        }
        let labels: Vec<String> = label_set.into_iter().map(str::to_string).collect();
        let label_idx: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();

        let mut patients: Vec<Patient> = Vec::new();
        let mut by_key: HashMap<(&str, &str), usize> = HashMap::new();
        let mut notes = Vec::new();
        let mut dropped = 0;
        for (rec, tokens) in records.iter().zip(processed) {
            let Some(tokens) = tokens else {
                dropped += 1;
                continue;
            };
            let pid = *by_key
                .entry((rec.patient_key.as_str(), rec.visit_key.as_str()))
                .or_insert_with(|| {
                    patients.push(Patient {
                        patient_id: patients.len(),
                        patient_key: rec.patient_key.clone(),
                        visit_key: rec.visit_key.clone(),
                        note_ids: Vec::new(),
                        labels: BTreeSet::new(),
                        mortality: None,
                    });
                    patients.len() - 1
                });
            let p = &mut patients[pid];
            p.labels.extend(rec.labels.iter().map(|l| label_idx[l.as_str()]));
            if let Some(m) = rec.mortality {
                p.mortality = Some(p.mortality.unwrap_or(false) || m);
            }
            p.note_ids.push(notes.len());
            notes.push(ClinicalNote {
                note_id: notes.len(),
                patient_id: pid,
                tokens,
            });
        }
        if notes.is_empty() {
            return Err(Error::EmptyInput(format!(
                "all {} notes were dropped by preprocessing",
                records.len()
            )));
        }
        // labels from visits whose notes were all dropped still occupy an index;
        // the label space is defined by the input file
        let vocab = Vocabulary::build(notes.iter().map(|n: &ClinicalNote| n.tokens.as_slice()), vocab_size)?;
        Ok(Corpus {
            format_version: CORPUS_FORMAT_VERSION,
            patients,
            notes,
            labels,
            vocab,
            dropped_notes: dropped,
        })
    }

    pub fn num_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn note(&self, note_id: usize) -> &ClinicalNote {
        &self.notes[note_id]
    }

    pub fn patient_notes(&self, patient_id: usize) -> impl Iterator<Item = &ClinicalNote> {
        self.patients[patient_id].note_ids.iter().map(move |&n| &self.notes[n])
    }

    /// Vocabulary ids of a note's tokens.
    pub fn note_ids(&self, note_id: usize) -> Vec<usize> {
        self.vocab.encode(&self.notes[note_id].tokens)
    }

    pub fn find_patient(&self, patient_key: &str, visit_key: &str) -> Option<usize> {
        self.patients
            .iter()
            .position(|p| p.patient_key == patient_key && p.visit_key == visit_key)
    }

    /// Multi-hot label vector of a patient.
    pub fn label_vector(&self, patient_id: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.labels.len()];
        for &l in &self.patients[patient_id].labels {
            v[l] = 1.0;
        }
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json_atomic(path, self)
    }

    pub fn load(path: &Path) -> Result<Corpus> {
        let c: Corpus = crate::io::read_json(path)?;
        if c.format_version != CORPUS_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "corpus store",
                found: c.format_version,
                expected: CORPUS_FORMAT_VERSION,
            });
        }
        Ok(c)
    }
}
