//! Synthetic corpora with planted label → concept → token structure.
//!
//! Each label owns a disjoint block of concepts and a disjoint block of
//! label words. A patient draws a few labels; every word slot of a note is a
//! concept mention (rate `concept_rate·s`), a label word (rate
//! `label_word_rate·s`), or background
//! noise, where `s` is the signal strength. Optional background concepts are
//! mentioned independently of the labels.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::{write_lexicon, LexiconEntry};
use crate::corpus::RawRecord;
use crate::error::{Error, Result};

const BACKGROUND_CONCEPT_RATE: f64 = 0.05;
const EXCLUDED_RATE: f64 = 0.01;
const EXCLUDED_TERMS: [(&str, &str); 3] = [("daily", "temporal"), ("twice", "quantitative"), ("english", "language")];

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeRange {
    pub min: usize,
    pub max: usize,
}

impl SizeRange {
    pub const fn new(min: usize, max: usize) -> Self {
        SizeRange { min, max }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub n_labels: usize,
    /// Label-owned concepts, split evenly across labels.
    pub n_concepts: usize,
    /// Distinct label and background words (concept words come on top).
    pub vocab_size: usize,
    pub notes_per_patient: SizeRange,
    /// Words per note, not counting sentence punctuation.
    pub note_length: SizeRange,
    pub labels_per_patient: SizeRange,
    pub signal_strength: f64,
    /// Share of word slots holding a label-owned concept mention, times `signal_strength`.
    pub concept_rate: f64,
    /// Share of word slots holding a label word, times `signal_strength`.
    pub label_word_rate: f64,
    /// Concepts mentioned regardless of labels.
    pub n_background_concepts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 200,
            n_labels: 6,
            n_concepts: 60,
            vocab_size: 2000,
            notes_per_patient: SizeRange::new(1, 2),
            note_length: SizeRange::new(40, 80),
            labels_per_patient: SizeRange::new(1, 3),
            signal_strength: 0.8,
            concept_rate: 0.15,
            label_word_rate: 0.15,
            n_background_concepts: 0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Label words per label; half the vocabulary is background.
    fn label_block(&self) -> usize {
        self.vocab_size / 2 / self.n_labels.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for (name, r) in [
            ("notes_per_patient", self.notes_per_patient),
            ("note_length", self.note_length),
            ("labels_per_patient", self.labels_per_patient),
        ] {
            if r.min > r.max || r.max == 0 {
                return bad(format!("{name} range [{}, {}] is empty", r.min, r.max));
            }
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad(format!("signal_strength {} outside [0, 1]", self.signal_strength));
        }
        let rates = [self.concept_rate, self.label_word_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) || rates.iter().sum::<f64>() > 1.0 {
            return bad(format!(
                "concept_rate {} and label_word_rate {} must be non-negative and sum to at most 1",
                self.concept_rate, self.label_word_rate
            ));
        }
        if self.n_patients < 2 || self.n_labels == 0 {
            return bad("need at least 2 patients and 1 label".into());
        }
        if self.labels_per_patient.max > self.n_labels || self.labels_per_patient.min == 0 {
            return bad("labels_per_patient must lie in [1, n_labels]".into());
        }
        if self.n_concepts < self.n_labels {
            return bad("every label needs at least one concept".into());
        }
        if self.label_block() < 5 || self.vocab_size < 40 {
            return bad(format!(
                "vocab_size {} too small to host {} label distributions",
                self.vocab_size, self.n_labels
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub labels: Vec<String>,
    /// Owning label of each concept; `None` for background concepts.
    pub concept_label: BTreeMap<String, Option<String>>,
    /// Planted mentions per label, summed over the corpus.
    pub injected_per_label: BTreeMap<String, usize>,
    pub injected_per_concept: BTreeMap<String, usize>,
    pub patient_labels: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub records: Vec<RawRecord>,
    pub lexicon: Vec<LexiconEntry>,
    pub manifest: SynthManifest,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Distinct pronounceable word for every index (at least two syllables).
fn pseudo_word(mut i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    let mut syllables = 0;
    while i > 0 || syllables < 2 {
        let s = i % base;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
        i /= base;
        syllables += 1;
    }
    out
}

/// Draws from `P(k) ∝ 1/(k+1)` over `n` items via a precomputed CDF.
struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    fn new(n: usize) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (0..n)
            .map(|k| {
                acc += 1.0 / (k + 1) as f64;
                acc
            })
            .collect();
        for c in &mut cdf {
            *c /= acc;
        }
        Zipf { cdf }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

pub fn label_name(i: usize) -> String {
    format!("L{i:02}")
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut next_word = 0usize;
    let mut fresh = |n: usize| -> Vec<String> {
        let v = (next_word..next_word + n).map(pseudo_word).collect();
        next_word += n;
        v
    };

    let n_bg_words = config.vocab_size - config.label_block() * config.n_labels;
    let background = fresh(n_bg_words);
    let label_words: Vec<Vec<String>> = (0..config.n_labels).map(|_| fresh(config.label_block())).collect();
    let labels: Vec<String> = (0..config.n_labels).map(label_name).collect();

    // concept c belongs to label c % n_labels
    let total_concepts = config.n_concepts + config.n_background_concepts;
    let mut lexicon = Vec::with_capacity(total_concepts + EXCLUDED_TERMS.len());
    let mut concept_label = BTreeMap::new();
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); config.n_labels];
    for c in 0..total_concepts {
        let id = format!("C{c:04}");
        let len = rng.gen_range(1..=3);
        let owner = (c < config.n_concepts).then_some(c % config.n_labels);
        if let Some(l) = owner {
            blocks[l].push(c);
        }
        concept_label.insert(id.clone(), owner.map(|l| labels[l].clone()));
        lexicon.push(LexiconEntry {
            concept_id: id,
            surface_forms: vec![fresh(len)],
            semantic_type: if owner.is_none() { "procedure" } else if c % 2 == 0 { "finding" } else { "drug" }.into(),
        });
    }
    for (i, (term, ty)) in EXCLUDED_TERMS.iter().enumerate() {
        lexicon.push(LexiconEntry {
            concept_id: format!("X{i:04}"),
            surface_forms: vec![vec![term.to_string()]],
            semantic_type: ty.to_string(),
        });
    }

    let bg_zipf = Zipf::new(background.len());
    let label_zipf = Zipf::new(config.label_block());
    let s = config.signal_strength;
    let mut injected_per_label: BTreeMap<String, usize> = labels.iter().map(|l| (l.clone(), 0)).collect();
    let mut injected_per_concept: BTreeMap<String, usize> = BTreeMap::new();
    let mut patient_labels = BTreeMap::new();
    let mut records = Vec::new();

    for p in 0..config.n_patients {
        let key = format!("P{p:05}");
        let k = config.labels_per_patient.draw(&mut rng);
        let mut mine: Vec<usize> = sample(&mut rng, config.n_labels, k).into_vec();
        mine.sort_unstable();
        let label_set: BTreeSet<String> = mine.iter().map(|&l| labels[l].clone()).collect();
        patient_labels.insert(key.clone(), label_set.iter().cloned().collect());
        let death_rate = if mine.contains(&0) { 0.6 } else { 0.15 };
        let mortality = rng.gen::<f64>() < death_rate;

        for n in 0..config.notes_per_patient.draw(&mut rng) {
            let len = config.note_length.draw(&mut rng);
            let mut words: Vec<&str> = Vec::with_capacity(len + len / 8 + 4);
            let mut emitted = 0;
            let mut until_stop = rng.gen_range(8..=14);
            while emitted < len {
                let r: f64 = rng.gen();
                let chosen: Option<usize> = if r < s * config.concept_rate {
                    let l = mine[rng.gen_range(0..mine.len())];
                    let c = blocks[l][rng.gen_range(0..blocks[l].len())];
                    *injected_per_label.get_mut(&labels[l]).expect("label exists") += 1;
                    Some(c)
                } else if r < s * (config.concept_rate + config.label_word_rate) {
                    let l = mine[rng.gen_range(0..mine.len())];
                    words.push(&label_words[l][label_zipf.draw(&mut rng)]);
                    None
                } else if config.n_background_concepts > 0 && rng.gen::<f64>() < BACKGROUND_CONCEPT_RATE {
                    Some(config.n_concepts + rng.gen_range(0..config.n_background_concepts))
                } else if rng.gen::<f64>() < EXCLUDED_RATE {
                    words.push(EXCLUDED_TERMS[rng.gen_range(0..EXCLUDED_TERMS.len())].0);
                    None
                } else {
                    words.push(&background[bg_zipf.draw(&mut rng)]);
                    None
                };
                if let Some(c) = chosen {
                    let e = &lexicon[c];
                    *injected_per_concept.entry(e.concept_id.clone()).or_default() += 1;
                    words.extend(e.surface_forms[0].iter().map(String::as_str));
                }
                emitted += 1;
                until_stop -= 1;
                if until_stop == 0 {
                    words.push(".");
                    until_stop = rng.gen_range(8..=14);
                }
            }
            records.push(RawRecord {
                patient_key: key.clone(),
                visit_key: "V1".into(),
                doc_key: format!("N{n}"),
                text: words.join(" "),
                labels: label_set.clone(),
                mortality: Some(mortality),
            });
        }
    }

    Ok(SynthCorpus {
        records,
        lexicon,
        manifest: SynthManifest {
            config: config.clone(),
            labels,
            concept_label,
            injected_per_label,
            injected_per_concept,
            patient_labels,
        },
    })
}

#[derive(Serialize)]
struct JsonlLine<'a> {
    patient: &'a str,
    visit: &'a str,
    doc: &'a str,
    text: &'a str,
    labels: &'a BTreeSet<String>,
    mortality: Option<bool>,
}

/// Corpus as JSONL in the ingest format.
pub fn records_to_jsonl(records: &[RawRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&JsonlLine {
            patient: &r.patient_key,
            visit: &r.visit_key,
            doc: &r.doc_key,
            text: &r.text,
            labels: &r.labels,
            mortality: r.mortality,
        })?);
        out.push('\n');
    }
    Ok(out)
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `corpus.jsonl`, `lexicon.tsv` and `manifest.json` into `dir`.
pub fn write_synth(dir: &Path, synth: &SynthCorpus) -> Result<()> {
    crate::io::write_atomic(&dir.join(CORPUS_FILE), records_to_jsonl(&synth.records)?.as_bytes())?;
    let mut lex = Vec::new();
    write_lexicon(&mut lex, &synth.lexicon).map_err(|e| Error::io(dir.join(LEXICON_FILE), e))?;
    lex.flush().map_err(|e| Error::io(dir.join(LEXICON_FILE), e))?;
    crate::io::write_atomic(&dir.join(LEXICON_FILE), &lex)?;
    crate::io::write_json_atomic(&dir.join(MANIFEST_FILE), &synth.manifest)
}
