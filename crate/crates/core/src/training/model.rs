use std::collections::BTreeMap;
use std::io::BufRead;

use ndarray::Array1;
use rand::Rng;

use super::config::TrainConfig;
use crate::concepts::{LexiconEntry, MentionStore};
use crate::corpus::{Corpus, Vocabulary, RESERVED, UNK_ID};
use crate::error::{Error, Result};
use crate::nn::{load_word2vec_text, BiGru, EmbeddingTable, Encoder};
use crate::scalar::Scalar;

/// Everything learned by the joint objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub words: EmbeddingTable<F>,
    /// One row per patient, indexed by patient id.
    pub users: EmbeddingTable<F>,
    /// One row per concept-vocabulary entry; the reserved rows stay unused.
    pub concepts: EmbeddingTable<F>,
    pub encoder: Encoder<F>,
    pub concept_vocab: Vocabulary,
}

impl<F: Scalar> ModelParams<F> {
    pub fn dim(&self) -> usize {
        self.users.dim()
    }

    /// Tensors in optimizer-slot order: words, users, concepts, then the encoder's.
    pub fn tensor_names(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            ("words".to_string(), self.words.weights.shape().to_vec()),
            ("users".to_string(), self.users.weights.shape().to_vec()),
            ("concepts".to_string(), self.concepts.weights.shape().to_vec()),
        ];
        if let Encoder::BiGru(g) = &self.encoder {
            out.extend(g.tensor_shapes());
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = vec![
            self.words.weights.as_slice().expect("standard layout"),
            self.users.weights.as_slice().expect("standard layout"),
            self.concepts.weights.as_slice().expect("standard layout"),
        ];
        if let Encoder::BiGru(g) = &self.encoder {
            out.extend(g.slices());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = vec![
            self.words.weights.as_slice_mut().expect("standard layout"),
            self.users.weights.as_slice_mut().expect("standard layout"),
            self.concepts.weights.as_slice_mut().expect("standard layout"),
        ];
        if let Encoder::BiGru(g) = &mut self.encoder {
            out.extend(g.slices_mut());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Empty encoder gradient buffer matching this model.
    pub fn gru_zeros(&self) -> Option<BiGru<F>> {
        match &self.encoder {
            Encoder::MeanPool => None,
            Encoder::BiGru(g) => Some(g.zeros_like()),
        }
    }
}

/// Per-patient inputs for sampling, precomputed from a corpus and its mentions.
#[derive(Debug, Clone)]
pub struct TrainingData {
    /// `(note_id, token ids)` per patient.
    pub notes: Vec<Vec<(usize, Vec<usize>)>>,
    /// `(concept index, count)` per patient, ascending by index.
    pub concept_counts: Vec<Vec<(usize, usize)>>,
    pub vocab_len: usize,
    pub num_concepts: usize,
}

impl TrainingData {
    pub fn from_corpus(corpus: &Corpus, mentions: Option<&MentionStore>, concept_vocab: &Vocabulary) -> Self {
        let notes = corpus
            .patients
            .iter()
            .map(|p| p.note_ids.iter().map(|&n| (n, corpus.note_ids(n))).collect())
            .collect();
        let concept_counts = match mentions {
            Some(m) => corpus
                .patients
                .iter()
                .map(|p| {
                    let mut v: Vec<(usize, usize)> = m
                        .patient_concepts(p)
                        .into_iter()
                        .filter_map(|(c, n)| concept_vocab.get(&c).map(|id| (id, n)))
                        .collect();
                    v.sort_unstable();
                    v
                })
                .collect(),
            None => vec![Vec::new(); corpus.num_patients()],
        };
        TrainingData {
            notes,
            concept_counts,
            vocab_len: corpus.vocab.len(),
            num_concepts: concept_vocab.len(),
        }
    }

    pub fn num_patients(&self) -> usize {
        self.notes.len()
    }

    pub fn owned_concepts(&self, patient: usize) -> Vec<usize> {
        self.concept_counts[patient].iter().map(|&(c, _)| c).collect()
    }
}

/// Concept vectors as the mean of the word vectors of each concept's first
/// surface form, with out-of-vocabulary tokens mapped to UNK. Reserved rows
/// and concepts missing from the lexicon get the UNK vector.
pub fn init_concept_table<F: Scalar>(
    lexicon: &[LexiconEntry],
    concept_vocab: &Vocabulary,
    words: &EmbeddingTable<F>,
    word_vocab: &Vocabulary,
) -> EmbeddingTable<F> {
    let forms: BTreeMap<&str, &[String]> = lexicon
        .iter()
        .filter_map(|e| e.surface_forms.first().map(|f| (e.concept_id.as_str(), f.as_slice())))
        .collect();
    let mut table = EmbeddingTable::zeros(concept_vocab.len(), words.dim());
    for (row, concept) in concept_vocab.entries().iter().enumerate() {
        let ids: Vec<usize> = match forms.get(concept.as_str()) {
            Some(form) if row >= RESERVED && !form.is_empty() => word_vocab.encode(form),
            _ => vec![UNK_ID],
        };
        let mut acc = Array1::<F>::zeros(words.dim());
        for &id in &ids {
            acc += &words.row(id);
        }
        acc /= F::lit(ids.len() as f64);
        table.weights.row_mut(row).assign(&acc);
    }
    table
}

/// Optional inputs for the concept task.
#[derive(Debug, Clone, Copy)]
pub struct ConceptInputs<'a> {
    pub mentions: &'a MentionStore,
    pub lexicon: &'a [LexiconEntry],
}

/// Fresh parameters for `corpus`. Word vectors come from `pretrained`
/// (word2vec text) where available, else `uniform(±word_init_scale)`.
pub fn init_params<F: Scalar, R: Rng, B: BufRead>(
    corpus: &Corpus,
    concepts: Option<ConceptInputs<'_>>,
    config: &TrainConfig,
    pretrained: Option<B>,
    rng: &mut R,
) -> Result<ModelParams<F>> {
    config.validate()?;
    if corpus.num_patients() < 2 {
        return Err(Error::TooFewPatients { needed: 2, found: corpus.num_patients() });
    }
    let dim = config.dim;
    let mut words = EmbeddingTable::uniform(corpus.vocab.len(), dim, config.word_init_scale, rng);
    if let Some(src) = pretrained {
        load_word2vec_text(src, &corpus.vocab, &mut words)?;
    }
    let users = EmbeddingTable::uniform(corpus.num_patients(), dim, config.user_scale(), rng);
    let encoder = Encoder::new(config.encoder, dim, config.gru_output, rng);
    let concept_vocab = match concepts {
        Some(c) => c.mentions.concept_vocab(usize::MAX)?,
        None => Vocabulary::build(std::iter::once(&[] as &[&str]), 1)?,
    };
    let concept_table = match concepts {
        Some(c) => init_concept_table(c.lexicon, &concept_vocab, &words, &corpus.vocab),
        None => EmbeddingTable::zeros(concept_vocab.len(), dim),
    };
    Ok(ModelParams {
        words,
        users,
        concepts: concept_table,
        encoder,
        concept_vocab,
    })
}
