//! Comparison methods: word2user (averaged word vectors) and usr2vec
//! (patients predicting their own tokens), each with a concept variant.

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::MentionStore;
use crate::corpus::{Corpus, Vocabulary, RESERVED};
use crate::error::{Error, Result};
use crate::nn::EmbeddingTable;
use crate::scalar::{sigmoid, softplus, Scalar};
use crate::training::sampling::sample_concept_negatives;
use crate::training::RmsProp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Word2user,
    Word2userConcept,
    Usr2vec,
    Usr2vecConcept,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Word2user => "word2user",
            BaselineKind::Word2userConcept => "word2user_concept",
            BaselineKind::Usr2vec => "usr2vec",
            BaselineKind::Usr2vecConcept => "usr2vec_concept",
        }
    }
}

fn patient_token_ids(corpus: &Corpus, patient: usize) -> Vec<usize> {
    corpus.patients[patient].note_ids.iter().flat_map(|&n| corpus.note_ids(n)).collect()
}

fn mean_of<F: Scalar>(table: &EmbeddingTable<F>, ids: &[usize]) -> Option<Array1<F>> {
    if ids.is_empty() {
        return None;
    }
    let mut acc = Array1::zeros(table.dim());
    for &i in ids {
        acc += &table.row(i);
    }
    Some(acc / F::lit(ids.len() as f64))
}

/// Mean of every token vector over the concatenation of a patient's notes.
pub fn word2user<F: Scalar>(corpus: &Corpus, words: &EmbeddingTable<F>) -> Result<Vec<Array1<F>>> {
    (0..corpus.num_patients())
        .map(|p| {
            mean_of(words, &patient_token_ids(corpus, p))
                .ok_or_else(|| Error::EmptyInput(format!("patient {p} has no tokens")))
        })
        .collect()
}

/// Concept ids (rows of `concept_vocab`) of every mention in a patient's notes.
fn patient_concept_ids(corpus: &Corpus, mentions: &MentionStore, concept_vocab: &Vocabulary, patient: usize) -> Vec<usize> {
    corpus.patients[patient]
        .note_ids
        .iter()
        .flat_map(|&n| mentions.by_note.get(n).into_iter().flatten())
        .filter_map(|m| concept_vocab.get(&m.concept_id))
        .collect()
}

/// Token mean `t` and concept-mention mean `c`, combined as `(t + c) / 2`
/// or, with `concat`, as `[t; c]`. Patients without concepts get `t`
/// (`[t; 0]` when concatenating).
pub fn word2user_concept<F: Scalar>(
    corpus: &Corpus,
    words: &EmbeddingTable<F>,
    concepts: &EmbeddingTable<F>,
    concept_vocab: &Vocabulary,
    mentions: &MentionStore,
    concat: bool,
) -> Result<Vec<Array1<F>>> {
    let tokens = word2user(corpus, words)?;
    Ok(tokens
        .into_iter()
        .enumerate()
        .map(|(p, t)| {
            let c = mean_of(concepts, &patient_concept_ids(corpus, mentions, concept_vocab, p));
            match (c, concat) {
                (Some(c), false) => (t + c) / F::lit(2.0),
                (None, false) => t,
                (c, true) => {
                    let c = c.unwrap_or_else(|| Array1::zeros(t.len()));
                    ndarray::concatenate(ndarray::Axis(0), &[t.view(), c.view()]).expect("same rank")
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Usr2VecConfig {
    pub epochs: usize,
    pub negatives: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    /// Exponent on unigram counts for the negative distribution (1 = plain unigram).
    pub unigram_power: f64,
    pub user_init_scale: Option<f64>,
    pub seed: u64,
}

impl Default for Usr2VecConfig {
    fn default() -> Self {
        Usr2VecConfig {
            epochs: 10,
            negatives: 3,
            batch_size: 16,
            lr: 1e-3,
            rmsprop_decay: 0.9,
            rmsprop_eps: 1e-8,
            unigram_power: 1.0,
            user_init_scale: None,
            seed: 42,
        }
    }
}

/// One training pair: a patient and a token or concept it produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Token(usize),
    Concept(usize),
}

/// Fixed tables the user vectors are trained against.
pub struct Usr2VecInputs<'a, F> {
    pub corpus: &'a Corpus,
    pub words: &'a EmbeddingTable<F>,
    /// Concept table, its vocabulary, and the mentions; `None` for plain usr2vec.
    pub concepts: Option<(&'a EmbeddingTable<F>, &'a Vocabulary, &'a MentionStore)>,
}

#[derive(Debug, Clone)]
pub struct Usr2VecOutput<F> {
    pub users: EmbeddingTable<F>,
    /// Mean pair loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Pair loss and user gradient: `−ln σ(u·p) − Σ ln(1 − σ(u·n))`.
fn pair_loss<F: Scalar>(u: ndarray::ArrayView1<F>, pos: ndarray::ArrayView1<F>, negs: &[ndarray::ArrayView1<F>]) -> (f64, Array1<F>) {
    let s = u.dot(&pos);
    let mut loss = softplus(-s).to_f64_lossy();
    let mut g = &pos * (sigmoid(s) - F::one());
    for n in negs {
        let s = u.dot(n);
        loss += softplus(s).to_f64_lossy();
        g.scaled_add(sigmoid(s), n);
    }
    (loss, g)
}

/// Learns user vectors only (words and concepts stay fixed) by predicting
/// each `(patient, token)` occurrence against unigram-sampled negative
/// tokens, and, when concepts are given, each `(patient, concept mention)`
/// against concepts the patient lacks. A batch loss is the sum of its pair
/// losses over the batch size, so the two tasks weigh equally per pair.
pub fn usr2vec_train<F: Scalar>(inputs: &Usr2VecInputs<'_, F>, cfg: &Usr2VecConfig) -> Result<Usr2VecOutput<F>> {
    let corpus = inputs.corpus;
    let n = corpus.num_patients();
    if n < 2 {
        return Err(Error::TooFewPatients { needed: 2, found: n });
    }
    if cfg.batch_size == 0 || cfg.negatives == 0 {
        return Err(Error::invalid("usr2vec batch_size and negatives must be positive"));
    }
    let dim = inputs.words.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = cfg.user_init_scale.unwrap_or(0.5 / dim as f64);
    let mut users = EmbeddingTable::<F>::uniform(n, dim, scale, &mut rng);

    let mut pairs: Vec<(usize, Target)> = Vec::new();
    let mut counts = vec![0f64; inputs.words.rows()];
    for p in 0..n {
        for t in patient_token_ids(corpus, p) {
            counts[t] += 1.0;
            pairs.push((p, Target::Token(t)));
        }
    }
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); n];
    if let Some((_, vocab, mentions)) = inputs.concepts {
        for (p, own) in owned.iter_mut().enumerate() {
            let ids = patient_concept_ids(corpus, mentions, vocab, p);
            pairs.extend(ids.iter().map(|&c| (p, Target::Concept(c))));
            own.extend(ids);
            own.sort_unstable();
            own.dedup();
        }
    }
    let weights: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| if i < RESERVED { 0.0 } else { c.powf(cfg.unigram_power) })
        .collect();
    let unigram = WeightedIndex::new(&weights).map_err(|e| Error::invalid(format!("no tokens to sample: {e}")))?;

    let mut opt = RmsProp::<F>::new(cfg.lr, cfg.rmsprop_decay, cfg.rmsprop_eps);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in pairs.chunks(cfg.batch_size) {
            let inv = F::lit(1.0 / batch.len() as f64);
            let mut grads = Array2::<F>::zeros((n, dim));
            for &(p, target) in batch {
                let u = users.row(p);
                let (loss, g) = match target {
                    Target::Token(t) => {
                        let negs: Vec<usize> = (0..cfg.negatives).map(|_| unigram.sample(&mut rng)).collect();
                        let views: Vec<_> = negs.iter().map(|&i| inputs.words.row(i)).collect();
                        pair_loss(u, inputs.words.row(t), &views)
                    }
                    Target::Concept(c) => {
                        let (table, vocab, _) = inputs.concepts.expect("concept pairs imply concept inputs");
                        let negs = sample_concept_negatives(&owned[p], vocab.len(), cfg.negatives, &mut rng);
                        let views: Vec<_> = negs.iter().map(|&i| table.row(i)).collect();
                        pair_loss(u, table.row(c), &views)
                    }
                };
                total += loss;
                grads.row_mut(p).scaled_add(inv, &g);
            }
            users.grads = grads;
            let (w, g) = (
                users.weights.as_slice_mut().expect("standard layout"),
                users.grads.as_slice_mut().expect("standard layout"),
            );
            opt.step(0, w, g);
        }
        epoch_losses.push(total / pairs.len().max(1) as f64);
    }
    Ok(Usr2VecOutput { users, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_dots_give_four_ln2() {
        let u = Array1::<f64>::zeros(3);
        let w = array![1.0, 2.0, 3.0];
        let (loss, _) = pair_loss(u.view(), w.view(), &[w.view(), w.view(), w.view()]);
        assert!((loss - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }
}
