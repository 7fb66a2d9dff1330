use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::{joint_loss, loss_patient_concept, loss_patient_document};
use super::model::{init_params, ConceptInputs, ModelParams, TrainingData};
use crate::corpus::Corpus;
use super::rmsprop::RmsProp;
use super::sampling::{
    make_token_negative, random_split, sample_concept_negatives, sample_doc_negatives, sample_positive_concepts,
    shuffle, Snippet,
};
use crate::error::{Error, Result};
use crate::nn::{BiGru, EncoderGrads, RowGrads};
use crate::scalar::Scalar;

/// One positive snippet with its sampled counterfactuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub patient_id: usize,
    pub positive: Snippet,
    pub doc_negatives: Vec<Snippet>,
    pub token_negatives: Vec<Snippet>,
    pub positive_concepts: Vec<usize>,
    /// One list per entry of `positive_concepts`.
    pub concept_negatives: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLoss {
    pub total: f64,
    pub document: f64,
    pub concept: f64,
    pub concept_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_document_loss: f64,
    pub mean_concept_loss: f64,
    pub examples: usize,
    pub batches: usize,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream for a position in the training schedule.
pub fn derived_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let key = parts.iter().fold(splitmix(seed), |h, &p| splitmix(h ^ p));
    ChaCha8Rng::seed_from_u64(key)
}

const EPOCH_STREAM: u64 = u64::MAX;
const DROPOUT_STREAM: u64 = u64::MAX - 1;

/// Splits every note of every patient into snippets and shuffles the pool.
pub fn epoch_snippets(data: &TrainingData, config: &TrainConfig, epoch: usize) -> Vec<Snippet> {
    let mut rng = derived_rng(config.seed, &[EPOCH_STREAM, epoch as u64]);
    let mut pool = Vec::new();
    for (pid, notes) in data.notes.iter().enumerate() {
        for (note_id, ids) in notes {
            if !ids.is_empty() {
                pool.extend(random_split(pid, *note_id, ids, config.snippet_min, config.snippet_max, &mut rng));
            }
        }
    }
    shuffle(&mut pool, &mut rng);
    pool
}

/// Samples the counterfactuals and concepts for the snippet at `pos` of `pool`.
pub fn build_example<R: Rng>(
    data: &TrainingData,
    pool: &[Snippet],
    pos: usize,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainingExample> {
    let positive = pool[pos].clone();
    let pid = positive.patient_id;
    let mut doc_negatives = Vec::new();
    let mut token_negatives = Vec::new();
    if config.enable_contrastive {
        doc_negatives = sample_doc_negatives(pid, pool, config.negatives_per_positive, rng)?
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
        for _ in 0..config.token_negatives {
            token_negatives.push(make_token_negative(&positive, data.vocab_len, config.token_replace_prob, rng)?);
        }
    }
    let mut positive_concepts = Vec::new();
    let mut concept_negatives = Vec::new();
    if config.enable_concepts && config.lambda > 0.0 {
        positive_concepts = sample_positive_concepts(&data.concept_counts[pid], config.max_positive_concepts, rng);
        let owned = data.owned_concepts(pid);
        concept_negatives = positive_concepts
            .iter()
            .map(|_| {
                if config.enable_contrastive {
                    sample_concept_negatives(&owned, data.num_concepts, config.concept_negatives, rng)
                } else {
                    Vec::new()
                }
            })
            .collect();
    }
    Ok(TrainingExample {
        patient_id: pid,
        positive,
        doc_negatives,
        token_negatives,
        positive_concepts,
        concept_negatives,
    })
}

/// Unscaled gradients of one example's two task losses.
struct ExampleGrads<F> {
    doc_loss: f64,
    concept_loss: f64,
    concept_pairs: usize,
    patient_id: usize,
    d_user_doc: Array1<F>,
    d_user_concept: Array1<F>,
    encoder: EncoderGrads<F>,
    concepts: RowGrads<F>,
}

fn example_grads<F: Scalar>(
    params: &ModelParams<F>,
    ex: &TrainingExample,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ExampleGrads<F>> {
    let enc = &params.encoder;
    let user = params.users.row(ex.patient_id);
    let mut encoder = EncoderGrads::for_encoder(enc);

    let pos = enc.encode(&ex.positive.token_ids, &params.words, config.dropout, true, rng)?;
    let negs = ex
        .doc_negatives
        .iter()
        .chain(&ex.token_negatives)
        .map(|s| enc.encode(&s.token_ids, &params.words, config.dropout, true, rng))
        .collect::<Result<Vec<_>>>()?;
    let neg_views: Vec<_> = negs.iter().map(|d| d.vector.view()).collect();
    let doc = loss_patient_document(user, pos.vector.view(), &neg_views);
    enc.backward(&pos, doc.d_pos.view(), &mut encoder)?;
    for (d, g) in negs.iter().zip(&doc.d_negs) {
        enc.backward(d, g.view(), &mut encoder)?;
    }

    let mut concept_loss = 0.0;
    let mut d_user_concept = Array1::zeros(user.len());
    let mut concepts = RowGrads::new();
    for (&c, neg_ids) in ex.positive_concepts.iter().zip(&ex.concept_negatives) {
        let neg_rows: Vec<_> = neg_ids.iter().map(|&n| params.concepts.row(n)).collect();
        let r = loss_patient_concept(user, params.concepts.row(c), &neg_rows);
        concept_loss += r.loss.to_f64_lossy();
        d_user_concept += &r.d_user;
        concepts.push_row(c, r.d_pos.view());
        for (&n, g) in neg_ids.iter().zip(&r.d_negs) {
            concepts.push_row(n, g.view());
        }
    }

    Ok(ExampleGrads {
        doc_loss: doc.loss.to_f64_lossy(),
        concept_loss,
        concept_pairs: ex.positive_concepts.len(),
        patient_id: ex.patient_id,
        d_user_doc: doc.d_user,
        d_user_concept,
        encoder,
        concepts,
    })
}

/// Gradient of the batch objective with respect to every parameter.
#[derive(Debug, Clone)]
pub struct BatchGrads<F> {
    pub users: RowGrads<F>,
    pub words: RowGrads<F>,
    pub concepts: RowGrads<F>,
    pub gru: Option<BiGru<F>>,
}

/// Loss of a batch and its gradient: `λ · mean concept loss + (1-λ) · mean
/// document loss`, the document mean over examples and the concept mean over
/// sampled concept pairs. Examples run in parallel; reduction is in batch
/// order, so the result does not depend on the thread count.
pub fn batch_loss_and_grads<F: Scalar>(
    params: &ModelParams<F>,
    batch: &[TrainingExample],
    config: &TrainConfig,
    dropout_seed: u64,
) -> Result<(StepLoss, BatchGrads<F>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let per: Vec<ExampleGrads<F>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = derived_rng(dropout_seed, &[DROPOUT_STREAM, i as u64]);
            example_grads(params, ex, config, &mut rng)
        })
        .collect::<Result<_>>()?;

    let use_concepts = config.enable_concepts;
    let pairs: usize = if use_concepts { per.iter().map(|e| e.concept_pairs).sum() } else { 0 };
    let doc_mean = per.iter().map(|e| e.doc_loss).sum::<f64>() / per.len() as f64;
    let concept_mean = if pairs > 0 {
        per.iter().map(|e| e.concept_loss).sum::<f64>() / pairs as f64
    } else {
        0.0
    };
    let loss = StepLoss {
        total: joint_loss(config.lambda, config.alpha, concept_mean, doc_mean, 0.0),
        document: doc_mean,
        concept: concept_mean,
        concept_pairs: pairs,
    };

    let w_doc = F::lit((1.0 - config.lambda) / per.len() as f64);
    let w_con = F::lit(if pairs > 0 { config.lambda / pairs as f64 } else { 0.0 });
    let mut grads = BatchGrads {
        users: RowGrads::new(),
        words: RowGrads::new(),
        concepts: RowGrads::new(),
        gru: params.gru_zeros(),
    };
    for mut e in per {
        let mut du = e.d_user_doc * w_doc;
        if pairs > 0 {
            du.scaled_add(w_con, &e.d_user_concept);
            e.concepts.scale(w_con);
            grads.concepts.append(e.concepts);
        }
        grads.users.push_row(e.patient_id, du.view());
        e.encoder.words.scale(w_doc);
        grads.words.append(e.encoder.words);
        if let (Some(acc), Some(mut g)) = (grads.gru.as_mut(), e.encoder.gru) {
            g.scale(w_doc);
            acc.add_assign(&g);
        }
    }
    Ok((loss, grads))
}

/// Applies one RMSprop update from `grads`. The concept table is skipped
/// when the concept task is off, so it stays bit-identical.
pub fn apply_grads<F: Scalar>(
    params: &mut ModelParams<F>,
    grads: BatchGrads<F>,
    opt: &mut RmsProp<F>,
    config: &TrainConfig,
) {
    grads.words.scatter_into(&mut params.words.grads);
    grads.users.scatter_into(&mut params.users.grads);
    grads.concepts.scatter_into(&mut params.concepts.grads);
    step_table(opt, 0, &mut params.words);
    step_table(opt, 1, &mut params.users);
    if config.enable_concepts {
        step_table(opt, 2, &mut params.concepts);
    }
    if let (crate::nn::Encoder::BiGru(gru), Some(mut g)) = (&mut params.encoder, grads.gru) {
        for (slot, (p, gs)) in gru.slices_mut().into_iter().zip(g.slices_mut()).enumerate() {
            opt.step(3 + slot, p, gs);
        }
    }
}

fn step_table<F: Scalar>(opt: &mut RmsProp<F>, slot: usize, table: &mut crate::nn::EmbeddingTable<F>) {
    let p = table.weights.as_slice_mut().expect("standard layout");
    let g = table.grads.as_slice_mut().expect("standard layout");
    opt.step(slot, p, g);
}

/// One optimizer step on `batch`; returns the batch loss before the update.
pub fn joint_step<F: Scalar>(
    batch: &[TrainingExample],
    params: &mut ModelParams<F>,
    opt: &mut RmsProp<F>,
    config: &TrainConfig,
    dropout_seed: u64,
) -> Result<StepLoss> {
    let (loss, grads) = batch_loss_and_grads(params, batch, config, dropout_seed)?;
    if !loss.total.is_finite() {
        return Err(Error::NonFiniteLoss { value: loss.total, epoch: 0, batch: 0 });
    }
    apply_grads(params, grads, opt, config);
    Ok(loss)
}

/// Mutable training state: parameters, optimizer caches, and the next epoch.
#[derive(Debug, Clone)]
pub struct TrainState<F> {
    pub params: ModelParams<F>,
    pub optimizer: RmsProp<F>,
    pub next_epoch: usize,
}

impl<F: Scalar> TrainState<F> {
    pub fn new(params: ModelParams<F>, config: &TrainConfig) -> Self {
        TrainState {
            params,
            optimizer: RmsProp::new(config.lr, config.rmsprop_decay, config.rmsprop_eps),
            next_epoch: 0,
        }
    }
}

/// Runs the remaining epochs of `state`. `on_epoch` sees the state after
/// each epoch (for checkpoints) and may abort with an error.
pub fn train<F, C>(
    state: &mut TrainState<F>,
    data: &TrainingData,
    config: &TrainConfig,
    mut on_epoch: C,
) -> Result<Vec<EpochLog>>
where
    F: Scalar,
    C: FnMut(&EpochLog, &TrainState<F>) -> Result<()>,
{
    config.validate()?;
    if data.num_patients() < 2 {
        return Err(Error::TooFewPatients { needed: 2, found: data.num_patients() });
    }
    let mut log = Vec::new();
    while state.next_epoch < config.epochs {
        let epoch = state.next_epoch;
        let pool = epoch_snippets(data, config, epoch);
        let mut sums = (0.0, 0.0, 0.0);
        let mut batches = 0;
        for (b, chunk) in (0..pool.len()).collect::<Vec<_>>().chunks(config.batch_size).enumerate() {
            let batch: Vec<TrainingExample> = chunk
                .par_iter()
                .map(|&pos| {
                    let mut rng = derived_rng(config.seed, &[epoch as u64, b as u64, pos as u64]);
                    build_example(data, &pool, pos, config, &mut rng)
                })
                .collect::<Result<_>>()?;
            let dropout_seed = splitmix(config.seed ^ splitmix(((epoch as u64) << 32) | b as u64));
            let (loss, grads) = batch_loss_and_grads(&state.params, &batch, config, dropout_seed)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { value: loss.total, epoch, batch: b });
            }
            apply_grads(&mut state.params, grads, &mut state.optimizer, config);
            sums.0 += loss.total;
            sums.1 += loss.document;
            sums.2 += loss.concept;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let entry = EpochLog {
            epoch,
            mean_loss: sums.0 / n,
            mean_document_loss: sums.1 / n,
            mean_concept_loss: sums.2 / n,
            examples: pool.len(),
            batches,
        };
        state.next_epoch += 1;
        on_epoch(&entry, state)?;
        log.push(entry);
    }
    Ok(log)
}

const INIT_STREAM: u64 = u64::MAX - 2;

/// Stream used to initialize parameters for `seed`.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    derived_rng(seed, &[INIT_STREAM])
}

/// Result of [`fit`].
#[derive(Debug, Clone)]
pub struct Fit<F> {
    pub state: TrainState<F>,
    pub log: Vec<EpochLog>,
    pub data: TrainingData,
}

/// Initializes parameters from `config.seed` and trains for `config.epochs`.
pub fn fit<F, B, C>(
    corpus: &Corpus,
    concepts: Option<ConceptInputs<'_>>,
    config: &TrainConfig,
    pretrained: Option<B>,
    on_epoch: C,
) -> Result<Fit<F>>
where
    F: Scalar,
    B: std::io::BufRead,
    C: FnMut(&EpochLog, &TrainState<F>) -> Result<()>,
{
    let params = init_params(corpus, concepts, config, pretrained, &mut init_rng(config.seed))?;
    let data = TrainingData::from_corpus(corpus, concepts.map(|c| c.mentions), &params.concept_vocab);
    let mut state = TrainState::new(params, config);
    let log = train(&mut state, &data, config, on_epoch)?;
    Ok(Fit { state, log, data })
}

/// Patient vectors as plain rows, for evaluation.
pub fn user_vectors<F: Scalar>(params: &ModelParams<F>) -> Vec<Vec<f64>> {
    params
        .users
        .weights
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x.to_f64_lossy()).collect())
        .collect()
}
