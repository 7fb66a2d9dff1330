//! One function per subcommand. Every output lands under the resolved output directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use caue::baselines::{usr2vec_train, word2user, word2user_concept, Usr2VecInputs};
use caue::concepts::{read_lexicon, ConceptMatcher, LexiconEntry, MentionStore};
use caue::corpus::{apply_label_sidecar, ingest, Corpus, Preprocessor};
use caue::eval::{evaluate_concept_regression, evaluate_embeddings, nearest, summary_csv, EvalReport, EvalTask};
use caue::io::{read_json, write_atomic, write_json_atomic};
use caue::nn::{read_word2vec_rows, write_word2vec_text};
use caue::synth::{generate, write_synth};
use caue::training::{
    init_params, init_rng, load_checkpoint, save_checkpoint, train, user_vectors, ConceptInputs, EpochLog, ModelParams,
    TrainConfig, TrainState, TrainingData,
};
use caue::Scalar;
use ndarray::Array2;
use serde::Serialize;

use crate::config::{Precision, RunConfig};

const CORPUS_FILE: &str = "corpus.json";
const MENTIONS_FILE: &str = "mentions.json";
const CHECKPOINT_FILE: &str = "checkpoint.bin";
const LOSS_LOG_FILE: &str = "loss_log.json";
const SUMMARY_FILE: &str = "summary.csv";
const REPORT_FILE: &str = "report.json";
const REGRESSION_REPORT: &str = "concept_regression";

fn embeddings_path(out: &Path, method: &str) -> PathBuf {
    out.join("embeddings").join(format!("{method}.txt"))
}

fn report_path(out: &Path, method: &str) -> PathBuf {
    out.join("reports").join(format!("{method}.json"))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if !path.exists() {
        bail!(caue::Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("not found; {hint}"))
        ));
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Writes the resolved config beside the outputs of `command`.
pub fn record_config(cfg: &RunConfig, command: &str) -> Result<()> {
    write_atomic(&cfg.out().join(format!("{command}.config.toml")), cfg.to_toml()?.as_bytes())?;
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let corpus = generate(&cfg.synth)?;
    let dir = cfg.out().join("synth");
    write_synth(&dir, &corpus)?;
    print_json(&serde_json::json!({
        "dir": dir,
        "records": corpus.records.len(),
        "concepts": corpus.lexicon.len(),
        "labels": corpus.manifest.labels,
    }))
}

pub fn ingest_cmd(cfg: &RunConfig) -> Result<()> {
    let src = cfg.paths.corpus.as_deref().expect("resolved");
    let mut records = ingest(open(src)?, cfg.paths.input_format)?;
    if let Some(labels) = &cfg.paths.labels {
        apply_label_sidecar(&mut records, open(labels)?)?;
    }
    let corpus = Corpus::build(&records, &Preprocessor::new(cfg.preprocess.min_tokens), cfg.train.vocab_size)?;
    corpus.save(&cfg.out().join(CORPUS_FILE))?;
    print_json(&serde_json::json!({
        "records": records.len(),
        "patients": corpus.num_patients(),
        "notes": corpus.notes.len(),
        "dropped_notes": corpus.dropped_notes,
        "vocab_size": corpus.vocab.len(),
        "labels": corpus.labels.len(),
    }))
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let path = cfg.out().join(CORPUS_FILE);
    require(&path, "run `ingest` first")?;
    Ok(Corpus::load(&path)?)
}

fn load_lexicon(cfg: &RunConfig) -> Result<Vec<LexiconEntry>> {
    let path = cfg.paths.lexicon.as_deref().expect("resolved");
    Ok(read_lexicon(open(path)?)?)
}

fn load_mentions(cfg: &RunConfig) -> Result<MentionStore> {
    let path = cfg.out().join(MENTIONS_FILE);
    require(&path, "run `extract-concepts` first")?;
    Ok(MentionStore::load(&path)?)
}

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let matcher = ConceptMatcher::new(load_lexicon(cfg)?, &cfg.concepts.exclusions)?;
    let mentions = MentionStore::extract(&corpus, &matcher);
    mentions.save(&cfg.out().join(MENTIONS_FILE))?;
    let distinct: std::collections::BTreeSet<&str> =
        mentions.by_note.iter().flatten().map(|m| m.concept_id.as_str()).collect();
    print_json(&serde_json::json!({
        "mentions": mentions.total(),
        "distinct_concepts": distinct.len(),
        "notes_with_mentions": mentions.by_note.iter().filter(|m| !m.is_empty()).count(),
    }))
}

/// `patient:visit` row labels, whitespace replaced so the word2vec format stays parseable.
fn patient_labels(corpus: &Corpus) -> Vec<String> {
    corpus
        .patients
        .iter()
        .map(|p| format!("{}:{}", p.patient_key, p.visit_key).split_whitespace().collect::<Vec<_>>().join("_"))
        .collect()
}

fn write_embeddings(out: &Path, method: &str, corpus: &Corpus, rows: &[Vec<f64>]) -> Result<()> {
    let dim = rows.first().map_or(0, Vec::len);
    let matrix = Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i][j]);
    let mut buf = Vec::new();
    write_word2vec_text(&mut buf, &patient_labels(corpus), matrix.view())?;
    write_atomic(&embeddings_path(out, method), &buf)?;
    Ok(())
}

fn read_embeddings(out: &Path, method: &str, corpus: &Corpus) -> Result<Vec<Vec<f64>>> {
    let path = embeddings_path(out, method);
    let hint = if method == "caue" { "run `train` first" } else { "run `evaluate` first" };
    require(&path, hint)?;
    let (labels, rows) = read_word2vec_rows(open(&path)?)?;
    if labels != patient_labels(corpus) {
        bail!(caue::Error::InvalidArgument(format!("{} does not match the ingested corpus", path.display())));
    }
    Ok(rows.outer_iter().map(|r| r.to_vec()).collect())
}

/// Parameters as `train` initializes them: the starting point for CAUE and
/// the fixed word and concept tables of the baselines.
fn initial_params<F: Scalar>(
    cfg: &RunConfig,
    corpus: &Corpus,
    concepts: Option<ConceptInputs<'_>>,
) -> Result<ModelParams<F>> {
    let pretrained = cfg.paths.word_vectors.as_deref().map(open).transpose()?;
    Ok(init_params(corpus, concepts, &cfg.train, pretrained, &mut init_rng(cfg.train.seed))?)
}

pub fn train_cmd(cfg: &RunConfig, resume: bool) -> Result<()> {
    match cfg.precision {
        Precision::F64 => train_typed::<f64>(cfg, resume),
        Precision::F32 => train_typed::<f32>(cfg, resume),
    }
}

fn train_typed<F: Scalar>(cfg: &RunConfig, resume: bool) -> Result<()> {
    let out = cfg.out();
    let corpus = load_corpus(cfg)?;
    let mentions = if cfg.train.enable_concepts { Some(load_mentions(cfg)?) } else { None };
    let lexicon = if cfg.train.enable_concepts { load_lexicon(cfg)? } else { Vec::new() };
    let concepts = mentions.as_ref().map(|m| ConceptInputs { mentions: m, lexicon: &lexicon });

    let log_path = out.join(LOSS_LOG_FILE);
    let (mut state, mut log) = if resume {
        let path = out.join(CHECKPOINT_FILE);
        require(&path, "nothing to resume")?;
        let (state, header) = load_checkpoint::<F>(&path)?;
        let without_epochs = |c: &TrainConfig| TrainConfig { epochs: 0, ..c.clone() }.fingerprint();
        if without_epochs(&header.config) != without_epochs(&cfg.train) {
            bail!(caue::Error::InvalidArgument("checkpoint was written with a different [train] config".into()));
        }
        if header.scalar != std::any::type_name::<F>() {
            bail!(caue::Error::InvalidArgument(format!("checkpoint holds {} values, config asks for {:?}", header.scalar, cfg.precision)));
        }
        let mut log: Vec<EpochLog> = if log_path.exists() { read_json(&log_path)? } else { Vec::new() };
        log.truncate(state.next_epoch);
        (state, log)
    } else {
        (TrainState::new(initial_params::<F>(cfg, &corpus, concepts)?, &cfg.train), Vec::new())
    };
    let data = TrainingData::from_corpus(&corpus, mentions.as_ref(), &state.params.concept_vocab);

    let ckpt_dir = out.join("checkpoints");
    let every = cfg.checkpoints.every;
    let keep = cfg.checkpoints.keep;
    let mut saved: Vec<PathBuf> = Vec::new();
    let new_entries = train(&mut state, &data, &cfg.train, |entry, st| {
        eprintln!("epoch {} loss {:.6}", entry.epoch, entry.mean_loss);
        if every > 0 && (entry.epoch + 1) % every == 0 {
            let path = ckpt_dir.join(format!("epoch_{:03}.bin", entry.epoch));
            save_checkpoint(&path, st, &cfg.train)?;
            saved.push(path);
            while saved.len() > keep {
                let old = saved.remove(0);
                std::fs::remove_file(&old).map_err(|e| caue::Error::io(&old, e))?;
            }
        }
        Ok(())
    })?;
    log.extend(new_entries);
    save_checkpoint(&out.join(CHECKPOINT_FILE), &state, &cfg.train)?;
    write_json_atomic(&log_path, &log)?;
    write_embeddings(out, "caue", &corpus, &user_vectors(&state.params))?;
    print_json(&serde_json::json!({
        "epochs": log.len(),
        "first_loss": log.first().map(|e| e.mean_loss),
        "final_loss": log.last().map(|e| e.mean_loss),
        "checkpoint": out.join(CHECKPOINT_FILE),
    }))
}

fn baseline_vectors(
    cfg: &RunConfig,
    corpus: &Corpus,
    method: &str,
    concept_data: Option<&(MentionStore, Vec<LexiconEntry>)>,
) -> Result<Vec<Vec<f64>>> {
    let needs_concepts = method.ends_with("_concept");
    let concept_data = match (needs_concepts, concept_data) {
        (true, None) => bail!(caue::Error::InvalidArgument(format!("{method} needs concept mentions"))),
        (true, Some(d)) => Some(d),
        (false, _) => None,
    };
    let inputs = concept_data.map(|(m, l)| ConceptInputs { mentions: m, lexicon: l });
    let mut train_cfg = cfg.train.clone();
    train_cfg.enable_concepts = needs_concepts;
    let cfg = RunConfig { train: train_cfg, ..cfg.clone() };
    let params = initial_params::<f64>(&cfg, corpus, inputs)?;
    let rows = match method {
        "word2user" => word2user(corpus, &params.words)?,
        "word2user_concept" => {
            let (mentions, _) = concept_data.expect("checked");
            word2user_concept(
                corpus,
                &params.words,
                &params.concepts,
                &params.concept_vocab,
                mentions,
                cfg.baselines.concat,
            )?
        }
        "usr2vec" | "usr2vec_concept" => {
            let inputs = Usr2VecInputs {
                corpus,
                words: &params.words,
                concepts: concept_data.map(|(m, _)| (&params.concepts, &params.concept_vocab, m)),
            };
            let out = usr2vec_train(&inputs, &cfg.baselines.usr2vec)?;
            return Ok(out.users.weights.outer_iter().map(|r| r.to_vec()).collect());
        }
        other => bail!(caue::Error::InvalidArgument(format!("unknown method {other:?}"))),
    };
    Ok(rows.into_iter().map(|r| r.to_vec()).collect())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let corpus = load_corpus(cfg)?;
    let mentions_path = out.join(MENTIONS_FILE);
    let concept_data = if mentions_path.exists() {
        Some((MentionStore::load(&mentions_path)?, load_lexicon(cfg)?))
    } else {
        None
    };
    let mut summary = BTreeMap::new();
    for method in &cfg.baselines.methods {
        let users = if method == "caue" {
            read_embeddings(out, method, &corpus)?
        } else {
            let rows = baseline_vectors(cfg, &corpus, method, concept_data.as_ref())?;
            write_embeddings(out, method, &corpus, &rows)?;
            rows
        };
        let reports = evaluate_embeddings(method, &users, &corpus, &cfg.eval)?;
        write_json_atomic(&report_path(out, method), &reports)?;
        let values: BTreeMap<&str, f64> = reports.iter().map(|r| (r.task.name(), r.value)).collect();
        summary.insert(method.clone(), serde_json::to_value(values)?);
    }
    if let Some((mentions, _)) = &concept_data {
        let report = evaluate_concept_regression(&corpus, mentions, cfg.concepts.ngram_max, &cfg.eval)?;
        write_json_atomic(&report_path(out, REGRESSION_REPORT), &[&report])?;
        summary.insert(REGRESSION_REPORT.into(), serde_json::to_value(&report.regression)?);
    }
    print_json(&summary)
}

#[derive(Serialize)]
struct Neighbor {
    rank: usize,
    patient: String,
    visit: String,
    cosine: f64,
    labels: Vec<String>,
}

pub fn retrieve(cfg: &RunConfig, patient: &str, visit: Option<&str>, k: usize, method: &str) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let n = corpus.num_patients();
    if k == 0 || k + 1 > n {
        bail!(caue::Error::InvalidArgument(format!("k must be in 1..={} for {n} patients, got {k}", n.saturating_sub(1))));
    }
    let candidates: Vec<usize> = corpus
        .patients
        .iter()
        .filter(|p| p.patient_key == patient && visit.is_none_or(|v| p.visit_key == v))
        .map(|p| p.patient_id)
        .collect();
    let query = match candidates.as_slice() {
        [q] => *q,
        [] => bail!(caue::Error::InvalidArgument(format!("no patient {patient:?} with visit {visit:?}"))),
        _ => bail!(caue::Error::InvalidArgument(format!("patient {patient:?} has several visits; pass --visit"))),
    };
    let users = read_embeddings(cfg.out(), method, &corpus)?;
    let label_names = |i: usize| corpus.patients[i].labels.iter().map(|&l| corpus.labels[l].clone()).collect();
    let neighbors: Vec<Neighbor> = nearest(&users, query, k)
        .into_iter()
        .enumerate()
        .map(|(r, (i, cosine))| Neighbor {
            rank: r + 1,
            patient: corpus.patients[i].patient_key.clone(),
            visit: corpus.patients[i].visit_key.clone(),
            cosine,
            labels: label_names(i),
        })
        .collect();
    let q = &corpus.patients[query];
    print_json(&serde_json::json!({
        "method": method,
        "query": { "patient": q.patient_key, "visit": q.visit_key, "labels": label_names(query) },
        "k": k,
        "neighbors": neighbors,
    }))
}

/// Gathers every report under `reports/` into `report.json` and `summary.csv`.
pub fn report(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let dir = out.join("reports");
    require(&dir, "run `evaluate` first")?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| caue::Error::io(&dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| caue::Error::io(&dir, err)))
        .collect::<std::result::Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "json"));
    files.sort();
    let order: BTreeMap<&str, usize> = cfg.baselines.methods.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
    let mut reports: Vec<EvalReport> = Vec::new();
    for f in &files {
        reports.extend(read_json::<Vec<EvalReport>>(f)?);
    }
    reports.sort_by_key(|r| (order.get(r.method.as_str()).copied().unwrap_or(usize::MAX), r.method.clone(), r.task));
    let (regression, embedding): (Vec<_>, Vec<_>) =
        reports.into_iter().partition(|r| r.task == EvalTask::ConceptRegression);
    let csv = summary_csv(&embedding)?;
    write_atomic(&out.join(SUMMARY_FILE), csv.as_bytes())?;
    let mut table: Vec<(String, BTreeMap<&str, f64>)> = Vec::new();
    for r in &embedding {
        if table.last().is_none_or(|(m, _)| *m != r.method) {
            table.push((r.method.clone(), BTreeMap::new()));
        }
        table.last_mut().expect("pushed").1.insert(r.task.name(), r.value);
    }
    let consolidated = serde_json::json!({
        "methods": table.iter().map(|(m, v)| serde_json::json!({ "method": m, "scores": v })).collect::<Vec<_>>(),
        "concept_regression": regression.first().and_then(|r| r.regression.clone()),
        "reports": embedding,
    });
    write_json_atomic(&out.join(REPORT_FILE), &consolidated)?;
    print!("{csv}");
    Ok(())
}
