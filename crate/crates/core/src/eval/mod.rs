//! Extrinsic (phenotype, mortality) and intrinsic (relatedness, retrieval)
//! evaluation of patient vectors, plus the feature-similarity regression.

mod cv;
mod logreg;
mod metrics;
mod regression;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use cv::{folds, mortality_f1_cv, phenotype_map_cv, FoldResult};
pub use logreg::{loss_and_grad as logreg_loss_and_grad, LogReg, LogRegConfig};
pub use metrics::{
    average_precision, jaccard, macro_f1, map_score, nearest, rank_desc, relatedness_mse, relatedness_pairs,
    retrieval_jaccard,
};
pub use regression::{concept_regression, ols, sample_pairs, OlsFit, COLUMNS};

use crate::corpus::Corpus;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    PhenotypeMap,
    MortalityF1,
    RelatednessMse,
    RetrievalJaccard,
    ConceptRegression,
}

impl EvalTask {
    pub fn name(self) -> &'static str {
        match self {
            EvalTask::PhenotypeMap => "phenotype_map",
            EvalTask::MortalityF1 => "mortality_f1",
            EvalTask::RelatednessMse => "relatedness_mse",
            EvalTask::RetrievalJaccard => "retrieval_jaccard",
            EvalTask::ConceptRegression => "concept_regression",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub retrieval_k: usize,
    pub logreg: LogRegConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            seed: 42,
            retrieval_k: 10,
            logreg: LogRegConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub task: EvalTask,
    pub value: f64,
    /// Per-fold values for cross-validated tasks, empty otherwise.
    pub folds: Vec<f64>,
    /// Per fold, labels missing from the training split.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub skipped_labels: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub regression: Option<OlsFit>,
    pub config_fingerprint: String,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// All four embedding evaluations of `users` (one row per corpus patient).
pub fn evaluate_embeddings(method: &str, users: &[Vec<f64>], corpus: &Corpus, cfg: &EvalConfig) -> Result<Vec<EvalReport>> {
    let fp = crate::io::fingerprint(cfg);
    let label_sets: Vec<_> = corpus.patients.iter().map(|p| p.labels.clone()).collect();
    let label_vecs: Vec<Vec<f64>> = (0..corpus.num_patients()).map(|i| corpus.label_vector(i)).collect();
    let mortality: Vec<Option<bool>> = corpus.patients.iter().map(|p| p.mortality).collect();
    let report = |task, value, folds: Vec<f64>, skipped: Vec<Vec<String>>| EvalReport {
        method: method.to_string(),
        task,
        value,
        folds,
        skipped_labels: skipped,
        regression: None,
        config_fingerprint: fp.clone(),
    };

    let mut out = Vec::new();
    let map = phenotype_map_cv(users, &label_sets, corpus.labels.len(), cfg.folds, cfg.seed, &cfg.logreg)?;
    let values: Vec<f64> = map.iter().map(|f| f.value).collect();
    let skipped: Vec<Vec<String>> = map
        .iter()
        .map(|f| f.skipped_labels.iter().map(|&l| corpus.labels[l].clone()).collect())
        .collect();
    let skipped = if skipped.iter().all(Vec::is_empty) { Vec::new() } else { skipped };
    out.push(report(EvalTask::PhenotypeMap, mean(&values), values, skipped));

    if mortality.iter().filter(|m| m.is_some()).count() >= cfg.folds {
        let f1 = mortality_f1_cv(users, &mortality, cfg.folds, cfg.seed, &cfg.logreg)?;
        let values: Vec<f64> = f1.iter().map(|f| f.value).collect();
        out.push(report(EvalTask::MortalityF1, mean(&values), values, Vec::new()));
    }

    let pairs = relatedness_pairs(users.len(), cfg.seed);
    out.push(report(EvalTask::RelatednessMse, relatedness_mse(users, &label_vecs, &pairs)?, Vec::new(), Vec::new()));
    out.push(report(
        EvalTask::RetrievalJaccard,
        retrieval_jaccard(users, &label_sets, cfg.retrieval_k)?,
        Vec::new(),
        Vec::new(),
    ));
    Ok(out)
}

/// Regression of label cosine on n-gram and concept TF-IDF cosines over `2n` sampled pairs.
pub fn evaluate_concept_regression(
    corpus: &Corpus,
    mentions: &crate::concepts::MentionStore,
    ngram_max: usize,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    use crate::concepts::{tfidf_features, FeatureKind};
    let ngram = tfidf_features(corpus, None, FeatureKind::Ngram, ngram_max)?;
    let concept = tfidf_features(corpus, Some(mentions), FeatureKind::Concept, ngram_max)?;
    let labels: Vec<Vec<f64>> = (0..corpus.num_patients()).map(|i| corpus.label_vector(i)).collect();
    let pairs = sample_pairs(corpus.num_patients(), 2 * corpus.num_patients(), cfg.seed);
    let fit = concept_regression(&ngram, &concept, &labels, &pairs)?;
    Ok(EvalReport {
        method: "tfidf".into(),
        task: EvalTask::ConceptRegression,
        value: fit.coefficients[2],
        folds: Vec::new(),
        skipped_labels: Vec::new(),
        regression: Some(fit),
        config_fingerprint: crate::io::fingerprint(cfg),
    })
}

const SUMMARY_TASKS: [EvalTask; 4] = [
    EvalTask::PhenotypeMap,
    EvalTask::MortalityF1,
    EvalTask::RelatednessMse,
    EvalTask::RetrievalJaccard,
];

/// One row per method, one column per embedding task; blank where a task was not run.
pub fn summary_csv(reports: &[EvalReport]) -> Result<String> {
    let mut table: BTreeMap<&str, BTreeMap<EvalTask, f64>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !table.contains_key(r.method.as_str()) {
            order.push(&r.method);
        }
        table.entry(&r.method).or_default().insert(r.task, r.value);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string()];
    header.extend(SUMMARY_TASKS.iter().map(|t| t.name().to_string()));
    w.write_record(&header)?;
    for m in order {
        let mut row = vec![m.to_string()];
        for t in SUMMARY_TASKS {
            row.push(table[m].get(&t).map(|v| format!("{v:.4}")).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_layout() {
        let r = |m: &str, t, v| EvalReport {
            method: m.into(),
            task: t,
            value: v,
            folds: vec![],
            skipped_labels: vec![],
            regression: None,
            config_fingerprint: String::new(),
        };
        let csv = summary_csv(&[
            r("caue", EvalTask::PhenotypeMap, 0.5),
            r("caue", EvalTask::RetrievalJaccard, 0.25),
            r("word2user", EvalTask::PhenotypeMap, 0.4),
        ])
        .unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,phenotype_map,mortality_f1,relatedness_mse,retrieval_jaccard");
        assert_eq!(lines[1], "caue,0.5000,,,0.2500");
        assert_eq!(lines[2], "word2user,0.4000,,,");
    }
}
