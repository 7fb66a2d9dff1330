//! K-fold cross-validated phenotype MAP and mortality macro-F1.

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::logreg::{LogReg, LogRegConfig};
use super::metrics::{macro_f1, map_score};
use crate::error::{Error, Result};

/// Shuffles `0..n` with `seed` and cuts it into `k` folds; the first
/// `n mod k` folds get one extra patient.
pub fn folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(format!("cannot split {n} patients into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

fn stack(rows: &[&Vec<f64>]) -> Array2<f64> {
    let dim = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i][j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub value: f64,
    /// Labels absent from this fold's training patients, left out of scoring.
    pub skipped_labels: Vec<usize>,
}

/// Phenotype MAP per fold: one-vs-rest logistic regression on the training
/// folds, labels ranked by probability on the held-out fold.
pub fn phenotype_map_cv(
    users: &[Vec<f64>],
    labels: &[BTreeSet<usize>],
    n_labels: usize,
    k: usize,
    seed: u64,
    cfg: &LogRegConfig,
) -> Result<Vec<FoldResult>> {
    if users.len() != labels.len() {
        return Err(Error::invalid("user and label counts differ"));
    }
    let parts = folds(users.len(), k, seed)?;
    parts
        .par_iter()
        .map(|test| {
            let test_set: BTreeSet<usize> = test.iter().copied().collect();
            let train: Vec<usize> = (0..users.len()).filter(|i| !test_set.contains(i)).collect();
            let present: BTreeSet<usize> = train.iter().flat_map(|&i| labels[i].iter().copied()).collect();
            let kept: Vec<usize> = (0..n_labels).filter(|l| present.contains(l)).collect();
            let skipped: Vec<usize> = (0..n_labels).filter(|l| !present.contains(l)).collect();
            let x = stack(&train.iter().map(|&i| &users[i]).collect::<Vec<_>>());
            let y = Array2::from_shape_fn((train.len(), kept.len()), |(r, c)| {
                f64::from(u8::from(labels[train[r]].contains(&kept[c])))
            });
            let model = LogReg::fit(x.view(), y.view(), cfg)?;
            let xt = stack(&test.iter().map(|&i| &users[i]).collect::<Vec<_>>());
            let probs = model.predict_proba(xt.view());
            let scores: Vec<Vec<f64>> = probs.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
            let truth: Vec<BTreeSet<usize>> = test
                .iter()
                .map(|&i| kept.iter().enumerate().filter(|(_, l)| labels[i].contains(l)).map(|(c, _)| c).collect())
                .collect();
            Ok(FoldResult { value: map_score(&scores, &truth)?, skipped_labels: skipped })
        })
        .collect()
}

/// Mortality macro-F1 per fold at threshold 0.5. Patients without a
/// mortality outcome are left out before folding.
pub fn mortality_f1_cv(
    users: &[Vec<f64>],
    mortality: &[Option<bool>],
    k: usize,
    seed: u64,
    cfg: &LogRegConfig,
) -> Result<Vec<FoldResult>> {
    let known: Vec<usize> = (0..users.len()).filter(|&i| mortality[i].is_some()).collect();
    let parts = folds(known.len(), k, seed)?;
    parts
        .par_iter()
        .map(|test_pos| {
            let test: Vec<usize> = test_pos.iter().map(|&p| known[p]).collect();
            let test_set: BTreeSet<usize> = test.iter().copied().collect();
            let train: Vec<usize> = known.iter().copied().filter(|i| !test_set.contains(i)).collect();
            let x = stack(&train.iter().map(|&i| &users[i]).collect::<Vec<_>>());
            let y = Array2::from_shape_fn((train.len(), 1), |(r, _)| f64::from(u8::from(mortality[train[r]] == Some(true))));
            let model = LogReg::fit(x.view(), y.view(), cfg)?;
            let xt = stack(&test.iter().map(|&i| &users[i]).collect::<Vec<_>>());
            let probs = model.predict_proba(xt.view());
            let pred: Vec<bool> = probs.column(0).iter().map(|&p| p >= 0.5).collect();
            let truth: Vec<bool> = test.iter().map(|&i| mortality[i] == Some(true)).collect();
            Ok(FoldResult { value: macro_f1(&pred, &truth), skipped_labels: Vec::new() })
        })
        .collect()
}
