//! Ranking, classification and embedding-geometry metrics.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::cosine;

/// Indices sorted by descending score, ties by ascending index.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Mean over true labels of precision at that label's rank. `None` without true labels.
pub fn average_precision(scores: &[f64], truth: &BTreeSet<usize>) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, label) in rank_desc(scores).into_iter().enumerate() {
        if truth.contains(&label) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / truth.len() as f64)
}

/// Mean average precision over patients with at least one true label.
pub fn map_score(scores: &[Vec<f64>], truth: &[BTreeSet<usize>]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::invalid("score and truth counts differ"));
    }
    let aps: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter_map(|(s, t)| average_precision(s, t))
        .collect();
    if aps.is_empty() {
        return Err(Error::EmptyInput("no labeled patients to score".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of the F1 scores of the positive and the negative class.
pub fn macro_f1(predicted: &[bool], truth: &[bool]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (f1(tp, fp, fn_) + f1(tn, fn_, fp)) / 2.0
}

/// Patient pairs scored by relatedness: every unordered pair up to 2000
/// patients, otherwise `2n` pairs drawn uniformly with the given seed.
pub fn relatedness_pairs(n: usize, seed: u64) -> Vec<(usize, usize)> {
    if n <= 2000 {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2 * n)
            .map(|_| loop {
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if a != b {
                    break (a.min(b), a.max(b));
                }
            })
            .collect()
    }
}

/// Mean of `(cos(l₁,l₂) − cos(u₁,u₂))²` over `pairs`.
pub fn relatedness_mse(users: &[Vec<f64>], labels: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<f64> {
    if users.len() < 2 || users.len() != labels.len() {
        return Err(Error::invalid("relatedness needs at least 2 patients with label vectors"));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs to score".into()));
    }
    let sq: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let d = cosine(&labels[i], &labels[j]) - cosine(&users[i], &users[j]);
            d * d
        })
        .collect();
    Ok(sq.iter().sum::<f64>() / pairs.len() as f64)
}

pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// The `k` patients most cosine-similar to `query`, excluding itself, ties by index.
pub fn nearest(users: &[Vec<f64>], query: usize, k: usize) -> Vec<(usize, f64)> {
    let mut sims: Vec<(usize, f64)> = (0..users.len())
        .filter(|&j| j != query)
        .map(|j| (j, cosine(&users[query], &users[j])))
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.truncate(k);
    sims
}

/// Mean over queries of the mean Jaccard between the query's labels and
/// those of its `k` nearest patients.
pub fn retrieval_jaccard(users: &[Vec<f64>], labels: &[BTreeSet<usize>], k: usize) -> Result<f64> {
    if users.len() != labels.len() {
        return Err(Error::invalid("user and label counts differ"));
    }
    if k == 0 || users.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "retrieval at k={k} needs at least {} patients, found {}",
            k + 1,
            users.len()
        )));
    }
    let per: Vec<f64> = (0..users.len())
        .into_par_iter()
        .map(|q| nearest(users, q, k).iter().map(|&(j, _)| jaccard(&labels[q], &labels[j])).sum::<f64>() / k as f64)
        .collect();
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}
