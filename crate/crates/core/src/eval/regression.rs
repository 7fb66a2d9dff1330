//! Ordinary least squares of label similarity on feature similarities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::concepts::FeatureSet;
use crate::error::{Error, Result};
use crate::scalar::cosine;

pub const COLUMNS: [&str; 3] = ["intercept", "ngram_cosine", "concept_cosine"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    /// Two-sided, Student t with `n - p` degrees of freedom.
    pub p_values: Vec<f64>,
    pub residual_variance: f64,
    pub n: usize,
}

/// Inverse of a small symmetric positive-definite matrix by Gauss-Jordan
/// elimination with partial pivoting. A pivot below `1e-12` times the largest
/// diagonal entry marks its column as collinear with the earlier ones.
fn invert(mut a: Vec<Vec<f64>>, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let p = a.len();
    let scale = (0..p).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut inv: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        if a[piv][col].abs() <= 1e-12 * scale {
            return Err(Error::SingularDesign { column: names.get(col).unwrap_or(&"?").to_string() });
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..p {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..p {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..p {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Ok(inv)
}

/// Least-squares fit of `y` on the rows of `x` (include a constant column
/// for an intercept).
pub fn ols(x: &[Vec<f64>], y: &[f64], names: &[&str]) -> Result<OlsFit> {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    if n != y.len() || p == 0 {
        return Err(Error::invalid("design and response sizes disagree"));
    }
    if n <= p {
        return Err(Error::InvalidArgument(format!("{n} observations cannot fit {p} coefficients")));
    }
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * yi;
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert(xtx, names)?;
    let beta: Vec<f64> = (0..p).map(|i| (0..p).map(|j| inv[i][j] * xty[j]).sum()).collect();
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;
    let t_dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::invalid(e.to_string()))?;
    let mut se = Vec::with_capacity(p);
    let mut t_values = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for i in 0..p {
        let s = (sigma2 * inv[i][i]).sqrt();
        let t = if s > 0.0 { beta[i] / s } else { f64::INFINITY.copysign(beta[i]) };
        se.push(s);
        t_values.push(t);
        p_values.push(if t.is_finite() { 2.0 * t_dist.cdf(-t.abs()) } else { 0.0 });
    }
    Ok(OlsFit {
        coefficients: beta,
        std_errors: se,
        t_values,
        p_values,
        residual_variance: sigma2,
        n,
    })
}

/// `2n` distinct-patient pairs drawn uniformly with `seed`.
pub fn sample_pairs(n: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if a != b {
                break (a, b);
            }
        })
        .collect()
}

/// Regresses label cosine on `[1, ngram cosine, concept cosine]` over `pairs`.
pub fn concept_regression(
    ngram: &FeatureSet,
    concept: &FeatureSet,
    labels: &[Vec<f64>],
    pairs: &[(usize, usize)],
) -> Result<OlsFit> {
    let n = labels.len();
    if ngram.vectors.len() != n || concept.vectors.len() != n {
        return Err(Error::invalid("feature sets and labels cover different patients"));
    }
    let x: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(a, b)| vec![1.0, ngram.vectors[a].cosine(&ngram.vectors[b]), concept.vectors[a].cosine(&concept.vectors[b])])
        .collect();
    let y: Vec<f64> = pairs.iter().map(|&(a, b)| cosine(&labels[a], &labels[b])).collect();
    ols(&x, &y, &COLUMNS)
}
