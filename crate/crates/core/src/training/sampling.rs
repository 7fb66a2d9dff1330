//! Snippet splitting and counterfactual sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RESERVED;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub patient_id: usize,
    pub note_id: usize,
    /// Offset of the first token within its note.
    pub start: usize,
    pub token_ids: Vec<usize>,
}

/// Cuts a note into consecutive snippets. Notes of at most `max` tokens stay
/// whole; longer notes are cut left to right into pieces whose lengths are
/// uniform in `[min, max]`, and whatever remains (at most `max`) is the last
/// piece.
pub fn random_split<R: Rng>(
    patient_id: usize,
    note_id: usize,
    tokens: &[usize],
    min: usize,
    max: usize,
    rng: &mut R,
) -> Vec<Snippet> {
    assert!(min >= 1 && min <= max, "invalid snippet bounds [{min}, {max}]");
    let mut out = Vec::new();
    let mut start = 0;
    while tokens.len() - start > max {
        let len = rng.gen_range(min..=max);
        out.push(Snippet {
            patient_id,
            note_id,
            start,
            token_ids: tokens[start..start + len].to_vec(),
        });
        start += len;
    }
    if start < tokens.len() {
        out.push(Snippet {
            patient_id,
            note_id,
            start,
            token_ids: tokens[start..].to_vec(),
        });
    }
    out
}

/// Draws `k` snippets uniformly from the part of `pool` not owned by
/// `target`. Returns pool indices.
pub fn sample_doc_negatives<R: Rng>(target: usize, pool: &[Snippet], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if !pool.iter().any(|s| s.patient_id != target) {
        return Err(Error::TooFewPatients { needed: 2, found: 1 });
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.gen_range(0..pool.len());
        if pool[i].patient_id != target {
            out.push(i);
        }
    }
    Ok(out)
}

/// Copy of `snippet` where each token is independently replaced, with
/// probability `replace_prob`, by a uniform draw from the non-reserved ids
/// `[RESERVED, vocab_len)`.
pub fn make_token_negative<R: Rng>(snippet: &Snippet, vocab_len: usize, replace_prob: f64, rng: &mut R) -> Result<Snippet> {
    if !(replace_prob > 0.0 && replace_prob <= 1.0) {
        return Err(Error::invalid(format!("replace_prob {replace_prob} outside (0, 1]")));
    }
    if vocab_len <= RESERVED {
        return Err(Error::invalid("vocabulary has no content tokens to sample"));
    }
    let token_ids = snippet
        .token_ids
        .iter()
        .map(|&t| {
            if rng.gen::<f64>() < replace_prob {
                rng.gen_range(RESERVED..vocab_len)
            } else {
                t
            }
        })
        .collect();
    Ok(Snippet {
        token_ids,
        ..snippet.clone()
    })
}

/// Up to `k` distinct concepts drawn without replacement, each draw weighted
/// by remaining multiplicity. `counts` pairs are `(concept index, count)`.
pub fn sample_positive_concepts<R: Rng>(counts: &[(usize, usize)], k: usize, rng: &mut R) -> Vec<usize> {
    if counts.len() <= k {
        return counts.iter().map(|&(c, _)| c).collect();
    }
    let mut pool: Vec<(usize, usize)> = counts.to_vec();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let total: usize = pool.iter().map(|&(_, n)| n).sum();
        let mut draw = rng.gen_range(0..total);
        let pos = pool
            .iter()
            .position(|&(_, n)| {
                if draw < n {
                    true
                } else {
                    draw -= n;
                    false
                }
            })
            .expect("draw below total");
        out.push(pool.swap_remove(pos).0);
    }
    out
}

/// `k` concepts drawn uniformly from `[RESERVED, num_concepts)` minus the
/// patient's own concepts (`owned` must be sorted). Fewer when the patient
/// owns every concept.
pub fn sample_concept_negatives<R: Rng>(owned: &[usize], num_concepts: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let available = num_concepts.saturating_sub(RESERVED).saturating_sub(owned.len());
    if available == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let c = rng.gen_range(RESERVED..num_concepts);
        if owned.binary_search(&c).is_err() {
            out.push(c);
        }
    }
    out
}

pub fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    items.shuffle(rng);
}
