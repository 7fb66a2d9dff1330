use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{EncoderKind, GruOutput};

/// Hyperparameters of the joint patient-document / patient-concept objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the patient-concept loss; the document loss gets `1 - lambda`.
    pub lambda: f64,
    /// Weight of a masked-language-model term. Only defined for transformer
    /// encoders, which this crate does not provide, so it must stay 0.
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Document-level counterfactuals per positive snippet.
    pub negatives_per_positive: usize,
    /// Token-corrupted counterfactuals per positive snippet.
    pub token_negatives: usize,
    pub token_replace_prob: f64,
    /// Positive concepts sampled (by frequency, without replacement) per snippet.
    pub max_positive_concepts: usize,
    /// Negative concepts per positive concept.
    pub concept_negatives: usize,
    pub snippet_min: usize,
    pub snippet_max: usize,
    pub lr: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub encoder: EncoderKind,
    pub gru_output: GruOutput,
    pub dim: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    /// Word vectors without a pretrained value start in `uniform(±word_init_scale)`.
    pub word_init_scale: f64,
    /// User vectors start in `uniform(±user_init_scale)`; defaults to `0.5 / dim`.
    pub user_init_scale: Option<f64>,
    pub seed: u64,
    pub enable_contrastive: bool,
    pub enable_concepts: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.3,
            alpha: 0.0,
            epochs: 15,
            batch_size: 16,
            negatives_per_positive: 3,
            token_negatives: 1,
            token_replace_prob: 0.5,
            max_positive_concepts: 5,
            concept_negatives: 3,
            snippet_min: 200,
            snippet_max: 512,
            lr: 1e-4,
            rmsprop_decay: 0.9,
            rmsprop_eps: 1e-8,
            encoder: EncoderKind::Bigru,
            gru_output: GruOutput::Concat,
            dim: 300,
            dropout: 0.2,
            vocab_size: crate::corpus::DEFAULT_MAX_SIZE,
            word_init_scale: 0.05,
            user_init_scale: None,
            seed: 42,
            enable_contrastive: true,
            enable_concepts: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if self.alpha != 0.0 {
            return fail("alpha must be 0: no masked-language-model head exists for GRU or mean-pool encoders".into());
        }
        if self.snippet_min == 0 || self.snippet_min > self.snippet_max {
            return fail(format!(
                "snippet bounds [{}, {}] are invalid",
                self.snippet_min, self.snippet_max
            ));
        }
        if self.negatives_per_positive < 1 {
            return fail("negatives_per_positive must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.token_negatives > 0 && !(self.token_replace_prob > 0.0 && self.token_replace_prob <= 1.0) {
            return fail(format!("token_replace_prob {} outside (0, 1]", self.token_replace_prob));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.dim == 0 || (self.encoder == EncoderKind::Bigru && self.gru_output == GruOutput::Concat && !self.dim.is_multiple_of(2)) {
            return fail(format!("dim {} must be positive (and even for a concatenated BiGRU)", self.dim));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.rmsprop_decay) || !(self.rmsprop_eps > 0.0) {
            return fail("optimizer settings must satisfy lr > 0, 0 <= decay < 1, eps > 0".into());
        }
        Ok(())
    }

    pub fn user_scale(&self) -> f64 {
        self.user_init_scale.unwrap_or(0.5 / self.dim as f64)
    }

    pub fn fingerprint(&self) -> String {
        crate::io::fingerprint(self)
    }
}
