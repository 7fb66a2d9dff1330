//! Document encoders: token ids → fixed-length document vector.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gru::{BiGru, BiGruTape, GruOutput};
use super::table::{EmbeddingTable, RowGrads};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Meanpool,
    #[default]
    Bigru,
}

/// Encoder parameters. Mean-pooling has none.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder<F> {
    MeanPool,
    BiGru(BiGru<F>),
}

/// Where a document vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub note_id: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
enum Tape<F> {
    MeanPool { ids: Vec<usize> },
    BiGru { ids: Vec<usize>, inner: Box<BiGruTape<F>>, mask: Option<Array1<F>> },
}

#[derive(Debug, Clone)]
pub struct EncodedDoc<F> {
    pub vector: Array1<F>,
    pub provenance: Provenance,
    tape: Option<Tape<F>>,
}

impl<F> EncodedDoc<F> {
    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }
}

/// Gradient sink for one or more backward passes through an encoder.
#[derive(Debug, Clone)]
pub struct EncoderGrads<F> {
    pub gru: Option<BiGru<F>>,
    pub words: RowGrads<F>,
}

impl<F: Scalar> EncoderGrads<F> {
    pub fn for_encoder(enc: &Encoder<F>) -> Self {
        EncoderGrads {
            gru: match enc {
                Encoder::MeanPool => None,
                Encoder::BiGru(g) => Some(g.zeros_like()),
            },
            words: RowGrads::new(),
        }
    }
}

/// Arithmetic mean of the token vectors.
pub fn encode_meanpool<F: Scalar>(ids: &[usize], words: &EmbeddingTable<F>, record: bool) -> Result<EncodedDoc<F>> {
    if ids.is_empty() {
        return Err(Error::EmptyInput("cannot encode an empty token sequence".into()));
    }
    let mut acc = Array1::<F>::zeros(words.dim());
    for &id in ids {
        acc += &words.row(id);
    }
    acc /= F::lit(ids.len() as f64);
    Ok(EncodedDoc {
        vector: acc,
        provenance: Provenance { len: ids.len(), ..Default::default() },
        tape: record.then(|| Tape::MeanPool { ids: ids.to_vec() }),
    })
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else `1/(1-p)`.
pub fn dropout_mask<F: Scalar, R: Rng>(len: usize, p: f64, rng: &mut R) -> Array1<F> {
    let keep = F::lit(1.0 / (1.0 - p));
    Array1::from_shape_simple_fn(len, || if rng.gen::<f64>() < p { F::zero() } else { keep })
}

impl<F: Scalar> Encoder<F> {
    pub fn new<R: Rng>(kind: EncoderKind, dim: usize, mode: GruOutput, rng: &mut R) -> Self {
        match kind {
            EncoderKind::Meanpool => Encoder::MeanPool,
            EncoderKind::Bigru => Encoder::BiGru(BiGru::init(dim, dim, mode, rng)),
        }
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::MeanPool => EncoderKind::Meanpool,
            Encoder::BiGru(_) => EncoderKind::Bigru,
        }
    }

    /// Encodes `ids`. In training mode a tape is recorded and, for the BiGRU,
    /// inverted dropout with rate `dropout_p` is applied to the output vector.
    /// In eval mode the RNG is not touched.
    pub fn encode<R: Rng>(
        &self,
        ids: &[usize],
        words: &EmbeddingTable<F>,
        dropout_p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<EncodedDoc<F>> {
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::invalid(format!("dropout probability {dropout_p} outside [0, 1)")));
        }
        match self {
            Encoder::MeanPool => encode_meanpool(ids, words, training),
            Encoder::BiGru(gru) => {
                if ids.is_empty() {
                    return Err(Error::EmptyInput("cannot encode an empty token sequence".into()));
                }
                let (mut out, tape) = gru.forward(words.gather(ids));
                let mask = (training && dropout_p > 0.0).then(|| dropout_mask::<F, R>(out.len(), dropout_p, rng));
                if let Some(m) = &mask {
                    out *= m;
                }
                Ok(EncodedDoc {
                    vector: out,
                    provenance: Provenance { len: ids.len(), ..Default::default() },
                    tape: training.then(|| Tape::BiGru { ids: ids.to_vec(), inner: Box::new(tape), mask }),
                })
            }
        }
    }

    /// Accumulates `d vector / d params` times `upstream` into `grads`.
    pub fn backward(&self, doc: &EncodedDoc<F>, upstream: ArrayView1<F>, grads: &mut EncoderGrads<F>) -> Result<()> {
        let tape = doc.tape.as_ref().ok_or(Error::MissingTape)?;
        match (self, tape) {
            (_, Tape::MeanPool { ids }) => {
                let g = upstream.to_owned() / F::lit(ids.len() as f64);
                let rows = Array2::from_shape_fn((ids.len(), g.len()), |(_, j)| g[j]);
                grads.words.push_block(ids.clone(), rows);
                Ok(())
            }
            (Encoder::BiGru(gru), Tape::BiGru { ids, inner, mask }) => {
                let d_out = match mask {
                    Some(m) => &upstream * m,
                    None => upstream.to_owned(),
                };
                let g = grads
                    .gru
                    .as_mut()
                    .ok_or_else(|| Error::invalid("gradient sink has no GRU buffers"))?;
                let dx = gru.backward(inner, d_out.view(), g);
                grads.words.push_block(ids.clone(), dx);
                Ok(())
            }
            (Encoder::MeanPool, Tape::BiGru { .. }) => Err(Error::invalid("BiGRU tape passed to a mean-pool encoder")),
        }
    }
}

/// Column means of the token vectors for `ids`; helper for baselines.
pub fn mean_of_rows<F: Scalar>(table: &EmbeddingTable<F>, ids: &[usize]) -> Option<Array1<F>> {
    if ids.is_empty() {
        return None;
    }
    table.gather(ids).mean_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> EmbeddingTable<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        EmbeddingTable::uniform(10, 6, 1.0, &mut rng)
    }

    #[test]
    fn meanpool_single_token_is_identity() {
        let t = table();
        let d = encode_meanpool(&[4], &t, false).unwrap();
        assert_eq!(d.vector, t.row(4).to_owned());
    }

    #[test]
    fn meanpool_opposite_vectors_cancel() {
        let mut t = table();
        let neg = t.row(1).mapv(|x| -x);
        t.weights.row_mut(2).assign(&neg);
        let d = encode_meanpool(&[1, 2], &t, false).unwrap();
        assert!(d.vector.iter().all(|x| x.abs() < 1e-16));
    }

    #[test]
    fn meanpool_matches_elementwise_sum() {
        let t = table();
        let ids = [3, 0, 7, 3, 9];
        let d = encode_meanpool(&ids, &t, false).unwrap();
        for j in 0..6 {
            let mut s = 0.0;
            for &i in &ids {
                s += t.weights[[i, j]];
            }
            assert!((d.vector[j] - s / 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        assert!(encode_meanpool::<f64>(&[], &table(), false).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::new(EncoderKind::Bigru, 6, GruOutput::Concat, &mut rng);
        assert!(enc.encode(&[], &table(), 0.2, true, &mut rng).is_err());
    }

    #[test]
    fn meanpool_gradient_is_upstream_over_n() {
        let t = table();
        let enc = Encoder::<f64>::MeanPool;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = enc.encode(&[1, 2, 2, 5], &t, 0.0, true, &mut rng).unwrap();
        let up = ndarray::array![1.0, -2.0, 0.5, 0.0, 4.0, 8.0];
        let mut g = EncoderGrads::for_encoder(&enc);
        enc.backward(&d, up.view(), &mut g).unwrap();
        let dense = g.words.to_dense(10, 6);
        assert_eq!(dense.row(1).to_owned(), &up / 4.0);
        assert_eq!(dense.row(2).to_owned(), &up / 2.0);
    }

    #[test]
    fn accumulating_twice_doubles_exactly() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let enc = Encoder::new(EncoderKind::Bigru, 6, GruOutput::Concat, &mut rng);
        let d = enc.encode(&[1, 2, 3], &t, 0.0, true, &mut rng).unwrap();
        let up = Array1::from_elem(6, 0.3);
        let mut once = EncoderGrads::for_encoder(&enc);
        enc.backward(&d, up.view(), &mut once).unwrap();
        let mut twice = EncoderGrads::for_encoder(&enc);
        enc.backward(&d, up.view(), &mut twice).unwrap();
        enc.backward(&d, up.view(), &mut twice).unwrap();
        let (a, b) = (once.gru.unwrap(), twice.gru.unwrap());
        for (x, y) in a.slices().iter().zip(b.slices()) {
            for (p, q) in x.iter().zip(y) {
                assert_eq!(*q, *p + *p);
            }
        }
    }

    #[test]
    fn backward_without_tape_is_an_error() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::new(EncoderKind::Bigru, 6, GruOutput::Concat, &mut rng);
        let d = enc.encode(&[1, 2], &t, 0.2, false, &mut rng).unwrap();
        let mut g = EncoderGrads::for_encoder(&enc);
        assert!(matches!(enc.backward(&d, Array1::zeros(6).view(), &mut g), Err(Error::MissingTape)));
    }

    #[test]
    fn eval_mode_ignores_rng() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::new(EncoderKind::Bigru, 6, GruOutput::Concat, &mut rng);
        let a = enc.encode(&[1, 2, 3], &t, 0.2, false, &mut ChaCha8Rng::seed_from_u64(100)).unwrap();
        let b = enc.encode(&[1, 2, 3], &t, 0.2, false, &mut ChaCha8Rng::seed_from_u64(200)).unwrap();
        assert_eq!(a.vector, b.vector);
        assert_eq!(a.vector.len(), 6);
    }

    #[test]
    fn output_is_fixed_length_for_any_input_length() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = Encoder::new(EncoderKind::Bigru, 6, GruOutput::Concat, &mut rng);
        for len in [1, 2, 17, 60] {
            let ids: Vec<usize> = (0..len).map(|i| i % 10).collect();
            assert_eq!(enc.encode(&ids, &t, 0.2, true, &mut rng).unwrap().vector.len(), 6);
        }
    }

    /// Mean over 10k masks stays within 3σ of the eval-mode output.
    #[test]
    fn dropout_preserves_expectation() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let enc = Encoder::new(EncoderKind::Bigru, 6, GruOutput::Concat, &mut rng);
        let ids = [1, 5, 2];
        let eval = enc.encode(&ids, &t, 0.2, false, &mut rng).unwrap().vector;
        let trials = 10_000;
        let mut sum = Array1::<f64>::zeros(6);
        for _ in 0..trials {
            sum += &enc.encode(&ids, &t, 0.2, true, &mut rng).unwrap().vector;
        }
        let mean = sum / trials as f64;
        for j in 0..6 {
            // per-sample variance of x·m with m ∈ {0, 1/(1-p)}: x² p/(1-p)
            let sd = (eval[j] * eval[j] * 0.2 / 0.8 / trials as f64).sqrt();
            assert!((mean[j] - eval[j]).abs() <= 3.0 * sd + 1e-15, "dim {j}");
        }
    }
}
