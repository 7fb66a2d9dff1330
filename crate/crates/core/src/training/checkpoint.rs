//! Binary checkpoints: `CAUECKPT`, a little-endian `u32` version, a `u64`
//! header length, a JSON header, then every tensor as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::ModelParams;
use super::rmsprop::RmsProp;
use super::trainer::TrainState;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::nn::{BiGru, EmbeddingTable, Encoder, EncoderKind};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"CAUECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    pub seed: u64,
    /// Epoch the next run resumes from; every stream is derived from `(seed, epoch, …)`.
    pub next_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: TrainConfig,
    pub config_fingerprint: String,
    pub scalar: String,
    pub rng: RngState,
    pub concept_vocab: Vocabulary,
    pub tensors: Vec<TensorInfo>,
    /// Lengths of the optimizer caches, stored after the tensors.
    pub optimizer_slots: Vec<usize>,
}

fn push_f64s<F: Scalar>(out: &mut Vec<u8>, xs: &[F]) {
    out.reserve(xs.len() * 8);
    for x in xs {
        out.extend_from_slice(&x.to_f64_lossy().to_le_bytes());
    }
}

pub fn encode_checkpoint<F: Scalar>(state: &TrainState<F>, config: &TrainConfig) -> Result<Vec<u8>> {
    let p = &state.params;
    let header = CheckpointHeader {
        config: config.clone(),
        config_fingerprint: config.fingerprint(),
        scalar: std::any::type_name::<F>().to_string(),
        rng: RngState { seed: config.seed, next_epoch: state.next_epoch },
        concept_vocab: p.concept_vocab.clone(),
        tensors: p
            .tensor_names()
            .into_iter()
            .map(|(name, shape)| TensorInfo { name, shape })
            .collect(),
        optimizer_slots: state.optimizer.caches().iter().map(Vec::len).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in p.tensors() {
        push_f64s(&mut out, t);
    }
    for c in state.optimizer.caches() {
        push_f64s(&mut out, c);
    }
    Ok(out)
}

pub fn save_checkpoint<F: Scalar>(path: &Path, state: &TrainState<F>, config: &TrainConfig) -> Result<()> {
    crate::io::write_atomic(path, &encode_checkpoint(state, config)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::invalid("checkpoint is truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s<F: Scalar>(&mut self, n: usize) -> Result<Vec<F>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::invalid("tensor too large"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| F::lit(f64::from_le_bytes(b.try_into().expect("8-byte chunk"))))
            .collect())
    }
}

/// Parses a checkpoint; the returned config is the one it was trained with.
pub fn decode_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<(TrainState<F>, CheckpointHeader)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::invalid("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::FormatVersion { what: "checkpoint", found: version, expected: CHECKPOINT_VERSION });
    }
    let hlen = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(hlen)?)?;
    let config = &header.config;
    if config.fingerprint() != header.config_fingerprint {
        return Err(Error::invalid("checkpoint config fingerprint mismatch"));
    }

    let mut table = |info: &TensorInfo| -> Result<EmbeddingTable<F>> {
        let [rows, dim] = info.shape[..] else {
            return Err(Error::invalid(format!("tensor {} is not a matrix", info.name)));
        };
        let data = r.f64s::<F>(rows * dim)?;
        Ok(EmbeddingTable::from_weights(
            ndarray::Array2::from_shape_vec((rows, dim), data).expect("shape matches length"),
        ))
    };
    let [w, u, c, ..] = &header.tensors[..] else {
        return Err(Error::invalid("checkpoint lacks embedding tables"));
    };
    let words = table(w)?;
    let users = table(u)?;
    let concepts = table(c)?;
    let encoder = match config.encoder {
        EncoderKind::Meanpool => Encoder::MeanPool,
        EncoderKind::Bigru => {
            let mut g = BiGru::zeros(config.dim, config.dim, config.gru_output);
            let expected: Vec<TensorInfo> = g
                .tensor_shapes()
                .into_iter()
                .map(|(name, shape)| TensorInfo { name, shape })
                .collect();
            if header.tensors[3..] != expected[..] {
                return Err(Error::invalid("checkpoint encoder tensors do not match its config"));
            }
            for s in g.slices_mut() {
                let data = r.f64s::<F>(s.len())?;
                s.copy_from_slice(&data);
            }
            Encoder::BiGru(g)
        }
    };
    let mut caches = Vec::with_capacity(header.optimizer_slots.len());
    for &n in &header.optimizer_slots {
        caches.push(r.f64s::<F>(n)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::invalid("trailing bytes after checkpoint tensors"));
    }
    let mut optimizer = RmsProp::new(config.lr, config.rmsprop_decay, config.rmsprop_eps);
    optimizer.set_caches(caches);
    let params = ModelParams {
        words,
        users,
        concepts,
        encoder,
        concept_vocab: header.concept_vocab.clone(),
    };
    let state = TrainState { params, optimizer, next_epoch: header.rng.next_epoch };
    Ok((state, header))
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<(TrainState<F>, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
