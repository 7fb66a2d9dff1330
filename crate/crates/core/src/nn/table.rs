use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-per-item embedding matrix with a dense gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<F> {
    pub weights: Array2<F>,
    pub grads: Array2<F>,
}

impl<F: Scalar> EmbeddingTable<F> {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            weights: Array2::zeros((rows, dim)),
            grads: Array2::zeros((rows, dim)),
        }
    }

    pub fn from_weights(weights: Array2<F>) -> Self {
        let grads = Array2::zeros(weights.raw_dim());
        EmbeddingTable { weights, grads }
    }

    /// Entries drawn independently from `uniform(-scale, scale)`.
    pub fn uniform<R: Rng>(rows: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        let w = Array2::from_shape_simple_fn((rows, dim), || F::lit(rng.gen_range(-scale..=scale)));
        Self::from_weights(w)
    }

    pub fn rows(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, F> {
        self.weights.row(i)
    }

    /// Stacks the rows for `ids` into a `len × dim` matrix.
    pub fn gather(&self, ids: &[usize]) -> Array2<F> {
        self.weights.select(Axis(0), ids)
    }

    pub fn zero_grad(&mut self) {
        self.grads.fill(F::zero());
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|x| x.is_finite())
    }
}

/// Sparse row gradients collected during one backward pass, applied to a
/// table in insertion order.
#[derive(Debug, Clone, Default)]
pub struct RowGrads<F> {
    blocks: Vec<(Vec<usize>, Array2<F>)>,
}

impl<F: Scalar> RowGrads<F> {
    pub fn new() -> Self {
        RowGrads { blocks: Vec::new() }
    }

    pub fn push_block(&mut self, ids: Vec<usize>, rows: Array2<F>) {
        debug_assert_eq!(ids.len(), rows.nrows());
        self.blocks.push((ids, rows));
    }

    pub fn push_row(&mut self, id: usize, row: ArrayView1<F>) {
        let r = row.to_owned().insert_axis(Axis(0));
        self.blocks.push((vec![id], r));
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn touched(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().flat_map(|(ids, _)| ids.iter().copied())
    }

    pub fn scale(&mut self, s: F) {
        for (_, rows) in &mut self.blocks {
            rows.mapv_inplace(|x| x * s);
        }
    }

    pub fn scatter_into(&self, grads: &mut Array2<F>) {
        for (ids, rows) in &self.blocks {
            for (&id, r) in ids.iter().zip(rows.rows()) {
                let mut g = grads.row_mut(id);
                g += &r;
            }
        }
    }

    pub fn append(&mut self, mut other: RowGrads<F>) {
        self.blocks.append(&mut other.blocks);
    }

    /// Dense equivalent, for tests.
    pub fn to_dense(&self, rows: usize, dim: usize) -> Array2<F> {
        let mut g = Array2::zeros((rows, dim));
        self.scatter_into(&mut g);
        g
    }
}

/// Loads word2vec text-format vectors (`count dim` header, then `token v1 … vd`
/// per line) into rows aligned with `vocab`. Vocabulary entries without a
/// vector keep the values already in `table`. Returns how many rows were set.
pub fn load_word2vec_text<F: Scalar, R: BufRead>(
    source: R,
    vocab: &Vocabulary,
    table: &mut EmbeddingTable<F>,
) -> Result<usize> {
    let mut lines = source.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::EmptyInput("word vector file is empty".into()))?;
    let header = header.map_err(|e| Error::MalformedRow { row: 1, message: e.to_string() })?;
    let mut parts = header.split_whitespace();
    let parse_usize = |s: Option<&str>| s.and_then(|x| x.parse::<usize>().ok());
    let (count, dim) = match (parse_usize(parts.next()), parse_usize(parts.next())) {
        (Some(c), Some(d)) => (c, d),
        _ => {
            return Err(Error::MalformedRow {
                row: 1,
                message: "expected header \"count dim\"".into(),
            })
        }
    };
    if dim != table.dim() {
        return Err(Error::invalid(format!(
            "word vectors have dimension {dim}, table expects {}",
            table.dim()
        )));
    }
    let mut assigned = 0;
    let mut read = 0;
    for (i, line) in lines {
        let row = i + 1;
        let line = line.map_err(|e| Error::MalformedRow { row, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        read += 1;
        let mut fields = line.split(' ').filter(|s| !s.is_empty());
        let token = fields.next().unwrap_or_default();
        let values: Vec<f64> = fields
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedRow { row, message: e.to_string() })?;
        if values.len() != dim {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if let Some(id) = vocab.get(token) {
            for (w, v) in table.weights.row_mut(id).iter_mut().zip(values) {
                *w = F::lit(v);
            }
            assigned += 1;
        }
    }
    if read != count {
        return Err(Error::MalformedRow {
            row: 1,
            message: format!("header declares {count} vectors, file has {read}"),
        });
    }
    Ok(assigned)
}

/// Writes `labels[i]` followed by row `i` in word2vec text format. Floats use
/// the shortest round-trip representation.
pub fn write_word2vec_text<F: Scalar, W: Write>(
    mut out: W,
    labels: &[String],
    rows: ArrayView2<F>,
) -> std::io::Result<()> {
    writeln!(out, "{} {}", rows.nrows(), rows.ncols())?;
    for (label, row) in labels.iter().zip(rows.rows()) {
        write!(out, "{label}")?;
        for x in row {
            write!(out, " {}", x.to_f64_lossy())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads vectors written by [`write_word2vec_text`], in file order.
pub fn read_word2vec_rows<R: BufRead>(source: R) -> Result<(Vec<String>, Array2<f64>)> {
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (i, line) in source.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::MalformedRow { row, message: e.to_string() })?;
        if i == 0 {
            let d = line.split_whitespace().nth(1).and_then(|s| s.parse::<usize>().ok());
            dim = Some(d.ok_or_else(|| Error::MalformedRow { row, message: "bad header".into() })?);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        labels.push(fields.next().unwrap_or_default().to_string());
        let before = data.len();
        for f in fields.filter(|s| !s.is_empty()) {
            data.push(f.parse::<f64>().map_err(|e| Error::MalformedRow { row, message: e.to_string() })?);
        }
        if Some(data.len() - before) != dim {
            return Err(Error::MalformedRow { row, message: "wrong number of values".into() });
        }
    }
    let dim = dim.ok_or_else(|| Error::EmptyInput("embedding file is empty".into()))?;
    let arr = Array2::from_shape_vec((labels.len(), dim), data).expect("shape checked per row");
    Ok((labels, arr))
}

pub fn mean_rows<F: Scalar>(rows: ArrayView2<F>) -> Option<Array1<F>> {
    rows.mean_axis(Axis(0))
}
