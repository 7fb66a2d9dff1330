//! Bidirectional GRU document encoder with a hand-written backward pass.
//!
//! Gate layout follows the common `[reset; update; candidate]` stacking:
//!
//! ```text
//! r = σ(W_r x + b_ir + U_r h + b_hr)
//! z = σ(W_z x + b_iz + U_z h + b_hz)
//! n = tanh(W_n x + b_in + r ⊙ (U_n h + b_hn))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::{axpy, sigmoid, Scalar};

/// How the two final hidden states become the document vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GruOutput {
    /// Per-direction hidden size is half the output size; the states are concatenated.
    #[default]
    Concat,
    /// Per-direction hidden size equals the output size; the 2×-wide
    /// concatenation goes through a learned linear map back to the output size.
    Projected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell<F> {
    /// `3H × D`
    pub w_ih: Array2<F>,
    /// `3H × H`
    pub w_hh: Array2<F>,
    pub b_ih: Array1<F>,
    pub b_hh: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `out × in`
    pub w: Array2<F>,
    pub b: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiGru<F> {
    pub fwd: GruCell<F>,
    pub bwd: GruCell<F>,
    pub proj: Option<Linear<F>>,
}

/// Values saved by one directional pass.
#[derive(Debug, Clone)]
pub struct CellTape<F> {
    r: Array2<F>,
    z: Array2<F>,
    n: Array2<F>,
    /// `U_n h + b_hn`, before the reset gate.
    hn: Array2<F>,
    /// Row `t` is the state before step `t`; row `T` is the final state.
    h: Array2<F>,
}

impl<F> CellTape<F> {
    pub fn final_state(&self) -> ArrayView1<'_, F> {
        self.h.row(self.h.nrows() - 1)
    }
}

fn uniform<F: Scalar, R: Rng>(shape: (usize, usize), bound: f64, rng: &mut R) -> Array2<F> {
    Array2::from_shape_simple_fn(shape, || F::lit(rng.gen_range(-bound..=bound)))
}

impl<F: Scalar> GruCell<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruCell {
            w_ih: Array2::zeros((3 * hidden, input)),
            w_hh: Array2::zeros((3 * hidden, hidden)),
            b_ih: Array1::zeros(3 * hidden),
            b_hh: Array1::zeros(3 * hidden),
        }
    }

    /// All parameters from `uniform(-1/√H, 1/√H)`.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        GruCell {
            w_ih: uniform((3 * hidden, input), k, rng),
            w_hh: uniform((3 * hidden, hidden), k, rng),
            b_ih: uniform((1, 3 * hidden), k, rng).remove_axis(Axis(0)),
            b_hh: uniform((1, 3 * hidden), k, rng).remove_axis(Axis(0)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.ncols()
    }

    /// Runs the recurrence over the rows of `x` from a zero initial state.
    pub fn forward(&self, x: ArrayView2<F>) -> CellTape<F> {
        let (t_len, h) = (x.nrows(), self.hidden());
        let mut gi = x.dot(&self.w_ih.t());
        gi += &self.b_ih;
        let mut tape = CellTape {
            r: Array2::zeros((t_len, h)),
            z: Array2::zeros((t_len, h)),
            n: Array2::zeros((t_len, h)),
            hn: Array2::zeros((t_len, h)),
            h: Array2::zeros((t_len + 1, h)),
        };
        let mut gh = vec![F::zero(); 3 * h];
        // Column-major recurrent weights: the matvec becomes a chain of axpys.
        let w_hh_t = self.w_hh.t().as_standard_layout().into_owned();
        let w_cols = w_hh_t.as_slice().expect("standard layout");
        let b_hh = self.b_hh.as_slice().expect("standard layout");
        let gi = gi.as_slice().expect("standard layout");
        let hs = tape.h.as_slice_mut().expect("standard layout");
        let (rs, zs) = (tape.r.as_slice_mut().unwrap(), tape.z.as_slice_mut().unwrap());
        let (ns, hns) = (tape.n.as_slice_mut().unwrap(), tape.hn.as_slice_mut().unwrap());
        for t in 0..t_len {
            let (done, next) = hs.split_at_mut((t + 1) * h);
            let prev = &done[t * h..];
            gh.copy_from_slice(b_hh);
            for (&p, col) in prev.iter().zip(w_cols.chunks_exact(3 * h)) {
                axpy(p, col, &mut gh);
            }
            let gi_t = &gi[t * 3 * h..(t + 1) * 3 * h];
            let row = t * h;
            for j in 0..h {
                let r = sigmoid(gi_t[j] + gh[j]);
                let z = sigmoid(gi_t[h + j] + gh[h + j]);
                let hn = gh[2 * h + j];
                let n = (gi_t[2 * h + j] + r * hn).tanh();
                rs[row + j] = r;
                zs[row + j] = z;
                ns[row + j] = n;
                hns[row + j] = hn;
                next[j] = (F::one() - z) * n + z * prev[j];
            }
        }
        tape
    }

    /// Backpropagates `dh_last` (gradient w.r.t. the final state) through the
    /// recorded pass, accumulating parameter gradients into `grad` and
    /// returning the gradient w.r.t. `x`.
    pub fn backward(
        &self,
        tape: &CellTape<F>,
        x: ArrayView2<F>,
        dh_last: ArrayView1<F>,
        grad: &mut GruCell<F>,
    ) -> Array2<F> {
        let (t_len, h) = (x.nrows(), self.hidden());
        let mut dgi = Array2::<F>::zeros((t_len, 3 * h));
        let mut dgh = Array2::<F>::zeros((t_len, 3 * h));
        let mut dh = dh_last.to_vec();
        let mut dh_prev = vec![F::zero(); h];
        let one = F::one();
        let w_hh = self.w_hh.as_slice().expect("standard layout");
        let (rs, zs) = (tape.r.as_slice().unwrap(), tape.z.as_slice().unwrap());
        let (ns, hns, hs) = (tape.n.as_slice().unwrap(), tape.hn.as_slice().unwrap(), tape.h.as_slice().unwrap());
        let dgi_s = dgi.as_slice_mut().expect("standard layout");
        let dgh_s = dgh.as_slice_mut().expect("standard layout");
        for t in (0..t_len).rev() {
            let row = t * h;
            let gi_t = &mut dgi_s[t * 3 * h..(t + 1) * 3 * h];
            let gh_t = &mut dgh_s[t * 3 * h..(t + 1) * 3 * h];
            for j in 0..h {
                let (r, z, n, hn) = (rs[row + j], zs[row + j], ns[row + j], hns[row + j]);
                let prev = hs[row + j];
                let dn = dh[j] * (one - z);
                let dz = dh[j] * (prev - n);
                let dan = dn * (one - n * n);
                let dar = dan * hn * r * (one - r);
                let daz = dz * z * (one - z);
                gi_t[j] = dar;
                gi_t[h + j] = daz;
                gi_t[2 * h + j] = dan;
                gh_t[j] = dar;
                gh_t[h + j] = daz;
                gh_t[2 * h + j] = dan * r;
                dh_prev[j] = dh[j] * z;
            }
            for (i, &g) in gh_t.iter().enumerate() {
                axpy(g, &w_hh[i * h..(i + 1) * h], &mut dh_prev);
            }
            std::mem::swap(&mut dh, &mut dh_prev);
        }
        grad.w_ih += &dgi.t().dot(&x);
        grad.b_ih += &dgi.sum_axis(Axis(0));
        grad.w_hh += &dgh.t().dot(&tape.h.slice(s![..t_len, ..]));
        grad.b_hh += &dgh.sum_axis(Axis(0));
        dgi.dot(&self.w_ih)
    }

    fn slices(&self) -> [&[F]; 4] {
        [
            self.w_ih.as_slice().expect("standard layout"),
            self.w_hh.as_slice().expect("standard layout"),
            self.b_ih.as_slice().expect("standard layout"),
            self.b_hh.as_slice().expect("standard layout"),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [F]; 4] {
        [
            self.w_ih.as_slice_mut().expect("standard layout"),
            self.w_hh.as_slice_mut().expect("standard layout"),
            self.b_ih.as_slice_mut().expect("standard layout"),
            self.b_hh.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Saved state of a full bidirectional encoding.
#[derive(Debug, Clone)]
pub struct BiGruTape<F> {
    x: Array2<F>,
    fwd: CellTape<F>,
    bwd: CellTape<F>,
    concat: Array1<F>,
}

impl<F: Scalar> BiGru<F> {
    pub fn zeros(input: usize, output: usize, mode: GruOutput) -> Self {
        let hidden = hidden_size(output, mode);
        BiGru {
            fwd: GruCell::zeros(input, hidden),
            bwd: GruCell::zeros(input, hidden),
            proj: match mode {
                GruOutput::Concat => None,
                GruOutput::Projected => Some(Linear {
                    w: Array2::zeros((output, 2 * hidden)),
                    b: Array1::zeros(output),
                }),
            },
        }
    }

    pub fn init<R: Rng>(input: usize, output: usize, mode: GruOutput, rng: &mut R) -> Self {
        let hidden = hidden_size(output, mode);
        let fwd = GruCell::init(input, hidden, rng);
        let bwd = GruCell::init(input, hidden, rng);
        let proj = match mode {
            GruOutput::Concat => None,
            GruOutput::Projected => {
                let k = 1.0 / ((2 * hidden) as f64).sqrt();
                Some(Linear {
                    w: uniform((output, 2 * hidden), k, rng),
                    b: uniform((1, output), k, rng).remove_axis(Axis(0)),
                })
            }
        };
        BiGru { fwd, bwd, proj }
    }

    pub fn zeros_like(&self) -> Self {
        BiGru {
            fwd: GruCell::zeros(self.fwd.input(), self.fwd.hidden()),
            bwd: GruCell::zeros(self.bwd.input(), self.bwd.hidden()),
            proj: self.proj.as_ref().map(|p| Linear {
                w: Array2::zeros(p.w.raw_dim()),
                b: Array1::zeros(p.b.raw_dim()),
            }),
        }
    }

    pub fn mode(&self) -> GruOutput {
        if self.proj.is_some() {
            GruOutput::Projected
        } else {
            GruOutput::Concat
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.proj {
            Some(p) => p.w.nrows(),
            None => 2 * self.fwd.hidden(),
        }
    }

    /// Pre-dropout document vector and its tape. `x` holds the token vectors, one per row.
    pub fn forward(&self, x: Array2<F>) -> (Array1<F>, BiGruTape<F>) {
        let fwd = self.fwd.forward(x.view());
        let bwd = self.bwd.forward(x.slice(s![..;-1, ..]));
        let h = self.fwd.hidden();
        let mut concat = Array1::zeros(2 * h);
        concat.slice_mut(s![..h]).assign(&fwd.final_state());
        concat.slice_mut(s![h..]).assign(&bwd.final_state());
        let out = match &self.proj {
            Some(p) => p.w.dot(&concat) + &p.b,
            None => concat.clone(),
        };
        (out, BiGruTape { x, fwd, bwd, concat })
    }

    /// Gradient w.r.t. the token vectors (one row per token, input order).
    pub fn backward(&self, tape: &BiGruTape<F>, d_out: ArrayView1<F>, grad: &mut BiGru<F>) -> Array2<F> {
        let d_concat = match (&self.proj, &mut grad.proj) {
            (Some(p), Some(gp)) => {
                gp.w += &outer(d_out, tape.concat.view());
                gp.b += &d_out;
                p.w.t().dot(&d_out)
            }
            _ => d_out.to_owned(),
        };
        let h = self.fwd.hidden();
        let mut dx = self
            .fwd
            .backward(&tape.fwd, tape.x.view(), d_concat.slice(s![..h]), &mut grad.fwd);
        let dx_rev = self.bwd.backward(
            &tape.bwd,
            tape.x.slice(s![..;-1, ..]),
            d_concat.slice(s![h..]),
            &mut grad.bwd,
        );
        dx += &dx_rev.slice(s![..;-1, ..]);
        dx
    }

    pub fn add_assign(&mut self, other: &BiGru<F>) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for a in self.slices_mut() {
            for x in a.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for a in self.slices_mut() {
            a.fill(F::zero());
        }
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub fn slices(&self) -> Vec<&[F]> {
        let mut v: Vec<&[F]> = Vec::with_capacity(10);
        v.extend(self.fwd.slices());
        v.extend(self.bwd.slices());
        if let Some(p) = &self.proj {
            v.push(p.w.as_slice().expect("standard layout"));
            v.push(p.b.as_slice().expect("standard layout"));
        }
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut v: Vec<&mut [F]> = Vec::with_capacity(10);
        v.extend(self.fwd.slices_mut());
        v.extend(self.bwd.slices_mut());
        if let Some(p) = &mut self.proj {
            v.push(p.w.as_slice_mut().expect("standard layout"));
            v.push(p.b.as_slice_mut().expect("standard layout"));
        }
        v
    }

    /// `(name, shape)` of each tensor, matching [`BiGru::slices`].
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut v = Vec::new();
        for (dir, c) in [("fwd", &self.fwd), ("bwd", &self.bwd)] {
            v.push((format!("gru.{dir}.w_ih"), c.w_ih.shape().to_vec()));
            v.push((format!("gru.{dir}.w_hh"), c.w_hh.shape().to_vec()));
            v.push((format!("gru.{dir}.b_ih"), c.b_ih.shape().to_vec()));
            v.push((format!("gru.{dir}.b_hh"), c.b_hh.shape().to_vec()));
        }
        if let Some(p) = &self.proj {
            v.push(("gru.proj.w".into(), p.w.shape().to_vec()));
            v.push(("gru.proj.b".into(), p.b.shape().to_vec()));
        }
        v
    }
}

fn hidden_size(output: usize, mode: GruOutput) -> usize {
    match mode {
        GruOutput::Concat => {
            assert!(output.is_multiple_of(2), "concatenated BiGRU output must be even, got {output}");
            output / 2
        }
        GruOutput::Projected => output,
    }
}

fn outer<F: Scalar>(a: ArrayView1<F>, b: ArrayView1<F>) -> Array2<F> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}
