//! One-vs-rest logistic regression trained full-batch with Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub lr: f64,
    /// Penalty `l2/2 · ‖w‖²` per output; its gradient is `l2 · w`. Biases are not penalized.
    pub l2: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            lr: 0.001,
            l2: 0.01,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `outputs × dim` weights and one bias per output.
#[derive(Debug, Clone, PartialEq)]
pub struct LogReg {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Mean binary cross-entropy over rows, summed over outputs, plus the L2 term;
/// returns the loss and the gradients for weights and biases.
pub fn loss_and_grad(model: &LogReg, x: ArrayView2<f64>, y: ArrayView2<f64>, l2: f64) -> (f64, Array2<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let logits = x.dot(&model.weights.t()) + &model.bias;
    let mut loss = 0.0;
    let mut resid = Array2::zeros(logits.raw_dim());
    for ((&s, &t), r) in logits.iter().zip(y.iter()).zip(resid.iter_mut()) {
        // -t ln σ(s) - (1-t) ln(1-σ(s))
        loss += t * softplus(-s) + (1.0 - t) * softplus(s);
        *r = (sigmoid(s) - t) / n;
    }
    loss /= n;
    loss += 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    let gw = resid.t().dot(&x) + &model.weights * l2;
    let gb = resid.sum_axis(Axis(0));
    (loss, gw, gb)
}

impl LogReg {
    /// Zero-initialized fit of `y` (`n × outputs`, entries in {0,1}) on `x` (`n × dim`).
    pub fn fit(x: ArrayView2<f64>, y: ArrayView2<f64>, cfg: &LogRegConfig) -> Result<LogReg> {
        if x.nrows() < 2 {
            return Err(Error::invalid("logistic regression needs at least 2 training rows"));
        }
        if x.nrows() != y.nrows() {
            return Err(Error::invalid("feature and label row counts differ"));
        }
        let mut m = LogReg {
            weights: Array2::zeros((y.ncols(), x.ncols())),
            bias: Array1::zeros(y.ncols()),
        };
        let (mut mw, mut vw) = (Array2::<f64>::zeros(m.weights.raw_dim()), Array2::<f64>::zeros(m.weights.raw_dim()));
        let (mut mb, mut vb) = (Array1::<f64>::zeros(m.bias.raw_dim()), Array1::<f64>::zeros(m.bias.raw_dim()));
        for step in 1..=cfg.epochs {
            let (_, gw, gb) = loss_and_grad(&m, x, y, cfg.l2);
            let c1 = 1.0 - cfg.beta1.powi(step as i32);
            let c2 = 1.0 - cfg.beta2.powi(step as i32);
            adam(&mut m.weights.view_mut(), &gw.view(), &mut mw.view_mut(), &mut vw.view_mut(), cfg, c1, c2);
            adam(
                &mut m.bias.view_mut().insert_axis(Axis(0)),
                &gb.view().insert_axis(Axis(0)),
                &mut mb.view_mut().insert_axis(Axis(0)),
                &mut vb.view_mut().insert_axis(Axis(0)),
                cfg,
                c1,
                c2,
            );
        }
        Ok(m)
    }

    /// `n × outputs` probabilities.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (x.dot(&self.weights.t()) + &self.bias).mapv(sigmoid)
    }
}

fn adam(
    p: &mut ndarray::ArrayViewMut2<f64>,
    g: &ndarray::ArrayView2<f64>,
    m: &mut ndarray::ArrayViewMut2<f64>,
    v: &mut ndarray::ArrayViewMut2<f64>,
    cfg: &LogRegConfig,
    c1: f64,
    c2: f64,
) {
    ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_pair_is_ranked_correctly() {
        let x = array![[1.0, 0.0], [-1.0, 0.0]];
        let y = array![[1.0], [0.0]];
        let cfg = LogRegConfig { lr: 0.1, l2: 0.0, epochs: 500, ..Default::default() };
        let m = LogReg::fit(x.view(), y.view(), &cfg).unwrap();
        let p = m.predict_proba(x.view());
        assert!(p[[0, 0]] > 0.99 && p[[1, 0]] < 0.01);
        let (loss, _, _) = loss_and_grad(&m, x.view(), y.view(), 0.0);
        assert!(loss < 0.02);
    }

    #[test]
    fn zero_inputs_predict_sigmoid_of_bias() {
        let x = Array2::<f64>::zeros((4, 3));
        let y = array![[1.0, 0.0], [1.0, 0.0], [0.0, 0.0], [1.0, 1.0]];
        let m = LogReg::fit(x.view(), y.view(), &LogRegConfig::default()).unwrap();
        let p = m.predict_proba(x.view());
        for j in 0..2 {
            for i in 0..4 {
                assert_eq!(p[[i, j]], sigmoid(m.bias[j]));
            }
        }
    }

    #[test]
    fn single_row_is_rejected() {
        let x = array![[1.0]];
        assert!(LogReg::fit(x.view(), x.view(), &LogRegConfig::default()).is_err());
    }
}
