//! Binary cross-entropy over dot-product scores, with closed-form gradients.

use ndarray::{Array1, ArrayView1};

use crate::scalar::{sigmoid, softplus, Scalar};

/// Loss value and gradients w.r.t. each input vector.
#[derive(Debug, Clone)]
pub struct BceGrads<F> {
    pub loss: F,
    pub d_user: Array1<F>,
    pub d_pos: Array1<F>,
    pub d_negs: Vec<Array1<F>>,
}

/// `-ln σ(u·p) - Σ ln(1 - σ(u·n))`. With no negatives only the positive term remains.
pub fn contrastive_bce<F: Scalar>(user: ArrayView1<F>, pos: ArrayView1<F>, negs: &[ArrayView1<F>]) -> BceGrads<F> {
    let s_pos = user.dot(&pos);
    let mut loss = softplus(-s_pos);
    let g_pos = sigmoid(s_pos) - F::one();
    let mut d_user = &pos * g_pos;
    let d_pos = &user * g_pos;
    let mut d_negs = Vec::with_capacity(negs.len());
    for n in negs {
        let s = user.dot(n);
        loss += softplus(s);
        let g = sigmoid(s);
        d_user.scaled_add(g, n);
        d_negs.push(&user * g);
    }
    BceGrads { loss, d_user, d_pos, d_negs }
}

/// Patient-document loss: user vector against encoded positive and counterfactual snippets.
pub fn loss_patient_document<F: Scalar>(user: ArrayView1<F>, pos_doc: ArrayView1<F>, neg_docs: &[ArrayView1<F>]) -> BceGrads<F> {
    contrastive_bce(user, pos_doc, neg_docs)
}

/// Patient-concept loss: user vector against a co-occurring concept and noise concepts.
pub fn loss_patient_concept<F: Scalar>(user: ArrayView1<F>, pos_concept: ArrayView1<F>, neg_concepts: &[ArrayView1<F>]) -> BceGrads<F> {
    contrastive_bce(user, pos_concept, neg_concepts)
}

/// `λ·concept + (1-λ)·document + α·mlm`.
pub fn joint_loss(lambda: f64, alpha: f64, concept: f64, document: f64, mlm: f64) -> f64 {
    lambda * concept + (1.0 - lambda) * document + alpha * mlm
}
