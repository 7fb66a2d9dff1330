use crate::scalar::Scalar;

/// RMSprop with one squared-gradient cache per parameter tensor:
/// `c ← ρc + (1−ρ)g²; θ ← θ − lr·g / (√c + eps)`.
#[derive(Debug, Clone)]
pub struct RmsProp<F> {
    pub lr: F,
    pub decay: F,
    pub eps: F,
    caches: Vec<Vec<F>>,
}

impl<F: Scalar> RmsProp<F> {
    pub fn new(lr: f64, decay: f64, eps: f64) -> Self {
        RmsProp {
            lr: F::lit(lr),
            decay: F::lit(decay),
            eps: F::lit(eps),
            caches: Vec::new(),
        }
    }

    /// Updates the tensor registered as `slot` and zeroes its gradient.
    pub fn step(&mut self, slot: usize, params: &mut [F], grads: &mut [F]) {
        assert_eq!(params.len(), grads.len());
        if self.caches.len() <= slot {
            self.caches.resize_with(slot + 1, Vec::new);
        }
        let cache = &mut self.caches[slot];
        if cache.len() != params.len() {
            *cache = vec![F::zero(); params.len()];
        }
        let (lr, rho, eps) = (self.lr, self.decay, self.eps);
        let one_minus = F::one() - rho;
        for ((p, g), c) in params.iter_mut().zip(grads.iter_mut()).zip(cache.iter_mut()) {
            *c = rho * *c + one_minus * *g * *g;
            *p -= lr * *g / (c.sqrt() + eps);
            *g = F::zero();
        }
    }

    pub fn cache(&self, slot: usize) -> Option<&[F]> {
        self.caches.get(slot).map(Vec::as_slice)
    }

    pub fn caches(&self) -> &[Vec<F>] {
        &self.caches
    }

    pub fn set_caches(&mut self, caches: Vec<Vec<F>>) {
        self.caches = caches;
    }
}
