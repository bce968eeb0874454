use super::params::TensorInfo;
use crate::scalar::Scalar;

/// Adam with decoupled weight decay on matrix-shaped tensors.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    m: Vec<T>,
    v: Vec<T>,
    decay: Vec<(std::ops::Range<usize>, bool)>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(tensors: &[TensorInfo], beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let total = tensors.iter().map(TensorInfo::len).sum();
        AdamW {
            m: vec![T::zero(); total],
            v: vec![T::zero(); total],
            decay: tensors.iter().map(|t| (t.range(), t.shape.len() == 2)).collect(),
            t: 0,
            beta1,
            beta2,
            eps,
            weight_decay,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64) {
        self.t += 1;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let one = T::one();
        let bc1 = T::lit(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::lit(1.0 - self.beta2.powi(self.t as i32));
        let eps = T::lit(self.eps);
        let lr_t = T::lit(lr);
        let shrink = T::lit(1.0 - lr * self.weight_decay);
        for (range, decay) in &self.decay {
            for i in range.clone() {
                let g = grads[i];
                let m = b1 * self.m[i] + (one - b1) * g;
                let v = b2 * self.v[i] + (one - b2) * g * g;
                self.m[i] = m;
                self.v[i] = v;
                let mhat = m / bc1;
                let vhat = v / bc2;
                if *decay {
                    params[i] *= shrink;
                }
                params[i] -= lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// Moment buffers serialized little-endian (for state hashing).
    pub fn state_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity((self.m.len() + self.v.len()) * 8 + 8);
        out.extend_from_slice(&self.t.to_le_bytes());
        for &x in self.m.iter().chain(&self.v) {
            x.write_le(&mut out);
        }
        out
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [T], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|&g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = T::lit(max_norm / (norm + 1e-6));
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
