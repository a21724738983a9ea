//! Adam optimizer with bias correction.

use crate::dtype::Dtype;
use crate::error::AdError;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    /// First-moment estimates, one per parameter tensor.
    pub m: Vec<Tensor<T>>,
    /// Second-moment estimates.
    pub v: Vec<Tensor<T>>,
    pub step_count: u64,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Dtype> AdamState<T> {
    pub fn new(params: &[&Tensor<T>], learning_rate: T) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            step_count: 0,
            learning_rate,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            epsilon: T::from_f64(1e-8),
        }
    }

    /// One update: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2, then the
    /// bias-corrected step alpha * m^ / (sqrt(v^) + eps).
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<(), AdError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(AdError::ShapeMismatch {
                op: "adam_step",
                detail: format!(
                    "{} params, {} grads, {} states",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(AdError::ShapeMismatch {
                    op: "adam_step",
                    detail: format!(
                        "param {i}: {:?} vs grad {:?} vs moment {:?}",
                        p.shape(),
                        g.shape(),
                        self.m[i].shape()
                    ),
                });
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let one = T::one();
        let mc = one / (one - self.beta1.powi(t));
        let vc = one / (one - self.beta2.powi(t));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let pd = p.data_mut();
            for ((mj, vj), (pj, &gj)) in
                m.iter_mut().zip(v.iter_mut()).zip(pd.iter_mut().zip(g.data()))
            {
                *mj = self.beta1 * *mj + (one - self.beta1) * gj;
                *vj = self.beta2 * *vj + (one - self.beta2) * gj * gj;
                let m_hat = *mj * mc;
                let v_hat = *vj * vc;
                *pj = *pj - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
