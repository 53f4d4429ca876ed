use super::GnnParameters;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &GnnParameters, lr: f64) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .weights()
            .iter()
            .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[DenseMatrix] {
        &self.m
    }

    pub fn second_moments(&self) -> &[DenseMatrix] {
        &self.v
    }

    /// One update of every weight matrix.
    pub fn step(&mut self, params: &mut GnnParameters, grads: &[DenseMatrix]) -> Result<()> {
        if grads.len() != self.m.len() || params.num_layers() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} optimizer slots",
                grads.len(),
                self.m.len()
            )));
        }
        for (l, g) in grads.iter().enumerate() {
            if g.shape() != self.m[l].shape() || params.weights()[l].shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "layer {} gradient is {:?}, weight is {:?}",
                    l + 1,
                    g.shape(),
                    params.weights()[l].shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (l, g) in grads.iter().enumerate() {
            let w = params.weights_mut()[l].as_mut_slice();
            let m = self.m[l].as_mut_slice();
            let v = self.v[l].as_mut_slice();
            for k in 0..w.len() {
                let gk = g.as_slice()[k];
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                w[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
