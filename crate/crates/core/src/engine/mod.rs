//! Dense GCN layers, sampled aggregation, explicit gradients, Adam and
//! evaluation.

mod forward;
mod loss;
mod optim;

pub use forward::{
    backward, forward, full_forward, sampled_forward_layerwise, sampled_forward_subgraph,
    DropoutMasks, Forward, Propagation, PROB_FLOOR,
};
pub use loss::{
    f1_micro, softmax_cross_entropy, unbiased_subgraph_loss, LossNormalization,
    SubgraphLossContext,
};
pub use optim::AdamState;

use rand::Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, LabelSet, NormalizedAdjacency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    /// Identity; used by tests and closed-form checks.
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative evaluated at the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "sigmoid" => Ok(Self::Sigmoid),
            "linear" => Ok(Self::Linear),
            _ => Err(Error::InvalidArgument(format!(
                "unknown activation '{s}' (expected relu|sigmoid|linear)"
            ))),
        }
    }
}

/// Layer weights `W^(1..L)`; hidden layers use `activation`, the last layer
/// emits raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParameters {
    weights: Vec<DenseMatrix>,
    activation: Activation,
    dropout: f64,
}

impl GnnParameters {
    pub fn new(weights: Vec<DenseMatrix>, activation: Activation, dropout: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Shape("a network needs at least one layer".into()));
        }
        for (l, pair) in weights.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} features but layer {} expects {}",
                    l + 1,
                    pair[0].cols(),
                    l + 2,
                    pair[1].rows()
                )));
            }
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {dropout} outside [0, 1)"
            )));
        }
        Ok(Self {
            weights,
            activation,
            dropout,
        })
    }

    /// Glorot-uniform initialization for the dimension chain `dims[0] → … → dims[L]`.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape("need input and output dimensions".into()));
        }
        let weights = dims
            .windows(2)
            .map(|d| {
                let limit = (6.0 / (d[0] + d[1]) as f64).sqrt();
                let data = (0..d[0] * d[1])
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                DenseMatrix::from_vec(d[0], d[1], data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, activation, dropout)
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].cols()
    }

    /// Activation applied after layer `l` (1-based): hidden layers only.
    pub fn activation_after(&self, l: usize) -> Activation {
        if l == self.num_layers() {
            Activation::Linear
        } else {
            self.activation
        }
    }
}

/// Index of the largest logit per row; ties resolve to the lowest class.
pub fn argmax_rows(logits: &DenseMatrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Full-neighbourhood inference; F1-micro over `nodes`.
pub fn evaluate_full(
    adj: &NormalizedAdjacency,
    features: &FeatureMatrix,
    params: &GnnParameters,
    labels: &LabelSet,
    nodes: &[usize],
) -> Result<f64> {
    let fwd = full_forward(adj, features.matrix(), params)?;
    f1_micro(&argmax_rows(fwd.logits()), labels, nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_chain_is_validated() {
        let w1 = DenseMatrix::zeros(3, 4);
        let w2 = DenseMatrix::zeros(5, 2);
        assert!(GnnParameters::new(vec![w1.clone(), w2], Activation::Relu, 0.0).is_err());
        assert!(GnnParameters::new(vec![w1.clone()], Activation::Relu, 1.0).is_err());
        assert!(GnnParameters::new(vec![w1], Activation::Relu, 0.5).is_ok());
    }

    #[test]
    fn glorot_is_seeded_and_bounded() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let p = GnnParameters::glorot(&[10, 4, 3], Activation::Relu, 0.0, &mut a).unwrap();
        let q = GnnParameters::glorot(&[10, 4, 3], Activation::Relu, 0.0, &mut b).unwrap();
        assert_eq!(p, q);
        let limit = (6.0f64 / 14.0).sqrt();
        assert!(p.weights()[0].as_slice().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn activation_derivatives_match_difference_quotients() {
        for act in [Activation::Sigmoid, Activation::Relu, Activation::Linear] {
            for z in [-1.3, 0.4, 2.0] {
                let h = 1e-6;
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                assert!((fd - act.derivative(z)).abs() < 1e-8, "{act:?} at {z}");
            }
        }
    }
}
