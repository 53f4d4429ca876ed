use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::GnnParameters;
use crate::dense::{DenseMatrix, SparseRows};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::layerwise::LayerSamplePlan;
use crate::subgraph::Subgraph;

/// Lower clamp for any probability used as a divisor.
pub const PROB_FLOOR: f64 = 1e-12;

fn floored(q: f64) -> f64 {
    if q < PROB_FLOOR {
        log::warn!("sampling probability {q:e} clamped to {PROB_FLOOR:e}");
        PROB_FLOOR
    } else {
        q
    }
}

/// The per-layer weighted aggregation matrices of one computation graph.
/// Layer `l` maps the node rows of level `l-1` onto those of level `l`.
#[derive(Debug, Clone)]
pub struct Propagation {
    input_nodes: Option<Vec<usize>>,
    output_nodes: Vec<usize>,
    layers: Vec<Arc<SparseRows>>,
}

fn adjacency_rows(adj: &NormalizedAdjacency, scale: impl Fn(usize) -> f64) -> SparseRows {
    let n = adj.num_nodes();
    let mut s = SparseRows::with_capacity(n, n, adj.nnz());
    for i in 0..n {
        let (cols, w) = adj.row(i);
        for (&j, &a) in cols.iter().zip(w) {
            s.push(j, a * scale(j));
        }
        s.finish_row();
    }
    s
}

impl Propagation {
    /// Every layer aggregates over all of Â.
    pub fn full(adj: &NormalizedAdjacency, num_layers: usize) -> Self {
        let shared = Arc::new(adjacency_rows(adj, |_| 1.0));
        Self {
            input_nodes: None,
            output_nodes: (0..adj.num_nodes()).collect(),
            layers: vec![shared; num_layers],
        }
    }

    /// Layer-wise importance-sampled aggregation:
    /// `(1/n^(l-1)) Σ_{j∈V^(l-1)} Â_ij / q̂(v_j)` over the sampled multiset.
    pub fn layerwise(adj: &NormalizedAdjacency, plan: &LayerSamplePlan) -> Result<Self> {
        let levels = plan.levels();
        if levels.len() < 2 {
            return Err(Error::InvalidPlan("a plan needs at least two levels".into()));
        }
        let mut layers = Vec::with_capacity(levels.len() - 1);
        for l in 1..levels.len() {
            let below = &levels[l - 1];
            if below.draws == 0 {
                return Err(Error::InvalidPlan(format!("level {} has no draws", l - 1)));
            }
            let mut position = HashMap::with_capacity(below.nodes.len());
            for (k, (&v, &q)) in below.nodes.iter().zip(&below.probs).enumerate() {
                if q.is_nan() || q <= 0.0 {
                    return Err(Error::InvalidPlan(format!(
                        "node {v} sampled at level {} with probability {q}",
                        l - 1
                    )));
                }
                position.insert(v, k);
            }
            let n = below.draws as f64;
            let above = &levels[l];
            let mut s = SparseRows::with_capacity(below.nodes.len(), above.nodes.len(), 0);
            for &i in &above.nodes {
                let (cols, w) = adj.row(i);
                for (&j, &a) in cols.iter().zip(w) {
                    if let Some(&k) = position.get(&j) {
                        let c = below.counts[k] as f64;
                        s.push(k, c * a / (n * floored(below.probs[k])));
                    }
                }
                s.finish_row();
            }
            layers.push(Arc::new(s));
        }
        Ok(Self {
            input_nodes: Some(levels[0].nodes.clone()),
            output_nodes: levels[levels.len() - 1].nodes.clone(),
            layers,
        })
    }

    /// Subgraph aggregation `(1/n_s) Σ_{j∈V_s} Â_ij / q̂(v_j)` on the induced Â.
    pub fn subgraph(sub: &Subgraph, num_layers: usize) -> Result<Self> {
        if sub.is_empty() {
            return Err(Error::Empty("subgraph"));
        }
        let n_s = sub.sample_count() as f64;
        let probs = sub.probs();
        if let Some((k, q)) = probs.iter().enumerate().find(|(_, q)| !(**q > 0.0)) {
            return Err(Error::InvalidPlan(format!(
                "subgraph node {} has probability {q}",
                sub.nodes()[k]
            )));
        }
        let shared = Arc::new(adjacency_rows(sub.adjacency(), |j| 1.0 / (n_s * floored(probs[j]))));
        Ok(Self {
            input_nodes: Some(sub.nodes().to_vec()),
            output_nodes: sub.nodes().to_vec(),
            layers: vec![shared; num_layers],
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &SparseRows {
        &self.layers[l - 1]
    }

    /// Parent-graph ids of the input rows; `None` means all nodes in order.
    pub fn input_nodes(&self) -> Option<&[usize]> {
        self.input_nodes.as_deref()
    }

    /// Parent-graph ids of the logit rows.
    pub fn output_nodes(&self) -> &[usize] {
        &self.output_nodes
    }

    fn input_rows(&self, l: usize) -> usize {
        self.layers[l - 1].n_cols()
    }
}

/// Inverted-dropout scale factors (`0` or `1/(1-p)`) for each layer input.
#[derive(Debug, Clone, Default)]
pub struct DropoutMasks(Vec<Option<DenseMatrix>>);

impl DropoutMasks {
    pub fn none() -> Self {
        Self(Vec::new())
    }

    pub fn sample<R: Rng + ?Sized>(prop: &Propagation, params: &GnnParameters, rng: &mut R) -> Self {
        let p = params.dropout();
        if p == 0.0 {
            return Self::none();
        }
        let keep = 1.0 / (1.0 - p);
        let masks = (1..=params.num_layers())
            .map(|l| {
                let (rows, cols) = (prop.input_rows(l), params.weights()[l - 1].rows());
                let data = (0..rows * cols)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect();
                DenseMatrix::from_vec(rows, cols, data).ok()
            })
            .collect();
        Self(masks)
    }

    fn get(&self, l: usize) -> Option<&DenseMatrix> {
        self.0.get(l - 1).and_then(Option::as_ref)
    }
}

/// Cached intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    input: Option<DenseMatrix>,
    masks: DropoutMasks,
    dropped: Vec<Option<DenseMatrix>>,
    projected: Vec<DenseMatrix>,
    pre: Vec<DenseMatrix>,
    post: Vec<DenseMatrix>,
}

impl Forward {
    pub fn num_layers(&self) -> usize {
        self.pre.len()
    }

    /// Output of the last layer (no activation).
    pub fn logits(&self) -> &DenseMatrix {
        &self.pre[self.pre.len() - 1]
    }

    /// `Â H^(l-1) W^(l)` restricted to the level-`l` rows, before σ.
    pub fn pre_activation(&self, l: usize) -> &DenseMatrix {
        &self.pre[l - 1]
    }

    /// `H^(l)`: post-activation for hidden layers, logits for the last.
    pub fn layer_output(&self, l: usize) -> &DenseMatrix {
        if l == self.pre.len() {
            self.logits()
        } else {
            &self.post[l - 1]
        }
    }

    /// `h^(l-1) W^(l)` for the level `l-1` rows, as used by layer `l`.
    pub fn projected(&self, l: usize) -> &DenseMatrix {
        &self.projected[l - 1]
    }

    /// Per-layer outputs `H^(1..L)`.
    pub fn outputs(&self) -> Vec<&DenseMatrix> {
        (1..=self.num_layers()).map(|l| self.layer_output(l)).collect()
    }

    fn layer_input<'a>(&'a self, x: &'a DenseMatrix, l: usize) -> &'a DenseMatrix {
        if let Some(d) = &self.dropped[l - 1] {
            return d;
        }
        if l == 1 {
            self.input.as_ref().unwrap_or(x)
        } else {
            &self.post[l - 2]
        }
    }
}

/// Runs the layers of `prop`. `x` holds all node features; the input rows
/// named by `prop` are gathered from it.
pub fn forward(
    prop: &Propagation,
    x: &DenseMatrix,
    params: &GnnParameters,
    masks: DropoutMasks,
) -> Result<Forward> {
    let num_layers = params.num_layers();
    if prop.num_layers() != num_layers {
        return Err(Error::Shape(format!(
            "propagation has {} layers, parameters have {num_layers}",
            prop.num_layers()
        )));
    }
    if x.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "features have {} columns, first layer expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    let input = prop.input_nodes.as_ref().map(|rows| x.gather_rows(rows));
    if input.is_none() && x.rows() != prop.input_rows(1) {
        return Err(Error::Shape(format!(
            "{} feature rows for a {}-node propagation",
            x.rows(),
            prop.input_rows(1)
        )));
    }
    let mut fwd = Forward {
        input,
        masks,
        dropped: Vec::with_capacity(num_layers),
        projected: Vec::with_capacity(num_layers),
        pre: Vec::with_capacity(num_layers),
        post: Vec::with_capacity(num_layers),
    };
    for l in 1..=num_layers {
        let dropped = {
            let h_in = if l == 1 {
                fwd.input.as_ref().unwrap_or(x)
            } else {
                &fwd.post[l - 2]
            };
            fwd.masks.get(l).map(|mask| {
                let mut d = h_in.clone();
                for (v, m) in d.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *v *= m;
                }
                d
            })
        };
        fwd.dropped.push(dropped);
        let p = fwd.layer_input(x, l).matmul(&params.weights()[l - 1])?;
        let z = prop.layer(l).spmm(&p)?;
        z.ensure_finite(l)?;
        if l < num_layers {
            let act = params.activation();
            let mut h = z.clone();
            h.map_inplace(|v| act.apply(v));
            fwd.post.push(h);
        }
        fwd.projected.push(p);
        fwd.pre.push(z);
    }
    Ok(fwd)
}

/// Exact gradients of a loss with respect to every `W^(l)`, given
/// `dloss/dlogits` for the output rows of `prop`.
pub fn backward(
    prop: &Propagation,
    x: &DenseMatrix,
    params: &GnnParameters,
    fwd: &Forward,
    dlogits: &DenseMatrix,
) -> Result<Vec<DenseMatrix>> {
    let num_layers = params.num_layers();
    if fwd.num_layers() != num_layers || prop.num_layers() != num_layers {
        return Err(Error::Shape("forward cache does not match the parameters".into()));
    }
    if dlogits.shape() != fwd.logits().shape() {
        return Err(Error::Shape(format!(
            "logit gradient is {:?}, logits are {:?}",
            dlogits.shape(),
            fwd.logits().shape()
        )));
    }
    let mut grads = vec![DenseMatrix::zeros(0, 0); num_layers];
    let mut dz = dlogits.clone();
    for l in (1..=num_layers).rev() {
        let dp = prop.layer(l).spmm_t(&dz)?;
        grads[l - 1] = fwd.layer_input(x, l).t_matmul(&dp)?;
        if l > 1 {
            let mut dh = dp.matmul_t(&params.weights()[l - 1])?;
            if let Some(mask) = fwd.masks.get(l) {
                for (g, m) in dh.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *g *= m;
                }
            }
            let act = params.activation();
            for (g, &z) in dh.as_mut_slice().iter_mut().zip(fwd.pre[l - 2].as_slice()) {
                *g *= act.derivative(z);
            }
            dz = dh;
        }
    }
    Ok(grads)
}

/// `H^(l) = σ(Â H^(l-1) W^(l))` over the whole graph.
pub fn full_forward(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &GnnParameters,
) -> Result<Forward> {
    let prop = Propagation::full(adj, params.num_layers());
    forward(&prop, x, params, DropoutMasks::none())
}

pub fn sampled_forward_layerwise(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &GnnParameters,
    plan: &LayerSamplePlan,
) -> Result<(Propagation, Forward)> {
    let prop = Propagation::layerwise(adj, plan)?;
    let fwd = forward(&prop, x, params, DropoutMasks::none())?;
    Ok((prop, fwd))
}

pub fn sampled_forward_subgraph(
    sub: &Subgraph,
    x: &DenseMatrix,
    params: &GnnParameters,
) -> Result<(Propagation, Forward)> {
    let prop = Propagation::subgraph(sub, params.num_layers())?;
    let fwd = forward(&prop, x, params, DropoutMasks::none())?;
    Ok((prop, fwd))
}
