use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{LabelSet, SplitMask};
use crate::subgraph::Subgraph;

/// Weighted softmax cross-entropy over selected logit rows.
///
/// `targets[k]` is the class of row `rows[k]`. Without `weights` every row
/// gets `1/|rows|`, i.e. the mean loss. The returned gradient has the shape
/// of `logits` and is zero on unselected rows.
pub fn softmax_cross_entropy(
    logits: &DenseMatrix,
    targets: &[usize],
    rows: &[usize],
    weights: Option<&[f64]>,
) -> Result<(f64, DenseMatrix)> {
    if rows.is_empty() {
        return Err(Error::Empty("node set for the loss"));
    }
    if targets.len() != rows.len() || weights.is_some_and(|w| w.len() != rows.len()) {
        return Err(Error::Shape("rows, targets and weights differ in length".into()));
    }
    if let Some(w) = weights.and_then(|w| w.iter().find(|w| !(**w > 0.0))) {
        return Err(Error::InvalidArgument(format!("loss weight {w} is not positive")));
    }
    let uniform = 1.0 / rows.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (k, (&r, &t)) in rows.iter().zip(targets).enumerate() {
        if t >= logits.cols() {
            return Err(Error::Shape(format!("class {t} but only {} logits", logits.cols())));
        }
        let w = weights.map_or(uniform, |w| w[k]);
        let z = logits.row(r);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += w * (log_norm - z[t]);
        let g = grad.row_mut(r);
        for (c, (gc, &zc)) in g.iter_mut().zip(z).enumerate() {
            let p = (zc - log_norm).exp();
            *gc += w * (p - if c == t { 1.0 } else { 0.0 });
        }
    }
    Ok((loss, grad))
}

/// How the subgraph loss is normalized across draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossNormalization {
    /// Average over the draws that landed on training nodes, each reweighted
    /// by the inverse of its probability conditional on being a training node.
    #[default]
    LabeledOnly,
    /// Average over every draw; unlabeled draws contribute zero loss.
    AllDraws,
}

impl LossNormalization {
    pub fn name(self) -> &'static str {
        match self {
            Self::LabeledOnly => "labeled",
            Self::AllDraws => "all",
        }
    }
}

impl std::str::FromStr for LossNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labeled" => Ok(Self::LabeledOnly),
            "all" => Ok(Self::AllDraws),
            _ => Err(Error::InvalidArgument(format!(
                "unknown loss normalization '{s}' (expected labeled|all)"
            ))),
        }
    }
}

/// Split bookkeeping shared by every subgraph drawn from one distribution.
#[derive(Debug, Clone)]
pub struct SubgraphLossContext {
    is_train: Vec<bool>,
    num_train: usize,
    train_mass: f64,
    normalization: LossNormalization,
}

impl SubgraphLossContext {
    /// `draw_probs` is the full-graph per-draw distribution the subgraphs
    /// were sampled from.
    pub fn new(split: &SplitMask, draw_probs: &[f64], normalization: LossNormalization) -> Self {
        let is_train = split.train_mask(draw_probs.len());
        let train_mass = split.train().iter().map(|&v| draw_probs[v]).sum();
        Self {
            is_train,
            num_train: split.train().len(),
            train_mass,
            normalization,
        }
    }

    pub fn num_train(&self) -> usize {
        self.num_train
    }

    pub fn train_mass(&self) -> f64 {
        self.train_mass
    }

    pub fn normalization(&self) -> LossNormalization {
        self.normalization
    }
}

/// Importance-weighted training loss of one subgraph, unbiased for the
/// full-batch mean loss over the training set. Returns `None` when the
/// subgraph holds no training node (the batch is skipped).
///
/// `logits` rows follow `sub.nodes()`.
pub fn unbiased_subgraph_loss(
    sub: &Subgraph,
    logits: &DenseMatrix,
    labels: &LabelSet,
    ctx: &SubgraphLossContext,
) -> Result<Option<(f64, DenseMatrix)>> {
    if logits.rows() != sub.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for a {}-node subgraph",
            logits.rows(),
            sub.len()
        )));
    }
    let rows: Vec<usize> = (0..sub.len())
        .filter(|&k| ctx.is_train[sub.nodes()[k]])
        .collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let counts = sub.draw_counts();
    let probs = sub.draw_probs();
    let v_t = ctx.num_train as f64;
    let weights: Vec<f64> = match ctx.normalization {
        LossNormalization::LabeledOnly => {
            let k_train: f64 = rows.iter().map(|&k| counts[k] as f64).sum();
            rows.iter()
                .map(|&k| counts[k] as f64 * ctx.train_mass / (v_t * k_train * probs[k]))
                .collect()
        }
        LossNormalization::AllDraws => {
            let n = sub.num_draws() as f64;
            rows.iter()
                .map(|&k| counts[k] as f64 / (v_t * n * probs[k]))
                .collect()
        }
    };
    let targets: Vec<usize> = rows.iter().map(|&k| labels.get(sub.nodes()[k])).collect();
    softmax_cross_entropy(logits, &targets, &rows, Some(&weights)).map(Some)
}

/// Single-label micro-F1, which equals accuracy. `predictions` is indexed
/// by node id.
pub fn f1_micro(predictions: &[usize], labels: &LabelSet, nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Empty("evaluation node set"));
    }
    let hits = nodes
        .iter()
        .filter(|&&v| predictions[v] == labels.get(v))
        .count();
    Ok(hits as f64 / nodes.len() as f64)
}
