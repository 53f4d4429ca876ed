//! Minibatch training with any of the samplers, full-graph evaluation after
//! every epoch and best-validation checkpointing.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::engine::{
    argmax_rows, backward, f1_micro, forward, full_forward, softmax_cross_entropy,
    unbiased_subgraph_loss, Activation, AdamState, DropoutMasks, GnnParameters,
    LossNormalization, Propagation, SubgraphLossContext,
};
use crate::error::{Error, Result};
use crate::graph::{Dataset, FeatureMatrix, Normalization, NormalizedAdjacency};
use crate::layerwise::{update_hw, HwSource, HwTable, LayerSampler, LevelWeighting};
use crate::subgraph::{induced_edge_probs, subgraph_node_probs, SubgraphPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    /// Layer-wise sampling weighted by coupling and running `‖hW‖` estimates.
    #[default]
    Layerwise,
    /// Node-sampled subgraphs drawn once before training.
    SubgraphNode,
    /// Edge-sampled subgraphs drawn once before training.
    SubgraphEdge,
    /// Layer-wise sampling, uniform over the coupled nodes.
    Uniform,
    /// Layer-wise sampling proportional to `deg + 1` over the coupled nodes.
    Degree,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Layerwise => "layerwise",
            Self::SubgraphNode => "subgraph-node",
            Self::SubgraphEdge => "subgraph-edge",
            Self::Uniform => "uniform",
            Self::Degree => "degree",
        }
    }

    pub fn is_subgraph(self) -> bool {
        matches!(self, Self::SubgraphNode | Self::SubgraphEdge)
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layerwise" => Ok(Self::Layerwise),
            "subgraph-node" => Ok(Self::SubgraphNode),
            "subgraph-edge" => Ok(Self::SubgraphEdge),
            "uniform" => Ok(Self::Uniform),
            "degree" => Ok(Self::Degree),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sampler '{s}' (expected layerwise|subgraph-node|subgraph-edge|uniform|degree)"
            ))),
        }
    }
}

/// Feature preprocessing applied before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureNorm {
    /// Each row scaled to unit L1 norm.
    #[default]
    Row,
    None,
}

impl FeatureNorm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Row => "row",
            Self::None => "none",
        }
    }
}

impl std::str::FromStr for FeatureNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(Self::Row),
            "none" => Ok(Self::None),
            _ => Err(Error::InvalidArgument(format!(
                "unknown feature normalization '{s}' (expected row|none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub sampler: SamplerKind,
    pub num_layers: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub dropout: f64,
    /// Output nodes per layer-wise batch; node draws per subgraph; twice the
    /// edge draws per edge subgraph.
    pub batch_size: usize,
    /// Draws per sampled level, lowest level first. Empty means `batch_size`
    /// at every level.
    pub layer_sizes: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty on the first layer's weights.
    pub weight_decay: f64,
    pub seed: u64,
    pub hw_init: f64,
    pub hw_source: HwSource,
    pub normalization: Normalization,
    pub feature_norm: FeatureNorm,
    pub loss_normalization: LossNormalization,
    /// Subgraphs in the pool; `None` means `⌈N / batch_size⌉`.
    pub pool_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::Layerwise,
            num_layers: 2,
            hidden: 16,
            activation: Activation::Sigmoid,
            dropout: 0.0,
            batch_size: 256,
            layer_sizes: Vec::new(),
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            seed: 0,
            hw_init: 1000.0,
            hw_source: HwSource::PostActivation,
            normalization: Normalization::Symmetric,
            feature_norm: FeatureNorm::Row,
            loss_normalization: LossNormalization::LabeledOnly,
            pool_size: None,
        }
    }
}

impl TrainConfig {
    /// Recommended settings per sampler and dataset name (`cora`,
    /// `citeseer`, `pubmed`); other names get the Cora row.
    pub fn recommended(sampler: SamplerKind, dataset: &str) -> Self {
        let base = Self {
            sampler,
            ..Self::default()
        };
        let pubmed = dataset.eq_ignore_ascii_case("pubmed");
        let citeseer = dataset.eq_ignore_ascii_case("citeseer");
        match sampler {
            SamplerKind::Layerwise | SamplerKind::Uniform | SamplerKind::Degree => base,
            SamplerKind::SubgraphNode | SamplerKind::SubgraphEdge => Self {
                activation: Activation::Relu,
                dropout: if pubmed {
                    0.2
                } else if citeseer && sampler == SamplerKind::SubgraphNode {
                    0.4
                } else {
                    0.5
                },
                batch_size: if pubmed { 5000 } else { 512 },
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        if !self.layer_sizes.is_empty() && self.layer_sizes.len() != self.num_layers {
            return Err(Error::InvalidArgument(format!(
                "layer_sizes lists {} levels for {} layers",
                self.layer_sizes.len(),
                self.num_layers
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive, weight decay non-negative".into()));
        }
        if !(self.hw_init > 0.0) {
            return Err(Error::InvalidArgument("hw_init must be positive".into()));
        }
        if self.pool_size == Some(0) {
            return Err(Error::InvalidArgument("pool_size must be at least 1".into()));
        }
        if self.sampler == SamplerKind::SubgraphEdge && self.batch_size < 2 {
            return Err(Error::InvalidArgument("edge subgraphs need batch_size ≥ 2".into()));
        }
        Ok(())
    }

    fn level_sizes(&self) -> Vec<usize> {
        if self.layer_sizes.is_empty() {
            vec![self.batch_size; self.num_layers]
        } else {
            self.layer_sizes.clone()
        }
    }
}

/// One row of the per-epoch log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub test_f1: f64,
    pub epoch_sec: f64,
    pub sampling_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub const HEADER: &'static str = "epoch,train_loss,val_f1,test_f1,epoch_sec,sampling_sec";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.4},{:.4},{:.4},{:.4}",
                r.epoch, r.train_loss, r.val_f1, r.test_f1, r.epoch_sec, r.sampling_sec
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: MetricsLog,
    /// Parameters at the epoch with the best validation score.
    pub best_params: GnnParameters,
    pub final_params: GnnParameters,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    /// Test score of `best_params`.
    pub test_f1: f64,
    pub final_test_f1: f64,
}

enum Sampling {
    Layer {
        sampler: LayerSampler,
        hw: Option<HwTable>,
        sizes: Vec<usize>,
    },
    Subgraph {
        pool: SubgraphPool,
        ctx: SubgraphLossContext,
    },
}

fn descend(
    adam: &mut AdamState,
    params: &mut GnnParameters,
    mut grads: Vec<DenseMatrix>,
    weight_decay: f64,
) -> Result<()> {
    if weight_decay > 0.0 {
        grads[0].add_scaled(weight_decay, &params.weights()[0]);
    }
    adam.step(params, &grads)
}

/// The propagation matrix and preprocessed features a model trained with
/// `config` expects.
pub fn prepare_inputs(data: &Dataset, config: &TrainConfig) -> (NormalizedAdjacency, DenseMatrix) {
    let adj = NormalizedAdjacency::new(&data.graph, config.normalization);
    let x = match config.feature_norm {
        FeatureNorm::Row => data.features.row_normalized(),
        FeatureNorm::None => data.features.clone(),
    };
    (adj, FeatureMatrix::matrix(&x).clone())
}

/// A training run over one dataset.
pub struct Trainer<'a> {
    data: &'a Dataset,
    config: TrainConfig,
    adj: NormalizedAdjacency,
    x: DenseMatrix,
    params: GnnParameters,
    adam: AdamState,
    rng: ChaCha8Rng,
    sampling: Sampling,
    setup_sec: f64,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = data.graph.num_nodes();
        let (adj, x) = prepare_inputs(data, &config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut dims = vec![x.cols()];
        dims.extend(std::iter::repeat_n(config.hidden, config.num_layers - 1));
        dims.push(data.labels.num_classes());
        let params = GnnParameters::glorot(&dims, config.activation, config.dropout, &mut rng)?;
        let adam = AdamState::new(&params, config.learning_rate);
        let start = Instant::now();
        let sampling = match config.sampler {
            SamplerKind::Layerwise | SamplerKind::Uniform | SamplerKind::Degree => Sampling::Layer {
                sampler: LayerSampler::new(n),
                hw: (config.sampler == SamplerKind::Layerwise)
                    .then(|| HwTable::new(n, config.num_layers, config.hw_init))
                    .transpose()?,
                sizes: config.level_sizes(),
            },
            SamplerKind::SubgraphNode | SamplerKind::SubgraphEdge => {
                let q = subgraph_node_probs(&adj, &x)?;
                let count = config.pool_size.unwrap_or_else(|| n.div_ceil(config.batch_size));
                let pool_seed = config.seed ^ 0x5eed_5eed_5eed_5eed;
                let pool = if config.sampler == SamplerKind::SubgraphNode {
                    SubgraphPool::node_sampled(&adj, &q, config.batch_size, count, pool_seed)?
                } else {
                    let ed = induced_edge_probs(&q, &data.graph)?;
                    SubgraphPool::edge_sampled(&ed, &adj, config.batch_size / 2, count, pool_seed)?
                };
                let ctx = SubgraphLossContext::new(&data.split, pool.draw_distribution(), config.loss_normalization);
                Sampling::Subgraph { pool, ctx }
            }
        };
        Ok(Self {
            data,
            config,
            adj,
            x,
            params,
            adam,
            rng,
            sampling,
            setup_sec: start.elapsed().as_secs_f64(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &GnnParameters {
        &self.params
    }

    /// The HW table of the layer-wise sampler, if any.
    pub fn hw_table(&self) -> Option<&HwTable> {
        match &self.sampling {
            Sampling::Layer { hw, .. } => hw.as_ref(),
            Sampling::Subgraph { .. } => None,
        }
    }

    /// The subgraph pool, if any.
    pub fn pool(&self) -> Option<&SubgraphPool> {
        match &self.sampling {
            Sampling::Subgraph { pool, .. } => Some(pool),
            Sampling::Layer { .. } => None,
        }
    }

    /// Preprocessed features the network sees.
    pub fn features(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adj
    }

    /// Full-graph evaluation: (train loss, val F1, test F1). Empty splits score NaN.
    pub fn evaluate(&self, params: &GnnParameters) -> Result<(f64, f64, f64)> {
        let fwd = full_forward(&self.adj, &self.x, params)?;
        let split = &self.data.split;
        let targets: Vec<usize> = split.train().iter().map(|&v| self.data.labels.get(v)).collect();
        let (loss, _) = softmax_cross_entropy(fwd.logits(), &targets, split.train(), None)?;
        let pred = argmax_rows(fwd.logits());
        let score = |nodes: &[usize]| {
            if nodes.is_empty() {
                Ok(f64::NAN)
            } else {
                f1_micro(&pred, &self.data.labels, nodes)
            }
        };
        Ok((loss, score(split.val())?, score(split.test())?))
    }

    /// One pass over the training nodes or the subgraph pool. Returns the
    /// mean batch loss and the time spent sampling.
    pub fn train_epoch(&mut self, epoch: usize) -> Result<(f64, f64)> {
        let mut sampling_sec = 0.0;
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        let labels = &self.data.labels;
        match &mut self.sampling {
            Sampling::Layer { sampler, hw, sizes } => {
                let mut order = self.data.split.train().to_vec();
                order.shuffle(&mut self.rng);
                for batch in order.chunks(self.config.batch_size) {
                    let t = Instant::now();
                    let weighting = match (self.config.sampler, hw.as_ref()) {
                        (SamplerKind::Uniform, _) => LevelWeighting::Uniform,
                        (SamplerKind::Degree, _) => LevelWeighting::Degree,
                        (_, Some(table)) => LevelWeighting::Hw(table),
                        (_, None) => LevelWeighting::Coupling,
                    };
                    let plan = sampler.build(batch, &self.adj, weighting, sizes, &mut self.rng)?;
                    let prop = Propagation::layerwise(&self.adj, &plan)?;
                    sampling_sec += t.elapsed().as_secs_f64();
                    let masks = DropoutMasks::sample(&prop, &self.params, &mut self.rng);
                    let fwd = forward(&prop, &self.x, &self.params, masks)?;
                    let targets: Vec<usize> = batch.iter().map(|&v| labels.get(v)).collect();
                    let rows: Vec<usize> = (0..batch.len()).collect();
                    let (loss, dlogits) = softmax_cross_entropy(fwd.logits(), &targets, &rows, None)?;
                    if !loss.is_finite() {
                        return Err(Error::Diverged { epoch });
                    }
                    let grads = backward(&prop, &self.x, &self.params, &fwd, &dlogits)?;
                    if let Some(table) = hw.as_mut() {
                        update_hw(table, &plan, &fwd, &self.params, self.config.hw_source)?;
                    }
                    descend(&mut self.adam, &mut self.params, grads, self.config.weight_decay)?;
                    loss_sum += loss;
                    steps += 1;
                }
            }
            Sampling::Subgraph { pool, ctx } => {
                let mut order: Vec<usize> = (0..pool.len()).collect();
                order.shuffle(&mut self.rng);
                for k in order {
                    let sub = &pool.subgraphs()[k];
                    let t = Instant::now();
                    let prop = Propagation::subgraph(sub, self.config.num_layers)?;
                    sampling_sec += t.elapsed().as_secs_f64();
                    let masks = DropoutMasks::sample(&prop, &self.params, &mut self.rng);
                    let fwd = forward(&prop, &self.x, &self.params, masks)?;
                    let Some((loss, dlogits)) = unbiased_subgraph_loss(sub, fwd.logits(), labels, ctx)? else {
                        log::debug!("subgraph {k} holds no training node; skipped");
                        continue;
                    };
                    if !loss.is_finite() {
                        return Err(Error::Diverged { epoch });
                    }
                    let grads = backward(&prop, &self.x, &self.params, &fwd, &dlogits)?;
                    descend(&mut self.adam, &mut self.params, grads, self.config.weight_decay)?;
                    loss_sum += loss;
                    steps += 1;
                }
            }
        }
        let mean = if steps == 0 { f64::NAN } else { loss_sum / steps as f64 };
        Ok((mean, sampling_sec))
    }

    /// Trains for `config.epochs` epochs. Row 0 of the log is the untrained
    /// model; `on_epoch` sees every row as it is produced.
    pub fn run(mut self, mut on_epoch: impl FnMut(&MetricsRow)) -> Result<TrainOutcome> {
        let (loss0, val0, test0) = self.evaluate(&self.params)?;
        let mut log = MetricsLog::default();
        log.rows.push(MetricsRow {
            epoch: 0,
            train_loss: loss0,
            val_f1: val0,
            test_f1: test0,
            epoch_sec: self.setup_sec,
            sampling_sec: self.setup_sec,
        });
        on_epoch(&log.rows[0]);
        let mut best = (self.params.clone(), 0usize, val0, test0);
        for epoch in 1..=self.config.epochs {
            let t = Instant::now();
            let (train_loss, sampling_sec) = self.train_epoch(epoch)?;
            let epoch_sec = t.elapsed().as_secs_f64();
            let (_, val_f1, test_f1) = self.evaluate(&self.params)?;
            let row = MetricsRow {
                epoch,
                train_loss,
                val_f1,
                test_f1,
                epoch_sec,
                sampling_sec,
            };
            on_epoch(&row);
            log.rows.push(row);
            if val_f1 > best.2 || (best.2.is_nan() && !val_f1.is_nan()) || val0.is_nan() {
                best = (self.params.clone(), epoch, val_f1, test_f1);
            }
        }
        let final_test_f1 = log.last().map_or(test0, |r| r.test_f1);
        Ok(TrainOutcome {
            log,
            best_params: best.0,
            final_params: self.params,
            best_epoch: best.1,
            best_val_f1: best.2,
            test_f1: best.3,
            final_test_f1,
        })
    }
}
