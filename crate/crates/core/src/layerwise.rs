//! Layer-wise importance sampling driven by running estimates of `‖hW‖`.
//!
//! Plans are built top-down: the batch fixes the last level, each lower
//! level is drawn with replacement from the nodes coupled to the level
//! above, with probability proportional to the column coupling times the
//! node's estimated projection norm. After the forward pass the observed
//! norms are folded back into the per-layer [`HwTable`].

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::dense::DenseMatrix;
use crate::engine::{Forward, GnnParameters};
use crate::error::{Error, Result};
use crate::graph::{column_sq_norms, CouplingAccumulator, NormalizedAdjacency};

/// Per-layer running means of `‖h^(l) W^(l+1)‖₂` with visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct HwTable {
    num_nodes: usize,
    num_layers: usize,
    mean: Vec<f64>,
    count: Vec<u64>,
    iteration: u64,
}

impl HwTable {
    /// Every entry starts at `init_value` with count 1; the iteration counter starts at 1.
    pub fn new(num_nodes: usize, num_layers: usize, init_value: f64) -> Result<Self> {
        if !(init_value > 0.0) || !init_value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "HW initial value must be positive and finite, got {init_value}"
            )));
        }
        let len = num_nodes * num_layers;
        Ok(Self {
            num_nodes,
            num_layers,
            mean: vec![init_value; len],
            count: vec![1; len],
            iteration: 1,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Number of stored scalars (means plus counts).
    pub fn storage_len(&self) -> usize {
        self.mean.len() + self.count.len()
    }

    #[inline]
    fn idx(&self, layer: usize, node: usize) -> usize {
        debug_assert!(layer < self.num_layers && node < self.num_nodes);
        layer * self.num_nodes + node
    }

    /// Estimate for `node` at table `layer` (0-based; table `l` feeds the
    /// draw of level `l`).
    pub fn expectation(&self, layer: usize, node: usize) -> f64 {
        self.mean[self.idx(layer, node)]
    }

    pub fn count(&self, layer: usize, node: usize) -> u64 {
        self.count[self.idx(layer, node)]
    }

    pub fn layer_means(&self, layer: usize) -> &[f64] {
        &self.mean[layer * self.num_nodes..(layer + 1) * self.num_nodes]
    }

    /// Folds one observed norm into the running mean.
    pub fn observe(&mut self, layer: usize, node: usize, norm: f64) {
        let k = self.idx(layer, node);
        let n = self.count[k] as f64;
        self.mean[k] = (n * self.mean[k] + norm) / (n + 1.0);
        self.count[k] += 1;
    }

    /// Marks the end of a training step.
    pub fn advance(&mut self) {
        self.iteration += 1;
    }
}

pub fn init_hw(num_nodes: usize, num_layers: usize, init_value: f64) -> Result<HwTable> {
    HwTable::new(num_nodes, num_layers, init_value)
}

/// Dense form: `q̂_j ∝ coupling_j · E_j` for table `layer`, zero where the
/// coupling is zero.
pub fn layerwise_probs(coupling: &[f64], hw: &HwTable, layer: usize) -> Result<Vec<f64>> {
    if coupling.len() != hw.num_nodes() {
        return Err(Error::Shape(format!(
            "{} couplings for a {}-node table",
            coupling.len(),
            hw.num_nodes()
        )));
    }
    let e = hw.layer_means(layer);
    let mut q: Vec<f64> = coupling.iter().zip(e).map(|(c, e)| c * e).collect();
    let total: f64 = q.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "every sampling weight is zero for table layer {layer}"
        )));
    }
    q.iter_mut().for_each(|v| *v /= total);
    Ok(q)
}

/// `n` i.i.d. draws (indices into `probs`) with replacement.
pub fn sample_level<R: Rng + ?Sized>(probs: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let dist = WeightedIndex::new(probs)
        .map_err(|e| Error::InvalidArgument(format!("invalid sampling distribution: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// How the lower-level distribution is weighted over the coupled support.
#[derive(Debug, Clone, Copy)]
pub enum LevelWeighting<'a> {
    /// Coupling times the running `‖hW‖` estimate.
    Hw(&'a HwTable),
    /// Coupling alone.
    Coupling,
    /// Uniform over the support.
    Uniform,
    /// Proportional to `deg + 1` over the support.
    Degree,
}

/// A distribution over the nodes coupled to a frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDistribution {
    pub support: Vec<usize>,
    pub probs: Vec<f64>,
}

/// The distinct nodes of one sampled level with their multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledLevel {
    pub nodes: Vec<usize>,
    pub counts: Vec<u32>,
    /// Probability each node was drawn with (1 for the batch level).
    pub probs: Vec<f64>,
    /// Total number of draws `n^(l)`; for the batch level, its size.
    pub draws: usize,
}

/// Work counters of one plan construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplingCost {
    /// Adjacency entries visited while computing couplings.
    pub csr_entries: usize,
    /// Candidate nodes weighted and normalized.
    pub support: usize,
    /// Random draws taken.
    pub draws: usize,
}

impl SamplingCost {
    pub fn total(&self) -> usize {
        self.csr_entries + self.support + self.draws
    }
}

/// Levels `0..=L` of one computation graph; level `L` is the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSamplePlan {
    levels: Vec<SampledLevel>,
    distributions: Vec<LevelDistribution>,
    cost: SamplingCost,
}

impl LayerSamplePlan {
    /// A plan from explicit levels `0..=L`. Each sampled level's
    /// distribution is taken to be its own nodes and probabilities.
    pub fn from_levels(levels: Vec<SampledLevel>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidPlan("a plan needs at least two levels".into()));
        }
        for (l, level) in levels.iter().enumerate() {
            let k = level.nodes.len();
            if level.counts.len() != k || level.probs.len() != k {
                return Err(Error::Shape(format!("level {l} arrays differ in length")));
            }
            let drawn: u64 = level.counts.iter().map(|&c| c as u64).sum();
            if k == 0 || drawn != level.draws as u64 {
                return Err(Error::InvalidPlan(format!(
                    "level {l} has {k} nodes and {drawn} counted draws, declared {}",
                    level.draws
                )));
            }
        }
        let distributions = levels[..levels.len() - 1]
            .iter()
            .map(|s| LevelDistribution {
                support: s.nodes.clone(),
                probs: s.probs.clone(),
            })
            .collect();
        Ok(Self {
            levels,
            distributions,
            cost: SamplingCost::default(),
        })
    }

    pub fn levels(&self) -> &[SampledLevel] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &SampledLevel {
        &self.levels[l]
    }

    /// Distribution level `l` was drawn from, `l < L`.
    pub fn distribution(&self, l: usize) -> &LevelDistribution {
        &self.distributions[l]
    }

    pub fn num_layers(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn cost(&self) -> SamplingCost {
        self.cost
    }

    pub fn batch(&self) -> &[usize] {
        &self.levels[self.levels.len() - 1].nodes
    }
}

/// Plan builder holding an `N`-length scratch buffer, so one plan costs
/// only the adjacency entries incident to its frontiers.
#[derive(Debug, Clone)]
pub struct LayerSampler {
    acc: CouplingAccumulator,
    seen: Vec<bool>,
}

impl LayerSampler {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            acc: CouplingAccumulator::new(num_nodes),
            seen: vec![false; num_nodes],
        }
    }

    /// `sizes[l]` is the draw count `n^(l)` of level `l`, for `l < L`.
    pub fn build<R: Rng + ?Sized>(
        &mut self,
        batch: &[usize],
        adj: &NormalizedAdjacency,
        weighting: LevelWeighting<'_>,
        sizes: &[usize],
        rng: &mut R,
    ) -> Result<LayerSamplePlan> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n = adj.num_nodes();
        if self.seen.len() != n {
            *self = Self::new(n);
        }
        for &v in batch {
            if v >= n {
                return Err(Error::InvalidArgument(format!("batch node {v} out of range")));
            }
            if std::mem::replace(&mut self.seen[v], true) {
                batch.iter().for_each(|&u| self.seen[u] = false);
                return Err(Error::InvalidArgument(format!("batch node {v} repeated")));
            }
        }
        batch.iter().for_each(|&u| self.seen[u] = false);
        let num_layers = sizes.len();
        if num_layers == 0 {
            return Err(Error::InvalidArgument("a plan needs at least one layer".into()));
        }
        if let LevelWeighting::Hw(hw) = weighting {
            if hw.num_layers() < num_layers || hw.num_nodes() != n {
                return Err(Error::Shape(format!(
                    "HW table is {}x{}, plan needs {num_layers}x{n}",
                    hw.num_layers(),
                    hw.num_nodes()
                )));
            }
        }
        let mut cost = SamplingCost::default();
        let mut levels = vec![SampledLevel {
            nodes: batch.to_vec(),
            counts: vec![1; batch.len()],
            probs: vec![1.0; batch.len()],
            draws: batch.len(),
        }];
        let mut distributions = Vec::with_capacity(num_layers);
        for l in (0..num_layers).rev() {
            let above = &levels[levels.len() - 1].nodes;
            let (coupled, visited) = self.acc.couplings(adj, above);
            cost.csr_entries += visited;
            cost.support += coupled.len();
            let weights: Vec<f64> = coupled
                .iter()
                .map(|&(j, c)| match weighting {
                    LevelWeighting::Hw(hw) => c * hw.expectation(l, j),
                    LevelWeighting::Coupling => c,
                    LevelWeighting::Uniform => 1.0,
                    LevelWeighting::Degree => adj.row(j).0.len() as f64,
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::DisconnectedFrontier {
                    level: l + 1,
                    frontier: above.len(),
                    first: above[0],
                });
            }
            let dist = LevelDistribution {
                support: coupled.iter().map(|&(j, _)| j).collect(),
                probs: weights.iter().map(|w| w / total).collect(),
            };
            let draws = sizes[l];
            let picks = sample_level(&dist.probs, draws, rng)?;
            cost.draws += draws;
            let mut counts = vec![0u32; dist.support.len()];
            for k in picks {
                counts[k] += 1;
            }
            let mut level = SampledLevel {
                nodes: Vec::new(),
                counts: Vec::new(),
                probs: Vec::new(),
                draws,
            };
            for (k, &c) in counts.iter().enumerate() {
                if c > 0 {
                    level.nodes.push(dist.support[k]);
                    level.counts.push(c);
                    level.probs.push(dist.probs[k]);
                }
            }
            levels.push(level);
            distributions.push(dist);
        }
        levels.reverse();
        distributions.reverse();
        Ok(LayerSamplePlan {
            levels,
            distributions,
            cost,
        })
    }
}

/// One-shot plan construction with the HW-weighted sampler.
pub fn build_plan<R: Rng + ?Sized>(
    batch: &[usize],
    adj: &NormalizedAdjacency,
    hw: &HwTable,
    sizes: &[usize],
    rng: &mut R,
) -> Result<LayerSamplePlan> {
    LayerSampler::new(adj.num_nodes()).build(batch, adj, LevelWeighting::Hw(hw), sizes, rng)
}

/// Which embedding the observed norm is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HwSource {
    /// `‖σ(z^(l-1)) W^(l)‖`, the layer output actually propagated.
    #[default]
    PostActivation,
    /// `‖z^(l-1) W^(l)‖`, before the nonlinearity.
    PreActivation,
}

impl HwSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::PostActivation => "post",
            Self::PreActivation => "pre",
        }
    }
}

impl std::str::FromStr for HwSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post" => Ok(Self::PostActivation),
            "pre" => Ok(Self::PreActivation),
            _ => Err(Error::InvalidArgument(format!(
                "unknown HW source '{s}' (expected post|pre)"
            ))),
        }
    }
}

/// Folds the norms observed in `fwd` (computed on `plan`) into `hw` and
/// advances its iteration counter. Each distinct sampled node counts once.
pub fn update_hw(
    hw: &mut HwTable,
    plan: &LayerSamplePlan,
    fwd: &Forward,
    params: &GnnParameters,
    source: HwSource,
) -> Result<()> {
    let num_layers = plan.num_layers();
    if fwd.num_layers() != num_layers || hw.num_layers() < num_layers {
        return Err(Error::Shape(format!(
            "plan has {num_layers} layers, forward has {}, table has {}",
            fwd.num_layers(),
            hw.num_layers()
        )));
    }
    for l in 1..=num_layers {
        let level = plan.level(l - 1);
        let projected;
        let hw_rows = match source {
            HwSource::PreActivation if l > 1 => {
                projected = fwd.pre_activation(l - 1).matmul(&params.weights()[l - 1])?;
                &projected
            }
            _ => fwd.projected(l),
        };
        if hw_rows.rows() != level.nodes.len() {
            return Err(Error::Shape(format!(
                "level {} has {} nodes but the forward pass produced {} rows",
                l - 1,
                level.nodes.len(),
                hw_rows.rows()
            )));
        }
        for (k, &v) in level.nodes.iter().enumerate() {
            hw.observe(l - 1, v, hw_rows.row_norm(k));
        }
    }
    hw.advance();
    Ok(())
}

fn normalized(mut q: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    let total: f64 = q.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidArgument(format!("{what}: every weight is zero")));
    }
    q.iter_mut().for_each(|v| *v /= total);
    Ok(q)
}

/// `‖h_j W‖₂` for every row of `h`.
pub fn projection_norms(h: &DenseMatrix, w: &DenseMatrix) -> Result<Vec<f64>> {
    let p = h.matmul(w)?;
    Ok((0..p.rows()).map(|r| p.row_norm(r)).collect())
}

/// Minimum-variance layer-wise distribution given the true embeddings:
/// `q*_j ∝ √(Σ_{i∈rows} Â²_ij) · ‖h_j W‖₂`. Dense over all nodes.
pub fn closed_form_layerwise_probs(
    adj: &NormalizedAdjacency,
    h_prev: &DenseMatrix,
    w: &DenseMatrix,
    rows: &[usize],
) -> Result<Vec<f64>> {
    if h_prev.rows() != adj.num_nodes() {
        return Err(Error::Shape(format!(
            "{} embedding rows for {} nodes",
            h_prev.rows(),
            adj.num_nodes()
        )));
    }
    let coupling = column_sq_norms(adj, rows);
    let norms = projection_norms(h_prev, w)?;
    normalized(
        coupling.iter().zip(&norms).map(|(c, h)| c * h).collect(),
        "layer-wise closed form",
    )
}

/// Minimum-variance distribution for the single output node `v_i`:
/// `q*(v_j | v_i) ∝ Â_ij · ‖h_j W‖₂`. Dense over all nodes.
pub fn closed_form_nodewise_probs(
    adj: &NormalizedAdjacency,
    h_prev: &DenseMatrix,
    w: &DenseMatrix,
    v_i: usize,
) -> Result<Vec<f64>> {
    if v_i >= adj.num_nodes() {
        return Err(Error::InvalidArgument(format!("node {v_i} out of range")));
    }
    let norms = projection_norms(h_prev, w)?;
    let mut q = vec![0.0; adj.num_nodes()];
    let (cols, a) = adj.row(v_i);
    for (&j, &aij) in cols.iter().zip(a) {
        q[j] = aij * norms[j];
    }
    normalized(q, "node-wise closed form")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, Graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> NormalizedAdjacency {
        normalize_adjacency(&Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap())
    }

    #[test]
    fn init_shapes() {
        let hw = init_hw(3, 2, 1000.0).unwrap();
        assert_eq!(hw.storage_len(), 12);
        assert_eq!(hw.iteration(), 1);
        for l in 0..2 {
            for v in 0..3 {
                assert_eq!(hw.expectation(l, v), 1000.0);
                assert_eq!(hw.count(l, v), 1);
            }
        }
        assert!(init_hw(3, 2, 0.0).is_err());
        assert!(init_hw(3, 2, -1.0).is_err());
    }

    #[test]
    fn single_observation_after_optimistic_init() {
        let mut hw = init_hw(2, 1, 1000.0).unwrap();
        hw.observe(0, 0, 2.0);
        assert_eq!(hw.expectation(0, 0), 501.0);
        assert_eq!(hw.count(0, 0), 2);
        assert_eq!(hw.expectation(0, 1), 1000.0);
        assert_eq!(hw.count(0, 1), 1);
    }

    #[test]
    fn probs_from_couplings_and_estimates() {
        let adj = triangle();
        let hw = init_hw(3, 1, 1.0).unwrap();
        let c = column_sq_norms(&adj, &[0, 1, 2]);
        for q in layerwise_probs(&c, &hw, 0).unwrap() {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut hw = init_hw(3, 1, 1.0).unwrap();
        hw.observe(0, 0, 3.0); // mean (1 + 3) / 2 = 2
        let q = layerwise_probs(&c, &hw, 0).unwrap();
        for (got, want) in q.iter().zip([0.5, 0.25, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(layerwise_probs(&[0.0; 3], &hw, 0).is_err());
    }

    #[test]
    fn scaling_estimates_leaves_probs_unchanged() {
        let adj = triangle();
        let c = column_sq_norms(&adj, &[0]);
        let mut a = init_hw(3, 1, 1.0).unwrap();
        let mut b = init_hw(3, 1, 7.0).unwrap();
        for (v, x) in [(0, 2.0), (2, 5.0)] {
            a.observe(0, v, x);
            b.observe(0, v, 7.0 * x);
        }
        let (qa, qb) = (layerwise_probs(&c, &a, 0).unwrap(), layerwise_probs(&c, &b, 0).unwrap());
        for (x, y) in qa.iter().zip(&qb) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn level_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(sample_level(&[1.0, 0.0, 0.0], 7, &mut rng).unwrap(), vec![0; 7]);
        assert!(sample_level(&[1.0], 0, &mut rng).is_err());
        let n = 1_000_000;
        let draws = sample_level(&[0.25; 4], n, &mut rng).unwrap();
        let mut freq = [0usize; 4];
        draws.iter().for_each(|&k| freq[k] += 1);
        for f in freq {
            assert!((f as f64 / n as f64 - 0.25).abs() < 0.005);
        }
        let a = sample_level(&[0.1, 0.6, 0.3], 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_level(&[0.1, 0.6, 0.3], 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn triangle_plan_uses_uniform_probs() {
        let adj = triangle();
        let hw = init_hw(3, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plan = build_plan(&[0, 1, 2], &adj, &hw, &[4], &mut rng).unwrap();
        assert_eq!(plan.num_layers(), 1);
        let d = plan.distribution(0);
        assert_eq!(d.support.len(), 3);
        assert!(d.probs.iter().all(|q| (q - 1.0 / 3.0).abs() < 1e-15));
        let lvl = plan.level(0);
        assert_eq!(lvl.counts.iter().sum::<u32>(), 4);
        assert_eq!(lvl.draws, 4);
        assert_eq!(plan.batch(), &[0, 1, 2]);
        assert_eq!(plan.cost().csr_entries, 9);
    }

    #[test]
    fn single_node_plan() {
        let adj = normalize_adjacency(&Graph::from_edges(1, []).unwrap());
        let hw = init_hw(1, 2, 1000.0).unwrap();
        let plan = build_plan(&[0], &adj, &hw, &[1, 1], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for lvl in plan.levels() {
            assert_eq!(lvl.nodes, vec![0]);
            assert_eq!(lvl.probs, vec![1.0]);
        }
    }

    #[test]
    fn plan_errors() {
        let adj = triangle();
        let hw = init_hw(3, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(build_plan(&[], &adj, &hw, &[2], &mut rng).is_err());
        assert!(build_plan(&[0, 0], &adj, &hw, &[2], &mut rng).is_err());
        assert!(build_plan(&[0], &adj, &hw, &[0], &mut rng).is_err());
        assert!(build_plan(&[0], &adj, &hw, &[2, 2], &mut rng).is_err());
    }

    #[test]
    fn closed_forms() {
        let adj = triangle();
        let h = DenseMatrix::identity(3);
        let w = DenseMatrix::identity(3);
        let q = closed_form_layerwise_probs(&adj, &h, &w, &[0, 1]).unwrap();
        assert!(q.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let h0 = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let q = closed_form_layerwise_probs(&adj, &h0, &DenseMatrix::identity(2), &[0]).unwrap();
        assert_eq!(q[1], 0.0);
        assert!((q[0] - 1.0 / 3.0).abs() < 1e-15 && (q[2] - 2.0 / 3.0).abs() < 1e-15);

        let path = normalize_adjacency(&Graph::from_edges(2, [(0, 1)]).unwrap());
        let h1 = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let q = closed_form_nodewise_probs(&path, &h1, &DenseMatrix::identity(1), 0).unwrap();
        assert_eq!(q, vec![0.0, 1.0]);
        let q = closed_form_nodewise_probs(&adj, &h, &w, 1).unwrap();
        assert!(q.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(closed_form_nodewise_probs(&path, &DenseMatrix::zeros(2, 1), &DenseMatrix::identity(1), 0).is_err());
    }
}
