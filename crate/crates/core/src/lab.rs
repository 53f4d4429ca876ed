//! Brute-force and Monte-Carlo oracles for the sampled estimators.
//!
//! Everything here works on small dense instances and deliberately avoids
//! the closed-form sampler code, so the two can be checked against each
//! other. Monte-Carlo loops split their trials into fixed chunks with one
//! RNG stream each and reduce in chunk order, so results do not depend on
//! the thread count.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::engine::{
    backward, forward, full_forward, softmax_cross_entropy, unbiased_subgraph_loss, Activation,
    DropoutMasks, GnnParameters, LossNormalization, Propagation, SubgraphLossContext,
};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, LabelSet, NormalizedAdjacency, SplitMask};
use crate::layerwise::{
    closed_form_layerwise_probs, closed_form_nodewise_probs, init_hw, layerwise_probs,
    HwTable, LayerSampler, LevelWeighting,
};
use crate::subgraph::{
    induced_edge_probs, sample_subgraph_edges, sample_subgraph_nodes, subgraph_node_probs,
};
use crate::synthetic::{erdos_renyi, uniform_matrix};
use crate::column_sq_norms;

const CHUNK: usize = 4096;

/// Per-coordinate first and second moments.
#[derive(Debug, Clone)]
struct Moments {
    count: usize,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; dim],
            sumsq: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        for ((s, q), v) in self.sum.iter_mut().zip(&mut self.sumsq).zip(x) {
            *s += v;
            *q += v * v;
        }
    }

    fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        for k in 0..self.sum.len() {
            self.sum[k] += other.sum[k];
            self.sumsq[k] += other.sumsq[k];
        }
    }

    fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.count as f64).collect()
    }

    /// Unbiased sample variance per coordinate.
    fn variance(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum
            .iter()
            .zip(&self.sumsq)
            .map(|(s, q)| ((q - s * s / n) / (n - 1.0)).max(0.0))
            .collect()
    }
}

/// Runs `trials` calls of `sample` over seeded chunks. `sample` writes one
/// observation of length `dim` and returns `false` to discard it.
fn chunked_moments<F>(trials: usize, dim: usize, seed: u64, sample: F) -> Result<Moments>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<bool> + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64 + 1);
            let mut m = Moments::new(dim);
            let mut buf = vec![0.0; dim];
            for _ in 0..CHUNK.min(trials - c * CHUNK) {
                if sample(&mut rng, &mut buf)? {
                    m.push(&buf);
                }
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Moments::new(dim);
    parts.iter().for_each(|m| total.merge(m));
    Ok(total)
}

fn check_dense(adj: &NormalizedAdjacency, h_prev: &DenseMatrix, w: &DenseMatrix) -> Result<DenseMatrix> {
    if h_prev.rows() != adj.num_nodes() {
        return Err(Error::Shape(format!(
            "{} embedding rows for {} nodes",
            h_prev.rows(),
            adj.num_nodes()
        )));
    }
    h_prev.matmul(w)
}

fn check_distribution(q: &[f64], n: usize) -> Result<()> {
    if q.len() != n {
        return Err(Error::Shape(format!("{} probabilities for {n} nodes", q.len())));
    }
    if q.iter().any(|v| !(*v >= 0.0)) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("q is not a probability distribution".into()));
    }
    Ok(())
}

/// `F(v_i) = Σ_j Â_ij h_j W` as a dense sum over every node.
pub fn exact_f(adj: &NormalizedAdjacency, h_prev: &DenseMatrix, w: &DenseMatrix, v_i: usize) -> Result<Vec<f64>> {
    let x = check_dense(adj, h_prev, w)?;
    let dense = adj.to_dense();
    let mut f = vec![0.0; x.cols()];
    for j in 0..adj.num_nodes() {
        let a = dense.get(v_i, j);
        for (fk, xk) in f.iter_mut().zip(x.row(j)) {
            *fk += a * xk;
        }
    }
    Ok(f)
}

/// Trace of the covariance of the `n`-draw estimator of `F(v_i)`:
/// `(1/n) [Σ_j Â_ij² ‖h_j W‖² / q_j − ‖F(v_i)‖²]`.
pub fn analytic_variance(
    adj: &NormalizedAdjacency,
    h_prev: &DenseMatrix,
    w: &DenseMatrix,
    q: &[f64],
    n: usize,
    v_i: usize,
) -> Result<f64> {
    analytic_layer_variance(adj, h_prev, w, q, n, &[v_i])
}

/// Sum of [`analytic_variance`] over `rows`.
pub fn analytic_layer_variance(
    adj: &NormalizedAdjacency,
    h_prev: &DenseMatrix,
    w: &DenseMatrix,
    q: &[f64],
    n: usize,
    rows: &[usize],
) -> Result<f64> {
    let x = check_dense(adj, h_prev, w)?;
    check_distribution(q, adj.num_nodes())?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let dense = adj.to_dense();
    let sq: Vec<f64> = (0..x.rows()).map(|j| x.row_norm(j).powi(2)).collect();
    let mut total = 0.0;
    for &i in rows {
        let mut f = vec![0.0; x.cols()];
        let mut second = 0.0;
        for j in 0..adj.num_nodes() {
            let a = dense.get(i, j);
            if a == 0.0 || sq[j] == 0.0 {
                continue;
            }
            if q[j] == 0.0 {
                return Err(Error::InfiniteVariance { node: j });
            }
            second += a * a * sq[j] / q[j];
            for (fk, xk) in f.iter_mut().zip(x.row(j)) {
                *fk += a * xk;
            }
        }
        let f2: f64 = f.iter().map(|v| v * v).sum();
        total += ((second - f2) / n as f64).max(0.0);
    }
    Ok(total)
}

/// Estimator flavour for the Monte-Carlo checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorVariant {
    #[default]
    Unbiased,
    /// Drops the `1/q` factor; a negative control that must look biased.
    OmitInverseProbability,
}

/// Monte-Carlo mean of a vector estimator against its exact value.
#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasednessReport {
    pub mean: Vec<f64>,
    pub exact: Vec<f64>,
    /// `max_k |mean_k − exact_k| / |exact_k|` over coordinates with `exact_k ≠ 0`.
    pub max_rel_dev: f64,
    /// Largest 95% half-width, relative to the coordinate's exact value.
    pub rel_half_width: f64,
    pub trials: usize,
}

fn unbiasedness_report(m: &Moments, exact: Vec<f64>) -> UnbiasednessReport {
    let mean = m.mean();
    let var = m.variance();
    let mut max_rel_dev: f64 = 0.0;
    let mut rel_half_width: f64 = 0.0;
    for k in 0..exact.len() {
        let e = exact[k].abs();
        if e > 0.0 {
            max_rel_dev = max_rel_dev.max((mean[k] - exact[k]).abs() / e);
            rel_half_width = rel_half_width.max(1.96 * (var[k] / m.count as f64).sqrt() / e);
        } else {
            max_rel_dev = max_rel_dev.max((mean[k] - exact[k]).abs());
        }
    }
    UnbiasednessReport {
        mean,
        exact,
        max_rel_dev,
        rel_half_width,
        trials: m.count,
    }
}

/// Draws `n` nodes from `q` per trial and averages `Â_ij h_j W / q_j`.
#[allow(clippy::too_many_arguments)]
pub fn mc_unbiasedness(
    adj: &NormalizedAdjacency,
    h_prev: &DenseMatrix,
    w: &DenseMatrix,
    q: &[f64],
    n: usize,
    v_i: usize,
    trials: usize,
    seed: u64,
    variant: EstimatorVariant,
) -> Result<UnbiasednessReport> {
    let x = check_dense(adj, h_prev, w)?;
    check_distribution(q, adj.num_nodes())?;
    if n == 0 || trials < 2 {
        return Err(Error::InvalidArgument("need n ≥ 1 and at least two trials".into()));
    }
    let dist = WeightedIndex::new(q).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let row: Vec<f64> = (0..adj.num_nodes()).map(|j| adj.weight(v_i, j)).collect();
    let exact = exact_f(adj, h_prev, w, v_i)?;
    let m = chunked_moments(trials, x.cols(), seed, |rng, out| {
        out.fill(0.0);
        for _ in 0..n {
            let j = dist.sample(rng);
            let scale = match variant {
                EstimatorVariant::Unbiased => row[j] / q[j],
                EstimatorVariant::OmitInverseProbability => row[j],
            } / n as f64;
            for (o, xk) in out.iter_mut().zip(x.row(j)) {
                *o += scale * xk;
            }
        }
        Ok(true)
    })?;
    Ok(unbiasedness_report(&m, exact))
}

/// Monte-Carlo check of the full layer-wise path: plans are built by
/// [`LayerSampler`] from `hw`, aggregated by [`Propagation::layerwise`] and
/// run through [`forward`]. `params` must have one layer; the batch is every
/// node and each level draws `n` nodes. Coordinates are all `(node, column)`
/// pairs of `Â X W`.
pub fn mc_plan_unbiasedness(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &GnnParameters,
    hw: &HwTable,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    if params.num_layers() != 1 {
        return Err(Error::InvalidArgument("plan check expects a one-layer network".into()));
    }
    let exact = full_forward(adj, x, params)?.logits().clone().into_vec();
    let batch: Vec<usize> = (0..adj.num_nodes()).collect();
    let m = chunked_moments(trials, exact.len(), seed, |rng, out| {
        let plan = LayerSampler::new(adj.num_nodes()).build(&batch, adj, LevelWeighting::Hw(hw), &[n], rng)?;
        let prop = Propagation::layerwise(adj, &plan)?;
        let fwd = forward(&prop, x, params, DropoutMasks::none())?;
        out.copy_from_slice(fwd.logits().as_slice());
        Ok(true)
    })?;
    Ok(unbiasedness_report(&m, exact))
}

/// Which variance objective the simplex oracle minimizes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Summed variance over the output rows of one layer, one shared `q`.
    Layerwise { rows: &'a [usize] },
    /// Variance of a single output node.
    Nodewise { node: usize },
    /// Summed variance over every node with `h W` replaced by the raw
    /// features (the `w` argument is ignored).
    SubgraphFrozen,
}

/// Result of the numerical simplex minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub probs: Vec<f64>,
    pub objective: f64,
    /// Multiplier recovered as the mean partial derivative over the support.
    pub lambda: f64,
    /// `max_j |∂L/∂q_j − λ|` over the support, relative to the mean `a_j/(n q_j²)`.
    pub stationarity_residual: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Coefficients `a_j` and constant `c` of `(1/n)(Σ_j a_j/q_j − c)`.
fn objective_terms(
    objective: Objective<'_>,
    adj: &NormalizedAdjacency,
    h: &DenseMatrix,
    w: &DenseMatrix,
) -> Result<(Vec<f64>, f64)> {
    let x = match objective {
        Objective::SubgraphFrozen => {
            if h.rows() != adj.num_nodes() {
                return Err(Error::Shape("feature rows differ from node count".into()));
            }
            h.clone()
        }
        _ => check_dense(adj, h, w)?,
    };
    let all: Vec<usize> = (0..adj.num_nodes()).collect();
    let rows: &[usize] = match objective {
        Objective::Layerwise { rows } => rows,
        Objective::Nodewise { node } => std::slice::from_ref(match all.get(node) {
            Some(v) => v,
            None => return Err(Error::InvalidArgument(format!("node {node} out of range"))),
        }),
        Objective::SubgraphFrozen => &all,
    };
    let dense = adj.to_dense();
    let sq: Vec<f64> = (0..x.rows()).map(|j| x.row_norm(j).powi(2)).collect();
    let mut a = vec![0.0; adj.num_nodes()];
    let mut c = 0.0;
    for &i in rows {
        let mut f = vec![0.0; x.cols()];
        for j in 0..adj.num_nodes() {
            let aij = dense.get(i, j);
            a[j] += aij * aij * sq[j];
            for (fk, xk) in f.iter_mut().zip(x.row(j)) {
                *fk += aij * xk;
            }
        }
        c += f.iter().map(|v| v * v).sum::<f64>();
    }
    Ok((a, c))
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

struct Simplex<'a> {
    a: &'a [f64],
    c: f64,
    n: f64,
    evals: usize,
}

impl Simplex<'_> {
    fn value(&mut self, q: &[f64]) -> f64 {
        self.evals += 1;
        let mut s = 0.0;
        for (a, q) in self.a.iter().zip(q) {
            if *q <= 0.0 {
                return f64::INFINITY;
            }
            s += a / q;
        }
        (s - self.c) / self.n
    }

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(q)
            .map(|(a, q)| (self.c - a / (q * q)) / self.n)
            .collect()
    }
}

const ORACLE_BUDGET: usize = 100_000;
const ORACLE_RESTARTS: usize = 10;

/// Minimizes the summed estimator variance over the probability simplex by
/// projected gradient descent with backtracking, from ten starting points
/// (uniform, then multiplicative perturbations of the best iterate).
/// Coordinates whose numerator is zero are pinned to probability 0.
pub fn oracle_min_variance_probs(
    objective: Objective<'_>,
    adj: &NormalizedAdjacency,
    h: &DenseMatrix,
    w: &DenseMatrix,
    n: usize,
    seed: u64,
) -> Result<OracleResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let (a_full, c) = objective_terms(objective, adj, h, w)?;
    let support: Vec<usize> = (0..a_full.len()).filter(|&j| a_full[j] > 0.0).collect();
    if support.is_empty() {
        return Err(Error::InvalidArgument("objective has no positive term".into()));
    }
    let a: Vec<f64> = support.iter().map(|&j| a_full[j]).collect();
    let mut f = Simplex { a: &a, c, n: n as f64, evals: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = a.len();
    let per_restart = ORACLE_BUDGET / ORACLE_RESTARTS;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0;
    let mut converged = false;
    for restart in 0..ORACLE_RESTARTS {
        let mut q = match &best {
            None => vec![1.0 / k as f64; k],
            Some((b, _)) => {
                let p: Vec<f64> = b.iter().map(|v| v * rng.random_range(-1.0f64..1.0).exp()).collect();
                let s: f64 = p.iter().sum();
                p.into_iter().map(|v| v / s).collect()
            }
        };
        let mut fq = f.value(&q);
        let mut step = 1e-3;
        let start = f.evals;
        let mut done = false;
        while f.evals - start < per_restart {
            iterations += 1;
            let g = f.gradient(&q);
            let mut t = step;
            let (next, fnext) = loop {
                let trial: Vec<f64> = q.iter().zip(&g).map(|(q, g)| q - t * g).collect();
                let cand = project_simplex(&trial);
                let fc = f.value(&cand);
                let lin: f64 = g.iter().zip(cand.iter().zip(&q)).map(|(g, (c, q))| g * (c - q)).sum();
                let quad: f64 = cand.iter().zip(&q).map(|(c, q)| (c - q).powi(2)).sum::<f64>() / (2.0 * t);
                if fc <= fq + lin + quad || t < 1e-300 || f.evals - start >= per_restart {
                    break (cand, fc);
                }
                t *= 0.5;
            };
            let moved = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if fnext <= fq {
                q = next;
                fq = fnext;
            }
            step = t * 2.0;
            if moved < 1e-15 {
                done = true;
                break;
            }
        }
        if restart == 0 {
            converged = done;
        } else {
            converged &= done;
        }
        if best.as_ref().is_none_or(|(_, fb)| fq < *fb) {
            best = Some((q, fq));
        }
    }
    let (q, value) = best.expect("at least one restart");
    let g = f.gradient(&q);
    let lambda = g.iter().sum::<f64>() / k as f64;
    let scale = a.iter().zip(&q).map(|(a, q)| a / (q * q)).sum::<f64>() / (k as f64 * n as f64);
    let stationarity_residual = g.iter().map(|g| (g - lambda).abs()).fold(0.0, f64::max) / scale;
    let mut probs = vec![0.0; a_full.len()];
    for (&j, &p) in support.iter().zip(&q) {
        probs[j] = p;
    }
    if !converged {
        log::warn!("simplex oracle stopped on its evaluation budget");
    }
    Ok(OracleResult {
        probs,
        objective: value,
        lambda,
        stationarity_residual,
        iterations,
        evaluations: f.evals,
        converged,
    })
}

/// Objective value `(1/n)(Σ_j a_j/q_j − c)` of an arbitrary `q`.
pub fn objective_value(
    objective: Objective<'_>,
    adj: &NormalizedAdjacency,
    h: &DenseMatrix,
    w: &DenseMatrix,
    q: &[f64],
    n: usize,
) -> Result<f64> {
    let (a, c) = objective_terms(objective, adj, h, w)?;
    let mut s = 0.0;
    for (j, (a, q)) in a.iter().zip(q).enumerate() {
        if *a > 0.0 {
            if *q <= 0.0 {
                return Err(Error::InfiniteVariance { node: j });
            }
            s += a / q;
        }
    }
    Ok((s - c) / n as f64)
}

/// Variance of one sampler, analytic and measured.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerVariance {
    pub name: String,
    pub analytic: f64,
    pub empirical: f64,
    pub half_width: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarianceReport {
    pub samplers: Vec<SamplerVariance>,
}

impl VarianceReport {
    pub fn get(&self, name: &str) -> Option<&SamplerVariance> {
        self.samplers.iter().find(|s| s.name == name)
    }
}

/// Distributions compared by [`compare_samplers`]: the closed form, the
/// HW-estimated one (if a table is given), uniform, coupling-only and
/// degree-proportional.
pub fn standard_samplers(
    adj: &NormalizedAdjacency,
    h_prev: &DenseMatrix,
    w: &DenseMatrix,
    rows: &[usize],
    hw: Option<(&HwTable, usize)>,
) -> Result<Vec<(String, Vec<f64>)>> {
    let n = adj.num_nodes();
    let coupling = column_sq_norms(adj, rows);
    let total: f64 = coupling.iter().sum();
    let mut out = vec![(
        "closed-form".to_string(),
        closed_form_layerwise_probs(adj, h_prev, w, rows)?,
    )];
    if let Some((table, layer)) = hw {
        out.push(("hw-estimated".into(), layerwise_probs(&coupling, table, layer)?));
    }
    out.push(("uniform".into(), vec![1.0 / n as f64; n]));
    out.push(("coupling".into(), coupling.iter().map(|c| c / total).collect()));
    let deg: Vec<f64> = (0..n).map(|j| adj.row(j).0.len() as f64).collect();
    let dsum: f64 = deg.iter().sum();
    out.push(("degree".into(), deg.iter().map(|d| d / dsum).collect()));
    Ok(out)
}

/// Analytic and empirical summed variance of the estimators of `F(v_i)`,
/// `i ∈ rows`, for each sampler. The empirical value averages
/// `Σ_i ‖F̂_i − F_i‖²` over `trials` draws of `n` nodes.
#[allow(clippy::too_many_arguments)]
pub fn compare_samplers(
    adj: &NormalizedAdjacency,
    h_prev: &DenseMatrix,
    w: &DenseMatrix,
    rows: &[usize],
    samplers: &[(String, Vec<f64>)],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<VarianceReport> {
    let x = check_dense(adj, h_prev, w)?;
    let exact: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| exact_f(adj, h_prev, w, i))
        .collect::<Result<_>>()?;
    let weights: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| (0..adj.num_nodes()).map(|j| adj.weight(i, j)).collect())
        .collect();
    let mut report = VarianceReport::default();
    for (name, q) in samplers {
        let analytic = analytic_layer_variance(adj, h_prev, w, q, n, rows)?;
        let dist = WeightedIndex::new(q).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let m = chunked_moments(trials, 1, seed, |rng, out| {
            let mut est = vec![vec![0.0; x.cols()]; rows.len()];
            for _ in 0..n {
                let j = dist.sample(rng);
                for (r, e) in est.iter_mut().enumerate() {
                    let s = weights[r][j] / (q[j] * n as f64);
                    if s != 0.0 {
                        for (ek, xk) in e.iter_mut().zip(x.row(j)) {
                            *ek += s * xk;
                        }
                    }
                }
            }
            out[0] = est
                .iter()
                .zip(&exact)
                .map(|(e, f)| e.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum();
            Ok(true)
        })?;
        report.samplers.push(SamplerVariance {
            name: name.clone(),
            analytic,
            empirical: m.mean()[0],
            half_width: 1.96 * (m.variance()[0] / m.count as f64).sqrt(),
            trials: m.count,
        });
    }
    Ok(report)
}

/// How the Monte-Carlo loss check weighs each subgraph node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossVariant {
    /// The production loss, [`unbiased_subgraph_loss`].
    #[default]
    Weighted,
    /// Plain mean over the training draws; a negative control.
    OmitInverseProbability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub full_loss: f64,
    pub mean_loss: f64,
    pub rel_dev: f64,
    pub rel_half_width: f64,
    /// Subgraphs that contained a training node.
    pub used: usize,
    pub skipped: usize,
}

/// Monte-Carlo mean of the subgraph loss against the full-batch mean loss.
///
/// Per-node losses come from the fixed `logits` (one row per node), so the
/// check isolates the reweighting from the nonlinearity of the network.
#[allow(clippy::too_many_arguments)]
pub fn loss_unbiasedness_check(
    adj: &NormalizedAdjacency,
    logits: &DenseMatrix,
    labels: &LabelSet,
    split: &SplitMask,
    q: &[f64],
    n_s: usize,
    trials: usize,
    seed: u64,
    normalization: LossNormalization,
    variant: LossVariant,
) -> Result<LossReport> {
    check_distribution(q, adj.num_nodes())?;
    let train = split.train();
    let targets: Vec<usize> = train.iter().map(|&v| labels.get(v)).collect();
    let (full_loss, _) = softmax_cross_entropy(logits, &targets, train, None)?;
    let ctx = SubgraphLossContext::new(split, q, normalization);
    let is_train = split.train_mask(adj.num_nodes());
    let m = chunked_moments(trials, 1, seed, |rng, out| {
        let sub = sample_subgraph_nodes(adj, q, n_s, rng)?;
        let local = logits.gather_rows(sub.nodes());
        match variant {
            LossVariant::Weighted => match unbiased_subgraph_loss(&sub, &local, labels, &ctx)? {
                Some((l, _)) => {
                    out[0] = l;
                    Ok(true)
                }
                None => Ok(false),
            },
            LossVariant::OmitInverseProbability => {
                let rows: Vec<usize> = (0..sub.len()).filter(|&k| is_train[sub.nodes()[k]]).collect();
                if rows.is_empty() {
                    return Ok(false);
                }
                let counts = sub.draw_counts();
                let k_train: f64 = rows.iter().map(|&k| counts[k] as f64).sum();
                let w: Vec<f64> = rows.iter().map(|&k| counts[k] as f64 / k_train).collect();
                let t: Vec<usize> = rows.iter().map(|&k| labels.get(sub.nodes()[k])).collect();
                out[0] = softmax_cross_entropy(&local, &t, &rows, Some(&w))?.0;
                Ok(true)
            }
        }
    })?;
    let mean_loss = m.mean()[0];
    Ok(LossReport {
        full_loss,
        mean_loss,
        rel_dev: (mean_loss - full_loss).abs() / full_loss.abs(),
        rel_half_width: 1.96 * (m.variance()[0] / m.count as f64).sqrt() / full_loss.abs(),
        used: m.count,
        skipped: trials - m.count,
    })
}

/// Largest gap between the running-mean update and the direct batch mean of
/// `{init, obs_1..obs_k}` after every prefix, relative to the batch mean.
pub fn hw_recurrence_error(init: f64, observations: &[f64]) -> Result<f64> {
    let mut hw = init_hw(1, 1, init)?;
    let mut worst: f64 = 0.0;
    let mut sum = init;
    for (k, &x) in observations.iter().enumerate() {
        hw.observe(0, 0, x);
        sum += x;
        let direct = sum / (k + 2) as f64;
        let got = hw.expectation(0, 0);
        worst = worst.max((got - direct).abs() / direct.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Backward path exercised by [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientPath {
    Full,
    Layerwise,
    SubgraphNode,
    SubgraphEdge,
}

/// Largest floored relative error `|fd − g| / max(|fd|, |g|, 1e-6)` between
/// analytic and central-difference gradients of a two-layer sigmoid network
/// with dropout on a random graph of at most ten nodes.
pub fn gradient_check(path: GradientPath, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=10);
    let graph = erdos_renyi(n, 0.35, &mut rng);
    let adj = normalize_adjacency(&graph);
    let x = uniform_matrix(n, 4, -1.0, 1.0, &mut rng);
    let labels = LabelSet::new((0..n).map(|_| rng.random_range(0..3)).collect(), 3)?;
    let params = GnnParameters::glorot(&[4, 5, 3], Activation::Sigmoid, 0.3, &mut rng)?;
    let all: Vec<usize> = (0..n).collect();
    let targets_of = |rows: &[usize]| rows.iter().map(|&v| labels.get(v)).collect::<Vec<_>>();

    type LossFn<'a> = Box<dyn Fn(&DenseMatrix) -> Result<(f64, DenseMatrix)> + 'a>;
    let (prop, loss): (Propagation, LossFn<'_>) = match path {
        GradientPath::Full => {
            let prop = Propagation::full(&adj, 2);
            let t = targets_of(&all);
            let rows = all.clone();
            (prop, Box::new(move |z| softmax_cross_entropy(z, &t, &rows, None)))
        }
        GradientPath::Layerwise => {
            let mut hw = init_hw(n, 2, 1.0)?;
            for v in 0..n {
                hw.observe(0, v, rng.random_range(0.0..3.0));
            }
            let batch: Vec<usize> = all.iter().copied().filter(|v| v % 2 == 0).collect();
            let plan = LayerSampler::new(n).build(&batch, &adj, LevelWeighting::Hw(&hw), &[6, 4], &mut rng)?;
            let prop = Propagation::layerwise(&adj, &plan)?;
            let t = targets_of(&batch);
            let rows: Vec<usize> = (0..batch.len()).collect();
            (prop, Box::new(move |z| softmax_cross_entropy(z, &t, &rows, None)))
        }
        GradientPath::SubgraphNode | GradientPath::SubgraphEdge => {
            let q = subgraph_node_probs(&adj, &x)?;
            let (sub, draw) = if path == GradientPath::SubgraphNode {
                (sample_subgraph_nodes(&adj, &q, n, &mut rng)?, q.clone())
            } else if graph.num_edges() > 0 {
                let ed = induced_edge_probs(&q, &graph)?;
                (sample_subgraph_edges(&ed, &adj, 3, &mut rng)?, ed.endpoint_probs())
            } else {
                return Ok(0.0);
            };
            let train: Vec<usize> = sub.nodes().to_vec();
            let split = SplitMask::new(n, train, vec![], vec![])?;
            let ctx = SubgraphLossContext::new(&split, &draw, LossNormalization::LabeledOnly);
            let prop = Propagation::subgraph(&sub, 2)?;
            let labels = labels.clone();
            (
                prop,
                Box::new(move |z| {
                    unbiased_subgraph_loss(&sub, z, &labels, &ctx)?
                        .ok_or(Error::Empty("training nodes in the subgraph"))
                }),
            )
        }
    };
    let masks = DropoutMasks::sample(&prop, &params, &mut rng);
    let eval = |p: &GnnParameters| -> Result<f64> {
        let fwd = forward(&prop, &x, p, masks.clone())?;
        Ok(loss(fwd.logits())?.0)
    };
    let fwd = forward(&prop, &x, &params, masks.clone())?;
    let (_, dlogits) = loss(fwd.logits())?;
    let grads = backward(&prop, &x, &params, &fwd, &dlogits)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for l in 0..params.num_layers() {
        for k in 0..params.weights()[l].as_slice().len() {
            let mut plus = params.clone();
            plus.weights_mut()[l].as_mut_slice()[k] += h;
            let mut minus = params.clone();
            minus.weights_mut()[l].as_mut_slice()[k] -= h;
            let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
            let g = grads[l].as_slice()[k];
            worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6));
        }
    }
    Ok(worst)
}

/// Settings for [`run_battery`].
#[derive(Debug, Clone)]
pub struct BatteryConfig {
    pub seed: u64,
    /// Random instances per check.
    pub instances: usize,
    /// Monte-Carlo trials per unbiasedness instance.
    pub trials: usize,
    /// Test hook: replaces the estimator under test by a biased one.
    pub inject_bias: bool,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            instances: 5,
            trials: 100_000,
            inject_bias: false,
        }
    }
}

/// One line of the battery report.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryRow {
    pub check: String,
    pub instance: usize,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn row(check: &str, instance: usize, metric: &str, value: f64, threshold: f64, pass: bool) -> BatteryRow {
    BatteryRow {
        check: check.into(),
        instance,
        metric: metric.into(),
        value,
        threshold,
        pass,
    }
}

fn small_instance(rng: &mut ChaCha8Rng, n: usize, p: f64, dims: (usize, usize)) -> (Graph, NormalizedAdjacency, DenseMatrix, DenseMatrix) {
    let g = erdos_renyi(n, p, rng);
    let adj = normalize_adjacency(&g);
    let h = uniform_matrix(n, dims.0, -1.0, 1.0, rng);
    let w = uniform_matrix(dims.0, dims.1, -1.0, 1.0, rng);
    (g, adj, h, w)
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs every oracle and property check on seeded synthetic instances.
pub fn run_battery(cfg: &BatteryConfig) -> Result<Vec<BatteryRow>> {
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for inst in 0..cfg.instances {
        let g = erdos_renyi(20, 0.3, &mut rng);
        let adj = normalize_adjacency(&g);
        let x = uniform_matrix(20, 3, 0.1, 1.0, &mut rng);
        let w = uniform_matrix(3, 2, 0.1, 1.0, &mut rng);
        let params = GnnParameters::new(vec![w.clone()], Activation::Linear, 0.0)?;
        let mut hw = init_hw(20, 1, 1.0)?;
        for v in 0..20 {
            hw.observe(0, v, rng.random_range(0.0..3.0));
        }
        let seed = rng.random();
        let rep = if cfg.inject_bias {
            let q = uniform_probs(20);
            mc_unbiasedness(&adj, &x, &w, &q, 20, 0, cfg.trials, seed, EstimatorVariant::OmitInverseProbability)?
        } else {
            mc_plan_unbiasedness(&adj, &x, &params, &hw, 20, cfg.trials, seed)?
        };
        rows.push(row("unbiasedness", inst, "max_rel_dev", rep.max_rel_dev, 0.01, rep.max_rel_dev < 0.01));
    }

    for inst in 0..cfg.instances {
        let n = rng.random_range(4..=8);
        let (g, adj, h, w) = small_instance(&mut rng, n, 0.4, (3, 2));
        let frontier: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        let frontier = if frontier.is_empty() { vec![0] } else { frontier };
        let seed = rng.random();
        let closed = closed_form_layerwise_probs(&adj, &h, &w, &frontier)?;
        let oracle = oracle_min_variance_probs(Objective::Layerwise { rows: &frontier }, &adj, &h, &w, 3, seed)?;
        let d = linf(&closed, &oracle.probs);
        rows.push(row("closed-form-layerwise", inst, "linf", d, 1e-4, d <= 1e-4));
        rows.push(row(
            "closed-form-layerwise",
            inst,
            "stationarity",
            oracle.stationarity_residual,
            1e-6,
            oracle.stationarity_residual < 1e-6,
        ));
        let v = rng.random_range(0..n);
        let closed = closed_form_nodewise_probs(&adj, &h, &w, v)?;
        let oracle = oracle_min_variance_probs(Objective::Nodewise { node: v }, &adj, &h, &w, 2, seed)?;
        let d = linf(&closed, &oracle.probs);
        rows.push(row("closed-form-nodewise", inst, "linf", d, 1e-4, d <= 1e-4));
        let closed = subgraph_node_probs(&adj, &h)?;
        let oracle = oracle_min_variance_probs(Objective::SubgraphFrozen, &adj, &h, &w, n, seed)?;
        let d = linf(&closed, &oracle.probs);
        rows.push(row("closed-form-subgraph", inst, "linf", d, 1e-4, d <= 1e-4));
        let _ = g;
    }

    let mut dominated = 0;
    let total = cfg.instances * 20;
    for _ in 0..total {
        let n = rng.random_range(4..=12);
        let (_, adj, h, w) = small_instance(&mut rng, n, 0.4, (3, 2));
        let frontier: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        let frontier = if frontier.is_empty() { vec![n - 1] } else { frontier };
        let samplers = standard_samplers(&adj, &h, &w, &frontier, None)?;
        let vars: Vec<f64> = samplers
            .iter()
            .map(|(_, q)| analytic_layer_variance(&adj, &h, &w, q, 4, &frontier))
            .collect::<Result<_>>()?;
        if vars[1..3].iter().all(|v| vars[0] <= v * (1.0 + 1e-12)) {
            dominated += 1;
        }
    }
    rows.push(row(
        "variance-dominance",
        0,
        "fraction",
        dominated as f64 / total as f64,
        1.0,
        dominated == total,
    ));

    {
        let g = erdos_renyi(20, 0.3, &mut rng);
        let adj = normalize_adjacency(&g);
        let x = uniform_matrix(20, 4, 0.0, 1.0, &mut rng);
        let logits = uniform_matrix(20, 3, -2.0, 2.0, &mut rng);
        let labels = LabelSet::new((0..20).map(|_| rng.random_range(0..3)).collect(), 3)?;
        let split = SplitMask::new(20, (0..8).collect(), vec![], vec![])?;
        let q = subgraph_node_probs(&adj, &x)?;
        let seed = rng.random();
        let variant = if cfg.inject_bias { LossVariant::OmitInverseProbability } else { LossVariant::Weighted };
        let rep = loss_unbiasedness_check(
            &adj, &logits, &labels, &split, &q, 6, cfg.trials, seed,
            LossNormalization::LabeledOnly, variant,
        )?;
        rows.push(row("loss-unbiasedness", 0, "rel_dev", rep.rel_dev, 0.01, rep.rel_dev < 0.01));
    }

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(1..200);
        let obs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..50.0)).collect();
        let init = if rng.random_bool(0.5) { 1000.0 } else { 1.0 };
        worst = worst.max(hw_recurrence_error(init, &obs)?);
    }
    rows.push(row("hw-recurrence", 0, "max_rel_err", worst, 1e-12, worst <= 1e-12));

    let mut worst_sum: f64 = 0.0;
    let mut isolated = 0usize;
    for inst in 0..100 {
        let n = rng.random_range(5..40);
        let g = erdos_renyi(n, 0.2, &mut rng);
        if g.num_edges() == 0 {
            continue;
        }
        let adj = normalize_adjacency(&g);
        let x = uniform_matrix(n, 3, 0.0, 1.0, &mut rng);
        let q = subgraph_node_probs(&adj, &x)?;
        let ed = induced_edge_probs(&q, &g)?;
        worst_sum = worst_sum.max((ed.probs().iter().sum::<f64>() - 1.0).abs());
        if inst < 10 {
            for _ in 0..100 {
                let m = rng.random_range(1..6);
                let sub = sample_subgraph_edges(&ed, &adj, m, &mut rng)?;
                isolated += (0..sub.len()).filter(|&k| sub.adjacency().row(k).0.len() < 2).count();
            }
        }
    }
    rows.push(row("edge-identity", 0, "max_abs_err", worst_sum, 1e-9, worst_sum <= 1e-9));
    rows.push(row("edge-isolated", 0, "isolated_nodes", isolated as f64, 0.0, isolated == 0));

    for (name, path) in [
        ("gradient-full", GradientPath::Full),
        ("gradient-layerwise", GradientPath::Layerwise),
        ("gradient-subgraph-node", GradientPath::SubgraphNode),
        ("gradient-subgraph-edge", GradientPath::SubgraphEdge),
    ] {
        for inst in 0..cfg.instances {
            let e = gradient_check(path, rng.random())?;
            rows.push(row(name, inst, "max_rel_err", e, 1e-4, e < 1e-4));
        }
    }

    {
        let (_, adj, h, w) = small_instance(&mut rng, 10, 0.4, (3, 2));
        let q = uniform_probs(10);
        let rep = mc_unbiasedness(&adj, &h, &w, &q, 10, 0, 20_000, rng.random(), EstimatorVariant::OmitInverseProbability)?;
        rows.push(row("negative-control-estimator", 0, "max_rel_dev", rep.max_rel_dev, 0.05, rep.max_rel_dev > 0.05));
    }
    Ok(rows)
}

fn uniform_probs(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// CSV text with header `check,instance,metric,value,threshold,pass`.
pub fn battery_csv(rows: &[BatteryRow]) -> String {
    let mut out = String::from("check,instance,metric,value,threshold,pass\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6e},{:e},{}",
            r.check, r.instance, r.metric, r.value, r.threshold, r.pass
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> NormalizedAdjacency {
        normalize_adjacency(&Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap())
    }

    #[test]
    fn exact_f_examples() {
        let adj = triangle();
        let i = DenseMatrix::identity(3);
        for v in exact_f(&adj, &i, &i, 0).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(exact_f(&adj, &DenseMatrix::zeros(3, 2), &DenseMatrix::identity(2), 1)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn point_mass_has_zero_variance_and_support_is_enforced() {
        let adj = normalize_adjacency(&Graph::from_edges(2, [(0, 1)]).unwrap());
        let h = DenseMatrix::from_rows(&[vec![0.0], vec![1.5]]).unwrap();
        let w = DenseMatrix::identity(1);
        assert_eq!(analytic_variance(&adj, &h, &w, &[0.0, 1.0], 3, 0).unwrap(), 0.0);
        let h = DenseMatrix::from_rows(&[vec![1.0], vec![1.5]]).unwrap();
        assert!(matches!(
            analytic_variance(&adj, &h, &w, &[0.0, 1.0], 3, 0),
            Err(Error::InfiniteVariance { node: 0 })
        ));
    }

    #[test]
    fn doubling_n_halves_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, adj, h, w) = small_instance(&mut rng, 8, 0.5, (3, 2));
        let q = uniform_probs(8);
        let v1 = analytic_variance(&adj, &h, &w, &q, 3, 2).unwrap();
        let v2 = analytic_variance(&adj, &h, &w, &q, 6, 2).unwrap();
        assert!((v1 / v2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(project_simplex(&[3.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.2, -0.4, 0.9]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15 && p[1] == 0.0);
    }

    #[test]
    fn symmetric_two_node_oracle() {
        let adj = normalize_adjacency(&Graph::from_edges(2, [(0, 1)]).unwrap());
        let h = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = oracle_min_variance_probs(Objective::Layerwise { rows: &[0, 1] }, &adj, &h, &DenseMatrix::identity(2), 1, 0).unwrap();
        assert!((r.probs[0] - 0.5).abs() < 1e-9 && (r.probs[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn oracle_beats_probed_alternatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let (_, adj, h, w) = small_instance(&mut rng, 7, 0.4, (3, 2));
        let rows = [0, 3, 5];
        let obj = Objective::Layerwise { rows: &rows };
        let r = oracle_min_variance_probs(obj, &adj, &h, &w, 2, 9).unwrap();
        assert!((r.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for _ in 0..200 {
            let mut q: Vec<f64> = (0..7).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= s);
            if let Ok(v) = objective_value(obj, &adj, &h, &w, &q, 2) {
                assert!(r.objective <= v + 1e-12);
            }
        }
    }

    #[test]
    fn omitting_inverse_probability_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (_, adj, h, w) = small_instance(&mut rng, 10, 0.4, (3, 2));
        let q = uniform_probs(10);
        let good = mc_unbiasedness(&adj, &h, &w, &q, 10, 0, 20_000, 1, EstimatorVariant::Unbiased).unwrap();
        let bad = mc_unbiasedness(&adj, &h, &w, &q, 10, 0, 20_000, 1, EstimatorVariant::OmitInverseProbability).unwrap();
        assert!(bad.max_rel_dev > 0.05);
        assert!(good.max_rel_dev < bad.max_rel_dev);
    }

    #[test]
    fn full_coverage_point_masses_are_exact() {
        // A single node with its self-loop: every draw returns the exact value.
        let adj = normalize_adjacency(&Graph::from_edges(1, []).unwrap());
        let h = DenseMatrix::from_rows(&[vec![2.0, -1.0]]).unwrap();
        let r = mc_unbiasedness(&adj, &h, &DenseMatrix::identity(2), &[1.0], 1, 0, 100, 0, EstimatorVariant::Unbiased).unwrap();
        assert_eq!(r.max_rel_dev, 0.0);
    }

    #[test]
    fn chunked_moments_do_not_depend_on_threads() {
        let f = |rng: &mut ChaCha8Rng, out: &mut [f64]| {
            out[0] = rng.random();
            Ok(true)
        };
        let a = chunked_moments(10_000, 1, 5, f).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| chunked_moments(10_000, 1, 5, f)).unwrap();
        assert_eq!(a.sum, b.sum);
    }

    #[test]
    fn hw_recurrence_matches_batch_mean() {
        assert!(hw_recurrence_error(1000.0, &[2.0, 5.0, 0.0, 7.5]).unwrap() < 1e-15);
    }

    #[test]
    fn loss_check_full_coverage_is_exact() {
        // One node drawn with probability one: the weighted loss equals the full loss.
        let adj = normalize_adjacency(&Graph::from_edges(1, []).unwrap());
        let logits = DenseMatrix::from_rows(&[vec![0.3, -0.2]]).unwrap();
        let labels = LabelSet::new(vec![1], 2).unwrap();
        let split = SplitMask::new(1, vec![0], vec![], vec![]).unwrap();
        let r = loss_unbiasedness_check(
            &adj, &logits, &labels, &split, &[1.0], 3, 50, 0,
            LossNormalization::LabeledOnly, LossVariant::Weighted,
        )
        .unwrap();
        assert!(r.rel_dev < 1e-12, "{}", r.rel_dev);
    }
}
