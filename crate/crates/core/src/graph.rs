//! Immutable graph topology, the normalized propagation matrix and
//! plain-text dataset ingestion.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Undirected simple graph in CSR form. Self-loops are never stored here.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    degrees: Vec<usize>,
}

impl Graph {
    /// Builds a graph from a possibly directed, duplicated edge list.
    /// Edges are symmetrized and deduplicated; self-loops are dropped.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Dataset(format!(
                    "edge ({u}, {v}) references a node outside [0, {num_nodes})"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::new();
        let mut degrees = Vec::with_capacity(num_nodes);
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            degrees.push(list.len());
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        Ok(Self {
            num_nodes,
            offsets,
            neighbors,
            degrees,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.degrees[v]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn csr_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn csr_neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .copied()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }
}

/// How the adjacency with self-loops is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`
    #[default]
    Symmetric,
    /// `D̃^{-1} (A + I)`; not symmetric, kept for sensitivity runs.
    Row,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Self::Symmetric => "symmetric",
            Self::Row => "row",
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Self::Symmetric),
            "row" => Ok(Self::Row),
            _ => Err(Error::InvalidArgument(format!(
                "unknown normalization '{s}' (expected symmetric|row)"
            ))),
        }
    }
}

/// The weighted propagation matrix Â, self-loops included, CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    normalization: Normalization,
}

impl NormalizedAdjacency {
    pub fn new(g: &Graph, normalization: Normalization) -> Self {
        let n = g.num_nodes();
        let aug: Vec<f64> = g.degrees().iter().map(|&d| (d + 1) as f64).collect();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(g.csr_neighbors().len() + n);
        let mut weights = Vec::with_capacity(cols.capacity());
        offsets.push(0);
        let weight = |i: usize, j: usize| match normalization {
            Normalization::Symmetric => 1.0 / (aug[i] * aug[j]).sqrt(),
            Normalization::Row => 1.0 / aug[i],
        };
        for i in 0..n {
            let mut self_done = false;
            for &j in g.neighbors(i) {
                if !self_done && j > i {
                    cols.push(i);
                    weights.push(weight(i, i));
                    self_done = true;
                }
                cols.push(j);
                weights.push(weight(i, j));
            }
            if !self_done {
                cols.push(i);
                weights.push(weight(i, i));
            }
            offsets.push(cols.len());
        }
        Self {
            num_nodes: n,
            offsets,
            cols,
            weights,
            normalization,
        }
    }

    /// Builds from raw CSR parts. Used for induced subgraphs, which keep the
    /// parent's weights.
    pub(crate) fn from_parts(
        offsets: Vec<usize>,
        cols: Vec<usize>,
        weights: Vec<f64>,
        normalization: Normalization,
    ) -> Self {
        Self {
            num_nodes: offsets.len() - 1,
            offsets,
            cols,
            weights,
            normalization,
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Column indices and weights of row `i`, sorted by column.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[s..e], &self.weights[s..e])
    }

    /// Â_ij, zero when not stored.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (cols, w) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| w[k])
    }

    pub fn csr_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for i in 0..self.num_nodes {
            let (cols, w) = self.row(i);
            for (&j, &v) in cols.iter().zip(w) {
                m.set(i, j, v);
            }
        }
        m
    }
}

/// Symmetric GCN normalization with self-loops.
pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    NormalizedAdjacency::new(g, Normalization::Symmetric)
}

/// `√(Σ_{i∈rows} Â²_ij)` for every column `j`. Duplicate row ids count once.
/// Only the CSR rows listed are visited.
pub fn column_sq_norms(adj: &NormalizedAdjacency, rows: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; adj.num_nodes()];
    let mut seen = vec![false; adj.num_nodes()];
    for &i in rows {
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        let (cols, w) = adj.row(i);
        for (&j, &a) in cols.iter().zip(w) {
            acc[j] += a * a;
        }
    }
    acc.iter_mut().for_each(|v| *v = v.sqrt());
    acc
}

/// Sparse accumulator for column couplings. Holds an `N`-length scratch
/// buffer so repeated frontier evaluations cost only the entries touched.
#[derive(Debug, Clone)]
pub struct CouplingAccumulator {
    sums: Vec<f64>,
    touched: Vec<usize>,
}

impl CouplingAccumulator {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            sums: vec![0.0; num_nodes],
            touched: Vec::new(),
        }
    }

    /// Returns `(node, coupling)` for every node adjacent to `rows`, in
    /// first-touch order, plus the number of CSR entries visited.
    /// `rows` must be distinct.
    pub fn couplings(
        &mut self,
        adj: &NormalizedAdjacency,
        rows: &[usize],
    ) -> (Vec<(usize, f64)>, usize) {
        let mut visited = 0;
        for &i in rows {
            let (cols, w) = adj.row(i);
            visited += cols.len();
            for (&j, &a) in cols.iter().zip(w) {
                if self.sums[j] == 0.0 {
                    self.touched.push(j);
                }
                self.sums[j] += a * a;
            }
        }
        let out = self
            .touched
            .drain(..)
            .map(|j| (j, std::mem::take(&mut self.sums[j]).sqrt()))
            .collect();
        (out, visited)
    }
}

/// Dense `N × d` node features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DenseMatrix);

impl FeatureMatrix {
    pub fn new(m: DenseMatrix) -> Result<Self> {
        if !m.all_finite() {
            return Err(Error::Dataset("feature matrix has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn num_nodes(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    /// `‖x(v)‖₂` per node.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.0.rows()).map(|r| self.0.row_norm(r)).collect()
    }

    /// Scales every row to unit L1 norm; all-zero rows stay zero.
    pub fn row_normalized(&self) -> Self {
        let mut m = self.0.clone();
        for r in 0..m.rows() {
            let s: f64 = m.row(r).iter().map(|v| v.abs()).sum();
            if s > 0.0 {
                m.row_mut(r).iter_mut().for_each(|v| *v /= s);
            }
        }
        Self(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelSet {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((v, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= num_classes) {
            return Err(Error::Dataset(format!(
                "node {v} has class {c}, outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn from_labels(labels: Vec<usize>) -> Self {
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Self {
            labels,
            num_classes,
        }
    }

    #[inline]
    pub fn get(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            _ => Err(Error::InvalidArgument(format!(
                "unknown split '{s}' (expected train|val|test)"
            ))),
        }
    }
}

/// Disjoint train / validation / test node sets, each sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMask {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

impl SplitMask {
    pub fn new(
        num_nodes: usize,
        mut train: Vec<usize>,
        mut val: Vec<usize>,
        mut test: Vec<usize>,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Dataset("training split is empty".into()));
        }
        let mut owner = vec![None; num_nodes];
        for (name, set) in [("train", &mut train), ("val", &mut val), ("test", &mut test)] {
            set.sort_unstable();
            for &v in set.iter() {
                if v >= num_nodes {
                    return Err(Error::Dataset(format!(
                        "{name} split contains node {v} outside [0, {num_nodes})"
                    )));
                }
                if let Some(prev) = owner[v].replace(name) {
                    return Err(Error::Dataset(format!(
                        "node {v} appears in both {prev} and {name} splits"
                    )));
                }
            }
        }
        Ok(Self { train, val, test })
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn val(&self) -> &[usize] {
        &self.val
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn get(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }

    pub fn train_mask(&self, num_nodes: usize) -> Vec<bool> {
        let mut m = vec![false; num_nodes];
        self.train.iter().for_each(|&v| m[v] = true);
        m
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: LabelSet,
    pub split: SplitMask,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches('\r').trim();
        if !trimmed.is_empty() {
            out.push((i + 1, trimmed.to_string()));
        }
    }
    Ok(out)
}

fn parse_features(path: &Path) -> Result<DenseMatrix> {
    let lines = read_lines(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, (lineno, line)) in lines.iter().enumerate() {
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => continue,
            Err(e) => return Err(Error::parse(path, *lineno, format!("bad real: {e}"))),
        };
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::parse(path, *lineno, format!("non-finite feature {v}")));
        }
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(Error::parse(
                    path,
                    *lineno,
                    format!("ragged row: {} values, expected {c}", values.len()),
                ))
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    DenseMatrix::from_vec(rows, cols.unwrap_or(0), data)
}

fn parse_labels(path: &Path, n: usize) -> Result<LabelSet> {
    let lines = read_lines(path)?;
    let mut labels = Vec::with_capacity(n);
    for (idx, (lineno, line)) in lines.iter().enumerate() {
        match line.parse::<usize>() {
            Ok(c) => labels.push(c),
            Err(_) if idx == 0 => continue,
            Err(e) => return Err(Error::parse(path, *lineno, format!("bad label '{line}': {e}"))),
        }
    }
    if labels.len() != n {
        return Err(Error::parse(
            path,
            lines.last().map_or(0, |l| l.0),
            format!("{} labels for {n} nodes", labels.len()),
        ));
    }
    Ok(LabelSet::from_labels(labels))
}

fn parse_splits(path: &Path, n: usize) -> Result<SplitMask> {
    let lines = read_lines(path)?;
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let mut v = 0;
    for (idx, (lineno, line)) in lines.iter().enumerate() {
        match line.as_str() {
            "train" => train.push(v),
            "val" => val.push(v),
            "test" => test.push(v),
            "none" => {}
            "split" if idx == 0 => continue,
            other => {
                return Err(Error::parse(
                    path,
                    *lineno,
                    format!("unknown split '{other}' (expected train|val|test|none)"),
                ))
            }
        }
        v += 1;
    }
    if v != n {
        return Err(Error::parse(
            path,
            lines.last().map_or(0, |l| l.0),
            format!("{v} split entries for {n} nodes"),
        ));
    }
    SplitMask::new(n, train, val, test).map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn parse_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let lines = read_lines(path)?;
    let mut edges = Vec::with_capacity(lines.len());
    for (idx, (lineno, line)) in lines.iter().enumerate() {
        let mut parts = line.split(',').map(str::trim);
        let pair = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => a.parse::<usize>().and_then(|a| Ok((a, b.parse()?))),
            _ => {
                return Err(Error::parse(path, *lineno, "expected two columns 'src,dst'"));
            }
        };
        let (u, v) = match pair {
            Ok(p) => p,
            Err(_) if idx == 0 => continue,
            Err(e) => return Err(Error::parse(path, *lineno, format!("bad node id: {e}"))),
        };
        for id in [u, v] {
            if id >= n {
                return Err(Error::parse(
                    path,
                    *lineno,
                    format!("node id {id} out of range [0, {n})"),
                ));
            }
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Loads `edges.csv`, `features.csv`, `labels.csv` and `splits.csv` from `dir`.
/// The node count is the number of feature rows; every other file must agree.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let features = parse_features(&dir.join("features.csv"))?;
    let n = features.rows();
    let labels = parse_labels(&dir.join("labels.csv"), n)?;
    let split = parse_splits(&dir.join("splits.csv"), n)?;
    let edges = parse_edges(&dir.join("edges.csv"), n)?;
    Ok(Dataset {
        graph: Graph::from_edges(n, edges)?,
        features: FeatureMatrix::new(features)?,
        labels,
        split,
    })
}

/// Writes a dataset in the layout `load_dataset` reads.
pub fn write_dataset(dir: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))
    };
    let mut edges = String::from("src,dst\n");
    for (i, j) in ds.graph.edges() {
        edges.push_str(&format!("{i},{j}\n"));
    }
    write("edges.csv", edges)?;
    let x = ds.features.matrix();
    let mut feats = String::new();
    for r in 0..x.rows() {
        let row: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    write("features.csv", feats)?;
    let labels: String = ds.labels.as_slice().iter().map(|c| format!("{c}\n")).collect();
    write("labels.csv", labels)?;
    let mut kind = vec!["none"; ds.graph.num_nodes()];
    ds.split.train().iter().for_each(|&v| kind[v] = "train");
    ds.split.val().iter().for_each(|&v| kind[v] = "val");
    ds.split.test().iter().for_each(|&v| kind[v] = "test");
    write("splits.csv", kind.iter().map(|k| format!("{k}\n")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn path_is_symmetrized_from_directed_lines() {
        let g = Graph::from_edges(3, [(0, 1), (2, 1)]).unwrap();
        assert_eq!(g.degrees(), &[1, 2, 1]);
        assert_eq!(g.csr_offsets(), &[0, 1, 3, 4]);
        assert_eq!(g.csr_neighbors(), &[1, 0, 2, 1]);
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn single_node_graph() {
        let g = Graph::from_edges(1, []).unwrap();
        assert_eq!(g.csr_offsets(), &[0, 0]);
        assert_eq!(g.degrees(), &[0]);
        let adj = normalize_adjacency(&g);
        assert_eq!(adj.to_dense().as_slice(), &[1.0]);
    }

    #[test]
    fn duplicates_and_self_loops_are_dropped() {
        let g = Graph::from_edges(2, [(0, 1), (1, 0), (0, 1), (1, 1)]).unwrap();
        assert_eq!(g.degrees(), &[1, 1]);
        assert!(Graph::from_edges(2, [(0, 2)]).is_err());
    }

    #[test]
    fn triangle_weights_are_one_third() {
        let adj = normalize_adjacency(&triangle());
        assert_eq!(adj.nnz(), 9);
        for i in 0..3 {
            for j in 0..3 {
                assert!((adj.weight(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn path_weights() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let adj = normalize_adjacency(&g);
        assert!((adj.weight(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((adj.weight(0, 1) - 0.40825).abs() < 1e-5);
        assert!((adj.weight(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(adj.weight(0, 2), 0.0);
        let (cols, _) = adj.row(1);
        assert_eq!(cols, &[0, 1, 2]);
    }

    #[test]
    fn row_normalization_rows_sum_to_one() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let adj = NormalizedAdjacency::new(&g, Normalization::Row);
        for i in 0..3 {
            let s: f64 = adj.row(i).1.iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn column_norms_examples() {
        let adj = normalize_adjacency(&triangle());
        for v in column_sq_norms(&adj, &[0]) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(column_sq_norms(&adj, &[]), vec![0.0; 3]);
        for v in column_sq_norms(&adj, &[0, 1, 2]) {
            assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        }
        assert_eq!(column_sq_norms(&adj, &[0, 0]), column_sq_norms(&adj, &[0]));
    }

    #[test]
    fn accumulator_matches_dense_version() {
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let adj = normalize_adjacency(&g);
        let mut acc = CouplingAccumulator::new(5);
        let (sparse, visited) = acc.couplings(&adj, &[1, 3]);
        assert_eq!(visited, 5);
        let dense = column_sq_norms(&adj, &[1, 3]);
        for (j, v) in &sparse {
            assert_eq!(*v, dense[*j]);
        }
        assert_eq!(sparse.len(), dense.iter().filter(|v| **v > 0.0).count());
        // scratch is clean for the next call
        let (again, _) = acc.couplings(&adj, &[1, 3]);
        assert_eq!(again, sparse);
    }

    #[test]
    fn split_overlap_is_rejected() {
        let err = SplitMask::new(3, vec![0, 1], vec![1], vec![]).unwrap_err();
        assert!(err.to_string().contains("node 1"));
        assert!(SplitMask::new(3, vec![], vec![1], vec![]).is_err());
    }

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn tiny_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "edges.csv", "src,dst\r\n0,1\r\n2,1\r\n");
        write(dir.path(), "features.csv", "1,0\n0,1\n0.5,0.5\n");
        write(dir.path(), "labels.csv", "0\n1\n1\n");
        write(dir.path(), "splits.csv", "train\nval\ntest\n");
        dir
    }

    #[test]
    fn loads_crlf_dataset_with_header() {
        let dir = tiny_dir();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.graph.degrees(), &[1, 2, 1]);
        assert_eq!(ds.features.dim(), 2);
        assert_eq!(ds.labels.num_classes(), 2);
        assert_eq!(ds.split.test(), &[2]);
    }

    #[test]
    fn loader_errors_name_file_and_line() {
        let dir = tiny_dir();
        write(dir.path(), "features.csv", "1,0\n0\n0.5,0.5\n");
        let msg = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("features.csv:2"), "{msg}");

        let dir = tiny_dir();
        write(dir.path(), "edges.csv", "0,1\n0,7\n");
        let msg = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("edges.csv:2") && msg.contains("out of range"), "{msg}");

        let dir = tiny_dir();
        fs::remove_file(dir.path().join("labels.csv")).unwrap();
        let msg = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("labels.csv"), "{msg}");

        let dir = tiny_dir();
        write(dir.path(), "splits.csv", "train\nbogus\ntest\n");
        let msg = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("splits.csv:2"), "{msg}");
    }

    #[test]
    fn write_then_load_round_trips() {
        let ds = load_dataset(tiny_dir().path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_dataset(out.path(), &ds).unwrap();
        let back = load_dataset(out.path()).unwrap();
        assert_eq!(back.graph, ds.graph);
        assert_eq!(back.features, ds.features);
        assert_eq!(back.split, ds.split);
    }
}
