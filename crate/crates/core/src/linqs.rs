//! Converter for the LINQS citation format (`<name>.content` + `<name>.cites`).
//!
//! A content line is `id f_1 ... f_d class`, tab or space separated. A cites
//! line is `cited citing`. Citations that mention an id missing from the
//! content file are dropped and counted.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{Dataset, FeatureMatrix, Graph, LabelSet, SplitMask};

/// How to carve the node set: `val` and `test` nodes are drawn at random,
/// every remaining node trains.
#[derive(Debug, Clone, Copy)]
pub struct RandomSplit {
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for RandomSplit {
    fn default() -> Self {
        Self {
            val: 500,
            test: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinqsImport {
    pub dataset: Dataset,
    /// Class names in label order.
    pub classes: Vec<String>,
    /// Original paper ids in node order.
    pub ids: Vec<String>,
    pub dropped_citations: usize,
}

pub fn parse_linqs(content: &str, cites: &str, split: RandomSplit, content_path: &Path, cites_path: &Path) -> Result<LinqsImport> {
    let mut ids = Vec::new();
    let mut raw_labels = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (i, line) in content.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 3 {
            return Err(Error::parse(content_path, i + 1, "expected id, features and class"));
        }
        let feats = &toks[1..toks.len() - 1];
        match dim {
            None => dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(Error::parse(content_path, i + 1, format!("{} features, expected {d}", feats.len())));
            }
            _ => {}
        }
        for t in feats {
            data.push(t.parse::<f64>().map_err(|_| Error::parse(content_path, i + 1, format!("bad feature '{t}'")))?);
        }
        ids.push(toks[0].to_string());
        raw_labels.push(toks[toks.len() - 1].to_string());
    }
    let n = ids.len();
    if n == 0 {
        return Err(Error::Dataset(format!("{} has no nodes", content_path.display())));
    }
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    if index.len() != n {
        return Err(Error::Dataset(format!("{} repeats a node id", content_path.display())));
    }

    let classes: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = raw_labels
        .iter()
        .map(|c| classes.binary_search(c).expect("class was collected"))
        .collect();

    let mut edges = Vec::new();
    let mut dropped = 0;
    for (i, line) in cites.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[..] {
            [] => {}
            [a, b] => match (index.get(a), index.get(b)) {
                (Some(&u), Some(&v)) if u != v => edges.push((u, v)),
                (Some(_), Some(_)) => {}
                _ => dropped += 1,
            },
            _ => return Err(Error::parse(cites_path, i + 1, "expected two ids")),
        }
    }

    if split.val + split.test > n {
        return Err(Error::InvalidArgument(format!(
            "split asks for {} val + {} test nodes but there are only {n}",
            split.val, split.test
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split.seed));
    let mut test = order[..split.test].to_vec();
    let mut val = order[split.test..split.test + split.val].to_vec();
    let mut train = order[split.test + split.val..].to_vec();
    for s in [&mut train, &mut val, &mut test] {
        s.sort_unstable();
    }

    let dataset = Dataset {
        graph: Graph::from_edges(n, edges)?,
        features: FeatureMatrix::new(DenseMatrix::from_vec(n, dim.unwrap_or(0), data)?)?,
        labels: LabelSet::new(labels, classes.len())?,
        split: SplitMask::new(n, train, val, test)?,
    };
    Ok(LinqsImport {
        dataset,
        classes,
        ids,
        dropped_citations: dropped,
    })
}

pub fn import_linqs(content: impl AsRef<Path>, cites: impl AsRef<Path>, split: RandomSplit) -> Result<LinqsImport> {
    let (cp, ep) = (content.as_ref(), cites.as_ref());
    let c = fs::read_to_string(cp).map_err(|e| Error::io(cp, e))?;
    let e = fs::read_to_string(ep).map_err(|e| Error::io(ep, e))?;
    parse_linqs(&c, &e, split, cp, ep)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONTENT: &str = "p1\t1\t0\tA\np2\t0\t1\tB\np3\t1\t1\tA\np4\t0\t0\tC\n";
    const CITES: &str = "p1\tp2\np2\tp1\np3\tp1\nzz\tp4\np4\tp4\n";

    fn split(val: usize, test: usize) -> RandomSplit {
        RandomSplit { val, test, seed: 9 }
    }

    #[test]
    fn parses_nodes_edges_and_classes() {
        let p = Path::new("x");
        let imp = parse_linqs(CONTENT, CITES, split(1, 1), p, p).unwrap();
        let ds = &imp.dataset;
        assert_eq!(ds.graph.num_nodes(), 4);
        assert_eq!(ds.graph.num_edges(), 2);
        assert_eq!(imp.dropped_citations, 1);
        assert_eq!(imp.classes, ["A", "B", "C"]);
        assert_eq!(ds.labels.as_slice(), &[0, 1, 0, 2]);
        assert_eq!(ds.features.dim(), 2);
        assert_eq!((ds.split.train().len(), ds.split.val().len(), ds.split.test().len()), (2, 1, 1));
    }

    #[test]
    fn split_is_seeded() {
        let p = Path::new("x");
        let a = parse_linqs(CONTENT, CITES, split(1, 2), p, p).unwrap();
        let b = parse_linqs(CONTENT, CITES, split(1, 2), p, p).unwrap();
        assert_eq!(a.dataset.split, b.dataset.split);
    }

    #[test]
    fn rejects_bad_input() {
        let p = Path::new("x");
        assert!(parse_linqs("p1\t1\tA\np2\t1\t0\tB\n", "", split(0, 0), p, p).is_err());
        assert!(parse_linqs(CONTENT, "p1 p2 p3\n", split(0, 0), p, p).is_err());
        assert!(parse_linqs(CONTENT, CITES, split(3, 2), p, p).is_err());
    }
}
