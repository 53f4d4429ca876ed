//! Plain-text parameter files.
//!
//! ```text
//! activation relu
//! dropout 0.5
//! layer 1 3 2
//! 0.1 -0.2
//! ...
//! ```
//!
//! Each `layer l rows cols` header is followed by `rows` lines of `cols`
//! reals. Values use shortest round-trip formatting, so a save/load cycle is
//! exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::engine::{Activation, GnnParameters};
use crate::error::{Error, Result};

pub fn params_to_string(params: &GnnParameters) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "activation {}", params.activation().name());
    let _ = writeln!(out, "dropout {}", params.dropout());
    for (l, w) in params.weights().iter().enumerate() {
        let _ = writeln!(out, "layer {} {} {}", l + 1, w.rows(), w.cols());
        for r in 0..w.rows() {
            let row: Vec<String> = w.row(r).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

pub fn save_params(path: impl AsRef<Path>, params: &GnnParameters) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, params_to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn parse_params(text: &str, source: &Path) -> Result<GnnParameters> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut activation = None;
    let mut dropout = 0.0;
    let mut weights: Vec<DenseMatrix> = Vec::new();
    while let Some((line, text)) = lines.next() {
        let mut parts = text.split_whitespace();
        let bad = |msg: String| Error::parse(source, line, msg);
        match parts.next() {
            Some("activation") => {
                let name = parts.next().ok_or_else(|| bad("missing activation name".into()))?;
                activation = Some(name.parse::<Activation>().map_err(|e| bad(e.to_string()))?);
            }
            Some("dropout") => {
                dropout = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad dropout value".into()))?;
            }
            Some("layer") => {
                let nums: Vec<usize> = parts
                    .map(|s| s.parse().map_err(|_| bad(format!("bad layer header field '{s}'"))))
                    .collect::<Result<_>>()?;
                let [l, rows, cols] = nums[..] else {
                    return Err(bad("layer header needs index, rows and cols".into()));
                };
                if l != weights.len() + 1 {
                    return Err(bad(format!("expected layer {}, found {l}", weights.len() + 1)));
                }
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (line, text) = lines
                        .next()
                        .ok_or_else(|| bad(format!("layer {l} ends early")))?;
                    let before = data.len();
                    for tok in text.split_whitespace() {
                        data.push(tok.parse::<f64>().map_err(|_| {
                            Error::parse(source, line, format!("bad real '{tok}'"))
                        })?);
                    }
                    if data.len() - before != cols {
                        return Err(Error::parse(
                            source,
                            line,
                            format!("expected {cols} values, found {}", data.len() - before),
                        ));
                    }
                }
                weights.push(DenseMatrix::from_vec(rows, cols, data)?);
            }
            Some(other) => return Err(bad(format!("unexpected '{other}'"))),
            None => {}
        }
    }
    let activation = activation.ok_or_else(|| Error::parse(source, 1, "missing activation line"))?;
    GnnParameters::new(weights, activation, dropout)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<GnnParameters> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_params(&text, path)
}
