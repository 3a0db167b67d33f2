//! JSON model files.
//!
//! ```json
//! { "n": 2, "m": 1,
//!   "A": [[0, 1], [-1, 0]],
//!   "F": { "2": { "coords": [[0, 3, 0.5]] } },
//!   "B": [[0], [1]],
//!   "G": { "1": { "dense": [[0, 0], [1, 0]] } },
//!   "Q": [[1, 0], [0, 1]], "R": [[1]],
//!   "q": { "4": { "coords": [[0, 0, 1.0]] } },
//!   "meta": {} }
//! ```
//!
//! Dense matrices are row-major nested arrays. Polynomial blocks are either
//! `coords` lists of `[row, col, value]` against the Kronecker column index
//! (last factor fastest) or `dense` row-major arrays.

use std::collections::BTreeMap;
use std::path::Path;

use ppr_core::{CoeffMatrix, Matrix, PolyCost, PolyDynamics, SparseCoeff};
use serde::{Deserialize, Serialize};

use crate::IoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffBlock {
    Coords { coords: Vec<(usize, usize, f64)> },
    Dense { dense: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "F", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub f: BTreeMap<String, CoeffBlock>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "G", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub g: BTreeMap<String, CoeffBlock>,
    #[serde(rename = "Q")]
    pub q_mat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    pub r_mat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "q", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub q_poly: BTreeMap<String, CoeffBlock>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

fn dense(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix, IoError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(IoError::Format(format!("{name} must be {nrows}×{ncols}")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn block(name: &str, key: &str, blk: &CoeffBlock, nrows: usize, ncols: Option<usize>) -> Result<(usize, CoeffMatrix), IoError> {
    let p: usize = key
        .parse()
        .map_err(|_| IoError::Format(format!("{name}: degree key {key:?} is not an integer")))?;
    let ncols = ncols.ok_or_else(|| IoError::Format(format!("{name}_{key}: size overflows")))?;
    let coeff = match blk {
        CoeffBlock::Coords { coords } => CoeffMatrix::Sparse(
            SparseCoeff::new(nrows, ncols, coords.clone()).map_err(|e| IoError::Format(format!("{name}_{key}: {e}")))?,
        ),
        CoeffBlock::Dense { dense: rows } => CoeffMatrix::Dense(dense(&format!("{name}_{key}"), rows, nrows, ncols)?),
    };
    Ok((p, coeff))
}

fn to_block(c: &CoeffMatrix) -> CoeffBlock {
    match c {
        CoeffMatrix::Sparse(s) => CoeffBlock::Coords {
            coords: s.entries().to_vec(),
        },
        CoeffMatrix::Dense(m) => CoeffBlock::Dense { dense: to_rows(m) },
    }
}

fn pow(n: usize, p: usize) -> Option<usize> {
    n.checked_pow(p as u32)
}

impl ModelFile {
    pub fn from_problem(dynamics: &PolyDynamics, cost: &PolyCost, meta: serde_json::Value) -> Self {
        Self {
            n: dynamics.n(),
            m: dynamics.m(),
            a: to_rows(&dynamics.a),
            f: dynamics.f.iter().map(|(p, c)| (p.to_string(), to_block(c))).collect(),
            b: to_rows(&dynamics.b),
            g: dynamics.g.iter().map(|(p, c)| (p.to_string(), to_block(c))).collect(),
            q_mat: Some(to_rows(&cost.q)),
            r_mat: Some(to_rows(&cost.r)),
            q_poly: cost.q_poly.iter().map(|(p, c)| (p.to_string(), to_block(c))).collect(),
            meta,
        }
    }

    pub fn to_problem(&self) -> Result<(PolyDynamics, PolyCost), IoError> {
        let (n, m) = (self.n, self.m);
        let a = dense("A", &self.a, n, n)?;
        let b = dense("B", &self.b, n, m)?;
        let mut f = BTreeMap::new();
        for (key, blk) in &self.f {
            let p: usize = key.parse().unwrap_or(0);
            let (p, c) = block("F", key, blk, n, pow(n, p))?;
            f.insert(p, c);
        }
        let mut g = BTreeMap::new();
        for (key, blk) in &self.g {
            let p: usize = key.parse().unwrap_or(0);
            let (p, c) = block("G", key, blk, n, pow(n, p).and_then(|v| v.checked_mul(m)))?;
            g.insert(p, c);
        }
        let q = dense("Q", self.q_mat.as_ref().ok_or_else(|| IoError::Format("missing Q".into()))?, n, n)?;
        let r = dense("R", self.r_mat.as_ref().ok_or_else(|| IoError::Format("missing R".into()))?, m, m)?;
        let mut q_poly = BTreeMap::new();
        for (key, blk) in &self.q_poly {
            let p: usize = key.parse().unwrap_or(0);
            let (p, c) = block("q", key, blk, 1, pow(n, p))?;
            q_poly.insert(p, c);
        }
        let dynamics = PolyDynamics::new(a, f, b, g)?;
        let cost = PolyCost::new(q, r, q_poly)?;
        Ok((dynamics, cost))
    }
}

pub fn load_model(path: &Path) -> Result<(PolyDynamics, PolyCost), IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    file.to_problem()
}

pub fn save_model(path: &Path, dynamics: &PolyDynamics, cost: &PolyCost, meta: serde_json::Value) -> Result<(), IoError> {
    let file = ModelFile::from_problem(dynamics, cost, meta);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}
