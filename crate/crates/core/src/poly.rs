//! Polynomial dynamics and cost coefficients.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kronalg::{checked_pow, flat_index, multi_index, symmetrize_in_place};
use crate::Matrix;

/// Coordinate-list matrix. Entries are sorted by `(row, col)` with duplicates summed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoeff {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseCoeff {
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::Invalid(format!(
                    "coordinate ({r}, {c}) outside a {rows}×{cols} coefficient"
                )));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        Ok(Self {
            rows,
            cols,
            entries: merged,
        })
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }
}

/// A polynomial coefficient block (`F_p`, `G_p` or `q_pᵀ`), stored densely or
/// as coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum CoeffMatrix {
    Dense(Matrix),
    Sparse(SparseCoeff),
}

impl From<Matrix> for CoeffMatrix {
    fn from(m: Matrix) -> Self {
        CoeffMatrix::Dense(m)
    }
}

impl From<SparseCoeff> for CoeffMatrix {
    fn from(s: SparseCoeff) -> Self {
        CoeffMatrix::Sparse(s)
    }
}

impl CoeffMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            CoeffMatrix::Dense(m) => m.nrows(),
            CoeffMatrix::Sparse(s) => s.rows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            CoeffMatrix::Dense(m) => m.ncols(),
            CoeffMatrix::Sparse(s) => s.cols,
        }
    }

    /// Calls `f(row, col, value)` for each nonzero.
    pub fn for_each_nonzero(&self, mut f: impl FnMut(usize, usize, f64)) {
        match self {
            CoeffMatrix::Dense(m) => {
                for c in 0..m.ncols() {
                    for r in 0..m.nrows() {
                        let v = m[(r, c)];
                        if v != 0.0 {
                            f(r, c, v);
                        }
                    }
                }
            }
            CoeffMatrix::Sparse(s) => {
                for &(r, c, v) in &s.entries {
                    f(r, c, v);
                }
            }
        }
    }

    pub fn nonzeros(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        self.for_each_nonzero(|r, c, v| out.push((r, c, v)));
        out
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            CoeffMatrix::Dense(m) => m.clone(),
            CoeffMatrix::Sparse(s) => {
                let mut m = Matrix::zeros(s.rows, s.cols);
                for &(r, c, v) in &s.entries {
                    m[(r, c)] += v;
                }
                m
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        let mut any = false;
        self.for_each_nonzero(|_, _, _| any = true);
        !any
    }

    /// `self · x^⊗p`, accumulated into `out` (length `nrows`).
    pub fn apply_power_acc(&self, x: &[f64], p: usize, out: &mut [f64]) {
        let n = x.len();
        let mut digits = vec![0usize; p];
        self.for_each_nonzero(|r, c, v| {
            multi_index(c, n, &mut digits);
            out[r] += v * digits.iter().map(|&d| x[d]).product::<f64>();
        });
    }

    /// `∂/∂x (self · x^⊗p)`, accumulated into `jac` (`nrows × n`).
    pub fn apply_power_jacobian_acc(&self, x: &[f64], p: usize, jac: &mut Matrix) {
        let n = x.len();
        let mut digits = vec![0usize; p];
        self.for_each_nonzero(|r, c, v| {
            multi_index(c, n, &mut digits);
            for s in 0..p {
                let others: f64 = digits
                    .iter()
                    .enumerate()
                    .filter(|&(t, _)| t != s)
                    .map(|(_, &d)| x[d])
                    .product();
                jac[(r, digits[s])] += v * others;
            }
        });
    }

    /// For an input block `G_p ∈ R^{n × m n^p}`: accumulates `G_p (x^⊗p ⊗ I_m)`
    /// into `g` (`n × m`).
    pub fn input_map_acc(&self, x: &[f64], p: usize, m: usize, g: &mut Matrix) {
        let n = x.len();
        let mut digits = vec![0usize; p];
        self.for_each_nonzero(|r, col, v| {
            let (alpha, c) = (col / m, col % m);
            multi_index(alpha, n, &mut digits);
            g[(r, c)] += v * digits.iter().map(|&d| x[d]).product::<f64>();
        });
    }

    /// For an input block: accumulates `∂/∂x [G_p (x^⊗p ⊗ u)]` into `jac` (`n × n`).
    pub fn input_jacobian_acc(&self, x: &[f64], p: usize, u: &[f64], jac: &mut Matrix) {
        let n = x.len();
        let m = u.len();
        let mut digits = vec![0usize; p];
        self.for_each_nonzero(|r, col, v| {
            let (alpha, c) = (col / m, col % m);
            multi_index(alpha, n, &mut digits);
            for s in 0..p {
                let others: f64 = digits
                    .iter()
                    .enumerate()
                    .filter(|&(t, _)| t != s)
                    .map(|(_, &d)| x[d])
                    .product();
                jac[(r, digits[s])] += v * u[c] * others;
            }
        });
    }
}

/// Visits every distinct permutation of a sorted multi-index.
pub(crate) fn for_each_distinct_permutation(sorted: &[usize], mut f: impl FnMut(&[usize])) {
    let mut d = sorted.to_vec();
    loop {
        f(&d);
        // next lexicographic permutation
        let Some(i) = (1..d.len()).rev().find(|&i| d[i - 1] < d[i]) else {
            return;
        };
        let j = (i..d.len()).rev().find(|&j| d[j] > d[i - 1]).unwrap();
        d.swap(i - 1, j);
        d[i..].reverse();
    }
}

fn row_is_exactly_symmetric(q: &CoeffMatrix, n: usize, p: usize) -> bool {
    match q {
        CoeffMatrix::Dense(m) => {
            let data: Vec<f64> = m.iter().copied().collect();
            let Ok(v) = crate::kronalg::KronVector::new(data, n, p) else {
                return false;
            };
            crate::kronalg::check_symmetric(&v, 0.0)
        }
        CoeffMatrix::Sparse(s) => {
            let lookup: BTreeMap<usize, f64> = s.entries.iter().map(|&(_, c, v)| (c, v)).collect();
            let mut digits = vec![0usize; p];
            s.entries.iter().all(|&(_, c, v)| {
                multi_index(c, n, &mut digits);
                digits.sort_unstable();
                let mut ok = true;
                for_each_distinct_permutation(&digits, |d| {
                    ok &= lookup.get(&flat_index(d, n)) == Some(&v);
                });
                ok
            })
        }
    }
}

/// Symmetrizes a row-vector coefficient `qᵀ` (1 × n^p).
pub(crate) fn symmetrize_row(q: &CoeffMatrix, n: usize, p: usize) -> CoeffMatrix {
    match q {
        CoeffMatrix::Dense(m) => {
            let mut data: Vec<f64> = m.iter().copied().collect();
            symmetrize_in_place(&mut data, n, p);
            CoeffMatrix::Dense(Matrix::from_vec(1, data.len(), data))
        }
        CoeffMatrix::Sparse(s) => {
            let mut out = Vec::new();
            let mut digits = vec![0usize; p];
            for &(_, c, v) in &s.entries {
                multi_index(c, n, &mut digits);
                digits.sort_unstable();
                let mut perms = Vec::new();
                for_each_distinct_permutation(&digits, |d| perms.push(flat_index(d, n)));
                let share = v / perms.len() as f64;
                out.extend(perms.into_iter().map(|idx| (0, idx, share)));
            }
            CoeffMatrix::Sparse(SparseCoeff::new(1, s.cols, out).expect("indices in range"))
        }
    }
}

/// Coefficients of `ẋ = A x + Σ_{p≥2} F_p x^⊗p + (B + Σ_{p≥1} G_p (x^⊗p ⊗ I_m)) u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyDynamics {
    pub a: Matrix,
    /// `F_p ∈ R^{n × n^p}` keyed by `p ≥ 2`.
    pub f: BTreeMap<usize, CoeffMatrix>,
    pub b: Matrix,
    /// `G_p ∈ R^{n × m n^p}` keyed by `p ≥ 1`.
    pub g: BTreeMap<usize, CoeffMatrix>,
}

impl PolyDynamics {
    pub fn new(
        a: Matrix,
        f: BTreeMap<usize, CoeffMatrix>,
        b: Matrix,
        g: BTreeMap<usize, CoeffMatrix>,
    ) -> Result<Self> {
        let dynamics = Self { a, f, b, g };
        dynamics.validate()?;
        Ok(dynamics)
    }

    pub fn linear(a: Matrix, b: Matrix) -> Result<Self> {
        Self::new(a, BTreeMap::new(), b, BTreeMap::new())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n {
            return Err(Error::Dimension {
                context: "A columns",
                expected: n,
                actual: self.a.ncols(),
            });
        }
        if self.b.nrows() != n {
            return Err(Error::Dimension {
                context: "B rows",
                expected: n,
                actual: self.b.nrows(),
            });
        }
        let m = self.b.ncols();
        for (&p, fp) in &self.f {
            if p < 2 {
                return Err(Error::Invalid(format!("drift term F_{p}: degree must be ≥ 2")));
            }
            check_shape("F_p", fp, n, checked_pow(n, p))?;
        }
        for (&p, gp) in &self.g {
            if p < 1 {
                return Err(Error::Invalid(format!("input term G_{p}: degree must be ≥ 1")));
            }
            check_shape("G_p", gp, n, checked_pow(n, p).and_then(|v| v.checked_mul(m)))?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Highest polynomial degree in the drift or input map (at least 1).
    pub fn ell(&self) -> usize {
        let f = self.f.keys().next_back().copied().unwrap_or(1);
        let g = self.g.keys().next_back().copied().unwrap_or(1);
        f.max(g)
    }

    /// The drift `f(x)`.
    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (&self.a * nalgebra::DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect();
        for (&p, fp) in &self.f {
            fp.apply_power_acc(x, p, &mut out);
        }
        out
    }

    /// The input map `g(x) ∈ R^{n×m}`.
    pub fn input_map(&self, x: &[f64]) -> Matrix {
        let mut g = self.b.clone();
        for (&p, gp) in &self.g {
            gp.input_map_acc(x, p, self.m(), &mut g);
        }
        g
    }

    /// `f(x) + g(x) u`.
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = self.drift(x);
        let g = self.input_map(x);
        for r in 0..self.n() {
            for c in 0..self.m() {
                out[r] += g[(r, c)] * u[c];
            }
        }
        out
    }

    /// `∂/∂x [f(x) + g(x) u]` with `u` held fixed.
    pub fn state_jacobian(&self, x: &[f64], u: &[f64]) -> Matrix {
        let mut jac = self.a.clone();
        for (&p, fp) in &self.f {
            fp.apply_power_jacobian_acc(x, p, &mut jac);
        }
        for (&p, gp) in &self.g {
            gp.input_jacobian_acc(x, p, u, &mut jac);
        }
        jac
    }
}

fn check_shape(what: &'static str, c: &CoeffMatrix, rows: usize, cols: Option<usize>) -> Result<()> {
    let cols = cols.ok_or_else(|| Error::Invalid(format!("{what}: column count overflows")))?;
    if c.nrows() != rows {
        return Err(Error::Dimension {
            context: what,
            expected: rows,
            actual: c.nrows(),
        });
    }
    if c.ncols() != cols {
        return Err(Error::Dimension {
            context: what,
            expected: cols,
            actual: c.ncols(),
        });
    }
    Ok(())
}

/// Running cost `½(xᵀQx + uᵀRu + Σ_{p≥3} q_pᵀ x^⊗p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCost {
    pub q: Matrix,
    pub r: Matrix,
    /// `q_pᵀ` as `1 × n^p` row coefficients keyed by `p ≥ 3`, stored symmetric.
    pub q_poly: BTreeMap<usize, CoeffMatrix>,
}

impl PolyCost {
    /// Validates the penalties and symmetrizes every `q_p`.
    pub fn new(q: Matrix, r: Matrix, q_poly: BTreeMap<usize, CoeffMatrix>) -> Result<Self> {
        let n = q.nrows();
        let mut sym = BTreeMap::new();
        for (p, qp) in q_poly {
            if p < 3 {
                return Err(Error::Invalid(format!("state cost q_{p}: degree must be ≥ 3")));
            }
            check_shape("q_p", &qp, 1, checked_pow(n, p))?;
            if row_is_exactly_symmetric(&qp, n, p) {
                sym.insert(p, qp);
            } else {
                sym.insert(p, symmetrize_row(&qp, n, p));
            }
        }
        let cost = Self { q, r, q_poly: sym };
        cost.validate()?;
        Ok(cost)
    }

    pub fn quadratic(q: Matrix, r: Matrix) -> Result<Self> {
        Self::new(q, r, BTreeMap::new())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.nrows();
        if self.q.ncols() != n {
            return Err(Error::Dimension {
                context: "Q columns",
                expected: n,
                actual: self.q.ncols(),
            });
        }
        if self.r.nrows() != self.r.ncols() {
            return Err(Error::Dimension {
                context: "R columns",
                expected: self.r.nrows(),
                actual: self.r.ncols(),
            });
        }
        if !is_symmetric(&self.q, 1e-12) {
            return Err(Error::IndefiniteQ);
        }
        let qscale = self.q.amax().max(1.0);
        if self.q.nrows() > 0 {
            let min_eig = self.q.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-12 * qscale {
                return Err(Error::IndefiniteQ);
            }
        }
        if self.r.nrows() == 0 || !is_symmetric(&self.r, 1e-12) || self.r.clone().cholesky().is_none() {
            return Err(Error::IndefiniteR);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    /// Integrand `½(xᵀQx + uᵀRu + Σ q_pᵀ x^⊗p)`.
    pub fn running(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut total = quad_form(&self.q, x) + quad_form(&self.r, u);
        for (&p, qp) in &self.q_poly {
            let mut acc = [0.0];
            qp.apply_power_acc(x, p, &mut acc);
            total += acc[0];
        }
        0.5 * total
    }

    /// Gradient of the integrand with respect to `x` and `u`.
    pub fn running_gradient(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut gx: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| self.q[(i, j)] * x[j]).sum())
            .collect();
        let mut jac = Matrix::zeros(1, n);
        for (&p, qp) in &self.q_poly {
            qp.apply_power_jacobian_acc(x, p, &mut jac);
        }
        for i in 0..n {
            gx[i] += 0.5 * jac[(0, i)];
        }
        let m = u.len();
        let gu = (0..m)
            .map(|i| (0..m).map(|j| self.r[(i, j)] * u[j]).sum())
            .collect();
        (gx, gu)
    }

    /// Highest degree of the polynomial state penalty (2 when only `Q` is present).
    pub fn lambda(&self) -> usize {
        self.q_poly.keys().next_back().copied().unwrap_or(2)
    }
}

pub(crate) fn quad_form(m: &Matrix, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += x[i] * m[(i, j)] * x[j];
        }
    }
    s
}

pub(crate) fn is_symmetric(m: &Matrix, rel_tol: f64) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    m.nrows() == m.ncols()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_permutations_of_multiset() {
        let mut seen = Vec::new();
        for_each_distinct_permutation(&[0, 0, 1], |d| seen.push(d.to_vec()));
        assert_eq!(seen, vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
        let mut count = 0;
        for_each_distinct_permutation(&[0, 1, 2, 3], |_| count += 1);
        assert_eq!(count, 24);
    }

    #[test]
    fn sparse_and_dense_symmetrization_agree() {
        let n = 3;
        let entries = vec![(0, 5, 1.0), (0, 14, -2.0), (0, 26, 0.5)];
        let sparse = CoeffMatrix::Sparse(SparseCoeff::new(1, 27, entries).unwrap());
        let dense = CoeffMatrix::Dense(sparse.to_dense());
        let a = symmetrize_row(&sparse, n, 3).to_dense();
        let b = symmetrize_row(&dense, n, 3).to_dense();
        assert!((a - b).amax() < 1e-15);
    }

    #[test]
    fn sparse_merges_duplicates_and_checks_bounds() {
        let s = SparseCoeff::new(2, 2, vec![(1, 1, 1.0), (0, 0, 2.0), (1, 1, 0.5)]).unwrap();
        assert_eq!(s.entries(), &[(0, 0, 2.0), (1, 1, 1.5)]);
        assert!(SparseCoeff::new(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn cost_rejects_indefinite_r() {
        let q = Matrix::identity(2, 2);
        let r = Matrix::from_element(1, 1, -1.0);
        assert_eq!(PolyCost::quadratic(q, r).unwrap_err(), Error::IndefiniteR);
    }

    #[test]
    fn dynamics_rejects_bad_shapes() {
        let mut f = BTreeMap::new();
        f.insert(2, CoeffMatrix::Dense(Matrix::zeros(2, 3)));
        let err = PolyDynamics::new(Matrix::zeros(2, 2), f, Matrix::zeros(2, 1), BTreeMap::new());
        assert!(matches!(err, Err(Error::Dimension { expected: 4, actual: 3, .. })));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let n = 2;
        let mut f = BTreeMap::new();
        f.insert(2, CoeffMatrix::Dense(Matrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 0.3, 0.0])));
        f.insert(3, CoeffMatrix::Sparse(SparseCoeff::new(2, 8, vec![(0, 7, 2.0), (1, 1, -0.4)]).unwrap()));
        let mut g = BTreeMap::new();
        g.insert(1, CoeffMatrix::Dense(Matrix::from_row_slice(2, 2, &[0.7, -0.1, 0.2, 1.3])));
        let dynamics = PolyDynamics::new(
            Matrix::from_row_slice(2, 2, &[-1.0, 0.4, 0.0, -2.0]),
            f,
            Matrix::from_row_slice(2, 1, &[1.0, 0.5]),
            g,
        )
        .unwrap();
        let x = [0.3, -0.7];
        let u = [0.9];
        let jac = dynamics.state_jacobian(&x, &u);
        let h = 1e-6;
        for j in 0..n {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fp = dynamics.rhs(&xp, &u);
            let fm = dynamics.rhs(&xm, &u);
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - jac[(i, j)]).abs() < 1e-8);
            }
        }
    }
}
