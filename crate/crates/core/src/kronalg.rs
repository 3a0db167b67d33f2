//! Kronecker-product primitives on dense coefficient vectors.
//!
//! Multi-index convention: for a vector of order `k` over base dimension `n`,
//! the entry for multi-index `(i_1, …, i_k)` lives at
//! `i_1·n^{k-1} + … + i_{k-1}·n + i_k`, so the last factor varies fastest and
//! `(a ⊗ b)[i·len(b) + j] = a[i]·b[j]`. This is the column-major `vec`
//! convention, so `vec(A)` for `A ∈ R^{p×q}` is an order-2 vector whose slow
//! index is the column.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{AddAssign, Mul};

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::Matrix;

/// `n^k`, or `None` on overflow.
pub fn checked_pow(n: usize, k: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..k {
        acc = acc.checked_mul(n)?;
    }
    Some(acc)
}

pub(crate) fn pow(n: usize, k: usize) -> usize {
    checked_pow(n, k).expect("n^k overflows usize")
}

/// Coefficient vector of length `n^k` carrying its base dimension and order.
#[derive(Debug, Clone, PartialEq)]
pub struct KronVector {
    data: Vec<f64>,
    n: usize,
    k: usize,
}

impl KronVector {
    pub fn new(data: Vec<f64>, n: usize, k: usize) -> Result<Self> {
        let expected = checked_pow(n, k).ok_or_else(|| {
            Error::Invalid(alloc::format!("n^k overflows for n={n}, k={k}"))
        })?;
        if data.len() != expected {
            return Err(Error::Dimension {
                context: "KronVector::new",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { data, n, k })
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            data: vec![0.0; pow(n, k)],
            n,
            k,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Value of `selfᵀ y^⊗k`.
    pub fn contract_power(&self, y: &[f64]) -> f64 {
        let p = kron_power(y, self.k);
        dot(&self.data, p.as_slice())
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.data)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    num_traits::Float::sqrt(a.iter().map(|v| v * v).sum::<f64>())
}

/// Kronecker product of two vectors.
pub fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &ai in a {
        out.extend(b.iter().map(|&bj| ai * bj));
    }
    out
}

/// `x ⊗ … ⊗ x` with `k` factors; `k = 0` gives the scalar `[1]`.
pub fn kron_power(x: &[f64], k: usize) -> KronVector {
    let mut acc = vec![1.0];
    for _ in 0..k {
        acc = kron_vec(&acc, x);
    }
    KronVector {
        data: acc,
        n: x.len(),
        k,
    }
}

/// Writes the base-`n` digits of `idx` (most significant first) into `digits`.
pub fn multi_index(mut idx: usize, n: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = idx % n;
        idx /= n;
    }
}

/// Inverse of [`multi_index`].
pub fn flat_index(digits: &[usize], n: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * n + d)
}

/// The perfect shuffle `S_{q,p}`: the permutation taking `vec(A)` to `vec(Aᵀ)`
/// for `A ∈ R^{p×q}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShuffleSpec {
    pub q: usize,
    pub p: usize,
}

impl ShuffleSpec {
    pub fn new(q: usize, p: usize) -> Self {
        Self { q, p }
    }

    /// The shuffle that undoes this one.
    pub fn inverse(self) -> Self {
        Self {
            q: self.p,
            p: self.q,
        }
    }
}

pub fn apply_shuffle(spec: ShuffleSpec, v: &[f64]) -> Result<Vec<f64>> {
    let ShuffleSpec { q, p } = spec;
    if v.len() != p * q {
        return Err(Error::Dimension {
            context: "apply_shuffle",
            expected: p * q,
            actual: v.len(),
        });
    }
    // A is p×q column-major: A[i, j] = v[i + p j]; Aᵀ[j, i] sits at j + q i.
    let mut out = vec![0.0; v.len()];
    for j in 0..q {
        for i in 0..p {
            out[j + q * i] = v[i + p * j];
        }
    }
    Ok(out)
}

const FACTORIAL: [u64; 21] = {
    let mut f = [1u64; 21];
    let mut i = 1;
    while i < 21 {
        f[i] = f[i - 1] * i as u64;
        i += 1;
    }
    f
};

/// Number of distinct permutations of a sorted multi-index.
fn orbit_size(sorted: &[usize]) -> u64 {
    let mut size = FACTORIAL[sorted.len()];
    let mut run = 1;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            size /= FACTORIAL[run];
            run = 1;
        }
    }
    size / FACTORIAL[run]
}

fn sort_small(d: &mut [usize]) {
    for i in 1..d.len() {
        let mut j = i;
        while j > 0 && d[j - 1] > d[j] {
            d.swap(j - 1, j);
            j -= 1;
        }
    }
}

/// Odometer increment of a multi-index; returns false after the last index.
fn advance(digits: &mut [usize], n: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < n {
            return true;
        }
        *d = 0;
    }
    false
}

/// Replaces `data` (order `k` over dimension `n`) by its symmetric part: every
/// entry becomes the mean over its permutation orbit.
///
/// Works in place. The canonical (sorted) representative of an orbit is its
/// smallest flat index, so one ascending pass accumulates orbit sums into the
/// representative and a second pass redistributes the means.
pub fn symmetrize_in_place(data: &mut [f64], n: usize, k: usize) {
    debug_assert_eq!(data.len(), pow(n, k));
    if k <= 1 || data.is_empty() {
        return;
    }
    assert!(k <= 20, "symmetrization supports order ≤ 20");
    let mut digits = vec![0usize; k];
    let mut sorted = vec![0usize; k];
    let mut idx = 0;
    loop {
        sorted.copy_from_slice(&digits);
        sort_small(&mut sorted);
        let canon = flat_index(&sorted, n);
        if canon != idx {
            data[canon] += data[idx];
        }
        idx += 1;
        if !advance(&mut digits, n) {
            break;
        }
    }
    digits.iter_mut().for_each(|d| *d = 0);
    idx = 0;
    loop {
        sorted.copy_from_slice(&digits);
        sort_small(&mut sorted);
        let canon = flat_index(&sorted, n);
        if canon == idx {
            data[idx] /= orbit_size(&sorted) as f64;
        } else {
            data[idx] = data[canon];
        }
        idx += 1;
        if !advance(&mut digits, n) {
            break;
        }
    }
}

/// The unique symmetric coefficient defining the same homogeneous polynomial.
pub fn symmetrize(v: &KronVector) -> KronVector {
    let mut out = v.clone();
    symmetrize_in_place(&mut out.data, v.n, v.k);
    out
}

/// Swaps modes `s` and `s + 1` of an order-`k` tensor.
fn swap_adjacent_modes(v: &[f64], n: usize, k: usize, s: usize) -> Vec<f64> {
    let left = pow(n, s);
    let right = pow(n, k - s - 2);
    let mut out = vec![0.0; v.len()];
    for l in 0..left {
        for a in 0..n {
            for b in 0..n {
                let src = ((l * n + a) * n + b) * right;
                let dst = ((l * n + b) * n + a) * right;
                out[dst..dst + right].copy_from_slice(&v[src..src + right]);
            }
        }
    }
    out
}

/// True when `v` is invariant under every split shuffle `S_{n^j, n^i}`
/// (`i + j = k`) and under every adjacent mode transposition, to `tol` in the
/// max norm. Adjacent transpositions generate the symmetric group, so the
/// second family makes the check exact rather than a sample.
pub fn check_symmetric(v: &KronVector, tol: f64) -> bool {
    let (n, k) = (v.n, v.k);
    if k <= 1 {
        return true;
    }
    let within = |w: &[f64]| {
        v.data
            .iter()
            .zip(w)
            .all(|(a, b)| (a - b).abs() <= tol)
    };
    for i in 1..k {
        let spec = ShuffleSpec::new(pow(n, k - i), pow(n, i));
        let w = apply_shuffle(spec, &v.data).expect("length n^k by construction");
        if !within(&w) {
            return false;
        }
    }
    (0..k - 1).all(|s| within(&swap_adjacent_modes(&v.data, n, k, s)))
}

/// `dst[l, o, r] += Σ_i mat(o, i) · src[l, i, r]`, the mode product on the
/// middle axis of a `(left, n_in, right)` tensor. `mat` is row-major
/// `n_out × n_in`.
pub(crate) fn mode_product_acc<T>(
    src: &[T],
    left: usize,
    n_in: usize,
    right: usize,
    mat: &[T],
    n_out: usize,
    dst: &mut [T],
) where
    T: Copy + Zero + AddAssign + Mul<Output = T>,
{
    debug_assert_eq!(src.len(), left * n_in * right);
    debug_assert_eq!(dst.len(), left * n_out * right);
    debug_assert_eq!(mat.len(), n_out * n_in);
    for l in 0..left {
        let s_block = &src[l * n_in * right..(l + 1) * n_in * right];
        let d_block = &mut dst[l * n_out * right..(l + 1) * n_out * right];
        for o in 0..n_out {
            let d_row = &mut d_block[o * right..(o + 1) * right];
            for i in 0..n_in {
                let c = mat[o * n_in + i];
                if c.is_zero() {
                    continue;
                }
                let s_row = &s_block[i * right..(i + 1) * right];
                for (d, &s) in d_row.iter_mut().zip(s_row) {
                    *d += c * s;
                }
            }
        }
    }
}

/// Row-major copy of a matrix.
pub(crate) fn row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `ℒ_k(A)ᵀ v` where `ℒ_k(A) = Σ_s I ⊗ … ⊗ A ⊗ … ⊗ I` (A in position s),
/// evaluated as one mode product per summand.
pub fn apply_kway_lyapunov_transpose(a: &Matrix, v: &KronVector) -> Result<KronVector> {
    let n = v.n;
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension {
            context: "apply_kway_lyapunov_transpose",
            expected: n,
            actual: a.nrows(),
        });
    }
    let at = row_major(&a.transpose());
    let mut out = vec![0.0; v.len()];
    for s in 0..v.k {
        let left = pow(n, s);
        let right = pow(n, v.k - s - 1);
        mode_product_acc(&v.data, left, n, right, &at, n, &mut out);
    }
    Ok(KronVector {
        data: out,
        n,
        k: v.k,
    })
}
