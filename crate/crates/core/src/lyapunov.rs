//! Riccati and k-way Lyapunov solvers.
//!
//! The k-way system `ℒ_k(A)ᵀ v = b` is solved on the Schur form of `A`. With
//! `A = Q T Qᴴ`, the operator becomes `W^{⊗k} ℒ_k(Tᵀ) (Wᴴ)^{⊗k}` for `W = Q̄`;
//! `ℒ_k(Tᵀ)` is lower triangular in the multi-index order, so it is inverted
//! by a recursive block forward substitution costing `O(k n^{k+1})`.
//!
//! When the real Schur form is already triangular (all eigenvalues real) the
//! whole solve stays in real arithmetic and runs in place; otherwise it runs on
//! the complex Schur form and the imaginary part of the result is checked and
//! discarded.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, Schur};
use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::kronalg::{apply_kway_lyapunov_transpose, norm_inf, pow, KronVector};
use crate::Matrix;

/// Eigenvalues with real part at or above this are treated as non-Hurwitz.
pub const HURWITZ_THRESHOLD: f64 = -1e-10;

type C64 = Complex<f64>;

/// Largest real part over the spectrum of `a`.
pub fn spectral_abscissa(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.complex_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |m, l| m.max(l.re))
}

pub fn is_hurwitz(a: &Matrix) -> bool {
    spectral_abscissa(a) < HURWITZ_THRESHOLD
}

#[derive(Debug, Clone)]
enum SchurForm {
    /// Row-major lower-triangular `Tᵀ` and the orthogonal factor (row-major `Qᵀ` and `Q`).
    Real {
        lower: Vec<f64>,
        qt: Vec<f64>,
        q: Vec<f64>,
    },
    /// Row-major lower-triangular `Tᵀ` and row-major `Qᵀ` and `Q̄`.
    Complex {
        lower: Vec<C64>,
        qt: Vec<C64>,
        qbar: Vec<C64>,
    },
}

/// Factorized k-way Lyapunov operator `ℒ_k(A)ᵀ` for a fixed Hurwitz `A`.
///
/// The Schur factorization is computed once and reused for every order `k`.
#[derive(Debug, Clone)]
pub struct KwaySolver {
    a: Matrix,
    n: usize,
    form: SchurForm,
    tol: f64,
}

fn row_major_of<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

impl KwaySolver {
    /// Factorizes `a`; fails with [`Error::NotHurwitz`] when the spectral
    /// abscissa is not below [`HURWITZ_THRESHOLD`].
    pub fn new(a: &Matrix) -> Result<Self> {
        Self::with_tolerance(a, 1e-10)
    }

    pub fn with_tolerance(a: &Matrix, tol: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                context: "KwaySolver",
                expected: n,
                actual: a.ncols(),
            });
        }
        let abscissa = spectral_abscissa(a);
        if abscissa >= HURWITZ_THRESHOLD {
            return Err(Error::NotHurwitz { abscissa });
        }
        let (q, t) = Schur::new(a.clone()).unpack();
        let scale = t.amax().max(f64::MIN_POSITIVE);
        let quasi = (0..n.saturating_sub(1)).any(|i| t[(i + 1, i)].abs() > 1e-14 * scale);
        let form = if !quasi {
            let mut lower = row_major_of(&t.transpose());
            // strip the numerically-zero subdiagonal of T (superdiagonal of Tᵀ)
            for i in 0..n {
                for j in i + 1..n {
                    lower[i * n + j] = 0.0;
                }
            }
            SchurForm::Real {
                lower,
                qt: row_major_of(&q.transpose()),
                q: row_major_of(&q),
            }
        } else {
            let ac: DMatrix<C64> = a.map(|v| C64::new(v, 0.0));
            let (qc, tc) = Schur::new(ac).unpack();
            let mut lower = row_major_of(&tc.transpose());
            for i in 0..n {
                for j in i + 1..n {
                    lower[i * n + j] = C64::zero();
                }
            }
            SchurForm::Complex {
                lower,
                qt: row_major_of(&qc.transpose()),
                qbar: row_major_of(&qc.map(|z| z.conj())),
            }
        };
        Ok(Self {
            a: a.clone(),
            n,
            form,
            tol,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    /// True when the solve runs in real arithmetic.
    pub fn is_real(&self) -> bool {
        matches!(self.form, SchurForm::Real { .. })
    }

    /// Solves `ℒ_k(A)ᵀ v = b` in place without refinement or residual check.
    pub fn solve_in_place(&self, data: &mut [f64], k: usize) -> Result<()> {
        let n = self.n;
        if data.len() != pow(n, k) {
            return Err(Error::Dimension {
                context: "KwaySolver::solve_in_place",
                expected: pow(n, k),
                actual: data.len(),
            });
        }
        if k == 0 {
            return Err(Error::Invalid("k-way solve needs order ≥ 1".into()));
        }
        match &self.form {
            SchurForm::Real { lower, qt, q } => {
                apply_all_modes_in_place(data, n, k, qt);
                forward_substitute(lower, n, k, 0.0, data);
                apply_all_modes_in_place(data, n, k, q);
            }
            SchurForm::Complex { lower, qt, qbar } => {
                let mut buf: Vec<C64> = data.iter().map(|&v| C64::new(v, 0.0)).collect();
                apply_all_modes_in_place(&mut buf, n, k, qt);
                forward_substitute(lower, n, k, C64::zero(), &mut buf);
                apply_all_modes_in_place(&mut buf, n, k, qbar);
                let real_max = buf.iter().fold(0.0_f64, |m, z| m.max(z.re.abs()));
                let imag_max = buf.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
                if imag_max > 1e-10 * real_max.max(f64::MIN_POSITIVE) {
                    return Err(Error::ComplexSolution { imag: imag_max });
                }
                for (d, z) in data.iter_mut().zip(&buf) {
                    *d = z.re;
                }
            }
        }
        Ok(())
    }

    /// Solves `ℒ_k(A)ᵀ v = b`, applies one pass of iterative refinement, and
    /// verifies the relative residual against the solver tolerance.
    pub fn solve(&self, b: &KronVector) -> Result<KronVector> {
        let (v, _) = self.solve_with_residual(b)?;
        Ok(v)
    }

    /// Like [`solve`](Self::solve) but also returns the achieved relative residual.
    pub fn solve_with_residual(&self, b: &KronVector) -> Result<(KronVector, f64)> {
        if b.n() != self.n {
            return Err(Error::Dimension {
                context: "KwaySolver::solve",
                expected: self.n,
                actual: b.n(),
            });
        }
        let k = b.order();
        let mut v = b.clone();
        self.solve_in_place(v.as_mut_slice(), k)?;

        let mut r = self.residual(&v, b)?;
        let mut delta = r.clone();
        self.solve_in_place(&mut delta, k)?;
        for (vi, di) in v.as_mut_slice().iter_mut().zip(&delta) {
            *vi += di;
        }
        r = self.residual(&v, b)?;
        let bnorm = b.norm_inf();
        let rel = if bnorm == 0.0 {
            norm_inf(&r)
        } else {
            norm_inf(&r) / bnorm
        };
        if !(rel <= self.tol) {
            return Err(Error::Residual {
                order: k,
                residual: rel,
                tol: self.tol,
            });
        }
        Ok((v, rel))
    }

    /// Solves in place without extra full-size buffers. The relative residual is
    /// checked at `samples` entries chosen by `seed` (and at every entry when
    /// the system has no more than `samples` of them).
    pub fn solve_lean(&self, data: &mut [f64], k: usize, samples: usize, seed: u64) -> Result<f64> {
        use rand::{Rng, SeedableRng};
        let len = data.len();
        let bnorm = norm_inf(data);
        let picks: Vec<(usize, f64)> = if len <= samples {
            data.iter().copied().enumerate().collect()
        } else {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..samples)
                .map(|_| {
                    let i = rng.gen_range(0..len);
                    (i, data[i])
                })
                .collect()
        };
        self.solve_in_place(data, k)?;
        let mut worst = 0.0_f64;
        for &(idx, bi) in &picks {
            worst = worst.max((bi - self.operator_entry(data, k, idx)).abs());
        }
        let rel = if bnorm == 0.0 { worst } else { worst / bnorm };
        if !(rel <= self.tol) {
            return Err(Error::Residual {
                order: k,
                residual: rel,
                tol: self.tol,
            });
        }
        Ok(rel)
    }

    /// Entry `idx` of `ℒ_k(A)ᵀ v`.
    fn operator_entry(&self, v: &[f64], k: usize, idx: usize) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        let mut stride = 1;
        for _ in 0..k {
            let digit = (idx / stride) % n;
            let base = idx - digit * stride;
            for j in 0..n {
                acc += self.a[(j, digit)] * v[base + j * stride];
            }
            stride *= n;
        }
        acc
    }

    fn residual(&self, v: &KronVector, b: &KronVector) -> Result<Vec<f64>> {
        let lv = apply_kway_lyapunov_transpose(&self.a, v)?;
        Ok(b.as_slice()
            .iter()
            .zip(lv.as_slice())
            .map(|(bi, li)| bi - li)
            .collect())
    }
}

/// Solves `ℒ_k(A)ᵀ v = b` for Hurwitz `A`.
pub fn solve_kway(a: &Matrix, b: &KronVector) -> Result<KronVector> {
    KwaySolver::new(a)?.solve(b)
}

/// Applies the row-major `n × n` matrix `mat` to every mode of an order-`k`
/// tensor, in place. Fibers are processed in chunks so the scratch space is
/// `O(n · chunk)`.
fn apply_all_modes_in_place<T>(data: &mut [T], n: usize, k: usize, mat: &[T])
where
    T: nalgebra::ComplexField + Copy,
{
    const CHUNK: usize = 64;
    let mut gathered = vec![T::zero(); n * CHUNK];
    let mut product = vec![T::zero(); n * CHUNK];
    for s in 0..k {
        let left = pow(n, s);
        let right = pow(n, k - s - 1);
        for l in 0..left {
            let base = l * n * right;
            let mut r0 = 0;
            while r0 < right {
                let w = CHUNK.min(right - r0);
                for i in 0..n {
                    let src = base + i * right + r0;
                    gathered[i * w..i * w + w].copy_from_slice(&data[src..src + w]);
                }
                for o in 0..n {
                    let row = &mut product[o * w..o * w + w];
                    row.iter_mut().for_each(|v| *v = T::zero());
                    for i in 0..n {
                        let c = mat[o * n + i];
                        if c.is_zero() {
                            continue;
                        }
                        for (p, &g) in row.iter_mut().zip(&gathered[i * w..i * w + w]) {
                            *p += c * g;
                        }
                    }
                }
                for o in 0..n {
                    let dst = base + o * right + r0;
                    data[dst..dst + w].copy_from_slice(&product[o * w..o * w + w]);
                }
                r0 += w;
            }
        }
    }
}

/// Solves `(σ I + ℒ_k(L)) y = c` in place for row-major lower-triangular `L`.
fn forward_substitute<T>(lower: &[T], n: usize, k: usize, sigma: T, c: &mut [T])
where
    T: nalgebra::ComplexField + Copy,
{
    if k == 1 {
        for i in 0..n {
            let mut s = c[i];
            for j in 0..i {
                s -= lower[i * n + j] * c[j];
            }
            c[i] = s / (sigma + lower[i * n + i]);
        }
        return;
    }
    let block = pow(n, k - 1);
    for i in 0..n {
        let (done, rest) = c.split_at_mut(i * block);
        let current = &mut rest[..block];
        for j in 0..i {
            let lij = lower[i * n + j];
            if lij.is_zero() {
                continue;
            }
            for (ci, &yj) in current.iter_mut().zip(&done[j * block..(j + 1) * block]) {
                *ci -= lij * yj;
            }
        }
        forward_substitute(lower, n, k - 1, sigma + lower[i * n + i], current);
    }
}

/// Solves `AᵀX + XA + C = 0` for Hurwitz `A`.
pub fn solve_lyapunov(a: &Matrix, c: &Matrix) -> Result<Matrix> {
    let solver = KwaySolver::new(a)?;
    solve_lyapunov_with(&solver, c)
}

fn solve_lyapunov_with(solver: &KwaySolver, c: &Matrix) -> Result<Matrix> {
    let n = solver.n;
    let mut data: Vec<f64> = c.as_slice().iter().map(|v| -v).collect();
    solver.solve_in_place(&mut data, 2)?;
    let x = Matrix::from_vec(n, n, data);
    Ok((&x + x.transpose()) * 0.5)
}

/// Stabilizing solution of `AᵀV + VA − V B R⁻¹ Bᵀ V + Q = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AreSolution {
    pub v2: Matrix,
    /// Closed-loop matrix `A − B R⁻¹ Bᵀ V₂`.
    pub acl: Matrix,
    /// Relative residual: `‖AᵀV + VA − VSV + Q‖_F` divided by the sum of the
    /// Frobenius norms of the four terms.
    pub residual_norm: f64,
    pub iterations: usize,
}

impl AreSolution {
    /// `R⁻¹ Bᵀ V₂` (so the LQR feedback is `u = −K x`).
    pub fn gain(&self, b: &Matrix, r: &Matrix) -> Result<Matrix> {
        let chol = r.clone().cholesky().ok_or(Error::IndefiniteR)?;
        Ok(chol.solve(&(b.transpose() * &self.v2)))
    }
}

fn are_residual(a: &Matrix, s: &Matrix, q: &Matrix, x: &Matrix) -> f64 {
    let atx = a.transpose() * x;
    let xa = x * a;
    let xsx = x * s * x;
    let res = &atx + &xa - &xsx + q;
    let scale = atx.norm() + xa.norm() + xsx.norm() + q.norm();
    if scale == 0.0 {
        res.norm()
    } else {
        res.norm() / scale
    }
}

/// PBH test: every eigenvalue with nonnegative real part must be controllable.
fn check_stabilizable(a: &Matrix, b: &Matrix) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    let scale = a.norm().max(b.norm()).max(1.0);
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.re < HURWITZ_THRESHOLD {
            continue;
        }
        let mut pbh = DMatrix::<C64>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                pbh[(i, j)] = C64::new(a[(i, j)], 0.0);
            }
            pbh[(i, i)] -= *lambda;
            for j in 0..m {
                pbh[(i, n + j)] = C64::new(b[(i, j)], 0.0);
            }
        }
        let sv = pbh.singular_values();
        let smin = sv.iter().fold(f64::INFINITY, |acc, &v| acc.min(v));
        if smin <= 1e-10 * scale {
            return Err(Error::NotStabilizable {
                re: lambda.re,
                im: lambda.im,
            });
        }
    }
    Ok(())
}

/// Stabilizing gain from Bass's shifted Lyapunov construction, or `None` when
/// the pair is not controllable enough for it to apply.
fn bass_gain(a: &Matrix, b: &Matrix, r_chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> Option<Matrix> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    let shifted = -(a + Matrix::identity(n, n) * beta).transpose();
    let s = b * r_chol.solve(&b.transpose());
    let z = solve_lyapunov(&shifted, &(s * 2.0)).ok()?;
    let z_inv = z.cholesky()?.inverse();
    let k = r_chol.solve(&(b.transpose() * z_inv));
    is_hurwitz(&(a - b * &k)).then_some(k)
}

/// Stabilizing Riccati solution from the matrix sign function of the Hamiltonian.
fn sign_function_solution(a: &Matrix, s: &Matrix, q: &Matrix) -> Option<Matrix> {
    let n = a.nrows();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let mut z = h;
    for _ in 0..100 {
        let lu = z.clone().lu();
        let log_det: f64 = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum();
        if !log_det.is_finite() {
            return None;
        }
        let c = Float::exp(-log_det / (2 * n) as f64);
        let inv = lu.try_inverse()?;
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm() / next.norm();
        z = next;
        if change < 1e-13 {
            break;
        }
    }
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let ident = Matrix::identity(n, n);
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &ident));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &ident)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let x = lhs.svd(true, true).solve(&rhs, 1e-14).ok()?;
    let x = (&x + x.transpose()) * 0.5;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solves the continuous algebraic Riccati equation by Newton–Kleinman
/// iteration. The starting gain is zero for Hurwitz `A`, otherwise Bass's
/// shifted-Lyapunov gain; the Hamiltonian sign function is the fallback start.
pub fn solve_are(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, tol: f64) -> Result<AreSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension {
            context: "solve_are",
            expected: n,
            actual: if a.ncols() != n { a.ncols() } else if b.nrows() != n { b.nrows() } else { q.nrows() },
        });
    }
    if r.nrows() != b.ncols() || r.ncols() != b.ncols() {
        return Err(Error::Dimension {
            context: "solve_are R",
            expected: b.ncols(),
            actual: r.nrows(),
        });
    }
    if !crate::poly::is_symmetric(r, 1e-12) {
        return Err(Error::IndefiniteR);
    }
    let r_chol = r.clone().cholesky().ok_or(Error::IndefiniteR)?;
    if !crate::poly::is_symmetric(q, 1e-12) {
        return Err(Error::IndefiniteQ);
    }
    check_stabilizable(a, b)?;
    let s = b * r_chol.solve(&b.transpose());

    let mut k = if is_hurwitz(a) {
        Matrix::zeros(b.ncols(), n)
    } else if let Some(k) = bass_gain(a, b, &r_chol) {
        k
    } else {
        let x0 = sign_function_solution(a, &s, q).ok_or(Error::RiccatiFailed {
            residual: f64::INFINITY,
            iterations: 0,
        })?;
        r_chol.solve(&(b.transpose() * x0))
    };

    let mut best: Option<(Matrix, f64)> = None;
    let mut prev: Option<Matrix> = None;
    let mut iterations = 0;
    for it in 1..=60 {
        iterations = it;
        let acl = a - b * &k;
        let solver = match KwaySolver::new(&acl) {
            Ok(s) => s,
            Err(_) => break,
        };
        let rhs = q + k.transpose() * r * &k;
        let x = solve_lyapunov_with(&solver, &rhs)?;
        let res = are_residual(a, &s, q, &x);
        if best.as_ref().is_none_or(|(_, r)| res < *r) {
            best = Some((x.clone(), res));
        }
        k = r_chol.solve(&(b.transpose() * &x));
        let stalled = prev
            .as_ref()
            .is_some_and(|p| (&x - p).norm() <= 1e-15 * x.norm().max(1.0));
        prev = Some(x);
        if res <= tol * 1e-3 || stalled {
            break;
        }
    }

    let (v2, residual_norm) = match best {
        Some((x, res)) if res <= tol => (x, res),
        other => {
            // Newton stalled or lost stability: restart from the sign-function solution.
            let fallback = sign_function_solution(a, &s, q).map(|x| {
                let res = are_residual(a, &s, q, &x);
                (x, res)
            });
            match (other, fallback) {
                (_, Some((x, res))) if res <= tol => (x, res),
                (Some((_, res)), _) | (None, Some((_, res))) => {
                    return Err(Error::RiccatiFailed {
                        residual: res,
                        iterations,
                    })
                }
                (None, None) => {
                    return Err(Error::RiccatiFailed {
                        residual: f64::INFINITY,
                        iterations,
                    })
                }
            }
        }
    };
    let acl = a - &s * &v2;
    let abscissa = spectral_abscissa(&acl);
    if abscissa >= HURWITZ_THRESHOLD {
        return Err(Error::NotHurwitz { abscissa });
    }
    Ok(AreSolution {
        v2,
        acl,
        residual_norm,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_riccati_closed_form() {
        let sol = solve_are(&scalar(-1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0), 1e-12).unwrap();
        let p = 2.0_f64.sqrt() - 1.0;
        assert!((sol.v2[(0, 0)] - p).abs() < 1e-14);
        assert!((sol.acl[(0, 0)] + 2.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn scalar_riccati_without_input_is_lyapunov() {
        let sol = solve_are(&scalar(-1.0), &scalar(0.0), &scalar(1.0), &scalar(1.0), 1e-12).unwrap();
        assert!((sol.v2[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hurwitz_with_zero_q_gives_zero() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 3.0, 0.0, -2.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sol = solve_are(&a, &b, &Matrix::zeros(2, 2), &scalar(1.0), 1e-12).unwrap();
        assert!(sol.v2.amax() < 1e-14);
    }

    #[test]
    fn unstable_plant_uses_bass_start() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sol = solve_are(&a, &b, &Matrix::identity(2, 2), &scalar(1.0), 1e-12).unwrap();
        assert!(sol.residual_norm < 1e-12);
        assert!(is_hurwitz(&sol.acl));
    }

    #[test]
    fn unreachable_unstable_mode_is_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let err = solve_are(&a, &b, &Matrix::identity(2, 2), &scalar(1.0), 1e-12).unwrap_err();
        assert!(matches!(err, Error::NotStabilizable { .. }));
    }

    #[test]
    fn indefinite_r_is_rejected() {
        let err = solve_are(&scalar(-1.0), &scalar(1.0), &scalar(1.0), &scalar(-2.0), 1e-12).unwrap_err();
        assert_eq!(err, Error::IndefiniteR);
    }

    #[test]
    fn sign_function_matches_newton() {
        let a = Matrix::from_row_slice(3, 3, &[0.2, 1.0, 0.0, 0.0, 0.1, 1.0, -0.3, 0.5, 0.4]);
        let b = Matrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let q = Matrix::identity(3, 3);
        let s = &b * b.transpose();
        let x = sign_function_solution(&a, &s, &q).unwrap();
        let sol = solve_are(&a, &b, &q, &scalar(1.0), 1e-12).unwrap();
        assert!((x - &sol.v2).amax() < 1e-8);
    }

    #[test]
    fn lean_solve_matches_refined_solve() {
        let a = Matrix::from_row_slice(3, 3, &[-2.0, 0.3, 0.1, 0.2, -1.5, 0.4, -0.1, 0.0, -1.0]);
        let solver = KwaySolver::new(&a).unwrap();
        let b = KronVector::new((0..81).map(|i| ((i * 7 % 11) as f64) - 5.0).collect(), 3, 4).unwrap();
        let full = solver.solve(&b).unwrap();
        let mut lean = b.as_slice().to_vec();
        let res = solver.solve_lean(&mut lean, 4, 20, 7).unwrap();
        assert!(res < 1e-12);
        for (x, y) in lean.iter().zip(full.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut all = b.as_slice().to_vec();
        assert!(solver.solve_lean(&mut all, 4, 1000, 7).unwrap() < 1e-12);
    }

    #[test]
    fn scalar_kway() {
        let b = KronVector::new(vec![6.0], 1, 3).unwrap();
        let v = solve_kway(&scalar(-2.0), &b).unwrap();
        assert!((v.as_slice()[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_hurwitz_is_singular() {
        let b = KronVector::new(vec![1.0], 1, 2).unwrap();
        assert!(matches!(solve_kway(&scalar(0.0), &b), Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn complex_spectrum_uses_complex_path() {
        let a = Matrix::from_row_slice(2, 2, &[-0.5, 2.0, -2.0, -0.5]);
        let solver = KwaySolver::new(&a).unwrap();
        assert!(!solver.is_real());
        let b = KronVector::new(vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.0, 2.0], 2, 3).unwrap();
        let v = solver.solve(&b).unwrap();
        let back = apply_kway_lyapunov_transpose(&a, &v).unwrap();
        for (x, y) in back.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
