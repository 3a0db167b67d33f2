//! Brute-force reference for the value coefficients.
//!
//! Every operator in the degree-k linear system is built as an explicit dense
//! matrix (Kronecker sums, perfect shuffles, `vec(I_m)` selectors), the system
//! is solved by LU, and the result is symmetrized by averaging over all index
//! permutations. Only usable for tiny problems.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ppr_core::{CoeffMatrix, Matrix, PolyCost, PolyDynamics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Problem {
    pub n: usize,
    pub m: usize,
    pub a: Matrix,
    pub b: Matrix,
    /// `F_p`, `n × n^p`, for `p = 2..`.
    pub f: BTreeMap<usize, Matrix>,
    /// `G_p`, `n × n^p m`, for `p = 1..`.
    pub g: BTreeMap<usize, Matrix>,
    pub q: Matrix,
    pub r: Matrix,
    /// `q_p` as `1 × n^p` rows.
    pub q_poly: BTreeMap<usize, Matrix>,
}

impl Problem {
    pub fn random(seed: u64, n: usize, m: usize, ell: usize, lambda: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        // Redraw until (A, B) is comfortably controllable.
        let (a, b) = loop {
            let a = rand(n, n);
            let b = rand(n, m);
            let mut ctrb = Matrix::zeros(n, n * m);
            let mut blk = b.clone();
            for i in 0..n {
                ctrb.view_mut((0, i * m), (n, m)).copy_from(&blk);
                blk = &a * blk;
            }
            let sv = ctrb.singular_values();
            if sv.min() >= 0.1 * sv.max() {
                break (a, b);
            }
        };
        let f = (2..=ell).map(|p| (p, rand(n, n.pow(p as u32)) * 0.5)).collect();
        let g = (1..=ell).map(|p| (p, rand(n, n.pow(p as u32) * m) * 0.5)).collect();
        let l = rand(n, n);
        let q = &l * l.transpose() + Matrix::identity(n, n) * 0.1;
        let s = rand(m, m);
        let r = &s * s.transpose() + Matrix::identity(m, m);
        let q_poly = (3..=lambda).map(|p| (p, rand(1, n.pow(p as u32)) * 0.5)).collect();
        Self { n, m, a, b, f, g, q, r, q_poly }
    }

    pub fn to_core(&self) -> (PolyDynamics, PolyCost) {
        let dense = |m: &BTreeMap<usize, Matrix>| -> BTreeMap<usize, CoeffMatrix> {
            m.iter().map(|(&p, c)| (p, CoeffMatrix::Dense(c.clone()))).collect()
        };
        let dynamics = PolyDynamics::new(self.a.clone(), dense(&self.f), self.b.clone(), dense(&self.g)).unwrap();
        let cost = PolyCost::new(self.q.clone(), self.r.clone(), dense(&self.q_poly)).unwrap();
        (dynamics, cost)
    }

    /// `G_0 = B`, then the `G_p`.
    fn g_of(&self, p: usize) -> Option<&Matrix> {
        if p == 0 {
            Some(&self.b)
        } else {
            self.g.get(&p)
        }
    }
}

fn eye(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

fn kron_all(factors: &[&Matrix]) -> Matrix {
    let mut out = Matrix::identity(1, 1);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

/// `vec` of a column-major matrix as a column.
fn vec_of(m: &Matrix) -> Matrix {
    Matrix::from_column_slice(m.len(), 1, m.as_slice())
}

/// `reshape(v, rows, cols)` column-major.
fn reshape(v: &Matrix, rows: usize, cols: usize) -> Matrix {
    Matrix::from_column_slice(rows, cols, v.as_slice())
}

/// The `k`-way Lyapunov matrix `Σ_i I ⊗ … ⊗ M ⊗ … ⊗ I` for `M ∈ R^{p×q}`.
pub fn kway(m: &Matrix, k: usize) -> Matrix {
    let p = m.nrows();
    let id = eye(p);
    let mut total: Option<Matrix> = None;
    for pos in 0..k {
        let factors: Vec<&Matrix> = (0..k).map(|i| if i == pos { m } else { &id }).collect();
        let term = kron_all(&factors);
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    total.expect("k ≥ 1")
}

/// The permutation `S_{q,p}` with `S vec(A) = vec(Aᵀ)` for `A ∈ R^{p×q}`.
pub fn shuffle(q: usize, p: usize) -> Matrix {
    let mut s = Matrix::zeros(p * q, p * q);
    for i in 0..p {
        for j in 0..q {
            s[(j + q * i, i + p * j)] = 1.0;
        }
    }
    s
}

/// Stabilizing Riccati solution from the matrix sign function of the Hamiltonian.
pub fn riccati(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Matrix {
    let n = a.nrows();
    let r_inv = r.clone().try_inverse().unwrap();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-(b * &r_inv * b.transpose())));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let mut z = h;
    for _ in 0..100 {
        let inv = z.clone().try_inverse().unwrap();
        let next = (&z + inv) * 0.5;
        let delta = (&next - &z).norm() / next.norm();
        z = next;
        if delta < 1e-15 {
            break;
        }
    }
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + eye(n)));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + eye(n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let x = (lhs.transpose() * &lhs).try_inverse().unwrap() * lhs.transpose() * rhs;
    let mut x = (&x + x.transpose()) * 0.5;
    // Newton-Kleinman polish with dense Kronecker-sum Lyapunov solves.
    for _ in 0..3 {
        let k = &r_inv * b.transpose() * &x;
        let acl = a - b * &k;
        let c = q + k.transpose() * r * &k;
        let op = kway(&acl.transpose(), 2);
        let sol = op.lu().solve(&(-vec_of(&c))).unwrap();
        let next = reshape(&sol, n, n);
        x = (&next + next.transpose()) * 0.5;
    }
    x
}

pub fn riccati_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, x: &Matrix) -> f64 {
    let r_inv = r.clone().try_inverse().unwrap();
    let res = a.transpose() * x + x * a - x * b * r_inv * b.transpose() * x + q;
    res.amax() / (q.amax() + (a.transpose() * x).amax())
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..k {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Average of `v` over all `k!` reorderings of the Kronecker factors.
pub fn symmetrize(v: &Matrix, n: usize, k: usize) -> Matrix {
    let len = n.pow(k as u32);
    let perms = permutations(k);
    let digits = |mut idx: usize| {
        let mut d = vec![0; k];
        for slot in d.iter_mut().rev() {
            *slot = idx % n;
            idx /= n;
        }
        d
    };
    let mut out = Matrix::zeros(len, 1);
    for idx in 0..len {
        let d = digits(idx);
        let mut acc = 0.0;
        for p in &perms {
            let j = p.iter().fold(0, |a, &s| a * n + d[s]);
            acc += v[j];
        }
        out[idx] = acc / perms.len() as f64;
    }
    out
}

/// Value coefficients `v_2, …, v_d` as columns of length `n^k`.
pub fn value_coefficients(pr: &Problem, d: usize) -> Vec<Matrix> {
    let (n, m) = (pr.n, pr.m);
    let r_inv = pr.r.clone().try_inverse().unwrap();
    let v2 = riccati(&pr.a, &pr.b, &pr.q, &pr.r);
    let acl = &pr.a - &pr.b * &r_inv * pr.b.transpose() * &v2;
    let mut v: BTreeMap<usize, Matrix> = BTreeMap::new();
    v.insert(2, vec_of(&v2));
    let big_v = |v: &BTreeMap<usize, Matrix>, i: usize| reshape(&v[&i], n, n.pow(i as u32 - 1));
    let vec_im = vec_of(&eye(m));
    let ell = pr.g.keys().copied().max().unwrap_or(0);
    for k in 3..=d {
        let nk = n.pow(k as u32);
        let mut rhs = Matrix::zeros(nk, 1);
        for (&p, fp) in &pr.f {
            if p >= 2 && p < k {
                let i = k + 1 - p;
                rhs -= kway(fp, i).transpose() * &v[&i];
            }
        }
        if let Some(qk) = pr.q_poly.get(&k) {
            rhs -= qk.transpose();
        }
        for i in 3..k {
            let j = k + 2 - i;
            if j >= 3 {
                let term = big_v(&v, i).transpose() * &pr.b * &r_inv * pr.b.transpose() * big_v(&v, j);
                rhs += vec_of(&term) * (0.25 * (i * j) as f64);
            }
        }
        for o in 1..=2 * ell {
            for p in 0..=o {
                let q = o - p;
                let (Some(gp), Some(gq)) = (pr.g_of(p), pr.g_of(q)) else {
                    continue;
                };
                if k + 2 < o + 4 {
                    continue;
                }
                for i in 2..=k + 2 - o - 2 {
                    let j = k + 2 - o - i;
                    if j < 2 {
                        continue;
                    }
                    let left = kron_all(&[&eye(n.pow(p as u32)), &vec_im.transpose()]);
                    let gqv = vec_of(&(gq.transpose() * big_v(&v, j))).transpose();
                    let gpv = (gp.transpose() * big_v(&v, i)).kronecker(&r_inv);
                    let middle = gqv.kronecker(&gpv);
                    let perm = kron_all(&[
                        &eye(n.pow(j as u32 - 1)),
                        &shuffle(n.pow(i as u32 - 1), n.pow(q as u32) * m),
                        &eye(m),
                    ]);
                    let right = kron_all(&[&eye(n.pow((k - p) as u32)), &vec_im]);
                    let block = left * middle * perm * right;
                    rhs += vec_of(&block) * (0.25 * (i * j) as f64);
                }
            }
        }
        let lhs = kway(&acl, k).transpose();
        let tilde = lhs.lu().solve(&rhs).expect("nonsingular k-way operator");
        v.insert(k, symmetrize(&tilde, n, k));
    }
    v.into_values().collect()
}
