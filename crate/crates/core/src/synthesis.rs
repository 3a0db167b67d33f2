//! Degree-by-degree computation of the value function coefficients.
//!
//! Writing `V(x) = ½ Σ_{k≥2} v_kᵀ x^⊗k` with symmetric `v_k` and substituting
//! into the HJB equation, the degree-`k` terms give
//!
//! ```text
//! ℒ_k(A_cl)ᵀ v_k = −Σ_{i+p=k+1} i·(F_pᵀ ⊗ I)v_i − q_k + ¼ Σ (C_{i,p})ᵀ R⁻¹ C_{j,q}
//! ```
//!
//! where `C_{i,p} x^⊗(i−1+p)` is the degree-`(i−1+p)` part of `g(x)ᵀ ∇(v_iᵀx^⊗i)`
//! contributed by the input block `G_p` (`G_0 = B`) and the last sum runs over
//! pairs with `(i−1+p) + (j−1+q) = k`, `2 ≤ i, j ≤ k−1`. The pair with both
//! blocks `B` and one coefficient `v_2` is the feedback part of `A_cl` and sits
//! on the left. Any coefficient vector representing the right-hand polynomial
//! works, because `ℒ_k(A_cl)ᵀ` commutes with symmetrization; the solution is
//! symmetrized afterwards.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrixViewMut;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kronalg::{
    check_symmetric, checked_pow, dot, kron_power, pow, symmetrize_in_place, KronVector,
};
use crate::lyapunov::{solve_are, AreSolution, KwaySolver};
use crate::poly::{quad_form, PolyCost, PolyDynamics};
use crate::Matrix;

/// Taylor coefficients `v_2, …, v_d` of the value function.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    n: usize,
    coeffs: Vec<KronVector>,
}

impl ValueFunction {
    /// `coeffs[j]` must be the order-`(j+2)` coefficient.
    pub fn new(n: usize, coeffs: Vec<KronVector>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Invalid("value function needs at least v_2".into()));
        }
        for (j, c) in coeffs.iter().enumerate() {
            if c.order() != j + 2 {
                return Err(Error::Order {
                    expected: j + 2,
                    actual: c.order(),
                });
            }
            if c.n() != n {
                return Err(Error::Dimension {
                    context: "ValueFunction coefficient",
                    expected: n,
                    actual: c.n(),
                });
            }
        }
        Ok(Self { n, coeffs })
    }

    /// Quadratic value `½ xᵀ V₂ x`.
    pub fn quadratic(v2: &Matrix) -> Self {
        let n = v2.nrows();
        let v = KronVector::new(v2.as_slice().to_vec(), n, 2).expect("square matrix");
        Self { n, coeffs: vec![v] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() + 1
    }

    /// The order-`k` coefficient, `2 ≤ k ≤ degree`.
    pub fn coeff(&self, k: usize) -> &KronVector {
        &self.coeffs[k - 2]
    }

    pub fn coeffs(&self) -> &[KronVector] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<KronVector> {
        self.coeffs
    }

    /// `V₂` as an `n × n` matrix.
    pub fn v2(&self) -> Matrix {
        self.matricization(2)
    }

    /// The unfolding `V_k ∈ R^{n × n^{k−1}}` with `vec(V_k) = v_k`.
    pub fn matricization(&self, k: usize) -> Matrix {
        let c = self.coeff(k);
        Matrix::from_column_slice(self.n, pow(self.n, k - 1), c.as_slice())
    }

    /// Truncation to degree `d`.
    pub fn truncated(&self, d: usize) -> Self {
        Self {
            n: self.n,
            coeffs: self.coeffs[..d.clamp(2, self.degree()) - 1].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    /// Relative residual tolerance for the Riccati and k-way solves.
    pub tol: f64,
    /// Largest `n^d` accepted before refusing the synthesis.
    pub element_budget: u128,
}

pub const DEFAULT_ELEMENT_BUDGET: u128 = 500_000_000;

/// Coefficient length above which a degree is solved in place, with the
/// residual checked at sampled entries instead of refined.
pub const LEAN_THRESHOLD: usize = 1 << 25;
const LEAN_SAMPLES: usize = 4096;

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            element_budget: DEFAULT_ELEMENT_BUDGET,
        }
    }
}

/// Per-degree solve diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeReport {
    pub degree: usize,
    /// Relative residual of the linear solve for this degree (the Riccati
    /// residual for degree 2).
    pub solve_residual: f64,
}

/// Stateful driver computing one coefficient per call, in increasing degree.
pub struct Synthesizer<'a> {
    dynamics: &'a PolyDynamics,
    cost: &'a PolyCost,
    opts: SynthesisOptions,
    are: AreSolution,
    solver: KwaySolver,
    r_inv: Matrix,
    coeffs: Vec<KronVector>,
    reports: Vec<DegreeReport>,
}

fn check_problem(dynamics: &PolyDynamics, cost: &PolyCost) -> Result<()> {
    dynamics.validate()?;
    cost.validate()?;
    if cost.n() != dynamics.n() {
        return Err(Error::Dimension {
            context: "cost Q vs state dimension",
            expected: dynamics.n(),
            actual: cost.n(),
        });
    }
    if cost.m() != dynamics.m() {
        return Err(Error::Dimension {
            context: "cost R vs input dimension",
            expected: dynamics.m(),
            actual: cost.m(),
        });
    }
    Ok(())
}

impl<'a> Synthesizer<'a> {
    /// Validates the problem and solves the Riccati equation for `v_2`.
    pub fn new(dynamics: &'a PolyDynamics, cost: &'a PolyCost, opts: SynthesisOptions) -> Result<Self> {
        check_problem(dynamics, cost)?;
        let are = solve_are(&dynamics.a, &dynamics.b, &cost.q, &cost.r, opts.tol)?;
        let solver = KwaySolver::with_tolerance(&are.acl, opts.tol)?;
        let r_inv = cost
            .r
            .clone()
            .cholesky()
            .ok_or(Error::IndefiniteR)?
            .inverse();
        let n = dynamics.n();
        let v2 = KronVector::new(are.v2.as_slice().to_vec(), n, 2)?;
        let reports = vec![DegreeReport {
            degree: 2,
            solve_residual: are.residual_norm,
        }];
        Ok(Self {
            dynamics,
            cost,
            opts,
            are,
            solver,
            r_inv,
            coeffs: vec![v2],
            reports,
        })
    }

    pub fn are(&self) -> &AreSolution {
        &self.are
    }

    /// Highest degree computed so far.
    pub fn degree(&self) -> usize {
        self.coeffs.len() + 1
    }

    pub fn reports(&self) -> &[DegreeReport] {
        &self.reports
    }

    /// Computes the next coefficient `v_{degree+1}`.
    pub fn next_degree(&mut self) -> Result<DegreeReport> {
        let k = self.degree() + 1;
        check_budget(self.dynamics.n(), k, self.opts.element_budget)?;
        let rhs = assemble_rhs_with(self.dynamics, self.cost, &self.r_inv, &self.coeffs, k)?;
        let (mut v, residual) = if rhs.len() > LEAN_THRESHOLD {
            let mut v = rhs;
            let residual = self.solver.solve_lean(v.as_mut_slice(), k, LEAN_SAMPLES, k as u64)?;
            (v, residual)
        } else {
            self.solver.solve_with_residual(&rhs)?
        };
        let n = v.n();
        symmetrize_in_place(v.as_mut_slice(), n, k);
        self.coeffs.push(v);
        let report = DegreeReport {
            degree: k,
            solve_residual: residual,
        };
        self.reports.push(report);
        Ok(report)
    }

    pub fn value(&self) -> ValueFunction {
        ValueFunction {
            n: self.dynamics.n(),
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn into_value(self) -> ValueFunction {
        ValueFunction {
            n: self.dynamics.n(),
            coeffs: self.coeffs,
        }
    }
}

fn check_budget(n: usize, d: usize, budget: u128) -> Result<()> {
    let elements = (n as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if elements > budget {
        return Err(Error::MemoryBudget {
            degree: d,
            elements,
            budget,
        });
    }
    Ok(())
}

/// Computes the degree-`d` value function approximation.
pub fn synthesize(
    dynamics: &PolyDynamics,
    cost: &PolyCost,
    d: usize,
    opts: SynthesisOptions,
) -> Result<ValueFunction> {
    if d < 2 {
        return Err(Error::Invalid("value function degree must be at least 2".into()));
    }
    check_budget(dynamics.n(), d, opts.element_budget)?;
    let mut synth = Synthesizer::new(dynamics, cost, opts)?;
    while synth.degree() < d {
        synth.next_degree()?;
    }
    Ok(synth.into_value())
}

/// `C_{i,p} ∈ R^{m × n^{i−1+p}}`: coefficient of the degree-`(i−1+p)` map
/// `x ↦ [G_p (x^⊗p ⊗ I_m)]ᵀ · i·V_i x^⊗(i−1)` (with `G_0 = B`), laid out so
/// the `x^⊗(i−1)` factor is the slow index.
pub(crate) fn gradient_input_coeff(dynamics: &PolyDynamics, v: &KronVector, p: usize) -> Matrix {
    let n = v.n();
    let i = v.order();
    let m = dynamics.m();
    let inner = pow(n, i - 1);
    let np = pow(n, p);
    let mut c = Matrix::zeros(m, inner * np);
    let scale = i as f64;
    let data = v.as_slice();
    let mut add = |r: usize, alpha: usize, col: usize, val: f64| {
        let w = scale * val;
        let row = &data[r * inner..(r + 1) * inner];
        for (beta, &vb) in row.iter().enumerate() {
            c[(col, beta * np + alpha)] += w * vb;
        }
    };
    if p == 0 {
        for r in 0..n {
            for col in 0..m {
                let val = dynamics.b[(r, col)];
                if val != 0.0 {
                    add(r, 0, col, val);
                }
            }
        }
    } else if let Some(gp) = dynamics.g.get(&p) {
        gp.for_each_nonzero(|r, col, val| add(r, col / m, col % m, val));
    }
    c
}

/// Right-hand side of the degree-`k` linear system, given `value_so_far =
/// [v_2, …, v_{k−1}]` (symmetric).
pub fn assemble_rhs(
    dynamics: &PolyDynamics,
    cost: &PolyCost,
    value_so_far: &[KronVector],
    k: usize,
) -> Result<KronVector> {
    check_problem(dynamics, cost)?;
    let r_inv = cost
        .r
        .clone()
        .cholesky()
        .ok_or(Error::IndefiniteR)?
        .inverse();
    assemble_rhs_with(dynamics, cost, &r_inv, value_so_far, k)
}

fn assemble_rhs_with(
    dynamics: &PolyDynamics,
    cost: &PolyCost,
    r_inv: &Matrix,
    value_so_far: &[KronVector],
    k: usize,
) -> Result<KronVector> {
    if k < 3 {
        return Err(Error::Invalid("right-hand sides exist for degree ≥ 3".into()));
    }
    if value_so_far.len() != k - 2 {
        return Err(Error::Order {
            expected: k - 1,
            actual: value_so_far.len() + 1,
        });
    }
    let n = dynamics.n();
    for (j, v) in value_so_far.iter().enumerate() {
        if v.order() != j + 2 {
            return Err(Error::Order {
                expected: j + 2,
                actual: v.order(),
            });
        }
        if v.n() != n {
            return Err(Error::Dimension {
                context: "assemble_rhs coefficient",
                expected: n,
                actual: v.n(),
            });
        }
    }
    let coeff = |i: usize| &value_so_far[i - 2];
    let mut rhs = KronVector::zeros(n, k);

    // drift terms: −i·(F_pᵀ ⊗ I) v_i with i + p = k + 1
    for (&p, fp) in &dynamics.f {
        if p + 2 > k + 1 {
            continue;
        }
        let i = k + 1 - p;
        if !(2..k).contains(&i) {
            continue;
        }
        let inner = pow(n, i - 1);
        let vi = coeff(i).as_slice();
        let out = rhs.as_mut_slice();
        let scale = i as f64;
        fp.for_each_nonzero(|r, gamma, val| {
            let w = scale * val;
            let src = &vi[r * inner..(r + 1) * inner];
            let dst = &mut out[gamma * inner..(gamma + 1) * inner];
            for (d, s) in dst.iter_mut().zip(src) {
                *d -= w * s;
            }
        });
    }

    // state-cost term: −q_k
    if let Some(qk) = cost.q_poly.get(&k) {
        let out = rhs.as_mut_slice();
        qk.for_each_nonzero(|_, c, val| out[c] -= val);
    }

    // input terms: ¼ C_aᵀ R⁻¹ C_b over pairs of total degree k
    let mut blocks: Vec<usize> = vec![0];
    blocks.extend(dynamics.g.keys().copied());
    let mut terms: Vec<(usize, usize)> = Vec::new();
    for i in 2..k {
        for &p in &blocks {
            let deg = i - 1 + p;
            if deg < k {
                terms.push((i, p));
            }
        }
    }
    let mut cache: BTreeMap<(usize, usize), Matrix> = BTreeMap::new();
    for (ai, &(i, p)) in terms.iter().enumerate() {
        for &(j, q) in &terms[ai..] {
            let d1 = i - 1 + p;
            let d2 = j - 1 + q;
            if d1 + d2 != k {
                continue;
            }
            let weight = if (i, p) == (j, q) { 0.25 } else { 0.5 };
            for key in [(i, p), (j, q)] {
                cache
                    .entry(key)
                    .or_insert_with(|| gradient_input_coeff(dynamics, coeff(key.0), key.1));
            }
            let c1 = &cache[&(i, p)];
            let d2m = r_inv * &cache[&(j, q)];
            let mut view =
                DMatrixViewMut::from_slice(rhs.as_mut_slice(), pow(n, d2), pow(n, d1));
            view.gemm_tr(weight, &d2m, c1, 1.0);
        }
    }
    Ok(rhs)
}

/// Degree-`k` HJB residual statistics over a set of directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeResidual {
    pub degree: usize,
    /// Largest `|r_k(x)|` over the sampled unit directions.
    pub max_abs: f64,
    /// Largest magnitude of any single contribution to `r_k(x)`.
    pub scale: f64,
}

impl DegreeResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.max_abs
        } else {
            self.max_abs / self.scale
        }
    }
}

/// Deterministic points on the unit sphere in `R^n`.
pub fn unit_sphere_samples(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            // Box–Muller would need transcendental calls per draw; rejection
            // from the cube is enough for sampling directions.
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 > 1e-6 && r2 <= 1.0 {
                let r = num_traits::Float::sqrt(r2);
                break x.into_iter().map(|v| v / r).collect();
            }
        })
        .collect()
}

/// Coefficients of `z ↦ HJB(z·x)` for a fixed direction, split by degree.
///
/// Returns `(total, scale)`: `total[j]` is the exact coefficient of `z^j` of
/// the HJB residual along the ray, and `scale[j]` the largest magnitude of a
/// single contribution to it.
pub fn hjb_ray_coefficients(
    dynamics: &PolyDynamics,
    cost: &PolyCost,
    value: &ValueFunction,
    x: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = dynamics.n();
    let m = dynamics.m();
    let d = value.degree();
    let ell = dynamics.ell();
    let max_deg = (2 * (d - 1) + 2 * ell).max(d - 1 + ell + 1).max(cost.lambda());
    let mut total = vec![0.0; max_deg + 1];
    let mut scale = vec![0.0_f64; max_deg + 1];
    let mut add = |deg: usize, v: f64| {
        total[deg] += v;
        scale[deg] = scale[deg].max(v.abs());
    };

    // ∇V(zx) = Σ_i z^{i−1} a_i with a_i = ½ i V_i x^⊗(i−1)
    let mut grads: Vec<(usize, Vec<f64>)> = Vec::new();
    for i in 2..=d {
        let xp = kron_power(x, i - 1);
        let vi = value.coeff(i).as_slice();
        let inner = xp.len();
        let a: Vec<f64> = (0..n)
            .map(|r| 0.5 * i as f64 * dot(&vi[r * inner..(r + 1) * inner], xp.as_slice()))
            .collect();
        grads.push((i - 1, a));
    }
    // f(zx) = Σ_p z^p f_p
    let mut drift: Vec<(usize, Vec<f64>)> = Vec::new();
    drift.push((1, (0..n).map(|r| (0..n).map(|c| dynamics.a[(r, c)] * x[c]).sum()).collect()));
    for (&p, fp) in &dynamics.f {
        let mut out = vec![0.0; n];
        fp.apply_power_acc(x, p, &mut out);
        drift.push((p, out));
    }
    // g(zx) = Σ_p z^p g_p
    let mut inputs: Vec<(usize, Matrix)> = vec![(0, dynamics.b.clone())];
    for (&p, gp) in &dynamics.g {
        let mut g = Matrix::zeros(n, m);
        gp.input_map_acc(x, p, m, &mut g);
        inputs.push((p, g));
    }
    let r_inv = cost.r.clone().cholesky().expect("validated R").inverse();

    for (gd, a) in &grads {
        for (fd, f) in &drift {
            add(gd + fd, dot(a, f));
        }
    }
    // gᵀ∇V pieces: w = a_iᵀ g_p ∈ R^m at degree (i−1) + p
    let mut w_terms: Vec<(usize, Vec<f64>)> = Vec::new();
    for (gd, a) in &grads {
        for (p, g) in &inputs {
            let w: Vec<f64> = (0..m).map(|c| (0..n).map(|r| a[r] * g[(r, c)]).sum()).collect();
            w_terms.push((gd + p, w));
        }
    }
    for (d1, w1) in &w_terms {
        for (d2, w2) in &w_terms {
            let rw: Vec<f64> = (0..m).map(|i| (0..m).map(|j| r_inv[(i, j)] * w2[j]).sum()).collect();
            add(d1 + d2, -0.5 * dot(w1, &rw));
        }
    }
    add(2, 0.5 * quad_form(&cost.q, x));
    for (&p, qp) in &cost.q_poly {
        let mut acc = [0.0];
        qp.apply_power_acc(x, p, &mut acc);
        add(p, 0.5 * acc[0]);
    }
    (total, scale)
}

/// Degree-`k` part of the HJB residual, maximized over `samples` unit
/// directions (200 deterministic ones when `samples` is empty).
///
/// For each direction `x` the residual along the ray `z ↦ HJB(z x)` is a
/// polynomial in `z`; its `z^k` coefficient is assembled exactly from the
/// directional pieces of `f`, `g`, `∇V` and the running cost.
pub fn hjb_degree_residual(
    dynamics: &PolyDynamics,
    cost: &PolyCost,
    value: &ValueFunction,
    k: usize,
    samples: &[Vec<f64>],
) -> DegreeResidual {
    let owned;
    let samples = if samples.is_empty() {
        owned = unit_sphere_samples(dynamics.n(), 200, 0x5eed);
        &owned[..]
    } else {
        samples
    };
    let mut out = DegreeResidual {
        degree: k,
        max_abs: 0.0,
        scale: 0.0,
    };
    for x in samples {
        let (total, scale) = hjb_ray_coefficients(dynamics, cost, value, x);
        if k < total.len() {
            out.max_abs = out.max_abs.max(total[k].abs());
            out.scale = out.scale.max(scale[k]);
        }
    }
    out
}

/// True when every coefficient passes the symmetry check at `tol`.
pub fn coefficients_symmetric(value: &ValueFunction, tol: f64) -> bool {
    value.coeffs().iter().all(|c| check_symmetric(c, tol * c.norm_inf().max(1.0)))
}

/// `n^k` as a checked quantity for callers sizing work up front.
pub fn coefficient_len(n: usize, k: usize) -> Option<usize> {
    checked_pow(n, k)
}
