//! Value and gradient evaluation, polynomial feedback gains and HJB residuals.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::kronalg::{dot, kron_vec, pow, symmetrize_in_place};
use crate::poly::{quad_form, PolyCost, PolyDynamics};
use crate::synthesis::gradient_input_coeff;
pub use crate::synthesis::ValueFunction;
use crate::Matrix;

fn check_state(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(Error::Dimension {
            context: "state vector",
            expected: n,
            actual: x.len(),
        });
    }
    Ok(())
}

/// `V(x) = ½ Σ_i v_iᵀ x^⊗i`.
pub fn eval_value(value: &ValueFunction, x: &[f64]) -> Result<f64> {
    check_state(value.n(), x)?;
    let mut power = x.to_vec();
    let mut total = 0.0;
    for i in 2..=value.degree() {
        power = kron_vec(&power, x);
        total += dot(value.coeff(i).as_slice(), &power);
    }
    Ok(0.5 * total)
}

/// `∇V(x) = Σ_i (i/2) V_iᵀ-contraction of `v_i` against `x^⊗(i−1)`, valid for
/// symmetric coefficients.
pub fn eval_value_gradient(value: &ValueFunction, x: &[f64]) -> Result<Vec<f64>> {
    let n = value.n();
    check_state(n, x)?;
    let mut grad = vec![0.0; n];
    let mut power = x.to_vec();
    for i in 2..=value.degree() {
        if i > 2 {
            power = kron_vec(&power, x);
        }
        let v = value.coeff(i).as_slice();
        let inner = power.len();
        let w = 0.5 * i as f64;
        for (r, g) in grad.iter_mut().enumerate() {
            *g += w * dot(&v[r * inner..(r + 1) * inner], &power);
        }
    }
    Ok(grad)
}

/// Polynomial state feedback `u(x) = Σ_j K^{[j]} x^⊗j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyController {
    n: usize,
    m: usize,
    /// `gains[j-1] = K^{[j]} ∈ R^{m × n^j}`, each row symmetric.
    gains: Vec<Matrix>,
}

impl PolyController {
    pub fn new(n: usize, m: usize, gains: Vec<Matrix>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::Invalid("controller needs at least the linear gain".into()));
        }
        for (j, k) in gains.iter().enumerate() {
            if k.nrows() != m {
                return Err(Error::Dimension {
                    context: "gain rows",
                    expected: m,
                    actual: k.nrows(),
                });
            }
            let cols = crate::kronalg::checked_pow(n, j + 1)
                .ok_or_else(|| Error::Invalid("gain size overflows".into()))?;
            if k.ncols() != cols {
                return Err(Error::Dimension {
                    context: "gain columns",
                    expected: cols,
                    actual: k.ncols(),
                });
            }
        }
        Ok(Self { n, m, gains })
    }

    /// Linear feedback `u = K x`.
    pub fn linear(k: Matrix) -> Self {
        Self {
            n: k.ncols(),
            m: k.nrows(),
            gains: vec![k],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Polynomial degree of the feedback law.
    pub fn degree(&self) -> usize {
        self.gains.len()
    }

    /// `K^{[j]}`, `1 ≤ j ≤ degree`.
    pub fn gain(&self, j: usize) -> &Matrix {
        &self.gains[j - 1]
    }

    pub fn gains(&self) -> &[Matrix] {
        &self.gains
    }

    /// Even-degree feedback laws tend to destabilize for large states in
    /// one direction; callers may want to warn about them.
    pub fn has_even_degree(&self) -> bool {
        self.degree() % 2 == 0
    }

    /// Drops every gain above degree `j`.
    pub fn truncated(&self, j: usize) -> Self {
        Self {
            n: self.n,
            m: self.m,
            gains: self.gains[..j.clamp(1, self.degree())].to_vec(),
        }
    }

    pub fn eval_into(&self, x: &[f64], u: &mut [f64]) {
        u.iter_mut().for_each(|v| *v = 0.0);
        let mut power = x.to_vec();
        for (j, k) in self.gains.iter().enumerate() {
            if j > 0 {
                power = kron_vec(&power, x);
            }
            // column-major gemv
            for (col, &p) in power.iter().enumerate() {
                if p != 0.0 {
                    for (c, uc) in u.iter_mut().enumerate() {
                        *uc += k[(c, col)] * p;
                    }
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_state(self.n, x)?;
        let mut u = vec![0.0; self.m];
        self.eval_into(x, &mut u);
        Ok(u)
    }

    /// `∂u/∂x ∈ R^{m × n}`.
    pub fn jacobian(&self, x: &[f64]) -> Matrix {
        let n = self.n;
        let mut jac = self.gains[0].clone();
        let mut power = vec![1.0];
        for (j0, k) in self.gains.iter().enumerate().skip(1) {
            let j = j0 + 1;
            power = kron_vec(&power, x);
            let inner = pow(n, j - 1);
            let w = j as f64;
            for c in 0..self.m {
                for s in 0..n {
                    let mut acc = 0.0;
                    for (beta, &p) in power.iter().enumerate() {
                        acc += k[(c, s * inner + beta)] * p;
                    }
                    jac[(c, s)] += w * acc;
                }
            }
        }
        jac
    }
}

/// Collects `−R⁻¹ g(x)ᵀ ∇V(x)` by degree, truncated to degree `d−1`.
pub fn extract_gains(value: &ValueFunction, dynamics: &PolyDynamics, r: &Matrix) -> Result<PolyController> {
    let n = value.n();
    let m = dynamics.m();
    if dynamics.n() != n {
        return Err(Error::Dimension {
            context: "extract_gains state dimension",
            expected: n,
            actual: dynamics.n(),
        });
    }
    let r_inv = r.clone().cholesky().ok_or(Error::IndefiniteR)?.inverse();
    let top = value.degree() - 1;
    let mut blocks = vec![0usize];
    blocks.extend(dynamics.g.keys().copied());
    let mut gains: Vec<Matrix> = (1..=top).map(|j| Matrix::zeros(m, pow(n, j))).collect();
    for i in 2..=value.degree() {
        for &p in &blocks {
            let j = i - 1 + p;
            if j > top {
                continue;
            }
            let c = gradient_input_coeff(dynamics, value.coeff(i), p);
            gains[j - 1].gemm(-0.5, &r_inv, &c, 1.0);
        }
    }
    for (j0, k) in gains.iter_mut().enumerate() {
        if j0 == 0 {
            continue;
        }
        let j = j0 + 1;
        let mut row = vec![0.0; k.ncols()];
        for c in 0..m {
            for (col, v) in row.iter_mut().enumerate() {
                *v = k[(c, col)];
            }
            symmetrize_in_place(&mut row, n, j);
            for (col, v) in row.iter().enumerate() {
                k[(c, col)] = *v;
            }
        }
    }
    PolyController::new(n, m, gains)
}

/// `−R⁻¹ g(x)ᵀ ∇V(x)` without truncation.
pub fn optimal_feedback(value: &ValueFunction, dynamics: &PolyDynamics, r: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    let grad = eval_value_gradient(value, x)?;
    let g = dynamics.input_map(x);
    let w = g.transpose() * nalgebra::DVector::from_column_slice(&grad);
    let u = r
        .clone()
        .cholesky()
        .ok_or(Error::IndefiniteR)?
        .solve(&w);
    Ok(u.iter().map(|v| -v).collect())
}

/// The HJB residual `∇Vᵀf − ½ ∇Vᵀ g R⁻¹ gᵀ ∇V + ½(xᵀQx + Σ q_pᵀx^⊗p)` at `x`.
pub fn hjb_residual(dynamics: &PolyDynamics, cost: &PolyCost, value: &ValueFunction, x: &[f64]) -> Result<f64> {
    let grad = eval_value_gradient(value, x)?;
    let f = dynamics.drift(x);
    let g = dynamics.input_map(x);
    let w = g.transpose() * nalgebra::DVector::from_column_slice(&grad);
    let rw = cost
        .r
        .clone()
        .cholesky()
        .ok_or(Error::IndefiniteR)?
        .solve(&w);
    let mut running = quad_form(&cost.q, x);
    for (&p, qp) in &cost.q_poly {
        let mut acc = [0.0];
        qp.apply_power_acc(x, p, &mut acc);
        running += acc[0];
    }
    Ok(dot(&grad, &f) - 0.5 * w.dot(&rw) + 0.5 * running)
}

/// Largest `|HJB residual|` over `directions` scaled to each radius.
pub fn hjb_residual_profile(
    dynamics: &PolyDynamics,
    cost: &PolyCost,
    value: &ValueFunction,
    directions: &[Vec<f64>],
    radii: &[f64],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut worst = 0.0_f64;
        for d in directions {
            let x: Vec<f64> = d.iter().map(|v| v * r).collect();
            worst = worst.max(hjb_residual(dynamics, cost, value, &x)?.abs());
        }
        out.push(worst);
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `count` radii spaced evenly in log scale over `[lo, hi]`.
pub fn log_radii(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
