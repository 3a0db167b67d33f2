//! Benchmark problems: the F-8 stall model and a controlled Allen-Cahn equation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::poly::{CoeffMatrix, PolyCost, PolyDynamics, SparseCoeff};
use crate::Matrix;

fn sparse(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> CoeffMatrix {
    CoeffMatrix::Sparse(SparseCoeff::new(rows, cols, entries).expect("entries in range"))
}

/// F-8 Crusader longitudinal dynamics near stall with state
/// `(angle of attack, pitch angle, pitch rate)` and the tail elevator as input.
pub fn aircraft_f8() -> (PolyDynamics, PolyCost) {
    let a = Matrix::from_row_slice(3, 3, &[-0.877, 0.0, 1.0, 0.0, 0.0, 1.0, -4.208, 0.0, -0.396]);
    // column a·3 + b multiplies x_a x_b
    let f2 = sparse(
        3,
        9,
        vec![(0, 0, 0.47), (0, 4, -0.019), (0, 2, -0.088), (2, 0, -0.47)],
    );
    let f3 = sparse(3, 27, vec![(0, 0, 3.846), (0, 2, -1.0), (2, 0, -3.564)]);
    let b = Matrix::from_column_slice(3, 1, &[-0.215, 0.0, -20.967]);
    let g2 = sparse(3, 9, vec![(0, 0, 0.28), (2, 0, 6.265)]);
    let mut f = BTreeMap::new();
    f.insert(2, f2);
    f.insert(3, f3);
    let mut g = BTreeMap::new();
    g.insert(2, g2);
    let dynamics = PolyDynamics::new(a, f, b, g).expect("consistent aircraft model");
    let cost = PolyCost::quadratic(Matrix::identity(3, 3) * 0.25, Matrix::identity(1, 1))
        .expect("valid aircraft cost");
    (dynamics, cost)
}

/// Initial state for a stall at angle of attack `alpha0_deg` degrees.
pub fn aircraft_initial_state(alpha0_deg: f64) -> Vec<f64> {
    vec![alpha0_deg * PI / 180.0, 0.0, 0.0]
}

/// Chebyshev extreme points `z_j = cos(jπ/(n−1))`, `j = 0..n−1`, from `+1` down to `−1`.
pub fn chebyshev_nodes(n: usize) -> Vec<f64> {
    let big_n = (n - 1) as f64;
    (0..n).map(|j| (j as f64 * PI / big_n).cos()).collect()
}

/// First-derivative collocation matrix on [`chebyshev_nodes`].
pub fn chebyshev_differentiation(n: usize) -> Matrix {
    let z = chebyshev_nodes(n);
    let c: Vec<f64> = (0..n)
        .map(|j| {
            let edge = if j == 0 || j == n - 1 { 2.0 } else { 1.0 };
            if j % 2 == 0 { edge } else { -edge }
        })
        .collect();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let v = c[i] / c[j] / (z[i] - z[j]);
                d[(i, j)] = v;
                row_sum += v;
            }
        }
        d[(i, i)] = -row_sum;
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllenCahnConfig {
    /// Number of Chebyshev nodes including both boundary nodes.
    pub n: usize,
    pub epsilon: f64,
    /// Interface location of the target profile.
    pub z0: f64,
    /// Actuated nodes, as 0-based indices into the full node list.
    pub control_nodes: Vec<usize>,
}

impl AllenCahnConfig {
    /// Three actuators at the nodes a quarter, half and three quarters of the
    /// way along the grid (nodes 33, 65 and 97 in 1-based numbering when `n = 129`).
    pub fn new(n: usize, epsilon: f64, z0: f64) -> Self {
        Self {
            n,
            epsilon,
            z0,
            control_nodes: default_control_nodes(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 9 || self.n % 2 == 0 {
            return Err(Error::Model(format!("node count must be odd and at least 9, got {}", self.n)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Model(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.z0 > -1.0 && self.z0 < 1.0) {
            return Err(Error::Model(format!("z0 must lie in (-1, 1), got {}", self.z0)));
        }
        if self.control_nodes.is_empty() {
            return Err(Error::Model("at least one control node is needed".into()));
        }
        for (k, &j) in self.control_nodes.iter().enumerate() {
            if j == 0 || j >= self.n - 1 {
                return Err(Error::Model(format!("control node {j} is not an interior node")));
            }
            if self.control_nodes[..k].contains(&j) {
                return Err(Error::Model(format!("control node {j} listed twice")));
            }
        }
        Ok(())
    }
}

pub fn default_control_nodes(n: usize) -> Vec<usize> {
    let last = (n - 1) as f64;
    [0.25, 0.5, 0.75]
        .iter()
        .map(|f| (f * last).round() as usize)
        .collect()
}

/// Allen-Cahn model in coordinates shifted to a controlled equilibrium.
///
/// The state holds the interior nodes `1..n−1`; the boundary values `w(1) = 1`
/// and `w(−1) = −1` are eliminated. With `x = x̄ + x_ref` and `u = ū + u_ref`,
/// `dynamics` describes `x̄` under input `ū` and `cost` penalizes `(x̄, ū)`.
#[derive(Debug, Clone)]
pub struct ShiftedModel {
    pub config: AllenCahnConfig,
    pub dynamics: PolyDynamics,
    pub cost: PolyCost,
    pub x_ref: Vec<f64>,
    pub u_ref: Vec<f64>,
    /// `‖f(x_ref) + B u_ref‖_∞` of the unshifted interior system.
    pub equilibrium_residual: f64,
    pub newton_iterations: usize,
    /// All nodes, boundaries included.
    pub nodes: Vec<f64>,
    /// `ε D²` restricted to interior rows and columns, plus the identity.
    linear: Matrix,
    /// Boundary contribution `ε (D²[:,0] − D²[:,n−1])` on interior rows.
    boundary: Vec<f64>,
}

impl ShiftedModel {
    /// Number of states after boundary elimination.
    pub fn n_states(&self) -> usize {
        self.x_ref.len()
    }

    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    /// Right-hand side of the unshifted interior system
    /// `ε D² w + w − w³ + B u` with the boundary values imposed.
    pub fn physical_rhs(&self, w: &[f64], u: &[f64]) -> Vec<f64> {
        let n = w.len();
        let mut out = self.boundary.clone();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.linear[(i, j)] * w[j];
            }
            out[i] += acc - w[i] * w[i] * w[i];
        }
        for (k, &node) in self.config.control_nodes.iter().enumerate() {
            out[node - 1] += u[k];
        }
        out
    }

    /// Shifted state for an interior profile `w`.
    pub fn shift(&self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.x_ref).map(|(a, b)| a - b).collect()
    }

    /// Full nodal profile (boundaries included) for a shifted state.
    pub fn profile(&self, x_bar: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(x_bar.len() + 2);
        w.push(1.0);
        w.extend(x_bar.iter().zip(&self.x_ref).map(|(a, b)| a + b));
        w.push(-1.0);
        w
    }

    /// Physical input for a shifted input.
    pub fn physical_input(&self, u_bar: &[f64]) -> Vec<f64> {
        u_bar.iter().zip(&self.u_ref).map(|(a, b)| a + b).collect()
    }

    /// Shifted initial state for `w(z, 0) = 0.53 z + 0.47 sin(−1.5πz)`.
    pub fn metastable_initial_state(&self) -> Vec<f64> {
        let w: Vec<f64> = self
            .interior_nodes()
            .iter()
            .map(|&z| 0.53 * z + 0.47 * (-1.5 * PI * z).sin())
            .collect();
        self.shift(&w)
    }
}

/// Number of sign changes along a nodal profile, ignoring exact zeros.
pub fn interface_count(profile: &[f64]) -> usize {
    let mut last = 0.0;
    let mut count = 0;
    for &w in profile {
        if w != 0.0 {
            if last != 0.0 && (w > 0.0) != (last > 0.0) {
                count += 1;
            }
            last = w;
        }
    }
    count
}

/// The tanh profile with interface at `z0`.
pub fn tanh_profile(z: &[f64], epsilon: f64, z0: f64) -> Vec<f64> {
    let width = (2.0 * epsilon).sqrt();
    z.iter().map(|&zj| ((zj - z0) / width).tanh()).collect()
}

/// Builds the shifted Allen-Cahn model.
///
/// The reference `(x_ref, u_ref)` solves `f(x_ref) + B u_ref = 0` with the
/// state at each actuated node pinned to the tanh profile, by Newton's method
/// seeded with that profile.
pub fn allen_cahn(cfg: &AllenCahnConfig) -> Result<ShiftedModel> {
    cfg.validate()?;
    let n_full = cfg.n;
    let n = n_full - 2;
    let m = cfg.control_nodes.len();
    let eps = cfg.epsilon;
    let nodes = chebyshev_nodes(n_full);
    let d = chebyshev_differentiation(n_full);
    let d2 = &d * &d;
    let mut linear = Matrix::identity(n, n);
    let mut boundary = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            linear[(i, j)] += eps * d2[(i + 1, j + 1)];
        }
        boundary[i] = eps * (d2[(i + 1, 0)] - d2[(i + 1, n_full - 1)]);
    }
    let mut b = Matrix::zeros(n, m);
    for (k, &node) in cfg.control_nodes.iter().enumerate() {
        b[(node - 1, k)] = 1.0;
    }

    let seed = tanh_profile(&nodes[1..n_full - 1], eps, cfg.z0);
    let pins: Vec<(usize, f64)> = cfg.control_nodes.iter().map(|&j| (j - 1, seed[j - 1])).collect();
    let mut x = seed;
    let mut u = vec![0.0; m];
    let residual = |x: &[f64], u: &[f64]| -> Vec<f64> {
        let mut r = boundary.clone();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += linear[(i, j)] * x[j];
            }
            r[i] += acc - x[i] * x[i] * x[i];
        }
        for (k, &(i, _)) in pins.iter().enumerate() {
            r[i] += u[k];
        }
        r
    };
    let scale = 1.0 + linear.amax();
    let mut iterations = 0;
    let mut res_norm = f64::INFINITY;
    for it in 0..50 {
        let r = residual(&x, &u);
        res_norm = r.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        let pin_err = pins.iter().fold(0.0, |a: f64, &(i, v)| a.max((x[i] - v).abs()));
        iterations = it;
        if res_norm <= 1e-13 * scale && pin_err <= 1e-14 {
            break;
        }
        let size = n + m;
        let mut jac = Matrix::zeros(size, size);
        let mut rhs = nalgebra::DVector::zeros(size);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] = linear[(i, j)];
            }
            jac[(i, i)] -= 3.0 * x[i] * x[i];
            rhs[i] = -r[i];
        }
        for (k, &(i, v)) in pins.iter().enumerate() {
            jac[(i, n + k)] = 1.0;
            jac[(n + k, i)] = 1.0;
            rhs[n + k] = v - x[i];
        }
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular("Allen-Cahn equilibrium Newton step"))?;
        for i in 0..n {
            x[i] += step[i];
        }
        for k in 0..m {
            u[k] += step[n + k];
        }
        iterations = it + 1;
    }
    let r = residual(&x, &u);
    res_norm = res_norm.min(r.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
    if !(res_norm <= 1e-9) {
        return Err(Error::Model(format!(
            "equilibrium Newton iteration did not converge (residual {res_norm:.3e})"
        )));
    }

    let mut a = linear.clone();
    let mut f2 = Vec::with_capacity(n);
    let mut f3 = Vec::with_capacity(n);
    let mut q4 = Vec::with_capacity(n);
    for i in 0..n {
        a[(i, i)] -= 3.0 * x[i] * x[i];
        let ii = i * n + i;
        f2.push((i, ii, -3.0 * x[i]));
        f3.push((i, ii * n + i, -1.0));
        q4.push((0, (ii * n + i) * n + i, 1.0));
    }
    let n2 = n * n;
    let mut f = BTreeMap::new();
    f.insert(2, sparse(n, n2, f2));
    f.insert(3, sparse(n, n2 * n, f3));
    let dynamics = PolyDynamics::new(a, f, b, BTreeMap::new())?;
    let mut q_poly = BTreeMap::new();
    q_poly.insert(4, sparse(1, n2 * n2, q4));
    let cost = PolyCost::new(Matrix::identity(n, n) * 0.1, Matrix::identity(m, m), q_poly)?;

    Ok(ShiftedModel {
        config: cfg.clone(),
        dynamics,
        cost,
        x_ref: x,
        u_ref: u,
        equilibrium_residual: res_norm,
        newton_iterations: iterations,
        nodes,
        linear,
        boundary,
    })
}
