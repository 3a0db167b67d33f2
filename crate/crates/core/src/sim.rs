//! Adaptive integration of open- and closed-loop polynomial systems with the
//! running cost carried as an extra state.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::control::PolyController;
use crate::error::{Error, Result};
use crate::kronalg::norm2;
use crate::poly::{PolyCost, PolyDynamics};
use crate::Matrix;

/// A state feedback law `u(x)`.
pub trait InputLaw {
    fn m(&self) -> usize;
    fn input(&self, x: &[f64], u: &mut [f64]);
    /// `∂u/∂x`; `None` when the law does not depend on the state.
    fn jacobian(&self, x: &[f64]) -> Option<Matrix>;
}

impl InputLaw for PolyController {
    fn m(&self) -> usize {
        PolyController::m(self)
    }

    fn input(&self, x: &[f64], u: &mut [f64]) {
        self.eval_into(x, u);
    }

    fn jacobian(&self, x: &[f64]) -> Option<Matrix> {
        Some(PolyController::jacobian(self, x))
    }
}

/// Constant input, including the open-loop `u = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantInput(pub Vec<f64>);

impl ConstantInput {
    pub fn zero(m: usize) -> Self {
        Self(vec![0.0; m])
    }
}

impl InputLaw for ConstantInput {
    fn m(&self) -> usize {
        self.0.len()
    }

    fn input(&self, _x: &[f64], u: &mut [f64]) {
        u.copy_from_slice(&self.0);
    }

    fn jacobian(&self, _x: &[f64]) -> Option<Matrix> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Dormand–Prince 5(4).
    DormandPrince,
    /// Linearly implicit Rosenbrock 2(3) with the analytic Jacobian.
    Rosenbrock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub rtol: f64,
    pub atol: f64,
    pub method: Method,
    /// Upper bound on the step as a fraction of the horizon.
    pub max_step_fraction: f64,
    /// State norm beyond which the run is declared divergent.
    pub divergence_norm: f64,
}

impl SimOptions {
    /// Tight explicit setting for small non-stiff systems.
    pub fn non_stiff() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            method: Method::DormandPrince,
            max_step_fraction: 1.0 / 200.0,
            divergence_norm: 1e6,
        }
    }

    /// Rosenbrock setting for stiff semi-discretized PDEs.
    pub fn stiff() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            method: Method::Rosenbrock,
            max_step_fraction: 1.0 / 200.0,
            divergence_norm: 1e6,
        }
    }
}

impl Default for SimOptions {
    fn default() -> Self {
        Self::non_stiff()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// `½∫₀ᵗ (xᵀQx + uᵀRu + Σ q_pᵀx^⊗p) dt` at each sample.
    pub accumulated_cost: Vec<f64>,
    pub diverged: bool,
    pub message: Option<String>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn total_cost(&self) -> f64 {
        *self.accumulated_cost.last().unwrap_or(&0.0)
    }

    fn push(&mut self, t: f64, x: &[f64], u: &[f64], j: f64) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.inputs.push(u.to_vec());
        self.accumulated_cost.push(j);
    }
}

struct Augmented<'a> {
    dynamics: &'a PolyDynamics,
    cost: &'a PolyCost,
    law: &'a dyn InputLaw,
    n: usize,
    u: Vec<f64>,
}

impl Augmented<'_> {
    fn eval(&mut self, y: &[f64], out: &mut [f64]) {
        let x = &y[..self.n];
        self.law.input(x, &mut self.u);
        let f = self.dynamics.rhs(x, &self.u);
        out[..self.n].copy_from_slice(&f);
        out[self.n] = self.cost.running(x, &self.u);
    }

    fn jacobian(&mut self, y: &[f64]) -> Matrix {
        let n = self.n;
        let x = &y[..n];
        self.law.input(x, &mut self.u);
        let mut jac = Matrix::zeros(n + 1, n + 1);
        let jx = self.dynamics.state_jacobian(x, &self.u);
        jac.view_mut((0, 0), (n, n)).copy_from(&jx);
        let (gx, gu) = self.cost.running_gradient(x, &self.u);
        for i in 0..n {
            jac[(n, i)] = gx[i];
        }
        if let Some(du) = self.law.jacobian(x) {
            let g = self.dynamics.input_map(x);
            let gdu = &g * &du;
            for i in 0..n {
                for j in 0..n {
                    jac[(i, j)] += gdu[(i, j)];
                }
            }
            for j in 0..n {
                jac[(n, j)] += (0..gu.len()).map(|c| gu[c] * du[(c, j)]).sum::<f64>();
            }
        }
        jac
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &SimOptions, rms: bool) -> f64 {
    let mut acc = 0.0_f64;
    for i in 0..err.len() {
        let sc = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
        let e = err[i] / sc;
        if rms {
            acc += e * e;
        } else {
            acc = acc.max(e.abs());
        }
    }
    if rms {
        (acc / err.len() as f64).sqrt()
    } else {
        acc
    }
}

const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus fourth-order weights
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `ẋ = f(x) + g(x) u(x)` from `x0` over `[0, horizon]`.
///
/// Every accepted step is recorded; the step is capped at
/// `max_step_fraction · horizon`. A state norm above `divergence_norm`, a
/// non-finite state or a step below `1e-14 · horizon` stops the run with
/// `diverged = true`.
pub fn simulate(
    dynamics: &PolyDynamics,
    cost: &PolyCost,
    law: &dyn InputLaw,
    x0: &[f64],
    horizon: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let n = dynamics.n();
    if x0.len() != n {
        return Err(Error::Dimension {
            context: "initial state",
            expected: n,
            actual: x0.len(),
        });
    }
    if law.m() != dynamics.m() {
        return Err(Error::Dimension {
            context: "input law",
            expected: dynamics.m(),
            actual: law.m(),
        });
    }
    if !(horizon > 0.0) || !(opts.rtol > 0.0) || !(opts.atol > 0.0) {
        return Err(Error::Invalid("horizon and tolerances must be positive".into()));
    }
    let mut sys = Augmented {
        dynamics,
        cost,
        law,
        n,
        u: vec![0.0; dynamics.m()],
    };
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        accumulated_cost: Vec::new(),
        diverged: false,
        message: None,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let mut y: Vec<f64> = x0.to_vec();
    y.push(0.0);
    let mut u = vec![0.0; dynamics.m()];
    law.input(x0, &mut u);
    traj.push(0.0, x0, &u, 0.0);

    let dim = n + 1;
    let h_max = opts.max_step_fraction * horizon;
    let h_min = 1e-14 * horizon;
    let mut f0 = vec![0.0; dim];
    sys.eval(&y, &mut f0);
    let mut h = {
        let d0 = error_norm(&y, &y, &y, opts, true);
        let d1 = error_norm(&f0, &y, &y, opts, true);
        let guess = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        guess.min(h_max).max(h_min)
    };
    let mut t = 0.0;
    let mut ynew = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut fnew = vec![0.0; dim];
    let mut stages = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    let (exponent, rms) = match opts.method {
        Method::DormandPrince => (0.2, true),
        Method::Rosenbrock => (1.0 / 3.0, false),
    };
    let rb_d = 1.0 / (2.0 + 2f64.sqrt());
    let rb_e32 = 6.0 + 2f64.sqrt();
    let mut jac: Option<Matrix> = None;

    while t < horizon {
        if horizon - t < h {
            h = horizon - t;
        }
        let ok = match opts.method {
            Method::DormandPrince => {
                stages[0].copy_from_slice(&f0);
                for s in 1..7 {
                    for i in 0..dim {
                        let mut acc = 0.0;
                        for r in 0..s {
                            acc += DP_A[s][r] * stages[r][i];
                        }
                        tmp[i] = y[i] + h * acc;
                    }
                    let (head, tail) = stages.split_at_mut(s);
                    let _ = head;
                    sys.eval(&tmp, &mut tail[0]);
                }
                // the seventh stage was evaluated at y + h Σ b_r k_r
                ynew.copy_from_slice(&tmp);
                for i in 0..dim {
                    let mut e = 0.0;
                    for s in 0..7 {
                        e += DP_E[s] * stages[s][i];
                    }
                    err[i] = h * e;
                }
                fnew.copy_from_slice(&stages[6]);
                true
            }
            Method::Rosenbrock => {
                let j = jac.get_or_insert_with(|| sys.jacobian(&y));
                let w = Matrix::identity(dim, dim) - j.clone() * (h * rb_d);
                match w.lu().try_inverse() {
                    None => false,
                    Some(w_inv) => {
                        let solve = |rhs: &[f64], out: &mut [f64]| {
                            for i in 0..dim {
                                let mut acc = 0.0;
                                for k in 0..dim {
                                    acc += w_inv[(i, k)] * rhs[k];
                                }
                                out[i] = acc;
                            }
                        };
                        let (k1, rest) = stages.split_at_mut(1);
                        let (k2, rest) = rest.split_at_mut(1);
                        let (k3, rest) = rest.split_at_mut(1);
                        let f1 = &mut rest[0];
                        let (k1, k2, k3) = (&mut k1[0], &mut k2[0], &mut k3[0]);
                        solve(&f0, k1);
                        for i in 0..dim {
                            tmp[i] = y[i] + 0.5 * h * k1[i];
                        }
                        sys.eval(&tmp, f1);
                        for i in 0..dim {
                            tmp[i] = f1[i] - k1[i];
                        }
                        solve(&tmp, k2);
                        for i in 0..dim {
                            k2[i] += k1[i];
                            ynew[i] = y[i] + h * k2[i];
                        }
                        sys.eval(&ynew, &mut fnew);
                        for i in 0..dim {
                            tmp[i] = fnew[i] - rb_e32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]);
                        }
                        solve(&tmp, k3);
                        for i in 0..dim {
                            err[i] = h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]);
                        }
                        true
                    }
                }
            }
        };
        let finite = ok && ynew.iter().all(|v| v.is_finite()) && err.iter().all(|v| v.is_finite());
        let e = if finite {
            error_norm(&err, &y, &ynew, opts, rms)
        } else {
            f64::INFINITY
        };
        if e <= 1.0 {
            t = if horizon - t <= h { horizon } else { t + h };
            core::mem::swap(&mut y, &mut ynew);
            core::mem::swap(&mut f0, &mut fnew);
            law.input(&y[..n], &mut u);
            traj.push(t, &y[..n], &u, y[n]);
            traj.accepted_steps += 1;
            jac = None;
            if norm2(&y[..n]) > opts.divergence_norm {
                traj.diverged = true;
                traj.message = Some(alloc::format!("state norm exceeded {:.1e} at t = {t:.6}", opts.divergence_norm));
                break;
            }
            let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-exponent)).clamp(0.2, 5.0) };
            h = (h * factor).min(h_max);
        } else {
            traj.rejected_steps += 1;
            let factor = if e.is_finite() { (0.9 * e.powf(-exponent)).clamp(0.1, 0.5) } else { 0.1 };
            h *= factor;
            if opts.method == Method::Rosenbrock && !finite {
                jac = None;
            }
        }
        if h < h_min {
            traj.diverged = true;
            traj.message = Some(alloc::format!("step size underflow at t = {t:.6}"));
            break;
        }
    }
    Ok(traj)
}

/// Post-hoc running-cost integral over the recorded samples by composite
/// Simpson's rule on non-uniform pairs of intervals.
pub fn running_cost_integral(traj: &Trajectory, cost: &PolyCost) -> f64 {
    let len = traj.len();
    if len < 2 {
        return 0.0;
    }
    let vals: Vec<f64> = (0..len).map(|i| cost.running(&traj.states[i], &traj.inputs[i])).collect();
    let t = &traj.times;
    let simpson = |i: usize| -> f64 {
        let h0 = t[i + 1] - t[i];
        let h1 = t[i + 2] - t[i + 1];
        let s = h0 + h1;
        s / 6.0
            * ((2.0 - h1 / h0) * vals[i] + s * s / (h0 * h1) * vals[i + 1] + (2.0 - h0 / h1) * vals[i + 2])
    };
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < len {
        total += simpson(i);
        i += 2;
    }
    if i + 1 < len {
        // last interval from the quadratic through the final three samples
        let (t0, t1, t2) = (t[len - 3], t[len - 2], t[len - 1]);
        let (f0, f1, f2) = (vals[len - 3], vals[len - 2], vals[len - 1]);
        let h = t2 - t1;
        let d01 = (f1 - f0) / (t1 - t0);
        let d12 = (f2 - f1) / h;
        let c2 = (d12 - d01) / (t2 - t0);
        // ∫_{t1}^{t2} f1 + d12 (s − t1) + c2 (s − t1)(s − t2) ds
        total += h * (f1 + 0.5 * d12 * h) - c2 * h * h * h / 6.0;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::extract_gains;
    use crate::synthesis::{synthesize, SynthesisOptions};

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn decay() -> (PolyDynamics, PolyCost) {
        (
            PolyDynamics::linear(scalar(-1.0), scalar(1.0)).unwrap(),
            PolyCost::quadratic(scalar(1.0), scalar(1.0)).unwrap(),
        )
    }

    #[test]
    fn exponential_decay_both_methods() {
        let (d, c) = decay();
        for opts in [SimOptions::non_stiff(), SimOptions { rtol: 1e-8, atol: 1e-10, ..SimOptions::stiff() }] {
            let tr = simulate(&d, &c, &ConstantInput::zero(1), &[1.0], 1.0, &opts).unwrap();
            assert!((tr.final_state()[0] - (-1f64).exp()).abs() < 1e-6, "{:?}", opts.method);
            assert!(tr.len() >= 201);
            // ½∫ e^{−2t} dt
            let exact = 0.25 * (1.0 - (-2f64).exp());
            assert!((tr.total_cost() - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn lq_closed_loop_cost_is_value() {
        let (d, c) = decay();
        let v = synthesize(&d, &c, 2, SynthesisOptions::default()).unwrap();
        let k = extract_gains(&v, &d, &c.r).unwrap();
        for opts in [SimOptions::non_stiff(), SimOptions::stiff()] {
            let tr = simulate(&d, &c, &k, &[1.0], 10.0, &opts).unwrap();
            let expected = (-10.0 * 2f64.sqrt()).exp();
            assert!((tr.final_state()[0] - expected).abs() < 1e-6);
            let p = 2f64.sqrt() - 1.0;
            assert!((tr.total_cost() - 0.5 * p).abs() / (0.5 * p) < 1e-4);
            let post = running_cost_integral(&tr, &c);
            assert!((post - tr.total_cost()).abs() / tr.total_cost() < 1e-5);
        }
    }

    #[test]
    fn zero_trajectory_has_zero_cost() {
        let (d, c) = decay();
        let tr = simulate(&d, &c, &ConstantInput::zero(1), &[0.0], 5.0, &SimOptions::default()).unwrap();
        assert_eq!(tr.total_cost(), 0.0);
        assert_eq!(running_cost_integral(&tr, &c), 0.0);
    }

    #[test]
    fn blow_up_is_reported() {
        let mut f = alloc::collections::BTreeMap::new();
        f.insert(2, crate::poly::CoeffMatrix::from(scalar(1.0)));
        let d = PolyDynamics::new(scalar(0.0), f, scalar(1.0), Default::default()).unwrap();
        let c = PolyCost::quadratic(scalar(1.0), scalar(1.0)).unwrap();
        // ẋ = x² from 1 blows up at t = 1
        for opts in [SimOptions::non_stiff(), SimOptions::stiff()] {
            let tr = simulate(&d, &c, &ConstantInput::zero(1), &[1.0], 2.0, &opts).unwrap();
            assert!(tr.diverged);
            assert!(tr.final_time() < 1.0 + 1e-3);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let (d, c) = decay();
        assert!(simulate(&d, &c, &ConstantInput::zero(1), &[1.0, 2.0], 1.0, &SimOptions::default()).is_err());
        assert!(simulate(&d, &c, &ConstantInput::zero(2), &[1.0], 1.0, &SimOptions::default()).is_err());
        assert!(simulate(&d, &c, &ConstantInput::zero(1), &[1.0], 0.0, &SimOptions::default()).is_err());
    }
}
