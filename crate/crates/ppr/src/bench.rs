//! Model selection and the benchmark sweeps behind `ppr table`.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ppr_core::control::{extract_gains, PolyController};
use ppr_core::models::{aircraft_f8, aircraft_initial_state, allen_cahn, AllenCahnConfig, ShiftedModel};
use ppr_core::sim::{simulate, ConstantInput, InputLaw, SimOptions, Trajectory};
use ppr_core::{synthesize, PolyCost, PolyDynamics, SynthesisOptions, ValueFunction};
use serde::Serialize;

use crate::model_io::load_model;
use crate::reference;
use crate::IoError;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Aircraft,
    AllenCahn { n: usize, epsilon: f64, z0: f64 },
    File { path: PathBuf },
}

pub struct LoadedModel {
    pub spec: ModelSpec,
    pub dynamics: PolyDynamics,
    pub cost: PolyCost,
    pub shifted: Option<ShiftedModel>,
}

impl ModelSpec {
    pub fn load(&self) -> Result<LoadedModel, IoError> {
        let (dynamics, cost, shifted) = match self {
            ModelSpec::Aircraft => {
                let (d, c) = aircraft_f8();
                (d, c, None)
            }
            ModelSpec::AllenCahn { n, epsilon, z0 } => {
                let model = allen_cahn(&AllenCahnConfig::new(*n, *epsilon, *z0))?;
                (model.dynamics.clone(), model.cost.clone(), Some(model))
            }
            ModelSpec::File { path } => {
                let (d, c) = load_model(path)?;
                (d, c, None)
            }
        };
        Ok(LoadedModel {
            spec: self.clone(),
            dynamics,
            cost,
            shifted,
        })
    }

    pub fn default_sim_options(&self) -> SimOptions {
        match self {
            ModelSpec::AllenCahn { .. } => SimOptions::stiff(),
            _ => SimOptions::non_stiff(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

impl LoadedModel {
    /// The open-loop law: zero physical input.
    pub fn open_loop(&self) -> ConstantInput {
        match &self.shifted {
            Some(m) => ConstantInput(m.u_ref.iter().map(|v| -v).collect()),
            None => ConstantInput::zero(self.dynamics.m()),
        }
    }
}

/// Evaluates `jobs` closures on up to `threads` workers; results keep input order.
pub fn run_parallel<T: Send, F: Fn(usize) -> T + Sync>(count: usize, threads: usize, f: F) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    let workers = threads.clamp(1, count.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|v| v.expect("every slot filled"))
        .collect()
}

/// Whether a run ended near the origin: no divergence and `‖x(T)‖ ≤ 0.05 ‖x(0)‖`.
pub fn recovered(traj: &Trajectory) -> bool {
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let start = traj.states.first().map_or(0.0, |x| norm(x));
    !traj.diverged && norm(traj.final_state()) <= 0.05 * start
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub bench: String,
    /// The swept parameter: the initial angle of attack (degrees) or epsilon.
    pub parameter: f64,
    pub controller_degree: usize,
    pub label: String,
    pub cost: Option<f64>,
    pub diverged: Option<bool>,
    pub recovered: Option<bool>,
    pub final_norm: Option<f64>,
    pub paper: Option<f64>,
    pub error: Option<String>,
}

impl Cell {
    pub fn relative_delta(&self) -> Option<f64> {
        match (self.cost, self.paper) {
            (Some(c), Some(p)) => Some((c - p) / p),
            _ => None,
        }
    }
}

/// Synthesizes the value of degree `max + 1` once and returns the controllers
/// of every requested degree from its truncations.
pub fn controllers(
    dynamics: &PolyDynamics,
    cost: &PolyCost,
    degrees: &[usize],
    opts: SynthesisOptions,
) -> Result<Vec<(usize, PolyController)>, ppr_core::Error> {
    let top = degrees.iter().copied().max().unwrap_or(1);
    let value: ValueFunction = synthesize(dynamics, cost, top + 1, opts)?;
    degrees
        .iter()
        .map(|&j| Ok((j, extract_gains(&value.truncated(j + 1), dynamics, &cost.r)?)))
        .collect()
}

fn run_cell(
    bench: &str,
    parameter: f64,
    j: usize,
    model: &LoadedModel,
    law: Result<&dyn InputLaw, String>,
    x0: &[f64],
    horizon: f64,
    opts: &SimOptions,
    paper: Option<f64>,
) -> Cell {
    let mut cell = Cell {
        bench: bench.into(),
        parameter,
        controller_degree: j,
        label: reference::controller_label(j),
        cost: None,
        diverged: None,
        recovered: None,
        final_norm: None,
        paper,
        error: None,
    };
    let law = match law {
        Ok(l) => l,
        Err(e) => {
            cell.error = Some(e);
            return cell;
        }
    };
    match simulate(&model.dynamics, &model.cost, law, x0, horizon, opts) {
        Ok(tr) => {
            cell.cost = Some(tr.total_cost());
            cell.diverged = Some(tr.diverged);
            cell.recovered = Some(recovered(&tr));
            cell.final_norm = Some(tr.final_state().iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Aircraft sweep over controller degrees and initial angles of attack.
pub fn aircraft_sweep(degrees: &[usize], alphas_deg: &[f64], horizon: f64, opts: &SimOptions, jobs: usize) -> Vec<Cell> {
    let model = ModelSpec::Aircraft.load().expect("built-in model");
    let ctrls = controllers(&model.dynamics, &model.cost, degrees, SynthesisOptions::default()).map_err(|e| e.to_string());
    let grid: Vec<(f64, usize)> = alphas_deg
        .iter()
        .flat_map(|&a| degrees.iter().map(move |&j| (a, j)))
        .collect();
    run_parallel(grid.len(), jobs, |i| {
        let (alpha, j) = grid[i];
        let law = match &ctrls {
            Ok(list) => Ok(&list.iter().find(|(d, _)| *d == j).expect("requested degree").1 as &dyn InputLaw),
            Err(e) => Err(e.clone()),
        };
        let paper = if alpha == 25.0 && horizon == 12.0 {
            reference::aircraft_reference(j)
        } else {
            None
        };
        run_cell("aircraft", alpha, j, &model, law, &aircraft_initial_state(alpha), horizon, opts, paper)
    })
}

/// Allen-Cahn sweep over epsilon and controller degrees from the metastable initial profile.
pub fn allen_cahn_sweep(
    n: usize,
    epsilons: &[f64],
    z0: f64,
    degrees: &[usize],
    horizon: f64,
    opts: &SimOptions,
    synth: SynthesisOptions,
    jobs: usize,
) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &eps in epsilons {
        let spec = ModelSpec::AllenCahn { n, epsilon: eps, z0 };
        let model = match spec.load() {
            Ok(m) => m,
            Err(e) => {
                for &j in degrees {
                    cells.push(Cell {
                        bench: "allen-cahn".into(),
                        parameter: eps,
                        controller_degree: j,
                        label: reference::controller_label(j),
                        cost: None,
                        diverged: None,
                        recovered: None,
                        final_norm: None,
                        paper: reference::allen_cahn_reference(n, eps, j),
                        error: Some(e.to_string()),
                    });
                }
                continue;
            }
        };
        let x0 = model.shifted.as_ref().expect("shifted model").metastable_initial_state();
        let ctrls = controllers(&model.dynamics, &model.cost, degrees, synth).map_err(|e| e.to_string());
        let row = run_parallel(degrees.len(), jobs, |i| {
            let j = degrees[i];
            let law = match &ctrls {
                Ok(list) => Ok(&list[i].1 as &dyn InputLaw),
                Err(e) => Err(e.clone()),
            };
            let paper = if horizon == 1000.0 && z0 == 0.5 {
                reference::allen_cahn_reference(n, eps, j)
            } else {
                None
            };
            run_cell("allen-cahn", eps, j, &model, law, &x0, horizon, opts, paper)
        });
        cells.extend(row);
    }
    cells
}

pub fn cells_to_csv(cells: &[Cell]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    let mut out = String::from("bench,parameter,controller,degree,cost,diverged,recovered,final_norm,paper,rel_delta,error\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            c.bench,
            c.parameter,
            c.label,
            c.controller_degree,
            opt(c.cost),
            c.diverged.map(|b| b.to_string()).unwrap_or_default(),
            c.recovered.map(|b| b.to_string()).unwrap_or_default(),
            opt(c.final_norm),
            opt(c.paper),
            opt(c.relative_delta()),
            c.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_results_keep_order() {
        let v = run_parallel(10, 3, |i| i * i);
        assert_eq!(v, (0..10).map(|i| i * i).collect::<Vec<_>>());
        assert!(run_parallel(0, 4, |i| i).is_empty());
    }

    #[test]
    fn truncated_controllers_match_direct_synthesis() {
        let model = ModelSpec::Aircraft.load().unwrap();
        let list = controllers(&model.dynamics, &model.cost, &[1, 3], SynthesisOptions::default()).unwrap();
        let v4 = synthesize(&model.dynamics, &model.cost, 4, SynthesisOptions::default()).unwrap();
        let direct = extract_gains(&v4, &model.dynamics, &model.cost.r).unwrap();
        assert_eq!(list[1].1, direct);
        assert_eq!(list[0].1.degree(), 1);
    }
}
