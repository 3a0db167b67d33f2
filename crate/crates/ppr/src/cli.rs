//! The `ppr` command-line interface.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ppr_core::control::{extract_gains, hjb_residual_profile, log_radii, loglog_slope};
use ppr_core::models::aircraft_initial_state;
use ppr_core::sim::{simulate, InputLaw, Method, SimOptions};
use ppr_core::synthesis::{coefficient_len, hjb_degree_residual, unit_sphere_samples, DEFAULT_ELEMENT_BUDGET};
use ppr_core::{SynthesisOptions, Synthesizer};
use serde_json::json;

use crate::bench::{aircraft_sweep, allen_cahn_sweep, cells_to_csv, recovered, ModelSpec};
use crate::manifest::RunManifest;
use crate::trajectory_io::save_trajectory;
use crate::value_io::{load_controller, load_value, save_controller, save_value};
use crate::IoError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MODEL: i32 = 3;
pub const EXIT_SYNTHESIS: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

/// Polynomial-polynomial regulator synthesis, simulation and verification.
#[derive(Debug, Parser)]
#[command(name = "ppr", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the value function and feedback law of a given degree.
    Synthesize(SynthesizeArgs),
    /// Integrate the open- or closed-loop system and its running cost.
    Simulate(SimulateArgs),
    /// Check the HJB residual of a value function degree by degree.
    Verify(VerifyArgs),
    /// Run a benchmark sweep and compare against published costs.
    Table(TableArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// `aircraft`, `allen-cahn`, or a path to a JSON model file.
    #[arg(long)]
    pub model: String,
    /// Allen-Cahn: number of Chebyshev nodes including the boundaries.
    #[arg(long, default_value_t = 33)]
    pub n: usize,
    /// Allen-Cahn: diffusion coefficient.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Allen-Cahn: interface location of the target profile.
    #[arg(long, default_value_t = 0.5)]
    pub z0: f64,
}

impl ModelArgs {
    pub fn spec(&self) -> ModelSpec {
        match self.model.as_str() {
            "aircraft" => ModelSpec::Aircraft,
            "allen-cahn" => ModelSpec::AllenCahn {
                n: self.n,
                epsilon: self.epsilon,
                z0: self.z0,
            },
            path => ModelSpec::File { path: PathBuf::from(path) },
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Value function degree d ≥ 2; the feedback law has degree d − 1.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub degree: u32,
    /// Relative residual tolerance for the linear solves.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    DormandPrince,
    Rosenbrock,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Controller file written by `synthesize`.
    #[arg(long, conflicts_with = "open_loop", required_unless_present = "open_loop")]
    pub controller: Option<PathBuf>,
    /// Zero physical input.
    #[arg(long)]
    pub open_loop: bool,
    /// Initial state in model coordinates.
    #[arg(long, num_args = 1.., allow_negative_numbers = true, group = "initial")]
    pub x0: Option<Vec<f64>>,
    /// Aircraft: initial angle of attack in degrees.
    #[arg(long, group = "initial")]
    pub alpha0_deg: Option<f64>,
    /// File with whitespace- or comma-separated initial state entries.
    #[arg(long, group = "initial")]
    pub x0_file: Option<PathBuf>,
    /// Allen-Cahn: the metastable initial profile 0.53z + 0.47 sin(−1.5πz).
    #[arg(long, group = "initial")]
    pub metastable: bool,
    /// Horizon.
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Value function file written by `synthesize`.
    #[arg(long)]
    pub value: PathBuf,
    /// Largest accepted relative degree residual.
    #[arg(long, default_value_t = 1e-8)]
    pub threshold: f64,
    /// Number of sampled unit directions.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Optional directory for the JSON report and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Bench {
    Aircraft,
    AllenCahn,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long, value_enum)]
    pub bench: Bench,
    /// Allen-Cahn: node count.
    #[arg(long, default_value_t = 33)]
    pub n: usize,
    /// Allen-Cahn: diffusion coefficients.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.0075, 0.005])]
    pub epsilon: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub z0: f64,
    /// Controller degrees (1 = LQR).
    #[arg(long, value_delimiter = ',')]
    pub degrees: Option<Vec<usize>>,
    /// Aircraft: initial angles of attack in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = vec![25.0])]
    pub alpha0_deg: Vec<f64>,
    /// Horizon (12 for the aircraft, 1000 for Allen-Cahn by default).
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Concurrent sweep cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

fn element_budget() -> Result<u128, String> {
    match std::env::var("PPR_ELEMENT_BUDGET") {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|b| *b >= 0.0)
            .map(|b| b as u128)
            .ok_or_else(|| format!("PPR_ELEMENT_BUDGET={v:?} is not a non-negative number")),
        Err(_) => Ok(DEFAULT_ELEMENT_BUDGET),
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

fn model_error_code(e: &IoError) -> i32 {
    match e {
        IoError::Core(ppr_core::Error::Model(_)) | IoError::Format(_) | IoError::Json(_) | IoError::Io(_) => EXIT_MODEL,
        IoError::Core(_) => EXIT_MODEL,
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|s| s.to_string_lossy().into_owned()).collect();
    match cli.command {
        Command::Synthesize(a) => cmd_synthesize(&a, argv),
        Command::Simulate(a) => cmd_simulate(&a, argv),
        Command::Verify(a) => cmd_verify(&a, argv),
        Command::Table(a) => cmd_table(&a, argv),
    }
}

fn create_dir(dir: &Path) -> Result<(), i32> {
    std::fs::create_dir_all(dir).map_err(|e| fail(EXIT_IO, format!("cannot create {}: {e}", dir.display())))
}

pub fn cmd_synthesize(a: &SynthesizeArgs, argv: Vec<String>) -> i32 {
    let budget = match element_budget() {
        Ok(b) => b,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let spec = a.model.spec();
    let model = match spec.load() {
        Ok(m) => m,
        Err(e) => return fail(model_error_code(&e), e),
    };
    if let Err(code) = create_dir(&a.out) {
        return code;
    }
    let d = a.degree as usize;
    let opts = SynthesisOptions {
        tol: a.tol,
        element_budget: budget,
    };
    let start = Instant::now();
    let result = (|| {
        if (model.dynamics.n() as u128).checked_pow(d as u32).is_none_or(|e| e > budget) {
            return Err(ppr_core::Error::MemoryBudget {
                degree: d,
                elements: (model.dynamics.n() as u128).saturating_pow(d as u32),
                budget,
            });
        }
        let mut synth = Synthesizer::new(&model.dynamics, &model.cost, opts)?;
        let mut times = vec![start.elapsed().as_secs_f64()];
        while synth.degree() < d {
            synth.next_degree()?;
            times.push(start.elapsed().as_secs_f64());
        }
        let reports = synth.reports().to_vec();
        Ok((synth.into_value(), reports, times))
    })();
    let (value, reports, times) = match result {
        Ok(r) => r,
        Err(e) => return fail(EXIT_SYNTHESIS, e),
    };
    let ctrl = match extract_gains(&value, &model.dynamics, &model.cost.r) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_SYNTHESIS, e),
    };
    let lqr = -(model.cost.r.clone().cholesky().expect("validated R").solve(&(model.dynamics.b.transpose() * value.v2())));
    let lqr_gap = (ctrl.gain(1) - &lqr).amax();

    let directions = unit_sphere_samples(model.dynamics.n(), 200, 0x5eed);
    let hjb_affordable = coefficient_len(model.dynamics.n(), d).is_some_and(|len| len <= 1 << 22);
    let mut degrees = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let hjb = hjb_affordable.then(|| hjb_degree_residual(&model.dynamics, &model.cost, &value, r.degree, &directions));
        degrees.push(json!({
            "degree": r.degree,
            "solve_residual": r.solve_residual,
            "hjb_residual_abs": hjb.map(|h| h.max_abs),
            "hjb_residual_rel": hjb.map(|h| h.relative()),
            "elapsed_s": times[i],
        }));
    }
    let mut warnings = Vec::new();
    if ctrl.has_even_degree() {
        let w = format!(
            "feedback degree {} is even; the value function has odd degree {} and is not a local Lyapunov function away from the origin",
            ctrl.degree(),
            d
        );
        eprintln!("warning: {w}");
        warnings.push(w);
    }
    let meta = json!({ "model": spec.to_json(), "degree": d });
    let value_path = a.out.join("value.json");
    let ctrl_path = a.out.join("controller.json");
    let report_path = a.out.join("report.json");
    let report = json!({
        "model": spec.to_json(),
        "n": model.dynamics.n(),
        "m": model.dynamics.m(),
        "degree": d,
        "controller_degree": ctrl.degree(),
        "lqr_gain": lqr.iter().copied().collect::<Vec<f64>>(),
        "lqr_gain_max_abs_difference": lqr_gap,
        "degrees": degrees,
        "total_time_s": start.elapsed().as_secs_f64(),
        "warnings": warnings,
        "reference_state": model.shifted.as_ref().map(|m| json!({
            "x_ref": m.x_ref, "u_ref": m.u_ref, "equilibrium_residual": m.equilibrium_residual,
            "state_count": m.n_states(), "node_count": m.config.n, "control_nodes": m.config.control_nodes,
        })),
    });
    let written = (|| -> Result<(), IoError> {
        save_value(&value_path, &value, meta.clone())?;
        save_controller(&ctrl_path, &ctrl, meta.clone())?;
        std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
        let mut manifest = RunManifest::new("synthesize", argv, spec.to_json());
        manifest.degree = Some(d);
        manifest.tolerances = json!({ "tol": a.tol, "element_budget": budget.to_string() });
        manifest.outputs = vec![value_path.clone(), ctrl_path.clone(), report_path.clone()];
        manifest.save(&a.out.join("manifest.json"))
    })();
    if let Err(e) = written {
        return fail(EXIT_IO, e);
    }
    println!(
        "synthesized degree {d} for {} states in {:.3} s; K1 matches the LQR gain to {lqr_gap:.2e}",
        model.dynamics.n(),
        start.elapsed().as_secs_f64()
    );
    EXIT_OK
}

fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}")))
        .collect()
}

pub fn cmd_simulate(a: &SimulateArgs, argv: Vec<String>) -> i32 {
    let spec = a.model.spec();
    let model = match spec.load() {
        Ok(m) => m,
        Err(e) => return fail(model_error_code(&e), e),
    };
    let n = model.dynamics.n();
    let x0 = if let Some(x) = &a.x0 {
        x.clone()
    } else if let Some(alpha) = a.alpha0_deg {
        if spec != ModelSpec::Aircraft {
            return fail(EXIT_USAGE, "--alpha0-deg applies to the aircraft model only");
        }
        aircraft_initial_state(alpha)
    } else if let Some(path) = &a.x0_file {
        match std::fs::read_to_string(path).map_err(|e| e.to_string()).and_then(|t| parse_vector(&t)) {
            Ok(v) => v,
            Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", path.display())),
        }
    } else if a.metastable {
        match &model.shifted {
            Some(m) => m.metastable_initial_state(),
            None => return fail(EXIT_USAGE, "--metastable applies to the Allen-Cahn model only"),
        }
    } else {
        return fail(EXIT_USAGE, "one of --x0, --alpha0-deg, --x0-file or --metastable is required");
    };
    if x0.len() != n {
        return fail(EXIT_USAGE, format!("initial state has {} entries, the model has {n} states", x0.len()));
    }
    if !(a.horizon > 0.0) {
        return fail(EXIT_USAGE, "--T must be positive");
    }
    let mut opts = spec.default_sim_options();
    if let Some(r) = a.rtol {
        opts.rtol = r;
    }
    if let Some(t) = a.atol {
        opts.atol = t;
    }
    if let Some(m) = a.method {
        opts.method = match m {
            MethodArg::DormandPrince => Method::DormandPrince,
            MethodArg::Rosenbrock => Method::Rosenbrock,
        };
    }
    let ctrl;
    let open;
    let law: &dyn InputLaw = match &a.controller {
        Some(path) => {
            ctrl = match load_controller(path) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_MODEL, format!("{}: {e}", path.display())),
            };
            if ctrl.n() != n || ctrl.m() != model.dynamics.m() {
                return fail(EXIT_MODEL, "controller dimensions do not match the model");
            }
            &ctrl
        }
        None => {
            open = model.open_loop();
            &open
        }
    };
    if let Err(code) = create_dir(&a.out) {
        return code;
    }
    let traj = match simulate(&model.dynamics, &model.cost, law, &x0, a.horizon, &opts) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let final_norm = traj.final_state().iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut summary = json!({
        "final_time": traj.final_time(),
        "final_state_norm": final_norm,
        "total_cost": traj.total_cost(),
        "diverged": traj.diverged,
        "recovered": recovered(&traj),
        "message": traj.message,
        "samples": traj.len(),
        "accepted_steps": traj.accepted_steps,
        "rejected_steps": traj.rejected_steps,
    });
    if let Some(m) = &model.shifted {
        let counts: Vec<usize> = [0, traj.len() - 1]
            .iter()
            .map(|&i| ppr_core::models::interface_count(&m.profile(&traj.states[i])))
            .collect();
        summary["interfaces_initial"] = json!(counts[0]);
        summary["interfaces_final"] = json!(counts[1]);
    }
    let traj_path = a.out.join("trajectory.csv");
    let summary_path = a.out.join("summary.json");
    let written = (|| -> Result<(), IoError> {
        save_trajectory(&traj_path, &traj)?;
        std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
        let mut manifest = RunManifest::new("simulate", argv, spec.to_json());
        manifest.horizon = Some(a.horizon);
        manifest.tolerances = json!({ "rtol": opts.rtol, "atol": opts.atol, "method": format!("{:?}", opts.method) });
        manifest.outputs = vec![traj_path.clone(), summary_path.clone()];
        manifest.save(&a.out.join("manifest.json"))
    })();
    if let Err(e) = written {
        return fail(EXIT_IO, e);
    }
    println!(
        "cost {:.9} over [0, {}], final |x| {:.3e}{}",
        traj.total_cost(),
        traj.final_time(),
        final_norm,
        if traj.diverged { ", diverged" } else { "" }
    );
    EXIT_OK
}

pub fn cmd_verify(a: &VerifyArgs, argv: Vec<String>) -> i32 {
    let spec = a.model.spec();
    let model = match spec.load() {
        Ok(m) => m,
        Err(e) => return fail(model_error_code(&e), e),
    };
    let value = match load_value(&a.value) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_MODEL, format!("{}: {e}", a.value.display())),
    };
    if value.n() != model.dynamics.n() {
        return fail(EXIT_MODEL, "value function dimension does not match the model");
    }
    let directions = unit_sphere_samples(value.n(), a.samples.max(1), 0x5eed);
    let d = value.degree();
    println!("{:>6} {:>14} {:>14} {:>8}", "degree", "abs residual", "rel residual", "status");
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for k in 2..=d + 1 {
        let r = hjb_degree_residual(&model.dynamics, &model.cost, &value, k, &directions);
        let in_range = k <= d;
        let ok = !in_range || r.relative() <= a.threshold;
        if !ok {
            failed.push(k);
        }
        let status = if !in_range { "(beyond d)" } else if ok { "pass" } else { "FAIL" };
        println!("{k:>6} {:>14.3e} {:>14.3e} {status:>8}", r.max_abs, r.relative());
        rows.push(json!({ "degree": k, "abs": r.max_abs, "rel": r.relative(), "in_range": in_range, "pass": ok }));
    }
    let radii = log_radii(1e-3, 1e-1, 9);
    let profile = match hjb_residual_profile(&model.dynamics, &model.cost, &value, &directions, &radii) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_MODEL, e),
    };
    let slope = loglog_slope(&radii, &profile);
    println!("log-log slope of the full residual over |x| in [1e-3, 1e-1]: {slope:.3} (truncation order {})", d + 1);
    if let Some(out) = &a.out {
        if let Err(code) = create_dir(out) {
            return code;
        }
        let report = json!({ "degrees": rows, "radii": radii, "max_residual": profile, "slope": slope, "threshold": a.threshold });
        let path = out.join("verify.json");
        let written = (|| -> Result<(), IoError> {
            std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            let mut manifest = RunManifest::new("verify", argv, spec.to_json());
            manifest.degree = Some(d);
            manifest.tolerances = json!({ "threshold": a.threshold, "samples": a.samples });
            manifest.outputs = vec![path.clone()];
            manifest.save(&out.join("manifest.json"))
        })();
        if let Err(e) = written {
            return fail(EXIT_IO, e);
        }
    }
    if failed.is_empty() {
        EXIT_OK
    } else {
        fail(EXIT_VERIFY, format!("degree residual above {:.1e} at degree(s) {failed:?}", a.threshold))
    }
}

pub fn cmd_table(a: &TableArgs, argv: Vec<String>) -> i32 {
    let budget = match element_budget() {
        Ok(b) => b,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let start = Instant::now();
    let (cells, horizon, model) = match a.bench {
        Bench::Aircraft => {
            let degrees = a.degrees.clone().unwrap_or_else(|| vec![1, 3, 5, 7]);
            let horizon = a.horizon.unwrap_or(12.0);
            let opts = SimOptions::non_stiff();
            (aircraft_sweep(&degrees, &a.alpha0_deg, horizon, &opts, a.jobs), horizon, ModelSpec::Aircraft.to_json())
        }
        Bench::AllenCahn => {
            let degrees = a.degrees.clone().unwrap_or_else(|| vec![1, 2, 3]);
            let horizon = a.horizon.unwrap_or(1000.0);
            let synth = SynthesisOptions {
                element_budget: budget,
                ..Default::default()
            };
            let cells = allen_cahn_sweep(a.n, &a.epsilon, a.z0, &degrees, horizon, &SimOptions::stiff(), synth, a.jobs);
            (cells, horizon, json!({ "kind": "allen-cahn", "n": a.n, "epsilon": a.epsilon, "z0": a.z0 }))
        }
    };
    println!("{:<10} {:<15} {:>18} {:>14} {:>10}", "parameter", "controller", "cost", "paper", "delta");
    for c in &cells {
        let cost = c
            .cost
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| c.error.clone().unwrap_or_default());
        let paper = c.paper.map(|v| format!("{v:.6}")).unwrap_or_default();
        let delta = c.relative_delta().map(|v| format!("{:+.2}%", 100.0 * v)).unwrap_or_default();
        let flag = if c.diverged == Some(true) { " (diverged)" } else { "" };
        println!("{:<10} {:<15} {cost:>18} {paper:>14} {delta:>10}{flag}", c.parameter, c.label);
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if let Err(code) = create_dir(parent) {
            return code;
        }
    }
    let manifest_path = a.out.with_extension("manifest.json");
    let written = (|| -> Result<(), IoError> {
        std::fs::write(&a.out, cells_to_csv(&cells))?;
        let mut manifest = RunManifest::new("table", argv, model);
        manifest.horizon = Some(horizon);
        manifest.tolerances = json!({ "jobs": a.jobs, "elapsed_s": start.elapsed().as_secs_f64() });
        manifest.outputs = vec![a.out.clone()];
        manifest.save(&manifest_path)
    })();
    if let Err(e) = written {
        return fail(EXIT_IO, e);
    }
    EXIT_OK
}
