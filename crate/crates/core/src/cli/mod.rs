//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 solver
//! failure, 4 regime mismatch or non-positive growth rate.

pub mod config;
pub mod io;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::entropy::{fit_decay_rate, rate_certificate};
use crate::error::{Error, Result};
use crate::grid::{Mesh, PoincareConstants};
use crate::instability::{default_tau, deviation_scaling, run_instability, PerturbationSpec};
use crate::model::{classify_equilibria, compute_masses, Masses, Params, Regime, System};
use crate::solver::{simulate, DiagnosticContext, Diagnostics, Trajectory};
use crate::spectral::{max_growth_rate, mode_spectra, Laplacian};

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "rdlab", version, about = "Reaction-diffusion stability lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the equilibria admitted by the given masses as JSON.
    Classify(MassArgs),
    /// Run a simulation from a config file.
    Simulate(RunArgs),
    /// Recompute trajectory diagnostics from a stored states CSV.
    Entropy(EntropyArgs),
    /// Per-mode spectrum of the linearization at a boundary equilibrium.
    Spectrum(SpectrumArgs),
    /// Perturb a boundary equilibrium and measure the escape.
    Instability(RunArgs),
    /// Run a config over a grid of masses, diffusion and delta values.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct MassArgs {
    #[arg(long)]
    pub system: System,
    #[arg(long, allow_hyphen_values = true)]
    pub m1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub m2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mass: Option<f64>,
}

impl MassArgs {
    fn masses(&self) -> Result<Masses> {
        let m = match self.system {
            System::P1 => match (self.m1, self.m2) {
                (Some(m1), Some(m2)) => Masses::p1(m1, m2),
                _ => return Err(Error::Config("p1 needs --m1 and --m2".into())),
            },
            System::P2 => match self.mass {
                Some(m) => Masses::p2(m),
                None => return Err(Error::Config("p2 needs --mass".into())),
            },
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub n_cells: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trajectory_csv: Option<PathBuf>,
    #[arg(long)]
    pub summary_json: Option<PathBuf>,
    #[arg(long)]
    pub states_csv: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(v) = self.t_end {
            cfg.t_end = v;
        }
        if let Some(v) = self.n_cells {
            cfg.n_cells = v;
        }
        if let Some(v) = self.dt {
            cfg.dt_init = Some(v);
        }
        if let Some(v) = self.record_every {
            cfg.record_every = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.delta {
            match cfg.instability.as_mut() {
                Some(s) => s.delta = v,
                None => {
                    return Err(Error::Config(
                        "--delta needs an `instability` section".into(),
                    ))
                }
            }
        }
        if self.trajectory_csv.is_some() {
            cfg.outputs.trajectory_csv = self.trajectory_csv.clone();
        }
        if self.summary_json.is_some() {
            cfg.outputs.summary_json = self.summary_json.clone();
        }
        if self.states_csv.is_some() {
            cfg.outputs.states_csv = self.states_csv.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone)]
pub struct EntropyArgs {
    /// States CSV written by `simulate`.
    #[arg(long)]
    pub states: PathBuf,
    /// Config that produced the states (system and diffusion are read from it).
    #[arg(long)]
    pub config: PathBuf,
    /// Output trajectory CSV; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub masses: MassArgs,
    /// Diffusion coefficients, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 1.0, 1.0])]
    pub diffusion: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub n_modes: usize,
    /// Which admissible boundary equilibrium to use.
    #[arg(long, default_value_t = 0)]
    pub boundary_index: usize,
    /// Use the mesh's discrete Laplacian eigenvalues instead of the continuum ones.
    #[arg(long)]
    pub n_cells: Option<usize>,
    /// Write the per-mode rows as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// Template experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// JSON grid: `{"masses": [[..],..], "diffusion": [[..],..], "delta": [..]}`,
    /// every key optional.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Run `instability` instead of `simulate` in every cell.
    #[arg(long)]
    pub instability: bool,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(out) => {
            if let Some(v) = out {
                print_json(&v);
            }
            0
        }
        Err(e) => {
            print_json(&error_json(&e));
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn print_json(v: &Value) {
    let mut out = std::io::stdout().lock();
    if serde_json::to_writer_pretty(&mut out, v).is_ok() {
        let _ = writeln!(out);
    }
}

pub fn error_json(e: &Error) -> Value {
    json!({
        "status": "error",
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
        "failing_t": e.failing_time(),
    })
}

fn dispatch(cmd: &Command) -> Result<Option<Value>> {
    match cmd {
        Command::Classify(m) => cmd_classify(m).map(Some),
        Command::Simulate(a) => {
            let cfg = a.load()?;
            with_summary_on_error(&cfg, cmd_simulate(&cfg)).map(Some)
        }
        Command::Entropy(a) => cmd_entropy(a),
        Command::Spectrum(a) => cmd_spectrum(a).map(Some),
        Command::Instability(a) => {
            let cfg = a.load()?;
            with_summary_on_error(&cfg, cmd_instability(&cfg)).map(Some)
        }
        Command::Sweep(a) => cmd_sweep(a).map(Some),
    }
}

/// Failed runs still leave a summary file describing the failure.
fn with_summary_on_error(cfg: &ExperimentConfig, r: Result<Value>) -> Result<Value> {
    if let Err(e) = &r {
        if let Some(p) = &cfg.outputs.summary_json {
            let _ = io::write_json(p, &error_json(e));
        }
    }
    r
}

pub fn cmd_classify(m: &MassArgs) -> Result<Value> {
    let masses = m.masses()?;
    let set = classify_equilibria(m.system, masses)?;
    Ok(json!({
        "system": m.system,
        "masses": io::masses_json(&masses),
        "regime": set.regime,
        "positive": set.positive,
        "boundary": set.boundary,
    }))
}

/// Series whose decay is fitted in the summary: the entropy where the
/// positive equilibrium is the only attractor, otherwise the squared
/// distance to the nearest equilibrium.
fn decay_series(traj: &Trajectory) -> Vec<(f64, f64)> {
    let regime = traj.context.equilibria.regime;
    traj.series(|d| match regime {
        Regime::PositiveOnly | Regime::Symmetric => d.entropy,
        _ => {
            let p = if d.dist_pos_eq.is_nan() {
                f64::INFINITY
            } else {
                d.dist_pos_eq
            };
            let b = if d.dist_bnd_eq.is_nan() {
                f64::INFINITY
            } else {
                d.dist_bnd_eq
            };
            p.min(b).powi(2)
        }
    })
}

pub fn simulation_summary(cfg: &ExperimentConfig, traj: &Trajectory) -> Value {
    let ctx = &traj.context;
    let first = &traj.samples[0].diag;
    let last = traj.last();
    let fit = fit_decay_rate(&decay_series(traj));
    let cert = rate_certificate(
        ctx.system,
        &ctx.params,
        ctx.masses,
        ctx.equilibria.regime,
        Some(traj.k_emp),
        PoincareConstants::discrete(&ctx.mesh),
    );
    json!({
        "status": "ok",
        "command": "simulate",
        "system": ctx.system,
        "n_cells": ctx.mesh.n_cells(),
        "diffusion": ctx.params.diffusion,
        "seed": cfg.seed,
        "t_end": last.t(),
        "steps_accepted": traj.steps_accepted,
        "steps_reduced": traj.steps_reduced,
        "records": traj.samples.len(),
        "masses_initial": io::masses_json(&first.masses),
        "masses_final": io::masses_json(&last.diag.masses),
        "max_mass_drift": traj.max_mass_drift(),
        "regime": ctx.equilibria.regime,
        "equilibria": {"positive": ctx.equilibria.positive, "boundary": ctx.equilibria.boundary},
        "k_emp": traj.k_emp,
        "fitted_alpha": fit.as_ref().ok().map(|f| f.alpha),
        "fit": match &fit {
            Ok(f) => serde_json::to_value(f).expect("json"),
            Err(e) => json!({"error": e.to_string()}),
        },
        "rate_certificate": match &cert {
            Ok(c) => serde_json::to_value(c).expect("json"),
            Err(e) => json!({"error": e.to_string()}),
        },
        "final_dist_pos_eq": last.diag.dist_pos_eq,
        "final_dist_bnd_eq": last.diag.dist_bnd_eq,
        "final_entropy": last.diag.entropy,
        "grad_a_time_integral": last.grad_a_time_integral,
    })
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Value> {
    let mesh = cfg.mesh()?;
    let initial = cfg.initial_state(&mesh)?;
    let masses = compute_masses(cfg.system, &initial, &mesh)?;
    masses
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
    let solver = cfg.solver_config(&masses)?;
    let traj = simulate(&initial, &solver, &mesh)?;
    if let Some(p) = &cfg.outputs.trajectory_csv {
        io::write_trajectory_csv(p, cfg.system, traj.samples.iter().map(|r| (r.t(), &r.diag)))?;
    }
    if let Some(p) = &cfg.outputs.states_csv {
        io::write_states_csv(p, &mesh, traj.samples.iter().map(|r| &r.state))?;
    }
    let summary = simulation_summary(cfg, &traj);
    if let Some(p) = &cfg.outputs.summary_json {
        io::write_json(p, &summary)?;
    }
    Ok(summary)
}

fn cmd_entropy(a: &EntropyArgs) -> Result<Option<Value>> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let states = io::read_states_csv(&a.states)?;
    let first = states
        .first()
        .ok_or_else(|| Error::Config(format!("{} holds no states", a.states.display())))?;
    let mesh = Mesh::new(first.n_cells())?;
    let masses = compute_masses(cfg.system, first, &mesh)?;
    let ctx = DiagnosticContext::new(cfg.system, Params::new(cfg.diffusion)?, mesh, masses)?;
    let diags = states
        .iter()
        .map(|s| Diagnostics::compute(&ctx, s))
        .collect::<Result<Vec<_>>>()?;
    let rows = states.iter().map(|s| s.t).zip(diags.iter());
    match &a.out {
        Some(p) => {
            io::write_trajectory_csv(p, cfg.system, rows)?;
            Ok(Some(
                json!({"status": "ok", "records": states.len(), "out": p}),
            ))
        }
        None => {
            io::write_trajectory(std::io::stdout().lock(), cfg.system, rows)?;
            Ok(None)
        }
    }
}

pub fn cmd_spectrum(a: &SpectrumArgs) -> Result<Value> {
    let masses = a.masses.masses()?;
    let system = a.masses.system;
    let d: [f64; 3] = a
        .diffusion
        .clone()
        .try_into()
        .map_err(|_| Error::Config("--diffusion takes three values".into()))?;
    let params = Params::new(d).map_err(|e| Error::Config(e.to_string()))?;
    if a.n_modes == 0 {
        return Err(Error::Config("--n-modes must be at least 1".into()));
    }
    let set = classify_equilibria(system, masses)?;
    let eq = *set.boundary.get(a.boundary_index).ok_or_else(|| {
        Error::RegimeMismatch(format!(
            "{masses:?} admit {} boundary equilibria, index {} requested",
            set.boundary.len(),
            a.boundary_index
        ))
    })?;
    let kind = match a.n_cells {
        Some(n) => Laplacian::Discrete(Mesh::new(n)?),
        None => Laplacian::Continuum,
    };
    let rows = mode_spectra(system, &params, &eq, kind, a.n_modes)?;
    let (rate, mode) = max_growth_rate(system, &params, masses, &eq, a.n_modes)?;
    if let Some(p) = &a.out {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["k", "laplacian_eigenvalue", "eig1", "eig2", "eig3"])?;
        for r in &rows {
            let mut rec = vec![r.mode_index.to_string(), io::fmt(r.laplacian_eigenvalue)];
            rec.extend(r.operator_eigenvalues.iter().map(|&v| io::fmt(v)));
            w.write_record(rec)?;
        }
        w.flush()?;
    }
    Ok(json!({
        "system": system,
        "masses": io::masses_json(&masses),
        "boundary_eq": eq,
        "max_rate": rate,
        "attaining_mode": mode,
        "modes": rows,
    }))
}

pub fn cmd_instability(cfg: &ExperimentConfig) -> Result<Value> {
    let section = cfg
        .instability
        .clone()
        .ok_or_else(|| Error::Config("instability runs need an `instability` section".into()))?;
    let mesh = cfg.mesh()?;
    let masses = cfg.masses()?;
    let eq = cfg.boundary_eq(masses)?;
    let solver = cfg.solver_config(&masses)?;
    let tau = section.tau.unwrap_or_else(|| default_tau(&masses));
    let spec = PerturbationSpec {
        delta: section.delta,
        shape: section.shape.clone(),
    };
    let mut report = run_instability(masses, eq, &spec, tau, &solver, &mesh)?;
    let mut scaling = Value::Null;
    if let (Some(deltas), Some(t_probe)) = (&section.deltas, section.t_probe) {
        let s = deviation_scaling(
            masses,
            eq,
            &section.shape,
            deltas,
            t_probe,
            tau,
            &solver,
            &mesh,
        )?;
        report.deviation_scaling_exponent = Some(s.exponent);
        scaling = serde_json::to_value(&s)?;
    }
    if let Some(p) = &cfg.outputs.trajectory_csv {
        io::write_instability_csv(p, &report.samples)?;
    }
    let mut v = serde_json::to_value(&report)?;
    let obj = v.as_object_mut().expect("report is an object");
    obj.remove("samples");
    obj.insert("status".into(), json!("ok"));
    obj.insert("command".into(), json!("instability"));
    obj.insert("seed".into(), json!(cfg.seed));
    obj.insert("masses".into(), io::masses_json(&masses));
    obj.insert("n_samples".into(), json!(report.samples.len()));
    obj.insert("deviation_scaling".into(), scaling);
    if let Some(p) = &cfg.outputs.summary_json {
        io::write_json(p, &v)?;
    }
    Ok(v)
}

#[derive(serde::Deserialize, Debug, Default)]
struct Grid {
    #[serde(default)]
    masses: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    diffusion: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    delta: Option<Vec<f64>>,
}

struct Cell {
    index: usize,
    masses: Option<Vec<f64>>,
    diffusion: [f64; 3],
    delta: Option<f64>,
}

fn sweep_cells(template: &ExperimentConfig, grid: &Grid) -> Vec<Cell> {
    let masses: Vec<Option<Vec<f64>>> = match &grid.masses {
        Some(m) => m.iter().cloned().map(Some).collect(),
        None => vec![template.masses.clone()],
    };
    let diffusion = grid
        .diffusion
        .clone()
        .unwrap_or_else(|| vec![template.diffusion]);
    let delta: Vec<Option<f64>> = match &grid.delta {
        Some(d) => d.iter().copied().map(Some).collect(),
        None => vec![template.instability.as_ref().map(|s| s.delta)],
    };
    let mut cells = Vec::new();
    for m in &masses {
        for d in &diffusion {
            for dl in &delta {
                cells.push(Cell {
                    index: cells.len(),
                    masses: m.clone(),
                    diffusion: *d,
                    delta: *dl,
                });
            }
        }
    }
    cells
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| io::fmt(*x)).collect::<Vec<_>>().join(";")
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<Value> {
    let template = ExperimentConfig::load(&a.config)?;
    let grid: Grid = serde_json::from_str(
        &std::fs::read_to_string(&a.grid)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", a.grid.display())))?,
    )
    .map_err(|e| Error::Config(format!("{}: {e}", a.grid.display())))?;
    if grid.delta.is_some() && !a.instability {
        return Err(Error::Config("a delta grid needs --instability".into()));
    }
    std::fs::create_dir_all(&a.out_dir)?;
    let cells = sweep_cells(&template, &grid);
    let results: Vec<(Result<Value>, &Cell)> = cells
        .par_iter()
        .map(|cell| (run_cell(&template, cell, &a.out_dir, a.instability), cell))
        .collect();

    let path = a.out_dir.join("index.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "cell",
        "masses",
        "diffusion",
        "delta",
        "status",
        "exit_code",
        "error",
        "fitted_alpha",
        "growth_rate",
        "escape_time",
        "final_distance",
    ])?;
    let mut ok = 0usize;
    let mut first_code = 0;
    for (res, cell) in &results {
        let masses = cell.masses.as_deref().map(join_f64).unwrap_or_default();
        let delta = cell.delta.map(io::fmt).unwrap_or_default();
        let num = |v: &Value, k: &str| {
            v.get(k)
                .and_then(Value::as_f64)
                .map(io::fmt)
                .unwrap_or_default()
        };
        let rec = match res {
            Ok(v) => {
                ok += 1;
                let dist = match (v.get("final_dist_pos_eq"), v.get("final_dist_bnd_eq")) {
                    (Some(p), Some(b)) => {
                        let p = p.as_f64().unwrap_or(f64::INFINITY);
                        let b = b.as_f64().unwrap_or(f64::INFINITY);
                        io::fmt(p.min(b))
                    }
                    _ => String::new(),
                };
                vec![
                    cell.index.to_string(),
                    masses,
                    join_f64(&cell.diffusion),
                    delta,
                    "ok".into(),
                    "0".into(),
                    String::new(),
                    num(v, "fitted_alpha"),
                    num(v, "growth_rate"),
                    num(v, "escape_time_empirical"),
                    dist,
                ]
            }
            Err(e) => {
                if first_code == 0 {
                    first_code = e.exit_code();
                }
                vec![
                    cell.index.to_string(),
                    masses,
                    join_f64(&cell.diffusion),
                    delta,
                    "error".into(),
                    e.exit_code().to_string(),
                    e.kind().into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]
            }
        };
        w.write_record(rec)?;
    }
    w.flush()?;
    if ok == 0 && !results.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "every sweep cell failed (first exit code {first_code}); see {}",
            path.display()
        )));
    }
    Ok(json!({
        "status": "ok",
        "cells": results.len(),
        "succeeded": ok,
        "index": path,
    }))
}

fn run_cell(
    template: &ExperimentConfig,
    cell: &Cell,
    out_dir: &Path,
    instability: bool,
) -> Result<Value> {
    let mut cfg = template.clone();
    cfg.masses = cell.masses.clone();
    cfg.diffusion = cell.diffusion;
    cfg.seed = template.seed.wrapping_add(cell.index as u64);
    if let (Some(d), Some(s)) = (cell.delta, cfg.instability.as_mut()) {
        s.delta = d;
    }
    let dir = out_dir.join(format!("cell_{:04}", cell.index));
    cfg.outputs.trajectory_csv = Some(dir.join("trajectory.csv"));
    cfg.outputs.summary_json = Some(dir.join("summary.json"));
    cfg.outputs.states_csv = None;
    let r = cfg.validate().and_then(|_| {
        if instability {
            cmd_instability(&cfg)
        } else {
            cmd_simulate(&cfg)
        }
    });
    with_summary_on_error(&cfg, r)
}
