//! Declarative parameter sweeps: configuration, execution, CSV output and
//! truncation-convergence checks.

mod config;
mod output;
mod scenarios;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::analytic;
use crate::dynamics::{self, EvolveOptions, PeriodicOptions};
use crate::hilbert::{DensityMatrix, Qubit};
use crate::model::{ModelError, SystemParams};
use crate::observables::{g2_zero, magnon_moments, PopulationVector, MEAN_NUMBER_FLOOR};

pub use config::{
    linspace, Axis, InitialState, Kind, Linked, Sampling, ScenarioConfig, SolverOptions, TimeOptions, UserParams,
    MAX_AXES, PARAM_NAMES,
};
pub use output::{round_sig, Cell, SweepResult, SIGNIFICANT_DIGITS};
pub use scenarios::{built_in_scenarios, find_scenario, BUILT_IN};

/// Populations reported per record, `P0 … P{N-1}`.
pub const REPORTED_POPULATIONS: usize = 4;
/// Largest relative change in g² accepted between consecutive truncations.
pub const CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

/// Execution settings that do not change results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// A finished sweep with per-point diagnostics.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: SweepResult,
    /// One JSON object per grid point, in grid order.
    pub diagnostics: Vec<Value>,
    pub failures: usize,
    pub wall_seconds: f64,
}

impl RunOutput {
    /// Write the CSV to `path` and the JSON-lines diagnostics next to it.
    pub fn write(&self, path: &Path) -> Result<PathBuf, ExperimentError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.result.write_csv(BufWriter::new(File::create(path)?))?;
        let side = sidecar_path(path);
        let mut w = BufWriter::new(File::create(&side)?);
        for d in &self.diagnostics {
            writeln!(w, "{d}")?;
        }
        let summary = json!({
            "summary": true,
            "points": self.diagnostics.len(),
            "failures": self.failures,
            "wall_s": self.wall_seconds,
        });
        writeln!(w, "{summary}")?;
        w.flush()?;
        Ok(side)
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("jsonl")
}

struct PointOutcome {
    rows: Vec<Vec<Cell>>,
    diag: Value,
    ok: bool,
}

fn value_columns(cfg: &ScenarioConfig) -> Vec<String> {
    let pops = (0..REPORTED_POPULATIONS).map(|k| format!("P{k}"));
    let mut cols: Vec<String> = match cfg.kind {
        Kind::SteadyState | Kind::Periodic => ["log10_g2", "g2"].map(String::from).into_iter().chain(pops).collect(),
        Kind::TimeSeries => ["kappa_t", "t_us", "log10_g2"].map(String::from).into_iter().chain(pops).collect(),
        Kind::Analytic => ["log10_g2_full", "log10_g2_approx", "log10_g2_closed"].map(String::from).to_vec(),
        Kind::Roots => [
            "l1",
            "l2",
            "d2g2_dl2_at_l1",
            "log10_g2_analytic_l1",
            "log10_g2_numeric_l1",
            "log10_g2_analytic_l2",
            "log10_g2_numeric_l2",
            "root_method",
        ]
        .map(String::from)
        .to_vec(),
    };
    if cfg.solver.analytic && matches!(cfg.kind, Kind::SteadyState | Kind::Periodic) {
        cols.push("log10_g2_analytic".into());
    }
    cols.push("status".into());
    cols
}

/// Log-scale value; g² ≤ 0 (e.g. exact blockade) maps to −∞.
fn log10(x: f64) -> f64 {
    x.log10()
}

fn population_cells(rho: &DensityMatrix) -> Vec<Cell> {
    match PopulationVector::from_state(rho) {
        Ok(p) => (0..REPORTED_POPULATIONS).map(|k| Cell::num(p.get(k))).collect(),
        Err(_) => vec![Cell::Missing; REPORTED_POPULATIONS],
    }
}

/// Steady state appropriate to the parameters: periodic if a longitudinal
/// coupling is present and `periodic` is requested, static otherwise.
fn long_time_state(p: &SystemParams, solver: &SolverOptions, periodic: bool) -> Result<(DensityMatrix, Value), String> {
    if periodic && p.g_rp > 0.0 {
        let opts = PeriodicOptions {
            sampling: solver.sampling.into(),
            evolve: EvolveOptions { steps_per_period: solver.steps_per_period, ..Default::default() },
            ..Default::default()
        };
        let s = dynamics::steady_state_periodic_with(p, &opts).map_err(|e| e.to_string())?;
        let diag = json!({
            "solver": "periodic",
            "period_change": s.change,
            "periods": s.periods,
            "steps_per_period": s.steps_per_period,
        });
        Ok((s.state, diag))
    } else {
        let l = dynamics::system_liouvillian(p).map_err(|e| e.to_string())?;
        let (rho, rep) = dynamics::steady_state_with_report(&l).map_err(|e| e.to_string())?;
        Ok((rho, json!({ "solver": "steady_state", "residual": rep.residual })))
    }
}

fn status_cell(err: &Option<String>) -> Cell {
    Cell::Text(err.as_ref().map_or_else(|| "ok".to_string(), |e| format!("error: {e}")))
}

fn evaluate(cfg: &ScenarioConfig, axes: &[f64], user: &UserParams) -> PointOutcome {
    let axis_cells: Vec<Cell> = axes.iter().map(|&x| Cell::num(x)).collect();
    let width = value_columns(cfg).len();
    let failed = |msg: String, diag: Value| {
        let mut row = axis_cells.clone();
        row.extend(std::iter::repeat(Cell::Missing).take(width - 1));
        row.push(Cell::Text(format!("error: {msg}")));
        PointOutcome { rows: vec![row], diag, ok: false }
    };
    let p = match user.to_system(cfg.solver.fock_dim) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string(), json!({})),
    };

    match cfg.kind {
        Kind::SteadyState | Kind::Periodic => {
            let (rho, diag) = match long_time_state(&p, &cfg.solver, cfg.kind == Kind::Periodic) {
                Ok(x) => x,
                Err(e) => return failed(e, json!({})),
            };
            let mut row = axis_cells;
            let g = g2_zero(&rho);
            let err = g.as_ref().err().map(|e| e.to_string());
            let g = g.ok();
            row.push(Cell::opt(g.map(log10)));
            row.push(Cell::opt(g));
            row.extend(population_cells(&rho));
            if cfg.solver.analytic {
                let a = analytic::steady_amplitudes_general(&p).ok().map(|a| a.g2_approx());
                row.push(Cell::opt(a.map(log10)));
            }
            row.push(status_cell(&err));
            PointOutcome { rows: vec![row], diag, ok: err.is_none() }
        }
        Kind::TimeSeries => {
            let space = match p.space() {
                Ok(s) => s,
                Err(e) => return failed(e.to_string(), json!({})),
            };
            let n = match cfg.time.initial {
                InitialState::G0 => 0,
                InitialState::G1 => 1,
            };
            let rho0 = DensityMatrix::basis(space, Qubit::Ground, n);
            let kappa = p.kappa_m;
            let t_end = cfg.time.kappa_t_end / kappa;
            let grid = linspace(0.0, t_end, cfg.time.points);
            let opts = EvolveOptions { steps_per_period: cfg.solver.steps_per_period, ..Default::default() };
            let traj = match dynamics::evolve_with(&rho0, &p, &grid, p.g_rp > 0.0, &opts) {
                Ok(t) => t,
                Err(e) => return failed(e.to_string(), json!({})),
            };
            let rows = traj
                .times
                .iter()
                .zip(&traj.states)
                .map(|(&t, s)| {
                    let mut row = axis_cells.clone();
                    row.push(Cell::num(kappa * t));
                    row.push(Cell::num(t));
                    row.push(Cell::opt(g2_zero(s).ok().map(log10)));
                    row.extend(population_cells(s));
                    row.push(Cell::Text("ok".into()));
                    row
                })
                .collect();
            let diag = json!({
                "solver": "evolve",
                "step_us": traj.step,
                "max_trace_drift": traj.max_trace_drift,
                "min_eigenvalue": traj.min_eigenvalue,
            });
            PointOutcome { rows, diag, ok: true }
        }
        Kind::Analytic => {
            let res = analytic::steady_amplitudes_general(&p).map(|a| (a.g2_full(), a.g2_approx())).and_then(
                |(full, approx)| {
                    analytic::g2_analytic(p.coupling, p.kappa_m, p.rabi_m, p.rabi_q)
                        .map(|g| (full, approx, g.closed))
                },
            );
            match res {
                Ok((full, approx, closed)) => {
                    let mut row = axis_cells;
                    row.extend([full, approx, closed].map(|x| Cell::num(log10(x))));
                    row.push(Cell::Text("ok".into()));
                    PointOutcome { rows: vec![row], diag: json!({ "solver": "analytic" }), ok: true }
                }
                Err(e) => failed(e.to_string(), json!({})),
            }
        }
        Kind::Roots => {
            let r = p.kappa_m / p.coupling;
            let pair = match analytic::derivative_roots(r) {
                Ok(x) => x,
                Err(e) => return failed(e.to_string(), json!({})),
            };
            let numeric = |l: f64| -> Option<f64> {
                let mut q = p;
                q.rabi_q = (l + 1.0) * q.rabi_m;
                let (rho, _) = long_time_state(&q, &cfg.solver, false).ok()?;
                g2_zero(&rho).ok()
            };
            let analytic_at = |l: f64| analytic::g2_dimensionless(l, r).ok();
            let mut row = axis_cells;
            row.push(Cell::num(pair.l1));
            row.push(Cell::num(pair.l2));
            row.push(Cell::opt(analytic::second_derivative(pair.l1, r).ok()));
            for l in [pair.l1, pair.l2] {
                row.push(Cell::opt(analytic_at(l).map(log10)));
                row.push(Cell::opt(numeric(l).map(log10)));
            }
            let method = match pair.method {
                analytic::RootMethod::Radical => "radical",
                analytic::RootMethod::Companion => "companion",
            };
            row.push(Cell::Text(method.into()));
            row.push(Cell::Text("ok".into()));
            let diag = json!({
                "solver": "roots",
                "residual": pair.residual,
                "divergence": pair.divergence,
                "branch": pair.branch,
            });
            PointOutcome { rows: vec![row], diag, ok: true }
        }
    }
}

/// Evaluate every grid point of `cfg`. Points run in parallel; records keep
/// grid order. Per-point failures are recorded in the `status` column.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutput, ExperimentError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let start = Instant::now();
    let work = || -> Vec<(PointOutcome, f64)> {
        grid.par_iter()
            .map(|(axes, user)| {
                let t0 = Instant::now();
                let out = evaluate(cfg, axes, user);
                (out, t0.elapsed().as_secs_f64())
            })
            .collect()
    };
    let outcomes = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Config(e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut columns: Vec<String> = cfg.axes.iter().map(|a| a.column().to_string()).collect();
    columns.extend(value_columns(cfg));
    let mut result = SweepResult::new(columns);
    let mut diagnostics = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    for (index, ((out, wall), (axes, _))) in outcomes.into_iter().zip(&grid).enumerate() {
        if !out.ok {
            failures += 1;
        }
        let mut d = json!({
            "index": index,
            "axes": axes,
            "ok": out.ok,
            "wall_s": wall,
        });
        if let (Value::Object(m), Value::Object(extra)) = (&mut d, out.diag) {
            m.extend(extra);
        }
        diagnostics.push(d);
        result.rows.extend(out.rows);
    }
    Ok(RunOutput { result, diagnostics, failures, wall_seconds: start.elapsed().as_secs_f64() })
}

/// g² at one truncation for each representative point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub axes: Vec<f64>,
    /// `None` where ⟨m†m⟩ is below the correlation floor or the solve failed.
    pub g2: Vec<Option<f64>>,
    pub mean_number: Vec<Option<f64>>,
    /// `|g²(N_{k+1}) / g²(N_k) − 1|`.
    pub relative_changes: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub fock_dims: Vec<usize>,
    pub points: Vec<ConvergencePoint>,
    /// Largest change between the two largest truncations.
    pub max_final_change: f64,
    pub passed: bool,
    /// Points whose change grew with N while failing the tolerance.
    pub non_monotone: Vec<usize>,
}

/// Grid indices used for convergence checks: both ends, the quartiles and
/// the middle of the flattened grid.
pub fn representative_indices(len: usize) -> Vec<usize> {
    if len == 0 {
        return vec![];
    }
    let mut v: Vec<usize> = [0, len / 4, len / 2, (3 * len) / 4, len - 1].to_vec();
    v.dedup();
    v
}

/// Re-solve representative points at each truncation and compare g².
pub fn convergence_check(cfg: &ScenarioConfig, fock_dims: &[usize]) -> Result<ConvergenceReport, ExperimentError> {
    if fock_dims.len() < 2 {
        return Err(ExperimentError::Config("convergence needs at least two truncations".into()));
    }
    cfg.validate()?;
    let grid = cfg.grid()?;
    let periodic = cfg.kind == Kind::Periodic;
    let picks = representative_indices(grid.len());
    let points: Vec<ConvergencePoint> = picks
        .par_iter()
        .map(|&i| {
            let (axes, user) = &grid[i];
            let moments: Vec<Option<(f64, f64)>> = fock_dims
                .iter()
                .map(|&n| {
                    let p = user.to_system(n).ok()?;
                    let (rho, _) = long_time_state(&p, &cfg.solver, periodic).ok()?;
                    magnon_moments(&rho).ok()
                })
                .collect();
            let mean_number: Vec<Option<f64>> = moments.iter().map(|m| m.map(|(n, _)| n)).collect();
            let g2: Vec<Option<f64>> = moments
                .iter()
                .map(|m| m.and_then(|(n, pair)| (n >= MEAN_NUMBER_FLOOR).then(|| pair / (n * n))))
                .collect();
            let relative_changes = (0..fock_dims.len() - 1)
                .map(|k| match (g2[k], g2[k + 1], mean_number[k], mean_number[k + 1]) {
                    (Some(a), Some(b), _, _) if a == b => Some(0.0),
                    (Some(a), Some(b), _, _) => Some((b / a - 1.0).abs()),
                    // undriven at both truncations: the same vacuum
                    (None, None, Some(_), Some(_)) => Some(0.0),
                    _ => None,
                })
                .collect();
            ConvergencePoint { axes: axes.clone(), g2, mean_number, relative_changes }
        })
        .collect();

    let mut max_final_change = 0.0_f64;
    let mut undefined = false;
    let mut non_monotone = Vec::new();
    for (k, pt) in points.iter().enumerate() {
        let finals = pt.relative_changes.last().copied().flatten();
        match finals {
            Some(c) => max_final_change = max_final_change.max(c),
            None => undefined = true,
        }
        let ch: Vec<f64> = pt.relative_changes.iter().flatten().copied().collect();
        let failing = finals.is_none_or(|c| c >= CONVERGENCE_TOL);
        if failing && ch.windows(2).any(|w| w[1] > w[0]) {
            non_monotone.push(k);
        }
    }
    let passed = !undefined && max_final_change < CONVERGENCE_TOL;
    Ok(ConvergenceReport { fock_dims: fock_dims.to_vec(), points, max_final_change, passed, non_monotone })
}
