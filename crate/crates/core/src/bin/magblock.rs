use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use magnon_blockade::experiments::{
    self, convergence_check, find_scenario, ExperimentError, RunOptions, ScenarioConfig,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;

/// Magnon blockade scenario runner.
#[derive(Parser, Debug)]
#[command(name = "magblock", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output CSV path (diagnostics go next to it as .jsonl).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the magnon Fock truncation.
    #[arg(long, global = true)]
    fock_dim: Option<usize>,

    /// Override the point count of every linspace axis.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Exit with status 2 if any point fails or convergence is not reached.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a built-in scenario or a TOML config file.
    Run { target: String },
    /// List built-in scenarios.
    List,
    /// Check truncation convergence of a scenario at representative points.
    Converge {
        target: String,
        /// Truncations to compare.
        #[arg(long, value_delimiter = ',', default_values_t = vec![4, 6, 8])]
        fock_dims: Vec<usize>,
    },
}

fn load(target: &str) -> Result<ScenarioConfig, ExperimentError> {
    match find_scenario(target) {
        Err(ExperimentError::UnknownScenario(_)) if Path::new(target).is_file() => {
            let text = std::fs::read_to_string(target)?;
            ScenarioConfig::from_toml(&text)
        }
        other => other,
    }
}

fn configure(cli: &Cli, target: &str) -> Result<ScenarioConfig, ExperimentError> {
    let mut cfg = load(target)?;
    if let Some(n) = cli.grid {
        cfg = cfg.with_grid(n);
    }
    if let Some(n) = cli.fock_dim {
        cfg = cfg.with_fock_dim(n);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, target: &str) -> Result<u8, ExperimentError> {
    let cfg = configure(cli, target)?;
    let out = experiments::run_scenario(&cfg, &RunOptions { threads: cli.threads })?;
    let path = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.name)));
    let side = out.write(&path)?;
    println!(
        "{}: {} rows -> {} (diagnostics {}), {} failed point(s), {:.1} s",
        cfg.name,
        out.result.rows.len(),
        path.display(),
        side.display(),
        out.failures,
        out.wall_seconds
    );
    Ok(if cli.strict && out.failures > 0 { EXIT_SOLVER } else { 0 })
}

fn converge(cli: &Cli, target: &str, dims: &[usize]) -> Result<u8, ExperimentError> {
    let cfg = configure(cli, target)?;
    let rep = convergence_check(&cfg, dims)?;
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
    for pt in &rep.points {
        let g: Vec<String> = rep.fock_dims.iter().zip(&pt.g2).map(|(n, g)| format!("N={n}: {}", fmt(*g))).collect();
        let c: Vec<String> = pt.relative_changes.iter().map(|c| fmt(*c)).collect();
        println!("axes {:?}  {}  changes [{}]", pt.axes, g.join("  "), c.join(", "));
    }
    println!(
        "{}: max change between N={} and N={}: {:.3e} ({})",
        cfg.name,
        dims[dims.len() - 2],
        dims[dims.len() - 1],
        rep.max_final_change,
        if rep.passed { "converged" } else { "NOT converged" }
    );
    if !rep.non_monotone.is_empty() {
        println!("non-monotone points: {:?}", rep.non_monotone);
    }
    Ok(if cli.strict && !rep.passed { EXIT_SOLVER } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::List => {
            for cfg in experiments::built_in_scenarios() {
                println!("{:<7} {}", cfg.name, cfg.description);
            }
            Ok(0)
        }
        Command::Run { target } => run(&cli, target),
        Command::Converge { target, fock_dims } => converge(&cli, target, fock_dims),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
