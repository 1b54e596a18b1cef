//! `phasorgrid`: validate grids, find operation points, simulate faults.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasorgrid_core::io::{self, DEFAULT_PLOT};
use phasorgrid_core::scenario::{parse_span, Perturbation, ScenarioError};
use phasorgrid_core::steady_state::{find_operationpoint, residual_norm, OperationPointMethod, OperationPointOptions};
use phasorgrid_core::{simulate, PowerGrid, SolverOptions, State};

#[derive(Parser)]
#[command(name = "phasorgrid", version, about = "Dynamic power grid simulation in the dq frame")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a grid file for structural problems.
    Validate {
        #[arg(long)]
        grid: PathBuf,
    },
    /// Compute and optionally save the operation point.
    Op {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "rootfind", value_parser = parse_method)]
        method: OperationPointMethod,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the grid, optionally under a fault.
    Simulate {
        #[arg(long)]
        grid: PathBuf,
        /// Time span as T0:T1.
        #[arg(long, value_parser = parse_pair)]
        tspan: (f64, f64),
        /// line-failure:LINE, power-perturbation:NODE:P=X[,Q=Y],
        /// parameter-change:NODE:PARAM=X or set-initial:OWNER:VAR=X[;...]
        #[arg(long)]
        fault: Option<String>,
        /// Fault window as TON:TOFF.
        #[arg(long, value_parser = parse_pair, requires = "fault")]
        fault_window: Option<(f64, f64)>,
        /// Start from a saved state instead of the operation point.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
        /// CSV sample step in seconds.
        #[arg(long, default_value_t = 0.01, value_parser = parse_positive)]
        sample: f64,
        #[arg(long, value_parser = parse_positive)]
        rtol: Option<f64>,
        #[arg(long, value_parser = parse_positive)]
        atol: Option<f64>,
        #[arg(long)]
        verbose: bool,
    },
}

fn parse_method(s: &str) -> Result<OperationPointMethod, String> {
    s.parse()
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    parse_span(s).map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

/// A domain failure tagged with the component that raised it.
struct Failure {
    component: &'static str,
    message: String,
}

fn fail(component: &'static str, e: impl std::fmt::Display) -> Failure {
    Failure {
        component,
        message: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail("cli", format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| fail("cli", format!("{}: {e}", path.display())))
}

fn load_grid(path: &Path) -> Result<PowerGrid, Failure> {
    let text = read_text(path)?;
    io::read_powergrid(&text).map_err(|e| fail("grid_io", format!("{}: {e}", path.display())))
}

fn scenario_component(e: &ScenarioError) -> &'static str {
    match e {
        ScenarioError::Grid(_) => "grid_assembly",
        ScenarioError::SteadyState(_) => "steady_state",
        ScenarioError::Integration { .. } => "dae_solver",
        _ => "scenarios",
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { grid } => {
            let grid = load_grid(&grid)?;
            let report = grid.validate();
            for v in &report.violations {
                println!("{v}");
            }
            if !report.is_ok() {
                let n = report.errors().count();
                return Err(fail("grid_assembly", format!("{n} validation error(s)")));
            }
            println!(
                "ok: {} nodes, {} lines",
                grid.nodes().len(),
                grid.lines().len()
            );
        }
        Command::Op { grid, method, out } => {
            let grid = load_grid(&grid)?;
            let op = find_operationpoint(&grid, None, &OperationPointOptions::method(method))
                .map_err(|e| fail("steady_state", e))?;
            let res = residual_norm(&grid, &op).map_err(|e| fail("steady_state", e))?;
            println!("residual: {res:e}");
            match out {
                Some(path) => {
                    let text = io::write_state(&op).map_err(|e| fail("grid_io", e))?;
                    write_text(&path, &text)?;
                }
                None => {
                    for (e, v) in op.layout().entries().iter().zip(op.values()) {
                        println!("{}:{} = {v}", e.owner, e.var);
                    }
                }
            }
        }
        Command::Simulate {
            grid,
            tspan,
            fault,
            fault_window,
            from,
            out,
            plot,
            sample,
            rtol,
            atol,
            verbose,
        } => {
            let grid = load_grid(&grid)?;
            let perturbation = match &fault {
                Some(spec) => Perturbation::parse(spec, fault_window).map_err(|e| fail("scenarios", e))?,
                None => Perturbation::ChangeInitialConditions {
                    assignments: Vec::new(),
                },
            };
            let x0: State = match &from {
                Some(path) => io::read_state(&read_text(path)?, &grid)
                    .map_err(|e| fail("grid_io", format!("{}: {e}", path.display())))?,
                None => find_operationpoint(&grid, None, &OperationPointOptions::default())
                    .map_err(|e| fail("steady_state", e))?,
            };
            let mut opts = SolverOptions::default();
            opts.rtol = rtol.unwrap_or(opts.rtol);
            opts.atol = atol.unwrap_or(opts.atol);
            let sol = simulate(&perturbation, &grid, &x0, tspan, &opts)
                .map_err(|e| fail(scenario_component(&e), e))?;
            if verbose {
                let s = sol.stats();
                eprintln!(
                    "segments: {}, accepted: {}, rejected: {}, newton iterations: {}, jacobians: {}",
                    sol.segments().len(),
                    s.accepted,
                    s.rejected,
                    s.newton_iterations,
                    s.jacobian_evaluations
                );
            }
            if let Some(path) = out {
                let csv = io::write_solution_csv(&sol, sample).map_err(|e| fail("grid_io", e))?;
                write_text(&path, &csv)?;
            }
            if let Some(path) = plot {
                let svg = io::render_plot_svg(&sol, DEFAULT_PLOT).map_err(|e| fail("grid_io", e))?;
                write_text(&path, &svg)?;
            }
            println!("simulated {} to {}", sol.t_start(), sol.t_end());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.component, f.message);
            ExitCode::from(1)
        }
    }
}
