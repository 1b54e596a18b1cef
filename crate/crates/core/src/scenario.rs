//! Fault scenarios: time-windowed grid perturbations, initial-condition
//! changes, and the pre-fault / fault / post-fault simulation protocol.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{build_layout, GridError, GridRhs, PowerGrid};
use crate::node::ModelError;
use crate::phasor::{canonical_var_name, complex_power, LayoutError, State, StateLayout};
use crate::solver::{integrate, SolverError, SolverOptions, SolverStats, Trajectory};
use crate::steady_state::{default_guess, reinit_with, SteadyStateError};

#[derive(Debug, Clone, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    SteadyState(Box<SteadyStateError>),
    #[error("invalid fault window: {0}")]
    Window(String),
    #[error("cannot parse perturbation {spec:?}: {reason}")]
    Parse { spec: String, reason: String },
    #[error("node {0:?} has no power set-point")]
    NoPowerSetpoint(String),
    #[error("segment {segment} failed: {source}")]
    Integration {
        segment: usize,
        source: SolverError,
        completed: Box<PowerGridSolution>,
    },
    #[error("unknown series {owner}:{var}")]
    UnknownSeries { owner: String, var: String },
}

impl From<SteadyStateError> for ScenarioError {
    fn from(e: SteadyStateError) -> Self {
        ScenarioError::SteadyState(Box::new(e))
    }
}

/// Closed-left fault window `[t_on, t_off)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultWindow {
    pub t_on: f64,
    pub t_off: f64,
}

impl FaultWindow {
    pub fn new(t_on: f64, t_off: f64) -> Result<Self, ScenarioError> {
        if !(t_on.is_finite() && t_off.is_finite() && t_on < t_off) {
            return Err(ScenarioError::Window(format!(
                "require t_on < t_off, got ({t_on}, {t_off})"
            )));
        }
        Ok(Self { t_on, t_off })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// Removes a line for the window; the line recloses at `t_off`.
    LineFailure { line_name: String, window: FaultWindow },
    /// Sets a node's `P` and/or `Q` set-point for the window.
    PowerPerturbation {
        node_name: String,
        p: Option<f64>,
        q: Option<f64>,
        window: FaultWindow,
    },
    NodeParameterChange {
        node_name: String,
        parameter: String,
        value: f64,
        window: FaultWindow,
    },
    /// Overrides entries of the start state; no window.
    ChangeInitialConditions { assignments: Vec<(String, String, f64)> },
}

fn parse_f64(spec: &str, s: &str) -> Result<f64, ScenarioError> {
    let v: f64 = s.trim().parse().map_err(|_| ScenarioError::Parse {
        spec: spec.into(),
        reason: format!("{s:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(ScenarioError::Parse {
            spec: spec.into(),
            reason: format!("{s:?} is not finite"),
        });
    }
    Ok(v)
}

/// Parses `"A:B"` into an increasing pair.
pub fn parse_span(s: &str) -> Result<(f64, f64), ScenarioError> {
    let (a, b) = s.split_once(':').ok_or_else(|| ScenarioError::Parse {
        spec: s.into(),
        reason: "expected START:END".into(),
    })?;
    let (a, b) = (parse_f64(s, a)?, parse_f64(s, b)?);
    FaultWindow::new(a, b).map_err(|_| ScenarioError::Parse {
        spec: s.into(),
        reason: "start must be before end".into(),
    })?;
    Ok((a, b))
}

impl Perturbation {
    /// Parses the textual form
    /// `line-failure:NAME`, `power-perturbation:NODE:P=VALUE[,Q=VALUE]`,
    /// `parameter-change:NODE:PARAM=VALUE` or
    /// `set-initial:OWNER:VAR=VALUE[;OWNER:VAR=VALUE...]`.
    /// Windowed kinds require `window`.
    pub fn parse(spec: &str, window: Option<(f64, f64)>) -> Result<Self, ScenarioError> {
        let err = |reason: &str| ScenarioError::Parse {
            spec: spec.into(),
            reason: reason.into(),
        };
        let (kind, rest) = spec.split_once(':').ok_or_else(|| err("missing ':'"))?;
        let need_window = || -> Result<FaultWindow, ScenarioError> {
            let (a, b) = window.ok_or_else(|| err("this perturbation needs a fault window"))?;
            FaultWindow::new(a, b)
        };
        let name_ok = |s: &str| !s.is_empty() && !s.contains(['=', ':', ',', ';']);
        match kind {
            "line-failure" => {
                if !name_ok(rest) {
                    return Err(err("expected line-failure:NAME"));
                }
                Ok(Perturbation::LineFailure {
                    line_name: rest.into(),
                    window: need_window()?,
                })
            }
            "power-perturbation" => {
                let (node, assigns) = rest
                    .split_once(':')
                    .ok_or_else(|| err("expected power-perturbation:NODE:P=VALUE"))?;
                if !name_ok(node) {
                    return Err(err("bad node name"));
                }
                let (mut p, mut q) = (None, None);
                for a in assigns.split(',') {
                    let (k, v) = a.split_once('=').ok_or_else(|| err("expected KEY=VALUE"))?;
                    let v = parse_f64(spec, v)?;
                    match k.trim() {
                        "P" if p.is_none() => p = Some(v),
                        "Q" if q.is_none() => q = Some(v),
                        _ => return Err(err("only P= and Q= may be given, once each")),
                    }
                }
                Ok(Perturbation::PowerPerturbation {
                    node_name: node.into(),
                    p,
                    q,
                    window: need_window()?,
                })
            }
            "parameter-change" => {
                let (node, assign) = rest
                    .split_once(':')
                    .ok_or_else(|| err("expected parameter-change:NODE:PARAM=VALUE"))?;
                let (k, v) = assign.split_once('=').ok_or_else(|| err("expected PARAM=VALUE"))?;
                if !name_ok(node) || !name_ok(k) {
                    return Err(err("bad name"));
                }
                Ok(Perturbation::NodeParameterChange {
                    node_name: node.into(),
                    parameter: k.into(),
                    value: parse_f64(spec, v)?,
                    window: need_window()?,
                })
            }
            "set-initial" => {
                let mut assignments = Vec::new();
                for item in rest.split(';') {
                    let (owner, assign) = item
                        .split_once(':')
                        .ok_or_else(|| err("expected OWNER:VAR=VALUE"))?;
                    let (var, v) = assign.split_once('=').ok_or_else(|| err("expected VAR=VALUE"))?;
                    if !name_ok(owner) || !name_ok(var) {
                        return Err(err("bad name"));
                    }
                    assignments.push((owner.into(), var.into(), parse_f64(spec, v)?));
                }
                Ok(Perturbation::ChangeInitialConditions { assignments })
            }
            _ => Err(err("unknown perturbation kind")),
        }
    }

    pub fn window(&self) -> Option<FaultWindow> {
        match self {
            Perturbation::LineFailure { window, .. }
            | Perturbation::PowerPerturbation { window, .. }
            | Perturbation::NodeParameterChange { window, .. } => Some(*window),
            Perturbation::ChangeInitialConditions { .. } => None,
        }
    }

    /// The faulted grid; `grid` itself is left untouched.
    pub fn apply(&self, grid: &PowerGrid) -> Result<PowerGrid, ScenarioError> {
        match self {
            Perturbation::LineFailure { line_name, .. } => Ok(grid.without_line(line_name)?),
            Perturbation::PowerPerturbation { node_name, p, q, .. } => {
                let model = grid.node(node_name)?;
                if !model.has_power_setpoint() {
                    return Err(ScenarioError::NoPowerSetpoint(node_name.clone()));
                }
                let mut m = model.clone();
                if let Some(p) = p {
                    m = m.with_param("P", *p)?;
                }
                if let Some(q) = q {
                    m = m.with_param("Q", *q)?;
                }
                Ok(grid.with_node(node_name, m)?)
            }
            Perturbation::NodeParameterChange {
                node_name,
                parameter,
                value,
                ..
            } => {
                let m = grid.node(node_name)?.with_param(parameter, *value)?;
                Ok(grid.with_node(node_name, m)?)
            }
            Perturbation::ChangeInitialConditions { .. } => Ok(grid.clone()),
        }
    }
}

/// Carries `x` (a state of `from_grid`) over to `to_grid`: variables are
/// matched by `(owner, variable)`, new variables take the model's default
/// guess, and the algebraic part is re-solved.
pub fn map_state(from_grid: &PowerGrid, x: &State, to_grid: &PowerGrid) -> Result<State, ScenarioError> {
    let _ = from_grid;
    let rhs = GridRhs::new(to_grid)?;
    map_into(&rhs, x)
}

fn map_into(rhs: &GridRhs, x: &State) -> Result<State, ScenarioError> {
    let mut values = default_guess(rhs.grid())?.into_values();
    for (k, e) in rhs.layout().entries().iter().enumerate() {
        if let Some(idx) = x.layout().index_of(&e.owner, &e.var) {
            values[k] = x.values()[idx];
        }
    }
    let mapped = State::new(rhs.layout().clone(), values)?;
    Ok(reinit_with(rhs, &mapped)?)
}

/// One integrated piece of a simulation on a fixed grid.
#[derive(Debug, Clone)]
pub struct Segment {
    rhs: GridRhs,
    trajectory: Trajectory,
}

impl Segment {
    pub fn grid(&self) -> &PowerGrid {
        self.rhs.grid()
    }

    pub fn layout(&self) -> &Arc<StateLayout> {
        self.rhs.layout()
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn rhs(&self) -> &GridRhs {
        &self.rhs
    }

    fn t_start(&self) -> f64 {
        self.trajectory.t_start().unwrap_or(f64::NAN)
    }

    fn t_end(&self) -> f64 {
        self.trajectory.t_end().unwrap_or(f64::NAN)
    }

    /// Value of a raw or derived variable in this segment, `None` when the
    /// owner/variable does not exist here.
    pub fn value(&self, x: &[f64], owner: &str, var: &str) -> Option<f64> {
        let var = canonical_var_name(var);
        if let Some(idx) = self.layout().index_of(owner, var) {
            return Some(x[idx]);
        }
        let k = self.grid().nodes().get_index_of(owner)?;
        let u = self.rhs.node_voltage(x, k);
        match var {
            "v" => Some(u.norm()),
            "φ" => Some(u.arg()),
            "p" | "q" => {
                let i = self.rhs.node_currents(x)[k];
                let s = complex_power(u, i);
                Some(if var == "p" { s.re } else { s.im })
            }
            "ω" => {
                let model = &self.grid().nodes()[k];
                model.frequency(u, self.rhs.node_internals(x, k))
            }
            _ => None,
        }
    }
}

/// Piecewise solution of a fault scenario.
#[derive(Debug, Clone, Default)]
pub struct PowerGridSolution {
    segments: Vec<Segment>,
    stats: SolverStats,
}

impl PowerGridSolution {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn t_start(&self) -> f64 {
        self.segments.first().map_or(f64::NAN, |s| s.t_start())
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(f64::NAN, |s| s.t_end())
    }

    /// The grid the simulation started on; its layout names the CSV columns.
    pub fn base_grid(&self) -> Option<&PowerGrid> {
        self.segments.first().map(|s| s.grid())
    }

    /// Segment covering `t`; at a boundary the earlier segment wins.
    pub fn segment_at(&self, t: f64) -> Option<&Segment> {
        self.segments
            .iter()
            .find(|s| t <= s.t_end())
            .or_else(|| self.segments.last())
    }

    /// Interpolated state at `t` with the segment it belongs to.
    pub fn state_at(&self, t: f64) -> Option<(&Segment, Vec<f64>)> {
        let seg = self.segment_at(t)?;
        Some((seg, seg.trajectory.sample(t)?))
    }

    pub fn final_state(&self) -> Option<State> {
        let seg = self.segments.last()?;
        let x = seg.trajectory.last_state()?.to_vec();
        State::new(seg.layout().clone(), x).ok()
    }

    /// All accepted sample times, in order (shared boundary times once).
    pub fn sample_times(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for s in &self.segments {
            for &t in s.trajectory.times() {
                if out.last().is_none_or(|&l| t > l) {
                    out.push(t);
                }
            }
        }
        out
    }

    /// True when some segment knows `owner:var`.
    pub fn resolves(&self, owner: &str, var: &str) -> bool {
        self.segments.iter().any(|s| {
            s.trajectory
                .states()
                .first()
                .and_then(|x| s.value(x, owner, var))
                .is_some()
        })
    }

    /// Values of `owner:var` at `times`; NaN where the variable does not
    /// exist (e.g. the state of a removed line).
    pub fn series(&self, owner: &str, var: &str, times: &[f64]) -> Result<Vec<f64>, ScenarioError> {
        if !self.resolves(owner, var) {
            return Err(ScenarioError::UnknownSeries {
                owner: owner.into(),
                var: var.into(),
            });
        }
        Ok(times
            .iter()
            .map(|&t| match self.state_at(t) {
                Some((seg, x)) => seg.value(&x, owner, var).unwrap_or(f64::NAN),
                None => f64::NAN,
            })
            .collect())
    }
}

fn run_segment(
    sol: &mut PowerGridSolution,
    rhs: GridRhs,
    x: &State,
    span: (f64, f64),
    opts: &SolverOptions,
) -> Result<(), ScenarioError> {
    match integrate(&rhs, x.values(), span, opts) {
        Ok((trajectory, stats)) => {
            sol.stats += stats;
            sol.segments.push(Segment { rhs, trajectory });
            Ok(())
        }
        Err(source) => {
            let segment = sol.segments.len();
            if let SolverError::NonConvergence { partial, stats, .. } = &source {
                sol.stats += *stats;
                if partial.len() > 1 {
                    sol.segments.push(Segment {
                        rhs,
                        trajectory: partial.clone(),
                    });
                }
            }
            Err(ScenarioError::Integration {
                segment,
                source,
                completed: Box::new(std::mem::take(sol)),
            })
        }
    }
}

/// Simulates `perturbation` on `grid` from `x0` over `tspan`.
///
/// Windowed perturbations run up to three segments: `[t0, t_on]` on `grid`,
/// `[t_on, t_off]` on the faulted grid and `[t_off, t1]` back on `grid`.
/// Zero-length segments are skipped and states are mapped across each
/// switch.
pub fn simulate(
    perturbation: &Perturbation,
    grid: &PowerGrid,
    x0: &State,
    tspan: (f64, f64),
    opts: &SolverOptions,
) -> Result<PowerGridSolution, ScenarioError> {
    let (t0, t1) = tspan;
    if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
        return Err(ScenarioError::Window(format!("time span ({t0}, {t1}) must be increasing")));
    }
    let base = GridRhs::new(grid)?;
    if **x0.layout() != **base.layout() {
        return Err(SteadyStateError::LayoutMismatch.into());
    }
    let mut sol = PowerGridSolution::default();
    let Some(window) = perturbation.window() else {
        let mut x = x0.clone();
        if let Perturbation::ChangeInitialConditions { assignments } = perturbation {
            for (owner, var, value) in assignments {
                x.set(owner, canonical_var_name(var), *value)?;
            }
        }
        let x = reinit_with(&base, &x)?;
        run_segment(&mut sol, base, &x, tspan, opts)?;
        return Ok(sol);
    };
    if window.t_on < t0 || window.t_off > t1 {
        return Err(ScenarioError::Window(format!(
            "fault window ({}, {}) is not inside ({t0}, {t1})",
            window.t_on, window.t_off
        )));
    }
    let faulted = GridRhs::new(&perturbation.apply(grid)?)?;
    let mut x = reinit_with(&base, x0)?;
    if window.t_on > t0 {
        run_segment(&mut sol, base.clone(), &x, (t0, window.t_on), opts)?;
        x = last_state(&sol);
    }
    x = map_into(&faulted, &x)?;
    run_segment(&mut sol, faulted, &x, (window.t_on, window.t_off), opts)?;
    if window.t_off < t1 {
        x = map_into(&base, &last_state(&sol))?;
        run_segment(&mut sol, base, &x, (window.t_off, t1), opts)?;
    }
    Ok(sol)
}

fn last_state(sol: &PowerGridSolution) -> State {
    sol.final_state().expect("segment just completed")
}

/// Layout of a grid wrapped for sharing.
pub fn layout_of(grid: &PowerGrid) -> Result<Arc<StateLayout>, ScenarioError> {
    Ok(Arc::new(build_layout(grid)?))
}
