//! Operation-point search and algebraic re-initialization.

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::grid::{GridError, GridRhs, PowerGrid, RhsError};
use crate::node::NodeModel;
use crate::phasor::{Phasor, State, StateLayout};
use crate::solver::{factor, fd_jacobian_with, DaeSystem, Integrator, SolverError, SolverOptions};

/// Residual certificate required of every operation point.
pub const OPERATION_POINT_TOL: f64 = 1e-8;
/// Algebraic tolerance of [`reinit_algebraic`].
pub const REINIT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperationPointMethod {
    RootFind,
    /// Same damped Newton iteration as `RootFind`.
    NlSolve,
    Dynamic,
}

impl FromStr for OperationPointMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rootfind" => Ok(Self::RootFind),
            "nlsolve" => Ok(Self::NlSolve),
            "dynamic" => Ok(Self::Dynamic),
            other => Err(format!("unknown method {other:?} (rootfind|nlsolve|dynamic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationPointOptions {
    pub method: OperationPointMethod,
    /// Extra damping on frequency states for the dynamic method.
    pub damping: f64,
    /// Time horizon of the dynamic method (s).
    pub horizon: f64,
    pub max_newton_iter: usize,
}

impl Default for OperationPointOptions {
    fn default() -> Self {
        Self {
            method: OperationPointMethod::RootFind,
            damping: 1.0,
            horizon: 1e3,
            max_newton_iter: 100,
        }
    }
}

impl OperationPointOptions {
    pub fn method(method: OperationPointMethod) -> Self {
        Self {
            method,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteadyStateError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("Newton iteration stagnated at residual {residual:e}")]
    NoConvergence { residual: f64, best: State },
    #[error("singular Jacobian at residual {residual:e}; try the dynamic method or check for islands without a reference")]
    Singular { residual: f64, best: State },
    #[error("grid has no SlackAlgebraic node: the operation point is only defined up to a global phase rotation; add a reference node")]
    PhaseGauge,
    #[error("right-hand side failed: {0}")]
    Rhs(#[from] RhsError),
    #[error("algebraic re-initialization failed at residual {residual:e}")]
    ReinitFailed { residual: f64, state: State },
    #[error("state layout does not belong to this grid")]
    LayoutMismatch,
    #[error("dynamic relaxation failed: {0}")]
    Solver(#[from] SolverError),
}

/// Flat start: every voltage `1 + 0j` (slack nodes at their set-point),
/// model-declared internal guesses, zero line currents.
pub fn default_guess(grid: &PowerGrid) -> Result<State, GridError> {
    let layout = Arc::new(crate::grid::build_layout(grid)?);
    Ok(default_guess_with(grid, layout))
}

fn default_guess_with(grid: &PowerGrid, layout: Arc<StateLayout>) -> State {
    let mut values = Vec::with_capacity(layout.dim());
    for model in grid.nodes().values() {
        let u = match model {
            NodeModel::Slack(s) => s.voltage(),
            _ => Phasor::new(1.0, 0.0),
        };
        values.push(u.re);
        values.push(u.im);
        values.extend(model.initial_internals(u));
    }
    for line in grid.lines().values() {
        values.extend(line.model.initial_internals());
    }
    State::new(layout, values).expect("finite flat start")
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn eval_norm<S: DaeSystem + ?Sized>(sys: &S, x: &[f64], f: &mut [f64]) -> Option<(f64, f64)> {
    sys.eval(0.0, x, f).ok()?;
    Some((inf_norm(f), two_norm(f)))
}

/// `‖f(0, x)‖∞` for a state of `grid`.
pub fn residual_norm(grid: &PowerGrid, x: &State) -> Result<f64, SteadyStateError> {
    let rhs = GridRhs::new(grid)?;
    check_layout(&rhs, x)?;
    let mut f = vec![0.0; rhs.dim()];
    rhs.eval(0.0, x.values(), &mut f)?;
    Ok(inf_norm(&f))
}

fn check_layout(rhs: &GridRhs, x: &State) -> Result<(), SteadyStateError> {
    if **rhs.layout() != **x.layout() {
        return Err(SteadyStateError::LayoutMismatch);
    }
    Ok(())
}

/// Damped Newton with Armijo backtracking over all rows of `f`.
fn damped_newton(
    rhs: &GridRhs,
    x0: Vec<f64>,
    max_iter: usize,
) -> Result<Vec<f64>, SteadyStateError> {
    let n = rhs.dim();
    let layout = rhs.layout().clone();
    let mut x = x0;
    let mut f = vec![0.0; n];
    rhs.eval(0.0, &x, &mut f)?;
    let (mut norm, mut norm2) = (inf_norm(&f), two_norm(&f));
    let mut history = vec![norm];
    let best = |x: &[f64]| State::new(layout.clone(), x.to_vec()).unwrap_or_else(|_| State::zeros(layout.clone()));
    for _ in 0..max_iter {
        let stalled = history.len() >= 2 && norm > 0.5 * history[history.len() - 2];
        if norm <= 1e-12 || (norm <= OPERATION_POINT_TOL && stalled) {
            return Ok(x);
        }
        let jac = fd_jacobian_with(rhs, 0.0, &x, &f, None)?;
        let lu = factor(jac).ok_or_else(|| SteadyStateError::Singular {
            residual: norm,
            best: best(&x),
        })?;
        let delta = lu
            .solve(&DVector::from_column_slice(&f))
            .ok_or_else(|| SteadyStateError::Singular {
                residual: norm,
                best: best(&x),
            })?;
        let mut lambda = 1.0;
        let mut trial = vec![0.0; n];
        let mut ftrial = vec![0.0; n];
        let mut accepted = None;
        for _ in 0..=8 {
            for i in 0..n {
                trial[i] = x[i] - lambda * delta[i];
            }
            if let Some((ninf, n2)) = eval_norm(rhs, &trial, &mut ftrial) {
                if n2 <= (1.0 - 1e-4 * lambda) * norm2 {
                    accepted = Some((ninf, n2));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((ninf, n2)) = accepted else {
            if norm <= OPERATION_POINT_TOL {
                return Ok(x);
            }
            return Err(SteadyStateError::NoConvergence {
                residual: norm,
                best: best(&x),
            });
        };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut f, &mut ftrial);
        norm = ninf;
        norm2 = n2;
        history.push(norm);
        let k = history.len();
        if k > 20 && norm > (1.0 - 1e-3) * history[k - 21] {
            break;
        }
    }
    if norm <= OPERATION_POINT_TOL {
        return Ok(x);
    }
    Err(SteadyStateError::NoConvergence {
        residual: norm,
        best: best(&x),
    })
}

/// Grid RHS with extra damping `−c·ω` on every frequency state.
struct Damped<'a> {
    inner: &'a GridRhs,
    indices: Vec<usize>,
    damping: f64,
}

impl DaeSystem for Damped<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn mass(&self) -> &[bool] {
        self.inner.mass()
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), RhsError> {
        self.inner.eval(t, x, out)?;
        for &k in &self.indices {
            out[k] -= self.damping * x[k];
        }
        Ok(())
    }
}

fn frequency_indices(rhs: &GridRhs) -> Vec<usize> {
    let mut out = Vec::new();
    for (k, model) in rhs.grid().nodes().values().enumerate() {
        let base = rhs.node_offset(k) + 2;
        out.extend(model.frequency_internals().iter().map(|i| base + i));
    }
    out
}

/// Finds `x*` with `‖f(0, x*)‖∞ ≤ 1e-8`.
///
/// `RootFind` and `NlSolve` run the same damped Newton iteration from the
/// guess (default: [`default_guess`]). `Dynamic` first relaxes the grid in
/// time with extra frequency damping, then polishes with Newton. When several
/// equilibria exist the one reached from the guess is returned.
pub fn find_operationpoint(
    grid: &PowerGrid,
    guess: Option<&State>,
    opts: &OperationPointOptions,
) -> Result<State, SteadyStateError> {
    let rhs = GridRhs::new(grid)?;
    if !grid.nodes().values().any(|m| matches!(m, NodeModel::Slack(_))) {
        return Err(SteadyStateError::PhaseGauge);
    }
    let x0 = match guess {
        Some(g) => {
            check_layout(&rhs, g)?;
            g.clone()
        }
        None => default_guess_with(grid, rhs.layout().clone()),
    };
    let x = match opts.method {
        OperationPointMethod::RootFind | OperationPointMethod::NlSolve => {
            damped_newton(&rhs, x0.into_values(), opts.max_newton_iter)?
        }
        OperationPointMethod::Dynamic => {
            let relaxed = relax(&rhs, &x0, opts)?;
            damped_newton(&rhs, relaxed, opts.max_newton_iter)?
        }
    };
    let state = State::new(rhs.layout().clone(), x).map_err(|_| RhsError::NonFinite(0))?;
    let mut f = vec![0.0; rhs.dim()];
    rhs.eval(0.0, state.values(), &mut f)?;
    let r = inf_norm(&f);
    if r > OPERATION_POINT_TOL {
        return Err(SteadyStateError::NoConvergence { residual: r, best: state });
    }
    Ok(state)
}

fn relax(rhs: &GridRhs, x0: &State, opts: &OperationPointOptions) -> Result<Vec<f64>, SteadyStateError> {
    let start = reinit_with(rhs, x0)?;
    let damped = Damped {
        inner: rhs,
        indices: frequency_indices(rhs),
        damping: opts.damping,
    };
    let solver_opts = SolverOptions {
        rtol: 1e-8,
        atol: 1e-8,
        ..Default::default()
    };
    let mut integ = Integrator::new(&damped, 0.0, start.values(), opts.horizon, solver_opts)?;
    let mut f = vec![0.0; rhs.dim()];
    while integ.t() < opts.horizon {
        integ.step(opts.horizon).map_err(|reason| SolverError::NonConvergence {
            t: integ.t(),
            reason,
            partial: Default::default(),
            stats: integ.stats(),
        })?;
        rhs.eval(0.0, integ.x(), &mut f)?;
        if inf_norm(&f) <= OPERATION_POINT_TOL {
            break;
        }
    }
    Ok(integ.x().to_vec())
}

/// Holds the differential components of `x` fixed and solves the algebraic
/// rows for the algebraic components to `‖g‖∞ ≤ 1e-10`. An already
/// consistent state is returned unchanged.
pub fn reinit_algebraic(grid: &PowerGrid, x: &State) -> Result<State, SteadyStateError> {
    let rhs = GridRhs::new(grid)?;
    check_layout(&rhs, x)?;
    reinit_with(&rhs, x)
}

pub(crate) fn reinit_with(rhs: &GridRhs, x: &State) -> Result<State, SteadyStateError> {
    let n = rhs.dim();
    let alg: Vec<usize> = (0..n).filter(|&k| !rhs.mass()[k]).collect();
    let mut v = x.values().to_vec();
    let mut f = vec![0.0; n];
    let failed = |v: &[f64], residual: f64| SteadyStateError::ReinitFailed {
        residual,
        state: State::new(rhs.layout().clone(), v.to_vec()).unwrap_or_else(|_| x.clone()),
    };
    let g_norm = |f: &[f64]| alg.iter().fold(0.0f64, |m, &k| m.max(f[k].abs()));
    if rhs.eval(0.0, &v, &mut f).is_err() {
        return Err(failed(&v, f64::INFINITY));
    }
    let mut g = g_norm(&f);
    if g <= REINIT_TOL {
        return Ok(x.clone());
    }
    let m = alg.len();
    for _ in 0..50 {
        let full = fd_jacobian_with(rhs, 0.0, &v, &f, Some(&alg)).map_err(|_| failed(&v, g))?;
        let jaa = DMatrix::from_fn(m, m, |i, j| full[(alg[i], alg[j])]);
        let lu = factor(jaa).ok_or_else(|| failed(&v, g))?;
        let rhs_vec = DVector::from_iterator(m, alg.iter().map(|&k| f[k]));
        let delta = lu.solve(&rhs_vec).ok_or_else(|| failed(&v, g))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        let mut trial = v.clone();
        let mut ftrial = vec![0.0; n];
        for _ in 0..=8 {
            for (i, &k) in alg.iter().enumerate() {
                trial[k] = v[k] - lambda * delta[i];
            }
            if rhs.eval(0.0, &trial, &mut ftrial).is_ok() {
                let gt = g_norm(&ftrial);
                if gt < g || gt <= REINIT_TOL {
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(failed(&v, g));
        }
        v = trial;
        f = ftrial;
        g = g_norm(&f);
        if g <= REINIT_TOL {
            return State::new(rhs.layout().clone(), v.clone()).map_err(|_| failed(&v, g));
        }
    }
    Err(failed(&v, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::line::StaticLine;
    use crate::node::{PQAlgebraic, SlackAlgebraic, VSIVoltagePT1};

    fn slack(u: Phasor) -> SlackAlgebraic {
        SlackAlgebraic::new(u).unwrap()
    }

    fn two_bus() -> PowerGrid {
        let mut g = PowerGrid::default();
        g.add_node("bus1", slack(Phasor::new(1.0, 0.0))).unwrap();
        g.add_node("bus2", PQAlgebraic::new(-0.3, 0.0).unwrap()).unwrap();
        g.add_line("line", "bus1", "bus2", StaticLine::new(Phasor::new(0.0, -20.0)).unwrap())
            .unwrap();
        g
    }

    #[test]
    fn slack_only_operation_point() {
        let mut g = PowerGrid::default();
        g.add_node("bus1", slack(Phasor::new(1.0, 0.0))).unwrap();
        let x = find_operationpoint(&g, None, &Default::default()).unwrap();
        assert_eq!(x.values(), &[1.0, 0.0]);
    }

    #[test]
    fn guess_defaults() {
        let mut g = PowerGrid::default();
        g.add_node("bus1", slack(Phasor::new(0.98, 0.01))).unwrap();
        let vsi = VSIVoltagePT1 {
            tau_v: 1.0,
            tau_p: 1.0,
            tau_q: 1.0,
            k_p: 1.0,
            k_q: 1.0,
            v_r: 1.0,
            p: 0.2,
            q: -0.05,
        }
        .validated()
        .unwrap();
        g.add_node("inv", vsi).unwrap();
        let x = default_guess(&g).unwrap();
        assert_eq!(x.voltage("bus1").unwrap(), Phasor::new(0.98, 0.01));
        assert_eq!(x.get("inv", "ω").unwrap(), 0.0);
        assert_eq!(x.get("inv", "q_m").unwrap(), -0.05);
    }

    #[test]
    fn reinit_restores_slack() {
        let g = two_bus();
        let op = find_operationpoint(&g, None, &Default::default()).unwrap();
        let same = reinit_algebraic(&g, &op).unwrap();
        assert_eq!(same, op);
        let mut bad = op.clone();
        bad.set("bus1", "u_re", 0.9).unwrap();
        let fixed = reinit_algebraic(&g, &bad).unwrap();
        assert!((fixed.get("bus1", "u_re").unwrap() - 1.0).abs() < 1e-12);
        assert!(fixed.max_abs_diff(&op) < 1e-9);
    }

    #[test]
    fn islanded_pq_cannot_reinit() {
        let g = two_bus();
        let op = find_operationpoint(&g, None, &Default::default()).unwrap();
        let cut = g.without_line("line").unwrap();
        let r = reinit_algebraic(&cut, &op);
        assert!(matches!(r, Err(SteadyStateError::ReinitFailed { .. })), "{r:?}");
    }

    #[test]
    fn no_reference_is_reported() {
        let mut g = PowerGrid::default();
        g.add_node("a", PQAlgebraic::new(0.0, 0.0).unwrap()).unwrap();
        assert!(matches!(
            find_operationpoint(&g, None, &Default::default()),
            Err(SteadyStateError::PhaseGauge)
        ));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("nlsolve".parse::<OperationPointMethod>().unwrap(), OperationPointMethod::NlSolve);
        assert!("newton".parse::<OperationPointMethod>().is_err());
    }
}
