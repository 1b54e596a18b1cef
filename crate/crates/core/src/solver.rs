//! Implicit integration of `M·ẋ = f(t, x)` with a diagonal boolean mass
//! matrix (index-1 DAEs).
//!
//! Two one-step methods are provided, both stiffly accurate: implicit Euler
//! (order 1) and TR-BDF2 (order 2, L-stable), the latter written as an ESDIRK
//! scheme with `γ = 2 − √2`. Stage equations are solved by a modified Newton
//! iteration on a dense LU factorization of `M/(h·d) − J`, where `J` is a
//! forward-difference Jacobian reused across steps until convergence slows.
//! Algebraic rows are enforced as `g(z) = 0` at every stage and are excluded
//! from the error norm.

use nalgebra::{DMatrix, DVector, LU};
use nalgebra::Dyn;
use thiserror::Error;

use crate::grid::RhsError;

/// A system `M·ẋ = f(t, x)` with diagonal boolean `M`.
pub trait DaeSystem {
    fn dim(&self) -> usize;
    /// `true` marks a differential row, `false` an algebraic one.
    fn mass(&self) -> &[bool];
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), RhsError>;
}

/// Closure-backed system, handy for small problems.
pub struct FnSystem<F> {
    mass: Vec<bool>,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(mass: Vec<bool>, f: F) -> Self {
        Self { mass, f }
    }
}

impl<F> DaeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.mass.len()
    }

    fn mass(&self) -> &[bool] {
        &self.mass
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), RhsError> {
        (self.f)(t, x, out);
        match out.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(RhsError::NonFinite(k)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ImplicitEuler,
    TrBdf2,
}

impl Method {
    fn order(self) -> i32 {
        match self {
            Method::ImplicitEuler => 1,
            Method::TrBdf2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    /// `None` means the length of the integration interval.
    pub h_max: Option<f64>,
    pub max_steps: usize,
    pub method: Method,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-6,
            h_init: 1e-3,
            h_min: 1e-10,
            h_max: None,
            max_steps: 1_000_000,
            method: Method::TrBdf2,
            newton_tol: 1e-9,
            newton_max_iter: 10,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    fn check(&self, span: f64) -> Result<f64, SolverError> {
        let bad = |what: &str| Err(SolverError::InvalidOptions(what.to_string()));
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.newton_tol > 0.0) {
            return bad("tolerances must be > 0");
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be >= 1");
        }
        let h_max = self.h_max.unwrap_or(span);
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= h_max.max(self.h_min)) {
            return bad("require 0 < h_min <= h_init <= h_max");
        }
        Ok(h_max)
    }
}

/// Step statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_iterations: usize,
    pub newton_failures: usize,
    pub jacobian_evaluations: usize,
    /// Steps retried with a fresh Jacobian after a stale one failed.
    pub jacobian_retries: usize,
    pub lu_factorizations: usize,
    pub rhs_evaluations: usize,
}

impl std::ops::AddAssign for SolverStats {
    fn add_assign(&mut self, o: Self) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.newton_iterations += o.newton_iterations;
        self.newton_failures += o.newton_failures;
        self.jacobian_evaluations += o.jacobian_evaluations;
        self.jacobian_retries += o.jacobian_retries;
        self.lu_factorizations += o.lu_factorizations;
        self.rhs_evaluations += o.rhs_evaluations;
    }
}

/// Accepted samples `(t, x)` with linear dense output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, x: Vec<f64>) {
        debug_assert!(self.times.last().is_none_or(|&l| t > l));
        self.times.push(t);
        self.states.push(x);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_start(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn t_end(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(|v| v.as_slice())
    }

    /// Linear interpolation, clamped to the covered range.
    pub fn sample(&self, t: f64) -> Option<Vec<f64>> {
        let n = self.times.len();
        if n == 0 {
            return None;
        }
        if t <= self.times[0] {
            return Some(self.states[0].clone());
        }
        if t >= self.times[n - 1] {
            return Some(self.states[n - 1].clone());
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        if t == t0 {
            return Some(self.states[k - 1].clone());
        }
        let a = (t - t0) / (t1 - t0);
        Some(
            self.states[k - 1]
                .iter()
                .zip(&self.states[k])
                .map(|(x0, x1)| x0 + a * (x1 - x0))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("initial state is inconsistent: algebraic residual {residual:e} exceeds {limit:e}")]
    InconsistentInitial { residual: f64, limit: f64 },
    #[error("right-hand side failed at the initial state: {0}")]
    InitialEval(RhsError),
    #[error("integration stopped at t = {t}: {reason}")]
    NonConvergence {
        t: f64,
        reason: StopReason,
        partial: Trajectory,
        stats: SolverStats,
    },
    #[error("step failed: {0}")]
    Step(StopReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StopReason {
    #[error("step size fell below h_min")]
    StepUnderflow,
    #[error("Newton iteration did not converge")]
    NewtonFailure,
    #[error("maximum number of steps exceeded")]
    MaxSteps,
    #[error("singular iteration matrix")]
    Singular,
}

/// Algebraic consistency limit for initial states.
pub const CONSISTENCY_LIMIT: f64 = 1e-6;

const TRBDF2_GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
const TRBDF2_D: f64 = TRBDF2_GAMMA / 2.0;
const TRBDF2_W: f64 = std::f64::consts::SQRT_2 / 4.0;

/// Forward-difference Jacobian `∂f/∂x` with column steps
/// `√ε·max(|x_j|, 1e-3)`.
pub fn fd_jacobian<S: DaeSystem + ?Sized>(
    sys: &S,
    t: f64,
    x: &[f64],
) -> Result<DMatrix<f64>, RhsError> {
    let n = sys.dim();
    let mut f0 = vec![0.0; n];
    sys.eval(t, x, &mut f0)?;
    fd_jacobian_with(sys, t, x, &f0, None)
}

/// Same as [`fd_jacobian`] with `f(t, x)` supplied; `cols` restricts the
/// perturbed columns (others are left zero).
pub(crate) fn fd_jacobian_with<S: DaeSystem + ?Sized>(
    sys: &S,
    t: f64,
    x: &[f64],
    f0: &[f64],
    cols: Option<&[usize]>,
) -> Result<DMatrix<f64>, RhsError> {
    let n = sys.dim();
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let all: Vec<usize>;
    let cols = match cols {
        Some(c) => c,
        None => {
            all = (0..n).collect();
            &all
        }
    };
    for &j in cols {
        let eps = sqrt_eps * x[j].abs().max(1e-3);
        xp[j] = x[j] + eps;
        let step = xp[j] - x[j];
        sys.eval(t, &xp, &mut fp)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - f0[i]) / step;
        }
        xp[j] = x[j];
    }
    Ok(jac)
}

/// LU factorization with a relative pivot check.
pub(crate) fn factor(a: DMatrix<f64>) -> Option<LU<f64, Dyn, Dyn>> {
    let lu = a.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max.is_finite() && min.is_finite()) || max == 0.0 || min <= 1e-13 * max {
        return None;
    }
    Some(lu)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug)]
enum StageFail {
    Newton,
    Singular,
}

struct Attempt {
    x: Vec<f64>,
    f: Vec<f64>,
    err: f64,
}

/// Stepping state of one integration. Single-threaded; independent
/// integrators share nothing.
pub struct Integrator<'a, S: DaeSystem + ?Sized> {
    sys: &'a S,
    opts: SolverOptions,
    mass: Vec<f64>,
    t: f64,
    x: Vec<f64>,
    fx: Vec<f64>,
    h: f64,
    h_max: f64,
    jac: Option<DMatrix<f64>>,
    jac_current: bool,
    jac_stale: bool,
    lu: Option<(f64, LU<f64, Dyn, Dyn>)>,
    stats: SolverStats,
}

impl<'a, S: DaeSystem + ?Sized> Integrator<'a, S> {
    /// `h_max` defaults to `span` when the options leave it open.
    pub fn new(
        sys: &'a S,
        t0: f64,
        x0: &[f64],
        span: f64,
        opts: SolverOptions,
    ) -> Result<Self, SolverError> {
        let h_max = opts.check(span)?;
        let n = sys.dim();
        assert_eq!(x0.len(), n, "state dimension");
        let mut fx = vec![0.0; n];
        sys.eval(t0, x0, &mut fx).map_err(SolverError::InitialEval)?;
        let mass: Vec<f64> = sys.mass().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let h = opts.h_init.min(h_max);
        Ok(Self {
            sys,
            mass,
            t: t0,
            x: x0.to_vec(),
            fx,
            h,
            h_max,
            jac: None,
            jac_current: false,
            jac_stale: true,
            lu: None,
            stats: SolverStats {
                rhs_evaluations: 1,
                ..Default::default()
            },
            opts,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// `f(t, x)` at the current point.
    pub fn f(&self) -> &[f64] {
        &self.fx
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    /// Largest algebraic residual at the current point.
    pub fn algebraic_residual(&self) -> f64 {
        algebraic_norm(&self.mass, &self.fx)
    }

    fn refresh_jacobian(&mut self) -> Result<(), StageFail> {
        let jac = fd_jacobian_with(self.sys, self.t, &self.x, &self.fx, None)
            .map_err(|_| StageFail::Newton)?;
        self.stats.jacobian_evaluations += 1;
        self.stats.rhs_evaluations += self.sys.dim();
        self.jac = Some(jac);
        self.jac_current = true;
        self.jac_stale = false;
        self.lu = None;
        Ok(())
    }

    fn ensure_lu(&mut self, hd: f64) -> Result<(), StageFail> {
        if let Some((cached, _)) = &self.lu {
            if *cached == hd {
                return Ok(());
            }
        }
        let jac = self.jac.as_ref().expect("jacobian present");
        let n = self.sys.dim();
        let mut a = -jac.clone();
        for i in 0..n {
            a[(i, i)] += self.mass[i] / hd;
        }
        self.stats.lu_factorizations += 1;
        let lu = factor(a).ok_or(StageFail::Singular)?;
        self.lu = Some((hd, lu));
        Ok(())
    }

    fn weights<'w>(&'w self, z: &'w [f64]) -> impl Iterator<Item = f64> + 'w {
        let (atol, rtol) = (self.opts.atol, self.opts.rtol);
        z.iter().zip(&self.x).map(move |(a, b)| atol + rtol * a.abs().max(b.abs()))
    }

    /// Solves `M(z − x_n)/(h·d) − F(z) − c = 0` (differential rows) and
    /// `g(z) = 0` (algebraic rows). Returns `F(z)`.
    fn solve_stage(
        &mut self,
        t_stage: f64,
        hd: f64,
        c: &[f64],
        z: &mut [f64],
    ) -> Result<Vec<f64>, StageFail> {
        let n = self.sys.dim();
        let tol = self.opts.newton_tol;
        let mut fz = vec![0.0; n];
        let mut r = vec![0.0; n];
        let residual = |this: &mut Self, z: &[f64], fz: &mut [f64], r: &mut [f64]| -> Result<(), StageFail> {
            this.stats.rhs_evaluations += 1;
            this.sys.eval(t_stage, z, fz).map_err(|_| StageFail::Newton)?;
            for i in 0..n {
                r[i] = if this.mass[i] != 0.0 {
                    (z[i] - this.x[i]) / hd - fz[i] - c[i]
                } else {
                    -fz[i]
                };
            }
            Ok(())
        };
        residual(self, z, &mut fz, &mut r)?;
        if inf_norm(&r) <= tol {
            return Ok(fz);
        }
        self.ensure_lu(hd)?;
        let mut prev_norm: Option<f64> = None;
        for _ in 0..self.opts.newton_max_iter {
            self.stats.newton_iterations += 1;
            let (_, lu) = self.lu.as_ref().expect("factored");
            let delta = lu
                .solve(&DVector::from_column_slice(&r))
                .ok_or(StageFail::Singular)?;
            for i in 0..n {
                z[i] -= delta[i];
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(StageFail::Newton);
            }
            let dnorm = delta
                .iter()
                .zip(self.weights(z))
                .fold(0.0f64, |m, (d, w)| m.max(d.abs() / w));
            residual(self, z, &mut fz, &mut r)?;
            let alg = algebraic_norm(&self.mass, &fz);
            let diff = r
                .iter()
                .zip(&self.mass)
                .filter(|(_, &m)| m != 0.0)
                .fold(0.0f64, |m, (v, _)| m.max(v.abs()));
            if let Some(p) = prev_norm {
                if p > 0.0 {
                    let rate = dnorm / p;
                    if rate > 0.5 {
                        self.jac_stale = true;
                    }
                    if rate > 2.0 {
                        return Err(StageFail::Newton);
                    }
                }
            }
            if alg <= tol && (diff <= tol || dnorm <= 1e-3) {
                return Ok(fz);
            }
            prev_norm = Some(dnorm);
        }
        Err(StageFail::Newton)
    }

    fn attempt(&mut self, h: f64) -> Result<Attempt, StageFail> {
        let n = self.sys.dim();
        let x_n = self.x.clone();
        match self.opts.method {
            Method::ImplicitEuler => {
                let c = vec![0.0; n];
                let mut z = x_n.clone();
                let fz = self.solve_stage(self.t + h, h, &c, &mut z)?;
                let raw: Vec<f64> = (0..n)
                    .map(|i| self.mass[i] * 0.5 * h * (fz[i] - self.fx[i]))
                    .collect();
                let err = self.error_norm(&raw, h, &z)?;
                Ok(Attempt { x: z, f: fz, err })
            }
            Method::TrBdf2 => {
                let (g, d, w) = (TRBDF2_GAMMA, TRBDF2_D, TRBDF2_W);
                let hd = h * d;
                let f1 = self.fx.clone();
                let mut z2 = x_n.clone();
                let f2 = self.solve_stage(self.t + g * h, hd, &f1, &mut z2)?;
                let c3: Vec<f64> = (0..n).map(|i| w / d * (f1[i] + f2[i])).collect();
                let mut z3: Vec<f64> = (0..n).map(|i| x_n[i] + (z2[i] - x_n[i]) / g).collect();
                let f3 = self.solve_stage(self.t + h, hd, &c3, &mut z3)?;
                let (e1, e2, e3) = ((4.0 * w - 1.0) / 3.0, -1.0 / 3.0, 2.0 * d / 3.0);
                let raw: Vec<f64> = (0..n)
                    .map(|i| self.mass[i] * h * (e1 * f1[i] + e2 * f2[i] + e3 * f3[i]))
                    .collect();
                let err = self.error_norm(&raw, hd, &z3)?;
                Ok(Attempt { x: z3, f: f3, err })
            }
        }
    }

    /// Filters the raw estimate through `(M − h·d·J)⁻¹ M` and measures it
    /// over the differential components.
    fn error_norm(&mut self, raw: &[f64], hd: f64, z: &[f64]) -> Result<f64, StageFail> {
        self.ensure_lu(hd)?;
        let (_, lu) = self.lu.as_ref().expect("factored");
        let rhs: Vec<f64> = raw.iter().map(|v| v / hd).collect();
        let e = lu
            .solve(&DVector::from_column_slice(&rhs))
            .ok_or(StageFail::Singular)?;
        let norm = e
            .iter()
            .zip(self.weights(z))
            .zip(&self.mass)
            .filter(|(_, &m)| m != 0.0)
            .fold(0.0f64, |m, ((e, w), _)| m.max(e.abs() / w));
        Ok(if norm.is_finite() { norm } else { f64::INFINITY })
    }

    /// Takes one step of exactly `h` without error control (fixed-step use).
    /// Returns the local error estimate norm.
    pub fn fixed_step(&mut self, h: f64) -> Result<f64, SolverError> {
        let a = self.attempt_with_retry(h).map_err(|e| match e {
            StageFail::Singular => SolverError::Step(StopReason::Singular),
            StageFail::Newton => SolverError::Step(StopReason::NewtonFailure),
        })?;
        let err = a.err;
        self.commit(h, a);
        Ok(err)
    }

    fn attempt_with_retry(&mut self, h: f64) -> Result<Attempt, StageFail> {
        if self.jac.is_none() || self.jac_stale {
            self.refresh_jacobian()?;
        }
        match self.attempt(h) {
            Ok(a) => Ok(a),
            Err(e) if !self.jac_current => {
                // modified Newton fallback: fresh Jacobian, same step size
                self.stats.jacobian_retries += 1;
                self.refresh_jacobian()?;
                self.attempt(h).map_err(|_| e)
            }
            Err(e) => Err(e),
        }
    }

    fn commit(&mut self, h: f64, a: Attempt) {
        self.t += h;
        self.x = a.x;
        self.fx = a.f;
        self.jac_current = false;
        self.stats.accepted += 1;
    }

    /// Advances by one accepted adaptive step, never past `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<(), StopReason> {
        let q = self.opts.method.order() as f64;
        loop {
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.h_max);
            let clipped = h >= remaining;
            if clipped {
                h = remaining;
            } else if !(h >= self.opts.h_min) || self.t + h <= self.t {
                return Err(StopReason::StepUnderflow);
            }
            match self.attempt_with_retry(h) {
                Ok(a) if a.err <= 1.0 => {
                    let factor = if a.err == 0.0 {
                        5.0
                    } else {
                        (0.9 * a.err.powf(-1.0 / (q + 1.0))).clamp(0.2, 5.0)
                    };
                    self.commit(h, a);
                    if clipped {
                        self.t = t_end;
                        self.h = self.h.max(h * factor).min(self.h_max);
                    } else {
                        self.h = (h * factor).min(self.h_max);
                    }
                    return Ok(());
                }
                Ok(a) if a.err.is_finite() => {
                    self.stats.rejected += 1;
                    let factor = (0.9 * a.err.powf(-1.0 / (q + 1.0))).clamp(0.2, 0.9);
                    self.h = h * factor;
                }
                _ => {
                    self.stats.rejected += 1;
                    self.stats.newton_failures += 1;
                    self.h = h * 0.25;
                }
            }
            if !(self.h >= self.opts.h_min) || self.t + self.h <= self.t {
                return Err(StopReason::StepUnderflow);
            }
        }
    }
}

fn algebraic_norm(mass: &[f64], f: &[f64]) -> f64 {
    f.iter()
        .zip(mass)
        .filter(|(_, &m)| m == 0.0)
        .fold(0.0f64, |m, (v, _)| m.max(v.abs()))
}

/// Largest algebraic residual `‖g(x)‖∞` of `x`.
pub fn algebraic_residual<S: DaeSystem + ?Sized>(sys: &S, t: f64, x: &[f64]) -> Result<f64, RhsError> {
    let mut f = vec![0.0; sys.dim()];
    sys.eval(t, x, &mut f)?;
    Ok(sys
        .mass()
        .iter()
        .zip(&f)
        .filter(|(m, _)| !**m)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs())))
}

/// Adaptive integration over `tspan`, recording every accepted step.
pub fn integrate<S: DaeSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    tspan: (f64, f64),
    opts: &SolverOptions,
) -> Result<(Trajectory, SolverStats), SolverError> {
    let (t0, t1) = tspan;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(SolverError::InvalidOptions(format!(
            "time span ({t0}, {t1}) must be increasing"
        )));
    }
    let mut integ = Integrator::new(sys, t0, x0, t1 - t0, opts.clone())?;
    let g = integ.algebraic_residual();
    if g > CONSISTENCY_LIMIT {
        return Err(SolverError::InconsistentInitial {
            residual: g,
            limit: CONSISTENCY_LIMIT,
        });
    }
    let mut traj = Trajectory::new();
    traj.push(t0, x0.to_vec());
    while integ.t() < t1 {
        if integ.stats().accepted >= opts.max_steps {
            return Err(SolverError::NonConvergence {
                t: integ.t(),
                reason: StopReason::MaxSteps,
                partial: traj,
                stats: integ.stats(),
            });
        }
        if let Err(reason) = integ.step(t1) {
            return Err(SolverError::NonConvergence {
                t: integ.t(),
                reason,
                partial: traj,
                stats: integ.stats(),
            });
        }
        traj.push(integ.t(), integ.x().to_vec());
    }
    Ok((traj, integ.stats()))
}

fn one_step<S: DaeSystem + ?Sized>(
    sys: &S,
    x_n: &[f64],
    t_n: f64,
    h: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64), SolverError> {
    if !(h > 0.0) {
        return Err(SolverError::InvalidOptions("step size must be > 0".into()));
    }
    let mut o = opts.clone();
    o.h_init = h;
    o.h_min = o.h_min.min(h);
    o.h_max = Some(h);
    let mut integ = Integrator::new(sys, t_n, x_n, h, o)?;
    let err = integ.fixed_step(h)?;
    Ok((integ.x().to_vec(), err))
}

/// One implicit Euler step `M(x − x_n) = h·f(t_n + h, x)`.
pub fn step_implicit_euler<S: DaeSystem + ?Sized>(
    sys: &S,
    x_n: &[f64],
    t_n: f64,
    h: f64,
    opts: &SolverOptions,
) -> Result<Vec<f64>, SolverError> {
    let o = opts.clone().with_method(Method::ImplicitEuler);
    one_step(sys, x_n, t_n, h, &o).map(|(x, _)| x)
}

/// One TR-BDF2 step; returns the new state and its normalized local error
/// estimate.
pub fn step_trbdf2<S: DaeSystem + ?Sized>(
    sys: &S,
    x_n: &[f64],
    t_n: f64,
    h: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64), SolverError> {
    let o = opts.clone().with_method(Method::TrBdf2);
    one_step(sys, x_n, t_n, h, &o)
}
