//! Acceptance criteria, one PASS/FAIL line each. Exit code 1 if any fails.
//!
//! Run with `cargo test -p phasorgrid-cli --test acceptance`.

use std::path::PathBuf;
use std::process::Command;

use phasorgrid_core::grid::GridRhs;
use phasorgrid_core::io::csv_columns;
use phasorgrid_core::scenario::{map_state, FaultWindow};
use phasorgrid_core::solver::{algebraic_residual, integrate, step_implicit_euler, step_trbdf2, FnSystem};
use phasorgrid_core::{
    find_operationpoint, read_powergrid, simulate, write_powergrid, LineModel, Method, NodeModel,
    OperationPointMethod, OperationPointOptions, PQAlgebraic, Perturbation, Phasor, PowerGrid, RLLine,
    SlackAlgebraic, SolverOptions, State, StaticLine, VSIVoltagePT1,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const SHIPPED: &[&str] = &["slack_only", "two_bus", "validation", "ieee14"];
const DYNAMIC: &[&str] = &["two_bus", "validation", "ieee14"];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn grid_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../grids")
        .join(format!("{name}.json"))
}

fn load(name: &str) -> Result<PowerGrid, String> {
    let text = std::fs::read_to_string(grid_path(name)).map_err(|e| e.to_string())?;
    read_powergrid(&text).map_err(|e| format!("{name}: {e}"))
}

fn op(g: &PowerGrid, method: OperationPointMethod) -> Result<State, String> {
    find_operationpoint(g, None, &OperationPointOptions::method(method)).map_err(|e| e.to_string())
}

fn no_op() -> Perturbation {
    Perturbation::ChangeInitialConditions {
        assignments: Vec::new(),
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Listing 1 written out term by term, independent of the library.
fn listing1(
    m: &VSIVoltagePT1,
    u: (f64, f64),
    i: (f64, f64),
    omega: f64,
    q_m: f64,
) -> ((f64, f64), f64, f64) {
    let (ur, ui) = u;
    let (ir, ii) = i;
    // s = u * conj(i)
    let p = ur * ir + ui * ii;
    let q = ui * ir - ur * ii;
    let dphi = omega;
    let v = (ur * ur + ui * ui).sqrt();
    let dv = 1.0 / m.tau_v * (-v + m.v_r - m.k_q * (q_m - m.q));
    let dqm = 1.0 / m.tau_q * (q - q_m);
    // u * j * dphi + dv * u / v
    let du = (-ui * dphi + dv * ur / v, ur * dphi + dv * ui / v);
    let domega = 1.0 / m.tau_p * (-omega - m.k_p * (p - m.p));
    (du, domega, dqm)
}

fn random_vsi(rng: &mut StdRng) -> VSIVoltagePT1 {
    VSIVoltagePT1 {
        tau_v: rng.gen_range(0.01..1.0),
        tau_p: rng.gen_range(0.01..1.0),
        tau_q: rng.gen_range(0.01..1.0),
        k_p: rng.gen_range(0.1..5.0),
        k_q: rng.gen_range(0.1..5.0),
        v_r: rng.gen_range(0.9..1.1),
        p: rng.gen_range(-1.0..1.0),
        q: rng.gen_range(-1.0..1.0),
    }
}

fn c1_listing1() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = random_vsi(&mut rng);
        let u = Phasor::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(-3.0..3.0));
        let i = Phasor::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let (omega, q_m) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut d = [0.0; 2];
        let du = NodeModel::from(m)
            .rhs(u, i, &[omega, q_m], 0.0, &mut d)
            .map_err(|e| e.to_string())?;
        let (want_du, want_dw, want_dq) = listing1(&m, (u.re, u.im), (i.re, i.im), omega, q_m);
        for (got, want) in [(du.re, want_du.0), (du.im, want_du.1), (d[0], want_dw), (d[1], want_dq)] {
            worst = worst.max((got - want).abs() / want.abs().max(1e-300).max(1.0));
        }
    }
    // equilibrium iff ω = 0, p = P, q = q_m, |u| = V_r − K_Q(q_m − Q)
    let mut agree = 0;
    let mut at_eq = 0;
    let probes = 1000;
    for k in 0..probes {
        let m = random_vsi(&mut rng);
        let q_m = rng.gen_range(-0.5..0.5);
        let v = m.v_r - m.k_q * (q_m - m.q);
        let v = if v > 0.2 { v } else { 1.0 };
        let u = Phasor::from_polar(v, rng.gen_range(-3.0..3.0));
        let (mut omega, mut p, mut q, mut qm) = (0.0, m.p, q_m, q_m);
        // perturb one condition in three of four probes
        match k % 4 {
            1 => omega = rng.gen_range(-0.5..0.5),
            2 => p += rng.gen_range(-0.5..0.5),
            3 => q += rng.gen_range(-0.5..0.5),
            _ => {}
        }
        if k % 8 == 7 {
            qm += 0.3;
        }
        let i = (Phasor::new(p, q) / u).conj();
        let s = u * i.conj();
        let mut d = [0.0; 2];
        let du = NodeModel::from(m)
            .rhs(u, i, &[omega, qm], 0.0, &mut d)
            .map_err(|e| e.to_string())?;
        let at_rest = du.norm().max(d[0].abs()).max(d[1].abs()) < 1e-9;
        let cond = omega.abs() < 1e-12
            && (s.re - m.p).abs() < 1e-9
            && (s.im - qm).abs() < 1e-9
            && (u.norm() - (m.v_r - m.k_q * (qm - m.q))).abs() < 1e-9;
        at_eq += usize::from(cond);
        agree += usize::from(at_rest == cond);
    }
    check(
        worst <= 1e-12 && agree == probes && at_eq > 0,
        format!("max rel err {worst:.1e} (tol 1e-12); iff holds on {agree}/{probes} probes ({at_eq} equilibria)"),
    )
}

fn c2_two_bus() -> Outcome {
    let mut g = PowerGrid::default();
    g.add_node("bus1", SlackAlgebraic::new(Phasor::new(1.0, 0.0)).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    g.add_node("bus2", PQAlgebraic::new(-0.3, 0.0).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    g.add_line("line", "bus1", "bus2", StaticLine::new(Phasor::new(0.0, -20.0)).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let x = op(&g, OperationPointMethod::RootFind)?;
    let u2 = x.voltage("bus2").map_err(|e| e.to_string())?;
    let err = (u2 - Phasor::new(0.999775, -0.015)).norm();
    check(err < 1e-6, format!("u2 = {u2:.7}, |u2 - (0.999775 - 0.015j)| = {err:.1e} (tol 1e-6)"))
}

fn slope(method: Method) -> Result<f64, String> {
    let sys = FnSystem::new(vec![true], |_, x: &[f64], f: &mut [f64]| f[0] = -x[0]);
    let opts = SolverOptions::default();
    let mut pts = Vec::new();
    for h in [0.1f64, 0.05, 0.025, 0.0125] {
        let mut x = vec![1.0];
        for k in 0..(1.0 / h).round() as usize {
            let t = k as f64 * h;
            x = match method {
                Method::ImplicitEuler => step_implicit_euler(&sys, &x, t, h, &opts),
                Method::TrBdf2 => step_trbdf2(&sys, &x, t, h, &opts).map(|r| r.0),
            }
            .map_err(|e| e.to_string())?;
        }
        pts.push((h.ln(), (x[0] - (-1.0f64).exp()).abs().ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(num / den)
}

fn c3_orders() -> Outcome {
    let ie = slope(Method::ImplicitEuler)?;
    let tr = slope(Method::TrBdf2)?;
    let dae = FnSystem::new(vec![true, false], |t, x: &[f64], f: &mut [f64]| {
        f[0] = -x[0] + x[1];
        f[1] = x[1] - 0.5 * x[0].sin() - t.sin();
    });
    let mut worst = 0.0f64;
    for method in [Method::ImplicitEuler, Method::TrBdf2] {
        let opts = SolverOptions::default().with_method(method);
        let (traj, _) = integrate(&dae, &[0.5, 0.5 * 0.5f64.sin()], (0.0, 5.0), &opts).map_err(|e| e.to_string())?;
        for (t, x) in traj.times().iter().zip(traj.states()) {
            worst = worst.max(algebraic_residual(&dae, *t, x).map_err(|e| e.to_string())?);
        }
    }
    check(
        (ie - 1.0).abs() <= 0.1 && (tr - 2.0).abs() <= 0.1 && worst <= 1e-9,
        format!("slopes IE {ie:.3}, TR-BDF2 {tr:.3} (±0.1); max algebraic residual {worst:.3e} (tol 1e-9)"),
    )
}

fn c4_stationarity() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in DYNAMIC {
        let g = load(name)?;
        let x0 = op(&g, OperationPointMethod::RootFind)?;
        let sol = simulate(&no_op(), &g, &x0, (0.0, 10.0), &SolverOptions::default()).map_err(|e| e.to_string())?;
        let dev = sol
            .segments()
            .iter()
            .flat_map(|s| s.trajectory().states())
            .map(|x| x.iter().zip(x0.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0f64, f64::max);
        ok &= dev < 1e-6;
        parts.push(format!("{name} {dev:.1e}"));
    }
    check(ok, format!("max deviation over (0, 10): {} (tol 1e-6)", parts.join(", ")))
}

fn c5_line_failure() -> Outcome {
    let g = load("ieee14")?;
    let x0 = op(&g, OperationPointMethod::RootFind)?;
    let branch = "branch2";
    let reduced = g.without_line(branch).map_err(|e| e.to_string())?;
    if phasorgrid_core::grid::islands(&reduced).len() != 1 {
        return Err(format!("{branch} islands the grid"));
    }
    let p = Perturbation::LineFailure {
        line_name: branch.into(),
        window: FaultWindow::new(1.0, 20.0).map_err(|e| e.to_string())?,
    };
    let sol = simulate(&p, &g, &x0, (0.0, 20.0), &SolverOptions::default()).map_err(|e| e.to_string())?;
    let x20 = sol.final_state().ok_or("empty solution")?;
    let target = op(&reduced, OperationPointMethod::RootFind)?;
    let err = x20.max_abs_diff(&target);
    let moved = x0.max_abs_diff(&target);
    check(
        err < 1e-4 && moved > 1e-3,
        format!("|x(20) - x*_reduced| = {err:.1e} (tol 1e-4); operation point shift {moved:.1e}"),
    )
}

fn c6_dispatch() -> Outcome {
    let g = load("validation")?;
    let x0 = op(&g, OperationPointMethod::RootFind)?;
    let (t_on, t_off, t_end) = (1.0, 25.0, 60.0);
    let p = Perturbation::PowerPerturbation {
        node_name: "bus3".into(),
        p: Some(0.5),
        q: None,
        window: FaultWindow::new(t_on, t_off).map_err(|e| e.to_string())?,
    };
    let faulted = p.apply(&g).map_err(|e| e.to_string())?;
    let target = op(&faulted, OperationPointMethod::RootFind)?;
    let sol = simulate(&p, &g, &x0, (0.0, t_end), &SolverOptions::default()).map_err(|e| e.to_string())?;
    let fault_seg = sol.segment_at(t_off).ok_or("no fault segment")?;
    let at_off = fault_seg.trajectory().last_state().ok_or("empty segment")?;
    let err = at_off
        .iter()
        .zip(target.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let times: Vec<f64> = (0..=600).map(|k| k as f64 * t_end / 600.0).collect();
    let pll = sol.series("bus4", "ω", &times).map_err(|e| e.to_string())?;
    let peak = pll.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let w_off = sol.series("bus4", "ω", &[t_off]).map_err(|e| e.to_string())?[0];
    let w_end = *pll.last().ok_or("no samples")?;
    check(
        err < 1e-4 && w_off.abs() < 1e-4 && w_end.abs() < 1e-4 && peak > 1e-3,
        format!(
            "|x(t_off) - x*_faulted| = {err:.1e} (tol 1e-4); PLL ω peak {peak:.1e}, at t_off {:.1e}, at end {:.1e}",
            w_off.abs(),
            w_end.abs()
        ),
    )
}

fn c7_methods() -> Outcome {
    let mut worst = 0.0f64;
    let mut identical = true;
    for name in SHIPPED {
        let g = load(name)?;
        let root = op(&g, OperationPointMethod::RootFind)?;
        let nl = op(&g, OperationPointMethod::NlSolve)?;
        let dy = op(&g, OperationPointMethod::Dynamic)?;
        identical &= root.values() == nl.values();
        worst = worst.max(root.max_abs_diff(&dy));
    }
    check(
        worst < 1e-6 && identical,
        format!("rootfind vs dynamic {worst:.1e} (tol 1e-6); nlsolve bit-identical: {identical}"),
    )
}

fn c8_power_balance() -> Outcome {
    let mut worst = 0.0f64;
    for name in SHIPPED {
        let g = load(name)?;
        let x = op(&g, OperationPointMethod::RootFind)?;
        let rhs = GridRhs::new(&g).map_err(|e| e.to_string())?;
        let v = x.values();
        let injected: Phasor = rhs.node_powers(v).iter().sum();
        let mut losses = Phasor::new(0.0, 0.0);
        for line in g.lines().values() {
            let ua = x.voltage(&line.from).map_err(|e| e.to_string())?;
            let ub = x.voltage(&line.to).map_err(|e| e.to_string())?;
            let c = line.model.currents(ua, ub, &[], &mut []);
            losses += ua * c.i_from.conj() + ub * c.i_to.conj();
        }
        worst = worst.max((injected - losses).norm());
    }
    check(worst < 1e-8, format!("max |Σ injections - Σ losses| = {worst:.1e} (tol 1e-8)"))
}

fn c9_rl_equivalence() -> Outcome {
    let w = 2.0 * std::f64::consts::PI * 50.0;
    let (r, l) = (0.02, 0.1 / w);
    let rl = RLLine::new(r, l, w).map_err(|e| e.to_string())?;
    let y = Phasor::new(1.0, 0.0) / Phasor::new(r, w * l);
    let st = StaticLine::new(y).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let ua = Phasor::from_polar(rng.gen_range(0.8..1.2), rng.gen_range(-1.0..1.0));
        let ub = Phasor::from_polar(rng.gen_range(0.8..1.2), rng.gen_range(-1.0..1.0));
        let (i_static, _) = st.currents(ua, ub);
        let mut d = [0.0; 2];
        let c = LineModel::from(rl).currents(ua, ub, &[i_static.re, i_static.im], &mut d);
        let scale = i_static.norm().max(1.0);
        worst = worst
            .max((c.i_from - i_static).norm() / scale)
            .max(Phasor::new(d[0], d[1]).norm() * l / scale);
    }

    let build = |line: LineModel| -> Result<PowerGrid, String> {
        let mut g = PowerGrid::default();
        g.add_node("bus1", SlackAlgebraic::new(Phasor::new(1.0, 0.0)).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let vsi = VSIVoltagePT1 {
            tau_v: 0.05,
            tau_p: 0.5,
            tau_q: 0.5,
            k_p: 1.0,
            k_q: 0.1,
            v_r: 1.0,
            p: 0.3,
            q: 0.0,
        };
        g.add_node("bus2", vsi).map_err(|e| e.to_string())?;
        g.add_line("line", "bus1", "bus2", line).map_err(|e| e.to_string())?;
        Ok(g)
    };
    let g_static = build(st.into())?;
    let g_rl = build(rl.into())?;
    let op_static = op(&g_static, OperationPointMethod::RootFind)?;
    let start = map_state(&g_static, &op_static, &g_rl).map_err(|e| e.to_string())?;
    let sol = simulate(&no_op(), &g_rl, &start, (0.0, 40.0), &SolverOptions::default().with_tolerances(1e-8, 1e-8))
        .map_err(|e| e.to_string())?;
    let end = sol.final_state().ok_or("empty solution")?;
    let mut dev = 0.0f64;
    for e in op_static.layout().entries() {
        let a = op_static.get(&e.owner, &e.var).map_err(|e| e.to_string())?;
        let b = end.get(&e.owner, &e.var).map_err(|e| e.to_string())?;
        dev = dev.max((a - b).abs());
    }
    check(
        worst < 1e-10 && dev < 1e-6,
        format!("steady current mismatch {worst:.1e} (tol 1e-10); transient end vs static op {dev:.1e} (tol 1e-6)"),
    )
}

fn c10_io_cli() -> Outcome {
    for name in SHIPPED {
        let text = std::fs::read_to_string(grid_path(name)).map_err(|e| e.to_string())?;
        let g = read_powergrid(&text).map_err(|e| e.to_string())?;
        if write_powergrid(&g) != text || read_powergrid(&write_powergrid(&g)).map_err(|e| e.to_string())? != g {
            return Err(format!("{name}: round trip differs"));
        }
    }
    let dir = std::env::temp_dir().join(format!("phasorgrid-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for k in 0..2 {
        let csv = dir.join(format!("sol{k}.csv"));
        let svg = dir.join(format!("out{k}.svg"));
        let status = Command::new(env!("CARGO_BIN_EXE_phasorgrid"))
            .args(["simulate", "--grid"])
            .arg(grid_path("ieee14"))
            .args(["--tspan", "0:5", "--fault", "line-failure:branch2", "--fault-window", "1:5", "--out"])
            .arg(&csv)
            .arg("--plot")
            .arg(&svg)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("CLI exited with {status}"));
        }
        runs.push((
            std::fs::read(&csv).map_err(|e| e.to_string())?,
            std::fs::read(&svg).map_err(|e| e.to_string())?,
        ));
    }
    let _ = std::fs::remove_dir_all(&dir);
    let csv = String::from_utf8(runs[0].0.clone()).map_err(|e| e.to_string())?;
    let header: Vec<String> = csv.lines().next().unwrap_or("").split(',').map(String::from).collect();
    let g = load("ieee14")?;
    let mut want = vec!["t".to_string()];
    for e in GridRhs::new(&g).map_err(|e| e.to_string())?.layout().entries() {
        want.push(format!("{}:{}", e.owner, e.var));
    }
    for node in g.nodes().keys() {
        for var in ["v", "p", "q"] {
            want.push(format!("{node}:{var}"));
        }
    }
    let x0 = op(&g, OperationPointMethod::RootFind)?;
    let sol = simulate(&no_op(), &g, &x0, (0.0, 0.1), &SolverOptions::default()).map_err(|e| e.to_string())?;
    let lib_cols = csv_columns(&sol).len() + 1;
    let svg = String::from_utf8(runs[0].1.clone()).map_err(|e| e.to_string())?;
    let panels = svg.matches("<g class=\"panel\"").count();
    let deterministic = runs[0] == runs[1];
    check(
        header == want && lib_cols == want.len() && panels == 3 && deterministic,
        format!(
            "round trips ok; CSV {} columns match layout rule: {}; SVG panels {panels} (want 3); byte-identical reruns: {deterministic}",
            header.len(),
            header == want
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Listing-1 fidelity", c1_listing1),
        ("two-bus analytic power flow", c2_two_bus),
        ("integrator orders and DAE residual", c3_orders),
        ("stationarity of shipped grids", c4_stationarity),
        ("line-failure convergence (IEEE-14 style)", c5_line_failure),
        ("set-point dispatch (validation grid)", c6_dispatch),
        ("operation-point method agreement", c7_methods),
        ("power balance", c8_power_balance),
        ("RLLine/StaticLine equivalence", c9_rl_equivalence),
        ("I/O round trip and CLI", c10_io_cli),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
