mod common;

use num_complex::Complex64;
use phasorgrid_core::grid::GridRhs;
use phasorgrid_core::scenario::{map_state, FaultWindow};
use phasorgrid_core::solver::algebraic_residual;
use phasorgrid_core::{
    find_operationpoint, simulate, Perturbation, PowerGrid, RLLine, ScenarioError, SlackAlgebraic,
    SolverOptions, State, VSIVoltagePT1,
};

fn op(g: &PowerGrid) -> State {
    find_operationpoint(g, None, &Default::default()).unwrap()
}

fn window(a: f64, b: f64) -> FaultWindow {
    FaultWindow::new(a, b).unwrap()
}

fn line_failure(name: &str, a: f64, b: f64) -> Perturbation {
    Perturbation::LineFailure {
        line_name: name.into(),
        window: window(a, b),
    }
}

fn no_op() -> Perturbation {
    Perturbation::ChangeInitialConditions {
        assignments: Vec::new(),
    }
}

/// Slack and inverter joined by two parallel RL lines.
fn rl_pair() -> PowerGrid {
    let w = 2.0 * std::f64::consts::PI * 50.0;
    let mut g = PowerGrid::default();
    g.add_node("bus1", SlackAlgebraic::new(Complex64::new(1.0, 0.0)).unwrap()).unwrap();
    let vsi = VSIVoltagePT1 {
        tau_v: 0.05,
        tau_p: 0.5,
        tau_q: 0.5,
        k_p: 1.0,
        k_q: 0.1,
        v_r: 1.0,
        p: 0.2,
        q: 0.0,
    };
    g.add_node("bus2", vsi).unwrap();
    let rl = RLLine::new(0.01, 0.2 / w, w).unwrap();
    g.add_line("l1", "bus1", "bus2", rl).unwrap();
    g.add_line("l2", "bus1", "bus2", rl).unwrap();
    g
}

#[test]
fn line_failure_segments() {
    let g = common::load("ieee14");
    let x0 = op(&g);
    let sol = simulate(&line_failure("branch2", 1.0, 3.0), &g, &x0, (0.0, 5.0), &SolverOptions::default())
        .unwrap();
    let segs = sol.segments();
    assert_eq!(segs.len(), 3);
    let bounds: Vec<(f64, f64)> = segs
        .iter()
        .map(|s| (s.trajectory().t_start().unwrap(), s.trajectory().t_end().unwrap()))
        .collect();
    assert_eq!(bounds, vec![(0.0, 1.0), (1.0, 3.0), (3.0, 5.0)]);
    assert_eq!(segs[1].grid().lines().len(), 19);
    assert_eq!(segs[2].grid(), &g);
    for pair in segs.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let end = a.trajectory().last_state().unwrap();
        let start = &b.trajectory().states()[0];
        // same layout here (lines carry no state), so differential entries match 1:1
        for (k, e) in b.layout().entries().iter().enumerate() {
            if e.differential {
                assert_eq!(start[k], end[k], "{}:{}", e.owner, e.var);
            }
        }
        assert!(algebraic_residual(b.rhs(), 0.0, start).unwrap() <= 1e-10);
    }
    // the pre-fault segment is stationary
    let pre = segs[0].trajectory().last_state().unwrap();
    assert!(pre.iter().zip(x0.values()).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn boundary_belongs_to_left_segment() {
    let g = common::load("ieee14");
    let x0 = op(&g);
    let sol = simulate(&line_failure("branch2", 1.0, 2.0), &g, &x0, (0.0, 3.0), &SolverOptions::default())
        .unwrap();
    let p_slack = |t: f64| sol.series("bus1", "p", &[t]).unwrap()[0];
    let p0 = p_slack(0.0);
    assert!((p_slack(1.0) - p0).abs() < 1e-9);
    assert!((p_slack(1.0 + 1e-9) - p0).abs() > 1e-3);
    assert_eq!(sol.segment_at(1.0).unwrap().grid().lines().len(), 20);
    assert_eq!(sol.segment_at(2.0).unwrap().grid().lines().len(), 19);
}

#[test]
fn removed_line_state_is_nan_during_fault() {
    let g = rl_pair();
    let x0 = op(&g);
    let sol = simulate(&line_failure("l2", 0.5, 8.0), &g, &x0, (0.0, 9.0), &SolverOptions::default()).unwrap();
    let s = sol.series("l2", "I_re", &[0.25, 0.75, 8.5]).unwrap();
    assert!(s[0].is_finite() && s[1].is_nan() && s[2].is_finite(), "{s:?}");
    // once settled, the surviving line carries the full current
    let i1 = sol.series("l1", "I_re", &[0.25, 7.5]).unwrap();
    assert!((i1[1] / i1[0] - 2.0).abs() < 0.02, "{i1:?}");
    assert!(sol.series("l3", "I_re", &[0.5]).is_err());
}

#[test]
fn zero_length_segments_are_skipped() {
    let g = rl_pair();
    let x0 = op(&g);
    let opts = SolverOptions::default();
    let sol = simulate(&line_failure("l2", 0.0, 1.0), &g, &x0, (0.0, 2.0), &opts).unwrap();
    assert_eq!(sol.segments().len(), 2);
    let sol = simulate(&line_failure("l2", 1.0, 2.0), &g, &x0, (0.0, 2.0), &opts).unwrap();
    assert_eq!(sol.segments().len(), 2);
    assert_eq!(sol.t_end(), 2.0);
}

#[test]
fn window_outside_span() {
    let g = common::load("validation");
    let x0 = op(&g);
    let r = simulate(&line_failure("trafo24", 1.0, 6.0), &g, &x0, (0.0, 5.0), &SolverOptions::default());
    assert!(matches!(r, Err(ScenarioError::Window(_))), "{r:?}");
    assert!(FaultWindow::new(2.0, 2.0).is_err());
    let r = simulate(&no_op(), &g, &x0, (1.0, 1.0), &SolverOptions::default());
    assert!(r.is_err());
}

#[test]
fn power_perturbation_on_load() {
    let g = common::load("validation");
    let x0 = op(&g);
    let p = Perturbation::PowerPerturbation {
        node_name: "bus2".into(),
        p: Some(-0.7),
        q: None,
        window: window(0.5, 1.5),
    };
    let sol = simulate(&p, &g, &x0, (0.0, 2.0), &SolverOptions::default()).unwrap();
    let s = sol.series("bus2", "p", &[0.25, 1.0, 1.75]).unwrap();
    // series come from interpolated states, which satisfy the constraint
    // only up to the interpolation error
    assert!((s[0] + 0.5).abs() < 1e-6 && (s[1] + 0.7).abs() < 1e-6 && (s[2] + 0.5).abs() < 1e-6, "{s:?}");
    let q = sol.series("bus2", "q", &[1.0]).unwrap();
    assert!((q[0] + 0.1).abs() < 1e-6);
    let seg = sol.segment_at(1.0).unwrap();
    let at_steps = seg.trajectory().states().iter().map(|x| seg.value(x, "bus2", "p").unwrap());
    assert!(at_steps.into_iter().all(|p| (p + 0.7).abs() < 1e-9));
}

#[test]
fn perturbation_errors() {
    let g = common::load("validation");
    let x0 = op(&g);
    let opts = SolverOptions::default();
    let p = Perturbation::PowerPerturbation {
        node_name: "bus1".into(),
        p: Some(1.0),
        q: None,
        window: window(0.5, 1.0),
    };
    assert!(matches!(simulate(&p, &g, &x0, (0.0, 2.0), &opts), Err(ScenarioError::NoPowerSetpoint(_))));
    let p = Perturbation::NodeParameterChange {
        node_name: "bus3".into(),
        parameter: "K_X".into(),
        value: 1.0,
        window: window(0.5, 1.0),
    };
    assert!(matches!(simulate(&p, &g, &x0, (0.0, 2.0), &opts), Err(ScenarioError::Model(_))));
    let p = Perturbation::NodeParameterChange {
        node_name: "bus3".into(),
        parameter: "τ_v".into(),
        value: -1.0,
        window: window(0.5, 1.0),
    };
    assert!(simulate(&p, &g, &x0, (0.0, 2.0), &opts).is_err());
    assert!(matches!(
        simulate(&line_failure("nope", 0.5, 1.0), &g, &x0, (0.0, 2.0), &opts),
        Err(ScenarioError::Grid(_))
    ));
}

#[test]
fn initial_condition_change_relaxes() {
    let g = common::load("two_bus");
    let x0 = op(&g);
    let p = Perturbation::ChangeInitialConditions {
        assignments: vec![("bus2".into(), "omega".into(), 0.1)],
    };
    let sol = simulate(&p, &g, &x0, (0.0, 20.0), &SolverOptions::default()).unwrap();
    assert_eq!(sol.segments().len(), 1);
    let w = sol.series("bus2", "ω", &[0.0, 20.0]).unwrap();
    assert_eq!(w[0], 0.1);
    assert!(w[1].abs() < 1e-5, "{w:?}");
    let end = sol.final_state().unwrap();
    assert!(end.max_abs_diff(&x0) < 1e-5);

    let bad = Perturbation::ChangeInitialConditions {
        assignments: vec![("bus9".into(), "ω".into(), 0.1)],
    };
    assert!(simulate(&bad, &g, &x0, (0.0, 1.0), &SolverOptions::default()).is_err());
}

#[test]
fn integration_failure_keeps_completed_segments() {
    let g = common::load("ieee14");
    let x0 = op(&g);
    let opts = SolverOptions {
        max_steps: 30,
        ..Default::default()
    };
    match simulate(&line_failure("branch2", 1.0, 3.0), &g, &x0, (0.0, 5.0), &opts) {
        Err(ScenarioError::Integration { segment, completed, .. }) => {
            assert_eq!(segment, 1);
            assert!(!completed.segments().is_empty());
            assert_eq!(completed.segments()[0].trajectory().t_end(), Some(1.0));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn map_state_matches_names() {
    let g = rl_pair();
    let x = op(&g);
    let reduced = g.without_line("l2").unwrap();
    let y = map_state(&g, &x, &reduced).unwrap();
    assert_eq!(y.layout().dim(), x.layout().dim() - 2);
    for e in y.layout().entries().iter().filter(|e| e.differential) {
        assert_eq!(y.get(&e.owner, &e.var).unwrap(), x.get(&e.owner, &e.var).unwrap());
    }
    let back = map_state(&reduced, &y, &g).unwrap();
    assert_eq!(back.get("l2", "I_re").unwrap(), 0.0);
    let rhs = GridRhs::new(&g).unwrap();
    assert!(algebraic_residual(&rhs, 0.0, back.values()).unwrap() <= 1e-10);
}
