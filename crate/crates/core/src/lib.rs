//! Dynamic simulation of power grids in the rotating dq frame.
//!
//! A [`PowerGrid`] couples node models (machines, inverters, loads, slack)
//! through line models. Its equations form a semi-explicit index-1 DAE
//! `M dx/dt = f(x, t)` that [`integrate`] solves, [`find_operationpoint`]
//! drives to a steady state, and [`simulate`] runs under a fault scenario.

pub mod grid;
pub mod io;
pub mod line;
pub mod node;
pub mod phasor;
pub mod scenario;
pub mod solver;
pub mod steady_state;

pub use grid::{build_rhs, GridError, GridRhs, Line, PowerGrid, Severity, Validation, Violation};
pub use line::{LineModel, PiModelLine, RLLine, StaticLine, Transformer};
pub use node::{FourthOrderEq, GridFollowingPLL, ModelError, NodeModel, PQAlgebraic, SlackAlgebraic, VSIVoltagePT1};
pub use phasor::{complex_power, LayoutError, Phasor, State, StateLayout};
pub use scenario::{map_state, simulate, FaultWindow, Perturbation, PowerGridSolution, ScenarioError};
pub use solver::{integrate, DaeSystem, Method, SolverError, SolverOptions, SolverStats, Trajectory};
pub use steady_state::{find_operationpoint, reinit_algebraic, OperationPointMethod, OperationPointOptions, SteadyStateError};
pub use io::{read_powergrid, read_state, render_plot_svg, write_powergrid, write_solution_csv, write_state, IoError};
