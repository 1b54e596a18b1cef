//! Grid description and assembly of the network right-hand side.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::line::LineModel;
use crate::node::{ModelError, NodeModel};
use crate::phasor::{complex_power, LayoutError, Phasor, StateLayout};
use crate::solver::DaeSystem;

pub const DEFAULT_NOMINAL_HZ: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("duplicate {kind} name {name:?}")]
    Duplicate { kind: &'static str, name: String },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("unknown line {0:?}")]
    UnknownLine(String),
    #[error("invalid grid: {0}")]
    Invalid(Validation),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: String,
    pub to: String,
    pub model: LineModel,
}

/// Named nodes and lines over a graph; insertion order is layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    nodes: IndexMap<String, NodeModel>,
    lines: IndexMap<String, Line>,
    nominal_hz: f64,
}

impl Default for PowerGrid {
    fn default() -> Self {
        Self::new(DEFAULT_NOMINAL_HZ)
    }
}

impl PowerGrid {
    pub fn new(nominal_hz: f64) -> Self {
        Self {
            nodes: IndexMap::new(),
            lines: IndexMap::new(),
            nominal_hz,
        }
    }

    pub fn nominal_hz(&self) -> f64 {
        self.nominal_hz
    }

    /// ω_N in rad/s.
    pub fn omega_nominal(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.nominal_hz
    }

    pub fn add_node(&mut self, name: &str, model: impl Into<NodeModel>) -> Result<&mut Self, GridError> {
        if self.nodes.contains_key(name) {
            return Err(GridError::Duplicate {
                kind: "node",
                name: name.into(),
            });
        }
        self.nodes.insert(name.to_string(), model.into());
        Ok(self)
    }

    pub fn add_line(
        &mut self,
        name: &str,
        from: &str,
        to: &str,
        model: impl Into<LineModel>,
    ) -> Result<&mut Self, GridError> {
        if self.lines.contains_key(name) {
            return Err(GridError::Duplicate {
                kind: "line",
                name: name.into(),
            });
        }
        self.lines.insert(
            name.to_string(),
            Line {
                from: from.to_string(),
                to: to.to_string(),
                model: model.into(),
            },
        );
        Ok(self)
    }

    pub fn nodes(&self) -> &IndexMap<String, NodeModel> {
        &self.nodes
    }

    pub fn lines(&self) -> &IndexMap<String, Line> {
        &self.lines
    }

    pub fn node(&self, name: &str) -> Result<&NodeModel, GridError> {
        self.nodes
            .get(name)
            .ok_or_else(|| GridError::UnknownNode(name.into()))
    }

    pub fn line(&self, name: &str) -> Result<&Line, GridError> {
        self.lines
            .get(name)
            .ok_or_else(|| GridError::UnknownLine(name.into()))
    }

    /// Copy with one node model replaced.
    pub fn with_node(&self, name: &str, model: NodeModel) -> Result<PowerGrid, GridError> {
        let mut g = self.clone();
        *g.nodes
            .get_mut(name)
            .ok_or_else(|| GridError::UnknownNode(name.into()))? = model;
        Ok(g)
    }

    /// Copy with one line model replaced (endpoints kept).
    pub fn with_line_model(&self, name: &str, model: LineModel) -> Result<PowerGrid, GridError> {
        let mut g = self.clone();
        g.lines
            .get_mut(name)
            .ok_or_else(|| GridError::UnknownLine(name.into()))?
            .model = model;
        Ok(g)
    }

    /// Copy with one line removed; the order of the remaining lines is kept.
    pub fn without_line(&self, name: &str) -> Result<PowerGrid, GridError> {
        let mut g = self.clone();
        g.lines
            .shift_remove(name)
            .ok_or_else(|| GridError::UnknownLine(name.into()))?;
        Ok(g)
    }

    pub fn validate(&self) -> Validation {
        validate(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Warning)
    }
}

impl fmt::Display for Validation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&msgs.join("; "))
    }
}

/// Structural checks; never panics. Disconnected graphs and grids without a
/// slack node only produce warnings.
pub fn validate(grid: &PowerGrid) -> Validation {
    let mut out = Vec::new();
    let mut push = |severity, path: String, message: String| {
        out.push(Violation {
            severity,
            path,
            message,
        })
    };
    if grid.nodes.is_empty() {
        push(Severity::Error, "nodes".into(), "no nodes".into());
    }
    if !(grid.nominal_hz.is_finite() && grid.nominal_hz > 0.0) {
        push(
            Severity::Error,
            "omega_nominal_hz".into(),
            "nominal frequency must be finite and > 0".into(),
        );
    }
    for (k, (name, line)) in grid.lines.iter().enumerate() {
        let path = format!("lines[{k}]");
        for (end, node) in [("from", &line.from), ("to", &line.to)] {
            if !grid.nodes.contains_key(node) {
                push(
                    Severity::Error,
                    format!("{path}.{end}"),
                    format!("unknown endpoint {node:?} of line {name:?}"),
                );
            }
        }
        if line.from == line.to {
            push(
                Severity::Warning,
                path.clone(),
                format!("line {name:?} connects node {:?} to itself", line.from),
            );
        }
        if grid.nodes.contains_key(name) {
            push(
                Severity::Error,
                path,
                format!("line name {name:?} is also a node name"),
            );
        }
    }
    if !grid.nodes.is_empty() {
        let islands = islands(grid);
        if islands.len() > 1 {
            push(
                Severity::Warning,
                "lines".into(),
                format!("grid is disconnected ({} islands)", islands.len()),
            );
        }
        if !grid.nodes.values().any(|m| matches!(m, NodeModel::Slack(_))) {
            push(
                Severity::Warning,
                "nodes".into(),
                "no SlackAlgebraic node: the operation point has no phase reference".into(),
            );
        }
    }
    Validation { violations: out }
}

/// Connected components as lists of node indices (lines with unknown
/// endpoints are ignored).
pub fn islands(grid: &PowerGrid) -> Vec<Vec<usize>> {
    let n = grid.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for line in grid.lines.values() {
        if let (Some(a), Some(b)) = (
            grid.nodes.get_index_of(&line.from),
            grid.nodes.get_index_of(&line.to),
        ) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            for &m in &adj[k] {
                if !seen[m] {
                    seen[m] = true;
                    comp.push(m);
                    queue.push_back(m);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Node blocks (`u_re`, `u_im`, internals) in node order, then line
/// internals in line order.
pub fn build_layout(grid: &PowerGrid) -> Result<StateLayout, LayoutError> {
    let mut layout = StateLayout::new();
    for (name, model) in &grid.nodes {
        let flags = model.mass_flags();
        layout.push(name, "u_re", flags[0])?;
        layout.push(name, "u_im", flags[1])?;
        for (var, flag) in model.internal_names().iter().zip(&flags[2..]) {
            layout.push(name, var, *flag)?;
        }
    }
    for (name, line) in &grid.lines {
        for var in line.model.internal_names() {
            layout.push(name, var, true)?;
        }
    }
    Ok(layout)
}

/// Per-node aggregate current: the sum of the from-terminal currents of
/// lines leaving the node and the to-terminal currents of lines entering it.
/// `line_internals[k]` holds the internal state of line `k`.
pub fn aggregate_currents(
    grid: &PowerGrid,
    voltages: &[Phasor],
    line_internals: &[&[f64]],
) -> Result<Vec<Phasor>, GridError> {
    let mut currents = vec![Phasor::new(0.0, 0.0); grid.nodes.len()];
    for (k, line) in grid.lines.values().enumerate() {
        let a = grid
            .nodes
            .get_index_of(&line.from)
            .ok_or_else(|| GridError::UnknownNode(line.from.clone()))?;
        let b = grid
            .nodes
            .get_index_of(&line.to)
            .ok_or_else(|| GridError::UnknownNode(line.to.clone()))?;
        let mut scratch = [0.0; 2];
        let x_int = line_internals.get(k).copied().unwrap_or(&[]);
        let c = line
            .model
            .currents(voltages[a], voltages[b], x_int, &mut scratch[..x_int.len()]);
        currents[a] += c.i_from;
        currents[b] += c.i_to;
    }
    Ok(currents)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RhsError {
    #[error("non-finite right-hand side at index {0}")]
    NonFinite(usize),
    #[error("node {node}: {source}")]
    Node { node: String, source: ModelError },
}

#[derive(Debug, Clone)]
struct NodeSlot {
    offset: usize,
    n_int: usize,
}

#[derive(Debug, Clone)]
struct LineSlot {
    from: usize,
    to: usize,
    offset: usize,
    n_int: usize,
}

/// The assembled right-hand side `f(t, x)` of `M·ẋ = f(t, x)` for one grid.
#[derive(Debug, Clone)]
pub struct GridRhs {
    grid: PowerGrid,
    layout: Arc<StateLayout>,
    mass: Vec<bool>,
    nodes: Vec<NodeSlot>,
    lines: Vec<LineSlot>,
}

impl GridRhs {
    /// Fails when the grid does not validate.
    pub fn new(grid: &PowerGrid) -> Result<Self, GridError> {
        let v = grid.validate();
        if !v.is_ok() {
            return Err(GridError::Invalid(v));
        }
        let layout = build_layout(grid)?;
        let mut nodes = Vec::with_capacity(grid.nodes.len());
        let mut offset = 0;
        for model in grid.nodes.values() {
            let n_int = model.internal_names().len();
            nodes.push(NodeSlot { offset, n_int });
            offset += 2 + n_int;
        }
        let mut lines = Vec::with_capacity(grid.lines.len());
        for line in grid.lines.values() {
            let n_int = line.model.internal_names().len();
            lines.push(LineSlot {
                from: grid.nodes.get_index_of(&line.from).expect("validated"),
                to: grid.nodes.get_index_of(&line.to).expect("validated"),
                offset,
                n_int,
            });
            offset += n_int;
        }
        debug_assert_eq!(offset, layout.dim());
        Ok(Self {
            grid: grid.clone(),
            mass: layout.mass_flags(),
            layout: Arc::new(layout),
            nodes,
            lines,
        })
    }

    pub fn grid(&self) -> &PowerGrid {
        &self.grid
    }

    pub fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    /// Voltage of node `k` in `x`.
    pub fn node_voltage(&self, x: &[f64], k: usize) -> Phasor {
        let o = self.nodes[k].offset;
        Phasor::new(x[o], x[o + 1])
    }

    pub fn node_internals<'a>(&self, x: &'a [f64], k: usize) -> &'a [f64] {
        let s = &self.nodes[k];
        &x[s.offset + 2..s.offset + 2 + s.n_int]
    }

    /// Layout index of the first voltage entry of node `k`.
    pub fn node_offset(&self, k: usize) -> usize {
        self.nodes[k].offset
    }

    fn line_terms(&self, x: &[f64], dx: Option<&mut [f64]>) -> Vec<(Phasor, Phasor)> {
        let mut out = Vec::with_capacity(self.lines.len());
        let mut dx = dx;
        for (slot, line) in self.lines.iter().zip(self.grid.lines.values()) {
            let uf = self.node_voltage(x, slot.from);
            let ut = self.node_voltage(x, slot.to);
            let x_int = &x[slot.offset..slot.offset + slot.n_int];
            let mut scratch = [0.0; 2];
            let d_int: &mut [f64] = match dx.as_deref_mut() {
                Some(d) => &mut d[slot.offset..slot.offset + slot.n_int],
                None => &mut scratch[..slot.n_int],
            };
            let c = line.model.currents(uf, ut, x_int, d_int);
            out.push((c.i_from, c.i_to));
        }
        out
    }

    /// Aggregate node currents for the state `x`.
    pub fn node_currents(&self, x: &[f64]) -> Vec<Phasor> {
        let terms = self.line_terms(x, None);
        self.aggregate(&terms)
    }

    fn aggregate(&self, terms: &[(Phasor, Phasor)]) -> Vec<Phasor> {
        let mut i = vec![Phasor::new(0.0, 0.0); self.nodes.len()];
        for (slot, (i_from, i_to)) in self.lines.iter().zip(terms) {
            i[slot.from] += i_from;
            i[slot.to] += i_to;
        }
        i
    }

    /// Complex power injected by each node.
    pub fn node_powers(&self, x: &[f64]) -> Vec<Phasor> {
        self.node_currents(x)
            .into_iter()
            .enumerate()
            .map(|(k, i)| complex_power(self.node_voltage(x, k), i))
            .collect()
    }

    /// Σ over lines of `u_from·conj(I_from) + u_to·conj(I_to)`: total series
    /// and shunt losses.
    pub fn line_losses(&self, x: &[f64]) -> Phasor {
        self.line_terms(x, None)
            .into_iter()
            .zip(&self.lines)
            .map(|((i_from, i_to), slot)| {
                complex_power(self.node_voltage(x, slot.from), i_from)
                    + complex_power(self.node_voltage(x, slot.to), i_to)
            })
            .sum()
    }

    /// Evaluates `f(t, x)` into `out`. On a model error or non-finite
    /// output the affected entries are NaN and an error is returned.
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), RhsError> {
        debug_assert_eq!(x.len(), self.layout.dim());
        debug_assert_eq!(out.len(), self.layout.dim());
        let terms = self.line_terms(x, Some(out));
        let currents = self.aggregate(&terms);
        let mut first_err = None;
        for (k, ((name, model), slot)) in self.grid.nodes.iter().zip(&self.nodes).enumerate() {
            let u = self.node_voltage(x, k);
            let x_int = &x[slot.offset + 2..slot.offset + 2 + slot.n_int];
            let (head, tail) = out[slot.offset..slot.offset + 2 + slot.n_int].split_at_mut(2);
            match model.rhs(u, currents[k], x_int, t, tail) {
                Ok(r) => {
                    head[0] = r.re;
                    head[1] = r.im;
                }
                Err(e) => {
                    head.fill(f64::NAN);
                    tail.fill(f64::NAN);
                    if first_err.is_none() {
                        first_err = Some(RhsError::Node {
                            node: name.clone(),
                            source: e,
                        });
                    }
                }
            }
        }
        if let Some(e) = first_err {
            return Err(e);
        }
        if let Some(k) = out.iter().position(|v| !v.is_finite()) {
            return Err(RhsError::NonFinite(k));
        }
        Ok(())
    }
}

impl DaeSystem for GridRhs {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn mass(&self) -> &[bool] {
        &self.mass
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), RhsError> {
        GridRhs::eval(self, t, x, out)
    }
}

/// Builds the right-hand side of a validated grid.
pub fn build_rhs(grid: &PowerGrid) -> Result<GridRhs, GridError> {
    GridRhs::new(grid)
}
