//! Grid and state files (JSON), solution export (CSV) and plots (SVG).

use std::fmt::Write as _;

use serde_json::{Map, Number, Value};
use thiserror::Error;

use crate::grid::{build_layout, GridError, PowerGrid};
use crate::line::LineModel;
use crate::node::{FourthOrderEq, ModelError, NodeModel};
use crate::phasor::{canonical_var_name, LayoutError, State};
use crate::scenario::{PowerGridSolution, ScenarioError};

pub const FORMAT_VERSION: &str = "1";

/// Panels drawn when no selection is given.
pub const DEFAULT_PLOT: &[&str] = &["v", "p", "ω"];

#[derive(Debug, Clone, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported version {found:?} (expected \"{FORMAT_VERSION}\")")]
    Version { found: String },
    #[error("{path}: unknown model type {name:?}")]
    UnknownType { path: String, name: String },
    #[error("{path}: {source}")]
    Model { path: String, source: ModelError },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Lookup(Box<ScenarioError>),
    #[error("{0}")]
    Invalid(String),
}

impl From<ScenarioError> for IoError {
    fn from(e: ScenarioError) -> Self {
        IoError::Lookup(Box::new(e))
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, IoError> {
    v.as_object().ok_or_else(|| schema(path, "expected an object"))
}

fn string<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a str, IoError> {
    match obj.get(key) {
        None => Err(schema(format!("{path}.{key}"), "missing")),
        Some(v) => v
            .as_str()
            .ok_or_else(|| schema(format!("{path}.{key}"), "expected a string")),
    }
}

fn number(v: &Value, path: &str) -> Result<f64, IoError> {
    let x = v.as_f64().ok_or_else(|| schema(path, "expected a number"))?;
    if !x.is_finite() {
        return Err(schema(path, "must be finite"));
    }
    Ok(x)
}

fn name(obj: &Map<String, Value>, path: &str) -> Result<String, IoError> {
    let n = string(obj, "name", path)?;
    if n.is_empty() || n.contains(':') || n.chars().any(char::is_control) {
        return Err(schema(format!("{path}.name"), "must be non-empty without ':'"));
    }
    Ok(n.to_string())
}

fn no_extra_keys(obj: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<(), IoError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(format!("{path}.{k}"), "unexpected key")),
        None => Ok(()),
    }
}

/// Reads `params` against the canonical parameter list. Parameters listed in
/// `defaults` may be omitted.
fn params(
    obj: &Map<String, Value>,
    names: &[&str],
    defaults: &[(&str, f64)],
    path: &str,
) -> Result<Vec<f64>, IoError> {
    let path = format!("{path}.params");
    let p = match obj.get("params") {
        Some(v) => object(v, &path)?,
        None => return Err(schema(path, "missing")),
    };
    no_extra_keys(p, names, &path).map_err(|e| match e {
        IoError::Schema { path, .. } => schema(path, "unknown parameter"),
        e => e,
    })?;
    names
        .iter()
        .map(|n| match p.get(*n) {
            Some(v) => number(v, &format!("{path}.{n}")),
            None => defaults
                .iter()
                .find(|(d, _)| d == n)
                .map(|(_, v)| *v)
                .ok_or_else(|| schema(format!("{path}.{n}"), "missing")),
        })
        .collect()
}

fn parse_json(text: &str) -> Result<Value, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Json(e.to_string()))
}

fn check_version(root: &Map<String, Value>) -> Result<(), IoError> {
    let v = string(root, "version", "$")?;
    if v != FORMAT_VERSION {
        return Err(IoError::Version { found: v.into() });
    }
    Ok(())
}

fn array<'a>(root: &'a Map<String, Value>, key: &str) -> Result<&'a [Value], IoError> {
    match root.get(key) {
        None => Ok(&[]),
        Some(v) => v
            .as_array()
            .map(|a| a.as_slice())
            .ok_or_else(|| schema(key, "expected an array")),
    }
}

/// Parses a grid document. `Ω` of `FourthOrderEq` and `ω_N` of `RLLine`
/// default to the grid's nominal angular frequency when omitted.
pub fn read_powergrid(text: &str) -> Result<PowerGrid, IoError> {
    let root = parse_json(text)?;
    let root = object(&root, "$")?;
    check_version(root)?;
    no_extra_keys(root, &["version", "omega_nominal_hz", "nodes", "lines"], "$")?;
    let hz = match root.get("omega_nominal_hz") {
        Some(v) => number(v, "omega_nominal_hz")?,
        None => crate::grid::DEFAULT_NOMINAL_HZ,
    };
    if hz <= 0.0 {
        return Err(schema("omega_nominal_hz", "must be > 0"));
    }
    let mut grid = PowerGrid::new(hz);
    let defaults = [("Ω", grid.omega_nominal()), ("ω_N", grid.omega_nominal())];
    if !root.contains_key("nodes") {
        return Err(schema("nodes", "missing"));
    }
    for (k, v) in array(root, "nodes")?.iter().enumerate() {
        let path = format!("nodes[{k}]");
        let obj = object(v, &path)?;
        no_extra_keys(obj, &["name", "type", "params"], &path)?;
        let name = name(obj, &path)?;
        let ty = string(obj, "type", &path)?;
        let names = NodeModel::param_names_for(ty).ok_or_else(|| IoError::UnknownType {
            path: format!("{path}.type"),
            name: ty.into(),
        })?;
        let defaults: &[(&str, f64)] = if ty == FourthOrderEq::TYPE { &defaults[..1] } else { &[] };
        let values = params(obj, names, defaults, &path)?;
        let model = NodeModel::from_values(ty, &values).map_err(|source| IoError::Model {
            path: path.clone(),
            source,
        })?;
        grid.add_node(&name, model).map_err(|e| schema(&path, e.to_string()))?;
    }
    for (k, v) in array(root, "lines")?.iter().enumerate() {
        let path = format!("lines[{k}]");
        let obj = object(v, &path)?;
        no_extra_keys(obj, &["name", "type", "from", "to", "params"], &path)?;
        let name = name(obj, &path)?;
        let ty = string(obj, "type", &path)?;
        let from = string(obj, "from", &path)?;
        let to = string(obj, "to", &path)?;
        let names = LineModel::param_names_for(ty).ok_or_else(|| IoError::UnknownType {
            path: format!("{path}.type"),
            name: ty.into(),
        })?;
        let values = params(obj, names, &defaults[1..], &path)?;
        let model = LineModel::from_values(ty, &values).map_err(|source| IoError::Model {
            path: path.clone(),
            source,
        })?;
        grid.add_line(&name, from, to, model)
            .map_err(|e| schema(&path, e.to_string()))?;
    }
    Ok(grid)
}

fn num(x: f64) -> Value {
    Value::Number(Number::from_f64(x).expect("finite parameter"))
}

fn param_map(names: &[&str], values: &[f64]) -> Value {
    Value::Object(
        names
            .iter()
            .zip(values)
            .map(|(n, v)| (n.to_string(), num(*v)))
            .collect(),
    )
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Serializes a grid; repeated writes of the same grid are byte-identical.
pub fn write_powergrid(grid: &PowerGrid) -> String {
    let nodes: Vec<Value> = grid
        .nodes()
        .iter()
        .map(|(name, m)| {
            let mut o = Map::new();
            o.insert("name".into(), name.as_str().into());
            o.insert("type".into(), m.type_name().into());
            o.insert("params".into(), param_map(m.param_names(), &m.param_values()));
            Value::Object(o)
        })
        .collect();
    let lines: Vec<Value> = grid
        .lines()
        .iter()
        .map(|(name, l)| {
            let mut o = Map::new();
            o.insert("name".into(), name.as_str().into());
            o.insert("type".into(), l.model.type_name().into());
            o.insert("from".into(), l.from.as_str().into());
            o.insert("to".into(), l.to.as_str().into());
            o.insert("params".into(), param_map(l.model.param_names(), &l.model.param_values()));
            Value::Object(o)
        })
        .collect();
    let mut root = Map::new();
    root.insert("version".into(), FORMAT_VERSION.into());
    root.insert("omega_nominal_hz".into(), num(grid.nominal_hz()));
    root.insert("nodes".into(), Value::Array(nodes));
    root.insert("lines".into(), Value::Array(lines));
    pretty(&Value::Object(root))
}

/// Serializes a state as a flat `"OWNER:VAR": value` map in layout order.
pub fn write_state(state: &State) -> Result<String, IoError> {
    let mut values = Map::new();
    for (e, v) in state.layout().entries().iter().zip(state.values()) {
        if !v.is_finite() {
            return Err(IoError::Invalid(format!("{}:{} is not finite", e.owner, e.var)));
        }
        values.insert(format!("{}:{}", e.owner, e.var), num(*v));
    }
    let mut root = Map::new();
    root.insert("version".into(), FORMAT_VERSION.into());
    root.insert("values".into(), Value::Object(values));
    Ok(pretty(&Value::Object(root)))
}

/// Reads a state file against `grid`'s layout; every variable must be
/// present exactly once.
pub fn read_state(text: &str, grid: &PowerGrid) -> Result<State, IoError> {
    let root = parse_json(text)?;
    let root = object(&root, "$")?;
    check_version(root)?;
    no_extra_keys(root, &["version", "values"], "$")?;
    let values = match root.get("values") {
        Some(v) => object(v, "values")?,
        None => return Err(schema("values", "missing")),
    };
    let layout = build_layout(grid)?;
    let mut x = vec![f64::NAN; layout.dim()];
    for (key, v) in values {
        let path = format!("values.{key}");
        let (owner, var) = key
            .rsplit_once(':')
            .ok_or_else(|| schema(&path, "expected OWNER:VAR"))?;
        let idx = layout
            .index_of(owner, var)
            .ok_or_else(|| schema(&path, "not a variable of this grid"))?;
        if !x[idx].is_nan() {
            return Err(schema(&path, "given twice"));
        }
        x[idx] = number(v, &path)?;
    }
    if let Some(k) = x.iter().position(|v| v.is_nan()) {
        let e = &layout.entries()[k];
        return Err(schema(format!("values.{}:{}", e.owner, e.var), "missing"));
    }
    Ok(State::new(std::sync::Arc::new(layout), x)?)
}

fn fmt_num(out: &mut String, v: f64) {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        let _ = write!(out, "{v}");
    } else {
        let _ = write!(out, "{v:e}");
    }
}

/// CSV columns `(owner, var)`: the base grid's layout, then `v`, `p`, `q`
/// per node.
pub fn csv_columns(sol: &PowerGridSolution) -> Vec<(String, String)> {
    let Some(seg) = sol.segments().first() else {
        return Vec::new();
    };
    let mut cols: Vec<(String, String)> = seg
        .layout()
        .entries()
        .iter()
        .map(|e| (e.owner.clone(), e.var.clone()))
        .collect();
    for node in seg.grid().nodes().keys() {
        for var in ["v", "p", "q"] {
            cols.push((node.clone(), var.into()));
        }
    }
    cols
}

/// Samples the solution every `step` seconds from `t0` to `t1` (both ends
/// included). Values are written in shortest round-trip form.
pub fn write_solution_csv(sol: &PowerGridSolution, step: f64) -> Result<String, IoError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(IoError::Invalid(format!("sample step must be > 0, got {step}")));
    }
    let (t0, t1) = (sol.t_start(), sol.t_end());
    if !(t1 >= t0) {
        return Err(IoError::Invalid("empty solution".into()));
    }
    let n = ((t1 - t0) / step * (1.0 + 1e-12)).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * step).collect();
    if t1 - times[n] > step * 1e-9 {
        times.push(t1);
    } else {
        times[n] = t1;
    }
    let cols = csv_columns(sol);
    let mut series = Vec::with_capacity(cols.len());
    for (owner, var) in &cols {
        series.push(sol.series(owner, var, &times)?);
    }
    let mut out = String::from("t");
    for (owner, var) in &cols {
        let _ = write!(out, ",{owner}:{var}");
    }
    out.push('\n');
    for (k, &t) in times.iter().enumerate() {
        fmt_num(&mut out, t);
        for s in &series {
            out.push(',');
            fmt_num(&mut out, s[k]);
        }
        out.push('\n');
    }
    Ok(out)
}

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Expands selections into panels. `"v"` selects that variable on every
/// owner that has it; `"OWNER:VAR"` selects one series. Consecutive
/// selections of the same variable share a panel.
fn panels(sol: &PowerGridSolution, selections: &[&str]) -> Result<Vec<(String, Vec<String>)>, IoError> {
    let grid = sol
        .base_grid()
        .ok_or_else(|| IoError::Invalid("empty solution".into()))?;
    let mut owners: Vec<String> = grid.nodes().keys().cloned().collect();
    owners.extend(grid.lines().keys().cloned());
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for sel in selections {
        let (found, var) = match sel.rsplit_once(':') {
            Some((owner, var)) => {
                let var = canonical_var_name(var).to_string();
                if !sol.resolves(owner, &var) {
                    return Err(ScenarioError::UnknownSeries {
                        owner: owner.into(),
                        var,
                    }
                    .into());
                }
                (vec![owner.to_string()], var)
            }
            None => {
                let var = canonical_var_name(sel).to_string();
                let found: Vec<String> =
                    owners.iter().filter(|o| sol.resolves(o, &var)).cloned().collect();
                if found.is_empty() {
                    return Err(ScenarioError::UnknownSeries {
                        owner: "*".into(),
                        var,
                    }
                    .into());
                }
                (found, var)
            }
        };
        match out.last_mut() {
            Some((v, o)) if *v == var => {
                for f in found {
                    if !o.contains(&f) {
                        o.push(f);
                    }
                }
            }
            _ => out.push((var, found)),
        }
    }
    Ok(out)
}

/// Renders one `<g class="panel">` per selection group with a polyline per
/// series, axes labels and a legend. Output depends only on the input.
pub fn render_plot_svg(sol: &PowerGridSolution, selections: &[&str]) -> Result<String, IoError> {
    if selections.is_empty() {
        return Err(IoError::Invalid("no variables selected".into()));
    }
    let (t0, t1) = (sol.t_start(), sol.t_end());
    if !(t1 > t0) {
        return Err(IoError::Invalid("empty time range".into()));
    }
    let panels = panels(sol, selections)?;
    let times = sol.sample_times();
    let (w, ph, left, right, top, bottom) = (900.0, 240.0, 70.0, 160.0, 20.0, 40.0);
    let height = ph * panels.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" viewBox="0 0 {w} {height}" font-family="sans-serif" font-size="11">"#
    );
    for (p, (var, owners)) in panels.iter().enumerate() {
        let y0 = p as f64 * ph;
        let (px0, px1) = (left, w - right);
        let (py0, py1) = (y0 + top, y0 + ph - bottom);
        let data: Vec<Vec<f64>> = owners
            .iter()
            .map(|o| sol.series(o, var, &times))
            .collect::<Result<_, _>>()?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in data.iter().flatten().filter(|v| v.is_finite()) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        if hi - lo < 1e-9 * (1.0 + hi.abs()) {
            let pad = 1e-3 * (1.0 + hi.abs());
            (lo, hi) = (lo - pad, hi + pad);
        }
        let sx = |t: f64| px0 + (t - t0) / (t1 - t0) * (px1 - px0);
        let sy = |v: f64| py1 - (v - lo) / (hi - lo) * (py1 - py0);
        let _ = writeln!(svg, r#"<g class="panel" id="panel-{}">"#, escape(var));
        let _ = writeln!(
            svg,
            r##"<rect x="{px0}" y="{py0}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
            px1 - px0,
            py1 - py0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t [s]</text>"#,
            (px0 + px1) / 2.0,
            py1 + 30.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
            (py0 + py1) / 2.0,
            (py0 + py1) / 2.0,
            escape(var)
        );
        for (label, v, y) in [("hi", hi, py0), ("lo", lo, py1)] {
            let _ = writeln!(
                svg,
                r#"<text class="tick-{label}" x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"#,
                px0 - 4.0,
                y + 4.0
            );
        }
        for (label, t, anchor) in [("t0", t0, "start"), ("t1", t1, "end")] {
            let _ = writeln!(
                svg,
                r#"<text class="tick-{label}" x="{:.2}" y="{:.2}" text-anchor="{anchor}">{t}</text>"#,
                sx(t),
                py1 + 14.0
            );
        }
        for (k, (owner, values)) in owners.iter().zip(&data).enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut pts = String::new();
            for (t, v) in times.iter().zip(values).filter(|(_, v)| v.is_finite()) {
                if !pts.is_empty() {
                    pts.push(' ');
                }
                let _ = write!(pts, "{:.2},{:.2}", sx(*t), sy(*v));
            }
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"><title>{}:{}</title></polyline>"#,
                escape(owner),
                escape(var)
            );
            let ly = py0 + 12.0 + 14.0 * k as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                px1 + 10.0,
                px1 + 30.0,
                px1 + 35.0,
                ly + 4.0,
                escape(owner)
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
