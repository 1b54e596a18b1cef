//! Complex dq phasors, the flat state-vector layout and the diagonal mass
//! matrix flags.
//!
//! Every quantity is per-unit. A phasor's real part is the d-component and
//! its imaginary part the q-component, so complex power is `u * conj(i)`.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

/// Complex dq phasor (`re` = d-axis, `im` = q-axis).
pub type Phasor = Complex64;

/// `s = p + jq = u * conj(i)`.
#[inline]
pub fn complex_power(u: Phasor, i: Phasor) -> Phasor {
    u * i.conj()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("layout conflict: variable {owner}:{var} declared twice")]
    Conflict { owner: String, var: String },
    #[error("unknown variable {owner}:{var}")]
    UnknownVariable { owner: String, var: String },
    #[error("unknown owner {0}")]
    UnknownOwner(String),
    #[error("state length {got} does not match layout dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value for {owner}:{var}")]
    NonFinite { owner: String, var: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub owner: String,
    pub var: String,
    pub differential: bool,
}

/// Ordered mapping `(owner, variable) <-> index` into the flat state vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StateLayout {
    entries: Vec<LayoutEntry>,
    index: HashMap<(String, String), usize>,
}

impl StateLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one variable; returns its index.
    pub fn push(
        &mut self,
        owner: &str,
        var: &str,
        differential: bool,
    ) -> Result<usize, LayoutError> {
        let key = (owner.to_string(), var.to_string());
        if self.index.contains_key(&key) {
            return Err(LayoutError::Conflict {
                owner: key.0,
                var: key.1,
            });
        }
        let idx = self.entries.len();
        self.index.insert(key, idx);
        self.entries.push(LayoutEntry {
            owner: owner.to_string(),
            var: var.to_string(),
            differential,
        });
        Ok(idx)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn entry(&self, idx: usize) -> Option<&LayoutEntry> {
        self.entries.get(idx)
    }

    pub fn mass_flags(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.differential).collect()
    }

    pub fn index_of(&self, owner: &str, var: &str) -> Option<usize> {
        let var = canonical_var_name(var);
        self.index.get(&(owner.to_string(), var.to_string())).copied()
    }

    pub fn has_owner(&self, owner: &str) -> bool {
        self.entries.iter().any(|e| e.owner == owner)
    }

    /// Variable names of one owner, in layout order.
    pub fn owner_vars(&self, owner: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.owner == owner)
            .map(|e| e.var.as_str())
            .collect()
    }

    pub fn lookup(&self, owner: &str, var: &str) -> Result<usize, LayoutError> {
        self.index_of(owner, var)
            .ok_or_else(|| LayoutError::UnknownVariable {
                owner: owner.to_string(),
                var: var.to_string(),
            })
    }
}

/// ASCII spellings accepted for the Greek variable names.
pub fn canonical_var_name(var: &str) -> &str {
    match var {
        "omega" | "w" => "ω",
        "theta" => "θ",
        "phi" => "φ",
        "eps" | "epsilon" => "ε",
        other => other,
    }
}

/// A flat real state vector bound to its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    layout: Arc<StateLayout>,
    values: Vec<f64>,
}

impl State {
    pub fn new(layout: Arc<StateLayout>, values: Vec<f64>) -> Result<Self, LayoutError> {
        if values.len() != layout.dim() {
            return Err(LayoutError::Dimension {
                expected: layout.dim(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let e = &layout.entries()[k];
            return Err(LayoutError::NonFinite {
                owner: e.owner.clone(),
                var: e.var.clone(),
            });
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: Arc<StateLayout>) -> Self {
        let n = layout.dim();
        Self {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, owner: &str, var: &str) -> Result<f64, LayoutError> {
        match canonical_var_name(var) {
            "v" => Ok(self.voltage(owner)?.norm()),
            "φ" => Ok(self.voltage(owner)?.arg()),
            other => Ok(self.values[self.layout.lookup(owner, other)?]),
        }
    }

    pub fn set(&mut self, owner: &str, var: &str, value: f64) -> Result<(), LayoutError> {
        if !value.is_finite() {
            return Err(LayoutError::NonFinite {
                owner: owner.to_string(),
                var: var.to_string(),
            });
        }
        let idx = self.layout.lookup(owner, var)?;
        self.values[idx] = value;
        Ok(())
    }

    /// Complex node voltage `u`.
    pub fn voltage(&self, owner: &str) -> Result<Phasor, LayoutError> {
        let re = self.layout.lookup(owner, "u_re")?;
        let im = self.layout.lookup(owner, "u_im")?;
        Ok(Phasor::new(self.values[re], self.values[im]))
    }

    pub fn set_voltage(&mut self, owner: &str, u: Phasor) -> Result<(), LayoutError> {
        self.set(owner, "u_re", u.re)?;
        self.set(owner, "u_im", u.im)
    }

    /// Maximum absolute componentwise difference; the layouts must agree.
    pub fn max_abs_diff(&self, other: &State) -> f64 {
        debug_assert_eq!(self.layout.dim(), other.layout.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
