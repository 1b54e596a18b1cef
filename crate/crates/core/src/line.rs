//! Line and transformer library.
//!
//! `I_from` is the current flowing from the from-node into the line and
//! `I_to` the current flowing from the to-node into the line.

use crate::node::ModelError;
use crate::phasor::Phasor;

fn check_finite(model: &'static str, names: &[&'static str], values: &[f64]) -> Result<(), ModelError> {
    for (n, v) in names.iter().zip(values) {
        if !v.is_finite() {
            return Err(ModelError::InvalidParameter {
                model,
                param: n,
                reason: "must be finite",
            });
        }
    }
    Ok(())
}

fn nonzero(model: &'static str, param: &'static str, z: Phasor) -> Result<(), ModelError> {
    if z.norm_sqr() == 0.0 {
        Err(ModelError::InvalidParameter {
            model,
            param,
            reason: "must be nonzero",
        })
    } else {
        Ok(())
    }
}

/// Series admittance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticLine {
    pub y: Phasor,
}

impl StaticLine {
    pub const TYPE: &'static str = "StaticLine";
    pub const PARAMS: &'static [&'static str] = &["Y_re", "Y_im"];

    pub fn new(y: Phasor) -> Result<Self, ModelError> {
        check_finite(Self::TYPE, Self::PARAMS, &[y.re, y.im])?;
        nonzero(Self::TYPE, "Y_re", y)?;
        Ok(Self { y })
    }

    pub fn currents(&self, u_from: Phasor, u_to: Phasor) -> (Phasor, Phasor) {
        let i = self.y * (u_from - u_to);
        (i, -i)
    }
}

/// Series admittance with shunt admittances at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiModelLine {
    pub y: Phasor,
    pub y_shunt_from: Phasor,
    pub y_shunt_to: Phasor,
}

impl PiModelLine {
    pub const TYPE: &'static str = "PiModelLine";
    pub const PARAMS: &'static [&'static str] = &[
        "y_re",
        "y_im",
        "y_shunt_from_re",
        "y_shunt_from_im",
        "y_shunt_to_re",
        "y_shunt_to_im",
    ];

    pub fn new(y: Phasor, y_shunt_from: Phasor, y_shunt_to: Phasor) -> Result<Self, ModelError> {
        check_finite(
            Self::TYPE,
            Self::PARAMS,
            &[y.re, y.im, y_shunt_from.re, y_shunt_from.im, y_shunt_to.re, y_shunt_to.im],
        )?;
        nonzero(Self::TYPE, "y_re", y)?;
        Ok(Self {
            y,
            y_shunt_from,
            y_shunt_to,
        })
    }

    pub fn currents(&self, u_from: Phasor, u_to: Phasor) -> (Phasor, Phasor) {
        let series = self.y * (u_from - u_to);
        (
            series + self.y_shunt_from * u_from,
            -series + self.y_shunt_to * u_to,
        )
    }
}

/// Series admittance behind an ideal (possibly phase-shifting) tap on the
/// from-side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transformer {
    pub y: Phasor,
    pub t_ratio: Phasor,
}

impl Transformer {
    pub const TYPE: &'static str = "Transformer";
    pub const PARAMS: &'static [&'static str] = &["y_re", "y_im", "t_ratio_re", "t_ratio_im"];

    pub fn new(y: Phasor, t_ratio: Phasor) -> Result<Self, ModelError> {
        check_finite(Self::TYPE, Self::PARAMS, &[y.re, y.im, t_ratio.re, t_ratio.im])?;
        nonzero(Self::TYPE, "y_re", y)?;
        nonzero(Self::TYPE, "t_ratio_re", t_ratio)?;
        Ok(Self { y, t_ratio })
    }

    pub fn currents(&self, u_from: Phasor, u_to: Phasor) -> (Phasor, Phasor) {
        let t = self.t_ratio;
        let i_from = self.y / t.norm_sqr() * u_from - self.y / t.conj() * u_to;
        let i_to = -(self.y / t) * u_from + self.y * u_to;
        (i_from, i_to)
    }
}

/// Series R-L branch with its current as a dynamic state, written in the
/// frame rotating at the nominal frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RLLine {
    pub r: f64,
    pub l: f64,
    pub omega_nominal: f64,
}

impl RLLine {
    pub const TYPE: &'static str = "RLLine";
    pub const PARAMS: &'static [&'static str] = &["R", "L", "ω_N"];

    pub fn new(r: f64, l: f64, omega_nominal: f64) -> Result<Self, ModelError> {
        check_finite(Self::TYPE, Self::PARAMS, &[r, l, omega_nominal])?;
        let bad = |param, reason| ModelError::InvalidParameter {
            model: Self::TYPE,
            param,
            reason,
        };
        if r < 0.0 {
            return Err(bad("R", "must be >= 0"));
        }
        if l <= 0.0 {
            return Err(bad("L", "must be > 0"));
        }
        if omega_nominal <= 0.0 {
            return Err(bad("ω_N", "must be > 0"));
        }
        Ok(Self { r, l, omega_nominal })
    }

    /// Series impedance `R + j·ω_N·L`.
    pub fn impedance(&self) -> Phasor {
        Phasor::new(self.r, self.omega_nominal * self.l)
    }

    /// Fixed-point current for the given terminal voltages.
    pub fn steady_current(&self, u_from: Phasor, u_to: Phasor) -> Phasor {
        (u_from - u_to) / self.impedance()
    }

    pub fn derivative(&self, u_from: Phasor, u_to: Phasor, current: Phasor) -> Phasor {
        (u_from - u_to - self.impedance() * current) / self.l
    }
}

/// Behavioral line description.
#[derive(Debug, Clone, PartialEq)]
pub enum LineModel {
    Static(StaticLine),
    PiModel(PiModelLine),
    Transformer(Transformer),
    RL(RLLine),
}

impl From<StaticLine> for LineModel {
    fn from(m: StaticLine) -> Self {
        LineModel::Static(m)
    }
}
impl From<PiModelLine> for LineModel {
    fn from(m: PiModelLine) -> Self {
        LineModel::PiModel(m)
    }
}
impl From<Transformer> for LineModel {
    fn from(m: Transformer) -> Self {
        LineModel::Transformer(m)
    }
}
impl From<RLLine> for LineModel {
    fn from(m: RLLine) -> Self {
        LineModel::RL(m)
    }
}

pub const LINE_TYPES: &[&str] = &[
    StaticLine::TYPE,
    PiModelLine::TYPE,
    Transformer::TYPE,
    RLLine::TYPE,
];

/// Currents leaving the network at both terminals of a line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCurrents {
    pub i_from: Phasor,
    pub i_to: Phasor,
}

impl LineModel {
    pub fn type_name(&self) -> &'static str {
        match self {
            LineModel::Static(_) => StaticLine::TYPE,
            LineModel::PiModel(_) => PiModelLine::TYPE,
            LineModel::Transformer(_) => Transformer::TYPE,
            LineModel::RL(_) => RLLine::TYPE,
        }
    }

    pub fn param_names_for(type_name: &str) -> Option<&'static [&'static str]> {
        Some(match type_name {
            StaticLine::TYPE => StaticLine::PARAMS,
            PiModelLine::TYPE => PiModelLine::PARAMS,
            Transformer::TYPE => Transformer::PARAMS,
            RLLine::TYPE => RLLine::PARAMS,
            _ => return None,
        })
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        Self::param_names_for(self.type_name()).expect("library type")
    }

    pub fn param_values(&self) -> Vec<f64> {
        match self {
            LineModel::Static(m) => vec![m.y.re, m.y.im],
            LineModel::PiModel(m) => vec![
                m.y.re,
                m.y.im,
                m.y_shunt_from.re,
                m.y_shunt_from.im,
                m.y_shunt_to.re,
                m.y_shunt_to.im,
            ],
            LineModel::Transformer(m) => vec![m.y.re, m.y.im, m.t_ratio.re, m.t_ratio.im],
            LineModel::RL(m) => vec![m.r, m.l, m.omega_nominal],
        }
    }

    pub fn from_values(type_name: &str, v: &[f64]) -> Result<Self, ModelError> {
        let names = Self::param_names_for(type_name)
            .ok_or_else(|| ModelError::UnknownType(type_name.into()))?;
        assert_eq!(names.len(), v.len(), "parameter count for {type_name}");
        let c = |k: usize| Phasor::new(v[k], v[k + 1]);
        Ok(match type_name {
            StaticLine::TYPE => StaticLine::new(c(0))?.into(),
            PiModelLine::TYPE => PiModelLine::new(c(0), c(2), c(4))?.into(),
            Transformer::TYPE => Transformer::new(c(0), c(2))?.into(),
            RLLine::TYPE => RLLine::new(v[0], v[1], v[2])?.into(),
            _ => unreachable!(),
        })
    }

    pub fn internal_names(&self) -> &'static [&'static str] {
        match self {
            LineModel::RL(_) => &["I_re", "I_im"],
            _ => &[],
        }
    }

    /// Terminal currents; writes internal derivatives into `d_int`.
    pub fn currents(&self, u_from: Phasor, u_to: Phasor, x_int: &[f64], d_int: &mut [f64]) -> LineCurrents {
        let (i_from, i_to) = match self {
            LineModel::Static(m) => m.currents(u_from, u_to),
            LineModel::PiModel(m) => m.currents(u_from, u_to),
            LineModel::Transformer(m) => m.currents(u_from, u_to),
            LineModel::RL(m) => {
                let i = Phasor::new(x_int[0], x_int[1]);
                let di = m.derivative(u_from, u_to, i);
                d_int[0] = di.re;
                d_int[1] = di.im;
                (i, -i)
            }
        };
        LineCurrents { i_from, i_to }
    }

    /// Initial guess for the internals: zero current.
    pub fn initial_internals(&self) -> Vec<f64> {
        vec![0.0; self.internal_names().len()]
    }
}
