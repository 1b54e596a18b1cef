//! Node component library.
//!
//! A node sees its complex voltage `u`, the aggregate current `i` it pushes
//! into the network, its internal variables and the time. It returns either
//! `du/dt` (differential voltage) or an algebraic voltage residual, plus one
//! derivative per internal variable. With this convention `complex_power(u, i)`
//! is the power the node injects: generation is positive, consumption negative.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::phasor::{complex_power, Phasor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{model}: parameter {param} {reason}")]
    InvalidParameter {
        model: &'static str,
        param: &'static str,
        reason: &'static str,
    },
    #[error("unknown model type {0:?}")]
    UnknownType(String),
    #[error("{model}: missing parameter {param}")]
    MissingParameter { model: &'static str, param: String },
    #[error("{model}: unknown parameter {param}")]
    UnknownParameter { model: &'static str, param: String },
    #[error("{model}: evaluated at zero voltage")]
    SingularVoltage { model: &'static str },
}

fn require(
    ok: bool,
    model: &'static str,
    param: &'static str,
    reason: &'static str,
) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            model,
            param,
            reason,
        })
    }
}

fn finite(model: &'static str, names: &[&'static str], values: &[f64]) -> Result<(), ModelError> {
    for (n, v) in names.iter().zip(values) {
        require(v.is_finite(), model, n, "must be finite")?;
    }
    Ok(())
}

/// Fixed voltage phasor; the phase reference of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackAlgebraic {
    u_set: Phasor,
}

impl SlackAlgebraic {
    pub const TYPE: &'static str = "SlackAlgebraic";
    pub const PARAMS: &'static [&'static str] = &["U_re", "U_im"];

    pub fn new(u_set: Phasor) -> Result<Self, ModelError> {
        finite(Self::TYPE, Self::PARAMS, &[u_set.re, u_set.im])?;
        require(u_set.norm() > 0.0, Self::TYPE, "U_re", "requires |U| > 0")?;
        Ok(Self { u_set })
    }

    pub fn voltage(&self) -> Phasor {
        self.u_set
    }

    pub fn residual(&self, u: Phasor) -> Phasor {
        u - self.u_set
    }
}

/// Constant power load (or injection).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PQAlgebraic {
    pub p: f64,
    pub q: f64,
}

impl PQAlgebraic {
    pub const TYPE: &'static str = "PQAlgebraic";
    pub const PARAMS: &'static [&'static str] = &["P", "Q"];

    pub fn new(p: f64, q: f64) -> Result<Self, ModelError> {
        finite(Self::TYPE, Self::PARAMS, &[p, q])?;
        Ok(Self { p, q })
    }

    pub fn residual(&self, u: Phasor, i: Phasor) -> Result<Phasor, ModelError> {
        if u.norm_sqr() == 0.0 {
            return Err(ModelError::SingularVoltage { model: Self::TYPE });
        }
        Ok(complex_power(u, i) - Phasor::new(self.p, self.q))
    }
}

/// Two-axis (fourth-order) synchronous machine. The complex voltage is the
/// transient internal voltage rotated into the network frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourthOrderEq {
    pub h: f64,
    pub d: f64,
    pub p: f64,
    pub e_f: f64,
    pub t_d_dash: f64,
    pub t_q_dash: f64,
    pub x_d: f64,
    pub x_q: f64,
    pub x_d_dash: f64,
    pub x_q_dash: f64,
    pub omega_nominal: f64,
}

impl FourthOrderEq {
    pub const TYPE: &'static str = "FourthOrderEq";
    pub const PARAMS: &'static [&'static str] = &[
        "H", "D", "P", "E_f", "T_d_dash", "T_q_dash", "X_d", "X_q", "X_d_dash", "X_q_dash", "Ω",
    ];

    pub fn validated(self) -> Result<Self, ModelError> {
        let t = Self::TYPE;
        finite(t, Self::PARAMS, &self.values())?;
        require(self.h > 0.0, t, "H", "must be > 0")?;
        require(self.t_d_dash > 0.0, t, "T_d_dash", "must be > 0")?;
        require(self.t_q_dash > 0.0, t, "T_q_dash", "must be > 0")?;
        require(self.x_d_dash > 0.0, t, "X_d_dash", "must be > 0")?;
        require(self.x_q_dash > 0.0, t, "X_q_dash", "must be > 0")?;
        require(self.x_d >= self.x_d_dash, t, "X_d", "must be >= X_d_dash")?;
        require(self.x_q >= self.x_q_dash, t, "X_q", "must be >= X_q_dash")?;
        require(self.omega_nominal > 0.0, t, "Ω", "must be > 0")?;
        Ok(self)
    }

    fn values(&self) -> [f64; 11] {
        [
            self.h,
            self.d,
            self.p,
            self.e_f,
            self.t_d_dash,
            self.t_q_dash,
            self.x_d,
            self.x_q,
            self.x_d_dash,
            self.x_q_dash,
            self.omega_nominal,
        ]
    }

    fn from_values(v: &[f64]) -> Self {
        Self {
            h: v[0],
            d: v[1],
            p: v[2],
            e_f: v[3],
            t_d_dash: v[4],
            t_q_dash: v[5],
            x_d: v[6],
            x_q: v[7],
            x_d_dash: v[8],
            x_q_dash: v[9],
            omega_nominal: v[10],
        }
    }

    /// Returns `du` and writes `[dθ, dω]`.
    pub fn rhs(&self, u: Phasor, i: Phasor, theta: f64, omega: f64, d_int: &mut [f64]) -> Phasor {
        let rot = Phasor::from_polar(1.0, -theta);
        let e_c = u * rot;
        let i_c = i * rot;
        let (e_d, e_q) = (e_c.re, e_c.im);
        let (i_d, i_q) = (i_c.re, i_c.im);
        let p = complex_power(u, i).re;

        let de_d = (-e_d + (self.x_q - self.x_q_dash) * i_q) / self.t_q_dash;
        let de_q = (-e_q - (self.x_d - self.x_d_dash) * i_d + self.e_f) / self.t_d_dash;
        d_int[0] = omega;
        d_int[1] = self.omega_nominal / (2.0 * self.h)
            * (self.p - self.d * omega - p - (self.x_q_dash - self.x_d_dash) * i_d * i_q);
        rot.conj() * Phasor::new(de_d, de_q) + u * Phasor::i() * omega
    }
}

/// Droop-controlled voltage source inverter with first-order power
/// measurement filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VSIVoltagePT1 {
    pub tau_v: f64,
    pub tau_p: f64,
    pub tau_q: f64,
    pub k_p: f64,
    pub k_q: f64,
    pub v_r: f64,
    pub p: f64,
    pub q: f64,
}

impl VSIVoltagePT1 {
    pub const TYPE: &'static str = "VSIVoltagePT1";
    pub const PARAMS: &'static [&'static str] = &["τ_v", "τ_P", "τ_Q", "K_P", "K_Q", "V_r", "P", "Q"];

    pub fn validated(self) -> Result<Self, ModelError> {
        let t = Self::TYPE;
        finite(t, Self::PARAMS, &self.values())?;
        require(self.tau_v > 0.0, t, "τ_v", "time constant voltage droop delay should be >0")?;
        require(self.tau_p > 0.0, t, "τ_P", "time constant active power measurement should be >0")?;
        require(self.tau_q > 0.0, t, "τ_Q", "time constant reactive power measurement should be >0")?;
        require(self.k_q > 0.0, t, "K_Q", "reactive power droop constant should be >0")?;
        require(self.k_p > 0.0, t, "K_P", "active power droop constant should be >0")?;
        Ok(self)
    }

    fn values(&self) -> [f64; 8] {
        [self.tau_v, self.tau_p, self.tau_q, self.k_p, self.k_q, self.v_r, self.p, self.q]
    }

    fn from_values(v: &[f64]) -> Self {
        Self {
            tau_v: v[0],
            tau_p: v[1],
            tau_q: v[2],
            k_p: v[3],
            k_q: v[4],
            v_r: v[5],
            p: v[6],
            q: v[7],
        }
    }

    /// Returns `du` and writes `[dω, dq_m]`.
    pub fn rhs(
        &self,
        u: Phasor,
        i: Phasor,
        omega: f64,
        q_m: f64,
        d_int: &mut [f64],
    ) -> Result<Phasor, ModelError> {
        let v = u.norm();
        if v == 0.0 {
            return Err(ModelError::SingularVoltage { model: Self::TYPE });
        }
        let s = complex_power(u, i);
        let (p, q) = (s.re, s.im);
        let dphi = omega;
        let dv = (-v + self.v_r - self.k_q * (q_m - self.q)) / self.tau_v;
        d_int[0] = (-omega - self.k_p * (p - self.p)) / self.tau_p;
        d_int[1] = (q - q_m) / self.tau_q;
        Ok(u * Phasor::i() * dphi + dv * (u / v))
    }
}

/// Grid-following inverter: first-order voltage filter, synchronous-frame PLL
/// (PI on the q-component) and frequency/voltage droop on a power command,
/// behaving as a current source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFollowingPLL {
    pub tau_v: f64,
    pub k_pll_p: f64,
    pub k_pll_i: f64,
    pub k_p: f64,
    pub k_q: f64,
    pub v_r: f64,
    pub p: f64,
    pub q: f64,
}

impl GridFollowingPLL {
    pub const TYPE: &'static str = "GridFollowingPLL";
    pub const PARAMS: &'static [&'static str] =
        &["τ_v", "K_pll_p", "K_pll_i", "K_P", "K_Q", "V_r", "P", "Q"];

    pub fn validated(self) -> Result<Self, ModelError> {
        let t = Self::TYPE;
        finite(t, Self::PARAMS, &self.values())?;
        require(self.tau_v > 0.0, t, "τ_v", "must be > 0")?;
        require(self.k_pll_p >= 0.0, t, "K_pll_p", "must be >= 0")?;
        require(self.k_pll_i > 0.0, t, "K_pll_i", "must be > 0")?;
        require(self.k_p >= 0.0, t, "K_P", "must be >= 0")?;
        require(self.k_q >= 0.0, t, "K_Q", "must be >= 0")?;
        Ok(self)
    }

    fn values(&self) -> [f64; 8] {
        [
            self.tau_v,
            self.k_pll_p,
            self.k_pll_i,
            self.k_p,
            self.k_q,
            self.v_r,
            self.p,
            self.q,
        ]
    }

    fn from_values(v: &[f64]) -> Self {
        Self {
            tau_v: v[0],
            k_pll_p: v[1],
            k_pll_i: v[2],
            k_p: v[3],
            k_q: v[4],
            v_r: v[5],
            p: v[6],
            q: v[7],
        }
    }

    /// q-component of `u` in the PLL frame.
    fn v_q(u: Phasor, theta: f64) -> f64 {
        (u * Phasor::from_polar(1.0, -theta)).im
    }

    /// PLL frequency deviation (rad/s).
    pub fn pll_frequency(&self, u: Phasor, theta: f64, eps: f64) -> f64 {
        self.k_pll_p * Self::v_q(u, theta) + eps
    }

    /// Power command from the droop laws.
    pub fn power_command(&self, omega_pll: f64, u_f: Phasor) -> Phasor {
        Phasor::new(
            self.p - self.k_p * omega_pll,
            self.q + self.k_q * (self.v_r - u_f.norm()),
        )
    }

    /// Returns the algebraic current residual and writes
    /// `[dθ, dε, dvf_re, dvf_im]`.
    pub fn rhs(
        &self,
        u: Phasor,
        i: Phasor,
        x_int: &[f64],
        d_int: &mut [f64],
    ) -> Result<Phasor, ModelError> {
        if u.norm_sqr() == 0.0 {
            return Err(ModelError::SingularVoltage { model: Self::TYPE });
        }
        let (theta, eps) = (x_int[0], x_int[1]);
        let u_f = Phasor::new(x_int[2], x_int[3]);
        let v_q = Self::v_q(u, theta);
        let omega_pll = self.k_pll_p * v_q + eps;
        let du_f = (u - u_f) / self.tau_v;
        d_int[0] = omega_pll;
        d_int[1] = self.k_pll_i * v_q;
        d_int[2] = du_f.re;
        d_int[3] = du_f.im;
        let s_cmd = self.power_command(omega_pll, u_f);
        Ok(i - (s_cmd / u).conj())
    }
}

/// Behavioral node description: one of the library models.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeModel {
    Slack(SlackAlgebraic),
    PQ(PQAlgebraic),
    FourthOrder(FourthOrderEq),
    VSIVoltagePT1(VSIVoltagePT1),
    GridFollowing(GridFollowingPLL),
}

impl From<SlackAlgebraic> for NodeModel {
    fn from(m: SlackAlgebraic) -> Self {
        NodeModel::Slack(m)
    }
}
impl From<PQAlgebraic> for NodeModel {
    fn from(m: PQAlgebraic) -> Self {
        NodeModel::PQ(m)
    }
}
impl From<FourthOrderEq> for NodeModel {
    fn from(m: FourthOrderEq) -> Self {
        NodeModel::FourthOrder(m)
    }
}
impl From<VSIVoltagePT1> for NodeModel {
    fn from(m: VSIVoltagePT1) -> Self {
        NodeModel::VSIVoltagePT1(m)
    }
}
impl From<GridFollowingPLL> for NodeModel {
    fn from(m: GridFollowingPLL) -> Self {
        NodeModel::GridFollowing(m)
    }
}

/// Model type names understood by [`NodeModel::from_values`].
pub const NODE_TYPES: &[&str] = &[
    SlackAlgebraic::TYPE,
    PQAlgebraic::TYPE,
    FourthOrderEq::TYPE,
    VSIVoltagePT1::TYPE,
    GridFollowingPLL::TYPE,
];

impl NodeModel {
    pub fn type_name(&self) -> &'static str {
        match self {
            NodeModel::Slack(_) => SlackAlgebraic::TYPE,
            NodeModel::PQ(_) => PQAlgebraic::TYPE,
            NodeModel::FourthOrder(_) => FourthOrderEq::TYPE,
            NodeModel::VSIVoltagePT1(_) => VSIVoltagePT1::TYPE,
            NodeModel::GridFollowing(_) => GridFollowingPLL::TYPE,
        }
    }

    pub fn param_names_for(type_name: &str) -> Option<&'static [&'static str]> {
        Some(match type_name {
            SlackAlgebraic::TYPE => SlackAlgebraic::PARAMS,
            PQAlgebraic::TYPE => PQAlgebraic::PARAMS,
            FourthOrderEq::TYPE => FourthOrderEq::PARAMS,
            VSIVoltagePT1::TYPE => VSIVoltagePT1::PARAMS,
            GridFollowingPLL::TYPE => GridFollowingPLL::PARAMS,
            _ => return None,
        })
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        Self::param_names_for(self.type_name()).expect("library type")
    }

    /// Parameter values in the order of [`Self::param_names`].
    pub fn param_values(&self) -> Vec<f64> {
        match self {
            NodeModel::Slack(m) => vec![m.u_set.re, m.u_set.im],
            NodeModel::PQ(m) => vec![m.p, m.q],
            NodeModel::FourthOrder(m) => m.values().to_vec(),
            NodeModel::VSIVoltagePT1(m) => m.values().to_vec(),
            NodeModel::GridFollowing(m) => m.values().to_vec(),
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        let k = self.param_names().iter().position(|n| *n == name)?;
        Some(self.param_values()[k])
    }

    /// Builds a model from named parameters; `values` must be ordered as
    /// [`Self::param_names_for`].
    pub fn from_values(type_name: &str, values: &[f64]) -> Result<Self, ModelError> {
        let names =
            Self::param_names_for(type_name).ok_or_else(|| ModelError::UnknownType(type_name.into()))?;
        assert_eq!(names.len(), values.len(), "parameter count for {type_name}");
        Ok(match type_name {
            SlackAlgebraic::TYPE => {
                SlackAlgebraic::new(Phasor::new(values[0], values[1]))?.into()
            }
            PQAlgebraic::TYPE => PQAlgebraic::new(values[0], values[1])?.into(),
            FourthOrderEq::TYPE => FourthOrderEq::from_values(values).validated()?.into(),
            VSIVoltagePT1::TYPE => VSIVoltagePT1::from_values(values).validated()?.into(),
            GridFollowingPLL::TYPE => GridFollowingPLL::from_values(values).validated()?.into(),
            _ => unreachable!(),
        })
    }

    /// Copy of the model with one parameter replaced (re-validated).
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self, ModelError> {
        let names = self.param_names();
        let k = names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| ModelError::UnknownParameter {
                model: self.type_name(),
                param: name.to_string(),
            })?;
        let mut values = self.param_values();
        values[k] = value;
        Self::from_values(self.type_name(), &values)
    }

    pub fn internal_names(&self) -> &'static [&'static str] {
        match self {
            NodeModel::Slack(_) | NodeModel::PQ(_) => &[],
            NodeModel::FourthOrder(_) => &["θ", "ω"],
            NodeModel::VSIVoltagePT1(_) => &["ω", "q_m"],
            NodeModel::GridFollowing(_) => &["θ", "ε", "vf_re", "vf_im"],
        }
    }

    pub fn voltage_is_differential(&self) -> bool {
        matches!(self, NodeModel::FourthOrder(_) | NodeModel::VSIVoltagePT1(_))
    }

    /// Mass-matrix flags: the voltage pair followed by the internals.
    pub fn mass_flags(&self) -> Vec<bool> {
        let m_u = self.voltage_is_differential();
        let mut flags = vec![m_u, m_u];
        flags.extend(std::iter::repeat_n(true, self.internal_names().len()));
        flags
    }

    /// Evaluates the node equations. Returns `du/dt` or the voltage residual
    /// and writes one entry per internal variable into `d_int`.
    pub fn rhs(
        &self,
        u: Phasor,
        i: Phasor,
        x_int: &[f64],
        _t: f64,
        d_int: &mut [f64],
    ) -> Result<Phasor, ModelError> {
        match self {
            NodeModel::Slack(m) => Ok(m.residual(u)),
            NodeModel::PQ(m) => m.residual(u, i),
            NodeModel::FourthOrder(m) => Ok(m.rhs(u, i, x_int[0], x_int[1], d_int)),
            NodeModel::VSIVoltagePT1(m) => m.rhs(u, i, x_int[0], x_int[1], d_int),
            NodeModel::GridFollowing(m) => m.rhs(u, i, x_int, d_int),
        }
    }

    /// Initial guess for the internals given a terminal voltage.
    pub fn initial_internals(&self, u: Phasor) -> Vec<f64> {
        match self {
            NodeModel::Slack(_) | NodeModel::PQ(_) => vec![],
            // open-circuit relation e_c = j·E_f puts the q-axis on u
            NodeModel::FourthOrder(_) => vec![u.arg() - FRAC_PI_2, 0.0],
            NodeModel::VSIVoltagePT1(m) => vec![0.0, m.q],
            NodeModel::GridFollowing(_) => vec![u.arg(), 0.0, u.re, u.im],
        }
    }

    /// Frequency deviation (rad/s) where the model defines one.
    pub fn frequency(&self, u: Phasor, x_int: &[f64]) -> Option<f64> {
        match self {
            NodeModel::Slack(_) | NodeModel::PQ(_) => None,
            NodeModel::FourthOrder(_) => Some(x_int[1]),
            NodeModel::VSIVoltagePT1(_) => Some(x_int[0]),
            NodeModel::GridFollowing(m) => Some(m.pll_frequency(u, x_int[0], x_int[1])),
        }
    }

    /// True when the model exposes the active/reactive set-points `P`/`Q`.
    pub fn has_power_setpoint(&self) -> bool {
        self.param("P").is_some()
    }

    /// Indices (into the internals) of states that carry a frequency, used
    /// by the damped operation-point search.
    pub fn frequency_internals(&self) -> &'static [usize] {
        match self {
            NodeModel::FourthOrder(_) => &[1],
            NodeModel::VSIVoltagePT1(_) => &[0],
            _ => &[],
        }
    }
}
