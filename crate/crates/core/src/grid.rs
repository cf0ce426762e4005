//! Linear and nonlinear frequency models of one- and two-area systems.
//!
//! Frequency states are stored normalized, `x = Δf / f0`; the angle
//! difference between areas is in radians and the battery state of charge is
//! dimensionless in `[-1, 1]`.
//!
//! One-area state `[Δf/f0, soc]`, inputs `[ΔP, u]`.
//! Two-area state `[Δf₁/f0, soc₁, Δf₂/f0, soc₂, Δφ]`, inputs `[ΔP₁, u₁, ΔP₂, u₂]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{matrix_exponential, DenseMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Physical parameters of one control area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaParams {
    /// Nominal frequency (Hz).
    pub f0: f64,
    /// Inertia constant H (s).
    pub inertia: f64,
    /// Rated apparent power S_B (p.u.).
    pub base_power: f64,
    /// Load damping D_l; the damping power is `Δf / D_l`.
    pub load_damping: f64,
}

impl AreaParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("f0", self.f0),
            ("inertia", self.inertia),
            ("base_power", self.base_power),
            ("load_damping", self.load_damping),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `A_freq = −f0 / (2·H·S_B·D_l)` (1/s).
    pub fn a_freq(&self) -> f64 {
        -self.f0 / (2.0 * self.inertia * self.base_power * self.load_damping)
    }

    /// `B_freq = f0 / (2·H·S_B)` (Hz/s per p.u.).
    pub fn b_freq(&self) -> f64 {
        self.f0 / (2.0 * self.inertia * self.base_power)
    }

    /// Power-to-normalized-frequency gain `B_freq / f0`.
    pub fn b_norm(&self) -> f64 {
        self.b_freq() / self.f0
    }

    /// Self-regulation `k_pf = 1 / D_l`.
    pub fn self_regulation(&self) -> f64 {
        1.0 / self.load_damping
    }

    /// Storage-function weight `β = 2·H·S_B / f0²`.
    pub fn storage_weight(&self) -> f64 {
        2.0 * self.inertia * self.base_power / (self.f0 * self.f0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryParams {
    /// Energy capacity C_bat (p.u.·s).
    pub capacity: f64,
    /// Self-discharge power v (p.u.).
    pub self_discharge: f64,
    /// Battery power bounds (p.u.), configured as `u_min`/`u_max`.
    #[serde(rename = "u_min")]
    pub power_min: f64,
    #[serde(rename = "u_max")]
    pub power_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Largest input change between consecutive samples (p.u.).
    #[serde(rename = "du_max")]
    pub ramp_per_step: f64,
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(invalid("capacity", format!("must be positive, got {}", self.capacity)));
        }
        if !self.self_discharge.is_finite() {
            return Err(invalid("self_discharge", "must be finite"));
        }
        if !(self.power_min < 0.0 && 0.0 < self.power_max) {
            return Err(invalid(
                "u_min/u_max",
                format!(
                    "need u_min < 0 < u_max, got [{}, {}]",
                    self.power_min, self.power_max
                ),
            ));
        }
        if !(-1.0 <= self.soc_min && self.soc_min < 0.0 && 0.0 < self.soc_max && self.soc_max <= 1.0)
        {
            return Err(invalid(
                "soc_min/soc_max",
                format!(
                    "need -1 <= soc_min < 0 < soc_max <= 1, got [{}, {}]",
                    self.soc_min, self.soc_max
                ),
            ));
        }
        if !(self.ramp_per_step.is_finite() && self.ramp_per_step > 0.0) {
            return Err(invalid("du_max", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieLineParams {
    /// Maximum transmittable power P̂_T (p.u.); zero decouples the areas.
    pub p_hat: f64,
}

impl TieLineParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.p_hat.is_finite() && self.p_hat >= 0.0) {
            return Err(invalid("p_hat", format!("must be nonnegative, got {}", self.p_hat)));
        }
        Ok(())
    }

    /// Power flowing from area 1 to area 2 for an angle difference `φ₁ − φ₂`.
    pub fn power(&self, delta_phi: f64) -> f64 {
        self.p_hat * delta_phi.sin()
    }
}

/// Continuous-time linear model `ẋ = a·x + b·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
}

impl ContinuousModel {
    pub fn n_states(&self) -> usize {
        self.a.rows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.cols()
    }

    /// Model in coordinates `z = diag(scale)·x`.
    pub fn rescale_states(&self, scale: &[f64]) -> ContinuousModel {
        let n = self.n_states();
        assert_eq!(scale.len(), n);
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] *= scale[i] / scale[j];
            }
            for j in 0..b.cols() {
                b[(i, j)] *= scale[i];
            }
        }
        ContinuousModel {
            a,
            b,
            state_labels: self.state_labels.clone(),
            input_labels: self.input_labels.clone(),
        }
    }
}

/// Zero-order-hold discretization `x⁺ = a_d·x + b_d·u` at sampling time `ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a_d: DenseMatrix,
    pub b_d: DenseMatrix,
    pub ts: f64,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
}

impl DiscreteModel {
    pub fn n_states(&self) -> usize {
        self.a_d.rows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_d.cols()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let ax = self.a_d.mul_vec(x);
        let bu = self.b_d.mul_vec(u);
        ax.iter().zip(&bu).map(|(p, q)| p + q).collect()
    }
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn build_one_area(area: &AreaParams, battery: &BatteryParams) -> Result<ContinuousModel, ModelError> {
    area.validate()?;
    battery.validate()?;
    let a = DenseMatrix::from_diagonal(&[area.a_freq(), -battery.self_discharge / battery.capacity]);
    let mut b = DenseMatrix::zeros(2, 2);
    b[(0, 0)] = area.b_norm();
    b[(0, 1)] = area.b_norm();
    b[(1, 1)] = -1.0 / battery.capacity;
    Ok(ContinuousModel {
        a,
        b,
        state_labels: labels(&["freq_dev_norm", "soc"]),
        input_labels: labels(&["disturbance", "battery_power"]),
    })
}

/// Linearized coupled model of two areas joined by a tie line.
///
/// The frequency rows carry the tie coupling `A_freq,i·D_l,i·P̂_T / f0` on the
/// angle column and the angle row is `2π·f0·(x₁ − x₂)`.
pub fn build_two_area_coupled(
    a1: &AreaParams,
    a2: &AreaParams,
    b1: &BatteryParams,
    b2: &BatteryParams,
    tie: &TieLineParams,
) -> Result<ContinuousModel, ModelError> {
    a1.validate()?;
    a2.validate()?;
    b1.validate()?;
    b2.validate()?;
    tie.validate()?;
    if a1.f0 != a2.f0 {
        return Err(invalid("f0", format!("areas disagree on f0 ({} vs {})", a1.f0, a2.f0)));
    }
    let f0 = a1.f0;
    let mut a = DenseMatrix::zeros(5, 5);
    a[(0, 0)] = a1.a_freq();
    a[(0, 4)] = a1.a_freq() * a1.load_damping * tie.p_hat / f0;
    a[(1, 1)] = -b1.self_discharge / b1.capacity;
    a[(2, 2)] = a2.a_freq();
    a[(2, 4)] = -a2.a_freq() * a2.load_damping * tie.p_hat / f0;
    a[(3, 3)] = -b2.self_discharge / b2.capacity;
    a[(4, 0)] = 2.0 * PI * f0;
    a[(4, 2)] = -2.0 * PI * f0;

    let mut b = DenseMatrix::zeros(5, 4);
    b[(0, 0)] = a1.b_norm();
    b[(0, 1)] = a1.b_norm();
    b[(1, 1)] = -1.0 / b1.capacity;
    b[(2, 2)] = a2.b_norm();
    b[(2, 3)] = a2.b_norm();
    b[(3, 3)] = -1.0 / b2.capacity;
    Ok(ContinuousModel {
        a,
        b,
        state_labels: labels(&["freq_dev_norm_1", "soc_1", "freq_dev_norm_2", "soc_2", "delta_phi"]),
        input_labels: labels(&["disturbance_1", "battery_power_1", "disturbance_2", "battery_power_2"]),
    })
}

/// Exact zero-order hold through the exponential of `[[a, b], [0, 0]]·ts`.
pub fn discretize(model: &ContinuousModel, ts: f64) -> Result<DiscreteModel, ModelError> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(invalid("ts", format!("sampling time must be positive, got {ts}")));
    }
    let n = model.n_states();
    let m = model.n_inputs();
    let mut aug = DenseMatrix::zeros(n + m, n + m);
    aug.set_block(0, 0, &model.a.scale(ts));
    aug.set_block(0, n, &model.b.scale(ts));
    let e = matrix_exponential(&aug)?;
    Ok(DiscreteModel {
        a_d: e.block(0, 0, n, n),
        b_d: e.block(0, n, n, m),
        ts,
        state_labels: model.state_labels.clone(),
        input_labels: model.input_labels.clone(),
    })
}

/// Number of areas represented by a plant state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    OneArea,
    TwoArea,
}

impl Topology {
    pub fn n_areas(self) -> usize {
        match self {
            Topology::OneArea => 1,
            Topology::TwoArea => 2,
        }
    }

    pub fn n_states(self) -> usize {
        match self {
            Topology::OneArea => 2,
            Topology::TwoArea => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Topology::OneArea => "one-area",
            Topology::TwoArea => "two-area",
        }
    }
}

/// Full plant state; the angle difference is kept unwrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    topology: Topology,
    values: Vec<f64>,
}

impl PlantState {
    pub fn zero(topology: Topology) -> Self {
        Self {
            topology,
            values: vec![0.0; topology.n_states()],
        }
    }

    pub fn from_values(topology: Topology, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != topology.n_states() {
            return Err(invalid(
                "state",
                format!("{} expects {} states, got {}", topology.as_str(), topology.n_states(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("state", "non-finite entry"));
        }
        Ok(Self { topology, values })
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn freq_index(area: usize) -> usize {
        2 * area
    }

    pub fn soc_index(area: usize) -> usize {
        2 * area + 1
    }

    pub const ANGLE_INDEX: usize = 4;

    /// Normalized frequency deviation `Δf/f0` of an area.
    pub fn freq(&self, area: usize) -> f64 {
        self.values[Self::freq_index(area)]
    }

    pub fn soc(&self, area: usize) -> f64 {
        self.values[Self::soc_index(area)]
    }

    /// Unwrapped angle difference; zero for a single area.
    pub fn angle(&self) -> f64 {
        match self.topology {
            Topology::OneArea => 0.0,
            Topology::TwoArea => self.values[Self::ANGLE_INDEX],
        }
    }

    /// States seen by the controller of one area: `[Δf/f0, soc]`.
    pub fn local(&self, area: usize) -> Vec<f64> {
        vec![self.freq(area), self.soc(area)]
    }
}

/// Angle wrapped into `(−π, π]`.
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Power injections acting on one area during an integration step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AreaInputs {
    /// External power deviation ΔP (positive raises frequency).
    pub disturbance: f64,
    /// Battery injection u (drains the state of charge).
    pub battery: f64,
    /// Generation set-point change from secondary control.
    pub generation: f64,
    /// Instantaneous primary response `−droop_gain·Δf` (p.u. per Hz).
    pub droop_gain: f64,
}

/// Parameters of the simulated plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    pub areas: Vec<(AreaParams, BatteryParams)>,
    pub tie: TieLineParams,
}

impl PlantParams {
    pub fn topology(&self) -> Topology {
        if self.areas.len() == 1 {
            Topology::OneArea
        } else {
            Topology::TwoArea
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(1..=2).contains(&self.areas.len()) {
            return Err(invalid("areas", "one or two areas are supported"));
        }
        for (a, b) in &self.areas {
            a.validate()?;
            b.validate()?;
        }
        self.tie.validate()?;
        if self.areas.len() == 2 && self.areas[0].0.f0 != self.areas[1].0.f0 {
            return Err(invalid("f0", "areas must share the nominal frequency"));
        }
        Ok(())
    }
}

/// Nonlinear right-hand side: swing equations with `P̂_T·sin(Δφ)` tie flow,
/// load damping, droop response and battery state of charge.
pub fn plant_derivative(state: &PlantState, inputs: &[AreaInputs], params: &PlantParams) -> Vec<f64> {
    let mut out = vec![0.0; state.values.len()];
    plant_derivative_into(&state.values, inputs, params, &mut out);
    out
}

pub(crate) fn plant_derivative_into(x: &[f64], inputs: &[AreaInputs], params: &PlantParams, out: &mut [f64]) {
    let n_areas = params.areas.len();
    let tie_flow = if n_areas == 2 {
        params.tie.power(x[PlantState::ANGLE_INDEX])
    } else {
        0.0
    };
    for (i, ((area, battery), inp)) in params.areas.iter().zip(inputs).enumerate() {
        let xf = x[PlantState::freq_index(i)];
        let delta_f_hz = area.f0 * xf;
        // area 1 exports the tie flow, area 2 imports it
        let tie = if i == 0 { -tie_flow } else { tie_flow };
        let injection = inp.disturbance + inp.battery + inp.generation - inp.droop_gain * delta_f_hz + tie;
        out[PlantState::freq_index(i)] = area.a_freq() * xf + area.b_norm() * injection;
        out[PlantState::soc_index(i)] = -(battery.self_discharge + inp.battery) / battery.capacity;
    }
    if n_areas == 2 {
        let f0 = params.areas[0].0.f0;
        out[PlantState::ANGLE_INDEX] = 2.0 * PI * f0 * (x[0] - x[2]);
    }
}

/// Power imbalance contributions of the tie line to each area, `(area1, area2)`.
pub fn tie_contributions(delta_phi: f64, tie: &TieLineParams) -> (f64, f64) {
    let p = tie.power(delta_phi);
    (-p, p)
}
