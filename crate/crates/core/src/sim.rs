//! Closed-loop simulation of the nonlinear plant under sampled control.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conventional::{area_control_error, secondary_step, ConventionalParams, ConventionalState};
use crate::grid::{
    build_one_area, build_two_area_coupled, discretize, plant_derivative_into, wrap_angle, AreaInputs,
    ModelError, PlantParams, PlantState, Topology,
};
use crate::linalg::DenseMatrix;
use crate::mpc::{
    clf_terminal_cost, MpcBounds, MpcController, MpcError, MpcMode, MpcWeights, PassivityTopology,
    StepDiagnostics,
};

/// Magnitude beyond which a state counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state left the finite range at t = {time} s")]
    NonFiniteState { time: f64, trace: Box<SimTrace> },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("fault file {path}: {reason}")]
    FaultFile { path: PathBuf, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

/// External power disturbance of one area (p.u., positive raises frequency).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FaultSpec {
    #[default]
    None,
    /// Linear-sweep chirp whose positive half-waves occupy `duty` of each
    /// period, plus a linear drift, active on `[t_on, t_off]`.
    AsymmetricChirp {
        amplitude: f64,
        f_start: f64,
        f_end: f64,
        duty: f64,
        dc_drift: f64,
        t_on: f64,
        t_off: f64,
    },
    Step {
        magnitude: f64,
        t_on: f64,
        #[serde(default = "infinity")]
        t_off: f64,
    },
    /// Rises linearly from zero at `t_on` to `magnitude` at `t_full`.
    Ramp {
        magnitude: f64,
        t_on: f64,
        t_full: f64,
        #[serde(default = "infinity")]
        t_off: f64,
    },
    Composite { parts: Vec<FaultSpec> },
    /// Two-column text file of time and power, linearly interpolated.
    FromFile {
        path: PathBuf,
        #[serde(skip)]
        samples: Vec<(f64, f64)>,
    },
}

fn infinity() -> f64 {
    f64::INFINITY
}

impl FaultSpec {
    /// The chirp used for the two-area studies.
    pub fn reference_chirp() -> Self {
        FaultSpec::AsymmetricChirp {
            amplitude: 0.3,
            f_start: 0.05,
            f_end: 0.5,
            duty: 0.4,
            dc_drift: -0.001,
            t_on: 0.0,
            t_off: 60.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Scenario(format!("fault: {m}")));
        match self {
            FaultSpec::None => Ok(()),
            FaultSpec::AsymmetricChirp {
                amplitude,
                f_start,
                f_end,
                duty,
                dc_drift,
                t_on,
                t_off,
            } => {
                if !(t_on < t_off) {
                    return bad("t_on must be before t_off");
                }
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    return bad("amplitude must be nonnegative");
                }
                if !(*duty > 0.0 && *duty < 1.0) {
                    return bad("duty must lie in (0, 1)");
                }
                if !(f_start.is_finite() && f_end.is_finite() && dc_drift.is_finite() && t_off.is_finite()) {
                    return bad("chirp parameters must be finite");
                }
                Ok(())
            }
            FaultSpec::Step { magnitude, t_on, t_off } => {
                if !(magnitude.is_finite() && t_on < t_off) {
                    return bad("step needs finite magnitude and t_on < t_off");
                }
                Ok(())
            }
            FaultSpec::Ramp {
                magnitude,
                t_on,
                t_full,
                t_off,
            } => {
                if !(magnitude.is_finite() && t_on < t_full && t_on < t_off) {
                    return bad("ramp needs t_on < t_full and t_on < t_off");
                }
                Ok(())
            }
            FaultSpec::Composite { parts } => parts.iter().try_for_each(FaultSpec::validate),
            FaultSpec::FromFile { samples, path } => {
                if samples.is_empty() {
                    return Err(SimError::FaultFile {
                        path: path.clone(),
                        reason: "not loaded or empty".into(),
                    });
                }
                Ok(())
            }
        }
    }

    /// Reads every `FromFile` table, resolving relative paths against `base`.
    pub fn load_files(&mut self, base: &Path) -> Result<(), SimError> {
        match self {
            FaultSpec::FromFile { path, samples } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(&*path) };
                *samples = read_fault_file(&full)?;
                Ok(())
            }
            FaultSpec::Composite { parts } => parts.iter_mut().try_for_each(|p| p.load_files(base)),
            _ => Ok(()),
        }
    }
}

/// Parses a two-column (time, power) table separated by commas or
/// whitespace. A non-numeric first line is taken as a header.
pub fn read_fault_file(path: &Path) -> Result<Vec<(f64, f64)>, SimError> {
    let err = |reason: String| SimError::FaultFile {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    parse_fault_table(&text).map_err(err)
}

pub fn parse_fault_table(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        match parsed {
            None if out.is_empty() && lineno == 0 => continue,
            None => return Err(format!("line {}: not numeric", lineno + 1)),
            Some(v) if v.len() != 2 => {
                return Err(format!("line {}: expected 2 columns, found {}", lineno + 1, v.len()))
            }
            Some(v) => {
                if !(v[0].is_finite() && v[1].is_finite()) {
                    return Err(format!("line {}: non-finite value", lineno + 1));
                }
                if let Some(&(t_last, _)) = out.last() {
                    if v[0] <= t_last {
                        return Err(format!("line {}: time must increase", lineno + 1));
                    }
                }
                out.push((v[0], v[1]));
            }
        }
    }
    if out.is_empty() {
        return Err("no samples".into());
    }
    Ok(out)
}

/// Disturbance power at time `t`.
pub fn generate_fault(spec: &FaultSpec, t: f64) -> f64 {
    match spec {
        FaultSpec::None => 0.0,
        FaultSpec::AsymmetricChirp {
            amplitude,
            f_start,
            f_end,
            duty,
            dc_drift,
            t_on,
            t_off,
        } => {
            if t < *t_on || t > *t_off {
                return 0.0;
            }
            let tau = t - t_on;
            let span = t_off - t_on;
            let cycles = f_start * tau + (f_end - f_start) * tau * tau / (2.0 * span);
            let theta = cycles - cycles.floor();
            let wave = if theta < *duty {
                (PI * theta / duty).sin()
            } else {
                -(PI * (theta - duty) / (1.0 - duty)).sin()
            };
            amplitude * wave + dc_drift * tau
        }
        FaultSpec::Step { magnitude, t_on, t_off } => {
            if t >= *t_on && t < *t_off {
                *magnitude
            } else {
                0.0
            }
        }
        FaultSpec::Ramp {
            magnitude,
            t_on,
            t_full,
            t_off,
        } => {
            if t < *t_on || t >= *t_off {
                0.0
            } else if t >= *t_full {
                *magnitude
            } else {
                magnitude * (t - t_on) / (t_full - t_on)
            }
        }
        FaultSpec::Composite { parts } => parts.iter().map(|p| generate_fault(p, t)).sum(),
        FaultSpec::FromFile { samples, .. } => interpolate(samples, t),
    }
}

fn interpolate(samples: &[(f64, f64)], t: f64) -> f64 {
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return 0.0;
    };
    if t < first.0 || t > last.0 {
        return 0.0;
    }
    let i = samples.partition_point(|(ts, _)| *ts <= t);
    if i == samples.len() {
        return last.1;
    }
    let (t0, v0) = samples[i - 1];
    let (t1, v1) = samples[i];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Power flowing from area 1 to area 2 (p.u.).
pub fn tie_line_power(delta_phi: f64, p_hat: f64) -> f64 {
    p_hat * delta_phi.sin()
}

/// Classical RK4 over `substeps` steps of `dt` with held control inputs.
/// `fault(t, area)` is evaluated at stage times starting from `t0`.
pub fn integrate_plant(
    state: &PlantState,
    held: &[AreaInputs],
    params: &PlantParams,
    t0: f64,
    dt: f64,
    substeps: usize,
    fault: &dyn Fn(f64, usize) -> f64,
) -> Result<PlantState, f64> {
    let n = state.values().len();
    let mut x = state.values().to_vec();
    let mut inputs = held.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let eval = |t: f64, xs: &[f64], out: &mut [f64], inputs: &mut [AreaInputs]| {
        for (i, inp) in inputs.iter_mut().enumerate() {
            inp.disturbance = held[i].disturbance + fault(t, i);
        }
        plant_derivative_into(xs, inputs, params, out);
    };
    for s in 0..substeps {
        let t = t0 + s as f64 * dt;
        eval(t, &x, &mut k1, &mut inputs);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * dt * k1[j];
        }
        eval(t + 0.5 * dt, &tmp, &mut k2, &mut inputs);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * dt * k2[j];
        }
        eval(t + 0.5 * dt, &tmp, &mut k3, &mut inputs);
        for j in 0..n {
            tmp[j] = x[j] + dt * k3[j];
        }
        eval(t + dt, &tmp, &mut k4, &mut inputs);
        for j in 0..n {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if x.iter().any(|v| !(v.abs() < DIVERGENCE_LIMIT)) {
            return Err(t + dt);
        }
    }
    Ok(PlantState::from_values(state.topology(), x).expect("finite state"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MpcKind {
    Standard,
    Passivity,
    Clf,
}

impl MpcKind {
    pub const ALL: [MpcKind; 3] = [MpcKind::Standard, MpcKind::Passivity, MpcKind::Clf];

    pub fn as_str(self) -> &'static str {
        match self {
            MpcKind::Standard => "standard",
            MpcKind::Passivity => "passivity",
            MpcKind::Clf => "clf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        MpcKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Source of the terminal weight in Clf mode.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCost {
    /// Discrete Lyapunov solution on the free frequency dynamics.
    Computed,
    /// Fixed frequency block, `n_areas × n_areas` for a coordinated
    /// controller, `1×1` otherwise.
    Fixed(DenseMatrix),
}

/// Everything needed to build the MPC controllers of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSettings {
    pub kind: MpcKind,
    pub horizon: usize,
    pub coordinated: bool,
    /// State weights of the controller model (2 local, 5 coordinated).
    pub q_diag: Vec<f64>,
    /// Input weights (1 local, 2 coordinated).
    pub r_diag: Vec<f64>,
    pub terminal: TerminalCost,
    /// Frequency deviation bounds (Hz).
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub slack_weight: f64,
    pub fallback_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlScheme {
    None,
    /// Droop plus PI on ACE in every area.
    Conventional(Vec<ConventionalParams>),
    Mpc(MpcSettings),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: PlantParams,
    /// One fault per area.
    pub faults: Vec<FaultSpec>,
    pub control: ControlScheme,
    pub duration: f64,
    pub ts: f64,
    pub dt: f64,
    pub initial_state: Vec<f64>,
    /// Carried into manifests; the simulation itself draws no random numbers.
    pub seed: u64,
}

impl Scenario {
    pub fn topology(&self) -> Topology {
        self.plant.topology()
    }

    /// Number of control periods.
    pub fn n_steps(&self) -> usize {
        (self.duration / self.ts).round() as usize
    }

    pub fn substeps(&self) -> usize {
        (self.ts / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.plant.validate()?;
        let n_areas = self.plant.areas.len();
        if self.faults.len() != n_areas {
            return Err(SimError::Scenario(format!("need {n_areas} fault entries")));
        }
        for f in &self.faults {
            f.validate()?;
        }
        if !(self.ts > 0.0 && self.dt > 0.0 && self.duration > 0.0) {
            return Err(SimError::Scenario("ts, dt and duration must be positive".into()));
        }
        let sub = self.substeps();
        if sub == 0 || (sub as f64 * self.dt - self.ts).abs() > 1e-9 * self.ts {
            return Err(SimError::Scenario(format!("dt = {} must divide ts = {}", self.dt, self.ts)));
        }
        let k = self.n_steps();
        if (k as f64 * self.ts - self.duration).abs() > 1e-9 * self.duration {
            return Err(SimError::Scenario(format!(
                "duration = {} must be a multiple of ts = {}",
                self.duration, self.ts
            )));
        }
        if self.initial_state.len() != self.topology().n_states()
            || self.initial_state.iter().any(|v| !v.is_finite())
        {
            return Err(SimError::Scenario("initial_state has wrong length or non-finite entries".into()));
        }
        match &self.control {
            ControlScheme::None => {}
            ControlScheme::Conventional(ps) => {
                if ps.len() != n_areas {
                    return Err(SimError::Scenario(format!("need {n_areas} conventional parameter sets")));
                }
                for p in ps {
                    p.validate()?;
                }
            }
            ControlScheme::Mpc(s) => {
                build_controllers(&self.plant, s, self.ts)?;
            }
        }
        Ok(())
    }
}

/// Builds the MPC controllers: one per area on its local model, or one on
/// the coupled model when coordinated.
pub fn build_controllers(
    plant: &PlantParams,
    s: &MpcSettings,
    ts: f64,
) -> Result<Vec<MpcController>, SimError> {
    let coordinated = s.coordinated && plant.areas.len() == 2;
    let (n_q, n_r) = if coordinated { (5, 2) } else { (2, 1) };
    if s.q_diag.len() != n_q || s.r_diag.len() != n_r {
        return Err(SimError::Scenario(format!(
            "controller weights need {n_q} state and {n_r} input entries"
        )));
    }
    if !(s.freq_min_hz < s.freq_max_hz) {
        return Err(SimError::Scenario("freq_min_hz must be below freq_max_hz".into()));
    }
    let q = DenseMatrix::from_diagonal(&s.q_diag);
    let r = DenseMatrix::from_diagonal(&s.r_diag);

    let mode = |topology: PassivityTopology| match s.kind {
        MpcKind::Standard => MpcMode::Standard,
        MpcKind::Passivity => MpcMode::Passivity(topology),
        MpcKind::Clf => MpcMode::Clf,
    };

    if coordinated {
        let (a1, b1) = plant.areas[0];
        let (a2, b2) = plant.areas[1];
        let model = discretize(&build_two_area_coupled(&a1, &a2, &b1, &b2, &plant.tie)?, ts)?;
        let freq = [PlantState::freq_index(0), PlantState::freq_index(1)];
        let q_term = terminal_weight(&s.terminal, &model, &q, &[freq[0], freq[1], PlantState::ANGLE_INDEX], &freq)?;
        let f0 = a1.f0;
        let inf = f64::INFINITY;
        let bounds = MpcBounds {
            x_min: vec![s.freq_min_hz / f0, b1.soc_min, s.freq_min_hz / f0, b2.soc_min, -inf],
            x_max: vec![s.freq_max_hz / f0, b1.soc_max, s.freq_max_hz / f0, b2.soc_max, inf],
            u_min: vec![b1.power_min, b2.power_min],
            u_max: vec![b1.power_max, b2.power_max],
            du_min: vec![-b1.ramp_per_step, -b2.ramp_per_step],
            du_max: vec![b1.ramp_per_step, b2.ramp_per_step],
        };
        let ctrl = MpcController::new(
            mode(PassivityTopology::TwoAreaJoint),
            MpcWeights {
                q,
                r,
                q_term,
                slack_weight: s.slack_weight,
            },
            bounds,
            s.horizon,
            model,
            vec![1, 3],
            freq.to_vec(),
            s.fallback_gain,
        )?;
        return Ok(vec![ctrl]);
    }

    let topology = if plant.areas.len() == 1 {
        PassivityTopology::OneArea
    } else {
        PassivityTopology::TwoAreaLocal
    };
    plant
        .areas
        .iter()
        .map(|(area, battery)| {
            let model = discretize(&build_one_area(area, battery)?, ts)?;
            let q_term = terminal_weight(&s.terminal, &model, &q, &[0], &[0])?;
            let bounds = MpcBounds {
                x_min: vec![s.freq_min_hz / area.f0, battery.soc_min],
                x_max: vec![s.freq_max_hz / area.f0, battery.soc_max],
                u_min: vec![battery.power_min],
                u_max: vec![battery.power_max],
                du_min: vec![-battery.ramp_per_step],
                du_max: vec![battery.ramp_per_step],
            };
            Ok(MpcController::new(
                mode(topology),
                MpcWeights {
                    q: q.clone(),
                    r: r.clone(),
                    q_term,
                    slack_weight: s.slack_weight,
                },
                bounds,
                s.horizon,
                model,
                vec![1],
                vec![0],
                s.fallback_gain,
            )?)
        })
        .collect()
}

fn terminal_weight(
    terminal: &TerminalCost,
    model: &crate::grid::DiscreteModel,
    q: &DenseMatrix,
    subsystem: &[usize],
    freq: &[usize],
) -> Result<Option<DenseMatrix>, SimError> {
    match terminal {
        TerminalCost::Computed => Ok(Some(clf_terminal_cost(model, q, subsystem, freq)?)),
        TerminalCost::Fixed(block) => {
            if block.rows() != freq.len() || block.cols() != freq.len() {
                return Err(SimError::Scenario(format!(
                    "fixed terminal weight must be {0}x{0}",
                    freq.len()
                )));
            }
            let n = model.n_states();
            let mut out = DenseMatrix::zeros(n, n);
            for (bi, &i) in freq.iter().enumerate() {
                for (bj, &j) in freq.iter().enumerate() {
                    out[(i, j)] = block[(bi, bj)];
                }
            }
            Ok(Some(out))
        }
    }
}

/// Recorded closed-loop run, one entry per sample `t = k·Ts`, `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub topology: Topology,
    pub ts: f64,
    pub time: Vec<f64>,
    /// Per area, Hz.
    pub freq_hz: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    /// Battery power applied from each sample (p.u.).
    pub battery: Vec<Vec<f64>>,
    /// Secondary-control set-point applied from each sample (p.u.).
    pub generation: Vec<Vec<f64>>,
    pub fault: Vec<Vec<f64>>,
    /// Unwrapped angle difference (rad); zeros for one area.
    pub angle: Vec<f64>,
    /// Tie flow from area 1 to area 2 (p.u.).
    pub tie_power: Vec<f64>,
    /// Controller diagnostics per sample; empty inner vector without MPC.
    pub diagnostics: Vec<Vec<StepDiagnostics>>,
}

impl SimTrace {
    fn new(topology: Topology, ts: f64) -> Self {
        let a = topology.n_areas();
        Self {
            topology,
            ts,
            time: Vec::new(),
            freq_hz: vec![Vec::new(); a],
            soc: vec![Vec::new(); a],
            battery: vec![Vec::new(); a],
            generation: vec![Vec::new(); a],
            fault: vec![Vec::new(); a],
            angle: Vec::new(),
            tie_power: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn n_areas(&self) -> usize {
        self.freq_hz.len()
    }
}

enum Controllers {
    None,
    Conventional(Vec<ConventionalParams>, Vec<ConventionalState>),
    Local(Vec<MpcController>),
    Joint(MpcController),
}

pub fn run_closed_loop(scenario: &Scenario) -> Result<SimTrace, SimError> {
    run_closed_loop_with_faults(scenario, &|t, area| generate_fault(&scenario.faults[area], t))
}

/// Same as [`run_closed_loop`] with an arbitrary fault signal.
pub fn run_closed_loop_with_faults(
    scenario: &Scenario,
    fault: &dyn Fn(f64, usize) -> f64,
) -> Result<SimTrace, SimError> {
    scenario.validate()?;
    let plant = &scenario.plant;
    let topology = scenario.topology();
    let n_areas = topology.n_areas();
    let ts = scenario.ts;
    let dt = scenario.dt;
    let substeps = scenario.substeps();

    let mut controllers = match &scenario.control {
        ControlScheme::None => Controllers::None,
        ControlScheme::Conventional(ps) => {
            Controllers::Conventional(ps.clone(), vec![ConventionalState::default(); n_areas])
        }
        ControlScheme::Mpc(s) => {
            let mut list = build_controllers(plant, s, ts)?;
            if list.len() == 1 && s.coordinated && n_areas == 2 {
                Controllers::Joint(list.remove(0))
            } else {
                Controllers::Local(list)
            }
        }
    };

    let mut state = PlantState::from_values(topology, scenario.initial_state.clone())?;
    let mut trace = SimTrace::new(topology, ts);
    let k_max = scenario.n_steps();
    for k in 0..=k_max {
        let t = k as f64 * ts;
        let delta_phi = if n_areas == 2 { state.angle() } else { 0.0 };
        let tie = if n_areas == 2 {
            tie_line_power(delta_phi, plant.tie.p_hat)
        } else {
            0.0
        };

        let mut inputs = vec![AreaInputs::default(); n_areas];
        let mut diags = Vec::new();
        match &mut controllers {
            Controllers::None => {}
            Controllers::Conventional(ps, states) => {
                for i in 0..n_areas {
                    let f0 = plant.areas[i].0.f0;
                    let delta_f = f0 * state.freq(i);
                    // scheduled interchange is zero; area 1 exports the tie flow
                    let tie_dev = if n_areas == 2 {
                        if i == 0 {
                            tie
                        } else {
                            -tie
                        }
                    } else {
                        0.0
                    };
                    inputs[i].droop_gain = ps[i].droop_gain();
                    if ps[i].secondary {
                        let ace = area_control_error(delta_f, tie_dev, &ps[i]);
                        inputs[i].generation = secondary_step(&mut states[i], ace, ts, &ps[i]);
                    }
                }
            }
            Controllers::Local(list) => {
                for (i, c) in list.iter_mut().enumerate() {
                    let (u, d) = c.step(&state.local(i));
                    inputs[i].battery = u[0];
                    diags.push(d);
                }
            }
            Controllers::Joint(c) => {
                // the linear model only makes sense near the principal angle
                let mut measured = state.values().to_vec();
                measured[PlantState::ANGLE_INDEX] = wrap_angle(measured[PlantState::ANGLE_INDEX]);
                let (u, d) = c.step(&measured);
                inputs[0].battery = u[0];
                inputs[1].battery = u[1];
                diags.push(d);
            }
        }

        trace.time.push(t);
        for i in 0..n_areas {
            trace.freq_hz[i].push(plant.areas[i].0.f0 * state.freq(i));
            trace.soc[i].push(state.soc(i));
            trace.battery[i].push(inputs[i].battery);
            trace.generation[i].push(inputs[i].generation);
            trace.fault[i].push(fault(t, i));
        }
        trace.angle.push(delta_phi);
        trace.tie_power.push(tie);
        trace.diagnostics.push(diags);

        if k == k_max {
            break;
        }
        match integrate_plant(&state, &inputs, plant, t, dt, substeps, fault) {
            Ok(next) => state = next,
            Err(time) => {
                return Err(SimError::NonFiniteState {
                    time,
                    trace: Box::new(trace),
                })
            }
        }
    }
    Ok(trace)
}

/// Largest gap between the recorded state of charge and the value
/// reconstructed from the applied battery power, held over each period.
pub fn soc_audit(trace: &SimTrace, plant: &PlantParams) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, (_, battery)) in plant.areas.iter().enumerate() {
        let soc = &trace.soc[i];
        let Some(&soc0) = soc.first() else { continue };
        let mut drained = 0.0;
        for k in 0..soc.len() {
            let rebuilt = soc0 - drained / battery.capacity;
            worst = worst.max((rebuilt - soc[k]).abs());
            drained += (trace.battery[i][k] + battery.self_discharge) * trace.ts;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AreaParams, BatteryParams, TieLineParams};

    fn area() -> AreaParams {
        AreaParams {
            f0: 50.0,
            inertia: 6.0,
            base_power: 1.0,
            load_damping: 66.67,
        }
    }

    fn battery() -> BatteryParams {
        BatteryParams {
            capacity: 50.0,
            self_discharge: 0.0,
            power_min: -0.15,
            power_max: 0.15,
            soc_min: -0.75,
            soc_max: 0.75,
            ramp_per_step: 1.0,
        }
    }

    fn scenario(control: ControlScheme, faults: Vec<FaultSpec>) -> Scenario {
        let n = faults.len();
        Scenario {
            plant: PlantParams {
                areas: vec![(area(), battery()); n],
                tie: TieLineParams { p_hat: 0.2 },
            },
            faults,
            control,
            duration: 5.0,
            ts: 0.1,
            dt: 0.01,
            initial_state: vec![0.0; if n == 1 { 2 } else { 5 }],
            seed: 0,
        }
    }

    #[test]
    fn chirp_window_and_asymmetry() {
        let f = FaultSpec::reference_chirp();
        assert_eq!(generate_fault(&f, -0.1), 0.0);
        assert_eq!(generate_fault(&f, 60.5), 0.0);
        // first positive half-wave is shorter than the negative one
        let pos = (0..4000).filter(|k| generate_fault(&f, *k as f64 * 0.005) > 0.0).count();
        assert!(pos > 0);
    }

    #[test]
    fn step_and_ramp_shapes() {
        let s = FaultSpec::Step {
            magnitude: -0.05,
            t_on: 1.0,
            t_off: f64::INFINITY,
        };
        assert_eq!(generate_fault(&s, 0.5), 0.0);
        assert_eq!(generate_fault(&s, 1.0), -0.05);
        let r = FaultSpec::Ramp {
            magnitude: 0.2,
            t_on: 0.0,
            t_full: 2.0,
            t_off: 3.0,
        };
        assert!((generate_fault(&r, 1.0) - 0.1).abs() < 1e-15);
        assert_eq!(generate_fault(&r, 2.5), 0.2);
        assert_eq!(generate_fault(&r, 3.0), 0.0);
        let c = FaultSpec::Composite { parts: vec![s, r] };
        assert!((generate_fault(&c, 1.5) - (-0.05 + 0.15)).abs() < 1e-15);
    }

    #[test]
    fn fault_table_parsing() {
        let t = parse_fault_table("time,power\n0,0\n1, 0.5\n3 1.5\n").unwrap();
        assert_eq!(t, vec![(0.0, 0.0), (1.0, 0.5), (3.0, 1.5)]);
        let f = FaultSpec::FromFile {
            path: "x".into(),
            samples: t,
        };
        assert!((generate_fault(&f, 0.5) - 0.25).abs() < 1e-15);
        assert!((generate_fault(&f, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(generate_fault(&f, 3.0), 1.5);
        assert_eq!(generate_fault(&f, 3.5), 0.0);
        assert!(parse_fault_table("0,1\n1,2,3\n").is_err());
        assert!(parse_fault_table("0,1\nx,y\n").is_err());
        assert!(parse_fault_table("0,1\n0,2\n").is_err());
        assert!(parse_fault_table("").is_err());
    }

    #[test]
    fn tie_power_symmetry() {
        assert_eq!(tie_line_power(0.0, 0.2), 0.0);
        assert!((tie_line_power(PI / 2.0, 0.2) - 0.2).abs() < 1e-15);
        assert_eq!(tie_line_power(-0.3, 0.2), -tie_line_power(0.3, 0.2));
    }

    #[test]
    fn zero_scenario_stays_at_rest() {
        for control in [
            ControlScheme::None,
            ControlScheme::Mpc(MpcSettings {
                kind: MpcKind::Passivity,
                horizon: 3,
                coordinated: true,
                q_diag: vec![10.0, 0.001, 10.0, 0.001, 0.1],
                r_diag: vec![1.0, 1.0],
                terminal: TerminalCost::Computed,
                freq_min_hz: -1.5,
                freq_max_hz: 1.5,
                slack_weight: 1e6,
                fallback_gain: 1.0,
            }),
        ] {
            let trace = run_closed_loop(&scenario(control, vec![FaultSpec::None, FaultSpec::None])).unwrap();
            assert_eq!(trace.len(), 51);
            for i in 0..2 {
                assert!(trace.freq_hz[i].iter().all(|v| *v == 0.0));
                assert!(trace.battery[i].iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn bad_substep_rejected() {
        let mut s = scenario(ControlScheme::None, vec![FaultSpec::None]);
        s.dt = 0.03;
        assert!(matches!(run_closed_loop(&s), Err(SimError::Scenario(_))));
    }

    #[test]
    fn runaway_returns_partial_trace() {
        let mut s = scenario(
            ControlScheme::None,
            vec![FaultSpec::Step {
                magnitude: 1e12,
                t_on: 0.0,
                t_off: f64::INFINITY,
            }],
        );
        s.duration = 1.0;
        match run_closed_loop(&s) {
            Err(SimError::NonFiniteState { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
