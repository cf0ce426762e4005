//! Declarative scenario files, built-in presets and run manifests.
//!
//! A config is TOML. It may name a `preset`; the preset is loaded first and
//! the file's own keys are merged over it table by table (arrays are
//! replaced whole). The merged document must then specify every field, so
//! nothing affecting a run is left to code defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conventional::{droop_per_unit, natural_bias, ConventionalParams};
use crate::grid::{AreaParams, BatteryParams, ModelError, PlantParams, TieLineParams, Topology};
use crate::linalg::DenseMatrix;
use crate::metrics::SweepCell;
use crate::sim::{ControlScheme, FaultSpec, MpcKind, MpcSettings, Scenario, SimError, TerminalCost};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("{key}: {reason}")]
    Key { key: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] SimError),
}

fn key_err(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        key: key.into(),
        reason: reason.into(),
    }
}

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

pub const PRESETS: [Preset; 5] = [
    Preset {
        name: "paper-onearea",
        description: "one area, battery MPC, chirp fault",
        text: include_str!("../presets/paper-onearea.toml"),
    },
    Preset {
        name: "paper-twoarea-uncoordinated",
        description: "two areas with tie line, one MPC per area, chirp fault in area 1",
        text: include_str!("../presets/paper-twoarea-uncoordinated.toml"),
    },
    Preset {
        name: "paper-twoarea-coordinated",
        description: "two areas with tie line, one MPC on the coupled model, chirp fault in area 1",
        text: include_str!("../presets/paper-twoarea-coordinated.toml"),
    },
    Preset {
        name: "conventional-onearea-step",
        description: "one area, droop plus PI on ACE, 0.05 p.u. load step",
        text: include_str!("../presets/conventional-onearea-step.toml"),
    },
    Preset {
        name: "uncontrolled-twoarea",
        description: "two areas, load damping only, chirp fault in area 1",
        text: include_str!("../presets/uncontrolled-twoarea.toml"),
    },
];

pub fn find_preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlChoice {
    None,
    Conventional,
    Mpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalChoice {
    /// Lyapunov solution on the controller model.
    Computed,
    /// The fixed reference weights below.
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasRule {
    /// `1/D_l + 1/S` in the per-unit frame.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BiasSetting {
    Value(f64),
    Rule(BiasRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Simulated time (s).
    pub duration: f64,
    /// Control period (s).
    pub ts: f64,
    /// Integrator step (s).
    pub dt: f64,
    pub seed: u64,
    /// Plant state at t = 0 in model units.
    pub initial_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    pub mode: MpcKind,
    pub horizon: usize,
    pub coordinated: bool,
    /// Per-area controller weights.
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    /// Weights of the coordinated controller.
    pub q_diag_coordinated: Vec<f64>,
    pub r_diag_coordinated: Vec<f64>,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub slack_weight: f64,
    /// Gain of the proportional fallback law (p.u. per normalized unit).
    pub fallback_gain: f64,
    pub terminal: TerminalChoice,
    /// Reference terminal weight of a per-area controller.
    pub q_term_fixture: f64,
    /// Reference frequency block of the coordinated terminal weight.
    pub q_term_fixture_coordinated: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionalConfig {
    /// Droop as a frequency change per power change (mHz per MW).
    pub droop_mhz: f64,
    pub droop_mw: f64,
    /// Power base of the area (MW).
    pub base_mw: f64,
    pub t_n: f64,
    pub c_p: f64,
    pub bias: BiasSetting,
    /// Printed reference value, not used by the controller.
    pub bias_fixture: f64,
    pub secondary_limit: f64,
    pub secondary: bool,
}

impl ConventionalConfig {
    /// Droop S in Hz per p.u.
    pub fn droop_pu(&self) -> f64 {
        droop_per_unit(self.droop_mhz * 1e-3, self.droop_mw, self.base_mw)
    }

    pub fn params(&self, area: &AreaParams) -> ConventionalParams {
        let droop = self.droop_pu();
        ConventionalParams {
            droop,
            t_n: self.t_n,
            c_p: self.c_p,
            bias: match self.bias {
                BiasSetting::Value(b) => b,
                BiasSetting::Rule(BiasRule::Natural) => natural_bias(area.load_damping, droop),
            },
            secondary_limit: self.secondary_limit,
            secondary: self.secondary,
        }
    }
}

/// Fully resolved scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub description: String,
    pub topology: Topology,
    pub control: ControlChoice,
    pub simulation: SimulationConfig,
    /// Shared by every area.
    pub area: AreaParams,
    pub battery: BatteryParams,
    pub tie: TieLineParams,
    /// One entry per area.
    pub faults: Vec<FaultSpec>,
    pub mpc: MpcConfig,
    pub conventional: ConventionalConfig,
    /// Written into manifests; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<toml::Table>,
}

/// Parses a config, resolving a preset reference. Fault file paths are
/// taken relative to `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ConfigError> {
    let user: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut merged = match user.get("preset") {
        None => toml::Table::new(),
        Some(toml::Value::String(name)) => {
            let preset = find_preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.clone()))?;
            preset
                .text
                .parse()
                .map_err(|e: toml::de::Error| ConfigError::Syntax(format!("preset {name}: {e}")))?
        }
        Some(_) => return Err(key_err("preset", "must be a string")),
    };
    let mut overrides = user;
    overrides.remove("preset");
    merge(&mut merged, overrides);

    let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(toml::Value::Table(merged)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let key = unknown_field(&inner)
            .map(|f| if path == "." { f.to_string() } else { format!("{path}.{f}") })
            .unwrap_or(path);
        let location = locate(text, &key).map(|l| format!(" (line {l})")).unwrap_or_default();
        key_err(format!("{key}{location}"), inner.trim().to_string())
    })?;
    for f in &mut cfg.faults {
        absolutize(f, base_dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The preset a config text refers to, if any.
pub fn preset_name(text: &str) -> Option<String> {
    let t: toml::Table = text.parse().ok()?;
    t.get("preset")?.as_str().map(String::from)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn unknown_field(msg: &str) -> Option<&str> {
    let rest = msg.split("unknown field `").nth(1)?;
    rest.split('`').next()
}

/// 1-based line of the first assignment or table header for the last
/// segment of `key`.
fn locate(text: &str, key: &str) -> Option<usize> {
    let last = key.rsplit('.').next()?.split('[').next()?;
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(last).is_some_and(|r| r.trim_start().starts_with('='))
            || (l.starts_with('[') && l.trim_matches(|c| c == '[' || c == ']').ends_with(last))
    })
    .map(|i| i + 1)
}

fn absolutize(f: &mut FaultSpec, base: &Path) {
    match f {
        FaultSpec::FromFile { path, .. } if path.is_relative() => {
            let joined = base.join(&*path);
            *path = fs::canonicalize(&joined).unwrap_or(joined);
        }
        FaultSpec::Composite { parts } => parts.iter_mut().for_each(|p| absolutize(p, base)),
        _ => {}
    }
}

fn model_key(section: &str, e: ModelError) -> ConfigError {
    match e {
        ModelError::InvalidParameter { name, reason } => {
            let key = name.split('/').map(|n| format!("{section}.{n}")).collect::<Vec<_>>().join(", ");
            key_err(key, reason)
        }
        other => key_err(section, other.to_string()),
    }
}

impl ScenarioConfig {
    pub fn n_areas(&self) -> usize {
        self.topology.n_areas()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.area.validate().map_err(|e| model_key("area", e))?;
        self.battery.validate().map_err(|e| model_key("battery", e))?;
        self.tie.validate().map_err(|e| model_key("tie", e))?;
        if self.faults.len() != self.n_areas() {
            return Err(key_err(
                "faults",
                format!("need one entry per area ({}), got {}", self.n_areas(), self.faults.len()),
            ));
        }
        let m = &self.mpc;
        if !(2..=50).contains(&m.horizon) {
            return Err(key_err("mpc.horizon", format!("must lie in 2..=50, got {}", m.horizon)));
        }
        if m.coordinated && self.topology == Topology::OneArea {
            return Err(key_err("mpc.coordinated", "needs topology = \"two-area\""));
        }
        if !(m.freq_min_hz < m.freq_max_hz) {
            return Err(key_err(
                "mpc.freq_min_hz, mpc.freq_max_hz",
                format!("need freq_min_hz < freq_max_hz, got [{}, {}]", m.freq_min_hz, m.freq_max_hz),
            ));
        }
        if m.q_term_fixture_coordinated.len() != 2 || m.q_term_fixture_coordinated.iter().any(|r| r.len() != 2) {
            return Err(key_err("mpc.q_term_fixture_coordinated", "must be a 2×2 array"));
        }
        let c = &self.conventional;
        for (k, v) in [("droop_mhz", c.droop_mhz), ("droop_mw", c.droop_mw), ("base_mw", c.base_mw)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(key_err(format!("conventional.{k}"), format!("must be positive, got {v}")));
            }
        }
        c.params(&self.area).validate().map_err(|e| model_key("conventional", e))?;
        self.to_scenario()?.validate()?;
        Ok(())
    }

    pub fn plant(&self) -> PlantParams {
        PlantParams {
            areas: vec![(self.area, self.battery); self.n_areas()],
            tie: self.tie,
        }
    }

    pub fn mpc_settings(&self) -> MpcSettings {
        let m = &self.mpc;
        let (q, r) = if m.coordinated {
            (&m.q_diag_coordinated, &m.r_diag_coordinated)
        } else {
            (&m.q_diag, &m.r_diag)
        };
        let terminal = match m.terminal {
            TerminalChoice::Computed => TerminalCost::Computed,
            TerminalChoice::Fixture if m.coordinated => {
                TerminalCost::Fixed(DenseMatrix::from_rows(&m.q_term_fixture_coordinated).expect("validated 2x2"))
            }
            TerminalChoice::Fixture => TerminalCost::Fixed(DenseMatrix::from_diagonal(&[m.q_term_fixture])),
        };
        MpcSettings {
            kind: m.mode,
            horizon: m.horizon,
            coordinated: m.coordinated,
            q_diag: q.clone(),
            r_diag: r.clone(),
            terminal,
            freq_min_hz: m.freq_min_hz,
            freq_max_hz: m.freq_max_hz,
            slack_weight: m.slack_weight,
            fallback_gain: m.fallback_gain,
        }
    }

    /// Builds the runnable scenario. Fault files are read here.
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let mut faults = self.faults.clone();
        for f in &mut faults {
            f.load_files(Path::new("."))?;
        }
        let control = match self.control {
            ControlChoice::None => ControlScheme::None,
            ControlChoice::Conventional => {
                ControlScheme::Conventional(vec![self.conventional.params(&self.area); self.n_areas()])
            }
            ControlChoice::Mpc => ControlScheme::Mpc(self.mpc_settings()),
        };
        Ok(Scenario {
            plant: self.plant(),
            faults,
            control,
            duration: self.simulation.duration,
            ts: self.simulation.ts,
            dt: self.simulation.dt,
            initial_state: self.simulation.initial_state.clone(),
            seed: self.simulation.seed,
        })
    }

    /// Copy set up for one sweep cell.
    pub fn for_cell(&self, cell: &SweepCell) -> ScenarioConfig {
        let mut c = self.clone();
        c.control = ControlChoice::Mpc;
        c.mpc.mode = cell.kind;
        c.mpc.horizon = cell.horizon;
        c.mpc.coordinated = cell.coordinated;
        c
    }

    pub fn cell(&self) -> SweepCell {
        SweepCell {
            topology: self.topology,
            coordinated: self.mpc.coordinated,
            kind: self.mpc.mode,
            horizon: self.mpc.horizon,
        }
    }

    /// The resolved config plus an `[info]` table with the software version,
    /// the preset used, converted quantities and reporting conventions.
    /// Feeding it back through [`parse_config`] gives the same scenario.
    pub fn manifest(&self, preset: Option<&str>, command: &str) -> String {
        let mut info = toml::Table::new();
        let mut put = |k: &str, v: toml::Value| {
            info.insert(k.to_string(), v);
        };
        put("software", format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")).into());
        put("command", command.into());
        if let Some(p) = preset {
            put("preset", p.into());
        }
        put("a_freq_per_s", self.area.a_freq().into());
        put("b_norm_per_pu_s", self.area.b_norm().into());
        put("droop_hz_per_pu", self.conventional.droop_pu().into());
        put("bias_pu_per_hz", self.conventional.params(&self.area).bias.into());
        put("freq_min_normalized", (self.mpc.freq_min_hz / self.area.f0).into());
        put("freq_max_normalized", (self.mpc.freq_max_hz / self.area.f0).into());
        put("averages", "mean of absolute values over all samples".into());
        put("angle_metric", "unwrapped angle difference".into());
        let mut m = self.clone();
        m.info = Some(info);
        toml::to_string(&m).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        parse_config(text, Path::new("."))
    }

    #[test]
    fn all_presets_parse() {
        for p in &PRESETS {
            let c = parse(&format!("preset = \"{}\"", p.name)).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            c.to_scenario().unwrap();
        }
    }

    #[test]
    fn onearea_preset_values() {
        let c = parse("preset = \"paper-onearea\"").unwrap();
        let s = c.to_scenario().unwrap();
        assert_eq!(s.plant.areas.len(), 1);
        assert_eq!(s.ts, 0.1);
        let ControlScheme::Mpc(m) = &s.control else { panic!() };
        assert_eq!(m.q_diag, vec![10.0, 0.001]);
        assert_eq!(m.r_diag, vec![1.0]);
        assert_eq!((m.freq_min_hz, m.freq_max_hz), (-1.5, 1.5));
        let b = s.plant.areas[0].1;
        assert_eq!((b.soc_min, b.soc_max), (-0.75, 0.75));
        assert_eq!((b.power_min, b.power_max), (-0.15, 0.15));
        assert_eq!(c.mpc.q_term_fixture, 40005.0);
    }

    #[test]
    fn coordinated_weights() {
        let c = parse("preset = \"paper-twoarea-coordinated\"").unwrap();
        let m = c.mpc_settings();
        assert_eq!(m.q_diag, vec![10.0, 0.001, 10.0, 0.001, 0.1]);
        assert_eq!(m.r_diag, vec![1.0, 1.0]);
        assert_eq!(c.tie.p_hat, 0.2);
    }

    #[test]
    fn override_keeps_rest() {
        let base = parse("preset = \"paper-onearea\"").unwrap();
        let c = parse("preset = \"paper-onearea\"\n[mpc]\nhorizon = 7\n").unwrap();
        assert_eq!(c.mpc.horizon, 7);
        let mut expect = base.clone();
        expect.mpc.horizon = 7;
        assert_eq!(c, expect);
    }

    #[test]
    fn swapped_power_bounds_name_both_keys() {
        let e = parse("preset = \"paper-onearea\"\n[battery]\nu_min = 0.1\nu_max = -0.1\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("u_min") && msg.contains("u_max"), "{msg}");
    }

    #[test]
    fn unknown_key_is_located() {
        let e = parse("preset = \"paper-onearea\"\n\n[mpc]\nhorizn = 7\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("mpc.horizn") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn missing_fields_without_preset() {
        assert!(parse("[mpc]\nhorizon = 7\n").is_err());
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(parse("preset = \"nope\""), Err(ConfigError::UnknownPreset(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let c = parse("preset = \"paper-twoarea-uncoordinated\"\n[mpc]\nhorizon = 4\n").unwrap();
        let text = c.manifest(Some("paper-twoarea-uncoordinated"), "test");
        let mut back = parse(&text).unwrap();
        assert!(back.info.is_some());
        back.info = None;
        assert_eq!(back, c);
    }

    #[test]
    fn derived_conventional_values() {
        let c = parse("preset = \"conventional-onearea-step\"").unwrap();
        let p = c.conventional.params(&c.area);
        assert!((p.droop - 0.2).abs() < 1e-15);
        assert!((p.bias - (1.0 / 66.67 + 5.0)).abs() < 1e-12);
        assert_eq!(c.conventional.bias_fixture, 20550.0);
    }
}
