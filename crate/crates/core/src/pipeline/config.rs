//! Scenario configuration: one TOML or JSON document, every field
//! defaulted, validated as a whole so that all problems surface at once.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::steady::{ModeThresholds, SolverConfig};
use crate::synth::design::{default_bounds, DesignObjective};
use crate::synth::msnc::MsncComponents;
use crate::synth::{GaConfig, MatchingNetwork, StubTopology, SubstrateParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Fig4,
    Fig7,
    Fig9Impedances,
    Fig10Sparams,
    Fig13Efficiency,
    Fig14Multitone,
    Fig15Phase,
    DesignFlow,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Fig4,
        Scenario::Fig7,
        Scenario::Fig9Impedances,
        Scenario::Fig10Sparams,
        Scenario::Fig13Efficiency,
        Scenario::Fig14Multitone,
        Scenario::Fig15Phase,
        Scenario::DesignFlow,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Fig4 => "fig4",
            Scenario::Fig7 => "fig7",
            Scenario::Fig9Impedances => "fig9-impedances",
            Scenario::Fig10Sparams => "fig10-sparams",
            Scenario::Fig13Efficiency => "fig13-efficiency",
            Scenario::Fig14Multitone => "fig14-multitone",
            Scenario::Fig15Phase => "fig15-phase",
            Scenario::DesignFlow => "design-flow",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .iter()
            .find(|x| x.as_str() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = Scenario::ALL.iter().map(|x| x.as_str()).collect();
                format!(
                    "unknown scenario '{s}' (expected one of: {})",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Inclusive arithmetic grid `start, start + step, …, stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl StepGrid {
    pub fn values(&self) -> Vec<f64> {
        if !(self.step > 0.0) || self.stop < self.start {
            return vec![];
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        // Rounded to 12 significant digits so that 0.1-type steps print
        // cleanly and identically on every platform.
        (0..n)
            .map(|i| {
                let v = self.start + i as f64 * self.step;
                format!("{v:.12e}").parse().unwrap_or(v)
            })
            .collect()
    }

    fn validate(&self, path: &str, e: &mut Vec<String>) {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            e.push(format!("{path}: bounds must be finite"));
        } else if !(self.step > 0.0) {
            e.push(format!("{path}.step: must be positive"));
        } else if self.stop < self.start {
            e.push(format!("{path}: grid is empty (stop < start)"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencySpec {
    /// Operating frequency, Hz.
    pub f0_hz: f64,
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl Default for FrequencySpec {
    fn default() -> Self {
        Self {
            f0_hz: 680e6,
            start_hz: 550e6,
            stop_hz: 950e6,
            points: 101,
        }
    }
}

impl FrequencySpec {
    pub fn values(&self) -> Vec<f64> {
        crate::netalg::FrequencyGrid {
            start_hz: self.start_hz,
            stop_hz: self.stop_hz,
            points: self.points,
        }
        .values()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultitoneSpec {
    pub spacing_hz: f64,
    pub tone_counts: Vec<usize>,
    /// Total input power levels, W.
    pub p_grid_w: Vec<f64>,
    pub phase_offsets_deg: Vec<f64>,
    pub phase_tones: usize,
    pub phase_power_w: f64,
    /// Time steps per period of the highest tone.
    pub samples_per_period: usize,
}

impl Default for MultitoneSpec {
    fn default() -> Self {
        Self {
            spacing_hz: 1e6,
            tone_counts: vec![1, 3, 5],
            p_grid_w: vec![
                1e-5, 2e-5, 4e-5, 6e-5, 8e-5, 1e-4, 1.3e-4, 1.6e-4, 2e-4, 2.5e-4, 3e-4, 4e-4,
            ],
            phase_offsets_deg: vec![0.0, 22.5, 45.0, 67.5, 90.0],
            phase_tones: 3,
            phase_power_w: 1e-4,
            samples_per_period: 32,
        }
    }
}

/// Geometry produced by the bundled synthesis run; the default topology of
/// every full-circuit scenario.
pub fn designed_topology() -> StubTopology {
    StubTopology {
        mn1: MatchingNetwork {
            w_mm: 1.4196,
            l_mm: 50.7254,
            r1_mm: 12.5,
            r2_mm: 28.0256,
            alpha1_deg: 48.9568,
            alpha2_deg: 53.9096,
        },
        mn2: MatchingNetwork {
            w_mm: 1.1524,
            l_mm: 53.2547,
            r1_mm: 30.3231,
            r2_mm: 15.1053,
            alpha1_deg: 73.3427,
            alpha2_deg: 1.7778,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub seed: u64,
    pub jobs: usize,
    pub output_dir: String,
    pub format: OutputFormat,
    pub frequency: FrequencySpec,
    /// Input power grid of power sweeps, dBm.
    pub power_dbm: StepGrid,
    pub k_grid: StepGrid,
    /// Diode drive grid for large-signal extraction, dBm.
    pub diode_drive_dbm: StepGrid,
    /// Representative drive per band for impedance and S-parameter plots.
    pub drives_dbm: Vec<f64>,
    pub components: MsncComponents,
    pub thresholds: ModeThresholds,
    pub substrate: SubstrateParams,
    pub topology: StubTopology,
    pub design: DesignObjective,
    pub ga: GaConfig,
    pub solver: SolverConfig,
    pub multitone: MultitoneSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: "design-flow".into(),
            seed: 1,
            jobs: 1,
            output_dir: "out".into(),
            format: OutputFormat::Csv,
            frequency: FrequencySpec::default(),
            power_dbm: StepGrid {
                start: -50.0,
                stop: 15.0,
                step: 1.0,
            },
            k_grid: StepGrid {
                start: 0.02,
                stop: 1.0,
                step: 0.02,
            },
            diode_drive_dbm: StepGrid {
                start: -40.0,
                stop: 20.0,
                step: 2.0,
            },
            drives_dbm: vec![-40.0, -10.0, 10.0],
            components: MsncComponents::default(),
            thresholds: ModeThresholds::default(),
            substrate: SubstrateParams::default(),
            topology: designed_topology(),
            design: DesignObjective::default(),
            ga: GaConfig {
                bounds: default_bounds(),
                ..GaConfig::default()
            },
            solver: SolverConfig {
                samples_per_period: 128,
                ..SolverConfig::default()
            },
            multitone: MultitoneSpec::default(),
        }
    }
}

fn prefixed(e: &mut Vec<String>, prefix: &str, msgs: Vec<String>) {
    e.extend(msgs.into_iter().map(|m| format!("{prefix}.{m}")));
}

fn check_sorted(e: &mut Vec<String>, path: &str, v: &[f64]) {
    if v.is_empty() {
        e.push(format!("{path}: must not be empty"));
    } else if v.windows(2).any(|w| !(w[0] < w[1])) {
        e.push(format!("{path}: must be strictly increasing"));
    }
}

impl ScenarioConfig {
    pub fn scenario_kind(&self) -> Result<Scenario, String> {
        self.scenario.parse()
    }

    /// Every violated constraint, each naming its field path.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if let Err(m) = self.scenario_kind() {
            e.push(format!("scenario: {m}"));
        }
        if self.jobs == 0 {
            e.push("jobs: must be positive".into());
        }
        if self.output_dir.is_empty() {
            e.push("output_dir: must not be empty".into());
        }
        let f = &self.frequency;
        if !(f.f0_hz > 0.0) {
            e.push("frequency.f0_hz: must be positive".into());
        }
        if !(f.start_hz > 0.0 && f.stop_hz >= f.start_hz) {
            e.push("frequency: need 0 < start_hz <= stop_hz".into());
        }
        if f.points == 0 {
            e.push("frequency.points: must be positive".into());
        }
        self.power_dbm.validate("power_dbm", &mut e);
        if self.power_dbm.start < -50.0 || self.power_dbm.stop > 20.0 {
            e.push("power_dbm: must lie within [-50, 20] dBm".into());
        }
        self.k_grid.validate("k_grid", &mut e);
        if self.k_grid.start <= 0.0 || self.k_grid.stop > 1.0 {
            e.push("k_grid: must lie within (0, 1]".into());
        }
        self.diode_drive_dbm.validate("diode_drive_dbm", &mut e);
        check_sorted(&mut e, "drives_dbm", &self.drives_dbm);
        prefixed(&mut e, "components", self.components.validate());
        prefixed(&mut e, "thresholds", self.thresholds.validate());
        prefixed(&mut e, "substrate", self.substrate.validate());
        prefixed(&mut e, "topology.mn1", self.topology.mn1.validate());
        prefixed(&mut e, "topology.mn2", self.topology.mn2.validate());
        prefixed(&mut e, "design", self.design.validate(&self.thresholds));
        prefixed(&mut e, "ga", self.ga.validate());
        if self.ga.bounds.len() != 12 {
            e.push("ga.bounds: must have 12 entries".into());
        }
        prefixed(&mut e, "solver", self.solver.validate());
        let m = &self.multitone;
        if !(m.spacing_hz > 0.0) {
            e.push("multitone.spacing_hz: must be positive".into());
        }
        if m.tone_counts.is_empty() || m.tone_counts.iter().any(|n| !matches!(n, 1 | 3 | 5)) {
            e.push("multitone.tone_counts: must be a non-empty subset of {1, 3, 5}".into());
        }
        check_sorted(&mut e, "multitone.p_grid_w", &m.p_grid_w);
        if m.p_grid_w.iter().any(|p| !(*p > 0.0)) {
            e.push("multitone.p_grid_w: powers must be positive".into());
        }
        check_sorted(&mut e, "multitone.phase_offsets_deg", &m.phase_offsets_deg);
        if !matches!(m.phase_tones, 1 | 3 | 5) {
            e.push("multitone.phase_tones: must be 1, 3 or 5".into());
        }
        if !(m.phase_power_w > 0.0) {
            e.push("multitone.phase_power_w: must be positive".into());
        }
        if m.samples_per_period < 8 {
            e.push("multitone.samples_per_period: must be at least 8".into());
        }
        e
    }

    pub fn from_toml_str(s: &str) -> Result<Self, Vec<String>> {
        let de = toml::Deserializer::new(s);
        serde_path_to_error::deserialize(de)
            .map_err(|err| vec![format!("{}: {}", err.path(), err.inner().message())])
    }

    pub fn from_json_str(s: &str) -> Result<Self, Vec<String>> {
        let mut de = serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(&mut de)
            .map_err(|err| vec![format!("{}: {}", err.path(), err.inner())])
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises")
    }
}

/// Reads and validates a configuration file (`.json`, otherwise TOML).
pub fn validate_config(path: &Path) -> Result<ScenarioConfig, Vec<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    let is_json = path
        .extension()
        .is_some_and(|x| x.eq_ignore_ascii_case("json"));
    let cfg = if is_json {
        ScenarioConfig::from_json_str(&text)?
    } else {
        ScenarioConfig::from_toml_str(&text)?
    };
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(errs)
    }
}
