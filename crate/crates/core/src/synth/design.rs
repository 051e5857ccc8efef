//! Matching-network synthesis by simulation in the loop.
//!
//! Every candidate geometry is scored by simulating one rectifying branch
//! to periodic steady state at each drive of the design grid. The branch
//! input impedance plays the role of both mode impedances: the rectifier
//! capacitor shorts the symmetry-plane node at RF, so even and odd
//! terminations coincide there. Each drive level has a target coupling
//! state — matched (`k_high`) inside the power-saving band, reflective
//! (`k_low`) outside it — taken from the coupler's `k ↦ (Z_Ae, Z_Ao)`
//! solution and compared in reflection magnitude.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ga::{ga_optimize, GaConfig, GaGeneration};
use super::microstrip::SubstrateParams;
use super::msnc::{branch_netlist, MsncComponents};
use super::stubs::StubTopology;
use super::SynthError;
use crate::blc::{self, BlcSpec};
use crate::netalg::mag_db;
use crate::steady::{
    classify_mode, integrate_to_steady, CircuitNetlist, ExcitationSpec, ModeThresholds,
    OperatingMode, SolverConfig,
};

/// Limitation of the matching-network model, carried in every report.
pub const FIDELITY_NOTE: &str =
    "Feed line is the only series element between the two radial stubs; \
attachment offsets and interconnects are not modelled. Stubs use a stepped-width quasi-TEM model \
without dispersion, radiation or loss.";

/// What the in-loop simulations are scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignObjective {
    /// Coupler input power levels, dBm.
    pub drives_dbm: Vec<f64>,
    /// Coupling target inside the power-saving band.
    pub k_high: f64,
    /// Coupling target in the receive and transmit bands.
    pub k_low: f64,
    pub w_impedance: f64,
    /// Relative weight of each operating band in the impedance term.
    pub band_weights: BandWeights,
    pub w_s11: f64,
    /// Weight of the efficiency shortfall `(η_goal − η)²` at power-saving
    /// drives.
    pub w_efficiency: f64,
    pub efficiency_goal: f64,
    pub s11_goal_db: f64,
    /// Time resolution of the in-loop branch simulations.
    pub samples_per_period: usize,
}

impl Default for DesignObjective {
    fn default() -> Self {
        Self {
            drives_dbm: vec![-40.0, -10.0, 10.0],
            k_high: 1.0,
            k_low: 0.1,
            w_impedance: 1.0,
            band_weights: BandWeights::default(),
            w_s11: 1.0,
            w_efficiency: 10.0,
            efficiency_goal: 0.55,
            s11_goal_db: -10.0,
            samples_per_period: 64,
        }
    }
}

impl DesignObjective {
    pub fn validate(&self, th: &ModeThresholds) -> Vec<String> {
        let mut e = Vec::new();
        if self.drives_dbm.is_empty() {
            e.push("drives_dbm must not be empty".into());
        } else {
            let modes: Vec<OperatingMode> = self
                .drives_dbm
                .iter()
                .map(|p| classify_mode(*p, th))
                .collect();
            for m in [
                OperatingMode::Rx,
                OperatingMode::PowerSaving,
                OperatingMode::Tx,
            ] {
                if !modes.contains(&m) {
                    e.push(format!("drives_dbm must include a {m:?} level"));
                }
            }
        }
        for (n, k) in [("k_high", self.k_high), ("k_low", self.k_low)] {
            if !(k > 0.0 && k <= 1.0) {
                e.push(format!("{n} must lie in (0, 1]"));
            }
        }
        let b = &self.band_weights;
        for (n, w) in [
            ("w_impedance", self.w_impedance),
            ("w_s11", self.w_s11),
            ("w_efficiency", self.w_efficiency),
            ("band_weights.rx", b.rx),
            ("band_weights.power_saving", b.power_saving),
            ("band_weights.tx", b.tx),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                e.push(format!("{n} must be non-negative"));
            }
        }
        if self.samples_per_period < 16 {
            e.push("samples_per_period must be at least 16".into());
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub freq: f64,
    pub objective: DesignObjective,
    pub thresholds: ModeThresholds,
    pub ga: GaConfig,
    /// Layouts placed into the initial population.
    pub seeds: Vec<StubTopology>,
    pub components: MsncComponents,
    pub substrate: SubstrateParams,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandWeights {
    pub rx: f64,
    pub power_saving: f64,
    pub tx: f64,
}

impl Default for BandWeights {
    /// Reflection at high drive is the hardest target: the limiter bank
    /// clamps and dissipates, and only a high impedance level at its node
    /// keeps that loss small. Matching at mid drive is traded against it.
    fn default() -> Self {
        Self {
            rx: 1.0,
            power_saving: 0.1,
            tx: 10.0,
        }
    }
}

impl BandWeights {
    fn of(&self, mode: OperatingMode) -> f64 {
        match mode {
            OperatingMode::Rx => self.rx,
            OperatingMode::PowerSaving => self.power_saving,
            OperatingMode::Transition | OperatingMode::Tx => self.tx,
        }
    }
}

/// Search box in mm / degrees, in [`StubTopology::to_vec`] order.
pub fn default_bounds() -> Vec<[f64; 2]> {
    let mn = [
        [0.3, 6.0],
        [1.0, 140.0],
        [0.0, 50.0],
        [0.0, 50.0],
        [0.0, 120.0],
        [0.0, 120.0],
    ];
    mn.iter().chain(mn.iter()).copied().collect()
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            freq: 680e6,
            objective: DesignObjective::default(),
            thresholds: ModeThresholds::default(),
            ga: GaConfig {
                bounds: default_bounds(),
                ..GaConfig::default()
            },
            seeds: vec![StubTopology::published_seed()],
            components: MsncComponents::default(),
            substrate: SubstrateParams::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if !(self.freq > 0.0) {
            e.push("freq must be positive".into());
        }
        e.extend(
            self.objective
                .validate(&self.thresholds)
                .into_iter()
                .map(|m| format!("objective.{m}")),
        );
        if self.ga.bounds.len() != 12 {
            e.push("ga.bounds must have 12 entries".into());
        }
        e.extend(self.ga.validate().into_iter().map(|m| format!("ga.{m}")));
        e.extend(
            self.components
                .validate()
                .into_iter()
                .map(|m| format!("components.{m}")),
        );
        e.extend(
            self.substrate
                .validate()
                .into_iter()
                .map(|m| format!("substrate.{m}")),
        );
        e.extend(
            self.thresholds
                .validate()
                .into_iter()
                .map(|m| format!("thresholds.{m}")),
        );
        for (i, t) in self.seeds.iter().enumerate() {
            for m in t.mn1.validate() {
                e.push(format!("seeds[{i}].mn1.{m}"));
            }
            for m in t.mn2.validate() {
                e.push(format!("seeds[{i}].mn2.{m}"));
            }
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveEval {
    pub drive_dbm: f64,
    pub mode: OperatingMode,
    pub k_target: f64,
    pub gamma_target: f64,
    /// Large-signal input impedance of one branch.
    pub z_branch: Complex64,
    pub gamma_mag: f64,
    /// Input reflection of the complete circuit, dB.
    pub s11_db: f64,
    /// Transmission to the transceiver port, dB.
    pub s21_db: f64,
    /// DC power of both branches, W.
    pub p_dc_w: f64,
    /// DC power over available input power.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub topology: StubTopology,
    pub best_cost: f64,
    pub seed_cost: Option<f64>,
    pub evaluations: usize,
    /// Every drive meets the S11 goal.
    pub goal_met: bool,
    pub drives: Vec<DriveEval>,
    pub history: Vec<GaGeneration>,
    pub fidelity_note: String,
}

fn gamma(z: Complex64, z0: f64) -> Complex64 {
    (z - z0) / (z + z0)
}

/// Reflection magnitude of the coupler's mode impedances for coupling `k`.
fn gamma_target(k: f64, spec: &BlcSpec) -> Result<f64, SynthError> {
    let sol = blc::solve_za_for_k(k, spec).map_err(|e| SynthError::OutOfRange(e.to_string()))?;
    let g = 0.5 * (gamma(sol.z_ae, spec.z0).norm() + gamma(sol.z_ao, spec.z0).norm());
    Ok(g)
}

/// Simulates every drive for one geometry.
pub fn evaluate_design(
    topo: &StubTopology,
    cfg: &DesignConfig,
) -> Result<Vec<DriveEval>, SynthError> {
    let net = branch_netlist(
        topo,
        &cfg.substrate,
        &cfg.components,
        cfg.freq,
        cfg.objective.samples_per_period,
    )?;
    evaluate_branch(&net, cfg)
}

/// Simulates every drive for a prepared single-branch netlist.
pub fn evaluate_branch(
    net: &CircuitNetlist,
    cfg: &DesignConfig,
) -> Result<Vec<DriveEval>, SynthError> {
    let comp = &cfg.components;
    let spec = BlcSpec {
        z0: comp.z0,
        freq_design: comp.f_design,
        z_source: comp.z0,
    };
    let solver = SolverConfig {
        samples_per_period: cfg.objective.samples_per_period,
        jobs: 1,
        ..cfg.solver.clone()
    };
    let g_high = gamma_target(cfg.objective.k_high, &spec)?;
    let g_low = gamma_target(cfg.objective.k_low, &spec)?;
    cfg.objective
        .drives_dbm
        .iter()
        .map(|&p| {
            let mode = classify_mode(p, &cfg.thresholds);
            let (k, gt) = if mode == OperatingMode::PowerSaving {
                (cfg.objective.k_high, g_high)
            } else {
                (cfg.objective.k_low, g_low)
            };
            // The coupler splits the input evenly between the branches.
            let exc = ExcitationSpec::single(cfg.freq, p - 10.0 * 2f64.log10());
            let exc = ExcitationSpec {
                z_source: comp.z0,
                ..exc
            };
            let res = integrate_to_steady(net, &exc, &solver)?;
            let ph = res
                .port_phasor("1", cfg.freq)
                .ok_or(SynthError::OutOfRange("missing port phasor".into()))?;
            let z = ph.v / ph.i;
            let (_, amps) =
                blc::forward(&spec, z, z).map_err(|e| SynthError::OutOfRange(e.to_string()))?;
            Ok(DriveEval {
                drive_dbm: p,
                mode,
                k_target: k,
                gamma_target: gt,
                z_branch: z,
                gamma_mag: gamma(z, comp.z0).norm(),
                s11_db: mag_db(amps.a1),
                s21_db: mag_db(amps.a4),
                p_dc_w: 2.0 * res.p_dc,
                efficiency: res.p_dc / res.p_available,
            })
        })
        .collect()
}

/// Weighted impedance-target distance, S11 shortfall and, inside the
/// power-saving band, efficiency shortfall.
pub fn design_cost(evals: &[DriveEval], cfg: &DesignConfig) -> f64 {
    evals
        .iter()
        .map(|d| {
            let miss = if d.mode == OperatingMode::PowerSaving {
                d.gamma_mag - d.gamma_target
            } else {
                // Reflecting more than the target is harmless.
                (d.gamma_target - d.gamma_mag).max(0.0)
            };
            let s11 = ((d.s11_db - cfg.objective.s11_goal_db) / 10.0).max(0.0);
            let loss = if d.mode == OperatingMode::PowerSaving {
                (cfg.objective.efficiency_goal - d.efficiency).max(0.0)
            } else {
                0.0
            };
            cfg.objective.w_impedance * cfg.objective.band_weights.of(d.mode) * miss * miss
                + cfg.objective.w_s11 * s11 * s11
                + cfg.objective.w_efficiency * loss * loss
        })
        .sum()
}

/// Cost of a raw parameter vector; infeasible geometries and failed
/// simulations cost infinity.
pub fn objective(params: &[f64], cfg: &DesignConfig) -> f64 {
    let topo = StubTopology::from_slice(params);
    match evaluate_design(&topo, cfg) {
        Ok(e) => design_cost(&e, cfg),
        Err(_) => f64::INFINITY,
    }
}

pub fn design_matching_networks(cfg: &DesignConfig) -> Result<DesignReport, SynthError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(SynthError::OutOfRange(errs.join("; ")));
    }
    let seeds: Vec<Vec<f64>> = cfg.seeds.iter().map(|t| t.to_vec()).collect();
    let f = |x: &[f64]| objective(x, cfg);
    let ga = ga_optimize(&f, &cfg.ga, &seeds);
    let topology = StubTopology::from_slice(&ga.best_params);
    let drives = evaluate_design(&topology, cfg)?;
    Ok(DesignReport {
        topology,
        best_cost: ga.best_cost,
        seed_cost: seeds.first().map(|x| objective(x, cfg)),
        evaluations: ga.evaluations,
        goal_met: drives.iter().all(|d| d.s11_db <= cfg.objective.s11_goal_db),
        drives,
        history: ga.history,
        fidelity_note: FIDELITY_NOTE.into(),
    })
}
