//! Periodic steady state of nonlinear circuits by time integration.
//!
//! Two drivers share one engine:
//!
//! * **brute force** integrates from rest, one common period at a time,
//!   until the period-mean load voltage stops drifting;
//! * **accelerated** (default) treats every large capacitor as a DC source
//!   whose value is an unknown, settles the fast RF dynamics around it, and
//!   solves for the source values at which each capacitor's mean charging
//!   current vanishes. The capacitors are then put back and a final pair of
//!   periods is integrated and measured.
//!
//! The second driver turns millisecond RC constants into a handful of short
//! settles, which is what makes the rectifier sweeps tractable.

mod engine;
pub mod netlist;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use netlist::{CircuitNetlist, Element, ElementKind, Port, StubEnd};

use crate::linalg::Lu;
use crate::netalg::{dbm_to_watts, mag_db, NetError};
use crate::util::par_map;
use engine::{Category, Engine, ToneDrive};

#[derive(Debug, Error)]
pub enum SteadyError {
    #[error("invalid netlist: {}", .0.join("; "))]
    InvalidNetlist(Vec<String>),
    #[error("invalid excitation: {0}")]
    InvalidExcitation(String),
    #[error("tones are not commensurable on the simulation grid")]
    NonCommensurable,
    #[error("Newton iteration failed at t = {time:.4e} s after {halvings} step halvings")]
    NewtonFailure { time: f64, halvings: usize },
    #[error("steady state not reached after {cycles} periods (drift {drift:.3e})")]
    NotConverged { cycles: usize, drift: f64 },
    #[error("efficiency undefined for zero input power")]
    UndefinedEfficiency,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("internal error: {0}")]
    Internal(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Time steps per period of the highest tone.
    pub samples_per_period: usize,
    pub max_cycles: usize,
    pub min_cycles: usize,
    /// Relative change of the period-mean load voltage accepted as steady.
    pub drift_tol: f64,
    pub accelerate: bool,
    /// Capacitors at or above this value are treated as slow.
    pub slow_cap_threshold: f64,
    /// Conductance of the stand-in source for a slow capacitor.
    pub slow_conductance: f64,
    /// Relative period-to-period state change accepted as settled.
    pub settle_tol: f64,
    pub min_settle_periods: usize,
    pub max_settle_periods: usize,
    /// Settle by Newton iteration on the period map instead of plain
    /// period-by-period integration (only when `accelerate` is set).
    pub shooting: bool,
    pub shooting_max_newton: usize,
    /// Krylov dimension limit of each shooting Newton step.
    pub shooting_krylov: usize,
    /// Relative update size at which the slow-voltage iteration stops.
    pub dc_tol: f64,
    pub max_outer: usize,
    pub newton_max_iter: usize,
    pub newton_reltol: f64,
    pub newton_abstol: f64,
    pub max_step_halvings: usize,
    /// Worker threads for sweeps.
    pub jobs: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            samples_per_period: 256,
            max_cycles: 2000,
            min_cycles: 3,
            drift_tol: 1e-4,
            accelerate: true,
            slow_cap_threshold: 1e-9,
            slow_conductance: 1e4,
            settle_tol: 1e-6,
            min_settle_periods: 2,
            max_settle_periods: 3000,
            shooting: true,
            shooting_max_newton: 30,
            shooting_krylov: 120,
            dc_tol: 1e-6,
            max_outer: 40,
            newton_max_iter: 50,
            newton_reltol: 1e-7,
            newton_abstol: 1e-10,
            max_step_halvings: 8,
            jobs: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if self.samples_per_period < 8 {
            e.push("samples_per_period must be at least 8".into());
        }
        if self.max_cycles < self.min_cycles.max(1) {
            e.push("max_cycles must be at least min_cycles and positive".into());
        }
        for (n, v) in [
            ("drift_tol", self.drift_tol),
            ("slow_cap_threshold", self.slow_cap_threshold),
            ("slow_conductance", self.slow_conductance),
            ("settle_tol", self.settle_tol),
            ("dc_tol", self.dc_tol),
            ("newton_reltol", self.newton_reltol),
            ("newton_abstol", self.newton_abstol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                e.push(format!("{n} must be positive"));
            }
        }
        for (n, v) in [
            ("max_settle_periods", self.max_settle_periods),
            ("max_outer", self.max_outer),
            ("newton_max_iter", self.newton_max_iter),
            ("shooting_krylov", self.shooting_krylov),
            ("jobs", self.jobs),
        ] {
            if v == 0 {
                e.push(format!("{n} must be positive"));
            }
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub freq_hz: f64,
    pub p_avail_dbm: f64,
    #[serde(default)]
    pub phase_deg: f64,
}

fn default_port() -> String {
    "1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub tones: Vec<Tone>,
    pub z_source: f64,
    /// Port the generator is attached to; every other port is terminated
    /// in its reference impedance.
    #[serde(default = "default_port")]
    pub port: String,
}

impl ExcitationSpec {
    pub fn single(freq_hz: f64, p_avail_dbm: f64) -> Self {
        Self {
            tones: vec![Tone {
                freq_hz,
                p_avail_dbm,
                phase_deg: 0.0,
            }],
            z_source: 50.0,
            port: default_port(),
        }
    }

    pub fn available_power(&self) -> f64 {
        self.tones.iter().map(|t| dbm_to_watts(t.p_avail_dbm)).sum()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.tones.is_empty() {
            errs.push("tones: at least one tone is required".into());
        }
        for (i, t) in self.tones.iter().enumerate() {
            if !(t.freq_hz.is_finite() && t.freq_hz > 0.0) {
                errs.push(format!("tones[{i}].freq_hz: must be positive"));
            }
            if !(0.0..360.0).contains(&t.phase_deg) {
                errs.push(format!("tones[{i}].phase_deg: must lie in [0, 360)"));
            }
            if t.p_avail_dbm.is_nan() || t.p_avail_dbm == f64::INFINITY {
                errs.push(format!("tones[{i}].p_avail_dbm: must be finite or -inf"));
            }
            for (j, u) in self.tones.iter().enumerate().skip(i + 1) {
                if (t.freq_hz - u.freq_hz).abs() <= 1e-12 * t.freq_hz.abs() {
                    errs.push(format!("tones[{j}].freq_hz: duplicates tones[{i}]"));
                }
            }
        }
        if !(self.z_source.is_finite() && self.z_source > 0.0) {
            errs.push("z_source: must be positive".into());
        }
        errs
    }
}

/// Fundamental-frequency phasors at one port; the current flows into the
/// network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortPhasor {
    pub port_index: usize,
    pub freq: f64,
    pub v: Complex64,
    pub i: Complex64,
}

impl PortPhasor {
    /// Incident and reflected power waves for a real reference.
    pub fn waves(&self, z_ref: f64) -> (Complex64, Complex64) {
        let k = 1.0 / (2.0 * z_ref.sqrt());
        ((self.v + z_ref * self.i) * k, (self.v - z_ref * self.i) * k)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub source: f64,
    pub resistive: f64,
    pub diode: f64,
    pub reactive: f64,
    pub relative_imbalance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub accelerated: bool,
    pub outer_iterations: usize,
    pub settle_periods: usize,
    pub newton_max_iterations: usize,
    pub step_halvings: usize,
    pub time_steps: u64,
    pub drift: f64,
    pub slow_voltages: Vec<f64>,
    pub max_delay_quantization: f64,
    pub energy: EnergyBalance,
    pub element_power: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateResult {
    /// Common period of all tones.
    pub period: f64,
    pub dt: f64,
    pub node_names: Vec<String>,
    /// One period of samples per node, taken at the end of each step.
    #[serde(skip)]
    pub node_waveforms: Vec<Vec<f64>>,
    pub port_names: Vec<String>,
    pub p_dc: f64,
    pub p_in_avg: f64,
    pub p_available: f64,
    pub dc_load_voltage: f64,
    pub fundamental_phasors: Vec<PortPhasor>,
    pub converged: bool,
    pub cycles_used: usize,
    pub diagnostics: SolverDiagnostics,
}

impl SteadyStateResult {
    pub fn port_phasor(&self, port: &str, freq: f64) -> Option<PortPhasor> {
        let k = self.port_names.iter().position(|p| p == port)?;
        self.fundamental_phasors
            .iter()
            .filter(|ph| ph.port_index == k)
            .min_by(|a, b| (a.freq - freq).abs().total_cmp(&(b.freq - freq).abs()))
            .copied()
    }

    pub fn waveform(&self, node: &str) -> Option<&[f64]> {
        let k = self.node_names.iter().position(|n| n == node)?;
        Some(&self.node_waveforms[k])
    }
}

fn fgcd(a: f64, b: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (a.max(b), a.min(b));
    while b > tol {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Largest frequency of which every tone is an integer multiple.
pub fn common_base_frequency(freqs: &[f64]) -> Result<f64, SteadyError> {
    let fmax = freqs.iter().copied().fold(0.0, f64::max);
    let tol = 1e-9 * fmax;
    let base = freqs.iter().skip(1).fold(freqs[0], |g, &f| fgcd(g, f, tol));
    if !(base > 0.0) || fmax / base > 1e5 {
        return Err(SteadyError::NonCommensurable);
    }
    for &f in freqs {
        let r = f / base;
        if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
            return Err(SteadyError::NonCommensurable);
        }
    }
    Ok(base)
}

/// Plain integration until the period-to-period change is small.
fn settle_plain(
    eng: &mut Engine,
    cfg: &SolverConfig,
    min_periods: usize,
) -> Result<(engine::PeriodSummary, usize), SteadyError> {
    let mut last = None;
    let mut used = 0;
    for k in 0..cfg.max_settle_periods.max(1) {
        let s = eng.run_period(None, true)?;
        used = k + 1;
        let done = used >= min_periods && s.delta <= cfg.settle_tol * s.scale.max(1e-15);
        last = Some(s);
        if done {
            break;
        }
    }
    Ok((last.expect("at least one period"), used))
}

fn period_map(base: &Engine, s: &[f64]) -> Result<Vec<f64>, SteadyError> {
    let mut e = base.clone();
    e.set_state(s);
    e.run_period(None, false)?;
    Ok(e.state())
}

/// Newton iteration on `F(s) − s = 0`, where `F` integrates one period from
/// state `s`; the linear systems are solved by GMRES with finite-difference
/// products. Falls back to plain integration if the iteration stalls.
fn shoot(
    eng: &mut Engine,
    cfg: &SolverConfig,
) -> Result<(engine::PeriodSummary, usize), SteadyError> {
    let mut periods = 0;
    while periods < cfg.min_settle_periods.max(1) || eng.step() < eng.warm_steps() {
        eng.run_period(None, false)?;
        periods += 1;
    }
    let mut s = eng.state();
    let mut fs = period_map(eng, &s)?;
    periods += 1;
    let mut r: Vec<f64> = fs.iter().zip(&s).map(|(a, b)| a - b).collect();
    let mut settled = false;
    for _ in 0..cfg.shooting_max_newton {
        let scale = inf_norm(&fs).max(1e-12);
        if inf_norm(&r) <= cfg.settle_tol * scale {
            settled = true;
            break;
        }
        let eps = 1e-7 * scale;
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let base_f = fs.clone();
        let sol = crate::linalg::gmres(
            |v: &[f64]| -> Result<Vec<f64>, SteadyError> {
                let sv: Vec<f64> = s.iter().zip(v).map(|(a, b)| a + eps * b).collect();
                let f = period_map(eng, &sv)?;
                periods += 1;
                Ok(f.iter()
                    .zip(&base_f)
                    .zip(v)
                    .map(|((a, b), vi)| (a - b) / eps - vi)
                    .collect())
            },
            &rhs,
            1e-4,
            cfg.shooting_krylov,
        );
        let step = match sol {
            Ok(o) => o.x,
            // A failed trial period means the step was too wild; fall back.
            Err(_) => break,
        };
        let rn = norm(&r);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..6 {
            let st: Vec<f64> = s.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
            if let Ok(ft) = period_map(eng, &st) {
                periods += 1;
                let rt: Vec<f64> = ft.iter().zip(&st).map(|(a, b)| a - b).collect();
                if norm(&rt) < rn {
                    s = st;
                    fs = ft;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    eng.set_state(&s);
    if settled {
        let summary = eng.run_period(None, true)?;
        Ok((summary, periods + 1))
    } else {
        let (summary, p) = settle_plain(eng, cfg, 1)?;
        Ok((summary, periods + p))
    }
}

fn settle(
    eng: &mut Engine,
    cfg: &SolverConfig,
) -> Result<(engine::PeriodSummary, usize), SteadyError> {
    if cfg.shooting {
        shoot(eng, cfg)
    } else {
        settle_plain(eng, cfg, cfg.min_settle_periods)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

struct Driven {
    eng: Engine,
    outer: usize,
    settle_periods: usize,
    slow_voltages: Vec<f64>,
    cycles: usize,
}

fn accelerate(mut eng: Engine, cfg: &SolverConfig) -> Result<Driven, SteadyError> {
    let m = eng.slow.len();
    let mut u = vec![0.0; m];
    eng.set_slow_voltages(&u);
    let (mut summary, mut periods) = settle(&mut eng, cfg)?;
    let mut f = summary.slow_current.clone();
    let mut jac: Option<Vec<f64>> = None;
    let mut outer = 0;
    while outer < cfg.max_outer && inf_norm(&f) > 0.0 {
        outer += 1;
        let fresh = jac.is_none();
        if jac.is_none() {
            let mut j = vec![0.0; m * m];
            for c in 0..m {
                let du = 1e-3 * u[c].abs().max(0.1);
                let mut trial = eng.clone();
                let mut ut = u.clone();
                ut[c] += du;
                trial.set_slow_voltages(&ut);
                let (s, p) = settle(&mut trial, cfg)?;
                periods += p;
                for r in 0..m {
                    j[r * m + c] = (s.slow_current[r] - f[r]) / du;
                }
            }
            jac = Some(j);
        }
        let j = jac.as_ref().unwrap();
        let step = match Lu::factor(j.clone(), m) {
            Some(lu) => lu.solve(&f.iter().map(|x| -x).collect::<Vec<_>>()),
            None => return Err(SteadyError::Internal("singular slow-voltage Jacobian")),
        };
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..8 {
            let s: Vec<f64> = step.iter().map(|d| lambda * d).collect();
            let ut: Vec<f64> = u.iter().zip(&s).map(|(a, b)| a + b).collect();
            let mut trial = eng.clone();
            trial.set_slow_voltages(&ut);
            let (st, p) = settle(&mut trial, cfg)?;
            periods += p;
            let small = s
                .iter()
                .zip(&ut)
                .all(|(d, v)| d.abs() <= cfg.dc_tol * v.abs().max(1e-3));
            if inf_norm(&st.slow_current) < inf_norm(&f) || small {
                accepted = Some((s, ut, trial, st));
                break;
            }
            lambda *= 0.5;
        }
        let Some((s, ut, trial, st)) = accepted else {
            if fresh {
                return Err(SteadyError::NotConverged {
                    cycles: periods,
                    drift: inf_norm(&f),
                });
            }
            jac = None;
            continue;
        };
        // Broyden rank-one update.
        let df: Vec<f64> = st.slow_current.iter().zip(&f).map(|(a, b)| a - b).collect();
        let ss: f64 = s.iter().map(|x| x * x).sum();
        if ss > 0.0 {
            let j = jac.as_mut().unwrap();
            for r in 0..m {
                let js: f64 = (0..m).map(|c| j[r * m + c] * s[c]).sum();
                let k = (df[r] - js) / ss;
                for c in 0..m {
                    j[r * m + c] += k * s[c];
                }
            }
        }
        let done = s
            .iter()
            .zip(&ut)
            .all(|(d, v)| d.abs() <= cfg.dc_tol * v.abs().max(1e-3));
        u = ut;
        f = st.slow_current.clone();
        eng = trial;
        summary = st;
        if done {
            break;
        }
    }
    eng.release_slow(&summary.slow_wave);
    Ok(Driven {
        eng,
        outer,
        settle_periods: periods,
        slow_voltages: u,
        cycles: periods,
    })
}

/// Runs to periodic steady state and measures the final period.
pub fn integrate_to_steady(
    net: &CircuitNetlist,
    exc: &ExcitationSpec,
    cfg: &SolverConfig,
) -> Result<SteadyStateResult, SteadyError> {
    let errs = net.validate();
    if !errs.is_empty() {
        return Err(SteadyError::InvalidNetlist(errs));
    }
    let errs = exc.validate();
    if !errs.is_empty() {
        return Err(SteadyError::InvalidExcitation(errs.join("; ")));
    }
    if cfg.samples_per_period < 8 {
        return Err(SteadyError::InvalidExcitation(
            "samples_per_period must be at least 8".into(),
        ));
    }
    let freqs: Vec<f64> = exc.tones.iter().map(|t| t.freq_hz).collect();
    let base = common_base_frequency(&freqs)?;
    let harmonics: Vec<f64> = freqs.iter().map(|f| (f / base).round()).collect();
    let top = harmonics.iter().copied().fold(0.0, f64::max) as usize;
    let spp = top * cfg.samples_per_period;
    let period = 1.0 / base;
    let dt = period / spp as f64;
    let tones: Vec<ToneDrive> = exc
        .tones
        .iter()
        .zip(&harmonics)
        .map(|(t, h)| ToneDrive {
            amp: (8.0 * exc.z_source * dbm_to_watts(t.p_avail_dbm)).sqrt(),
            omega: 2.0 * std::f64::consts::PI * h * base,
            phase: t.phase_deg.to_radians(),
        })
        .collect();
    let tone_freqs: Vec<f64> = harmonics.iter().map(|h| h * base).collect();

    let eng = Engine::build(net, &exc.port, exc.z_source, tones, dt, spp, cfg)?;
    let accelerated = eng.has_slow() || (cfg.accelerate && cfg.shooting);
    let mut run = if eng.has_slow() {
        accelerate(eng, cfg)?
    } else if accelerated {
        let mut eng = eng;
        let (_, periods) = shoot(&mut eng, cfg)?;
        Driven {
            eng,
            outer: 0,
            settle_periods: periods,
            slow_voltages: vec![],
            cycles: periods,
        }
    } else {
        let mut eng = eng;
        let mut prev: Option<f64> = None;
        let mut cycles = 0;
        loop {
            let s = eng.run_period(None, false)?;
            cycles += 1;
            let drift = match prev {
                Some(p) if eng.has_load() => (s.load_mean - p).abs() / s.load_mean.abs().max(1e-12),
                Some(_) => s.delta / s.scale.max(1e-15),
                None => f64::INFINITY,
            };
            let zero = s.scale == 0.0;
            if cycles >= cfg.min_cycles && (drift <= cfg.drift_tol || zero) {
                break;
            }
            if cycles >= cfg.max_cycles {
                return Err(SteadyError::NotConverged { cycles, drift });
            }
            prev = Some(s.load_mean);
        }
        Driven {
            eng,
            outer: 0,
            settle_periods: 0,
            slow_voltages: vec![],
            cycles,
        }
    };

    // Final pair of periods: the first lets the restored capacitors settle
    // in, the second is measured.
    let first = run.eng.run_period(None, false)?;
    let mut meas = run.eng.new_measure(tone_freqs.clone());
    let second = run.eng.run_period(Some(&mut meas), false)?;
    let cycles_used = run.cycles + 2;
    let drift = if run.eng.has_load() {
        (second.load_mean - first.load_mean).abs() / second.load_mean.abs().max(1e-12)
    } else {
        second.delta / second.scale.max(1e-15)
    };
    let drift = if second.scale == 0.0 { 0.0 } else { drift };

    let eng = &run.eng;
    let n = meas.samples as f64;
    let v_load = meas.load_sum / n;
    let p_dc = eng.load_resistance().map_or(0.0, |r| v_load * v_load / r);
    let p_in_avg = meas.p_port[eng.driven_index()] / n;
    let mut energy = EnergyBalance {
        source: p_in_avg,
        ..Default::default()
    };
    let mut element_power = Vec::new();
    for ((name, cat), e) in meas.terms.iter().zip(&meas.energy) {
        let p = e / n;
        match cat {
            Category::Resistive => energy.resistive += p,
            Category::Diode => energy.diode += p,
            Category::Reactive => energy.reactive += p,
        }
        element_power.push((name.clone(), p));
    }
    let absorbed = energy.resistive + energy.diode + energy.reactive;
    energy.relative_imbalance = if p_in_avg.abs() > 0.0 {
        (p_in_avg - absorbed).abs() / p_in_avg.abs()
    } else {
        0.0
    };

    let mut phasors = Vec::new();
    for k in 0..eng.port_names.len() {
        for (j, f) in tone_freqs.iter().enumerate() {
            phasors.push(PortPhasor {
                port_index: k,
                freq: *f,
                v: meas.port_v[k][j] * (2.0 / n),
                i: meas.port_i[k][j] * (2.0 / n),
            });
        }
    }

    let diagnostics = SolverDiagnostics {
        accelerated,
        outer_iterations: run.outer,
        settle_periods: run.settle_periods,
        newton_max_iterations: eng.stats_newton_max,
        step_halvings: eng.stats_halvings,
        time_steps: eng.stats_steps,
        drift,
        slow_voltages: std::mem::take(&mut run.slow_voltages),
        max_delay_quantization: eng.max_delay_error,
        energy,
        element_power,
    };
    Ok(SteadyStateResult {
        period,
        dt,
        node_names: eng.user_nodes.iter().map(|(n, _)| n.clone()).collect(),
        node_waveforms: meas.waves,
        port_names: eng.port_names.clone(),
        p_dc,
        p_in_avg,
        p_available: exc.available_power(),
        dc_load_voltage: v_load,
        fundamental_phasors: phasors,
        converged: drift <= cfg.drift_tol,
        cycles_used,
        diagnostics,
    })
}

/// DC output power over available source power.
pub fn efficiency(result: &SteadyStateResult) -> Result<f64, SteadyError> {
    if !(result.p_available > 0.0) {
        return Err(SteadyError::UndefinedEfficiency);
    }
    Ok(result.p_dc / result.p_available)
}

/// Large-signal S-parameters `S[k][driven]` at `freq`, from power waves
/// referenced to each port's `z_ref`.
pub fn hot_s_column(
    net: &CircuitNetlist,
    result: &SteadyStateResult,
    driven: &str,
    freq: f64,
) -> Result<Vec<Complex64>, SteadyError> {
    let missing = SteadyError::Internal("missing port phasor");
    let dp = net
        .ports
        .iter()
        .find(|p| p.name == driven)
        .ok_or(SteadyError::Internal("unknown port"))?;
    let (a, _) = result
        .port_phasor(driven, freq)
        .ok_or(missing)?
        .waves(dp.z_ref);
    net.ports
        .iter()
        .map(|p| {
            let ph = result
                .port_phasor(&p.name, freq)
                .ok_or(SteadyError::Internal("missing port phasor"))?;
            Ok(ph.waves(p.z_ref).1 / a)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p_in_dbm: f64,
    pub p_dc_w: f64,
    pub eta: f64,
    pub s11: Complex64,
    pub s21: Complex64,
    pub s11_db: f64,
    pub s21_db: f64,
    pub energy_imbalance: f64,
    pub drift: f64,
    pub converged: bool,
}

/// Drives port `1` at each power level and records DC output and hot
/// S-parameters towards port `2`.
pub fn power_sweep(
    net: &CircuitNetlist,
    freq: f64,
    p_grid: &[f64],
    z_source: f64,
    cfg: &SolverConfig,
) -> Result<Vec<SweepRow>, SteadyError> {
    for (i, p) in p_grid.iter().enumerate() {
        if !(-50.0..=20.0).contains(p) {
            return Err(SteadyError::InvalidExcitation(format!(
                "p_grid[{i}] = {p} dBm outside the supported range"
            )));
        }
    }
    let has2 = net.ports.iter().any(|p| p.name == "2");
    let rows = par_map(p_grid, cfg.jobs, |&p| -> Result<SweepRow, SteadyError> {
        let exc = ExcitationSpec {
            tones: vec![Tone {
                freq_hz: freq,
                p_avail_dbm: p,
                phase_deg: 0.0,
            }],
            z_source,
            port: "1".into(),
        };
        let res = integrate_to_steady(net, &exc, cfg)?;
        let col = hot_s_column(net, &res, "1", freq)?;
        let idx = |name: &str| net.ports.iter().position(|q| q.name == name);
        let s11 = col[idx("1").unwrap()];
        let s21 = if has2 {
            col[idx("2").unwrap()]
        } else {
            Complex64::new(0.0, 0.0)
        };
        Ok(SweepRow {
            p_in_dbm: p,
            p_dc_w: res.p_dc,
            eta: efficiency(&res)?,
            s11,
            s21,
            s11_db: mag_db(s11),
            s21_db: mag_db(s21),
            energy_imbalance: res.diagnostics.energy.relative_imbalance,
            drift: res.diagnostics.drift,
            converged: res.converged,
        })
    });
    rows.into_iter().collect()
}

/// Equal-power tones spaced symmetrically around `center`; tone `i` has
/// phase `i·phase_step_deg`.
pub fn multitone_excitation(
    n_tones: usize,
    center: f64,
    spacing: f64,
    p_total_w: f64,
    phase_step_deg: f64,
) -> ExcitationSpec {
    let per = p_total_w / n_tones as f64;
    let mid = (n_tones as f64 - 1.0) / 2.0;
    ExcitationSpec {
        tones: (0..n_tones)
            .map(|i| Tone {
                freq_hz: center + (i as f64 - mid) * spacing,
                p_avail_dbm: crate::netalg::watts_to_dbm(per),
                phase_deg: (i as f64 * phase_step_deg).rem_euclid(360.0),
            })
            .collect(),
        z_source: 50.0,
        port: "1".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultitoneRow {
    pub n_tones: usize,
    pub phase_step_deg: f64,
    pub p_in_total_w: f64,
    pub p_dc_w: f64,
}

/// DC output versus total input power for `n_tones` tones, at every phase
/// step in `phases_deg`.
pub fn multitone_study(
    net: &CircuitNetlist,
    n_tones: usize,
    p_grid_w: &[f64],
    phases_deg: &[f64],
    center: f64,
    spacing: f64,
    cfg: &SolverConfig,
) -> Result<Vec<MultitoneRow>, SteadyError> {
    if !matches!(n_tones, 1 | 3 | 5) {
        return Err(SteadyError::InvalidExcitation(
            "n_tones must be 1, 3 or 5".into(),
        ));
    }
    let jobs: Vec<(f64, f64)> = phases_deg
        .iter()
        .flat_map(|&ph| p_grid_w.iter().map(move |&p| (ph, p)))
        .collect();
    let rows = par_map(
        &jobs,
        cfg.jobs,
        |&(ph, p)| -> Result<MultitoneRow, SteadyError> {
            let exc = multitone_excitation(n_tones, center, spacing, p, ph);
            let res = integrate_to_steady(net, &exc, cfg)?;
            Ok(MultitoneRow {
                n_tones,
                phase_step_deg: ph,
                p_in_total_w: p,
                p_dc_w: res.p_dc,
            })
        },
    );
    rows.into_iter().collect()
}

/// Saturation knee of a DC-output curve: the input power of peak
/// conversion efficiency, refined by a parabola through the three grid
/// points around the maximum (in log-power).
pub fn knee_power(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let eta: Vec<f64> = points.iter().map(|(p, d)| d / p).collect();
    let k = (0..eta.len()).max_by(|&a, &b| eta[a].total_cmp(&eta[b]))?;
    if k == 0 || k == points.len() - 1 {
        return Some(points[k].0);
    }
    let x: Vec<f64> = (k - 1..=k + 1).map(|i| points[i].0.ln()).collect();
    let y = &eta[k - 1..=k + 1];
    let c = crate::linalg::polyfit(&x, y, 2)?;
    if c[0] >= 0.0 {
        return Some(points[k].0);
    }
    let xm = (-c[1] / (2.0 * c[0])).clamp(x[0], x[2]);
    Some(xm.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeThresholds {
    pub rx_upper: f64,
    pub ps_upper: f64,
    pub tx_lower: f64,
}

impl Default for ModeThresholds {
    fn default() -> Self {
        Self {
            rx_upper: -25.0,
            ps_upper: 0.0,
            tx_lower: 5.0,
        }
    }
}

impl ModeThresholds {
    pub fn validate(&self) -> Vec<String> {
        if self.rx_upper < self.ps_upper && self.ps_upper <= self.tx_lower {
            vec![]
        } else {
            vec!["rx_upper, ps_upper, tx_lower must satisfy rx_upper < ps_upper <= tx_lower".into()]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatingMode {
    Rx,
    PowerSaving,
    Transition,
    Tx,
}

pub fn classify_mode(p_dbm: f64, th: &ModeThresholds) -> OperatingMode {
    if p_dbm < th.rx_upper {
        OperatingMode::Rx
    } else if p_dbm < th.ps_upper {
        OperatingMode::PowerSaving
    } else if p_dbm >= th.tx_lower {
        OperatingMode::Tx
    } else {
        OperatingMode::Transition
    }
}
