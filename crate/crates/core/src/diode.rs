//! Schottky diode model: series resistance feeding a junction made of an
//! exponential conductance in parallel with a depletion capacitance.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::netalg::{c, dbm_to_watts, NetError};
use crate::steady::{
    self, CircuitNetlist, Element, ElementKind, ExcitationSpec, Port, SolverConfig, SteadyError,
    Tone,
};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Forward-bias knee of the depletion capacitance, as a fraction of `v_j`.
pub const FC: f64 = 0.5;

/// Exponent arguments above this continue linearly.
pub const EXP_LIMIT: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiodeParams {
    pub i_s: f64,
    pub n: f64,
    pub c_j0: f64,
    pub v_j: f64,
    pub r_s: f64,
    pub b_v: f64,
    pub i_bv: f64,
    /// Bandgap, kept for completeness; the model has no temperature scaling.
    pub e_g: f64,
    pub temperature: f64,
}

impl Default for DiodeParams {
    /// SMS7621 SPICE card at room temperature.
    fn default() -> Self {
        Self {
            i_s: 4e-8,
            n: 1.05,
            c_j0: 0.1e-12,
            v_j: 0.51,
            r_s: 12.0,
            b_v: 3.0,
            i_bv: 1e-5,
            e_g: 0.69,
            temperature: 298.15,
        }
    }
}

/// `exp(x)` with linear continuation above [`EXP_LIMIT`]; C¹ at the knee.
pub fn exp_lin(x: f64) -> f64 {
    if x <= EXP_LIMIT {
        x.exp()
    } else {
        EXP_LIMIT.exp() * (1.0 + (x - EXP_LIMIT))
    }
}

fn exp_lin_deriv(x: f64) -> f64 {
    if x <= EXP_LIMIT {
        x.exp()
    } else {
        EXP_LIMIT.exp()
    }
}

impl DiodeParams {
    /// Lists every violated invariant.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        check(self.i_s > 0.0, "i_s must be positive");
        check(self.n >= 1.0, "n must be at least 1");
        check(self.c_j0 >= 0.0, "c_j0 must be non-negative");
        check(self.v_j > 0.0 && self.v_j < 2.0, "v_j must lie in (0, 2) V");
        check(self.r_s >= 0.0, "r_s must be non-negative");
        check(self.b_v > 0.0, "b_v must be positive");
        check(self.i_bv >= 0.0, "i_bv must be non-negative");
        check(self.temperature > 0.0, "temperature must be positive");
        errs
    }

    pub fn thermal_voltage(&self) -> f64 {
        BOLTZMANN * self.temperature / ELEMENTARY_CHARGE
    }

    /// `1/(n·V_T)`.
    pub fn alpha(&self) -> f64 {
        1.0 / (self.n * self.thermal_voltage())
    }

    /// Junction current at junction voltage `v`.
    ///
    /// Forward and ordinary reverse bias follow `i_s·(exp(αv) − 1)`. The
    /// breakdown current `i_bv·exp(−α(v + b_v))` is applied as a smooth
    /// term that is shifted to vanish at zero bias; it is negligible until
    /// `v` approaches `−b_v`.
    pub fn id_static(&self, v: f64) -> f64 {
        let a = self.alpha();
        let fwd = self.i_s * (exp_lin(a * v) - 1.0);
        let bd = self.i_bv * (exp_lin(-a * (v + self.b_v)) - (-a * self.b_v).exp());
        fwd - bd
    }

    /// `d(id_static)/dv`.
    pub fn conductance(&self, v: f64) -> f64 {
        let a = self.alpha();
        a * self.i_s * exp_lin_deriv(a * v) + a * self.i_bv * exp_lin_deriv(-a * (v + self.b_v))
    }

    /// Depletion capacitance with the usual linear extension above
    /// `FC·v_j`.
    pub fn junction_cap(&self, v: f64) -> f64 {
        let knee = FC * self.v_j;
        if v <= knee {
            self.c_j0 / (1.0 - v / self.v_j).sqrt()
        } else {
            let f1 = (1.0 - FC).powf(-1.5);
            self.c_j0 / (1.0 - FC).sqrt() + self.c_j0 * 0.5 / self.v_j * f1 * (v - knee)
        }
    }

    /// `d(junction_cap)/dv`.
    pub fn junction_cap_slope(&self, v: f64) -> f64 {
        let knee = FC * self.v_j;
        if v <= knee {
            0.5 * self.c_j0 / self.v_j * (1.0 - v / self.v_j).powf(-1.5)
        } else {
            0.5 * self.c_j0 / self.v_j * (1.0 - FC).powf(-1.5)
        }
    }

    /// Depletion charge, the integral of [`junction_cap`](Self::junction_cap)
    /// from 0 to `v`.
    pub fn junction_charge(&self, v: f64) -> f64 {
        let knee = FC * self.v_j;
        let q_dep = |x: f64| 2.0 * self.c_j0 * self.v_j * (1.0 - (1.0 - x / self.v_j).sqrt());
        if v <= knee {
            q_dep(v)
        } else {
            let c_knee = self.c_j0 / (1.0 - FC).sqrt();
            let slope = self.junction_cap_slope(knee);
            let dv = v - knee;
            q_dep(knee) + c_knee * dv + 0.5 * slope * dv * dv
        }
    }

    /// Junction admittance `G + jωC` linearised at `v_bias`.
    pub fn small_signal_admittance(&self, v_bias: f64, freq: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * freq;
        c(self.conductance(v_bias), w * self.junction_cap(v_bias))
    }

    /// Terminal impedance `r_s + 1/(G + jωC)` at `v_bias`.
    pub fn small_signal_impedance(&self, v_bias: f64, freq: f64) -> Complex64 {
        c(self.r_s, 0.0) + c(1.0, 0.0) / self.small_signal_admittance(v_bias, freq)
    }
}

/// Static I–V of two identical diodes connected anti-parallel.
pub fn antiparallel_current(params: &DiodeParams, v: f64) -> f64 {
    params.id_static(v) - params.id_static(-v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiodeTopology {
    /// One diode between the driven node and ground; reports `z_d`.
    Series,
    /// Two anti-parallel pairs (four diodes) shunting the driven node;
    /// reports the per-diode `y_d`.
    AntiparallelPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LargeSignalPoint {
    pub drive_dbm: f64,
    pub freq: f64,
    pub z_d: Complex64,
    pub y_d: Complex64,
    pub v_amp: f64,
}

impl LargeSignalPoint {
    /// Admittance of the four-diode shunt bank.
    pub fn y_bank(&self) -> Complex64 {
        4.0 * self.y_d
    }
}

/// Test fixture netlist: the device(s) between node `d` and ground, driven
/// through port `1`.
pub fn extraction_netlist(params: &DiodeParams, topology: DiodeTopology) -> CircuitNetlist {
    let diode = |name: &str, a: &str, k: &str| Element {
        name: name.into(),
        nodes: vec![a.into(), k.into()],
        kind: ElementKind::Diode {
            params: *params,
            m: 1.0,
        },
    };
    let elements = match topology {
        DiodeTopology::Series => vec![diode("D1", "d", "0")],
        DiodeTopology::AntiparallelPair => vec![
            diode("D1", "d", "0"),
            diode("D2", "0", "d"),
            diode("D3", "d", "0"),
            diode("D4", "0", "d"),
        ],
    };
    CircuitNetlist {
        nodes: vec!["d".into()],
        ground: "0".into(),
        elements,
        ports: vec![Port {
            name: "1".into(),
            node: "d".into(),
            reference: "0".into(),
            z_ref: 50.0,
        }],
        dc_load: None,
    }
}

/// Drives the chosen topology with a single tone and returns the
/// fundamental-frequency describing function.
pub fn large_signal_extract(
    drive_dbm: f64,
    freq: f64,
    z_source: f64,
    topology: DiodeTopology,
    params: &DiodeParams,
    cfg: &SolverConfig,
) -> Result<LargeSignalPoint, SteadyError> {
    let errs = params.validate();
    if !errs.is_empty() {
        return Err(SteadyError::InvalidNetlist(errs));
    }
    let net = extraction_netlist(params, topology);
    let exc = ExcitationSpec {
        tones: vec![Tone {
            freq_hz: freq,
            p_avail_dbm: drive_dbm,
            phase_deg: 0.0,
        }],
        z_source,
        port: "1".into(),
    };
    if !(dbm_to_watts(drive_dbm) > 0.0) {
        return Err(SteadyError::Net(NetError::InvalidParameter(
            "drive level must be finite".into(),
        )));
    }
    let res = steady::integrate_to_steady(&net, &exc, cfg)?;
    let ph = res
        .port_phasor("1", freq)
        .ok_or(SteadyError::Internal("missing port phasor"))?;
    // Port current flows into the network, i.e. through the device bank.
    let z_total = ph.v / ph.i;
    let (z_d, y_d) = match topology {
        DiodeTopology::Series => (z_total, c(1.0, 0.0) / z_total),
        DiodeTopology::AntiparallelPair => {
            let y = c(1.0, 0.0) / z_total / 4.0;
            (c(1.0, 0.0) / y, y)
        }
    };
    Ok(LargeSignalPoint {
        drive_dbm,
        freq,
        z_d,
        y_d,
        v_amp: ph.v.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> DiodeParams {
        DiodeParams::default()
    }

    #[test]
    fn thermal_voltage_and_alpha() {
        assert!((p().thermal_voltage() - 0.025693).abs() < 1e-6);
        assert!((p().alpha() - 37.07).abs() < 0.01);
    }

    #[test]
    fn static_current_examples() {
        assert!(p().id_static(0.0).abs() < 1e-30);
        // Oracle: i_s·(exp(α·0.2) − 1) evaluated directly.
        let a = 1.0 / (1.05 * BOLTZMANN * 298.15 / ELEMENTARY_CHARGE);
        let expect = 4e-8 * ((a * 0.2).exp() - 1.0);
        let got = p().id_static(0.2);
        assert!((got - expect).abs() < 1e-12 * expect.abs() + 1e-20);
        assert!((got - 6.6e-5).abs() < 0.05e-5, "{got}");
        assert!((p().id_static(-0.2) + 4e-8).abs() < 1e-10);
        // Cross-check at a second temperature: α scales as 1/T.
        let hot = DiodeParams {
            temperature: 350.0,
            ..p()
        };
        let a_hot = a * 298.15 / 350.0;
        let expect = 4e-8 * ((a_hot * 0.2).exp() - 1.0);
        assert!((hot.id_static(0.2) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn breakdown_conducts_beyond_bv() {
        let i = p().id_static(-3.2);
        assert!(i < -1e-5, "{i}");
        assert!(p().id_static(-2.0).abs() < 1e-7);
    }

    #[test]
    fn exponent_is_clamped() {
        let v = 3.0;
        let i = p().id_static(v);
        assert!(i.is_finite());
        let h = 1e-6;
        let fd = (exp_lin(EXP_LIMIT + h) - exp_lin(EXP_LIMIT - h)) / (2.0 * h);
        assert!((fd / EXP_LIMIT.exp() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn capacitance_examples() {
        assert!((p().junction_cap(0.0) - 0.1e-12).abs() < 1e-27);
        assert!((p().junction_cap(-0.51) - 0.1e-12 / 2f64.sqrt()).abs() < 1e-27);
        let knee = FC * 0.51;
        let lo = p().junction_cap(knee - 1e-9);
        let hi = p().junction_cap(knee + 1e-9);
        assert!(((lo - hi) / lo).abs() < 1e-8);
        assert!(p().junction_cap(0.9 * 0.51).is_finite());
        let s_lo = p().junction_cap_slope(knee - 1e-9);
        let s_hi = p().junction_cap_slope(knee + 1e-9);
        assert!(((s_lo - s_hi) / s_lo).abs() < 1e-6);
    }

    #[test]
    fn charge_is_integral_of_capacitance() {
        for v in [-2.0, -0.5, 0.1, 0.2, 0.255, 0.4, 0.8] {
            let h = 1e-6;
            let fd = (p().junction_charge(v + h) - p().junction_charge(v - h)) / (2.0 * h);
            assert!((fd / p().junction_cap(v) - 1.0).abs() < 1e-6, "v={v}");
        }
    }

    #[test]
    fn small_signal_examples() {
        let y = p().small_signal_admittance(0.0, 680e6);
        assert!((y.re - 1.48e-6).abs() < 0.01e-6, "{y}");
        assert!((y.im - 4.27e-4).abs() < 0.01e-4);
        let y0 = p().small_signal_admittance(0.0, 1e-3);
        assert!(y0.im.abs() < 1e-15 && y0.re > 0.0);
        let z = p().small_signal_impedance(0.7, 680e6);
        assert!((z.norm() - 12.0).abs() < 0.5);
    }

    #[test]
    fn antiparallel_pair_is_odd() {
        for v in [1e-3, 0.1, 0.3, 0.7, 2.5, 3.5] {
            let a = antiparallel_current(&p(), v);
            let b = antiparallel_current(&p(), -v);
            assert!((a + b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn validate_lists_all_violations() {
        let bad = DiodeParams {
            i_s: -1.0,
            n: 0.5,
            v_j: 3.0,
            ..p()
        };
        assert_eq!(bad.validate().len(), 3);
        assert!(p().validate().is_empty());
    }
}
