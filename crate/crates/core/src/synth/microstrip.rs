//! Quasi-TEM microstrip: Hammerstad–Jensen analysis and the classic
//! closed-form synthesis, polished against the analysis.

use serde::{Deserialize, Serialize};

use super::SynthError;

pub const C0: f64 = 299_792_458.0;
const ETA0: f64 = 376.730_313_668;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubstrateParams {
    pub eps_r: f64,
    /// Dielectric thickness, m.
    pub h: f64,
    /// Stored only; conductor and dielectric losses are not modelled.
    pub tan_d: f64,
    pub t_metal: f64,
}

impl Default for SubstrateParams {
    fn default() -> Self {
        Self {
            eps_r: 3.55,
            h: 1.52e-3,
            tan_d: 0.0027,
            t_metal: 35e-6,
        }
    }
}

impl SubstrateParams {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if !(self.eps_r > 1.0) {
            e.push("eps_r must exceed 1".into());
        }
        if !(self.h > 0.0) {
            e.push("h must be positive".into());
        }
        e
    }
}

/// Width-to-height range over which the closed forms are trusted.
pub const MIN_U: f64 = 0.01;
pub const MAX_U: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicrostripLine {
    pub z0: f64,
    pub eps_eff: f64,
}

/// Characteristic impedance and effective permittivity of a strip of
/// width `w` (zero thickness, no dispersion).
pub fn microstrip_analyze(w: f64, sub: &SubstrateParams) -> Result<MicrostripLine, SynthError> {
    let u = w / sub.h;
    if !(MIN_U..=MAX_U).contains(&u) {
        return Err(SynthError::OutOfRange(format!(
            "strip width {:.3} mm outside microstrip model range",
            w * 1e3
        )));
    }
    let er = sub.eps_r;
    let a = 1.0
        + ((u.powi(4) + (u / 52.0).powi(2)) / (u.powi(4) + 0.432)).ln() / 49.0
        + (1.0 + (u / 18.1).powi(3)).ln() / 18.7;
    let b = 0.564 * ((er - 0.9) / (er + 3.0)).powf(0.053);
    let eps_eff = (er + 1.0) / 2.0 + (er - 1.0) / 2.0 * (1.0 + 10.0 / u).powf(-a * b);
    let f = 6.0 + (2.0 * std::f64::consts::PI - 6.0) * (-(30.666 / u).powf(0.7528)).exp();
    let z01 = ETA0 / (2.0 * std::f64::consts::PI) * (f / u + (1.0 + 4.0 / (u * u)).sqrt()).ln();
    Ok(MicrostripLine {
        z0: z01 / eps_eff.sqrt(),
        eps_eff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrostripDesign {
    pub w: f64,
    pub eps_eff: f64,
    pub guided_wavelength: f64,
}

/// Closed-form width estimate (Wheeler/Hammerstad synthesis).
pub fn closed_form_width(z0: f64, sub: &SubstrateParams) -> f64 {
    let er = sub.eps_r;
    let a = z0 / 60.0 * ((er + 1.0) / 2.0).sqrt() + (er - 1.0) / (er + 1.0) * (0.23 + 0.11 / er);
    let u = if a > 1.52 {
        8.0 * a.exp() / ((2.0 * a).exp() - 2.0)
    } else {
        let b = 377.0 * std::f64::consts::PI / (2.0 * z0 * er.sqrt());
        2.0 / std::f64::consts::PI
            * (b - 1.0 - (2.0 * b - 1.0).ln()
                + (er - 1.0) / (2.0 * er) * ((b - 1.0).ln() + 0.39 - 0.61 / er))
    };
    u * sub.h
}

/// Width for a target impedance: the closed-form estimate refined by a
/// secant search on [`microstrip_analyze`] so that the round trip is exact.
pub fn microstrip_synthesize(
    z0: f64,
    sub: &SubstrateParams,
    freq: f64,
) -> Result<MicrostripDesign, SynthError> {
    if !(10.0..=150.0).contains(&z0) {
        return Err(SynthError::OutOfRange(format!(
            "target impedance {z0} ohm outside [10, 150]"
        )));
    }
    let errs = sub.validate();
    if !errs.is_empty() {
        return Err(SynthError::OutOfRange(errs.join("; ")));
    }
    // Work in log-width; impedance is monotone decreasing in width.
    let g = |lw: f64| microstrip_analyze(lw.exp(), sub).map(|m| m.z0.ln() - z0.ln());
    let mut x0 = closed_form_width(z0, sub)
        .clamp(MIN_U * sub.h * 1.01, MAX_U * sub.h * 0.99)
        .ln();
    let mut x1 = x0 + 0.01;
    let mut g0 = g(x0)?;
    let mut g1 = g(x1)?;
    for _ in 0..50 {
        if g1.abs() < 1e-12 || g1 == g0 {
            break;
        }
        let x2 =
            (x1 - g1 * (x1 - x0) / (g1 - g0)).clamp((MIN_U * sub.h).ln(), (MAX_U * sub.h).ln());
        x0 = x1;
        g0 = g1;
        x1 = x2;
        g1 = g(x1)?;
    }
    let w = x1.exp();
    let m = microstrip_analyze(w, sub)?;
    Ok(MicrostripDesign {
        w,
        eps_eff: m.eps_eff,
        guided_wavelength: C0 / (freq * m.eps_eff.sqrt()),
    })
}
