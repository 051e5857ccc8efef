//! Double-radial-stub matching networks.
//!
//! Each radial stub is approximated by `N` cascaded uniform microstrip
//! sections whose width grows linearly with the distance from the apex,
//! `w(ρ) = w_feed + ρ·α`, evaluated at each section's midpoint. The far end
//! is an ideal open. The network is `shunt(stub 1) · line(W, L) · shunt(stub
//! 2)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::microstrip::{microstrip_analyze, SubstrateParams, C0};
use super::SynthError;
use crate::netalg::TwoPortAbcd;

pub const DEFAULT_SECTIONS: usize = 32;

/// One matching network in the units used for layout tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchingNetwork {
    pub w_mm: f64,
    pub l_mm: f64,
    pub r1_mm: f64,
    pub r2_mm: f64,
    pub alpha1_deg: f64,
    pub alpha2_deg: f64,
}

impl MatchingNetwork {
    pub const FIELDS: [&'static str; 6] =
        ["w_mm", "l_mm", "r1_mm", "r2_mm", "alpha1_deg", "alpha2_deg"];

    pub fn to_vec(&self) -> [f64; 6] {
        [
            self.w_mm,
            self.l_mm,
            self.r1_mm,
            self.r2_mm,
            self.alpha1_deg,
            self.alpha2_deg,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            w_mm: v[0],
            l_mm: v[1],
            r1_mm: v[2],
            r2_mm: v[3],
            alpha1_deg: v[4],
            alpha2_deg: v[5],
        }
    }

    pub fn validate(&self) -> Vec<String> {
        Self::FIELDS
            .iter()
            .zip(self.to_vec())
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(n, _)| format!("{n} must be a non-negative number"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubTopology {
    pub mn1: MatchingNetwork,
    pub mn2: MatchingNetwork,
}

impl StubTopology {
    /// Published layout, used as a seed and regression fixture.
    pub fn published_seed() -> Self {
        Self {
            mn1: MatchingNetwork {
                w_mm: 4.9,
                l_mm: 2.5,
                r1_mm: 18.5,
                r2_mm: 19.5,
                alpha1_deg: 89.0,
                alpha2_deg: 90.0,
            },
            mn2: MatchingNetwork {
                w_mm: 0.5,
                l_mm: 4.5,
                r1_mm: 9.7,
                r2_mm: 0.0,
                alpha1_deg: 60.0,
                alpha2_deg: 0.0,
            },
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.mn1
            .to_vec()
            .iter()
            .chain(self.mn2.to_vec().iter())
            .copied()
            .collect()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            mn1: MatchingNetwork::from_slice(&v[..6]),
            mn2: MatchingNetwork::from_slice(&v[6..12]),
        }
    }
}

/// Input admittance of an open radial stub of radius `r` and angle
/// `alpha_deg`, fed at an apex of width `w_feed`.
pub fn radial_stub_admittance(
    w_feed: f64,
    r: f64,
    alpha_deg: f64,
    sub: &SubstrateParams,
    freq: f64,
    sections: usize,
) -> Result<Complex64, SynthError> {
    if r <= 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let alpha = alpha_deg.to_radians();
    let dl = r / sections as f64;
    let beta0 = 2.0 * std::f64::consts::PI * freq / C0;
    let mut y = Complex64::new(0.0, 0.0);
    for k in (0..sections).rev() {
        let rho = (k as f64 + 0.5) * dl;
        let m = microstrip_analyze(w_feed + rho * alpha, sub)?;
        let y0 = 1.0 / m.z0;
        let t = (beta0 * m.eps_eff.sqrt() * dl).tan();
        let j = Complex64::i();
        y = y0 * (y + j * y0 * t) / (y0 + j * y * t);
    }
    Ok(y)
}

fn stub_present(r: f64, alpha: f64) -> bool {
    r > 0.0 && alpha > 0.0
}

/// Chain matrix of one matching network, with an explicit section count.
pub fn stub_network_abcd_n(
    mn: &MatchingNetwork,
    sub: &SubstrateParams,
    freq: f64,
    sections: usize,
) -> Result<TwoPortAbcd, SynthError> {
    let errs = mn.validate();
    if !errs.is_empty() {
        return Err(SynthError::OutOfRange(errs.join("; ")));
    }
    let w = mn.w_mm * 1e-3;
    let stub = |r_mm: f64, a: f64| -> Result<Complex64, SynthError> {
        if stub_present(r_mm, a) {
            radial_stub_admittance(w, r_mm * 1e-3, a, sub, freq, sections)
        } else {
            Ok(Complex64::new(0.0, 0.0))
        }
    };
    let y1 = stub(mn.r1_mm, mn.alpha1_deg)?;
    let y2 = stub(mn.r2_mm, mn.alpha2_deg)?;
    let line = if mn.l_mm > 0.0 {
        let m = microstrip_analyze(w, sub)?;
        let theta = 2.0 * std::f64::consts::PI * freq * m.eps_eff.sqrt() * mn.l_mm * 1e-3 / C0;
        TwoPortAbcd::tline(m.z0, theta, freq)?
    } else {
        TwoPortAbcd::identity(freq)
    };
    Ok(TwoPortAbcd::shunt(y1, freq)
        .then(&line)?
        .then(&TwoPortAbcd::shunt(y2, freq))?)
}

pub fn stub_network_abcd(
    mn: &MatchingNetwork,
    sub: &SubstrateParams,
    freq: f64,
) -> Result<TwoPortAbcd, SynthError> {
    stub_network_abcd_n(mn, sub, freq, DEFAULT_SECTIONS)
}
