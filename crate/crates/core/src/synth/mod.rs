//! Matching-network modelling and synthesis.
//!
//! The branch hanging off each coupler output is the loading chain
//! `MN1 · shunt(4·y_d) · MN2 · series(z_d)`, terminated at the rectifier
//! node by the symmetry-plane load of the selected mode. Matching networks
//! are double radial stubs on microstrip; their geometry is searched by a
//! genetic algorithm against full nonlinear simulations of one branch.

pub mod design;
pub mod ga;
pub mod microstrip;
pub mod msnc;
pub mod stubs;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netalg::{c, NetError, TwoPortAbcd};

pub use design::{design_matching_networks, DesignConfig, DesignReport};
pub use ga::{ga_optimize, GaConfig, GaGeneration, GaResult};
pub use microstrip::{
    microstrip_analyze, microstrip_synthesize, MicrostripDesign, SubstrateParams,
};
pub use stubs::{radial_stub_admittance, stub_network_abcd, MatchingNetwork, StubTopology};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Steady(#[from] crate::steady::SteadyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Even,
    Odd,
}

/// `mn1 · [[1,0],[4·y_d,1]] · mn2 · [[1,z_d],[0,1]]`.
pub fn loading_chain_abcd(
    mn1: &TwoPortAbcd,
    y_d: Complex64,
    mn2: &TwoPortAbcd,
    z_d: Complex64,
) -> Result<TwoPortAbcd, NetError> {
    let f = mn1.freq;
    mn1.then(&TwoPortAbcd::shunt(4.0 * y_d, f))?
        .then(mn2)?
        .then(&TwoPortAbcd::series(z_d, f))
}

/// Symmetry-plane termination: a short in the odd mode; in the even mode
/// each half carries `2·r_l` in parallel with its rectifier capacitor.
pub fn mode_termination(mode: Mode, r_l: f64, cap: f64, freq: f64) -> Complex64 {
    match mode {
        Mode::Odd => c(0.0, 0.0),
        Mode::Even => {
            let y = c(1.0 / (2.0 * r_l), 2.0 * std::f64::consts::PI * freq * cap);
            c(1.0, 0.0) / y
        }
    }
}

pub fn z_a_from_chain(
    chain: &TwoPortAbcd,
    mode: Mode,
    r_l: f64,
    cap: f64,
    freq: f64,
) -> Result<Complex64, SynthError> {
    if !(r_l > 0.0) {
        return Err(SynthError::OutOfRange("r_l must be positive".into()));
    }
    Ok(chain.input_impedance(mode_termination(mode, r_l, cap, freq))?)
}
