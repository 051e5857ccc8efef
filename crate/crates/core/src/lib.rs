//! Analysis, simulation and synthesis of a power-adaptive nonlinear
//! branch-line coupler circuit that routes RF between an antenna, a
//! transceiver and a rectifier depending on the signal level.
//!
//! * [`netalg`] — two-port ABCD algebra, S-parameters, Touchstone files.
//! * [`blc`] — even/odd-mode coupler model and the inverse problem from
//!   the power-transfer ratio `k` to the required load impedances.
//! * [`diode`] — Schottky device model and large-signal extraction.
//! * [`steady`] — periodic steady state by time integration.
//! * [`synth`] — microstrip and radial-stub models, loading chain, GA.
//! * [`pipeline`] — scenario configuration and runners.

pub mod blc;
pub mod diode;
pub mod linalg;
pub mod netalg;
pub mod pipeline;
pub mod steady;
pub mod synth;
pub mod util;
