//! Diode model consistency: analytic derivatives against finite
//! differences, charge/capacitance agreement and the large-signal limits.

use msnc_core::diode::{
    antiparallel_current, exp_lin, large_signal_extract, DiodeParams, DiodeTopology, EXP_LIMIT,
};
use msnc_core::steady::SolverConfig;
use proptest::prelude::*;

fn p() -> DiodeParams {
    DiodeParams::default()
}

/// Central difference quotient.
fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conductance_matches_finite_difference(v in -2.9..0.9f64) {
        let d = p();
        let h = 1e-6;
        let fd = central(|x| d.id_static(x), v, h);
        // Where the current is flat at −i_s the difference quotient is pure
        // rounding noise, bounded by ε·|I|/h.
        let noise = 4.0 * f64::EPSILON * d.id_static(v).abs().max(d.i_s) / h;
        let g = d.conductance(v);
        prop_assert!((g - fd).abs() <= 1e-4 * g.abs() + noise, "v={v}: {g} vs {fd}");
    }

    #[test]
    fn cap_slope_matches_finite_difference(v in -3.0..0.9f64) {
        let d = p();
        // Stay clear of the knee, where the slope is only one-sided.
        prop_assume!((v - 0.5 * d.v_j).abs() > 1e-4);
        let fd = central(|x| d.junction_cap(x), v, 1e-6);
        prop_assert!(rel_err(d.junction_cap_slope(v), fd) < 1e-4);
    }

    #[test]
    fn charge_derivative_is_capacitance(v in -3.0..0.9f64) {
        let d = p();
        let fd = central(|x| d.junction_charge(x), v, 1e-6);
        prop_assert!(rel_err(d.junction_cap(v), fd) < 1e-4);
    }

    #[test]
    fn antiparallel_pair_is_odd(v in -1.0..1.0f64) {
        let d = p();
        let i = antiparallel_current(&d, v);
        prop_assert!((i + antiparallel_current(&d, -v)).abs() <= 1e-12 * (1.0 + i.abs()));
        prop_assert!(i * v >= 0.0);
    }

    #[test]
    fn current_is_monotone(v in -2.9..0.9f64, dv in 1e-4..0.1f64) {
        let d = p();
        prop_assert!(d.id_static(v + dv) >= d.id_static(v));
    }
}

#[test]
fn capacitance_is_continuous_at_the_knee() {
    let d = p();
    let knee = 0.5 * d.v_j;
    let (lo, hi) = (d.junction_cap(knee - 1e-12), d.junction_cap(knee + 1e-12));
    assert!(rel_err(lo, hi) < 1e-9);
    let (lo, hi) = (
        d.junction_cap_slope(knee - 1e-12),
        d.junction_cap_slope(knee + 1e-12),
    );
    assert!(rel_err(lo, hi) < 1e-9);
}

#[test]
fn linearised_exponential_is_c1() {
    let below = exp_lin(EXP_LIMIT - 1e-9);
    let above = exp_lin(EXP_LIMIT + 1e-9);
    assert!(rel_err(below, above) < 1e-8);
    let slope = (exp_lin(EXP_LIMIT + 2.0) - exp_lin(EXP_LIMIT + 1.0)) / 1.0;
    assert!(rel_err(slope, EXP_LIMIT.exp()) < 1e-12);
}

#[test]
fn breakdown_is_negligible_at_zero_bias_and_strong_past_bv() {
    let d = p();
    assert!(d.id_static(0.0).abs() < 1e-30);
    // Ordinary reverse bias saturates near −i_s …
    assert!((d.id_static(-1.0) + d.i_s).abs() < 1e-3 * d.i_s);
    // … while beyond −b_v the breakdown term dominates.
    assert!(d.id_static(-d.b_v - 0.1) < -d.i_bv);
}

#[test]
fn invalid_parameters_are_reported() {
    let d = DiodeParams {
        i_s: 0.0,
        n: 0.5,
        ..p()
    };
    assert_eq!(d.validate().len(), 2);
    let cfg = SolverConfig::default();
    assert!(large_signal_extract(-10.0, 680e6, 50.0, DiodeTopology::Series, &d, &cfg).is_err());
}

#[test]
fn weak_drive_recovers_small_signal_impedance() {
    let d = p();
    let cfg = SolverConfig::default();
    let pt = large_signal_extract(-60.0, 680e6, 50.0, DiodeTopology::Series, &d, &cfg).unwrap();
    let z0 = d.small_signal_impedance(0.0, 680e6);
    assert!(
        (pt.z_d - z0).norm() / z0.norm() < 0.01,
        "{} vs {z0}",
        pt.z_d
    );
}

#[test]
fn drive_compresses_impedance() {
    let d = p();
    let cfg = SolverConfig::default();
    let mut last = f64::INFINITY;
    for dbm in [-40.0, -10.0, 5.0, 20.0] {
        let pt = large_signal_extract(dbm, 680e6, 50.0, DiodeTopology::Series, &d, &cfg).unwrap();
        let m = pt.z_d.norm();
        assert!(m <= last * (1.0 + 1e-6), "{dbm} dBm: {m} > {last}");
        last = m;
    }
    assert!(last < 10.0 * d.r_s, "{last}");
}
