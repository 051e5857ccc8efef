//! Time-domain solver checks: linear circuits against phasor analysis,
//! superposition, power bookkeeping and agreement between the accelerated
//! and plain settling paths.

use msnc_core::diode::DiodeParams;
use msnc_core::netalg::{c, TwoPortAbcd};
use msnc_core::steady::{
    efficiency, integrate_to_steady, CircuitNetlist, Element, ExcitationSpec, Port, SolverConfig,
    SteadyStateResult,
};
use num_complex::Complex64;

const F: f64 = 680e6;

fn port(node: &str) -> Port {
    Port {
        name: "1".into(),
        node: node.into(),
        reference: "0".into(),
        z_ref: 50.0,
    }
}

fn net(nodes: &[&str], elements: Vec<Element>, dc_load: Option<&str>) -> CircuitNetlist {
    CircuitNetlist {
        nodes: nodes.iter().map(|s| s.to_string()).collect(),
        ground: "0".into(),
        elements,
        ports: vec![port(nodes[0])],
        dc_load: dc_load.map(Into::into),
    }
}

fn input_impedance(r: &SteadyStateResult) -> Complex64 {
    let ph = r.port_phasor("1", F).unwrap();
    ph.v / ph.i
}

/// Half-wave rectifier: series diode into a smoothing capacitor and load.
fn rectifier(c_smooth: f64) -> CircuitNetlist {
    net(
        &["a", "b"],
        vec![
            Element::diode("D1", "a", "b", DiodeParams::default(), 1.0),
            Element::capacitor("CS", "b", "0", c_smooth),
            Element::resistor("RL", "b", "0", 1000.0),
        ],
        Some("RL"),
    )
}

#[test]
fn series_rlc_matches_phasor_impedance() {
    let (r, l, cap) = (30.0, 8e-9, 4e-12);
    let n = net(
        &["a", "b", "c"],
        vec![
            Element::resistor("R1", "a", "b", r),
            Element::inductor("L1", "b", "c", l),
            Element::capacitor("C1", "c", "0", cap),
        ],
        None,
    );
    let res = integrate_to_steady(
        &n,
        &ExcitationSpec::single(F, -10.0),
        &SolverConfig::default(),
    )
    .unwrap();
    let w = 2.0 * std::f64::consts::PI * F;
    // Oracle: R + jωL + 1/(jωC), with the trapezoidal rule's frequency
    // warping well below the tolerance at 256 samples per period.
    let expect = c(r, w * l - 1.0 / (w * cap));
    let got = input_impedance(&res);
    assert!(
        (got - expect).norm() / expect.norm() < 2e-3,
        "{got} vs {expect}"
    );
    assert!(res.converged);
}

#[test]
fn terminated_line_matches_chain_matrix() {
    let n = net(
        &["a", "b"],
        vec![
            Element::line("T1", "a", "b", 35.0, std::f64::consts::FRAC_PI_2, F),
            Element::resistor("R1", "b", "0", 100.0),
        ],
        None,
    );
    let res = integrate_to_steady(
        &n,
        &ExcitationSpec::single(F, 0.0),
        &SolverConfig::default(),
    )
    .unwrap();
    let line = TwoPortAbcd::tline(35.0, std::f64::consts::FRAC_PI_2, F).unwrap();
    let expect = line.input_impedance(c(100.0, 0.0)).unwrap();
    let got = input_impedance(&res);
    assert!(
        (got - expect).norm() / expect.norm() < 1e-3,
        "{got} vs {expect}"
    );
}

#[test]
fn linear_response_scales_with_amplitude() {
    let n = net(
        &["a", "b"],
        vec![
            Element::line("T1", "a", "b", 70.0, 1.0, F),
            Element::resistor("R1", "b", "0", 20.0),
            Element::capacitor("C1", "b", "0", 3e-12),
        ],
        None,
    );
    let cfg = SolverConfig::default();
    let lo = integrate_to_steady(&n, &ExcitationSpec::single(F, -20.0), &cfg).unwrap();
    // +20 dB of available power is ten times the amplitude.
    let hi = integrate_to_steady(&n, &ExcitationSpec::single(F, 0.0), &cfg).unwrap();
    let (a, b) = (
        lo.port_phasor("1", F).unwrap(),
        hi.port_phasor("1", F).unwrap(),
    );
    assert!((b.v - 10.0 * a.v).norm() < 1e-6 * b.v.norm());
    assert!((b.i - 10.0 * a.i).norm() < 1e-6 * b.i.norm());
    assert!((hi.p_in_avg / lo.p_in_avg - 100.0).abs() < 1e-4);
}

#[test]
fn lossless_network_absorbs_nothing() {
    let n = net(
        &["a", "b"],
        vec![
            Element::line("T1", "a", "b", 50.0, 0.7, F),
            Element::capacitor("C1", "b", "0", 2e-12),
        ],
        None,
    );
    let res = integrate_to_steady(
        &n,
        &ExcitationSpec::single(F, 0.0),
        &SolverConfig::default(),
    )
    .unwrap();
    let p_av = res.p_available;
    assert!(res.p_in_avg.abs() < 1e-6 * p_av, "{}", res.p_in_avg);
    let ph = res.port_phasor("1", F).unwrap();
    let (a, b) = ph.waves(50.0);
    assert!(((b / a).norm() - 1.0).abs() < 1e-4);
}

#[test]
fn rectifier_balances_power() {
    let cfg = SolverConfig::default();
    for dbm in [-30.0, -10.0, 5.0] {
        let res = integrate_to_steady(&rectifier(100e-12), &ExcitationSpec::single(F, dbm), &cfg)
            .unwrap();
        let e = &res.diagnostics.energy;
        assert!(res.converged, "{dbm} dBm");
        assert!(e.relative_imbalance < 0.01, "{dbm} dBm: {e:?}");
        // The DC load power is part of the resistive share.
        assert!(res.p_dc <= e.resistive * (1.0 + 1e-9));
        let eta = efficiency(&res).unwrap();
        assert!(eta > 0.0 && eta < 1.0, "{eta}");
        assert!(res.p_in_avg <= res.p_available * (1.0 + 1e-9));
    }
}

#[test]
fn halving_the_time_step_changes_little() {
    let exc = ExcitationSpec::single(F, -10.0);
    let coarse = SolverConfig {
        samples_per_period: 256,
        ..Default::default()
    };
    let fine = SolverConfig {
        samples_per_period: 512,
        ..Default::default()
    };
    let a = integrate_to_steady(&rectifier(100e-12), &exc, &coarse).unwrap();
    let b = integrate_to_steady(&rectifier(100e-12), &exc, &fine).unwrap();
    assert!(
        (a.p_dc - b.p_dc).abs() < 2e-3 * b.p_dc,
        "{} vs {}",
        a.p_dc,
        b.p_dc
    );
}

#[test]
fn accelerated_settling_agrees_with_plain_integration() {
    // A 2 nF reservoir is slow: 2 µs against a 1.5 ns period.
    let n = rectifier(2e-9);
    let exc = ExcitationSpec::single(F, -10.0);
    let base = SolverConfig {
        samples_per_period: 64,
        ..Default::default()
    };
    let fast = integrate_to_steady(&n, &exc, &base).unwrap();
    assert!(fast.diagnostics.accelerated);
    let plain = SolverConfig {
        accelerate: false,
        shooting: false,
        slow_cap_threshold: 1.0,
        drift_tol: 1e-9,
        max_cycles: 40_000,
        ..base
    };
    let slow = integrate_to_steady(&n, &exc, &plain).unwrap();
    assert!(!slow.diagnostics.accelerated);
    assert!(slow.converged);
    assert!(
        (fast.p_dc - slow.p_dc).abs() < 5e-3 * slow.p_dc,
        "{} vs {}",
        fast.p_dc,
        slow.p_dc
    );
    assert!(fast.diagnostics.time_steps < slow.diagnostics.time_steps);
}

#[test]
fn invalid_inputs_are_rejected() {
    let mut n = rectifier(100e-12);
    n.elements
        .push(Element::resistor("R9", "b", "nowhere", 10.0));
    assert!(integrate_to_steady(
        &n,
        &ExcitationSpec::single(F, -10.0),
        &SolverConfig::default()
    )
    .is_err());
    let mut exc = ExcitationSpec::single(F, -10.0);
    exc.z_source = -1.0;
    assert!(integrate_to_steady(&rectifier(100e-12), &exc, &SolverConfig::default()).is_err());
}
