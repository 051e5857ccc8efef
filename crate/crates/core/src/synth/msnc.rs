//! Netlists of the complete circuit and of one rectifying branch.
//!
//! A matching network enters the time-domain solver as an exact
//! single-frequency equivalent: open stub – line – open stub, with the line
//! delay snapped to the simulation grid and the stub susceptances solved so
//! that the chain matrix equals the physical network's at the simulated
//! frequency. The line keeps the DC path of the physical feed line and the
//! open stubs keep its DC isolation to ground.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use super::microstrip::SubstrateParams;
use super::stubs::{stub_network_abcd, StubTopology};
use super::SynthError;
use crate::diode::DiodeParams;
use crate::netalg::TwoPortAbcd;
use crate::steady::{CircuitNetlist, Element, ElementKind, Port, StubEnd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsncComponents {
    pub z0: f64,
    pub f_design: f64,
    pub r_l: f64,
    pub c1: f64,
    pub c2: f64,
    pub diode: DiodeParams,
    /// Diodes per conduction direction in each shunt bank.
    pub bank_per_direction: f64,
}

impl Default for MsncComponents {
    fn default() -> Self {
        Self {
            z0: 50.0,
            f_design: 680e6,
            r_l: 11e3,
            c1: 100e-9,
            c2: 100e-9,
            diode: DiodeParams::default(),
            bank_per_direction: 2.0,
        }
    }
}

impl MsncComponents {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        for (n, v) in [
            ("z0", self.z0),
            ("f_design", self.f_design),
            ("r_l", self.r_l),
            ("c1", self.c1),
            ("c2", self.c2),
            ("bank_per_direction", self.bank_per_direction),
        ] {
            if !(v.is_finite() && v > 0.0) {
                e.push(format!("{n} must be positive"));
            }
        }
        e.extend(
            self.diode
                .validate()
                .into_iter()
                .map(|m| format!("diode.{m}")),
        );
        e
    }
}

fn open_stub(name: String, node: &str, b: f64, freq: f64) -> Option<Element> {
    if b.abs() < 1e-7 {
        return None;
    }
    let theta = if b > 0.0 { PI / 4.0 } else { 3.0 * PI / 4.0 };
    Some(Element::new(
        &name,
        &[node],
        ElementKind::Stub {
            z0_ohm: 1.0 / b.abs(),
            theta_rad: theta,
            f_ref_hz: freq,
            end: StubEnd::Open,
        },
    ))
}

/// Stub–line–stub elements reproducing a lossless reciprocal two-port at
/// `freq` on a grid of `spp` samples per period.
pub fn realize_two_port(
    abcd: &TwoPortAbcd,
    prefix: &str,
    n1: &str,
    n2: &str,
    freq: f64,
    spp: usize,
) -> Vec<Element> {
    let x = abcd.b.im;
    let step = 2.0 * PI / spp as f64;
    let mut out = Vec::new();
    if x.abs() < 1e-9 {
        // No series part: a vanishing resistor joins the nodes and the
        // whole shunt susceptance sits at the first one.
        out.push(Element::resistor(&format!("{prefix}.join"), n1, n2, 1e-6));
        out.extend(open_stub(format!("{prefix}.s1"), n1, abcd.c.im, freq));
        return out;
    }
    // Aim for a 50-ohm line; negative series reactance needs a line
    // longer than half a wavelength.
    let base = (x.abs() / 50.0).min(1.0).asin();
    let target = if x > 0.0 { base } else { PI + base };
    let d = ((target / step).round() as usize).max(1);
    let mut theta = d as f64 * step;
    if (theta.sin() * x) <= 0.0 || theta.sin().abs() < 1e-3 {
        theta = if x > 0.0 { PI / 2.0 } else { 3.0 * PI / 2.0 };
        theta = ((theta / step).round()).max(1.0) * step;
    }
    let z = x / theta.sin();
    let b1 = (theta.cos() - abcd.d.re) / (z * theta.sin());
    let b2 = (theta.cos() - abcd.a.re) / (z * theta.sin());
    out.extend(open_stub(format!("{prefix}.s1"), n1, b1, freq));
    out.push(Element::line(
        &format!("{prefix}.line"),
        n1,
        n2,
        z,
        theta,
        freq,
    ));
    out.extend(open_stub(format!("{prefix}.s2"), n2, b2, freq));
    out
}

fn port(name: &str, node: &str, z: f64) -> Port {
    Port {
        name: name.into(),
        node: node.into(),
        reference: "0".into(),
        z_ref: z,
    }
}

fn branch_elements(
    tag: &str,
    a: &str,
    b: &str,
    d: &str,
    e: &str,
    mn: (&TwoPortAbcd, &TwoPortAbcd),
    comp: &MsncComponents,
    freq: f64,
    spp: usize,
) -> Vec<Element> {
    let mut out = realize_two_port(mn.0, &format!("MN1{tag}"), a, b, freq, spp);
    let m = comp.bank_per_direction;
    out.push(Element::diode(&format!("DP{tag}f"), b, "0", comp.diode, m));
    out.push(Element::diode(&format!("DP{tag}r"), "0", b, comp.diode, m));
    out.extend(realize_two_port(
        mn.1,
        &format!("MN2{tag}"),
        b,
        d,
        freq,
        spp,
    ));
    out.push(Element::diode(&format!("DS{tag}"), d, e, comp.diode, 1.0));
    out
}

fn networks(
    topo: &StubTopology,
    sub: &SubstrateParams,
    freq: f64,
) -> Result<(TwoPortAbcd, TwoPortAbcd), SynthError> {
    Ok((
        stub_network_abcd(&topo.mn1, sub, freq)?,
        stub_network_abcd(&topo.mn2, sub, freq)?,
    ))
}

/// Full three-port circuit: antenna on port `1`, transceiver on port `2`,
/// both rectifiers feeding the shared DC node `e` with load `RL`.
pub fn msnc_netlist(
    topo: &StubTopology,
    sub: &SubstrateParams,
    comp: &MsncComponents,
    freq: f64,
    spp: usize,
) -> Result<CircuitNetlist, SynthError> {
    let (mn1, mn2) = networks(topo, sub, freq)?;
    Ok(msnc_netlist_abcd(&mn1, &mn2, comp, freq, spp))
}

/// [`msnc_netlist`] with the matching networks given by their chain
/// matrices at `freq`.
pub fn msnc_netlist_abcd(
    mn1: &TwoPortAbcd,
    mn2: &TwoPortAbcd,
    comp: &MsncComponents,
    freq: f64,
    spp: usize,
) -> CircuitNetlist {
    let z0 = comp.z0;
    let fd = comp.f_design;
    let q = PI / 2.0;
    let mut el = vec![
        Element::line("TL_ant_a2", "ant", "a2", z0 * FRAC_1_SQRT_2, q, fd),
        Element::line("TL_tr_a3", "tr", "a3", z0 * FRAC_1_SQRT_2, q, fd),
        Element::line("TL_ant_tr", "ant", "tr", z0, q, fd),
        Element::line("TL_a2_a3", "a2", "a3", z0, q, fd),
    ];
    el.extend(branch_elements(
        "2",
        "a2",
        "b2",
        "d2",
        "e",
        (mn1, mn2),
        comp,
        freq,
        spp,
    ));
    el.extend(branch_elements(
        "3",
        "a3",
        "b3",
        "d3",
        "e",
        (mn1, mn2),
        comp,
        freq,
        spp,
    ));
    el.push(Element::capacitor("C1", "e", "0", comp.c1));
    el.push(Element::capacitor("C2", "e", "0", comp.c2));
    el.push(Element::resistor("RL", "e", "0", comp.r_l));
    CircuitNetlist {
        nodes: ["ant", "tr", "a2", "a3", "b2", "b3", "d2", "d3", "e"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ground: "0".into(),
        elements: el,
        ports: vec![port("1", "ant", z0), port("2", "tr", z0)],
        dc_load: Some("RL".into()),
    }
}

/// One rectifying branch as seen from a coupler output, with the DC node
/// carrying its half of the load (`2·r_l`) and one rectifier capacitor.
/// Drive it with half the coupler input power.
pub fn branch_netlist(
    topo: &StubTopology,
    sub: &SubstrateParams,
    comp: &MsncComponents,
    freq: f64,
    spp: usize,
) -> Result<CircuitNetlist, SynthError> {
    let (mn1, mn2) = networks(topo, sub, freq)?;
    Ok(branch_netlist_abcd(&mn1, &mn2, comp, freq, spp))
}

/// [`branch_netlist`] with the matching networks given by their chain
/// matrices at `freq`.
pub fn branch_netlist_abcd(
    mn1: &TwoPortAbcd,
    mn2: &TwoPortAbcd,
    comp: &MsncComponents,
    freq: f64,
    spp: usize,
) -> CircuitNetlist {
    let mut el = branch_elements("", "a", "b", "d", "e", (mn1, mn2), comp, freq, spp);
    el.push(Element::capacitor("C1", "e", "0", comp.c1));
    el.push(Element::resistor("RL", "e", "0", 2.0 * comp.r_l));
    CircuitNetlist {
        nodes: ["a", "b", "d", "e"].iter().map(|s| s.to_string()).collect(),
        ground: "0".into(),
        elements: el,
        ports: vec![port("1", "a", comp.z0)],
        dc_load: Some("RL".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netalg::c;
    use num_complex::Complex64;

    /// Frequency-domain ABCD of the realised elements at `freq`.
    fn realised_abcd(els: &[Element], n1: &str, freq: f64) -> TwoPortAbcd {
        let mut s1 = Complex64::new(0.0, 0.0);
        let mut s2 = Complex64::new(0.0, 0.0);
        let mut mid = TwoPortAbcd::identity(freq);
        for e in els {
            match &e.kind {
                ElementKind::Stub {
                    z0_ohm,
                    theta_rad,
                    f_ref_hz,
                    ..
                } => {
                    let th = theta_rad * freq / f_ref_hz;
                    let y = c(0.0, th.tan() / z0_ohm);
                    if e.nodes[0] == n1 {
                        s1 += y;
                    } else {
                        s2 += y;
                    }
                }
                ElementKind::Line {
                    z0_ohm,
                    theta_rad,
                    f_ref_hz,
                } => mid = TwoPortAbcd::tline(*z0_ohm, theta_rad * freq / f_ref_hz, freq).unwrap(),
                ElementKind::Resistor { value_ohm } => {
                    mid = TwoPortAbcd::series(c(*value_ohm, 0.0), freq)
                }
                _ => unreachable!(),
            }
        }
        TwoPortAbcd::shunt(s1, freq)
            .then(&mid)
            .unwrap()
            .then(&TwoPortAbcd::shunt(s2, freq))
            .unwrap()
    }

    #[test]
    fn realisation_reproduces_network() {
        let sub = SubstrateParams::default();
        let seed = StubTopology::published_seed();
        for mn in [seed.mn1, seed.mn2] {
            for f in [550e6, 680e6, 950e6] {
                let m = stub_network_abcd(&mn, &sub, f).unwrap();
                for spp in [64, 256] {
                    let els = realize_two_port(&m, "X", "p", "q", f, spp);
                    let r = realised_abcd(&els, "p", f);
                    assert!(
                        r.max_abs_diff(&m) < 1e-6 * (1.0 + m.b.norm()),
                        "{r:?} vs {m:?}"
                    );
                }
            }
        }
        // Negative series reactance and the degenerate no-line case.
        let f = 680e6;
        let m = TwoPortAbcd::tline(70.0, 4.0, f).unwrap();
        let r = realised_abcd(&realize_two_port(&m, "X", "p", "q", f, 256), "p", f);
        assert!(r.max_abs_diff(&m) < 1e-6);
        let m = TwoPortAbcd::shunt(c(0.0, 0.02), f);
        let r = realised_abcd(&realize_two_port(&m, "X", "p", "q", f, 256), "p", f);
        assert!(r.max_abs_diff(&m) < 1e-5);
    }

    #[test]
    fn netlists_validate() {
        let sub = SubstrateParams::default();
        let seed = StubTopology::published_seed();
        let comp = MsncComponents::default();
        let full = msnc_netlist(&seed, &sub, &comp, 680e6, 256).unwrap();
        assert!(full.validate().is_empty(), "{:?}", full.validate());
        let br = branch_netlist(&seed, &sub, &comp, 680e6, 64).unwrap();
        assert!(br.validate().is_empty());
    }
}
