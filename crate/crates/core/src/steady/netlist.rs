//! Circuit description accepted by the time-domain solver, plus the JSON
//! document format it is exchanged in.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::diode::DiodeParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StubEnd {
    Open,
    Short,
}

fn one() -> f64 {
    1.0
}

/// Element payload, tagged by `type` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ElementKind {
    #[serde(rename = "R")]
    Resistor { value_ohm: f64 },
    #[serde(rename = "C")]
    Capacitor { value_f: f64 },
    #[serde(rename = "L")]
    Inductor { value_h: f64 },
    /// Ideal lossless line. Nodes are `[p1, p2]` (ground referenced) or
    /// `[p1, r1, p2, r2]`.
    #[serde(rename = "TL")]
    Line {
        z0_ohm: f64,
        theta_rad: f64,
        f_ref_hz: f64,
    },
    /// Terminated line seen from one end. Nodes are `[p]` or `[p, r]`.
    #[serde(rename = "STUB")]
    Stub {
        z0_ohm: f64,
        theta_rad: f64,
        f_ref_hz: f64,
        end: StubEnd,
    },
    /// Diode from `nodes[0]` (anode) to `nodes[1]` (cathode); `m` identical
    /// devices in parallel.
    #[serde(rename = "D")]
    Diode {
        #[serde(default)]
        params: DiodeParams,
        #[serde(default = "one")]
        m: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    #[serde(default)]
    pub name: String,
    pub nodes: Vec<String>,
    #[serde(flatten)]
    pub kind: ElementKind,
}

impl Element {
    pub fn resistor(name: &str, a: &str, b: &str, ohms: f64) -> Self {
        Self::new(name, &[a, b], ElementKind::Resistor { value_ohm: ohms })
    }

    pub fn capacitor(name: &str, a: &str, b: &str, farads: f64) -> Self {
        Self::new(name, &[a, b], ElementKind::Capacitor { value_f: farads })
    }

    pub fn inductor(name: &str, a: &str, b: &str, henries: f64) -> Self {
        Self::new(name, &[a, b], ElementKind::Inductor { value_h: henries })
    }

    pub fn line(name: &str, a: &str, b: &str, z0: f64, theta: f64, f_ref: f64) -> Self {
        Self::new(
            name,
            &[a, b],
            ElementKind::Line {
                z0_ohm: z0,
                theta_rad: theta,
                f_ref_hz: f_ref,
            },
        )
    }

    pub fn diode(name: &str, anode: &str, cathode: &str, params: DiodeParams, m: f64) -> Self {
        Self::new(name, &[anode, cathode], ElementKind::Diode { params, m })
    }

    pub fn new(name: &str, nodes: &[&str], kind: ElementKind) -> Self {
        Self {
            name: name.to_string(),
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            kind,
        }
    }

    fn expected_node_counts(&self) -> &'static [usize] {
        match self.kind {
            ElementKind::Line { .. } => &[2, 4],
            ElementKind::Stub { .. } => &[1, 2],
            _ => &[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub node: String,
    #[serde(rename = "ref", default = "ground_name")]
    pub reference: String,
    #[serde(rename = "z_ref_ohm", default = "fifty")]
    pub z_ref: f64,
}

fn ground_name() -> String {
    "0".into()
}

fn fifty() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitNetlist {
    /// Non-ground node labels.
    pub nodes: Vec<String>,
    pub ground: String,
    pub elements: Vec<Element>,
    pub ports: Vec<Port>,
    /// Name of the resistor whose DC power is reported as `p_dc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_load: Option<String>,
}

impl CircuitNetlist {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("netlist serialises")
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    /// Returns every structural problem; empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut known: HashMap<&str, usize> = HashMap::new();
        known.insert(self.ground.as_str(), 0);
        for (i, n) in self.nodes.iter().enumerate() {
            if n == &self.ground {
                errs.push(format!(
                    "nodes[{i}]: ground '{n}' must not be listed as a node"
                ));
            } else if known.insert(n.as_str(), i + 1).is_some() {
                errs.push(format!("nodes[{i}]: duplicate node '{n}'"));
            }
        }
        let mut names = BTreeSet::new();
        let mut dsu = Dsu::new(self.nodes.len() + 1);
        for (i, el) in self.elements.iter().enumerate() {
            let at = format!("elements[{i}]");
            if !el.name.is_empty() && !names.insert(el.name.as_str()) {
                errs.push(format!("{at}.name: duplicate element name '{}'", el.name));
            }
            if !el.expected_node_counts().contains(&el.nodes.len()) {
                errs.push(format!(
                    "{at}.nodes: expected {:?} nodes, got {}",
                    el.expected_node_counts(),
                    el.nodes.len()
                ));
            }
            let mut idx = Vec::new();
            for (j, n) in el.nodes.iter().enumerate() {
                match known.get(n.as_str()) {
                    Some(&k) => idx.push(k),
                    None => errs.push(format!("{at}.nodes[{j}]: unknown node '{n}'")),
                }
            }
            for w in idx.windows(2) {
                dsu.union(w[0], w[1]);
            }
            let positive = |v: f64| v.is_finite() && v > 0.0;
            match &el.kind {
                ElementKind::Resistor { value_ohm } if !positive(*value_ohm) => {
                    errs.push(format!("{at}.value_ohm: must be positive"))
                }
                ElementKind::Capacitor { value_f } if !positive(*value_f) => {
                    errs.push(format!("{at}.value_f: must be positive"))
                }
                ElementKind::Inductor { value_h } if !positive(*value_h) => {
                    errs.push(format!("{at}.value_h: must be positive"))
                }
                ElementKind::Line {
                    z0_ohm,
                    theta_rad,
                    f_ref_hz,
                }
                | ElementKind::Stub {
                    z0_ohm,
                    theta_rad,
                    f_ref_hz,
                    ..
                } => {
                    if !positive(*z0_ohm) {
                        errs.push(format!("{at}.z0_ohm: must be positive"));
                    }
                    if !positive(*theta_rad) {
                        errs.push(format!("{at}.theta_rad: must be positive"));
                    }
                    if !positive(*f_ref_hz) {
                        errs.push(format!("{at}.f_ref_hz: must be positive"));
                    }
                }
                ElementKind::Diode { params, m } => {
                    for e in params.validate() {
                        errs.push(format!("{at}.params: {e}"));
                    }
                    if !positive(*m) {
                        errs.push(format!("{at}.m: must be positive"));
                    }
                }
                _ => {}
            }
        }
        let mut port_names = BTreeSet::new();
        for (i, p) in self.ports.iter().enumerate() {
            let at = format!("ports[{i}]");
            if !port_names.insert(p.name.as_str()) {
                errs.push(format!("{at}.name: duplicate port '{}'", p.name));
            }
            let a = known.get(p.node.as_str());
            let b = known.get(p.reference.as_str());
            if a.is_none() {
                errs.push(format!("{at}.node: unknown node '{}'", p.node));
            }
            if b.is_none() {
                errs.push(format!("{at}.ref: unknown node '{}'", p.reference));
            }
            if let (Some(&a), Some(&b)) = (a, b) {
                dsu.union(a, b);
            }
            if !(p.z_ref.is_finite() && p.z_ref > 0.0) {
                errs.push(format!("{at}.z_ref_ohm: must be positive"));
            }
        }
        let root = dsu.find(0);
        for (i, n) in self.nodes.iter().enumerate() {
            if known.get(n.as_str()) == Some(&(i + 1)) && dsu.find(i + 1) != root {
                errs.push(format!("nodes[{i}]: '{n}' is not connected to ground"));
            }
        }
        if let Some(load) = &self.dc_load {
            match self.element(load) {
                Some(Element {
                    kind: ElementKind::Resistor { .. },
                    ..
                }) => {}
                _ => errs.push(format!("dc_load: '{load}' is not a resistor")),
            }
        }
        errs
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rc() -> CircuitNetlist {
        CircuitNetlist {
            nodes: vec!["in".into(), "out".into()],
            ground: "0".into(),
            elements: vec![
                Element::resistor("R1", "in", "out", 50.0),
                Element::capacitor("C1", "out", "0", 1e-7),
            ],
            ports: vec![Port {
                name: "1".into(),
                node: "in".into(),
                reference: "0".into(),
                z_ref: 50.0,
            }],
            dc_load: None,
        }
    }

    #[test]
    fn json_round_trip() {
        let n = rc();
        let back = CircuitNetlist::from_json(&n.to_json()).unwrap();
        assert_eq!(n, back);
        assert!(n.validate().is_empty());
    }

    #[test]
    fn parses_documented_shape() {
        let text = r#"{"nodes":["a"],"ground":"0",
            "elements":[{"type":"R","nodes":["a","0"],"value_ohm":11000},
                        {"type":"D","name":"D1","nodes":["a","0"]}],
            "ports":[{"name":"1","node":"a","ref":"0","z_ref_ohm":50}]}"#;
        let n = CircuitNetlist::from_json(text).unwrap();
        assert!(n.validate().is_empty());
        match &n.elements[1].kind {
            ElementKind::Diode { params, m } => {
                assert_eq!(*m, 1.0);
                assert_eq!(params.r_s, 12.0);
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn reports_every_problem() {
        let mut n = rc();
        n.elements.push(Element::resistor("R1", "x", "0", -1.0));
        n.nodes.push("float".into());
        n.ports[0].node = "nowhere".into();
        let errs = n.validate();
        assert!(errs.iter().any(|e| e.contains("duplicate element")));
        assert!(errs.iter().any(|e| e.contains("unknown node 'x'")));
        assert!(errs.iter().any(|e| e.contains("value_ohm")));
        assert!(errs.iter().any(|e| e.contains("'float' is not connected")));
        assert!(errs.iter().any(|e| e.contains("ports[0].node")));
    }
}
