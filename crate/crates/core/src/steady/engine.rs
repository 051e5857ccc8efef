//! Fixed-step trapezoidal integration of the nodal equations.
//!
//! Unknowns are node voltages (plus one internal node per diode with series
//! resistance). Every reactive element is replaced by its trapezoidal
//! companion, lines by their Bergeron (method of characteristics) model, and
//! diodes are linearised per Newton iteration with junction-voltage limiting.
//! A failed step is retried as two half steps, recursively.

use std::collections::HashMap;

use num_complex::Complex64;

use super::netlist::{CircuitNetlist, ElementKind, StubEnd};
use super::{SolverConfig, SteadyError};
use crate::diode::DiodeParams;
use crate::linalg::Lu;

type Node = Option<usize>;

const GMIN: f64 = 1e-12;

/// Impedance scaling currents into the state vector.
const STATE_R: f64 = 50.0;

#[inline]
fn nv(x: &[f64], n: Node) -> f64 {
    n.map_or(0.0, |i| x[i])
}

fn stamp_g(m: &mut [f64], n: usize, a: Node, b: Node, g: f64) {
    if let Some(i) = a {
        m[i * n + i] += g;
    }
    if let Some(j) = b {
        m[j * n + j] += g;
    }
    if let (Some(i), Some(j)) = (a, b) {
        m[i * n + j] -= g;
        m[j * n + i] -= g;
    }
}

/// A source driving current `i` out of `a`, through the element, into `b`
/// is equivalent to injecting `i` into `b` and removing it from `a`.
fn stamp_i(r: &mut [f64], a: Node, b: Node, i: f64) {
    if let Some(a) = a {
        r[a] -= i;
    }
    if let Some(b) = b {
        r[b] += i;
    }
}

fn pnjlim(vnew: f64, vold: f64, vt: f64, vcrit: f64) -> f64 {
    if vnew > vcrit && (vnew - vold).abs() > 2.0 * vt {
        if vold > 0.0 {
            let arg = 1.0 + (vnew - vold) / vt;
            if arg > 0.0 {
                vold + vt * arg.ln()
            } else {
                vcrit
            }
        } else {
            vt * (vnew / vt).ln()
        }
    } else {
        vnew
    }
}

#[derive(Debug, Clone)]
struct Res {
    a: Node,
    b: Node,
    g: f64,
}

#[derive(Debug, Clone)]
struct Cap {
    a: Node,
    b: Node,
    c: f64,
    v: f64,
    i: f64,
    slow: Option<usize>,
}

#[derive(Debug, Clone)]
struct Ind {
    a: Node,
    b: Node,
    l: f64,
    v: f64,
    i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LineKind {
    Through,
    Open,
    Short,
}

#[derive(Debug, Clone)]
struct Line {
    p1: Node,
    r1: Node,
    p2: Node,
    r2: Node,
    y0: f64,
    z0: f64,
    d: usize,
    kind: LineKind,
    buf1: Vec<(f64, f64)>,
    buf2: Vec<(f64, f64)>,
    h1: f64,
    h2: f64,
}

impl Line {
    fn get(buf: &[(f64, f64)], k: i64) -> (f64, f64) {
        if k < 0 {
            (0.0, 0.0)
        } else {
            buf[(k as usize) % buf.len()]
        }
    }

    /// History currents at `(step + s)·dt`.
    fn history(&self, step: u64, s: f64) -> (f64, f64) {
        let lo = step as i64 - self.d as i64;
        let mix = |buf: &[(f64, f64)]| {
            let (v0, i0) = Self::get(buf, lo);
            let (v1, i1) = Self::get(buf, lo + 1);
            let v = (1.0 - s) * v0 + s * v1;
            let i = (1.0 - s) * i0 + s * i1;
            v * self.y0 + i
        };
        (mix(&self.buf2), mix(&self.buf1))
    }
}

#[derive(Debug, Clone)]
struct Dio {
    a: Node,
    k: Node,
    /// Junction anode; equals `a` when there is no series resistance.
    x: Node,
    p: DiodeParams,
    vt_n: f64,
    vcrit: f64,
    vcrit_bv: f64,
    vj: f64,
    q: f64,
    iq: f64,
    v_lin: f64,
}

impl Dio {
    fn limit(&self, v: f64) -> (f64, bool) {
        let out = if v > 0.0 {
            pnjlim(v, self.v_lin, self.vt_n, self.vcrit)
        } else if v < -self.p.b_v {
            let w = -(v + self.p.b_v);
            let w_old = -(self.v_lin + self.p.b_v);
            -pnjlim(w, w_old, self.vt_n, self.vcrit_bv) - self.p.b_v
        } else {
            v
        };
        (out, out != v)
    }

    /// Junction current (static + displacement) and its derivative for a
    /// trapezoidal step of length `h`.
    fn eval(&self, v: f64, h: f64) -> (f64, f64) {
        let id = self.p.id_static(v);
        let g = self.p.conductance(v);
        let q = self.p.junction_charge(v);
        let iq = 2.0 / h * (q - self.q) - self.iq;
        let gq = 2.0 / h * self.p.junction_cap(v);
        (id + iq + GMIN * v, g + gq + GMIN)
    }

    fn terminal_current(&self, x: &[f64], h: f64) -> f64 {
        if self.x != self.a {
            (nv(x, self.a) - nv(x, self.x)) * (1.0 / self.p.r_s)
        } else {
            self.eval(self.vj, h).0
        }
    }
}

#[derive(Debug, Clone)]
struct PortDev {
    p: Node,
    r: Node,
    z: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct SlowGroup {
    a: Node,
    b: Node,
    pub c: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ToneDrive {
    pub amp: f64,
    pub omega: f64,
    pub phase: f64,
}

/// Which power terms a measurement tracks for each element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Category {
    Resistive,
    Diode,
    Reactive,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct PeriodSummary {
    pub slow_current: Vec<f64>,
    pub load_mean: f64,
    pub delta: f64,
    pub scale: f64,
    /// Slow-group current samples (only when recorded).
    pub slow_wave: Vec<Vec<f64>>,
}

/// Accumulators for the measured (final) period.
#[derive(Debug, Clone)]
pub(crate) struct Measure {
    pub tone_freqs: Vec<f64>,
    pub waves: Vec<Vec<f64>>,
    /// `[port][tone]` phasor sums.
    pub port_v: Vec<Vec<Complex64>>,
    pub port_i: Vec<Vec<Complex64>>,
    pub terms: Vec<(String, Category)>,
    pub energy: Vec<f64>,
    prev: Vec<(f64, f64)>,
    pub p_port: Vec<f64>,
    prev_port: Vec<(f64, f64)>,
    pub load_sum: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Engine {
    n: usize,
    pub user_nodes: Vec<(String, usize)>,
    res: Vec<Res>,
    res_names: Vec<String>,
    caps: Vec<Cap>,
    cap_names: Vec<String>,
    inds: Vec<Ind>,
    ind_names: Vec<String>,
    lines: Vec<Line>,
    line_names: Vec<String>,
    diodes: Vec<Dio>,
    diode_names: Vec<String>,
    ports: Vec<PortDev>,
    pub port_names: Vec<String>,
    driven: usize,
    z_s: f64,
    tones: Vec<ToneDrive>,
    pub dt: f64,
    pub spp: usize,
    step: u64,
    x: Vec<f64>,
    x_prev: Vec<f64>,
    pub slow: Vec<SlowGroup>,
    slow_active: bool,
    g_big: f64,
    load: Option<usize>,
    mats: Vec<Option<Vec<f64>>>,
    newton_max: usize,
    reltol: f64,
    abstol: f64,
    max_halvings: usize,
    pub stats_newton_max: usize,
    pub stats_halvings: usize,
    pub stats_steps: u64,
    pub max_delay_error: f64,
}

impl Engine {
    pub fn build(
        net: &CircuitNetlist,
        driven_port: &str,
        z_s: f64,
        tones: Vec<ToneDrive>,
        dt: f64,
        spp: usize,
        cfg: &SolverConfig,
    ) -> Result<Self, SteadyError> {
        let mut index: HashMap<&str, Node> = HashMap::new();
        index.insert(net.ground.as_str(), None);
        let mut user_nodes = Vec::new();
        for (i, n) in net.nodes.iter().enumerate() {
            index.insert(n.as_str(), Some(i));
            user_nodes.push((n.clone(), i));
        }
        let mut n = net.nodes.len();
        let node = |s: &String| -> Node { index[s.as_str()] };

        let mut e = Engine {
            n: 0,
            user_nodes,
            res: vec![],
            res_names: vec![],
            caps: vec![],
            cap_names: vec![],
            inds: vec![],
            ind_names: vec![],
            lines: vec![],
            line_names: vec![],
            diodes: vec![],
            diode_names: vec![],
            ports: vec![],
            port_names: vec![],
            driven: 0,
            z_s,
            tones,
            dt,
            spp,
            step: 0,
            x: vec![],
            x_prev: vec![],
            slow: vec![],
            slow_active: false,
            g_big: cfg.slow_conductance,
            load: None,
            mats: vec![None; cfg.max_step_halvings + 1],
            newton_max: cfg.newton_max_iter,
            reltol: cfg.newton_reltol,
            abstol: cfg.newton_abstol,
            max_halvings: cfg.max_step_halvings,
            stats_newton_max: 0,
            stats_halvings: 0,
            stats_steps: 0,
            max_delay_error: 0.0,
        };

        for (ei, el) in net.elements.iter().enumerate() {
            let name = if el.name.is_empty() {
                format!("#{ei}")
            } else {
                el.name.clone()
            };
            let nodes: Vec<Node> = el.nodes.iter().map(node).collect();
            match &el.kind {
                ElementKind::Resistor { value_ohm } => {
                    if net.dc_load.as_deref() == Some(el.name.as_str()) {
                        e.load = Some(e.res.len());
                    }
                    e.res.push(Res {
                        a: nodes[0],
                        b: nodes[1],
                        g: 1.0 / value_ohm,
                    });
                    e.res_names.push(name);
                }
                ElementKind::Capacitor { value_f } => {
                    let slow = if cfg.accelerate && *value_f >= cfg.slow_cap_threshold {
                        let pos = e.slow.iter().position(|g| {
                            (g.a, g.b) == (nodes[0], nodes[1]) || (g.a, g.b) == (nodes[1], nodes[0])
                        });
                        Some(match pos {
                            Some(p) => {
                                e.slow[p].c += value_f;
                                p
                            }
                            None => {
                                e.slow.push(SlowGroup {
                                    a: nodes[0],
                                    b: nodes[1],
                                    c: *value_f,
                                    u: 0.0,
                                });
                                e.slow.len() - 1
                            }
                        })
                    } else {
                        None
                    };
                    // Orient the capacitor like its group so voltages agree.
                    let (a, b) = match slow {
                        Some(g) if e.slow[g].a != nodes[0] => (nodes[1], nodes[0]),
                        _ => (nodes[0], nodes[1]),
                    };
                    e.caps.push(Cap {
                        a,
                        b,
                        c: *value_f,
                        v: 0.0,
                        i: 0.0,
                        slow,
                    });
                    e.cap_names.push(name);
                }
                ElementKind::Inductor { value_h } => {
                    e.inds.push(Ind {
                        a: nodes[0],
                        b: nodes[1],
                        l: *value_h,
                        v: 0.0,
                        i: 0.0,
                    });
                    e.ind_names.push(name);
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
                    let tau = theta_rad / (2.0 * std::f64::consts::PI * f_ref_hz);
                    let d = ((tau / dt).round() as usize).max(1);
                    e.max_delay_error = e.max_delay_error.max((d as f64 * dt - tau).abs() / tau);
                    let (p1, r1, p2, r2, kind) = match (&el.kind, nodes.len()) {
                        (ElementKind::Line { .. }, 2) => {
                            (nodes[0], None, nodes[1], None, LineKind::Through)
                        }
                        (ElementKind::Line { .. }, _) => {
                            (nodes[0], nodes[1], nodes[2], nodes[3], LineKind::Through)
                        }
                        (ElementKind::Stub { end, .. }, len) => {
                            let r = if len == 2 { nodes[1] } else { None };
                            let k = match end {
                                StubEnd::Open => LineKind::Open,
                                StubEnd::Short => LineKind::Short,
                            };
                            (nodes[0], r, None, None, k)
                        }
                        _ => unreachable!(),
                    };
                    e.lines.push(Line {
                        p1,
                        r1,
                        p2,
                        r2,
                        y0: 1.0 / z0_ohm,
                        z0: *z0_ohm,
                        d,
                        kind,
                        buf1: vec![(0.0, 0.0); d + 2],
                        buf2: vec![(0.0, 0.0); d + 2],
                        h1: 0.0,
                        h2: 0.0,
                    });
                    e.line_names.push(name);
                }
                ElementKind::Diode { params, m } => {
                    let p = DiodeParams {
                        i_s: params.i_s * m,
                        c_j0: params.c_j0 * m,
                        r_s: params.r_s / m,
                        i_bv: params.i_bv * m,
                        ..*params
                    };
                    let x = if p.r_s > 0.0 {
                        n += 1;
                        Some(n - 1)
                    } else {
                        nodes[0]
                    };
                    let vt_n = 1.0 / p.alpha();
                    e.diodes.push(Dio {
                        a: nodes[0],
                        k: nodes[1],
                        x,
                        p,
                        vt_n,
                        vcrit: vt_n * (vt_n / (std::f64::consts::SQRT_2 * p.i_s)).ln(),
                        vcrit_bv: vt_n
                            * (vt_n / (std::f64::consts::SQRT_2 * p.i_bv.max(1e-30))).ln(),
                        vj: 0.0,
                        q: 0.0,
                        iq: 0.0,
                        v_lin: 0.0,
                    });
                    e.diode_names.push(name);
                }
            }
        }
        for p in &net.ports {
            if p.name == driven_port {
                e.driven = e.ports.len();
            }
            e.ports.push(PortDev {
                p: node(&p.node),
                r: node(&p.reference),
                z: p.z_ref,
            });
            e.port_names.push(p.name.clone());
        }
        if !net.ports.iter().any(|p| p.name == driven_port) {
            return Err(SteadyError::InvalidExcitation(format!(
                "unknown port '{driven_port}'"
            )));
        }
        e.n = n;
        e.x = vec![0.0; n];
        e.x_prev = vec![0.0; n];
        e.slow_active = !e.slow.is_empty();
        Ok(e)
    }

    pub fn has_slow(&self) -> bool {
        !self.slow.is_empty()
    }

    pub fn has_load(&self) -> bool {
        self.load.is_some()
    }

    pub fn load_resistance(&self) -> Option<f64> {
        self.load.map(|i| 1.0 / self.res[i].g)
    }

    fn source_voltage(&self, t: f64) -> f64 {
        self.tones
            .iter()
            .map(|tn| tn.amp * (tn.omega * t + tn.phase).cos())
            .sum()
    }

    fn linear_matrix(&self, h: f64) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] += GMIN;
        }
        for r in &self.res {
            stamp_g(&mut m, n, r.a, r.b, r.g);
        }
        for c in &self.caps {
            if !(self.slow_active && c.slow.is_some()) {
                stamp_g(&mut m, n, c.a, c.b, 2.0 * c.c / h);
            }
        }
        if self.slow_active {
            for g in &self.slow {
                stamp_g(&mut m, n, g.a, g.b, self.g_big);
            }
        }
        for l in &self.inds {
            stamp_g(&mut m, n, l.a, l.b, h / (2.0 * l.l));
        }
        for ln in &self.lines {
            stamp_g(&mut m, n, ln.p1, ln.r1, ln.y0);
            if ln.kind == LineKind::Through {
                stamp_g(&mut m, n, ln.p2, ln.r2, ln.y0);
            }
        }
        for (k, p) in self.ports.iter().enumerate() {
            let z = if k == self.driven { self.z_s } else { p.z };
            stamp_g(&mut m, n, p.p, p.r, 1.0 / z);
        }
        for d in &self.diodes {
            if d.x != d.a {
                stamp_g(&mut m, n, d.a, d.x, 1.0 / d.p.r_s);
            }
        }
        m
    }

    /// One base step, halving on Newton failure.
    fn advance(&mut self) -> Result<(), SteadyError> {
        let x_before = self.x.clone();
        self.substep(0.0, 1.0, 0)?;
        self.x_prev = x_before;
        self.step += 1;
        self.stats_steps += 1;
        Ok(())
    }

    fn substep(&mut self, s0: f64, s1: f64, depth: usize) -> Result<(), SteadyError> {
        if self.try_step(s0, s1, depth) {
            return Ok(());
        }
        if depth >= self.max_halvings {
            return Err(SteadyError::NewtonFailure {
                time: (self.step as f64 + s1) * self.dt,
                halvings: depth,
            });
        }
        self.stats_halvings += 1;
        let sm = 0.5 * (s0 + s1);
        self.substep(s0, sm, depth + 1)?;
        self.substep(sm, s1, depth + 1)
    }

    fn try_step(&mut self, s0: f64, s1: f64, depth: usize) -> bool {
        let n = self.n;
        let h = (s1 - s0) * self.dt;
        let t = (self.step as f64 + s1) * self.dt;
        if self.mats[depth].is_none() {
            self.mats[depth] = Some(self.linear_matrix(h));
        }

        let mut rhs = vec![0.0; n];
        for c in &self.caps {
            if self.slow_active && c.slow.is_some() {
                continue;
            }
            let ih = 2.0 * c.c / h * c.v + c.i;
            stamp_i(&mut rhs, c.b, c.a, ih);
        }
        if self.slow_active {
            for g in &self.slow {
                stamp_i(&mut rhs, g.b, g.a, self.g_big * g.u);
            }
        }
        for l in &self.inds {
            let ih = l.i + h / (2.0 * l.l) * l.v;
            stamp_i(&mut rhs, l.a, l.b, ih);
        }
        for ln in self.lines.iter_mut() {
            let (h1, h2) = ln.history(self.step, s1);
            ln.h1 = h1;
            ln.h2 = h2;
            stamp_i(&mut rhs, ln.r1, ln.p1, h1);
            if ln.kind == LineKind::Through {
                stamp_i(&mut rhs, ln.r2, ln.p2, h2);
            }
        }
        let drv = &self.ports[self.driven];
        stamp_i(&mut rhs, drv.r, drv.p, self.source_voltage(t) / self.z_s);

        let mut x = self.x.clone();
        if depth == 0 {
            for i in 0..n {
                x[i] = 2.0 * self.x[i] - self.x_prev[i];
            }
        }
        for d in self.diodes.iter_mut() {
            let guess = nv(&x, d.x) - nv(&x, d.k);
            d.v_lin = d.vj;
            let (v, _) = d.limit(guess);
            d.v_lin = v;
        }

        let lin = self.mats[depth].as_ref().expect("matrix cached");
        let mut converged = false;
        for it in 0..self.newton_max {
            let mut m = lin.clone();
            let mut r = rhs.clone();
            for d in &self.diodes {
                let (i, g) = d.eval(d.v_lin, h);
                stamp_g(&mut m, n, d.x, d.k, g);
                stamp_i(&mut r, d.x, d.k, i - g * d.v_lin);
            }
            let Some(lu) = Lu::factor(m, n) else {
                break;
            };
            let xn = lu.solve(&r);
            if xn.iter().any(|v| !v.is_finite()) {
                break;
            }
            let mut limited = false;
            for d in self.diodes.iter_mut() {
                let raw = nv(&xn, d.x) - nv(&xn, d.k);
                let (v, lim) = d.limit(raw);
                limited |= lim;
                d.v_lin = v;
            }
            let ok = xn
                .iter()
                .zip(&x)
                .all(|(a, b)| (a - b).abs() <= self.abstol + self.reltol * a.abs());
            x = xn;
            if ok && !limited && it > 0 {
                converged = true;
                self.stats_newton_max = self.stats_newton_max.max(it + 1);
                break;
            }
        }
        if !converged {
            return false;
        }

        // Commit device states.
        for c in self.caps.iter_mut() {
            if self.slow_active && c.slow.is_some() {
                continue;
            }
            let v = nv(&x, c.a) - nv(&x, c.b);
            let g = 2.0 * c.c / h;
            c.i = g * (v - c.v) - c.i;
            c.v = v;
        }
        for l in self.inds.iter_mut() {
            let v = nv(&x, l.a) - nv(&x, l.b);
            l.i += h / (2.0 * l.l) * (v + l.v);
            l.v = v;
        }
        for d in self.diodes.iter_mut() {
            let v = nv(&x, d.x) - nv(&x, d.k);
            let q = d.p.junction_charge(v);
            d.iq = 2.0 / h * (q - d.q) - d.iq;
            d.q = q;
            d.vj = v;
        }
        if s1 == 1.0 {
            let k = (self.step + 1) as usize;
            for ln in self.lines.iter_mut() {
                let v1 = nv(&x, ln.p1) - nv(&x, ln.r1);
                let i1 = v1 * ln.y0 - ln.h1;
                let (v2, i2) = match ln.kind {
                    LineKind::Through => {
                        let v2 = nv(&x, ln.p2) - nv(&x, ln.r2);
                        (v2, v2 * ln.y0 - ln.h2)
                    }
                    LineKind::Open => (ln.h2 * ln.z0, 0.0),
                    LineKind::Short => (0.0, -ln.h2),
                };
                let len = ln.buf1.len();
                ln.buf1[k % len] = (v1, i1);
                ln.buf2[k % len] = (v2, i2);
            }
        }
        self.x = x;
        true
    }

    fn slow_currents(&self) -> Vec<f64> {
        self.slow
            .iter()
            .map(|g| self.g_big * (nv(&self.x, g.a) - nv(&self.x, g.b) - g.u))
            .collect()
    }

    fn load_voltage(&self) -> f64 {
        self.load.map_or(0.0, |i| {
            let r = &self.res[i];
            nv(&self.x, r.a) - nv(&self.x, r.b)
        })
    }

    /// Integrates one full common period.
    pub fn run_period(
        &mut self,
        mut meas: Option<&mut Measure>,
        record_slow: bool,
    ) -> Result<PeriodSummary, SteadyError> {
        let x0 = self.x.clone();
        let mut sum_slow = vec![0.0; self.slow.len()];
        let mut wave = if record_slow {
            vec![Vec::with_capacity(self.spp + 1); self.slow.len()]
        } else {
            vec![]
        };
        if record_slow && self.slow_active {
            for (w, i) in wave.iter_mut().zip(self.slow_currents()) {
                w.push(i);
            }
        }
        let mut load_sum = 0.0;
        for _ in 0..self.spp {
            self.advance()?;
            if self.slow_active {
                let cur = self.slow_currents();
                for (k, i) in cur.iter().enumerate() {
                    sum_slow[k] += i;
                    if record_slow {
                        wave[k].push(*i);
                    }
                }
            }
            load_sum += self.load_voltage();
            if let Some(m) = meas.as_deref_mut() {
                self.sample(m);
            }
        }
        let inv = 1.0 / self.spp as f64;
        let delta = self
            .x
            .iter()
            .zip(&x0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = self.x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        Ok(PeriodSummary {
            slow_current: sum_slow.iter().map(|s| s * inv).collect(),
            load_mean: load_sum * inv,
            delta,
            scale,
            slow_wave: wave,
        })
    }

    /// Replaces each slow group's source by its real capacitors. The
    /// initial voltage is chosen so that the capacitor's mean over a period
    /// equals the settled source value given the recorded current wave.
    pub fn release_slow(&mut self, waves: &[Vec<f64>]) {
        let dt = self.dt;
        for (k, g) in self.slow.iter().enumerate() {
            let w = &waves[k];
            let (v0, i_now) = if w.len() >= 2 {
                let mean = w[1..].iter().sum::<f64>() / (w.len() - 1) as f64;
                let mut q = 0.0;
                let mut q_sum = 0.0;
                for j in 1..w.len() {
                    q += 0.5 * (w[j] + w[j - 1] - 2.0 * mean) * dt;
                    q_sum += q;
                }
                let q_mean = q_sum / (w.len() - 1) as f64;
                // The period ends where it started, so the charge offset of
                // the current instant relative to the mean is `-q_mean`.
                (g.u - q_mean / g.c, *w.last().unwrap())
            } else {
                (g.u, 0.0)
            };
            for c in self.caps.iter_mut().filter(|c| c.slow == Some(k)) {
                c.v = v0;
                c.i = i_now * c.c / g.c;
            }
            // Shift the node voltages so the first step starts consistent.
            if let Some(a) = g.a {
                self.x[a] += v0 - g.u;
                self.x_prev[a] += v0 - g.u;
            }
        }
        self.slow_active = false;
        self.mats.iter_mut().for_each(|m| *m = None);
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Steps needed before every line buffer holds real history.
    pub fn warm_steps(&self) -> u64 {
        self.lines
            .iter()
            .map(|l| l.buf1.len() as u64)
            .max()
            .unwrap_or(0)
    }

    /// Dynamic state as one vector in volt-like units (currents times
    /// `STATE_R`, charges over each diode's zero-bias capacitance), with
    /// line histories ordered relative to the current step.
    pub fn state(&self) -> Vec<f64> {
        let mut s = Vec::new();
        s.extend_from_slice(&self.x);
        s.extend_from_slice(&self.x_prev);
        for c in &self.caps {
            s.push(c.v);
            s.push(c.i * STATE_R);
        }
        for l in &self.inds {
            s.push(l.v);
            s.push(l.i * STATE_R);
        }
        for d in &self.diodes {
            s.push(d.vj);
            s.push(d.q / d.p.c_j0.max(1e-18));
            s.push(d.iq * STATE_R);
        }
        let step = self.step as usize;
        for ln in &self.lines {
            let len = ln.buf1.len();
            for j in 0..len {
                let k = (step + len - j) % len;
                for (v, i) in [ln.buf1[k], ln.buf2[k]] {
                    s.push(v);
                    s.push(i * STATE_R);
                }
            }
        }
        s
    }

    /// Inverse of [`Engine::state`].
    pub fn set_state(&mut self, s: &[f64]) {
        let n = self.n;
        let mut it = s.iter().copied();
        let mut next = || it.next().expect("state vector length");
        for k in 0..n {
            self.x[k] = next();
        }
        for k in 0..n {
            self.x_prev[k] = next();
        }
        for c in self.caps.iter_mut() {
            c.v = next();
            c.i = next() / STATE_R;
        }
        for l in self.inds.iter_mut() {
            l.v = next();
            l.i = next() / STATE_R;
        }
        for d in self.diodes.iter_mut() {
            d.vj = next();
            d.q = next() * d.p.c_j0.max(1e-18);
            d.iq = next() / STATE_R;
        }
        let step = self.step as usize;
        for ln in self.lines.iter_mut() {
            let len = ln.buf1.len();
            for j in 0..len {
                let k = (step + len - j) % len;
                let v1 = next();
                let i1 = next() / STATE_R;
                let v2 = next();
                let i2 = next() / STATE_R;
                ln.buf1[k] = (v1, i1);
                ln.buf2[k] = (v2, i2);
            }
        }
    }

    pub fn set_slow_voltages(&mut self, u: &[f64]) {
        for (g, v) in self.slow.iter_mut().zip(u) {
            g.u = *v;
        }
    }

    pub fn new_measure(&self, tone_freqs: Vec<f64>) -> Measure {
        let mut terms = Vec::new();
        for nm in &self.res_names {
            terms.push((nm.clone(), Category::Resistive));
        }
        for nm in &self.cap_names {
            terms.push((nm.clone(), Category::Reactive));
        }
        for nm in &self.ind_names {
            terms.push((nm.clone(), Category::Reactive));
        }
        for (nm, ln) in self.line_names.iter().zip(&self.lines) {
            terms.push((format!("{nm}.1"), Category::Reactive));
            if ln.kind == LineKind::Through {
                terms.push((format!("{nm}.2"), Category::Reactive));
            }
        }
        for nm in &self.diode_names {
            terms.push((nm.clone(), Category::Diode));
        }
        for (k, nm) in self.port_names.iter().enumerate() {
            if k != self.driven {
                terms.push((format!("port {nm} termination"), Category::Resistive));
            }
        }
        let nt = tone_freqs.len();
        let np = self.ports.len();
        let mut m = Measure {
            tone_freqs,
            waves: vec![Vec::with_capacity(self.spp); self.user_nodes.len()],
            port_v: vec![vec![Complex64::new(0.0, 0.0); nt]; np],
            port_i: vec![vec![Complex64::new(0.0, 0.0); nt]; np],
            energy: vec![0.0; terms.len()],
            terms,
            prev: vec![],
            p_port: vec![0.0; np],
            prev_port: vec![],
            load_sum: 0.0,
            samples: 0,
        };
        m.prev = self.term_values();
        m.prev_port = self.port_values();
        m
    }

    fn h_now(&self) -> f64 {
        self.dt
    }

    fn term_values(&self) -> Vec<(f64, f64)> {
        let x = &self.x;
        let mut out = Vec::new();
        for r in &self.res {
            let v = nv(x, r.a) - nv(x, r.b);
            out.push((v, v * r.g));
        }
        for c in &self.caps {
            out.push((c.v, c.i));
        }
        for l in &self.inds {
            out.push((l.v, l.i));
        }
        for ln in &self.lines {
            let k = (self.step as usize) % ln.buf1.len();
            out.push(ln.buf1[k]);
            if ln.kind == LineKind::Through {
                out.push(ln.buf2[k]);
            }
        }
        for d in &self.diodes {
            let v = nv(x, d.a) - nv(x, d.k);
            let i = if d.x != d.a {
                d.terminal_current(x, self.h_now())
            } else {
                d.p.id_static(d.vj) + d.iq + GMIN * d.vj
            };
            out.push((v, i));
        }
        for (k, p) in self.ports.iter().enumerate() {
            if k != self.driven {
                let v = nv(x, p.p) - nv(x, p.r);
                out.push((v, v / p.z));
            }
        }
        out
    }

    /// Port voltage and current flowing into the network.
    fn port_values(&self) -> Vec<(f64, f64)> {
        let t = self.step as f64 * self.dt;
        self.ports
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let v = nv(&self.x, p.p) - nv(&self.x, p.r);
                let i = if k == self.driven {
                    (self.source_voltage(t) - v) / self.z_s
                } else {
                    -v / p.z
                };
                (v, i)
            })
            .collect()
    }

    fn sample(&self, m: &mut Measure) {
        let t = self.step as f64 * self.dt;
        for (w, (_, idx)) in m.waves.iter_mut().zip(&self.user_nodes) {
            w.push(self.x[*idx]);
        }
        let cur = self.term_values();
        for (k, ((v, i), (vp, ip))) in cur.iter().zip(&m.prev).enumerate() {
            m.energy[k] += 0.25 * (v + vp) * (i + ip);
        }
        m.prev = cur;
        let pv = self.port_values();
        for (k, ((v, i), (vp, ip))) in pv.iter().zip(&m.prev_port).enumerate() {
            m.p_port[k] += 0.25 * (v + vp) * (i + ip);
            for (j, f) in m.tone_freqs.iter().enumerate() {
                let e = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * t);
                m.port_v[k][j] += v * e;
                m.port_i[k][j] += i * e;
            }
        }
        m.prev_port = pv;
        m.load_sum += self.load_voltage();
        m.samples += 1;
    }

    pub fn driven_index(&self) -> usize {
        self.driven
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnjlim_passes_small_steps() {
        assert_eq!(pnjlim(0.3, 0.29, 0.027, 0.6), 0.3);
        let v = pnjlim(5.0, 0.7, 0.027, 0.6);
        assert!(v > 0.7 && v < 1.0);
    }
}
