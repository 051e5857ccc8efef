//! Even/odd-mode model of the branch-line coupler with arbitrary
//! terminations on its two output nodes.
//!
//! The coupler is split along its symmetry plane into an even half (open
//! stub at the plane) and an odd half (shorted stub). Each half is a
//! two-port between the source (`z_source`) and the termination `Z_A` that
//! stands in for the nonlinear branch hanging off the output node. The four
//! node amplitudes follow from the half-circuit reflection and transmission
//! coefficients.
//!
//! The transmission coefficient uses the load-side denominator
//! `A·Z_A + B + C·Z_S·Z_A + D·Z_A`; with that form the impedances needed for
//! a prescribed power-transfer ratio `k` reproduce the closed-form curve fit
//! of [`FitCoefficients::published`]. Reflection uses the source-side form
//! `… + D·Z_S`, which is the conventional ABCD-to-reflection conversion and
//! keeps the coupler input matched when both terminations are equal.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{polyfit, polyval};
use crate::netalg::{c, mag_db, TwoPortAbcd};

#[derive(Debug, Error, PartialEq)]
pub enum BlcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate termination: half-circuit denominator vanishes")]
    DegenerateTermination,
    #[error("no passive solution for k = {k} (best residual {best_residual:e})")]
    NoSolution { k: f64, best_residual: f64 },
    #[error("refit needs at least 5 samples, got {0}")]
    InsufficientData(usize),
}

pub type Result<T> = std::result::Result<T, BlcError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlcSpec {
    /// Port impedance; the horizontal arms are `z0/√2`.
    pub z0: f64,
    pub freq_design: f64,
    pub z_source: f64,
}

impl Default for BlcSpec {
    fn default() -> Self {
        Self {
            z0: 50.0,
            freq_design: 680e6,
            z_source: 50.0,
        }
    }
}

impl BlcSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.z0 > 0.0) {
            return Err(BlcError::InvalidParameter(format!(
                "z0 must be positive, got {}",
                self.z0
            )));
        }
        if !(self.z_source > 0.0) {
            return Err(BlcError::InvalidParameter(format!(
                "z_source must be positive, got {}",
                self.z_source
            )));
        }
        Ok(())
    }
}

/// Half-circuit chain matrices `(even, odd)`.
pub fn even_odd_abcd(spec: &BlcSpec) -> (TwoPortAbcd, TwoPortAbcd) {
    let s = FRAC_1_SQRT_2;
    let z0 = spec.z0;
    let f = spec.freq_design;
    let even = TwoPortAbcd::new(c(-s, 0.0), c(0.0, s * z0), c(0.0, s / z0), c(-s, 0.0), f);
    let odd = TwoPortAbcd::new(c(s, 0.0), c(0.0, s * z0), c(0.0, s / z0), c(s, 0.0), f);
    (even, odd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvenOddCoefficients {
    pub gamma_e: Complex64,
    pub gamma_o: Complex64,
    pub t_e: Complex64,
    pub t_o: Complex64,
}

/// Wave amplitudes at the four coupler nodes for a unit incident wave at
/// node 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortAmplitudes {
    pub a1: Complex64,
    pub a2: Complex64,
    pub a3: Complex64,
    pub a4: Complex64,
}

/// Linear-fractional pieces `(p, q)` of the transmission denominator
/// `p·z_a + q`.
fn transmission_denominator(m: &TwoPortAbcd, z_s: f64) -> (Complex64, Complex64) {
    (m.a + m.c * z_s + m.d, m.b)
}

/// Reflection and transmission coefficients of one half circuit terminated
/// in `z_a` and driven from `z_s`.
pub fn gamma_t(mode: &TwoPortAbcd, z_s: f64, z_a: Complex64) -> Result<(Complex64, Complex64)> {
    if !(z_s > 0.0) {
        return Err(BlcError::InvalidParameter(format!(
            "source impedance must be positive, got {z_s}"
        )));
    }
    let num = mode.a * z_a + mode.b - mode.c * z_s * z_a - mode.d * z_s;
    let den_r = mode.a * z_a + mode.b + mode.c * z_s * z_a + mode.d * z_s;
    let (p, q) = transmission_denominator(mode, z_s);
    let den_t = p * z_a + q;
    if den_r.norm() < 1e-300 || den_t.norm() < 1e-300 {
        return Err(BlcError::DegenerateTermination);
    }
    Ok((num / den_r, 2.0 * z_a / den_t))
}

pub fn port_amplitudes(k: &EvenOddCoefficients) -> PortAmplitudes {
    PortAmplitudes {
        a1: 0.5 * (k.gamma_e + k.gamma_o),
        a2: 0.5 * (k.t_e + k.t_o),
        a3: 0.5 * (k.t_e - k.t_o),
        a4: 0.5 * (k.gamma_e - k.gamma_o),
    }
}

/// Evaluates the coupler for a pair of even/odd terminations.
pub fn forward(
    spec: &BlcSpec,
    z_ae: Complex64,
    z_ao: Complex64,
) -> Result<(EvenOddCoefficients, PortAmplitudes)> {
    let (even, odd) = even_odd_abcd(spec);
    let (gamma_e, t_e) = gamma_t(&even, spec.z_source, z_ae)?;
    let (gamma_o, t_o) = gamma_t(&odd, spec.z_source, z_ao)?;
    let co = EvenOddCoefficients {
        gamma_e,
        gamma_o,
        t_e,
        t_o,
    };
    Ok((co, port_amplitudes(&co)))
}

/// Target node amplitudes for a power-transfer ratio `k`.
pub fn target_amplitudes(k: f64) -> (Complex64, Complex64) {
    let s = k * FRAC_1_SQRT_2;
    (c(0.0, -s), c(-s, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSolution {
    pub k: f64,
    pub z_ae: Complex64,
    pub z_ao: Complex64,
    pub a1: Complex64,
    pub a2: Complex64,
    pub a3: Complex64,
    pub a4: Complex64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for KSolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

fn residual_of(
    spec: &BlcSpec,
    k: f64,
    z_ae: Complex64,
    z_ao: Complex64,
) -> Result<(f64, PortAmplitudes)> {
    let (_, amp) = forward(spec, z_ae, z_ao)?;
    let (t2, t3) = target_amplitudes(k);
    Ok(((amp.a2 - t2).norm().max((amp.a3 - t3).norm()), amp))
}

/// Damped Newton from one seed. Works on the complex pair `(z_ae, z_ao)`,
/// which is the same iteration as the real 4×4 one because the node
/// amplitudes are holomorphic in both unknowns.
fn newton_from(
    spec: &BlcSpec,
    k: f64,
    seed: (Complex64, Complex64),
    cfg: &KSolverConfig,
) -> Option<(Complex64, Complex64, f64)> {
    let (even, odd) = even_odd_abcd(spec);
    let (pe, qe) = transmission_denominator(&even, spec.z_source);
    let (po, qo) = transmission_denominator(&odd, spec.z_source);
    let (t2, t3) = target_amplitudes(k);
    let (mut ze, mut zo) = seed;
    let eval = |ze: Complex64, zo: Complex64| -> Option<(Complex64, Complex64, f64)> {
        let de = pe * ze + qe;
        let d_o = po * zo + qo;
        if de.norm() < 1e-300 || d_o.norm() < 1e-300 {
            return None;
        }
        let te = 2.0 * ze / de;
        let to = 2.0 * zo / d_o;
        let r2 = 0.5 * (te + to) - t2;
        let r3 = 0.5 * (te - to) - t3;
        Some((r2, r3, r2.norm().max(r3.norm())))
    };
    let (mut r2, mut r3, mut res) = eval(ze, zo)?;
    for _ in 0..cfg.max_iterations {
        if res <= cfg.tolerance * 0.01 {
            break;
        }
        // dT/dz for T = 2z/(p z + q) is 2q/(p z + q)^2.
        let de = pe * ze + qe;
        let d_o = po * zo + qo;
        let dte = 2.0 * qe / (de * de);
        let dto = 2.0 * qo / (d_o * d_o);
        if dte.norm() < 1e-300 || dto.norm() < 1e-300 {
            return None;
        }
        // [r2; r3] + 0.5*[[dte, dto], [dte, -dto]] [dze; dzo] = 0
        let dze = -(r2 + r3) / dte;
        let dzo = -(r2 - r3) / dto;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let ne = ze + dze * step;
            let no = zo + dzo * step;
            if ne.re >= 0.0 && no.re >= 0.0 {
                if let Some((n2, n3, nres)) = eval(ne, no) {
                    if nres < res {
                        ze = ne;
                        zo = no;
                        r2 = n2;
                        r3 = n3;
                        res = nres;
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some((ze, zo, res))
}

/// Finds the even/odd terminations that realise power-transfer ratio `k`.
pub fn solve_za_for_k(k: f64, spec: &BlcSpec) -> Result<KSolution> {
    solve_za_for_k_with(k, spec, &KSolverConfig::default())
}

pub fn solve_za_for_k_with(k: f64, spec: &BlcSpec, cfg: &KSolverConfig) -> Result<KSolution> {
    spec.validate()?;
    if !(k > 0.0 && k <= 1.0) {
        return Err(BlcError::InvalidParameter(format!(
            "k must lie in (0, 1], got {k}"
        )));
    }
    let fit = FitCoefficients::published();
    let (fe, fo) = fit.evaluate(k);
    let passive = |z: Complex64| c(z.re.max(0.05), z.im);
    let z0 = spec.z0;
    let seeds = [
        (c(z0, 0.0), c(z0, 0.0)),
        (passive(fe), passive(fo)),
        (c(z0, z0), c(z0, -z0)),
        (c(z0, -z0), c(z0, z0)),
        (c(0.2 * z0, 0.0), c(0.2 * z0, 0.0)),
        (c(2.0 * z0, 0.0), c(2.0 * z0, 0.0)),
        (c(1.0, -1.0), c(1.0, 1.0)),
        (c(0.5 * z0, -0.5 * z0), c(0.5 * z0, 0.5 * z0)),
    ];
    let mut best_residual = f64::INFINITY;
    let mut best: Option<(Complex64, Complex64, f64)> = None;
    for seed in seeds {
        let Some((ze, zo, res)) = newton_from(spec, k, seed, cfg) else {
            continue;
        };
        best_residual = best_residual.min(res);
        if res > cfg.tolerance || ze.re < 0.0 || zo.re < 0.0 {
            continue;
        }
        let dist = (ze - fe).norm() + (zo - fo).norm();
        let better = match best {
            None => true,
            Some((be, bo, _)) => dist < (be - fe).norm() + (bo - fo).norm() - 1e-9,
        };
        if better {
            best = Some((ze, zo, res));
        }
    }
    let (z_ae, z_ao, _) = best.ok_or(BlcError::NoSolution { k, best_residual })?;
    let (residual, amp) = residual_of(spec, k, z_ae, z_ao)?;
    Ok(KSolution {
        k,
        z_ae,
        z_ao,
        a1: amp.a1,
        a2: amp.a2,
        a3: amp.a3,
        a4: amp.a4,
        residual,
    })
}

/// One row of an S-versus-k table; magnitudes in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkRow {
    pub solution: KSolution,
    pub s11_db: f64,
    pub s21_db: f64,
    pub s31_db: f64,
    pub s41_db: f64,
}

pub fn s_params_vs_k(k_grid: &[f64], spec: &BlcSpec) -> Result<Vec<SkRow>> {
    k_grid
        .iter()
        .map(|&k| {
            let s = solve_za_for_k(k, spec)?;
            Ok(SkRow {
                solution: s,
                s11_db: mag_db(s.a1),
                s21_db: mag_db(s.a2),
                s31_db: mag_db(s.a3),
                s41_db: mag_db(s.a4),
            })
        })
        .collect()
}

/// `k` grid from `start` to `stop` inclusive; the last point is snapped to
/// `stop` to avoid accumulated rounding.
pub fn k_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| {
            let k = start + step * i as f64;
            (k * 1e9).round() / 1e9
        })
        .collect()
}

pub fn default_k_grid() -> Vec<f64> {
    k_grid(0.02, 1.0, 0.02)
}

/// Polynomial model of the terminations versus `k`: the real part is shared
/// by both modes, the imaginary part flips sign between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCoefficients {
    /// Degree-2 coefficients, highest power first.
    pub real_poly: [f64; 3],
    /// Degree-3 coefficients, highest power first.
    pub imag_poly: [f64; 4],
}

impl FitCoefficients {
    pub fn published() -> Self {
        Self {
            real_poly: [55.1, -8.0, 1.8],
            imag_poly: [70.0, -77.6, 6.9, -1.1],
        }
    }

    /// `(z̄_ae, z̄_ao)` at `k`.
    pub fn evaluate(&self, k: f64) -> (Complex64, Complex64) {
        let re = polyval(&self.real_poly, k);
        let im = polyval(&self.imag_poly, k);
        (c(re, im), c(re, -im))
    }
}

/// The published closed-form fit at `k`.
pub fn evaluate_fit(k: f64) -> (Complex64, Complex64) {
    FitCoefficients::published().evaluate(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitReport {
    pub coefficients: FitCoefficients,
    /// Largest `|z_ae − z̄_ae|` between the samples and the published fit.
    pub max_deviation_ohm: f64,
    /// Per-coefficient relative deviation from the published values,
    /// real part first.
    pub relative_coefficient_error: Vec<f64>,
}

/// Least-squares refit of solver output. The even-mode real part and the
/// even-mode imaginary part are fitted; the odd mode follows by symmetry.
pub fn refit(solutions: &[KSolution]) -> Result<RefitReport> {
    if solutions.len() < 5 {
        return Err(BlcError::InsufficientData(solutions.len()));
    }
    let ks: Vec<f64> = solutions.iter().map(|s| s.k).collect();
    // Average the two modes so that a small asymmetry does not bias either.
    let re: Vec<f64> = solutions
        .iter()
        .map(|s| 0.5 * (s.z_ae.re + s.z_ao.re))
        .collect();
    let im: Vec<f64> = solutions
        .iter()
        .map(|s| 0.5 * (s.z_ae.im - s.z_ao.im))
        .collect();
    let rp = polyfit(&ks, &re, 2).ok_or(BlcError::InsufficientData(solutions.len()))?;
    let ip = polyfit(&ks, &im, 3).ok_or(BlcError::InsufficientData(solutions.len()))?;
    let coefficients = FitCoefficients {
        real_poly: [rp[0], rp[1], rp[2]],
        imag_poly: [ip[0], ip[1], ip[2], ip[3]],
    };
    let published = FitCoefficients::published();
    let max_deviation_ohm = solutions
        .iter()
        .map(|s| {
            let (fe, fo) = published.evaluate(s.k);
            (s.z_ae - fe).norm().max((s.z_ao - fo).norm())
        })
        .fold(0.0, f64::max);
    let relative_coefficient_error = coefficients
        .real_poly
        .iter()
        .chain(coefficients.imag_poly.iter())
        .zip(published.real_poly.iter().chain(published.imag_poly.iter()))
        .map(|(a, b)| ((a - b) / b).abs())
        .collect();
    Ok(RefitReport {
        coefficients,
        max_deviation_ohm,
        relative_coefficient_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn spec() -> BlcSpec {
        BlcSpec::default()
    }

    /// Independent closed-form inversion of `T(z) = 2z/(p z + q) = t`.
    fn mobius_inverse(m: &TwoPortAbcd, z_s: f64, t: Complex64) -> Complex64 {
        let p = m.a + m.c * z_s + m.d;
        t * m.b / (c(2.0, 0.0) - t * p)
    }

    #[test]
    fn half_circuit_matrices() {
        let (e, o) = even_odd_abcd(&spec());
        assert!((e.a - c(-0.70711, 0.0)).norm() < 1e-5);
        assert!((e.b - c(0.0, 35.355)).norm() < 1e-3);
        assert!((e.c - c(0.0, 0.014142)).norm() < 1e-6);
        assert!((o.a - c(0.70711, 0.0)).norm() < 1e-5);
        assert!((o.d - c(0.70711, 0.0)).norm() < 1e-5);
        assert!((e.determinant() - c(1.0, 0.0)).norm() < 1e-12);
        assert!((o.determinant() - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn matched_terminations() {
        let (e, o) = even_odd_abcd(&spec());
        let (ge, te) = gamma_t(&e, 50.0, c(50.0, 0.0)).unwrap();
        let (go, to) = gamma_t(&o, 50.0, c(50.0, 0.0)).unwrap();
        assert!(ge.norm() < 1e-12 && go.norm() < 1e-12);
        assert!((te - c(-1.0, -1.0) / SQRT_2).norm() < 1e-12);
        assert!((to - c(1.0, -1.0) / SQRT_2).norm() < 1e-12);
        let (_, t0) = gamma_t(&e, 50.0, c(0.0, 0.0)).unwrap();
        assert_eq!(t0, c(0.0, 0.0));
    }

    #[test]
    fn gamma_t_rejects_bad_source() {
        let (e, _) = even_odd_abcd(&spec());
        assert!(gamma_t(&e, 0.0, c(50.0, 0.0)).is_err());
    }

    #[test]
    fn port_amplitude_identities() {
        let (_, amp) = forward(&spec(), c(50.0, 0.0), c(50.0, 0.0)).unwrap();
        assert!(amp.a1.norm() < 1e-12 && amp.a4.norm() < 1e-12);
        assert!((amp.a2 - c(0.0, -1.0 / SQRT_2)).norm() < 1e-12);
        assert!((amp.a3 - c(-1.0 / SQRT_2, 0.0)).norm() < 1e-12);

        let g = c(0.3, 0.1);
        let t = c(-0.2, 0.4);
        let amp = port_amplitudes(&EvenOddCoefficients {
            gamma_e: g,
            gamma_o: g,
            t_e: t,
            t_o: t,
        });
        assert_eq!(amp.a3, c(0.0, 0.0));
        assert_eq!(amp.a4, c(0.0, 0.0));

        let amp = port_amplitudes(&EvenOddCoefficients {
            gamma_e: c(1.0, 0.0),
            gamma_o: c(-1.0, 0.0),
            t_e: c(0.0, 0.0),
            t_o: c(0.0, 0.0),
        });
        assert_eq!(
            (amp.a1, amp.a2, amp.a3, amp.a4),
            (c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0))
        );
    }

    #[test]
    fn solver_matches_closed_form_inverse() {
        let s = spec();
        let (e, o) = even_odd_abcd(&s);
        for k in [0.02, 0.1, 0.37, 0.5, 0.8, 0.99, 1.0] {
            let sol = solve_za_for_k(k, &s).unwrap();
            let (t2, t3) = target_amplitudes(k);
            let ze = mobius_inverse(&e, 50.0, t2 + t3);
            let zo = mobius_inverse(&o, 50.0, t2 - t3);
            assert!((sol.z_ae - ze).norm() < 1e-6 * (1.0 + ze.norm()), "k={k}");
            assert!((sol.z_ao - zo).norm() < 1e-6 * (1.0 + zo.norm()), "k={k}");
            assert!(sol.residual <= 1e-8);
        }
    }

    #[test]
    fn frozen_solutions() {
        // Values from the closed-form inverse z = 50k(1 ∓ j)/(4 − 3k ∓ jk).
        let s = solve_za_for_k(0.8, &spec()).unwrap();
        assert!((s.z_ae - c(30.0, -10.0)).norm() < 1e-7);
        assert!((s.z_ao - c(30.0, 10.0)).norm() < 1e-7);
        let s = solve_za_for_k(0.5, &spec()).unwrap();
        assert!((s.z_ae - c(150.0 / 13.0, -100.0 / 13.0)).norm() < 1e-7);
    }

    #[test]
    fn k_one_is_matched_anchor() {
        let s = solve_za_for_k(1.0, &spec()).unwrap();
        assert!((s.z_ae.re - 50.0).abs() < 1.0 && (s.z_ao.re - 50.0).abs() < 1.0);
        assert!(s.z_ae.im.abs() < 1e-6);
        assert!(s.a1.norm() < 1e-6 && s.a4.norm() < 1e-6);
    }

    #[test]
    fn small_k_tends_to_short() {
        let s = solve_za_for_k(1e-3, &spec()).unwrap();
        assert!(s.z_ae.re > 0.0 && s.z_ae.re < 0.1);
    }

    #[test]
    fn solver_rejects_out_of_range_k() {
        assert!(solve_za_for_k(0.0, &spec()).is_err());
        assert!(solve_za_for_k(1.2, &spec()).is_err());
    }

    #[test]
    fn no_solution_is_reported() {
        let cfg = KSolverConfig {
            tolerance: 1e-8,
            max_iterations: 0,
        };
        match solve_za_for_k_with(0.5, &spec(), &cfg) {
            Err(BlcError::NoSolution { best_residual, .. }) => assert!(best_residual > 1e-8),
            other => panic!("expected NoSolution, got {other:?}"),
        }
    }

    #[test]
    fn published_fit_values() {
        let (e, o) = evaluate_fit(1.0);
        assert!((e.re - 48.9).abs() < 1e-9 && (e.im + 1.8).abs() < 1e-9);
        assert_eq!(o, e.conj());
        let (e, _) = evaluate_fit(0.0);
        assert!((e.re - 1.8).abs() < 1e-12 && (e.im + 1.1).abs() < 1e-12);
    }

    #[test]
    fn refit_over_full_unit_interval_recovers_published_fit() {
        // Including k = 0 (both terminations shorted) reproduces the
        // published coefficients to within a few percent.
        let s = spec();
        let mut sols: Vec<KSolution> = k_grid(0.01, 1.0, 0.01)
            .into_iter()
            .map(|k| solve_za_for_k(k, &s).unwrap())
            .collect();
        let (_, amp) = forward(&s, c(0.0, 0.0), c(0.0, 0.0)).unwrap();
        sols.insert(
            0,
            KSolution {
                k: 0.0,
                z_ae: c(0.0, 0.0),
                z_ao: c(0.0, 0.0),
                a1: amp.a1,
                a2: amp.a2,
                a3: amp.a3,
                a4: amp.a4,
                residual: 0.0,
            },
        );
        let rep = refit(&sols).unwrap();
        for e in &rep.relative_coefficient_error {
            assert!(*e < 0.05, "{:?}", rep);
        }
    }

    #[test]
    fn refit_needs_five_samples() {
        let s = spec();
        let sols: Vec<_> = [0.2, 0.4, 0.6, 0.8]
            .iter()
            .map(|&k| solve_za_for_k(k, &s).unwrap())
            .collect();
        assert_eq!(refit(&sols), Err(BlcError::InsufficientData(4)));
    }

    #[test]
    fn s_versus_k_trends() {
        let rows = s_params_vs_k(&default_k_grid(), &spec()).unwrap();
        assert_eq!(rows.len(), 50);
        let last = rows.last().unwrap();
        assert!((last.s21_db + 3.0103).abs() < 0.01 && (last.s31_db + 3.0103).abs() < 0.01);
        assert!(last.s11_db < -40.0);
        assert!(rows[0].s41_db > -0.5);
        for w in rows.windows(2) {
            assert!(w[1].s21_db > w[0].s21_db);
            assert!(w[1].s41_db < w[0].s41_db);
        }
        assert!(rows.iter().all(|r| r.s11_db < -10.0));
    }

    #[test]
    fn k_grid_is_exact() {
        let g = default_k_grid();
        assert_eq!(g.first(), Some(&0.02));
        assert_eq!(g.last(), Some(&1.0));
    }
}
