//! Frequency-domain two-port algebra.
//!
//! Everything here works on a single frequency point. Broadband behaviour is
//! obtained by evaluating on an explicit grid (see [`FrequencyGrid`]).

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used when comparing the frequency tags of two matrices.
const FREQ_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("frequency mismatch: {0} Hz vs {1} Hz")]
    FrequencyMismatch(f64, f64),
    #[error("singular network: {0}")]
    Singular(&'static str),
    #[error("touchstone: {0}")]
    Touchstone(String),
}

pub type Result<T> = std::result::Result<T, NetError>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Available power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// Magnitude of a wave ratio in dB. Zero maps to a large negative number
/// instead of `-inf` so that CSV output stays parseable.
pub fn mag_db(x: Complex64) -> f64 {
    20.0 * x.norm().max(1e-15).log10()
}

/// Chain (ABCD) matrix of a two-port at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPortAbcd {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
    pub freq: f64,
}

impl TwoPortAbcd {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64, freq: f64) -> Self {
        Self { a, b, c, d, freq }
    }

    pub fn identity(freq: f64) -> Self {
        Self::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), freq)
    }

    /// Lossless uniform line of characteristic impedance `z0` and electrical
    /// length `theta` (radians) at `freq`.
    pub fn tline(z0: f64, theta: f64, freq: f64) -> Result<Self> {
        if !(z0 > 0.0) || !z0.is_finite() {
            return Err(NetError::InvalidParameter(format!(
                "line impedance must be positive, got {z0}"
            )));
        }
        let (s, co) = theta.sin_cos();
        Ok(Self::new(
            c(co, 0.0),
            c(0.0, z0 * s),
            c(0.0, s / z0),
            c(co, 0.0),
            freq,
        ))
    }

    /// Series impedance element: `[[1, z], [0, 1]]`.
    pub fn series(z: Complex64, freq: f64) -> Self {
        Self::new(c(1.0, 0.0), z, c(0.0, 0.0), c(1.0, 0.0), freq)
    }

    /// Shunt admittance element: `[[1, 0], [y, 1]]`.
    pub fn shunt(y: Complex64, freq: f64) -> Self {
        Self::new(c(1.0, 0.0), c(0.0, 0.0), y, c(1.0, 0.0), freq)
    }

    pub fn determinant(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    fn same_freq(&self, other: &Self) -> bool {
        let scale = self.freq.abs().max(other.freq.abs()).max(1.0);
        (self.freq - other.freq).abs() <= FREQ_MATCH_TOL * scale
    }

    /// `self` followed by `next` (matrix product `self · next`).
    pub fn then(&self, next: &Self) -> Result<Self> {
        if !self.same_freq(next) {
            return Err(NetError::FrequencyMismatch(self.freq, next.freq));
        }
        Ok(Self::new(
            self.a * next.a + self.b * next.c,
            self.a * next.b + self.b * next.d,
            self.c * next.a + self.d * next.c,
            self.c * next.b + self.d * next.d,
            self.freq,
        ))
    }

    /// Impedance seen at port 1 when port 2 is terminated in `z_load`.
    pub fn input_impedance(&self, z_load: Complex64) -> Result<Complex64> {
        let den = self.c * z_load + self.d;
        if den.norm() == 0.0 || !den.is_finite() {
            return Err(NetError::Singular("C·Z_L + D vanishes"));
        }
        Ok((self.a * z_load + self.b) / den)
    }

    /// Same as [`input_impedance`](Self::input_impedance) for a short at port 2.
    pub fn input_impedance_shorted(&self) -> Result<Complex64> {
        self.input_impedance(c(0.0, 0.0))
    }

    /// Real-reference S-parameters with the same reference on both ports.
    pub fn to_s(&self, z_ref: f64) -> Result<ScatteringMatrix> {
        if !(z_ref > 0.0) {
            return Err(NetError::InvalidParameter(format!(
                "reference impedance must be positive, got {z_ref}"
            )));
        }
        let (a, b, cc, d) = (self.a, self.b / z_ref, self.c * z_ref, self.d);
        let den = a + b + cc + d;
        if den.norm() < 1e-300 {
            return Err(NetError::Singular("A + B/Z0 + C·Z0 + D vanishes"));
        }
        let s11 = (a + b - cc - d) / den;
        let s12 = 2.0 * (a * d - b * cc) / den;
        let s21 = c(2.0, 0.0) / den;
        let s22 = (-a + b - cc + d) / den;
        Ok(ScatteringMatrix::two_port(
            [[s11, s12], [s21, s22]],
            z_ref,
            self.freq,
        ))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            (self.a - other.a).norm(),
            (self.b - other.b).norm(),
            (self.c - other.c).norm(),
            (self.d - other.d).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Product of `stages` in list order. An empty list yields the identity at
/// `freq`.
pub fn cascade(stages: &[TwoPortAbcd], freq: f64) -> Result<TwoPortAbcd> {
    let mut acc = TwoPortAbcd::identity(stages.first().map_or(freq, |s| s.freq));
    for s in stages {
        acc = acc.then(s)?;
    }
    Ok(acc)
}

/// Square scattering matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringMatrix {
    pub n: usize,
    pub entries: Vec<Complex64>,
    pub z_ref: f64,
    pub freq: f64,
}

impl ScatteringMatrix {
    pub fn two_port(s: [[Complex64; 2]; 2], z_ref: f64, freq: f64) -> Self {
        Self {
            n: 2,
            entries: vec![s[0][0], s[0][1], s[1][0], s[1][1]],
            z_ref,
            freq,
        }
    }

    /// Entry `S_ij` with 1-based port numbers, as conventionally written.
    pub fn s(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i - 1) * self.n + (j - 1)]
    }

    /// Inverse of [`TwoPortAbcd::to_s`].
    pub fn to_abcd(&self) -> Result<TwoPortAbcd> {
        if self.n != 2 {
            return Err(NetError::InvalidParameter(format!(
                "ABCD conversion needs a 2-port, got {}",
                self.n
            )));
        }
        let (s11, s12, s21, s22) = (self.s(1, 1), self.s(1, 2), self.s(2, 1), self.s(2, 2));
        if s21.norm() < 1e-300 {
            return Err(NetError::Singular("S21 vanishes"));
        }
        let z0 = self.z_ref;
        let one = c(1.0, 0.0);
        let p = s12 * s21;
        let k = 2.0 * s21;
        Ok(TwoPortAbcd::new(
            ((one + s11) * (one - s22) + p) / k,
            z0 * ((one + s11) * (one + s22) - p) / k,
            ((one - s11) * (one - s22) - p) / (k * z0),
            ((one - s11) * (one + s22) + p) / k,
            self.freq,
        ))
    }
}

/// Evenly spaced frequency grid, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            start_hz: 550e6,
            stop_hz: 950e6,
            points: 401,
        }
    }
}

impl FrequencyGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start_hz],
            n => (0..n)
                .map(|i| self.start_hz + (self.stop_hz - self.start_hz) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Writes a Touchstone v1 two-port file in real/imaginary format with the
/// frequency in Hz.
pub fn write_s2p<W: Write>(out: &mut W, data: &[ScatteringMatrix]) -> std::io::Result<()> {
    let z_ref = data.first().map_or(50.0, |s| s.z_ref);
    writeln!(out, "# Hz S RI R {}", fmt_num(z_ref))?;
    for s in data {
        // Touchstone v1 orders two-port data as S11 S21 S12 S22.
        let row = [s.s(1, 1), s.s(2, 1), s.s(1, 2), s.s(2, 2)];
        write!(out, "{}", fmt_num(s.freq))?;
        for v in row {
            write!(out, " {:.12e} {:.12e}", v.re, v.im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Reads back the subset of Touchstone v1 written by [`write_s2p`]: `Hz`
/// units, `S` parameters, `RI` format.
pub fn read_s2p<R: BufRead>(input: R) -> Result<Vec<ScatteringMatrix>> {
    let mut z_ref = 50.0;
    let mut seen_option = false;
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| NetError::Touchstone(e.to_string()))?;
        let line = line.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(opts) = line.strip_prefix('#') {
            let toks: Vec<String> = opts
                .split_whitespace()
                .map(|t| t.to_ascii_uppercase())
                .collect();
            let mut i = 0;
            while i < toks.len() {
                match toks[i].as_str() {
                    "HZ" | "S" | "RI" => {}
                    "R" => {
                        i += 1;
                        z_ref = toks.get(i).and_then(|t| t.parse().ok()).ok_or_else(|| {
                            NetError::Touchstone("bad reference impedance".into())
                        })?;
                    }
                    other => {
                        return Err(NetError::Touchstone(format!(
                            "unsupported option `{other}`"
                        )));
                    }
                }
                i += 1;
            }
            seen_option = true;
            continue;
        }
        if !seen_option {
            return Err(NetError::Touchstone("data before option line".into()));
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| NetError::Touchstone(format!("line {}: {e}", lineno + 1)))?;
        if nums.len() != 9 {
            return Err(NetError::Touchstone(format!(
                "line {}: expected 9 numbers, got {}",
                lineno + 1,
                nums.len()
            )));
        }
        let v = |k: usize| c(nums[1 + 2 * k], nums[2 + 2 * k]);
        out.push(ScatteringMatrix::two_port(
            [[v(0), v(2)], [v(1), v(3)]],
            z_ref,
            nums[0],
        ));
    }
    Ok(out)
}
