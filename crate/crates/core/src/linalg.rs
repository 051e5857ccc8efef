//! Small dense linear-algebra kernels. Matrices here never exceed a few
//! dozen rows, so plain row-major `Vec<f64>` storage is enough.

/// In-place LU factorisation with partial pivoting of an `n × n` row-major
/// matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    /// Returns `None` when a pivot is exactly zero or not finite.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for r in (k + 1)..n {
                let v = a[r * n + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let inv = 1.0 / a[k * n + k];
            for r in (k + 1)..n {
                let f = a[r * n + k] * inv;
                if f == 0.0 {
                    continue;
                }
                a[r * n + k] = f;
                for j in (k + 1)..n {
                    a[r * n + j] -= f * a[k * n + j];
                }
            }
        }
        Some(Self { n, lu: a, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Least-squares solution of the overdetermined system `A x ≈ b`
/// (`rows × cols`, row-major) by Householder QR.
pub fn least_squares(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Option<Vec<f64>> {
    if rows < cols {
        return None;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    for k in 0..cols {
        let norm = (k..rows)
            .map(|i| a[i * cols + k].powi(2))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if a[k * cols + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| a[i * cols + k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..cols {
            let dot: f64 = (k..rows).map(|i| v[i - k] * a[i * cols + j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..rows {
                a[i * cols + j] -= f * v[i - k];
            }
        }
        let dot: f64 = (k..rows).map(|i| v[i - k] * b[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..rows {
            b[i] -= f * v[i - k];
        }
    }
    let mut x = vec![0.0; cols];
    for i in (0..cols).rev() {
        let mut s = b[i];
        for j in (i + 1)..cols {
            s -= a[i * cols + j] * x[j];
        }
        let d = a[i * cols + i];
        if d == 0.0 {
            return None;
        }
        x[i] = s / d;
    }
    Some(x)
}

/// Fits a polynomial of the given degree; coefficients are returned highest
/// power first.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Option<Vec<f64>> {
    let cols = degree + 1;
    let mut a = Vec::with_capacity(x.len() * cols);
    for &xi in x {
        for p in (0..cols).rev() {
            a.push(xi.powi(p as i32));
        }
    }
    least_squares(&a, x.len(), cols, y)
}

/// Horner evaluation, coefficients highest power first.
pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

/// Outcome of [`gmres`].
#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    /// Final residual norm relative to `|b|`.
    pub relative_residual: f64,
    pub iterations: usize,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Unrestarted GMRES from a zero initial guess for a matrix given only
/// through its action. Stops when the residual falls to `tol·|b|`, after
/// `max_iter` products, or when `apply` fails (returning `None`).
pub fn gmres<E>(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<GmresOutcome, E> {
    let n = b.len();
    let beta = norm2(b);
    if beta == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            relative_residual: 0.0,
            iterations: 0,
        });
    }
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / beta).collect()];
    // Hessenberg columns after Givens rotation, and the rotations.
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut k = 0;
    while k < max_iter {
        let mut w = apply(&basis[k])?;
        let mut col = vec![0.0; k + 2];
        for (j, q) in basis.iter().enumerate() {
            let d: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
            col[j] = d;
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= d * qi;
            }
        }
        let hn = norm2(&w);
        col[k + 1] = hn;
        for (j, &(c, s)) in cs.iter().enumerate() {
            let (a, b) = (col[j], col[j + 1]);
            col[j] = c * a + s * b;
            col[j + 1] = -s * a + c * b;
        }
        let r = col[k].hypot(col[k + 1]);
        let (c, s) = if r == 0.0 {
            (1.0, 0.0)
        } else {
            (col[k] / r, col[k + 1] / r)
        };
        col[k] = r;
        col[k + 1] = 0.0;
        cs.push((c, s));
        g.push(-s * g[k]);
        g[k] *= c;
        h.push(col);
        k += 1;
        let res = g[k].abs() / beta;
        if res <= tol || hn <= 1e-14 * beta {
            break;
        }
        basis.push(w.iter().map(|v| v / hn).collect());
    }
    // Back substitution on the rotated upper-triangular system.
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in i + 1..k {
            acc -= h[j][i] * y[j];
        }
        y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
    }
    let mut x = vec![0.0; n];
    for (yj, q) in y.iter().zip(&basis) {
        for (xi, qi) in x.iter_mut().zip(q) {
            *xi += yj * qi;
        }
    }
    Ok(GmresOutcome {
        x,
        relative_residual: g[k].abs() / beta,
        iterations: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_pivoting_system() {
        let a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let lu = Lu::factor(a.clone(), 3).unwrap();
        let x = lu.solve(&[3.0, 2.0, 4.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - [3.0, 2.0, 4.0][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        assert!(Lu::factor(vec![1.0, 2.0, 2.0, 4.0], 2).is_none());
    }

    #[test]
    fn polyfit_recovers_exact_cubic() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| polyval(&[70.0, -77.6, 6.9, -1.1], x))
            .collect();
        let c = polyfit(&xs, &ys, 3).unwrap();
        for (a, b) in c.iter().zip([70.0, -77.6, 6.9, -1.1]) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn polyfit_needs_enough_points() {
        assert!(polyfit(&[0.0, 1.0], &[1.0, 2.0], 2).is_none());
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 6;
        let a: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if i == j {
                    4.0 + i as f64
                } else {
                    ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.5
                }
            })
            .collect();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let mul = |v: &[f64]| -> Result<Vec<f64>, ()> {
            Ok((0..n)
                .map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum())
                .collect())
        };
        let out = gmres(mul, &b, 1e-12, 50).unwrap();
        let direct = Lu::factor(a.clone(), n).unwrap().solve(&b);
        for (x, d) in out.x.iter().zip(&direct) {
            assert!((x - d).abs() < 1e-9);
        }
        assert!(out.iterations <= n);
    }
}
