//! Small dense linear algebra: solves, products and spectral radii.
//!
//! Matrices are row-major `Vec<Vec<f64>>`. Sizes stay in the tens, so plain
//! Gaussian elimination with partial pivoting is enough.

use crate::{Error, Result};

pub type Matrix = Vec<Vec<f64>>;

/// Pivot magnitude below which a system is reported singular.
const PIVOT_EPS: f64 = 1e-13;

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, x)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn transpose(a: &[Vec<f64>]) -> Matrix {
    if a.is_empty() {
        return Vec::new();
    }
    let (r, c) = (a.len(), a[0].len());
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sup_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n {
        return Err(Error::LengthMismatch(a.len(), n));
    }
    let mut m: Matrix = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col].abs() <= PIVOT_EPS * scale {
            return Err(Error::SingularSystem);
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (rhs[i] - s) / m[i][i];
    }
    Ok(x)
}

/// Eigenvalues of a 2x2 matrix as `(re, im)` pairs, larger real part first.
pub fn eig2(m: [[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [((tr + r) / 2.0, 0.0), ((tr - r) / 2.0, 0.0)]
    } else {
        let im = (-disc).sqrt() / 2.0;
        [(tr / 2.0, im), (tr / 2.0, -im)]
    }
}

fn modulus((re, im): (f64, f64)) -> f64 {
    re.hypot(im)
}

/// Largest eigenvalue modulus.
///
/// Sizes up to 2 use the characteristic roots. Larger matrices use power
/// iteration; when the normalised growth keeps oscillating (a dominant
/// complex pair or a `±λ` pair) the estimate falls back to fitting the
/// dominant quadratic factor `t^2 - αt - β` to three consecutive iterates.
pub fn spectral_radius(a: &[Vec<f64>]) -> Result<f64> {
    spectral_radius_with(a, 1e-10, 200_000)
}

pub fn spectral_radius_with(a: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<f64> {
    let n = a.len();
    match n {
        0 => return Ok(0.0),
        1 => return Ok(a[0][0].abs()),
        2 => {
            let e = eig2([[a[0][0], a[0][1]], [a[1][0], a[1][1]]]);
            return Ok(modulus(e[0]).max(modulus(e[1])));
        }
        _ => {}
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i as f64) * 0.7).sin()).collect();
    normalize(&mut v);
    let mut prev_simple = f64::NAN;
    let mut prev_pair = f64::NAN;
    let mut stable_simple = 0;
    let mut stable_pair = 0;
    for _ in 0..max_iter {
        let u1 = mat_vec(a, &v);
        let r1 = norm2(&u1);
        if r1 == 0.0 {
            return Ok(0.0);
        }
        let u2 = mat_vec(a, &u1);
        let simple = r1;
        if (simple - prev_simple).abs() <= tol {
            stable_simple += 1;
            if stable_simple >= 3 {
                return Ok(simple);
            }
        } else {
            stable_simple = 0;
        }
        prev_simple = simple;
        if let Some(pair) = quadratic_factor_radius(&v, &u1, &u2) {
            if (pair - prev_pair).abs() <= tol {
                stable_pair += 1;
                if stable_pair >= 3 {
                    return Ok(pair);
                }
            } else {
                stable_pair = 0;
            }
            prev_pair = pair;
        }
        v = u1;
        normalize(&mut v);
    }
    Err(Error::NonConvergence(max_iter))
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = norm2(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Least-squares fit of `u2 ≈ α u1 + β u0`; returns the larger root modulus
/// of `t^2 - αt - β` when the fit is well posed and tight.
fn quadratic_factor_radius(u0: &[f64], u1: &[f64], u2: &[f64]) -> Option<f64> {
    let g00 = dot(u0, u0);
    let g01 = dot(u0, u1);
    let g11 = dot(u1, u1);
    let det = g11 * g00 - g01 * g01;
    if det.abs() <= 1e-14 * g00 * g11 {
        return None;
    }
    let b1 = dot(u1, u2);
    let b0 = dot(u0, u2);
    let alpha = (b1 * g00 - b0 * g01) / det;
    let beta = (g11 * b0 - g01 * b1) / det;
    let resid: f64 = u2
        .iter()
        .zip(u1.iter().zip(u0))
        .map(|(z, (y, x))| (z - alpha * y - beta * x).powi(2))
        .sum::<f64>()
        .sqrt();
    if resid > 1e-9 * norm2(u2).max(1e-300) {
        return None;
    }
    let disc = alpha * alpha + 4.0 * beta;
    Some(if disc >= 0.0 {
        let r = disc.sqrt();
        ((alpha + r) / 2.0).abs().max(((alpha - r) / 2.0).abs())
    } else {
        (-beta).sqrt()
    })
}
