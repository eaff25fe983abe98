//! Gauss–Legendre rules on `[0, 1]`, the classical RK4 stepper, and centered differences.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Chebyshev guess, then Newton on P_n
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, t);
        x[i] = 0.5 * (1.0 - t);
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

fn legendre(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

pub const GAUSS_NODES: usize = 16;

/// `∫₀¹ f(t) dt` with 16 nodes, checked against 32 nodes.
pub fn integrate_checked<F>(f: F, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let q16 = integrate(&f, GAUSS_NODES);
    let q32 = integrate(&f, 2 * GAUSS_NODES);
    let diff = (q16 - q32).abs();
    if diff > tol * (1.0 + q32.abs()) {
        return Err(Error::Quadrature(diff));
    }
    Ok(q32)
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    x.iter().zip(&w).map(|(t, wt)| wt * f(*t)).sum()
}

/// Vector-valued Gauss quadrature on `[0, 1]`.
pub fn integrate_vec<F>(f: F, n: usize) -> DVector<f64>
where
    F: Fn(f64) -> DVector<f64>,
{
    let (x, w) = gauss_legendre(n);
    let mut acc: Option<DVector<f64>> = None;
    for (t, wt) in x.iter().zip(&w) {
        let v = f(*t) * *wt;
        acc = Some(match acc {
            None => v,
            Some(a) => a + v,
        });
    }
    acc.unwrap_or_else(|| DVector::zeros(0))
}

/// Fixed-step RK4 for `y' = f(t, y)` from `t0` to `t1`.
pub fn rk4<F>(f: F, y0: &DVector<f64>, t0: f64, t1: f64, steps: usize) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    rk4_observed(f, y0, t0, t1, steps, |_, _| true).expect("observer always accepts")
}

/// RK4 that calls `observe(t, y)` after every step; a `false` return aborts with `None`.
pub fn rk4_observed<F, O>(
    f: F,
    y0: &DVector<f64>,
    t0: f64,
    t1: f64,
    steps: usize,
    mut observe: O,
) -> Option<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    O: FnMut(f64, &DVector<f64>) -> bool,
{
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &(&y + &k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&y + &k2 * (0.5 * h)));
        let k4 = f(t + h, &(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !observe(t + h, &y) {
            return None;
        }
    }
    Some(y)
}

/// Finite-difference step `1e-5 (1 + ‖z‖)` used for all form and functional derivatives.
pub fn fd_step(z_norm: f64) -> f64 {
    1e-5 * (1.0 + z_norm)
}

/// Least-squares slope of `log f` against `log ε`.
pub fn loglog_slope(eps: &[f64], vals: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(vals)
        .filter(|(e, v)| **e > 0.0 && **v > 0.0 && v.is_finite())
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!("only {} usable points", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Logarithmically spaced grid from `10^a` to `10^b`, `n ≥ 2` points.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_for_high_degree_polynomials() {
        let q = integrate(|t| t.powi(31), 16);
        assert!((q - 1.0 / 32.0).abs() < 1e-15);
        let (_, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rk4_exponential() {
        let y = rk4(|_, y| y.clone(), &DVector::from_element(1, 1.0), 0.0, 1.0, 200);
        assert!((y[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn slope_of_square() {
        let e = log_grid(-2.5, -1.0, 6);
        let v: Vec<f64> = e.iter().map(|x| 3.0 * x * x).collect();
        assert!((loglog_slope(&e, &v).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&e[..2], &v[..2]).is_err());
    }
}
