//! One-dimensional quadrature rules.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Values a quadrature can integrate: real or complex scalars, or fixed-size
/// arrays of them.
pub trait Integrand: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for crate::C64 {
    fn zero() -> Self {
        crate::C64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Result of a composite Simpson integration.
#[derive(Clone, Copy, Debug)]
pub struct SimpsonEstimate<T> {
    /// Richardson-extrapolated value.
    pub value: T,
    /// `|S_n - S_{n/2}| / 15`.
    pub error: f64,
    pub nodes: usize,
}

/// Composite Simpson rule on `nodes` equally spaced points (`nodes` odd, ≥ 5),
/// with a Richardson error estimate against the half-resolution rule.
pub fn simpson<T: Integrand>(f: impl Fn(f64) -> T, a: f64, b: f64, nodes: usize) -> Result<SimpsonEstimate<T>> {
    if nodes < 5 || nodes % 2 == 0 || (nodes - 1) % 4 != 0 {
        return Err(Error::invalid(format!("Simpson node count {nodes} must be 4k+1 with k >= 1")));
    }
    let n = nodes - 1;
    let h = (b - a) / n as f64;
    let values: Vec<T> = (0..=n).map(|k| f(a + h * k as f64)).collect();
    let rule = |stride: usize| -> T {
        let m = n / stride;
        let hs = h * stride as f64;
        let mut acc = values[0] + values[n];
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc = acc + values[k * stride] * w;
        }
        acc * (hs / 3.0)
    };
    let fine = rule(1);
    let coarse = rule(2);
    let diff = fine - coarse;
    Ok(SimpsonEstimate { value: fine + diff * (1.0 / 15.0), error: diff.magnitude() / 15.0, nodes })
}

/// Simpson integration that doubles the node count from `nodes` until the
/// Richardson estimate is below `tol` (absolute, or relative to the value if
/// that is larger than one), giving up after `max_nodes`.
pub fn simpson_adaptive<T: Integrand>(
    f: impl Fn(f64) -> T,
    a: f64,
    b: f64,
    nodes: usize,
    tol: f64,
    max_nodes: usize,
) -> Result<SimpsonEstimate<T>> {
    let mut n = nodes;
    loop {
        let est = simpson(&f, a, b, n)?;
        let scale = est.value.magnitude().max(1.0);
        if est.error <= tol * scale {
            return Ok(est);
        }
        if n >= max_nodes {
            return Err(Error::NonConvergence(format!(
                "Simpson quadrature error estimate {:e} above tolerance {tol:e} at {n} nodes",
                est.error
            )));
        }
        n = 2 * n - 1;
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre nodes and weights on consecutive panels `[b_i, b_{i+1}]`.
pub fn panel_rule(breakpoints: &[f64], points_per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(points_per_panel);
    let mut xs = Vec::with_capacity(breakpoints.len() * points_per_panel);
    let mut ws = Vec::with_capacity(breakpoints.len() * points_per_panel);
    for pair in breakpoints.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (x, w) in gx.iter().zip(&gw) {
            xs.push(mid + half * x);
            ws.push(half * w);
        }
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 12 monomial
        let val: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((val - 2.0 / 13.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn simpson_sine() {
        let est = simpson(f64::sin, 0.0, PI, 65).unwrap();
        assert!((est.value - 2.0).abs() < 1e-9);
        assert!(est.error < 1e-6);
    }

    #[test]
    fn simpson_rejects_bad_node_count() {
        assert!(simpson(f64::sin, 0.0, 1.0, 64).is_err());
        assert!(simpson(f64::sin, 0.0, 1.0, 3).is_err());
    }

    #[test]
    fn adaptive_simpson_reports_non_convergence() {
        let err = simpson_adaptive(|x: f64| (200.0 * x).sin(), 0.0, 1.0, 5, 1e-14, 33).unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_)));
    }

    #[test]
    fn panels_cover_interval() {
        let (x, w) = panel_rule(&[0.0, 0.5, 2.0, 3.0], 8);
        assert_eq!(x.len(), 24);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
        assert!((integral - (3f64.exp() - 1.0)).abs() < 1e-12);
    }
}
