//! Oracles shared by the integration tests. Nothing here calls into the library's
//! own quadrature or closed forms.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite rule on [a, b]: `panels` equal panels of an `order`-point GL rule.
pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + h * p as f64;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

/// `½∬₀^τ Γ²e^{−λ|t1−t2|}`, evaluated as the triangle `t2 < t1` with `t2 = t1·u`.
pub fn f1_oracle(lambda: f64, gamma: f64, tau: f64) -> f64 {
    let panels = (lambda * tau).ceil().max(1.0) as usize * 4;
    let outer = composite(0.0, tau, panels, 16);
    let inner = composite(0.0, 1.0, panels, 16);
    let mut sum = 0.0;
    for &(t1, w1) in &outer {
        let mut s = 0.0;
        for &(u, wu) in &inner {
            s += wu * (-lambda * t1 * (1.0 - u)).exp();
        }
        sum += w1 * t1 * s;
    }
    gamma * gamma * sum
}

/// `½∫₀^τ∫_τ^{2τ} Γ²e^{−λ(t2−t1)}`.
pub fn delta_f_oracle(lambda: f64, gamma: f64, tau: f64) -> f64 {
    let panels = (lambda * tau).ceil().max(1.0) as usize * 4;
    let a = composite(0.0, tau, panels, 16);
    let b = composite(tau, 2.0 * tau, panels, 16);
    let mut sum = 0.0;
    for &(t1, w1) in &a {
        for &(t2, w2) in &b {
            sum += w1 * w2 * (-lambda * (t2 - t1)).exp();
        }
    }
    0.5 * gamma * gamma * sum
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp())
        .collect()
}
