//! Bessel zeros and Gauss–Legendre rules.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Bessel function of the first kind by its power series (moderate `x`).
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = (nu * half.ln() - ln_gamma(nu + 1.0)).exp();
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        term *= -half * half / (kf * (kf + nu));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// First positive zero of `J_nu` for `nu >= 0`.
pub fn bessel_j_first_zero(nu: f64) -> f64 {
    // zeros interlace: j_{nu,1} lies in (nu, nu + 2 sqrt(nu+1) + 2)
    let mut lo = nu.max(1e-3);
    let mut hi = nu + 2.0 * (nu + 1.0).sqrt() + 2.0;
    let step = 0.05;
    let mut x = lo;
    while x < hi {
        if bessel_j(nu, x) * bessel_j(nu, x + step) <= 0.0 {
            lo = x;
            hi = x + step;
            break;
        }
        x += step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_j(nu, lo) * bessel_j(nu, mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
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

/// Composite Gauss–Legendre on `[a, b]` with `panels` equal panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * width;
        let mid = lo + 0.5 * width;
        for (xi, wi) in x.iter().zip(&w) {
            total += wi * f(mid + 0.5 * width * xi);
        }
    }
    0.5 * width * total
}
