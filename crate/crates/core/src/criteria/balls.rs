//! Ball criterion in `ℝⁿ`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CriterionReport, SearchGrid, Witness};
use crate::error::{Error, Result};
use crate::grid::{ball_volume, sphere_area};
use crate::special::gauss_legendre;

type PairFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Density of `μ` on `ℝⁿ × ℝⁿ`.
#[derive(Clone)]
pub enum BallDensity {
    Zero,
    /// `|x - y|^{-a}` on `|x - y| >= cutoff`; exact radial quadrature.
    Power { a: f64, cutoff: f64 },
    /// General density; Monte Carlo over `B(x, ρ) × (B(x, outer·ρ) ∖ B(x, ρ))`.
    Sampled {
        density: PairFn,
        outer: f64,
        samples: usize,
        seed: u64,
    },
}

impl fmt::Debug for BallDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BallDensity::Zero => write!(f, "Zero"),
            BallDensity::Power { a, cutoff } => write!(f, "Power {{ a: {a}, cutoff: {cutoff} }}"),
            BallDensity::Sampled { outer, samples, seed, .. } => {
                write!(f, "Sampled {{ outer: {outer}, samples: {samples}, seed: {seed} }}")
            }
        }
    }
}

impl BallDensity {
    pub fn sampled<F>(density: F, outer: f64, samples: usize, seed: u64) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        BallDensity::Sampled { density: Arc::new(density), outer, samples, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSample {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// `|B_ρ(0) ∩ B_ρ(s e_1)|`.
fn lens(dim: usize, rho: f64, s: f64) -> f64 {
    if s >= 2.0 * rho {
        return 0.0;
    }
    match dim {
        2 => 2.0 * rho * rho * (s / (2.0 * rho)).acos() - 0.5 * s * (4.0 * rho * rho - s * s).sqrt(),
        _ => PI * (4.0 * rho + s) * (2.0 * rho - s).powi(2) / 12.0,
    }
}

/// `μ(B, ℝⁿ∖B) + μ(ℝⁿ∖B, B)` for the power density.
fn power_exchange(dim: usize, a: f64, cutoff: f64, rho: f64) -> f64 {
    let n = dim as f64;
    if a <= n || (cutoff == 0.0 && a >= n + 1.0) {
        return f64::INFINITY;
    }
    let ball = ball_volume(dim, rho);
    let area = sphere_area(dim);
    let g = |s: f64| s.powf(-a) * area * s.powf(n - 1.0) * (ball - lens(dim, rho, s));
    let top = 2.0 * rho;
    let tail_from = cutoff.max(top);
    let tail = ball * area * tail_from.powf(n - a) / (a - n);
    let mut inner = 0.0;
    if cutoff < top {
        let (gx, gw) = gauss_legendre(8);
        let mut edges = vec![top];
        let floor = cutoff.max(top * 1e-12);
        let mut s = top;
        while s > floor {
            s /= 1.25;
            edges.push(s.max(floor));
        }
        if cutoff == 0.0 {
            // ∫_0^floor ~ c s^{n+1-a}
            let slope = area * sphere_area(dim - 1) / (n - 1.0) * rho.powf(n - 1.0);
            inner += slope * floor.powf(n + 1.0 - a) / (n + 1.0 - a);
        }
        for w in edges.windows(2) {
            let (hi, lo) = (w[0], w[1]);
            let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
            inner += half * gx.iter().zip(&gw).map(|(x, wt)| wt * g(mid + half * x)).sum::<f64>();
        }
    }
    2.0 * (inner + tail)
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, c: &[f64], r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = c.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() < 1.0 {
            return v.iter().zip(c).map(|(x, ci)| ci + r * x).collect();
        }
    }
}

/// Monte Carlo estimate with its standard error.
fn sampled_exchange(density: &PairFn, outer: f64, samples: usize, seed: u64, s: &BallSample) -> (f64, f64) {
    let dim = s.center.len();
    let rho = s.radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ball = ball_volume(dim, rho);
    let shell = ball_volume(dim, outer * rho) - ball;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..samples {
        let x = uniform_in_ball(&mut rng, &s.center, rho);
        let y = loop {
            let y = uniform_in_ball(&mut rng, &s.center, outer * rho);
            let d2: f64 = y.iter().zip(&s.center).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 >= rho * rho {
                break y;
            }
        };
        let v = density(&x, &y) + density(&y, &x);
        sum += v;
        sq += v * v;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sq / m - mean * mean).max(0.0);
    (ball * shell * mean, ball * shell * (var / m).sqrt())
}

/// `sup ρ^{(1-n)q} (μ(B, ℝⁿ∖B) + μ(ℝⁿ∖B, B))` over the given balls.
/// `implied_constant` is `sup^{1/q}`, the sufficiency scale up to a
/// covering constant depending on `n`; `necessity_bound` is
/// `sup^{1/q} / |S^{n-1}|`.
pub fn corollary4_ball_sup(mu: &BallDensity, dim: usize, q: f64, samples: &[BallSample]) -> Result<CriterionReport> {
    if !(q >= 1.0) {
        return Err(Error::InvalidInput(format!("q = {q}; expected q >= 1")));
    }
    if samples.iter().any(|s| s.center.len() != dim || !(s.radius > 0.0)) {
        return Err(Error::InvalidInput("ball samples must match the dimension and have positive radius".into()));
    }
    if let BallDensity::Power { .. } = mu {
        if dim != 2 && dim != 3 {
            return Err(Error::DimensionUnsupported(dim));
        }
    }
    let values: Vec<Result<f64>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let v = match mu {
                BallDensity::Zero => 0.0,
                BallDensity::Power { a, cutoff } => power_exchange(dim, *a, *cutoff, s.radius),
                BallDensity::Sampled { density, outer, samples: m, seed } => {
                    let (v, se) = sampled_exchange(density, *outer, *m, seed.wrapping_add(i as u64), s);
                    if se > 0.1 * v {
                        return Err(Error::QuadratureUnstable(format!(
                            "standard error {se} exceeds 10% of {v} at radius {}",
                            s.radius
                        )));
                    }
                    v
                }
            };
            Ok(s.radius.powf((1.0 - dim as f64) * q) * v)
        })
        .collect();
    let mut best = (0.0, Witness::None);
    for (v, s) in values.into_iter().zip(samples) {
        let v = v?;
        if v > best.0 || matches!(best.1, Witness::None) {
            best = (v, Witness::Ball { center: s.center.clone(), radius: s.radius });
        }
    }
    let sup = best.0;
    let mut notes = vec!["sufficiency holds up to a covering constant depending only on the dimension".to_string()];
    if let BallDensity::Sampled { outer, .. } = mu {
        notes.push(format!("complement truncated at {outer} radii"));
    }
    Ok(CriterionReport {
        sup_value: sup,
        witness: best.1,
        implied_constant: sup.powf(1.0 / q),
        necessity_bound: sup.powf(1.0 / q) / sphere_area(dim),
        grid_resolution: SearchGrid { positions: samples.len(), ratio: 0.0, min_scale: 0.0, evaluations: samples.len() },
        notes,
    })
}
