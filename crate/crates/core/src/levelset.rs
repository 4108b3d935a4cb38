//! Capacitary Faber–Krahn integrals over the level sets
//! `N_t = {|u| >= t}` and the ψ-substitution for one-dimensional profiles.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{p_capacity_with, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::{ball_volume, sphere_area, volume, DomainGrid, NodeSet, ScalarField, Trace};
use crate::isoperimetric::{classical_profile, ProfilePoint};
use crate::special::{bessel_j_first_zero, gauss_legendre};

pub const MIN_THRESHOLDS: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct LevelProfile {
    /// `t_0 = 0 < t_1 < ... < t_k = max|u|`.
    pub thresholds: Vec<f64>,
    pub level_caps: Vec<f64>,
    pub level_volumes: Vec<f64>,
    pub p: f64,
    pub dim: usize,
    pub domain_volume: f64,
}

impl LevelProfile {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,cap,volume")?;
        for ((t, c), v) in self.thresholds.iter().zip(&self.level_caps).zip(&self.level_volumes) {
            writeln!(out, "{t},{c},{v}")?;
        }
        Ok(())
    }
}

/// Nodes with `|u| >= t`, or the support for `t = 0`.
fn level_set(omega: &DomainGrid, u: &ScalarField, t: f64) -> NodeSet {
    let members = omega
        .interior_nodes()
        .iter()
        .copied()
        .filter(|&i| {
            let a = u.value(i).abs();
            if t == 0.0 {
                a > 0.0
            } else {
                a >= t
            }
        })
        .collect();
    NodeSet::new(omega, members).expect("interior nodes")
}

fn thresholds_for(omega: &DomainGrid, u: &ScalarField, k: usize) -> Result<Vec<f64>> {
    if k < MIN_THRESHOLDS {
        return Err(Error::InvalidInput(format!(
            "k = {k}; at least {MIN_THRESHOLDS} thresholds required"
        )));
    }
    let top = u.max_abs();
    if top == 0.0 {
        return Err(Error::FlatField);
    }
    let step = top / k as f64;
    let values: Vec<f64> = omega.interior_nodes().iter().map(|&i| u.value(i).abs()).collect();
    let mut ts = Vec::with_capacity(k + 1);
    ts.push(0.0);
    for j in 1..k {
        let mut t = j as f64 * step;
        // several nodes sitting exactly on t indicate a plateau
        if values.iter().filter(|&&v| v == t).count() > 1 {
            t -= 0.5 * step;
        }
        ts.push(t);
    }
    ts.push(top);
    Ok(ts)
}

/// Level volumes only; no capacity solves.
pub fn level_volumes(u: &ScalarField, omega: &DomainGrid, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let ts = thresholds_for(omega, u, k)?;
    let vols = ts.iter().map(|&t| volume(omega, &level_set(omega, u, t))).collect();
    Ok((ts, vols))
}

pub fn level_profile(u: &ScalarField, omega: &DomainGrid, p: f64, k: usize) -> Result<LevelProfile> {
    let opts = SolverOptions {
        allow_boundary_contact: true,
        ..Default::default()
    };
    level_profile_with(u, omega, p, k, opts)
}

pub fn level_profile_with(
    u: &ScalarField,
    omega: &DomainGrid,
    p: f64,
    k: usize,
    opts: SolverOptions,
) -> Result<LevelProfile> {
    if !(p > 1.0) {
        return Err(Error::InvalidInput(format!("p = {p}; expected p > 1")));
    }
    let thresholds = thresholds_for(omega, u, k)?;
    let sets: Vec<NodeSet> = thresholds.iter().map(|&t| level_set(omega, u, t)).collect();
    let level_volumes: Vec<f64> = sets.iter().map(|s| volume(omega, s)).collect();
    let caps: Vec<f64> = sets
        .par_iter()
        .zip(&thresholds)
        .map(|(s, &t)| {
            if t == 0.0 {
                p_capacity_with(s, omega, p, opts)
            } else {
                p_capacity_with(s, &omega.with_level_interface(u, t), p, opts)
            }
            .map(|r| r.value)
        })
        .collect::<Result<_>>()?;
    let mut level_caps = Vec::with_capacity(caps.len());
    let tol = 1e-4;
    for (j, &c) in caps.iter().enumerate() {
        if j == 0 {
            level_caps.push(c);
            continue;
        }
        let prev: f64 = level_caps[j - 1];
        if c > prev * (1.0 + tol) {
            return Err(Error::TrendViolated(format!(
                "level capacity increased from {prev} to {c} at t = {}",
                thresholds[j]
            )));
        }
        level_caps.push(c.min(prev));
    }
    Ok(LevelProfile {
        thresholds,
        level_caps,
        level_volumes,
        p,
        dim: omega.dim(),
        domain_volume: omega.interior_count() as f64 * omega.cell_volume(),
    })
}

/// `∫ f(t) d(t^q)` over the thresholds, averaging the integrand at the ends
/// of each increment.
fn stieltjes<F: Fn(usize) -> f64>(ts: &[f64], q: f64, f: F) -> f64 {
    let vals: Vec<f64> = (0..ts.len()).map(&f).collect();
    ts.windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1].powf(q) - t[0].powf(q)))
        .sum()
}

fn bessel_index(dim: usize) -> f64 {
    (dim as f64 - 2.0) / 2.0
}

pub fn theorem1_lhs(profile: &LevelProfile, big_r: f64, dim: usize) -> Result<f64> {
    if !(2..=3).contains(&dim) {
        return Err(Error::DimensionUnsupported(dim));
    }
    if profile.p != 2.0 {
        return Err(Error::InvalidInput("theorem 1 needs a p = 2 profile".into()));
    }
    let m = WeightFunctionM::harmonic(dim, big_r)?;
    Ok(stieltjes(&profile.thresholds, 2.0, |j| m.at_capacity(profile.level_caps[j], 2.0)))
}

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Non-increasing, nonnegative weight on `[0, ∞]`.
#[derive(Clone)]
pub struct WeightFunctionM {
    name: String,
    eval: Evaluator,
    certificate: MonotonicityCertificate,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonotonicityCertificate {
    pub samples: usize,
    pub max_increase: f64,
    pub min_value: f64,
}

impl fmt::Debug for WeightFunctionM {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightFunctionM")
            .field("name", &self.name)
            .field("certificate", &self.certificate)
            .finish()
    }
}

fn certify(eval: &Evaluator) -> Result<MonotonicityCertificate> {
    let mut grid = vec![0.0];
    grid.extend((0..=240).map(|i| 10f64.powf(-8.0 + i as f64 / 15.0)));
    grid.push(f64::INFINITY);
    let vals: Vec<f64> = grid.iter().map(|&s| eval(s)).collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("M({}) = {}", grid[i], vals[i])));
    }
    let min_value = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max_increase = vals.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let scale = vals[0].abs().max(1e-300);
    if min_value < 0.0 || max_increase > 1e-12 * scale {
        return Err(Error::InvalidInput(format!(
            "M is not non-increasing and nonnegative (min {min_value}, max increase {max_increase})"
        )));
    }
    Ok(MonotonicityCertificate {
        samples: grid.len(),
        max_increase,
        min_value,
    })
}

impl WeightFunctionM {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(name: &str, f: F) -> Result<Self> {
        let eval: Evaluator = Arc::new(f);
        let certificate = certify(&eval)?;
        Ok(Self {
            name: name.to_string(),
            eval,
            certificate,
        })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new("constant", move |_| c)
    }

    /// The weight that turns the Stieltjes integral into the left side of the
    /// capacitary Faber–Krahn inequality for `p = q = 2`.
    pub fn harmonic(dim: usize, big_r: f64) -> Result<Self> {
        let n = dim as f64;
        let j = bessel_j_first_zero(bessel_index(dim));
        let s = sphere_area(dim);
        match dim {
            2 => Self::new("harmonic-2d", move |psi| {
                std::f64::consts::PI * j * j * (-4.0 * std::f64::consts::PI * psi).exp()
            }),
            3 => Self::new("harmonic", move |psi| {
                if psi.is_infinite() {
                    return 0.0;
                }
                let base = (n - 2.0) * s * psi + big_r.powf(2.0 - n);
                s / n * (j / big_r).powi(2) * base.powf(-n / (n - 2.0))
            }),
            d => Err(Error::DimensionUnsupported(d)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn certificate(&self) -> MonotonicityCertificate {
        self.certificate
    }

    pub fn eval(&self, psi: f64) -> f64 {
        (self.eval)(psi)
    }

    /// `M(cap^{1/(1-p)})`, with an empty set (`cap = 0`) mapped to `M(∞)`.
    pub fn at_capacity(&self, cap: f64, p: f64) -> f64 {
        let psi = if cap <= 0.0 { f64::INFINITY } else { cap.powf(1.0 / (1.0 - p)) };
        self.eval(psi)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PremiseReport {
    pub trials: usize,
    /// Largest observed `(-∫|t|^q dM)^{1/q} / (∫|t'|^p dψ)^{1/p}`.
    pub max_ratio: f64,
    pub holds: bool,
}

/// Tests the one-dimensional premise on random piecewise-linear `t(ψ)` with
/// `t(0) = 0`, constant past the last knot.
pub fn premise_check(m: &WeightFunctionM, p: f64, q: f64, trials: usize, seed: u64) -> PremiseReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let (gx, gw) = gauss_legendre(8);
    for _ in 0..trials {
        let knots = rng.gen_range(2..=8);
        let mut psi = vec![0.0];
        let mut t = vec![0.0];
        for _ in 0..knots {
            let last = *psi.last().unwrap();
            psi.push(last + 10f64.powf(rng.gen_range(-3.0..1.0)));
            t.push(rng.gen_range(-1.0..1.0));
        }
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for k in 0..knots {
            let (a, b) = (psi[k], psi[k + 1]);
            let slope = (t[k + 1] - t[k]) / (b - a);
            rhs += slope.abs().powf(p) * (b - a);
            // -∫|t|^q dM on the segment, sub-divided on a log scale
            let sub = 32;
            for s in 0..sub {
                let lo = a + (b - a) * s as f64 / sub as f64;
                let hi = a + (b - a) * (s + 1) as f64 / sub as f64;
                let drop = m.eval(lo) - m.eval(hi);
                if drop == 0.0 {
                    continue;
                }
                let mut avg = 0.0;
                for (x, w) in gx.iter().zip(&gw) {
                    let z = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
                    avg += 0.5 * w * (t[k] + slope * (z - a)).abs().powf(q);
                }
                lhs += avg * drop;
            }
        }
        let tail = *t.last().unwrap();
        lhs += tail.abs().powf(q) * (m.eval(*psi.last().unwrap()) - m.eval(f64::INFINITY));
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs.max(0.0).powf(1.0 / q) / rhs.powf(1.0 / p));
        }
    }
    PremiseReport {
        trials,
        max_ratio,
        holds: max_ratio <= 1.0 + 1e-3,
    }
}

pub fn theorem2_lhs(profile: &LevelProfile, m: &WeightFunctionM, q: f64) -> Result<f64> {
    if !(profile.p > 1.0) || !(q > 0.0) {
        return Err(Error::InvalidInput(format!("p = {}, q = {q}", profile.p)));
    }
    Ok(stieltjes(&profile.thresholds, q, |j| m.at_capacity(profile.level_caps[j], profile.p)))
}

#[derive(Debug, Clone)]
pub enum ProfileSource {
    ClassicalBound,
    /// Measured `(volume, perimeter)` samples, sorted by volume.
    Measured(Vec<ProfilePoint>),
}

impl ProfileSource {
    fn lambda(&self, dim: usize, v: f64) -> f64 {
        match self {
            ProfileSource::ClassicalBound => classical_profile(dim, v),
            ProfileSource::Measured(points) => {
                // smallest recorded perimeter among samples with volume >= v
                let best = points
                    .iter()
                    .filter(|pt| pt.volume >= v)
                    .map(|pt| pt.perimeter)
                    .fold(f64::INFINITY, f64::min);
                if best.is_finite() {
                    best
                } else {
                    points.last().map_or(f64::INFINITY, |pt| pt.perimeter)
                }
            }
        }
    }
}

/// `∫_{a}^{b} dv / λ(v)^2`.
fn inverse_profile_integral(source: &ProfileSource, dim: usize, a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    match source {
        ProfileSource::ClassicalBound => {
            let n = dim as f64;
            let c = n.powf(2.0 * (n - 1.0) / n) * sphere_area(dim).powf(2.0 / n);
            if dim == 2 {
                (b / a).ln() / c
            } else {
                let e = (2.0 - n) / n;
                (b.powf(e) - a.powf(e)) / (e * c)
            }
        }
        ProfileSource::Measured(_) => {
            // geometric panels resolve the small-volume end
            let panels = 200;
            let (gx, gw) = gauss_legendre(4);
            let ratio = (b / a).powf(1.0 / panels as f64);
            let mut total = 0.0;
            let mut lo = a;
            for _ in 0..panels {
                let hi = lo * ratio;
                for (x, w) in gx.iter().zip(&gw) {
                    let v = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
                    total += 0.5 * (hi - lo) * w / source.lambda(dim, v).powi(2);
                }
                lo = hi;
            }
            total
        }
    }
}

pub fn corollary1_lhs(
    u: &ScalarField,
    omega: &DomainGrid,
    big_r: f64,
    source: &ProfileSource,
    k: usize,
) -> Result<f64> {
    let dim = omega.dim();
    if !(2..=3).contains(&dim) {
        return Err(Error::DimensionUnsupported(dim));
    }
    if u.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let (ts, vols) = level_volumes(u, omega, k)?;
    let m_omega = omega.interior_count() as f64 * omega.cell_volume();
    let n = dim as f64;
    let j = bessel_j_first_zero(bessel_index(dim));
    let integrand = |idx: usize| {
        let mv = vols[idx];
        if mv <= 0.0 {
            return 0.0;
        }
        let i = inverse_profile_integral(source, dim, mv, m_omega);
        if dim == 2 {
            (-4.0 * std::f64::consts::PI * i).exp()
        } else {
            let cap_b = (n - 2.0) * sphere_area(dim) * big_r.powf(n - 2.0);
            (cap_b * i + 1.0).powf(n / (2.0 - n))
        }
    };
    let integral = stieltjes(&ts, 2.0, integrand);
    Ok(if dim == 2 {
        std::f64::consts::PI * j * j * integral
    } else {
        (j / big_r).powi(2) * ball_volume(dim, big_r) * integral
    })
}

/// Piecewise-linear profile `u(x)` on `xs`. For `dim == 1` the level sets are
/// point sets counted by `H^0`; for `dim >= 2`, `x` is the radius and the
/// level sets are spheres.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
    pub dim: usize,
}

impl RadialProfile {
    pub fn from_fn<F: Fn(f64) -> f64>(a: f64, b: f64, samples: usize, dim: usize, f: F) -> Self {
        let xs: Vec<f64> = (0..=samples)
            .map(|i| a + (b - a) * i as f64 / samples as f64)
            .collect();
        let us = xs.iter().map(|&x| f(x)).collect();
        Self { xs, us, dim }
    }

    fn density(&self, x: f64) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            sphere_area(self.dim) * x.abs().powi(self.dim as i32 - 1)
        }
    }

    /// `∫_{|u|=τ} |∇u|^{p-1}`.
    fn coarea_denominator(&self, tau: f64, p: f64) -> f64 {
        let mut d = 0.0;
        for k in 0..self.xs.len() - 1 {
            let (a, b) = (self.us[k].abs(), self.us[k + 1].abs());
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if tau > lo && tau < hi {
                let dx = self.xs[k + 1] - self.xs[k];
                let slope = (b - a).abs() / dx;
                let x = self.xs[k] + dx * (tau - a) / (b - a);
                d += slope.powf(p - 1.0) * self.density(x);
            }
        }
        d
    }

    /// `∫|u'|^p` against the profile's measure.
    pub fn energy(&self, p: f64) -> f64 {
        let (gx, gw) = gauss_legendre(6);
        let mut total = 0.0;
        for k in 0..self.xs.len() - 1 {
            let (x0, x1) = (self.xs[k], self.xs[k + 1]);
            let slope = ((self.us[k + 1] - self.us[k]) / (x1 - x0)).abs();
            if slope == 0.0 {
                continue;
            }
            let mass: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(x, w)| 0.5 * (x1 - x0) * w * self.density(0.5 * (x0 + x1) + 0.5 * (x1 - x0) * x))
                .sum();
            total += slope.powf(p) * mass;
        }
        total
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiMap {
    pub ts: Vec<f64>,
    pub psis: Vec<f64>,
    pub p: f64,
    /// `∫|t'(ψ)|^p dψ`.
    pub substituted_energy: f64,
    /// `∫|∇u|^p dx`.
    pub direct_energy: f64,
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.partition_point(|&v| v < x) {
        0 => ys[0],
        i if i == xs.len() => ys[xs.len() - 1],
        i => {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + w * (ys[i] - ys[i - 1])
        }
    }
}

impl PsiMap {
    pub fn psi(&self, t: f64) -> f64 {
        interp(&self.ts, &self.psis, t)
    }

    pub fn t_of(&self, psi: f64) -> f64 {
        interp(&self.psis, &self.ts, psi)
    }

    pub fn identity_error(&self) -> f64 {
        (self.substituted_energy - self.direct_energy).abs() / self.direct_energy
    }
}

/// `ψ(t) = ∫_0^t dτ / (∫_{|u|=τ} |∇u|^{p-1})^{1/(p-1)}` by Gauss–Legendre on
/// each interval between consecutive nodal values of `|u|`.
pub fn psi_substitution(u: &RadialProfile, p: f64) -> Result<PsiMap> {
    if !(p > 1.0) {
        return Err(Error::InvalidInput(format!("p = {p}; expected p > 1")));
    }
    if u.xs.len() < 2 || u.xs.len() != u.us.len() {
        return Err(Error::InvalidInput("profile needs matching samples".into()));
    }
    let top = u.us.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return Err(Error::FlatField);
    }
    let mut breaks: Vec<f64> = u.us.iter().map(|v| v.abs()).collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let (gx, gw) = gauss_legendre(8);
    let mut ts = vec![0.0];
    let mut psis = vec![0.0];
    let mut substituted = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut dpsi = 0.0;
        for (x, wt) in gx.iter().zip(&gw) {
            let tau = 0.5 * (a + b) + 0.5 * (b - a) * x;
            let d = u.coarea_denominator(tau, p);
            if d <= 0.0 {
                return Err(Error::DegenerateLevels { t: tau });
            }
            dpsi += 0.5 * (b - a) * wt / d.powf(1.0 / (p - 1.0));
        }
        substituted += (b - a).powf(p) / dpsi.powf(p - 1.0);
        ts.push(b);
        psis.push(psis.last().unwrap() + dpsi);
    }
    Ok(PsiMap {
        ts,
        psis,
        p,
        substituted_energy: substituted,
        direct_energy: u.energy(p),
    })
}

/// Sum of smooth compactly supported bumps `a exp(-1/(1-|y|^2))`,
/// `y = (x - c)/r`, with supports inside the ball `|x| < 1 - margin`.
pub fn random_bump_field(omega: &DomainGrid, rng: &mut ChaCha8Rng, bumps: usize, margin: f64) -> Result<ScalarField> {
    let dim = omega.dim();
    let mut params = Vec::with_capacity(bumps);
    for _ in 0..bumps {
        let reach = 1.0 - margin;
        let r = rng.gen_range(0.25 * reach..0.75 * reach);
        let room = reach - r;
        let c: Vec<f64> = loop {
            let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-room..room)).collect();
            if c.iter().map(|v| v * v).sum::<f64>() < room * room {
                break c;
            }
        };
        let a = rng.gen_range(0.2..1.0);
        params.push((c, r, a));
    }
    ScalarField::from_fn(omega, Trace::Zero, |x| {
        params
            .iter()
            .map(|(c, r, a)| {
                let y2 = x.iter().zip(c).map(|(xi, ci)| ((xi - ci) / r).powi(2)).sum::<f64>();
                if y2 < 1.0 {
                    a * (1.0 - 1.0 / (1.0 - y2)).exp()
                } else {
                    0.0
                }
            })
            .sum()
    })
}
