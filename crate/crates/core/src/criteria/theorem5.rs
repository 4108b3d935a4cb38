//! Constants for the capacitary sufficient condition with `q = p`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::measure::{shifted_difference, PiecewiseLinear};
use crate::error::{Error, Result};
use crate::special::gauss_legendre;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Positive, non-increasing `ν` on `(0, ∞)` vanishing at infinity, with
/// its derivative and optionally its second derivative.
#[derive(Clone)]
pub struct NuFunction {
    name: String,
    nu: RealFn,
    dnu: RealFn,
    d2nu: Option<RealFn>,
    certificate: NuCertificate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuCertificate {
    pub positive: bool,
    pub non_increasing: bool,
    pub vanishing: bool,
    pub derivative_consistent: bool,
    pub samples: usize,
}

impl NuCertificate {
    pub fn holds(&self) -> bool {
        self.positive && self.non_increasing && self.vanishing && self.derivative_consistent
    }
}

impl fmt::Debug for NuFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NuFunction")
            .field("name", &self.name)
            .field("certificate", &self.certificate)
            .finish()
    }
}

const CERT_SAMPLES: usize = 400;

impl NuFunction {
    /// Fails with `InvalidInput` unless the sampled certificate holds.
    pub fn new<F, G>(name: &str, nu: F, dnu: G) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let nu: RealFn = Arc::new(nu);
        let dnu: RealFn = Arc::new(dnu);
        let certificate = certify(&nu, &dnu);
        if !certificate.holds() {
            return Err(Error::InvalidInput(format!("nu '{name}' fails its certificate: {certificate:?}")));
        }
        Ok(Self { name: name.to_string(), nu, dnu, d2nu: None, certificate })
    }

    pub fn with_second<H>(mut self, d2nu: H) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.d2nu = Some(Arc::new(d2nu));
        self
    }

    /// `e^{-σ}`.
    pub fn exponential() -> Self {
        Self::new("exp", |s: f64| (-s).exp(), |s: f64| -(-s).exp())
            .expect("exp certificate")
            .with_second(|s: f64| (-s).exp())
    }

    /// `σ^{-a}`.
    pub fn power(a: f64) -> Result<Self> {
        Ok(Self::new(&format!("power({a})"), move |s: f64| s.powf(-a), move |s: f64| -a * s.powf(-a - 1.0))?
            .with_second(move |s: f64| a * (a + 1.0) * s.powf(-a - 2.0)))
    }

    /// `max(σ, s0)^{-a}`.
    pub fn truncated_power(a: f64, s0: f64) -> Result<Self> {
        Self::new(
            &format!("truncated_power({a}, {s0})"),
            move |s: f64| s.max(s0).powf(-a),
            move |s: f64| if s < s0 { 0.0 } else { -a * s.powf(-a - 1.0) },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.nu)(s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        (self.dnu)(s)
    }

    pub fn second_derivative(&self, s: f64) -> Option<f64> {
        self.d2nu.as_ref().map(|f| f(s))
    }

    pub fn certificate(&self) -> NuCertificate {
        self.certificate
    }
}

fn certify(nu: &RealFn, dnu: &RealFn) -> NuCertificate {
    let sigma = |i: usize| 10f64.powf(-6.0 + 8.0 * i as f64 / (CERT_SAMPLES - 1) as f64);
    let mut positive = true;
    let mut non_increasing = true;
    let mut derivative_consistent = true;
    let mut prev = f64::INFINITY;
    for i in 0..CERT_SAMPLES {
        let s = sigma(i);
        let v = nu(s);
        let d = dnu(s);
        positive &= v > 0.0 || (s > 1.0 && v == 0.0);
        non_increasing &= d <= 0.0 && v <= prev * (1.0 + 1e-12);
        prev = v;
        let h = 1e-6 * s;
        let scale = d.abs().max(1e-12 * v.abs().max(1e-300) / s);
        let left = (v - nu(s - h)) / h;
        let right = (nu(s + h) - v) / h;
        let ok = |fd: f64| (fd - d).abs() <= 1e-3 * scale + 1e-300;
        derivative_consistent &= ok(left) || ok(right) || v < 1e-250;
    }
    let vanishing = nu(1e30) <= 1e-2 * nu(1.0);
    NuCertificate { positive, non_increasing, vanishing, derivative_consistent, samples: CERT_SAMPLES }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem5Constants {
    pub p: f64,
    pub s: f64,
    pub k: f64,
    pub c58: f64,
}

const T_LO: f64 = -40.0;
const T_HI: f64 = 40.0;
const PANEL: f64 = 0.25;

/// Panel integrals of `g(t)` on `[T_LO, T_HI]` plus geometric tail estimates
/// at both ends; a tail that does not decay is infinite.
fn log_panels<G: Fn(f64) -> f64>(g: G) -> Result<(Vec<f64>, f64, f64)> {
    let (gx, gw) = gauss_legendre(8);
    let m = ((T_HI - T_LO) / PANEL).round() as usize;
    let panels: Vec<f64> = (0..m)
        .map(|k| {
            let mid = T_LO + (k as f64 + 0.5) * PANEL;
            0.5 * PANEL * gx.iter().zip(&gw).map(|(x, w)| w * g(mid + 0.5 * PANEL * x)).sum::<f64>()
        })
        .collect();
    if panels.iter().any(|v| v.is_nan()) {
        return Err(Error::QuadratureUnstable("NaN in log-variable quadrature".into()));
    }
    let tail = |last: f64, before: f64| -> f64 {
        if last == 0.0 {
            0.0
        } else if !last.is_finite() || before == 0.0 {
            f64::INFINITY
        } else {
            let rho = last / before;
            if rho >= 0.999 {
                f64::INFINITY
            } else {
                last * rho / (1.0 - rho)
            }
        }
    };
    let low = tail(panels[0], panels[1]);
    let high = tail(panels[m - 1], panels[m - 2]);
    Ok((panels, low, high))
}

/// `K = ∫_0^∞ |ν'(σ)| σ^{p-1} dσ`.
pub fn theorem5_k(nu: &NuFunction, p: f64) -> Result<f64> {
    let (panels, low, high) = log_panels(|t| {
        let s = t.exp();
        nu.derivative(s).abs() * s.powf(p)
    })?;
    Ok(low + panels.iter().sum::<f64>() + high)
}

/// `S = sup_τ (∫_0^τ |ν'|^{1/(1-p)} dσ/σ)^{p-1} ∫_τ^∞ |ν'| dσ/σ`, sup over the
/// panel edges `τ = e^t`.
pub fn theorem5_s(nu: &NuFunction, p: f64) -> Result<f64> {
    let (inner, inner_low, _) = log_panels(|t| {
        let d = nu.derivative(t.exp()).abs();
        if d == 0.0 {
            f64::INFINITY
        } else {
            d.powf(1.0 / (1.0 - p))
        }
    })?;
    let (outer, _, outer_high) = log_panels(|t| nu.derivative(t.exp()).abs())?;
    let m = inner.len();
    let mut tail = vec![outer_high; m + 1];
    for k in (0..m).rev() {
        tail[k] = tail[k + 1] + outer[k];
    }
    let mut head = inner_low;
    let mut s: f64 = 0.0;
    for k in 1..=m {
        head += inner[k - 1];
        let o = tail[k];
        let v = if o == 0.0 { 0.0 } else { head.powf(p - 1.0) * o };
        s = s.max(v);
    }
    Ok(s)
}

/// `S`, `K` and `2^{1/p} p (S/(p-1)^{p-1})^{1/(pp')} K^{1/p}`; infinite
/// values are returned as `+∞`.
pub fn theorem5_constants(nu: &NuFunction, p: f64) -> Result<Theorem5Constants> {
    if !(p > 1.0) {
        return Err(Error::InvalidInput(format!("p = {p}; expected p > 1")));
    }
    let s = theorem5_s(nu, p)?;
    let k = theorem5_k(nu, p)?;
    let pp = p / (p - 1.0);
    let c58 = 2f64.powf(1.0 / p) * p * (s / (p - 1.0).powf(p - 1.0)).powf(1.0 / (p * pp)) * k.powf(1.0 / p);
    Ok(Theorem5Constants { p, s, k, c58 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Remark6Row {
    pub n: f64,
    /// `∫∫ |u_N(t) - u_N(τ)|^p ν''(|t - τ|) dt dτ`.
    pub lhs: f64,
    /// `∫ |u_N'|^p = 2N`.
    pub rhs: f64,
    pub c_hat: f64,
    /// `∫_0^{N/2} s^{p-1} |ν'(s)| ds`.
    pub k_hat: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Remark6Report {
    pub p: f64,
    pub nu: String,
    pub rows: Vec<Remark6Row>,
    pub all_hold: bool,
    /// `Ĉ` of each row over the previous one.
    pub c_hat_ratios: Vec<f64>,
}

pub const REMARK6_S_MAX: f64 = 80.0;

/// Both sides of the quadratic-form inequality for `u_N = min(|t|, N)` and
/// the bound `K̂_N ≤ 4 Ĉ_N / p`.
pub fn remark6_sharpness(p: f64, nu: &NuFunction, ns: &[f64]) -> Result<Remark6Report> {
    if !(p > 1.0) {
        return Err(Error::InvalidInput(format!("p = {p}; expected p > 1")));
    }
    if nu.second_derivative(1.0).is_none() {
        return Err(Error::UnsupportedCase(format!("nu '{}' has no second derivative", nu.name())));
    }
    let gl = gauss_legendre(8);
    let gl4 = gauss_legendre(4);
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        if !(n > 0.0) {
            return Err(Error::InvalidInput(format!("N = {n}")));
        }
        let u = PiecewiseLinear::new(vec![-n, 0.0, n], vec![n, 0.0, n])?;
        let (lo, hi) = (-n - REMARK6_S_MAX - 1.0, n + REMARK6_S_MAX + 1.0);
        let lhs = 2.0 * panel_integral(&gl, 0.0, REMARK6_S_MAX, 0.25, |s| {
            nu.second_derivative(s).unwrap_or(0.0) * shifted_difference(&u, lo, hi, s, p, &gl4)
        });
        let rhs = 2.0 * n;
        let k_hat = panel_integral(&gl, 0.0, 0.5 * n, 0.25, |s| s.powf(p - 1.0) * nu.derivative(s).abs());
        if !lhs.is_finite() || !k_hat.is_finite() {
            return Err(Error::QuadratureUnstable(format!("non-finite sides at N = {n}")));
        }
        let c_hat = lhs / rhs;
        let bound = 4.0 * c_hat / p;
        rows.push(Remark6Row { n, lhs, rhs, c_hat, k_hat, bound, holds: k_hat <= bound });
    }
    let c_hat_ratios = rows.windows(2).map(|w| w[1].c_hat / w[0].c_hat).collect();
    Ok(Remark6Report {
        p,
        nu: nu.name().to_string(),
        all_hold: rows.iter().all(|r| r.holds),
        rows,
        c_hat_ratios,
    })
}

fn panel_integral<F: Fn(f64) -> f64>(gl: &(Vec<f64>, Vec<f64>), a: f64, b: f64, width: f64, f: F) -> f64 {
    let m = ((b - a) / width).ceil().max(1.0) as usize;
    let w = (b - a) / m as f64;
    let (gx, gw) = gl;
    (0..m)
        .map(|k| {
            let mid = a + (k as f64 + 0.5) * w;
            0.5 * w * gx.iter().zip(gw).map(|(x, wt)| wt * f(mid + 0.5 * w * x)).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_constants() {
        let c = theorem5_constants(&NuFunction::exponential(), 2.0).unwrap();
        assert!((c.k - 1.0).abs() < 1e-6, "{c:?}");
        assert!(c.s.is_infinite());
        assert!(c.c58.is_infinite());
        let k3 = theorem5_k(&NuFunction::exponential(), 3.0).unwrap();
        assert!((k3 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn pure_power_has_finite_s() {
        // inner τ²/2, outer τ^{-2}/2
        let nu = NuFunction::power(1.0).unwrap();
        let s = theorem5_s(&nu, 2.0).unwrap();
        assert!((s - 0.25).abs() < 1e-3, "{s}");
        assert!(theorem5_k(&nu, 2.0).unwrap().is_infinite());
    }

    #[test]
    fn truncated_power_k() {
        // K = a ∫_{s0}^∞ σ^{p-a-2} = a s0^{p-a-1} / (a+1-p) for a > p-1
        let nu = NuFunction::truncated_power(2.0, 1.0).unwrap();
        let k = theorem5_k(&nu, 2.0).unwrap();
        assert!((k - 2.0).abs() < 1e-3, "{k}");
        for a in [0.5, 1.0] {
            let nu = NuFunction::truncated_power(a, 1.0).unwrap();
            assert!(theorem5_k(&nu, 2.0).unwrap().is_infinite(), "{a}");
        }
    }

    #[test]
    fn certificate_rejects_increasing() {
        assert!(NuFunction::new("bad", |s: f64| s, |_| 1.0).is_err());
        assert!(NuFunction::new("wrong derivative", |s: f64| (-s).exp(), |s: f64| -2.0 * (-s).exp()).is_err());
    }

    #[test]
    fn remark6_bound_holds() {
        let rep = remark6_sharpness(2.0, &NuFunction::exponential(), &[1.0, 2.0, 4.0]).unwrap();
        assert!(rep.all_hold, "{rep:?}");
    }

    #[test]
    fn remark6_sides_grow_linearly() {
        // Ĉ_N → 2Γ(p + 1) as N → ∞
        let rep = remark6_sharpness(2.0, &NuFunction::exponential(), &[16.0, 32.0, 64.0]).unwrap();
        for r in &rep.c_hat_ratios {
            assert!((r - 1.0).abs() < 0.15, "{r}");
        }
        assert!((rep.rows[2].c_hat - 4.0).abs() < 0.1 * 4.0, "{rep:?}");
        let flat = PiecewiseLinear::new(vec![0.0, 1.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(shifted_difference(&flat, -5.0, 5.0, 1.0, 2.0, &gauss_legendre(4)), 0.0);
    }
}
