//! One-dimensional measures on `Ω × Ω` and the difference seminorm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gauss_legendre;

pub const DEFAULT_WINDOW: f64 = 1e4;

/// Density of the absolutely continuous part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    None,
    /// `1`.
    Uniform,
    /// `|x - y|^{-kappa}`.
    Power { kappa: f64 },
    /// Piecewise-constant density on a uniform `n × n` grid of the (finite)
    /// interval squared; `values[i][j]` is the density on cell `(i, j)`.
    Table { values: Vec<Vec<f64>> },
}

impl Kernel {
    fn exponent(&self) -> Option<f64> {
        match self {
            Kernel::Uniform => Some(0.0),
            Kernel::Power { kappa } => Some(*kappa),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub x: f64,
    pub y: f64,
    pub mass: f64,
}

/// `μ = weight · k(x, y) dx dy + Σ atoms` on `(lo, hi)^2`, with the band
/// `|x - y| < cutoff` removed from the continuous part. Missing ends are
/// infinite and truncated to `±window`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductMeasure1D {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub kernel: Kernel,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub cutoff: f64,
    #[serde(default = "default_window")]
    pub window: f64,
}

fn one() -> f64 {
    1.0
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

/// Interval with endpoint closedness, used for atom membership.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Span {
    pub fn open(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_closed: false, hi_closed: false }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_closed: true, hi_closed: true }
    }

    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        Self { lo, hi, lo_closed, hi_closed }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x > self.lo || (self.lo_closed && x == self.lo)) && (x < self.hi || (self.hi_closed && x == self.hi))
    }

    fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

impl ProductMeasure1D {
    pub fn on(lo: f64, hi: f64, kernel: Kernel) -> Self {
        Self {
            lo: Some(lo),
            hi: Some(hi),
            kernel,
            weight: 1.0,
            atoms: Vec::new(),
            cutoff: 0.0,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn real_line(kernel: Kernel) -> Self {
        Self {
            lo: None,
            hi: None,
            ..Self::on(0.0, 1.0, kernel)
        }
    }

    pub fn zero(lo: f64, hi: f64) -> Self {
        Self::on(lo, hi, Kernel::None)
    }

    pub fn with_atoms(mut self, atoms: Vec<Atom>) -> Self {
        self.atoms = atoms;
        self
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    /// Computational interval after truncation.
    pub fn bounds(&self) -> (f64, f64) {
        (
            self.lo.unwrap_or(-self.window).max(-self.window),
            self.hi.unwrap_or(self.window).min(self.window),
        )
    }

    pub fn is_truncated(&self) -> bool {
        self.lo.is_none_or(|v| v < -self.window) || self.hi.is_none_or(|v| v > self.window)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.bounds();
        if !(a < b) {
            return Err(Error::InvalidInput(format!("empty interval ({a}, {b})")));
        }
        if self.weight < 0.0 || self.cutoff < 0.0 || self.atoms.iter().any(|t| t.mass < 0.0) {
            return Err(Error::InvalidInput("negative mass, weight or cutoff".into()));
        }
        match &self.kernel {
            Kernel::Table { values } => {
                let n = values.len();
                if n == 0 || values.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidInput("table density must be square".into()));
                }
                if values.iter().flatten().any(|v| !(*v >= 0.0)) {
                    return Err(Error::InvalidInput("table density must be nonnegative".into()));
                }
                if self.is_truncated() {
                    return Err(Error::InvalidInput("table density needs a finite interval".into()));
                }
                if self.cutoff > 0.0 {
                    return Err(Error::UnsupportedCase("diagonal cutoff with a table density".into()));
                }
            }
            Kernel::Power { kappa } if !kappa.is_finite() => {
                return Err(Error::InvalidInput(format!("kappa = {kappa}")));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        let table_sym = match &self.kernel {
            Kernel::Table { values } => {
                (0..values.len()).all(|i| (0..values.len()).all(|j| values[i][j] == values[j][i]))
            }
            _ => true,
        };
        let atoms_sym = self.atoms.iter().all(|a| {
            self.atoms
                .iter()
                .any(|b| b.x == a.y && b.y == a.x && b.mass == a.mass)
        });
        table_sym && atoms_sym
    }

    /// `μ(A × B)`.
    pub fn rect(&self, a: Span, b: Span) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|t| a.contains(t.x) && b.contains(t.y))
            .map(|t| t.mass)
            .sum();
        let (lo, hi) = self.bounds();
        let clip = |s: Span| (s.lo.max(lo), s.hi.min(hi));
        let (a1, a2) = clip(a);
        let (b1, b2) = clip(b);
        if a2 <= a1 || b2 <= b1 || self.weight == 0.0 {
            return atoms;
        }
        let cont = match &self.kernel {
            Kernel::None => 0.0,
            Kernel::Table { values } => {
                let n = values.len();
                let w = (hi - lo) / n as f64;
                let overlap = |c: usize, s: f64, e: f64| {
                    let (cl, ch) = (lo + c as f64 * w, lo + (c + 1) as f64 * w);
                    (ch.min(e) - cl.max(s)).max(0.0)
                };
                let mut total = 0.0;
                for (i, row) in values.iter().enumerate() {
                    let oa = overlap(i, a1, a2);
                    if oa == 0.0 {
                        continue;
                    }
                    for (j, v) in row.iter().enumerate() {
                        total += v * oa * overlap(j, b1, b2);
                    }
                }
                total
            }
            k => {
                let kappa = k.exponent().expect("translation-invariant kernel");
                let (dmin, dmax) = (a1 - b2, a2 - b1);
                if self.cutoff == 0.0 {
                    let overlap = dmin < 0.0 && dmax > 0.0;
                    let touch = dmin == 0.0 || dmax == 0.0;
                    if (overlap && kappa >= 1.0) || ((overlap || touch) && kappa >= 2.0) {
                        return f64::INFINITY;
                    }
                }
                let g = |s: f64| self.antiderivative(kappa, s.abs());
                g(a2 - b1) - g(a1 - b1) - g(a2 - b2) + g(a1 - b2)
            }
        };
        self.weight * cont + atoms
    }

    /// Even `G` with `G'' = |s|^{-kappa}` on `|s| >= cutoff`, `G = 0` inside
    /// the band and `C^1` across its edge.
    fn antiderivative(&self, kappa: f64, s: f64) -> f64 {
        let g = |s: f64| -> f64 {
            if kappa == 1.0 {
                if s == 0.0 {
                    0.0
                } else {
                    s * s.ln() - s
                }
            } else if kappa == 2.0 {
                -s.ln()
            } else {
                s.powf(2.0 - kappa) / ((1.0 - kappa) * (2.0 - kappa))
            }
        };
        let dg = |s: f64| -> f64 {
            if kappa == 1.0 {
                s.ln()
            } else {
                s.powf(1.0 - kappa) / (1.0 - kappa)
            }
        };
        let d = self.cutoff;
        if d == 0.0 {
            g(s)
        } else if s < d {
            0.0
        } else {
            g(s) - g(d) - dg(d) * (s - d)
        }
    }

    /// `μ(A, Ω∖Ā) + μ(Ω∖Ā, A)` for an open interval `A`.
    pub fn boundary_exchange(&self, a: Span) -> f64 {
        let (lo, hi) = self.bounds();
        let left = Span::open(lo, a.lo);
        let right = Span::open(a.hi, hi);
        let mut v = 0.0;
        for rest in [left, right] {
            if rest.is_empty() {
                continue;
            }
            v += self.rect(a, rest) + self.rect(rest, a);
        }
        v
    }
}

/// Piecewise-linear function through `(xs[i], us[i])`, constant outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, us: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != us.len() || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("knots must be increasing with matching values".into()));
        }
        if us.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite knot value".into()));
        }
        Ok(Self { xs, us })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(a: f64, b: f64, segments: usize, f: F) -> Self {
        let xs: Vec<f64> = (0..=segments).map(|i| a + (b - a) * i as f64 / segments as f64).collect();
        let us = xs.iter().map(|&x| f(x)).collect();
        Self { xs, us }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.us[0];
        }
        if x >= self.xs[n - 1] {
            return self.us[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.us[i] + w * (self.us[i + 1] - self.us[i])
    }

    /// `‖u'‖_{L_p}`.
    pub fn derivative_norm(&self, p: f64) -> f64 {
        let s: f64 = self
            .xs
            .windows(2)
            .zip(self.us.windows(2))
            .map(|(x, u)| ((u[1] - u[0]) / (x[1] - x[0])).abs().powf(p) * (x[1] - x[0]))
            .sum();
        s.powf(1.0 / p)
    }

    pub fn is_constant(&self) -> bool {
        self.us.iter().all(|&v| v == self.us[0])
    }

    pub fn affine(&self, alpha: f64, beta: f64) -> Self {
        Self {
            xs: self.xs.clone(),
            us: self.us.iter().map(|v| alpha * v + beta).collect(),
        }
    }
}

/// `∫_{lo}^{hi - s} |u(x + s) - u(x)|^q dx`, exact breakpoints, 4-point
/// Gauss–Legendre per piece.
pub(crate) fn shifted_difference(u: &PiecewiseLinear, lo: f64, hi: f64, s: f64, q: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    let end = hi - s;
    if end <= lo {
        return 0.0;
    }
    let mut cuts: Vec<f64> = u
        .xs
        .iter()
        .flat_map(|&k| [k, k - s])
        .filter(|&c| c > lo && c < end)
        .collect();
    cuts.push(lo);
    cuts.push(end);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (gx, gw) = gl;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, wt) in gx.iter().zip(gw) {
            let t = mid + half * x;
            total += half * wt * (u.eval(t + s) - u.eval(t)).abs().powf(q);
        }
    }
    total
}

/// `⟨u⟩_{q,μ}`. Returns `+∞` when the near-diagonal integral diverges.
pub fn seminorm(u: &PiecewiseLinear, mu: &ProductMeasure1D, q: f64) -> Result<f64> {
    Ok(seminorm_pow(u, mu, q)?.powf(1.0 / q))
}

/// `⟨u⟩_{q,μ}^q`.
pub fn seminorm_pow(u: &PiecewiseLinear, mu: &ProductMeasure1D, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidInput(format!("q = {q}; expected q >= 1")));
    }
    mu.validate()?;
    let atoms: f64 = mu
        .atoms
        .iter()
        .map(|t| t.mass * (u.eval(t.x) - u.eval(t.y)).abs().powf(q))
        .sum();
    if u.is_constant() || mu.weight == 0.0 {
        return Ok(atoms);
    }
    let (lo, hi) = mu.bounds();
    let cont = match &mu.kernel {
        Kernel::None => 0.0,
        Kernel::Table { values } => table_seminorm(u, values, lo, hi, q),
        k => {
            let kappa = k.exponent().expect("translation-invariant kernel");
            if mu.cutoff == 0.0 && kappa >= q + 1.0 {
                return Ok(f64::INFINITY);
            }
            let len = hi - lo;
            let start = mu.cutoff;
            let mut edges = Vec::new();
            if kappa <= 0.0 {
                edges.extend((0..=128).map(|i| start + (len - start) * i as f64 / 128.0));
            } else {
                // graded towards the diagonal
                let mut s = start.max(len * 1e-12);
                edges.push(start);
                while s < len {
                    edges.push(s);
                    s *= 1.2;
                }
                edges.push(len);
                edges.dedup();
            }
            let gl4 = gauss_legendre(4);
            let (gx, gw) = gauss_legendre(6);
            let mut total = 0.0;
            for w in edges.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b <= a {
                    continue;
                }
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                for (x, wt) in gx.iter().zip(&gw) {
                    let s = mid + half * x;
                    total += half * wt * s.powf(-kappa) * shifted_difference(u, lo, hi, s, q, &gl4);
                }
            }
            2.0 * total
        }
    };
    Ok(mu.weight * cont + atoms)
}

fn table_seminorm(u: &PiecewiseLinear, values: &[Vec<f64>], lo: f64, hi: f64, q: f64) -> f64 {
    let n = values.len();
    let w = (hi - lo) / n as f64;
    let (gx, gw) = gauss_legendre(8);
    let nodes: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|c| {
            let mid = lo + (c as f64 + 0.5) * w;
            gx.iter().zip(&gw).map(|(x, wt)| (mid + 0.5 * w * x, 0.5 * w * wt)).collect()
        })
        .collect();
    let mut total = 0.0;
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let mut cell = 0.0;
            for &(x, wx) in &nodes[i] {
                let ux = u.eval(x);
                for &(y, wy) in &nodes[j] {
                    cell += wx * wy * (ux - u.eval(y)).abs().powf(q);
                }
            }
            total += v * cell;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_rectangles_match_closed_form() {
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Uniform);
        let x = 0.3;
        let v = mu.rect(Span::open(0.0, x), Span::open(x, 1.0));
        assert!((v - x * (1.0 - x)).abs() < 1e-14);
        let i = Span::open(0.2, 0.5);
        assert!((mu.boundary_exchange(i) - 2.0 * 0.3 * 0.7).abs() < 1e-14);
    }

    #[test]
    fn power_rectangles_match_quadrature() {
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Power { kappa: 3.0 });
        let (a, b) = (Span::closed(0.1, 0.3), Span::closed(0.5, 0.9));
        // ∫∫ (y-x)^{-3} = ∫ [1/(2(0.5-x)^2) - 1/(2(0.9-x)^2)] dx
        let f = |x: f64| 0.5 / (0.5 - x).powi(2) - 0.5 / (0.9 - x).powi(2);
        let exact = crate::special::integrate(f, 0.1, 0.3, 32, 8);
        assert!((mu.rect(a, b) - exact).abs() < 1e-12 * exact);
        assert!(mu.rect(Span::open(0.0, 0.5), Span::open(0.5, 1.0)).is_infinite());
        let cut = mu.clone().with_cutoff(0.01);
        assert!(cut.rect(Span::open(0.0, 0.5), Span::open(0.5, 1.0)).is_finite());
        assert!((cut.rect(a, b) - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn table_rectangles() {
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Table { values: vec![vec![1.0, 2.0], vec![3.0, 4.0]] });
        let v = mu.rect(Span::open(0.0, 0.5), Span::open(0.25, 1.0));
        assert!((v - (0.5 * 0.25 * 1.0 + 0.5 * 0.5 * 2.0)).abs() < 1e-14);
        assert!(!mu.is_symmetric());
    }

    #[test]
    fn constant_and_atom_seminorms() {
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Uniform);
        let c = PiecewiseLinear::from_fn(0.0, 1.0, 4, |_| 2.0);
        assert_eq!(seminorm(&c, &mu, 2.0).unwrap(), 0.0);
        let atom = ProductMeasure1D::zero(0.0, 1.0).with_atoms(vec![Atom { x: 0.25, y: 0.75, mass: 1.0 }]);
        let u = PiecewiseLinear::from_fn(0.0, 1.0, 1, |x| x);
        assert!((seminorm(&u, &atom, 2.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_seminorm_of_identity() {
        // ∫∫ |x-y|^q = 2 / ((q+1)(q+2))
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Uniform);
        let u = PiecewiseLinear::from_fn(0.0, 1.0, 1, |x| x);
        for q in [1.0, 2.0, 3.0] {
            let v = seminorm_pow(&u, &mu, q).unwrap();
            let exact = 2.0 / ((q + 1.0) * (q + 2.0));
            assert!((v - exact).abs() < 1e-10, "{q}: {v} vs {exact}");
        }
    }

    #[test]
    fn singular_seminorm_grows_logarithmically() {
        // ∫∫_{|x-y|>δ} |x-y|^{-1} = 2 (ln(1/δ) - 1 + δ)
        let u = PiecewiseLinear::from_fn(0.0, 1.0, 1, |x| x);
        let base = ProductMeasure1D::on(0.0, 1.0, Kernel::Power { kappa: 3.0 });
        assert!(seminorm(&u, &base, 2.0).unwrap().is_infinite());
        for delta in [1e-2, 1e-3] {
            let v = seminorm_pow(&u, &base.clone().with_cutoff(delta), 2.0).unwrap();
            let exact = 2.0 * ((1.0 / delta).ln() - 1.0 + delta);
            assert!((v - exact).abs() < 1e-6 * exact, "{v} vs {exact}");
        }
    }

    #[test]
    fn seminorm_is_homogeneous() {
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Power { kappa: 0.5 });
        let u = PiecewiseLinear::new(vec![0.0, 0.3, 0.7, 1.0], vec![0.0, 1.0, -0.5, 0.2]).unwrap();
        let a = seminorm(&u, &mu, 2.0).unwrap();
        let b = seminorm(&u.affine(-3.0, 7.0), &mu, 2.0).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-10 * b);
    }

    #[test]
    fn table_seminorm_matches_uniform() {
        let t = ProductMeasure1D::on(0.0, 1.0, Kernel::Table { values: vec![vec![1.0; 4]; 4] });
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Uniform);
        let u = PiecewiseLinear::from_fn(0.0, 1.0, 8, |x| x * x);
        let a = seminorm(&u, &t, 2.0).unwrap();
        let b = seminorm(&u, &mu, 2.0).unwrap();
        assert!((a - b).abs() < 1e-4 * b, "{a} {b}");
    }
}
