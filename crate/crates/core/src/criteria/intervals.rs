//! Interval criteria on the line and the random-search ratio oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::{seminorm, PiecewiseLinear, ProductMeasure1D, Span};
use super::{CriterionReport, SearchGrid, Witness};
use crate::error::{Error, Result};
use crate::special::gamma;

pub const POSITIONS: usize = 256;
pub const RATIO: f64 = 1.25;
/// Smallest searched length relative to the interval length.
pub const MIN_SCALE: f64 = 1e-4;
pub const DEFAULT_BUDGET: usize = 5_000_000;

/// Centres strictly inside `(lo, hi)`.
fn centres(lo: f64, hi: f64) -> Vec<f64> {
    (0..POSITIONS)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / POSITIONS as f64)
        .collect()
}

/// `len·MIN_SCALE · RATIO^k` up to `max`.
fn scales(len: f64, max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut s = len * MIN_SCALE;
    while s <= max {
        out.push(s);
        s *= RATIO;
    }
    out
}

/// Endpoint-interval cut positions: uniform plus geometric clusters at both ends.
fn cut_positions(lo: f64, hi: f64) -> Vec<f64> {
    let len = hi - lo;
    let mut xs = centres(lo, hi);
    for s in scales(len, 0.5 * len) {
        xs.push(lo + s);
        xs.push(hi - s);
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Deterministic arg-max; earliest index wins ties.
fn best<T: Clone>(items: Vec<(f64, T)>) -> Option<(f64, T)> {
    let mut out: Option<(f64, T)> = None;
    for (v, t) in items {
        if out.as_ref().is_none_or(|(b, _)| v > *b) {
            out = Some((v, t));
        }
    }
    out
}

fn search_grid(evaluations: usize) -> SearchGrid {
    SearchGrid {
        positions: POSITIONS,
        ratio: RATIO,
        min_scale: MIN_SCALE,
        evaluations,
    }
}

fn truncation_notes(mu: &ProductMeasure1D) -> Vec<String> {
    if mu.is_truncated() {
        vec![format!("infinite interval truncated to |x| <= {}", mu.window)]
    } else {
        Vec::new()
    }
}

/// Best `C` for `⟨u⟩_{q,μ} ≤ C ‖u'‖_{L_1}`: interior intervals need
/// `V(I)^{1/q} ≤ 2C`, endpoint intervals `V(I)^{1/q} ≤ C`, where
/// `V(I) = μ(I, Ω∖Ī) + μ(Ω∖Ī, I)`.
pub fn corollary3_sup(mu: &ProductMeasure1D, q: f64) -> Result<CriterionReport> {
    corollary3_sup_with(mu, q, DEFAULT_BUDGET)
}

pub fn corollary3_sup_with(mu: &ProductMeasure1D, q: f64, budget: usize) -> Result<CriterionReport> {
    if !(q >= 1.0) {
        return Err(Error::InvalidInput(format!("q = {q}; expected q >= 1")));
    }
    mu.validate()?;
    let (lo, hi) = mu.bounds();
    let len = hi - lo;
    let xs = centres(lo, hi);
    let ds = scales(len, 0.5 * len);
    let cuts = cut_positions(lo, hi);
    let needed = xs.len() * ds.len() + 2 * cuts.len();
    if needed > budget {
        return Err(Error::SearchBudgetExceeded { needed, budget });
    }
    let interior: Vec<(f64, Witness)> = xs
        .par_iter()
        .filter_map(|&x| {
            let row: Vec<(f64, Witness)> = ds
                .iter()
                .filter(|&&d| x - d > lo && x + d < hi)
                .map(|&d| {
                    let v = mu.boundary_exchange(Span::open(x - d, x + d));
                    (0.5 * v.powf(1.0 / q), Witness::Interval { lo: x - d, hi: x + d })
                })
                .collect();
            best(row)
        })
        .collect();
    let endpoint: Vec<(f64, Witness)> = cuts
        .par_iter()
        .flat_map_iter(|&x| {
            [
                (mu.boundary_exchange(Span::open(lo, x)), Witness::Interval { lo, hi: x }),
                (mu.boundary_exchange(Span::open(x, hi)), Witness::Interval { lo: x, hi }),
            ]
            .map(|(v, w)| (v.powf(1.0 / q), w))
        })
        .collect();
    let mut notes = truncation_notes(mu);
    let (ci, wi) = best(interior).unwrap_or((0.0, Witness::None));
    let (ce, we) = best(endpoint).unwrap_or((0.0, Witness::None));
    notes.push(format!("interior intervals: C >= {ci}"));
    notes.push(format!("endpoint intervals: C >= {ce}"));
    let (c, witness) = if ce >= ci { (ce, we) } else { (ci, wi) };
    Ok(CriterionReport {
        sup_value: c,
        witness,
        implied_constant: c,
        necessity_bound: c,
        grid_resolution: search_grid(needed),
        notes,
    })
}

/// Value of the functional for a given witness; recomputes `sup_value`.
pub fn corollary3_value(mu: &ProductMeasure1D, q: f64, witness: &Witness) -> f64 {
    let (lo, hi) = mu.bounds();
    match *witness {
        Witness::Interval { lo: a, hi: b } => {
            let v = mu.boundary_exchange(Span::open(a, b)).powf(1.0 / q);
            if a == lo || b == hi {
                v
            } else {
                0.5 * v
            }
        }
        _ => 0.0,
    }
}

/// `r^{(p-1)/p} μ(I, Ω∖J)^{1/q}`.
pub fn corollary5_value(mu: &ProductMeasure1D, p: f64, q: f64, witness: &Witness) -> f64 {
    let (lo, hi) = mu.bounds();
    match *witness {
        Witness::IntervalPair { i_lo, i_hi, j_lo, j_hi } => {
            let i = Span::new(i_lo, i_hi, i_lo > lo, i_hi < hi);
            let mut m = 0.0;
            let mut gaps = Vec::new();
            if j_lo > lo {
                m += mu.rect(i, Span::new(lo, j_lo, false, true));
                gaps.push(i_lo - j_lo);
            }
            if j_hi < hi {
                m += mu.rect(i, Span::new(j_hi, hi, true, false));
                gaps.push(j_hi - i_hi);
            }
            let r = gaps.into_iter().fold(f64::INFINITY, f64::min);
            r.powf((p - 1.0) / p) * m.powf(1.0 / q)
        }
        _ => 0.0,
    }
}

/// `sup r^{(p-1)/p} μ(I, Ω∖J)^{1/q}` over the interior family
/// `I = [x-d, x+d]`, `J = (x-d-r, x+d+r)` and both endpoint families.
/// `p = q` is accepted as a diagnostic; the sufficiency constant is then `∞`.
pub fn corollary5_check(mu: &ProductMeasure1D, p: f64, q: f64) -> Result<CriterionReport> {
    corollary5_check_with(mu, p, q, DEFAULT_BUDGET)
}

pub fn corollary5_check_with(mu: &ProductMeasure1D, p: f64, q: f64, budget: usize) -> Result<CriterionReport> {
    if !(p > 1.0 && q >= p) {
        return Err(Error::InvalidInput(format!("need 1 < p <= q, got p = {p}, q = {q}")));
    }
    mu.validate()?;
    let (lo, hi) = mu.bounds();
    let len = hi - lo;
    let xs = centres(lo, hi);
    let ds = scales(len, 0.5 * len);
    let rs = scales(len, len);
    let cuts = cut_positions(lo, hi);
    let needed = xs.len() * ds.len() * rs.len() + 2 * cuts.len() * rs.len();
    if needed > budget {
        return Err(Error::SearchBudgetExceeded { needed, budget });
    }
    let interior: Vec<(f64, Witness)> = xs
        .par_iter()
        .filter_map(|&x| {
            let mut row = Vec::new();
            for &d in &ds {
                for &r in &rs {
                    let (j_lo, j_hi) = (x - d - r, x + d + r);
                    if j_lo < lo || j_hi > hi || (j_lo == lo && j_hi == hi) {
                        continue;
                    }
                    let w = Witness::IntervalPair { i_lo: x - d, i_hi: x + d, j_lo, j_hi };
                    row.push((corollary5_value(mu, p, q, &w), w));
                }
            }
            best(row)
        })
        .collect();
    let endpoint: Vec<(f64, Witness)> = cuts
        .par_iter()
        .filter_map(|&x| {
            let mut row = Vec::new();
            for &r in &rs {
                if x + r < hi {
                    let w = Witness::IntervalPair { i_lo: lo, i_hi: x, j_lo: lo, j_hi: x + r };
                    row.push((corollary5_value(mu, p, q, &w), w));
                }
                if x - r > lo {
                    let w = Witness::IntervalPair { i_lo: x, i_hi: hi, j_lo: x - r, j_hi: hi };
                    row.push((corollary5_value(mu, p, q, &w), w));
                }
            }
            best(row)
        })
        .collect();
    let (b, witness) = best(interior.into_iter().chain(endpoint).collect()).unwrap_or((0.0, Witness::None));
    let mut notes = truncation_notes(mu);
    let k = corollary5_sufficiency_constant(p, q);
    if q == p {
        notes.push("p = q: the interval condition is necessary only".into());
    }
    Ok(CriterionReport {
        sup_value: b,
        witness,
        implied_constant: if b == 0.0 { 0.0 } else { k * b },
        necessity_bound: b * 2f64.powf(-1.0 / p),
        grid_resolution: search_grid(needed),
        notes,
    })
}

/// Best constant `K` in `∫_0^∞ F(x)^q x^{a-q} dx ≤ K (∫_0^∞ f^p)^{q/p}`,
/// `F = ∫_0^x f`, `a = q/p - 1`.
pub fn bliss_constant(p: f64, q: f64) -> f64 {
    let a = q / p - 1.0;
    (a * gamma(q / a) / (gamma(1.0 / a) * gamma((q - 1.0) / a))).powf(a) / (q - a - 1.0)
}

/// `K(p, q)` with `⟨u⟩_{q,μ} ≤ K(p, q) B ‖u'‖_{L_p}` whenever the interval
/// supremum is `B`; `∞` unless `q > p`.
pub fn corollary5_sufficiency_constant(p: f64, q: f64) -> f64 {
    if !(q > p && p > 1.0) {
        return f64::INFINITY;
    }
    let pp = p / (p - 1.0);
    let maximal = 2.0 * 2f64.powf(p) * p / (p - 1.0) * q / (q - p);
    let hardy = bliss_constant(p, q);
    let s = q / pp;
    2f64.powf(1.0 / pp) * (s * ((s + 1.0) * maximal + hardy / pp)).powf(1.0 / q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub ratio: f64,
    pub best: Option<PiecewiseLinear>,
    pub evaluations: usize,
    pub seed: u64,
}

fn ratio(mu: &ProductMeasure1D, u: &PiecewiseLinear, p: f64, q: f64) -> f64 {
    let den = u.derivative_norm(p);
    if !(den > 0.0) {
        return 0.0;
    }
    match seminorm(u, mu, q) {
        Ok(v) => v / den,
        Err(_) => 0.0,
    }
}

fn random_candidate(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> PiecewiseLinear {
    let len = hi - lo;
    let mut xs = vec![lo, hi];
    let us;
    if rng.gen_bool(0.4) {
        // single monotone ramp
        let w = len * 10f64.powf(rng.gen_range(-3.0..0.0));
        let c = rng.gen_range(lo..hi);
        let e = (c + w).min(hi);
        xs = vec![lo, c, e, hi];
        xs.dedup();
        us = xs.iter().map(|&x| if x <= c { 0.0 } else { 1.0 }).collect();
    } else {
        let k = rng.gen_range(1..=8);
        for _ in 0..k {
            xs.push(rng.gen_range(lo..hi));
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        us = xs.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    }
    PiecewiseLinear { xs, us }
}

/// Largest `⟨u⟩_{q,μ} / ‖u'‖_{L_p}` found over random piecewise-linear `u`
/// followed by coordinate ascent on the knot values; a lower bound for the
/// best constant.
pub fn brute_force_ratio(mu: &ProductMeasure1D, p: f64, q: f64, budget: usize, seed: u64) -> Result<BruteForceResult> {
    if budget < 100 {
        return Err(Error::InvalidInput(format!("budget {budget} < 100")));
    }
    if !(p >= 1.0 && q >= 1.0) {
        return Err(Error::InvalidInput(format!("p = {p}, q = {q}; expected >= 1")));
    }
    mu.validate()?;
    let (lo, hi) = mu.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = budget * 7 / 10;
    let candidates: Vec<PiecewiseLinear> = (0..random).map(|_| random_candidate(&mut rng, lo, hi)).collect();
    let scored: Vec<(f64, PiecewiseLinear)> = candidates
        .into_par_iter()
        .map(|u| (ratio(mu, &u, p, q), u))
        .collect();
    let mut evaluations = random;
    let Some((mut r, mut u)) = best(scored) else {
        return Ok(BruteForceResult { ratio: 0.0, best: None, evaluations, seed });
    };
    let mut step = 0.25;
    while evaluations < budget && step > 1e-4 {
        let mut improved = false;
        for i in 0..u.us.len() {
            for sign in [1.0, -1.0] {
                if evaluations >= budget {
                    break;
                }
                let mut v = u.clone();
                v.us[i] += sign * step;
                let rv = ratio(mu, &v, p, q);
                evaluations += 1;
                if rv > r {
                    r = rv;
                    u = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(BruteForceResult {
        ratio: r,
        best: (r > 0.0).then_some(u),
        evaluations,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::measure::{Atom, Kernel};
    use crate::special::integrate;

    #[test]
    fn zero_measure_gives_zero() {
        let mu = ProductMeasure1D::zero(0.0, 1.0);
        assert_eq!(corollary3_sup(&mu, 1.0).unwrap().implied_constant, 0.0);
        assert_eq!(corollary5_check(&mu, 2.0, 3.0).unwrap().sup_value, 0.0);
        assert_eq!(brute_force_ratio(&mu, 2.0, 3.0, 100, 1).unwrap().ratio, 0.0);
    }

    #[test]
    fn lebesgue_corollary3() {
        // V(I) = 2|I|(1-|I|): interior max 1/2 -> C >= 1/4; endpoint -> C >= 1/2
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Uniform);
        let rep = corollary3_sup(&mu, 1.0).unwrap();
        assert!((rep.implied_constant - 0.5).abs() < 1e-3, "{rep:?}");
        let again = corollary3_value(&mu, 1.0, &rep.witness);
        assert!((again - rep.sup_value).abs() < 1e-12);
        let Witness::Interval { lo, hi } = rep.witness else { panic!() };
        assert!((2.0 * (hi - lo) * (1.0 - (hi - lo)) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn symmetric_two_term_sum_is_twice_one_term() {
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Power { kappa: 0.5 });
        let i = Span::open(0.2, 0.45);
        let one = mu.rect(i, Span::open(0.0, 0.2)) + mu.rect(i, Span::open(0.45, 1.0));
        assert!((mu.boundary_exchange(i) - 2.0 * one).abs() < 1e-12);
    }

    #[test]
    fn atom_ratio_is_one() {
        let mu = ProductMeasure1D::zero(0.0, 1.0).with_atoms(vec![Atom { x: 0.25, y: 0.75, mass: 1.0 }]);
        let r = brute_force_ratio(&mu, 1.0, 1.0, 400, 7).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-9, "{r:?}");
        assert!(r.ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn lebesgue_corollary5_is_finite_and_bounds_the_search() {
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Uniform);
        let rep = corollary5_check(&mu, 2.0, 3.0).unwrap();
        assert!(rep.sup_value.is_finite() && rep.sup_value > 0.0);
        let again = corollary5_value(&mu, 2.0, 3.0, &rep.witness);
        assert!((again - rep.sup_value).abs() < 1e-12);
        let r = brute_force_ratio(&mu, 2.0, 3.0, 200, 3).unwrap();
        assert!(r.ratio > 0.4 && r.ratio <= rep.implied_constant, "{} {}", r.ratio, rep.implied_constant);
    }

    #[test]
    fn singular_kernel_on_the_line() {
        // μ(I, ℝ∖J) = 1/r - 1/(2d + r)
        let mu = ProductMeasure1D::real_line(Kernel::Power { kappa: 3.0 });
        let rep = corollary5_check(&mu, 2.0, 2.0).unwrap();
        assert!(rep.sup_value > 0.9 && rep.sup_value <= 1.0 + 1e-9, "{rep:?}");
        assert!(rep.implied_constant.is_infinite());
        let Witness::IntervalPair { i_lo, i_hi, j_lo, j_hi } = rep.witness else { panic!() };
        let (d, r) = (0.5 * (i_hi - i_lo), i_lo - j_lo);
        assert!((j_hi - i_hi - r).abs() < 1e-9 * r);
        let exact = 1.0 / r - 1.0 / (2.0 * d + r);
        assert!((rep.sup_value.powi(2) / r - exact).abs() < 0.01 * exact);
    }

    #[test]
    fn bliss_extremal_attains_the_constant() {
        let (p, q) = (2.0, 3.0);
        let a = q / p - 1.0;
        let f = |x: f64| (1.0 + x.powf(a)).powf(-(a + 1.0) / a);
        // F(x) = (√x / (1 + √x))^2; substitute x = e^t
        let big_f = |x: f64| (x.sqrt() / (1.0 + x.sqrt())).powi(2);
        let lhs = integrate(|t: f64| { let x = t.exp(); big_f(x).powf(q) * x.powf(a - q) * x }, -60.0, 60.0, 1200, 6);
        let rhs = integrate(|t: f64| { let x = t.exp(); f(x).powf(p) * x }, -60.0, 60.0, 1200, 6).powf(q / p);
        let k = bliss_constant(p, q);
        assert!((lhs / rhs - k).abs() < 1e-3 * k, "{} vs {k}", lhs / rhs);
    }

    #[test]
    fn brute_force_is_affine_invariant() {
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Uniform);
        let u = PiecewiseLinear::new(vec![0.0, 0.4, 1.0], vec![0.0, 1.0, 0.5]).unwrap();
        let a = ratio(&mu, &u, 2.0, 3.0);
        let b = ratio(&mu, &u.affine(-2.5, 4.0), 2.0, 3.0);
        assert!((a - b).abs() < 1e-10 * a);
    }
}
