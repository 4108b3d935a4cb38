//! Relative capacities and condenser capacities by discrete energy
//! minimisation.
//!
//! The quadratic case is a single Jacobi-CG solve of the masked Laplacian.
//! For `p != 2` the p-energy is minimised by iteratively reweighted least
//! squares: node weights `|∇u|^{p-2}` (floored, damped), a weighted linear
//! solve, and a backtracking line search on the true energy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    ball_volume, forward_gradient_sq, gradient_energy, sphere_area, DomainGrid, NodeSet,
    ScalarField, Trace,
};
use crate::linalg::{EdgeRule, EdgeSystem};

#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub value: f64,
    /// Minimiser clamped to `[0, 1]`.
    pub minimizer: ScalarField,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacitySummary {
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl CapacityResult {
    pub fn summary(&self) -> CapacitySummary {
        CapacitySummary {
            value: self.value,
            iterations: self.iterations,
            residual: self.residual,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub irls_max_iter: usize,
    pub energy_tol: f64,
    pub weight_floor: f64,
    pub damping: f64,
    /// Accept pinned sets adjacent to the Dirichlet layer.
    pub allow_boundary_contact: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cg_tol: 1e-8,
            cg_max_iter: 50_000,
            irls_max_iter: 400,
            energy_tol: 1e-8,
            weight_floor: 1e-12,
            damping: 0.5,
            allow_boundary_contact: false,
        }
    }
}

/// Pair of disjoint node sets; the potential is pinned to 1 on `f1`, 0 on `f2`.
#[derive(Debug, Clone)]
pub struct Condenser {
    pub f1: NodeSet,
    pub f2: NodeSet,
}

impl Condenser {
    pub fn swapped(&self) -> Self {
        Self {
            f1: self.f2.clone(),
            f2: self.f1.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// No condition on the domain boundary.
    Natural,
    /// Zero trace on the domain boundary.
    Dirichlet,
}

pub fn harmonic_capacity(f: &NodeSet, omega: &DomainGrid) -> Result<CapacityResult> {
    p_capacity_with(f, omega, 2.0, SolverOptions::default())
}

pub fn p_capacity(f: &NodeSet, omega: &DomainGrid, p: f64) -> Result<CapacityResult> {
    p_capacity_with(f, omega, p, SolverOptions::default())
}

pub fn p_capacity_with(
    f: &NodeSet,
    omega: &DomainGrid,
    p: f64,
    opts: SolverOptions,
) -> Result<CapacityResult> {
    if !(p > 1.0) {
        return Err(Error::InvalidInput(format!("p = {p} must exceed 1")));
    }
    if f.is_empty() {
        return Ok(CapacityResult {
            value: 0.0,
            minimizer: ScalarField::zeros(omega, Trace::Zero),
            iterations: 0,
            residual: 0.0,
        });
    }
    if !opts.allow_boundary_contact && f.touches_boundary(omega) {
        return Err(Error::DegenerateCondenser(
            "F is adjacent to the Dirichlet layer".into(),
        ));
    }
    let mut fixed = vec![0.0; omega.node_count()];
    for &i in f.members() {
        fixed[i] = 1.0;
    }
    let pinned = f.mask(omega);
    minimize(omega, &fixed, |i| !pinned[i], EdgeRule::Dirichlet, p, opts)
}

pub fn condenser_capacity(
    c: &Condenser,
    omega: &DomainGrid,
    p: f64,
    boundary: BoundaryRule,
) -> Result<CapacityResult> {
    condenser_capacity_with(c, omega, p, boundary, SolverOptions::default())
}

pub fn condenser_capacity_with(
    c: &Condenser,
    omega: &DomainGrid,
    p: f64,
    boundary: BoundaryRule,
    opts: SolverOptions,
) -> Result<CapacityResult> {
    if !(p > 1.0) {
        return Err(Error::InvalidInput(format!("p = {p} must exceed 1")));
    }
    if c.f1.is_empty() || c.f2.is_empty() {
        return Err(Error::DegenerateCondenser("both plates must be nonempty".into()));
    }
    if c.f1.intersects(&c.f2) {
        return Err(Error::DegenerateCondenser("plates intersect".into()));
    }
    let mut fixed = vec![0.0; omega.node_count()];
    for &i in c.f1.members() {
        fixed[i] = 1.0;
    }
    let m1 = c.f1.mask(omega);
    let m2 = c.f2.mask(omega);
    let rule = match boundary {
        BoundaryRule::Natural => EdgeRule::Neumann,
        BoundaryRule::Dirichlet => EdgeRule::Dirichlet,
    };
    minimize(omega, &fixed, |i| !m1[i] && !m2[i], rule, p, opts)
}

fn field_from(
    omega: &DomainGrid,
    sys: &EdgeSystem,
    x: &[f64],
    fixed: &[f64],
    trace: Trace,
) -> ScalarField {
    let vals: Vec<f64> = omega
        .interior_nodes()
        .iter()
        .map(|&i| sys.slot(i).map_or(fixed[i], |s| x[s]))
        .collect();
    ScalarField::from_interior(omega, &vals, trace).expect("finite iterate")
}

fn minimize<F: Fn(usize) -> bool>(
    omega: &DomainGrid,
    fixed: &[f64],
    is_free: F,
    rule: EdgeRule,
    p: f64,
    opts: SolverOptions,
) -> Result<CapacityResult> {
    let trace = match rule {
        EdgeRule::Dirichlet => Trace::Zero,
        EdgeRule::Neumann => Trace::Free,
    };
    let sys = EdgeSystem::new(omega, &is_free, None, rule, p);
    let b = sys.fixed_rhs(fixed);
    let mut x = vec![0.0; sys.len()];
    let out = sys.solve(&b, &mut x, opts.cg_tol, opts.cg_max_iter);
    if !out.converged {
        return Err(Error::SolverDiverged {
            iterations: out.iterations,
            residual: out.residual,
        });
    }
    let mut u = field_from(omega, &sys, &x, fixed, trace);
    let mut energy = gradient_energy(omega, &u, p);
    if p == 2.0 {
        return Ok(finish(omega, u, energy, out.iterations, out.residual));
    }

    let free_nodes = sys.free_nodes().to_vec();
    let mut weights: Option<Vec<f64>> = None;
    let mut iterations = out.iterations;
    let mut rel_decrease = f64::INFINITY;
    for _ in 0..opts.irls_max_iter {
        let fresh: Vec<f64> = (0..omega.node_count())
            .map(|k| {
                let g = forward_gradient_sq(omega, &u, k, p).unwrap_or(0.0).sqrt();
                g.max(opts.weight_floor).powf(p - 2.0)
            })
            .collect();
        let w = match weights.take() {
            None => fresh,
            Some(old) => old
                .iter()
                .zip(&fresh)
                .map(|(o, n)| (1.0 - opts.damping) * o + opts.damping * n)
                .collect(),
        };
        let wsys = EdgeSystem::new(omega, &is_free, Some(w.clone()), rule, p);
        weights = Some(w);
        let b = wsys.fixed_rhs(fixed);
        let current: Vec<f64> = free_nodes.iter().map(|&i| u.value(i)).collect();
        let mut v = current.clone();
        let out = wsys.solve(&b, &mut v, opts.cg_tol, opts.cg_max_iter);
        iterations += out.iterations;
        if !out.residual.is_finite() {
            return Err(Error::SolverDiverged {
                iterations,
                residual: out.residual,
            });
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-6 {
            let trial: Vec<f64> = current
                .iter()
                .zip(&v)
                .map(|(c, n)| c + alpha * (n - c))
                .collect();
            let cand = field_from(omega, &wsys, &trial, fixed, trace);
            let e = gradient_energy(omega, &cand, p);
            if e <= energy {
                accepted = Some((cand, e));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((cand, e)) => {
                rel_decrease = (energy - e) / energy.max(f64::MIN_POSITIVE);
                u = cand;
                energy = e;
                if rel_decrease < opts.energy_tol {
                    return Ok(finish(omega, u, energy, iterations, rel_decrease));
                }
            }
            None => return Ok(finish(omega, u, energy, iterations, 0.0)),
        }
    }
    Err(Error::NotConverged {
        iterations,
        residual: rel_decrease,
        last: Box::new(u),
    })
}

fn finish(
    omega: &DomainGrid,
    u: ScalarField,
    value: f64,
    iterations: usize,
    residual: f64,
) -> CapacityResult {
    let trace = u.trace();
    let clamped: Vec<f64> = u
        .interior_values(omega)
        .iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    CapacityResult {
        value,
        minimizer: ScalarField::from_interior(omega, &clamped, trace).expect("finite"),
        iterations,
        residual,
    }
}

/// Closed-form p-capacity of the spherical condenser `r < |x| < R`.
/// `big_r = f64::INFINITY` gives the capacity of the ball of radius `r` in ℝⁿ.
pub fn spherical_condenser_exact(r: f64, big_r: f64, dim: usize, p: f64) -> Result<f64> {
    if !(r > 0.0 && big_r > r) || dim < 2 || !(p >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 < r < R, dim >= 2, p >= 1 (got r={r}, R={big_r}, dim={dim}, p={p})"
        )));
    }
    let n = dim as f64;
    let s = sphere_area(dim);
    if p == 1.0 {
        return Ok(s * r.powf(n - 1.0));
    }
    if big_r.is_infinite() {
        if p >= n {
            return Err(Error::UnsupportedCase(format!(
                "capacity of a ball in R^{dim} vanishes for p = {p} >= n"
            )));
        }
        return Ok(s * ((n - p) / (p - 1.0)).powf(p - 1.0) * r.powf(n - p));
    }
    if p == n {
        return Ok(s * (big_r / r).ln().powf(1.0 - n));
    }
    let e = (p - n) / (p - 1.0);
    Ok(s * (e.abs()).powf(p - 1.0) * (r.powf(e) - big_r.powf(e)).abs().powf(1.0 - p))
}

/// Radius of the ball of volume `v`.
pub fn volume_radius(dim: usize, v: f64) -> f64 {
    (v / ball_volume(dim, 1.0)).powf(1.0 / dim as f64)
}

/// Lower bound `(∫_{m_F}^{m_Ω} dv / λ(v)^{p/(p-1)})^{1-p}` with the classical
/// isoperimetric profile `λ(v) = |S^{n-1}| ρ(v)^{n-1}`.
pub fn profile_lower_bound(dim: usize, m_f: f64, m_omega: f64, p: f64) -> f64 {
    let q = p / (p - 1.0);
    let s = sphere_area(dim);
    // substitute v = ω ρ^n: dv = s ρ^{n-1} dρ
    let (a, b) = (volume_radius(dim, m_f), volume_radius(dim, m_omega));
    let integral = crate::special::integrate(
        |rho| s * rho.powi(dim as i32 - 1) / (s * rho.powi(dim as i32 - 1)).powf(q),
        a,
        b,
        64,
        8,
    );
    integral.powf(1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, DomainSpec};
    use std::f64::consts::PI;

    fn ball_condenser(dim: usize, h: f64) -> (DomainGrid, NodeSet) {
        let g = build_domain(&DomainSpec::unit_ball(dim), h).unwrap();
        let f = g.select(|x| x.iter().map(|v| v * v).sum::<f64>() <= 0.25);
        (g, f)
    }

    #[test]
    fn exact_values() {
        assert!((spherical_condenser_exact(1.0, f64::INFINITY, 3, 2.0).unwrap() - 4.0 * PI).abs() < 1e-12);
        assert!((spherical_condenser_exact(0.5, 1.0, 2, 2.0).unwrap() - 2.0 * PI / 2f64.ln()).abs() < 1e-12);
        assert!((spherical_condenser_exact(0.5, 1.0, 3, 2.0).unwrap() - 4.0 * PI).abs() < 1e-12);
        assert!(matches!(
            spherical_condenser_exact(1.0, f64::INFINITY, 2, 2.0),
            Err(Error::UnsupportedCase(_))
        ));
    }

    #[test]
    fn empty_set_has_zero_capacity() {
        let (g, _) = ball_condenser(2, 0.1);
        let r = harmonic_capacity(&NodeSet::empty(), &g).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.iterations, 0);
        assert_eq!(p_capacity(&NodeSet::empty(), &g, 3.0).unwrap().value, 0.0);
    }

    #[test]
    fn disk_condenser_within_two_percent() {
        let (g, f) = ball_condenser(2, 1.0 / 128.0);
        let r = harmonic_capacity(&f, &g).unwrap();
        let exact = 2.0 * PI / 2f64.ln();
        assert!((r.value - exact).abs() / exact < 0.02, "{}", r.value);
    }

    #[test]
    fn full_set_touching_boundary_is_degenerate() {
        let (g, _) = ball_condenser(2, 0.1);
        assert!(matches!(
            harmonic_capacity(&g.all_interior(), &g),
            Err(Error::DegenerateCondenser(_))
        ));
    }

    #[test]
    fn p2_matches_harmonic() {
        let (g, f) = ball_condenser(2, 1.0 / 32.0);
        let a = harmonic_capacity(&f, &g).unwrap().value;
        let b = p_capacity(&f, &g, 2.0).unwrap().value;
        assert!((a - b).abs() / a < 1e-6);
    }

    #[test]
    fn minimizer_energy_matches_value() {
        let (g, f) = ball_condenser(2, 1.0 / 32.0);
        let r = p_capacity(&f, &g, 3.0).unwrap();
        let e = gradient_energy(&g, &r.minimizer, 3.0);
        assert!((e - r.value).abs() / r.value < 1e-6);
        assert!(r.minimizer.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn intersecting_plates_rejected() {
        let (g, f) = ball_condenser(2, 0.1);
        let c = Condenser { f1: f.clone(), f2: f };
        assert!(matches!(
            condenser_capacity(&c, &g, 2.0, BoundaryRule::Natural),
            Err(Error::DegenerateCondenser(_))
        ));
    }

    #[test]
    fn profile_bound_is_sharp_for_balls() {
        let lb = profile_lower_bound(3, ball_volume(3, 0.5), ball_volume(3, 1.0), 2.0);
        assert!((lb - 4.0 * PI).abs() / (4.0 * PI) < 1e-9);
        let lb = profile_lower_bound(2, ball_volume(2, 0.5), ball_volume(2, 1.0), 2.0);
        assert!((lb - 2.0 * PI / 2f64.ln()).abs() < 1e-9);
    }
}
