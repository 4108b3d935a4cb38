//! Fundamental Dirichlet eigenvalue by inverse power iteration, and
//! Rayleigh quotients.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{gradient_energy, DomainGrid, ScalarField, Trace};
use crate::linalg::{dot, norm, EdgeRule, EdgeSystem};

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    /// Positive ground state with unit discrete L2 norm.
    pub eigenfield: ScalarField,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenSummary {
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl EigenResult {
    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            lambda: self.lambda,
            residual: self.residual,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub residual_tol: f64,
    pub stagnation_tol: f64,
    pub max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Solve each connected component and report the smallest eigenvalue.
    pub per_component: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-6,
            stagnation_tol: 1e-9,
            max_iter: 500,
            cg_tol: 1e-8,
            cg_max_iter: 50_000,
            per_component: false,
        }
    }
}

pub fn fundamental_eigenvalue(omega: &DomainGrid) -> Result<EigenResult> {
    fundamental_eigenvalue_with(omega, EigenOptions::default())
}

pub fn fundamental_eigenvalue_with(omega: &DomainGrid, opts: EigenOptions) -> Result<EigenResult> {
    let comps = component_labels(omega);
    let count = comps.iter().copied().max().map_or(0, |m| m + 1);
    if count > 1 && !opts.per_component {
        return Err(Error::DisconnectedDomain { components: count });
    }
    let mut best: Option<EigenResult> = None;
    for c in 0..count {
        let members: Vec<bool> = {
            let mut m = vec![false; omega.node_count()];
            for (k, &i) in omega.interior_nodes().iter().enumerate() {
                m[i] = comps[k] == c;
            }
            m
        };
        let r = inverse_iteration(omega, |i| members[i], opts)?;
        if best.as_ref().is_none_or(|b| r.lambda < b.lambda) {
            best = Some(r);
        }
    }
    best.ok_or(Error::EmptyDomain)
}

fn component_labels(omega: &DomainGrid) -> Vec<usize> {
    let n = omega.interior_count();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(omega.interior_nodes()[start]);
        while let Some(node) = stack.pop() {
            for axis in 0..omega.dim() {
                for fwd in [false, true] {
                    if let Some(k) = omega.step(node, axis, fwd).and_then(|nb| omega.interior_slot(nb)) {
                        if label[k] == usize::MAX {
                            label[k] = next;
                            stack.push(omega.interior_nodes()[k]);
                        }
                    }
                }
            }
        }
        next += 1;
    }
    label
}

fn inverse_iteration<F: Fn(usize) -> bool>(
    omega: &DomainGrid,
    is_free: F,
    opts: EigenOptions,
) -> Result<EigenResult> {
    let sys = EdgeSystem::new(omega, is_free, None, EdgeRule::Dirichlet, 2.0);
    let n = sys.len();
    let h2 = omega.spacing().powi(2);
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut ax = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut mu = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut cg_total = 0;
    for it in 1..=opts.max_iter {
        // warm start: y ≈ x / mu
        let scale = if mu.is_finite() { 1.0 / mu } else { 0.0 };
        y.iter_mut().zip(&x).for_each(|(yi, xi)| *yi = xi * scale);
        let out = sys.solve(&x, &mut y, opts.cg_tol, opts.cg_max_iter);
        cg_total += out.iterations;
        if !out.converged {
            return Err(Error::SolverDiverged {
                iterations: cg_total,
                residual: out.residual,
            });
        }
        let ny = norm(&y);
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi = yi / ny);
        sys.apply(&x, &mut ax);
        let mu_new = dot(&x, &ax);
        residual = ax
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - mu_new * b).powi(2))
            .sum::<f64>()
            .sqrt()
            / mu_new;
        let stagnant = mu.is_finite() && ((mu - mu_new) / mu_new).abs() < opts.stagnation_tol;
        mu = mu_new;
        if stagnant && residual <= opts.residual_tol {
            return Ok(package(omega, &sys, &x, mu / h2, residual, it));
        }
    }
    let field = to_field(omega, &sys, &x);
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual,
        last: Box::new(field),
    })
}

fn to_field(omega: &DomainGrid, sys: &EdgeSystem, x: &[f64]) -> ScalarField {
    let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let scale = sign / omega.cell_volume().sqrt();
    let vals: Vec<f64> = omega
        .interior_nodes()
        .iter()
        .map(|&i| sys.slot(i).map_or(0.0, |s| x[s] * scale))
        .collect();
    ScalarField::from_interior(omega, &vals, Trace::Zero).expect("finite eigenvector")
}

fn package(
    omega: &DomainGrid,
    sys: &EdgeSystem,
    x: &[f64],
    lambda: f64,
    residual: f64,
    iterations: usize,
) -> EigenResult {
    EigenResult {
        lambda,
        eigenfield: to_field(omega, sys, x),
        residual,
        iterations,
    }
}

/// `∫|∇u|^p / ∫|u|^p` for `p` in {1, 2}.
pub fn rayleigh_quotient(omega: &DomainGrid, u: &ScalarField, p: f64) -> Result<f64> {
    if p != 1.0 && p != 2.0 {
        return Err(Error::InvalidInput(format!("p = {p}; expected 1 or 2")));
    }
    let denom = u.lp_norm_pow(omega, p);
    if denom == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(gradient_energy(omega, u, p) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, build_domain_with, BuildOptions, DomainSpec};
    use std::f64::consts::PI;

    #[test]
    fn interval_ground_state() {
        let g = build_domain(&DomainSpec::cuboid(&[0.0], &[1.0]), 1.0 / 512.0).unwrap();
        let r = fundamental_eigenvalue(&g).unwrap();
        assert!((r.lambda - PI * PI).abs() / (PI * PI) < 1e-3);
        assert!(r.residual <= 1e-6);
        assert!((r.eigenfield.lp_norm_pow(&g, 2.0) - 1.0).abs() < 1e-10);
        assert!(r.eigenfield.interior_values(&g).iter().all(|&v| v > 0.0));
        let rq = rayleigh_quotient(&g, &r.eigenfield, 2.0).unwrap();
        assert!((rq - r.lambda).abs() / r.lambda < 1e-6);
    }

    #[test]
    fn hat_function_l1_quotient() {
        let g = build_domain(&DomainSpec::cuboid(&[0.0], &[1.0]), 1.0 / 64.0).unwrap();
        let u = ScalarField::from_fn(&g, Trace::Zero, |x| 1.0 - (2.0 * x[0] - 1.0).abs()).unwrap();
        let q = rayleigh_quotient(&g, &u, 1.0).unwrap();
        assert!((q - 4.0).abs() < 1e-12, "{q}");
        let q2 = rayleigh_quotient(&g, &u.scaled(-3.5), 1.0).unwrap();
        assert!((q2 - q).abs() < 1e-12);
    }

    #[test]
    fn zero_field_rejected() {
        let g = build_domain(&DomainSpec::unit_ball(2), 0.25).unwrap();
        assert!(matches!(
            rayleigh_quotient(&g, &ScalarField::zeros(&g, Trace::Zero), 2.0),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn disconnected_domain_needs_flag() {
        let spec = DomainSpec::Union {
            parts: vec![
                DomainSpec::ball(&[-2.0, 0.0], 0.5),
                DomainSpec::ball(&[2.0, 0.0], 1.0),
            ],
        };
        let opts = BuildOptions {
            allow_disconnected: true,
            ..Default::default()
        };
        let g = build_domain_with(&spec, 1.0 / 16.0, opts).unwrap();
        assert!(matches!(
            fundamental_eigenvalue(&g),
            Err(Error::DisconnectedDomain { components: 2 })
        ));
        let eo = EigenOptions {
            per_component: true,
            ..Default::default()
        };
        let r = fundamental_eigenvalue_with(&g, eo).unwrap();
        let j0 = 2.404_825_557_695_773f64;
        assert!((r.lambda - j0 * j0).abs() / (j0 * j0) < 0.02, "{}", r.lambda);
    }
}
