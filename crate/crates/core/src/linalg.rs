//! Deterministic reductions and a matrix-free conjugate-gradient solver for
//! weighted graph Laplacians on the grid.

use rayon::prelude::*;

use crate::grid::DomainGrid;

const CHUNK: usize = 4096;

/// Sum of `f(0..n)`, reduced in fixed chunks so the result does not depend on
/// the thread count.
pub fn par_sum<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * CHUNK).min(n);
            (c * CHUNK..end).map(&f).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    par_sum(a.len(), |i| a[i] * b[i])
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Which lattice edges take part in the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRule {
    /// Every edge touching a free node; non-free neighbours are fixed.
    Dirichlet,
    /// Only edges whose endpoints are both interior.
    Neumann,
}

/// Weighted Laplacian `Σ_e w_e (u_a - u_b)^2` over lattice edges, with the
/// unknowns living on a subset of interior nodes. The weight of edge
/// `(k, k + e_d)` is the node weight at `k` times the grid's cut-edge
/// coefficient for exponent `p`.
pub struct EdgeSystem<'g> {
    grid: &'g DomainGrid,
    free: Vec<usize>,
    slot: Vec<u32>,
    weights: Option<Vec<f64>>,
    rule: EdgeRule,
    p: f64,
    diag: Vec<f64>,
}

const FIXED: u32 = u32::MAX;

impl<'g> EdgeSystem<'g> {
    /// `is_free(node)` selects unknowns among interior nodes.
    pub fn new<F: Fn(usize) -> bool>(
        grid: &'g DomainGrid,
        is_free: F,
        weights: Option<Vec<f64>>,
        rule: EdgeRule,
        p: f64,
    ) -> Self {
        let free: Vec<usize> = grid
            .interior_nodes()
            .iter()
            .copied()
            .filter(|&i| is_free(i))
            .collect();
        let mut slot = vec![FIXED; grid.node_count()];
        for (s, &i) in free.iter().enumerate() {
            slot[i] = s as u32;
        }
        let mut sys = Self {
            grid,
            free,
            slot,
            weights,
            rule,
            p,
            diag: Vec::new(),
        };
        sys.diag = (0..sys.free.len())
            .into_par_iter()
            .map(|s| {
                let mut d = 0.0;
                sys.for_each_edge(sys.free[s], |_, w| d += w);
                d
            })
            .collect();
        sys
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn slot(&self, node: usize) -> Option<usize> {
        match self.slot[node] {
            FIXED => None,
            s => Some(s as usize),
        }
    }

    #[inline]
    fn weight(&self, node: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[node])
    }

    /// Calls `visit(neighbour, weight)` for every operator edge at the
    /// interior node `node`.
    #[inline]
    fn for_each_edge<V: FnMut(usize, f64)>(&self, node: usize, mut visit: V) {
        let g = self.grid;
        let strides = g.strides();
        for (axis, &stride) in strides.iter().enumerate() {
            // interior nodes always have both neighbours inside the padded array
            let fwd = node + stride;
            let bwd = node - stride;
            let wf = self.weight(node) * g.edge_coefficient(node, axis, self.p);
            let wb = self.weight(bwd) * g.edge_coefficient(bwd, axis, self.p);
            let keep = |nb: usize| self.rule == EdgeRule::Dirichlet || g.is_interior(nb);
            if wf != 0.0 && keep(fwd) {
                visit(fwd, wf);
            }
            if wb != 0.0 && keep(bwd) {
                visit(bwd, wb);
            }
        }
    }

    /// `y = A x` on the free slots.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(s, ys)| {
            let node = self.free[s];
            let mut acc = self.diag[s] * x[s];
            self.for_each_edge(node, |nb, w| {
                let t = self.slot[nb];
                if t != FIXED {
                    acc -= w * x[t as usize];
                }
            });
            *ys = acc;
        });
    }

    /// Right-hand side produced by fixed node values (full-length array).
    pub fn fixed_rhs(&self, fixed: &[f64]) -> Vec<f64> {
        (0..self.free.len())
            .into_par_iter()
            .map(|s| {
                let mut acc = 0.0;
                self.for_each_edge(self.free[s], |nb, w| {
                    if self.slot[nb] == FIXED {
                        acc += w * fixed[nb];
                    }
                });
                acc
            })
            .collect()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        dot(x, &y)
    }

    /// Jacobi-preconditioned CG for `A x = b`, warm-started from `x`.
    pub fn solve(&self, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> CgOutcome {
        let n = b.len();
        let bnorm = norm(b);
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return CgOutcome {
                iterations: 0,
                residual: 0.0,
                converged: true,
            };
        }
        let mut r = vec![0.0; n];
        self.apply(x, &mut r);
        r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let inv_diag: Vec<f64> = self.diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut q = vec![0.0; n];
        let mut res = norm(&r) / bnorm;
        let mut it = 0;
        while res > tol && it < max_iter {
            self.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) || !pq.is_finite() {
                break;
            }
            let alpha = rz / pq;
            x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.par_iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
            z.par_iter_mut()
                .zip(&r)
                .zip(&inv_diag)
                .for_each(|((zi, ri), di)| *zi = ri * di);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            res = norm(&r) / bnorm;
            it += 1;
            if !res.is_finite() {
                break;
            }
        }
        CgOutcome {
            iterations: it,
            residual: res,
            converged: res <= tol,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}
