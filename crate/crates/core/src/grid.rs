//! Regular-grid discretisation of Euclidean domains.
//!
//! Nodes sit on the lattice `k * h` (integer `k`), so box corners that are
//! multiples of `h` fall exactly on nodes. A node is `Interior` when the
//! analytic indicator holds at its position; the non-interior nodes within one
//! lattice step (any direction, diagonals included) of an interior node form
//! the `DirichletBoundary` layer where zero traces are imposed. Each node owns
//! a cell of volume `h^n`.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::par_sum;

pub const DEFAULT_NODE_BUDGET: usize = 40_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum NodeClass {
    Exterior = 0,
    Interior = 1,
    DirichletBoundary = 2,
}

/// Analytic description of a domain, readable from JSON configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    #[serde(rename = "box")]
    Cuboid {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Annulus {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    Ellipsoid {
        center: Vec<f64>,
        semi_axes: Vec<f64>,
    },
    Union {
        parts: Vec<DomainSpec>,
    },
    Difference {
        base: Box<DomainSpec>,
        minus: Box<DomainSpec>,
    },
    /// Explicit node mask on the lattice `(offset + i) * h`, row-major with
    /// the last axis fastest.
    Mask {
        offset: Vec<i64>,
        extents: Vec<usize>,
        h: f64,
        mask: Vec<u8>,
    },
}

/// Open set given by a point-membership test and a bounding box.
pub trait Indicator: Sync {
    fn dim(&self) -> usize;
    fn contains(&self, x: &[f64]) -> bool;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// Whether membership can be queried between lattice nodes.
    fn subgrid_resolved(&self) -> bool {
        true
    }
}

fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl Indicator for DomainSpec {
    fn subgrid_resolved(&self) -> bool {
        match self {
            DomainSpec::Mask { .. } => false,
            DomainSpec::Union { parts } => parts.iter().all(|p| p.subgrid_resolved()),
            DomainSpec::Difference { base, minus } => {
                base.subgrid_resolved() && minus.subgrid_resolved()
            }
            _ => true,
        }
    }

    fn dim(&self) -> usize {
        match self {
            DomainSpec::Ball { center, .. }
            | DomainSpec::Annulus { center, .. }
            | DomainSpec::Ellipsoid { center, .. } => center.len(),
            DomainSpec::Cuboid { lo, .. } => lo.len(),
            DomainSpec::Union { parts } => parts.first().map_or(0, |p| p.dim()),
            DomainSpec::Difference { base, .. } => base.dim(),
            DomainSpec::Mask { extents, .. } => extents.len(),
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainSpec::Ball { center, radius } => dist2(x, center) < radius * radius,
            DomainSpec::Cuboid { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v > *a && *v < *b),
            DomainSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                let r2 = dist2(x, center);
                r2 > inner * inner && r2 < outer * outer
            }
            DomainSpec::Ellipsoid { center, semi_axes } => {
                x.iter()
                    .zip(center.iter().zip(semi_axes))
                    .map(|(v, (c, a))| ((v - c) / a).powi(2))
                    .sum::<f64>()
                    < 1.0
            }
            DomainSpec::Union { parts } => parts.iter().any(|p| p.contains(x)),
            DomainSpec::Difference { base, minus } => base.contains(x) && !minus.contains(x),
            DomainSpec::Mask {
                offset,
                extents,
                h,
                mask,
            } => {
                let mut flat = 0usize;
                for d in 0..extents.len() {
                    let k = (x[d] / h).round() as i64 - offset[d];
                    if k < 0 || k as usize >= extents[d] {
                        return false;
                    }
                    flat = flat * extents[d] + k as usize;
                }
                mask.get(flat).is_some_and(|&m| m != 0)
            }
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainSpec::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainSpec::Annulus { center, outer, .. } => (
                center.iter().map(|c| c - outer).collect(),
                center.iter().map(|c| c + outer).collect(),
            ),
            DomainSpec::Ellipsoid { center, semi_axes } => (
                center.iter().zip(semi_axes).map(|(c, a)| c - a).collect(),
                center.iter().zip(semi_axes).map(|(c, a)| c + a).collect(),
            ),
            DomainSpec::Cuboid { lo, hi } => (lo.clone(), hi.clone()),
            DomainSpec::Union { parts } => {
                let dim = self.dim();
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                for p in parts {
                    let (a, b) = p.bounds();
                    for d in 0..dim {
                        lo[d] = lo[d].min(a[d]);
                        hi[d] = hi[d].max(b[d]);
                    }
                }
                (lo, hi)
            }
            DomainSpec::Difference { base, .. } => base.bounds(),
            DomainSpec::Mask {
                offset, extents, h, ..
            } => (
                offset.iter().map(|&o| o as f64 * h).collect(),
                offset
                    .iter()
                    .zip(extents)
                    .map(|(&o, &e)| (o + e as i64 - 1) as f64 * h)
                    .collect(),
            ),
        }
    }
}

impl DomainSpec {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        DomainSpec::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn cuboid(lo: &[f64], hi: &[f64]) -> Self {
        DomainSpec::Cuboid {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::ball(&vec![0.0; dim], 1.0)
    }

    /// Exact Lebesgue measure when it has a closed form.
    pub fn analytic_volume(&self) -> Option<f64> {
        match self {
            DomainSpec::Ball { center, radius } => Some(ball_volume(center.len(), *radius)),
            DomainSpec::Cuboid { lo, hi } => Some(lo.iter().zip(hi).map(|(a, b)| b - a).product()),
            DomainSpec::Annulus {
                center,
                inner,
                outer,
            } => Some(ball_volume(center.len(), *outer) - ball_volume(center.len(), *inner)),
            DomainSpec::Ellipsoid { center, semi_axes } => {
                Some(ball_volume(center.len(), 1.0) * semi_axes.iter().product::<f64>())
            }
            _ => None,
        }
    }

    /// The same shape scaled by `factor` about its center (balls, boxes,
    /// annuli and ellipsoids only).
    pub fn dilate(&self, factor: f64) -> Option<DomainSpec> {
        match self {
            DomainSpec::Ball { center, radius } => Some(DomainSpec::Ball {
                center: center.clone(),
                radius: radius * factor,
            }),
            DomainSpec::Cuboid { lo, hi } => {
                let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                Some(DomainSpec::Cuboid {
                    lo: lo.iter().zip(&mid).map(|(a, m)| m + (a - m) * factor).collect(),
                    hi: hi.iter().zip(&mid).map(|(b, m)| m + (b - m) * factor).collect(),
                })
            }
            DomainSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                // shrink toward the mid-radius so the dilate stays inside
                let mid = 0.5 * (inner + outer);
                let half = 0.5 * (outer - inner) * factor;
                Some(DomainSpec::Annulus {
                    center: center.clone(),
                    inner: mid - half,
                    outer: mid + half,
                })
            }
            DomainSpec::Ellipsoid { center, semi_axes } => Some(DomainSpec::Ellipsoid {
                center: center.clone(),
                semi_axes: semi_axes.iter().map(|a| a * factor).collect(),
            }),
            _ => None,
        }
    }
}

/// |S^{n-1}|, the area of the unit sphere in R^n.
pub fn sphere_area(n: usize) -> f64 {
    let nf = n as f64;
    2.0 * std::f64::consts::PI.powf(nf / 2.0) / crate::special::gamma(nf / 2.0)
}

pub fn ball_volume(n: usize, r: f64) -> f64 {
    sphere_area(n) / n as f64 * r.powi(n as i32)
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub node_budget: usize,
    pub allow_disconnected: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            node_budget: DEFAULT_NODE_BUDGET,
            allow_disconnected: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainGrid {
    dim: usize,
    h: f64,
    /// Lattice index of node 0 along each axis.
    offset: Vec<i64>,
    extents: Vec<usize>,
    strides: Vec<usize>,
    class: Vec<NodeClass>,
    interior: Vec<usize>,
    interior_index: Vec<u32>,
    shape: Option<DomainSpec>,
    /// Boundary fraction of edges leaving the interior, keyed by
    /// `lower_node * dim + axis`.
    cuts: HashMap<usize, f64>,
    cut_flag: Vec<bool>,
}

/// Smallest boundary fraction used for cut edges.
pub const MIN_CUT_FRACTION: f64 = 0.05;

const NO_INDEX: u32 = u32::MAX;

pub fn build_domain(spec: &DomainSpec, h: f64) -> Result<DomainGrid> {
    build_domain_with(spec, h, BuildOptions::default())
}

pub fn build_domain_with(spec: &DomainSpec, h: f64, opts: BuildOptions) -> Result<DomainGrid> {
    let mut grid = build_from_indicator(spec, h, opts)?;
    grid.shape = Some(spec.clone());
    Ok(grid)
}

pub fn build_from_indicator(
    ind: &dyn Indicator,
    h: f64,
    opts: BuildOptions,
) -> Result<DomainGrid> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("spacing h = {h} must be positive")));
    }
    let dim = ind.dim();
    if !(1..=4).contains(&dim) {
        return Err(Error::DimensionUnsupported(dim));
    }
    let (lo, hi) = ind.bounds();
    let mut offset = Vec::with_capacity(dim);
    let mut extents = Vec::with_capacity(dim);
    let mut total: usize = 1;
    for d in 0..dim {
        let a = (lo[d] / h).floor() as i64 - 2;
        let b = (hi[d] / h).ceil() as i64 + 2;
        let e = (b - a + 1) as usize;
        offset.push(a);
        extents.push(e);
        total = total.saturating_mul(e);
    }
    if total > opts.node_budget {
        return Err(Error::BudgetExceeded {
            nodes: total,
            budget: opts.node_budget,
        });
    }
    let strides = strides_of(&extents);

    let mut class: Vec<NodeClass> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let x = position_of(idx, dim, h, &offset, &extents);
            if ind.contains(&x) {
                NodeClass::Interior
            } else {
                NodeClass::Exterior
            }
        })
        .collect();

    let interior: Vec<usize> = (0..total)
        .filter(|&i| class[i] == NodeClass::Interior)
        .collect();
    if interior.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let mut interior_index = vec![NO_INDEX; total];
    for (k, &i) in interior.iter().enumerate() {
        interior_index[i] = k as u32;
    }

    // Dirichlet layer: exterior nodes in the 3^n neighbourhood of an interior node.
    let stencil = moore_offsets(dim);
    let mut boundary = Vec::new();
    for &i in &interior {
        let c = coords_of(i, &extents);
        for off in &stencil {
            let j = (0..dim).fold(0isize, |acc, d| {
                acc + (c[d] as isize + off[d]) * strides[d] as isize
            }) as usize;
            if class[j] == NodeClass::Exterior {
                boundary.push(j);
            }
        }
    }
    for j in boundary {
        class[j] = NodeClass::DirichletBoundary;
    }

    let mut grid = DomainGrid {
        dim,
        h,
        offset,
        extents,
        strides,
        class,
        interior,
        interior_index,
        shape: None,
        cuts: HashMap::new(),
        cut_flag: Vec::new(),
    };
    grid.cut_flag = vec![false; grid.node_count()];
    if ind.subgrid_resolved() {
        grid.locate_cuts(ind);
    }
    if !opts.allow_disconnected {
        let comps = grid.interior_components();
        if comps > 1 {
            return Err(Error::DisconnectedDomain { components: comps });
        }
    }
    Ok(grid)
}

fn strides_of(extents: &[usize]) -> Vec<usize> {
    let dim = extents.len();
    let mut s = vec![1; dim];
    for d in (0..dim.saturating_sub(1)).rev() {
        s[d] = s[d + 1] * extents[d + 1];
    }
    s
}

fn coords_of(mut idx: usize, extents: &[usize]) -> Vec<usize> {
    let mut c = vec![0; extents.len()];
    for d in (0..extents.len()).rev() {
        c[d] = idx % extents[d];
        idx /= extents[d];
    }
    c
}

fn position_of(idx: usize, dim: usize, h: f64, offset: &[i64], extents: &[usize]) -> Vec<f64> {
    let c = coords_of(idx, extents);
    (0..dim).map(|d| (offset[d] + c[d] as i64) as f64 * h).collect()
}

fn moore_offsets(dim: usize) -> Vec<Vec<isize>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|v| {
                (-1..=1).map(move |o| {
                    let mut w = v.clone();
                    w.push(o);
                    w
                })
            })
            .collect();
    }
    out.retain(|v| v.iter().any(|&o| o != 0));
    out
}

impl DomainGrid {
    /// Bisects every interior/non-interior edge for the boundary crossing.
    fn locate_cuts(&mut self, ind: &dyn Indicator) {
        let dim = self.dim;
        let found: Vec<(usize, f64)> = self
            .interior
            .par_iter()
            .flat_map_iter(|&i| {
                let mut out = Vec::new();
                for axis in 0..dim {
                    for fwd in [false, true] {
                        let nb = match self.step(i, axis, fwd) {
                            Some(nb) if !self.is_interior(nb) => nb,
                            _ => continue,
                        };
                        let a = self.position(i);
                        let b = self.position(nb);
                        let (mut lo, mut hi) = (0.0f64, 1.0f64);
                        let mut x = a.clone();
                        for _ in 0..40 {
                            let mid = 0.5 * (lo + hi);
                            for d in 0..dim {
                                x[d] = a[d] + mid * (b[d] - a[d]);
                            }
                            if ind.contains(&x) {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        let theta = hi.clamp(MIN_CUT_FRACTION, 1.0);
                        let lower = if fwd { i } else { nb };
                        out.push((lower * dim + axis, theta));
                    }
                }
                out
            })
            .collect();
        let mut flag = vec![false; self.node_count()];
        for &(key, _) in &found {
            flag[key / dim] = true;
        }
        self.cuts = found.into_iter().filter(|&(_, t)| t < 1.0).collect();
        self.cut_flag = flag;
    }

    /// Copy of the grid with interior edges that cross the boundary of `inner`
    /// marked as cut, measured from the endpoint outside `inner`. Used for
    /// pinned sets with a known analytic shape.
    pub fn with_interface(&self, inner: &dyn Indicator) -> DomainGrid {
        let dim = self.dim;
        let inside: Vec<bool> = (0..self.node_count())
            .into_par_iter()
            .map(|i| self.is_interior(i) && inner.contains(&self.position(i)))
            .collect();
        self.with_cuts(&inside, |from, to| {
            let a = self.position(from);
            let b = self.position(to);
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut x = a.clone();
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                for d in 0..dim {
                    x[d] = a[d] + mid * (b[d] - a[d]);
                }
                if inner.contains(&x) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        })
    }

    /// Interface cuts around `{|u| >= t}`, placing the level crossing on each
    /// edge by linear interpolation.
    pub fn with_level_interface(&self, u: &ScalarField, t: f64) -> DomainGrid {
        let inside: Vec<bool> = (0..self.node_count())
            .map(|i| self.is_interior(i) && u.values[i].abs() >= t)
            .collect();
        self.with_cuts(&inside, |from, to| {
            let (a, b) = (u.values[from].abs(), u.values[to].abs());
            (t - a) / (b - a)
        })
    }

    /// Adds cuts on interior edges that cross between `inside` and its
    /// complement; `locate(outside, inside)` gives the crossing fraction
    /// measured from the outside endpoint.
    fn with_cuts<L: Fn(usize, usize) -> f64 + Sync>(&self, inside: &[bool], locate: L) -> DomainGrid {
        let dim = self.dim;
        let found: Vec<(usize, f64)> = self
            .interior
            .par_iter()
            .flat_map_iter(|&i| {
                let mut out = Vec::new();
                for axis in 0..dim {
                    let Some(nb) = self.step(i, axis, true) else { continue };
                    if !self.is_interior(nb) || inside[i] == inside[nb] {
                        continue;
                    }
                    let (from, to) = if inside[i] { (nb, i) } else { (i, nb) };
                    let theta = locate(from, to).clamp(MIN_CUT_FRACTION, 1.0);
                    if theta < 1.0 {
                        out.push((i * dim + axis, theta));
                    }
                }
                out
            })
            .collect();
        let mut grid = self.clone();
        for (key, theta) in found {
            grid.cut_flag[key / dim] = true;
            grid.cuts.insert(key, theta);
        }
        grid
    }

    /// Fraction of the edge `(lower, lower + e_axis)` lying inside the domain,
    /// measured from its interior endpoint; 1 for uncut edges.
    #[inline]
    pub fn edge_fraction(&self, lower: usize, axis: usize) -> f64 {
        if self.cut_flag[lower] {
            self.cuts.get(&(lower * self.dim + axis)).copied().unwrap_or(1.0)
        } else {
            1.0
        }
    }

    /// Weight multiplying `(Δu/h)^2` on an edge in the p-energy.
    #[inline]
    pub fn edge_coefficient(&self, lower: usize, axis: usize, p: f64) -> f64 {
        let theta = self.edge_fraction(lower, axis);
        if theta == 1.0 {
            1.0
        } else {
            theta.powf(-2.0 * (p - 1.0) / p)
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn origin(&self) -> Vec<f64> {
        self.offset.iter().map(|&o| o as f64 * self.h).collect()
    }

    pub fn node_count(&self) -> usize {
        self.class.len()
    }

    pub fn class(&self, node: usize) -> NodeClass {
        self.class[node]
    }

    #[inline]
    pub fn is_interior(&self, node: usize) -> bool {
        self.class[node] == NodeClass::Interior
    }

    /// Interior or Dirichlet-layer node.
    pub fn in_closure(&self, node: usize) -> bool {
        self.class[node] != NodeClass::Exterior
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    /// Position of `node` in the compact interior numbering.
    pub fn interior_slot(&self, node: usize) -> Option<usize> {
        match self.interior_index[node] {
            NO_INDEX => None,
            k => Some(k as usize),
        }
    }

    pub fn shape(&self) -> Option<&DomainSpec> {
        self.shape.as_ref()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn coords(&self, node: usize) -> Vec<usize> {
        coords_of(node, &self.extents)
    }

    pub fn position(&self, node: usize) -> Vec<f64> {
        position_of(node, self.dim, self.h, &self.offset, &self.extents)
    }

    pub fn node_at(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    /// Nearest lattice node to `x`, if inside the array.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for d in 0..self.dim {
            let k = (x[d] / self.h).round() as i64 - self.offset[d];
            if k < 0 || k as usize >= self.extents[d] {
                return None;
            }
            idx += k as usize * self.strides[d];
        }
        Some(idx)
    }

    /// Neighbour of `node` one step along axis `axis` (`forward` = +1).
    pub fn step(&self, node: usize, axis: usize, forward: bool) -> Option<usize> {
        let c = (node / self.strides[axis]) % self.extents[axis];
        if forward {
            (c + 1 < self.extents[axis]).then(|| node + self.strides[axis])
        } else {
            (c > 0).then(|| node - self.strides[axis])
        }
    }

    pub fn interior_components(&self) -> usize {
        let mut seen = vec![false; self.interior.len()];
        let mut comps = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.interior.len() {
            if seen[start] {
                continue;
            }
            comps += 1;
            seen[start] = true;
            queue.push_back(self.interior[start]);
            while let Some(node) = queue.pop_front() {
                for axis in 0..self.dim {
                    for fwd in [false, true] {
                        if let Some(nb) = self.step(node, axis, fwd) {
                            if let Some(k) = self.interior_slot(nb) {
                                if !seen[k] {
                                    seen[k] = true;
                                    queue.push_back(nb);
                                }
                            }
                        }
                    }
                }
            }
        }
        comps
    }

    pub fn all_interior(&self) -> NodeSet {
        NodeSet {
            members: self.interior.clone(),
        }
    }

    /// Interior nodes whose position satisfies `pred`.
    pub fn select<F: Fn(&[f64]) -> bool + Sync>(&self, pred: F) -> NodeSet {
        let members = self
            .interior
            .par_iter()
            .copied()
            .filter(|&i| pred(&self.position(i)))
            .collect();
        NodeSet { members }
    }

    /// Interior nodes inside the analytic set `ind`.
    pub fn select_indicator(&self, ind: &dyn Indicator) -> NodeSet {
        self.select(|x| ind.contains(x))
    }

    /// Multilinear interpolation of `u` at `x`, using only corners in the
    /// closure (weights renormalised).
    pub fn interpolate(&self, u: &ScalarField, x: &[f64]) -> f64 {
        let dim = self.dim;
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for d in 0..dim {
            let s = x[d] / self.h - self.offset[d] as f64;
            let k = s.floor().clamp(0.0, (self.extents[d] - 2) as f64);
            base[d] = k as usize;
            frac[d] = (s - k).clamp(0.0, 1.0);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = 0;
            for d in 0..dim {
                let bit = (corner >> d) & 1;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                idx += (base[d] + bit) * self.strides[d];
            }
            if w > 0.0 && self.in_closure(idx) {
                num += w * u.value(idx);
                den += w;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Flat `u8` class mask plus a JSON header describing the lattice.
    pub fn export_mask(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let bytes: Vec<u8> = self.class.iter().map(|&c| c as u8).collect();
        fs::write(dir.join(format!("{stem}.mask.bin")), bytes)?;
        let header = serde_json::json!({
            "schema": "capabench.mask/1",
            "dim": self.dim,
            "h": self.h,
            "offset": self.offset,
            "extents": self.extents,
            "layout": "row-major, last axis fastest",
            "classes": {"exterior": 0, "interior": 1, "dirichlet_boundary": 2},
        });
        fs::write(
            dir.join(format!("{stem}.mask.json")),
            serde_json::to_string_pretty(&header)?,
        )?;
        Ok(())
    }
}

/// A set of interior nodes, stored as sorted node indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeSet {
    members: Vec<usize>,
}

impl NodeSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(grid: &DomainGrid, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if let Some(&bad) = members.iter().find(|&&m| m >= grid.node_count() || !grid.is_interior(m)) {
            return Err(Error::InvalidInput(format!("node {bad} is not an interior node")));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }

    pub fn is_subset_of(&self, other: &NodeSet) -> bool {
        self.members.iter().all(|&m| other.contains(m))
    }

    pub fn mask(&self, grid: &DomainGrid) -> Vec<bool> {
        let mut m = vec![false; grid.node_count()];
        for &i in &self.members {
            m[i] = true;
        }
        m
    }

    /// Whether some member has a lattice neighbour outside the interior.
    pub fn touches_boundary(&self, grid: &DomainGrid) -> bool {
        self.members.iter().any(|&i| {
            (0..grid.dim).any(|axis| {
                [false, true]
                    .iter()
                    .any(|&fwd| grid.step(i, axis, fwd).is_none_or(|nb| !grid.is_interior(nb)))
            })
        })
    }

    pub fn intersects(&self, other: &NodeSet) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.members.iter().any(|&m| large.contains(m))
    }

    /// Interior nodes of `grid` not in this set.
    pub fn complement(&self, grid: &DomainGrid) -> NodeSet {
        let m = self.mask(grid);
        NodeSet {
            members: grid.interior.iter().copied().filter(|&i| !m[i]).collect(),
        }
    }
}

/// How a field behaves outside the interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trace {
    /// Compactly supported: zero on every non-interior node.
    Zero,
    /// Values also given on the Dirichlet layer (continuous up to the boundary).
    Extended,
    /// Only interior values matter; no boundary condition.
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
    trace: Trace,
}

impl ScalarField {
    pub fn zeros(grid: &DomainGrid, trace: Trace) -> Self {
        Self {
            values: vec![0.0; grid.node_count()],
            trace,
        }
    }

    /// Field from values on the compact interior numbering.
    pub fn from_interior(grid: &DomainGrid, interior_values: &[f64], trace: Trace) -> Result<Self> {
        if interior_values.len() != grid.interior_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} interior values, got {}",
                grid.interior_count(),
                interior_values.len()
            )));
        }
        let mut values = vec![0.0; grid.node_count()];
        for (k, &i) in grid.interior.iter().enumerate() {
            let v = interior_values[k];
            if !v.is_finite() {
                return Err(Error::NonFinite { node: i });
            }
            values[i] = v;
        }
        Ok(Self { values, trace })
    }

    /// Samples `f` on interior nodes (and on the Dirichlet layer for `Trace::Extended`).
    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(grid: &DomainGrid, trace: Trace, f: F) -> Result<Self> {
        let values: Vec<f64> = (0..grid.node_count())
            .into_par_iter()
            .map(|i| {
                let take = match trace {
                    Trace::Extended => grid.in_closure(i),
                    _ => grid.is_interior(i),
                };
                if take {
                    f(&grid.position(i))
                } else {
                    0.0
                }
            })
            .collect();
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(Self { values, trace })
    }

    pub fn trace(&self) -> Trace {
        self.trace
    }

    pub fn with_trace(mut self, grid: &DomainGrid, trace: Trace) -> Self {
        if trace != Trace::Extended {
            for (i, v) in self.values.iter_mut().enumerate() {
                if !grid.is_interior(i) {
                    *v = 0.0;
                }
            }
        }
        self.trace = trace;
        self
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior_values(&self, grid: &DomainGrid) -> Vec<f64> {
        grid.interior.iter().map(|&i| self.values[i]).collect()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * alpha).collect(),
            trace: self.trace,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// ∫ |u|^p over interior cells.
    pub fn lp_norm_pow(&self, grid: &DomainGrid, p: f64) -> f64 {
        let vol = grid.cell_volume();
        let vals = &self.values;
        let nodes = &grid.interior;
        par_sum(nodes.len(), |k| vals[nodes[k]].abs().powf(p)) * vol
    }
}

/// Discrete Lebesgue measure: `#members * h^n`.
pub fn volume(grid: &DomainGrid, set: &NodeSet) -> f64 {
    set.len() as f64 * grid.cell_volume()
}

/// Number of (member, non-member) lattice faces times `h^{n-1}`.
pub fn face_perimeter(grid: &DomainGrid, set: &NodeSet) -> f64 {
    let mask = set.mask(grid);
    count_faces(grid, set, |nb| !mask[nb]) as f64 * grid.h.powi(grid.dim as i32 - 1)
}

/// Faces between members and interior non-members: the discrete H_{n-1}(Ω ∩ ∂g).
pub fn relative_perimeter(grid: &DomainGrid, set: &NodeSet) -> f64 {
    let mask = set.mask(grid);
    count_faces(grid, set, |nb| !mask[nb] && grid.is_interior(nb)) as f64
        * grid.h.powi(grid.dim as i32 - 1)
}

fn count_faces<F: Fn(usize) -> bool + Sync>(grid: &DomainGrid, set: &NodeSet, outside: F) -> usize {
    set.members
        .par_iter()
        .map(|&i| {
            let mut c = 0;
            for axis in 0..grid.dim {
                for fwd in [false, true] {
                    match grid.step(i, axis, fwd) {
                        Some(nb) if !outside(nb) => {}
                        _ => c += 1,
                    }
                }
            }
            c
        })
        .sum()
}

fn is_index_box(grid: &DomainGrid, set: &NodeSet) -> bool {
    if set.is_empty() {
        return true;
    }
    let mut lo = vec![usize::MAX; grid.dim];
    let mut hi = vec![0; grid.dim];
    for &m in &set.members {
        let c = grid.coords(m);
        for d in 0..grid.dim {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    let count: usize = (0..grid.dim).map(|d| hi[d] - lo[d] + 1).product();
    count == set.len()
}

/// Surface measure of the set's boundary.
///
/// Axis-aligned boxes use exact face counting. Other sets get their
/// indicator smoothed by two binomial passes and the 1/2 iso-contour measured
/// with marching squares (2-D) or marching tetrahedra (3-D). One dimension
/// counts boundary points; four dimensions fall back to face counting.
pub fn perimeter(grid: &DomainGrid, set: &NodeSet) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    if grid.dim == 1 || grid.dim > 3 || is_index_box(grid, set) {
        return face_perimeter(grid, set);
    }
    let local = LocalIndicator::new(grid, set, 4).smoothed(2);
    match grid.dim {
        2 => local.contour_length() * grid.h,
        _ => local.contour_area() * grid.h * grid.h,
    }
}

/// Indicator of a node set copied into a padded local box.
struct LocalIndicator {
    ext: Vec<usize>,
    vals: Vec<f64>,
}

impl LocalIndicator {
    fn new(grid: &DomainGrid, set: &NodeSet, pad: usize) -> Self {
        let dim = grid.dim;
        let mut lo = vec![usize::MAX; dim];
        let mut hi = vec![0; dim];
        for &m in &set.members {
            let c = grid.coords(m);
            for d in 0..dim {
                lo[d] = lo[d].min(c[d]);
                hi[d] = hi[d].max(c[d]);
            }
        }
        let ext: Vec<usize> = (0..dim).map(|d| hi[d] - lo[d] + 1 + 2 * pad).collect();
        let strides = strides_of(&ext);
        let mut vals = vec![0.0; ext.iter().product()];
        for &m in &set.members {
            let c = grid.coords(m);
            let idx: usize = (0..dim).map(|d| (c[d] - lo[d] + pad) * strides[d]).sum();
            vals[idx] = 1.0;
        }
        Self { ext, vals }
    }

    fn smoothed(mut self, passes: usize) -> Self {
        let strides = strides_of(&self.ext);
        for _ in 0..passes {
            for axis in 0..self.ext.len() {
                let s = strides[axis];
                let n = self.ext[axis];
                let src = self.vals.clone();
                for (i, v) in self.vals.iter_mut().enumerate() {
                    let c = (i / s) % n;
                    let left = if c > 0 { src[i - s] } else { 0.0 };
                    let right = if c + 1 < n { src[i + s] } else { 0.0 };
                    *v = 0.25 * left + 0.5 * src[i] + 0.25 * right;
                }
            }
        }
        self
    }

    /// Length of the 1/2 level line in lattice units.
    fn contour_length(&self) -> f64 {
        let (nx, ny) = (self.ext[0], self.ext[1]);
        let at = |i: usize, j: usize| self.vals[i * ny + j] - 0.5;
        let mut total = 0.0;
        for i in 0..nx - 1 {
            for j in 0..ny - 1 {
                // corners counter-clockwise: (0,0) (1,0) (1,1) (0,1)
                let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
                let v = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
                let mut pts = Vec::with_capacity(4);
                for e in 0..4 {
                    let (a, b) = (e, (e + 1) % 4);
                    if (v[a] > 0.0) != (v[b] > 0.0) {
                        let t = v[a] / (v[a] - v[b]);
                        let (pa, pb) = (corners[a], corners[b]);
                        pts.push((pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1)));
                    }
                }
                let seg = |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
                match pts.len() {
                    2 => total += seg(pts[0], pts[1]),
                    4 => {
                        // saddle: pair by the sign of the centre value
                        let centre = v.iter().sum::<f64>() / 4.0;
                        if (centre > 0.0) == (v[0] > 0.0) {
                            total += seg(pts[0], pts[3]) + seg(pts[1], pts[2]);
                        } else {
                            total += seg(pts[0], pts[1]) + seg(pts[2], pts[3]);
                        }
                    }
                    _ => {}
                }
            }
        }
        total
    }

    /// Area of the 1/2 level surface in lattice units (marching tetrahedra).
    fn contour_area(&self) -> f64 {
        const TETS: [[usize; 4]; 6] = [
            [0, 1, 3, 7],
            [0, 1, 5, 7],
            [0, 2, 3, 7],
            [0, 2, 6, 7],
            [0, 4, 5, 7],
            [0, 4, 6, 7],
        ];
        let (nx, ny, nz) = (self.ext[0], self.ext[1], self.ext[2]);
        let at = |i: usize, j: usize, k: usize| self.vals[(i * ny + j) * nz + k] - 0.5;
        (0..nx - 1)
            .into_par_iter()
            .map(|i| {
                let mut total = 0.0;
                for j in 0..ny - 1 {
                    for k in 0..nz - 1 {
                        let mut corner = [[0.0f64; 3]; 8];
                        let mut v = [0.0f64; 8];
                        let mut any_pos = false;
                        let mut any_neg = false;
                        for c in 0..8 {
                            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
                            corner[c] = [dx as f64, dy as f64, dz as f64];
                            v[c] = at(i + dx, j + dy, k + dz);
                            if v[c] > 0.0 {
                                any_pos = true;
                            } else {
                                any_neg = true;
                            }
                        }
                        if !(any_pos && any_neg) {
                            continue;
                        }
                        for tet in &TETS {
                            total += tet_area(tet, &corner, &v);
                        }
                    }
                }
                total
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }
}

fn tet_area(tet: &[usize; 4], corner: &[[f64; 3]; 8], v: &[f64; 8]) -> f64 {
    let inside: Vec<usize> = tet.iter().copied().filter(|&c| v[c] > 0.0).collect();
    let outside: Vec<usize> = tet.iter().copied().filter(|&c| v[c] <= 0.0).collect();
    let cross = |a: usize, b: usize| {
        let t = v[a] / (v[a] - v[b]);
        [
            corner[a][0] + t * (corner[b][0] - corner[a][0]),
            corner[a][1] + t * (corner[b][1] - corner[a][1]),
            corner[a][2] + t * (corner[b][2] - corner[a][2]),
        ]
    };
    match (inside.len(), outside.len()) {
        (1, 3) => tri_area(
            cross(inside[0], outside[0]),
            cross(inside[0], outside[1]),
            cross(inside[0], outside[2]),
        ),
        (3, 1) => tri_area(
            cross(outside[0], inside[0]),
            cross(outside[0], inside[1]),
            cross(outside[0], inside[2]),
        ),
        (2, 2) => {
            let (a, b, c, d) = (inside[0], inside[1], outside[0], outside[1]);
            let p = [cross(a, c), cross(a, d), cross(b, d), cross(b, c)];
            tri_area(p[0], p[1], p[2]) + tri_area(p[0], p[2], p[3])
        }
        _ => 0.0,
    }
}

fn tri_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let x = [
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
    ];
    0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Squared forward-difference gradient of `u` at `node`, restricted to the axes the
/// field's trace mode counts. `None` when the node contributes nothing.
///
/// In `Trace::Zero` mode edges cut by the boundary are weighted by
/// [`DomainGrid::edge_coefficient`].
pub fn forward_gradient_sq(grid: &DomainGrid, u: &ScalarField, node: usize, p: f64) -> Option<f64> {
    let h = grid.h;
    let here = u.values[node];
    let mut g2 = 0.0;
    match u.trace {
        Trace::Zero => {
            let mut touches = grid.is_interior(node);
            for axis in 0..grid.dim {
                let there = match grid.step(node, axis, true) {
                    Some(nb) => {
                        touches |= grid.is_interior(nb);
                        u.values[nb]
                    }
                    None => 0.0,
                };
                g2 += grid.edge_coefficient(node, axis, p) * ((there - here) / h).powi(2);
            }
            touches.then_some(g2)
        }
        Trace::Extended => {
            if !grid.in_closure(node) {
                return None;
            }
            for axis in 0..grid.dim {
                let nb = grid.step(node, axis, true)?;
                if !grid.in_closure(nb) {
                    return None;
                }
                g2 += ((u.values[nb] - here) / h).powi(2);
            }
            // the cell spanned by `node` must reach into the interior
            let touches = (0..1usize << grid.dim).any(|corner| {
                let idx = (0..grid.dim)
                    .filter(|d| (corner >> d) & 1 == 1)
                    .fold(node, |acc, d| acc + grid.strides[d]);
                grid.is_interior(idx)
            });
            touches.then_some(g2)
        }
        Trace::Free => {
            if !grid.is_interior(node) {
                return None;
            }
            for axis in 0..grid.dim {
                if let Some(nb) = grid.step(node, axis, true) {
                    if grid.is_interior(nb) {
                        g2 += grid.edge_coefficient(node, axis, p) * ((u.values[nb] - here) / h).powi(2);
                    }
                }
            }
            Some(g2)
        }
    }
}

/// Discrete Dirichlet p-energy `Σ_cells |∇_h u|^p h^n` with forward differences.
///
/// For `Trace::Zero` and `p = 2` this is exactly `h^n uᵀ A u` with `A` the
/// (2n+1)-point Laplacian.
pub fn gradient_energy(grid: &DomainGrid, u: &ScalarField, p: f64) -> f64 {
    let vol = grid.cell_volume();
    par_sum(grid.node_count(), |i| match forward_gradient_sq(grid, u, i, p) {
        Some(g2) if g2 > 0.0 => {
            if p == 2.0 {
                g2
            } else {
                g2.powf(0.5 * p)
            }
        }
        _ => 0.0,
    }) * vol
}

/// Σ over interior-interior edges of |Δu| h^{n-1}; satisfies the discrete
/// co-area formula with [`relative_perimeter`].
pub fn relative_total_variation(grid: &DomainGrid, u: &ScalarField) -> f64 {
    let nodes = &grid.interior;
    let hn1 = grid.h.powi(grid.dim as i32 - 1);
    par_sum(nodes.len(), |k| {
        let i = nodes[k];
        (0..grid.dim)
            .filter_map(|axis| grid.step(i, axis, true))
            .filter(|&nb| grid.is_interior(nb))
            .map(|nb| (u.values[nb] - u.values[i]).abs())
            .sum::<f64>()
    }) * hn1
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_square_box_has_nine_by_nine_interior() {
        let g = build_domain(&DomainSpec::cuboid(&[0.0, 0.0], &[1.0, 1.0]), 0.1).unwrap();
        assert_eq!(g.interior_count(), 81);
    }

    #[test]
    fn disk_node_count_matches_area() {
        let h = 1.0 / 32.0;
        let g = build_domain(&DomainSpec::unit_ball(2), h).unwrap();
        let vol = volume(&g, &g.all_interior());
        assert!((vol - PI).abs() / PI <= 2.0 * h, "{vol}");
    }

    #[test]
    fn coarse_spacing_gives_empty_domain() {
        let err = build_domain(&DomainSpec::ball(&[5.0, 5.0], 1.0), 10.0).unwrap_err();
        assert!(matches!(err, Error::EmptyDomain));
    }

    #[test]
    fn budget_is_enforced() {
        let opts = BuildOptions {
            node_budget: 1000,
            ..Default::default()
        };
        let err = build_domain_with(&DomainSpec::unit_ball(3), 0.05, opts).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn disconnected_union_is_refused_unless_allowed() {
        let spec = DomainSpec::Union {
            parts: vec![
                DomainSpec::ball(&[-2.0, 0.0], 0.5),
                DomainSpec::ball(&[2.0, 0.0], 0.5),
            ],
        };
        assert!(matches!(
            build_domain(&spec, 0.1),
            Err(Error::DisconnectedDomain { components: 2 })
        ));
        let opts = BuildOptions {
            allow_disconnected: true,
            ..Default::default()
        };
        assert!(build_domain_with(&spec, 0.1, opts).is_ok());
    }

    #[test]
    fn interior_neighbours_are_classified() {
        let g = build_domain(&DomainSpec::unit_ball(3), 0.1).unwrap();
        for &i in g.interior_nodes() {
            for axis in 0..3 {
                for fwd in [false, true] {
                    let nb = g.step(i, axis, fwd).expect("neighbour in array");
                    assert_ne!(g.class(nb), NodeClass::Exterior);
                }
            }
        }
    }

    #[test]
    fn volume_of_unit_square_and_ball() {
        let h = 1.0 / 64.0;
        let g = build_domain(&DomainSpec::cuboid(&[0.0, 0.0], &[1.0, 1.0]), h).unwrap();
        assert!((volume(&g, &g.all_interior()) - 1.0).abs() <= 2.0 * h);
        assert_eq!(volume(&g, &NodeSet::empty()), 0.0);

        let g = build_domain(&DomainSpec::unit_ball(3), 1.0 / 48.0).unwrap();
        let v = volume(&g, &g.all_interior());
        assert!((v - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0) < 0.05);
    }

    #[test]
    fn box_perimeter_is_exact() {
        let h = 1.0 / 64.0;
        let g = build_domain(&DomainSpec::cuboid(&[-0.5, -0.5], &[1.5, 1.5]), h).unwrap();
        // 64 x 64 nodes spanning a unit square of cells
        let set = g.select(|x| x[0] > 0.0 && x[0] < 1.0 + 1e-9 && x[1] > 0.0 && x[1] < 1.0 + 1e-9);
        assert_eq!(set.len(), 64 * 64);
        assert!((perimeter(&g, &set) - 4.0).abs() < 1e-12);
        assert_eq!(perimeter(&g, &NodeSet::empty()), 0.0);
    }

    #[test]
    fn disk_perimeter_uses_corrected_estimator() {
        let h = 1.0 / 128.0;
        let g = build_domain(&DomainSpec::ball(&[0.0, 0.0], 1.2), h).unwrap();
        let disk = g.select(|x| x[0] * x[0] + x[1] * x[1] < 1.0);
        let per = perimeter(&g, &disk);
        assert!((per - 2.0 * PI).abs() / (2.0 * PI) < 0.03, "{per}");
        // raw face counting overshoots by about 4/π
        let faces = face_perimeter(&g, &disk);
        assert!(faces / (2.0 * PI) > 1.2);
    }

    #[test]
    fn sphere_area_from_marching_tetrahedra() {
        let h = 1.0 / 40.0;
        let g = build_domain(&DomainSpec::ball(&[0.0; 3], 1.2), h).unwrap();
        let ball = g.select(|x| x.iter().map(|v| v * v).sum::<f64>() < 1.0);
        let area = perimeter(&g, &ball);
        assert!((area - 4.0 * PI).abs() / (4.0 * PI) < 0.05, "{area}");
    }

    #[test]
    fn linear_field_energy_on_unit_square() {
        let g = build_domain(&DomainSpec::cuboid(&[0.0, 0.0], &[1.0, 1.0]), 1.0 / 64.0).unwrap();
        let u = ScalarField::from_fn(&g, Trace::Extended, |x| x[0]).unwrap();
        let e = gradient_energy(&g, &u, 2.0);
        assert!((e - 1.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn zero_field_has_zero_energy() {
        let g = build_domain(&DomainSpec::unit_ball(2), 0.1).unwrap();
        let u = ScalarField::zeros(&g, Trace::Zero);
        assert_eq!(gradient_energy(&g, &u, 2.0), 0.0);
        assert_eq!(gradient_energy(&g, &u, 1.0), 0.0);
    }

    #[test]
    fn product_of_sines_energy() {
        // ∫∫ |∇(sin πx sin πy)|² = π²/2 on the unit square
        let g = build_domain(&DomainSpec::cuboid(&[0.0, 0.0], &[1.0, 1.0]), 1.0 / 128.0).unwrap();
        let u = ScalarField::from_fn(&g, Trace::Zero, |x| (PI * x[0]).sin() * (PI * x[1]).sin()).unwrap();
        let e = gradient_energy(&g, &u, 2.0);
        assert!((e - PI * PI / 2.0).abs() / (PI * PI / 2.0) < 0.01, "{e}");
    }

    #[test]
    fn nan_is_rejected() {
        let g = build_domain(&DomainSpec::unit_ball(2), 0.25).unwrap();
        assert!(matches!(
            ScalarField::from_fn(&g, Trace::Zero, |_| f64::NAN),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn node_set_rejects_exterior_members() {
        let g = build_domain(&DomainSpec::unit_ball(2), 0.25).unwrap();
        assert!(NodeSet::new(&g, vec![0]).is_err());
    }

    #[test]
    fn mask_export_writes_header() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_domain(&DomainSpec::unit_ball(2), 0.25).unwrap();
        g.export_mask(dir.path(), "disk").unwrap();
        let bytes = std::fs::read(dir.path().join("disk.mask.bin")).unwrap();
        assert_eq!(bytes.len(), g.node_count());
        let header: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("disk.mask.json")).unwrap()).unwrap();
        assert_eq!(header["dim"], 2);
    }
}
