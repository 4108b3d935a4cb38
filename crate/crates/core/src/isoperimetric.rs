//! One-sided estimates of the Cheeger constant γ(Ω) and the isocapacitary
//! constant Γ(Ω), the area-minimising profile, and the boundary-pair
//! inequality on the unit ball and disk.
//!
//! Both constants are infima over sets, so candidates only ever give upper
//! bounds. Lower bounds come from registered closed forms (γ of a ball) or
//! from the eigenvalue (Λ ≤ Γ).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::harmonic_capacity;
use crate::error::{Error, Result};
use crate::grid::{
    gradient_energy, perimeter, relative_perimeter, sphere_area, volume, DomainGrid, DomainSpec,
    NodeClass, NodeSet, ScalarField, Trace,
};
use crate::spectral::{fundamental_eigenvalue, EigenResult};
use crate::special::gauss_legendre;

/// Which candidate compacta to try.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateFamily {
    /// Number of superlevel thresholds of the ground state (0 disables).
    pub eigen_levels: usize,
    /// Scale factors for concentric dilates of the domain shape.
    pub dilates: Vec<f64>,
    /// Fractions of the maximal boundary distance for distance level sets.
    pub distance_levels: Vec<f64>,
}

impl Default for CandidateFamily {
    fn default() -> Self {
        Self {
            eigen_levels: 32,
            dilates: (2..=19).map(|k| k as f64 * 0.05).collect(),
            distance_levels: (1..=9).map(|k| k as f64 * 0.1).collect(),
        }
    }
}

impl CandidateFamily {
    pub fn none() -> Self {
        Self {
            eigen_levels: 0,
            dilates: Vec::new(),
            distance_levels: Vec::new(),
        }
    }

    pub fn dilates_only(factors: &[f64]) -> Self {
        Self {
            dilates: factors.to_vec(),
            ..Self::none()
        }
    }

    fn is_empty(&self) -> bool {
        self.eigen_levels == 0 && self.dilates.is_empty() && self.distance_levels.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub label: String,
    pub set: NodeSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateEntry {
    pub label: String,
    pub volume: f64,
    pub measure: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct ConstantBracket {
    pub lower: f64,
    pub upper: f64,
    pub witness_set: NodeSet,
    pub witness_label: String,
    pub method_notes: String,
    pub entries: Vec<CandidateEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketSummary {
    pub lower: f64,
    pub upper: f64,
    pub witness: String,
    pub witness_nodes: usize,
    pub method_notes: String,
    pub candidates: Vec<CandidateEntry>,
}

impl ConstantBracket {
    pub fn summary(&self) -> BracketSummary {
        BracketSummary {
            lower: self.lower,
            upper: self.upper,
            witness: self.witness_label.clone(),
            witness_nodes: self.witness_set.len(),
            method_notes: self.method_notes.clone(),
            candidates: self.entries.clone(),
        }
    }
}

/// Candidate compacta of `omega`; sets touching the Dirichlet layer or empty
/// are dropped.
pub fn generate_candidates(
    omega: &DomainGrid,
    family: &CandidateFamily,
    eigen: Option<&EigenResult>,
) -> Result<Vec<Candidate>> {
    if family.is_empty() {
        return Err(Error::ConfigurationError("candidate family is empty".into()));
    }
    let mut out = Vec::new();
    if family.eigen_levels > 0 {
        let owned;
        let e = match eigen {
            Some(e) => e,
            None => {
                owned = fundamental_eigenvalue(omega)?;
                &owned
            }
        };
        let field = &e.eigenfield;
        let top = field.max_abs();
        for k in 1..=family.eigen_levels {
            let s = k as f64 / (family.eigen_levels + 1) as f64;
            let members: Vec<usize> = omega
                .interior_nodes()
                .iter()
                .copied()
                .filter(|&i| field.value(i) > s * top)
                .collect();
            out.push(Candidate {
                label: format!("eigen_superlevel:{s:.4}"),
                set: NodeSet::new(omega, members)?,
            });
        }
    }
    if !family.dilates.is_empty() {
        if let Some(shape) = omega.shape() {
            for &f in &family.dilates {
                if let Some(d) = shape.dilate(f) {
                    out.push(Candidate {
                        label: format!("dilate:{f:.4}"),
                        set: omega.select_indicator(&d),
                    });
                }
            }
        }
    }
    if !family.distance_levels.is_empty() {
        let dist = boundary_distance(omega);
        let dmax = omega
            .interior_nodes()
            .iter()
            .map(|&i| dist[i])
            .fold(0.0f64, f64::max);
        for &t in &family.distance_levels {
            let members: Vec<usize> = omega
                .interior_nodes()
                .iter()
                .copied()
                .filter(|&i| dist[i] > t * dmax)
                .collect();
            out.push(Candidate {
                label: format!("distance:{t:.4}"),
                set: NodeSet::new(omega, members)?,
            });
        }
    }
    out.retain(|c| !c.set.is_empty() && !c.set.touches_boundary(omega));
    if out.is_empty() {
        return Err(Error::ConfigurationError(
            "no admissible candidate set at this resolution".into(),
        ));
    }
    Ok(out)
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Chamfer distance from the Dirichlet layer over the 3^n neighbourhood.
pub fn boundary_distance(omega: &DomainGrid) -> Vec<f64> {
    let dim = omega.dim();
    let h = omega.spacing();
    let mut offsets: Vec<(Vec<isize>, f64)> = Vec::new();
    for code in 0..3usize.pow(dim as u32) {
        let mut c = code;
        let mut off = vec![0isize; dim];
        for o in off.iter_mut() {
            *o = (c % 3) as isize - 1;
            c /= 3;
        }
        let nz = off.iter().filter(|&&o| o != 0).count();
        if nz > 0 {
            offsets.push((off, h * (nz as f64).sqrt()));
        }
    }
    let strides = omega.strides();
    let mut dist = vec![f64::INFINITY; omega.node_count()];
    let mut heap = BinaryHeap::new();
    for i in 0..omega.node_count() {
        if omega.class(i) == NodeClass::DirichletBoundary {
            dist[i] = 0.0;
            heap.push(HeapItem(0.0, i));
        }
    }
    while let Some(HeapItem(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        for (off, len) in &offsets {
            let j = off
                .iter()
                .zip(strides)
                .fold(i as isize, |acc, (o, s)| acc + o * *s as isize) as usize;
            if !omega.is_interior(j) {
                continue;
            }
            let nd = d + len;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(HeapItem(nd, j));
            }
        }
    }
    dist
}

fn registered_cheeger(shape: Option<&DomainSpec>) -> Option<(f64, String)> {
    match shape {
        Some(DomainSpec::Ball { center, radius }) => Some((
            center.len() as f64 / radius,
            format!("lower: analytic value n/R for a ball in R^{}", center.len()),
        )),
        _ => None,
    }
}

/// Upper bound for γ(Ω) as the least perimeter-to-volume ratio over candidates.
pub fn cheeger_upper(omega: &DomainGrid, family: &CandidateFamily) -> Result<ConstantBracket> {
    cheeger_upper_with(omega, family, None)
}

pub fn cheeger_upper_with(
    omega: &DomainGrid,
    family: &CandidateFamily,
    eigen: Option<&EigenResult>,
) -> Result<ConstantBracket> {
    let cands = generate_candidates(omega, family, eigen)?;
    let entries: Vec<CandidateEntry> = cands
        .par_iter()
        .map(|c| {
            let v = volume(omega, &c.set);
            let per = perimeter(omega, &c.set);
            CandidateEntry {
                label: c.label.clone(),
                volume: v,
                measure: per,
                ratio: per / v,
            }
        })
        .collect();
    let best = argmin(&entries);
    let upper = entries[best].ratio;
    let mut notes = String::from(
        "upper: min perimeter/volume over candidates (eigen superlevel, dilates, distance levels)",
    );
    let lower = match registered_cheeger(omega.shape()) {
        Some((value, note)) => {
            notes.push_str("; ");
            notes.push_str(&note);
            if value > upper {
                notes.push_str(" (clamped to the candidate minimum: discretisation slack)");
            }
            value.min(upper)
        }
        None => {
            notes.push_str("; lower: none registered (0)");
            0.0
        }
    };
    Ok(ConstantBracket {
        lower,
        upper,
        witness_set: cands[best].set.clone(),
        witness_label: cands[best].label.clone(),
        method_notes: notes,
        entries,
    })
}

fn argmin(entries: &[CandidateEntry]) -> usize {
    let mut best = 0;
    for (k, e) in entries.iter().enumerate() {
        if e.ratio < entries[best].ratio {
            best = k;
        }
    }
    best
}

/// Bracket for Γ(Ω): lower = Λ̂(Ω), upper = min over candidates of cap/m.
pub fn isocap_bracket(omega: &DomainGrid, family: &CandidateFamily) -> Result<ConstantBracket> {
    let eigen = fundamental_eigenvalue(omega)?;
    isocap_bracket_with(omega, family, &eigen)
}

pub fn isocap_bracket_with(
    omega: &DomainGrid,
    family: &CandidateFamily,
    eigen: &EigenResult,
) -> Result<ConstantBracket> {
    let cands = generate_candidates(omega, family, Some(eigen))?;
    let mut entries = Vec::with_capacity(cands.len());
    for c in &cands {
        let v = volume(omega, &c.set);
        let cap = harmonic_capacity(&c.set, omega)?.value;
        entries.push(CandidateEntry {
            label: c.label.clone(),
            volume: v,
            measure: cap,
            ratio: cap / v,
        });
    }
    let best = argmin(&entries);
    Ok(ConstantBracket {
        lower: eigen.lambda.min(entries[best].ratio),
        upper: entries[best].ratio,
        witness_set: cands[best].set.clone(),
        witness_label: cands[best].label.clone(),
        method_notes: "lower: discrete fundamental eigenvalue (Λ ≤ Γ); upper: min cap(F)/m(F) over candidates"
            .into(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfilePoint {
    pub volume: f64,
    pub perimeter: f64,
}

/// Upper envelope λ̂(v): least candidate perimeter among candidates with
/// volume at least `v`. For shapes with a dilate, the smallest dilate meeting
/// the volume constraint is added for every requested `v`.
pub fn area_minimizing_profile(
    omega: &DomainGrid,
    volumes: &[f64],
    family: &CandidateFamily,
) -> Result<Vec<ProfilePoint>> {
    let total = volume(omega, &omega.all_interior());
    if let Some(&bad) = volumes.iter().find(|&&v| !(v > 0.0 && v < total)) {
        return Err(Error::InvalidInput(format!(
            "volume {bad} outside (0, {total})"
        )));
    }
    let mut pool: Vec<(f64, f64)> = if family.is_empty() {
        Vec::new()
    } else {
        generate_candidates(omega, family, None)?
            .iter()
            .map(|c| (volume(omega, &c.set), perimeter(omega, &c.set)))
            .collect()
    };
    if let Some(shape) = omega.shape() {
        for &v in volumes {
            if let Some(set) = smallest_dilate_with_volume(omega, shape, v) {
                pool.push((volume(omega, &set), perimeter(omega, &set)));
            }
        }
    }
    volumes
        .iter()
        .map(|&v| {
            pool.iter()
                .filter(|(vol, _)| *vol >= v)
                .map(|&(_, per)| per)
                .min_by(f64::total_cmp)
                .map(|per| ProfilePoint { volume: v, perimeter: per })
                .ok_or_else(|| Error::ConfigurationError(format!("no candidate with volume >= {v}")))
        })
        .collect()
}

fn smallest_dilate_with_volume(omega: &DomainGrid, shape: &DomainSpec, v: f64) -> Option<NodeSet> {
    shape.dilate(1.0)?;
    let vol_at = |f: f64| {
        let d = shape.dilate(f).expect("dilatable");
        let set = omega.select_indicator(&d);
        (volume(omega, &set), set)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let (vol_hi, mut best) = vol_at(hi);
    if vol_hi < v {
        return None;
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let (vm, set) = vol_at(mid);
        if vm >= v {
            hi = mid;
            best = set;
        } else {
            lo = mid;
        }
    }
    if best.touches_boundary(omega) {
        None
    } else {
        Some(best)
    }
}

/// Classical isoperimetric bound `n^{(n-1)/n} |S^{n-1}|^{1/n} v^{(n-1)/n}`.
pub fn classical_profile(dim: usize, v: f64) -> f64 {
    let n = dim as f64;
    n.powf((n - 1.0) / n) * sphere_area(dim).powf(1.0 / n) * v.powf((n - 1.0) / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairShape {
    Ball3d,
    Disk2d,
}

impl PairShape {
    pub fn dim(self) -> usize {
        match self {
            PairShape::Ball3d => 3,
            PairShape::Disk2d => 2,
        }
    }

    /// Best constant in the boundary-pair inequality.
    pub fn sharp_constant(self) -> f64 {
        match self {
            PairShape::Ball3d => 8.0 * PI,
            PairShape::Disk2d => 4.0 * PI,
        }
    }

    /// Quadrature points and weights on the unit sphere / circle.
    pub fn boundary_quadrature(self) -> Vec<(Vec<f64>, f64)> {
        match self {
            PairShape::Disk2d => {
                let n = 4096;
                (0..n)
                    .map(|k| {
                        let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                        (vec![t.cos(), t.sin()], 2.0 * PI / n as f64)
                    })
                    .collect()
            }
            PairShape::Ball3d => {
                let (nt, np) = (128, 256);
                let (z, w) = gauss_legendre(nt);
                let mut out = Vec::with_capacity(nt * np);
                for (zi, wi) in z.iter().zip(&w) {
                    let r = (1.0 - zi * zi).sqrt();
                    for k in 0..np {
                        let phi = 2.0 * PI * (k as f64 + 0.5) / np as f64;
                        out.push((
                            vec![r * phi.cos(), r * phi.sin(), *zi],
                            wi * 2.0 * PI / np as f64,
                        ));
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SetPairCheck {
    /// Boundary measure of ∂Ω adjacent to g.
    pub on_boundary: f64,
    /// Boundary measure of ∂Ω away from g.
    pub off_boundary: f64,
    /// Relative perimeter of g inside Ω (face count).
    pub inner_perimeter: f64,
    /// `2 · on · off / inner`, bounded by the sharp constant.
    pub ratio: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub shape: PairShape,
    pub boundary_integral: f64,
    pub gradient_integral: f64,
    pub ratio: f64,
    pub sharp_constant: f64,
    pub tolerance: f64,
    pub within_bound: bool,
    pub set_check: Option<SetPairCheck>,
}

/// `∑_i ∑_j w_i w_j |a_i - a_j|` in O(N log N).
pub fn weighted_pair_l1(values: &[f64], weights: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let (mut wsum, mut vsum, mut total) = (0.0, 0.0, 0.0);
    for &i in &idx {
        total += weights[i] * (values[i] * wsum - vsum);
        wsum += weights[i];
        vsum += weights[i] * values[i];
    }
    2.0 * total
}

/// Compares `∫∫_{∂Ω×∂Ω} |u(x) - u(y)|` with `∫_Ω |∇u|` on the unit ball or
/// disk centred at the origin. `u` must carry an extended trace.
pub fn boundary_pair_check(
    shape: PairShape,
    omega: &DomainGrid,
    u: &ScalarField,
    g: Option<&NodeSet>,
    tolerance: f64,
) -> Result<PairReport> {
    match omega.shape() {
        Some(DomainSpec::Ball { center, radius })
            if center.len() == shape.dim()
                && *radius == 1.0
                && center.iter().all(|&c| c == 0.0) => {}
        _ => {
            return Err(Error::ShapeUnsupported(format!(
                "boundary-pair check needs the unit {} centred at 0",
                if shape.dim() == 3 { "ball" } else { "disk" }
            )))
        }
    }
    if u.trace() != Trace::Extended {
        return Err(Error::InvalidInput("field needs an extended boundary trace".into()));
    }
    let quad = shape.boundary_quadrature();
    let values: Vec<f64> = quad.par_iter().map(|(x, _)| omega.interpolate(u, x)).collect();
    let weights: Vec<f64> = quad.iter().map(|(_, w)| *w).collect();
    let boundary_integral = weighted_pair_l1(&values, &weights);
    let gradient_integral = gradient_energy(omega, u, 1.0);
    let ratio = if gradient_integral > 0.0 {
        boundary_integral / gradient_integral
    } else {
        0.0
    };
    let c = shape.sharp_constant();
    let set_check = g.map(|g| {
        let h = omega.spacing();
        let (mut on, mut off) = (0.0, 0.0);
        for (x, w) in &quad {
            let inward: Vec<f64> = x.iter().map(|v| v * (1.0 - 1.5 * h)).collect();
            let hit = omega.nearest_node(&inward).is_some_and(|k| g.contains(k));
            if hit {
                on += w;
            } else {
                off += w;
            }
        }
        let inner = relative_perimeter(omega, g);
        let r = if inner > 0.0 { 2.0 * on * off / inner } else { f64::INFINITY };
        SetPairCheck {
            on_boundary: on,
            off_boundary: off,
            inner_perimeter: inner,
            ratio: r,
            within_bound: r <= c * (1.0 + tolerance),
        }
    });
    Ok(PairReport {
        shape,
        boundary_integral,
        gradient_integral,
        ratio,
        sharp_constant: c,
        tolerance,
        within_bound: ratio <= c * (1.0 + tolerance),
        set_check,
    })
}

/// `t ↦ smoothstep` ramp from 0 (t ≤ -w) to 1 (t ≥ w), C¹.
pub fn smooth_ramp(t: f64, width: f64) -> f64 {
    let s = ((t / width) + 1.0) * 0.5;
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}
