//! Unit ball with `N^{n-1}` thin cones removed. The cones push the
//! fundamental eigenvalue up while the perimeter-to-volume ratio stays near
//! `n`.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_from_indicator, sphere_area, BuildOptions, DomainGrid, Indicator};
use crate::special::integrate;
use crate::spectral::{fundamental_eigenvalue_with, EigenOptions};

pub const DEFAULT_C0: f64 = 4.0;
/// Accepted band for `N` times the nearest-neighbour distance.
pub const SPACING_BAND: (f64, f64) = (0.5, 8.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaNSpec {
    pub n: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_c0")]
    pub c0: f64,
    /// Cone half-angle.
    pub eps: f64,
    /// Radius of the centre ball for the star-shape certificate; defaults to
    /// half the admissible radius.
    #[serde(default)]
    pub rho: Option<f64>,
}

fn default_dim() -> usize {
    3
}

fn default_c0() -> f64 {
    DEFAULT_C0
}

impl OmegaNSpec {
    pub fn new(n: usize, dim: usize, eps: f64) -> Self {
        Self {
            n,
            dim,
            c0: DEFAULT_C0,
            eps,
            rho: None,
        }
    }

    pub fn vertex_distance(&self) -> f64 {
        self.c0 / self.n as f64
    }

    /// Centre balls inside every backward cone `v_j - C_j`, i.e. of radius
    /// at most `d sin(eps)`, see the whole domain.
    pub fn admissible_rho(&self) -> f64 {
        self.vertex_distance().min(1.0) * self.eps.sin()
    }

    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or(0.5 * self.admissible_rho())
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("N = {}; expected N >= 2", self.n)));
        }
        if self.dim < 2 {
            return Err(Error::DimensionUnsupported(self.dim));
        }
        if !(self.c0 > 0.0) || !(0.0..PI / 2.0).contains(&self.eps) {
            return Err(Error::InvalidInput(format!("c0 = {}, eps = {}", self.c0, self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpacingReport {
    pub count: usize,
    /// `N` times the smallest nearest-neighbour distance.
    pub c1: f64,
    /// `N` times the largest nearest-neighbour distance.
    pub c2: f64,
}

fn nearest_neighbour_band(points: &[Vec<f64>], n: usize) -> (f64, f64) {
    let nn: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| dist(&points[i], q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let lo = nn.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = nn.iter().copied().fold(0.0, f64::max);
    (lo * n as f64, hi * n as f64)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= r);
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `N^{dim-1}` roughly uniform unit vectors: a regular polygon in 2D, a
/// Fibonacci spiral in 3D, and a relaxed Halton set on `S^3` in 4D.
pub fn sphere_points(n: usize, dim: usize) -> Result<(Vec<Vec<f64>>, SpacingReport)> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("N = {n}; expected N >= 2")));
    }
    let count = n.pow(dim as u32 - 1);
    let points: Vec<Vec<f64>> = match dim {
        2 => (0..n)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - (2.0 * j as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * j as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        4 => {
            let mut pts: Vec<Vec<f64>> = (1..=count)
                .map(|j| {
                    let (u1, u2, u3) = (radical_inverse(j, 2), radical_inverse(j, 3), radical_inverse(j, 5));
                    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
                    let (t2, t3) = (2.0 * PI * u2, 2.0 * PI * u3);
                    vec![a * t2.sin(), a * t2.cos(), b * t3.sin(), b * t3.cos()]
                })
                .collect();
            relax(&mut pts, 30);
            pts
        }
        d => return Err(Error::DimensionUnsupported(d)),
    };
    let (c1, c2) = nearest_neighbour_band(&points, n);
    if c1 < SPACING_BAND.0 || c2 > SPACING_BAND.1 {
        return Err(Error::SpacingViolated {
            realized: (c1, c2),
            lo: SPACING_BAND.0,
            hi: SPACING_BAND.1,
        });
    }
    Ok((points, SpacingReport { count, c1, c2 }))
}

/// Short-range repulsion followed by projection back to the sphere.
fn relax(pts: &mut [Vec<f64>], rounds: usize) {
    let m = pts.len();
    let dim = pts[0].len();
    let scale = (sphere_area(dim) / m as f64).powf(1.0 / (dim as f64 - 1.0));
    for _ in 0..rounds {
        let moved: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut force = vec![0.0; dim];
                for (j, q) in pts.iter().enumerate() {
                    let r = dist(&pts[i], q);
                    if j == i || r > 2.0 * scale {
                        continue;
                    }
                    let w = (2.0 * scale - r) / r.max(1e-9);
                    for d in 0..dim {
                        force[d] += w * (pts[i][d] - q[d]);
                    }
                }
                let mut p: Vec<f64> = (0..dim).map(|d| pts[i][d] + 0.1 * force[d]).collect();
                normalize(&mut p);
                p
            })
            .collect();
        pts.clone_from_slice(&moved);
    }
}

/// Analytic membership test for the ball minus the closed cones.
pub struct OmegaN {
    spec: OmegaNSpec,
    axes: Vec<Vec<f64>>,
    cos_eps: f64,
}

impl OmegaN {
    pub fn new(spec: OmegaNSpec) -> Result<(Self, SpacingReport)> {
        spec.validate()?;
        let (axes, report) = sphere_points(spec.n, spec.dim)?;
        Ok((
            Self {
                spec,
                axes,
                cos_eps: spec.eps.cos(),
            },
            report,
        ))
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    fn in_cone(&self, x: &[f64], axis: &[f64]) -> bool {
        let d = self.spec.vertex_distance();
        let mut along = 0.0;
        let mut len2 = 0.0;
        for (xi, ai) in x.iter().zip(axis) {
            let y = xi - d * ai;
            along += y * ai;
            len2 += y * y;
        }
        along >= 0.0 && along * along >= len2 * self.cos_eps * self.cos_eps
    }
}

impl Indicator for OmegaN {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn contains(&self, x: &[f64]) -> bool {
        if x.iter().map(|v| v * v).sum::<f64>() >= 1.0 {
            return false;
        }
        // zero opening removes only rays
        self.spec.eps == 0.0 || !self.axes.iter().any(|a| self.in_cone(x, a))
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0; self.spec.dim], vec![1.0; self.spec.dim])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StarshapeCertificate {
    pub rho: f64,
    pub segments: usize,
    pub samples_per_segment: usize,
    pub spacing: SpacingReport,
}

pub const CERTIFICATE_SEGMENTS: usize = 10_000;

pub fn build_omega_n(spec: OmegaNSpec, h: f64) -> Result<(DomainGrid, StarshapeCertificate)> {
    build_omega_n_with(spec, h, CERTIFICATE_SEGMENTS, 0)
}

pub fn build_omega_n_with(
    spec: OmegaNSpec,
    h: f64,
    segments: usize,
    seed: u64,
) -> Result<(DomainGrid, StarshapeCertificate)> {
    spec.validate()?;
    let needed = 2.0 * h;
    if spec.eps > 0.0 && spec.eps * spec.vertex_distance() < needed {
        return Err(Error::ResolutionTooCoarse {
            eps: spec.eps,
            vertex: spec.vertex_distance(),
            needed,
        });
    }
    let (shape, spacing) = OmegaN::new(spec)?;
    // thin slivers between neighbouring cones may separate from the main
    // component at grid level
    let opts = BuildOptions {
        allow_disconnected: true,
        ..Default::default()
    };
    let grid = build_from_indicator(&shape, h, opts)?;
    let rho = spec.rho();
    let boundary: Vec<usize> = grid
        .interior_nodes()
        .iter()
        .copied()
        .filter(|&i| {
            (0..grid.dim()).any(|axis| {
                [false, true]
                    .iter()
                    .any(|&fwd| grid.step(i, axis, fwd).is_none_or(|nb| !grid.is_interior(nb)))
            })
        })
        .collect();
    let samples = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.dim;
    let trials = if boundary.is_empty() { 0 } else { segments };
    for _ in 0..trials {
        let x = grid.position(boundary[rng.gen_range(0..boundary.len())]);
        let y: Vec<f64> = loop {
            if rho <= 0.0 {
                break vec![0.0; dim];
            }
            let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-rho..rho)).collect();
            if y.iter().map(|v| v * v).sum::<f64>() < rho * rho {
                break y;
            }
        };
        for s in 0..=samples {
            let t = s as f64 / samples as f64;
            let z: Vec<f64> = (0..dim).map(|d| y[d] + t * (x[d] - y[d])).collect();
            if !shape.contains(&z) {
                return Err(Error::StarshapeFailed { from: y, to: x });
            }
        }
    }
    Ok((
        grid,
        StarshapeCertificate {
            rho,
            segments,
            samples_per_segment: samples + 1,
            spacing,
        },
    ))
}

/// Distance from the vertex to the unit sphere along a ray at angle `phi`
/// to the axis.
fn ray_length(d: f64, phi: f64) -> f64 {
    if d >= 1.0 {
        return 0.0;
    }
    -d * phi.cos() + (1.0 - d * d * phi.sin().powi(2)).sqrt()
}

/// Lateral area and volume of one cone inside the unit ball.
pub fn cone_pieces(spec: &OmegaNSpec) -> (f64, f64) {
    let n = spec.dim as f64;
    let d = spec.vertex_distance();
    let eps = spec.eps;
    let s_low = sphere_area(spec.dim - 1);
    let lateral = s_low * eps.sin().powf(n - 2.0) * ray_length(d, eps).powf(n - 1.0) / (n - 1.0);
    let volume = if eps == 0.0 {
        0.0
    } else {
        s_low / n * integrate(|phi| phi.sin().powf(n - 2.0) * ray_length(d, phi).powf(n), 0.0, eps, 16, 8)
    };
    (lateral, volume)
}

/// `(|S^{n-1}| + N^{n-1} A) / (|S^{n-1}|/n - N^{n-1} V)` with `A`, `V` the
/// lateral area and volume of a single cone inside the ball; infinite once
/// the volume bound is exhausted.
pub fn gamma_upper_formula(spec: &OmegaNSpec) -> f64 {
    let s = sphere_area(spec.dim);
    let count = spec.n.pow(spec.dim as u32 - 1) as f64;
    let (a, v) = cone_pieces(spec);
    let denom = s / spec.dim as f64 - count * v;
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        (s + count * a) / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `eps_N = exp(-N)`.
    #[serde(rename = "paper_n3")]
    Exponential,
    /// `eps_N = N^{(1-n)/(n-5/2)}`.
    #[serde(rename = "paper_ngt3")]
    Algebraic,
    /// Exponential for `n = 3`, algebraic above, raised to `4 h N / c0` when
    /// finer than the grid can resolve.
    GridResolvable,
}

impl Schedule {
    /// Returns `(eps, clamped)`.
    pub fn eps(self, n: usize, dim: usize, h: f64, c0: f64) -> (f64, bool) {
        let nf = n as f64;
        let dn = dim as f64;
        let exp_eps = (-nf).exp();
        let alg_eps = nf.powf((1.0 - dn) / (dn - 2.5));
        match self {
            Schedule::Exponential => (exp_eps, false),
            Schedule::Algebraic => (alg_eps, false),
            Schedule::GridResolvable => {
                let eps = if dim <= 3 { exp_eps } else { alg_eps };
                let floor = 4.0 * h * nf / c0;
                if eps < floor {
                    (floor, true)
                } else {
                    (eps, false)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendRow {
    pub n: usize,
    pub eps: f64,
    pub clamped: bool,
    pub lambda: f64,
    pub gamma_upper: f64,
    /// Lower bound for the isocapacitary constant, equal to `lambda`.
    pub big_gamma_lower: f64,
    pub certificate: StarshapeCertificate,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendTable {
    pub dim: usize,
    pub h: f64,
    pub c0: f64,
    pub schedule: Schedule,
    pub rows: Vec<TrendRow>,
    pub lambda_strictly_increasing: bool,
    pub gamma_upper_in_band: bool,
}

impl TrendTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "N,eps,clamped,lambda,gamma_upper,Gamma_lower")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n, r.eps, r.clamped, r.lambda, r.gamma_upper, r.big_gamma_lower
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrendOptions {
    pub h: f64,
    pub c0: f64,
    pub segments: usize,
    pub seed: u64,
    /// Relative drop in the eigenvalue tolerated before the trend is
    /// rejected.
    pub tolerance: f64,
}

impl Default for TrendOptions {
    fn default() -> Self {
        Self {
            h: 1.0 / 32.0,
            c0: DEFAULT_C0,
            segments: CERTIFICATE_SEGMENTS,
            seed: 0,
            tolerance: 1e-3,
        }
    }
}

pub fn run_trend(ns: &[usize], dim: usize, schedule: Schedule, opts: TrendOptions) -> Result<TrendTable> {
    if ns.is_empty() || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("Ns must be non-empty and increasing".into()));
    }
    let rows: Vec<TrendRow> = ns
        .par_iter()
        .map(|&n| {
            let (eps, clamped) = schedule.eps(n, dim, opts.h, opts.c0);
            let spec = OmegaNSpec {
                n,
                dim,
                c0: opts.c0,
                eps,
                rho: None,
            };
            let (grid, certificate) = build_omega_n_with(spec, opts.h, opts.segments, opts.seed)?;
            let eo = EigenOptions {
                per_component: true,
                ..Default::default()
            };
            let eig = fundamental_eigenvalue_with(&grid, eo)?;
            Ok(TrendRow {
                n,
                eps,
                clamped,
                lambda: eig.lambda,
                gamma_upper: gamma_upper_formula(&spec),
                big_gamma_lower: eig.lambda,
                certificate,
            })
        })
        .collect::<Result<_>>()?;
    for w in rows.windows(2) {
        if w[1].lambda < w[0].lambda * (1.0 - opts.tolerance) {
            return Err(Error::TrendViolated(format!(
                "eigenvalue fell from {} (N = {}) to {} (N = {})",
                w[0].lambda, w[0].n, w[1].lambda, w[1].n
            )));
        }
    }
    let n = dim as f64;
    Ok(TrendTable {
        dim,
        h: opts.h,
        c0: opts.c0,
        schedule,
        lambda_strictly_increasing: rows.windows(2).all(|w| w[1].lambda > w[0].lambda),
        gamma_upper_in_band: rows.iter().all(|r| r.gamma_upper >= n && r.gamma_upper <= n + 0.5),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, DomainSpec};

    #[test]
    fn circle_points_are_regular() {
        let (pts, rep) = sphere_points(7, 2).unwrap();
        assert_eq!(pts.len(), 7);
        let expect = 2.0 * (PI / 7.0).sin() * 7.0;
        assert!((rep.c1 - expect).abs() < 1e-12 && (rep.c2 - expect).abs() < 1e-12);
    }

    #[test]
    fn sphere_points_band() {
        for (n, dim) in [(2, 3), (8, 3), (3, 4)] {
            let (pts, rep) = sphere_points(n, dim).unwrap();
            assert_eq!(pts.len(), n.pow(dim as u32 - 1));
            assert!(pts.iter().all(|p| (p.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12));
            // brute-force nearest-neighbour check
            let mut lo = f64::INFINITY;
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    if i != j {
                        lo = lo.min(dist(&pts[i], &pts[j]));
                    }
                }
            }
            assert!((lo * n as f64 - rep.c1).abs() < 1e-12);
            assert!(rep.c1 >= SPACING_BAND.0 && rep.c2 <= SPACING_BAND.1);
        }
    }

    #[test]
    fn gamma_upper_limits() {
        let mut spec = OmegaNSpec::new(8, 3, 0.0);
        assert_eq!(gamma_upper_formula(&spec), 3.0);
        spec.eps = 1e-3;
        let g = gamma_upper_formula(&spec);
        assert!(g > 3.0 && g < 3.1, "{g}");
        let mut prev = 3.0;
        for eps in [1e-4, 1e-3, 1e-2, 0.1] {
            spec.eps = eps;
            let g = gamma_upper_formula(&spec);
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn cone_pieces_match_small_angle_formulas() {
        // thin cone along a chord of length 1 - d
        let spec = OmegaNSpec::new(8, 3, 1e-3);
        let (a, v) = cone_pieces(&spec);
        let l: f64 = 0.5;
        assert!((a / (PI * 1e-3 * l * l) - 1.0).abs() < 1e-3);
        assert!((v / (PI * 1e-6 * l.powi(3) / 3.0) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn zero_opening_is_the_ball() {
        let h = 1.0 / 16.0;
        let (g, _) = build_omega_n_with(OmegaNSpec::new(4, 3, 0.0), h, 100, 0).unwrap();
        let b = build_domain(&DomainSpec::unit_ball(3), h).unwrap();
        assert_eq!(g.interior_nodes(), b.interior_nodes());
    }

    #[test]
    fn coarse_grid_rejected() {
        let spec = OmegaNSpec::new(8, 3, 1e-3);
        assert!(matches!(build_omega_n(spec, 0.05), Err(Error::ResolutionTooCoarse { .. })));
    }

    #[test]
    fn starshape_certificate_detects_large_rho() {
        let mut spec = OmegaNSpec::new(8, 3, 0.2);
        let (_, cert) = build_omega_n_with(spec, 1.0 / 24.0, 2000, 1).unwrap();
        assert!(cert.rho > 0.0);
        spec.rho = Some(0.9);
        assert!(matches!(
            build_omega_n_with(spec, 1.0 / 24.0, 2000, 1),
            Err(Error::StarshapeFailed { .. })
        ));
    }

    #[test]
    fn schedules() {
        assert_eq!(Schedule::Exponential.eps(5, 3, 0.1, 4.0), ((-5.0f64).exp(), false));
        let (e, c) = Schedule::GridResolvable.eps(8, 3, 1.0 / 32.0, 4.0);
        assert!(c && (e - 0.25).abs() < 1e-12);
        let (e4, _) = Schedule::Algebraic.eps(4, 4, 0.1, 4.0);
        assert!((e4 - 4f64.powf(-2.0)).abs() < 1e-12);
    }

    #[test]
    fn single_row_trend() {
        let opts = TrendOptions {
            h: 1.0 / 12.0,
            segments: 200,
            ..Default::default()
        };
        let t = run_trend(&[4], 3, Schedule::GridResolvable, opts).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.lambda_strictly_increasing);
        assert!(run_trend(&[6, 4], 3, Schedule::GridResolvable, opts).is_err());
    }
}
