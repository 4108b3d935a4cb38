//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as they are measured; they do
//! not fail the target. Any other failure exits non-zero.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use capabench::capacity::{harmonic_capacity, volume_radius};
use capabench::cli::{execute, to_json, ExperimentConfig};
use capabench::counterexample::{run_trend, Schedule, TrendOptions};
use capabench::criteria::{
    brute_force_ratio, corollary5_check, seminorm, Kernel, NuFunction, PiecewiseLinear, ProductMeasure1D,
};
use capabench::criteria::intervals::corollary5_value;
use capabench::criteria::theorem5::{remark6_sharpness, theorem5_k};
use capabench::criteria::Witness;
use capabench::grid::{build_domain, gradient_energy, volume, DomainSpec, ScalarField, Trace};
use capabench::isoperimetric::{boundary_pair_check, isocap_bracket, smooth_ramp, CandidateFamily, PairShape};
use capabench::levelset::{level_profile, random_bump_field, theorem1_lhs};
use capabench::special::bessel_j_first_zero;
use capabench::spectral::fundamental_eigenvalue;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

const KNOWN_RED: &[usize] = &[6, 9];

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn spherical_condenser() -> Outcome {
    let t0 = Instant::now();
    let omega = build_domain(&DomainSpec::unit_ball(3), 1.0 / 64.0).map_err(err)?;
    let inner = DomainSpec::ball(&[0.0; 3], 0.5);
    let omega = omega.with_interface(&inner);
    let f = omega.select_indicator(&inner);
    let cap = harmonic_capacity(&f, &omega).map_err(err)?.value;
    let secs = t0.elapsed().as_secs_f64();
    let e = rel(cap, 4.0 * PI);
    Ok((e <= 0.02 && secs < 60.0, format!("cap = {cap:.4}, 4π = {:.4}, rel err {e:.4}, {secs:.1} s", 4.0 * PI)))
}

fn eigenvalues() -> Outcome {
    let cases = [
        ("interval", DomainSpec::cuboid(&[0.0], &[1.0]), 1.0 / 256.0, PI * PI, 0.001),
        ("square", DomainSpec::cuboid(&[0.0, 0.0], &[1.0, 1.0]), 1.0 / 64.0, 2.0 * PI * PI, 0.005),
        ("disk", DomainSpec::unit_ball(2), 1.0 / 64.0, bessel_j_first_zero(0.0).powi(2), 0.01),
        ("ball", DomainSpec::unit_ball(3), 1.0 / 32.0, PI * PI, 0.01),
    ];
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, spec, h, exact, tol) in cases {
        let g = build_domain(&spec, h).map_err(err)?;
        let l = fundamental_eigenvalue(&g).map_err(err)?.lambda;
        let e = rel(l, exact);
        ok &= e <= tol;
        msg.push(format!("{name} {l:.4} ({e:.2e})"));
    }
    Ok((ok, msg.join(", ")))
}

fn two_sided() -> Outcome {
    let cases = [
        ("disk", DomainSpec::unit_ball(2), 1.0 / 32.0),
        ("square", DomainSpec::cuboid(&[0.0, 0.0], &[1.0, 1.0]), 1.0 / 32.0),
        ("ball", DomainSpec::unit_ball(3), 1.0 / 16.0),
    ];
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, spec, h) in cases {
        let g = build_domain(&spec, h).map_err(err)?;
        let lambda = fundamental_eigenvalue(&g).map_err(err)?.lambda;
        let b = isocap_bracket(&g, &CandidateFamily::default()).map_err(err)?;
        let min_ratio = b.entries.iter().map(|e| e.ratio).fold(f64::INFINITY, f64::min);
        let lower_ok = b.entries.iter().all(|e| e.ratio >= lambda * (1.0 - 0.03));
        let upper_ok = min_ratio <= 4.0 * lambda * 1.05;
        ok &= lower_ok && upper_ok;
        msg.push(format!("{name}: Λ̂ {lambda:.3}, min ratio {min_ratio:.3} over {}", b.entries.len()));
    }
    Ok((ok, msg.join("; ")))
}

fn theorem1_bumps() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for (dim, h) in [(2, 1.0 / 32.0), (3, 1.0 / 16.0)] {
        let g = build_domain(&DomainSpec::unit_ball(dim), h).map_err(err)?;
        let big_r = volume_radius(dim, volume(&g, &g.all_interior()));
        for i in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * dim as u64 + i);
            let bumps = rng.gen_range(1..=3);
            let u = random_bump_field(&g, &mut rng, bumps, 0.05).map_err(err)?;
            let prof = level_profile(&u, &g, 2.0, 16).map_err(err)?;
            let lhs = theorem1_lhs(&prof, big_r, dim).map_err(err)?;
            let energy = gradient_energy(&g, &u, 2.0);
            worst = worst.max(lhs / energy);
            if lhs > energy * 1.03 {
                violations += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok((violations == 0 && secs < 600.0, format!("200 fields, {violations} violations, worst lhs/energy {worst:.3}, {secs:.0} s")))
}

fn faber_krahn() -> Outcome {
    let domains = [
        ("square", DomainSpec::cuboid(&[0.0, 0.0], &[1.0, 1.0]), 1.0 / 64.0),
        ("ellipse", DomainSpec::Ellipsoid { center: vec![0.0, 0.0], semi_axes: vec![1.0, 0.5] }, 1.0 / 64.0),
        ("annulus", DomainSpec::Annulus { center: vec![0.0, 0.0], inner: 0.3, outer: 1.0 }, 1.0 / 64.0),
        (
            "L-shape",
            DomainSpec::Difference {
                base: Box::new(DomainSpec::cuboid(&[0.0, 0.0], &[1.0, 1.0])),
                minus: Box::new(DomainSpec::cuboid(&[0.5, 0.5], &[1.5, 1.5])),
            },
            1.0 / 64.0,
        ),
        ("cube", DomainSpec::cuboid(&[0.0; 3], &[1.0; 3]), 1.0 / 24.0),
    ];
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, spec, h) in domains {
        let g = build_domain(&spec, h).map_err(err)?;
        let dim = g.dim();
        let lambda = fundamental_eigenvalue(&g).map_err(err)?.lambda;
        let r = volume_radius(dim, volume(&g, &g.all_interior()));
        let bound = (bessel_j_first_zero(dim as f64 / 2.0 - 1.0) / r).powi(2);
        ok &= lambda >= bound * (1.0 - 0.03);
        msg.push(format!("{name} {lambda:.2} >= {bound:.2}"));
    }
    Ok((ok, msg.join(", ")))
}

fn counterexample_trend() -> Outcome {
    let t = run_trend(&[4, 6, 8, 10], 3, Schedule::GridResolvable, TrendOptions::default()).map_err(err)?;
    let first = t.rows.first().map(|r| r.lambda).unwrap_or(f64::NAN);
    let last = t.rows.last().map(|r| r.lambda).unwrap_or(f64::NAN);
    let certified = t.rows.iter().all(|r| r.certificate.segments > 0);
    let band = t.rows.iter().all(|r| (3.0..=3.5).contains(&r.gamma_upper));
    let ok = t.lambda_strictly_increasing && last / first >= 2.0 && band && certified;
    let rows: Vec<String> = t
        .rows
        .iter()
        .map(|r| format!("N={} Λ̂={:.2} γ≤{:.2}", r.n, r.lambda, r.gamma_upper))
        .collect();
    Ok((ok, format!("{}; Λ̂(10)/Λ̂(4) = {:.2}", rows.join(", "), last / first)))
}

fn sharp_pairs() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();

    let h = 1.0 / 64.0;
    let ball = build_domain(&DomainSpec::unit_ball(3), h).map_err(err)?;
    let c3 = PairShape::Ball3d.sharp_constant();
    let half = ScalarField::from_fn(&ball, Trace::Extended, |x| smooth_ramp(x[2], 2.0 * h)).map_err(err)?;
    let r = boundary_pair_check(PairShape::Ball3d, &ball, &half, None, 0.03).map_err(err)?;
    ok &= r.ratio >= 0.9 * c3 && r.ratio <= c3 * 1.03;
    msg.push(format!("half-ball {:.2}/8π = {:.3}", r.ratio, r.ratio / c3));
    let tilted = ScalarField::from_fn(&ball, Trace::Extended, |x| smooth_ramp(x[0] + 0.5 * x[1] - 0.3, 2.0 * h))
        .map_err(err)?;
    let r = boundary_pair_check(PairShape::Ball3d, &ball, &tilted, None, 0.03).map_err(err)?;
    ok &= r.ratio <= c3 * 1.03;
    msg.push(format!("tilted cap {:.3}", r.ratio / c3));

    let h = 1.0 / 512.0;
    let disk = build_domain(&DomainSpec::unit_ball(2), h).map_err(err)?;
    let c2 = PairShape::Disk2d.sharp_constant();
    let phi: f64 = 0.25;
    let cap = ScalarField::from_fn(&disk, Trace::Extended, |x| smooth_ramp(x[0] - phi.cos(), 0.002)).map_err(err)?;
    let r = boundary_pair_check(PairShape::Disk2d, &disk, &cap, None, 0.03).map_err(err)?;
    ok &= r.ratio >= 0.9 * c2 && r.ratio <= c2 * 1.03;
    msg.push(format!("disk cap {:.2}/4π = {:.3}", r.ratio, r.ratio / c2));
    let halfdisk = ScalarField::from_fn(&disk, Trace::Extended, |x| smooth_ramp(x[1], 0.002)).map_err(err)?;
    let r = boundary_pair_check(PairShape::Disk2d, &disk, &halfdisk, None, 0.03).map_err(err)?;
    ok &= r.ratio <= c2 * 1.03;
    msg.push(format!("half-disk {:.3}", r.ratio / c2));
    Ok((ok, msg.join(", ")))
}

fn criteria_lebesgue() -> Outcome {
    let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Uniform);
    let rep = corollary5_check(&mu, 2.0, 3.0).map_err(err)?;
    let bf = brute_force_ratio(&mu, 2.0, 3.0, 1000, 8).map_err(err)?;
    let ok = rep.sup_value.is_finite() && bf.ratio <= rep.implied_constant * 1.03;
    Ok((
        ok,
        format!(
            "B̂ = {:.4}, sufficiency bound {:.4}, brute force {:.4} over {} evaluations",
            rep.sup_value, rep.implied_constant, bf.ratio, bf.evaluations
        ),
    ))
}

fn sharpness_section() -> Outcome {
    let line = ProductMeasure1D::real_line(Kernel::Power { kappa: 3.0 });
    let rep = corollary5_check(&line, 2.0, 2.0).map_err(err)?;
    let Witness::IntervalPair { i_lo, i_hi, j_lo, j_hi } = rep.witness else {
        return Err("no witness".into());
    };
    // μ(I, ℝ∖J) r must stay put when the witness is rescaled by 2
    let r = i_lo - j_lo;
    let m1 = rep.sup_value.powi(2) / r;
    let c = 0.5 * (i_lo + i_hi);
    let scaled = Witness::IntervalPair {
        i_lo: c + 2.0 * (i_lo - c),
        i_hi: c + 2.0 * (i_hi - c),
        j_lo: c + 2.0 * (j_lo - c),
        j_hi: c + 2.0 * (j_hi - c),
    };
    let m2 = corollary5_value(&line, 2.0, 2.0, &scaled).powi(2) / (2.0 * r);
    let scaling = rel(m2 * 2.0 * r, m1 * r);
    let finite_ok = rep.sup_value.is_finite() && scaling <= 0.1;

    let u = PiecewiseLinear::from_fn(0.0, 1.0, 1, |x| x);
    let base = ProductMeasure1D::on(0.0, 1.0, Kernel::Power { kappa: 3.0 });
    let values: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&d| seminorm(&u, &base.clone().with_cutoff(d), 2.0).map(|v| v * v))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let target = 10f64.ln();
    let growth: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let growth_ok = growth.iter().all(|g| rel(*g, target) <= 0.15);
    let divergent = seminorm(&u, &base, 2.0).map_err(err)?.is_infinite();
    Ok((
        finite_ok && growth_ok && divergent,
        format!(
            "B̂ = {:.4}, r·μ = {:.4} vs {:.4} rescaled; seminorm² growth per decade {:.3}, {:.3} (target ln 10 = {target:.3})",
            rep.sup_value,
            m1 * r,
            m2 * 2.0 * r,
            growth[0],
            growth[1]
        ),
    ))
}

fn theorem5() -> Outcome {
    let nu = NuFunction::exponential();
    let k = theorem5_k(&nu, 2.0).map_err(err)?;
    let rep = remark6_sharpness(2.0, &nu, &[1.0, 2.0, 4.0]).map_err(err)?;
    let rows: Vec<String> = rep
        .rows
        .iter()
        .map(|r| format!("N={} K̂={:.3} ≤ {:.3}", r.n, r.k_hat, r.bound))
        .collect();
    Ok((rel(k, 1.0) <= 0.01 && rep.all_hold, format!("K = {k:.6}; {}", rows.join(", "))))
}

fn determinism() -> Outcome {
    let configs = [
        r#"{"command": "criteria-1d", "measure": {"lo": 0, "hi": 1, "kernel": {"kind": "uniform"}}, "p": 2, "q": 3, "budget": 200, "seed": 42}"#,
        r#"{"command": "eigen", "domain": {"kind": "ball", "center": [0, 0], "radius": 1}, "h": 0.0625}"#,
    ];
    let mut ok = true;
    for text in configs {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(err)?;
        let a = to_json(&execute(&cfg, false).map_err(err)?.0).map_err(err)?;
        let b = to_json(&execute(&cfg, false).map_err(err)?.0).map_err(err)?;
        ok &= a == b;
    }
    Ok((ok, format!("{} configs run twice", configs.len())))
}

fn main() -> ExitCode {
    let criteria: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "spherical condenser", spherical_condenser),
        (2, "eigenvalues", eigenvalues),
        (3, "two-sided estimate", two_sided),
        (4, "level-set inequality on random bumps", theorem1_bumps),
        (5, "Faber-Krahn on non-ball domains", faber_krahn),
        (6, "counterexample trend", counterexample_trend),
        (7, "sharp boundary-pair constants", sharp_pairs),
        (8, "interval criteria, Lebesgue measure", criteria_lebesgue),
        (9, "singular kernel with p = q", sharpness_section),
        (10, "kernel constants and sharpness of K", theorem5),
        (11, "determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let t0 = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        let known = if !pass && KNOWN_RED.contains(&id) { " [known red]" } else { "" };
        println!("{tag} {id:>2} {name}{known}: {detail} ({:.1} s)", t0.elapsed().as_secs_f64());
        if !pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
