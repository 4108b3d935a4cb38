use std::f64::consts::PI;

use capabench::capacity::harmonic_capacity;
use capabench::criteria::{seminorm, Kernel, PiecewiseLinear, ProductMeasure1D};
use capabench::grid::{build_domain, gradient_energy, relative_perimeter, volume, DomainGrid, DomainSpec, ScalarField, Trace};
use capabench::levelset::level_profile;
use proptest::prelude::*;

fn square(n: usize) -> DomainGrid {
    build_domain(&DomainSpec::cuboid(&[0.0, 0.0], &[1.0, 1.0]), 1.0 / n as f64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn volume_and_perimeter_are_translation_invariant(
        cx in 0.3f64..0.5, cy in 0.3f64..0.5, r in 0.05f64..0.2, kx in 0i32..6, ky in 0i32..6,
    ) {
        let g = square(64);
        let h = g.spacing();
        let (sx, sy) = (kx as f64 * h, ky as f64 * h);
        let a = g.select(|x| (x[0] - cx).powi(2) + (x[1] - cy).powi(2) < r * r);
        let b = g.select(|x| (x[0] - cx - sx).powi(2) + (x[1] - cy - sy).powi(2) < r * r);
        prop_assert_eq!(a.len(), b.len());
        prop_assert!((volume(&g, &a) - volume(&g, &b)).abs() < 1e-12);
        prop_assert!((relative_perimeter(&g, &a) - relative_perimeter(&g, &b)).abs() < 1e-9);
    }

    #[test]
    fn energy_is_homogeneous(alpha in -4.0f64..4.0, p in 1.0f64..4.0, k in 1.0f64..5.0) {
        let g = square(24);
        let u = ScalarField::from_fn(&g, Trace::Zero, |x| (k * x[0]).sin() * x[1] * (1.0 - x[1])).unwrap();
        let e1 = gradient_energy(&g, &u, p);
        let e2 = gradient_energy(&g, &u.scaled(alpha), p);
        prop_assert!((e2 - alpha.abs().powf(p) * e1).abs() <= 1e-9 * (1.0 + e2.abs()));
    }

    #[test]
    fn seminorm_scales_linearly(alpha in -3.0f64..3.0, beta in -5.0f64..5.0, kappa in 0.0f64..0.9, q in 1.0f64..3.0) {
        let mu = ProductMeasure1D::on(0.0, 1.0, Kernel::Power { kappa });
        let u = PiecewiseLinear::from_fn(0.0, 1.0, 6, |x| x * x - 0.3 * x);
        let s1 = seminorm(&u, &mu, q).unwrap();
        let s2 = seminorm(&u.affine(alpha, beta), &mu, q).unwrap();
        prop_assert!((s2 - alpha.abs() * s1).abs() <= 1e-8 * (1.0 + s2));
        let d1 = u.derivative_norm(2.0);
        let d2 = u.affine(alpha, beta).derivative_norm(2.0);
        prop_assert!((d2 - alpha.abs() * d1).abs() <= 1e-10 * (1.0 + d2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn capacity_is_monotone_in_the_set(r1 in 0.1f64..0.4, dr in 0.08f64..0.3) {
        let g = build_domain(&DomainSpec::unit_ball(2), 1.0 / 24.0).unwrap();
        let small = g.select(|x| x[0] * x[0] + x[1] * x[1] < r1 * r1);
        let big = g.select(|x| x[0] * x[0] + x[1] * x[1] < (r1 + dr).powi(2));
        prop_assume!(!small.is_empty());
        let c1 = harmonic_capacity(&small, &g).unwrap().value;
        let c2 = harmonic_capacity(&big, &g).unwrap().value;
        prop_assert!(c1 <= c2 * (1.0 + 1e-9));
    }
}

#[test]
fn radial_level_caps_match_annulus_capacity() {
    let g = build_domain(&DomainSpec::unit_ball(2), 1.0 / 32.0).unwrap();
    let u = ScalarField::from_fn(&g, Trace::Zero, |x| 1.0 - (x[0] * x[0] + x[1] * x[1]).sqrt()).unwrap();
    let prof = level_profile(&u, &g, 2.0, 8).unwrap();
    let mut checked = 0;
    for (&t, &cap) in prof.thresholds.iter().zip(&prof.level_caps) {
        if !(0.2..=0.8).contains(&t) {
            continue;
        }
        let exact = 2.0 * PI / (1.0 / (1.0 - t)).ln();
        assert!((cap - exact).abs() <= 0.03 * exact, "t = {t}: {cap} vs {exact}");
        checked += 1;
    }
    assert!(checked >= 3);
}
