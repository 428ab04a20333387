mod common;

use common::{graph, half_plane};
use epsapprox::geometry::Profile;
use epsapprox::harmonic::{
    caccioppoli_ratio, laplacian_residual, make_field, mean_value_defect, BoundaryData, FieldSpec, HarmonicField,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn poisson(a: f64, b: f64) -> FieldSpec {
    FieldSpec::PoissonExtension { data: BoundaryData::Indicator { a, b } }
}

/// Composite Simpson rule for the Poisson kernel over [a, b].
fn poisson_quadrature(a: f64, b: f64, p: [f64; 2]) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let y = p[1].abs();
    let k = |s: f64| y / PI / ((p[0] - s).powi(2) + y * y);
    let mut sum = k(a) + k(b);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * k(a + i as f64 * h);
    }
    sum * h / 3.0
}

fn grad_fd(u: &HarmonicField, p: [f64; 2], h: f64) -> [f64; 2] {
    [
        (u.eval([p[0] + h, p[1]]) - u.eval([p[0] - h, p[1]])) / (2.0 * h),
        (u.eval([p[0], p[1] + h]) - u.eval([p[0], p[1] - h])) / (2.0 * h),
    ]
}

#[test]
fn constant_field() {
    let e = half_plane(4.0, 0.01);
    let u = make_field(&FieldSpec::Constant { value: 1.0 }, &e).unwrap();
    assert_eq!(u.eval([0.3, 2.0]), 1.0);
    assert_eq!(u.grad([0.3, 2.0]), [0.0, 0.0]);
    let probes: Vec<_> = (0..20).map(|i| [i as f64 * 0.1 - 1.0, 0.5 + i as f64 * 0.05]).collect();
    assert_eq!(laplacian_residual(&u, &e, &probes, 1e-3).max_abs, 0.0);
}

#[test]
fn height_coordinate() {
    let e = half_plane(4.0, 0.01);
    let u = make_field(&FieldSpec::Coordinate { axis: 1 }, &e).unwrap();
    assert_eq!(u.eval([3.0, 2.0]), 2.0);
    assert_eq!(u.grad([3.0, 2.0]), [0.0, 1.0]);
}

#[test]
fn saddle_polynomial() {
    let e = half_plane(4.0, 0.01);
    let u = make_field(&FieldSpec::Polynomial { terms: vec![[2.0, 0.0, 1.0], [0.0, 2.0, -1.0]] }, &e).unwrap();
    assert_eq!(u.eval([2.0, 1.0]), 3.0);
    assert_eq!(u.grad([2.0, 1.0]), [4.0, -2.0]);
    // 5-point stencil is exact on quadratics up to rounding
    let probes: Vec<_> = (0..20).map(|i| [i as f64 * 0.1 - 1.0, 0.5 + i as f64 * 0.05]).collect();
    let r = laplacian_residual(&u, &e, &probes, 1e-2);
    assert!(r.max_abs < 1e-9, "{}", r.max_abs);
}

#[test]
fn quartic_residual_within_taylor_bound() {
    // Re (x + it)^4 = x⁴ − 6x²t² + t⁴; stencil error is h²/12 (u_xxxx + u_tttt) = 4h²
    let e = half_plane(4.0, 0.01);
    let u = make_field(&FieldSpec::Polynomial { terms: vec![[4.0, 0.0, 1.0], [2.0, 2.0, -6.0], [0.0, 4.0, 1.0]] }, &e)
        .unwrap();
    let probes: Vec<_> = (0..10).map(|i| [i as f64 * 0.2 - 1.0, 0.3 + i as f64 * 0.1]).collect();
    for h in [1e-2, 5e-3] {
        let r = laplacian_residual(&u, &e, &probes, h);
        assert!(r.max_abs <= 4.0 * h * h + 1e-6, "h = {h}: {}", r.max_abs);
    }
}

#[test]
fn non_harmonic_polynomial_rejected() {
    let e = half_plane(4.0, 0.01);
    assert!(make_field(&FieldSpec::Polynomial { terms: vec![[2.0, 0.0, 1.0]] }, &e).is_err());
    assert!(make_field(&FieldSpec::Polynomial { terms: vec![[5.0, 0.0, 1.0]] }, &e).is_err());
}

#[test]
fn poisson_of_interval_indicator() {
    let e = half_plane(8.0, 0.01);
    let u = make_field(&poisson(-1.0, 1.0), &e).unwrap();
    assert!((u.eval([0.0, 1.0]) - 0.5).abs() < 1e-15);
    for y in [0.1f64, 0.5, 2.0, 7.0] {
        let closed = 2.0 / PI * (1.0 / y).atan();
        assert!((u.eval([0.0, y]) - closed).abs() < 1e-14);
    }
    for p in [[0.3, 0.4], [-2.0, 1.5], [1.2, 0.05], [0.0, -0.7]] {
        let q = poisson_quadrature(-1.0, 1.0, p);
        assert!((u.eval(p) - q).abs() < 1e-8, "{p:?}: {} vs {q}", u.eval(p));
    }
}

#[test]
fn poisson_residual_on_probes() {
    let e = half_plane(8.0, 0.01);
    let u = make_field(&poisson(-1.0, 1.0), &e).unwrap();
    let probes: Vec<_> = (0..50).map(|i| [-2.5 + 0.1 * i as f64, 0.05 + 0.04 * i as f64]).collect();
    let r = laplacian_residual(&u, &e, &probes, 1e-3);
    assert_eq!(r.probes, 50);
    assert!(r.max_normalized <= 1e-4, "{}", r.max_normalized);
}

#[test]
fn poisson_only_on_half_plane() {
    let g = graph(Profile::Linear { slope: 0.1, offset: 0.0 }, 4.0, 0.01);
    assert!(make_field(&poisson(-1.0, 1.0), &g).is_err());
}

#[test]
fn log_pole() {
    let e = half_plane(4.0, 0.01);
    let u = make_field(&FieldSpec::FundamentalPole { pole: [0.0, 0.0] }, &e).unwrap();
    assert_eq!(u.eval([0.0, 1.0]), 0.0);
    assert_eq!(u.grad([0.0, 1.0]), [0.0, 1.0]);
    assert!(u.try_eval([0.0, 0.0]).is_err());
    assert!(make_field(&FieldSpec::FundamentalPole { pole: [0.0, 0.5] }, &e).is_err());
}

#[test]
fn gradients_match_central_differences() {
    let e = half_plane(8.0, 0.01);
    let h = 1e-5 * 8.0;
    let fields = [
        FieldSpec::Coordinate { axis: 0 },
        FieldSpec::Polynomial { terms: vec![[3.0, 0.0, 1.0], [1.0, 2.0, -3.0]] },
        poisson(-1.0, 1.0),
        FieldSpec::FundamentalPole { pole: [0.5, 0.0] },
    ];
    for s in &fields {
        let u = make_field(s, &e).unwrap();
        for p in [[0.2, 0.7], [-1.1, 1.3], [2.0, -0.6]] {
            let (g, fd) = (u.grad(p), grad_fd(&u, p, h));
            let scale = g[0].hypot(g[1]).max(1.0);
            assert!((g[0] - fd[0]).abs() + (g[1] - fd[1]).abs() <= 1e-6 * scale, "{s:?} at {p:?}");
        }
    }
}

#[test]
fn mean_value_property() {
    let e = half_plane(8.0, 0.01);
    for s in [poisson(-1.0, 1.0), FieldSpec::FundamentalPole { pole: [0.0, 0.0] }] {
        let u = make_field(&s, &e).unwrap();
        for (x, r) in [([0.0, 1.0], 0.5), ([1.5, 2.0], 1.5), ([-0.5, 0.4], 0.3)] {
            assert!(mean_value_defect(&u, x, r, 256) < 1e-10);
        }
    }
}

#[test]
fn caccioppoli_for_linear_field() {
    // ℓ² · ℓ² / ∬_{[-ℓ,ℓ]²} x² = 3/4
    let e = half_plane(8.0, 0.01);
    let u = make_field(&FieldSpec::Coordinate { axis: 0 }, &e).unwrap();
    for side in [0.25, 1.0] {
        assert!((caccioppoli_ratio(&u, [0.3, 2.0], side) - 0.75).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn linear_in_coefficients(a in -3.0..3.0f64, b in -3.0..3.0f64, x in -2.0..2.0f64, t in 0.05..2.0f64) {
        let e = half_plane(8.0, 0.01);
        let s1 = poisson(-1.0, 0.5);
        let s2 = FieldSpec::Polynomial { terms: vec![[1.0, 1.0, 1.0]] };
        let u = make_field(&FieldSpec::LinearCombination { terms: vec![(a, s1.clone()), (b, s2.clone())] }, &e).unwrap();
        let (u1, u2) = (make_field(&s1, &e).unwrap(), make_field(&s2, &e).unwrap());
        let p = [x, t];
        prop_assert!((u.eval(p) - (a * u1.eval(p) + b * u2.eval(p))).abs() < 1e-12);
        let (g, g1, g2) = (u.grad(p), u1.grad(p), u2.grad(p));
        prop_assert!((g[1] - (a * g1[1] + b * g2[1])).abs() < 1e-12);
    }

    #[test]
    fn poisson_values_between_zero_and_one(x in -5.0..5.0f64, t in 0.001..5.0f64) {
        let e = half_plane(8.0, 0.01);
        let u = make_field(&poisson(-1.0, 1.0), &e).unwrap();
        let v = u.eval([x, t]);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, u.eval([x, -t]));
    }
}
