mod common;

use common::{graph, half_plane};
use epsapprox::dyadic::{build_cube_system, GridParams};
use epsapprox::geometry::{build_boundary, check_adr, dist, BoundarySpec, BuildOptions, Descriptor, Profile};
use proptest::prelude::*;

#[test]
fn line_samples_and_weights() {
    let spec = BoundarySpec { descriptor: Descriptor::Hyperplane {}, window: [-4.0, 4.0], resolution: 0.01 };
    let e = build_boundary(&spec, &BuildOptions::new(1.0)).unwrap();
    assert_eq!(e.len(), 801);
    assert!(e.weights.iter().all(|&w| (w - 0.01).abs() < 1e-12));
}

#[test]
fn abs_graph_weights_follow_arclength() {
    let h = 0.02;
    let e = graph(Profile::Abs { slope: 0.1 }, 4.0, h);
    let expect = h * (1.0f64 + 0.01).sqrt();
    for (p, w) in e.samples.iter().zip(&e.weights) {
        // the kink sample sees both branches, still at the same slope
        assert!((w - expect).abs() < 1e-12, "weight {w} at x = {}", p[0]);
        assert!((p[1] - 0.1 * p[0].abs()).abs() < 1e-9);
    }
}

#[test]
fn cantor_level_two_corners() {
    let spec =
        BoundarySpec { descriptor: Descriptor::CantorSet { level: 2 }, window: [0.0, 1.0], resolution: 1.0 / 16.0 };
    let e = build_boundary(&spec, &BuildOptions::new(1.0)).unwrap();
    assert_eq!(e.len(), 16);
    // level-2 squares have side 1/16 and sit at offsets {0, 3/16, 12/16, 15/16}
    let offs = [0.0, 3.0 / 16.0, 12.0 / 16.0, 15.0 / 16.0];
    let mut expect = Vec::new();
    for &x in &offs {
        for &y in &offs {
            expect.push([x + 1.0 / 32.0, y + 1.0 / 32.0]);
        }
    }
    for p in &expect {
        assert!(e.samples.iter().any(|s| dist(*s, *p) < 1e-12), "missing corner {p:?}");
    }
}

#[test]
fn cantor_self_similar_masses() {
    let spec =
        BoundarySpec { descriptor: Descriptor::CantorSet { level: 3 }, window: [0.0, 1.0], resolution: 1.0 / 64.0 };
    let e = build_boundary(&spec, &BuildOptions::new(1.0)).unwrap();
    let total = e.total_measure();
    let corner = e.samples.iter().copied().min_by(|a, b| (a[0] + a[1]).total_cmp(&(b[0] + b[1]))).unwrap();
    let diam = e.diameter.unwrap();
    for j in 1..=2 {
        // a ball of radius 4^-j diam around the corner sample holds exactly one
        // level-j square
        let r = 4f64.powi(-j) * diam;
        let m = e.surface_measure(corner, r);
        assert!((m - 4f64.powi(-j) * total).abs() < 1e-12 * total, "j = {j}: {m}");
    }
}

#[test]
fn distances_to_line_and_graph() {
    let e = half_plane(8.0, 0.01);
    assert!((e.distance([0.5, 0.7]) - 0.7).abs() < 1e-12);
    assert!((e.distance([3.0, -2.0]) - 2.0).abs() < 1e-12);
    let g = graph(Profile::Linear { slope: 0.1, offset: 0.0 }, 8.0, 0.01);
    assert!((g.distance([0.0, 1.0]) - 1.0 / 1.01f64.sqrt()).abs() < 1e-9);
}

#[test]
fn adr_on_the_line() {
    let e = half_plane(8.0, 0.01);
    let r = check_adr(&e, 2.5).unwrap();
    assert!(r.pass);
    for c in &r.tested_centers {
        for &rad in &r.tested_radii {
            if c[0] - rad < -4.0 || c[0] + rad > 4.0 {
                continue;
            }
            let ratio = e.surface_measure(*c, rad) / rad;
            assert!((ratio - 2.0).abs() <= 2.0 * e.resolution() / rad + 1e-12, "ratio {ratio} at r = {rad}");
        }
    }
    assert!(!check_adr(&e, 1.5).unwrap().pass);
}

#[test]
fn adr_on_shallow_graph() {
    let e = graph(Profile::Random { seed: 7, slope: 0.1, knot_spacing: 0.25 }, 8.0, 0.01);
    let r = check_adr(&e, 2.5).unwrap();
    assert!(r.pass);
    // smallest tested radius is 4 samples, so counting error is up to 2/4
    let slack = 2.0 * e.resolution() / r.tested_radii[0];
    assert!(
        r.lower_constant >= 2.0 - slack && r.upper_constant <= 2.0 * 1.01f64.sqrt() + slack,
        "{} {}",
        r.lower_constant,
        r.upper_constant
    );
}

#[test]
fn two_parallel_lines_need_budget_four() {
    let h = 0.01;
    let mut points = Vec::new();
    for i in 0..=800 {
        let x = -4.0 + i as f64 * h;
        points.push([x, 0.0]);
        points.push([x, 1.0]);
    }
    let weights = vec![h; points.len()];
    let spec =
        BoundarySpec { descriptor: Descriptor::PointList { points, weights }, window: [-4.0, 4.0], resolution: h };
    let e = build_boundary(&spec, &BuildOptions::new(1.0)).unwrap();
    let c = [0.0, 0.0];
    let ratio = e.surface_measure(c, 2.0) / 2.0;
    // both lines cross the ball: 4 + 2√3 units of length over r = 2
    let expect = (4.0 + 2.0 * 3f64.sqrt()) / 2.0;
    assert!((ratio - expect).abs() < 0.02, "{ratio}");
    let rep = check_adr(&e, 4.0).unwrap();
    assert!(rep.upper_constant > 3.0 && rep.upper_constant <= 4.0, "{}", rep.upper_constant);
    assert!(rep.pass);
    assert!(!check_adr(&e, 3.0).unwrap().pass);
}

#[test]
fn steep_graph_rejected() {
    let spec = BoundarySpec {
        descriptor: Descriptor::LipschitzGraph { profile: Profile::Linear { slope: 2.0, offset: 0.0 } },
        window: [-1.0, 1.0],
        resolution: 0.01,
    };
    assert!(build_boundary(&spec, &BuildOptions::new(1.0)).is_err());
}

proptest! {
    #[test]
    fn distance_is_one_lipschitz(ax in -3.0..3.0f64, ay in -2.0..2.0f64, bx in -3.0..3.0f64, by in -2.0..2.0f64) {
        let e = graph(Profile::Sine { amplitude: 0.05, frequency: 1.0 }, 8.0, 0.02);
        let (a, b) = ([ax, ay], [bx, by]);
        prop_assert!((e.distance(a) - e.distance(b)).abs() <= dist(a, b) + 1e-9);
    }

    #[test]
    fn surface_measure_monotone(x in -2.0..2.0f64, r1 in 0.01..1.0f64, dr in 0.0..1.0f64) {
        let e = half_plane(8.0, 0.01);
        prop_assert!(e.surface_measure([x, 0.0], r1) <= e.surface_measure([x, 0.0], r1 + dr));
    }
}

// --- dyadic cubes ---

#[test]
fn dyadic_interval_of_a_point() {
    let e = half_plane(4.0, 1.0 / 512.0);
    let cs = build_cube_system(&e, &GridParams::new(0, 4).with_scale(1.0, -2.0)).unwrap();
    let i = e.nearest_sample([0.3, 0.0]);
    let chain = cs.containing_cubes(i);
    let at2 = chain.iter().copied().find(|&q| cs.cubes[q].k_top <= 2 && 2 <= cs.cubes[q].k).unwrap();
    let m = cs.members(at2);
    let xs: Vec<f64> = m.iter().map(|&a| e.samples[a as usize][0]).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!((lo - 0.25).abs() < 1e-12 && hi < 0.5 && hi > 0.5 - 2.0 / 512.0, "[{lo}, {hi}]");
    // chain is totally ordered by inclusion
    for w in chain.windows(2) {
        assert!(cs.forest.contains(w[0], w[1]));
    }
}

#[test]
fn bounded_set_has_one_root() {
    let spec =
        BoundarySpec { descriptor: Descriptor::CantorSet { level: 2 }, window: [0.0, 1.0], resolution: 1.0 / 16.0 };
    let e = build_boundary(&spec, &BuildOptions::new(1.0)).unwrap();
    let cs = build_cube_system(&e, &GridParams::new(0, 2)).unwrap();
    let roots = cs.roots();
    assert_eq!(roots.len(), 1);
    assert!((cs.cubes[roots[0]].measure - e.total_measure()).abs() < 1e-12);
    assert_eq!(cs.containing_cubes(0).first(), Some(&roots[0]));
}

fn axioms(e: &epsapprox::geometry::BoundarySet, k_max: i32) {
    let cs = build_cube_system(e, &GridParams::new(0, k_max)).unwrap();
    let total = e.total_measure();
    // nested: disjoint or comparable, brute force over pairs
    for a in 0..cs.len() {
        for b in a + 1..cs.len() {
            let (ma, mb) = (cs.members(a), cs.members(b));
            let shared = ma.iter().filter(|x| mb.binary_search(x).is_ok()).count();
            if shared > 0 {
                assert!(cs.forest.contains(a, b) || cs.forest.contains(b, a), "cubes {a} and {b} overlap");
                assert!(shared == ma.len().min(mb.len()));
            }
        }
    }
    // every generation partitions the samples with exact weight sums
    for k in cs.k_min..=cs.k_max {
        let gen = cs.generation(k);
        let mut seen = vec![0u8; e.len()];
        let mut mass = 0.0;
        for &q in &gen {
            for &a in cs.members(q) {
                seen[a as usize] += 1;
            }
            mass += cs.cubes[q].measure;
        }
        assert!(seen.iter().all(|&s| s == 1), "generation {k} is not a partition");
        assert!((mass - total).abs() <= 1e-12 * total);
    }
    // inner and outer balls
    assert!(cs.c1 > 0.0 && cs.big_c1.is_finite() && cs.c1 <= cs.big_c1);
    for q in 0..cs.len() {
        let c = &cs.cubes[q];
        let m = cs.members(q);
        for a in e.ball_members(c.center_point, cs.c1 * c.side * (1.0 - 1e-9)) {
            assert!(m.binary_search(&a).is_ok(), "inner ball leaks out of cube {q}");
        }
        for &a in m {
            assert!(dist(e.samples[a as usize], c.center_point) <= cs.big_c1 * c.side + 1e-12);
        }
        if let Some(p) = c.parent {
            let sb = cs.surface_ball(e, q, 1.0);
            let pb = cs.surface_ball(e, p, 1.0);
            assert!(
                sb.members.iter().all(|a| pb.members.contains(a)) || dist(sb.center, pb.center) + sb.radius > pb.radius
            );
        }
    }
}

#[test]
fn grid_axioms_half_plane() {
    axioms(&half_plane(4.0, 1.0 / 128.0), 5);
}

#[test]
fn grid_axioms_shallow_graph() {
    axioms(&graph(Profile::Linear { slope: 0.1, offset: 0.0 }, 4.0, 1.0 / 128.0), 5);
}

#[test]
fn grid_axioms_random_graph() {
    axioms(&graph(Profile::Random { seed: 3, slope: 0.3, knot_spacing: 0.2 }, 4.0, 1.0 / 128.0), 5);
}

#[test]
fn surface_ball_radius_scales() {
    let e = half_plane(4.0, 1.0 / 256.0);
    let cs = build_cube_system(&e, &GridParams::new(0, 4).with_scale(1.0, -2.0)).unwrap();
    let q = cs.generation(1).into_iter().find(|&q| (cs.cubes[q].side - 0.5).abs() < 1e-12).unwrap();
    let b = cs.surface_ball(&e, q, 2.0);
    assert!((b.radius - 2.0 * cs.big_c1 * 0.5).abs() < 1e-12);
    assert_eq!(cs.surface_ball(&e, q, 1.0).radius, cs.big_c1 * 0.5);
}
