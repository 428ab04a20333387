mod common;

use common::*;
use epsapprox::approximator::{
    build_global, cell_errors, jump_table, order_good_cubes, ring_chain, total_variation, Approximant, CellKind,
    GlobalMode, Rule, Setting,
};
use epsapprox::bitset::BitSet;
use epsapprox::harmonic::FieldSpec;
use epsapprox::pipeline::FieldContext;
use epsapprox::stopping::{generation_cubes, oscillation_cubes, GenerationForest, OscillationLabels};
use epsapprox::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setting<'a>(f: &'a Fixture, ctx: &'a FieldContext) -> Setting<'a> {
    Setting { e: &f.e, cs: f.cs(), wc: &f.d.whitney, rc: &f.d.regions, corona: &f.d.corona, u: &ctx.u }
}

fn construct(
    f: &Fixture,
    ctx: &FieldContext,
    eps: f64,
    mode: &GlobalMode,
) -> (OscillationLabels, GenerationForest, Approximant) {
    let labels = oscillation_cubes(&f.d.regions, &ctx.boxes, eps, &ctx.numbers);
    let gens = generation_cubes(&ctx.u, f.cs(), &f.d.corona, &f.d.regions, eps, &ctx.numbers);
    let phi = build_global(&setting(f, ctx), &gens, &labels, mode).unwrap();
    (labels, gens, phi)
}

fn cantor_fixture() -> Fixture {
    Fixture::from_value(serde_json::json!({
        "boundary": {"type": "cantor_set", "params": {"level": 3}, "window": [0.0, 1.0], "resolution": 1.0 / 64.0},
        "grid": {"k_min": 0, "k_max": 3},
        "whitney": {"height": 4.0, "margin": 6},
        "corona": {"mode": "annotated", "regimes": []},
        "fields": height_field(),
    }))
}

/// Union of T_Q over the piece tops.
fn covered_domain(f: &Fixture, phi: &Approximant) -> BitSet {
    let mut d = BitSet::new(f.d.whitney.len());
    for p in &phi.pieces {
        d.union_with(&f.d.regions.carleson[p.q0]);
    }
    d
}

fn rings() -> GlobalMode {
    GlobalMode::Rings { gamma0: 4.0, rings: 3 }
}

#[test]
fn good_cube_order_has_non_increasing_sides() {
    let f = half_plane_fixture(5, height_field());
    let ctx = f.context(&poisson_field());
    let cs = f.cs();
    for eps in [0.1, 0.4] {
        let gens = generation_cubes(&ctx.u, cs, &f.d.corona, &f.d.regions, eps, &ctx.numbers);
        for q0 in cs.roots().into_iter().chain(cs.generation(2)) {
            let fam = order_good_cubes(cs, q0, &gens);
            for w in fam.windows(2) {
                assert!(cs.cubes[w[0]].side >= cs.cubes[w[1]].side);
            }
            if let Some(top) = gens.subregime_of[q0] {
                assert_eq!(fam[0], top);
            }
            // replay: every G-cube strictly inside Q₀ appears exactly once
            for q in cs.forest.subtree(q0) {
                if q != q0 && gens.is_member[q] {
                    assert_eq!(fam.iter().filter(|&&x| x == q).count(), 1);
                }
            }
        }
    }
}

#[test]
fn cells_partition_the_glued_domain() {
    let f = half_plane_fixture(5, height_field());
    for spec in [FieldSpec::Coordinate { axis: 1 }, poisson_field()] {
        let ctx = f.context(&spec);
        for mode in [GlobalMode::Bounded, rings()] {
            for eps in [0.1, 0.2, 0.4] {
                let (_, _, phi) = construct(&f, &ctx, eps, &mode);
                let wc = &f.d.whitney;
                let mut count = vec![0u32; wc.len()];
                for (ci, c) in phi.cells.iter().enumerate() {
                    for &b in &c.boxes {
                        count[b as usize] += 1;
                        assert_eq!(phi.box_cell[b as usize], Some(ci as u32));
                    }
                    assert!(c.boxes.iter().all(|&b| f.d.regions.carleson[phi.pieces[c.piece].q0].contains(b as usize)));
                }
                let domain = covered_domain(&f, &phi);
                for b in 0..wc.len() {
                    assert_eq!(count[b], u32::from(domain.contains(b)), "box {b}");
                }
                let vol: f64 = phi.cells.iter().flat_map(|c| &c.boxes).map(|&b| wc.boxes[b as usize].area()).sum();
                let dom: f64 = domain.iter().map(|b| wc.boxes[b].area()).sum();
                assert!((vol - dom).abs() <= 1e-12 * dom);
            }
        }
    }
}

#[test]
fn red_cells_follow_u_and_blue_cells_are_constant() {
    let f = half_plane_fixture(7, height_field());
    let ctx = f.context(&poisson_field());
    for eps in [0.2, 0.4] {
        let (labels, _, phi) = construct(&f, &ctx, eps, &rings());
        assert!(phi.cells.iter().any(|c| matches!(c.rule, Rule::Const(_))));
        for c in &phi.cells {
            match c.kind {
                CellKind::V { comp, red, .. } => {
                    assert_eq!(red, labels.red[c.cube][comp]);
                    assert_eq!(red, c.rule == Rule::U);
                }
                CellKind::A { .. } => assert!(matches!(c.rule, Rule::Const(_))),
            }
        }
        let err = cell_errors(&phi, &ctx.boxes, &labels, &ctx.numbers);
        assert!(err.blue_vs_osc <= 1.0, "{}", err.blue_vs_osc);
    }
}

#[test]
fn fast_eval_agrees_with_scan() {
    let f = half_plane_fixture(7, height_field());
    let ctx = f.context(&poisson_field());
    let (_, _, phi) = construct(&f, &ctx, 0.4, &rings());
    let s = setting(&f, &ctx);
    let wc = &f.d.whitney;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut inside = 0;
    while inside < 10_000 {
        let p = [rng.gen_range(wc.window.x[0]..wc.window.x[1]), rng.gen_range(wc.window.y[0]..wc.window.y[1])];
        match (phi.eval(&s, p), phi.eval_slow(&s, p)) {
            (Ok(a), Ok(b)) => {
                assert_eq!(a, b, "at {p:?}");
                inside += 1;
            }
            (Err(Error::OutsideCells(..)), Err(Error::OutsideCells(..))) => {}
            other => panic!("disagreement at {p:?}: {other:?}"),
        }
    }
}

#[test]
fn every_box_point_evaluates() {
    let f = half_plane_fixture(5, height_field());
    let ctx = f.context(&FieldSpec::Coordinate { axis: 1 });
    let (_, _, phi) = construct(&f, &ctx, 0.2, &rings());
    let s = setting(&f, &ctx);
    let wc = &f.d.whitney;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100_000 {
        let b = rng.gen_range(0..wc.len());
        let bx = &wc.boxes[b];
        let p = [bx.lo[0] + rng.gen::<f64>() * bx.side, bx.lo[1] + rng.gen::<f64>() * bx.side];
        let v = phi.eval(&s, p).unwrap();
        if p[0] != bx.lo[0] && p[1] != bx.lo[1] {
            assert_eq!(v, phi.rule(b).value(&ctx.u, p));
        }
    }
}

#[test]
fn facet_points_take_the_value_of_u() {
    let f = half_plane_fixture(7, height_field());
    let ctx = f.context(&poisson_field());
    let (_, _, phi) = construct(&f, &ctx, 0.4, &rings());
    let s = setting(&f, &ctx);
    let jumps = jump_table(&s, &phi);
    assert!(!jumps.is_empty());
    for j in &jumps {
        let fc = &f.d.whitney.facets[j.facet];
        let p = fc.point(0.5);
        assert_eq!(phi.eval(&s, p).unwrap(), ctx.u.eval(p));
    }
}

#[test]
fn constant_field_is_reproduced_exactly() {
    let f = half_plane_fixture(5, height_field());
    let ctx = f.context(&FieldSpec::Constant { value: 2.5 });
    let s = setting(&f, &ctx);
    for mode in [GlobalMode::Bounded, rings()] {
        let (_, _, phi) = construct(&f, &ctx, 0.2, &mode);
        assert!(phi.cells.iter().all(|c| c.rule == Rule::Const(2.5)));
        let jumps = jump_table(&s, &phi);
        assert!(jumps.is_empty());
        let all = BitSet::from_indices(f.d.whitney.len(), 0..f.d.whitney.len());
        assert_eq!(total_variation(&phi, &jumps, &ctx.boxes, &all).total(), 0.0);
        for bx in f.d.whitney.boxes.iter().step_by(13) {
            assert_eq!(phi.eval(&s, bx.center()).unwrap(), 2.5);
        }
    }
}

#[test]
fn constant_jumps_are_exact() {
    // adjacent constant cells are rare; this is the smallest setting with a few
    let f = half_plane_fixture(8, height_field());
    let ctx = f.context(&poisson_field());
    let (_, _, phi) = construct(&f, &ctx, 0.05, &rings());
    let s = setting(&f, &ctx);
    let mut seen = 0;
    for j in jump_table(&s, &phi) {
        let fc = &f.d.whitney.facets[j.facet];
        assert_eq!(j.length, fc.length());
        let atoms: f64 = j.atoms.iter().map(|a| a.1).sum();
        if let (Rule::Const(a), Rule::Const(b)) = (phi.rule(j.a as usize), phi.rule(j.b as usize)) {
            assert_eq!(j.mass, (a - b).abs() * fc.length());
            assert!((atoms - j.mass).abs() <= 1e-12 * j.mass);
            seen += 1;
        } else {
            assert_eq!(j.mass, atoms);
        }
    }
    assert!(seen > 0);
}

#[test]
fn height_gradient_variation_is_area() {
    let f = half_plane_fixture(5, height_field());
    let ctx = f.context(&FieldSpec::Coordinate { axis: 1 });
    let (_, _, phi) = construct(&f, &ctx, 0.1, &rings());
    let wc = &f.d.whitney;
    let all = BitSet::from_indices(wc.len(), 0..wc.len());
    let tv = total_variation(&phi, &[], &ctx.boxes, &all);
    let area: f64 = (0..wc.len()).filter(|&b| phi.rule(b) == Rule::U).map(|b| wc.boxes[b].area()).sum();
    assert!(area > 0.0);
    assert!((tv.gradient - area).abs() <= 1e-12 * area);
}

#[test]
fn variation_is_monotone_and_superadditive() {
    let f = half_plane_fixture(7, height_field());
    let ctx = f.context(&poisson_field());
    let (_, _, phi) = construct(&f, &ctx, 0.4, &rings());
    let jumps = jump_table(&setting(&f, &ctx), &phi);
    assert!(!jumps.is_empty());
    let n = f.d.whitney.len();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..64 {
        let pick: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let w1 = BitSet::from_indices(n, (0..n).filter(|&b| pick[b] == 1));
        let w2 = BitSet::from_indices(n, (0..n).filter(|&b| pick[b] == 2));
        let mut u = w1.clone();
        u.union_with(&w2);
        let (t1, t2, tu) = (
            total_variation(&phi, &jumps, &ctx.boxes, &w1),
            total_variation(&phi, &jumps, &ctx.boxes, &w2),
            total_variation(&phi, &jumps, &ctx.boxes, &u),
        );
        assert!((tu.gradient - (t1.gradient + t2.gradient)).abs() <= 1e-12 * tu.gradient.max(1.0));
        assert!(tu.jumps >= t1.jumps + t2.jumps - 1e-12 * tu.jumps.max(1.0));
        assert!(tu.total() >= t1.total().max(t2.total()));
    }
}

#[test]
fn bounded_set_keeps_u_outside_the_top_box() {
    let f = cantor_fixture();
    let ctx = f.context(&FieldSpec::Coordinate { axis: 0 });
    let (_, _, phi) = construct(&f, &ctx, 0.2, &GlobalMode::Bounded);
    let s = setting(&f, &ctx);
    let domain = covered_domain(&f, &phi);
    let mut outside = 0;
    for (b, bx) in f.d.whitney.boxes.iter().enumerate() {
        if !domain.contains(b) {
            outside += 1;
            assert_eq!(phi.rule(b), Rule::U);
            let c = bx.center();
            assert_eq!(phi.eval(&s, c).unwrap(), c[0]);
        }
    }
    assert!(outside > 0);
}

#[test]
fn ring_chain_grows_by_gamma() {
    let f = half_plane_fixture(6, height_field());
    let cs = f.cs();
    let chain = ring_chain(cs, 4.0, 3).unwrap();
    assert_eq!(chain.len(), 3);
    for w in chain.windows(2) {
        assert!(cs.forest.contains(w[1], w[0]));
        assert_eq!(cs.cubes[w[1]].side, 4.0 * cs.cubes[w[0]].side);
    }
    assert!(cs.members(chain[0]).binary_search(&(cs.z0 as u32)).is_ok());
    // W_k = T_{Q_k} ∖ T_{Q_{k-1}} are disjoint and fill T_{Q_K}
    let t = |q: usize| &f.d.regions.carleson[q];
    for w in chain.windows(2) {
        assert!(t(w[0]).is_subset(t(w[1])));
    }
    let mut union = t(chain[0]).clone();
    let mut total = t(chain[0]).count();
    for w in chain.windows(2) {
        let mut ring = t(w[1]).clone();
        ring.difference_with(t(w[0]));
        assert!(!ring.intersects(&union));
        total += ring.count();
        union.union_with(&ring);
    }
    assert_eq!(union, *t(chain[2]));
    assert_eq!(total, t(chain[2]).count());

    assert!(matches!(ring_chain(cs, 3.0, 3), Err(Error::Invalid(_))));
    assert!(matches!(ring_chain(cs, 4.0, 1), Err(Error::WindowTooSmall(_))));
    assert!(matches!(ring_chain(cs, 4.0, 5), Err(Error::WindowTooSmall(_))));
}

#[test]
fn ring_pieces_claim_the_inner_box_first() {
    let f = half_plane_fixture(6, height_field());
    let ctx = f.context(&poisson_field());
    let (_, _, phi) = construct(&f, &ctx, 0.2, &rings());
    let chain = ring_chain(f.cs(), 4.0, 3).unwrap();
    assert_eq!(phi.pieces.iter().take(3).map(|p| p.q0).collect::<Vec<_>>(), chain);
    // every box of T_{Q_1} belongs to the innermost piece
    for b in f.d.regions.carleson[chain[0]].iter() {
        let c = phi.box_cell[b].unwrap() as usize;
        assert_eq!(phi.cells[c].piece, 0);
    }
}
