//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failures are printed, not fatal, so the workspace test run stays green
//! while the report records what was measured.

mod common;

use std::time::{Duration, Instant};

use common::{graph, half_plane, poisson_field, random_forest};
use epsapprox::carleson::{carleson_embedding_check, indicator, packing_constant, sparse_witness, SparseOutcome};
use epsapprox::dyadic::{build_cube_system, GridParams};
use epsapprox::geometry::{check_adr, dist, BoundarySet, Profile};
use epsapprox::pipeline::{run, Report, RunConfig, Tables};
use epsapprox::tree::Forest;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(k: i32, fields: Value, eps: &[f64]) -> RunConfig {
    let res = 4.0 / 2f64.powi(k + 2);
    serde_json::from_value(json!({
        "boundary": {"type": "hyperplane", "params": {}, "window": [-2.0, 2.0], "resolution": res},
        "grid": {"k_min": 0, "k_max": k},
        "fields": fields,
        "eps": eps,
        "seed": 17,
    }))
    .unwrap()
}

fn test_fields() -> Value {
    json!([
        {"name": "t", "field": {"type": "coordinate", "axis": 1}},
        {"name": "poisson", "field": serde_json::to_value(poisson_field()).unwrap()},
    ])
}

fn embedding() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut cases, mut bad) = (0, 0);
    while cases < 1000 {
        let f = random_forest(&mut rng, 40, 5);
        let vals: Vec<f64> = (0..f.weights.len()).map(|_| rng.gen_range(0.0..5.0)).collect();
        let member: Vec<bool> = (0..f.len()).map(|_| rng.gen_bool(0.5)).collect();
        for q0 in f.roots() {
            cases += 1;
            bad += usize::from(!carleson_embedding_check(&f, &vals, &member, q0).holds);
        }
    }
    let mut exact = true;
    for d in 0..6 {
        let f = Forest::full_tree(2, d, 1);
        let c = carleson_embedding_check(&f, &vec![1.0; f.weights.len()], &vec![true; f.len()], 0);
        exact &= c.lhs == c.rhs;
    }
    let t = start.elapsed();
    outcome(
        bad == 0 && exact && t < Duration::from_secs(10),
        format!("{cases} instances, {bad} violations, equality witness {exact}, {t:.2?}"),
    )
}

fn sparse_carleson() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut n, mut bad) = (0usize, 0usize);
    while n < 100_000 {
        let f = random_forest(&mut rng, 64, 6);
        for _ in 0..50 {
            let coll: Vec<usize> = (0..f.len()).filter(|_| rng.gen_bool(0.5)).collect();
            if coll.is_empty() {
                continue;
            }
            n += 1;
            let lam = packing_constant(&f, &indicator(f.len(), &coll)).lambda;
            match sparse_witness(&f, &coll, 1.0 / lam) {
                SparseOutcome::Feasible(w) if w.validate(&f, 1e-9) => {}
                _ => bad += 1,
            }
            let l = rng.gen_range(0.05..1.0);
            if sparse_witness(&f, &coll, l).is_feasible() && lam > (1.0 / l) * (1.0 + 1e-9) {
                bad += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(bad == 0 && t < Duration::from_secs(60), format!("{n} collections, {bad} counterexamples, {t:.2?}"))
}

/// Nestedness, partition and ball inclusions; returns (ok, c₁, C₁).
fn axioms(e: &BoundarySet, k_max: i32) -> (bool, f64, f64) {
    let cs = build_cube_system(e, &GridParams::new(0, k_max)).unwrap();
    let total = e.total_measure();
    let mut ok = cs.c1 > 0.0 && cs.big_c1.is_finite();
    for a in 0..cs.len() {
        for b in a + 1..cs.len() {
            let (ma, mb) = (cs.members(a), cs.members(b));
            let shared = ma.iter().filter(|x| mb.binary_search(x).is_ok()).count();
            if shared > 0 {
                ok &= (cs.forest.contains(a, b) || cs.forest.contains(b, a)) && shared == ma.len().min(mb.len());
            }
        }
    }
    for k in cs.k_min..=cs.k_max {
        let mut seen = vec![0u8; e.len()];
        let mut mass = 0.0;
        for q in cs.generation(k) {
            for &a in cs.members(q) {
                seen[a as usize] += 1;
            }
            mass += cs.cubes[q].measure;
        }
        ok &= seen.iter().all(|&s| s == 1) && (mass - total).abs() <= 1e-12 * total;
    }
    for q in 0..cs.len() {
        let c = &cs.cubes[q];
        let m = cs.members(q);
        ok &= e.ball_members(c.center_point, cs.c1 * c.side * (1.0 - 1e-9)).iter().all(|a| m.binary_search(a).is_ok());
        ok &= m.iter().all(|&a| dist(e.samples[a as usize], c.center_point) <= cs.big_c1 * c.side + 1e-12);
    }
    (ok, cs.c1, cs.big_c1)
}

fn grid_axioms() -> Outcome {
    let line = half_plane(4.0, 1.0 / 128.0);
    let slope = graph(Profile::Linear { slope: 0.1, offset: 0.0 }, 4.0, 1.0 / 128.0);
    let (ok_a, c1_a, cc1_a) = axioms(&line, 5);
    let (ok_b, c1_b, cc1_b) = axioms(&slope, 5);
    let e = half_plane(8.0, 0.01);
    let r = check_adr(&e, 2.5).unwrap();
    let mut worst: f64 = 0.0;
    for c in &r.tested_centers {
        for &rad in &r.tested_radii {
            if c[0] - rad < -4.0 || c[0] + rad > 4.0 {
                continue;
            }
            let dev = (e.surface_measure(*c, rad) / rad - 2.0).abs();
            worst = worst.max(dev / (2.0 * e.resolution() / rad));
        }
    }
    outcome(
        ok_a && ok_b && worst <= 1.0 + 1e-9,
        format!(
            "line c1={c1_a:.3} C1={cc1_a:.3}, slope 0.1 c1={c1_b:.3} C1={cc1_b:.3}, ADR deviation {worst:.3} of 2·res/r"
        ),
    )
}

fn checks<'a>(r: &'a Report, pat: &'a str) -> impl Iterator<Item = &'a epsapprox::pipeline::Check> + 'a {
    r.checks.iter().filter(move |c| c.name.contains(pat))
}

fn all_pass(r: &Report, pats: &[&str]) -> (bool, Vec<String>) {
    let failed: Vec<String> = r
        .checks
        .iter()
        .filter(|c| !c.pass && pats.iter().any(|p| c.name.contains(p)))
        .map(|c| format!("{} = {:.4} (budget {:.4})", c.name, c.value, c.budget))
        .collect();
    (failed.is_empty(), failed)
}

fn fmt_failed(v: &[String]) -> String {
    if v.is_empty() {
        String::new()
    } else {
        format!("; failing: {}", v.join(", "))
    }
}

fn packing(r: &Report, t: Duration) -> Outcome {
    let (ok, failed) = all_pass(r, &["/principal", "/eps_scaling_"]);
    let principal: Vec<String> =
        r.fields.iter().map(|f| format!("{} Λ(P)={:.3}", f.name, f.principal.lambda)).collect();
    let scaling: Vec<String> = checks(r, "/eps_scaling_").map(|c| format!("{:.2}", c.value)).collect();
    outcome(
        ok && t < Duration::from_secs(300),
        format!("{}, ε ratios [{}] ≤ 24, {t:.1?}{}", principal.join(", "), scaling.join(", "), fmt_failed(&failed)),
    )
}

fn pointwise(r: &Report) -> Outcome {
    let (ok, failed) = all_pass(r, &["/c1", "/c1_local"]);
    let c1 = r.fields.iter().flat_map(|f| &f.runs).map(|x| x.c1).fold(0.0, f64::max);
    let local = r.fields.iter().flat_map(|f| &f.runs).map(|x| x.c1_local).fold(0.0, f64::max);
    outcome(ok, format!("C1 = {c1:.3} (≤ 4), local C1 = {local:.3} (≤ 1){}", fmt_failed(&failed)))
}

fn carleson_bound(r: &Report) -> Outcome {
    let (ok, failed) = all_pass(r, &["/c2", "/lp_c2"]);
    let spread: Vec<String> = r.fields.iter().map(|f| format!("{} spread {:.2}", f.name, f.c2_spread)).collect();
    outcome(ok, format!("{}{}", spread.join(", "), fmt_failed(&failed)))
}

fn levelset(r: &Report) -> Outcome {
    let (ok, failed) = all_pass(r, &["/levelset"]);
    let runs: Vec<_> = r.fields.iter().flat_map(|f| &f.runs).collect();
    let a1 = runs.iter().map(|x| x.levelset.a1).fold(0.0, f64::max);
    let a2 = runs.iter().map(|x| x.levelset.a2).fold(0.0, f64::max);
    outcome(ok, format!("{} runs, A1 ≤ {a1}, A2 ≤ {a2:.3}{}", runs.len(), fmt_failed(&failed)))
}

fn aperture(r: &Report) -> Outcome {
    let (ok, failed) = all_pass(r, &["/aperture"]);
    let k = r.fields.iter().flat_map(|f| &f.apertures).filter(|a| a.alpha == 4.0).map(|a| a.ratio).fold(0.0, f64::max);
    let drift = r
        .fields
        .iter()
        .flat_map(|f| &f.apertures)
        .filter(|a| a.alpha == 4.0)
        .map(|a| (a.ratio_refined / a.ratio - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(ok, format!("K(4) = {k:.3}, refinement drift {:.2}%{}", 100.0 * drift, fmt_failed(&failed)))
}

fn exactness() -> Outcome {
    let cfg = config(5, json!([{"name": "one", "field": {"type": "constant", "value": 1.5}}]), &[0.1, 0.2, 0.4]);
    let (r, tables) = run(&cfg).unwrap();
    let runs = &r.fields[0].runs;
    let exact = runs.iter().all(|x| x.exact == Some(true) && x.tv.total() == 0.0 && x.c1 == 0.0 && x.c2 == 0.0);
    let flat = tables.functionals.iter().all(|row| row.4 == 1.5 && row.6 == 0.0);
    outcome(exact && flat, format!("{} ε values, φ ≡ u and TV = 0: {exact}, N_*u ≡ 1.5 and Su ≡ 0: {flat}", runs.len()))
}

fn serialized(cfg: &RunConfig, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let (r, t): (Report, Tables) = pool.install(|| run(cfg)).unwrap();
    let mut out = serde_json::to_vec(&r).unwrap();
    out.extend(serde_json::to_vec(&t).unwrap());
    out
}

fn determinism() -> Outcome {
    let cfg = config(6, test_fields(), &[0.2, 0.4]);
    let one = serialized(&cfg, 1);
    let same = [1, 4, 8].iter().all(|&n| serialized(&cfg, n) == one);
    outcome(same, format!("{} bytes, identical at 1, 4 and 8 threads: {same}", one.len()))
}

fn main() {
    let mut lines = Vec::new();
    let mut emit = |id: usize, name: &str, o: Outcome| {
        let line = format!("[{}] {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        println!("{line}");
        lines.push(o.pass);
    };
    emit(1, "discrete Carleson embedding", embedding());
    emit(2, "sparse iff Carleson", sparse_carleson());
    emit(3, "dyadic grid axioms", grid_axioms());

    let start = Instant::now();
    let (report, _) = run(&config(8, test_fields(), &[0.1, 0.2, 0.4])).unwrap();
    let t = start.elapsed();
    emit(4, "packing and epsilon scaling", packing(&report, t));
    emit(5, "pointwise approximation", pointwise(&report));
    emit(6, "Carleson functional bound", carleson_bound(&report));
    emit(7, "level-set comparison", levelset(&report));
    emit(8, "aperture comparison", aperture(&report));
    emit(9, "exactness for constant u", exactness());
    emit(10, "determinism", determinism());
    let passed = lines.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", lines.len());
}
