#![allow(dead_code)]

use epsapprox::dyadic::{build_cube_system, CubeSystem, GridParams};
use epsapprox::geometry::{build_boundary, BoundarySet, BoundarySpec, BuildOptions, Descriptor, Profile};
use epsapprox::whitney::{whitney_decompose, WhitneyComplex, Window};

pub fn half_plane(width: f64, resolution: f64) -> BoundarySet {
    let spec = BoundarySpec { descriptor: Descriptor::Hyperplane {}, window: [-width / 2.0, width / 2.0], resolution };
    build_boundary(&spec, &BuildOptions::new(1.0)).unwrap()
}

pub fn graph(profile: Profile, width: f64, resolution: f64) -> BoundarySet {
    let spec = BoundarySpec {
        descriptor: Descriptor::LipschitzGraph { profile },
        window: [-width / 2.0, width / 2.0],
        resolution,
    };
    build_boundary(&spec, &BuildOptions::new(1.0)).unwrap()
}

pub fn cubes(e: &BoundarySet, k_max: i32) -> CubeSystem {
    build_cube_system(e, &GridParams::new(0, k_max)).unwrap()
}

/// Whitney complex over the E window, as tall as it is wide on each side.
pub fn complex(e: &BoundarySet, cs: &CubeSystem, tau: f64) -> WhitneyComplex {
    let [a, b] = e.spec.window;
    let h = b - a;
    let w = Window { x: [a, b], y: [-h, h] };
    whitney_decompose(e, w, cs.scale, [cs.anchor, 0.0], cs.k_min - 3, cs.k_max + 3, tau).unwrap()
}

/// Random forest with at most `max_nodes` nodes and depth at most
/// `max_depth`. Every node owns 0..3 atoms of its own (leaves at least one),
/// and its members are its own atoms plus those of its descendants.
pub fn random_forest(rng: &mut impl rand::Rng, max_nodes: usize, max_depth: usize) -> epsapprox::tree::Forest {
    let n = rng.gen_range(1..=max_nodes);
    let roots = rng.gen_range(1..=2usize).min(n);
    let mut parent: Vec<Option<usize>> = vec![None; roots];
    let mut depth = vec![0usize; roots];
    while parent.len() < n {
        let p = rng.gen_range(0..parent.len());
        if depth[p] < max_depth {
            parent.push(Some(p));
            depth.push(depth[p] + 1);
        }
    }
    let mut has_child = vec![false; n];
    for p in parent.iter().flatten() {
        has_child[*p] = true;
    }
    let mut own: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut weights = Vec::new();
    for q in 0..n {
        let k = if has_child[q] { rng.gen_range(0..3) } else { rng.gen_range(1..4) };
        for _ in 0..k {
            own[q].push(weights.len() as u32);
            weights.push(rng.gen_range(0.1..1.0));
        }
    }
    let mut members = own;
    for q in (0..n).rev() {
        if let Some(p) = parent[q] {
            let m = members[q].clone();
            members[p].extend(m);
        }
    }
    epsapprox::tree::Forest::new(parent, members, weights).unwrap()
}

/// Boundary, cubes and decomposition built through the pipeline stages.
pub struct Fixture {
    pub cfg: epsapprox::pipeline::RunConfig,
    pub e: BoundarySet,
    pub grid: epsapprox::pipeline::Grid,
    pub d: epsapprox::pipeline::Decomposition,
}

impl Fixture {
    pub fn from_value(v: serde_json::Value) -> Self {
        let cfg: epsapprox::pipeline::RunConfig = serde_json::from_value(v).unwrap();
        let e = epsapprox::pipeline::boundary(&cfg).unwrap();
        let grid = epsapprox::pipeline::build_grid(&cfg, &e).unwrap();
        let d = epsapprox::pipeline::decompose(&cfg, &e, &grid.cubes).unwrap();
        Fixture { cfg, e, grid, d }
    }

    pub fn cs(&self) -> &CubeSystem {
        &self.grid.cubes
    }

    pub fn context(&self, field: &epsapprox::harmonic::FieldSpec) -> epsapprox::pipeline::FieldContext {
        epsapprox::pipeline::field_context(&self.cfg, &self.e, self.cs(), &self.d, field).unwrap()
    }
}

/// Half-plane on [-2, 2] with cubes down to generation `k`, sample spacing
/// a quarter of the finest cube.
pub fn half_plane_fixture(k: i32, fields: serde_json::Value) -> Fixture {
    let res = 4.0 / 2f64.powi(k + 2);
    Fixture::from_value(serde_json::json!({
        "boundary": {"type": "hyperplane", "params": {}, "window": [-2.0, 2.0], "resolution": res},
        "grid": {"k_min": 0, "k_max": k},
        "fields": fields,
    }))
}

pub fn height_field() -> serde_json::Value {
    serde_json::json!([{"name": "t", "field": {"type": "coordinate", "axis": 1}}])
}

pub fn poisson_field() -> epsapprox::harmonic::FieldSpec {
    epsapprox::harmonic::FieldSpec::PoissonExtension {
        data: epsapprox::harmonic::BoundaryData::Indicator { a: -0.5, b: 0.5 },
    }
}
