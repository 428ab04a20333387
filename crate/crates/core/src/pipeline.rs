//! End-to-end runs: config, stages and the certification report.
//!
//! Every stage is a pure function of the config (and seed), so reports are
//! reproducible and safe to cache between stages.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{
    build_global, build_local, cell_errors, cone_lemma_alpha, error_box_sup, jump_table, ring_chain, ring_packing,
    total_variation, tv_measure, Approximant, CellErrors, GlobalMode, RingPacking, Rule, Setting, TotalVariation,
};
use crate::bitset::BitSet;
use crate::carleson::{dyadic_maximal, hl_maximal, log_radii};
use crate::dyadic::{build_cube_system, CubeSystem, GridParams};
use crate::functionals::{
    carleson_ball, carleson_dyadic, compare_apertures, compare_levelsets, cube_numbers, lp_norm, nontangential,
    square_function, BoxField, ConeIndex, LevelSetReport, Tower,
};
use crate::geometry::{build_boundary, check_adr, dist, AdrReport, BoundarySet, BoundarySpec, BuildOptions};
use crate::harmonic::{make_field, FieldSpec, HarmonicField};
use crate::stopping::{
    generation_cubes, oscillation_cubes, principal_cubes, scaling_slope, verify_eps_packing, verify_principal_packing,
    GenerationForest, OscillationLabels, PackingCheck, PrincipalCheck,
};
use crate::whitney::{
    build_regions, corona_provider, whitney_decompose, CoronaDecomposition, CoronaSpec, RegionComplex, RegionParams,
    RegionReport, WhitneyComplex, Window,
};
use crate::{Error, Result};

/// Bumped whenever a cached artifact changes shape.
pub const ARTIFACT_VERSION: u32 = 1;

fn d_grid() -> GridParams {
    GridParams::new(0, 6)
}
fn d_eps() -> Vec<f64> {
    vec![0.1, 0.2, 0.4]
}
fn d_alphas() -> Vec<f64> {
    vec![2.0, 4.0]
}
fn d_ps() -> Vec<f64> {
    vec![1.5, 2.0, 4.0]
}
fn d_tail() -> f64 {
    2.0
}
fn d_height() -> f64 {
    1.0
}
fn d_margin() -> i32 {
    3
}
fn d_triples() -> usize {
    64
}
fn d_output() -> String {
    "out".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyConfig {
    /// Half-height of the box window in units of the E window width.
    #[serde(default = "d_height")]
    pub height: f64,
    /// Whitney levels kept above the coarsest and below the finest cube.
    #[serde(default = "d_margin")]
    pub margin: i32,
}

impl Default for WhitneyConfig {
    fn default() -> Self {
        Self { height: d_height(), margin: d_margin() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedField {
    pub name: String,
    pub field: FieldSpec,
}

/// Budgets for every hard check. Nothing numeric is hard-coded elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub adr: f64,
    pub lipschitz: f64,
    /// Λ(𝒫) ≤ principal · C_ℐ
    pub principal: f64,
    /// Λ ≤ c_pack / ε² for ℛ ∪ ℬ and G*
    pub c_pack: f64,
    /// Λ(ε_min)/Λ(ε_max) ≤ slack · (ε_max/ε_min)²
    pub eps_slack: f64,
    pub c1: f64,
    pub c1_local: f64,
    pub c2: f64,
    /// max C₂ / min C₂ across the ε grid
    pub c2_spread: f64,
    pub aperture_alpha: f64,
    pub aperture_k: f64,
    pub aperture_refine: f64,
    pub level_a1: f64,
    pub level_a2: f64,
    pub locality: f64,
    pub ring_overlap: f64,
    pub ring_packing: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            adr: 4.0,
            lipschitz: 1.0,
            principal: 4.0,
            c_pack: 2.0,
            eps_slack: 1.5,
            c1: 4.0,
            c1_local: 1.0,
            c2: 1.0e3,
            c2_spread: 2.0,
            aperture_alpha: 4.0,
            aperture_k: 10.0,
            aperture_refine: 0.05,
            level_a1: 8.0,
            level_a2: 1.0e6,
            locality: 8.0,
            ring_overlap: 4.0,
            ring_packing: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub boundary: BoundarySpec,
    #[serde(default = "d_grid")]
    pub grid: GridParams,
    #[serde(default)]
    pub whitney: WhitneyConfig,
    #[serde(default)]
    pub regions: RegionParams,
    #[serde(default)]
    pub corona: CoronaSpec,
    pub fields: Vec<NamedField>,
    #[serde(default = "d_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "d_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "d_ps")]
    pub ps: Vec<f64>,
    /// Gluing mode; bounded E defaults to bounded, unbounded E to rings.
    #[serde(default)]
    pub mode: Option<GlobalMode>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub seed: u64,
    /// Bounded E: boxes outside B(z₀, tail·diam E) join every cone.
    #[serde(default = "d_tail")]
    pub tail: f64,
    #[serde(default = "d_triples")]
    pub locality_triples: usize,
    /// Directory for report.json and the CSV tables.
    #[serde(default = "d_output")]
    pub output: String,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.budgets;
        let all = [
            b.adr,
            b.lipschitz,
            b.principal,
            b.c_pack,
            b.eps_slack,
            b.c1,
            b.c1_local,
            b.c2,
            b.c2_spread,
            b.aperture_alpha,
            b.aperture_k,
            b.aperture_refine,
            b.level_a1,
            b.level_a2,
            b.locality,
            b.ring_overlap,
            b.ring_packing,
        ];
        if all.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("every budget must be positive and finite".into()));
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Invalid("eps values must lie in (0, 1)".into()));
        }
        if self.alphas.iter().any(|&a| a < 1.0) || self.ps.iter().any(|&p| p < 1.0) {
            return Err(Error::Invalid("apertures and exponents must be at least 1".into()));
        }
        if self.fields.is_empty() {
            return Err(Error::Invalid("no fields to approximate".into()));
        }
        Ok(())
    }

    pub fn global_mode(&self, e: &BoundarySet) -> GlobalMode {
        self.mode.clone().unwrap_or(if e.is_bounded() {
            GlobalMode::Bounded
        } else {
            GlobalMode::Rings { gamma0: 4.0, rings: 3 }
        })
    }
}

pub fn boundary(cfg: &RunConfig) -> Result<BoundarySet> {
    cfg.validate()?;
    build_boundary(&cfg.boundary, &BuildOptions::new(cfg.budgets.lipschitz))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub cubes: CubeSystem,
    pub adr: AdrReport,
}

/// ADR sweep and dyadic cubes. An ADR ratio outside the budget is a hard
/// failure.
pub fn build_grid(cfg: &RunConfig, e: &BoundarySet) -> Result<Grid> {
    let adr = check_adr(e, cfg.budgets.adr)?;
    if !adr.pass {
        return Err(Error::CheckFailed {
            check: "check_adr".into(),
            detail: format!(
                "ratios span [{:.4}, {:.4}], budget {}",
                adr.lower_constant, adr.upper_constant, cfg.budgets.adr
            ),
        });
    }
    Ok(Grid { cubes: build_cube_system(e, &cfg.grid)?, adr })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decomposition {
    pub whitney: WhitneyComplex,
    pub corona: CoronaDecomposition,
    pub regions: RegionComplex,
}

impl Decomposition {
    /// Rebuilds lookup tables after deserialization.
    pub fn restore(&mut self) {
        self.whitney.reindex();
    }
}

pub fn decompose(cfg: &RunConfig, e: &BoundarySet, cs: &CubeSystem) -> Result<Decomposition> {
    let [a, b] = e.spec.window;
    let h = cfg.whitney.height * (b - a);
    let window = Window { x: [a, b], y: [-h, h] };
    let wc = whitney_decompose(
        e,
        window,
        cs.scale,
        [cs.anchor, 0.0],
        cs.k_min - cfg.whitney.margin,
        cs.k_max + cfg.whitney.margin,
        cfg.regions.tau,
    )?;
    let mut corona = corona_provider(e, cs, &cfg.corona)?;
    let mut rc = build_regions(cs, e, &wc, cfg.regions)?;
    rc.label(cs, e, &wc, &mut corona);
    Ok(Decomposition { whitney: wc, corona, regions: rc })
}

/// Field quantities that do not depend on ε.
pub struct FieldContext {
    pub u: HarmonicField,
    pub boxes: BoxField,
    pub cone: ConeIndex,
    pub nstar: Vec<f64>,
    /// M_𝔻(N_*u) per cube
    pub numbers: Vec<f64>,
    /// M_𝔻(N_*u) per sample
    pub maximal: Vec<f64>,
}

pub fn field_context(
    cfg: &RunConfig,
    e: &BoundarySet,
    cs: &CubeSystem,
    d: &Decomposition,
    spec: &FieldSpec,
) -> Result<FieldContext> {
    let u = make_field(spec, e)?;
    let boxes = BoxField::compute(&u, &d.whitney);
    let cone = ConeIndex::new(e, cs, &d.whitney, 1.0, cfg.tail)?;
    let nstar = nontangential(&cone, &d.regions, &boxes.sup, false)?;
    let numbers = cube_numbers(cs, &nstar);
    let maximal = dyadic_maximal(&cs.forest, &nstar);
    Ok(FieldContext { u, boxes, cone, nstar, numbers, maximal })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsArtifact {
    pub eps: f64,
    pub labels: OscillationLabels,
    pub generations: GenerationForest,
    pub phi: Approximant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldArtifact {
    pub name: String,
    pub runs: Vec<EpsArtifact>,
}

pub fn approximate_field(
    cfg: &RunConfig,
    e: &BoundarySet,
    cs: &CubeSystem,
    d: &Decomposition,
    ctx: &FieldContext,
) -> Result<Vec<EpsArtifact>> {
    let s = setting(e, cs, d, &ctx.u);
    let mode = cfg.global_mode(e);
    cfg.eps
        .iter()
        .map(|&eps| {
            let labels = oscillation_cubes(&d.regions, &ctx.boxes, eps, &ctx.numbers);
            let generations = generation_cubes(&ctx.u, cs, &d.corona, &d.regions, eps, &ctx.numbers);
            let phi = build_global(&s, &generations, &labels, &mode)?;
            Ok(EpsArtifact { eps, labels, generations, phi })
        })
        .collect()
}

pub fn approximate(cfg: &RunConfig, e: &BoundarySet, cs: &CubeSystem, d: &Decomposition) -> Result<Vec<FieldArtifact>> {
    cfg.fields
        .iter()
        .map(|f| {
            let ctx = field_context(cfg, e, cs, d, &f.field)?;
            Ok(FieldArtifact { name: f.name.clone(), runs: approximate_field(cfg, e, cs, d, &ctx)? })
        })
        .collect()
}

fn setting<'a>(e: &'a BoundarySet, cs: &'a CubeSystem, d: &'a Decomposition, u: &'a HarmonicField) -> Setting<'a> {
    Setting { e, cs, wc: &d.whitney, rc: &d.regions, corona: &d.corona, u }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub budget: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, budget: f64) -> Self {
        Check { name: name.into(), value, budget, pass: value <= budget }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApertureRow {
    pub alpha: f64,
    pub p: f64,
    pub ratio: f64,
    pub ratio_refined: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub p: f64,
    /// ‖N_*(u−φ)‖_p / (ε‖N_*u‖_p)
    pub c1: f64,
    /// ε²‖𝒞(∇φ)‖_p / ‖N_*u‖_p
    pub c2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsReport {
    pub eps: f64,
    pub red: usize,
    pub unstable_labels: usize,
    pub generation_cubes: usize,
    pub exits: usize,
    pub packing_red_bad: PackingCheck,
    pub packing_generation: PackingCheck,
    pub cells: usize,
    pub jumps: usize,
    pub tv: TotalVariation,
    pub alpha0: f64,
    pub c1: f64,
    pub c1_witness: usize,
    pub c1_local: f64,
    pub c2: f64,
    pub c2_witness: usize,
    pub lp: Vec<LpRow>,
    pub levelset: LevelSetReport,
    pub cell_errors: CellErrors,
    pub locality: f64,
    pub rings: Option<RingPacking>,
    /// Constant u only: φ ≡ u and every functional of u − φ and of ∇φ vanishes.
    pub exact: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub name: String,
    pub nstar_lp: Vec<(f64, f64)>,
    pub square_lp: Vec<(f64, f64)>,
    pub apertures: Vec<ApertureRow>,
    pub principal: PrincipalCheck,
    pub principal_size: usize,
    pub runs: Vec<EpsReport>,
    pub slope_red_bad: Option<f64>,
    pub slope_generation: Option<f64>,
    pub c2_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub samples: usize,
    pub lipschitz: f64,
    pub adr_lower: f64,
    pub adr_upper: f64,
    pub cubes: usize,
    pub c1: f64,
    pub big_c1: f64,
    pub duplicates_removed: usize,
    pub boxes: usize,
    pub facets: usize,
    pub regions: RegionReport,
    pub good: usize,
    pub bad: usize,
    pub regimes: usize,
    pub corona_packing: f64,
    /// Bounded E: every box meeting B(z₀, 2 diam E) lies in T of the root over z₀,
    /// ignoring boxes finer than that T reaches.
    pub top_box_covers: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub seed: u64,
    pub summary: Summary,
    pub fields: Vec<FieldReport>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report {
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }
}

/// Plot data written next to the report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    /// field, sample, x, y, N_*u, M_𝔻(N_*u), Su
    pub functionals: Vec<(String, usize, f64, f64, f64, f64, f64)>,
    /// field, ε, family, size, Λ, budget
    pub packing: Vec<(String, f64, String, usize, f64, f64)>,
    /// field, ε, jump part, gradient part, C₁, C₂
    pub tv: Vec<(String, f64, f64, f64, f64, f64)>,
    /// field, ε, facet, a, b, length, jump
    pub jumps: Vec<(String, f64, usize, u32, u32, f64, f64)>,
}

fn max_ratio(num: &[f64], den: &[f64]) -> (f64, usize) {
    let mut best = (0.0, 0);
    for (i, (&n, &d)) in num.iter().zip(den).enumerate() {
        let r = if n <= 0.0 {
            0.0
        } else if d > 0.0 {
            n / d
        } else {
            f64::INFINITY
        };
        if r > best.0 {
            best = (r, i);
        }
    }
    best
}

fn local_only(s: &Setting, q0: usize, gens: &GenerationForest, labels: &OscillationLabels) -> Result<Approximant> {
    let (piece, cells, assignment) = build_local(s, q0, gens, labels, 0)?;
    let mut box_cell = vec![None; s.wc.len()];
    for (b, c) in assignment {
        box_cell[b as usize] = Some(c);
    }
    Ok(Approximant { pieces: vec![piece], cells, box_cell })
}

/// Everything measured for one (field, ε).
#[allow(clippy::too_many_arguments)]
fn verify_eps(
    cfg: &RunConfig,
    s: &Setting,
    ctx: &FieldContext,
    art: &EpsArtifact,
    radii: &[f64],
    tower: Option<&Tower>,
    rng: &mut ChaCha8Rng,
    tables: &mut Tables,
    name: &str,
) -> Result<EpsReport> {
    let (e, cs, rc) = (s.e, s.cs, s.rc);
    let eps = art.eps;
    let b = &cfg.budgets;
    let phi = &art.phi;
    let mut red_bad = art.labels.members.clone();
    red_bad.extend(s.corona.bad());
    red_bad.sort_unstable();
    red_bad.dedup();
    let packing_red_bad = verify_eps_packing(cs, &red_bad, eps, b.c_pack);
    let packing_generation = verify_eps_packing(cs, &art.generations.members, eps, b.c_pack);

    let jumps = jump_table(s, phi);
    let all = BitSet::from_indices(s.wc.len(), 0..s.wc.len());
    let tv = total_variation(phi, &jumps, &ctx.boxes, &all);

    // pointwise error
    let err = error_box_sup(s, phi, None, crate::functionals::COARSE_GRID);
    let n_err = nontangential(&ctx.cone, rc, &err, false)?;
    let scaled: Vec<f64> = ctx.maximal.iter().map(|m| eps * m).collect();
    let (c1, c1_witness) = max_ratio(&n_err, &scaled);
    let mut c1_local = 0.0f64;
    for piece in &phi.pieces {
        let local = local_only(s, piece.q0, &art.generations, &art.labels)?;
        let err = error_box_sup(s, &local, Some(&rc.carleson[piece.q0]), crate::functionals::COARSE_GRID);
        let n = nontangential(&ctx.cone, rc, &err, false)?;
        c1_local = c1_local.max(max_ratio(&n, &scaled).0);
    }

    // Carleson functionals of ∇φ
    let alpha0 = cone_lemma_alpha(s, &art.generations);
    let wide = ConeIndex::new(e, cs, s.wc, alpha0, cfg.tail)?;
    let n_alpha = nontangential(&wide, rc, &ctx.boxes.sup, true)?;
    let rhs = hl_maximal(&e.samples, &e.weights, &dyadic_maximal(&cs.forest, &n_alpha), radii);
    let measure = tv_measure(s, phi, &jumps);
    let c_dyadic = carleson_dyadic(&measure, cs, rc, tower);
    let c_ball = carleson_ball(&measure, e, radii);
    let rhs_scaled: Vec<f64> = rhs.iter().map(|v| v / (eps * eps)).collect();
    let (c2, c2_witness) = max_ratio(&c_dyadic, &rhs_scaled);

    let lp = cfg
        .ps
        .iter()
        .map(|&p| {
            let nu = lp_norm(&ctx.nstar, &e.weights, p);
            let ratio = |v: f64, d: f64| {
                if v <= 0.0 {
                    0.0
                } else if d > 0.0 {
                    v / d
                } else {
                    f64::INFINITY
                }
            };
            LpRow {
                p,
                c1: ratio(lp_norm(&n_err, &e.weights, p), eps * nu),
                c2: ratio(lp_norm(&c_ball, &e.weights, p), nu / (eps * eps)),
            }
        })
        .collect();
    let a1_grid = [1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0];
    let levelset = compare_levelsets(&c_ball, &c_dyadic, &e.weights, &a1_grid, (b.level_a1, b.level_a2), &cfg.ps);

    let cell_errors = cell_errors(phi, &ctx.boxes, &art.labels, &ctx.numbers);

    // TV over (T_{Q'} ∩ T_{Q1}) ∖ T_{Q2} against ε⁻² ∫_{2Δ_Q} N_*u
    let ball_budget = |q: usize| {
        let c = &cs.cubes[q];
        let r = 2.0 * cs.big_c1 * c.side;
        e.ball_members(c.center_point, r).iter().map(|&m| e.weights[m as usize] * ctx.nstar[m as usize]).sum::<f64>()
            / (eps * eps)
    };
    let ids: Vec<usize> = (0..cs.len()).collect();
    let mut locality = 0.0f64;
    for _ in 0..cfg.locality_triples {
        let t: Vec<usize> = ids.choose_multiple(rng, 3).copied().collect();
        if t.len() < 3 {
            break;
        }
        let mut w = rc.carleson[t[0]].clone();
        w.intersect_with(&rc.carleson[t[1]]);
        w.difference_with(&rc.carleson[t[2]]);
        let v = total_variation(phi, &jumps, &ctx.boxes, &w).total();
        if v > 0.0 {
            let budget = ball_budget(t[0]).min(ball_budget(t[1]));
            locality = locality.max(if budget > 0.0 { v / budget } else { f64::INFINITY });
        }
    }

    let rings = match cfg.global_mode(e) {
        GlobalMode::Rings { gamma0, rings } => Some(ring_packing(s, &ring_chain(cs, gamma0, rings)?, 2.0)),
        GlobalMode::Bounded => None,
    };

    let exact = ctx.u.is_constant().then(|| {
        let c = ctx.u.eval([0.0, 1.0]);
        phi.cells.iter().all(|cell| matches!(cell.rule, Rule::U) || cell.rule == Rule::Const(c))
            && jumps.is_empty()
            && tv.total() == 0.0
            && n_err.iter().all(|&v| v == 0.0)
            && c_dyadic.iter().all(|&v| v == 0.0)
            && c_ball.iter().all(|&v| v == 0.0)
    });

    tables.tv.push((name.to_string(), eps, tv.jumps, tv.gradient, c1, c2));
    tables.packing.push((
        name.into(),
        eps,
        "red_bad".into(),
        packing_red_bad.size,
        packing_red_bad.lambda,
        packing_red_bad.budget,
    ));
    tables.packing.push((
        name.into(),
        eps,
        "generation".into(),
        packing_generation.size,
        packing_generation.lambda,
        packing_generation.budget,
    ));
    for j in &jumps {
        tables.jumps.push((name.into(), eps, j.facet, j.a, j.b, j.length, j.mass));
    }

    Ok(EpsReport {
        eps,
        red: art.labels.members.len(),
        unstable_labels: art.labels.unstable.len(),
        generation_cubes: art.generations.members.len(),
        exits: art.generations.exits.len(),
        packing_red_bad,
        packing_generation,
        cells: phi.cells.len(),
        jumps: jumps.len(),
        tv,
        alpha0,
        c1,
        c1_witness,
        c1_local,
        c2,
        c2_witness,
        lp,
        levelset,
        cell_errors,
        locality,
        rings,
        exact,
    })
}

fn field_checks(cfg: &RunConfig, f: &FieldReport, out: &mut Vec<Check>) {
    let b = &cfg.budgets;
    let n = &f.name;
    out.push(Check {
        name: format!("{n}/principal"),
        value: f.principal.lambda,
        budget: f.principal.budget,
        pass: f.principal.pass,
    });
    for a in f.apertures.iter().filter(|a| a.alpha == b.aperture_alpha) {
        out.push(Check {
            name: format!("{n}/aperture/p={}", a.p),
            value: a.ratio,
            budget: b.aperture_k,
            pass: a.ratio >= 1.0 - 1e-12 && a.ratio <= b.aperture_k,
        });
        out.push(Check::at_most(
            format!("{n}/aperture_refined/p={}", a.p),
            (a.ratio_refined / a.ratio - 1.0).abs(),
            b.aperture_refine,
        ));
    }
    for r in &f.runs {
        let tag = format!("{n}/eps={}", r.eps);
        out.push(Check::at_most(format!("{tag}/packing_red_bad"), r.packing_red_bad.lambda, r.packing_red_bad.budget));
        out.push(Check::at_most(
            format!("{tag}/packing_generation"),
            r.packing_generation.lambda,
            r.packing_generation.budget,
        ));
        out.push(Check::at_most(format!("{tag}/c1"), r.c1, b.c1));
        out.push(Check::at_most(format!("{tag}/c1_local"), r.c1_local, b.c1_local));
        out.push(Check::at_most(format!("{tag}/c2"), r.c2, b.c2));
        for l in &r.lp {
            out.push(Check::at_most(format!("{tag}/lp_c1/p={}", l.p), l.c1, b.c1));
            out.push(Check::at_most(format!("{tag}/lp_c2/p={}", l.p), l.c2, b.c2));
        }
        out.push(Check {
            name: format!("{tag}/levelset"),
            value: r.levelset.a2,
            budget: b.level_a2,
            pass: r.levelset.pass,
        });
        for l in &r.levelset.lp {
            out.push(Check {
                name: format!("{tag}/levelset_lp/p={}", l.p),
                value: l.lhs,
                budget: l.constant * l.rhs,
                pass: l.holds,
            });
        }
        out.push(Check::at_most(format!("{tag}/blue_cells"), r.cell_errors.blue_vs_osc, 1.0));
        out.push(Check::at_most(format!("{tag}/locality"), r.locality, b.locality));
        if let Some(rp) = &r.rings {
            out.push(Check::at_most(format!("{tag}/ring_overlap"), rp.ball_overlap as f64, b.ring_overlap));
            out.push(Check::at_most(format!("{tag}/ring_packing"), rp.ball_packing, b.ring_packing));
        }
        if let Some(x) = r.exact {
            out.push(Check { name: format!("{tag}/exact"), value: r.tv.total(), budget: 0.0, pass: x });
        }
    }
    if let (Some(lo), Some(hi)) =
        (f.runs.iter().min_by(|a, b| a.eps.total_cmp(&b.eps)), f.runs.iter().max_by(|a, b| a.eps.total_cmp(&b.eps)))
    {
        if hi.eps > lo.eps {
            let allowed = b.eps_slack * (hi.eps / lo.eps).powi(2);
            let ratio = |x: f64, y: f64| {
                if y > 0.0 {
                    x / y
                } else if x > 0.0 {
                    f64::INFINITY
                } else {
                    1.0
                }
            };
            out.push(Check::at_most(
                format!("{n}/eps_scaling_red_bad"),
                ratio(lo.packing_red_bad.lambda, hi.packing_red_bad.lambda),
                allowed,
            ));
            out.push(Check::at_most(
                format!("{n}/eps_scaling_generation"),
                ratio(lo.packing_generation.lambda, hi.packing_generation.lambda),
                allowed,
            ));
            out.push(Check::at_most(format!("{n}/c2_spread"), f.c2_spread, b.c2_spread));
        }
    }
}

fn top_box_covers(e: &BoundarySet, cs: &CubeSystem, d: &Decomposition) -> Option<bool> {
    let diam = e.diameter?;
    let z = e.samples[cs.z0];
    let root = cs.roots().into_iter().find(|&q| cs.members(q).binary_search(&(cs.z0 as u32)).is_ok())?;
    let t = &d.regions.carleson[root];
    // boxes finer than every region are below the grid, not outside T
    let finest = t.iter().map(|b| d.whitney.boxes[b].side).fold(f64::INFINITY, f64::min);
    Some(d.whitney.boxes.iter().enumerate().all(|(b, bx)| {
        let (lo, hi) = (bx.lo, bx.hi());
        let near = [z[0].clamp(lo[0], hi[0]), z[1].clamp(lo[1], hi[1])];
        bx.side < finest || dist(near, z) >= 2.0 * diam || t.contains(b)
    }))
}

/// Measures every field at every ε and assembles the report.
pub fn verify(
    cfg: &RunConfig,
    e: &BoundarySet,
    grid: &Grid,
    d: &Decomposition,
    artifacts: &[FieldArtifact],
) -> Result<(Report, Tables)> {
    let cs = &grid.cubes;
    let mut tables = Tables::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let extent = match e.diameter {
        Some(diam) => 2.0 * diam,
        None => e.spec.window[1] - e.spec.window[0],
    };
    let radii = log_radii(2.0 * e.resolution(), extent, 4);
    let tower = Tower::new(e, cs, &d.whitney, &d.regions);
    let mut fields = Vec::new();
    let mut checks = Vec::new();
    for (nf, art) in cfg.fields.iter().zip(artifacts) {
        if nf.name != art.name {
            return Err(Error::Invalid(format!("artifact for {} does not match field {}", art.name, nf.name)));
        }
        let ctx = field_context(cfg, e, cs, d, &nf.field)?;
        let s = setting(e, cs, d, &ctx.u);
        let sq = square_function(&ctx.cone, &d.regions, &ctx.boxes.grad_sq);
        for (x, p) in e.samples.iter().enumerate() {
            tables.functionals.push((nf.name.clone(), x, p[0], p[1], ctx.nstar[x], ctx.maximal[x], sq[x]));
        }
        let mut apertures = Vec::new();
        let n_fine = nontangential(&ctx.cone, &d.regions, &ctx.boxes.sup_fine, false)?;
        for &alpha in &cfg.alphas {
            let wide = ConeIndex::new(e, cs, &d.whitney, alpha, cfg.tail)?;
            let na = nontangential(&wide, &d.regions, &ctx.boxes.sup, true)?;
            let na_fine = nontangential(&wide, &d.regions, &ctx.boxes.sup_fine, true)?;
            for &p in &cfg.ps {
                apertures.push(ApertureRow {
                    alpha,
                    p,
                    ratio: compare_apertures(&ctx.nstar, &na, &e.weights, p),
                    ratio_refined: compare_apertures(&n_fine, &na_fine, &e.weights, p),
                });
            }
        }
        let fam = principal_cubes(cs, &ctx.numbers, &cs.roots());
        let principal = verify_principal_packing(cs, &fam, &ctx.numbers, cfg.budgets.principal);
        tables.packing.push((
            nf.name.clone(),
            0.0,
            "principal".into(),
            fam.members.len(),
            principal.lambda,
            principal.budget,
        ));
        let mut runs = Vec::new();
        for a in &art.runs {
            runs.push(verify_eps(cfg, &s, &ctx, a, &radii, tower.as_ref(), &mut rng, &mut tables, &nf.name)?);
        }
        let eps: Vec<f64> = runs.iter().map(|r| r.eps).collect();
        let lam_rb: Vec<f64> = runs.iter().map(|r| r.packing_red_bad.lambda).collect();
        let lam_g: Vec<f64> = runs.iter().map(|r| r.packing_generation.lambda).collect();
        let c2s: Vec<f64> = runs.iter().map(|r| r.c2).filter(|&c| c > 0.0).collect();
        let c2_spread = if c2s.is_empty() {
            1.0
        } else {
            c2s.iter().copied().fold(0.0, f64::max) / c2s.iter().copied().fold(f64::INFINITY, f64::min)
        };
        let report = FieldReport {
            name: nf.name.clone(),
            nstar_lp: cfg.ps.iter().map(|&p| (p, lp_norm(&ctx.nstar, &e.weights, p))).collect(),
            square_lp: cfg.ps.iter().map(|&p| (p, lp_norm(&sq, &e.weights, p))).collect(),
            apertures,
            principal_size: fam.members.len(),
            principal,
            runs,
            slope_red_bad: scaling_slope(&eps, &lam_rb),
            slope_generation: scaling_slope(&eps, &lam_g),
            c2_spread,
        };
        field_checks(cfg, &report, &mut checks);
        fields.push(report);
    }
    let summary = Summary {
        samples: e.len(),
        lipschitz: e.lipschitz,
        adr_lower: grid.adr.lower_constant,
        adr_upper: grid.adr.upper_constant,
        cubes: cs.len(),
        c1: cs.c1,
        big_c1: cs.big_c1,
        duplicates_removed: cs.duplicates_removed,
        boxes: d.whitney.len(),
        facets: d.whitney.facets.len(),
        regions: d.regions.report.clone(),
        good: d.corona.good.iter().filter(|&&g| g).count(),
        bad: d.corona.bad().len(),
        regimes: d.corona.regimes.len(),
        corona_packing: d.corona.packing,
        top_box_covers: top_box_covers(e, cs, d),
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok((Report { version: ARTIFACT_VERSION, seed: cfg.seed, summary, fields, checks, pass }, tables))
}

/// The whole pipeline in one call.
pub fn run(cfg: &RunConfig) -> Result<(Report, Tables)> {
    let e = boundary(cfg)?;
    let grid = build_grid(cfg, &e)?;
    let d = decompose(cfg, &e, &grid.cubes)?;
    let arts = approximate(cfg, &e, &grid.cubes, &d)?;
    verify(cfg, &e, &grid, &d, &arts)
}
