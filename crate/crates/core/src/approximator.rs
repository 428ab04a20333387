//! The approximant φ: cells A_k^± over subregimes, cells V_k^i over the
//! oscillating and bad cubes, per-cell value rules, global gluing, the facet
//! jump table and total variation.
//!
//! Whitney regions are unions of whole boxes, so every cell is a set of box
//! ids and the partition is exact at box granularity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitset::BitSet;
use crate::carleson::{indicator, packing_constant};
use crate::dyadic::CubeSystem;
use crate::functionals::{BoxField, BoxMeasure};
use crate::geometry::{dist, BoundarySet, Point};
use crate::harmonic::{gauss_legendre, HarmonicField};
use crate::stopping::{GenerationForest, OscillationLabels};
use crate::whitney::{CoronaDecomposition, RegionComplex, WhitneyComplex};
use crate::{Error, Result};

/// Value rule of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Rule {
    Const(f64),
    /// φ = u
    U,
}

impl Rule {
    pub fn value(&self, u: &HarmonicField, p: Point) -> f64 {
        match *self {
            Rule::Const(c) => c,
            Rule::U => u.eval(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CellKind {
    /// A_k^± for the k-th good cube
    A { k: usize, plus: bool },
    /// V_k^i for the k-th cube of ℛ ∪ ℬ
    V { k: usize, comp: usize, red: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub piece: usize,
    pub kind: CellKind,
    /// Q_k or Q(k)
    pub cube: usize,
    pub rule: Rule,
    pub boxes: Vec<u32>,
}

/// One local construction on T_{Q₀}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub q0: usize,
    /// Q_1, Q_2, ... with non-increasing side.
    pub family: Vec<usize>,
    /// Q(1), Q(2), ...: cubes of (ℛ ∪ ℬ) ∩ 𝔻_{Q₀} in id order.
    pub enumerated: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Approximant {
    pub pieces: Vec<Piece>,
    pub cells: Vec<Cell>,
    /// Cell of each box; boxes outside every piece follow φ = u.
    pub box_cell: Vec<Option<u32>>,
}

/// Inputs shared by the constructions.
pub struct Setting<'a> {
    pub e: &'a BoundarySet,
    pub cs: &'a CubeSystem,
    pub wc: &'a WhitneyComplex,
    pub rc: &'a RegionComplex,
    pub corona: &'a CoronaDecomposition,
    pub u: &'a HarmonicField,
}

/// Q₁ and then the subregime tops inside 𝔻_{Q₀}, by (generation, id).
/// When Q₀ is good, Q₁ is the top of the subregime holding Q₀; when Q₀ is
/// bad, the ordering starts with its largest good subcube.
pub fn order_good_cubes(cs: &CubeSystem, q0: usize, gens: &GenerationForest) -> Vec<usize> {
    let inside: Vec<usize> = cs.forest.subtree(q0);
    let mut fam: Vec<usize> = inside.iter().copied().filter(|&q| gens.is_member[q] && q != q0).collect();
    if let Some(top) = gens.subregime_of[q0] {
        fam.push(top);
    }
    fam.sort_by_key(|&q| (cs.cubes[q].k, q));
    fam.dedup();
    fam
}

/// Local approximant on T_{Q₀}.
pub fn build_local(
    s: &Setting,
    q0: usize,
    gens: &GenerationForest,
    osc: &OscillationLabels,
    piece: usize,
) -> Result<(Piece, Vec<Cell>, Vec<(u32, u32)>)> {
    let cs = s.cs;
    let rc = s.rc;
    let nb = s.wc.len();
    let domain = &rc.carleson[q0];
    let mut owner: Vec<u32> = vec![u32::MAX; nb];
    let mut cells: Vec<Cell> = Vec::new();
    let mut sub = cs.forest.subtree(q0);
    sub.sort_unstable();

    let enumerated: Vec<usize> = sub.iter().copied().filter(|&q| osc.is_member[q] || !s.corona.good[q]).collect();
    for (k, &q) in enumerated.iter().enumerate() {
        let r = &rc.regions[q];
        for (ci, comp) in r.components.iter().enumerate() {
            let red = osc.red[q][ci];
            let rule = if red { Rule::U } else { Rule::Const(s.u.eval(r.x_point(s.wc, ci))) };
            let id = cells.len() as u32;
            let boxes: Vec<u32> = comp.iter().copied().filter(|&b| owner[b as usize] == u32::MAX).collect();
            if boxes.is_empty() {
                continue;
            }
            for &b in &boxes {
                owner[b as usize] = id;
            }
            cells.push(Cell { piece, kind: CellKind::V { k, comp: ci, red }, cube: q, rule, boxes });
        }
    }

    let family = order_good_cubes(cs, q0, gens);
    let in_sub = indicator(cs.len(), &sub);
    for (k, &top) in family.iter().enumerate() {
        let members: Vec<usize> =
            sub.iter().copied().filter(|&q| gens.subregime_of[q] == Some(top) && in_sub[q]).collect();
        for plus in [true, false] {
            let y = if plus { rc.y_plus[top] } else { rc.y_minus[top] };
            let y = y.ok_or_else(|| Error::Internal(format!("good cube {top} lacks Y points")))?;
            let id = cells.len() as u32;
            let mut boxes = Vec::new();
            for &q in &members {
                let r = &rc.regions[q];
                let c = if plus { r.plus } else { r.minus };
                let Some(c) = c else { continue };
                for &b in &r.components[c] {
                    if owner[b as usize] == u32::MAX {
                        owner[b as usize] = id;
                        boxes.push(b);
                    }
                }
            }
            if boxes.is_empty() {
                continue;
            }
            boxes.sort_unstable();
            cells.push(Cell { piece, kind: CellKind::A { k, plus }, cube: top, rule: Rule::Const(s.u.eval(y)), boxes });
        }
    }
    let mut assignment = Vec::new();
    for b in domain.iter() {
        if owner[b] == u32::MAX {
            return Err(Error::Internal(format!("box {b} of T_Q0 left without a cell")));
        }
        assignment.push((b as u32, owner[b]));
    }
    if owner.iter().enumerate().any(|(b, &o)| o != u32::MAX && !domain.contains(b)) {
        return Err(Error::Internal("cell reaches outside T_Q0".into()));
    }
    Ok((Piece { q0, family, enumerated }, cells, assignment))
}

/// Gluing mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GlobalMode {
    /// φ = φ_{Q₀} on T_{Q₀} for each root Q₀, φ = u elsewhere.
    Bounded,
    /// Rings W_k = T_{Q_k} ∖ T_{Q_{k−1}} along a chain ending at the root,
    /// with ℓ(Q_{k+1}) = γ₀ ℓ(Q_k).
    Rings {
        #[serde(default = "default_gamma0")]
        gamma0: f64,
        #[serde(default = "default_rings")]
        rings: usize,
    },
}

fn default_gamma0() -> f64 {
    4.0
}
fn default_rings() -> usize {
    3
}

/// The ring chain Q_1 ⊊ … ⊊ Q_K (innermost first) around z₀.
pub fn ring_chain(cs: &CubeSystem, gamma0: f64, rings: usize) -> Result<Vec<usize>> {
    let step = gamma0.log2();
    if !(gamma0 > 1.0) || step.fract().abs() > 1e-12 {
        return Err(Error::Invalid(format!("gamma0 = {gamma0} must be a power of two above 1")));
    }
    if rings < 2 {
        return Err(Error::WindowTooSmall("at least two rings are needed".into()));
    }
    let step = step.round() as i32;
    let depth = step * (rings as i32 - 1);
    if cs.k_min + depth > cs.k_max {
        return Err(Error::WindowTooSmall(format!(
            "{rings} rings at gamma0 = {gamma0} need generation {} but the grid stops at {}",
            cs.k_min + depth,
            cs.k_max
        )));
    }
    let finest = *cs.containing_cubes(cs.z0).last().expect("every sample has a chain");
    (0..rings)
        .map(|i| {
            let g = cs.k_min + depth - step * i as i32;
            cs.ancestor_at_generation(finest, g)
                .ok_or_else(|| Error::WindowTooSmall(format!("no ring cube at generation {g}")))
        })
        .collect()
}

/// Builds the global φ: pieces are laid down in order and each box keeps the
/// first cell that claims it.
pub fn build_global(
    s: &Setting,
    gens: &GenerationForest,
    osc: &OscillationLabels,
    mode: &GlobalMode,
) -> Result<Approximant> {
    let mut tops = match mode {
        GlobalMode::Bounded => Vec::new(),
        GlobalMode::Rings { gamma0, rings } => ring_chain(s.cs, *gamma0, *rings)?,
    };
    for r in s.cs.roots() {
        if !tops.contains(&r) {
            tops.push(r);
        }
    }
    let nb = s.wc.len();
    let mut box_cell = vec![None; nb];
    let mut pieces = Vec::new();
    let mut cells: Vec<Cell> = Vec::new();
    for (i, &q0) in tops.iter().enumerate() {
        let (piece, local, assignment) = build_local(s, q0, gens, osc, i)?;
        let base = cells.len() as u32;
        let mut keep = vec![false; local.len()];
        let mut claimed = vec![Vec::new(); local.len()];
        for (b, c) in assignment {
            if box_cell[b as usize].is_none() {
                keep[c as usize] = true;
                claimed[c as usize].push(b);
            }
        }
        let mut remap = vec![u32::MAX; local.len()];
        let mut next = base;
        for (ci, mut cell) in local.into_iter().enumerate() {
            if !keep[ci] {
                continue;
            }
            cell.boxes = std::mem::take(&mut claimed[ci]);
            remap[ci] = next;
            next += 1;
            for &b in &cell.boxes {
                box_cell[b as usize] = Some(remap[ci]);
            }
            cells.push(cell);
        }
        pieces.push(piece);
    }
    Ok(Approximant { pieces, cells, box_cell })
}

impl Approximant {
    pub fn rule(&self, b: usize) -> Rule {
        self.box_cell[b].map_or(Rule::U, |c| self.cells[c as usize].rule)
    }

    /// φ(X). On the lower or left edge of a box whose neighbor across that
    /// edge follows a different rule, X lies on a cell facet and φ(X) = u(X).
    pub fn eval(&self, s: &Setting, p: Point) -> Result<f64> {
        let b = s.wc.locate(p).ok_or(Error::OutsideCells(p[0], p[1]))? as usize;
        let bx = &s.wc.boxes[b];
        let rule = self.rule(b);
        let tiny = 1e-9 * bx.side;
        for (on, q) in [(p[0] == bx.lo[0], [p[0] - tiny, p[1]]), (p[1] == bx.lo[1], [p[0], p[1] - tiny])] {
            if on {
                if let Some(o) = s.wc.locate_near(q, bx.level) {
                    if self.rule(o as usize) != rule {
                        return Ok(s.u.eval(p));
                    }
                }
            }
        }
        Ok(rule.value(s.u, p))
    }

    /// Slow path: scans every cell and box.
    pub fn eval_slow(&self, s: &Setting, p: Point) -> Result<f64> {
        for cell in &self.cells {
            for &b in &cell.boxes {
                if s.wc.boxes[b as usize].contains(p) {
                    return Ok(cell.rule.value(s.u, p));
                }
            }
        }
        if s.wc.boxes.iter().any(|b| b.contains(p)) {
            Ok(s.u.eval(p))
        } else {
            Err(Error::OutsideCells(p[0], p[1]))
        }
    }

    pub fn cells_of_piece(&self, piece: usize) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(move |c| c.piece == piece)
    }

    pub fn is_constant_everywhere(&self) -> bool {
        self.cells.iter().all(|c| matches!(c.rule, Rule::Const(_)))
    }
}

/// A facet across which φ jumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub facet: usize,
    pub a: u32,
    pub b: u32,
    pub length: f64,
    /// ∫_facet |φ_a − φ_b|
    pub mass: f64,
    /// Mass at the four Gauss points of the facet.
    pub atoms: [(Point, f64); 4],
}

/// Jump table over every facet of the complex.
pub fn jump_table(s: &Setting, phi: &Approximant) -> Vec<Jump> {
    let (xs, ws) = gauss_legendre(4);
    s.wc.facets
        .par_iter()
        .enumerate()
        .filter_map(|(fi, f)| {
            let (ra, rb) = (phi.rule(f.a as usize), phi.rule(f.b as usize));
            if ra == rb {
                return None;
            }
            let len = f.length();
            let mut atoms = [([0.0, 0.0], 0.0); 4];
            let mut mass = 0.0;
            for (i, (x, w)) in xs.iter().zip(ws).enumerate() {
                let p = f.point(0.5 * (x + 1.0));
                let m = 0.5 * w * len * (ra.value(s.u, p) - rb.value(s.u, p)).abs();
                atoms[i] = (p, m);
                mass += m;
            }
            if let (Rule::Const(a), Rule::Const(b)) = (ra, rb) {
                mass = (a - b).abs() * len;
            }
            (mass > 0.0).then_some(Jump { facet: fi, a: f.a, b: f.b, length: len, mass, atoms })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TotalVariation {
    pub jumps: f64,
    pub gradient: f64,
}

impl TotalVariation {
    pub fn total(&self) -> f64 {
        self.jumps + self.gradient
    }
}

/// |Dφ|(W) for a box set W: facet jumps with both sides in W plus ∫|∇u| over
/// boxes of W where φ = u.
pub fn total_variation(phi: &Approximant, jumps: &[Jump], field: &BoxField, w: &BitSet) -> TotalVariation {
    let j: f64 = jumps.iter().filter(|x| w.contains(x.a as usize) && w.contains(x.b as usize)).map(|x| x.mass).sum();
    let g: f64 = w.iter().filter(|&b| phi.rule(b) == Rule::U).map(|b| field.grad_abs[b]).sum();
    TotalVariation { jumps: j + 0.0, gradient: g + 0.0 }
}

/// |Dφ| as point masses for the Carleson functionals.
pub fn tv_measure(s: &Setting, phi: &Approximant, jumps: &[Jump]) -> BoxMeasure {
    let u_boxes: Vec<u32> = (0..s.wc.len() as u32).filter(|&b| phi.rule(b as usize) == Rule::U).collect();
    let mut m = BoxMeasure::from_density(s.wc, u_boxes, |p| {
        let g = s.u.grad(p);
        g[0].hypot(g[1])
    });
    for j in jumps {
        for &(p, w) in &j.atoms {
            m.push(p, w, j.a, j.b);
        }
    }
    m
}

/// Per box: sup of |u − φ| on a grid over I***, counting only points whose
/// box lies in `restrict` when given.
pub fn error_box_sup(s: &Setting, phi: &Approximant, restrict: Option<&BitSet>, n: usize) -> Vec<f64> {
    let fat = 1.0 + 3.0 * s.wc.tau;
    s.wc.boxes
        .par_iter()
        .map(|bx| {
            let (lo, hi) = bx.dilate(fat);
            let mut m = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let p = [
                        lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64,
                    ];
                    let Some(b) = s.wc.locate_near(p, bx.level) else { continue };
                    if restrict.is_some_and(|r| !r.contains(b as usize)) {
                        continue;
                    }
                    if let Rule::Const(c) = phi.rule(b as usize) {
                        m = m.max((s.u.eval(p) - c).abs());
                    }
                }
            }
            m
        })
        .collect()
}

/// Per-cell diagnostics: sup |u − φ| on each cell against its owner's
/// oscillation and against εM(owner).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellErrors {
    /// Largest sup|u−φ| / osc over blue V cells (≤ 1 on the grid).
    pub blue_vs_osc: f64,
    /// Largest sup|u−φ| / (εM(owner)) over constant cells.
    pub const_vs_eps: f64,
}

pub fn cell_errors(phi: &Approximant, field: &BoxField, osc: &OscillationLabels, numbers: &[f64]) -> CellErrors {
    let mut out = CellErrors { blue_vs_osc: 0.0, const_vs_eps: 0.0 };
    for c in &phi.cells {
        let Rule::Const(v) = c.rule else { continue };
        let err =
            c.boxes.iter().map(|&b| (field.max[b as usize] - v).max(v - field.min[b as usize])).fold(0.0, f64::max);
        if let CellKind::V { comp, .. } = c.kind {
            let o = osc.osc[c.cube][comp];
            out.blue_vs_osc = out.blue_vs_osc.max(if o > 0.0 {
                err / o
            } else if err > 0.0 {
                f64::INFINITY
            } else {
                0.0
            });
        }
        let t = osc.eps * numbers[c.cube];
        out.const_vs_eps = out.const_vs_eps.max(if t > 0.0 {
            err / t
        } else if err > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    out
}

/// Smallest aperture putting X_P^±, Y_P^± into Γ_α(x) for every x ∈ Q with
/// ℓ(Q) ≤ ℓ(P) and T_Q ∩ Ω_{𝒮′(P)} ≠ ∅, floored at 1. A cube A of the
/// generation of P (or of its parent, for Y points) sees P in its widened
/// cone iff dist(z_A, P) ≤ α C₁ ℓ(A).
pub fn cone_lemma_alpha(s: &Setting, gens: &GenerationForest) -> f64 {
    let cs = s.cs;
    let rc = s.rc;
    gens.members
        .par_iter()
        .map(|&p| {
            let omega = rc.sawtooth(&gens.subregime(p));
            let mut targets = vec![p];
            if let Some(par) = cs.cubes[p].parent {
                if !s.corona.is_top(p) {
                    targets.push(par);
                }
            }
            let mut worst = 1.0f64;
            for t in targets {
                let g = cs.cubes[t].k;
                for a in cs.generation(g) {
                    if rc.carleson[a].intersects(&omega) {
                        let z = cs.cubes[a].center_point;
                        let d = cs
                            .members(t)
                            .iter()
                            .map(|&m| dist(s.e.samples[m as usize], z))
                            .fold(f64::INFINITY, f64::min);
                        worst = worst.max(d / (cs.big_c1 * cs.cubes[a].side));
                    }
                }
            }
            worst
        })
        .reduce(|| 1.0, f64::max)
}

/// Ring packing: Λ of the ring cubes and the largest number of dilated balls
/// βΔ_{Q_i} through one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingPacking {
    pub cubes: Vec<usize>,
    pub lambda: f64,
    pub ball_overlap: usize,
    pub ball_packing: f64,
}

pub fn ring_packing(s: &Setting, cubes: &[usize], beta: f64) -> RingPacking {
    let cs = s.cs;
    let lambda = packing_constant(&cs.forest, &indicator(cs.len(), cubes)).lambda;
    let balls: Vec<(Point, f64)> =
        cubes.iter().map(|&q| (cs.cubes[q].center_point, beta * cs.big_c1 * cs.cubes[q].side)).collect();
    let overlap =
        s.e.samples.iter().map(|&x| balls.iter().filter(|(c, r)| dist(x, *c) <= *r).count()).max().unwrap_or(0);
    // Σ over balls inside a ball of their σ-mass, relative to the outer mass
    let mut packing = 0.0f64;
    for &(c, r) in &balls {
        let outer = s.e.surface_measure(c, r);
        if outer <= 0.0 {
            continue;
        }
        let inner: f64 = balls
            .iter()
            .filter(|(c2, r2)| dist(*c2, c) + r2 <= r * (1.0 + 1e-12))
            .map(|(c2, r2)| s.e.surface_measure(*c2, *r2))
            .sum();
        packing = packing.max(inner / outer);
    }
    RingPacking { cubes: cubes.to_vec(), lambda, ball_overlap: overlap, ball_packing: packing }
}
