//! Stopping-time families: principal cubes 𝒫, large-oscillation cubes ℛ and
//! generation cubes G*, with their packing certificates.
//!
//! All thresholds are strict: a cube stops only when the quantity exceeds the
//! bound, never on equality.

use serde::{Deserialize, Serialize};

use crate::carleson::{indicator, packing_constant};
use crate::dyadic::CubeSystem;
use crate::functionals::BoxField;
use crate::geometry::BoundarySet;
use crate::harmonic::{box_integral, HarmonicField};
use crate::whitney::{CoronaDecomposition, RegionComplex, WhitneyComplex};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalFamily {
    /// ℐ
    pub initial: Vec<usize>,
    /// 𝒫 in increasing id order.
    pub members: Vec<usize>,
    pub is_member: Vec<bool>,
    /// π_𝒫: smallest 𝒫-cube containing each cube.
    pub projection: Vec<usize>,
}

/// Iterated stopping from ℐ: below a principal cube P, the maximal cubes R
/// with M(R) > 2M(P) become principal.
pub fn principal_cubes(cs: &CubeSystem, numbers: &[f64], initial: &[usize]) -> PrincipalFamily {
    let n = cs.len();
    let mut is_member = vec![false; n];
    for &q in initial {
        is_member[q] = true;
    }
    let mut projection = vec![usize::MAX; n];
    // ids are ordered parents first, so one sweep sees each parent's
    // projection before its children
    for q in 0..n {
        let current = match cs.cubes[q].parent {
            None => q,
            Some(p) => projection[p],
        };
        if current == q || is_member[q] || numbers[q] > 2.0 * numbers[current] {
            is_member[q] = true;
            projection[q] = q;
        } else {
            projection[q] = current;
        }
    }
    let members = (0..n).filter(|&q| is_member[q]).collect();
    PrincipalFamily { initial: initial.to_vec(), members, is_member, projection }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalCheck {
    pub lambda: f64,
    /// Packing constant of ℐ.
    pub c_init: f64,
    pub budget: f64,
    /// max over P ∈ 𝒫 and k ≥ 1 of 2^k Σ_{R∈𝒫_P^k} σ(R)/σ(P)
    pub worst_level_ratio: f64,
    /// M(Q) ≤ 2M(π_𝒫 Q) for every Q ∉ 𝒫
    pub doubling_ok: bool,
    pub pass: bool,
}

/// Packing of 𝒫 against `budget_factor · C_ℐ`, the per-level geometric decay
/// and the doubling bound off 𝒫.
pub fn verify_principal_packing(
    cs: &CubeSystem,
    fam: &PrincipalFamily,
    numbers: &[f64],
    budget_factor: f64,
) -> PrincipalCheck {
    let n = cs.len();
    let lambda = packing_constant(&cs.forest, &fam.is_member).lambda;
    let c_init = packing_constant(&cs.forest, &indicator(n, &fam.initial)).lambda;
    // 𝒫-depth of each principal cube below each principal ancestor
    let mut worst = 0.0f64;
    for &p in &fam.members {
        let mut level_sum: Vec<f64> = Vec::new();
        for q in cs.forest.subtree(p) {
            if q == p || !fam.is_member[q] {
                continue;
            }
            let mut k = 0usize;
            let mut a = Some(q);
            while let Some(x) = a {
                if x == p {
                    break;
                }
                if fam.is_member[x] {
                    k += 1;
                }
                a = cs.cubes[x].parent;
            }
            if level_sum.len() < k {
                level_sum.resize(k, 0.0);
            }
            level_sum[k - 1] += cs.cubes[q].measure;
        }
        for (i, s) in level_sum.iter().enumerate() {
            worst = worst.max(2f64.powi(i as i32 + 1) * s / cs.cubes[p].measure);
        }
    }
    let doubling_ok = (0..n).all(|q| fam.is_member[q] || numbers[q] <= 2.0 * numbers[fam.projection[q]]);
    let budget = budget_factor * c_init;
    PrincipalCheck {
        lambda,
        c_init,
        budget,
        worst_level_ratio: worst,
        doubling_ok,
        pass: lambda <= budget && worst <= 1.0 + 1e-12 && doubling_ok,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationLabels {
    pub eps: f64,
    /// osc of u per cube and component (coarse grid, refined grid)
    pub osc: Vec<Vec<f64>>,
    pub osc_fine: Vec<Vec<f64>>,
    pub red: Vec<Vec<bool>>,
    /// ℛ in increasing id order.
    pub members: Vec<usize>,
    pub is_member: Vec<bool>,
    /// Cubes whose label would flip under the refined grid.
    pub unstable: Vec<usize>,
}

impl OscillationLabels {
    pub fn is_red(&self, q: usize, comp: usize) -> bool {
        self.red[q][comp]
    }
}

/// ℛ: cubes with a component of oscillation above εM_𝔻(N_*u)(Q).
pub fn oscillation_cubes(rc: &RegionComplex, field: &BoxField, eps: f64, numbers: &[f64]) -> OscillationLabels {
    let n = rc.regions.len();
    let mut osc = Vec::with_capacity(n);
    let mut osc_fine = Vec::with_capacity(n);
    let mut red = Vec::with_capacity(n);
    let mut is_member = vec![false; n];
    let mut unstable = Vec::new();
    for (q, r) in rc.regions.iter().enumerate() {
        let t = eps * numbers[q];
        let range = |lo: &[f64], hi: &[f64], comp: &[u32]| {
            let a = comp.iter().map(|&b| lo[b as usize]).fold(f64::INFINITY, f64::min);
            let b = comp.iter().map(|&b| hi[b as usize]).fold(f64::NEG_INFINITY, f64::max);
            b - a
        };
        let o: Vec<f64> = r.components.iter().map(|c| range(&field.min, &field.max, c)).collect();
        let of: Vec<f64> = r.components.iter().map(|c| range(&field.min_fine, &field.max_fine, c)).collect();
        let rd: Vec<bool> = o.iter().map(|&v| v > t).collect();
        if rd.iter().zip(&of).any(|(&r, &v)| r != (v > t)) {
            unstable.push(q);
        }
        is_member[q] = rd.iter().any(|&x| x);
        osc.push(o);
        osc_fine.push(of);
        red.push(rd);
    }
    let members = (0..n).filter(|&q| is_member[q]).collect();
    OscillationLabels { eps, osc, osc_fine, red, members, is_member, unstable }
}

/// Largest (osc_{U_R^+} u)² ℓ(R) / ∬_{U_R^+} |∇u|² δ over good red cubes
/// (and likewise for U_R^-). The integral runs over the unfattened boxes, so
/// the constant is an upper estimate of the one for Û_R^±.
pub fn oscillation_square_constant(
    u: &HarmonicField,
    e: &BoundarySet,
    cs: &CubeSystem,
    wc: &WhitneyComplex,
    rc: &RegionComplex,
    corona: &CoronaDecomposition,
    labels: &OscillationLabels,
) -> f64 {
    use rayon::prelude::*;
    let weighted: Vec<f64> = wc
        .boxes
        .par_iter()
        .map(|b| {
            box_integral(b.lo, b.hi(), 3, |p| {
                let g = u.grad(p);
                (g[0] * g[0] + g[1] * g[1]) * e.distance(p)
            })
        })
        .collect();
    let mut worst = 0.0f64;
    for q in 0..cs.len() {
        if !corona.good[q] || !labels.is_member[q] {
            continue;
        }
        let r = &rc.regions[q];
        for c in [r.plus, r.minus].into_iter().flatten() {
            let o = labels.osc[q][c];
            let rhs: f64 = r.components[c].iter().map(|&b| weighted[b as usize]).sum::<f64>() / cs.cubes[q].side;
            if o > 0.0 {
                worst = worst.max(if rhs > 0.0 { o * o / rhs } else { f64::INFINITY });
            }
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Top,
    PlusDrift,
    MinusDrift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationForest {
    pub eps: f64,
    /// G* in increasing id order.
    pub members: Vec<usize>,
    pub is_member: Vec<bool>,
    /// Generation index k of each G-cube within its regime.
    pub generation: Vec<Option<u32>>,
    /// Top of the subregime 𝒮′ holding each good cube.
    pub subregime_of: Vec<Option<usize>>,
    /// Regime of each G-cube.
    pub regime: Vec<Option<usize>>,
    pub reason: Vec<Option<StopReason>>,
    /// Children of regime members that leave the regime.
    pub exits: Vec<usize>,
}

impl GenerationForest {
    /// Members of 𝒮′(Q) for a G-cube Q, increasing ids.
    pub fn subregime(&self, q: usize) -> Vec<usize> {
        (0..self.subregime_of.len()).filter(|&x| self.subregime_of[x] == Some(q)).collect()
    }
}

/// Drift between `u` at the Y points of `q` and of `q0`.
pub fn drift(u: &HarmonicField, rc: &RegionComplex, q: usize, q0: usize) -> Option<(f64, f64)> {
    let (a, b) = (rc.y_plus[q]?, rc.y_minus[q]?);
    let (c, d) = (rc.y_plus[q0]?, rc.y_minus[q0]?);
    Some(((u.eval(a) - u.eval(c)).abs(), (u.eval(b) - u.eval(d)).abs()))
}

/// G*: inside each regime, a cube starts a new generation when u at its Y
/// points drifts by more than εM(Q) from the values at the current
/// generation top. Leaving the regime (including demoted cubes) stops the
/// descent without adding a cube.
pub fn generation_cubes(
    u: &HarmonicField,
    cs: &CubeSystem,
    corona: &CoronaDecomposition,
    rc: &RegionComplex,
    eps: f64,
    numbers: &[f64],
) -> GenerationForest {
    let n = cs.len();
    let mut f = GenerationForest {
        eps,
        members: Vec::new(),
        is_member: vec![false; n],
        generation: vec![None; n],
        subregime_of: vec![None; n],
        regime: vec![None; n],
        reason: vec![None; n],
        exits: Vec::new(),
    };
    for (ri, reg) in corona.regimes.iter().enumerate() {
        for &q in &reg.members {
            let (top, gen, why) = if q == reg.top {
                (q, 0, Some(StopReason::Top))
            } else {
                let p = cs.cubes[q].parent.expect("non-top regime member has a parent");
                let q0 = f.subregime_of[p].expect("parent lies in the same regime");
                let t = eps * numbers[q];
                match drift(u, rc, q, q0) {
                    Some((dp, _)) if dp > t => (q, f.generation[q0].unwrap() + 1, Some(StopReason::PlusDrift)),
                    Some((_, dm)) if dm > t => (q, f.generation[q0].unwrap() + 1, Some(StopReason::MinusDrift)),
                    _ => (q0, 0, None),
                }
            };
            f.subregime_of[q] = Some(top);
            if top == q {
                f.is_member[q] = true;
                f.generation[q] = Some(gen);
                f.regime[q] = Some(ri);
                f.reason[q] = why;
            }
            for &c in &cs.cubes[q].children {
                if corona.regime_of[c] != Some(ri) {
                    f.exits.push(c);
                }
            }
        }
    }
    f.members = (0..n).filter(|&q| f.is_member[q]).collect();
    f.exits.sort_unstable();
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingCheck {
    pub eps: f64,
    pub size: usize,
    pub lambda: f64,
    pub budget: f64,
    pub pass: bool,
}

/// Λ(collection) against `c_pack / ε²`.
pub fn verify_eps_packing(cs: &CubeSystem, members: &[usize], eps: f64, c_pack: f64) -> PackingCheck {
    let lambda = packing_constant(&cs.forest, &indicator(cs.len(), members)).lambda;
    let budget = c_pack / (eps * eps);
    PackingCheck { eps, size: members.len(), lambda, budget, pass: lambda <= budget }
}

/// Least-squares slope of log Λ against log(1/ε); `None` when fewer than two
/// points have Λ > 0.
pub fn scaling_slope(eps: &[f64], lambda: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        eps.iter().zip(lambda).filter(|(_, &l)| l > 0.0).map(|(&e, &l)| ((1.0 / e).ln(), l.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(if sxx > 0.0 { sxy / sxx } else { 0.0 })
}
