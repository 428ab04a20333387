//! Cone functionals on the boundary samples: N_*, N_*^α, S, the Carleson
//! functionals 𝒞 and 𝒞_𝔻, the cube numbers M_𝔻(N_*u)(Q) and the two
//! comparison lemmas (level sets and apertures).
//!
//! Cones are unions of fattened Whitney regions over the containing chain of
//! a sample, so every sup reduces to per-box precomputation followed by
//! per-cube and per-chain maxima.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitset::BitSet;
use crate::carleson::cube_averages;
use crate::dyadic::CubeSystem;
use crate::geometry::{dist, BoundarySet, Point};
use crate::harmonic::{box_integral, HarmonicField};
use crate::whitney::{RegionComplex, WhitneyComplex};
use crate::{Error, Result};

/// Grid points per side for the coarse and refined box sups (step ℓ/8, ℓ/16).
pub const COARSE_GRID: usize = 9;
pub const FINE_GRID: usize = 17;

/// Max of `|f|` on an `n × n` grid over `[lo, hi]`.
pub fn grid_sup(lo: Point, hi: Point, n: usize, f: impl Fn(Point) -> f64) -> f64 {
    let mut m = 0.0f64;
    for i in 0..n {
        let x = lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64;
            m = m.max(f([x, y]).abs());
        }
    }
    m
}

fn grid_range(lo: Point, hi: Point, n: usize, f: impl Fn(Point) -> f64) -> (f64, f64) {
    let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let x = lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let v = f([x, lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64]);
            a = a.min(v);
            b = b.max(v);
        }
    }
    (a, b)
}

/// Per-box samples of a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxField {
    /// sup |u| over I*** on the coarse and refined grids
    pub sup: Vec<f64>,
    pub sup_fine: Vec<f64>,
    /// min / max of u over the closed box on the coarse and refined grids
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub min_fine: Vec<f64>,
    pub max_fine: Vec<f64>,
    /// ∫_I |∇u|² and ∫_I |∇u|
    pub grad_sq: Vec<f64>,
    pub grad_abs: Vec<f64>,
}

impl BoxField {
    pub fn compute(u: &HarmonicField, wc: &WhitneyComplex) -> Self {
        let fat = 1.0 + 3.0 * wc.tau;
        let rows: Vec<[f64; 8]> = wc
            .boxes
            .par_iter()
            .map(|b| {
                let (lo, hi) = b.dilate(fat);
                let s0 = grid_sup(lo, hi, COARSE_GRID, |p| u.eval(p));
                let s1 = grid_sup(lo, hi, FINE_GRID, |p| u.eval(p)).max(s0);
                let (mn, mx) = grid_range(b.lo, b.hi(), COARSE_GRID, |p| u.eval(p));
                let (fmn, fmx) = grid_range(b.lo, b.hi(), FINE_GRID, |p| u.eval(p));
                let g2 = box_integral(b.lo, b.hi(), 3, |p| {
                    let g = u.grad(p);
                    g[0] * g[0] + g[1] * g[1]
                });
                let g1 = box_integral(b.lo, b.hi(), 3, |p| {
                    let g = u.grad(p);
                    g[0].hypot(g[1])
                });
                [s0, s1, mn, mx, fmn.min(mn), fmx.max(mx), g2, g1]
            })
            .collect();
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
        BoxField {
            sup: col(0),
            sup_fine: col(1),
            min: col(2),
            max: col(3),
            min_fine: col(4),
            max_fine: col(5),
            grad_sq: col(6),
            grad_abs: col(7),
        }
    }
}

/// Max of a per-box quantity over each region U_Q (0 for empty regions).
pub fn region_max(rc: &RegionComplex, per_box: &[f64]) -> Vec<f64> {
    rc.regions.iter().map(|r| r.boxes.iter().map(|&b| per_box[b as usize]).fold(0.0, f64::max)).collect()
}

/// Cone structure per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeIndex {
    pub alpha: f64,
    /// Containing chain of each sample, coarsest first.
    pub chains: Vec<Vec<u32>>,
    /// Per cube Q: same-generation cubes P with αΔ_Q ∩ P ≠ ∅ (Q included).
    pub wide: Vec<Vec<u32>>,
    /// Bounded E: boxes outside B(z₀, C diam E), added to every cone.
    pub tail: Option<Vec<u32>>,
}

impl ConeIndex {
    pub fn new(e: &BoundarySet, cs: &CubeSystem, wc: &WhitneyComplex, alpha: f64, tail_factor: f64) -> Result<Self> {
        if alpha < 1.0 {
            return Err(Error::Invalid(format!("aperture {alpha} below 1")));
        }
        let chains: Vec<Vec<u32>> =
            (0..e.len()).map(|a| cs.containing_cubes(a).into_iter().map(|q| q as u32).collect()).collect();
        let wide = (0..cs.len())
            .into_par_iter()
            .map(|q| {
                let c = &cs.cubes[q];
                let r = alpha * cs.big_c1 * c.side;
                let mut v: Vec<u32> = cs
                    .generation(c.k)
                    .into_iter()
                    .filter(|&p| {
                        let bb = cs.cubes[p].bbox;
                        let dx = (bb[0] - c.center_point[0]).max(c.center_point[0] - bb[2]).max(0.0);
                        let dy = (bb[1] - c.center_point[1]).max(c.center_point[1] - bb[3]).max(0.0);
                        p == q
                            || (dx.hypot(dy) <= r
                                && cs.members(p).iter().any(|&m| dist(e.samples[m as usize], c.center_point) <= r))
                    })
                    .map(|p| p as u32)
                    .collect();
                v.sort_unstable();
                v
            })
            .collect();
        let tail = e.diameter.map(|d| {
            let z = e.samples[cs.z0];
            (0..wc.len() as u32).filter(|&b| dist(wc.boxes[b as usize].center(), z) > tail_factor * d).collect()
        });
        Ok(ConeIndex { alpha, chains, wide, tail })
    }

    /// Boxes of Γ(x) (or Γ_α(x) when `wide`), deduplicated and sorted.
    pub fn cone_boxes(&self, rc: &RegionComplex, x: usize, wide: bool) -> Vec<u32> {
        let mut v = Vec::new();
        for &q in &self.chains[x] {
            if wide {
                for &p in &self.wide[q as usize] {
                    v.extend_from_slice(&rc.regions[p as usize].boxes);
                }
            } else {
                v.extend_from_slice(&rc.regions[q as usize].boxes);
            }
        }
        if let Some(t) = &self.tail {
            v.extend_from_slice(t);
        }
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// N_* (or N_*^α) at every sample from per-box sups.
pub fn nontangential(ci: &ConeIndex, rc: &RegionComplex, per_box: &[f64], wide: bool) -> Result<Vec<f64>> {
    let rmax = region_max(rc, per_box);
    let per_cube: Vec<f64> = if wide {
        ci.wide.iter().map(|ps| ps.iter().map(|&p| rmax[p as usize]).fold(0.0, f64::max)).collect()
    } else {
        rmax
    };
    let tail = ci.tail.as_ref().map_or(0.0, |t| t.iter().map(|&b| per_box[b as usize]).fold(0.0, f64::max));
    let mut out = Vec::with_capacity(ci.chains.len());
    for (x, chain) in ci.chains.iter().enumerate() {
        let nonempty = chain.iter().any(|&q| !rc.regions[q as usize].boxes.is_empty());
        if !nonempty {
            return Err(Error::WindowTooSmall(format!("empty cone at sample {x}")));
        }
        out.push(chain.iter().map(|&q| per_cube[q as usize]).fold(tail, f64::max));
    }
    Ok(out)
}

/// Square function (∫_{Γ(x)} |∇u|²)^{1/2} over the union of cone boxes.
pub fn square_function(ci: &ConeIndex, rc: &RegionComplex, grad_sq: &[f64]) -> Vec<f64> {
    (0..ci.chains.len())
        .into_par_iter()
        .map(|x| ci.cone_boxes(rc, x, false).iter().map(|&b| grad_sq[b as usize]).sum::<f64>().sqrt())
        .collect()
}

/// Largest dist(x, Y)/δ(Y) over box centers Y of the (wide) cones.
pub fn cone_aperture(ci: &ConeIndex, rc: &RegionComplex, wc: &WhitneyComplex, e: &BoundarySet, wide: bool) -> f64 {
    let delta: Vec<f64> = wc.boxes.par_iter().map(|b| e.distance(b.center())).collect();
    (0..ci.chains.len())
        .into_par_iter()
        .map(|x| {
            let mut v = Vec::new();
            for &q in &ci.chains[x] {
                let ps: &[u32] = if wide { &ci.wide[q as usize] } else { std::slice::from_ref(&q) };
                for &p in ps {
                    v.extend_from_slice(&rc.regions[p as usize].boxes);
                }
            }
            v.iter().map(|&b| dist(e.samples[x], wc.boxes[b as usize].center()) / delta[b as usize]).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// M_𝔻(N_*u)(Q): sup of averages over Q and its ancestors.
pub fn cube_numbers(cs: &CubeSystem, nstar: &[f64]) -> Vec<f64> {
    let avg = cube_averages(&cs.forest, nstar);
    let mut m = avg.clone();
    for q in 0..cs.len() {
        if let Some(p) = cs.cubes[q].parent {
            m[q] = m[q].max(m[p]);
        }
    }
    m
}

/// A nonnegative measure carried by point masses. Each atom belongs to box
/// `a` and, for facet masses, to the neighbor `b` as well (`a == b` for masses
/// inside a box).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxMeasure {
    pub points: Vec<Point>,
    pub mass: Vec<f64>,
    pub a: Vec<u32>,
    pub b: Vec<u32>,
}

impl BoxMeasure {
    pub fn push(&mut self, p: Point, m: f64, a: u32, b: u32) {
        if m > 0.0 {
            self.points.push(p);
            self.mass.push(m);
            self.a.push(a);
            self.b.push(b);
        }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Mass of atoms whose boxes both lie in `set`.
    pub fn mass_in(&self, set: &BitSet) -> f64 {
        (0..self.len())
            .filter(|&i| set.contains(self.a[i] as usize) && set.contains(self.b[i] as usize))
            .map(|i| self.mass[i])
            .sum()
    }

    /// Densities ∫_I f per box, `f` sampled by 3×3 Gauss points.
    pub fn from_density(wc: &WhitneyComplex, boxes: impl IntoIterator<Item = u32>, f: impl Fn(Point) -> f64) -> Self {
        let mut m = BoxMeasure::default();
        let (xs, ws) = crate::harmonic::gauss_legendre(3);
        for b in boxes {
            let bx = &wc.boxes[b as usize];
            let c = bx.center();
            let h = 0.5 * bx.side;
            for (xi, wi) in xs.iter().zip(ws) {
                for (yj, wj) in xs.iter().zip(ws) {
                    let p = [c[0] + h * xi, c[1] + h * yj];
                    m.push(p, wi * wj * h * h * f(p), b, b);
                }
            }
        }
        m
    }
}

/// Bounded-E tower T_{F_k} = B(z₀, 2^k diam E), k = Λ₀..=Λ₀+4, with Λ₀ the
/// least k ≥ 0 whose ball holds every box of T_{Q₀} for all roots Q₀.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub lambda0: i32,
    pub levels: Vec<(f64, BitSet)>,
}

impl Tower {
    pub fn new(e: &BoundarySet, cs: &CubeSystem, wc: &WhitneyComplex, rc: &RegionComplex) -> Option<Self> {
        let diam = e.diameter?;
        let z = e.samples[cs.z0];
        let far = |b: usize| {
            let bx = &wc.boxes[b];
            let (lo, hi) = (bx.lo, bx.hi());
            let fx = (z[0] - lo[0]).abs().max((hi[0] - z[0]).abs());
            let fy = (z[1] - lo[1]).abs().max((hi[1] - z[1]).abs());
            fx.hypot(fy)
        };
        let need = cs.roots().iter().flat_map(|&q| rc.carleson[q].iter()).map(far).fold(0.0, f64::max);
        let mut l0 = 0;
        while 2f64.powi(l0) * diam < need {
            l0 += 1;
        }
        let levels = (l0..=l0 + 4)
            .map(|k| {
                let r = 2f64.powi(k) * diam;
                (r, BitSet::from_indices(wc.len(), (0..wc.len()).filter(|&b| far(b) <= r)))
            })
            .collect();
        Some(Tower { lambda0: l0, levels })
    }
}

/// 𝒞_𝔻 F at every sample: sup over containing cubes (and the tower) of
/// F(T_Q)/ℓ(Q).
pub fn carleson_dyadic(f: &BoxMeasure, cs: &CubeSystem, rc: &RegionComplex, tower: Option<&Tower>) -> Vec<f64> {
    let per_cube: Vec<f64> =
        (0..cs.len()).into_par_iter().map(|q| f.mass_in(&rc.carleson[q]) / cs.cubes[q].side).collect();
    let tail = tower.map_or(0.0, |t| t.levels.iter().map(|(r, set)| f.mass_in(set) / r).fold(0.0, f64::max));
    (0..cs.forest.weights.len())
        .map(|a| cs.containing_cubes(a).into_iter().map(|q| per_cube[q]).fold(tail, f64::max))
        .collect()
}

/// 𝒞 F at every sample: sup over the radius grid of F(B(x, r))/r, open balls.
pub fn carleson_ball(f: &BoxMeasure, e: &BoundarySet, radii: &[f64]) -> Vec<f64> {
    e.samples
        .par_iter()
        .map(|&x| {
            let mut bins = vec![0.0; radii.len()];
            for (p, &m) in f.points.iter().zip(&f.mass) {
                let d = dist(*p, x);
                let i = radii.partition_point(|&r| r <= d);
                if i < radii.len() {
                    bins[i] += m;
                }
            }
            let mut acc = 0.0;
            let mut best = 0.0f64;
            for (r, m) in radii.iter().zip(bins) {
                acc += m;
                best = best.max(acc / r);
            }
            best
        })
        .collect()
}

/// L^p(σ̂) norm.
pub fn lp_norm(vals: &[f64], weights: &[f64], p: f64) -> f64 {
    vals.iter().zip(weights).map(|(v, w)| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// ‖N_*^α u‖_p / ‖N_* u‖_p, 1 when the denominator vanishes.
pub fn compare_apertures(narrow: &[f64], wide: &[f64], weights: &[f64], p: f64) -> f64 {
    let d = lp_norm(narrow, weights, p);
    if d == 0.0 {
        1.0
    } else {
        lp_norm(wide, weights, p) / d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetPoint {
    pub a1: f64,
    /// Least A₂ with σ{𝒞 > A₁λ} ≤ A₂ σ{𝒞_𝔻 > λ} for all λ > 0 (∞ if none).
    pub a2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpCheck {
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub curve: Vec<LevelSetPoint>,
    pub a1: f64,
    pub a2: f64,
    pub pass: bool,
    pub lp: Vec<LpCheck>,
}

fn strict_mass(sorted: &[(f64, f64)], suffix: &[f64], t: f64) -> f64 {
    // sorted by value ascending; mass of entries with value > t
    let i = sorted.partition_point(|&(v, _)| v <= t);
    suffix[i]
}

/// Exact A₂(A₁) over all λ > 0, floored at 1: both level-set masses are
/// right-continuous step functions, so it suffices to test every breakpoint
/// and one point below the first.
pub fn least_a2(c: &[f64], d: &[f64], w: &[f64], a1: f64) -> f64 {
    let prep = |v: &[f64]| {
        let mut s: Vec<(f64, f64)> = v.iter().copied().zip(w.iter().copied()).collect();
        s.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut suf = vec![0.0; s.len() + 1];
        for i in (0..s.len()).rev() {
            suf[i] = suf[i + 1] + s[i].1;
        }
        (s, suf)
    };
    let (cs, csuf) = prep(c);
    let (ds, dsuf) = prep(d);
    let mut breaks: Vec<f64> = cs.iter().map(|x| x.0 / a1).chain(ds.iter().map(|x| x.0)).filter(|&b| b > 0.0).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut lambdas = breaks.clone();
    if let Some(&b0) = breaks.first() {
        lambdas.push(0.5 * b0);
    }
    let mut a2 = 1.0f64;
    for lam in lambdas {
        let num = strict_mass(&cs, &csuf, a1 * lam);
        if num == 0.0 {
            continue;
        }
        let den = strict_mass(&ds, &dsuf, lam);
        if den == 0.0 {
            return f64::INFINITY;
        }
        a2 = a2.max(num / den);
    }
    a2
}

/// Level-set comparison of 𝒞 against 𝒞_𝔻 with budgets on (A₁, A₂).
pub fn compare_levelsets(
    c: &[f64],
    d: &[f64],
    w: &[f64],
    a1_grid: &[f64],
    budget: (f64, f64),
    ps: &[f64],
) -> LevelSetReport {
    let curve: Vec<LevelSetPoint> = a1_grid.iter().map(|&a1| LevelSetPoint { a1, a2: least_a2(c, d, w, a1) }).collect();
    // smallest A₁ whose A₂ fits the budget; otherwise the best product
    let chosen = curve
        .iter()
        .find(|pt| pt.a1 <= budget.0 && pt.a2 <= budget.1)
        .or_else(|| curve.iter().filter(|pt| pt.a2.is_finite()).min_by(|x, y| (x.a1 * x.a2).total_cmp(&(y.a1 * y.a2))))
        .cloned()
        .unwrap_or(LevelSetPoint { a1: f64::INFINITY, a2: f64::INFINITY });
    let pass = chosen.a1 <= budget.0 && chosen.a2 <= budget.1;
    let lp = ps
        .iter()
        .map(|&p| {
            let lhs = lp_norm(c, w, p);
            let rhs = lp_norm(d, w, p);
            let constant = chosen.a1 * chosen.a2.powf(1.0 / p);
            LpCheck { p, lhs, rhs, constant, holds: lhs <= constant * rhs * (1.0 + 1e-12) + 1e-300 }
        })
        .collect();
    LevelSetReport { curve, a1: chosen.a1, a2: chosen.a2, pass, lp }
}
