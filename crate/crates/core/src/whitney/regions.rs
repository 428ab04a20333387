//! Whitney regions U_Q, their connected components and ± labels, Carleson
//! boxes and sawtooths, all stored as sets of box ids.

use serde::{Deserialize, Serialize};

use super::boxes::WhitneyComplex;
use super::corona::CoronaDecomposition;
use crate::bitset::BitSet;
use crate::dyadic::CubeSystem;
use crate::geometry::{dist, point_box_dist, BoundarySet, Point};
use crate::{Error, Result};

fn d_tau() -> f64 {
    0.05
}
fn d_cw() -> f64 {
    0.125
}
fn d_big_cw() -> f64 {
    8.0
}
fn d_cd() -> f64 {
    16.0
}

/// Allocation rule: `I ∈ 𝒲_Q` iff `c_w ≤ ℓ(I)/ℓ(Q) ≤ C_w` and
/// `dist(I, Q) ≤ C_d ℓ(Q)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_cw")]
    pub c_w: f64,
    #[serde(rename = "C_w", default = "d_big_cw")]
    pub big_c_w: f64,
    #[serde(rename = "C_d", default = "d_cd")]
    pub c_d: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self { tau: d_tau(), c_w: d_cw(), big_c_w: d_big_cw(), c_d: d_cd() }
    }
}

impl RegionParams {
    /// Whitney levels allowed for a cube of generation `k`.
    pub fn levels(&self, k: i32) -> (i32, i32) {
        let lo = (k as f64 - self.big_c_w.log2() - 1e-9).ceil() as i32;
        let hi = (k as f64 - self.c_w.log2() + 1e-9).floor() as i32;
        (lo, hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub cube: usize,
    /// 𝒲_Q, increasing box ids.
    pub boxes: Vec<u32>,
    pub components: Vec<Vec<u32>>,
    /// Side of Γ per component: +1, -1, or 0 when mixed or unlabeled.
    pub signs: Vec<i8>,
    /// Largest box of each component; its center is the component's X point.
    pub designated: Vec<u32>,
    pub plus: Option<usize>,
    pub minus: Option<usize>,
    /// |U_Q|
    pub volume: f64,
}

impl Region {
    pub fn x_point(&self, wc: &WhitneyComplex, comp: usize) -> Point {
        wc.boxes[self.designated[comp] as usize].center()
    }

    pub fn x_plus(&self, wc: &WhitneyComplex) -> Option<Point> {
        self.plus.map(|c| self.x_point(wc, c))
    }

    pub fn x_minus(&self, wc: &WhitneyComplex) -> Option<Point> {
        self.minus.map(|c| self.x_point(wc, c))
    }

    /// Component holding box `b`, if it is a member.
    pub fn component_of(&self, b: u32) -> Option<usize> {
        self.components.iter().position(|c| c.binary_search(&b).is_ok())
    }
}

/// Achieved comparability constants.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    /// min / max of ℓ(I)/ℓ(Q) over I ∈ 𝒲_Q
    pub size_ratio: [f64; 2],
    /// min / max of dist(I, Q)/ℓ(Q)
    pub dist_ratio: [f64; 2],
    /// min / max of |U_Q|/ℓ(Q)^2 over nonempty regions
    pub volume_ratio: [f64; 2],
    /// min / max of δ(Y)/ℓ(Q) over box centers Y in U_Q
    pub center_delta_ratio: [f64; 2],
    /// min / max of δ(X_Q^±)/ℓ(Q) over good cubes
    pub x_delta_ratio: [f64; 2],
    /// Σ|U_Q| / |⋃U_Q|
    pub overlap: f64,
    /// Largest ℓ(Q)/ℓ(P) over cubes whose regions share a box.
    pub shared_size_ratio: f64,
    /// Largest dist(Q, P)/ℓ(Q) over cubes whose regions share a box, bounded
    /// through the shared box center.
    pub shared_dist_ratio: f64,
    /// Largest radius of T_Q around z_Q over ℓ(Q).
    pub carleson_radius: f64,
    pub empty_regions: usize,
    pub demoted: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionComplex {
    pub params: RegionParams,
    pub regions: Vec<Region>,
    /// Cubes owning each box.
    pub owners: Vec<Vec<u32>>,
    /// T_Q per cube.
    pub carleson: Vec<BitSet>,
    pub y_plus: Vec<Option<Point>>,
    pub y_minus: Vec<Option<Point>>,
    pub report: RegionReport,
}

fn find(p: &mut [usize], mut i: usize) -> usize {
    while p[i] != i {
        p[i] = p[p[i]];
        i = p[i];
    }
    i
}

/// Allocates boxes to cubes and splits each region into components.
/// Labels and Y points are filled in by [`RegionComplex::label`].
pub fn build_regions(
    cs: &CubeSystem,
    e: &BoundarySet,
    wc: &WhitneyComplex,
    params: RegionParams,
) -> Result<RegionComplex> {
    if (params.tau - wc.tau).abs() > 0.0 {
        return Err(Error::Invalid("region tau differs from the Whitney complex tau".into()));
    }
    if !(params.c_w > 0.0 && params.c_w <= 1.0 && params.big_c_w >= 1.0 && params.c_d > 0.0) {
        return Err(Error::Invalid("allocation constants out of range".into()));
    }
    let nb = wc.len();
    let mut owners: Vec<Vec<u32>> = vec![Vec::new(); nb];
    let mut regions = Vec::with_capacity(cs.len());
    let mut local = vec![usize::MAX; nb];
    for c in &cs.cubes {
        let l = c.side;
        let reach = params.c_d * l;
        let (j0, j1) = params.levels(c.k);
        let mut boxes = Vec::new();
        for j in j0.max(wc.top_level)..=j1.min(wc.finest_level) {
            let s = wc.side_at(j);
            let ix0 = ((c.bbox[0] - reach - wc.origin[0]) / s).floor() as i64 - 1;
            let ix1 = ((c.bbox[2] + reach - wc.origin[0]) / s).ceil() as i64;
            let iy0 = ((c.bbox[1] - reach - wc.origin[1]) / s).floor() as i64 - 1;
            let iy1 = ((c.bbox[3] + reach - wc.origin[1]) / s).ceil() as i64;
            let start = wc.boxes.partition_point(|b| (b.level, b.ix) < (j, ix0));
            for (i, b) in wc.boxes.iter().enumerate().skip(start) {
                if b.level != j || b.ix > ix1 {
                    break;
                }
                if b.iy < iy0 || b.iy > iy1 {
                    continue;
                }
                let hi = b.hi();
                if point_box_dist(c.center_point, b.lo, hi) <= reach
                    || (box_box_dist(b.lo, hi, c.bbox) <= reach
                        && cs.members(c.id).iter().any(|&m| point_box_dist(e.samples[m as usize], b.lo, hi) <= reach))
                {
                    boxes.push(i as u32);
                }
            }
        }
        boxes.sort_unstable();
        for (li, &b) in boxes.iter().enumerate() {
            local[b as usize] = li;
            owners[b as usize].push(c.id as u32);
        }
        let mut parent: Vec<usize> = (0..boxes.len()).collect();
        for (li, &b) in boxes.iter().enumerate() {
            for &nbx in &wc.neighbors[b as usize] {
                let lj = local[nbx as usize];
                if lj != usize::MAX {
                    let (a, bb) = (find(&mut parent, li), find(&mut parent, lj));
                    if a != bb {
                        parent[a.max(bb)] = a.min(bb);
                    }
                }
            }
        }
        let mut comp_of_root = vec![usize::MAX; boxes.len()];
        let mut components: Vec<Vec<u32>> = Vec::new();
        for li in 0..boxes.len() {
            let r = find(&mut parent, li);
            if comp_of_root[r] == usize::MAX {
                comp_of_root[r] = components.len();
                components.push(Vec::new());
            }
            components[comp_of_root[r]].push(boxes[li]);
        }
        for &b in &boxes {
            local[b as usize] = usize::MAX;
        }
        let designated = components
            .iter()
            .map(|comp| {
                *comp
                    .iter()
                    .min_by(|&&a, &&b| {
                        let (ba, bb) = (&wc.boxes[a as usize], &wc.boxes[b as usize]);
                        let dx = |x: &super::WhitneyBox| dist(x.center(), c.center_point);
                        ba.level.cmp(&bb.level).then(dx(ba).total_cmp(&dx(bb))).then(a.cmp(&b))
                    })
                    .expect("components are nonempty")
            })
            .collect();
        let volume = boxes.iter().map(|&b| wc.boxes[b as usize].area()).sum();
        regions.push(Region {
            cube: c.id,
            signs: vec![0; components.len()],
            boxes,
            components,
            designated,
            plus: None,
            minus: None,
            volume,
        });
    }

    let mut carleson: Vec<BitSet> = vec![BitSet::new(nb); cs.len()];
    for q in (0..cs.len()).rev() {
        let mut t = BitSet::from_indices(nb, regions[q].boxes.iter().map(|&b| b as usize));
        for &ch in &cs.cubes[q].children {
            t.union_with(&carleson[ch]);
        }
        carleson[q] = t;
    }

    let mut rc = RegionComplex {
        params,
        regions,
        owners,
        carleson,
        y_plus: vec![None; cs.len()],
        y_minus: vec![None; cs.len()],
        report: RegionReport::default(),
    };
    rc.report = rc.measure(cs, e, wc);
    Ok(rc)
}

fn box_box_dist(lo: Point, hi: Point, bb: [f64; 4]) -> f64 {
    let dx = (bb[0] - hi[0]).max(lo[0] - bb[2]).max(0.0);
    let dy = (bb[1] - hi[1]).max(lo[1] - bb[3]).max(0.0);
    dx.hypot(dy)
}

fn widen(r: &mut [f64; 2], v: f64) {
    r[0] = r[0].min(v);
    r[1] = r[1].max(v);
}

impl RegionComplex {
    fn measure(&self, cs: &CubeSystem, e: &BoundarySet, wc: &WhitneyComplex) -> RegionReport {
        let empty = [f64::INFINITY, f64::NEG_INFINITY];
        let mut rep = RegionReport {
            size_ratio: empty,
            dist_ratio: empty,
            volume_ratio: empty,
            center_delta_ratio: empty,
            x_delta_ratio: empty,
            ..Default::default()
        };
        let delta: Vec<f64> = wc.boxes.iter().map(|b| e.distance(b.center())).collect();
        let mut total = 0.0;
        for r in &self.regions {
            let c = &cs.cubes[r.cube];
            if r.boxes.is_empty() {
                rep.empty_regions += 1;
                continue;
            }
            total += r.volume;
            widen(&mut rep.volume_ratio, r.volume / (c.side * c.side));
            for &b in &r.boxes {
                let bx = &wc.boxes[b as usize];
                widen(&mut rep.size_ratio, bx.side / c.side);
                widen(&mut rep.center_delta_ratio, delta[b as usize] / c.side);
                let d = cs
                    .members(r.cube)
                    .iter()
                    .map(|&m| point_box_dist(e.samples[m as usize], bx.lo, bx.hi()))
                    .fold(f64::INFINITY, f64::min);
                widen(&mut rep.dist_ratio, d / c.side);
            }
        }
        let mut union = 0.0;
        for (b, own) in self.owners.iter().enumerate() {
            if own.is_empty() {
                continue;
            }
            let bx = &wc.boxes[b];
            union += bx.area();
            let sides: Vec<f64> = own.iter().map(|&q| cs.cubes[q as usize].side).collect();
            let lmin = sides.iter().copied().fold(f64::INFINITY, f64::min);
            let lmax = sides.iter().copied().fold(0.0, f64::max);
            rep.shared_size_ratio = rep.shared_size_ratio.max(lmax / lmin);
            let reach = own.iter().map(|&q| dist(cs.cubes[q as usize].center_point, bx.center())).fold(0.0, f64::max);
            rep.shared_dist_ratio = rep.shared_dist_ratio.max(2.0 * reach / lmin);
        }
        rep.overlap = if union > 0.0 { total / union } else { 0.0 };
        for (q, t) in self.carleson.iter().enumerate() {
            let c = &cs.cubes[q];
            for b in t.iter() {
                let bx = &wc.boxes[b];
                let (lo, hi) = (bx.lo, bx.hi());
                let fx = (c.center_point[0] - lo[0]).abs().max((hi[0] - c.center_point[0]).abs());
                let fy = (c.center_point[1] - lo[1]).abs().max((hi[1] - c.center_point[1]).abs());
                rep.carleson_radius = rep.carleson_radius.max(fx.hypot(fy) / c.side);
            }
        }
        for r in [
            &mut rep.size_ratio,
            &mut rep.dist_ratio,
            &mut rep.volume_ratio,
            &mut rep.center_delta_ratio,
            &mut rep.x_delta_ratio,
        ] {
            if r[0] > r[1] {
                *r = [0.0, 0.0];
            }
        }
        rep
    }

    /// Labels components of good cubes by the side of their regime graph,
    /// demotes structurally defective good cubes and sets Y points.
    pub fn label(&mut self, cs: &CubeSystem, e: &BoundarySet, wc: &WhitneyComplex, corona: &mut CoronaDecomposition) {
        let mut defective = Vec::new();
        for r in &mut self.regions {
            r.plus = None;
            r.minus = None;
            r.signs.iter_mut().for_each(|s| *s = 0);
            let Some(g) = corona.graph_of(r.cube) else { continue };
            for (ci, comp) in r.components.iter().enumerate() {
                let mut s = 0i8;
                for &b in comp {
                    let c = wc.boxes[b as usize].center();
                    let t = if c[1] > g.eval(c[0]) { 1 } else { -1 };
                    if s == 0 {
                        s = t;
                    } else if s != t {
                        s = 0;
                        break;
                    }
                }
                r.signs[ci] = s;
            }
            let plus = r.signs.iter().filter(|&&s| s == 1).count();
            let minus = r.signs.iter().filter(|&&s| s == -1).count();
            if r.components.len() != 2 || plus != 1 || minus != 1 {
                defective.push(r.cube);
            }
        }
        corona.demote(cs, &defective);
        for r in &mut self.regions {
            if corona.good[r.cube] {
                r.plus = r.signs.iter().position(|&s| s == 1);
                r.minus = r.signs.iter().position(|&s| s == -1);
            }
        }
        for q in 0..cs.len() {
            if !corona.good[q] {
                self.y_plus[q] = None;
                self.y_minus[q] = None;
                continue;
            }
            let src = if corona.is_top(q) { q } else { cs.cubes[q].parent.expect("non-top good cube has a parent") };
            self.y_plus[q] = self.regions[src].x_plus(wc);
            self.y_minus[q] = self.regions[src].x_minus(wc);
        }
        let mut xr = [f64::INFINITY, f64::NEG_INFINITY];
        for r in &self.regions {
            let l = cs.cubes[r.cube].side;
            for p in [r.x_plus(wc), r.x_minus(wc)].into_iter().flatten() {
                widen(&mut xr, e.distance(p) / l);
            }
        }
        self.report.x_delta_ratio = if xr[0] <= xr[1] { xr } else { [0.0, 0.0] };
        self.report.demoted = corona.demoted.clone();
    }

    pub fn region(&self, q: usize) -> &Region {
        &self.regions[q]
    }

    /// T_Q as a box set.
    pub fn carleson_box(&self, q: usize) -> &BitSet {
        &self.carleson[q]
    }

    /// Ω_𝒜 as a box set.
    pub fn sawtooth(&self, family: &[usize]) -> BitSet {
        let n = self.owners.len();
        let mut s = BitSet::new(n);
        for &q in family {
            for &b in &self.regions[q].boxes {
                s.insert(b as usize);
            }
        }
        s
    }

    /// Ω_𝒜^± for a family of good cubes: union of the labeled components.
    pub fn sawtooth_halves(&self, family: &[usize]) -> (BitSet, BitSet) {
        let n = self.owners.len();
        let (mut p, mut m) = (BitSet::new(n), BitSet::new(n));
        for &q in family {
            let r = &self.regions[q];
            if let Some(c) = r.plus {
                r.components[c].iter().for_each(|&b| p.insert(b as usize));
            }
            if let Some(c) = r.minus {
                r.components[c].iter().for_each(|&b| m.insert(b as usize));
            }
        }
        (p, m)
    }

    /// Fattened region: member boxes dilated by `factor` (1+τ, 1+2τ, ...).
    pub fn fattened(&self, wc: &WhitneyComplex, q: usize, factor: f64) -> Vec<(Point, Point)> {
        self.regions[q].boxes.iter().map(|&b| wc.boxes[b as usize].dilate(factor)).collect()
    }

    /// Boxes covered by some region.
    pub fn covered(&self) -> BitSet {
        BitSet::from_indices(self.owners.len(), (0..self.owners.len()).filter(|&b| !self.owners[b].is_empty()))
    }
}
