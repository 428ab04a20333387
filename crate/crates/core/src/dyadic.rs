//! Dyadic cube system on a sampled boundary.
//!
//! Graph-like boundaries get the projection of standard dyadic intervals of
//! the parameter axis. Other sample clouds get nested greedy nets. Set-equal
//! cubes from consecutive generations are merged, keeping the finest index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{dist, BoundarySet, Point};
use crate::tree::Forest;
use crate::{Error, Result};

fn default_c1_min() -> f64 {
    1e-3
}
fn default_c1_max() -> f64 {
    16.0
}
fn default_max_children() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub k_min: i32,
    pub k_max: i32,
    /// Side length of generation 0 (defaults to the window width, or the
    /// diameter for bounded sets).
    #[serde(default)]
    pub scale: Option<f64>,
    /// Left end of the generation-0 grid (defaults to the window start).
    #[serde(default)]
    pub anchor: Option<f64>,
    #[serde(default = "default_c1_min")]
    pub c1_min: f64,
    #[serde(default = "default_c1_max")]
    pub c1_max: f64,
    #[serde(default = "default_max_children")]
    pub max_children: usize,
}

impl GridParams {
    pub fn new(k_min: i32, k_max: i32) -> Self {
        Self {
            k_min,
            k_max,
            scale: None,
            anchor: None,
            c1_min: default_c1_min(),
            c1_max: default_c1_max(),
            max_children: default_max_children(),
        }
    }

    pub fn with_scale(mut self, scale: f64, anchor: f64) -> Self {
        self.scale = Some(scale);
        self.anchor = Some(anchor);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub id: usize,
    /// Generation index (the finest among set-equal copies).
    pub k: i32,
    /// Coarsest generation at which this set appears.
    pub k_top: i32,
    pub center: usize,
    pub center_point: Point,
    pub side: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub measure: f64,
    /// Bounding box of the member samples: `[x0, y0, x1, y1]`.
    pub bbox: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeSystem {
    pub cubes: Vec<Cube>,
    pub forest: Forest,
    pub scale: f64,
    pub anchor: f64,
    pub k_min: i32,
    pub k_max: i32,
    pub z0: usize,
    /// Measured inner constant: Δ(z_Q, c1 ℓ(Q)) ∩ samples ⊆ Q for every Q.
    pub c1: f64,
    /// Measured outer constant used for Δ_Q = Δ(z_Q, C1 ℓ(Q)).
    pub big_c1: f64,
    pub duplicates_removed: usize,
    pub max_children: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBall {
    pub center: Point,
    pub radius: f64,
    pub members: Vec<u32>,
}

struct RawNode {
    g: i32,
    members: Vec<u32>,
    center: usize,
    parent: Option<usize>,
    children: Vec<usize>,
}

fn graph_levels(e: &BoundarySet, p: &GridParams, scale: f64, anchor: f64) -> Vec<RawNode> {
    let [_, b] = e.spec.window;
    let mut nodes: Vec<RawNode> = Vec::new();
    let mut prev: BTreeMap<i64, usize> = BTreeMap::new();
    for g in p.k_min..=p.k_max {
        let side = scale * 2f64.powi(-g);
        let jmax = ((b - anchor) / side).ceil() as i64 - 1;
        let mut buckets: BTreeMap<i64, Vec<u32>> = BTreeMap::new();
        for (i, s) in e.samples.iter().enumerate() {
            let j = (((s[0] - anchor) / side).floor() as i64).min(jmax);
            buckets.entry(j).or_default().push(i as u32);
        }
        let mut cur = BTreeMap::new();
        for (j, members) in buckets {
            let mid = anchor + (j as f64 + 0.5) * side;
            let center = *members
                .iter()
                .min_by(|&&x, &&y| {
                    (e.samples[x as usize][0] - mid).abs().total_cmp(&(e.samples[y as usize][0] - mid).abs())
                })
                .unwrap() as usize;
            let parent = if g == p.k_min { None } else { prev.get(&j.div_euclid(2)).copied() };
            let id = nodes.len();
            if let Some(pp) = parent {
                nodes[pp].children.push(id);
            }
            nodes.push(RawNode { g, members, center, parent, children: Vec::new() });
            cur.insert(j, id);
        }
        prev = cur;
    }
    nodes
}

fn net_levels(e: &BoundarySet, p: &GridParams, scale: f64, z0: usize) -> Vec<RawNode> {
    let n = e.len();
    // Nested greedy nets; centers[g] ⊆ centers[g+1].
    let mut centers: Vec<Vec<usize>> = Vec::new();
    let mut current = vec![z0];
    for g in p.k_min..=p.k_max {
        let r = scale * 2f64.powi(-g);
        for i in 0..n {
            if current.iter().all(|&c| dist(e.samples[c], e.samples[i]) >= r) {
                current.push(i);
            }
        }
        centers.push(current.clone());
    }
    let levels = centers.len();
    // Parent of each center at each level (a center of level g that was
    // already a center at g-1 keeps itself as parent).
    let nearest = |set: &[usize], x: usize| -> usize {
        *set.iter()
            .min_by(|&&a, &&b| {
                dist(e.samples[a], e.samples[x]).total_cmp(&dist(e.samples[b], e.samples[x])).then(a.cmp(&b))
            })
            .unwrap()
    };
    let finest = &centers[levels - 1];
    let leaf_of: Vec<usize> = (0..n).map(|i| nearest(finest, i)).collect();
    // up[g][center] = parent center at level g-1.
    let mut parent_center: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); levels];
    for g in 1..levels {
        let prev_set = &centers[g - 1];
        for &c in &centers[g] {
            let pc = if prev_set.contains(&c) { c } else { nearest(prev_set, c) };
            parent_center[g].insert(c, pc);
        }
    }
    // Level membership by following ancestry from the finest level.
    let mut owner: Vec<Vec<usize>> = vec![vec![0; n]; levels];
    for i in 0..n {
        let mut c = leaf_of[i];
        owner[levels - 1][i] = c;
        for g in (1..levels).rev() {
            c = parent_center[g][&c];
            owner[g - 1][i] = c;
        }
    }
    let mut nodes: Vec<RawNode> = Vec::new();
    let mut prev_ids: BTreeMap<usize, usize> = BTreeMap::new();
    for g in 0..levels {
        let mut groups: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for i in 0..n {
            groups.entry(owner[g][i]).or_default().push(i as u32);
        }
        let mut cur = BTreeMap::new();
        for (c, members) in groups {
            let parent = if g == 0 { None } else { Some(prev_ids[&parent_center[g][&c]]) };
            let id = nodes.len();
            if let Some(pp) = parent {
                nodes[pp].children.push(id);
            }
            nodes.push(RawNode { g: p.k_min + g as i32, members, center: c, parent, children: Vec::new() });
            cur.insert(c, id);
        }
        prev_ids = cur;
    }
    nodes
}

pub fn build_cube_system(e: &BoundarySet, p: &GridParams) -> Result<CubeSystem> {
    if e.is_empty() {
        return Err(Error::EmptySamples);
    }
    if p.k_min > p.k_max {
        return Err(Error::Invalid("k_min exceeds k_max".into()));
    }
    let [a, b] = e.spec.window;
    let scale = p.scale.unwrap_or_else(|| e.diameter.unwrap_or(b - a));
    let anchor = p.anchor.unwrap_or(a);
    let finest = scale * 2f64.powi(-p.k_max);
    if finest < 2.0 * e.resolution() {
        return Err(Error::ResolutionTooCoarse { finest, needed: 2.0 * e.resolution() });
    }
    let mid = if e.is_bounded() {
        let n = e.len() as f64;
        let cx = e.samples.iter().map(|s| s[0]).sum::<f64>() / n;
        let cy = e.samples.iter().map(|s| s[1]).sum::<f64>() / n;
        [cx, cy]
    } else {
        let xm = 0.5 * (a + b);
        [xm, e.profile().map(|g| g.eval(xm)).unwrap_or(0.0)]
    };
    let z0 = e.nearest_sample(mid);
    let raw = if e.profile().is_some() { graph_levels(e, p, scale, anchor) } else { net_levels(e, p, scale, z0) };

    // Merge set-equal chains: a node with a single child of equal size is
    // represented by that child.
    let nraw = raw.len();
    let mut rep = vec![usize::MAX; nraw];
    for i in (0..nraw).rev() {
        let r = &raw[i];
        rep[i] = if r.children.len() == 1 && raw[r.children[0]].members.len() == r.members.len() {
            rep[r.children[0]]
        } else {
            i
        };
    }
    let is_top = |i: usize| match raw[i].parent {
        None => true,
        Some(pp) => rep[pp] != rep[i],
    };
    // Relevant cubes ordered by the generation of their topmost copy.
    let mut tops: Vec<usize> = (0..nraw).filter(|&i| is_top(i)).collect();
    tops.sort_by_key(|&i| (raw[i].g, i));
    let mut id_of_rep = vec![usize::MAX; nraw];
    for (id, &t) in tops.iter().enumerate() {
        id_of_rep[rep[t]] = id;
    }
    let mut parents = Vec::with_capacity(tops.len());
    let mut members = Vec::with_capacity(tops.len());
    let mut cubes = Vec::with_capacity(tops.len());
    for (id, &t) in tops.iter().enumerate() {
        let r = rep[t];
        let parent = raw[t].parent.map(|pp| id_of_rep[rep[pp]]);
        parents.push(parent);
        members.push(raw[r].members.clone());
        let k = raw[r].g;
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for &m in &raw[r].members {
            let s = e.samples[m as usize];
            bbox = [bbox[0].min(s[0]), bbox[1].min(s[1]), bbox[2].max(s[0]), bbox[3].max(s[1])];
        }
        cubes.push(Cube {
            id,
            k,
            k_top: raw[t].g,
            center: raw[r].center,
            center_point: e.samples[raw[r].center],
            side: scale * 2f64.powi(-k),
            parent,
            children: Vec::new(),
            measure: 0.0,
            bbox,
        });
    }
    let forest = Forest::new(parents, members, e.weights.clone())?;
    for q in 0..cubes.len() {
        cubes[q].children = forest.children[q].clone();
        cubes[q].measure = forest.measure[q];
    }
    let max_children = forest.children.iter().map(Vec::len).max().unwrap_or(0);

    // Measured inclusion constants.
    let mut big_c1: f64 = 0.0;
    let mut c1 = f64::INFINITY;
    let mut inside = vec![false; e.len()];
    for q in 0..cubes.len() {
        let z = cubes[q].center_point;
        let l = cubes[q].side;
        for &m in &forest.members[q] {
            inside[m as usize] = true;
            big_c1 = big_c1.max(dist(e.samples[m as usize], z) / l);
        }
        if let Some(pp) = cubes[q].parent {
            let gap = cubes[pp].side - l;
            big_c1 = big_c1.max(dist(cubes[pp].center_point, z) / gap);
        }
        for (i, s) in e.samples.iter().enumerate() {
            if !inside[i] {
                c1 = c1.min(dist(*s, z) / l);
            }
        }
        for &m in &forest.members[q] {
            inside[m as usize] = false;
        }
    }
    if c1 < p.c1_min {
        return Err(Error::Invalid(format!("measured inner inclusion constant c1 = {c1} is below {}", p.c1_min)));
    }
    if big_c1 > p.c1_max {
        return Err(Error::Invalid(format!("measured outer inclusion constant C1 = {big_c1} exceeds {}", p.c1_max)));
    }
    if max_children > p.max_children {
        return Err(Error::Invalid(format!("a cube has {max_children} children, above {}", p.max_children)));
    }
    Ok(CubeSystem {
        cubes,
        forest,
        scale,
        anchor,
        k_min: p.k_min,
        k_max: p.k_max,
        z0,
        c1,
        big_c1,
        duplicates_removed: nraw - tops.len(),
        max_children,
    })
}

impl CubeSystem {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn members(&self, q: usize) -> &[u32] {
        &self.forest.members[q]
    }

    pub fn roots(&self) -> Vec<usize> {
        self.forest.roots()
    }

    /// Cubes whose set appears at generation `g`.
    pub fn generation(&self, g: i32) -> Vec<usize> {
        self.cubes.iter().filter(|c| c.k_top <= g && g <= c.k).map(|c| c.id).collect()
    }

    /// Containing chain of a sample, coarsest first.
    pub fn containing_cubes(&self, sample: usize) -> Vec<usize> {
        self.forest.chain(sample)
    }

    /// Chain for an arbitrary point; falls back to the nearest sample, with
    /// the returned flag set when the fallback was used.
    pub fn containing_cubes_at(&self, e: &BoundarySet, p: Point) -> (Vec<usize>, bool) {
        let i = e.nearest_sample(p);
        (self.containing_cubes(i), dist(e.samples[i], p) > crate::geometry::GEOM_TOL)
    }

    /// Δ(z_Q, κ C1 ℓ(Q)) with its sample membership.
    pub fn surface_ball(&self, e: &BoundarySet, q: usize, kappa: f64) -> SurfaceBall {
        let c = &self.cubes[q];
        let radius = kappa * self.big_c1 * c.side;
        SurfaceBall { center: c.center_point, radius, members: e.ball_members(c.center_point, radius) }
    }

    /// Cube of `q`'s chain at generation `g` (the cube containing `q` whose
    /// generation span includes `g`), if `g` is not finer than `q`.
    pub fn ancestor_at_generation(&self, q: usize, g: i32) -> Option<usize> {
        self.forest.ancestors(q).find(|&a| self.cubes[a].k_top <= g && g <= self.cubes[a].k)
    }

    /// Distance from a point to the member samples of cube `q`.
    pub fn point_cube_dist(&self, e: &BoundarySet, p: Point, q: usize) -> f64 {
        self.members(q).iter().map(|&m| dist(e.samples[m as usize], p)).fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("cube system serializes")
    }
}
