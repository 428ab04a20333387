//! Boundary sets in the plane: an analytic descriptor for distances plus a
//! weighted sample cloud for surface-measure quadrature.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = [f64; 2];

pub const GEOM_TOL: f64 = 1e-9;

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Distance from a point to the closed axis-aligned box `[lo, hi]`.
pub fn point_box_dist(p: Point, lo: Point, hi: Point) -> f64 {
    let dx = (lo[0] - p[0]).max(0.0).max(p[0] - hi[0]);
    let dy = (lo[1] - p[1]).max(0.0).max(p[1] - hi[1]);
    dx.hypot(dy)
}

fn point_segment_dist(p: Point, a: Point, b: Point) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / len2).clamp(0.0, 1.0) };
    dist(p, [a[0] + t * vx, a[1] + t * vy])
}

fn segment_box_dist(a: Point, b: Point, lo: Point, hi: Point) -> f64 {
    // Liang-Barsky clip: any overlap means distance zero.
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let mut hit = true;
    for (p, q) in [(-dx, a[0] - lo[0]), (dx, hi[0] - a[0]), (-dy, a[1] - lo[1]), (dy, hi[1] - a[1])] {
        if p == 0.0 {
            if q < 0.0 {
                hit = false;
                break;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                hit = false;
                break;
            }
        }
    }
    if hit {
        return 0.0;
    }
    let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    let mut best = point_box_dist(a, lo, hi).min(point_box_dist(b, lo, hi));
    for c in corners {
        best = best.min(point_segment_dist(c, a, b));
    }
    best
}

/// Height profile of a Lipschitz graph `t = g(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Linear {
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    Abs {
        slope: f64,
    },
    Sine {
        amplitude: f64,
        frequency: f64,
    },
    /// Piecewise linear interpolation of seeded random knot heights.
    Random {
        seed: u64,
        slope: f64,
        knot_spacing: f64,
    },
}

impl Profile {
    pub fn flat() -> Self {
        Profile::Linear { slope: 0.0, offset: 0.0 }
    }

    fn knot_height(seed: u64, slope: f64, spacing: f64, m: i64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.gen_range(-0.5..=0.5) * slope * spacing
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Linear { slope, offset } => slope * x + offset,
            Profile::Abs { slope } => slope * x.abs(),
            Profile::Sine { amplitude, frequency } => amplitude * (frequency * x).sin(),
            Profile::Random { seed, slope, knot_spacing } => {
                let s = x / knot_spacing;
                let m = s.floor();
                let t = s - m;
                let a = Self::knot_height(seed, slope, knot_spacing, m as i64);
                let b = Self::knot_height(seed, slope, knot_spacing, m as i64 + 1);
                a + t * (b - a)
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Profile::Linear { slope, .. } | Profile::Abs { slope } => slope.abs(),
            Profile::Sine { amplitude, frequency } => (amplitude * frequency).abs(),
            Profile::Random { slope, .. } => slope.abs(),
        }
    }
}

/// Analytic description of E.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum Descriptor {
    Hyperplane {},
    LipschitzGraph {
        profile: Profile,
    },
    /// Four-corner Cantor set in the unit square at a finite level.
    CantorSet {
        level: u32,
    },
    PointList {
        points: Vec<Point>,
        weights: Vec<f64>,
    },
}

/// Boundary descriptor file: `{type, params, window, resolution}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    #[serde(flatten)]
    pub descriptor: Descriptor,
    pub window: [f64; 2],
    pub resolution: f64,
}

#[derive(Clone, Debug)]
enum DistIndex {
    Line,
    Polyline { x0: f64, h: f64, pts: Vec<Point> },
    Cloud(CloudIndex),
}

#[derive(Clone, Debug)]
struct CloudIndex {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
    bounds: (i64, i64, i64, i64),
    pts: Vec<Point>,
}

impl CloudIndex {
    fn new(pts: &[Point], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        let mut b = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
        for (i, p) in pts.iter().enumerate() {
            let k = ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
            b = (b.0.min(k.0), b.1.max(k.0), b.2.min(k.1), b.3.max(k.1));
            cells.entry(k).or_default().push(i as u32);
        }
        Self { cell, cells, bounds: b, pts: pts.to_vec() }
    }

    /// Minimum of `d(p)` over cloud points, where `d` is a distance to the
    /// query box `[lo, hi]` (a point query uses `lo == hi`).
    fn box_dist(&self, lo: Point, hi: Point) -> f64 {
        let c = self.cell;
        let (i0, i1) = ((lo[0] / c).floor() as i64, (hi[0] / c).floor() as i64);
        let (j0, j1) = ((lo[1] / c).floor() as i64, (hi[1] / c).floor() as i64);
        let mut best = f64::INFINITY;
        let max_ring = {
            let (bx0, bx1, by0, by1) = self.bounds;
            [(i0 - bx0), (bx1 - i1), (j0 - by0), (by1 - j1)].into_iter().map(|v| v.abs()).max().unwrap() + 1
        };
        for r in 0..=max_ring {
            if r >= 1 && (r - 1) as f64 * c > best {
                break;
            }
            let mut visit = |i: i64, j: i64| {
                if let Some(ids) = self.cells.get(&(i, j)) {
                    for &k in ids {
                        best = best.min(point_box_dist(self.pts[k as usize], lo, hi));
                    }
                }
            };
            for i in (i0 - r)..=(i1 + r) {
                if r == 0 || i == i0 - r || i == i1 + r {
                    for j in (j0 - r)..=(j1 + r) {
                        visit(i, j);
                    }
                } else {
                    visit(i, j0 - r);
                    visit(i, j1 + r);
                }
            }
        }
        best
    }
}

/// A discretized boundary set E with quadrature weights.
#[derive(Clone, Debug)]
pub struct BoundarySet {
    pub spec: BoundarySpec,
    pub ambient_dimension: usize,
    pub samples: Vec<Point>,
    pub weights: Vec<f64>,
    /// `None` for unbounded descriptors.
    pub diameter: Option<f64>,
    pub lipschitz: f64,
    index: DistIndex,
}

#[derive(Clone, Debug, Default)]
pub struct BuildOptions {
    /// Graphs with a larger Lipschitz constant are rejected.
    pub lipschitz_budget: f64,
    /// Extra horizontal extent of the distance model beyond the window.
    pub extension: f64,
}

impl BuildOptions {
    pub fn new(lipschitz_budget: f64) -> Self {
        Self { lipschitz_budget, extension: f64::NAN }
    }
}

pub fn build_boundary(spec: &BoundarySpec, opts: &BuildOptions) -> Result<BoundarySet> {
    let h = spec.resolution;
    if !(h > 0.0) {
        return Err(Error::Invalid("resolution must be positive".into()));
    }
    let [a, b] = spec.window;
    if !(b > a) {
        return Err(Error::Invalid("window must have positive width".into()));
    }
    let ext = if opts.extension.is_nan() { b - a } else { opts.extension };
    match &spec.descriptor {
        Descriptor::Hyperplane {} | Descriptor::LipschitzGraph { .. } => {
            let profile = match &spec.descriptor {
                Descriptor::LipschitzGraph { profile } => profile.clone(),
                _ => Profile::flat(),
            };
            let lip = profile.lipschitz();
            if lip > opts.lipschitz_budget {
                return Err(Error::LipschitzBudget { lipschitz: lip, budget: opts.lipschitz_budget });
            }
            let n = ((b - a) / h + 1e-9).floor() as usize + 1;
            let g = |x: f64| [x, profile.eval(x)];
            let mut samples = Vec::with_capacity(n);
            let mut weights = Vec::with_capacity(n);
            for i in 0..n {
                let x = a + i as f64 * h;
                let p = g(x);
                samples.push(p);
                weights.push(dist(g(x - h / 2.0), p) + dist(p, g(x + h / 2.0)));
            }
            let index = if matches!(spec.descriptor, Descriptor::Hyperplane {}) {
                DistIndex::Line
            } else {
                let m0 = (ext / h).ceil() as i64;
                let x0 = a - m0 as f64 * h;
                let count = n as i64 + 2 * m0;
                let pts = (0..count).map(|i| g(x0 + i as f64 * h)).collect();
                DistIndex::Polyline { x0, h, pts }
            };
            Ok(BoundarySet {
                spec: spec.clone(),
                ambient_dimension: 2,
                samples,
                weights,
                diameter: None,
                lipschitz: lip,
                index,
            })
        }
        Descriptor::CantorSet { level } => {
            let mut squares = vec![([0.0f64, 0.0f64], 1.0f64)];
            for _ in 0..*level {
                let mut next = Vec::with_capacity(squares.len() * 4);
                for (lo, s) in &squares {
                    let q = s / 4.0;
                    for (dx, dy) in [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)] {
                        next.push(([lo[0] + dx * q, lo[1] + dy * q], q));
                    }
                }
                squares = next;
            }
            let samples: Vec<Point> = squares.iter().map(|(lo, s)| [lo[0] + s / 2.0, lo[1] + s / 2.0]).collect();
            let weights = squares.iter().map(|(_, s)| *s).collect();
            Ok(finish_cloud(spec, samples, weights))
        }
        Descriptor::PointList { points, weights } => {
            if points.len() != weights.len() {
                return Err(Error::Invalid("points and weights differ in length".into()));
            }
            if weights.iter().any(|&w| !(w > 0.0)) {
                return Err(Error::Invalid("quadrature weights must be positive".into()));
            }
            Ok(finish_cloud(spec, points.clone(), weights.clone()))
        }
    }
}

fn finish_cloud(spec: &BoundarySpec, samples: Vec<Point>, weights: Vec<f64>) -> BoundarySet {
    let mut diam: f64 = 0.0;
    if samples.len() <= 4096 {
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                diam = diam.max(dist(samples[i], samples[j]));
            }
        }
    } else {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &samples {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        diam = dist(lo, hi);
    }
    let cell = (diam / 64.0).max(spec.resolution).max(1e-12);
    let index = DistIndex::Cloud(CloudIndex::new(&samples, cell));
    BoundarySet {
        spec: spec.clone(),
        ambient_dimension: 2,
        samples,
        weights,
        diameter: Some(diam),
        lipschitz: f64::INFINITY,
        index,
    }
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.spec.resolution
    }

    pub fn is_bounded(&self) -> bool {
        self.diameter.is_some()
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Graph profile when E is a graph over the first axis.
    pub fn profile(&self) -> Option<Profile> {
        match &self.spec.descriptor {
            Descriptor::Hyperplane {} => Some(Profile::flat()),
            Descriptor::LipschitzGraph { profile } => Some(profile.clone()),
            _ => None,
        }
    }

    /// Sample index nearest to `p` (lowest index on ties).
    pub fn nearest_sample(&self, p: Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, s) in self.samples.iter().enumerate() {
            let d = dist(*s, p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Distance from a point to E. Exact for the hyperplane and for graphs
    /// (piecewise linear at the sampling resolution); nearest sample otherwise.
    pub fn distance(&self, p: Point) -> f64 {
        self.box_distance(p, p)
    }

    /// Distance from the closed box `[lo, hi]` to E.
    pub fn box_distance(&self, lo: Point, hi: Point) -> f64 {
        match &self.index {
            DistIndex::Line => {
                if lo[1] <= 0.0 && hi[1] >= 0.0 {
                    0.0
                } else {
                    lo[1].abs().min(hi[1].abs())
                }
            }
            DistIndex::Polyline { x0, h, pts } => {
                let n = pts.len();
                let seg = |i: usize| segment_box_dist(pts[i], pts[i + 1], lo, hi);
                let clampi = |x: f64| (((x - x0) / h).floor().max(0.0) as usize).min(n - 2);
                let (i0, i1) = (clampi(lo[0]), clampi(hi[0]));
                let mut best = f64::INFINITY;
                for i in i0..=i1 {
                    best = best.min(seg(i));
                }
                let mut i = i0;
                while i > 0 && lo[0] - (x0 + i as f64 * h) <= best {
                    i -= 1;
                    best = best.min(seg(i));
                }
                let mut i = i1;
                while i + 2 < n && (x0 + (i + 1) as f64 * h) - hi[0] <= best {
                    i += 1;
                    best = best.min(seg(i));
                }
                best
            }
            DistIndex::Cloud(c) => c.box_dist(lo, hi),
        }
    }

    /// Distance to E with a degeneracy flag for points on E.
    pub fn distance_to_boundary(&self, p: Point) -> (f64, bool) {
        let d = self.distance(p);
        if d <= GEOM_TOL {
            (0.0, true)
        } else {
            (d, false)
        }
    }

    /// σ̂(Δ(x, r)): quadrature weight of samples in the closed ball.
    pub fn surface_measure(&self, center: Point, r: f64) -> f64 {
        self.samples.iter().zip(&self.weights).filter(|(s, _)| dist(**s, center) <= r).map(|(_, w)| *w).sum()
    }

    /// Sample indices in the closed ball.
    pub fn ball_members(&self, center: Point, r: f64) -> Vec<u32> {
        (0..self.samples.len() as u32).filter(|&i| dist(self.samples[i as usize], center) <= r).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x0,x1,weight\n");
        for (p, w) in self.samples.iter().zip(&self.weights) {
            s.push_str(&format!("{},{},{}\n", p[0], p[1], w));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdrReport {
    pub tested_centers: Vec<Point>,
    pub tested_radii: Vec<f64>,
    pub lower_constant: f64,
    pub upper_constant: f64,
    pub budget: f64,
    pub pass: bool,
}

/// Sweep log-spaced radii over sampled centers and record extremal
/// σ̂(Δ(x, r)) / r ratios. For unbounded E only balls whose horizontal
/// extent stays inside the window are used.
pub fn check_adr(e: &BoundarySet, budget: f64) -> Result<AdrReport> {
    if e.is_empty() {
        return Err(Error::EmptySamples);
    }
    if budget < 1.0 {
        return Err(Error::Invalid("ADR budget must be at least 1".into()));
    }
    let [a, b] = e.spec.window;
    let r_min = 4.0 * e.resolution();
    let r_max = match e.diameter {
        Some(d) => d,
        None => (b - a) / 4.0,
    };
    let nr = 12usize;
    let radii: Vec<f64> = if r_max <= r_min {
        vec![r_min]
    } else {
        (0..nr).map(|i| r_min * (r_max / r_min).powf(i as f64 / (nr - 1) as f64)).collect()
    };
    let stride = (e.len() / 200).max(1);
    let centers: Vec<Point> = e.samples.iter().step_by(stride).copied().collect();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for c in &centers {
        for &r in &radii {
            if !e.is_bounded() && (c[0] - r < a - GEOM_TOL || c[0] + r > b + GEOM_TOL) {
                continue;
            }
            let ratio = e.surface_measure(*c, r) / r;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    if !lo.is_finite() {
        return Err(Error::Invalid("window too narrow for any ADR test ball".into()));
    }
    let pass = lo >= 1.0 / budget && hi <= budget;
    Ok(AdrReport { tested_centers: centers, tested_radii: radii, lower_constant: lo, upper_constant: hi, budget, pass })
}
