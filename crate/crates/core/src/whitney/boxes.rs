//! Dyadic Whitney boxes of the complement of E inside a rectangular window.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::geometry::{BoundarySet, Point};
use crate::{Error, Result};

/// Axis-aligned window of the ambient plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Window {
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x[0] && p[0] <= self.x[1] && p[1] >= self.y[0] && p[1] <= self.y[1]
    }

    fn meets_open(&self, lo: Point, hi: Point) -> bool {
        lo[0] < self.x[1] && hi[0] > self.x[0] && lo[1] < self.y[1] && hi[1] > self.y[0]
    }
}

/// A dyadic box `[lo, lo + side)^2` at `level`, side `base * 2^-level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyBox {
    pub level: i32,
    pub ix: i64,
    pub iy: i64,
    pub lo: Point,
    pub side: f64,
    /// dist(I, E)
    pub dist: f64,
}

impl WhitneyBox {
    pub fn hi(&self) -> Point {
        [self.lo[0] + self.side, self.lo[1] + self.side]
    }

    pub fn center(&self) -> Point {
        [self.lo[0] + 0.5 * self.side, self.lo[1] + 0.5 * self.side]
    }

    pub fn diam(&self) -> f64 {
        self.side * SQRT_2
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    /// The box dilated about its center by `factor`.
    pub fn dilate(&self, factor: f64) -> (Point, Point) {
        let c = self.center();
        let h = 0.5 * factor * self.side;
        ([c[0] - h, c[1] - h], [c[0] + h, c[1] + h])
    }

    /// Half-open membership.
    pub fn contains(&self, p: Point) -> bool {
        let hi = self.hi();
        p[0] >= self.lo[0] && p[0] < hi[0] && p[1] >= self.lo[1] && p[1] < hi[1]
    }
}

/// A shared edge of positive length between two boxes. For a vertical facet
/// `a` lies left of `x = at`; for a horizontal one `a` lies below `y = at`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub a: u32,
    pub b: u32,
    pub vertical: bool,
    pub at: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Facet {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn point(&self, t: f64) -> Point {
        let s = self.lo + t * (self.hi - self.lo);
        if self.vertical {
            [self.at, s]
        } else {
            [s, self.at]
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhitneyComplex {
    pub base: f64,
    pub origin: Point,
    pub window: Window,
    pub top_level: i32,
    pub finest_level: i32,
    pub tau: f64,
    pub boxes: Vec<WhitneyBox>,
    /// Boxes whose (1+τ)-dilates meet (closed), excluding the box itself.
    pub neighbors: Vec<Vec<u32>>,
    pub facets: Vec<Facet>,
    /// Boxes that passed the distance test but were too big at the top level.
    pub dropped_far: usize,
    #[serde(skip)]
    lookup: HashMap<(i32, i64, i64), u32>,
}

/// Largest admissible τ: a (1+3τ)-dilate of a box with diam ≤ dist(I,E)
/// stays at positive distance from E iff τ < 2/3.
pub const TAU_MAX: f64 = 2.0 / 3.0;

/// Dyadic Whitney decomposition of `window ∖ E`.
///
/// Top tiles at `top_level` cover the window; a box is kept when
/// `diam ≤ dist ≤ 4 diam`, split when `diam > dist` and dropped when it is a
/// top tile farther than `4 diam`. Splitting stops at `finest_level`, so a
/// thin layer along E of height about `4 * side(finest)` stays uncovered.
pub fn whitney_decompose(
    e: &BoundarySet,
    window: Window,
    base: f64,
    origin: Point,
    top_level: i32,
    finest_level: i32,
    tau: f64,
) -> Result<WhitneyComplex> {
    if !(tau > 0.0 && tau < TAU_MAX) {
        return Err(Error::Invalid(format!("tau = {tau} must lie in (0, {TAU_MAX})")));
    }
    if finest_level < top_level {
        return Err(Error::Invalid("finest Whitney level above the top level".into()));
    }
    if !(window.x[1] > window.x[0] && window.y[1] > window.y[0]) {
        return Err(Error::WindowTooSmall("empty window".into()));
    }
    let side_at = |j: i32| base * 2f64.powi(-j);
    let s0 = side_at(top_level);
    let ix0 = ((window.x[0] - origin[0]) / s0).floor() as i64;
    let ix1 = ((window.x[1] - origin[0]) / s0).ceil() as i64;
    let iy0 = ((window.y[0] - origin[1]) / s0).floor() as i64;
    let iy1 = ((window.y[1] - origin[1]) / s0).ceil() as i64;

    let mut stack = Vec::new();
    for ix in (ix0..ix1).rev() {
        for iy in (iy0..iy1).rev() {
            stack.push((top_level, ix, iy));
        }
    }
    let mut boxes = Vec::new();
    let mut dropped_far = 0;
    while let Some((j, ix, iy)) = stack.pop() {
        let s = side_at(j);
        let lo = [origin[0] + ix as f64 * s, origin[1] + iy as f64 * s];
        let hi = [lo[0] + s, lo[1] + s];
        if !window.meets_open(lo, hi) {
            continue;
        }
        let d = e.box_distance(lo, hi);
        let diam = s * SQRT_2;
        if diam <= d {
            if d <= 4.0 * diam {
                boxes.push(WhitneyBox { level: j, ix, iy, lo, side: s, dist: d });
            } else {
                dropped_far += 1;
            }
        } else if j < finest_level {
            for (dx, dy) in [(1, 1), (0, 1), (1, 0), (0, 0)] {
                stack.push((j + 1, 2 * ix + dx, 2 * iy + dy));
            }
        }
    }
    boxes.sort_by(|a, b| (a.level, a.ix, a.iy).cmp(&(b.level, b.ix, b.iy)));
    let lookup = boxes.iter().enumerate().map(|(i, b)| ((b.level, b.ix, b.iy), i as u32)).collect();
    let mut wc = WhitneyComplex {
        base,
        origin,
        window,
        top_level,
        finest_level,
        tau,
        boxes,
        neighbors: Vec::new(),
        facets: Vec::new(),
        dropped_far,
        lookup,
    };
    wc.link();
    Ok(wc)
}

impl WhitneyComplex {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn side_at(&self, level: i32) -> f64 {
        self.base * 2f64.powi(-level)
    }

    pub fn get(&self, level: i32, ix: i64, iy: i64) -> Option<u32> {
        self.lookup.get(&(level, ix, iy)).copied()
    }

    /// Rebuilds the hash index after deserialization.
    pub fn reindex(&mut self) {
        self.lookup = self.boxes.iter().enumerate().map(|(i, b)| ((b.level, b.ix, b.iy), i as u32)).collect();
    }

    /// The box containing `p` (half-open), if any.
    pub fn locate(&self, p: Point) -> Option<u32> {
        for j in self.top_level..=self.finest_level {
            let s = self.side_at(j);
            let ix = ((p[0] - self.origin[0]) / s).floor() as i64;
            let iy = ((p[1] - self.origin[1]) / s).floor() as i64;
            if let Some(i) = self.get(j, ix, iy) {
                return Some(i);
            }
        }
        None
    }

    /// Like [`locate`](Self::locate), trying levels near `hint` first.
    pub fn locate_near(&self, p: Point, hint: i32) -> Option<u32> {
        let probe = |j: i32| {
            let s = self.side_at(j);
            self.get(j, ((p[0] - self.origin[0]) / s).floor() as i64, ((p[1] - self.origin[1]) / s).floor() as i64)
        };
        let lo = (hint - 3).max(self.top_level);
        let hi = (hint + 3).min(self.finest_level);
        (lo..=hi).find_map(probe).or_else(|| self.locate(p))
    }

    /// Integer extent of a box in units of the finest side.
    fn extent(&self, b: &WhitneyBox) -> [i64; 4] {
        let m = 1i64 << (self.finest_level - b.level);
        [b.ix * m, b.iy * m, (b.ix + 1) * m, (b.iy + 1) * m]
    }

    fn link(&mut self) {
        let n = self.boxes.len();
        let f = 1.0 + self.tau;
        let mut nb: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut facets = Vec::new();
        let unit = self.side_at(self.finest_level);
        for i in 0..n {
            let bi = &self.boxes[i];
            let ci = bi.center();
            let ei = self.extent(bi);
            // Touching Whitney boxes differ by at most a factor 5 in size, so
            // three finer levels suffice; coarser partners find us from their side.
            for j in bi.level..=(bi.level + 3).min(self.finest_level) {
                let s = self.side_at(j);
                let r = 0.5 * f * (bi.side + s);
                let lo_x = ((ci[0] - r - self.origin[0]) / s - 0.5).ceil() as i64;
                let hi_x = ((ci[0] + r - self.origin[0]) / s - 0.5).floor() as i64;
                let lo_y = ((ci[1] - r - self.origin[1]) / s - 0.5).ceil() as i64;
                let hi_y = ((ci[1] + r - self.origin[1]) / s - 0.5).floor() as i64;
                for ix in lo_x..=hi_x {
                    for iy in lo_y..=hi_y {
                        let Some(k) = self.get(j, ix, iy) else { continue };
                        let k = k as usize;
                        if k == i || (j == bi.level && k < i) {
                            continue;
                        }
                        let bk = &self.boxes[k];
                        let ck = bk.center();
                        if (ci[0] - ck[0]).abs() > r || (ci[1] - ck[1]).abs() > r {
                            continue;
                        }
                        nb[i].push(k as u32);
                        nb[k].push(i as u32);
                        let ek = self.extent(bk);
                        let oy = ei[3].min(ek[3]) - ei[1].max(ek[1]);
                        let ox = ei[2].min(ek[2]) - ei[0].max(ek[0]);
                        if oy > 0 && (ei[2] == ek[0] || ek[2] == ei[0]) {
                            let at = if ei[2] == ek[0] { ei[2] } else { ek[2] };
                            let (lo_b, hi_b) = if ei[2] == ek[0] { (i, k) } else { (k, i) };
                            let y0 = ei[1].max(ek[1]);
                            facets.push(Facet {
                                a: lo_b as u32,
                                b: hi_b as u32,
                                vertical: true,
                                at: self.origin[0] + at as f64 * unit,
                                lo: self.origin[1] + y0 as f64 * unit,
                                hi: self.origin[1] + (y0 + oy) as f64 * unit,
                            });
                        } else if ox > 0 && (ei[3] == ek[1] || ek[3] == ei[1]) {
                            let at = if ei[3] == ek[1] { ei[3] } else { ek[3] };
                            let (lo_b, hi_b) = if ei[3] == ek[1] { (i, k) } else { (k, i) };
                            let x0 = ei[0].max(ek[0]);
                            facets.push(Facet {
                                a: lo_b as u32,
                                b: hi_b as u32,
                                vertical: false,
                                at: self.origin[1] + at as f64 * unit,
                                lo: self.origin[0] + x0 as f64 * unit,
                                hi: self.origin[0] + (x0 + ox) as f64 * unit,
                            });
                        }
                    }
                }
            }
        }
        for l in &mut nb {
            l.sort_unstable();
            l.dedup();
        }
        facets.sort_by(|p, q| (p.a, p.b).cmp(&(q.a, q.b)));
        self.neighbors = nb;
        self.facets = facets;
    }

    /// Largest and smallest box side.
    pub fn side_range(&self) -> (f64, f64) {
        let mut r = (f64::INFINITY, 0.0f64);
        for b in &self.boxes {
            r.0 = r.0.min(b.side);
            r.1 = r.1.max(b.side);
        }
        r
    }
}
