//! Bilateral corona decompositions: good cubes grouped into coherent regimes,
//! each shadowed by a Lipschitz graph, plus the bad cubes.

use serde::{Deserialize, Serialize};

use crate::carleson::{indicator, packing_constant};
use crate::dyadic::CubeSystem;
use crate::geometry::{dist, BoundarySet, Point, Profile};
use crate::{Error, Result};

fn default_eta() -> f64 {
    0.1
}
fn default_k() -> f64 {
    2.0
}

/// Cube of generation `k` containing the sample nearest to `(x, y)`. When `y`
/// is omitted it defaults to the height of E's own graph at `x` (0 otherwise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeRef {
    pub k: i32,
    pub x: f64,
    #[serde(default)]
    pub y: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub top: CubeRef,
    /// Generations below the top that belong to the regime (all if omitted).
    #[serde(default)]
    pub depth: Option<i32>,
    /// Subtrees cut out of the regime.
    #[serde(default)]
    pub exclude: Vec<CubeRef>,
    pub graph: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CoronaSpec {
    TrivialGraph {
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default = "default_k")]
        k: f64,
    },
    Annotated {
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default = "default_k")]
        k: f64,
        regimes: Vec<RegimeSpec>,
    },
}

impl Default for CoronaSpec {
    fn default() -> Self {
        CoronaSpec::TrivialGraph { eta: default_eta(), k: default_k() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub top: usize,
    /// Members in increasing id order (parents first).
    pub members: Vec<usize>,
    pub graph: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoronaDecomposition {
    pub eta: f64,
    pub k: f64,
    pub good: Vec<bool>,
    pub regime_of: Vec<Option<usize>>,
    pub regimes: Vec<Regime>,
    /// Good cubes moved to the bad family by the region builder.
    pub demoted: Vec<usize>,
    /// Largest of the two one-sided distance suprema over ηℓ(Q).
    pub worst_distance_ratio: f64,
    /// Packing constant of the bad cubes together with the regime tops.
    pub packing: f64,
}

impl CoronaDecomposition {
    pub fn bad(&self) -> Vec<usize> {
        (0..self.good.len()).filter(|&q| !self.good[q]).collect()
    }

    pub fn tops(&self) -> Vec<usize> {
        self.regimes.iter().map(|r| r.top).collect()
    }

    pub fn is_top(&self, q: usize) -> bool {
        self.regime_of[q].is_some_and(|r| self.regimes[r].top == q)
    }

    pub fn graph_of(&self, q: usize) -> Option<&Profile> {
        self.regime_of[q].map(|r| &self.regimes[r].graph)
    }

    fn repack(&mut self, cs: &CubeSystem) {
        let mut ids = self.bad();
        ids.extend(self.tops());
        self.packing = packing_constant(&cs.forest, &indicator(cs.len(), &ids)).lambda;
    }

    /// Moves `cubes` to the bad family and re-splits every regime into
    /// coherent pieces: a good cube opens a new regime when it is a former
    /// top, its parent is bad or belongs elsewhere, or a sibling is bad.
    pub fn demote(&mut self, cs: &CubeSystem, cubes: &[usize]) {
        for &q in cubes {
            if self.good[q] {
                self.good[q] = false;
                self.demoted.push(q);
            }
        }
        self.demoted.sort_unstable();
        let old_of = std::mem::take(&mut self.regime_of);
        let old = std::mem::take(&mut self.regimes);
        let mut regime_of = vec![None; cs.len()];
        let mut regimes: Vec<Regime> = Vec::new();
        for q in 0..cs.len() {
            let Some(r) = old_of[q] else { continue };
            if !self.good[q] {
                continue;
            }
            let inherit = cs.cubes[q].parent.and_then(|p| {
                let siblings_good = cs.cubes[p].children.iter().all(|&c| self.good[c]);
                (old[r].top != q && self.good[p] && old_of[p] == Some(r) && siblings_good)
                    .then(|| regime_of[p])
                    .flatten()
            });
            let id = match inherit {
                Some(id) => id,
                None => {
                    regimes.push(Regime { top: q, members: Vec::new(), graph: old[r].graph.clone() });
                    regimes.len() - 1
                }
            };
            regimes[id].members.push(q);
            regime_of[q] = Some(id);
        }
        self.regime_of = regime_of;
        self.regimes = regimes;
        self.repack(cs);
    }
}

fn resolve(e: &BoundarySet, cs: &CubeSystem, r: &CubeRef) -> Result<usize> {
    let y = r.y.unwrap_or_else(|| e.profile().map_or(0.0, |p| p.eval(r.x)));
    let (chain, _) = cs.containing_cubes_at(e, [r.x, y]);
    chain
        .into_iter()
        .find(|&q| cs.cubes[q].k_top <= r.k && r.k <= cs.cubes[q].k)
        .ok_or_else(|| Error::Invalid(format!("no cube of generation {} near x = {}", r.k, r.x)))
}

/// Largest ratio of the two one-sided distances between E and Γ near `q`,
/// measured in units of ℓ(Q). Distances to Γ use the vertical offset, which
/// bounds the true distance from above.
pub fn distance_ratio(e: &BoundarySet, cs: &CubeSystem, q: usize, graph: &Profile, k: f64) -> f64 {
    let c = &cs.cubes[q];
    let z: Point = c.center_point;
    let r = k * c.side;
    let mut worst = 0.0f64;
    for &m in &e.ball_members(z, r) {
        let y = e.samples[m as usize];
        worst = worst.max((y[1] - graph.eval(y[0])).abs());
    }
    let h = e.resolution();
    let n = (2.0 * r / h).ceil() as usize;
    // E is only known inside its window, so Γ is probed there too
    let [a, b] = e.spec.window;
    for i in 0..=n {
        let x = z[0] - r + i as f64 * (2.0 * r / n as f64);
        if x < a || x > b {
            continue;
        }
        let p = [x, graph.eval(x)];
        if dist(p, z) <= r {
            worst = worst.max(e.distance(p));
        }
    }
    worst / c.side
}

fn check_property3(e: &BoundarySet, cs: &CubeSystem, regime: &Regime, eta: f64, k: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for &q in &regime.members {
        let ratio = distance_ratio(e, cs, q, &regime.graph, k);
        if ratio >= eta {
            return Err(Error::Corona {
                cube: q,
                reason: format!("distance to the regime graph is {ratio:.4} l(Q), not below eta = {eta}"),
            });
        }
        worst = worst.max(ratio / eta);
    }
    Ok(worst)
}

/// Builds and validates a corona decomposition.
pub fn corona_provider(e: &BoundarySet, cs: &CubeSystem, spec: &CoronaSpec) -> Result<CoronaDecomposition> {
    let n = cs.len();
    let (eta, k) = match spec {
        CoronaSpec::TrivialGraph { eta, k } | CoronaSpec::Annotated { eta, k, .. } => (*eta, *k),
    };
    if !(eta > 0.0 && k >= 1.0) {
        return Err(Error::Invalid(format!("corona parameters eta = {eta}, K = {k} out of range")));
    }
    let mut good = vec![false; n];
    let mut regime_of = vec![None; n];
    let mut regimes = Vec::new();
    match spec {
        CoronaSpec::TrivialGraph { .. } => {
            let profile = match &e.spec.descriptor {
                crate::geometry::Descriptor::Hyperplane {} => Profile::flat(),
                crate::geometry::Descriptor::LipschitzGraph { profile } => profile.clone(),
                _ => {
                    return Err(Error::Corona {
                        cube: cs.roots().first().copied().unwrap_or(0),
                        reason: "trivial provider needs E to be a Lipschitz graph".into(),
                    })
                }
            };
            if profile.lipschitz() > eta {
                return Err(Error::Corona {
                    cube: cs.roots()[0],
                    reason: format!("Lipschitz constant {} exceeds eta = {eta}", profile.lipschitz()),
                });
            }
            for root in cs.roots() {
                let members = cs.forest.subtree(root);
                let mut members = members;
                members.sort_unstable();
                for &q in &members {
                    good[q] = true;
                    regime_of[q] = Some(regimes.len());
                }
                regimes.push(Regime { top: root, members, graph: profile.clone() });
            }
        }
        CoronaSpec::Annotated { regimes: specs, .. } => {
            for spec in specs {
                let top = resolve(e, cs, &spec.top)?;
                let limit = spec.depth.map(|d| spec.top.k + d);
                let cut: Vec<usize> = spec.exclude.iter().map(|r| resolve(e, cs, r)).collect::<Result<_>>()?;
                let mut members: Vec<usize> = cs
                    .forest
                    .subtree(top)
                    .into_iter()
                    .filter(|&q| limit.is_none_or(|l| cs.cubes[q].k_top <= l))
                    .filter(|&q| !cut.iter().any(|&c| cs.forest.contains(c, q)))
                    .collect();
                members.sort_unstable();
                if members.first() != Some(&top) {
                    return Err(Error::Corona { cube: top, reason: "regime top is excluded".into() });
                }
                let id = regimes.len();
                for &q in &members {
                    if let Some(other) = regime_of[q] {
                        return Err(Error::Corona {
                            cube: q,
                            reason: format!("cube claimed by regimes {other} and {id}"),
                        });
                    }
                    good[q] = true;
                    regime_of[q] = Some(id);
                }
                regimes.push(Regime { top, members, graph: spec.graph.clone() });
            }
            // Coherency: a member's children are all in or all out.
            for (id, r) in regimes.iter().enumerate() {
                for &q in &r.members {
                    let ch = &cs.cubes[q].children;
                    let inside = ch.iter().filter(|&&c| regime_of[c] == Some(id)).count();
                    if inside != 0 && inside != ch.len() {
                        return Err(Error::Corona {
                            cube: q,
                            reason: format!("only {inside} of {} children lie in the regime", ch.len()),
                        });
                    }
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for r in &regimes {
        worst = worst.max(check_property3(e, cs, r, eta, k)?);
    }
    let mut out = CoronaDecomposition {
        eta,
        k,
        good,
        regime_of,
        regimes,
        demoted: Vec::new(),
        worst_distance_ratio: worst,
        packing: 0.0,
    };
    out.repack(cs);
    Ok(out)
}
