//! Packing constants, sparse witnesses via max-flow, dyadic and ball
//! maximal operators, and the discrete Carleson embedding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow::FlowNetwork;
use crate::geometry::{dist, Point};
use crate::tree::Forest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Packing {
    pub lambda: f64,
    /// Cube attaining the maximum.
    pub argmax: Option<usize>,
    /// Cubes skipped because σ(Q₀) = 0.
    pub skipped: usize,
}

/// Subtree sums Σ_{Q∈𝒜, Q⊆Q₀} σ(Q) for every Q₀.
pub fn subtree_sums(f: &Forest, member: &[bool]) -> Vec<f64> {
    let mut s: Vec<f64> = (0..f.len()).map(|q| if member[q] { f.measure[q] } else { 0.0 }).collect();
    for q in (0..f.len()).rev() {
        if let Some(p) = f.parent[q] {
            s[p] += s[q];
        }
    }
    s
}

/// Carleson packing constant of the collection `member` (indicator over
/// nodes), maximized over every node of the forest.
pub fn packing_constant(f: &Forest, member: &[bool]) -> Packing {
    packing_over(f, member, 0..f.len())
}

/// Packing constant with Q₀ restricted to the subtree of `q0`.
pub fn packing_constant_within(f: &Forest, member: &[bool], q0: usize) -> Packing {
    packing_over(f, member, f.subtree(q0))
}

fn packing_over(f: &Forest, member: &[bool], over: impl IntoIterator<Item = usize>) -> Packing {
    let s = subtree_sums(f, member);
    let mut best = Packing { lambda: 0.0, argmax: None, skipped: 0 };
    for q in over {
        if f.measure[q] <= 0.0 {
            best.skipped += 1;
            continue;
        }
        let r = s[q] / f.measure[q];
        if r > best.lambda {
            best.lambda = r;
            best.argmax = Some(q);
        }
    }
    best
}

pub fn indicator(n: usize, ids: &[usize]) -> Vec<bool> {
    let mut v = vec![false; n];
    for &i in ids {
        v[i] = true;
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseWitness {
    pub lambda: f64,
    /// For each cube, the atoms of E_Q with the (possibly fractional) weight
    /// allotted to it.
    pub parts: Vec<(usize, Vec<(u32, f64)>)>,
}

impl SparseWitness {
    /// Checks E_Q ⊆ Q, disjointness in measure, and σ(E_Q) ≥ λσ(Q).
    pub fn validate(&self, f: &Forest, tol: f64) -> bool {
        let mut used = vec![0.0; f.weights.len()];
        for (q, part) in &self.parts {
            let mut mass = 0.0;
            for &(a, w) in part {
                if f.members[*q].binary_search(&a).is_err() {
                    return false;
                }
                used[a as usize] += w;
                mass += w;
            }
            if mass < self.lambda * f.measure[*q] * (1.0 - tol) - tol {
                return false;
            }
        }
        used.iter().zip(&f.weights).all(|(u, w)| *u <= w * (1.0 + tol) + tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SparseOutcome {
    Feasible(SparseWitness),
    /// A subfamily whose demand exceeds the measure of its union.
    Infeasible {
        cut: Vec<usize>,
        demand: f64,
        capacity: f64,
    },
}

impl SparseOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SparseOutcome::Feasible(_))
    }
}

/// Decide λ-sparseness of the collection exactly by max-flow on
/// source → cube (λσ(Q)) → atom (w_a) → sink (w_a).
pub fn sparse_witness(f: &Forest, collection: &[usize], lambda: f64) -> SparseOutcome {
    let mut atoms: Vec<u32> = collection.iter().flat_map(|&q| f.members[q].iter().copied()).collect();
    atoms.sort_unstable();
    atoms.dedup();
    let nq = collection.len();
    let (s, t) = (0, 1);
    let node_q = |i: usize| 2 + i;
    let node_a = |j: usize| 2 + nq + j;
    let total_w: f64 = atoms.iter().map(|&a| f.weights[a as usize]).sum();
    let eps = 1e-15 * total_w.max(1e-300);
    let mut g = FlowNetwork::new(2 + nq + atoms.len(), eps);
    let mut demand = 0.0;
    let mut handles = Vec::with_capacity(nq);
    for (i, &q) in collection.iter().enumerate() {
        let d = lambda * f.measure[q];
        demand += d;
        g.add_edge(s, node_q(i), d);
        let mut hs = Vec::with_capacity(f.members[q].len());
        for &a in &f.members[q] {
            let j = atoms.binary_search(&a).unwrap();
            hs.push((a, g.add_edge(node_q(i), node_a(j), f.weights[a as usize])));
        }
        handles.push(hs);
    }
    for (j, &a) in atoms.iter().enumerate() {
        g.add_edge(node_a(j), t, f.weights[a as usize]);
    }
    let value = g.max_flow(s, t);
    let tol = 1e-9 * demand.max(1e-300);
    if value >= demand - tol {
        let parts = collection
            .iter()
            .zip(&handles)
            .map(|(&q, hs)| (q, hs.iter().map(|&(a, h)| (a, g.flow_on(h))).filter(|&(_, w)| w > 0.0).collect()))
            .collect();
        SparseOutcome::Feasible(SparseWitness { lambda, parts })
    } else {
        let side = g.source_side(s);
        let cut: Vec<usize> =
            collection.iter().enumerate().filter(|(i, _)| side[node_q(*i)]).map(|(_, &q)| q).collect();
        let demand_cut = cut.iter().map(|&q| lambda * f.measure[q]).sum();
        let mut union: Vec<u32> = cut.iter().flat_map(|&q| f.members[q].iter().copied()).collect();
        union.sort_unstable();
        union.dedup();
        let capacity = union.iter().map(|&a| f.weights[a as usize]).sum();
        SparseOutcome::Infeasible { cut, demand: demand_cut, capacity }
    }
}

/// Average of `vals` over each node.
pub fn cube_averages(f: &Forest, vals: &[f64]) -> Vec<f64> {
    (0..f.len())
        .map(|q| {
            if f.measure[q] <= 0.0 {
                return 0.0;
            }
            f.members[q].iter().map(|&a| f.weights[a as usize] * vals[a as usize].abs()).sum::<f64>() / f.measure[q]
        })
        .collect()
}

/// M_𝔻 f at every atom: sup of cube averages along its containing chain.
pub fn dyadic_maximal(f: &Forest, vals: &[f64]) -> Vec<f64> {
    let avg = cube_averages(f, vals);
    let mut best_down = avg.clone();
    for q in 0..f.len() {
        if let Some(p) = f.parent[q] {
            best_down[q] = best_down[q].max(best_down[p]);
        }
    }
    (0..vals.len())
        .map(|a| {
            let d = f.deepest[a];
            if d == usize::MAX {
                0.0
            } else {
                best_down[d]
            }
        })
        .collect()
}

/// Log-spaced radii from `r0` up to `r1` with `per_octave` steps per doubling.
pub fn log_radii(r0: f64, r1: f64, per_octave: usize) -> Vec<f64> {
    let n = ((r1 / r0).log2() * per_octave as f64).ceil().max(0.0) as usize;
    (0..=n).map(|i| r0 * 2f64.powf(i as f64 / per_octave as f64)).collect()
}

/// Ball maximal function on the samples: sup over balls Δ(y, r) ∋ x with
/// y a sample and r on the given radius grid.
pub fn hl_maximal(samples: &[Point], weights: &[f64], vals: &[f64], radii: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let partial: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|y| {
            let mut order: Vec<(f64, usize)> = (0..n).map(|i| (dist(samples[y], samples[i]), i)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut cut = Vec::with_capacity(radii.len());
            let mut avgs = Vec::with_capacity(radii.len());
            let (mut m, mut s, mut k) = (0.0, 0.0, 0usize);
            for &r in radii {
                while k < n && order[k].0 <= r {
                    let i = order[k].1;
                    m += weights[i];
                    s += weights[i] * vals[i].abs();
                    k += 1;
                }
                cut.push(k);
                avgs.push(if m > 0.0 { s / m } else { 0.0 });
            }
            // A sample at sorted position p sees every radius with cut > p.
            let mut out = Vec::with_capacity(n);
            let mut run = 0.0f64;
            let mut hi = n;
            for j in (0..radii.len()).rev() {
                for p in cut[j]..hi {
                    out.push((order[p].1, run));
                }
                hi = hi.min(cut[j]);
                run = run.max(avgs[j]);
            }
            for p in 0..hi {
                out.push((order[p].1, run));
            }
            out
        })
        .collect();
    let mut m = vec![0.0f64; n];
    for part in partial {
        for (i, v) in part {
            m[i] = m[i].max(v);
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub lambda: f64,
    pub holds: bool,
}

/// Σ_{Q∈𝒜, Q⊆Q₀} ∫_Q f  versus  Λ ∫_{Q₀} M_𝔻 f, with Λ the packing
/// constant of 𝒜 inside Q₀.
pub fn carleson_embedding_check(f: &Forest, vals: &[f64], member: &[bool], q0: usize) -> EmbeddingCheck {
    let integral =
        |q: usize, v: &[f64]| -> f64 { f.members[q].iter().map(|&a| f.weights[a as usize] * v[a as usize]).sum() };
    let lhs: f64 = f.subtree(q0).into_iter().filter(|&q| member[q]).map(|q| integral(q, vals)).sum();
    let lambda = packing_constant_within(f, member, q0).lambda;
    let m = dyadic_maximal(f, vals);
    let rhs = lambda * integral(q0, &m);
    let holds = lhs <= rhs * (1.0 + 1e-12) + 1e-300;
    EmbeddingCheck { lhs, rhs, lambda, holds }
}
