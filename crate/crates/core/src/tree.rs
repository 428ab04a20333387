//! Rooted forest of nested atom sets, the combinatorial skeleton shared by
//! the dyadic grid and the packing/sparse machinery.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Nested family of finite atom sets. Parents always carry smaller indices
/// than their children, so index order is a top-down traversal.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Forest {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub members: Vec<Vec<u32>>,
    pub weights: Vec<f64>,
    pub measure: Vec<f64>,
    pub depth: Vec<usize>,
    /// Deepest node containing each atom (`usize::MAX` if none).
    pub deepest: Vec<usize>,
}

impl Forest {
    pub fn new(parent: Vec<Option<usize>>, members: Vec<Vec<u32>>, weights: Vec<f64>) -> Result<Self> {
        let n = parent.len();
        if members.len() != n {
            return Err(Error::Invalid("members/parent length mismatch".into()));
        }
        let mut children = vec![Vec::new(); n];
        let mut depth = vec![0usize; n];
        for (q, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= q {
                    return Err(Error::Invalid(format!("parent {p} of node {q} is not earlier")));
                }
                children[p].push(q);
                depth[q] = depth[p] + 1;
            }
        }
        let mut members = members;
        for m in members.iter_mut() {
            m.sort_unstable();
            m.dedup();
            if let Some(&a) = m.last() {
                if a as usize >= weights.len() {
                    return Err(Error::Invalid(format!("atom {a} out of range")));
                }
            }
        }
        let measure = members.iter().map(|m| m.iter().map(|&a| weights[a as usize]).sum()).collect();
        let mut deepest = vec![usize::MAX; weights.len()];
        for (q, m) in members.iter().enumerate() {
            for &a in m {
                deepest[a as usize] = q;
            }
        }
        Ok(Self { parent, children, members, weights, measure, depth, deepest })
    }

    /// Complete `branching`-ary tree with `depth + 1` levels; each leaf owns
    /// `atoms_per_leaf` atoms of equal weight, total mass one.
    pub fn full_tree(branching: usize, depth: usize, atoms_per_leaf: usize) -> Self {
        let leaves = branching.pow(depth as u32);
        let natoms = leaves * atoms_per_leaf;
        let w = 1.0 / natoms as f64;
        let mut parent = vec![None];
        let mut ranges = vec![(0usize, natoms)];
        let mut level = vec![0usize];
        for _ in 0..depth {
            let mut next = Vec::new();
            for &q in &level {
                let (lo, hi) = ranges[q];
                let step = (hi - lo) / branching;
                for c in 0..branching {
                    parent.push(Some(q));
                    ranges.push((lo + c * step, lo + (c + 1) * step));
                    next.push(parent.len() - 1);
                }
            }
            level = next;
        }
        let members = ranges.iter().map(|&(lo, hi)| (lo as u32..hi as u32).collect()).collect();
        Self::new(parent, members, vec![w; natoms]).expect("full tree is well formed")
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&q| self.parent[q].is_none()).collect()
    }

    /// `q` followed by its ancestors, finest first.
    pub fn ancestors(&self, q: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(q), move |&c| self.parent[c])
    }

    /// True when `a` contains `q` (a node contains itself).
    pub fn contains(&self, a: usize, q: usize) -> bool {
        if self.depth[q] < self.depth[a] {
            return false;
        }
        let mut c = q;
        while self.depth[c] > self.depth[a] {
            c = self.parent[c].unwrap();
        }
        c == a
    }

    /// `q` and all of its descendants in top-down order.
    pub fn subtree(&self, q: usize) -> Vec<usize> {
        let mut out = vec![q];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.children[out[i]]);
            i += 1;
        }
        out
    }

    /// Containing chain of an atom, coarsest first.
    pub fn chain(&self, atom: usize) -> Vec<usize> {
        let d = self.deepest[atom];
        if d == usize::MAX {
            return Vec::new();
        }
        let mut v: Vec<usize> = self.ancestors(d).collect();
        v.reverse();
        v
    }

    /// Ancestor of `q` at tree depth `depth` (if `q` is at least that deep).
    pub fn ancestor_at_depth(&self, q: usize, depth: usize) -> Option<usize> {
        self.ancestors(q).find(|&a| self.depth[a] == depth)
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}
