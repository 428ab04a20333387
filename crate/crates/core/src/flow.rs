//! Dinic max-flow on real capacities.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
struct Edge {
    to: usize,
    cap: f64,
    flow: f64,
    rev: usize,
}

#[derive(Clone, Debug)]
pub struct FlowNetwork {
    adj: Vec<Vec<Edge>>,
    level: Vec<i32>,
    iter: Vec<usize>,
    eps: f64,
}

impl FlowNetwork {
    pub fn new(n: usize, eps: f64) -> Self {
        Self { adj: vec![Vec::new(); n], level: vec![0; n], iter: vec![0; n], eps }
    }

    /// Adds `u -> v` and returns its handle `(u, index)`.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64) -> (usize, usize) {
        let ru = self.adj[v].len() + usize::from(u == v);
        let rv = self.adj[u].len();
        self.adj[u].push(Edge { to: v, cap, flow: 0.0, rev: ru });
        self.adj[v].push(Edge { to: u, cap: 0.0, flow: 0.0, rev: rv });
        (u, rv)
    }

    pub fn flow_on(&self, handle: (usize, usize)) -> f64 {
        self.adj[handle.0][handle.1].flow
    }

    fn residual(&self, e: &Edge) -> f64 {
        e.cap - e.flow
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for i in 0..self.adj[u].len() {
                let e = &self.adj[u][i];
                if self.level[e.to] < 0 && self.residual(e) > self.eps {
                    self.level[e.to] = self.level[u] + 1;
                    q.push_back(e.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: f64) -> f64 {
        if u == t {
            return pushed;
        }
        while self.iter[u] < self.adj[u].len() {
            let i = self.iter[u];
            let (to, res) = {
                let e = &self.adj[u][i];
                (e.to, self.residual(e))
            };
            if res > self.eps && self.level[to] == self.level[u] + 1 {
                let d = self.dfs(to, t, pushed.min(res));
                if d > 0.0 {
                    self.adj[u][i].flow += d;
                    let r = self.adj[u][i].rev;
                    self.adj[to][r].flow -= d;
                    return d;
                }
            }
            self.iter[u] += 1;
        }
        0.0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= 0.0 {
                    break;
                }
                total += f;
            }
        }
        total
    }

    /// Nodes reachable from `s` in the residual graph (source side of a
    /// minimum cut) after `max_flow`.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for e in &self.adj[u] {
                if !seen[e.to] && self.residual(e) > self.eps {
                    seen[e.to] = true;
                    q.push_back(e.to);
                }
            }
        }
        seen
    }
}
