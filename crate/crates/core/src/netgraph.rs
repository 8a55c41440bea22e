//! Agent-network topologies and their algebraic views.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::SymmetricEigen;
use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::{rng_from_seed, Mat};

pub const MAX_RETRIES: usize = 1000;

/// Undirected simple graph over `n_agents` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentNetwork {
    n_agents: usize,
    adj: Vec<bool>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GraphMatrices {
    pub degree: Mat,
    pub laplacian: Mat,
    pub normalized_laplacian: Mat,
}

impl AgentNetwork {
    /// Graph with no edges.
    pub fn empty(n_agents: usize) -> Self {
        AgentNetwork { n_agents, adj: vec![false; n_agents * n_agents], seed: 0 }
    }

    pub fn complete(n_agents: usize) -> Self {
        let mut net = Self::empty(n_agents);
        for i in 0..n_agents {
            for j in (i + 1)..n_agents {
                net.set_edge(i, j, true);
            }
        }
        net
    }

    pub fn from_edges(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_agents == 0 {
            return invalid("network needs at least one agent");
        }
        let mut net = Self::empty(n_agents);
        for &(i, j) in edges {
            if i >= n_agents || j >= n_agents {
                return invalid(format!("edge ({i},{j}) out of range for {n_agents} agents"));
            }
            if i == j {
                return invalid(format!("self-loop at node {i}"));
            }
            net.set_edge(i, j, true);
        }
        Ok(net)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n_agents + j]
    }

    fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        let n = self.n_agents;
        self.adj[i * n + j] = on;
        self.adj[j * n + i] = on;
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n_agents).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n_agents).filter(|&j| self.has_edge(i, j)).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n_agents).map(|i| self.degree(i)).collect()
    }

    /// Edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n_agents {
            for j in (i + 1)..self.n_agents {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn n_edges(&self) -> usize {
        self.edges().len()
    }

    pub fn density(&self) -> f64 {
        let n = self.n_agents as f64;
        if self.n_agents < 2 {
            return 0.0;
        }
        self.n_edges() as f64 / (n * (n - 1.0) / 2.0)
    }

    pub fn adjacency(&self) -> Mat {
        Mat::from_fn(self.n_agents, self.n_agents, |i, j| if self.has_edge(i, j) { 1.0 } else { 0.0 })
    }

    /// Hop distances from `src`; `None` for unreachable nodes.
    pub fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_agents];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for v in 0..self.n_agents {
                if self.has_edge(u, v) && dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Longest shortest path; `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.n_agents {
            for d in self.bfs(s) {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "L {}", self.n_agents);
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
        let mut parts = header.split_whitespace();
        let n = match (parts.next(), parts.next()) {
            (Some("L"), Some(n)) => n
                .parse::<usize>()
                .map_err(|e| Error::Parse { line: hl + 1, msg: e.to_string() })?,
            _ => return Err(Error::Parse { line: hl + 1, msg: "expected `L <n_agents>`".into() }),
        };
        let mut edges = Vec::new();
        for (ln, line) in lines {
            let nums: Vec<&str> = line.split_whitespace().collect();
            if nums.len() != 2 {
                return Err(Error::Parse { line: ln + 1, msg: "expected `i j`".into() });
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|e| Error::Parse { line: ln + 1, msg: e.to_string() })
            };
            edges.push((parse(nums[0])?, parse(nums[1])?));
        }
        Self::from_edges(n, &edges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_edge_list(&std::fs::read_to_string(path)?)
    }
}

pub fn is_connected(net: &AgentNetwork) -> bool {
    net.n_agents() > 0 && net.bfs(0).iter().all(Option::is_some)
}

pub fn graph_matrices(net: &AgentNetwork) -> GraphMatrices {
    let n = net.n_agents();
    let a = net.adjacency();
    let deg: Vec<f64> = net.degrees().into_iter().map(|d| d as f64).collect();
    let degree = Mat::from_diagonal(&nalgebra::DVector::from_vec(deg.clone()));
    let laplacian = &degree - &a;
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let normalized_laplacian = Mat::from_fn(n, n, |i, j| laplacian[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    GraphMatrices { degree, laplacian, normalized_laplacian }
}

/// Laplacian spectrum in ascending order.
pub fn laplacian_eigenvalues(net: &AgentNetwork) -> Vec<f64> {
    let lap = graph_matrices(net).laplacian;
    let mut ev: Vec<f64> = SymmetricEigen::new(lap).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn gen_erdos_renyi(n_agents: usize, p: f64, seed: u64) -> Result<AgentNetwork> {
    if n_agents < 2 {
        return invalid("Erdos-Renyi needs L >= 2");
    }
    if !(p > 0.0 && p <= 1.0) {
        return invalid(format!("edge probability {p} outside (0,1]"));
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_RETRIES {
        let mut net = AgentNetwork::empty(n_agents);
        net.seed = seed;
        for i in 0..n_agents {
            for j in (i + 1)..n_agents {
                if rng.random::<f64>() < p {
                    net.set_edge(i, j, true);
                }
            }
        }
        if is_connected(&net) {
            return Ok(net);
        }
    }
    Err(Error::RetriesExhausted(MAX_RETRIES))
}

pub fn gen_linear(n_agents: usize, k: usize) -> Result<AgentNetwork> {
    if k < 1 || k >= n_agents {
        return invalid(format!("successor count {k} must satisfy 1 <= K < L={n_agents}"));
    }
    let mut net = AgentNetwork::empty(n_agents);
    for i in 0..n_agents {
        for j in (i + 1)..=(i + k).min(n_agents - 1) {
            net.set_edge(i, j, true);
        }
    }
    Ok(net)
}

pub fn gen_small_world(n_agents: usize, k: usize, alpha: f64, seed: u64) -> Result<AgentNetwork> {
    if k < 1 || 2 * k >= n_agents {
        return invalid(format!("ring half-width {k} must satisfy 1 <= K and 2K < L={n_agents}"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("rewiring probability {alpha} outside [0,1]"));
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_RETRIES {
        let mut net = AgentNetwork::empty(n_agents);
        net.seed = seed;
        let mut lattice = Vec::new();
        for i in 0..n_agents {
            for off in 1..=k {
                let j = (i + off) % n_agents;
                net.set_edge(i, j, true);
                lattice.push((i, j));
            }
        }
        for (i, j) in lattice {
            if rng.random::<f64>() >= alpha {
                continue;
            }
            let free: Vec<usize> = (0..n_agents).filter(|&t| t != i && !net.has_edge(i, t)).collect();
            if free.is_empty() {
                continue;
            }
            let t = free[rng.random_range(0..free.len())];
            net.set_edge(i, j, false);
            net.set_edge(i, t, true);
        }
        if is_connected(&net) {
            return Ok(net);
        }
    }
    Err(Error::RetriesExhausted(MAX_RETRIES))
}

pub fn gen_scale_free(n_agents: usize, m: usize, seed: u64) -> Result<AgentNetwork> {
    if m < 1 {
        return invalid("attachment count m must be >= 1");
    }
    if n_agents < 2 {
        return invalid("scale-free graph needs L >= 2");
    }
    let mut rng = rng_from_seed(seed);
    let mut net = AgentNetwork::empty(n_agents);
    net.seed = seed;
    let core = (m + 1).min(n_agents);
    for i in 0..core {
        for j in (i + 1)..core {
            net.set_edge(i, j, true);
        }
    }
    for new in core..n_agents {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let weights: Vec<usize> =
                (0..new).map(|t| if targets.contains(&t) { 0 } else { net.degree(t) }).collect();
            let total: usize = weights.iter().sum();
            let mut pick = rng.random_range(0..total);
            let mut chosen = 0;
            for (t, &w) in weights.iter().enumerate() {
                if pick < w {
                    chosen = t;
                    break;
                }
                pick -= w;
            }
            targets.push(chosen);
        }
        for t in targets {
            net.set_edge(new, t, true);
        }
    }
    Ok(net)
}
