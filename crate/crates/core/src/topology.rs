//! Communication graphs and gossip matrices.
//!
//! A gossip matrix `L` is symmetric positive semidefinite with
//! `Null(L) = span{1}` and a sparsity pattern contained in the graph. The
//! stacked operator `W = L ⊗ I_n` is never formed: each agent computes its
//! own block `sum_k L_ik v_k` from the values exchanged with its neighbors.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::blocks::{axpy, AgentBlocks};
use crate::error::{Error, Result};

/// Undirected simple graph on agents `0..m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    m: usize,
    neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from 0-indexed pairs. Duplicate pairs (in either
    /// orientation) collapse to one edge; self-loops are rejected.
    pub fn new(m: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSize("graph needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in pairs {
            if i >= m || j >= m {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {m} agents"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at agent {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let mut neighbors = vec![Vec::new(); m];
        for &(i, j) in &set {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Graph {
            m,
            neighbors,
            edges: set.into_iter().collect(),
        })
    }

    pub fn complete(m: usize) -> Result<Self> {
        Graph::new(m, (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))))
    }

    pub fn ring(m: usize) -> Result<Self> {
        if m < 3 {
            return Graph::path(m);
        }
        Graph::new(m, (0..m).map(|i| (i, (i + 1) % m)))
    }

    pub fn path(m: usize) -> Result<Self> {
        Graph::new(m, (1..m).map(|i| (i - 1, i)))
    }

    /// `rows x cols` lattice with 4-neighborhoods, agents numbered row-major.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    pairs.push((i, i + 1));
                }
                if r + 1 < rows {
                    pairs.push((i, i + cols));
                }
            }
        }
        Graph::new(rows * cols, pairs)
    }

    /// Most-square grid with exactly `m` agents (a path when `m` is prime).
    pub fn grid_for(m: usize) -> Result<Self> {
        let mut rows = (m as f64).sqrt().floor() as usize;
        while rows > 1 && !m.is_multiple_of(rows) {
            rows -= 1;
        }
        let rows = rows.max(1);
        Graph::grid(rows, m / rows)
    }

    /// Erdős–Rényi `G(m, p)`, resampled until connected.
    pub fn erdos_renyi<R: Rng>(m: usize, p: f64, rng: &mut R) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Parameter(format!("edge probability must be in (0, 1], got {p}")));
        }
        const MAX_ATTEMPTS: usize = 10_000;
        for _ in 0..MAX_ATTEMPTS {
            let mut pairs = Vec::new();
            for i in 0..m {
                for j in i + 1..m {
                    if rng.random::<f64>() < p {
                        pairs.push((i, j));
                    }
                }
            }
            let g = Graph::new(m, pairs)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::Parameter(format!(
            "no connected G({m}, {p}) sample in {MAX_ATTEMPTS} attempts"
        )))
    }

    #[inline]
    pub fn agents(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Number of connected components, by breadth-first traversal.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.m];
        let mut count = 0;
        for s in 0..self.m {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(i) = queue.pop_front() {
                for &k in &self.neighbors[i] {
                    if !seen[k] {
                        seen[k] = true;
                        queue.push_back(k);
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.components() == 1
    }

    /// Parses the edge-list format: `m` on the first line, then one
    /// 1-indexed `i j` pair per line. Blank lines and `#` comments are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, first) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing agent count".into(),
        })?;
        let m: usize = first.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad agent count {first:?}"),
        })?;
        let mut pairs = Vec::new();
        for (line, l) in lines {
            let ids: Vec<&str> = l.split_whitespace().collect();
            let parse = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 && v <= m => Ok(v - 1),
                    _ => Err(Error::Parse {
                        line,
                        msg: format!("bad agent id {s:?} (expected 1..={m})"),
                    }),
                }
            };
            if ids.len() != 2 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected `i j`, got {l:?}"),
                });
            }
            pairs.push((parse(ids[0])?, parse(ids[1])?));
        }
        Graph::new(m, pairs)
    }

    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        Graph::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{}\n", self.m);
        for &(i, j) in &self.edges {
            s.push_str(&format!("{} {}\n", i + 1, j + 1));
        }
        s
    }
}

/// Built-in graph families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    /// Complete graph with the projection gossip `I - 11^T/m`.
    Complete,
    Ring,
    Path,
    Grid,
    /// Erdős–Rényi with edge probability `p`, resampled until connected.
    ErdosRenyi(f64),
}

impl Topology {
    /// Graph and gossip matrix for `m` agents. Only the Erdős–Rényi family
    /// consumes `rng`.
    pub fn build<R: Rng>(&self, m: usize, rng: &mut R) -> Result<(Graph, GossipMatrix)> {
        if m < 2 {
            return Err(Error::InvalidSize(format!("need at least 2 agents, got {m}")));
        }
        let g = match *self {
            Topology::Complete => {
                return Ok((Graph::complete(m)?, build_projection_gossip(m)?));
            }
            Topology::Ring => Graph::ring(m)?,
            Topology::Path => Graph::path(m)?,
            Topology::Grid => Graph::grid_for(m)?,
            Topology::ErdosRenyi(p) => Graph::erdos_renyi(m, p, rng)?,
        };
        let l = build_laplacian_gossip(&g)?;
        Ok((g, l))
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Topology::Complete),
            "ring" => Ok(Topology::Ring),
            "path" => Ok(Topology::Path),
            "grid" => Ok(Topology::Grid),
            _ => match s.strip_prefix("er:") {
                Some(p) => p
                    .parse::<f64>()
                    .map(Topology::ErdosRenyi)
                    .map_err(|_| Error::Config(format!("bad edge probability in {s:?}"))),
                None => Err(Error::Config(format!(
                    "unknown topology {s:?} (expected complete, ring, path, grid or er:<p>)"
                ))),
            },
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Complete => write!(f, "complete"),
            Topology::Ring => write!(f, "ring"),
            Topology::Path => write!(f, "path"),
            Topology::Grid => write!(f, "grid"),
            Topology::ErdosRenyi(p) => write!(f, "er:{p}"),
        }
    }
}

/// Read access to agents' vectors, as seen by one agent after an exchange.
pub trait BlockSource {
    fn block_of(&self, k: usize) -> Option<&[f64]>;
}

impl BlockSource for HashMap<usize, Vec<f64>> {
    fn block_of(&self, k: usize) -> Option<&[f64]> {
        self.get(&k).map(Vec::as_slice)
    }
}

impl BlockSource for BTreeMap<usize, Vec<f64>> {
    fn block_of(&self, k: usize) -> Option<&[f64]> {
        self.get(&k).map(Vec::as_slice)
    }
}

/// Centralized view: every block is visible.
impl BlockSource for AgentBlocks {
    fn block_of(&self, k: usize) -> Option<&[f64]> {
        (k < self.agents()).then(|| self.block(k))
    }
}

/// Gossip matrix stored as per-agent sparse rows, diagonal included.
#[derive(Debug, Clone)]
pub struct GossipMatrix {
    m: usize,
    rows: Vec<Vec<(usize, f64)>>,
    lambda_max: f64,
}

impl GossipMatrix {
    /// Builds from a dense symmetric matrix, keeping nonzero entries. The
    /// spectral bound is computed here by dense eigendecomposition.
    pub fn from_dense(dense: &DMatrix<f64>) -> Result<Self> {
        let m = dense.nrows();
        if dense.ncols() != m || m < 2 {
            return Err(Error::InvalidSize(format!(
                "gossip matrix must be square with m >= 2, got {}x{}",
                dense.nrows(),
                dense.ncols()
            )));
        }
        let rows = (0..m)
            .map(|i| {
                (0..m)
                    .filter(|&k| k == i || dense[(i, k)] != 0.0)
                    .map(|k| (k, dense[(i, k)]))
                    .collect()
            })
            .collect();
        let sym = (dense + dense.transpose()) * 0.5;
        let lambda_max = SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(GossipMatrix {
            m,
            rows,
            lambda_max,
        })
    }

    #[inline]
    pub fn agents(&self) -> usize {
        self.m
    }

    /// Row `i` as `(k, L_ik)` pairs sorted by `k`, including `k = i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, k: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(c, _)| c == k)
            .map_or(0.0, |&(_, v)| v)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.m, self.m);
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                d[(i, k)] = v;
            }
        }
        d
    }

    /// Largest eigenvalue of `L`.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `||B||_2^2 = lambda_max(I + W^2) = 1 + lambda_max(L)^2` for
    /// `B = [I; L ⊗ I_n]`.
    pub fn b_norm_sq(&self) -> f64 {
        1.0 + self.lambda_max * self.lambda_max
    }

    /// Frobenius value `||B||_F^2 = m n + n ||L||_F^2`; a looser bound that
    /// needs no eigendecomposition.
    pub fn b_norm_sq_frobenius(&self, n: usize) -> f64 {
        let lf: f64 = self
            .rows
            .iter()
            .flat_map(|r| r.iter().map(|&(_, v)| v * v))
            .sum();
        (self.m * n) as f64 + n as f64 * lf
    }

    /// Whether `L^2 = L` within `tol` (max-abs), e.g. the projection gossip.
    pub fn is_idempotent(&self, tol: f64) -> bool {
        let d = self.dense();
        (&d * &d - &d).amax() <= tol
    }

    /// Agent `i`'s block of `(L ⊗ I_n) v`: `sum_{k in N_i ∪ {i}} L_ik v_k`,
    /// using only values visible to agent `i`.
    pub fn local_weighted_sum<S: BlockSource + ?Sized>(
        &self,
        i: usize,
        values: &S,
        out: &mut [f64],
    ) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(k, w) in &self.rows[i] {
            let v = values
                .block_of(k)
                .ok_or(Error::IncompleteExchange { agent: i, missing: k })?;
            if v.len() != out.len() {
                return Err(Error::Protocol(format!(
                    "agent {k} published a block of length {}, expected {}",
                    v.len(),
                    out.len()
                )));
            }
            axpy(w, v, out);
        }
        Ok(())
    }

    /// `(L ⊗ I_n) v` evaluated in one place. For monitoring and tests; the
    /// solvers go through the network instead.
    pub fn apply(&self, v: &AgentBlocks) -> AgentBlocks {
        let mut out = AgentBlocks::zeros(v.agents(), v.dim());
        for i in 0..self.m {
            for &(k, w) in &self.rows[i] {
                axpy(w, v.block(k), out.block_mut(i));
            }
        }
        out
    }
}

/// `L = I - (1/m) 11^T`: the orthogonal projector onto `1^⊥`, supported on
/// the complete graph. Its eigenvalues are `{0, 1, ..., 1}`.
pub fn build_projection_gossip(m: usize) -> Result<GossipMatrix> {
    if m < 2 {
        return Err(Error::InvalidSize(format!("need at least 2 agents, got {m}")));
    }
    let inv = 1.0 / m as f64;
    let rows = (0..m)
        .map(|i| {
            (0..m)
                .map(|k| (k, if k == i { 1.0 - inv } else { -inv }))
                .collect()
        })
        .collect();
    Ok(GossipMatrix {
        m,
        rows,
        lambda_max: 1.0,
    })
}

/// Combinatorial Laplacian `D - A` of a connected graph.
pub fn build_laplacian_gossip(g: &Graph) -> Result<GossipMatrix> {
    let components = g.components();
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    laplacian_unchecked(g)
}

fn laplacian_unchecked(g: &Graph) -> Result<GossipMatrix> {
    let mut d = DMatrix::zeros(g.agents(), g.agents());
    for &(i, j) in g.edges() {
        d[(i, j)] = -1.0;
        d[(j, i)] = -1.0;
        d[(i, i)] += 1.0;
        d[(j, j)] += 1.0;
    }
    GossipMatrix::from_dense(&d)
}

/// Laplacian of any graph, connected or not. Used to exhibit gossip
/// validation failures.
pub fn laplacian_of(g: &Graph) -> Result<GossipMatrix> {
    laplacian_unchecked(g)
}

/// Outcome of checking the four gossip-matrix conditions.
#[derive(Debug, Clone, Serialize)]
pub struct GossipReport {
    pub symmetric: bool,
    pub positive_semidefinite: bool,
    pub null_space_is_consensus: bool,
    pub graph_induced: bool,
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue after the null one (the spectral gap).
    pub second_smallest_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub null_dimension: usize,
}

impl GossipReport {
    pub fn all_pass(&self) -> bool {
        self.symmetric && self.positive_semidefinite && self.null_space_is_consensus && self.graph_induced
    }
}

/// Absolute tolerance for the eigenvalue checks, scaled by `max(1, |L|)`.
pub const GOSSIP_EIG_TOL: f64 = 1e-10;

/// Checks symmetry, positive semidefiniteness, `Null(L) = span{1}` and that
/// the sparsity pattern is induced by `g`. Failures are reported, not raised.
pub fn validate_gossip(l: &GossipMatrix, g: &Graph) -> Result<GossipReport> {
    if l.agents() != g.agents() {
        return Err(Error::InvalidSize(format!(
            "gossip matrix has {} agents, graph has {}",
            l.agents(),
            g.agents()
        )));
    }
    let m = l.agents();
    let d = l.dense();
    let scale = d.amax().max(1.0);
    let tol = GOSSIP_EIG_TOL * scale;

    let symmetric = (&d - d.transpose()).amax() <= 1e-14 * scale;
    let graph_induced = (0..m).all(|i| {
        l.row(i)
            .iter()
            .all(|&(k, v)| k == i || v == 0.0 || g.has_edge(i, k))
    });

    let eig = SymmetricEigen::new((&d + d.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let null: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&k| eig.eigenvalues[k].abs() <= tol)
        .collect();
    let positive_semidefinite = vals[0] >= -tol;
    let null_space_is_consensus = null.len() == 1 && {
        let v = eig.eigenvectors.column(null[0]);
        let align = v.iter().sum::<f64>().abs() / ((m as f64).sqrt() * v.norm());
        align >= 1.0 - 1e-8
    };

    Ok(GossipReport {
        symmetric,
        positive_semidefinite,
        null_space_is_consensus,
        graph_induced,
        min_eigenvalue: vals[0],
        second_smallest_eigenvalue: vals.get(1).copied().unwrap_or(f64::NAN),
        max_eigenvalue: vals[m - 1],
        null_dimension: null.len(),
    })
}
