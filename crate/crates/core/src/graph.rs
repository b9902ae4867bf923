//! Communication topologies: validation, Laplacians, spanning-tree checks,
//! the normalized left null vector, random generators and adjacency I/O.
//!
//! Edge convention: `adjacency[(i, j)] > 0` means agent `i` listens to agent
//! `j`, i.e. information flows `j -> i`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Rejection-resampling budget for the random generators.
pub const MAX_GENERATION_ATTEMPTS: u32 = 1000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("adjacency matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("adjacency weight ({row}, {col}) = {value} is negative or not finite")]
    InvalidWeight { row: usize, col: usize, value: f64 },
    #[error("self-loop at node {node} (weight {value})")]
    SelfLoop { node: usize, value: f64 },
    #[error("graph has no directed spanning tree: Laplacian null space has dimension {dimension}")]
    NullSpaceDimension { dimension: usize },
    #[error("invalid parameters for {model}: {reason}")]
    InvalidModel { model: String, reason: String },
    #[error("no spanning-tree sample for {model} after {attempts} attempts")]
    GenerationFailed { model: String, attempts: u32 },
    #[error("malformed adjacency file: {0}")]
    Parse(String),
}

/// Validated directed weighted graph together with its Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBackbone {
    adjacency: DMatrix<f64>,
    laplacian: DMatrix<f64>,
}

impl NetworkBackbone {
    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Directed edges `(from, to, weight)` in row-major order of the adjacency.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.adjacency[(i, j)];
                if w > 0.0 {
                    out.push((j, i, w));
                }
            }
        }
        out
    }

    /// True when column sums of the Laplacian vanish (in-weight equals out-weight).
    pub fn is_weight_balanced(&self, tol: f64) -> bool {
        (0..self.n()).all(|j| self.laplacian.column(j).sum().abs() <= tol)
    }
}

/// Validates `adjacency` and assembles `L = D - A`.
pub fn build_backbone(adjacency: DMatrix<f64>) -> Result<NetworkBackbone, GraphError> {
    let (rows, cols) = adjacency.shape();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    let n = rows;
    for i in 0..n {
        for j in 0..n {
            let value = adjacency[(i, j)];
            if !value.is_finite() || value < 0.0 {
                return Err(GraphError::InvalidWeight { row: i, col: j, value });
            }
        }
        if adjacency[(i, i)] != 0.0 {
            return Err(GraphError::SelfLoop {
                node: i,
                value: adjacency[(i, i)],
            });
        }
    }
    let mut laplacian = -adjacency.clone();
    for i in 0..n {
        laplacian[(i, i)] = adjacency.row(i).sum();
    }
    Ok(NetworkBackbone {
        adjacency,
        laplacian,
    })
}

/// Whether some root reaches every node along directed edges.
pub fn has_spanning_tree(backbone: &NetworkBackbone) -> bool {
    let n = backbone.n();
    if n <= 1 {
        return true;
    }
    // out-neighbours: j -> i whenever a_ij > 0
    let out: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&i| backbone.adjacency[(i, j)] > 0.0).collect())
        .collect();
    (0..n).any(|root| {
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &out[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    })
}

/// Nonnegative `p` with `pᵀL = 0` and `pᵀ1 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftEigenvector(pub DVector<f64>);

impl LeftEigenvector {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    /// Weighted sum `pᵀ v`.
    pub fn weigh(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(p, x)| p * x).sum()
    }
}

/// Normalized left null vector of the Laplacian.
///
/// Fails unless the graph has a directed spanning tree, which is exactly the
/// condition for the zero eigenvalue to be simple.
pub fn left_eigenvector(backbone: &NetworkBackbone) -> Result<LeftEigenvector, GraphError> {
    let n = backbone.n();
    if n == 1 {
        return Ok(LeftEigenvector(DVector::from_element(1, 1.0)));
    }
    if !has_spanning_tree(backbone) {
        let basis = linalg::null_space(&backbone.laplacian.transpose(), 1e-10);
        return Err(GraphError::NullSpaceDimension {
            dimension: basis.ncols().max(2),
        });
    }
    let svd = linalg::right_svd(&backbone.laplacian.transpose());
    let mut p = svd.smallest_vector();
    let total = p.sum();
    p /= total;
    // exact zeros for nodes outside the root component come back as ±1e-17
    for v in p.iter_mut() {
        if v.abs() < 1e-15 {
            *v = 0.0;
        }
    }
    Ok(LeftEigenvector(p))
}

/// Random undirected graph families, materialized as bidirectional unit edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "UPPERCASE")]
pub enum RandomModel {
    /// Erdős–Rényi: each pair joined independently with probability `rho`.
    Er { rho: f64 },
    /// Barabási–Albert: clique of `m` seeds, then each node attaches to `m`
    /// existing nodes by preferential attachment.
    Ba { m: usize },
    /// Watts–Strogatz: ring lattice with `z` neighbours, each lattice edge
    /// rewired with probability `rewire`.
    Ws { z: usize, rewire: f64 },
}

impl RandomModel {
    pub fn name(&self) -> &'static str {
        match self {
            RandomModel::Er { .. } => "ER",
            RandomModel::Ba { .. } => "BA",
            RandomModel::Ws { .. } => "WS",
        }
    }

    /// The headline parameter (ρ, m or z) as a string, for report tables.
    pub fn param_label(&self) -> String {
        match self {
            RandomModel::Er { rho } => format!("rho={rho}"),
            RandomModel::Ba { m } => format!("m={m}"),
            RandomModel::Ws { z, rewire } => format!("z={z},rewire={rewire}"),
        }
    }

    fn validate(&self, n: usize) -> Result<(), GraphError> {
        let bad = |reason: String| {
            Err(GraphError::InvalidModel {
                model: self.to_string(),
                reason,
            })
        };
        if n < 2 {
            return bad(format!("need at least 2 nodes, got {n}"));
        }
        match *self {
            RandomModel::Er { rho } if !(rho > 0.0 && rho <= 1.0) => {
                bad(format!("rho must lie in (0, 1], got {rho}"))
            }
            RandomModel::Ba { m } if m < 1 || m >= n => {
                bad(format!("m must satisfy 1 <= m < n, got m={m}, n={n}"))
            }
            RandomModel::Ws { z, .. } if z % 2 != 0 || z == 0 || z >= n => {
                bad(format!("z must be even with 0 < z < n, got z={z}, n={n}"))
            }
            RandomModel::Ws { rewire, .. } if !(0.0..=1.0).contains(&rewire) => {
                bad(format!("rewire must lie in [0, 1], got {rewire}"))
            }
            _ => Ok(()),
        }
    }

    fn sample_edges(&self, n: usize, rng: &mut ChaCha8Rng) -> BTreeSet<(usize, usize)> {
        match *self {
            RandomModel::Er { rho } => erdos_renyi(n, rho, rng),
            RandomModel::Ba { m } => barabasi_albert(n, m, rng),
            RandomModel::Ws { z, rewire } => watts_strogatz(n, z, rewire, rng),
        }
    }
}

impl fmt::Display for RandomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.param_label())
    }
}

fn undirected(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn erdos_renyi(n: usize, rho: f64, rng: &mut ChaCha8Rng) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rho >= 1.0 || rng.random::<f64>() < rho {
                edges.insert((a, b));
            }
        }
    }
    edges
}

fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    // each node appears once per incident edge
    let mut stubs: Vec<usize> = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            edges.insert((a, b));
            stubs.push(a);
            stubs.push(b);
        }
    }
    for new in m..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            let t = if stubs.is_empty() {
                rng.random_range(0..new)
            } else {
                stubs[rng.random_range(0..stubs.len())]
            };
            targets.insert(t);
        }
        for t in targets {
            edges.insert(undirected(new, t));
            stubs.push(new);
            stubs.push(t);
        }
    }
    edges
}

fn watts_strogatz(
    n: usize,
    z: usize,
    rewire: f64,
    rng: &mut ChaCha8Rng,
) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for a in 0..n {
        for d in 1..=z / 2 {
            edges.insert(undirected(a, (a + d) % n));
        }
    }
    if rewire <= 0.0 {
        return edges;
    }
    for d in 1..=z / 2 {
        for a in 0..n {
            let b = (a + d) % n;
            if rng.random::<f64>() >= rewire {
                continue;
            }
            let degree_a = edges.iter().filter(|&&(u, v)| u == a || v == a).count();
            if degree_a >= n - 1 {
                continue;
            }
            let mut c = rng.random_range(0..n);
            while c == a || edges.contains(&undirected(a, c)) {
                c = rng.random_range(0..n);
            }
            edges.remove(&undirected(a, b));
            edges.insert(undirected(a, c));
        }
    }
    edges
}

/// Decorrelated child seed for `(seed, attempt)`.
pub fn derived_seed(seed: u64, attempt: u32) -> u64 {
    // splitmix64 finalizer over (seed, attempt)
    let mut z = seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples a spanning-tree backbone from `model`, resampling with derived
/// seeds until the spanning-tree condition holds.
pub fn generate_random(
    model: RandomModel,
    n: usize,
    seed: u64,
) -> Result<NetworkBackbone, GraphError> {
    model.validate(n)?;
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, attempt));
        let edges = model.sample_edges(n, &mut rng);
        let mut adjacency = DMatrix::zeros(n, n);
        for (a, b) in edges {
            adjacency[(a, b)] = 1.0;
            adjacency[(b, a)] = 1.0;
        }
        let backbone = build_backbone(adjacency)?;
        if has_spanning_tree(&backbone) {
            return Ok(backbone);
        }
    }
    Err(GraphError::GenerationFailed {
        model: model.to_string(),
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

/// CSV form: `n` on the first line, then `n` comma-separated weight rows.
pub fn to_csv(backbone: &NetworkBackbone) -> String {
    let n = backbone.n();
    let mut out = format!("{n}\n");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| format!("{}", backbone.adjacency[(i, j)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str) -> Result<NetworkBackbone, GraphError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| GraphError::Parse("empty input".into()))?;
    let n: usize = header
        .parse()
        .map_err(|_| GraphError::Parse(format!("header `{header}` is not a node count")))?;
    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| GraphError::Parse(format!("expected {n} rows, found {i}")))?;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n {
            return Err(GraphError::Parse(format!(
                "row {i} has {} entries, expected {n}",
                cells.len()
            )));
        }
        for (j, cell) in cells.iter().enumerate() {
            adjacency[(i, j)] = cell
                .parse()
                .map_err(|_| GraphError::Parse(format!("bad weight `{cell}` at ({i}, {j})")))?;
        }
    }
    if lines.next().is_some() {
        return Err(GraphError::Parse(format!("more than {n} rows")));
    }
    build_backbone(adjacency)
}

/// JSON form: `{"n": .., "edges": [[from, to, weight], ..]}`, zero-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjacencyJson {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

pub fn to_json(backbone: &NetworkBackbone) -> AdjacencyJson {
    AdjacencyJson {
        n: backbone.n(),
        edges: backbone.edges(),
    }
}

pub fn from_json(doc: &AdjacencyJson) -> Result<NetworkBackbone, GraphError> {
    let n = doc.n;
    let mut adjacency = DMatrix::zeros(n, n);
    for &(from, to, w) in &doc.edges {
        if from >= n || to >= n {
            return Err(GraphError::Parse(format!(
                "edge ({from}, {to}) out of range for n={n}"
            )));
        }
        adjacency[(to, from)] = w;
    }
    build_backbone(adjacency)
}

/// The five-agent unit-weight topology of the reference case study.
pub fn reference_topology() -> NetworkBackbone {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(5, 5, &[
        0.0, 0.0, 1.0, 1.0, 0.0,
        1.0, 0.0, 0.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0, 1.0,
        1.0, 0.0, 0.0, 0.0, 1.0,
        0.0, 1.0, 1.0, 1.0, 0.0,
    ]);
    build_backbone(a).expect("reference topology is valid")
}
