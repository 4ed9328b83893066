//! Undirected agent topologies, Laplacian spectra and the decomposed-network
//! Laplacian.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Sweep cap for the cyclic Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm (relative to the full norm) at which Jacobi stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

/// Undirected, unweighted agent network stored as a dense 0/1 adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetworkGraph {
    n: usize,
    adjacency: Vec<u8>,
}

impl NetworkGraph {
    /// Builds a graph from an undirected edge list. Self loops and
    /// out-of-range endpoints are rejected; duplicate edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut adjacency = vec![0u8; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self loop on node {i}")));
            }
            adjacency[i * n + j] = 1;
            adjacency[j * n + i] = 1;
        }
        Ok(Self { n, adjacency })
    }

    /// Builds a graph from a full adjacency matrix, checking symmetry and
    /// a zero diagonal.
    pub fn from_adjacency(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut adjacency = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGraph(format!(
                    "adjacency row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for &a in row {
                if a > 1 {
                    return Err(Error::InvalidGraph(
                        "adjacency entries must be 0 or 1".into(),
                    ));
                }
            }
            adjacency.extend_from_slice(row);
        }
        for i in 0..n {
            if adjacency[i * n + i] != 0 {
                return Err(Error::InvalidGraph(format!("nonzero diagonal at node {i}")));
            }
            for j in 0..i {
                if adjacency[i * n + j] != adjacency[j * n + i] {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, adjacency })
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGraph(format!("cycle needs n >= 3, got {n}")));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Seeded random connected graph: a random spanning tree plus each
    /// remaining pair with probability `extra_edge_prob`.
    pub fn random_connected(n: usize, extra_edge_prob: f64, rng: &mut SplitMix64) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push((rng.below(i), i));
        }
        for i in 0..n {
            for j in i + 1..n {
                if rng.next_f64() < extra_edge_prob {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        f64::from(self.adjacency[i * self.n + j])
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        self.adjacency.chunks(self.n).map(<[u8]>::to_vec).collect()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.adjacency[i * self.n + j] == 1)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.adjacency[i * self.n + j] == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        self.first_unreachable().is_none()
    }

    fn first_unreachable(&self) -> Option<usize> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }

    pub fn ensure_connected(&self) -> Result<()> {
        match self.first_unreachable() {
            None => Ok(()),
            Some(unreachable) => Err(Error::Disconnected { unreachable }),
        }
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> SymmetricMatrix {
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    entries[i * n + j] = -self.a(i, j);
                }
            }
            entries[i * n + i] = self.degree(i) as f64;
        }
        SymmetricMatrix { order: n, entries }
    }
}

impl fmt::Display for NetworkGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "graph(n={}, edges={:?})", self.n, self.edges())
    }
}

/// How a topology is written in a scenario file: a named preset such as
/// `"cycle(4)"`, or an explicit edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Preset(String),
    Edges {
        n: usize,
        edges: Vec<(usize, usize)>,
    },
}

impl GraphSpec {
    /// Builds the graph and rejects it if it is disconnected.
    pub fn build(&self) -> Result<NetworkGraph> {
        let graph = match self {
            GraphSpec::Preset(s) => s.parse::<NetworkGraph>()?,
            GraphSpec::Edges { n, edges } => NetworkGraph::from_edges(*n, edges)?,
        };
        graph.ensure_connected()?;
        Ok(graph)
    }
}

impl FromStr for NetworkGraph {
    type Err = Error;

    /// Parses `cycle(n)`, `path(n)` or `complete(n)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::InvalidGraph(format!(
                "unrecognized graph preset `{s}` (expected cycle(n), path(n) or complete(n))"
            ))
        };
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let name = s[..open].trim();
        let n: usize = s[open + 1..s.len() - 1].trim().parse().map_err(|_| bad())?;
        match name {
            "cycle" => NetworkGraph::cycle(n),
            "path" => NetworkGraph::path(n),
            "complete" => NetworkGraph::complete(n),
            _ => Err(bad()),
        }
    }
}

/// Dense real symmetric matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SymmetricMatrix {
    /// Wraps row-major entries, checking symmetry to 1e-12 relative.
    pub fn new(order: usize, entries: Vec<f64>) -> Result<Self> {
        if order == 0 || entries.len() != order * order {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for order {order}, got {}",
                order * order,
                entries.len()
            )));
        }
        let scale = entries.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..order {
            for j in 0..i {
                let (a, b) = (entries[i * order + j], entries[j * order + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { order, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries
            .chunks(self.order)
            .map(|r| r.iter().sum())
            .collect()
    }

    /// `y = M x` for a stacked vector whose blocks have `m` components each,
    /// i.e. `(M ⊗ I_m) x`.
    pub fn kron_apply(&self, x: &[f64], m: usize) -> Vec<f64> {
        let n = self.order;
        let mut y = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..n {
                let a = self.get(i, j);
                if a != 0.0 {
                    for d in 0..m {
                        y[i * m + d] += a * x[j * m + d];
                    }
                }
            }
        }
        y
    }

    /// All eigenvalues, ascending, from cyclic Jacobi rotations.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        jacobi_eigenvalues(self)
    }
}

/// Cyclic Jacobi on a copy of `m`. Stops once the off-diagonal Frobenius
/// norm drops below `JACOBI_TOLERANCE * max(1, ||m||_F)`.
fn jacobi_eigenvalues(m: &SymmetricMatrix) -> Result<Vec<f64>> {
    let n = m.order;
    let mut a = m.entries.clone();
    let full_norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = JACOBI_TOLERANCE * full_norm.max(1.0);

    let off_norm = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off <= threshold {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNoConvergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Rotation angle annihilating a[p][q], in the stable form from
                // Golub & Van Loan.
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Second-smallest eigenvalue of `m` (the algebraic connectivity when `m`
/// is a Laplacian). A 1×1 matrix has no second eigenvalue and yields 0.
pub fn algebraic_connectivity(m: &SymmetricMatrix) -> Result<f64> {
    let eig = m.eigenvalues()?;
    Ok(eig.get(1).copied().unwrap_or(0.0))
}

/// Laplacian of the decomposed network, `[[L + I, -I], [-I, I]]`.
///
/// Rows `0..n` are the broadcast (alpha) sub-states, rows `n..2n` the hidden
/// (beta) ones; each beta node hangs off its own alpha node only.
pub fn decomposed_laplacian(l: &SymmetricMatrix) -> SymmetricMatrix {
    let n = l.order;
    let size = 2 * n;
    let mut entries = vec![0.0; size * size];
    for i in 0..n {
        for j in 0..n {
            entries[i * size + j] = l.get(i, j);
        }
        entries[i * size + i] += 1.0;
        entries[i * size + n + i] = -1.0;
        entries[(n + i) * size + i] = -1.0;
        entries[(n + i) * size + n + i] = 1.0;
    }
    SymmetricMatrix {
        order: size,
        entries,
    }
}

/// Closed-form `λ₂` of the decomposed Laplacian given `λ₂` of the original:
/// `(λ₂ + 2 - sqrt(λ₂² + 4)) / 2`.
pub fn predicted_decomposed_lambda2(lambda2: f64) -> f64 {
    // Rationalized form; the naive difference cancels badly for small λ₂.
    2.0 * lambda2 / (lambda2 + 2.0 + (lambda2 * lambda2 + 4.0).sqrt())
}

/// Eigenvalue pair of the decomposed Laplacian generated by one eigenvalue
/// `λ` of the original Laplacian.
pub fn decomposed_eigen_pair(lambda: f64) -> (f64, f64) {
    let root = (lambda * lambda + 4.0).sqrt();
    (
        predicted_decomposed_lambda2(lambda),
        0.5 * (lambda + 2.0 + root),
    )
}
