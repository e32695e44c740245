//! Undirected communication graphs and their Laplacians.

use crate::numerics::{kron, DenseMatrix, NumericsError};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph: {0}")]
    Parameter(String),
    #[error("size mismatch: {0}")]
    Size(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UndirectedGraph {
    adjacency: DenseMatrix,
}

/// Config-file description of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Topology { topology: Topology, n: usize },
    Edges { n: usize, edges: Vec<Edge> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Ring,
    Path,
    Complete,
    Single,
}

/// `[i, j]` with unit weight or `[i, j, w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Edge {
    Unit(usize, usize),
    Weighted(usize, usize, f64),
}

impl UndirectedGraph {
    pub fn from_adjacency(adjacency: DenseMatrix) -> Result<Self, GraphError> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(GraphError::Parameter("adjacency must be square and nonempty".into()));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(GraphError::Parameter(format!("self loop at node {i}")));
            }
            for j in 0..n {
                let a = adjacency[(i, j)];
                if !(a >= 0.0 && a.is_finite()) || a != adjacency[(j, i)] {
                    return Err(GraphError::Parameter(format!("weight ({i},{j}) must be finite, nonnegative and symmetric")));
                }
            }
        }
        Ok(Self { adjacency })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut a = DenseMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(GraphError::Parameter(format!("bad edge ({i},{j}) for {n} nodes")));
            }
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        Self::from_adjacency(a)
    }

    pub fn ring(n: usize) -> Result<Self, GraphError> {
        if n < 3 {
            return Err(GraphError::Parameter(format!("ring needs n >= 3, got {n}")));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, 1.0));
            }
        }
        Self::from_edges(n, &edges)
    }

    /// One node, no edges.
    pub fn single() -> Self {
        Self { adjacency: DenseMatrix::zeros(1, 1) }
    }

    pub fn from_spec(spec: &GraphSpec) -> Result<Self, GraphError> {
        match spec {
            GraphSpec::Topology { topology, n } => match topology {
                Topology::Ring => Self::ring(*n),
                Topology::Path => Self::path(*n),
                Topology::Complete => Self::complete(*n),
                Topology::Single if *n == 1 => Ok(Self::single()),
                Topology::Single => Err(GraphError::Parameter("single topology has n = 1".into())),
            },
            GraphSpec::Edges { n, edges } => {
                let e: Vec<_> = edges
                    .iter()
                    .map(|e| match *e {
                        Edge::Unit(i, j) => (i, j, 1.0),
                        Edge::Weighted(i, j, w) => (i, j, w),
                    })
                    .collect();
                Self::from_edges(*n, &e)
            }
        }
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DenseMatrix {
        &self.adjacency
    }

    /// Edges `(i, j, a_ij)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adjacency[(i, j)] > 0.0 {
                    out.push((i, j, self.adjacency[(i, j)]));
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if self.adjacency[(i, j)] > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Degree matrix minus adjacency.
    pub fn laplacian(&self) -> DenseMatrix {
        let n = self.n();
        let mut l = -self.adjacency.clone();
        for i in 0..n {
            l[(i, i)] = self.adjacency.row(i).sum();
        }
        l
    }

    pub fn lift(&self, m: usize) -> Result<LiftedLaplacian, GraphError> {
        LiftedLaplacian::new(self.laplacian(), m)
    }
}

/// L = Lₙ ⊗ Iₘ, applied blockwise without forming the Kronecker product.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedLaplacian {
    ln: DenseMatrix,
    m: usize,
}

impl LiftedLaplacian {
    pub fn new(ln: DenseMatrix, m: usize) -> Result<Self, GraphError> {
        if m == 0 || ln.nrows() != ln.ncols() {
            return Err(GraphError::Size("block dimension must be positive and Lₙ square".into()));
        }
        Ok(Self { ln, m })
    }

    pub fn nodes(&self) -> usize {
        self.ln.nrows()
    }

    pub fn block_dim(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.nodes() * self.m
    }

    pub fn node_laplacian(&self) -> &DenseMatrix {
        &self.ln
    }

    pub fn dense(&self) -> Result<DenseMatrix, GraphError> {
        Ok(kron(&self.ln, &DenseMatrix::identity(self.m, self.m))?)
    }

    fn check(&self, len: usize) -> Result<(), GraphError> {
        if len == self.dim() {
            Ok(())
        } else {
            Err(GraphError::Size(format!("vector of length {len} against lifted dimension {}", self.dim())))
        }
    }

    /// out = L x.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), GraphError> {
        self.check(x.len())?;
        self.check(out.len())?;
        let (n, m) = (self.nodes(), self.m);
        out.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                let w = self.ln[(i, j)];
                if w != 0.0 {
                    let (oi, xj) = (i * m, j * m);
                    for k in 0..m {
                        out[oi + k] += w * x[xj + k];
                    }
                }
            }
        }
        Ok(())
    }

    /// xᵀ L x, clamped below at zero.
    pub fn consensus_residual(&self, x: &[f64]) -> Result<f64, GraphError> {
        let mut lx = vec![0.0; x.len()];
        self.apply_into(x, &mut lx)?;
        Ok(x.iter().zip(&lx).map(|(a, b)| a * b).sum::<f64>().max(0.0))
    }
}
