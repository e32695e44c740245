//! Problem families, the named catalogue, and the reference-solution oracle.
//!
//! Three families share one [`Problem`] enum:
//! * [`ConstrainedProblem`]: min f(x) s.t. Ax = b, x ∈ 𝒳.
//! * [`ConsensusProblem`]: min Σ fᵢ(xᵢ) s.t. Lx = 0, xᵢ ∈ 𝒳ᵢ.
//! * [`MonotropicProblem`]: min Σ fᵢ(xᵢ) s.t. Āx − d + Ly = 0, xᵢ ∈ 𝒳ᵢ.

mod builders;
mod oracle;
mod spec;

pub use builders::*;
pub use oracle::{reference_solution, OracleError, ReferenceSolution};
pub use spec::{ProblemSpec, ProblemSpecError};

use crate::graph::{GraphError, LiftedLaplacian, UndirectedGraph};
use crate::mirror_maps::{BlockMirror, MirrorError, MirrorMap};
use crate::numerics::{block_diag, DenseMatrix, DenseVector};
use crate::objective::Objective;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("unknown problem `{name}`; available: {available}")]
    Unknown { name: String, available: String },
    #[error(transparent)]
    Mirror(#[from] MirrorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ProblemError> {
    Err(ProblemError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedProblem {
    pub objective: Objective,
    pub a: DenseMatrix,
    pub b: DenseVector,
    pub mirror: MirrorMap,
    initial_dual: Option<DenseVector>,
    pub planted: Option<DenseVector>,
}

impl ConstrainedProblem {
    pub fn new(objective: Objective, a: DenseMatrix, b: DenseVector, mirror: MirrorMap) -> Result<Self, ProblemError> {
        let n = mirror.dim();
        if a.nrows() != b.len() {
            return invalid(format!("A has {} rows but b has length {}", a.nrows(), b.len()));
        }
        if a.ncols() != n || objective.dim() != n {
            return invalid(format!("A has {} columns, objective dim {}, mirror dim {n}", a.ncols(), objective.dim()));
        }
        Ok(Self { objective, a, b, mirror, initial_dual: None, planted: None })
    }

    /// Start from the primal point `x0` (u₀ = ∇ψ(x₀)).
    pub fn with_initial_primal(mut self, x0: &DenseVector) -> Result<Self, ProblemError> {
        self.initial_dual = Some(self.mirror.dual_point_for(x0)?);
        Ok(self)
    }

    pub fn initial_dual(&self) -> DenseVector {
        self.initial_dual.clone().unwrap_or_else(|| self.mirror.default_dual_start())
    }

    pub fn dim(&self) -> usize {
        self.mirror.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub objective: Objective,
    pub mirror: MirrorMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusProblem {
    pub agents: Vec<Agent>,
    pub graph: UndirectedGraph,
    pub laplacian: LiftedLaplacian,
    pub mirror: BlockMirror,
    initial_dual: Option<DenseVector>,
    /// Ground-truth signal every agent should agree on, if planted.
    pub planted: Option<DenseVector>,
}

impl ConsensusProblem {
    pub fn new(agents: Vec<Agent>, graph: UndirectedGraph) -> Result<Self, ProblemError> {
        if agents.len() != graph.n() {
            return invalid(format!("{} agents on a {}-node graph", agents.len(), graph.n()));
        }
        if !graph.is_connected() {
            return invalid("consensus graph must be connected");
        }
        let m = agents.first().map(|a| a.mirror.dim()).unwrap_or(0);
        if m == 0 || agents.iter().any(|a| a.mirror.dim() != m || a.objective.dim() != m) {
            return invalid("all agents must share one positive block dimension");
        }
        let laplacian = graph.lift(m)?;
        let mirror = BlockMirror::new(agents.iter().map(|a| a.mirror.clone()).collect());
        Ok(Self { agents, graph, laplacian, mirror, initial_dual: None, planted: None })
    }

    pub fn block_dim(&self) -> usize {
        self.laplacian.block_dim()
    }

    pub fn dim(&self) -> usize {
        self.laplacian.dim()
    }

    pub fn initial_dual(&self) -> DenseVector {
        self.initial_dual.clone().unwrap_or_else(|| self.mirror.default_dual_start())
    }

    pub fn with_initial_dual(mut self, u0: DenseVector) -> Result<Self, ProblemError> {
        if u0.len() != self.dim() {
            return invalid("initial dual has the wrong length");
        }
        self.initial_dual = Some(u0);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotropicAgent {
    pub objective: Objective,
    pub mirror: MirrorMap,
    /// m × pᵢ coupling block.
    pub a: DenseMatrix,
    /// Local share dᵢ ∈ ℝᵐ of the right-hand side.
    pub d: DenseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotropicProblem {
    pub agents: Vec<MonotropicAgent>,
    pub graph: UndirectedGraph,
    pub laplacian: LiftedLaplacian,
    pub mirror: BlockMirror,
    initial_dual: Option<DenseVector>,
    pub planted: Option<DenseVector>,
}

impl MonotropicProblem {
    pub fn new(agents: Vec<MonotropicAgent>, graph: UndirectedGraph) -> Result<Self, ProblemError> {
        if agents.len() != graph.n() {
            return invalid(format!("{} agents on a {}-node graph", agents.len(), graph.n()));
        }
        if !graph.is_connected() {
            return invalid("monotropic graph must be connected");
        }
        let m = agents.first().map(|a| a.a.nrows()).unwrap_or(0);
        for (i, ag) in agents.iter().enumerate() {
            let p = ag.mirror.dim();
            if ag.a.nrows() != m || ag.d.len() != m || ag.a.ncols() != p || ag.objective.dim() != p || m == 0 {
                return invalid(format!("agent {i}: inconsistent coupling block dimensions"));
            }
        }
        let laplacian = graph.lift(m)?;
        let mirror = BlockMirror::new(agents.iter().map(|a| a.mirror.clone()).collect());
        Ok(Self { agents, graph, laplacian, mirror, initial_dual: None, planted: None })
    }

    /// Rows per agent block (m).
    pub fn block_dim(&self) -> usize {
        self.laplacian.block_dim()
    }

    /// Σ pᵢ.
    pub fn primal_dim(&self) -> usize {
        self.mirror.dim()
    }

    /// n·m, the length of λ, v, y, z.
    pub fn dual_dim(&self) -> usize {
        self.laplacian.dim()
    }

    /// Ā = blkdiag(A₁, …, Aₙ).
    pub fn a_bar(&self) -> DenseMatrix {
        block_diag(&self.agents.iter().map(|a| a.a.clone()).collect::<Vec<_>>())
    }

    pub fn d_stacked(&self) -> DenseVector {
        let m = self.block_dim();
        let mut d = DenseVector::zeros(self.dual_dim());
        for (i, ag) in self.agents.iter().enumerate() {
            d.rows_mut(i * m, m).copy_from(&ag.d);
        }
        d
    }

    /// out = Ā x, blockwise.
    pub fn apply_a_bar_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.block_dim();
        for (i, ag) in self.agents.iter().enumerate() {
            let r = self.mirror.range(i);
            let xi = nalgebra::DVectorView::from_slice(&x[r.clone()], r.len());
            let mut oi = nalgebra::DVectorViewMut::from_slice(&mut out[i * m..(i + 1) * m], m);
            oi.gemv(1.0, &ag.a, &xi, 0.0);
        }
    }

    /// out = Āᵀ v, blockwise.
    pub fn apply_a_bar_t_into(&self, v: &[f64], out: &mut [f64]) {
        let m = self.block_dim();
        for (i, ag) in self.agents.iter().enumerate() {
            let r = self.mirror.range(i);
            let vi = nalgebra::DVectorView::from_slice(&v[i * m..(i + 1) * m], m);
            let len = r.len();
            let mut oi = nalgebra::DVectorViewMut::from_slice(&mut out[r], len);
            oi.gemv_tr(1.0, &ag.a, &vi, 0.0);
        }
    }

    pub fn initial_dual(&self) -> DenseVector {
        self.initial_dual.clone().unwrap_or_else(|| self.mirror.default_dual_start())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Constrained(ConstrainedProblem),
    Consensus(ConsensusProblem),
    Monotropic(MonotropicProblem),
}

impl Problem {
    pub fn family(&self) -> &'static str {
        match self {
            Self::Constrained(_) => "constrained",
            Self::Consensus(_) => "consensus",
            Self::Monotropic(_) => "monotropic",
        }
    }

    pub fn is_distributed(&self) -> bool {
        !matches!(self, Self::Constrained(_))
    }

    /// Length of the stacked primal x.
    pub fn primal_dim(&self) -> usize {
        match self {
            Self::Constrained(p) => p.dim(),
            Self::Consensus(p) => p.dim(),
            Self::Monotropic(p) => p.primal_dim(),
        }
    }

    /// Per-block objectives paired with their ranges in the stacked x.
    pub fn objective_blocks(&self) -> Vec<(std::ops::Range<usize>, &Objective)> {
        match self {
            Self::Constrained(p) => vec![(0..p.dim(), &p.objective)],
            Self::Consensus(p) => p.agents.iter().enumerate().map(|(i, a)| (p.mirror.range(i), &a.objective)).collect(),
            Self::Monotropic(p) => p.agents.iter().enumerate().map(|(i, a)| (p.mirror.range(i), &a.objective)).collect(),
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.objective_blocks().iter().all(|(_, f)| f.is_smooth())
    }

    /// Exact f(x).
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_blocks().iter().map(|(r, f)| f.value(&x[r.clone()])).sum()
    }

    /// f̂(x, μ).
    pub fn smoothed_objective_value(&self, x: &[f64], mu: f64) -> f64 {
        self.objective_blocks().iter().map(|(r, f)| f.smoothed_value(&x[r.clone()], mu)).sum()
    }

    /// Aggregated smoothing constant κ.
    pub fn kappa(&self) -> f64 {
        self.objective_blocks().iter().map(|(_, f)| f.kappa()).sum()
    }

    /// Largest violation of x ∈ 𝒳 (per-agent sets for distributed problems).
    pub fn membership_residual(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constrained(p) => p.mirror.membership_residual(x),
            Self::Consensus(p) => p.mirror.membership_residual(x),
            Self::Monotropic(p) => p.mirror.membership_residual(x),
        }
    }

    pub fn planted(&self) -> Option<&DenseVector> {
        match self {
            Self::Constrained(p) => p.planted.as_ref(),
            Self::Consensus(p) => p.planted.as_ref(),
            Self::Monotropic(p) => p.planted.as_ref(),
        }
    }
}

/// Catalogue metadata plus a seeded constructor.
#[derive(Clone)]
pub struct ProblemEntry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Systems that accept this problem, preferred first.
    pub systems: &'static [&'static str],
    pub seeded: bool,
    pub build: fn(u64) -> Result<Problem, ProblemError>,
}

impl std::fmt::Debug for ProblemEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemEntry").field("name", &self.name).finish()
    }
}

/// Name → constructor registry for problems.
#[derive(Debug, Clone, Default)]
pub struct ProblemRegistry {
    entries: BTreeMap<&'static str, ProblemEntry>,
}

impl ProblemRegistry {
    pub fn register(&mut self, entry: ProblemEntry) {
        self.entries.insert(entry.name, entry);
    }

    /// The built-in catalogue.
    pub fn builtin() -> Self {
        let mut r = Self::default();
        for e in builders::catalogue_entries() {
            r.register(e);
        }
        r
    }

    pub fn get(&self, name: &str) -> Result<&ProblemEntry, ProblemError> {
        self.entries.get(name).ok_or_else(|| ProblemError::Unknown { name: name.to_string(), available: self.names().join(", ") })
    }

    pub fn build(&self, name: &str, seed: u64) -> Result<Problem, ProblemError> {
        (self.get(name)?.build)(seed)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ProblemEntry> {
        self.entries.values()
    }
}
