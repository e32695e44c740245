//! Builders for the experiment instances and small sanity problems.

use super::{
    Agent, ConsensusProblem, ConstrainedProblem, MonotropicAgent, MonotropicProblem, Problem, ProblemEntry, ProblemError,
};
use crate::graph::UndirectedGraph;
use crate::mirror_maps::MirrorMap;
use crate::numerics::{random_orthogonal_rows, random_psd, DenseMatrix, DenseVector, SeededRng};
use crate::objective::Objective;
use crate::projections::Projector;

fn v(xs: &[f64]) -> DenseVector {
    DenseVector::from_column_slice(xs)
}

fn proj(p: Result<Projector, crate::projections::ProjectionError>) -> Result<MirrorMap, ProblemError> {
    p.map(MirrorMap::Projection).map_err(|e| ProblemError::Invalid(e.to_string()))
}

/// min ½x² s.t. x = 1 with the Euclidean map.
pub fn build_scalar() -> Result<ConstrainedProblem, ProblemError> {
    ConstrainedProblem::new(
        Objective::HalfSquaredDistance { c: v(&[0.0]) },
        DenseMatrix::from_element(1, 1, 1.0),
        v(&[1.0]),
        MirrorMap::Euclidean { dim: 1 },
    )
}

/// min ½‖x − (0.6, 0.3, 0.4)‖² s.t. 1ᵀx = 1; optimum (0.5, 0.2, 0.3).
pub fn build_quad3(mirror: MirrorMap) -> Result<ConstrainedProblem, ProblemError> {
    ConstrainedProblem::new(
        Objective::HalfSquaredDistance { c: v(&[0.6, 0.3, 0.4]) },
        DenseMatrix::from_element(1, 3, 1.0),
        v(&[1.0]),
        mirror,
    )
}

/// Logistic loss on the unit simplex with two linear equalities.
pub fn build_logistic_centralized() -> Result<ConstrainedProblem, ProblemError> {
    ConstrainedProblem::new(
        Objective::Logistic { w: v(&[1.0; 4]) },
        DenseMatrix::from_row_slice(2, 4, &[0.2, 1.0, 1.0, 2.0, 0.0, 1.0, 0.5, 1.0]),
        v(&[1.0, 1.0]),
        MirrorMap::SimplexEntropy { dim: 4 },
    )
}

/// Four logistic agents on a ring with simplex, orthant, ball and half-space sets.
pub fn build_dis_logistic() -> Result<ConsensusProblem, ProblemError> {
    let agents = (1..=4)
        .map(|i| {
            let i = i as f64;
            let objective = Objective::Logistic { w: v(&[i - 1.0, i / 2.0, i, i + 1.0]) };
            let mirror = match i as usize {
                1 => MirrorMap::SimplexEntropy { dim: 4 },
                2 => MirrorMap::ItakuraSaito { dim: 4 },
                3 => proj(Projector::sphere(v(&[0.1, 0.2, 0.5, 0.8]), 2.0))?,
                _ => proj(Projector::half_space(v(&[1.0; 4]), 4.0))?,
            };
            Ok(Agent { objective, mirror })
        })
        .collect::<Result<Vec<_>, ProblemError>>()?;
    ConsensusProblem::new(agents, UndirectedGraph::ring(4)?)
}

/// Distributed box-constrained QP coupled through Σ xᵢ = Σ dᵢ.
///
/// Agent `i` (0-based) owns fᵢ = xᵢᵀAᵢxᵢ with Aᵢ = GᵢᵀGᵢ, the box
/// `[i+2, i+3]ᵐ`, and dᵢ = 7·1ₘ. With ten agents the boxes sum to
/// `[65, 75]` per coordinate, which contains Σ dᵢ = 70.
pub fn build_dist_qp(seed: u64) -> Result<MonotropicProblem, ProblemError> {
    dist_qp_instance(seed, 10, 5)
}

pub fn dist_qp_instance(seed: u64, agents: usize, m: usize) -> Result<MonotropicProblem, ProblemError> {
    let mut rng = SeededRng::new(seed);
    let list = (0..agents)
        .map(|i| {
            let q = random_psd(&mut rng, m);
            let k = i as f64;
            let lo = DenseVector::from_element(m, k + 2.0);
            let hi = DenseVector::from_element(m, k + 3.0);
            Ok(MonotropicAgent {
                objective: Objective::Quadratic { q },
                mirror: proj(Projector::boxed(lo, hi))?,
                a: DenseMatrix::identity(m, m),
                d: DenseVector::from_element(m, 7.0),
            })
        })
        .collect::<Result<Vec<_>, ProblemError>>()?;
    MonotropicProblem::new(list, UndirectedGraph::ring(agents)?)
}

/// `k`-sparse signal of length `n`; magnitudes in (0.5, 1.5].
fn planted_signal(rng: &mut SeededRng, n: usize, k: usize, signed: bool) -> DenseVector {
    let mut support = rng.distinct_indices(n, k);
    support.sort_unstable();
    let mut x = DenseVector::zeros(n);
    for i in support {
        let mag = 0.5 + rng.uniform();
        let sign = if signed && rng.uniform() <= 0.5 { -1.0 } else { 1.0 };
        x[i] = sign * mag;
    }
    x
}

/// Default seeds for the randomized catalogue entries.
pub const NBP_SEED: u64 = 7;
pub const DBP_ROW_SEED: u64 = 5;
pub const DBP_COL_SEED: u64 = 12;
pub const DIST_QP_SEED: u64 = 5;

/// Starting level x₀ = c·1 for the nonnegative basis pursuit run.
pub const NBP_INITIAL_LEVEL: f64 = 0.05;

/// Nonnegative basis pursuit: min ‖x‖₁ s.t. Ax = b, x ≥ 0.
pub fn build_nbp(seed: u64) -> Result<ConstrainedProblem, ProblemError> {
    nbp_instance(seed, 10, 40, 2)
}

pub fn nbp_instance(seed: u64, rows: usize, cols: usize, sparsity: usize) -> Result<ConstrainedProblem, ProblemError> {
    let mut rng = SeededRng::new(seed);
    let a = random_orthogonal_rows(&mut rng, rows, cols).map_err(|e| ProblemError::Invalid(e.to_string()))?;
    let x0 = planted_signal(&mut rng, cols, sparsity, false);
    let b = &a * &x0;
    let mut p = ConstrainedProblem::new(Objective::L1 { dim: cols }, a, b, MirrorMap::NegEntropy { dim: cols })?
        .with_initial_primal(&DenseVector::from_element(cols, NBP_INITIAL_LEVEL))?;
    p.planted = Some(x0);
    Ok(p)
}

/// Basis pursuit with the sensing rows split across agents on a ring.
///
/// Agent `i` holds rows `i·m/k .. (i+1)·m/k` as its affine set.
pub fn build_dbp_row(seed: u64) -> Result<ConsensusProblem, ProblemError> {
    dbp_row_instance(seed, 5, 10, 60, 2)
}

pub fn dbp_row_instance(seed: u64, agents: usize, rows: usize, cols: usize, sparsity: usize) -> Result<ConsensusProblem, ProblemError> {
    if agents == 0 || !rows.is_multiple_of(agents) {
        return Err(ProblemError::Invalid(format!("{rows} rows do not split evenly over {agents} agents")));
    }
    let mut rng = SeededRng::new(seed);
    let a = random_orthogonal_rows(&mut rng, rows, cols).map_err(|e| ProblemError::Invalid(e.to_string()))?;
    let x0 = planted_signal(&mut rng, cols, sparsity, true);
    let b = &a * &x0;
    let per = rows / agents;
    let list = (0..agents)
        .map(|i| {
            let ai = a.rows(i * per, per).into_owned();
            let bi = b.rows(i * per, per).into_owned();
            Ok(Agent { objective: Objective::L1 { dim: cols }, mirror: proj(Projector::affine(ai, bi))? })
        })
        .collect::<Result<Vec<_>, ProblemError>>()?;
    let mut p = ConsensusProblem::new(list, UndirectedGraph::ring(agents)?)?;
    p.planted = Some(x0);
    Ok(p)
}

/// Basis pursuit with the sensing columns split across agents on a ring.
///
/// Agent `i` owns columns `i·n/q .. (i+1)·n/q` and the share dᵢ = b/q.
pub fn build_dbp_col(seed: u64) -> Result<MonotropicProblem, ProblemError> {
    dbp_col_instance(seed, 10, 10, 60, 2)
}

pub fn dbp_col_instance(seed: u64, agents: usize, rows: usize, cols: usize, sparsity: usize) -> Result<MonotropicProblem, ProblemError> {
    if agents == 0 || !cols.is_multiple_of(agents) {
        return Err(ProblemError::Invalid(format!("{cols} columns do not split evenly over {agents} agents")));
    }
    let mut rng = SeededRng::new(seed);
    let a = random_orthogonal_rows(&mut rng, rows, cols).map_err(|e| ProblemError::Invalid(e.to_string()))?;
    let x0 = planted_signal(&mut rng, cols, sparsity, true);
    let b = &a * &x0;
    let per = cols / agents;
    let share = &b / agents as f64;
    let list = (0..agents)
        .map(|i| MonotropicAgent {
            objective: Objective::L1 { dim: per },
            mirror: MirrorMap::Euclidean { dim: per },
            a: a.columns(i * per, per).into_owned(),
            d: share.clone(),
        })
        .collect();
    let mut p = MonotropicProblem::new(list, UndirectedGraph::ring(agents)?)?;
    p.planted = Some(x0);
    Ok(p)
}

pub(super) fn catalogue_entries() -> Vec<ProblemEntry> {
    vec![
        ProblemEntry {
            name: "scalar",
            summary: "min x^2/2 s.t. x = 1, Euclidean map (sanity check)",
            systems: &["apdmd", "apdmd2"],
            seeded: false,
            build: |_| Ok(Problem::Constrained(build_scalar()?)),
        },
        ProblemEntry {
            name: "quad3",
            summary: "3-dim shifted quadratic on the hyperplane 1'x = 1, Euclidean map",
            systems: &["apdmd", "apdmd2"],
            seeded: false,
            build: |_| Ok(Problem::Constrained(build_quad3(MirrorMap::Euclidean { dim: 3 })?)),
        },
        ProblemEntry {
            name: "quad3_entropy",
            summary: "3-dim shifted quadratic on 1'x = 1 over the positive orthant, negative-entropy map",
            systems: &["apdmd", "apdmd2"],
            seeded: false,
            build: |_| Ok(Problem::Constrained(build_quad3(MirrorMap::NegEntropy { dim: 3 })?)),
        },
        ProblemEntry {
            name: "logregress",
            summary: "logistic loss on the unit simplex in R^4 with two equalities, KL map",
            systems: &["apdmd", "apdmd2"],
            seeded: false,
            build: |_| Ok(Problem::Constrained(build_logistic_centralized()?)),
        },
        ProblemEntry {
            name: "dis_log",
            summary: "distributed logistic regression, 4 agents on a ring (KL, Itakura-Saito, ball, half-space)",
            systems: &["adpdmd"],
            seeded: false,
            build: |_| Ok(Problem::Consensus(build_dis_logistic()?)),
        },
        ProblemEntry {
            name: "d_sp",
            summary: "distributed box-constrained QP with a resource constraint, 10 agents on a ring",
            systems: &["admd"],
            seeded: true,
            build: |s| Ok(Problem::Monotropic(build_dist_qp(s)?)),
        },
        ProblemEntry {
            name: "nbp",
            summary: "nonnegative basis pursuit, 10x40 orthogonal Gaussian sensing, 2-sparse signal",
            systems: &["sapdmd"],
            seeded: true,
            build: |s| Ok(Problem::Constrained(build_nbp(s)?)),
        },
        ProblemEntry {
            name: "d_bp_r",
            summary: "basis pursuit with row-partitioned sensing, 5 agents on a ring, affine projection maps",
            systems: &["sadpdmd"],
            seeded: true,
            build: |s| Ok(Problem::Consensus(build_dbp_row(s)?)),
        },
        ProblemEntry {
            name: "d_bp_c",
            summary: "basis pursuit with column-partitioned sensing, 10 agents on a ring",
            systems: &["sadmd"],
            seeded: true,
            build: |s| Ok(Problem::Monotropic(build_dbp_col(s)?)),
        },
    ]
}

/// Seed used when a catalogue entry is built without an explicit one.
pub fn default_seed(name: &str) -> u64 {
    match name {
        "nbp" => NBP_SEED,
        "d_bp_r" => DBP_ROW_SEED,
        "d_bp_c" => DBP_COL_SEED,
        "d_sp" => DIST_QP_SEED,
        _ => 0,
    }
}
