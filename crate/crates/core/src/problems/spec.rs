//! Config-file problem descriptions: matrix literals or seed plus dimensions.

use super::builders::{dbp_col_instance, dbp_row_instance, dist_qp_instance, nbp_instance};
use super::{Agent, ConsensusProblem, ConstrainedProblem, MonotropicAgent, MonotropicProblem, Problem, ProblemError};
use crate::graph::{GraphSpec, UndirectedGraph};
use crate::mirror_maps::{MirrorMap, MirrorSpec};
use crate::numerics::{DenseMatrix, DenseVector};
use crate::objective::{Objective, ObjectiveSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemSpecError {
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub objective: ObjectiveSpec,
    pub mirror: MirrorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotropicAgentSpec {
    pub objective: ObjectiveSpec,
    pub mirror: MirrorSpec,
    pub a: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Constrained {
        objective: ObjectiveSpec,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        mirror: MirrorSpec,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    Consensus {
        agents: Vec<AgentSpec>,
        graph: GraphSpec,
    },
    Monotropic {
        agents: Vec<MonotropicAgentSpec>,
        graph: GraphSpec,
    },
    /// A seeded instance of one of the randomized catalogue families with custom sizes.
    Generated {
        builder: GeneratedKind,
        seed: u64,
        #[serde(default)]
        agents: Option<usize>,
        #[serde(default)]
        rows: Option<usize>,
        #[serde(default)]
        cols: Option<usize>,
        #[serde(default)]
        sparsity: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratedKind {
    Nbp,
    DBpR,
    DBpC,
    DSp,
}

fn matrix(rows: &[Vec<f64>]) -> Result<DenseMatrix, ProblemSpecError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(ProblemSpecError::Shape("ragged matrix literal".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DenseMatrix::from_row_slice(r, c, &flat))
}

fn objective(spec: &ObjectiveSpec) -> Result<Objective, ProblemSpecError> {
    Objective::from_spec(spec).map_err(|e| ProblemSpecError::Shape(e.to_string()))
}

fn mirror(spec: &MirrorSpec) -> Result<MirrorMap, ProblemSpecError> {
    Ok(MirrorMap::from_spec(spec).map_err(ProblemError::from)?)
}

fn graph(spec: &GraphSpec) -> Result<UndirectedGraph, ProblemSpecError> {
    Ok(UndirectedGraph::from_spec(spec).map_err(ProblemError::from)?)
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem, ProblemSpecError> {
        Ok(match self {
            Self::Constrained { objective: o, a, b, mirror: m, x0 } => {
                let mut p = ConstrainedProblem::new(objective(o)?, matrix(a)?, DenseVector::from_column_slice(b), mirror(m)?)?;
                if let Some(x0) = x0 {
                    p = p.with_initial_primal(&DenseVector::from_column_slice(x0))?;
                }
                Problem::Constrained(p)
            }
            Self::Consensus { agents, graph: g } => {
                let list = agents
                    .iter()
                    .map(|a| Ok(Agent { objective: objective(&a.objective)?, mirror: mirror(&a.mirror)? }))
                    .collect::<Result<Vec<_>, ProblemSpecError>>()?;
                Problem::Consensus(ConsensusProblem::new(list, graph(g)?)?)
            }
            Self::Monotropic { agents, graph: g } => {
                let list = agents
                    .iter()
                    .map(|a| {
                        Ok(MonotropicAgent {
                            objective: objective(&a.objective)?,
                            mirror: mirror(&a.mirror)?,
                            a: matrix(&a.a)?,
                            d: DenseVector::from_column_slice(&a.d),
                        })
                    })
                    .collect::<Result<Vec<_>, ProblemSpecError>>()?;
                Problem::Monotropic(MonotropicProblem::new(list, graph(g)?)?)
            }
            Self::Generated { builder, seed, agents, rows, cols, sparsity } => match builder {
                GeneratedKind::Nbp => Problem::Constrained(nbp_instance(*seed, rows.unwrap_or(10), cols.unwrap_or(40), sparsity.unwrap_or(2))?),
                GeneratedKind::DBpR => Problem::Consensus(dbp_row_instance(
                    *seed,
                    agents.unwrap_or(5),
                    rows.unwrap_or(10),
                    cols.unwrap_or(60),
                    sparsity.unwrap_or(2),
                )?),
                GeneratedKind::DBpC => Problem::Monotropic(dbp_col_instance(
                    *seed,
                    agents.unwrap_or(10),
                    rows.unwrap_or(10),
                    cols.unwrap_or(60),
                    sparsity.unwrap_or(2),
                )?),
                GeneratedKind::DSp => Problem::Monotropic(dist_qp_instance(*seed, agents.unwrap_or(10), rows.unwrap_or(5))?),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constrained_literal() {
        let json = r#"{
            "family": "constrained",
            "objective": {"kind": "half_squared_distance", "c": [0.0]},
            "a": [[1.0]], "b": [1.0],
            "mirror": {"map": "euclidean", "dim": 1}
        }"#;
        let spec: ProblemSpec = serde_json::from_str(json).unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p, Problem::Constrained(super::super::build_scalar().unwrap()));
    }

    #[test]
    fn consensus_literal() {
        let json = r#"{
            "family": "consensus",
            "graph": {"topology": "ring", "n": 3},
            "agents": [
                {"objective": {"kind": "l1", "dim": 2}, "mirror": {"map": "euclidean", "dim": 2}},
                {"objective": {"kind": "l1", "dim": 2}, "mirror": {"map": "neg_entropy", "dim": 2}},
                {"objective": {"kind": "logistic", "w": [1, 2]}, "mirror": {"map": "projection", "region": {"set": "box", "lo": [0, 0], "hi": [1, 1]}}}
            ]
        }"#;
        let p: ProblemSpec = serde_json::from_str(json).unwrap();
        let p = p.build().unwrap();
        assert_eq!(p.primal_dim(), 6);
        assert!(!p.is_smooth());
    }

    #[test]
    fn generated_with_dims() {
        let spec: ProblemSpec = serde_json::from_str(r#"{"family":"generated","builder":"nbp","seed":3,"rows":4,"cols":12}"#).unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p.primal_dim(), 12);
    }

    #[test]
    fn shape_errors_surface() {
        let json = r#"{"family":"constrained","objective":{"kind":"l1","dim":2},"a":[[1,1],[1]],"b":[1,1],"mirror":{"map":"euclidean","dim":2}}"#;
        let spec: ProblemSpec = serde_json::from_str(json).unwrap();
        assert!(spec.build().is_err());
    }
}
