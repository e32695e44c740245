//! One configured run: problem, system, integration and diagnostics.

use crate::diagnostics::{check_bounds, BoundCheck, DiagnosticsError, RunReport, Slack};
use crate::dynamics::{SystemParams, SystemRegistry, VectorField};
use crate::integrator::{integrate, IntegratorConfig, IntegratorError, Trajectory};
use crate::problems::{default_seed, reference_solution, OracleError, Problem, ProblemRegistry, ProblemSpec, ReferenceSolution};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

/// A catalogue name or an inline problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSelector {
    Named(String),
    Inline(Box<ProblemSpec>),
}

impl Default for ProblemSelector {
    fn default() -> Self {
        Self::Named("scalar".into())
    }
}

impl ProblemSelector {
    pub fn label(&self) -> String {
        match self {
            Self::Named(n) => n.clone(),
            Self::Inline(_) => "inline".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSelector,
    pub system: String,
    pub alpha: f64,
    pub beta: f64,
    pub t0: f64,
    pub tf: f64,
    pub mu0: Option<f64>,
    /// Catalogue default when absent.
    pub seed: Option<u64>,
    pub integrator: IntegratorConfig,
    /// KKT tolerance demanded of the reference solution.
    pub oracle_tol: f64,
    pub slack: Slack,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSelector::default(),
            system: "apdmd".into(),
            alpha: 3.0,
            beta: 1.0,
            t0: 1.0,
            tf: 100.0,
            mu0: None,
            seed: None,
            integrator: IntegratorConfig::default(),
            oracle_tol: 1e-8,
            slack: Slack::default(),
            out: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    /// Raised before any computation starts.
    #[error("{0}")]
    Usage(String),
    #[error("reference solution failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("initial state: {0}")]
    Initial(String),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// A validated configuration, ready to run.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub field: Box<dyn VectorField>,
    pub seed: u64,
}

impl std::fmt::Debug for Prepared {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prepared").field("config", &self.config).field("seed", &self.seed).finish()
    }
}

/// Resolves names and checks compatibility without integrating anything.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let usage = |e: &dyn std::fmt::Display| ExperimentError::Usage(e.to_string());
    let (problem, seed) = match &config.problem {
        ProblemSelector::Named(name) => {
            let reg = ProblemRegistry::builtin();
            let seed = config.seed.unwrap_or_else(|| default_seed(name));
            (reg.build(name, seed).map_err(|e| usage(&e))?, seed)
        }
        ProblemSelector::Inline(spec) => (spec.build().map_err(|e| usage(&e))?, config.seed.unwrap_or(0)),
    };
    if !(config.tf > config.t0) {
        return Err(ExperimentError::Usage(format!("need tf > t0, got t0 = {}, tf = {}", config.t0, config.tf)));
    }
    if !(config.oracle_tol > 0.0) {
        return Err(ExperimentError::Usage("oracle_tol must be positive".into()));
    }
    config.integrator.validate().map_err(|e| usage(&e))?;
    let mut params = SystemParams::new(config.alpha, config.beta, config.t0).map_err(|e| usage(&e))?;
    if let Some(mu0) = config.mu0 {
        params = params.with_mu0(mu0).map_err(|e| usage(&e))?;
    }
    let field = SystemRegistry::builtin().build(&config.system, &problem, &params).map_err(|e| usage(&e))?;
    Ok(Prepared { config: config.clone(), problem, field, seed })
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub reference: ReferenceSolution,
    pub trajectory: Trajectory,
    pub report: RunReport,
    pub check: BoundCheck,
    pub runtime_secs: f64,
    /// Set when integration stopped early; the trajectory is then partial.
    pub failure: Option<String>,
}

impl Outcome {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    pub fn summary(&self) -> Summary {
        let r = &self.report;
        Summary {
            problem: self.config.problem.label(),
            system: r.system.clone(),
            alpha: r.params.alpha,
            beta: r.params.beta,
            t0: self.config.t0,
            tf: self.config.tf,
            mu0: r.params.mu0,
            seed: self.seed,
            samples: r.times.len(),
            final_time: r.times.last().copied().unwrap_or(self.config.t0),
            f_star: self.reference.f_star,
            oracle_kkt: self.reference.kkt_residual,
            slope: r.slope,
            v0: r.v0,
            final_gap: r.lagrangian_gap.last().copied(),
            final_primal_gap: r.primal_gap.last().copied(),
            final_feasibility: r.feasibility.last().copied(),
            feasibility_max_violation: r.max_membership_violation,
            bounds: self.check.clone(),
            accepted_steps: self.trajectory.accepted_steps,
            rejected_steps: self.trajectory.rejected_steps,
            evaluations: self.trajectory.evaluations,
            runtime_secs: self.runtime_secs,
            failure: self.failure.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

/// Contents of summary.json.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub problem: String,
    pub system: String,
    pub alpha: f64,
    pub beta: f64,
    pub t0: f64,
    pub tf: f64,
    pub mu0: Option<f64>,
    pub seed: u64,
    pub samples: usize,
    pub final_time: f64,
    pub f_star: f64,
    pub oracle_kkt: f64,
    pub slope: Option<f64>,
    pub v0: f64,
    pub final_gap: Option<f64>,
    pub final_primal_gap: Option<f64>,
    pub final_feasibility: Option<f64>,
    pub feasibility_max_violation: f64,
    pub bounds: BoundCheck,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub evaluations: usize,
    pub runtime_secs: f64,
    pub failure: Option<String>,
    pub warnings: Vec<String>,
}

impl Prepared {
    pub fn run(self) -> Result<Outcome, ExperimentError> {
        let start = Instant::now();
        let reference = reference_solution(&self.problem, self.config.oracle_tol)?;
        let y0 = self.field.initial_state().map_err(|e| ExperimentError::Initial(e.to_string()))?;
        let (trajectory, failure) = match integrate(self.field.as_ref(), &y0, self.config.t0, self.config.tf, &self.config.integrator) {
            Ok(t) => (t, None),
            Err(IntegratorError::Failed { reason, partial }) => (*partial, Some(reason.to_string())),
            Err(e @ IntegratorError::Config(_)) => return Err(ExperimentError::Usage(e.to_string())),
        };
        let report = RunReport::from_trajectory(self.field.as_ref(), &self.problem, &reference, &trajectory)?;
        let check = check_bounds(&report, self.config.slack);
        Ok(Outcome {
            config: self.config,
            seed: self.seed,
            reference,
            trajectory,
            report,
            check,
            runtime_secs: start.elapsed().as_secs_f64(),
            failure,
        })
    }
}

/// prepare + run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Outcome, ExperimentError> {
    prepare(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_are_raised_before_compute() {
        let before = crate::dynamics::field_evaluations();
        for cfg in [
            ExperimentConfig { problem: ProblemSelector::Named("nope".into()), ..Default::default() },
            ExperimentConfig { system: "nope".into(), ..Default::default() },
            ExperimentConfig { system: "adpdmd".into(), ..Default::default() },
            ExperimentConfig { problem: ProblemSelector::Named("nbp".into()), system: "sapdmd".into(), ..Default::default() },
            ExperimentConfig { tf: 0.5, ..Default::default() },
            ExperimentConfig { alpha: 1.0, ..Default::default() },
        ] {
            assert!(matches!(prepare(&cfg), Err(ExperimentError::Usage(_))), "{cfg:?}");
        }
        assert_eq!(crate::dynamics::field_evaluations(), before);
        let err = prepare(&ExperimentConfig { problem: ProblemSelector::Named("nope".into()), ..Default::default() }).unwrap_err();
        assert!(err.to_string().contains("logregress"), "{err}");
    }

    #[test]
    fn scalar_run_is_deterministic() {
        let cfg = ExperimentConfig { alpha: 2.0, tf: 20.0, ..Default::default() };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert!(a.succeeded());
        assert_eq!(a.report.lagrangian_gap, b.report.lagrangian_gap);
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = ExperimentConfig { mu0: Some(0.1), seed: Some(4), ..Default::default() };
        let j = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&j).unwrap(), cfg);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"problem": "nbp", "system": "sapdmd"}"#).unwrap();
        assert_eq!(partial.problem, ProblemSelector::Named("nbp".into()));
        assert_eq!(partial.alpha, 3.0);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"alpah": 2}"#).is_err());
    }
}
