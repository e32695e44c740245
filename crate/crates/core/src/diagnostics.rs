//! Gaps, feasibility residuals, Lyapunov values, bound checks and rate fits.
//!
//! The centralized, consensus and monotropic families each have their own
//! augmented Lagrangian:
//!
//! ```text
//! ℒ_β(x, λ)    = f(x) + λᵀ(Ax − b) + (β/2)‖Ax − b‖²
//! 𝖫_β(x, λ)    = f(x) + (β/2)xᵀLx + λᵀLx
//! 𝕃₁(x, y, λ) = f(x) − ½λᵀLλ + λᵀ(Āx − d − Ly)
//! ```
//!
//! The gap is always evaluated against the oracle's (x*, λ*, y*), which makes
//! the constraint terms at x* vanish. Smoothed systems replace f by f̂(·, μ(t))
//! and add 4κμ(t).

use crate::dynamics::{DynamicsError, Family, PrimalDualState, SystemParams, VectorField};
use crate::graph::GraphError;
use crate::integrator::Trajectory;
use crate::mirror_maps::MirrorError;
use crate::numerics::DenseVector;
use crate::problems::{Problem, ReferenceSolution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Mirror(#[from] MirrorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Mismatch(String),
    #[error("rate fit needs at least {needed} samples in the fit window, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

/// Multiplier and slack pair against which a gap is measured.
#[derive(Debug, Clone, Copy)]
pub struct Multipliers<'a> {
    pub lambda: &'a DenseVector,
    pub y: Option<&'a DenseVector>,
}

impl<'a> Multipliers<'a> {
    pub fn of(reference: &'a ReferenceSolution) -> Self {
        Self { lambda: &reference.lambda_star, y: reference.y_star.as_ref() }
    }
}

/// Constraint residual of the family: Ax − b, Lx, or Āx − d + Ly.
pub fn coupling_residual(problem: &Problem, x: &[f64], y: Option<&[f64]>) -> Result<DenseVector, DiagnosticsError> {
    match problem {
        Problem::Constrained(p) => Ok(&p.a * DenseVector::from_column_slice(x) - &p.b),
        Problem::Consensus(p) => {
            let mut out = DenseVector::zeros(x.len());
            p.laplacian.apply_into(x, out.as_mut_slice())?;
            Ok(out)
        }
        Problem::Monotropic(p) => {
            let mut out = DenseVector::zeros(p.dual_dim());
            p.apply_a_bar_into(x, out.as_mut_slice());
            out -= p.d_stacked();
            if let Some(y) = y {
                let mut ly = vec![0.0; y.len()];
                p.laplacian.apply_into(y, &mut ly)?;
                for (o, l) in out.iter_mut().zip(ly) {
                    *o += l;
                }
            }
            Ok(out)
        }
    }
}

fn quad_form_l(problem: &Problem, v: &[f64]) -> Result<f64, DiagnosticsError> {
    let l = match problem {
        Problem::Consensus(p) => &p.laplacian,
        Problem::Monotropic(p) => &p.laplacian,
        Problem::Constrained(_) => return Err(DiagnosticsError::Mismatch("centralized problems have no graph".into())),
    };
    Ok(l.consensus_residual(v)?)
}

fn objective_difference(problem: &Problem, x: &[f64], x_star: &[f64], f_star: f64, mu: Option<f64>) -> f64 {
    match mu {
        None => problem.objective_value(x) - f_star,
        Some(mu) => problem.smoothed_objective_value(x, mu) - problem.smoothed_objective_value(x_star, mu) + 4.0 * problem.kappa() * mu,
    }
}

/// Lagrangian gap against an explicit multiplier, which may differ from λ*.
pub fn lagrangian_gap_with(
    problem: &Problem,
    state: &PrimalDualState,
    reference: &ReferenceSolution,
    multipliers: Multipliers<'_>,
    beta: f64,
    mu: Option<f64>,
) -> Result<f64, DiagnosticsError> {
    let x = state.x.as_slice();
    let base = objective_difference(problem, x, reference.x_star.as_slice(), reference.f_star, mu);
    Ok(match problem {
        Problem::Constrained(_) => {
            let r = coupling_residual(problem, x, None)?;
            base + multipliers.lambda.dot(&r) + 0.5 * beta * r.norm_squared()
        }
        Problem::Consensus(_) => {
            let lx = coupling_residual(problem, x, None)?;
            base + multipliers.lambda.dot(&lx) + 0.5 * beta * x.iter().zip(lx.iter()).map(|(a, b)| a * b).sum::<f64>().max(0.0)
        }
        Problem::Monotropic(_) => {
            let r = coupling_residual(problem, x, multipliers.y.map(|y| y.as_slice()))?;
            base + multipliers.lambda.dot(&r) + 0.5 * quad_form_l(problem, state.lambda.as_slice())?
        }
    })
}

/// ℒ_β(x, λ*) − ℒ_β(x*, λ) and its consensus and monotropic analogues; with
/// `mu` the smoothed gap plus 4κμ.
pub fn lagrangian_gap(
    problem: &Problem,
    state: &PrimalDualState,
    reference: &ReferenceSolution,
    beta: f64,
    mu: Option<f64>,
) -> Result<f64, DiagnosticsError> {
    lagrangian_gap_with(problem, state, reference, Multipliers::of(reference), beta, mu)
}

/// Terms of the Lyapunov function; `aux` is ½‖z − y*‖² for monotropic runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovTerms {
    pub weighted_gap: f64,
    pub bregman: f64,
    pub multiplier: f64,
    pub aux: f64,
}

impl LyapunovTerms {
    pub fn total(&self) -> f64 {
        self.weighted_gap + self.bregman + self.multiplier + self.aux
    }
}

fn bregman_term(problem: &Problem, u: &DenseVector, x_star: &DenseVector) -> Result<f64, MirrorError> {
    match problem {
        Problem::Constrained(p) => p.mirror.bregman_to_solution(u, x_star),
        Problem::Consensus(p) => p.mirror.bregman_to_solution(u, x_star),
        Problem::Monotropic(p) => p.mirror.bregman_to_solution(u, x_star),
    }
}

fn lyapunov_with(
    t: f64,
    state: &PrimalDualState,
    problem: &Problem,
    reference: &ReferenceSolution,
    multipliers: Multipliers<'_>,
    params: &SystemParams,
    mu: Option<f64>,
) -> Result<LyapunovTerms, DiagnosticsError> {
    let gap = lagrangian_gap_with(problem, state, reference, multipliers, params.beta, mu)?;
    let aux = match (&state.z, multipliers.y) {
        (Some(z), Some(y)) => 0.5 * (z - y).norm_squared(),
        (None, _) => 0.0,
        (Some(_), None) => return Err(DiagnosticsError::Mismatch("monotropic state needs y*".into())),
    };
    Ok(LyapunovTerms {
        weighted_gap: t * t / (params.alpha * params.alpha) * gap,
        bregman: bregman_term(problem, &state.u, &reference.x_star)?,
        multiplier: 0.5 * (&state.v - multipliers.lambda).norm_squared(),
        aux,
    })
}

fn expect_family(problem: &Problem, family: Family) -> Result<(), DiagnosticsError> {
    if Family::of(problem) == family {
        Ok(())
    } else {
        Err(DiagnosticsError::Mismatch(format!("expected a {family:?} problem, got {}", problem.family())))
    }
}

/// V(t) for APDMD and SAPDMD (pass μ(t) for the smoothed system).
pub fn lyapunov_apdmd(
    t: f64,
    state: &PrimalDualState,
    problem: &Problem,
    reference: &ReferenceSolution,
    params: &SystemParams,
    mu: Option<f64>,
) -> Result<LyapunovTerms, DiagnosticsError> {
    expect_family(problem, Family::Centralized)?;
    lyapunov_with(t, state, problem, reference, Multipliers::of(reference), params, mu)
}

/// 𝖵(t) for ADPDMD and SADPDMD.
pub fn lyapunov_adpdmd(
    t: f64,
    state: &PrimalDualState,
    problem: &Problem,
    reference: &ReferenceSolution,
    params: &SystemParams,
    mu: Option<f64>,
) -> Result<LyapunovTerms, DiagnosticsError> {
    expect_family(problem, Family::Consensus)?;
    lyapunov_with(t, state, problem, reference, Multipliers::of(reference), params, mu)
}

/// E(t) for ADMD and SADMD, including ½‖z − y*‖².
pub fn lyapunov_admd(
    t: f64,
    state: &PrimalDualState,
    problem: &Problem,
    reference: &ReferenceSolution,
    params: &SystemParams,
    mu: Option<f64>,
) -> Result<LyapunovTerms, DiagnosticsError> {
    expect_family(problem, Family::Monotropic)?;
    lyapunov_with(t, state, problem, reference, Multipliers::of(reference), params, mu)
}

/// Least-squares fit of log(value) against log(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub samples: usize,
    /// Values at or below zero that were clipped to 1e−16.
    pub clipped: usize,
}

pub const RATE_FIT_MIN_SAMPLES: usize = 10;
const RATE_FIT_FLOOR: f64 = 1e-16;

/// Fits the log-log slope after discarding the first 20% of the log-time range.
pub fn rate_fit(times: &[f64], values: &[f64]) -> Result<RateFit, DiagnosticsError> {
    if times.len() != values.len() {
        return Err(DiagnosticsError::Mismatch(format!("{} times but {} values", times.len(), values.len())));
    }
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Err(DiagnosticsError::TooFewSamples { needed: RATE_FIT_MIN_SAMPLES, got: 0 });
    };
    if !(t0 > 0.0) {
        return Err(DiagnosticsError::Mismatch("rate fit needs positive times".into()));
    }
    let cut = t0.ln() + 0.2 * (t1.ln() - t0.ln());
    let mut clipped = 0;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| t.ln() >= cut)
        .map(|(t, &v)| {
            let v = if v > RATE_FIT_FLOOR {
                v
            } else {
                clipped += 1;
                RATE_FIT_FLOOR
            };
            (t.ln(), v.ln())
        })
        .collect();
    if pts.len() < RATE_FIT_MIN_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples { needed: RATE_FIT_MIN_SAMPLES, got: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(RateFit { slope, intercept: my - slope * mx, samples: pts.len(), clipped })
}

/// Cumulative trapezoid integral.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for i in 0..times.len() {
        if i > 0 {
            acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// Per-sample quantities derived from a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub system: String,
    pub family: Family,
    pub smoothed: bool,
    pub params: SystemParams,
    pub kappa: f64,
    pub times: Vec<f64>,
    /// |f(x(t)) − f*| with the exact objective.
    pub primal_gap: Vec<f64>,
    /// f(x(t)) − f*.
    pub objective_error: Vec<f64>,
    /// Gap the main bound applies to, including 4κμ(t) when smoothed.
    pub lagrangian_gap: Vec<f64>,
    /// ‖Ax − b‖, xᵀLx or λᵀLλ by family.
    pub feasibility: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub mu: Vec<Option<f64>>,
    pub x_norm: Vec<f64>,
    pub lambda_norm: Vec<f64>,
    /// Largest violation of x(t) ∈ 𝒳 at each sample.
    pub membership: Vec<f64>,
    /// Left side of the residual-direction bound, per sample.
    pub residual_direction_lhs: Vec<f64>,
    /// V(t₀) recomputed with the per-sample residual-direction multiplier.
    pub residual_direction_v0: Vec<f64>,
    pub v0: f64,
    pub slope: Option<f64>,
    pub max_membership_violation: f64,
    pub warnings: Vec<String>,
}

/// λ̃(t) of the (III) statements, which differs between the theorems.
fn residual_direction(system: &str, problem: &Problem, x: &[f64]) -> Result<DenseVector, DiagnosticsError> {
    let r = coupling_residual(problem, x, None)?;
    let scale_by = |v: DenseVector, s: f64| if s > 0.0 { v / s } else { v * 0.0 };
    Ok(match problem {
        Problem::Consensus(_) if system == "adpdmd" => {
            let q = x.iter().zip(r.iter()).map(|(a, b)| a * b).sum::<f64>().max(0.0);
            scale_by(DenseVector::from_column_slice(x), q.sqrt())
        }
        _ => {
            let n = r.norm();
            scale_by(r, n)
        }
    })
}

/// f − f* + λ̃ᵀ(residual), plus (β/2)‖Ax − b‖² for unsmoothed APDMD as stated.
fn residual_direction_lhs(system: &str, problem: &Problem, x: &[f64], f_star: f64, lt: &DenseVector, beta: f64) -> Result<f64, DiagnosticsError> {
    let r = coupling_residual(problem, x, None)?;
    let mut lhs = problem.objective_value(x) - f_star + lt.dot(&r);
    if matches!(problem, Problem::Constrained(_)) && !system.starts_with('s') {
        lhs += 0.5 * beta * r.norm_squared();
    }
    Ok(lhs)
}

impl RunReport {
    pub fn from_trajectory(
        field: &dyn VectorField,
        problem: &Problem,
        reference: &ReferenceSolution,
        trajectory: &Trajectory,
    ) -> Result<Self, DiagnosticsError> {
        let family = field.family();
        if Family::of(problem) != family {
            return Err(DiagnosticsError::Mismatch(format!("{} field with a {} problem", field.system(), problem.family())));
        }
        let params = *field.params();
        let system = field.system();
        let n = trajectory.times.len();
        if n == 0 {
            return Err(DiagnosticsError::Mismatch("empty trajectory".into()));
        }
        let mut r = RunReport {
            system: system.to_string(),
            family,
            smoothed: trajectory.mu.iter().any(Option::is_some),
            params,
            kappa: problem.kappa(),
            times: trajectory.times.clone(),
            primal_gap: Vec::with_capacity(n),
            objective_error: Vec::with_capacity(n),
            lagrangian_gap: Vec::with_capacity(n),
            feasibility: Vec::with_capacity(n),
            lyapunov: Vec::with_capacity(n),
            mu: trajectory.mu.clone(),
            x_norm: Vec::with_capacity(n),
            lambda_norm: Vec::with_capacity(n),
            membership: Vec::with_capacity(n),
            residual_direction_lhs: Vec::with_capacity(n),
            residual_direction_v0: Vec::with_capacity(n),
            v0: f64::NAN,
            slope: None,
            max_membership_violation: 0.0,
            warnings: trajectory.warnings.clone(),
        };
        let mut first: Option<PrimalDualState> = None;
        for (k, (&t, flat)) in trajectory.times.iter().zip(&trajectory.states).enumerate() {
            let s = field.first_order_state(t, flat.as_slice())?;
            let mu = trajectory.mu[k];
            let x = s.x.as_slice();
            let f_err = problem.objective_value(x) - reference.f_star;
            r.objective_error.push(f_err);
            r.primal_gap.push(f_err.abs());
            r.lagrangian_gap.push(lagrangian_gap(problem, &s, reference, params.beta, mu)?);
            r.feasibility.push(match family {
                Family::Centralized => coupling_residual(problem, x, None)?.norm(),
                Family::Consensus => quad_form_l(problem, x)?,
                Family::Monotropic => quad_form_l(problem, s.lambda.as_slice())?,
            });
            let v = lyapunov_with(t, &s, problem, reference, Multipliers::of(reference), &params, mu)?.total();
            r.lyapunov.push(v);
            r.x_norm.push(s.x.norm());
            r.lambda_norm.push(s.lambda.norm());
            let m = problem.membership_residual(x);
            r.membership.push(m);
            r.max_membership_violation = r.max_membership_violation.max(m);

            if family != Family::Monotropic {
                let lt = residual_direction(system, problem, x)?;
                r.residual_direction_lhs.push(residual_direction_lhs(system, problem, x, reference.f_star, &lt, params.beta)?);
                let s0 = first.as_ref().unwrap_or(&s);
                let mult = Multipliers { lambda: &lt, y: None };
                let v0 = lyapunov_with(trajectory.times[0], s0, problem, reference, mult, &params, trajectory.mu[0])?.total();
                r.residual_direction_v0.push(v0);
            }
            if first.is_none() {
                first = Some(s);
            }
        }
        r.v0 = r.lyapunov[0];
        if !r.v0.is_finite() {
            r.warnings.push("V(t0) is infinite because x* lies on the boundary of the mirror domain; bounds are vacuous".into());
        }
        match rate_fit(&r.times, &r.lagrangian_gap) {
            Ok(fit) => {
                if fit.clipped > 0 {
                    r.warnings.push(format!("rate fit clipped {} nonpositive gap values", fit.clipped));
                }
                r.slope = Some(fit.slope);
            }
            Err(e) => r.warnings.push(format!("no rate fit: {e}")),
        }
        Ok(r)
    }
}

/// Tolerance applied to every bound: observed ≤ multiplicative·bound + additive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    pub multiplicative: f64,
    pub additive: f64,
}

impl Default for Slack {
    fn default() -> Self {
        Self { multiplicative: 1.05, additive: 1e-10 }
    }
}

pub const MONOTONE_RELATIVE: f64 = 1e-6;
pub const MONOTONE_ABSOLUTE: f64 = 1e-10;
pub const SADDLE_TOLERANCE: f64 = 1e-8;
pub const PLATEAU_GROWTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Upper,
    Lower,
    Monotone,
    Plateau,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    pub name: &'static str,
    pub kind: BoundKind,
    pub passed: bool,
    /// Worst observed/bound ratio; for plateaus the relative growth over the last decade.
    pub max_ratio: f64,
    pub first_violation: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub slack: Slack,
    pub results: Vec<BoundResult>,
}

impl BoundCheck {
    pub fn get(&self, name: &str) -> Option<&BoundResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

fn upper(name: &'static str, times: &[f64], observed: &[f64], bound: impl Fn(usize) -> f64, slack: Slack) -> BoundResult {
    let mut max_ratio: f64 = 0.0;
    let mut first_violation = None;
    for (k, (&t, &o)) in times.iter().zip(observed).enumerate() {
        let b = bound(k);
        if b.is_nan() || o.is_nan() {
            first_violation.get_or_insert(t);
            max_ratio = f64::NAN;
            continue;
        }
        if b.is_infinite() {
            continue;
        }
        let ratio = if b > 0.0 { o / b } else if o > 0.0 { f64::INFINITY } else { 0.0 };
        max_ratio = max_ratio.max(ratio);
        if o > slack.multiplicative * b + slack.additive {
            first_violation.get_or_insert(t);
        }
    }
    BoundResult { name, kind: BoundKind::Upper, passed: first_violation.is_none(), max_ratio, first_violation, note: None }
}

fn lower(name: &'static str, times: &[f64], observed: &[f64], bound: impl Fn(usize) -> f64, slack: Slack) -> BoundResult {
    // observed ≥ bound with bound ≤ 0, checked as −observed ≤ −bound.
    let neg: Vec<f64> = observed.iter().map(|o| -o).collect();
    let mut r = upper(name, times, &neg, |k| -bound(k), slack);
    r.kind = BoundKind::Lower;
    r
}

fn monotone(name: &'static str, times: &[f64], values: &[f64]) -> BoundResult {
    let mut max_ratio: f64 = 0.0;
    let mut first_violation = None;
    for k in 1..values.len() {
        let (a, b) = (values[k - 1], values[k]);
        if !a.is_finite() {
            continue;
        }
        let allowed = a * (1.0 + MONOTONE_RELATIVE) + MONOTONE_ABSOLUTE;
        if a > 0.0 {
            max_ratio = max_ratio.max(b / a);
        }
        if !(b <= allowed) {
            first_violation.get_or_insert(times[k]);
        }
    }
    BoundResult { name, kind: BoundKind::Monotone, passed: first_violation.is_none(), max_ratio, first_violation, note: None }
}

fn plateau(name: &'static str, times: &[f64], integrand: &[f64]) -> BoundResult {
    let mut r = BoundResult { name, kind: BoundKind::Plateau, passed: true, max_ratio: 0.0, first_violation: None, note: None };
    let (Some(&t0), Some(&tf)) = (times.first(), times.last()) else {
        return r;
    };
    if tf < 10.0 * t0 {
        r.note = Some("horizon shorter than one decade; not evaluated".into());
        return r;
    }
    let cum = cumulative_trapezoid(times, integrand);
    let k = times.iter().position(|&t| t >= tf / 10.0).unwrap_or(0);
    let total = *cum.last().unwrap();
    let growth = if total.abs() > 0.0 { (total - cum[k]) / total.abs() } else { 0.0 };
    r.max_ratio = growth;
    if !(growth <= PLATEAU_GROWTH) {
        r.passed = false;
        r.first_violation = Some(times[k]);
    }
    r
}

/// Checks every bound the theorem for the report's system states.
pub fn check_bounds(report: &RunReport, slack: Slack) -> BoundCheck {
    let t = &report.times;
    let a2 = report.params.alpha * report.params.alpha;
    let beta = report.params.beta;
    let v0 = report.v0;
    let rate = |k: usize| a2 * v0 / (t[k] * t[k]);
    let mut results = Vec::new();

    results.push(upper("gap", t, &report.lagrangian_gap, rate, slack));
    let saddle: Vec<f64> = report.lagrangian_gap.iter().map(|g| -g).collect();
    results.push(BoundResult { kind: BoundKind::Lower, ..upper("gap_nonnegative", t, &saddle, |_| 0.0, Slack { multiplicative: 1.0, additive: SADDLE_TOLERANCE }) });
    results.push(monotone("lyapunov_monotone", t, &report.lyapunov));

    let tw_gap: Vec<f64> = t.iter().zip(&report.lagrangian_gap).map(|(t, g)| t * g).collect();
    if report.smoothed {
        // The integral statements carry 2κμ rather than the 4κμ in the gap.
        let adj: Vec<f64> = t
            .iter()
            .zip(&report.lagrangian_gap)
            .zip(&report.mu)
            .map(|((t, g), mu)| t * (g - 2.0 * report.kappa * mu.unwrap_or(0.0)))
            .collect();
        results.push(plateau("gap_integral", t, &adj));
    } else {
        results.push(plateau("gap_integral", t, &tw_gap));
    }

    let sq: Vec<f64> = match report.family {
        Family::Centralized => report.feasibility.iter().map(|r| r * r).collect(),
        _ => report.feasibility.clone(),
    };
    match report.family {
        Family::Centralized | Family::Consensus => {
            let name = if report.family == Family::Centralized { "residual" } else { "consensus" };
            if beta > 0.0 {
                results.push(upper(name, t, &sq, |k| 2.0 * rate(k) / beta, slack));
            }
            let integrand: Vec<f64> = if report.smoothed { sq.clone() } else { t.iter().zip(&sq).map(|(t, s)| t * s).collect() };
            results.push(plateau(if report.family == Family::Centralized { "residual_integral" } else { "consensus_integral" }, t, &integrand));

            let lower_const = if report.family == Family::Centralized && !report.smoothed {
                report.params.alpha * v0.sqrt()
            } else {
                report.params.alpha * (2.0 * v0).sqrt() / beta.sqrt()
            };
            results.push(lower("objective_lower", t, &report.objective_error, |k| -lower_const / t[k], slack));
            results.push(upper("objective_upper", t, &report.objective_error, rate, slack));
            let mut rd = upper("residual_direction", t, &report.residual_direction_lhs, |k| a2 * report.residual_direction_v0[k] / (t[k] * t[k]), slack);
            rd.note = Some("multiplier taken along the per-sample residual direction".into());
            results.push(rd);
        }
        Family::Monotropic => {
            results.push(upper("multiplier_consensus", t, &sq, |k| 2.0 * rate(k), slack));
        }
    }
    BoundCheck { slack, results }
}
