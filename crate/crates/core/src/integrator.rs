//! Adaptive Dormand–Prince 5(4) integration with dense output.

use crate::dynamics::{DynamicsError, VectorField};
use crate::numerics::DenseVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus the embedded fourth-order ones.
const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
/// Dense-output weights of the quartic continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const PI_BETA: f64 = 0.04;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Chosen automatically when absent.
    pub initial_step: Option<f64>,
    pub min_step: f64,
    /// Unbounded when absent.
    pub max_step: Option<f64>,
    pub max_steps: usize,
    /// Density of the geometric sample grid.
    pub points_per_decade: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            initial_step: None,
            min_step: 1e-12,
            max_step: None,
            max_steps: 2_000_000,
            points_per_decade: 40,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |m: &str| Err(IntegratorError::Config(m.to_string()));
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.min_step > 0.0) || !(self.min_step <= self.max_step.unwrap_or(f64::INFINITY)) {
            return bad("need 0 < min_step <= max_step");
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0) {
                return bad("initial step must be positive");
            }
        }
        if self.points_per_decade == 0 || self.max_steps == 0 {
            return bad("points_per_decade and max_steps must be positive");
        }
        Ok(())
    }
}

/// Geometric grid t₀·10^{k/ppd} up to and including t_f.
pub fn geometric_grid(t0: f64, tf: f64, points_per_decade: usize) -> Vec<f64> {
    let mut out = vec![t0];
    let step = 10f64.powf(1.0 / points_per_decade as f64);
    let mut k = 1;
    loop {
        let t = t0 * step.powi(k);
        if t >= tf * (1.0 - 1e-12) {
            break;
        }
        out.push(t);
        k += 1;
    }
    if tf > t0 {
        out.push(tf);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<DenseVector>,
    /// μ(t) at each sample, for smoothed systems.
    pub mu: Vec<Option<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub evaluations: usize,
    /// A mirror map clamped its input somewhere along the run.
    pub clamped: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationFailure {
    #[error("maximum number of steps exceeded at t = {t}")]
    MaxSteps { t: f64 },
    #[error("non-finite vector field value at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("vector field failed at t = {t}: {source}")]
    Field { t: f64, source: DynamicsError },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("{reason}")]
    Failed { reason: IntegrationFailure, partial: Box<Trajectory> },
}

impl IntegratorError {
    /// Samples produced before a failure.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            Self::Failed { partial, .. } => Some(partial),
            Self::Config(_) => None,
        }
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

struct Stepper<'a> {
    field: &'a dyn VectorField,
    cfg: &'a IntegratorConfig,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    evaluations: usize,
    clamped: bool,
}

enum StageError {
    /// Recoverable by shrinking the step. Carries the stage time when the
    /// field produced a non-finite value.
    Retry(Option<f64>),
    Fatal(IntegrationFailure),
}

impl<'a> Stepper<'a> {
    fn eval(&mut self, t: f64, y: &[f64], slot: usize) -> Result<(), StageError> {
        self.evaluations += 1;
        let mut out = std::mem::take(&mut self.k[slot]);
        let r = self.field.eval(t, y, &mut out);
        self.k[slot] = out;
        match r {
            Ok(c) => {
                self.clamped |= c;
                if all_finite(&self.k[slot]) {
                    Ok(())
                } else if all_finite(y) && slot == 0 {
                    Err(StageError::Fatal(IntegrationFailure::NonFinite { t }))
                } else {
                    Err(StageError::Retry(Some(t)))
                }
            }
            Err(e) if e.is_domain() && slot != 0 => Err(StageError::Retry(None)),
            Err(e) => Err(StageError::Fatal(IntegrationFailure::Field { t, source: e })),
        }
    }

    /// One trial step from (t, y) with k[0] = f(t, y). Returns the error norm
    /// and writes the candidate into `ynew` and f(t+h, ynew) into k[6].
    fn attempt(&mut self, t: f64, y: &[f64], h: f64, ynew: &mut [f64]) -> Result<f64, StageError> {
        let n = y.len();
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * self.k[j][i];
                }
                self.stage[i] = y[i] + h * acc;
            }
            let stage = std::mem::take(&mut self.stage);
            let r = self.eval(t + C[s] * h, &stage, s);
            self.stage = stage;
            r?;
        }
        // Stage 7 was evaluated at the fifth-order solution itself.
        ynew.copy_from_slice(&self.stage);
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, ej) in E.iter().enumerate() {
                e += ej * self.k[j][i];
            }
            let sc = self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs().max(ynew[i].abs());
            err = err.max((h * e).abs() / sc);
        }
        Ok(if err.is_finite() { err } else { f64::INFINITY })
    }

    fn initial_step(&mut self, t0: f64, y0: &[f64], tf: f64) -> Result<f64, StageError> {
        let n = y0.len() as f64;
        let sk: Vec<f64> = y0.iter().map(|y| self.cfg.abs_tol + self.cfg.rel_tol * y.abs()).collect();
        let rms = |v: &mut dyn Iterator<Item = f64>| (v.map(|x| x * x).sum::<f64>() / n).sqrt();
        let dnf = rms(&mut self.k[0].iter().zip(&sk).map(|(f, s)| f / s));
        let dny = rms(&mut y0.iter().zip(&sk).map(|(y, s)| y / s));
        let mut h = if dnf <= 1e-5 || dny <= 1e-5 { 1e-6 } else { 0.01 * dny / dnf };
        h = h.min(self.cfg.max_step.unwrap_or(f64::INFINITY)).min(tf - t0);
        let y1: Vec<f64> = y0.iter().zip(&self.k[0]).map(|(y, f)| y + h * f).collect();
        self.eval(t0 + h, &y1, 1)?;
        let der2 = rms(&mut self.k[1].iter().zip(&self.k[0]).zip(&sk).map(|((a, b), s)| (a - b) / s)) / h;
        let der12 = der2.abs().max(dnf);
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
        Ok((100.0 * h).min(h1).min(self.cfg.max_step.unwrap_or(f64::INFINITY)).max(self.cfg.min_step))
    }
}

/// Quartic dense output on [t, t + h].
fn interpolate(y: &[f64], ynew: &[f64], k: &[Vec<f64>; 7], h: f64, theta: f64, out: &mut [f64]) {
    let th1 = 1.0 - theta;
    for i in 0..y.len() {
        let r2 = ynew[i] - y[i];
        let r3 = h * k[0][i] - r2;
        let r4 = r2 - h * k[6][i] - r3;
        let mut r5 = 0.0;
        for (j, dj) in D.iter().enumerate() {
            r5 += dj * k[j][i];
        }
        r5 *= h;
        out[i] = y[i] + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)));
    }
}

/// Integrates on [t0, tf] and samples on the configured geometric grid.
pub fn integrate(field: &dyn VectorField, y0: &DenseVector, t0: f64, tf: f64, cfg: &IntegratorConfig) -> Result<Trajectory, IntegratorError> {
    integrate_at(field, y0, &geometric_grid(t0, tf, cfg.points_per_decade), cfg)
}

/// Integrates from `samples[0]` to the last sample and records the state at each.
pub fn integrate_at(field: &dyn VectorField, y0: &DenseVector, samples: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory, IntegratorError> {
    cfg.validate()?;
    let (t0, tf) = match (samples.first(), samples.last()) {
        (Some(&a), Some(&b)) if a > 0.0 && b > a => (a, b),
        _ => return Err(IntegratorError::Config("need at least two increasing positive sample times".into())),
    };
    if samples.windows(2).any(|w| w[1] <= w[0]) {
        return Err(IntegratorError::Config("sample times must be strictly increasing".into()));
    }
    if y0.len() != field.dim() || !all_finite(y0.as_slice()) {
        return Err(IntegratorError::Config(format!("initial state must be finite with length {}", field.dim())));
    }
    let n = y0.len();
    let mut st = Stepper { field, cfg, k: std::array::from_fn(|_| vec![0.0; n]), stage: vec![0.0; n], evaluations: 0, clamped: false };
    let mut traj = Trajectory::default();
    let record = |traj: &mut Trajectory, t: f64, y: &[f64]| {
        traj.times.push(t);
        traj.states.push(DenseVector::from_column_slice(y));
        traj.mu.push(field.mu_at(t));
    };
    let fail = |traj: Trajectory, st: &Stepper, reason: IntegrationFailure| {
        let mut traj = traj;
        traj.evaluations = st.evaluations;
        traj.clamped = st.clamped;
        IntegratorError::Failed { reason, partial: Box::new(traj) }
    };

    let mut t = t0;
    let mut y = y0.as_slice().to_vec();
    record(&mut traj, t, &y);
    let mut next_sample = 1;
    if let Err(e) = st.eval(t, &y, 0) {
        let reason = match e {
            StageError::Fatal(r) => r,
            StageError::Retry(_) => IntegrationFailure::NonFinite { t },
        };
        return Err(fail(traj, &st, reason));
    }
    let mut h = match cfg.initial_step {
        Some(h) => h,
        None => match st.initial_step(t, &y, tf) {
            Ok(h) => h,
            Err(StageError::Fatal(r)) => return Err(fail(traj, &st, r)),
            Err(StageError::Retry(_)) => cfg.min_step.max(1e-6),
        },
    };
    let mut ynew = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut fac_old: f64 = 1e-4;
    let mut rejected_last = false;
    let mut non_finite_at: Option<f64> = None;
    let expo = 0.2 - PI_BETA * 0.75;

    while next_sample < samples.len() {
        if traj.accepted_steps + traj.rejected_steps >= cfg.max_steps {
            return Err(fail(traj, &st, IntegrationFailure::MaxSteps { t }));
        }
        h = h.min(cfg.max_step.unwrap_or(f64::INFINITY));
        let last = t + h >= tf * (1.0 - 1e-14) || t + 1.01 * h >= tf;
        if last {
            h = tf - t;
        }
        if h < cfg.min_step && !last {
            let reason = match non_finite_at {
                Some(t) => IntegrationFailure::NonFinite { t },
                None => IntegrationFailure::StepUnderflow { t },
            };
            return Err(fail(traj, &st, reason));
        }
        match st.attempt(t, &y, h, &mut ynew) {
            Err(StageError::Fatal(r)) => return Err(fail(traj, &st, r)),
            Err(StageError::Retry(bad)) => {
                non_finite_at = bad;
                traj.rejected_steps += 1;
                rejected_last = true;
                h *= 0.25;
                continue;
            }
            Ok(err) => {
                non_finite_at = None;
                let fac11 = err.powf(expo);
                if err <= 1.0 {
                    let fac = (fac11 / fac_old.powf(PI_BETA) / SAFETY).clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
                    let mut hnew = h / fac;
                    fac_old = err.max(1e-4);
                    traj.accepted_steps += 1;
                    let t_new = if last { tf } else { t + h };
                    while next_sample < samples.len() && samples[next_sample] <= t_new {
                        let ts = samples[next_sample];
                        if ts == t_new {
                            record(&mut traj, ts, &ynew);
                        } else {
                            interpolate(&y, &ynew, &st.k, h, (ts - t) / h, &mut buf);
                            record(&mut traj, ts, &buf);
                        }
                        next_sample += 1;
                    }
                    if rejected_last {
                        hnew = hnew.min(h);
                    }
                    rejected_last = false;
                    t = t_new;
                    std::mem::swap(&mut y, &mut ynew);
                    st.k.swap(0, 6);
                    h = hnew;
                } else {
                    traj.rejected_steps += 1;
                    rejected_last = true;
                    h /= (fac11 / SAFETY).min(1.0 / MIN_FACTOR);
                }
            }
        }
    }
    traj.evaluations = st.evaluations;
    traj.clamped = st.clamped;
    if traj.clamped {
        traj.warnings.push("mirror map input was clamped during integration".into());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Family, StateLayout, SystemParams};

    /// Test-only field from a closure.
    struct Ode<F: Fn(f64, &[f64], &mut [f64]) + Send + Sync> {
        n: usize,
        f: F,
        params: SystemParams,
    }

    impl<F: Fn(f64, &[f64], &mut [f64]) + Send + Sync> VectorField for Ode<F> {
        fn system(&self) -> &'static str {
            "test"
        }
        fn family(&self) -> Family {
            Family::Centralized
        }
        fn layout(&self) -> StateLayout {
            // Only dim() matters here; an odd dimension uses a half-empty layout.
            StateLayout { primal: 0, multiplier: self.n, auxiliary: 0 }
        }
        fn dim(&self) -> usize {
            self.n
        }
        fn params(&self) -> &SystemParams {
            &self.params
        }
        fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<bool, DynamicsError> {
            (self.f)(t, y, dy);
            Ok(false)
        }
        fn initial_state(&self) -> Result<DenseVector, DynamicsError> {
            Ok(DenseVector::zeros(self.n))
        }
    }

    fn ode<F: Fn(f64, &[f64], &mut [f64]) + Send + Sync>(n: usize, f: F) -> Ode<F> {
        Ode { n, f, params: SystemParams::default() }
    }

    fn run(field: &dyn VectorField, y0: &[f64], t0: f64, tf: f64, cfg: &IntegratorConfig) -> Trajectory {
        integrate_at(field, &DenseVector::from_column_slice(y0), &[t0, tf], cfg).unwrap()
    }

    fn decay_error(rtol: f64) -> f64 {
        // integrate_at needs t₀ > 0, so shift time by one.
        let f = ode(1, |_, y, dy| dy[0] = -y[0]);
        let cfg = IntegratorConfig { rel_tol: rtol, abs_tol: rtol * 1e-2, ..Default::default() };
        let tr = run(&f, &[1.0], 1.0, 2.0, &cfg);
        (tr.states.last().unwrap()[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn exponential_decay() {
        assert!(decay_error(1e-6) < 1e-6);
    }

    #[test]
    fn global_error_shrinks_with_tolerance() {
        let errs: Vec<f64> = (0..5).map(|k| decay_error(1e-5 / 2f64.powi(k))).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0], "{errs:?}");
        }
    }

    #[test]
    fn quadratic_is_exact() {
        let f = ode(1, |t, _, dy| dy[0] = 2.0 * t);
        let tr = run(&f, &[1.0], 1.0, 2.0, &IntegratorConfig::default());
        assert!((tr.states.last().unwrap()[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn harmonic_energy_drift() {
        let f = ode(2, |_, y, dy| {
            dy[0] = y[1];
            dy[1] = -y[0];
        });
        let samples: Vec<f64> = (0..=200).map(|k| 1.0 + 0.1 * k as f64).collect();
        let tr = integrate_at(&f, &DenseVector::from_column_slice(&[1.0, 0.0]), &samples, &IntegratorConfig::default()).unwrap();
        let drift = tr.states.iter().map(|s| (0.5 * s.norm_squared() - 0.5).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-5, "{drift}");
    }

    #[test]
    fn dense_output_matches_restart_at_sample() {
        let f = ode(2, |t, y, dy| {
            dy[0] = y[1];
            dy[1] = -y[0] / t;
        });
        let cfg = IntegratorConfig::default();
        let y0 = DenseVector::from_column_slice(&[1.0, 0.5]);
        let tr = integrate(&f, &y0, 1.0, 30.0, &cfg).unwrap();
        for (i, &ts) in tr.times.iter().enumerate().skip(1).step_by(7) {
            let direct = integrate_at(&f, &y0, &[1.0, ts], &cfg).unwrap();
            let d = (&tr.states[i] - direct.states.last().unwrap()).amax();
            let scale = cfg.abs_tol + cfg.rel_tol * tr.states[i].amax();
            assert!(d <= 10.0 * scale.max(cfg.rel_tol), "t = {ts}: {d}");
        }
    }

    #[test]
    fn deterministic_bitwise() {
        let f = ode(3, |t, y, dy| {
            dy[0] = y[1] * t.sin();
            dy[1] = -y[2];
            dy[2] = y[0] - 0.1 * y[2];
        });
        let y0 = DenseVector::from_column_slice(&[0.3, -1.0, 2.0]);
        let a = integrate(&f, &y0, 1.0, 50.0, &IntegratorConfig::default()).unwrap();
        let b = integrate(&f, &y0, 1.0, 50.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_is_geometric_and_closed() {
        let g = geometric_grid(1.0, 100.0, 40);
        assert_eq!(g.len(), 81);
        assert_eq!(*g.last().unwrap(), 100.0);
        assert!((g[40] - 10.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn failures_keep_partial_output() {
        let f = ode(1, |t, _, dy| dy[0] = if t > 2.0 { f64::NAN } else { 1.0 });
        let err = integrate(&f, &DenseVector::from_element(1, 0.0), 1.0, 10.0, &IntegratorConfig::default()).unwrap_err();
        let partial = err.partial().unwrap();
        assert!(!partial.times.is_empty());
        assert!(matches!(err, IntegratorError::Failed { reason: IntegrationFailure::NonFinite { .. }, .. }), "{err}");

        let stiff = ode(1, |_, y, dy| dy[0] = -1e6 * y[0]);
        let cfg = IntegratorConfig { max_steps: 100, ..Default::default() };
        let err = integrate(&stiff, &DenseVector::from_element(1, 1.0), 1.0, 10.0, &cfg).unwrap_err();
        assert!(matches!(err, IntegratorError::Failed { reason: IntegrationFailure::MaxSteps { .. }, .. }));
    }

    #[test]
    fn bad_config_is_rejected() {
        let f = ode(1, |_, _, dy| dy[0] = 0.0);
        let y0 = DenseVector::from_element(1, 0.0);
        let cfg = IntegratorConfig { rel_tol: 0.0, ..Default::default() };
        assert!(matches!(integrate(&f, &y0, 1.0, 2.0, &cfg), Err(IntegratorError::Config(_))));
        assert!(integrate(&f, &y0, 2.0, 1.0, &IntegratorConfig::default()).is_err());
    }
}
