//! Smoothing surrogates for nonsmooth scalar kinks and the μ(t) schedule.
//!
//! Pointwise max/min/mid reduce to [`SmoothScalarFn::MaxZero`]:
//! `max{a, b} = b + max{a − b, 0}`, `min{a, b} = a − max{a − b, 0}`, and
//! `mid(a, lo, hi) = min{max{a, lo}, hi}`. See [`smooth_max`], [`smooth_min`].

use crate::numerics::DenseVector;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("smoothing parameter must be positive and finite, got {0}")]
    Mu(f64),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("time {t} precedes schedule start {t0}")]
    BeforeStart { t: f64, t0: f64 },
}

fn check_mu(mu: f64) -> Result<(), SmoothingError> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(SmoothingError::Mu(mu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothScalarFn {
    /// Surrogate of `max{0, s}`; quadratic on `|s| ≤ μ`.
    MaxZero,
    /// Surrogate of `|s|`; quadratic on `|s| ≤ μ/2`.
    Abs,
}

impl SmoothScalarFn {
    /// Uniform approximation constant: `0 ≤ value − exact ≤ κμ`.
    pub const fn kappa(self) -> f64 {
        0.25
    }

    /// Gradient Lipschitz constant is `ell / μ`; documentation only.
    pub const fn ell(self) -> f64 {
        match self {
            Self::MaxZero => 0.5,
            Self::Abs => 2.0,
        }
    }

    pub fn exact(self, s: f64) -> f64 {
        match self {
            Self::MaxZero => s.max(0.0),
            Self::Abs => s.abs(),
        }
    }

    pub fn value(self, s: f64, mu: f64) -> Result<f64, SmoothingError> {
        check_mu(mu)?;
        Ok(self.value_unchecked(s, mu))
    }

    pub fn grad(self, s: f64, mu: f64) -> Result<f64, SmoothingError> {
        check_mu(mu)?;
        Ok(self.grad_unchecked(s, mu))
    }

    #[inline]
    pub(crate) fn value_unchecked(self, s: f64, mu: f64) -> f64 {
        match self {
            Self::MaxZero => {
                if s.abs() > mu {
                    s.max(0.0)
                } else {
                    (s + mu) * (s + mu) / (4.0 * mu)
                }
            }
            Self::Abs => {
                if s.abs() > 0.5 * mu {
                    s.abs()
                } else {
                    s * s / mu + 0.25 * mu
                }
            }
        }
    }

    #[inline]
    pub(crate) fn grad_unchecked(self, s: f64, mu: f64) -> f64 {
        match self {
            Self::MaxZero => {
                if s > mu {
                    1.0
                } else if s < -mu {
                    0.0
                } else {
                    (s + mu) / (2.0 * mu)
                }
            }
            Self::Abs => {
                if s.abs() > 0.5 * mu {
                    s.signum()
                } else {
                    2.0 * s / mu
                }
            }
        }
    }
}

pub fn smooth_max_zero(s: f64, mu: f64) -> Result<f64, SmoothingError> {
    SmoothScalarFn::MaxZero.value(s, mu)
}

pub fn smooth_max_zero_grad(s: f64, mu: f64) -> Result<f64, SmoothingError> {
    SmoothScalarFn::MaxZero.grad(s, mu)
}

pub fn smooth_abs(s: f64, mu: f64) -> Result<f64, SmoothingError> {
    SmoothScalarFn::Abs.value(s, mu)
}

pub fn smooth_abs_grad(s: f64, mu: f64) -> Result<f64, SmoothingError> {
    SmoothScalarFn::Abs.grad(s, mu)
}

/// Smoothed `max{a, b}` with κ = 1/4.
pub fn smooth_max(a: f64, b: f64, mu: f64) -> Result<f64, SmoothingError> {
    Ok(b + smooth_max_zero(a - b, mu)?)
}

/// Smoothed `min{a, b}` with κ = 1/4.
pub fn smooth_min(a: f64, b: f64, mu: f64) -> Result<f64, SmoothingError> {
    Ok(a - smooth_max_zero(a - b, mu)?)
}

/// Σ θ̂(xᵢ, μ) and its gradient; κ = n/4.
pub fn smooth_l1(x: &DenseVector, mu: f64) -> Result<(f64, DenseVector), SmoothingError> {
    check_mu(mu)?;
    let mut g = DenseVector::zeros(x.len());
    let v = smooth_l1_into(x.as_slice(), mu, g.as_mut_slice());
    Ok((v, g))
}

/// Allocation-free [`smooth_l1`]; `mu` must already be validated.
pub(crate) fn smooth_l1_into(x: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
    let mut v = 0.0;
    for (g, &xi) in grad.iter_mut().zip(x) {
        v += SmoothScalarFn::Abs.value_unchecked(xi, mu);
        *g = SmoothScalarFn::Abs.grad_unchecked(xi, mu);
    }
    v
}


/// μ(t) = μ₀ t^{−2α} for t ≥ t₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSchedule {
    mu0: f64,
    alpha: f64,
    t0: f64,
}

impl MuSchedule {
    pub fn new(mu0: f64, alpha: f64, t0: f64) -> Result<Self, SmoothingError> {
        if !(mu0 > 0.0 && mu0.is_finite()) {
            return Err(SmoothingError::Schedule(format!("mu0 must be positive, got {mu0}")));
        }
        if !(alpha >= 2.0 && alpha.is_finite()) {
            return Err(SmoothingError::Schedule(format!("alpha must be >= 2, got {alpha}")));
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(SmoothingError::Schedule(format!("t0 must be positive, got {t0}")));
        }
        Ok(Self { mu0, alpha, t0 })
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn mu_at(&self, t: f64) -> Result<f64, SmoothingError> {
        // Integrator stages never step behind t0; allow rounding slack only.
        if t < self.t0 * (1.0 - 1e-12) {
            return Err(SmoothingError::BeforeStart { t, t0: self.t0 });
        }
        Ok(self.eval(t))
    }

    #[inline]
    pub(crate) fn eval(&self, t: f64) -> f64 {
        self.mu0 * t.powf(-2.0 * self.alpha)
    }

    /// μ̇(t) = −2α μ(t) / t.
    pub fn derivative(&self, t: f64) -> Result<f64, SmoothingError> {
        Ok(-2.0 * self.alpha * self.mu_at(t)? / t)
    }
}
