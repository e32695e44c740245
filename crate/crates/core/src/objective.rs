//! Objective functions: smooth gradient oracles and the smoothed ℓ₁ norm.

use crate::numerics::{spectral_norm, DenseMatrix, DenseVector};
use crate::smoothing::{smooth_l1_into, SmoothScalarFn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("objective `{0}` is nonsmooth; use a smoothed system")]
    NotSmooth(&'static str),
    #[error("invalid objective: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// log(1 + exp(−wᵀx)).
    Logistic { w: DenseVector },
    /// xᵀQx.
    Quadratic { q: DenseMatrix },
    /// ½‖x − c‖².
    HalfSquaredDistance { c: DenseVector },
    /// ‖x‖₁; the smoothed systems use Σ θ̂(xᵢ, μ).
    L1 { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Logistic { w: Vec<f64> },
    Quadratic { q: Vec<Vec<f64>> },
    HalfSquaredDistance { c: Vec<f64> },
    L1 { dim: usize },
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &DenseVector, x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(p, q)| p * q).sum()
}

impl Objective {
    pub fn from_spec(spec: &ObjectiveSpec) -> Result<Self, ObjectiveError> {
        Ok(match spec {
            ObjectiveSpec::Logistic { w } => Self::Logistic { w: DenseVector::from_column_slice(w) },
            ObjectiveSpec::Quadratic { q } => {
                let n = q.len();
                if q.iter().any(|r| r.len() != n) {
                    return Err(ObjectiveError::Invalid("quadratic matrix must be square".into()));
                }
                let flat: Vec<f64> = q.iter().flatten().copied().collect();
                Self::Quadratic { q: DenseMatrix::from_row_slice(n, n, &flat) }
            }
            ObjectiveSpec::HalfSquaredDistance { c } => Self::HalfSquaredDistance { c: DenseVector::from_column_slice(c) },
            ObjectiveSpec::L1 { dim } => Self::L1 { dim: *dim },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Logistic { .. } => "logistic",
            Self::Quadratic { .. } => "quadratic",
            Self::HalfSquaredDistance { .. } => "half_squared_distance",
            Self::L1 { .. } => "l1",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Logistic { w } => w.len(),
            Self::Quadratic { q } => q.nrows(),
            Self::HalfSquaredDistance { c } => c.len(),
            Self::L1 { dim } => *dim,
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, Self::L1 { .. })
    }

    /// Exact value f(x).
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Logistic { w } => softplus(-dot(w, x)),
            Self::Quadratic { q } => {
                let xv = nalgebra::DVectorView::from_slice(x, q.nrows());
                xv.dot(&(q * xv))
            }
            Self::HalfSquaredDistance { c } => 0.5 * c.iter().zip(x).map(|(ci, xi)| (xi - ci).powi(2)).sum::<f64>(),
            Self::L1 { .. } => x.iter().map(|xi| xi.abs()).sum(),
        }
    }

    /// ∇f(x) for smooth objectives.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ObjectiveError> {
        match self {
            Self::L1 { .. } => Err(ObjectiveError::NotSmooth("l1")),
            _ => {
                self.smooth_part_gradient_into(x, out);
                Ok(())
            }
        }
    }

    /// Gradient of the smooth part; zero for ℓ₁.
    pub fn smooth_part_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Logistic { w } => {
                let s = -sigmoid(-dot(w, x));
                for (o, wi) in out.iter_mut().zip(w.iter()) {
                    *o = s * wi;
                }
            }
            Self::Quadratic { q } => {
                let n = q.nrows();
                let xv = nalgebra::DVectorView::from_slice(x, n);
                let g = q * xv + q.tr_mul(&xv);
                out.copy_from_slice(g.as_slice());
            }
            Self::HalfSquaredDistance { c } => {
                for ((o, xi), ci) in out.iter_mut().zip(x).zip(c.iter()) {
                    *o = xi - ci;
                }
            }
            Self::L1 { .. } => out.fill(0.0),
        }
    }

    /// Hessian of the smooth part.
    pub fn smooth_part_hessian(&self, x: &[f64]) -> DenseMatrix {
        match self {
            Self::Logistic { w } => {
                let s = sigmoid(-dot(w, x));
                w * w.transpose() * (s * (1.0 - s))
            }
            Self::Quadratic { q } => q + q.transpose(),
            Self::HalfSquaredDistance { c } => DenseMatrix::identity(c.len(), c.len()),
            Self::L1 { dim } => DenseMatrix::zeros(*dim, *dim),
        }
    }

    /// Value of the smooth part (zero for ℓ₁).
    pub fn smooth_part_value(&self, x: &[f64]) -> f64 {
        match self {
            Self::L1 { .. } => 0.0,
            _ => self.value(x),
        }
    }

    /// Weight of the ℓ₁ part (one for ℓ₁, zero otherwise).
    pub fn l1_weight(&self) -> f64 {
        match self {
            Self::L1 { .. } => 1.0,
            _ => 0.0,
        }
    }

    /// f̂(x, μ); smooth objectives ignore μ.
    pub fn smoothed_value(&self, x: &[f64], mu: f64) -> f64 {
        match self {
            Self::L1 { .. } => x.iter().map(|&xi| SmoothScalarFn::Abs.value_unchecked(xi, mu)).sum(),
            _ => self.value(x),
        }
    }

    /// ∇ₓf̂(x, μ).
    pub fn smoothed_gradient_into(&self, x: &[f64], mu: f64, out: &mut [f64]) {
        match self {
            Self::L1 { .. } => {
                smooth_l1_into(x, mu, out);
            }
            _ => self.smooth_part_gradient_into(x, out),
        }
    }

    /// Aggregated κ with |f̂(x, μ) − f(x)| ≤ κμ.
    pub fn kappa(&self) -> f64 {
        match self {
            Self::L1 { dim } => *dim as f64 * SmoothScalarFn::Abs.kappa(),
            _ => 0.0,
        }
    }

    /// Lipschitz constant of the smooth part's gradient.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Logistic { w } => 0.25 * w.norm_squared(),
            Self::Quadratic { q } => spectral_norm(&(q + q.transpose())),
            Self::HalfSquaredDistance { .. } => 1.0,
            Self::L1 { .. } => 0.0,
        }
    }
}
