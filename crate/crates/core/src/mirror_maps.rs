//! Distance-generating functions and their conjugate gradients.
//!
//! A [`MirrorMap`] carries the pair (ψ, ψ*). The dynamics only ever call
//! [`MirrorMap::grad_conjugate_into`]; the remaining operations feed the
//! Lyapunov diagnostics and the second-order cross-check.

use crate::numerics::{DenseMatrix, DenseVector};
use crate::projections::{ProjectionError, Projector, SetSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest exponent `u − 1` the negative-entropy map evaluates before clamping.
pub const NEG_ENTROPY_EXP_CLAMP: f64 = 500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MirrorError {
    #[error("{map}: coordinate {index} = {value} is outside the conjugate domain ({reason})")]
    Domain { map: &'static str, index: usize, value: f64, reason: &'static str },
    #[error("{0} does not support {1}")]
    Unsupported(&'static str, &'static str),
    #[error("dimension mismatch: map has dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MirrorMap {
    /// ψ = ½‖x‖² on ℝⁿ.
    Euclidean { dim: usize },
    /// ψ = Σ xᵢ ln xᵢ on ℝⁿ₊.
    NegEntropy { dim: usize },
    /// ψ = −Σ ln xᵢ on ℝⁿ₊ (Itakura–Saito divergence).
    ItakuraSaito { dim: usize },
    /// ψ = Σ xᵢ ln xᵢ on the unit simplex (Kullback–Leibler divergence).
    SimplexEntropy { dim: usize },
    /// ψ = ½‖x‖² + indicator of the projector's set; ∇ψ* is the projection.
    Projection(Projector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum MirrorSpec {
    Euclidean { dim: usize },
    NegEntropy { dim: usize },
    ItakuraSaito { dim: usize },
    SimplexEntropy { dim: usize },
    Projection { region: SetSpec },
}

thread_local! {
    static GRAD_CONJUGATE_CALLS: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Number of ∇ψ* evaluations made on the current thread.
pub fn grad_conjugate_calls() -> u64 {
    GRAD_CONJUGATE_CALLS.with(|c| c.get())
}

fn lse(u: &[f64]) -> f64 {
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + u.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_dim(expected: usize, got: usize) -> Result<(), MirrorError> {
    if expected == got {
        Ok(())
    } else {
        Err(MirrorError::Dimension { expected, got })
    }
}

impl MirrorMap {
    pub fn from_spec(spec: &MirrorSpec) -> Result<Self, MirrorError> {
        Ok(match spec {
            MirrorSpec::Euclidean { dim } => Self::Euclidean { dim: *dim },
            MirrorSpec::NegEntropy { dim } => Self::NegEntropy { dim: *dim },
            MirrorSpec::ItakuraSaito { dim } => Self::ItakuraSaito { dim: *dim },
            MirrorSpec::SimplexEntropy { dim } => Self::SimplexEntropy { dim: *dim },
            MirrorSpec::Projection { region } => Self::Projection(Projector::from_spec(region)?),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Euclidean { dim } | Self::NegEntropy { dim } | Self::ItakuraSaito { dim } | Self::SimplexEntropy { dim } => *dim,
            Self::Projection(p) => p.dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Euclidean { .. } => "euclidean",
            Self::NegEntropy { .. } => "neg_entropy",
            Self::ItakuraSaito { .. } => "itakura_saito",
            Self::SimplexEntropy { .. } => "simplex_entropy",
            Self::Projection(_) => "projection",
        }
    }

    /// Whether ψ* is twice differentiable everywhere on its domain.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Self::Projection(_))
    }

    pub fn grad_conjugate(&self, u: &DenseVector) -> Result<DenseVector, MirrorError> {
        let mut out = DenseVector::zeros(self.dim());
        self.grad_conjugate_into(u.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    /// Writes ∇ψ*(u) into `out`. Returns `true` when the negative-entropy
    /// exponent had to be clamped.
    pub fn grad_conjugate_into(&self, u: &[f64], out: &mut [f64]) -> Result<bool, MirrorError> {
        GRAD_CONJUGATE_CALLS.with(|c| c.set(c.get() + 1));
        check_dim(self.dim(), u.len())?;
        check_dim(self.dim(), out.len())?;
        if u.iter().any(|x| !x.is_finite()) {
            return Err(MirrorError::NonFinite("mirror map input"));
        }
        let mut clamped = false;
        match self {
            Self::Euclidean { .. } => out.copy_from_slice(u),
            Self::NegEntropy { .. } => {
                for (o, &ui) in out.iter_mut().zip(u) {
                    let e = ui - 1.0;
                    if e > NEG_ENTROPY_EXP_CLAMP {
                        clamped = true;
                    }
                    *o = e.min(NEG_ENTROPY_EXP_CLAMP).exp();
                }
            }
            Self::ItakuraSaito { .. } => {
                for (i, (o, &ui)) in out.iter_mut().zip(u).enumerate() {
                    if ui >= 0.0 {
                        return Err(MirrorError::Domain { map: "itakura_saito", index: i, value: ui, reason: "requires u < 0" });
                    }
                    *o = -1.0 / ui;
                }
            }
            Self::SimplexEntropy { .. } => {
                let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for (o, &ui) in out.iter_mut().zip(u) {
                    *o = (ui - m).exp();
                    s += *o;
                }
                for o in out.iter_mut() {
                    *o /= s;
                }
            }
            Self::Projection(p) => p.project_into(u, out)?,
        }
        Ok(clamped)
    }

    /// ψ*(u).
    pub fn conjugate(&self, u: &DenseVector) -> Result<f64, MirrorError> {
        check_dim(self.dim(), u.len())?;
        Ok(match self {
            Self::Euclidean { .. } => 0.5 * u.norm_squared(),
            Self::NegEntropy { .. } => u.iter().map(|x| (x - 1.0).exp()).sum(),
            Self::ItakuraSaito { .. } => {
                let mut s = 0.0;
                for (i, &ui) in u.iter().enumerate() {
                    if ui >= 0.0 {
                        return Err(MirrorError::Domain { map: "itakura_saito", index: i, value: ui, reason: "requires u < 0" });
                    }
                    s -= 1.0 + (-ui).ln();
                }
                s
            }
            Self::SimplexEntropy { .. } => lse(u.as_slice()),
            Self::Projection(p) => {
                let pu = p.project(u)?;
                0.5 * (u.norm_squared() - (u - pu).norm_squared())
            }
        })
    }

    /// ψ(x); `+∞` outside the map's domain.
    pub fn primal(&self, x: &DenseVector) -> Result<f64, MirrorError> {
        check_dim(self.dim(), x.len())?;
        let xlogx = |x: &DenseVector| -> f64 {
            if x.iter().any(|&xi| xi < 0.0) {
                return f64::INFINITY;
            }
            x.iter().map(|&xi| if xi > 0.0 { xi * xi.ln() } else { 0.0 }).sum()
        };
        Ok(match self {
            Self::Euclidean { .. } => 0.5 * x.norm_squared(),
            Self::NegEntropy { .. } => xlogx(x),
            Self::ItakuraSaito { .. } => {
                if x.iter().any(|&xi| xi <= 0.0) {
                    f64::INFINITY
                } else {
                    -x.iter().map(|xi| xi.ln()).sum::<f64>()
                }
            }
            Self::SimplexEntropy { .. } => {
                if (x.sum() - 1.0).abs() > 1e-12 {
                    f64::INFINITY
                } else {
                    xlogx(x)
                }
            }
            Self::Projection(p) => {
                if p.contains(x.as_slice(), 1e-12) {
                    0.5 * x.norm_squared()
                } else {
                    f64::INFINITY
                }
            }
        })
    }

    /// ∇²ψ*(u).
    pub fn hessian_conjugate(&self, u: &DenseVector) -> Result<DenseMatrix, MirrorError> {
        let x = match self {
            Self::Projection(_) => return Err(MirrorError::Unsupported("projection map", "hessian_conjugate")),
            _ => self.grad_conjugate(u)?,
        };
        Ok(self.hessian_from_primal(&x))
    }

    /// ∇²ψ*(∇ψ(z)) written in terms of the primal point `z`.
    pub fn hessian_at_primal(&self, z: &DenseVector) -> Result<DenseMatrix, MirrorError> {
        check_dim(self.dim(), z.len())?;
        if let Self::Projection(_) = self {
            return Err(MirrorError::Unsupported("projection map", "hessian_at_primal"));
        }
        Ok(self.hessian_from_primal(z))
    }

    fn hessian_from_primal(&self, x: &DenseVector) -> DenseMatrix {
        match self {
            Self::Euclidean { dim } => DenseMatrix::identity(*dim, *dim),
            Self::NegEntropy { .. } => DenseMatrix::from_diagonal(x),
            Self::ItakuraSaito { .. } => DenseMatrix::from_diagonal(&x.component_mul(x)),
            Self::SimplexEntropy { .. } => DenseMatrix::from_diagonal(x) - x * x.transpose(),
            Self::Projection(_) => unreachable!("guarded by callers"),
        }
    }

    /// D_ψ*(u, u_ref) = ψ*(u) − ψ*(u_ref) − ∇ψ*(u_ref)ᵀ(u − u_ref).
    pub fn bregman_conjugate(&self, u: &DenseVector, u_ref: &DenseVector) -> Result<f64, MirrorError> {
        check_dim(self.dim(), u.len())?;
        check_dim(self.dim(), u_ref.len())?;
        Ok(match self {
            Self::Euclidean { .. } => 0.5 * (u - u_ref).norm_squared(),
            Self::NegEntropy { .. } => u
                .iter()
                .zip(u_ref.iter())
                .map(|(&a, &r)| {
                    let d = a - r;
                    (r - 1.0).exp() * (d.exp_m1() - d)
                })
                .sum(),
            Self::ItakuraSaito { .. } => {
                self.conjugate(u)?;
                self.conjugate(u_ref)?;
                u.iter()
                    .zip(u_ref.iter())
                    .map(|(&a, &r)| {
                        let q = a / r;
                        q - 1.0 - q.ln()
                    })
                    .sum()
            }
            Self::SimplexEntropy { .. } => {
                let (la, lr) = (lse(u.as_slice()), lse(u_ref.as_slice()));
                u.iter()
                    .zip(u_ref.iter())
                    .map(|(&a, &r)| {
                        let lpr = r - lr;
                        lpr.exp() * (lpr - (a - la))
                    })
                    .sum::<f64>()
                    .max(0.0)
            }
            Self::Projection(_) => {
                let g = self.grad_conjugate(u_ref)?;
                self.conjugate(u)? - self.conjugate(u_ref)? - g.dot(&(u - u_ref))
            }
        })
    }

    /// u* with ∇ψ*(u*) = x*. Requires x* in the relative interior for the
    /// smooth kinds.
    pub fn dual_point_for(&self, x_star: &DenseVector) -> Result<DenseVector, MirrorError> {
        check_dim(self.dim(), x_star.len())?;
        let positive = |map: &'static str| -> Result<(), MirrorError> {
            match x_star.iter().position(|&xi| !(xi > 0.0)) {
                Some(i) => Err(MirrorError::Domain { map, index: i, value: x_star[i], reason: "boundary point has no dual preimage" }),
                None => Ok(()),
            }
        };
        match self {
            Self::Euclidean { .. } => Ok(x_star.clone()),
            Self::NegEntropy { .. } => {
                positive("neg_entropy")?;
                Ok(x_star.map(|xi| 1.0 + xi.ln()))
            }
            Self::ItakuraSaito { .. } => {
                positive("itakura_saito")?;
                Ok(x_star.map(|xi| -1.0 / xi))
            }
            Self::SimplexEntropy { .. } => {
                positive("simplex_entropy")?;
                Ok(x_star.map(f64::ln))
            }
            Self::Projection(p) => {
                let r = p.membership_residual(x_star.as_slice());
                if r > 1e-8 {
                    let i = (0..x_star.len()).next().unwrap_or(0);
                    return Err(MirrorError::Domain { map: "projection", index: i, value: r, reason: "point lies outside the set" });
                }
                Ok(x_star.clone())
            }
        }
    }

    /// D_ψ(x*, ∇ψ*(u)), computed in dual coordinates.
    ///
    /// Agrees with `bregman_conjugate(u, dual_point_for(x*))` whenever u*
    /// exists and extends it lower-semicontinuously to boundary x*, where it
    /// may be `+∞`.
    pub fn bregman_to_solution(&self, u: &DenseVector, x_star: &DenseVector) -> Result<f64, MirrorError> {
        check_dim(self.dim(), u.len())?;
        check_dim(self.dim(), x_star.len())?;
        let xlnx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
        Ok(match self {
            Self::Euclidean { .. } => 0.5 * (x_star - u).norm_squared(),
            Self::NegEntropy { .. } => u
                .iter()
                .zip(x_star.iter())
                .map(|(&ui, &xi)| xlnx(xi) - xi * (ui - 1.0) - xi + (ui - 1.0).exp())
                .sum(),
            Self::ItakuraSaito { .. } => {
                let mut s = 0.0;
                for (i, (&ui, &xi)) in u.iter().zip(x_star.iter()).enumerate() {
                    if ui >= 0.0 {
                        return Err(MirrorError::Domain { map: "itakura_saito", index: i, value: ui, reason: "requires u < 0" });
                    }
                    if !(xi > 0.0) {
                        return Ok(f64::INFINITY);
                    }
                    s += -xi.ln() - (-ui).ln() - xi * ui - 1.0;
                }
                s
            }
            Self::SimplexEntropy { .. } => {
                let l = lse(u.as_slice());
                u.iter().zip(x_star.iter()).map(|(&ui, &xi)| xlnx(xi) - xi * (ui - l)).sum::<f64>().max(0.0)
            }
            Self::Projection(p) => {
                let pu = p.project(u)?;
                0.5 * (u - x_star).norm_squared() - 0.5 * (u - pu).norm_squared()
            }
        })
    }

    /// Default initial dual state: x₀ = 1 for the orthant maps, u₀ = 0 otherwise.
    pub fn default_dual_start(&self) -> DenseVector {
        let n = self.dim();
        match self {
            Self::NegEntropy { .. } => DenseVector::from_element(n, 1.0),
            Self::ItakuraSaito { .. } => DenseVector::from_element(n, -1.0),
            _ => DenseVector::zeros(n),
        }
    }

    /// Violation of membership in the map's feasible set (zero inside).
    pub fn membership_residual(&self, x: &[f64]) -> f64 {
        match self {
            Self::Euclidean { .. } => 0.0,
            Self::NegEntropy { .. } | Self::ItakuraSaito { .. } => x.iter().fold(0.0f64, |m, &xi| m.max(-xi)),
            Self::SimplexEntropy { .. } => {
                let neg = x.iter().fold(0.0f64, |m, &xi| m.max(-xi));
                neg.max((x.iter().sum::<f64>() - 1.0).abs())
            }
            Self::Projection(p) => p.membership_residual(x),
        }
    }

    /// The feasible set as a projector (`None` for the whole space).
    pub fn feasible_set(&self) -> Option<Projector> {
        match self {
            Self::Euclidean { .. } => None,
            Self::NegEntropy { dim } | Self::ItakuraSaito { dim } => Projector::positive_orthant(*dim).ok(),
            Self::SimplexEntropy { dim } => Projector::simplex(*dim).ok(),
            Self::Projection(p) => Some(p.clone()),
        }
    }
}

/// Concatenation of per-agent mirror maps acting on stacked vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMirror {
    blocks: Vec<MirrorMap>,
    offsets: Vec<usize>,
}

impl BlockMirror {
    pub fn new(blocks: Vec<MirrorMap>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for b in &blocks {
            acc += b.dim();
            offsets.push(acc);
        }
        Self { blocks, offsets }
    }

    pub fn blocks(&self) -> &[MirrorMap] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn grad_conjugate_into(&self, u: &[f64], out: &mut [f64]) -> Result<bool, MirrorError> {
        check_dim(self.dim(), u.len())?;
        let mut clamped = false;
        for (i, b) in self.blocks.iter().enumerate() {
            let r = self.range(i);
            clamped |= b.grad_conjugate_into(&u[r.clone()], &mut out[r])?;
        }
        Ok(clamped)
    }

    pub fn grad_conjugate(&self, u: &DenseVector) -> Result<DenseVector, MirrorError> {
        let mut out = DenseVector::zeros(self.dim());
        self.grad_conjugate_into(u.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    fn per_block<F>(&self, a: &DenseVector, b: &DenseVector, f: F) -> Result<f64, MirrorError>
    where
        F: Fn(&MirrorMap, &DenseVector, &DenseVector) -> Result<f64, MirrorError>,
    {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())?;
        let mut s = 0.0;
        for (i, m) in self.blocks.iter().enumerate() {
            let r = self.range(i);
            s += f(m, &a.rows(r.start, r.len()).into_owned(), &b.rows(r.start, r.len()).into_owned())?;
        }
        Ok(s)
    }

    pub fn bregman_conjugate(&self, u: &DenseVector, u_ref: &DenseVector) -> Result<f64, MirrorError> {
        self.per_block(u, u_ref, |m, a, b| m.bregman_conjugate(a, b))
    }

    pub fn bregman_to_solution(&self, u: &DenseVector, x_star: &DenseVector) -> Result<f64, MirrorError> {
        self.per_block(u, x_star, |m, a, b| m.bregman_to_solution(a, b))
    }

    pub fn default_dual_start(&self) -> DenseVector {
        let mut out = DenseVector::zeros(self.dim());
        for (i, m) in self.blocks.iter().enumerate() {
            let r = self.range(i);
            out.rows_mut(r.start, r.len()).copy_from(&m.default_dual_start());
        }
        out
    }

    /// Largest per-block membership violation.
    pub fn membership_residual(&self, x: &[f64]) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, m)| m.membership_residual(&x[self.range(i)]))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::from_column_slice(xs)
    }

    fn smooth_maps(n: usize) -> Vec<MirrorMap> {
        vec![
            MirrorMap::Euclidean { dim: n },
            MirrorMap::NegEntropy { dim: n },
            MirrorMap::ItakuraSaito { dim: n },
            MirrorMap::SimplexEntropy { dim: n },
        ]
    }

    /// Random point in the conjugate domain of `map`.
    fn sample_dual(map: &MirrorMap, rng: &mut SeededRng, scale: f64) -> DenseVector {
        let n = map.dim();
        match map {
            MirrorMap::ItakuraSaito { .. } => DenseVector::from_fn(n, |_, _| -(0.05 + scale * rng.uniform())),
            _ => DenseVector::from_fn(n, |_, _| scale * rng.gaussian()),
        }
    }

    #[test]
    fn grad_conjugate_examples() {
        assert_eq!(MirrorMap::Euclidean { dim: 2 }.grad_conjugate(&v(&[1.0, 2.0])).unwrap().as_slice(), &[1.0, 2.0]);
        let p = MirrorMap::SimplexEntropy { dim: 3 }.grad_conjugate(&v(&[0.0; 3])).unwrap();
        assert_relative_eq!(p, v(&[1.0 / 3.0; 3]), epsilon = 1e-16);
        assert_eq!(MirrorMap::NegEntropy { dim: 2 }.grad_conjugate(&v(&[1.0, 1.0])).unwrap().as_slice(), &[1.0, 1.0]);
        assert_eq!(MirrorMap::ItakuraSaito { dim: 2 }.grad_conjugate(&v(&[-1.0, -2.0])).unwrap().as_slice(), &[1.0, 0.5]);
    }

    #[test]
    fn itakura_saito_domain_error() {
        let err = MirrorMap::ItakuraSaito { dim: 2 }.grad_conjugate(&v(&[-1.0, 0.0])).unwrap_err();
        assert!(matches!(err, MirrorError::Domain { index: 1, .. }));
    }

    #[test]
    fn neg_entropy_clamp_sets_flag() {
        let m = MirrorMap::NegEntropy { dim: 2 };
        let mut out = [0.0; 2];
        assert!(!m.grad_conjugate_into(&[1.0, 2.0], &mut out).unwrap());
        assert!(m.grad_conjugate_into(&[1.0, 900.0], &mut out).unwrap());
        assert_eq!(out[1], NEG_ENTROPY_EXP_CLAMP.exp());
    }

    #[test]
    fn softmax_survives_huge_inputs() {
        let p = MirrorMap::SimplexEntropy { dim: 3 }.grad_conjugate(&v(&[1000.0, 1000.0, -1000.0])).unwrap();
        assert_relative_eq!(p, v(&[0.5, 0.5, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn hessian_examples() {
        assert_eq!(MirrorMap::Euclidean { dim: 3 }.hessian_conjugate(&v(&[1.0, 2.0, 3.0])).unwrap(), DenseMatrix::identity(3, 3));
        let h = MirrorMap::SimplexEntropy { dim: 2 }.hessian_conjugate(&v(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(h, DenseMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]), epsilon = 1e-16);
        assert_eq!(MirrorMap::NegEntropy { dim: 2 }.hessian_conjugate(&v(&[1.0, 1.0])).unwrap(), DenseMatrix::identity(2, 2));
        let proj = MirrorMap::Projection(Projector::simplex(2).unwrap());
        assert!(matches!(proj.hessian_conjugate(&v(&[0.0, 0.0])), Err(MirrorError::Unsupported(..))));
    }

    #[test]
    fn bregman_examples() {
        let e = MirrorMap::Euclidean { dim: 2 };
        assert_eq!(e.bregman_conjugate(&v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap(), 0.5);
        for m in smooth_maps(3) {
            let u = m.default_dual_start();
            assert_eq!(m.bregman_conjugate(&u, &u).unwrap(), 0.0);
        }
    }

    #[test]
    fn simplex_bregman_matches_direct_formula() {
        // Independent evaluation straight from ψ*(u) = log Σ exp(uᵢ).
        let m = MirrorMap::SimplexEntropy { dim: 4 };
        let u = v(&[0.3, -1.2, 2.0, 0.1]);
        let r = v(&[-0.5, 0.4, 0.0, 1.1]);
        let lse_naive = |w: &DenseVector| w.iter().map(|x| x.exp()).sum::<f64>().ln();
        let sm: Vec<f64> = {
            let z: f64 = r.iter().map(|x| x.exp()).sum();
            r.iter().map(|x| x.exp() / z).collect()
        };
        let direct = lse_naive(&u) - lse_naive(&r) - sm.iter().zip((&u - &r).iter()).map(|(a, b)| a * b).sum::<f64>();
        let got = m.bregman_conjugate(&u, &r).unwrap();
        assert!(got >= 0.0);
        assert_relative_eq!(got, direct, epsilon = 1e-13);
    }

    #[test]
    fn dual_point_examples() {
        assert_eq!(MirrorMap::Euclidean { dim: 2 }.dual_point_for(&v(&[3.0, -1.0])).unwrap().as_slice(), &[3.0, -1.0]);
        assert_eq!(MirrorMap::NegEntropy { dim: 2 }.dual_point_for(&v(&[1.0, 1.0])).unwrap().as_slice(), &[1.0, 1.0]);
        let s = MirrorMap::SimplexEntropy { dim: 2 };
        let u = s.dual_point_for(&v(&[0.5, 0.5])).unwrap();
        assert_eq!(u[0], 0.5f64.ln());
        assert!((s.grad_conjugate(&u).unwrap() - v(&[0.5, 0.5])).amax() <= 1e-12);
        let err = s.dual_point_for(&v(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, MirrorError::Domain { index: 1, .. }), "{err}");
        assert!(err.to_string().contains("coordinate 1"));
    }

    #[test]
    fn bregman_to_solution_extends_to_boundary() {
        let s = MirrorMap::SimplexEntropy { dim: 3 };
        let u = v(&[0.2, -0.3, 0.5]);
        let x_int = v(&[0.2, 0.3, 0.5]);
        let direct = s.bregman_conjugate(&u, &s.dual_point_for(&x_int).unwrap()).unwrap();
        assert_relative_eq!(s.bregman_to_solution(&u, &x_int).unwrap(), direct, epsilon = 1e-13);
        // At a vertex the value is finite: −ln softmax(u)₀.
        let d = s.bregman_to_solution(&u, &v(&[1.0, 0.0, 0.0])).unwrap();
        let p0 = s.grad_conjugate(&u).unwrap()[0];
        assert_relative_eq!(d, -p0.ln(), epsilon = 1e-13);
        // Itakura–Saito blows up on the boundary.
        let is = MirrorMap::ItakuraSaito { dim: 2 };
        assert_eq!(is.bregman_to_solution(&v(&[-1.0, -1.0]), &v(&[1.0, 0.0])).unwrap(), f64::INFINITY);
    }

    #[test]
    fn spec_parses() {
        let spec: MirrorSpec = serde_json::from_str(r#"{"map":"projection","region":{"set":"sphere","center":[0,0],"radius":1}}"#).unwrap();
        let m = MirrorMap::from_spec(&spec).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.name(), "projection");
    }

    #[test]
    fn block_mirror_applies_blockwise() {
        let b = BlockMirror::new(vec![MirrorMap::SimplexEntropy { dim: 2 }, MirrorMap::ItakuraSaito { dim: 1 }]);
        let x = b.grad_conjugate(&v(&[0.0, 0.0, -4.0])).unwrap();
        assert_eq!(x.as_slice(), &[0.5, 0.5, 0.25]);
        assert_eq!(b.default_dual_start().as_slice(), &[0.0, 0.0, -1.0]);
        assert_eq!(b.membership_residual(&[0.5, 0.5, -0.1]), 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn range_invariant(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = SeededRng::new(seed);
            for m in smooth_maps(n) {
                let u = sample_dual(&m, &mut rng, 10.0);
                let x = m.grad_conjugate(&u).unwrap();
                match m {
                    MirrorMap::SimplexEntropy { .. } => {
                        prop_assert!(x.iter().all(|&xi| xi >= 0.0));
                        prop_assert!((x.sum() - 1.0).abs() <= 1e-12);
                    }
                    MirrorMap::NegEntropy { .. } | MirrorMap::ItakuraSaito { .. } => prop_assert!(x.iter().all(|&xi| xi > 0.0)),
                    _ => {}
                }
            }
        }

        #[test]
        fn fenchel_identity(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = SeededRng::new(seed);
            for m in smooth_maps(n) {
                let mut u = sample_dual(&m, &mut rng, 3.0);
                if u.norm() > 10.0 { u *= 10.0 / u.norm(); }
                let x = m.grad_conjugate(&u).unwrap();
                let gap = m.primal(&x).unwrap() + m.conjugate(&u).unwrap() - u.dot(&x);
                prop_assert!(gap.abs() <= 1e-8, "{} gap {}", m.name(), gap);
            }
        }

        #[test]
        fn monotone_and_nonnegative_bregman(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = SeededRng::new(seed);
            let mut maps = smooth_maps(n);
            maps.push(MirrorMap::Projection(Projector::sphere(DenseVector::zeros(n), 1.0).unwrap()));
            for m in maps {
                let u1 = sample_dual(&m, &mut rng, 5.0);
                let u2 = sample_dual(&m, &mut rng, 5.0);
                let g1 = m.grad_conjugate(&u1).unwrap();
                let g2 = m.grad_conjugate(&u2).unwrap();
                prop_assert!((g1 - g2).dot(&(&u1 - &u2)) >= -1e-12);
                prop_assert!(m.bregman_conjugate(&u1, &u2).unwrap() >= -1e-12);
            }
        }

        #[test]
        fn hessian_matches_finite_differences(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = SeededRng::new(seed);
            for m in smooth_maps(n) {
                let u = sample_dual(&m, &mut rng, 2.0);
                let h = m.hessian_conjugate(&u).unwrap();
                let mut fd = DenseMatrix::zeros(n, n);
                for j in 0..n {
                    let step = 1e-6 * (1.0 + u[j].abs());
                    let mut up = u.clone();
                    let mut dn = u.clone();
                    up[j] += step;
                    dn[j] -= step;
                    let col = (m.grad_conjugate(&up).unwrap() - m.grad_conjugate(&dn).unwrap()) / (2.0 * step);
                    fd.set_column(j, &col);
                }
                let rel = (&h - &fd).amax() / h.amax().max(1e-300);
                prop_assert!(rel <= 1e-5, "{} rel err {}", m.name(), rel);
            }
        }

        #[test]
        fn primal_and_dual_bregman_agree(seed in any::<u64>(), n in 1usize..8) {
            let mut rng = SeededRng::new(seed);
            for m in smooth_maps(n) {
                let u = sample_dual(&m, &mut rng, 2.0);
                let ur = sample_dual(&m, &mut rng, 2.0);
                let xs = m.grad_conjugate(&ur).unwrap();
                let ustar = m.dual_point_for(&xs).unwrap();
                prop_assert!((m.grad_conjugate(&ustar).unwrap() - &xs).amax() <= 1e-8);
                let a = m.bregman_to_solution(&u, &xs).unwrap();
                let b = m.bregman_conjugate(&u, &ustar).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{} {} {}", m.name(), a, b);
            }
        }
    }
}
