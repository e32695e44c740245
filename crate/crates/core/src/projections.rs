//! Closed-form Euclidean projections onto simple convex sets.

use crate::numerics::{pseudoinverse, DenseMatrix, DenseVector, DEFAULT_PINV_TOL};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("invalid projector: {0}")]
    Invalid(String),
    #[error("dimension mismatch: projector has dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// The set a [`Projector`] maps onto.
#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    Box { lo: DenseVector, hi: DenseVector },
    /// Closed ball `‖x − center‖ ≤ radius`.
    Sphere { center: DenseVector, radius: f64 },
    /// `{x : Ax = b}`; `a_pinv` is cached at construction.
    Affine { a: DenseMatrix, b: DenseVector, a_pinv: DenseMatrix },
    /// `{x : aᵀx ≤ b}`.
    HalfSpace { a: DenseVector, b: f64 },
    /// Unit simplex `{x ≥ 0, 1ᵀx = 1}`.
    Simplex { dim: usize },
    PositiveOrthant { dim: usize },
}

/// A validated projector. Parameters are checked once, in the constructors.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    kind: SetKind,
}

/// Serializable description of a set, as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum SetSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Sphere { center: Vec<f64>, radius: f64 },
    Affine { a: Vec<Vec<f64>>, b: Vec<f64> },
    HalfSpace { a: Vec<f64>, b: f64 },
    Simplex { dim: usize },
    PositiveOrthant { dim: usize },
}

fn check_finite(what: &str, xs: &[f64]) -> Result<(), ProjectionError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ProjectionError::Invalid(format!("{what} has non-finite entries")))
    }
}

impl Projector {
    pub fn boxed(lo: DenseVector, hi: DenseVector) -> Result<Self, ProjectionError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(ProjectionError::Invalid("box bounds must be nonempty and equally long".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h || l.is_nan() || h.is_nan()) {
            return Err(ProjectionError::Invalid("box requires lo <= hi".into()));
        }
        Ok(Self { kind: SetKind::Box { lo, hi } })
    }

    pub fn sphere(center: DenseVector, radius: f64) -> Result<Self, ProjectionError> {
        check_finite("sphere center", center.as_slice())?;
        if !(radius > 0.0 && radius.is_finite()) || center.is_empty() {
            return Err(ProjectionError::Invalid("sphere requires radius > 0".into()));
        }
        Ok(Self { kind: SetKind::Sphere { center, radius } })
    }

    pub fn affine(a: DenseMatrix, b: DenseVector) -> Result<Self, ProjectionError> {
        if a.nrows() != b.len() || a.ncols() == 0 || a.nrows() == 0 {
            return Err(ProjectionError::Invalid("affine set needs rows(A) = len(b) > 0".into()));
        }
        check_finite("affine A", a.as_slice())?;
        check_finite("affine b", b.as_slice())?;
        let a_pinv = pseudoinverse(&a, DEFAULT_PINV_TOL);
        let resid = &a * (&a_pinv * &b) - &b;
        if resid.amax() > 1e-8 * (1.0 + b.amax()) {
            return Err(ProjectionError::Invalid("affine set is empty (b not in range of A)".into()));
        }
        Ok(Self { kind: SetKind::Affine { a, b, a_pinv } })
    }

    pub fn half_space(a: DenseVector, b: f64) -> Result<Self, ProjectionError> {
        check_finite("half-space normal", a.as_slice())?;
        if a.norm() == 0.0 || !b.is_finite() {
            return Err(ProjectionError::Invalid("half-space requires a != 0".into()));
        }
        Ok(Self { kind: SetKind::HalfSpace { a, b } })
    }

    pub fn simplex(dim: usize) -> Result<Self, ProjectionError> {
        if dim == 0 {
            return Err(ProjectionError::Invalid("simplex dimension must be positive".into()));
        }
        Ok(Self { kind: SetKind::Simplex { dim } })
    }

    pub fn positive_orthant(dim: usize) -> Result<Self, ProjectionError> {
        if dim == 0 {
            return Err(ProjectionError::Invalid("orthant dimension must be positive".into()));
        }
        Ok(Self { kind: SetKind::PositiveOrthant { dim } })
    }

    pub fn from_spec(spec: &SetSpec) -> Result<Self, ProjectionError> {
        match spec {
            SetSpec::Box { lo, hi } => Self::boxed(DenseVector::from_column_slice(lo), DenseVector::from_column_slice(hi)),
            SetSpec::Sphere { center, radius } => Self::sphere(DenseVector::from_column_slice(center), *radius),
            SetSpec::Affine { a, b } => {
                let rows = a.len();
                let cols = a.first().map_or(0, Vec::len);
                if a.iter().any(|r| r.len() != cols) {
                    return Err(ProjectionError::Invalid("ragged affine matrix".into()));
                }
                let flat: Vec<f64> = a.iter().flatten().copied().collect();
                Self::affine(DenseMatrix::from_row_slice(rows, cols, &flat), DenseVector::from_column_slice(b))
            }
            SetSpec::HalfSpace { a, b } => Self::half_space(DenseVector::from_column_slice(a), *b),
            SetSpec::Simplex { dim } => Self::simplex(*dim),
            SetSpec::PositiveOrthant { dim } => Self::positive_orthant(*dim),
        }
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SetKind::Box { lo, .. } => lo.len(),
            SetKind::Sphere { center, .. } => center.len(),
            SetKind::Affine { a, .. } => a.ncols(),
            SetKind::HalfSpace { a, .. } => a.len(),
            SetKind::Simplex { dim } | SetKind::PositiveOrthant { dim } => *dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            SetKind::Box { .. } => "box",
            SetKind::Sphere { .. } => "sphere",
            SetKind::Affine { .. } => "affine",
            SetKind::HalfSpace { .. } => "half_space",
            SetKind::Simplex { .. } => "simplex",
            SetKind::PositiveOrthant { .. } => "positive_orthant",
        }
    }

    pub fn project(&self, u: &DenseVector) -> Result<DenseVector, ProjectionError> {
        let mut out = DenseVector::zeros(self.dim());
        self.project_into(u.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    /// Allocation-free projection of `u` into `out`.
    pub fn project_into(&self, u: &[f64], out: &mut [f64]) -> Result<(), ProjectionError> {
        let n = self.dim();
        if u.len() != n || out.len() != n {
            return Err(ProjectionError::Dimension { expected: n, got: u.len() });
        }
        match &self.kind {
            SetKind::Box { lo, hi } => {
                for i in 0..n {
                    out[i] = u[i].max(lo[i]).min(hi[i]);
                }
            }
            SetKind::Sphere { center, radius } => {
                let dist = u.iter().zip(center.iter()).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
                if dist <= *radius {
                    out.copy_from_slice(u);
                } else {
                    let s = radius / dist;
                    for i in 0..n {
                        out[i] = center[i] + s * (u[i] - center[i]);
                    }
                }
            }
            SetKind::Affine { a, b, a_pinv } => {
                let uv = nalgebra::DVectorView::from_slice(u, n);
                let resid = b - a * uv;
                let corr = a_pinv * resid;
                for i in 0..n {
                    out[i] = u[i] + corr[i];
                }
            }
            SetKind::HalfSpace { a, b } => {
                let excess = a.iter().zip(u).map(|(ai, ui)| ai * ui).sum::<f64>() - b;
                // Rounding-level excess counts as inside, which keeps P∘P = P exact.
                let scale = a.iter().zip(u).map(|(ai, ui)| (ai * ui).abs()).sum::<f64>() + b.abs();
                out.copy_from_slice(u);
                if excess > (a.len() as f64 + 4.0) * f64::EPSILON * scale {
                    let s = excess / a.norm_squared();
                    for i in 0..n {
                        out[i] -= s * a[i];
                    }
                }
            }
            SetKind::Simplex { .. } => project_simplex(u, out),
            SetKind::PositiveOrthant { .. } => {
                for i in 0..n {
                    out[i] = u[i].max(0.0);
                }
            }
        }
        Ok(())
    }

    /// Distance-like violation of membership; zero inside the set.
    pub fn membership_residual(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SetKind::Box { lo, hi } => x
                .iter()
                .enumerate()
                .map(|(i, &xi)| (lo[i] - xi).max(xi - hi[i]).max(0.0))
                .fold(0.0, f64::max),
            SetKind::Sphere { center, radius } => {
                let d = x.iter().zip(center.iter()).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                (d - radius).max(0.0)
            }
            SetKind::Affine { a, b, .. } => {
                let xv = nalgebra::DVectorView::from_slice(x, a.ncols());
                (a * xv - b).amax()
            }
            SetKind::HalfSpace { a, b } => {
                (a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() - b).max(0.0)
            }
            SetKind::Simplex { .. } => {
                let neg = x.iter().fold(0.0f64, |m, &xi| m.max(-xi));
                neg.max((x.iter().sum::<f64>() - 1.0).abs())
            }
            SetKind::PositiveOrthant { .. } => x.iter().fold(0.0f64, |m, &xi| m.max(-xi)),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.membership_residual(x) <= tol
    }
}

/// Sort-and-threshold projection onto the unit simplex.
///
/// Ties in the sort are broken by coordinate index, so the result is a pure
/// function of the input bits.
fn project_simplex(u: &[f64], out: &mut [f64]) {
    let n = u.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| u[j].total_cmp(&u[i]).then(i.cmp(&j)));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cumsum += u[i];
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u[i] - t > 0.0 {
            theta = t;
        }
    }
    for i in 0..n {
        out[i] = (u[i] - theta).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{random_gaussian_matrix, SeededRng};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::from_column_slice(xs)
    }

    fn close(a: &DenseVector, b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn documented_examples() {
        let bx = Projector::boxed(v(&[0.0; 3]), v(&[1.0; 3])).unwrap();
        assert_eq!(bx.project(&v(&[-1.0, 0.5, 3.0])).unwrap().as_slice(), &[0.0, 0.5, 1.0]);

        let sp = Projector::sphere(v(&[0.0, 0.0]), 2.0).unwrap();
        assert!(close(&sp.project(&v(&[4.0, 0.0])).unwrap(), &[2.0, 0.0], 1e-15));

        let af = Projector::affine(DenseMatrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[2.0])).unwrap();
        assert!(close(&af.project(&v(&[0.0, 0.0])).unwrap(), &[1.0, 1.0], 1e-14));

        let hs = Projector::half_space(v(&[1.0, 0.0]), 0.0).unwrap();
        assert_eq!(hs.project(&v(&[2.0, 3.0])).unwrap().as_slice(), &[0.0, 3.0]);

        let sx = Projector::simplex(3).unwrap();
        assert!(close(&sx.project(&v(&[0.2, 0.2, 0.2])).unwrap(), &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn invalid_parameters_fail_at_construction() {
        assert!(Projector::boxed(v(&[1.0]), v(&[0.0])).is_err());
        assert!(Projector::sphere(v(&[0.0]), 0.0).is_err());
        assert!(Projector::half_space(v(&[0.0, 0.0]), 1.0).is_err());
        assert!(Projector::simplex(0).is_err());
        let rank_one = DenseMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(Projector::affine(rank_one.clone(), v(&[1.0, 3.0])).is_err());
        // Consistent rank-deficient systems go through the pseudoinverse path.
        let p = Projector::affine(rank_one, v(&[1.0, 2.0])).unwrap();
        let x = p.project(&v(&[5.0, -1.0])).unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = Projector::simplex(3).unwrap();
        assert!(matches!(p.project(&v(&[1.0])), Err(ProjectionError::Dimension { .. })));
    }

    #[test]
    fn spec_round_trip() {
        let spec: SetSpec = serde_json::from_str(r#"{"set":"half_space","a":[1,1,1,1],"b":4}"#).unwrap();
        let p = Projector::from_spec(&spec).unwrap();
        assert_eq!(p.dim(), 4);
        assert_eq!(p.name(), "half_space");
    }

    /// Simplex projection via bisection on the threshold: an independent oracle.
    fn simplex_by_bisection(u: &[f64]) -> Vec<f64> {
        let mass = |th: f64| u.iter().map(|x| (x - th).max(0.0)).sum::<f64>();
        let (mut lo, mut hi) = (u.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0, u.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) > 1.0 { lo = mid } else { hi = mid }
        }
        let th = 0.5 * (lo + hi);
        u.iter().map(|x| (x - th).max(0.0)).collect()
    }

    fn sample_projector(rng: &mut SeededRng, kind: usize, n: usize) -> Projector {
        match kind {
            0 => {
                let lo: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
                let hi: Vec<f64> = lo.iter().map(|l| l + rng.uniform() * 2.0).collect();
                Projector::boxed(v(&lo), v(&hi)).unwrap()
            }
            1 => Projector::sphere(DenseVector::from_fn(n, |_, _| rng.gaussian()), 0.1 + rng.uniform() * 2.0).unwrap(),
            2 => {
                let rows = 1 + rng.index(n);
                let a = random_gaussian_matrix(rng, rows, n);
                let x0 = DenseVector::from_fn(n, |_, _| rng.gaussian());
                let b = &a * x0;
                Projector::affine(a, b).unwrap()
            }
            3 => Projector::half_space(DenseVector::from_fn(n, |_, _| rng.gaussian()), rng.gaussian()).unwrap(),
            4 => Projector::simplex(n).unwrap(),
            _ => Projector::positive_orthant(n).unwrap(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn simplex_matches_bisection(u in proptest::collection::vec(-5.0f64..5.0, 1..12)) {
            let p = Projector::simplex(u.len()).unwrap();
            let got = p.project(&v(&u)).unwrap();
            let want = simplex_by_bisection(&u);
            prop_assert!(close(&got, &want, 1e-12));
            prop_assert!(p.membership_residual(got.as_slice()) <= 1e-12);
        }

        #[test]
        fn projector_contracts(seed in any::<u64>(), kind in 0usize..6, n in 1usize..8) {
            let mut rng = SeededRng::new(seed);
            let p = sample_projector(&mut rng, kind, n);
            let u = DenseVector::from_fn(n, |_, _| 3.0 * rng.gaussian());
            let w = DenseVector::from_fn(n, |_, _| 3.0 * rng.gaussian());
            let pu = p.project(&u).unwrap();
            let pw = p.project(&w).unwrap();
            let scale = 1.0 + u.amax();

            // Membership.
            prop_assert!(p.membership_residual(pu.as_slice()) <= 1e-12 * scale * 10.0);
            // Idempotence: exact for box and half-space.
            let ppu = p.project(&pu).unwrap();
            match p.kind() {
                SetKind::Box { .. } | SetKind::PositiveOrthant { .. } => prop_assert_eq!(&ppu, &pu),
                _ => prop_assert!((&ppu - &pu).amax() <= 1e-12 * scale * 10.0),
            }
            // Nonexpansive.
            prop_assert!((&pu - &pw).norm() <= (&u - &w).norm() + 1e-12);
            // Variational inequality against another set point.
            let lhs = (&pu - &pw).dot(&(&pu - &u));
            prop_assert!(lhs <= 1e-12 * scale * scale * 10.0);
        }
    }
}
