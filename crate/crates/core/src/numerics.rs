//! Dense linear-algebra kernel and seeded instance generation.
//!
//! Vectors and matrices are `nalgebra` dynamic types. All random
//! constructors draw from [`SeededRng`], a ChaCha8 stream with an explicit
//! Box–Muller Gaussian transform, so instances are reproducible across
//! platforms and crate upgrades of `rand`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type DenseVector = DVector<f64>;
pub type DenseMatrix = DMatrix<f64>;

/// Relative rank cutoff used by [`pseudoinverse`] when callers have no preference.
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension overflow: {rows} x {cols}")]
    SizeOverflow { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("orthogonal rows require rows <= cols (got {rows} x {cols})")]
    TooManyRows { rows: usize, cols: usize },
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, NumericsError> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r.checked_mul(c).is_some() => Ok(a.kronecker(b)),
        _ => Err(NumericsError::SizeOverflow {
            rows: a.nrows().saturating_mul(b.nrows()),
            cols: a.ncols().saturating_mul(b.ncols()),
        }),
    }
}

/// Block-diagonal matrix with the given blocks along the diagonal.
pub fn block_diag(blocks: &[DenseMatrix]) -> DenseMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Moore–Penrose pseudoinverse.
///
/// Singular values below `tol · σ_max` count as zero. When the matrix has
/// full row rank the closed form `Aᵀ(AAᵀ)⁻¹` is used; otherwise the inverse is
/// assembled from the thin SVD.
pub fn pseudoinverse(a: &DenseMatrix, tol: f64) -> DenseMatrix {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DenseMatrix::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DenseMatrix::zeros(n, m);
    }
    let cutoff = tol * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank == m {
        let gram = a * a.transpose();
        if let Some(chol) = gram.cholesky() {
            return a.transpose() * chol.inverse();
        }
    }
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let mut out = DenseMatrix::zeros(n, m);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            out += (v_t.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Deterministic 64-bit generator: ChaCha8 keyed by `seed`.
///
/// Gaussian draws use the polar-free Box–Muller transform on two uniforms
/// in (0, 1]; the second variate of each pair is cached.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha8+box-muller";

    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on (0, 1] with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (1.0 - self.uniform())
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // Rejection keeps the draw unbiased.
        let n64 = n as u64;
        let zone = u64::MAX - (u64::MAX % n64);
        loop {
            let r = self.next_u64();
            if r < zone {
                return (r % n64) as usize;
            }
        }
    }

    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn distinct_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

pub fn random_gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    // Fill row by row so the stream order matches the row-major reading.
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.gaussian();
        }
    }
    m
}

pub fn random_gaussian_vector(rng: &mut SeededRng, n: usize) -> DenseVector {
    DenseVector::from_fn(n, |_, _| rng.gaussian())
}

/// `GᵀG` for a standard Gaussian `G ∈ ℝ^{n×n}`, symmetrized exactly.
pub fn random_psd(rng: &mut SeededRng, n: usize) -> DenseMatrix {
    let g = random_gaussian_matrix(rng, n, n);
    let p = g.transpose() * &g;
    (&p + p.transpose()) * 0.5
}

/// Gaussian rows orthonormalized by modified Gram–Schmidt.
///
/// A row whose residual norm collapses below `1e-8` of its original norm is
/// redrawn from the same stream.
pub fn random_orthogonal_rows(
    rng: &mut SeededRng,
    rows: usize,
    cols: usize,
) -> Result<DenseMatrix, NumericsError> {
    if rows > cols {
        return Err(NumericsError::TooManyRows { rows, cols });
    }
    let mut q = DenseMatrix::zeros(rows, cols);
    let mut i = 0;
    while i < rows {
        let mut r = random_gaussian_vector(rng, cols);
        let n0 = r.norm();
        // Two passes: one pass of MGS leaves O(eps·cond) residual coupling.
        for _ in 0..2 {
            for k in 0..i {
                let qk = q.row(k).transpose();
                let c = qk.dot(&r);
                r.axpy(-c, &qk, 1.0);
            }
        }
        let nr = r.norm();
        if nr <= 1e-8 * n0 {
            continue;
        }
        q.row_mut(i).copy_from(&(r / nr).transpose());
        i += 1;
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn max_abs(m: &DenseMatrix) -> f64 {
        m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    #[test]
    fn kron_identity_and_scalar() {
        let i6 = kron(&DenseMatrix::identity(2, 2), &DenseMatrix::identity(3, 3)).unwrap();
        assert_eq!(i6, DenseMatrix::identity(6, 6));
        let m = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let two = DenseMatrix::from_element(1, 1, 2.0);
        assert_eq!(kron(&two, &m).unwrap(), &m * 2.0);
    }

    #[test]
    fn kron_ring_laplacian_rows_sum_to_zero() {
        let l = DenseMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
        let lifted = kron(&l, &DenseMatrix::identity(2, 2)).unwrap();
        assert_eq!(lifted.shape(), (6, 6));
        for r in 0..6 {
            assert_eq!(lifted.row(r).sum(), 0.0);
        }
        // Entry (i*2+a, j*2+b) = L_ij δ_ab, checked element by element.
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..2 {
                    for b in 0..2 {
                        let want = if a == b { l[(i, j)] } else { 0.0 };
                        assert_eq!(lifted[(2 * i + a, 2 * j + b)], want);
                    }
                }
            }
        }
    }

    #[test]
    fn kron_overflow_is_an_error() {
        // Zero columns keep the operands allocation-free.
        let tall = DenseMatrix::zeros(1usize << 40, 0);
        assert!(matches!(kron(&tall, &tall), Err(NumericsError::SizeOverflow { .. })));
    }

    #[test]
    fn pinv_examples() {
        assert_relative_eq!(pseudoinverse(&DenseMatrix::identity(3, 3), DEFAULT_PINV_TOL), DenseMatrix::identity(3, 3), epsilon = 1e-14);
        let row = DenseMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let p = pseudoinverse(&row, DEFAULT_PINV_TOL);
        assert_relative_eq!(p, DenseMatrix::from_row_slice(2, 1, &[0.5, 0.5]), epsilon = 1e-14);
    }

    #[test]
    fn pinv_rank_deficient_uses_svd_path() {
        let a = DenseMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let p = pseudoinverse(&a, DEFAULT_PINV_TOL);
        // Rank one: A† = Aᵀ / ‖A‖_F².
        let want = a.transpose() / a.norm_squared();
        assert!(max_abs(&(p - want)) < 1e-12);
    }

    #[test]
    fn pinv_gaussian_3x5() {
        let mut rng = SeededRng::new(11);
        let a = random_gaussian_matrix(&mut rng, 3, 5);
        let p = pseudoinverse(&a, DEFAULT_PINV_TOL);
        assert!(max_abs(&(&a * &p * &a - &a)) <= 1e-10);
    }

    #[test]
    fn psd_and_orthogonal_rows_seed_one() {
        let mut rng = SeededRng::new(1);
        let p = random_psd(&mut rng, 3);
        assert_eq!(p, p.transpose());
        // Independent check: Sylvester's criterion on all principal minors ≥ 0.
        let d1 = p[(0, 0)];
        let d2 = p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)];
        let d3 = p.determinant();
        assert!(d1 >= 0.0 && d2 >= -1e-12 && d3 >= -1e-12);
        assert!(symmetric_eigenvalues(&p)[0] >= -1e-12);

        let mut rng = SeededRng::new(1);
        let g = random_orthogonal_rows(&mut rng, 2, 4).unwrap();
        assert!(max_abs(&(&g * g.transpose() - DenseMatrix::identity(2, 2))) <= 1e-10);
    }

    #[test]
    fn orthogonal_rows_rejects_tall() {
        let mut rng = SeededRng::new(1);
        assert!(matches!(random_orthogonal_rows(&mut rng, 5, 4), Err(NumericsError::TooManyRows { .. })));
    }

    #[test]
    fn seeded_streams_are_bit_identical() {
        let a = random_gaussian_matrix(&mut SeededRng::new(42), 4, 7);
        let b = random_gaussian_matrix(&mut SeededRng::new(42), 4, 7);
        assert_eq!(a.as_slice(), b.as_slice());
        let c = random_gaussian_matrix(&mut SeededRng::new(43), 4, 7);
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn gaussian_moments_are_plausible() {
        let mut rng = SeededRng::new(5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn distinct_indices_are_distinct() {
        let mut rng = SeededRng::new(3);
        let mut idx = rng.distinct_indices(40, 5);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 5);
        assert!(idx.iter().all(|&i| i < 40));
    }

    #[test]
    fn block_diag_places_blocks() {
        let a = DenseMatrix::from_element(1, 2, 1.0);
        let b = DenseMatrix::from_element(2, 1, 2.0);
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(2, 2)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kron_mixed_product(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, r in 1usize..4, s in 1usize..4, t in 1usize..4, w in 1usize..4) {
            let mut rng = SeededRng::new(seed);
            let a = random_gaussian_matrix(&mut rng, p, q);
            let c = random_gaussian_matrix(&mut rng, q, r);
            let b = random_gaussian_matrix(&mut rng, s, t);
            let d = random_gaussian_matrix(&mut rng, t, w);
            let lhs = kron(&a, &b).unwrap() * kron(&c, &d).unwrap();
            let rhs = kron(&(&a * &c), &(&b * &d)).unwrap();
            let scale = 1.0 + max_abs(&rhs);
            prop_assert!(max_abs(&(lhs - rhs)) <= 1e-12 * scale);
        }

        #[test]
        fn moore_penrose_identities(seed in any::<u64>(), rows in 1usize..20, extra in 0usize..40) {
            let cols = rows + extra;
            let mut rng = SeededRng::new(seed);
            let a = random_gaussian_matrix(&mut rng, rows, cols);
            let p = pseudoinverse(&a, DEFAULT_PINV_TOL);
            let apa = &a * &p * &a;
            let pap = &p * &a * &p;
            let ap = &a * &p;
            let pa = &p * &a;
            prop_assert!(max_abs(&(apa - &a)) <= 1e-9);
            prop_assert!(max_abs(&(pap - &p)) <= 1e-9);
            prop_assert!(max_abs(&(&ap - ap.transpose())) <= 1e-9);
            prop_assert!(max_abs(&(&pa - pa.transpose())) <= 1e-9);
        }

        #[test]
        fn orthogonal_rows_are_orthonormal(seed in any::<u64>(), rows in 1usize..12, extra in 0usize..30) {
            let cols = rows + extra;
            let g = random_orthogonal_rows(&mut SeededRng::new(seed), rows, cols).unwrap();
            prop_assert!(max_abs(&(&g * g.transpose() - DenseMatrix::identity(rows, rows))) <= 1e-10);
        }

        #[test]
        fn psd_min_eigenvalue(seed in any::<u64>(), n in 1usize..8) {
            let p = random_psd(&mut SeededRng::new(seed), n);
            let scale = 1.0 + max_abs(&p);
            prop_assert!(symmetric_eigenvalues(&p)[0] >= -1e-12 * scale);
        }
    }
}
