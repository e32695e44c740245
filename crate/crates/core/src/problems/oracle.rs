//! Reference solutions computed without touching the dynamics.
//!
//! Every family is rewritten as
//!
//! ```text
//! min h(w) + g(w)  s.t.  C w = e
//! ```
//!
//! where h is the smooth part, g collects ℓ₁ terms and the indicators of the
//! per-block feasible sets, and C stacks the coupling rows (A, L or [Ā L])
//! followed by any affine sets. An augmented-Lagrangian loop with restarted
//! FISTA inner solves drives the natural KKT residual down; a Newton step on
//! the identified active set then polishes the point to near machine accuracy.
//! Only closed-form projections are used, never ∇ψ*.

use super::Problem;
use crate::numerics::{spectral_norm, DenseMatrix, DenseVector};
use crate::objective::Objective;
use crate::projections::{Projector, SetKind};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle cannot handle {0}")]
    Unsupported(String),
    #[error("oracle produced non-finite iterates")]
    NonFinite,
    #[error("oracle stopped at KKT residual {residual:.3e} after {iterations} inner iterations")]
    NotConverged { residual: f64, iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: DenseVector,
    /// Multiplier of the coupling constraint (Ax = b, Lx = 0 or Āx − d + Ly = 0).
    pub lambda_star: DenseVector,
    /// Slack y* with Āx* − d + Ly* = 0, for monotropic problems.
    pub y_star: Option<DenseVector>,
    pub f_star: f64,
    /// max(‖Cw − e‖∞, ‖w − prox(w − ∇h − Cᵀλ)‖∞).
    pub kkt_residual: f64,
    /// Largest violation of the ℓ₁ dual certificate, when the objective has ℓ₁ terms.
    pub dual_certificate: Option<f64>,
    pub method: &'static str,
    pub iterations: usize,
}

struct Block {
    range: Range<usize>,
    objective: Option<Objective>,
    set: Option<Projector>,
    l1: f64,
}

struct Canonical {
    n: usize,
    x_dim: usize,
    coupling_rows: usize,
    blocks: Vec<Block>,
    c: DenseMatrix,
    e: DenseVector,
}

enum ExtraRow {
    Linear { range: Range<usize>, coeffs: DenseVector, rhs: f64 },
    /// ½(‖w − c‖² − r²) = 0.
    Sphere { range: Range<usize>, center: DenseVector, radius: f64 },
}

struct Active {
    free: Vec<usize>,
    fixed: Vec<(usize, f64)>,
    /// ℓ₁ subgradient on the free coordinates.
    sign: DenseVector,
    rows: Vec<ExtraRow>,
}

fn stack_rows(top: &DenseMatrix, bottom: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

fn amax(v: &DenseVector) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl Canonical {
    fn from_problem(problem: &Problem) -> Result<Self, OracleError> {
        let mut blocks = Vec::new();
        let (mut c, mut e, x_dim, n) = match problem {
            Problem::Constrained(p) => {
                blocks.push((0..p.dim(), Some(p.objective.clone()), p.mirror.feasible_set()));
                (p.a.clone(), p.b.clone(), p.dim(), p.dim())
            }
            Problem::Consensus(p) => {
                for (i, a) in p.agents.iter().enumerate() {
                    blocks.push((p.mirror.range(i), Some(a.objective.clone()), a.mirror.feasible_set()));
                }
                let l = p.laplacian.dense().map_err(|e| OracleError::Unsupported(e.to_string()))?;
                (l, DenseVector::zeros(p.dim()), p.dim(), p.dim())
            }
            Problem::Monotropic(p) => {
                for (i, a) in p.agents.iter().enumerate() {
                    blocks.push((p.mirror.range(i), Some(a.objective.clone()), a.mirror.feasible_set()));
                }
                let nx = p.primal_dim();
                let ny = p.dual_dim();
                blocks.push((nx..nx + ny, None, None));
                let l = p.laplacian.dense().map_err(|e| OracleError::Unsupported(e.to_string()))?;
                let mut c = DenseMatrix::zeros(ny, nx + ny);
                c.view_mut((0, 0), (ny, nx)).copy_from(&p.a_bar());
                c.view_mut((0, nx), (ny, ny)).copy_from(&l);
                (c, p.d_stacked(), nx, nx + ny)
            }
        };
        let coupling_rows = c.nrows();
        let mut out = Vec::new();
        for (range, objective, set) in blocks {
            let l1 = objective.as_ref().map_or(0.0, Objective::l1_weight);
            let set = match set {
                Some(p) => match p.kind() {
                    SetKind::Affine { a, b, .. } => {
                        let mut rows = DenseMatrix::zeros(a.nrows(), n);
                        rows.view_mut((0, range.start), (a.nrows(), a.ncols())).copy_from(a);
                        c = stack_rows(&c, &rows);
                        e = DenseVector::from_iterator(e.len() + b.len(), e.iter().chain(b.iter()).copied());
                        None
                    }
                    _ => Some(p),
                },
                None => None,
            };
            if l1 > 0.0 && !matches!(set.as_ref().map(Projector::kind), None | Some(SetKind::PositiveOrthant { .. })) {
                return Err(OracleError::Unsupported(format!("an ℓ₁ objective over a {} set", set.map_or("", |s| s.name()))));
            }
            let objective = objective.filter(Objective::is_smooth);
            out.push(Block { range, objective, set, l1 });
        }
        Ok(Self { n, x_dim, coupling_rows, blocks: out, c, e })
    }

    fn lipschitz(&self) -> f64 {
        self.blocks.iter().filter_map(|b| b.objective.as_ref()).map(Objective::lipschitz).fold(0.0, f64::max)
    }

    fn smooth_gradient(&self, w: &DenseVector) -> DenseVector {
        let mut g = DenseVector::zeros(self.n);
        for b in &self.blocks {
            if let Some(f) = &b.objective {
                f.smooth_part_gradient_into(&w.as_slice()[b.range.clone()], &mut g.as_mut_slice()[b.range.clone()]);
            }
        }
        g
    }

    fn smooth_hessian(&self, w: &DenseVector) -> DenseMatrix {
        let mut h = DenseMatrix::zeros(self.n, self.n);
        for b in &self.blocks {
            if let Some(f) = &b.objective {
                let r = &b.range;
                h.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&f.smooth_part_hessian(&w.as_slice()[r.clone()]));
            }
        }
        h
    }

    /// prox of τ·g, blockwise.
    fn prox(&self, z: &DenseVector, tau: f64) -> DenseVector {
        let mut out = z.clone();
        for b in &self.blocks {
            let r = b.range.clone();
            let zs = &z.as_slice()[r.clone()];
            let os = &mut out.as_mut_slice()[r];
            let t = tau * b.l1;
            match (&b.set, t > 0.0) {
                (None, true) => {
                    for (o, &zi) in os.iter_mut().zip(zs) {
                        *o = zi.signum() * (zi.abs() - t).max(0.0);
                    }
                }
                (Some(_), true) => {
                    for (o, &zi) in os.iter_mut().zip(zs) {
                        *o = (zi - t).max(0.0);
                    }
                }
                (Some(p), false) => p.project_into(zs, os).expect("block dimensions checked at construction"),
                (None, false) => {}
            }
        }
        out
    }

    /// (stationarity, feasibility) parts of the natural residual.
    fn residual(&self, w: &DenseVector, lambda: &DenseVector) -> (f64, f64) {
        let g = self.smooth_gradient(w) + self.c.tr_mul(lambda);
        let stat = amax(&(w - self.prox(&(w - g), 1.0)));
        let feas = amax(&(&self.c * w - &self.e));
        (stat, feas)
    }

    fn kkt(&self, w: &DenseVector, lambda: &DenseVector) -> f64 {
        let (s, f) = self.residual(w, lambda);
        s.max(f)
    }

    fn fista(&self, w: &mut DenseVector, lambda: &DenseVector, rho: f64, step: f64, eps: f64, max_iter: usize) -> usize {
        let mut x = w.clone();
        let mut y = w.clone();
        let mut t: f64 = 1.0;
        for k in 0..max_iter {
            let shifted = lambda + (&self.c * &y - &self.e) * rho;
            let g = self.smooth_gradient(&y) + self.c.tr_mul(&shifted);
            let xn = self.prox(&(&y - g * step), step);
            let diff = &y - &xn;
            if amax(&diff) <= eps * step {
                *w = xn;
                return k + 1;
            }
            if diff.dot(&(&xn - &x)) > 0.0 {
                t = 1.0;
                y = xn.clone();
            } else {
                let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                y = &xn + (&xn - &x) * ((t - 1.0) / tn);
                t = tn;
            }
            x = xn;
        }
        *w = x;
        max_iter
    }

    fn identify(&self, w: &DenseVector, delta: f64) -> Active {
        let mut free = Vec::new();
        let mut fixed = Vec::new();
        let mut sign = Vec::new();
        let mut rows = Vec::new();
        for b in &self.blocks {
            let r = b.range.clone();
            let ws = &w.as_slice()[r.clone()];
            let mut at = |i: usize, v: Option<f64>| match v {
                Some(v) => fixed.push((r.start + i, v)),
                None => {
                    free.push(r.start + i);
                    sign.push(b.l1 * ws[i].signum());
                }
            };
            match b.set.as_ref().map(Projector::kind) {
                None if b.l1 > 0.0 => ws.iter().enumerate().for_each(|(i, &x)| at(i, (x.abs() <= delta).then_some(0.0))),
                None => (0..ws.len()).for_each(|i| at(i, None)),
                Some(SetKind::PositiveOrthant { .. }) => ws.iter().enumerate().for_each(|(i, &x)| at(i, (x <= delta).then_some(0.0))),
                Some(SetKind::Simplex { .. }) => {
                    ws.iter().enumerate().for_each(|(i, &x)| at(i, (x <= delta).then_some(0.0)));
                    rows.push(ExtraRow::Linear { range: r.clone(), coeffs: DenseVector::from_element(r.len(), 1.0), rhs: 1.0 });
                }
                Some(SetKind::Box { lo, hi }) => ws.iter().enumerate().for_each(|(i, &x)| {
                    let v = if x <= lo[i] + delta {
                        Some(lo[i])
                    } else if x >= hi[i] - delta {
                        Some(hi[i])
                    } else {
                        None
                    };
                    at(i, v)
                }),
                Some(SetKind::HalfSpace { a, b: rhs }) => {
                    (0..ws.len()).for_each(|i| at(i, None));
                    let s: f64 = a.iter().zip(ws).map(|(p, q)| p * q).sum();
                    if s >= rhs - delta * (1.0 + a.norm()) {
                        rows.push(ExtraRow::Linear { range: r.clone(), coeffs: a.clone(), rhs: *rhs });
                    }
                }
                Some(SetKind::Sphere { center, radius }) => {
                    (0..ws.len()).for_each(|i| at(i, None));
                    let d = ws.iter().zip(center.iter()).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
                    if d >= radius - delta {
                        rows.push(ExtraRow::Sphere { range: r.clone(), center: center.clone(), radius: *radius });
                    }
                }
                Some(SetKind::Affine { .. }) => unreachable!("affine sets are folded into C"),
            }
        }
        // The orthant-ℓ₁ prox shifts by +τ on the support.
        for (k, &i) in free.iter().enumerate() {
            if let Some(b) = self.blocks.iter().find(|b| b.range.contains(&i)) {
                if b.l1 > 0.0 && b.set.is_some() {
                    sign[k] = b.l1;
                }
            }
        }
        Active { free, fixed, sign: DenseVector::from_vec(sign), rows }
    }

    /// Newton iterations on the equality-constrained KKT system of an active set.
    fn polish(&self, active: &Active, w0: &DenseVector, lambda0: &DenseVector) -> Option<(DenseVector, DenseVector)> {
        let nu = active.free.len();
        let m = self.c.nrows();
        let k = active.rows.len();
        let mut w = w0.clone();
        for &(i, v) in &active.fixed {
            w[i] = v;
        }
        let mut lambda = lambda0.clone();
        let row_grad = |w: &DenseVector, row: &ExtraRow| -> DenseVector {
            let mut g = DenseVector::zeros(self.n);
            match row {
                ExtraRow::Linear { range, coeffs, .. } => g.rows_mut(range.start, range.len()).copy_from(coeffs),
                ExtraRow::Sphere { range, center, .. } => {
                    g.rows_mut(range.start, range.len()).copy_from(&(w.rows(range.start, range.len()) - center))
                }
            }
            g
        };
        let row_value = |w: &DenseVector, row: &ExtraRow| -> f64 {
            match row {
                ExtraRow::Linear { range, coeffs, rhs } => coeffs.dot(&w.rows(range.start, range.len())) - rhs,
                ExtraRow::Sphere { range, center, radius } => {
                    0.5 * ((w.rows(range.start, range.len()) - center).norm_squared() - radius * radius)
                }
            }
        };
        let restrict = |v: &DenseVector| DenseVector::from_iterator(nu, active.free.iter().map(|&i| v[i]));

        // ν from least squares on the free stationarity rows.
        let mut nu_mult = DenseVector::zeros(k);
        if k > 0 {
            let mut g = DenseMatrix::zeros(nu, k);
            for (j, row) in active.rows.iter().enumerate() {
                g.set_column(j, &restrict(&row_grad(&w, row)));
            }
            let rhs = -(restrict(&(self.smooth_gradient(&w) + self.c.tr_mul(&lambda))) + &active.sign);
            nu_mult = g.svd(true, true).solve(&rhs, 1e-12).ok()?;
        }

        let mut prev = f64::INFINITY;
        for _ in 0..30 {
            let mut full_grad = self.smooth_gradient(&w) + self.c.tr_mul(&lambda);
            let grads: Vec<DenseVector> = active.rows.iter().map(|r| row_grad(&w, r)).collect();
            for (j, g) in grads.iter().enumerate() {
                full_grad += g * nu_mult[j];
            }
            let mut f = DenseVector::zeros(nu + m + k);
            f.rows_mut(0, nu).copy_from(&(restrict(&full_grad) + &active.sign));
            f.rows_mut(nu, m).copy_from(&(&self.c * &w - &self.e));
            for (j, row) in active.rows.iter().enumerate() {
                f[nu + m + j] = row_value(&w, row);
            }
            let norm = amax(&f);
            if !norm.is_finite() {
                return None;
            }
            if norm >= 0.5 * prev {
                break;
            }
            prev = norm;

            let mut hess = self.smooth_hessian(&w);
            for (j, row) in active.rows.iter().enumerate() {
                if let ExtraRow::Sphere { range, .. } = row {
                    for i in range.clone() {
                        hess[(i, i)] += nu_mult[j];
                    }
                }
            }
            let dim = nu + m + k;
            let mut jac = DenseMatrix::zeros(dim, dim);
            for (a, &i) in active.free.iter().enumerate() {
                for (b, &l) in active.free.iter().enumerate() {
                    jac[(a, b)] = hess[(i, l)];
                }
                for r in 0..m {
                    jac[(a, nu + r)] = self.c[(r, i)];
                    jac[(nu + r, a)] = self.c[(r, i)];
                }
                for (j, g) in grads.iter().enumerate() {
                    jac[(a, nu + m + j)] = g[i];
                    jac[(nu + m + j, a)] = g[i];
                }
            }
            let svd = jac.svd(true, true);
            let cutoff = svd.singular_values.max() * 1e-13;
            let step = svd.solve(&(-f), cutoff).ok()?;
            for (a, &i) in active.free.iter().enumerate() {
                w[i] += step[a];
            }
            lambda += step.rows(nu, m);
            nu_mult += step.rows(nu + m, k);
        }
        Some((w, lambda))
    }

    /// Worst violation of the ℓ₁ optimality certificate on ℓ₁ blocks.
    fn l1_certificate(&self, w: &DenseVector, lambda: &DenseVector) -> Option<f64> {
        if self.blocks.iter().all(|b| b.l1 == 0.0) {
            return None;
        }
        let g = self.smooth_gradient(w) + self.c.tr_mul(lambda);
        let scale = 1e-8 * (1.0 + amax(w));
        let mut worst: f64 = 0.0;
        for b in self.blocks.iter().filter(|b| b.l1 > 0.0) {
            for i in b.range.clone() {
                let on = w[i].abs() > scale;
                let v = match (b.set.is_some(), on) {
                    (false, true) => (g[i] + b.l1 * w[i].signum()).abs(),
                    (false, false) => (g[i].abs() - b.l1).max(0.0),
                    (true, true) => (g[i] + b.l1).abs(),
                    (true, false) => (-(g[i] + b.l1)).max(0.0),
                };
                worst = worst.max(v);
            }
        }
        Some(worst)
    }
}

const MAX_OUTER: usize = 80;
const MAX_INNER: usize = 20_000;
const RHO_MAX: f64 = 1e8;
const POLISH_FROM: f64 = 1e-3;
const POLISH_DELTAS: [f64; 4] = [1e-4, 1e-6, 1e-8, 1e-3];

/// Solves `problem` to KKT residual `tol` (absolute, ∞-norm).
pub fn reference_solution(problem: &Problem, tol: f64) -> Result<ReferenceSolution, OracleError> {
    let can = Canonical::from_problem(problem)?;
    let lh = can.lipschitz();
    let c2 = if can.c.nrows() > 0 { spectral_norm(&can.c).powi(2) } else { 0.0 };
    let mut rho = if c2 > 0.0 { lh.max(1.0) / c2 } else { 0.0 };
    let mut w = can.prox(&DenseVector::zeros(can.n), 0.0);
    let mut lambda = DenseVector::zeros(can.c.nrows());
    let mut eps = 1e-2;
    let mut prev_feas = f64::INFINITY;
    let mut best = (f64::INFINITY, w.clone(), lambda.clone(), false);
    let mut iterations = 0;

    for _ in 0..MAX_OUTER {
        let step = 1.0 / (lh + rho * c2).max(1e-12);
        iterations += can.fista(&mut w, &lambda, rho, step, eps, MAX_INNER);
        lambda += (&can.c * &w - &can.e) * rho;
        if !w.iter().chain(lambda.iter()).all(|x| x.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        let (stat, feas) = can.residual(&w, &lambda);
        let kkt = stat.max(feas);
        if kkt < best.0 {
            best = (kkt, w.clone(), lambda.clone(), false);
        }
        if kkt <= tol {
            break;
        }
        if kkt <= POLISH_FROM {
            for delta in POLISH_DELTAS {
                let active = can.identify(&w, delta);
                if let Some((pw, pl)) = can.polish(&active, &w, &lambda) {
                    let pk = can.kkt(&pw, &pl);
                    if pk < best.0 {
                        best = (pk, pw, pl, true);
                    }
                }
                if best.0 <= tol {
                    break;
                }
            }
            if best.0 <= tol {
                break;
            }
        }
        if feas > 0.25 * prev_feas {
            rho = (rho * 10.0).min(RHO_MAX);
        }
        prev_feas = feas;
        eps = (eps * 0.2).min(0.1 * kkt).max(0.01 * tol);
    }

    let (mut kkt, w, mut lambda, polished) = best;
    if kkt > tol {
        return Err(OracleError::NotConverged { residual: kkt, iterations });
    }
    if let Problem::Monotropic(p) = problem {
        // λ* is a consensus vector; average out the residual disagreement.
        let mb = p.block_dim();
        let n = p.agents.len();
        let mut mean = DenseVector::zeros(mb);
        for i in 0..n {
            mean += lambda.rows(i * mb, mb);
        }
        mean /= n as f64;
        let mut avg = lambda.clone();
        for i in 0..n {
            avg.rows_mut(i * mb, mb).copy_from(&mean);
        }
        let ak = can.kkt(&w, &avg);
        if ak <= kkt.max(tol) {
            lambda = avg;
            kkt = ak;
        }
    }
    let x_star = w.rows(0, can.x_dim).into_owned();
    let y_star = (can.n > can.x_dim).then(|| w.rows(can.x_dim, can.n - can.x_dim).into_owned());
    Ok(ReferenceSolution {
        f_star: problem.objective_value(x_star.as_slice()),
        dual_certificate: can.l1_certificate(&w, &lambda),
        lambda_star: lambda.rows(0, can.coupling_rows).into_owned(),
        x_star,
        y_star,
        kkt_residual: kkt,
        method: if polished { "augmented-lagrangian+newton-polish" } else { "augmented-lagrangian" },
        iterations,
    })
}
