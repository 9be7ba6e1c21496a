//! Newton iteration for critical points of the energy, Jacobi-preconditioned
//! conjugate gradients for the linear steps, and the stability constant
//! `min δ²E(u)[v,v] / ‖v‖²_Ḣ¹` via Lanczos on the generalized pencil.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::lattice::ScalarField;
use crate::model::{EnergyModel, SparseSymmetricOperator};

/// ℓ∞ residual at which Newton stops.
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("Newton did not reach the tolerance within {} iterations (last residual {:e})",
        .report.iterations, .report.residual_history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { report: Box<SolveReport> },
    #[error("non-positive curvature {curvature:e} met by conjugate gradients")]
    IndefiniteHessian { curvature: f64 },
    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {relative_residual:e})")]
    LinearSolve { iterations: usize, relative_residual: f64 },
    #[error("eigenvalue iteration stagnated after {steps} steps (residual {residual:e})")]
    Breakdown { steps: usize, residual: f64 },
    #[error("invalid solver option: {0}")]
    InvalidOption(&'static str),
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned CG for `A x = b`, stopping at `‖r‖₂ <= rel_tol ‖b‖₂`.
///
/// Fails with [`SolverError::IndefiniteHessian`] as soon as a search direction
/// has non-positive curvature.
pub fn conjugate_gradient(
    a: &SparseSymmetricOperator,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, SolverError> {
    let n = a.dim();
    assert_eq!(b.len(), n, "right-hand side length");
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = rel_tol * b_norm;

    for k in 0..max_iter {
        a.matvec(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 {
            return Err(SolverError::IndefiniteHessian { curvature });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = dot(&r, &r).sqrt();
        if r_norm <= target {
            return Ok(CgOutcome {
                x,
                iterations: k + 1,
                relative_residual: r_norm / b_norm,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolverError::LinearSolve {
        iterations: max_iter,
        relative_residual: dot(&r, &r).sqrt() / b_norm,
    })
}

fn cg_iteration_cap(n: usize) -> usize {
    (20 * n).max(1000)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Stop once `‖grad‖_∞ <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative residual for each inner CG solve; `None` means `1e-2 * tol`.
    pub inner_rel_tol: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            inner_rel_tol: None,
        }
    }
}

impl NewtonOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn inner(&self) -> f64 {
        self.inner_rel_tol.unwrap_or(1e-2 * self.tol)
    }
}

/// Outcome of a Newton solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Newton updates performed.
    pub iterations: usize,
    /// `‖grad‖_∞` before each update and after the last one.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub lambda_min: Option<f64>,
    pub final_field: ScalarField,
    /// Inner CG iterations per Newton update.
    pub cg_iterations: Vec<usize>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Plain Newton iteration `u <- u - A(u)⁻¹ grad(u)` without globalization.
pub fn newton(model: &EnergyModel, u0: ScalarField, opts: &NewtonOptions) -> Result<SolveReport, SolverError> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(SolverError::InvalidOption("tol must be positive"));
    }
    if opts.inner().is_nan() || opts.inner() <= 0.0 {
        return Err(SolverError::InvalidOption("inner tolerance must be positive"));
    }
    let n = model.domain().len();
    let mut u = u0;
    let mut history = Vec::new();
    let mut cg_iterations = Vec::new();
    for iteration in 0..=opts.max_iter {
        let g = model.grad(&u);
        let residual = g.max_abs();
        history.push(residual);
        if residual <= opts.tol {
            return Ok(SolveReport {
                iterations: iteration,
                residual_history: history,
                converged: true,
                lambda_min: None,
                final_field: u,
                cg_iterations,
            });
        }
        if iteration == opts.max_iter {
            break;
        }
        let hessian = model.hessian(&u);
        let step = conjugate_gradient(&hessian, g.values(), opts.inner(), cg_iteration_cap(n))?;
        cg_iterations.push(step.iterations);
        for (ui, di) in u.values_mut().iter_mut().zip(&step.x) {
            *ui -= di;
        }
    }
    Err(SolverError::NonConvergence {
        report: Box::new(SolveReport {
            iterations: opts.max_iter,
            residual_history: history,
            converged: false,
            lambda_min: None,
            final_field: u,
            cg_iterations,
        }),
    })
}

const LANCZOS_MAX_STEPS: usize = 300;
const LANCZOS_TOL: f64 = 1e-8;
const GRAM_SOLVE_TOL: f64 = 1e-12;

/// Smallest eigenvalue of `A v = λ M v`, with `A = δ²E(u)` and `M` the Ḣ¹ Gram matrix.
///
/// Lanczos on `M⁻¹A` in the `M` inner product with full reorthogonalisation.
/// The returned value is the Rayleigh quotient `yᵀAy / yᵀMy` of the converged
/// Ritz vector, so `A = M` gives exactly 1.
pub fn lambda_min(model: &EnergyModel, u: &ScalarField) -> Result<f64, SolverError> {
    let a = model.hessian(u);
    let m = model.gram_matrix();
    generalized_lambda_min(&a, &m)
}

pub fn generalized_lambda_min(a: &SparseSymmetricOperator, m: &SparseSymmetricOperator) -> Result<f64, SolverError> {
    let n = a.dim();
    assert_eq!(m.dim(), n);
    let cap = cg_iteration_cap(n);

    // deterministic, non-degenerate start vector
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    let mut q: Vec<f64> = (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let mut mq = m.apply(&q);
    let scale = dot(&q, &mq).sqrt();
    q.iter_mut().for_each(|v| *v /= scale);
    mq.iter_mut().for_each(|v| *v /= scale);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut m_basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last_residual = f64::INFINITY;
    let max_steps = LANCZOS_MAX_STEPS.min(n);

    for step in 0..max_steps {
        let aq = a.apply(&q);
        let alpha = dot(&q, &aq);
        let mut w = conjugate_gradient(m, &aq, GRAM_SOLVE_TOL, cap)?.x;
        basis.push(q);
        m_basis.push(mq);
        alphas.push(alpha);
        // full reorthogonalisation in the M inner product (twice is enough)
        for _ in 0..2 {
            for (qi, mqi) in basis.iter().zip(&m_basis) {
                let c = dot(mqi, &w);
                w.iter_mut().zip(qi).for_each(|(wj, qj)| *wj -= c * qj);
            }
        }
        let mw = m.apply(&w);
        let beta = dot(&w, &mw).max(0.0).sqrt();

        let (theta, coeffs) = smallest_ritz_pair(&alphas, &betas);
        let residual = beta * coeffs.last().copied().unwrap_or(1.0).abs();
        last_residual = residual;
        let exhausted = beta <= 1e-14 * alpha.abs().max(1.0);
        if residual <= LANCZOS_TOL * theta.abs().max(1e-3) || exhausted || step + 1 == n {
            let mut y = vec![0.0; n];
            for (c, qi) in coeffs.iter().zip(&basis) {
                y.iter_mut().zip(qi).for_each(|(yj, qj)| *yj += c * qj);
            }
            return Ok(dot(&y, &a.apply(&y)) / dot(&y, &m.apply(&y)));
        }
        betas.push(beta);
        q = w.iter().map(|v| v / beta).collect();
        mq = mw.iter().map(|v| v / beta).collect();
    }
    Err(SolverError::Breakdown {
        steps: max_steps,
        residual: last_residual,
    })
}

/// Smallest eigenpair of the symmetric tridiagonal matrix with the given diagonal and off-diagonal.
fn smallest_ritz_pair(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty tridiagonal matrix");
    (theta, eig.eigenvectors.column(idx).iter().copied().collect())
}
