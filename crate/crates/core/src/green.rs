//! Lattice Green's function of the cracked lattice, `𝓖 = 𝓖̂ + 𝓖̄`.
//!
//! For a source `s` the corrector `𝓖̃(·, s)` solves the Galerkin problem
//!
//! ```text
//! Σ_m (D₁𝓖̂(m, s) + D𝓖̃(m, s)) · Dv(m) = v(s)   for all v vanishing outside Ω_R,
//! ```
//!
//! i.e. `A 𝓖̃ = δ_s - H𝓖̂(·, s)` with `A` the unloaded Hessian, and is then
//! shifted so that it vanishes at the pinning site `x̂`. The symmetric
//! correction is `𝓖̄(m, s) = 𝓖̃(m, s) + 𝓖̃(s, x̂)`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::{hessian_at, Direction, LatticeDomain, ScalarField, Site, PINNING_SITE};
use crate::model::{gram_matrix, SparseSymmetricOperator};
use crate::predictor::{g_hat_lattice, omega_site};
use crate::solver::{conjugate_gradient, SolverError};

#[derive(Debug, Error)]
pub enum GreenError {
    #[error("source {0:?} lies outside the domain")]
    SourceOutsideDomain(Site),
    #[error("columns were solved on different domains")]
    DomainMismatch,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("quadrature for lattice vector {vector:?} did not converge (last change {change:e})")]
    QuadratureNotConverged { vector: (i64, i64), change: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Relative CG residual used for corrector solves.
pub const DEFAULT_CG_TOL: f64 = 1e-12;
pub const DEFAULT_CACHE_CAPACITY: usize = 256;

/// One solved column `𝓖̂(·, s) + 𝓖̃(·, s)` of the unsymmetrized Green's function.
#[derive(Debug, Clone)]
pub struct GreenColumn {
    source: Site,
    /// Zero-extended Galerkin solution; the corrector is this minus its value at `x̂`.
    solution: ScalarField,
    pin: f64,
    cg_iterations: usize,
}

impl GreenColumn {
    pub fn source(&self) -> Site {
        self.source
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        self.solution.domain()
    }

    /// Unpinned corrector, zero outside the domain.
    pub fn solution(&self) -> &ScalarField {
        &self.solution
    }

    pub fn cg_iterations(&self) -> usize {
        self.cg_iterations
    }

    /// Pinned corrector `𝓖̃(m, s)`; vanishes at `x̂`.
    pub fn corrector(&self, m: Site) -> f64 {
        self.solution.value(m) - self.pin
    }

    pub fn predictor(&self, m: Site) -> f64 {
        g_hat_lattice(m, self.source)
    }

    /// `𝓖̂(m, s) + 𝓖̃(m, s)`.
    pub fn value(&self, m: Site) -> f64 {
        self.predictor(m) + self.corrector(m)
    }

    /// `(H (𝓖̂ + 𝓖̃)(·, s))(m) - δ_ms`.
    pub fn delta_residual(&self, m: Site) -> f64 {
        let delta = if m == self.source { 1.0 } else { 0.0 };
        hessian_at(|x| self.value(x), m) - delta
    }
}

fn same_domain(a: &LatticeDomain, b: &LatticeDomain) -> bool {
    std::ptr::eq(a, b) || a.radius() == b.radius()
}

/// Solves the corrector problem for source `s` on `domain`.
pub fn solve_corrector(s: Site, domain: &Arc<LatticeDomain>) -> Result<GreenColumn, GreenError> {
    let gram = gram_matrix(domain);
    solve_corrector_with(s, domain, &gram, DEFAULT_CG_TOL)
}

fn solve_corrector_with(
    s: Site,
    domain: &Arc<LatticeDomain>,
    gram: &SparseSymmetricOperator,
    cg_tol: f64,
) -> Result<GreenColumn, GreenError> {
    let source_index = domain.index_of(s).ok_or(GreenError::SourceOutsideDomain(s))?;
    let mut rhs: Vec<f64> = domain
        .sites()
        .iter()
        .map(|&m| -hessian_at(|x| g_hat_lattice(x, s), m))
        .collect();
    rhs[source_index] += 1.0;
    let out = conjugate_gradient(gram, &rhs, cg_tol, 20 * domain.len().max(50))?;
    let solution = ScalarField::from_values(domain.clone(), out.x).expect("length matches domain");
    let pin = solution.value(PINNING_SITE);
    Ok(GreenColumn {
        source: s,
        solution,
        pin,
        cg_iterations: out.iterations,
    })
}

/// `𝓖(·, s)` after symmetrization against the `x̂` column.
#[derive(Debug, Clone, Copy)]
pub struct SymmetrizedColumn<'a> {
    column: &'a GreenColumn,
    /// `𝓖̃(s, x̂)`
    offset: f64,
}

impl SymmetrizedColumn<'_> {
    pub fn source(&self) -> Site {
        self.column.source
    }

    /// `𝓖̄(m, s) = 𝓖̃(m, s) + 𝓖̃(s, x̂)`.
    pub fn correction(&self, m: Site) -> f64 {
        self.column.corrector(m) + self.offset
    }

    /// `𝓖(m, s) = 𝓖̂(m, s) + 𝓖̄(m, s)`.
    pub fn value(&self, m: Site) -> f64 {
        self.column.predictor(m) + self.correction(m)
    }
}

pub fn symmetrize<'a>(
    column: &'a GreenColumn,
    pinning_column: &GreenColumn,
) -> Result<SymmetrizedColumn<'a>, GreenError> {
    if !same_domain(column.domain(), pinning_column.domain()) {
        return Err(GreenError::DomainMismatch);
    }
    if pinning_column.source != PINNING_SITE {
        return Err(GreenError::Precondition(format!(
            "symmetrization needs the column of the pinning site, got source {:?}",
            pinning_column.source
        )));
    }
    Ok(SymmetrizedColumn {
        column,
        offset: pinning_column.corrector(column.source),
    })
}

/// Green's function on a fixed domain with an LRU cache of solved columns.
pub struct LatticeGreenFunction {
    domain: Arc<LatticeDomain>,
    gram: SparseSymmetricOperator,
    cg_tol: f64,
    pinning: Arc<GreenColumn>,
    cache: Mutex<LruCache<Site, Arc<GreenColumn>>>,
}

impl LatticeGreenFunction {
    pub fn new(domain: Arc<LatticeDomain>) -> Result<Self, GreenError> {
        Self::with_options(domain, DEFAULT_CG_TOL, DEFAULT_CACHE_CAPACITY)
    }

    pub fn with_options(domain: Arc<LatticeDomain>, cg_tol: f64, cache_capacity: usize) -> Result<Self, GreenError> {
        let gram = gram_matrix(&domain);
        let pinning = Arc::new(solve_corrector_with(PINNING_SITE, &domain, &gram, cg_tol)?);
        let capacity = NonZeroUsize::new(cache_capacity.max(1)).expect("non-zero");
        Ok(Self {
            domain,
            gram,
            cg_tol,
            pinning,
            cache: Mutex::new(LruCache::new(capacity)),
        })
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn pinning_column(&self) -> &Arc<GreenColumn> {
        &self.pinning
    }

    pub fn column(&self, s: Site) -> Result<Arc<GreenColumn>, GreenError> {
        if s == PINNING_SITE {
            return Ok(self.pinning.clone());
        }
        if let Some(col) = self.cache.lock().expect("cache lock").get(&s) {
            return Ok(col.clone());
        }
        let col = Arc::new(solve_corrector_with(s, &self.domain, &self.gram, self.cg_tol)?);
        self.cache.lock().expect("cache lock").put(s, col.clone());
        Ok(col)
    }

    /// Solves the requested columns in parallel, returning them in input order.
    pub fn columns(&self, sources: &[Site]) -> Result<Vec<Arc<GreenColumn>>, GreenError> {
        let mut missing: Vec<Site> = {
            let cache = self.cache.lock().expect("cache lock");
            sources
                .iter()
                .copied()
                .filter(|s| *s != PINNING_SITE && !cache.contains(s))
                .collect()
        };
        missing.sort_unstable();
        missing.dedup();
        let solved: Vec<Arc<GreenColumn>> = missing
            .par_iter()
            .map(|&s| solve_corrector_with(s, &self.domain, &self.gram, self.cg_tol).map(Arc::new))
            .collect::<Result<_, _>>()?;
        let mut out = Vec::with_capacity(sources.len());
        {
            let mut cache = self.cache.lock().expect("cache lock");
            for col in solved {
                cache.put(col.source, col);
            }
        }
        for &s in sources {
            out.push(self.column(s)?);
        }
        Ok(out)
    }

    /// Symmetrized value `𝓖(m, s)`.
    pub fn value(&self, m: Site, s: Site) -> Result<f64, GreenError> {
        let col = self.column(s)?;
        Ok(symmetrize(&col, &self.pinning)?.value(m))
    }

    /// `(H 𝓖(·, s))(m) - δ_ms`, with `H` acting on the first variable.
    pub fn delta_residual(&self, m: Site, s: Site) -> Result<f64, GreenError> {
        Ok(self.column(s)?.delta_residual(m))
    }

    /// `D₁ρ D₂σ 𝓖(l, s) = 𝓖(l+ρ, s+σ) - 𝓖(l, s+σ) - 𝓖(l+ρ, s) + 𝓖(l, s)`.
    pub fn mixed_difference(&self, l: Site, s: Site, rho: Direction, sigma: Direction) -> Result<f64, GreenError> {
        if !l.stencil().contains(rho) {
            return Err(GreenError::Precondition(format!(
                "{rho:?} is not a bond direction at {l:?}"
            )));
        }
        if !s.stencil().contains(sigma) {
            return Err(GreenError::Precondition(format!(
                "{sigma:?} is not a bond direction at {s:?}"
            )));
        }
        let (l2, s2) = (l.shift(rho), s.shift(sigma));
        for site in [l, l2, s, s2] {
            if !self.domain.contains(site) {
                return Err(GreenError::Precondition(format!("{site:?} lies outside the domain")));
            }
        }
        let cols = [self.column(s)?, self.column(s2)?];
        let g = |m: Site, col: &GreenColumn| symmetrize(col, &self.pinning).map(|c| c.value(m));
        Ok(g(l2, &cols[1])? - g(l, &cols[1])? - g(l2, &cols[0])? + g(l, &cols[0])?)
    }
}

/// Decay envelope `(1 + |ω(l)| |ω(s)| |ω(l) - ω(s)|^(2-δ))⁻¹` for mixed differences.
pub fn mixed_difference_bound(l: Site, s: Site, delta: f64) -> f64 {
    let (wl, ws) = (omega_site(l), omega_site(s));
    let dist = (wl[0] - ws[0]).hypot(wl[1] - ws[1]);
    let norm = |w: [f64; 2]| w[0].hypot(w[1]);
    1.0 / (1.0 + norm(wl) * norm(ws) * dist.powf(2.0 - delta))
}

/// Agreement required between successive quadrature refinements.
pub const QUADRATURE_TOL: f64 = 1e-9;
const QUADRATURE_MAX_NODES: usize = 4096;

/// `𝓖^hom(a) - 𝓖^hom(b)` for the homogeneous lattice Green's function of
/// `H̃u(m) = Σ_ρ 2(u(m) - u(m+ρ))`, whose symbol is `λ̃(k) = 4(2 - cos k₁ - cos k₂)`.
///
/// Uses `𝓖^hom(0) - 𝓖^hom(a) = (2π)⁻² ∫ (1 - cos k·a) / λ̃(k) dk`, integrated
/// over `[0, π]²` after a Duffy split at the `k = 0` corner so that tensor
/// Gauss-Legendre converges spectrally.
pub fn homogeneous_green_difference(a: (i64, i64), b: (i64, i64)) -> Result<f64, GreenError> {
    let mut n = 16;
    let mut previous = homogeneous_quadrature(a, b, n);
    while n < QUADRATURE_MAX_NODES {
        n *= 2;
        let current = homogeneous_quadrature(a, b, n);
        if (current - previous).abs() < QUADRATURE_TOL {
            return Ok(current);
        }
        previous = current;
    }
    let change = (homogeneous_quadrature(a, b, n) - homogeneous_quadrature(a, b, n / 2)).abs();
    Err(GreenError::QuadratureNotConverged { vector: a, change })
}

fn homogeneous_quadrature(a: (i64, i64), b: (i64, i64), n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let (a1, a2) = (a.0 as f64, a.1 as f64);
    let (b1, b2) = (b.0 as f64, b.1 as f64);
    // 1 - cos A cos B = 2 sin²(A/2) + 2 cos A sin²(B/2), free of cancellation near 0
    let one_minus = |p: f64, q: f64| {
        let (sp, sq) = ((0.5 * p).sin(), (0.5 * q).sin());
        2.0 * sp * sp + 2.0 * p.cos() * sq * sq
    };
    // integrand of G(a) - G(b) = I(b) - I(a), symmetric under k1 <-> k2 swap of the lattice vector
    let integrand = |k1: f64, k2: f64| {
        let (s1, s2) = ((0.5 * k1).sin(), (0.5 * k2).sin());
        let symbol = 8.0 * (s1 * s1 + s2 * s2);
        (one_minus(k1 * b1, k2 * b2) - one_minus(k1 * a1, k2 * a2)) / symbol
    };
    let mut total = 0.0;
    for (&xn, &xw) in nodes.iter().zip(&weights) {
        let x = 0.5 * PI * (xn + 1.0);
        let mut inner = 0.0;
        for (&yn, &yw) in nodes.iter().zip(&weights) {
            let y = 0.5 * (yn + 1.0);
            // triangles k2 <= k1 and k1 <= k2, each mapped to the unit square with Jacobian x
            inner += yw * (integrand(x, x * y) + integrand(x * y, x));
        }
        total += xw * x * inner;
    }
    // Jacobians 0.5π (x) and 0.5 (y); 4/(2π)² folds [-π, π]² onto [0, π]²
    total * 0.25 * PI / (PI * PI)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
