//! Energy-difference functional on a finite domain.
//!
//! For a core correction `u` vanishing outside `Ω_R`,
//!
//! ```text
//! E(u) = Σ_m V(Dû(m) + Du(m)) - V(Dû(m)),   û = ε ω₂.
//! ```
//!
//! Every term with `Du(m) = 0` vanishes, so the sum over all bonds touching the
//! domain is exact. By evenness of `φ` each bond contributes twice the same
//! amount (once from each endpoint).

use std::sync::Arc;

use crate::lattice::{LatticeDomain, ScalarField, Site};
use crate::potential::PairPotential;
use crate::predictor::{omega_site, LoadingParameter};

/// Symmetric sparse matrix in compressed-row form with sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetricOperator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymmetricOperator {
    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.cols[range.clone()]
                .iter()
                .zip(&self.vals[range])
                .map(|(&j, &a)| a * x[j])
                .sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.matvec(x, &mut y);
        y
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `max |A_ij - A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for (j, a) in self.row(i) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// CSR pattern of the domain Hessian with each bond's scatter slots.
#[derive(Debug)]
struct HessianPattern {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// Per bond: (slot of (a,a), slot of (b,b), slot of (a,b), slot of (b,a)); unused slots are `usize::MAX`.
    slots: Vec<[usize; 4]>,
}

impl HessianPattern {
    fn new(domain: &LatticeDomain) -> Self {
        let n = domain.len();
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for bond in domain.bonds() {
            if bond.a < n && bond.b < n {
                rows[bond.a].push(bond.b);
                rows[bond.b].push(bond.a);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let slot = |i: usize, j: usize| -> usize {
            if i >= n || j >= n {
                return usize::MAX;
            }
            let range = row_ptr[i]..row_ptr[i + 1];
            range.start + cols[range].binary_search(&j).expect("entry in pattern")
        };
        let slots = domain
            .bonds()
            .iter()
            .map(|b| [slot(b.a, b.a), slot(b.b, b.b), slot(b.a, b.b), slot(b.b, b.a)])
            .collect();
        Self { row_ptr, cols, slots }
    }

    fn assemble(&self, weights: impl Iterator<Item = f64>) -> SparseSymmetricOperator {
        let mut vals = vec![0.0; self.cols.len()];
        for (slots, w) in self.slots.iter().zip(weights) {
            for (k, sign) in slots.iter().zip([1.0, 1.0, -1.0, -1.0]) {
                if *k != usize::MAX {
                    vals[*k] += sign * w;
                }
            }
        }
        SparseSymmetricOperator {
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals,
        }
    }
}

/// Domain-dependent data shared by every loading parameter.
#[derive(Debug)]
struct PredictorCache {
    /// `ω₂(b) - ω₂(a)` per bond; the predictor strain is `ε` times this.
    omega2_diff: Vec<f64>,
    pattern: HessianPattern,
}

/// Energy-difference functional on one domain for one potential and loading.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    domain: Arc<LatticeDomain>,
    potential: PairPotential,
    eps: LoadingParameter,
    cache: Arc<PredictorCache>,
}

impl EnergyModel {
    pub fn new(domain: Arc<LatticeDomain>, potential: PairPotential, eps: LoadingParameter) -> Self {
        let omega2: Vec<f64> = domain.extended_sites().iter().map(|&s| omega_site(s)[1]).collect();
        let omega2_diff = domain.bonds().iter().map(|b| omega2[b.b] - omega2[b.a]).collect();
        let pattern = HessianPattern::new(&domain);
        Self {
            domain,
            potential,
            eps,
            cache: Arc::new(PredictorCache { omega2_diff, pattern }),
        }
    }

    /// Same domain and potential at a different loading; the predictor cache is shared.
    pub fn with_loading(&self, eps: LoadingParameter) -> Self {
        Self { eps, ..self.clone() }
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn potential(&self) -> &PairPotential {
        &self.potential
    }

    pub fn loading(&self) -> LoadingParameter {
        self.eps
    }

    /// Predictor `û(m) = ε ω₂(p(m))` at any site.
    pub fn predictor(&self, m: Site) -> f64 {
        self.eps.value() * omega_site(m)[1]
    }

    fn check_domain(&self, u: &ScalarField) {
        assert!(
            Arc::ptr_eq(&self.domain, u.domain()) || self.domain.radius() == u.domain().radius(),
            "field lives on a different domain than the model"
        );
    }

    /// Total bond strains `D_ρû + D_ρu` along each bond.
    fn strains<'a>(&'a self, u: &'a ScalarField) -> impl Iterator<Item = f64> + 'a {
        let eps = self.eps.value();
        self.domain
            .bonds()
            .iter()
            .zip(&self.cache.omega2_diff)
            .map(move |(b, dw)| eps * dw + (u.extended_value(b.b) - u.extended_value(b.a)))
    }

    pub fn energy(&self, u: &ScalarField) -> f64 {
        self.check_domain(u);
        let eps = self.eps.value();
        self.strains(u)
            .zip(&self.cache.omega2_diff)
            .map(|(total, dw)| 2.0 * (self.potential.phi(total) - self.potential.phi(eps * dw)))
            .sum()
    }

    /// First variation as a field: `⟨grad(u), v⟩ = δE(u)[v]` for `v` supported in the domain.
    pub fn grad(&self, u: &ScalarField) -> ScalarField {
        self.check_domain(u);
        let n = self.domain.len();
        let mut out = vec![0.0; n];
        for (bond, total) in self.domain.bonds().iter().zip(self.strains(u)) {
            let force = 2.0 * self.potential.dphi(total);
            if bond.a < n {
                out[bond.a] -= force;
            }
            if bond.b < n {
                out[bond.b] += force;
            }
        }
        ScalarField::from_values(self.domain.clone(), out).expect("length matches domain")
    }

    /// Second variation `δ²E(u)` as a sparse matrix over the domain sites.
    pub fn hessian(&self, u: &ScalarField) -> SparseSymmetricOperator {
        self.check_domain(u);
        let pot = &self.potential;
        self.cache.pattern.assemble(self.strains(u).map(|t| 2.0 * pot.ddphi(t)))
    }

    /// Gram matrix of the energy norm, `vᵀ M v = ‖v‖²_Ḣ¹`.
    pub fn gram_matrix(&self) -> SparseSymmetricOperator {
        gram_matrix(&self.domain)
    }
}

/// Gram matrix of `‖·‖_Ḣ¹` on a domain (the `ε = 0` Hessian of a potential with `φ''(0) = 1`).
pub fn gram_matrix(domain: &LatticeDomain) -> SparseSymmetricOperator {
    HessianPattern::new(domain).assemble(domain.bonds().iter().map(|_| 2.0))
}

/// Reflection `l2 -> 1 - l2` of a field combined with negation of its values.
pub fn mirror(u: &ScalarField) -> ScalarField {
    ScalarField::from_fn(u.domain().clone(), |s| -u.value(s.mirror()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{hessian_apply, Direction};
    use crate::potential::reference_potential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(radius: f64, eps: f64) -> EnergyModel {
        let domain = Arc::new(LatticeDomain::ball(radius).unwrap());
        EnergyModel::new(domain, reference_potential(), LoadingParameter::new(eps).unwrap())
    }

    fn random_field(domain: &Arc<LatticeDomain>, scale: f64, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(domain.clone(), |_| scale * rng.gen_range(-1.0..1.0))
    }

    // Direct site-by-site evaluation of the energy sum.
    fn energy_oracle(model: &EnergyModel, u: &ScalarField) -> f64 {
        let pot = model.potential();
        model
            .domain()
            .extended_sites()
            .iter()
            .map(|&m| {
                let du = u.gradient(m);
                let dpred = crate::lattice::gradient_of(|s| model.predictor(s), m);
                (0..4)
                    .map(|k| pot.phi(dpred[k] + du[k]) - pot.phi(dpred[k]))
                    .sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn energy_of_zero_is_exactly_zero() {
        for eps in [0.0, 0.05, 0.3] {
            let m = model(8.0, eps);
            assert_eq!(m.energy(&ScalarField::zeros(m.domain().clone())), 0.0);
        }
    }

    #[test]
    fn energy_matches_sitewise_sum() {
        let m = model(8.0, 0.05);
        let u = random_field(m.domain(), 0.1, 3);
        let (a, b) = (m.energy(&u), energy_oracle(&m, &u));
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "{a} {b}");
    }

    #[test]
    fn energy_of_small_indicator() {
        let m = model(8.0, 0.0);
        let mut u = ScalarField::indicator(m.domain().clone(), Site::new(3, 2));
        u.values_mut().iter_mut().for_each(|v| *v *= 1e-3);
        let expected = 8.0 * m.potential().phi(1e-3);
        assert!((m.energy(&u) - expected).abs() < 1e-18);
        assert!((energy_oracle(&m, &u) - expected).abs() < 1e-18);
    }

    #[test]
    fn unloaded_energy_is_nonnegative() {
        let m = model(8.0, 0.0);
        for seed in 0..5 {
            assert!(m.energy(&random_field(m.domain(), 0.2, seed)) > 0.0);
        }
    }

    #[test]
    fn gradient_vanishes_for_trivial_state() {
        let m = model(8.0, 0.0);
        let g = m.grad(&ScalarField::zeros(m.domain().clone()));
        assert_eq!(g.max_abs(), 0.0);
    }

    fn check_fd_consistency(radius: f64, eps: f64, seed: u64) {
        let m = model(radius, eps);
        let u = random_field(m.domain(), 0.05, seed);
        let v = random_field(m.domain(), 1.0, seed + 100);
        let h = 1e-5;
        let shifted = |t: f64| {
            let vals = u.values().iter().zip(v.values()).map(|(a, b)| a + t * b).collect();
            ScalarField::from_values(m.domain().clone(), vals).unwrap()
        };

        let fd = (m.energy(&shifted(h)) - m.energy(&shifted(-h))) / (2.0 * h);
        let exact = m.grad(&u).dot(&v);
        assert!((fd - exact).abs() < 1e-6 * exact.abs(), "grad: {fd} vs {exact}");

        let (gp, gm) = (m.grad(&shifted(h)), m.grad(&shifted(-h)));
        let fd: Vec<f64> = gp
            .values()
            .iter()
            .zip(gm.values())
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let av = m.hessian(&u).apply(v.values());
        let err: f64 = fd.iter().zip(&av).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = av.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err < 1e-5 * norm, "hessian: {err} vs {norm}");
    }

    #[test]
    fn finite_difference_consistency() {
        for (radius, eps) in [(8.0, 0.0), (8.0, 0.05), (16.0, 0.0), (16.0, 0.05)] {
            check_fd_consistency(radius, eps, 11);
        }
    }

    #[test]
    fn unloaded_hessian_is_lattice_laplacian() {
        let m = model(8.0, 0.0);
        let domain = m.domain().clone();
        let a = m.hessian(&ScalarField::zeros(domain.clone()));
        assert_eq!(a.max_asymmetry(), 0.0);
        assert_eq!(a, m.gram_matrix());
        let i = domain.index_of(Site::new(2, 2)).unwrap();
        assert_eq!(a.get(i, i), 8.0);
        let face = domain.index_of(Site::new(-2, 1)).unwrap();
        assert_eq!(a.get(face, face), 6.0);
        for d in Direction::ALL {
            let j = domain.index_of(Site::new(2, 2).shift(d)).unwrap();
            assert_eq!(a.get(i, j), -2.0);
        }
        // columns agree with hessian_apply on indicators
        for &s in domain.sites().iter().step_by(7) {
            let col = hessian_apply(&ScalarField::indicator(domain.clone(), s));
            let j = domain.index_of(s).unwrap();
            for i in 0..domain.len() {
                assert_eq!(a.get(i, j), col.values()[i]);
            }
        }
    }

    #[test]
    fn loaded_hessian_is_symmetric() {
        let m = model(12.0, 0.05);
        let u = random_field(m.domain(), 0.05, 5);
        let a = m.hessian(&u);
        assert_eq!(a.max_asymmetry(), 0.0);
        for i in 0..a.dim() {
            assert!(a.row(i).count() <= 5);
        }
    }

    #[test]
    fn mirror_symmetry_of_unloaded_energy() {
        let m = model(10.0, 0.0);
        let u = random_field(m.domain(), 0.2, 9);
        let (a, b) = (m.energy(&u), m.energy(&mirror(&u)));
        assert!((a - b).abs() < 1e-12 * a.abs(), "{a} {b}");
    }

    #[test]
    fn mirror_symmetry_with_loading() {
        // û is odd under the reflection, so the mirrored total field is -(û + u) reflected.
        let m = model(10.0, 0.1);
        let u = random_field(m.domain(), 0.05, 4);
        let (a, b) = (m.energy(&u), m.energy(&mirror(&u)));
        assert!((a - b).abs() < 1e-12 * a.abs(), "{a} {b}");
    }
}
