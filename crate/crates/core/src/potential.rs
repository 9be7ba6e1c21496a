//! Nearest-neighbour pair potential `φ` and the site potential `V(g) = Σ_ρ φ(g_ρ)`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("potential `{name}`: phi(0) = {value}, expected 0")]
    NonzeroAtOrigin { name: String, value: f64 },
    #[error("potential `{name}`: phi is not even at r = {r} (phi(r) - phi(-r) = {diff})")]
    NotEven { name: String, r: f64, diff: f64 },
    #[error("potential `{name}`: phi''(0) = {value}, expected 1")]
    Unnormalised { name: String, value: f64 },
    #[error("potential `{name}`: {which} disagrees with finite differences at r = {r} (error {error:e})")]
    InconsistentDerivative {
        name: String,
        which: &'static str,
        r: f64,
        error: f64,
    },
}

/// Scalar bond potential with analytic first and second derivatives.
///
/// Construction through [`PairPotential::new`] checks `φ(0) = 0`, evenness,
/// `φ''(0) = 1` and derivative consistency on a sample grid.
#[derive(Clone)]
pub struct PairPotential {
    name: String,
    phi: ScalarFn,
    dphi: ScalarFn,
    ddphi: ScalarFn,
}

impl fmt::Debug for PairPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairPotential").field("name", &self.name).finish()
    }
}

const ORIGIN_TOL: f64 = 1e-14;
const EVEN_TOL: f64 = 1e-12;
const CURVATURE_TOL: f64 = 1e-10;
/// Relative error bound for the central-difference derivative check.
pub const DERIVATIVE_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-4;

impl PairPotential {
    pub fn new(
        name: impl Into<String>,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        ddphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, PotentialError> {
        let pot = Self {
            name: name.into(),
            phi: Arc::new(phi),
            dphi: Arc::new(dphi),
            ddphi: Arc::new(ddphi),
        };
        pot.validate()?;
        Ok(pot)
    }

    fn validate(&self) -> Result<(), PotentialError> {
        let name = || self.name.clone();
        let at_origin = self.phi(0.0);
        if at_origin.abs() > ORIGIN_TOL {
            return Err(PotentialError::NonzeroAtOrigin {
                name: name(),
                value: at_origin,
            });
        }
        let curvature = self.ddphi(0.0);
        if (curvature - 1.0).abs() > CURVATURE_TOL {
            return Err(PotentialError::Unnormalised {
                name: name(),
                value: curvature,
            });
        }
        for r in sample_points() {
            let diff = self.phi(r) - self.phi(-r);
            if diff.abs() > EVEN_TOL * self.phi(r).abs().max(1.0) {
                return Err(PotentialError::NotEven { name: name(), r, diff });
            }
            let checks = [
                ("phi'", self.dphi(r), central_difference(&*self.phi, r)),
                ("phi''", self.ddphi(r), central_difference(&*self.dphi, r)),
            ];
            for (which, exact, fd) in checks {
                let error = (exact - fd).abs() / exact.abs().max(1.0);
                if error.is_nan() || error >= DERIVATIVE_TOL {
                    return Err(PotentialError::InconsistentDerivative {
                        name: name(),
                        which,
                        r,
                        error,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn phi(&self, r: f64) -> f64 {
        (self.phi)(r)
    }

    #[inline]
    pub fn dphi(&self, r: f64) -> f64 {
        (self.dphi)(r)
    }

    #[inline]
    pub fn ddphi(&self, r: f64) -> f64 {
        (self.ddphi)(r)
    }
}

/// `φ(r) = (1 - exp(-3 r²)) / 6`.
pub fn reference_potential() -> PairPotential {
    PairPotential::new(
        "gaussian",
        |r| (1.0 - (-3.0 * r * r).exp()) / 6.0,
        |r| r * (-3.0 * r * r).exp(),
        |r| (1.0 - 6.0 * r * r) * (-3.0 * r * r).exp(),
    )
    .expect("reference potential satisfies its own contracts")
}

/// Site potential `V(g) = Σ_ρ φ(g_ρ)`; zeroed components contribute `φ(0) = 0`.
pub fn site_energy(pot: &PairPotential, g: &[f64; 4]) -> f64 {
    g.iter().map(|&r| pot.phi(r)).sum()
}

fn central_difference(f: &(dyn Fn(f64) -> f64 + Send + Sync), r: f64) -> f64 {
    (f(r + FD_STEP) - f(r - FD_STEP)) / (2.0 * FD_STEP)
}

// 201 points on [-2, 2]
fn sample_points() -> impl Iterator<Item = f64> {
    (0..=200).map(|k| -2.0 + 0.02 * k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let pot = reference_potential();
        assert_eq!(pot.phi(0.0), 0.0);
        assert_eq!(pot.dphi(0.0), 0.0);
        assert_eq!(pot.ddphi(0.0), 1.0);
        let expected = (1.0 - (-12f64).exp()) / 6.0;
        assert!((pot.phi(2.0) - expected).abs() < 1e-16);
        assert!((pot.phi(40.0) - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn evenness_and_odd_derivative() {
        let pot = reference_potential();
        for k in 0..1000 {
            let r = -5.0 + 0.01 * k as f64 + 0.003;
            assert_eq!(pot.phi(r), pot.phi(-r));
            assert_eq!(pot.dphi(r), -pot.dphi(-r));
            assert_eq!(pot.ddphi(r), pot.ddphi(-r));
        }
    }

    #[test]
    fn site_energy_examples() {
        let pot = reference_potential();
        let r = 0.37;
        assert_eq!(site_energy(&pot, &[0.0; 4]), 0.0);
        assert_eq!(site_energy(&pot, &[r, 0.0, 0.0, 0.0]), pot.phi(r));
        assert!((site_energy(&pot, &[r, -r, r, -r]) - 4.0 * pot.phi(r)).abs() < 1e-16);
    }

    #[test]
    fn rejects_contract_violations() {
        let shifted = PairPotential::new("shifted", |r| 0.5 * r * r + 1.0, |r| r, |_| 1.0);
        assert!(matches!(shifted, Err(PotentialError::NonzeroAtOrigin { .. })));

        let odd = PairPotential::new(
            "cubic",
            |r| 0.5 * r * r + r * r * r,
            |r| r + 3.0 * r * r,
            |r| 1.0 + 6.0 * r,
        );
        assert!(matches!(odd, Err(PotentialError::NotEven { .. })));

        let stiff = PairPotential::new("stiff", |r| r * r, |r| 2.0 * r, |_| 2.0);
        assert!(matches!(stiff, Err(PotentialError::Unnormalised { .. })));

        let wrong = PairPotential::new("wrong", |r| 0.5 * r * r, |r| 1.1 * r, |_| 1.0);
        assert!(matches!(
            wrong,
            Err(PotentialError::InconsistentDerivative { which: "phi'", .. })
        ));

        let harmonic = PairPotential::new("harmonic", |r| 0.5 * r * r, |r| r, |_| 1.0);
        assert!(harmonic.is_ok());
    }
}
