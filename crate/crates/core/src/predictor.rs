//! Continuum far-field objects built on the complex square root map `ω`.
//!
//! `ω` unfolds the cracked plane onto the right half-plane. The crack predictor
//! is `û = ε ω₂` and the continuum Green's function of `-C_Λ Δ` with zero
//! Neumann data on the crack is the half-plane image-charge formula in `ω`
//! coordinates.

use std::f64::consts::PI;

use thiserror::Error;

use crate::lattice::Site;

/// Elastic constant linking the lattice Hessian to `-Δ` on the square lattice.
pub const C_LAMBDA: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("point ({0}, {1}) lies on the crack cut")]
    OnCrackCut(f64, f64),
    #[error("point ({0}, {1}) is not finite")]
    NotFinite(f64, f64),
    #[error("Green's function evaluated at its source ({0}, {1})")]
    CoincidentPoints(f64, f64),
    #[error("loading parameter must be finite and non-negative, got {0}")]
    InvalidLoading(f64),
}

/// A point of the plane off the crack cut `{x1 <= 0, x2 = 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumPoint {
    x: [f64; 2],
}

impl ContinuumPoint {
    pub fn new(x1: f64, x2: f64) -> Result<Self, PredictorError> {
        if !x1.is_finite() || !x2.is_finite() {
            return Err(PredictorError::NotFinite(x1, x2));
        }
        if x1 <= 0.0 && x2 == 0.0 {
            return Err(PredictorError::OnCrackCut(x1, x2));
        }
        Ok(Self { x: [x1, x2] })
    }

    /// Position of a lattice site; never on the cut since `p2 = l2 - 1/2 ≠ 0`.
    pub fn from_site(s: Site) -> Self {
        Self { x: s.position() }
    }

    pub fn coords(self) -> [f64; 2] {
        self.x
    }

    pub fn radius(self) -> f64 {
        self.x[0].hypot(self.x[1])
    }

    /// Polar angle in `(-π, π)`.
    pub fn angle(self) -> f64 {
        self.x[1].atan2(self.x[0])
    }
}

/// Loading parameter `ε >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LoadingParameter(f64);

impl LoadingParameter {
    pub const ZERO: LoadingParameter = LoadingParameter(0.0);

    pub fn new(eps: f64) -> Result<Self, PredictorError> {
        if eps.is_finite() && eps >= 0.0 {
            Ok(Self(eps))
        } else {
            Err(PredictorError::InvalidLoading(eps))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `ω(x) = √r (cos θ/2, sin θ/2)`.
pub fn omega(x: ContinuumPoint) -> [f64; 2] {
    let [x1, x2] = x.x;
    let r = x1.hypot(x2);
    // Half-angle formulas arranged to avoid cancellation on either side.
    if x1 >= 0.0 {
        let w1 = ((r + x1) / 2.0).sqrt();
        [w1, x2 / (2.0 * w1)]
    } else {
        let w2 = ((r - x1) / 2.0).sqrt();
        [x2.abs() / (2.0 * w2), w2.copysign(x2)]
    }
}

/// Reflection of `ω(x)` through the vertical axis.
pub fn omega_star(x: ContinuumPoint) -> [f64; 2] {
    let [w1, w2] = omega(x);
    [-w1, w2]
}

pub fn omega_site(s: Site) -> [f64; 2] {
    omega(ContinuumPoint::from_site(s))
}

/// Crack predictor `û(x) = ε ω₂(x)`.
pub fn u_hat(x: ContinuumPoint, eps: LoadingParameter) -> f64 {
    eps.0 * omega(x)[1]
}

/// Continuum Green's function
/// `Ĝ(x, s) = -1/(2π C_Λ) [log|ω(x) - ω(s)| + log|ω(x) - ω*(s)|]`.
///
/// The squared distances are formed so that swapping `x` and `s` reproduces
/// the same floating-point operations, making `Ĝ` exactly symmetric.
pub fn g_hat(x: ContinuumPoint, s: ContinuumPoint) -> Result<f64, PredictorError> {
    if x == s {
        return Err(PredictorError::CoincidentPoints(x.x[0], x.x[1]));
    }
    Ok(g_hat_omega(omega(x), omega(s)))
}

fn g_hat_omega(wx: [f64; 2], ws: [f64; 2]) -> f64 {
    let d2 = ws[1] - wx[1];
    let d2sq = d2 * d2;
    let minus = (wx[0] - ws[0]).powi(2) + d2sq;
    let plus = (wx[0] + ws[0]).powi(2) + d2sq;
    -(minus.ln() + plus.ln()) / (4.0 * PI * C_LAMBDA)
}

/// Lattice Green's predictor: `Ĝ(p(m), p(s))` off the diagonal and 0 on it.
pub fn g_hat_lattice(m: Site, s: Site) -> f64 {
    if m == s {
        0.0
    } else {
        g_hat_omega(omega_site(m), omega_site(s))
    }
}
