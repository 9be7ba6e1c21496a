//! Decay-rate estimation, supercell convergence studies and the loading collapse.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::{gradient_of, h1_norm, LatticeDomain, LatticeError, ScalarField, Site};
use crate::model::EnergyModel;
use crate::potential::reference_potential;
use crate::predictor::{omega_site, LoadingParameter, PredictorError};
use crate::solver::{lambda_min, newton, NewtonOptions, SolveReport, SolverError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("annulus [{lo}, {hi}) contains no sites; use a wider annulus")]
    EmptyAnnulus { lo: f64, hi: f64 },
    #[error("need at least two positive samples to fit a slope, got {0}")]
    InsufficientData(usize),
    #[error("fields live on different domains")]
    DomainMismatch,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Loading(#[from] PredictorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::InsufficientData(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::InsufficientData(1));
    }
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// Fits `log y = slope·log x + c`, ignoring non-positive samples.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LineFit, AnalysisError> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    fit_line(&logs)
}

/// Magnitude of the crack-adapted gradient, `|Du(m)| = (Σ_ρ D_ρu(m)²)^½`.
pub fn gradient_magnitude(g: [f64; 4]) -> f64 {
    g.iter().map(|d| d * d).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    /// `(midpoint radius, max |Du|)` per annulus, radii increasing.
    pub annuli: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub fit_window: (f64, f64),
    pub eps: Option<f64>,
}

/// Default fit window `[5, R/2]`.
pub fn default_fit_window(radius: f64) -> (f64, f64) {
    (5.0, radius / 2.0)
}

/// Envelope of `(r, value)` samples: the per-annulus maximum over bins of
/// `width`, fitted on a log-log scale over annuli whose midpoint lies in `window`.
pub fn envelope_from_samples(
    samples: &[(f64, f64)],
    width: f64,
    window: (f64, f64),
) -> Result<DecayReport, AnalysisError> {
    if width.is_nan() || width <= 0.0 {
        return Err(AnalysisError::Precondition(format!(
            "annulus width must be positive, got {width}"
        )));
    }
    if !(window.0 >= 0.0 && window.0 < window.1) {
        return Err(AnalysisError::Precondition(format!("invalid fit window {window:?}")));
    }
    let r_max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let bins = (r_max / width).floor() as usize + 1;
    let mut env: Vec<Option<f64>> = vec![None; bins];
    for &(r, v) in samples {
        let slot = &mut env[(r / width).floor() as usize];
        *slot = Some(slot.map_or(v, |e: f64| e.max(v)));
    }
    let first = env.iter().position(Option::is_some).unwrap_or(bins);
    let mut annuli = Vec::new();
    for (k, e) in env.iter().enumerate().skip(first) {
        match e {
            Some(v) => annuli.push(((k as f64 + 0.5) * width, *v)),
            None => {
                return Err(AnalysisError::EmptyAnnulus {
                    lo: k as f64 * width,
                    hi: (k + 1) as f64 * width,
                })
            }
        }
    }
    let in_window: Vec<(f64, f64)> = annuli
        .iter()
        .copied()
        .filter(|(r, _)| *r >= window.0 && *r <= window.1)
        .collect();
    let fit = fit_loglog(&in_window)?;
    Ok(DecayReport {
        annuli,
        slope: fit.slope,
        intercept: fit.intercept,
        fit_window: window,
        eps: None,
    })
}

/// Envelope of `|Du|` over the sites of `field`'s domain.
pub fn decay_envelope(field: &ScalarField, width: f64) -> Result<DecayReport, AnalysisError> {
    decay_envelope_in(field, width, default_fit_window(field.domain().radius()))
}

pub fn decay_envelope_in(field: &ScalarField, width: f64, window: (f64, f64)) -> Result<DecayReport, AnalysisError> {
    let samples: Vec<(f64, f64)> = field
        .domain()
        .sites()
        .iter()
        .map(|&m| (m.radius(), gradient_magnitude(field.gradient(m))))
        .collect();
    envelope_from_samples(&samples, width, window)
}

/// Envelope of the predictor gradient `|Dû|` on `domain`; expected slope `-1/2`.
pub fn predictor_decay(domain: &LatticeDomain, eps: f64, width: f64) -> Result<DecayReport, AnalysisError> {
    let u_hat = |m: Site| eps * omega_site(m)[1];
    let samples: Vec<(f64, f64)> = domain
        .sites()
        .iter()
        .map(|&m| (m.radius(), gradient_magnitude(gradient_of(u_hat, m))))
        .collect();
    let mut report = envelope_from_samples(&samples, width, default_fit_window(domain.radius()))?;
    report.eps = Some(eps);
    Ok(report)
}

/// Maximum over ordered pairs of `‖u(ε)/ε - u(ε')/ε'‖_Ḣ¹ / ‖u(ε)/ε‖_Ḣ¹`.
pub fn epsilon_collapse(fields: &[(f64, ScalarField)]) -> Result<f64, AnalysisError> {
    let Some((_, first)) = fields.first() else {
        return Ok(0.0);
    };
    for (eps, f) in fields {
        if eps.is_nan() || *eps <= 0.0 {
            return Err(AnalysisError::Precondition(format!(
                "loading must be positive, got {eps}"
            )));
        }
        if f.domain().radius() != first.domain().radius() {
            return Err(AnalysisError::DomainMismatch);
        }
    }
    let scaled: Vec<Vec<f64>> = fields
        .iter()
        .map(|(eps, f)| f.values().iter().map(|v| v / eps).collect())
        .collect();
    let domain = first.domain().clone();
    let norm = |v: Vec<f64>| h1_norm(&ScalarField::from_values(domain.clone(), v).expect("length matches domain"));
    let mut worst = 0.0f64;
    for (i, a) in scaled.iter().enumerate() {
        let base = norm(a.clone());
        for (j, b) in scaled.iter().enumerate() {
            if i != j {
                let diff = a.iter().zip(b).map(|(x, y)| x - y).collect();
                worst = worst.max(norm(diff) / base);
            }
        }
    }
    Ok(worst)
}

/// Newton solve from `u = 0` with the reference potential on the ball of radius `radius`.
pub fn solve_crack(radius: f64, eps: f64, opts: &NewtonOptions) -> Result<SolveReport, AnalysisError> {
    let domain = Arc::new(LatticeDomain::ball(radius)?);
    let model = EnergyModel::new(domain.clone(), reference_potential(), LoadingParameter::new(eps)?);
    Ok(newton(&model, ScalarField::zeros(domain), opts)?)
}

/// As [`solve_crack`], also filling in the stability constant.
pub fn solve_crack_with_stability(radius: f64, eps: f64, opts: &NewtonOptions) -> Result<SolveReport, AnalysisError> {
    let mut report = solve_crack(radius, eps, opts)?;
    let field = &report.final_field;
    let model = EnergyModel::new(
        field.domain().clone(),
        reference_potential(),
        LoadingParameter::new(eps)?,
    );
    report.lambda_min = Some(lambda_min(&model, field)?);
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub radii: Vec<f64>,
    /// `‖ū_R - ū_ref‖_Ḣ¹` per radius.
    pub errors: Vec<f64>,
    pub ref_radius: f64,
    pub slope: f64,
    pub eps: f64,
}

/// Supercell convergence against a large reference solve.
///
/// The reference is itself a finite-domain solution; its own error is of the
/// order `R_ref^(-1/2)` and so small next to the measured errors when
/// `R_ref >= 4 max R`.
pub fn convergence_study(
    radii: &[f64],
    eps: f64,
    ref_radius: f64,
    opts: &NewtonOptions,
) -> Result<ConvergenceReport, AnalysisError> {
    if radii.is_empty() || radii.windows(2).any(|w| w[0] > w[1]) {
        return Err(AnalysisError::Precondition("radii must be non-empty and sorted".into()));
    }
    let largest = radii[radii.len() - 1];
    if ref_radius < 4.0 * largest {
        return Err(AnalysisError::Precondition(format!(
            "reference radius {ref_radius} is below 4 x {largest}"
        )));
    }
    let mut all: Vec<f64> = radii.to_vec();
    all.push(ref_radius);
    let mut fields: Vec<ScalarField> = all
        .par_iter()
        .map(|&r| solve_crack(r, eps, opts).map(|rep| rep.final_field))
        .collect::<Result<_, _>>()?;
    let reference = fields.pop().expect("reference solve present");
    let errors: Vec<f64> = fields
        .par_iter()
        .map(|u| {
            let diff = ScalarField::from_fn(reference.domain().clone(), |m| reference.value(m) - u.value(m));
            h1_norm(&diff)
        })
        .collect();
    let points: Vec<(f64, f64)> = radii.iter().copied().zip(errors.iter().copied()).collect();
    let slope = fit_loglog(&points).map(|f| f.slope).unwrap_or(f64::NAN);
    Ok(ConvergenceReport {
        radii: radii.to_vec(),
        errors,
        ref_radius,
        slope,
        eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let fit = fit_line(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14 && (fit.intercept - 3.0).abs() < 1e-14);
        assert!(fit_line(&pts[..1]).is_err());
        assert!(fit_line(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
    }

    #[test]
    fn loglog_slope_is_scale_invariant() {
        let pts: Vec<(f64, f64)> = (1..20)
            .map(|i| (i as f64, (i as f64).powf(-1.3) * (1.0 + 0.1 * (i % 3) as f64)))
            .collect();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (*x, 7.5 * y)).collect();
        let (a, b) = (fit_loglog(&pts).unwrap(), fit_loglog(&scaled).unwrap());
        assert!((a.slope - b.slope).abs() < 1e-12);
        assert!((b.intercept - a.intercept - 7.5f64.ln()).abs() < 1e-12);
    }

    fn domain(r: f64) -> Arc<LatticeDomain> {
        Arc::new(LatticeDomain::ball(r).unwrap())
    }

    #[test]
    fn synthetic_power_law_envelope() {
        let d = domain(64.0);
        let samples: Vec<(f64, f64)> = d.sites().iter().map(|m| (m.radius(), m.radius().powf(-1.5))).collect();
        let rep = envelope_from_samples(&samples, 1.0, (5.0, 32.0)).unwrap();
        assert!((rep.slope + 1.5).abs() < 0.05, "{}", rep.slope);
        assert!(rep.annuli.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn constant_gradient_field_has_flat_envelope() {
        let d = domain(64.0);
        let field = ScalarField::from_fn(d, |m| m.l1 as f64);
        // exclude the boundary and the crack faces, where bonds are cut
        let samples: Vec<(f64, f64)> = field
            .domain()
            .sites()
            .iter()
            .filter(|m| m.l1 > 0 || (m.l2 != 0 && m.l2 != 1))
            .map(|&m| (m.radius(), gradient_magnitude(field.gradient(m))))
            .filter(|(r, _)| *r < 60.0)
            .collect();
        let rep = envelope_from_samples(&samples, 1.0, (5.0, 32.0)).unwrap();
        assert!(rep.slope.abs() < 0.05, "{}", rep.slope);
        let whole = decay_envelope(&field, 1.0).unwrap();
        assert!(whole.slope.abs() < 0.05);
    }

    #[test]
    fn narrow_annuli_are_rejected() {
        let field = ScalarField::zeros(domain(16.0));
        assert!(matches!(
            decay_envelope(&field, 0.05),
            Err(AnalysisError::EmptyAnnulus { .. })
        ));
        assert!(decay_envelope(&field, 0.0).is_err());
    }

    #[test]
    fn predictor_gradient_decays_like_inverse_square_root() {
        let rep = predictor_decay(&domain(64.0), 0.01, 1.0).unwrap();
        assert!((rep.slope + 0.5).abs() < 0.05, "{}", rep.slope);
    }

    #[test]
    fn collapse_of_a_single_field_is_zero() {
        let d = domain(8.0);
        let f = ScalarField::from_fn(d.clone(), |m| m.l1 as f64);
        assert_eq!(epsilon_collapse(&[(0.1, f.clone())]).unwrap(), 0.0);
        assert_eq!(epsilon_collapse(&[]).unwrap(), 0.0);
        // exactly linear family collapses to zero
        let g = ScalarField::from_fn(d.clone(), |m| 3.0 * m.l1 as f64);
        assert!(epsilon_collapse(&[(0.1, f.clone()), (0.3, g)]).unwrap() < 1e-15);
        let other = ScalarField::zeros(domain(10.0));
        assert!(matches!(
            epsilon_collapse(&[(0.1, f.clone()), (0.2, other)]),
            Err(AnalysisError::DomainMismatch)
        ));
        assert!(epsilon_collapse(&[(0.0, f)]).is_err());
    }

    #[test]
    fn convergence_study_preconditions() {
        let opts = NewtonOptions::default();
        assert!(convergence_study(&[16.0, 8.0], 0.01, 64.0, &opts).is_err());
        assert!(convergence_study(&[8.0, 16.0], 0.01, 63.0, &opts).is_err());
        assert!(convergence_study(&[], 0.01, 64.0, &opts).is_err());
    }

    #[test]
    fn duplicated_radii_give_identical_errors() {
        let rep = convergence_study(&[8.0, 8.0], 0.01, 32.0, &NewtonOptions::default()).unwrap();
        assert_eq!(rep.errors[0], rep.errors[1]);
        assert!(rep.errors[0] > 0.0);
    }
}
