//! Experiment driver: validated run configurations, CSV artifacts and the self-check suite.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use antiplane::analysis::{convergence_study, decay_envelope, default_fit_window, solve_crack_with_stability};
use antiplane::green::{mixed_difference_bound, LatticeGreenFunction};
use antiplane::lattice::{hessian_apply, stencil, SiteKind};
use antiplane::potential::PotentialError;
use antiplane::predictor::g_hat_lattice;
use antiplane::{
    reference_potential, Direction, EnergyModel, LatticeDomain, LoadingParameter, NewtonOptions, PairPotential,
    ScalarField, Site,
};
use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

pub const MIN_RADIUS: f64 = 8.0;
pub const BOUND_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Solve,
    Decay,
    Converge,
    Green,
    Check,
}

/// Everything that determines a run; serialized into every CSV header.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub radius: f64,
    pub eps: f64,
    pub tol: f64,
    pub radii: Vec<f64>,
    pub ref_radius: f64,
    pub source: (i64, i64),
    pub out_path: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: CommandKind::Solve,
            radius: 32.0,
            eps: 0.01,
            tol: 1e-8,
            radii: vec![16.0, 32.0, 64.0],
            ref_radius: 256.0,
            source: (13, 9),
            out_path: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.tol > 0.0 && self.tol.is_finite(),
            "tol must be positive, got {}",
            self.tol
        );
        ensure!(
            self.radius >= MIN_RADIUS,
            "radius must be at least {MIN_RADIUS}, got {}",
            self.radius
        );
        ensure!(
            self.eps >= 0.0 && self.eps.is_finite(),
            "eps must be non-negative, got {}",
            self.eps
        );
        match self.command {
            CommandKind::Green => {
                let s = Site::new(self.source.0, self.source.1);
                ensure!(
                    s.radius() <= self.radius / 2.0,
                    "source {:?} at distance {:.3} is outside radius/2 = {}",
                    self.source,
                    s.radius(),
                    self.radius / 2.0
                );
            }
            CommandKind::Converge => {
                ensure!(!self.radii.is_empty(), "radii must not be empty");
                ensure!(self.radii.windows(2).all(|w| w[0] <= w[1]), "radii must be sorted");
                ensure!(
                    self.radii[0] >= MIN_RADIUS,
                    "every radius must be at least {MIN_RADIUS}"
                );
                let largest = self.radii[self.radii.len() - 1];
                ensure!(
                    self.ref_radius >= 4.0 * largest,
                    "ref-radius {} must be at least 4 x {largest}",
                    self.ref_radius
                );
            }
            _ => {}
        }
        Ok(())
    }

    fn header(&self) -> Result<String> {
        Ok(format!("# config: {}", serde_json::to_string(self)?))
    }
}

/// Outcome of a run: files written plus summary lines (also saved as `summary.txt`).
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub passed: bool,
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(config: &RunConfig, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = config.out_path.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut buf = BufWriter::new(file);
    writeln!(buf, "{}", config.header()?)?;
    let mut writer = csv::Writer::from_writer(buf);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(path)
}

fn write_summary(config: &RunConfig, lines: &[String]) -> Result<PathBuf> {
    let path = config.out_path.join("summary.txt");
    let mut text = config.header()?;
    text.push('\n');
    for line in lines {
        text.push_str(line);
        text.push('\n');
    }
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    if config.command != CommandKind::Check {
        std::fs::create_dir_all(&config.out_path).with_context(|| format!("creating {}", config.out_path.display()))?;
    }
    let opts = NewtonOptions::with_tol(config.tol);
    let mut files = Vec::new();
    let mut passed = true;
    let summary = match config.command {
        CommandKind::Solve => {
            let rep = solve_crack_with_stability(config.radius, config.eps, &opts)?;
            let u = &rep.final_field;
            let rows: Vec<Vec<String>> = u
                .domain()
                .sites()
                .iter()
                .zip(u.values())
                .map(|(m, v)| {
                    let [x1, x2] = m.position();
                    vec![m.l1.to_string(), m.l2.to_string(), fmt(x1), fmt(x2), fmt(*v)]
                })
                .collect();
            files.push(write_csv(config, "field.csv", &["l1", "l2", "x1", "x2", "u"], &rows)?);
            vec![
                format!("iterations: {}", rep.iterations),
                format!("final_residual: {}", fmt(rep.final_residual())),
                format!("lambda_min: {}", fmt(rep.lambda_min.unwrap_or(f64::NAN))),
                format!("h1_norm: {}", fmt(u.h1_norm())),
                format!("sites: {}", u.domain().len()),
            ]
        }
        CommandKind::Decay => {
            let rep = solve_crack_with_stability(config.radius, config.eps, &opts)?;
            let decay = decay_envelope(&rep.final_field, 1.0)?;
            let rows: Vec<Vec<String>> = decay.annuli.iter().map(|(r, e)| vec![fmt(*r), fmt(*e)]).collect();
            files.push(write_csv(config, "decay.csv", &["r", "envelope"], &rows)?);
            let (lo, hi) = default_fit_window(config.radius);
            vec![
                format!("iterations: {}", rep.iterations),
                format!("lambda_min: {}", fmt(rep.lambda_min.unwrap_or(f64::NAN))),
                format!("fit_window: [{lo}, {hi}]"),
                format!("slope: {}", fmt(decay.slope)),
            ]
        }
        CommandKind::Converge => {
            let rep = convergence_study(&config.radii, config.eps, config.ref_radius, &opts)?;
            let rows: Vec<Vec<String>> = rep
                .radii
                .iter()
                .zip(&rep.errors)
                .map(|(r, e)| vec![r.to_string(), fmt(*e)])
                .collect();
            files.push(write_csv(config, "converge.csv", &["R", "err_h1"], &rows)?);
            vec![
                format!("ref_radius: {}", rep.ref_radius),
                format!("slope: {}", fmt(rep.slope)),
            ]
        }
        CommandKind::Green => green_run(config, &mut files)?,
        CommandKind::Check => {
            let groups = check_suite();
            let mut lines = Vec::new();
            for (name, result) in groups {
                match result {
                    Ok(()) => lines.push(format!("PASS {name}")),
                    Err(e) => {
                        passed = false;
                        lines.push(format!("FAIL {name}: {e:#}"));
                    }
                }
            }
            return Ok(RunOutput {
                files,
                summary: lines,
                passed,
            });
        }
    };
    files.push(write_summary(config, &summary)?);
    Ok(RunOutput { files, summary, passed })
}

fn green_run(config: &RunConfig, files: &mut Vec<PathBuf>) -> Result<Vec<String>> {
    let domain = Arc::new(LatticeDomain::ball(config.radius)?);
    let green = LatticeGreenFunction::new(domain.clone())?;
    let s = Site::new(config.source.0, config.source.1);
    let shifted = s.shift(Direction::E1);
    green.columns(&[s, shifted])?;
    let column = green.column(s)?;
    let mut rows = Vec::new();
    let mut worst_delta = 0.0f64;
    for &l in domain.sites() {
        if domain.distance_to_boundary(l) < config.radius / 4.0 {
            continue;
        }
        worst_delta = worst_delta.max(column.delta_residual(l).abs());
        let value = green.value(l, s)?;
        let mixed = green.mixed_difference(l, s, Direction::E1, Direction::E1)?;
        let bound = mixed_difference_bound(l, s, BOUND_DELTA);
        rows.push(vec![
            l.l1.to_string(),
            l.l2.to_string(),
            s.l1.to_string(),
            s.l2.to_string(),
            fmt(value),
            fmt(mixed),
            fmt(bound),
        ]);
    }
    files.push(write_csv(
        config,
        "green.csv",
        &["l1", "l2", "s1", "s2", "G", "mixedD", "bound"],
        &rows,
    )?);
    Ok(vec![
        format!("source: {:?}", config.source),
        format!("rows: {}", rows.len()),
        format!("cg_iterations: {}", column.cg_iterations()),
        format!("max_delta_residual: {}", fmt(worst_delta)),
    ])
}

type CheckResult = Result<()>;

/// Invariant groups run by `check`, in a fixed order.
pub fn check_suite() -> Vec<(&'static str, CheckResult)> {
    vec![
        ("stencil reciprocity", check_stencils()),
        ("finite-difference gradient and Hessian", check_finite_differences()),
        ("pair potential contracts", check_potential()),
        ("predictor Green's function symmetry", check_g_hat_symmetry()),
    ]
}

fn check_stencils() -> CheckResult {
    let domain = LatticeDomain::ball(32.0)?;
    for &m in domain.sites() {
        for dir in stencil(m).iter() {
            let n = m.shift(dir);
            ensure!(stencil(n).contains(dir.negate()), "bond {m:?} -> {n:?} is one-sided");
        }
    }
    let domain = Arc::new(LatticeDomain::ball(16.0)?);
    for &m in domain.sites() {
        if domain.distance_to_boundary(m) < 2.0 {
            continue;
        }
        let d = ScalarField::indicator(domain.clone(), m);
        let expected = if m.kind() == SiteKind::Bulk { 8.0 } else { 6.0 };
        let q = hessian_apply(&d).dot(&d);
        ensure!(q == expected, "<H delta, delta> = {q} at {m:?}, expected {expected}");
    }
    Ok(())
}

fn check_finite_differences() -> CheckResult {
    for eps in [0.0, 0.05] {
        let domain = Arc::new(LatticeDomain::ball(12.0)?);
        let model = EnergyModel::new(domain.clone(), reference_potential(), LoadingParameter::new(eps)?);
        // deterministic pseudo-random directions
        let wave = |a: f64, b: f64| move |m: Site| (a * m.l1 as f64 + b * m.l2 as f64).sin();
        let u = ScalarField::from_fn(domain.clone(), |m| 0.05 * wave(0.7, 1.3)(m));
        let v = ScalarField::from_fn(domain.clone(), wave(2.1, -0.4));
        let along = |t: f64| {
            let vals = u.values().iter().zip(v.values()).map(|(a, b)| a + t * b).collect();
            ScalarField::from_values(domain.clone(), vals)
        };
        let h = 1e-5;
        let fd = (model.energy(&along(h)?) - model.energy(&along(-h)?)) / (2.0 * h);
        let exact = model.grad(&u).dot(&v);
        let rel = (fd - exact).abs() / exact.abs();
        ensure!(rel < 1e-6, "gradient relative error {rel:e} at eps {eps}");

        let (gp, gm) = (model.grad(&along(h)?), model.grad(&along(-h)?));
        let av = model.hessian(&u).apply(v.values());
        let (mut err, mut norm) = (0.0, 0.0);
        for ((p, q), a) in gp.values().iter().zip(gm.values()).zip(&av) {
            err += ((p - q) / (2.0 * h) - a).powi(2);
            norm += a * a;
        }
        let rel = (err / norm).sqrt();
        ensure!(rel < 1e-5, "Hessian relative error {rel:e} at eps {eps}");
    }
    Ok(())
}

fn check_potential() -> CheckResult {
    let pot = reference_potential();
    ensure!(pot.phi(0.0) == 0.0, "phi(0) != 0");
    ensure!(pot.ddphi(0.0) == 1.0, "phi''(0) != 1");
    for r in [0.1, 0.5, 1.3] {
        ensure!(pot.phi(r) == pot.phi(-r), "phi not even at {r}");
    }
    let odd = PairPotential::new(
        "odd",
        |r| r * r / 2.0 + r * r * r,
        |r| r + 3.0 * r * r,
        |r| 1.0 + 6.0 * r,
    );
    if !matches!(odd, Err(PotentialError::NotEven { .. })) {
        bail!("odd potential was accepted");
    }
    let shifted = PairPotential::new("shifted", |r| 1.0 + r * r / 2.0, |r| r, |_| 1.0);
    if !matches!(shifted, Err(PotentialError::NonzeroAtOrigin { .. })) {
        bail!("potential with phi(0) != 0 was accepted");
    }
    let flat = PairPotential::new("flat", |r| r * r, |r| 2.0 * r, |_| 2.0);
    if !matches!(flat, Err(PotentialError::Unnormalised { .. })) {
        bail!("potential with phi''(0) != 1 was accepted");
    }
    let wrong = PairPotential::new("wrong", |r| r * r / 2.0, |r| r * 1.01, |_| 1.0);
    if !matches!(wrong, Err(PotentialError::InconsistentDerivative { .. })) {
        bail!("potential with an inconsistent derivative was accepted");
    }
    Ok(())
}

fn check_g_hat_symmetry() -> CheckResult {
    let domain = LatticeDomain::ball(16.0)?;
    for &m in domain.sites() {
        for &s in domain.sites().iter().step_by(13) {
            let (a, b) = (g_hat_lattice(m, s), g_hat_lattice(s, m));
            ensure!(a == b, "G_hat({m:?}, {s:?}) = {a} but G_hat({s:?}, {m:?}) = {b}");
        }
    }
    Ok(())
}

/// Reads the JSON config embedded in the first line of a CSV artifact.
pub fn read_config_header(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    let json = first
        .strip_prefix("# config: ")
        .with_context(|| format!("{} has no config header", path.display()))?;
    Ok(serde_json::from_str(json)?)
}
