//! Batch front door: experiment configs, verification suites, sweeps, and
//! persisted JSON/CSV/SVG reports.
//!
//! A run ingests one TOML config describing a model and a suite, executes
//! every sweep point in a worker pool (deterministically: each point is
//! computed serially and assembly is ordered by sweep index), and writes
//! `report.json`, `tables/*.csv`, and `plots/*.svg` under the output
//! directory. Exit semantics are mapped by the `qim` binary: 0 pass,
//! 1 assertion failure, 2 config error, 3 budget exhaustion.

mod report;
mod suites;
mod svg;

pub use report::{
    fmt_f64, CheckKind, CheckRecord, CoefficientRow, DivergenceSummary, ExperimentReport,
    MembershipSummary, PointReport, RadiusSummary, SeriesCurvePoint, SweepPoint,
};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::{default_beta_grid, schatten_membership};
use crate::models::{self, Family, ModelSpec};

/// Environment variable consulted for the default output directory.
pub const OUTPUT_DIR_ENV: &str = "QIM_OUTPUT_DIR";

/// Verification suite selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Norms,
    Bkm,
    Series,
    Radius,
    Bounds,
    All,
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Suite::Norms => "norms",
            Suite::Bkm => "bkm",
            Suite::Series => "series",
            Suite::Radius => "radius",
            Suite::Bounds => "bounds",
            Suite::All => "all",
        };
        f.write_str(s)
    }
}

/// Human-readable catalog of suites and what each one verifies.
pub fn suite_catalog() -> Vec<(Suite, &'static str)> {
    vec![
        (
            Suite::Norms,
            "omega/form norm domination, interpolation bound on a 21-point exponent grid, \
             perturbed-resolvent identity with its norm bound, and the norm-equivalence \
             sandwich between base points",
        ),
        (
            Suite::Bkm,
            "BKM metric closed form vs adaptive quadrature; symmetry, bilinearity, and \
             positivity on centered frames; regularized vs true mean; Frechet derivative and \
             second/third derivative bridges of the free energy",
        ),
        (
            Suite::Series,
            "Frechet derivative + Duhamel remainder: partition-function Taylor expansion vs \
             exact spectral evaluation, coefficient cross-checks by finite differences, \
             difference-quotient decay, convexity of the free energy",
        ),
        (
            Suite::Radius,
            "empirical convergence radius vs the sufficient bound (1-beta)/||V||_omega, \
             with the divergence scan along the V = -H direction",
        ),
        (
            Suite::Bounds,
            "per-order cumulant magnitudes against the closed-form n-point bound \
             (ratios reported, never asserted)",
        ),
        (Suite::All, "every suite above in sequence"),
    ]
}

/// Optional sweep grid; empty axes default to the base model values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub strength: Vec<f64>,
    #[serde(default)]
    pub dim: Vec<usize>,
    #[serde(default)]
    pub order: Vec<usize>,
}

impl SweepGrid {
    fn is_empty(&self) -> bool {
        self.lambda.is_empty()
            && self.strength.is_empty()
            && self.dim.is_empty()
            && self.order.is_empty()
    }
}

fn default_inequality_slack() -> f64 {
    1e-10
}
fn default_quadrature() -> f64 {
    1e-9
}
fn default_mean_equality() -> f64 {
    1e-12
}
fn default_d1() -> f64 {
    1e-7
}
fn default_d2() -> f64 {
    1e-6
}
fn default_d3() -> f64 {
    1e-4
}
fn default_coeff_fd() -> f64 {
    1e-5
}

/// Tolerance overrides; the defaults are the module-level contracts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_inequality_slack")]
    pub inequality_slack: f64,
    #[serde(default = "default_quadrature")]
    pub quadrature: f64,
    #[serde(default = "default_mean_equality")]
    pub mean_equality: f64,
    #[serde(default = "default_d1")]
    pub derivative1_rel: f64,
    #[serde(default = "default_d2")]
    pub derivative2_rel: f64,
    #[serde(default = "default_d3")]
    pub derivative3_rel: f64,
    #[serde(default = "default_coeff_fd")]
    pub coefficient_fd_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            inequality_slack: default_inequality_slack(),
            quadrature: default_quadrature(),
            mean_equality: default_mean_equality(),
            derivative1_rel: default_d1(),
            derivative2_rel: default_d2(),
            derivative3_rel: default_d3(),
            coefficient_fd_rel: default_coeff_fd(),
        }
    }
}

/// One experiment: a named model, a suite, and optional sweep/tolerance
/// overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub suite: Suite,
    pub model: ModelSpec,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] crate::error::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool error: {0}")]
    Pool(String),
}

/// Overrides supplied on the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub threads: Option<usize>,
}

/// Final status of a run, mapped to process exit codes by the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Pass,
    AssertionFailure,
    BudgetExhausted,
}

impl RunStatus {
    pub fn exit_code(self) -> u8 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::AssertionFailure => 1,
            RunStatus::BudgetExhausted => 3,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec, ExperimentError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
    let spec: ExperimentSpec =
        toml::from_str(&text).map_err(|e| ExperimentError::Config(e.to_string()))?;
    validate_spec(&spec)?;
    Ok(spec)
}

pub fn validate_spec(spec: &ExperimentSpec) -> Result<(), ExperimentError> {
    if spec.name.trim().is_empty() {
        return Err(ExperimentError::Config("experiment name is empty".into()));
    }
    spec.model
        .validate()
        .map_err(|e| ExperimentError::Config(format!("model: {e}")))?;
    let t = &spec.tolerances;
    for (name, v) in [
        ("inequality_slack", t.inequality_slack),
        ("quadrature", t.quadrature),
        ("mean_equality", t.mean_equality),
        ("derivative1_rel", t.derivative1_rel),
        ("derivative2_rel", t.derivative2_rel),
        ("derivative3_rel", t.derivative3_rel),
        ("coefficient_fd_rel", t.coefficient_fd_rel),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(ExperimentError::Config(format!(
                "tolerance {name} must be positive and finite, got {v}"
            )));
        }
    }
    if let Some(sweep) = &spec.sweep {
        if sweep.is_empty() {
            return Err(ExperimentError::Config(
                "sweep table present but every axis is empty".into(),
            ));
        }
        for &l in &sweep.lambda {
            if !l.is_finite() {
                return Err(ExperimentError::Config(format!(
                    "sweep lambda must be finite, got {l}"
                )));
            }
        }
        for &s in &sweep.strength {
            if !(s > 0.0) || !s.is_finite() {
                return Err(ExperimentError::Config(format!(
                    "sweep strength must be positive, got {s}"
                )));
            }
        }
        for &d in &sweep.dim {
            if d == 0 || d > crate::linalg::DIMENSION_CAP {
                return Err(ExperimentError::Config(format!(
                    "sweep dim must lie in 1..={}, got {d}",
                    crate::linalg::DIMENSION_CAP
                )));
            }
        }
        for &o in &sweep.order {
            if o == 0 || o > 8 {
                return Err(ExperimentError::Config(format!(
                    "sweep order must lie in 1..=8, got {o}"
                )));
            }
        }
    }
    Ok(())
}

fn sweep_points(spec: &ExperimentSpec) -> Vec<SweepPoint> {
    let base_strength = spec.model.perturbation.strength();
    let empty = SweepGrid::default();
    let sweep = spec.sweep.as_ref().unwrap_or(&empty);
    let lambdas = if sweep.lambda.is_empty() {
        vec![0.25]
    } else {
        sweep.lambda.clone()
    };
    let strengths = if sweep.strength.is_empty() {
        vec![base_strength]
    } else {
        sweep.strength.clone()
    };
    let dims = if sweep.dim.is_empty() {
        vec![spec.model.dim]
    } else {
        sweep.dim.clone()
    };
    let orders = if sweep.order.is_empty() {
        vec![4]
    } else {
        sweep.order.clone()
    };

    let mut points = Vec::new();
    for &dim in &dims {
        for &strength in &strengths {
            for &order in &orders {
                for &lambda in &lambdas {
                    points.push(SweepPoint {
                        lambda,
                        strength,
                        dim,
                        order,
                    });
                }
            }
        }
    }
    points
}

/// Membership ladder and effective beta for the model family. Random dense
/// spectra are not nested truncations, so they carry no effective beta.
fn beta_context(
    model: &ModelSpec,
) -> Result<(Option<f64>, Option<MembershipSummary>), ExperimentError> {
    if matches!(model.family, Family::RandomDense) {
        return Ok((None, None));
    }
    let fam = *model;
    let report = schatten_membership(
        |n| models::hamiltonian(&fam.with_dim(n)),
        &default_beta_grid(),
        &[8, 16, 32, 64],
    )?;
    let summary = MembershipSummary {
        beta_grid: report.beta_grid.clone(),
        truncation_sizes: report.truncation_sizes.clone(),
        curves: report.curves.clone(),
        verdicts: report.verdicts.clone(),
        effective_beta: report.effective_beta,
        divergence_edge: report.divergence_edge,
    };
    Ok((report.effective_beta, Some(summary)))
}

/// Execute a validated experiment and write all artifacts.
pub fn run(
    spec: &ExperimentSpec,
    opts: &RunOptions,
) -> Result<(ExperimentReport, RunStatus), ExperimentError> {
    validate_spec(spec)?;
    let mut spec = spec.clone();
    if let Some(seed) = opts.seed_override {
        spec.model.seed = seed;
    }
    let started = Instant::now();

    let (beta_eff, membership) = beta_context(&spec.model)?;
    let points = sweep_points(&spec);
    let threads = opts.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;

    let tol = spec.tolerances;
    let outcomes: Vec<Result<suites::PointOutcome, crate::error::Error>> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(idx, &point)| suites::run_point(&spec, &tol, point, beta_eff, idx == 0))
            .collect()
    });

    let mut point_reports = Vec::with_capacity(points.len());
    let mut budget_exhausted = false;
    let mut coefficients = Vec::new();
    let mut radius = None;
    let mut series_curve = Vec::new();
    let mut divergence = None;
    for (point, outcome) in points.iter().zip(outcomes) {
        let outcome = outcome?;
        budget_exhausted |= outcome.budget_exhausted;
        if !outcome.extras.coefficients.is_empty() {
            coefficients = outcome.extras.coefficients;
        }
        if outcome.extras.radius.is_some() {
            radius = outcome.extras.radius;
        }
        if !outcome.extras.series_curve.is_empty() {
            series_curve = outcome.extras.series_curve;
        }
        if outcome.extras.divergence.is_some() {
            divergence = outcome.extras.divergence;
        }
        point_reports.push(PointReport {
            point: *point,
            checks: outcome.checks,
            skipped: outcome.skipped,
        });
    }

    let actual_threads = if threads == 0 {
        pool.current_num_threads()
    } else {
        threads
    };
    let mut report = ExperimentReport {
        schema_version: 1,
        toolkit_version: crate::VERSION.to_string(),
        rng: models::RNG_DESCRIPTION.to_string(),
        name: spec.name.clone(),
        suite: spec.suite,
        seed: spec.model.seed,
        threads: actual_threads,
        spec: spec.clone(),
        points: point_reports,
        coefficients,
        radius,
        membership,
        series_curve,
        divergence,
        pass: false,
        budget_exhausted,
        wall_clock_seconds: 0.0,
    };
    report.pass = report.all_assertions_pass();
    report.wall_clock_seconds = started.elapsed().as_secs_f64();

    let out_dir = resolve_output_dir(&spec, opts);
    report::write_json(&report, &out_dir)?;
    report::write_tables(&report, &out_dir)?;
    report::write_plots(&report, &out_dir)?;

    let status = if !report.pass {
        RunStatus::AssertionFailure
    } else if report.budget_exhausted {
        RunStatus::BudgetExhausted
    } else {
        RunStatus::Pass
    };
    Ok((report, status))
}

fn resolve_output_dir(spec: &ExperimentSpec, opts: &RunOptions) -> PathBuf {
    if let Some(dir) = &opts.output_dir {
        return dir.clone();
    }
    if let Some(dir) = &spec.output_dir {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir).join(&spec.name);
        }
    }
    PathBuf::from("qim-out").join(&spec.name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::PerturbationKind;

    fn tiny_spec(suite: Suite) -> ExperimentSpec {
        ExperimentSpec {
            name: "unit".into(),
            suite,
            model: ModelSpec {
                family: Family::Oscillator,
                dim: 6,
                seed: 11,
                scramble: true,
                perturbation: PerturbationKind::RandomTargetOmega { strength: 0.2 },
            },
            sweep: None,
            tolerances: Tolerances::default(),
            output_dir: None,
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let text = r#"
name = "demo"
suite = "norms"

[model]
family = "log_spectrum"
beta0 = 0.6
dim = 16
seed = 42
scramble = true
kind = "random_target_omega"
strength = 0.2

[sweep]
strength = [0.1, 0.2]

[tolerances]
quadrature = 1e-9
"#;
        let spec: ExperimentSpec = toml::from_str(text).unwrap();
        validate_spec(&spec).unwrap();
        assert_eq!(spec.suite, Suite::Norms);
        assert!(matches!(spec.model.family, Family::LogSpectrum { .. }));
        // Negative tolerance must be rejected as a field error.
        let bad = text.replace("quadrature = 1e-9", "quadrature = -1e-9");
        let bad_spec: ExperimentSpec = toml::from_str(&bad).unwrap();
        let err = validate_spec(&bad_spec).unwrap_err();
        assert!(err.to_string().contains("quadrature"));
    }

    #[test]
    fn malformed_config_reports_parse_error() {
        let err = toml::from_str::<ExperimentSpec>("name = 3").unwrap_err();
        assert!(!err.to_string().is_empty());
    }

    #[test]
    fn empty_sweep_rejected() {
        let mut spec = tiny_spec(Suite::Norms);
        spec.sweep = Some(SweepGrid::default());
        assert!(validate_spec(&spec).is_err());
    }

    #[test]
    fn sweep_points_cartesian_order() {
        let mut spec = tiny_spec(Suite::Series);
        spec.sweep = Some(SweepGrid {
            lambda: vec![0.1, 0.2],
            strength: vec![],
            dim: vec![4, 6],
            order: vec![3],
        });
        let pts = sweep_points(&spec);
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0].dim, 4);
        assert_eq!(pts[0].lambda, 0.1);
        assert_eq!(pts[1].lambda, 0.2);
        assert_eq!(pts[2].dim, 6);
    }

    #[test]
    fn suite_catalog_covers_every_suite() {
        let cat = suite_catalog();
        assert_eq!(cat.len(), 6);
        let series_line = cat
            .iter()
            .find(|(s, _)| *s == Suite::Series)
            .map(|(_, d)| *d)
            .unwrap();
        assert!(series_line.contains("Duhamel"));
        assert!(series_line.contains("Frechet"));
    }
}
