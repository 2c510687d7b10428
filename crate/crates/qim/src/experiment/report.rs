//! Report records and the JSON/CSV serialization of a run.
//!
//! Everything written here is deterministic for a fixed config and seed
//! except the wall-clock field of `report.json`; CSV tables carry no timing
//! at all, so reruns must be byte-identical. Numbers are formatted with 17
//! significant digits, which round-trips `f64` losslessly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::gibbs::BetaVerdict;

use super::{ExperimentError, ExperimentSpec, Suite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Failing this fails the run.
    Assert,
    /// Reported only; never fails the run.
    Flag,
}

/// One inequality or equality check: `lhs <= rhs + slack` with
/// `margin = rhs + slack - lhs`, so passing records have `margin >= 0`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub kind: CheckKind,
    pub pass: bool,
}

impl CheckRecord {
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64, kind: CheckKind) -> Self {
        let margin = rhs + slack - lhs;
        Self {
            name: name.into(),
            lhs,
            rhs,
            margin,
            kind,
            pass: margin >= 0.0,
        }
    }

    pub fn assert_le(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self::le(name, lhs, rhs, slack, CheckKind::Assert)
    }

    pub fn flag_le(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self::le(name, lhs, rhs, slack, CheckKind::Flag)
    }

    /// `|value| <= bound`.
    pub fn assert_small(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::le(name, value.abs(), bound, 0.0, CheckKind::Assert)
    }
}

/// Concrete parameter tuple of one sweep evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub strength: f64,
    pub dim: usize,
    pub order: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub point: SweepPoint,
    pub checks: Vec<CheckRecord>,
    /// Budget-guard skips, named explicitly.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub order: usize,
    pub m_value: f64,
    pub coefficient: f64,
    pub bound_value: Option<f64>,
    pub bound_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadiusSummary {
    pub ratio_estimates: Vec<f64>,
    pub root_estimates: Vec<f64>,
    pub radius_empirical: f64,
    pub radius_bound: Option<f64>,
    pub entire_hint: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipSummary {
    pub beta_grid: Vec<f64>,
    pub truncation_sizes: Vec<usize>,
    /// `curves[b][k] = Tr rho_{N_k}^{beta_b}`.
    pub curves: Vec<Vec<f64>>,
    pub verdicts: Vec<BetaVerdict>,
    pub effective_beta: Option<f64>,
    pub divergence_edge: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesCurvePoint {
    pub lambda: f64,
    pub series_value: f64,
    pub direct_value: f64,
    pub abs_error: f64,
    pub next_term_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceSummary {
    pub lambda_grid: Vec<f64>,
    pub gaps: Vec<f64>,
    pub blowup_lambda: Option<f64>,
}

/// The full run record persisted as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub rng: String,
    pub name: String,
    pub suite: Suite,
    pub seed: u64,
    pub threads: usize,
    pub spec: ExperimentSpec,
    pub points: Vec<PointReport>,
    pub coefficients: Vec<CoefficientRow>,
    pub radius: Option<RadiusSummary>,
    pub membership: Option<MembershipSummary>,
    pub series_curve: Vec<SeriesCurvePoint>,
    pub divergence: Option<DivergenceSummary>,
    pub pass: bool,
    pub budget_exhausted: bool,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn all_assertions_pass(&self) -> bool {
        self.points
            .iter()
            .flat_map(|p| &p.checks)
            .all(|c| c.kind == CheckKind::Flag || c.pass)
    }
}

/// 17 significant digits: enough to reproduce the exact f64 bits on parse.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_json(report: &ExperimentReport, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut file = fs::File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut file, report)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn point_row(point: &SweepPoint, check: &CheckRecord) -> Vec<String> {
    vec![
        fmt_f64(point.lambda),
        fmt_f64(point.strength),
        point.dim.to_string(),
        point.order.to_string(),
        check.name.clone(),
        fmt_f64(check.lhs),
        fmt_f64(check.rhs),
        fmt_f64(check.margin),
        match check.kind {
            CheckKind::Assert => "assert".into(),
            CheckKind::Flag => "flag".into(),
        },
        check.pass.to_string(),
    ]
}

const CHECK_HEADER: [&str; 10] = [
    "lambda", "strength", "dim", "order", "check", "lhs", "rhs", "margin", "kind", "pass",
];

fn write_check_csv(
    path: &Path,
    rows: &[(&SweepPoint, &CheckRecord)],
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CHECK_HEADER)?;
    for (p, c) in rows {
        w.write_record(point_row(p, c))?;
    }
    w.flush()?;
    Ok(())
}

/// Write `tables/checks.csv` plus, when a sweep axis is active, one CSV per
/// axis holding the same rows sorted (stably) by that axis.
pub fn write_tables(report: &ExperimentReport, dir: &Path) -> Result<(), ExperimentError> {
    let tables = dir.join("tables");
    fs::create_dir_all(&tables)?;

    let rows: Vec<(&SweepPoint, &CheckRecord)> = report
        .points
        .iter()
        .flat_map(|p| p.checks.iter().map(move |c| (&p.point, c)))
        .collect();
    write_check_csv(&tables.join("checks.csv"), &rows)?;

    if let Some(sweep) = &report.spec.sweep {
        let axes: [(&str, bool); 4] = [
            ("lambda", sweep.lambda.len() > 1),
            ("strength", sweep.strength.len() > 1),
            ("dim", sweep.dim.len() > 1),
            ("order", sweep.order.len() > 1),
        ];
        for (axis, active) in axes {
            if !active {
                continue;
            }
            let mut sorted = rows.clone();
            sorted.sort_by(|a, b| match axis {
                "lambda" => a.0.lambda.total_cmp(&b.0.lambda),
                "strength" => a.0.strength.total_cmp(&b.0.strength),
                "dim" => a.0.dim.cmp(&b.0.dim),
                _ => a.0.order.cmp(&b.0.order),
            });
            write_check_csv(&tables.join(format!("{axis}.csv")), &sorted)?;
        }
    }

    if !report.coefficients.is_empty() {
        let mut w = csv::Writer::from_path(tables.join("coefficients.csv"))?;
        w.write_record(["order", "m_value", "coefficient", "bound_value", "bound_ratio"])?;
        for row in &report.coefficients {
            w.write_record([
                row.order.to_string(),
                fmt_f64(row.m_value),
                fmt_f64(row.coefficient),
                fmt_opt(row.bound_value),
                fmt_opt(row.bound_ratio),
            ])?;
        }
        w.flush()?;
    }

    if let Some(m) = &report.membership {
        let mut w = csv::Writer::from_path(tables.join("membership.csv"))?;
        let mut header = vec!["beta".to_string()];
        header.extend(m.truncation_sizes.iter().map(|n| format!("trace_n{n}")));
        header.push("verdict".into());
        w.write_record(&header)?;
        for (b_idx, &beta) in m.beta_grid.iter().enumerate() {
            let mut row = vec![fmt_f64(beta)];
            row.extend(m.curves[b_idx].iter().map(|&t| fmt_f64(t)));
            row.push(format!("{:?}", m.verdicts[b_idx]).to_lowercase());
            w.write_record(&row)?;
        }
        w.flush()?;
    }

    if !report.series_curve.is_empty() {
        let mut w = csv::Writer::from_path(tables.join("series_error.csv"))?;
        w.write_record([
            "lambda",
            "series_value",
            "direct_value",
            "abs_error",
            "next_term_bound",
        ])?;
        for p in &report.series_curve {
            w.write_record([
                fmt_f64(p.lambda),
                fmt_f64(p.series_value),
                fmt_f64(p.direct_value),
                fmt_f64(p.abs_error),
                fmt_f64(p.next_term_bound),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn write_plots(report: &ExperimentReport, dir: &Path) -> Result<(), ExperimentError> {
    use super::svg::LineChart;
    let plots = dir.join("plots");

    if !report.series_curve.is_empty() {
        let err_pts: Vec<(f64, f64)> = report
            .series_curve
            .iter()
            .map(|p| (p.lambda, p.abs_error.max(1e-18).log10()))
            .collect();
        let bound_pts: Vec<(f64, f64)> = report
            .series_curve
            .iter()
            .map(|p| (p.lambda, p.next_term_bound.max(1e-18).log10()))
            .collect();
        let chart = LineChart {
            title: "series vs direct partition function".into(),
            x_label: "lambda".into(),
            y_label: "log10 |error|".into(),
            series: vec![
                ("abs error".into(), err_pts),
                ("next-term bound".into(), bound_pts),
            ],
        };
        fs::create_dir_all(&plots)?;
        fs::write(plots.join("series_error.svg"), chart.render())?;
    }

    if report
        .coefficients
        .iter()
        .any(|c| c.bound_ratio.is_some())
    {
        let pts: Vec<(f64, f64)> = report
            .coefficients
            .iter()
            .filter_map(|c| c.bound_ratio.map(|r| (c.order as f64, r.max(1e-18).log10())))
            .collect();
        let chart = LineChart {
            title: "cumulant magnitude over closed-form bound".into(),
            x_label: "order".into(),
            y_label: "log10 ratio".into(),
            series: vec![("|M_n| / bound".into(), pts)],
        };
        fs::create_dir_all(&plots)?;
        fs::write(plots.join("bound_ratios.svg"), chart.render())?;
    }

    if let Some(m) = &report.membership {
        let mut series = Vec::new();
        for (b_idx, &beta) in m.beta_grid.iter().enumerate() {
            let pts: Vec<(f64, f64)> = m
                .truncation_sizes
                .iter()
                .zip(&m.curves[b_idx])
                .map(|(&n, &t)| (n as f64, t))
                .collect();
            series.push((format!("beta={beta:.1}"), pts));
        }
        let chart = LineChart {
            title: "trace of rho^beta across truncations".into(),
            x_label: "truncation size".into(),
            y_label: "trace value".into(),
            series,
        };
        fs::create_dir_all(&plots)?;
        fs::write(plots.join("membership.svg"), chart.render())?;
    }
    Ok(())
}
