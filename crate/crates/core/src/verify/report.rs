use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::polytope::PolyhedralSet;
use crate::synthesis::{
    lumped_bound_evaluator, Controller, DisturbanceBudget, Method, SweepOutcome, SynthesisProblem,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservatismRow {
    pub method: Method,
    /// `feasible`, or the synthesis error at the scenario's level.
    pub status: String,
    pub lambda_min: Option<f64>,
    pub k2_norm: Option<f64>,
    /// Grid maximum of `||K1 x + K2 Q(x)||_inf` over the set.
    pub control_effort: Option<f64>,
    pub lumped_bound: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservatismReport {
    pub lambda: f64,
    pub rows: Vec<ConservatismRow>,
}

/// One row per method: bisected level, gain size, control effort and the
/// lumped disturbance bound. No cross-method claim is made.
pub fn conservatism_report(
    problem: &SynthesisProblem<'_>,
    lambda: f64,
    results: &[(Method, std::result::Result<Controller, String>)],
    sweeps: &[SweepOutcome],
    budget: &DisturbanceBudget,
    x_grid: &[usize],
) -> Result<ConservatismReport> {
    if results.is_empty() {
        return Err(Error::InvalidArgument(
            "no synthesis result to compare".into(),
        ));
    }
    let points: Vec<Vector> = problem.set.sample_grid(x_grid)?.collect();
    let mut rows = Vec::with_capacity(results.len());
    for (method, result) in results {
        let lambda_min = sweeps
            .iter()
            .find(|s| s.method == *method)
            .and_then(|s| s.lambda_min);
        let row = match result {
            Ok(c) => {
                let gains = c.gains();
                let effort = points
                    .iter()
                    .map(|x| linalg::vec_inf_norm(&gains.input(problem.dictionary, x)))
                    .fold(0.0, f64::max);
                ConservatismRow {
                    method: *method,
                    status: "feasible".into(),
                    lambda_min,
                    k2_norm: Some(linalg::inf_norm(&c.k2)),
                    control_effort: Some(effort),
                    lumped_bound: Some(
                        lumped_bound_evaluator(problem, c, budget, x_grid)?
                            .iter()
                            .copied()
                            .collect(),
                    ),
                }
            }
            Err(e) => ConservatismRow {
                method: *method,
                status: e.clone(),
                lambda_min,
                k2_norm: None,
                control_effort: None,
                lumped_bound: None,
            },
        };
        rows.push(row);
    }
    Ok(ConservatismReport { lambda, rows })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

impl ConservatismReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("lambda = {}\n", self.lambda);
        let _ = writeln!(
            out,
            "{:<6} {:<12} {:>12} {:>12} {:>14}  lumped bound",
            "method", "status", "lambda_min", "|K2|_inf", "max |u|_inf"
        );
        for r in &self.rows {
            let status = if r.status == "feasible" {
                "feasible"
            } else {
                "infeasible"
            };
            let lumped = r.lumped_bound.as_ref().map_or_else(
                || "-".to_string(),
                |v| {
                    v.iter()
                        .map(|x| format!("{x:.4e}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                },
            );
            let _ = writeln!(
                out,
                "{:<6} {:<12} {:>12} {:>12} {:>14}  {}",
                r.method.name(),
                status,
                opt(r.lambda_min),
                opt(r.k2_norm),
                opt(r.control_effort),
                lumped
            );
            if r.status != "feasible" {
                let _ = writeln!(out, "       reason: {}", r.status);
            }
        }
        out
    }
}

/// Phase-plane SVG: the set, its `lambda`-scaled copy and trajectories.
pub fn phase_plot_svg(
    set: &PolyhedralSet,
    lambda: f64,
    trajectories: &[Vec<Vector>],
) -> Result<String> {
    let outer = set.polygon()?;
    let inner: Vec<Vector> = outer.iter().map(|v| v * lambda).collect();
    let bounds = set.interval_enclosure()?;
    let (lo, hi) = (bounds.lo(), bounds.hi());
    let pad = 0.05 * (hi - lo).max();
    let (x0, x1, y0, y1) = (lo[0] - pad, hi[0] + pad, lo[1] - pad, hi[1] + pad);
    let width = 600.0;
    let height = width * (y1 - y0) / (x1 - x0);
    let map = |v: &Vector| {
        (
            (v[0] - x0) / (x1 - x0) * width,
            (y1 - v[1]) / (y1 - y0) * height,
        )
    };
    let path = |pts: &[Vector]| {
        pts.iter()
            .map(|v| {
                let (a, b) = map(v);
                format!("{a:.2},{b:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    );
    let _ = writeln!(
        svg,
        "<polygon points=\"{}\" fill=\"#e8f0fe\" stroke=\"#1a56db\" stroke-width=\"1.5\"/>",
        path(&outer)
    );
    let _ = writeln!(
        svg,
        "<polygon points=\"{}\" fill=\"none\" stroke=\"#1a56db\" stroke-dasharray=\"4 3\"/>",
        path(&inner)
    );
    for t in trajectories {
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#c2410c\" stroke-width=\"0.8\"/>",
            path(t)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
