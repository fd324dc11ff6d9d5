//! Independent checks of synthesized controllers.
//!
//! Nothing here reuses the synthesis encodings: contractivity is tested by
//! evaluating the next state on samples of the safe set, invariance by
//! simulating the ground-truth plant, and certificates by recomputing
//! their conditions from the raw matrices.

mod montecarlo;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::ExperimentData;
use crate::dynamics::{Dictionary, PlantModel};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lp::polytope_dual_min;
use crate::polytope::PolyhedralSet;
use crate::synthesis::{
    curvature_matrices, Controller, RowNorm, SynthesisCertificate, SynthesisProblem,
};

pub use montecarlo::{monte_carlo_ris, McReport, McWitness};
pub use report::{conservatism_report, phase_plot_svg, ConservatismReport, ConservatismRow};

pub const TOL_VERIFY: f64 = 1e-6;
/// Witnesses kept per report.
pub const MAX_WITNESSES: usize = 10;

/// Where the next state comes from.
#[derive(Debug, Clone, Copy)]
pub enum NextState<'a> {
    /// `(A1bar + B K1) x + (A2 + B K2) Q(x)`.
    TrueModel(&'a PlantModel),
    /// `X1 G1 x + X1 G2 Q(x)`.
    DataRep(&'a ExperimentData, &'a Dictionary),
}

impl NextState<'_> {
    pub fn tag(&self) -> &'static str {
        match self {
            NextState::TrueModel(_) => "true-model",
            NextState::DataRep(..) => "data-rep",
        }
    }

    fn matrices(&self, controller: &Controller) -> (Mat, Mat) {
        match self {
            NextState::TrueModel(p) => p.closed_loop(&controller.gains()),
            NextState::DataRep(d, _) => (&d.x1 * &controller.g1, &d.x1 * &controller.g2),
        }
    }

    fn dictionary(&self) -> &Dictionary {
        match self {
            NextState::TrueModel(p) => &p.dictionary,
            NextState::DataRep(_, d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub lambda: f64,
    pub h_w: f64,
    pub resolution: Vec<usize>,
    pub row_norm: RowNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridWitness {
    pub row: usize,
    pub margin: f64,
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    pub state: Vector,
}

/// Sizing data for the grid: a grid margin of at most `-required_margin`
/// extends to the whole set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementBound {
    pub cell_diagonal: f64,
    /// Lipschitz bound of `x -> x+` in the infinity norm.
    pub closed_loop_lipschitz: f64,
    pub required_margin: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub source: &'static str,
    pub lambda: f64,
    pub resolution: Vec<usize>,
    pub row_norm: RowNorm,
    pub samples: usize,
    /// `max_x F_i x+ + d_i - lambda g_i` per row.
    pub row_margins: Vec<f64>,
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    pub disturbance_terms: Vector,
    pub violations: usize,
    pub witnesses: Vec<GridWitness>,
    pub refinement: RefinementBound,
    pub pass: bool,
}

impl GridReport {
    pub fn worst_margin(&self) -> f64 {
        self.row_margins
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Checks `F x+ + d <= lambda g` on a grid of the safe set plus its vertices.
pub fn grid_contractivity(
    source: NextState<'_>,
    controller: &Controller,
    set: &PolyhedralSet,
    cfg: &GridConfig,
) -> Result<GridReport> {
    let n = set.dim();
    let (a_lin, a_nl) = source.matrices(controller);
    if a_lin.shape() != (n, n) || a_nl.nrows() != n || a_nl.ncols() != source.dictionary().len() {
        return Err(Error::DimensionMismatch(
            "controller and set disagree".into(),
        ));
    }
    let dictionary = source.dictionary();
    let mut points: Vec<Vector> = set.sample_grid(&cfg.resolution)?.collect();
    if n <= 3 {
        points.extend(set.enumerate_vertices()?);
    }
    let d = cfg.row_norm.disturbance_terms(set, cfg.h_w);
    let f = set.f();
    let g = set.g();
    let s = set.num_rows();

    let margins_at = |x: &Vector| -> Vector {
        let next = &a_lin * x + &a_nl * dictionary.remainder_unchecked(x);
        let fx = f * next;
        Vector::from_fn(s, |i, _| fx[i] + d[i] - cfg.lambda * g[i])
    };
    let per_point: Vec<Vector> = points.par_iter().map(margins_at).collect();

    let mut row_margins = vec![f64::NEG_INFINITY; s];
    let mut violations = 0;
    let mut witnesses = Vec::new();
    for (x, m) in points.iter().zip(&per_point) {
        let mut bad = false;
        for i in 0..s {
            row_margins[i] = row_margins[i].max(m[i]);
            if m[i] > TOL_VERIFY {
                bad = true;
                if witnesses.len() < MAX_WITNESSES {
                    witnesses.push(GridWitness {
                        row: i,
                        margin: m[i],
                        state: x.clone(),
                    });
                }
            }
        }
        violations += usize::from(bad);
    }

    let bounds = set.interval_enclosure()?;
    let cell_diagonal = bounds.cell_diagonal(&cfg.resolution);
    let lq = dictionary.lipschitz_bound(&bounds);
    let closed_loop_lipschitz = linalg::inf_norm(&a_lin) + linalg::inf_norm(&a_nl) * lq;
    let required_margin = linalg::inf_norm(f) * closed_loop_lipschitz * cell_diagonal;
    let worst = row_margins
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GridReport {
        source: source.tag(),
        lambda: cfg.lambda,
        resolution: cfg.resolution.clone(),
        row_norm: cfg.row_norm,
        samples: points.len(),
        row_margins,
        disturbance_terms: d,
        violations,
        witnesses,
        refinement: RefinementBound {
            cell_diagonal,
            closed_loop_lipschitz,
            required_margin,
            satisfied: worst <= -required_margin,
        },
        pass: violations == 0,
    })
}

/// Largest `|max_{x in P} c x - min {a g : a F = c, a >= 0}|` over the
/// first `rows` rows, with `c = F_i linear_part`. The primal side uses
/// vertex enumeration.
pub fn dual_gap_check(linear_part: &Mat, set: &PolyhedralSet, rows: usize) -> Result<f64> {
    let n = set.dim();
    if linear_part.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "linear part must be {n}x{n}"
        )));
    }
    let vertices = set.enumerate_vertices()?;
    let mut gap: f64 = 0.0;
    for i in 0..rows.min(set.num_rows()) {
        let c: Vector = (set.f().row(i) * linear_part).transpose();
        let primal = vertices
            .iter()
            .map(|v| c.dot(v))
            .fold(f64::NEG_INFINITY, f64::max);
        let (dual, _) = polytope_dual_min(&c, set)?;
        gap = gap.max((primal - dual).abs());
    }
    Ok(gap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub residuals: BTreeMap<String, f64>,
    pub ps_min: f64,
    /// Smallest eigenvalue over the rows marked as enforced.
    pub min_enforced_eigenvalue: Option<f64>,
    pub pass: bool,
}

/// Recomputes a contraction certificate from `V0`, `X1`, `U0`, `F`, `g`.
pub fn replay_certificate(
    problem: &SynthesisProblem<'_>,
    controller: &Controller,
    cert: &SynthesisCertificate,
) -> ReplayReport {
    let data = problem.data;
    let f = problem.set.f();
    let g = problem.set.g();
    let (n, big_n) = (data.state_dim(), data.num_terms());
    let e = &cert.expansion;
    let mut r = BTreeMap::new();

    let lin = f * &data.x1 * &controller.g1;
    let rem = f * &data.x1 * &controller.g2;
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        let mut v = cert.eta - cert.lambda * g[i];
        for l in 0..g.len() {
            v += cert.ps[(i, l)] * g[l];
        }
        for k in 0..n {
            v += cert.px[(i, k)] * e.xbar[k];
        }
        worst = worst.max(v);
    }
    r.insert("contraction".into(), worst);
    r.insert(
        "linear_part".into(),
        linalg::max_abs(&(&cert.ps * f - lin - &cert.px)),
    );
    r.insert(
        "remainder_part".into(),
        linalg::max_abs(&(&rem * &e.l1 - &cert.px)),
    );
    let mut g_full = Mat::zeros(data.samples(), n + big_n);
    g_full.columns_mut(0, n).copy_from(&controller.g1);
    g_full.columns_mut(n, big_n).copy_from(&controller.g2);
    r.insert(
        "right_inverse".into(),
        linalg::max_abs(&(&data.v0 * g_full - Mat::identity(n + big_n, n + big_n))),
    );
    r.insert(
        "gain_k1".into(),
        linalg::max_abs(&(&controller.k1 - &data.u0 * &controller.g1)),
    );
    r.insert(
        "gain_k2".into(),
        linalg::max_abs(&(&controller.k2 - &data.u0 * &controller.g2)),
    );
    if let (Some(b), Some(g_m)) = (cert.budget, cert.g_m) {
        let need = g_m
            * b.m_x
            * data.samples() as f64
            * (linalg::inf_norm(&controller.g1)
                + b.lipschitz * linalg::inf_norm(&controller.g2)
                + 1.0);
        r.insert("eta_bound".into(), (need - cert.eta).max(0.0));
    }

    let ms = curvature_matrices(&rem, &e.l2);
    let min_enforced_eigenvalue = ms
        .iter()
        .zip(&cert.enforced_rows)
        .filter(|(_, &on)| on)
        .map(|(m, _)| linalg::smallest_eigenvalue(m))
        .reduce(f64::min);
    let ps_min = cert.ps.min();
    let pass = r.values().all(|&v| v <= crate::synthesis::TOL_CERT)
        && ps_min >= crate::synthesis::PS_FLOOR
        && min_enforced_eigenvalue.is_none_or(|m| m >= cert.eps_dd / 2.0);
    ReplayReport {
        residuals: r,
        ps_min,
        min_enforced_eigenvalue,
        pass,
    }
}

/// Everything the verifier concluded about one controller.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub method: String,
    pub grid: GridReport,
    pub data_grid: Option<GridReport>,
    pub monte_carlo: Option<McReport>,
    pub definiteness_margins: Vec<f64>,
    pub replay: Option<ReplayReport>,
    pub pass: bool,
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl VerificationReport {
    pub fn new(
        method: &str,
        grid: GridReport,
        data_grid: Option<GridReport>,
        monte_carlo: Option<McReport>,
        definiteness_margins: Vec<f64>,
        replay: Option<ReplayReport>,
    ) -> Self {
        let pass = grid.pass
            && monte_carlo.as_ref().is_none_or(|m| m.violations == 0)
            && replay.as_ref().is_none_or(|r| r.pass);
        Self {
            method: method.to_string(),
            grid,
            data_grid,
            monte_carlo,
            definiteness_margins,
            replay,
            pass,
            runtime_secs: 0.0,
        }
    }
}
