//! Controller synthesis from data.
//!
//! Three routes share the data-based closed loop `X1 G1` / `X1 G2`:
//!
//! * [`synth_thm2`]: primal-dual contraction conditions with remainder
//!   multipliers (`Ps`, `Px`) and an expansion point `x1`;
//! * [`synth_cor2`]: the same with a uniform slack `eta` absorbing the
//!   data-noise leakage and the additive disturbance;
//! * [`synth_thm1_baseline`]: the nonlinearity-minimization baseline, a
//!   direct search over `K2` followed by a linear contraction LP.
//!
//! Positive definiteness of the per-row remainder Hessian is encoded as
//! strict symmetric diagonal dominance, which keeps everything an LP.

mod baseline;
mod contraction;
mod search;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datagen::ExperimentData;
use crate::dynamics::{Dictionary, ExpansionPoint, FeedbackGains};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::polytope::PolyhedralSet;

pub use baseline::{
    baseline_residuals, baseline_search, inner_maxima, lumped_bound_evaluator, solve_baseline_lp,
    synth_thm1_baseline, BaselineOptions, BaselineResult, BaselineSearch, K2Grid, SearchRecord,
};
pub use contraction::{synth_cor2, synth_thm2};
pub use search::{
    lambda_bisect, pick_x1, sweep_lambda, sweep_method, LambdaProbe, LambdaSweep, MethodSettings,
    SweepOutcome,
};

/// Residual bound for every certificate equation.
pub const TOL_CERT: f64 = 1e-6;
/// Smallest admissible entry of `Ps`.
pub const PS_FLOOR: f64 = -1e-9;
/// Rows whose remainder Hessian combination stays below this are inactive.
pub const EPS_ACT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Thm2,
    Cor2,
    Thm1,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Thm2, Method::Cor2, Method::Thm1];

    pub fn name(self) -> &'static str {
        match self {
            Method::Thm2 => "thm2",
            Method::Cor2 => "cor2",
            Method::Thm1 => "thm1",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm2" => Ok(Method::Thm2),
            "cor2" => Ok(Method::Cor2),
            "thm1" => Ok(Method::Thm1),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Pure feasibility.
    Feasible,
    /// Maximize a uniform slack in the contraction inequality.
    Margin,
}

/// Norm used for the worst case of `F_i w` over `||w||_inf <= h_w`.
///
/// `One` is exact: `max F_i w = h_w ||F_i||_1`. `Inf` reproduces the
/// literal `||F_i|| h_w` reading and can under-estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowNorm {
    One,
    Inf,
}

impl RowNorm {
    pub fn of(self, row: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            RowNorm::One => row.into_iter().map(f64::abs).sum(),
            RowNorm::Inf => row.into_iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// `h_w * norm(F_i)` for every row.
    pub fn disturbance_terms(self, set: &PolyhedralSet, h_w: f64) -> Vector {
        Vector::from_fn(set.num_rows(), |i, _| {
            h_w * self.of(set.f().row(i).iter().copied())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Definiteness {
    /// Every row strictly diagonally dominant with margin `eps_dd`.
    Strict,
    /// Rows whose Hessian combination can be nonzero are strict; the rest are forced to zero.
    ActiveRows,
    /// No curvature condition.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionOptions {
    pub lambda: f64,
    pub eps_dd: f64,
    pub objective: Objective,
    pub definiteness: Definiteness,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self {
            lambda: 0.95,
            eps_dd: 1e-6,
            objective: Objective::Margin,
            definiteness: Definiteness::ActiveRows,
        }
    }
}

/// Quantities needed by the disturbance-robust conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisturbanceBudget {
    pub h_w: f64,
    /// Lipschitz constant of `Q` over the safe set.
    pub lipschitz: f64,
    /// Bound on `||x||_inf` over the safe set.
    pub m_x: f64,
    pub row_norm: RowNorm,
}

impl DisturbanceBudget {
    /// `g_m = h_w * max_i norm(F_i)`.
    pub fn g_m(&self, set: &PolyhedralSet) -> f64 {
        self.row_norm.disturbance_terms(set, self.h_w).max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpansionChoice {
    Point(Vector),
    /// Candidate search with the given seed for random candidates.
    Auto {
        seed: u64,
    },
}

/// The synthesis inputs: data, safe set, and the known dictionary.
#[derive(Debug, Clone, Copy)]
pub struct SynthesisProblem<'a> {
    pub data: &'a ExperimentData,
    pub set: &'a PolyhedralSet,
    pub dictionary: &'a Dictionary,
}

impl SynthesisProblem<'_> {
    pub(crate) fn check_dimensions(&self) -> Result<()> {
        let n = self.data.state_dim();
        if self.set.dim() != n || self.dictionary.state_dim() != n {
            return Err(Error::DimensionMismatch(
                "data, safe set and dictionary disagree on n".into(),
            ));
        }
        if self.dictionary.len() != self.data.num_terms() {
            return Err(Error::DimensionMismatch(
                "data and dictionary disagree on N".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn require_v0_rank(&self) -> Result<()> {
        let r = crate::datagen::check_rank_v0(self.data);
        if !r.full_row_rank {
            return Err(Error::RankDeficientData(format!(
                "V0 has rank {} < {}",
                r.rank, r.rows
            )));
        }
        Ok(())
    }
}

/// Data-side controller: gains together with the right-inverse blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Controller {
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub k1: Mat,
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub k2: Mat,
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub g1: Mat,
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub g2: Mat,
}

impl Controller {
    pub fn from_right_inverse(data: &ExperimentData, g1: Mat, g2: Mat) -> Self {
        Self {
            k1: &data.u0 * &g1,
            k2: &data.u0 * &g2,
            g1,
            g2,
        }
    }

    pub fn gains(&self) -> FeedbackGains {
        FeedbackGains {
            k1: self.k1.clone(),
            k2: self.k2.clone(),
        }
    }

    /// `[G1 G2]`.
    pub fn g(&self) -> Mat {
        let (t, n) = self.g1.shape();
        let big_n = self.g2.ncols();
        let mut g = Mat::zeros(t, n + big_n);
        g.columns_mut(0, n).copy_from(&self.g1);
        g.columns_mut(n, big_n).copy_from(&self.g2);
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisCertificate {
    pub method: Method,
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub ps: Mat,
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub px: Mat,
    pub eta: f64,
    pub lambda: f64,
    /// Uniform slack achieved in the contraction inequality.
    pub slack: f64,
    pub expansion: ExpansionPoint,
    pub residuals: BTreeMap<String, f64>,
    /// Smallest eigenvalue of each row's `M_i`.
    pub definiteness_margins: Vec<f64>,
    /// Rows on which the strict curvature condition was imposed.
    pub enforced_rows: Vec<bool>,
    pub eps_dd: f64,
    pub definiteness: Definiteness,
    pub budget: Option<DisturbanceBudget>,
    pub g_m: Option<f64>,
}

impl SynthesisCertificate {
    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }
}

/// `M_i = -sum_j C_ij L2_j` for coefficient matrix `C` (s x N).
pub fn curvature_matrices(coeffs: &Mat, l2: &[Mat]) -> Vec<Mat> {
    let n = l2.first().map_or(0, |h| h.nrows());
    (0..coeffs.nrows())
        .map(|i| {
            let mut m = Mat::zeros(n, n);
            for (j, h) in l2.iter().enumerate() {
                m -= h * coeffs[(i, j)];
            }
            m
        })
        .collect()
}
