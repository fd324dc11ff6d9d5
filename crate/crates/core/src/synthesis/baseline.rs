//! Nonlinearity-minimization baseline.
//!
//! For a candidate `K2` the remainder block is recovered from
//! `[U0; X0; Q0] G2 = [K2; 0; I]`, which needs full row rank of `M0`.
//! The per-row bound `l_i = max_x F_i X1 G2 Q(x)` is taken over a grid of
//! the safe set; the candidate minimizing `max_i l_i` is kept and the
//! linear part is certified by
//!
//! ```text
//! Ps g <= lambda g - l,   Ps F = F X1 G1,   V0 G1 = [I; 0],   Ps >= 0
//! ```

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::{check_rank_m0, ExperimentData};
use crate::dynamics::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lp::{Direction, LinExpr, LinearProgram, LpStatus, Relation};
use crate::polytope::PolyhedralSet;

use super::{Controller, DisturbanceBudget, Objective, SynthesisProblem, PS_FLOOR, TOL_CERT};

/// Upper bound on the number of `K2` candidates.
pub const MAX_CANDIDATES: usize = 2_000_000;

/// Uniform per-entry grid `lo, lo + step, ..., hi` for `K2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K2Grid {
    lo: f64,
    hi: f64,
    step: f64,
}

impl K2Grid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "K2 grid bounds [{lo}, {hi}] are invalid"
            )));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(
                "K2 grid step must be positive".into(),
            ));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn values(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.lo + k as f64 * self.step).collect()
    }

    /// Number of candidates for a `K2` with `entries` entries.
    pub fn candidates(&self, entries: usize) -> Option<usize> {
        let per = self.values().len();
        (0..entries).try_fold(1usize, |acc, _| acc.checked_mul(per))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOptions {
    pub lambda: f64,
    pub k2_grid: K2Grid,
    pub x_grid: Vec<usize>,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchRecord {
    /// Row-major entries of `K2`.
    pub k2: Vec<f64>,
    pub worst: f64,
}

/// Result of the outer direct search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSearch {
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub k2: Mat,
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub g2: Mat,
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    pub l_d: Vector,
    pub candidates: usize,
    pub grid_points: usize,
    pub x_grid: Vec<usize>,
    /// The best candidates in increasing order of `max_i l_i`.
    pub best: Vec<SearchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineResult {
    pub controller: Controller,
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    pub l_d: Vector,
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub ps: Mat,
    pub lambda: f64,
    pub slack: f64,
    pub residuals: BTreeMap<String, f64>,
    pub search: BaselineSearch,
}

impl BaselineResult {
    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }
}

const TRACE_LEN: usize = 10;

/// `G2 = P_u K2 + P_q` with `P = pinv(M0)`.
struct Recovery {
    p_u: Mat,
    p_q: Mat,
}

impl Recovery {
    fn new(data: &ExperimentData) -> Result<Self> {
        let r = check_rank_m0(data);
        if !r.full_row_rank {
            return Err(Error::RankDeficientData(format!(
                "M0 = [U0; X0; Q0] has rank {} < {}",
                r.rank, r.rows
            )));
        }
        let (m, n, big_n) = (data.input_dim(), data.state_dim(), data.num_terms());
        let p = linalg::pinv(&data.m0(), linalg::PINV_RTOL);
        Ok(Self {
            p_u: p.columns(0, m).into_owned(),
            p_q: p.columns(m + n, big_n).into_owned(),
        })
    }

    fn g2(&self, k2: &Mat) -> Mat {
        &self.p_u * k2 + &self.p_q
    }
}

fn grid_remainders(set: &PolyhedralSet, dictionary: &Dictionary, x_grid: &[usize]) -> Result<Mat> {
    let points: Vec<Vector> = set.sample_grid(x_grid)?.collect();
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut q = Mat::zeros(dictionary.len(), points.len());
    for (k, x) in points.iter().enumerate() {
        q.set_column(k, &dictionary.remainder_unchecked(x));
    }
    Ok(q)
}

fn row_maxima(coeffs: &Mat, q_grid: &Mat) -> Vector {
    let values = coeffs * q_grid;
    Vector::from_fn(values.nrows(), |i, _| values.row(i).max())
}

/// `max_x F_i X1 G2 Q(x)` over the grid points of the safe set.
pub fn inner_maxima(
    data: &ExperimentData,
    set: &PolyhedralSet,
    dictionary: &Dictionary,
    g2: &Mat,
    x_grid: &[usize],
) -> Result<Vector> {
    let q = grid_remainders(set, dictionary, x_grid)?;
    Ok(row_maxima(&(set.f() * &data.x1 * g2), &q))
}

/// Outer direct search over `K2`; ties go to the first candidate in
/// lexicographic order of the row-major entries.
pub fn baseline_search(
    problem: &SynthesisProblem<'_>,
    k2_grid: &K2Grid,
    x_grid: &[usize],
) -> Result<BaselineSearch> {
    problem.check_dimensions()?;
    let data = problem.data;
    let (m, big_n) = (data.input_dim(), data.num_terms());
    let recovery = Recovery::new(data)?;
    let values = k2_grid.values();
    let entries = m * big_n;
    let count = k2_grid
        .candidates(entries)
        .filter(|&c| c <= MAX_CANDIDATES)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("K2 grid exceeds {MAX_CANDIDATES} candidates"))
        })?;
    let q_grid = grid_remainders(problem.set, problem.dictionary, x_grid)?;
    let fx1 = problem.set.f() * &data.x1;
    let base = &fx1 * &recovery.p_q;
    let lin = &fx1 * &recovery.p_u;

    let decode = |mut idx: usize| {
        let mut k2 = Mat::zeros(m, big_n);
        for e in (0..entries).rev() {
            k2[(e / big_n, e % big_n)] = values[idx % values.len()];
            idx /= values.len();
        }
        k2
    };
    let mut scored: Vec<(f64, usize)> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let coeffs = &base + &lin * decode(idx);
            (row_maxima(&coeffs, &q_grid).max(), idx)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let best_idx = scored[0].1;
    let k2 = decode(best_idx);
    let g2 = recovery.g2(&k2);
    let l_d = row_maxima(&(&fx1 * &g2), &q_grid);
    let best = scored
        .iter()
        .take(TRACE_LEN)
        .map(|&(worst, idx)| SearchRecord {
            k2: decode(idx).transpose().iter().copied().collect(),
            worst,
        })
        .collect();
    Ok(BaselineSearch {
        k2,
        g2,
        l_d,
        candidates: count,
        grid_points: q_grid.ncols(),
        x_grid: x_grid.to_vec(),
        best,
    })
}

/// Certifies the linear part for a fixed remainder bound `l_d`.
pub fn solve_baseline_lp(
    problem: &SynthesisProblem<'_>,
    search: &BaselineSearch,
    lambda: f64,
    objective: Objective,
) -> Result<BaselineResult> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must lie in (0, 1]"
        )));
    }
    let data = problem.data;
    let set = problem.set;
    let (n, big_n, t_len, s) = (
        data.state_dim(),
        data.num_terms(),
        data.samples(),
        set.num_rows(),
    );
    let f = set.f();
    let g = set.g();
    let fx1 = f * &data.x1;
    let l_d = &search.l_d;

    let mut lp = LinearProgram::new();
    let g1 = lp.add_block("G1", t_len, n, false)?;
    let ps = lp.add_block("Ps", s, s, true)?;
    let delta = match objective {
        Objective::Margin => Some(lp.add_scalar("delta", true)?),
        Objective::Feasible => None,
    };
    for i in 0..s {
        let mut e = LinExpr::new();
        for l in 0..s {
            e.add_term(lp.var(ps, i, l), g[l]);
        }
        if let Some(v) = delta {
            e.add_term(v, 1.0);
        }
        lp.add_constraint(e, Relation::Le, lambda * g[i] - l_d[i])?;
    }
    if let Some(v) = delta {
        lp.add_constraint(LinExpr::var(v), Relation::Le, lambda * g.min())?;
        lp.set_objective(Direction::Maximize, LinExpr::var(v))?;
    }
    for i in 0..s {
        for k in 0..n {
            let mut e = LinExpr::new();
            for l in 0..s {
                e.add_term(lp.var(ps, i, l), f[(l, k)]);
            }
            for t in 0..t_len {
                e.add_term(lp.var(g1, t, k), -fx1[(i, t)]);
            }
            lp.add_constraint(e, Relation::Eq, 0.0)?;
        }
    }
    for r in 0..n + big_n {
        for c in 0..n {
            let mut e = LinExpr::new();
            for t in 0..t_len {
                e.add_term(lp.var(g1, t, c), data.v0[(r, t)]);
            }
            lp.add_constraint(e, Relation::Eq, if r == c { 1.0 } else { 0.0 })?;
        }
    }

    let out = lp.solve()?;
    match out.status {
        LpStatus::Optimal | LpStatus::Feasible => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible {
                phase1_residual: out.phase1_residual,
                context: format!("baseline, lambda = {lambda}"),
            })
        }
        LpStatus::Unbounded => return Err(Error::LpUnbounded),
    }
    let controller = Controller::from_right_inverse(data, out.block(g1), search.g2.clone());
    let ps_val = out.block(ps);
    let residuals = baseline_residuals(problem, &controller, &ps_val, l_d, lambda);
    if let Some((name, v)) = residuals.iter().find(|(_, &v)| v > TOL_CERT) {
        return Err(Error::CertificateRejected(format!(
            "baseline residual `{name}` = {v:.3e}"
        )));
    }
    Ok(BaselineResult {
        controller,
        l_d: l_d.clone(),
        ps: ps_val,
        lambda,
        slack: delta.map_or(0.0, |v| out.value(v)),
        residuals,
        search: search.clone(),
    })
}

/// Recomputes every baseline condition from raw matrices.
pub fn baseline_residuals(
    problem: &SynthesisProblem<'_>,
    controller: &Controller,
    ps: &Mat,
    l_d: &Vector,
    lambda: f64,
) -> BTreeMap<String, f64> {
    let data = problem.data;
    let f = problem.set.f();
    let g = problem.set.g();
    let (n, big_n) = (data.state_dim(), data.num_terms());
    let mut r = BTreeMap::new();
    let lhs = ps * g + l_d - g * lambda;
    r.insert("contraction".to_string(), lhs.max().max(0.0));
    r.insert(
        "linear_part".to_string(),
        linalg::max_abs(&(ps * f - f * &data.x1 * &controller.g1)),
    );
    r.insert(
        "right_inverse".to_string(),
        linalg::max_abs(&(&data.v0 * controller.g() - Mat::identity(n + big_n, n + big_n))),
    );
    r.insert("ps_nonneg".to_string(), (PS_FLOOR - ps.min()).max(0.0));
    r.insert(
        "gain_k1".to_string(),
        linalg::max_abs(&(&controller.k1 - &data.u0 * &controller.g1)),
    );
    r.insert(
        "gain_k2".to_string(),
        linalg::max_abs(&(&controller.k2 - &data.u0 * &controller.g2)),
    );
    r
}

pub fn synth_thm1_baseline(
    problem: &SynthesisProblem<'_>,
    opts: &BaselineOptions,
) -> Result<BaselineResult> {
    problem.check_dimensions()?;
    let search = baseline_search(problem, &opts.k2_grid, &opts.x_grid)?;
    solve_baseline_lp(problem, &search, opts.lambda, opts.objective)
}

/// Per-row bound on the lumped disturbance for a fixed controller:
///
/// ```text
/// max_x F_i X1 G2 Q(x) + T d_i (|G1| M_x + |G2| L M_x) + d_i
/// ```
///
/// with `d_i = h_w norm(F_i)` and matrix infinity norms. Report use only.
pub fn lumped_bound_evaluator(
    problem: &SynthesisProblem<'_>,
    controller: &Controller,
    budget: &DisturbanceBudget,
    x_grid: &[usize],
) -> Result<Vector> {
    let grid_max = inner_maxima(
        problem.data,
        problem.set,
        problem.dictionary,
        &controller.g2,
        x_grid,
    )?;
    let d = budget.row_norm.disturbance_terms(problem.set, budget.h_w);
    let leak = problem.data.samples() as f64
        * (linalg::inf_norm(&controller.g1) * budget.m_x
            + linalg::inf_norm(&controller.g2) * budget.lipschitz * budget.m_x);
    Ok(Vector::from_fn(grid_max.len(), |i, _| {
        grid_max[i] + d[i] * leak + d[i]
    }))
}
