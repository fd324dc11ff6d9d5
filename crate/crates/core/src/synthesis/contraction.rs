//! Contraction LPs with remainder multipliers.
//!
//! Decision blocks: `G1` (T x n), `G2` (T x N), `Ps >= 0` (s x s), `Px`
//! (s x n). Constraints, row by row of the safe set:
//!
//! ```text
//! Ps g + Px xbar (+ eta 1) (+ delta 1) <= lambda g
//! Ps F - F X1 G1 = Px
//! F X1 G2 L1     = Px
//! V0 [G1 G2]     = I
//! M_i = -sum_j (F X1 G2)_ij L2_j   strictly diagonally dominant
//! ```

use std::collections::BTreeMap;

use crate::dynamics::ExpansionPoint;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lp::{BlockId, Direction, LinExpr, LinearProgram, LpStatus, Relation, Var};

use super::{
    curvature_matrices, search, ContractionOptions, Controller, Definiteness, DisturbanceBudget,
    ExpansionChoice, Method, SynthesisCertificate, SynthesisProblem, EPS_ACT, PS_FLOOR, TOL_CERT,
};

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowMode {
    Free,
    /// Diagonally dominant with the given margin (0 allows the zero matrix).
    Dominant(f64),
    Zero,
}

struct Blocks {
    g1: BlockId,
    g2: BlockId,
    ps: BlockId,
    px: BlockId,
    delta: Option<Var>,
    eta: Option<Var>,
}

fn build(
    problem: &SynthesisProblem<'_>,
    expansion: &ExpansionPoint,
    opts: &ContractionOptions,
    modes: &[RowMode],
    budget: Option<&DisturbanceBudget>,
) -> Result<(LinearProgram, Blocks)> {
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

    let mut lp = LinearProgram::new();
    let g1 = lp.add_block("G1", t_len, n, false)?;
    let g2 = lp.add_block("G2", t_len, big_n, false)?;
    let ps = lp.add_block("Ps", s, s, true)?;
    let px = lp.add_block("Px", s, n, false)?;
    let delta = match opts.objective {
        super::Objective::Margin => Some(lp.add_scalar("delta", true)?),
        super::Objective::Feasible => None,
    };
    let eta = match budget {
        Some(_) => Some(lp.add_scalar("eta", true)?),
        None => None,
    };

    // Ps g + Px xbar + eta + delta <= lambda g
    for i in 0..s {
        let mut e = LinExpr::new();
        for l in 0..s {
            e.add_term(lp.var(ps, i, l), g[l]);
        }
        for k in 0..n {
            e.add_term(lp.var(px, i, k), expansion.xbar[k]);
        }
        if let Some(v) = eta {
            e.add_term(v, 1.0);
        }
        if let Some(v) = delta {
            e.add_term(v, 1.0);
        }
        lp.add_constraint(e, Relation::Le, opts.lambda * g[i])?;
    }
    if let Some(v) = delta {
        let cap = opts.lambda * g.min();
        lp.add_constraint(LinExpr::var(v), Relation::Le, cap)?;
    }

    // Ps F - F X1 G1 - Px = 0
    for i in 0..s {
        for k in 0..n {
            let mut e = LinExpr::new();
            for l in 0..s {
                e.add_term(lp.var(ps, i, l), f[(l, k)]);
            }
            for t in 0..t_len {
                e.add_term(lp.var(g1, t, k), -fx1[(i, t)]);
            }
            e.add_term(lp.var(px, i, k), -1.0);
            lp.add_constraint(e, Relation::Eq, 0.0)?;
        }
    }

    // C = F X1 G2 as expressions over G2.
    let coeff = |lp: &LinearProgram, i: usize, j: usize| {
        let mut e = LinExpr::new();
        for t in 0..t_len {
            e.add_term(lp.var(g2, t, j), fx1[(i, t)]);
        }
        e
    };

    // C L1 - Px = 0
    for i in 0..s {
        let c_row: Vec<LinExpr> = (0..big_n).map(|j| coeff(&lp, i, j)).collect();
        for k in 0..n {
            let mut e = LinExpr::new();
            for (j, cij) in c_row.iter().enumerate() {
                e.add_scaled(cij, expansion.l1[(j, k)]);
            }
            e.add_term(lp.var(px, i, k), -1.0);
            lp.add_constraint(e, Relation::Eq, 0.0)?;
        }
    }

    // V0 [G1 G2] = I
    for r in 0..n + big_n {
        for c in 0..n + big_n {
            let mut e = LinExpr::new();
            for t in 0..t_len {
                let v = if c < n {
                    lp.var(g1, t, c)
                } else {
                    lp.var(g2, t, c - n)
                };
                e.add_term(v, data.v0[(r, t)]);
            }
            lp.add_constraint(e, Relation::Eq, if r == c { 1.0 } else { 0.0 })?;
        }
    }

    // Curvature rows.
    for (i, mode) in modes.iter().enumerate() {
        if *mode == RowMode::Free {
            continue;
        }
        let c_row: Vec<LinExpr> = (0..big_n).map(|j| coeff(&lp, i, j)).collect();
        let entry = |a: usize, b: usize| {
            let mut e = LinExpr::new();
            for (j, cij) in c_row.iter().enumerate() {
                e.add_scaled(cij, -expansion.l2[j][(a, b)]);
            }
            e
        };
        match *mode {
            RowMode::Zero => {
                for a in 0..n {
                    for b in a..n {
                        lp.add_constraint(entry(a, b), Relation::Eq, 0.0)?;
                    }
                }
            }
            RowMode::Dominant(margin) => {
                let tau = if n > 1 {
                    Some(lp.add_block(&format!("dd_{i}"), n, n, true)?)
                } else {
                    None
                };
                if let Some(tau) = tau {
                    for a in 0..n {
                        for b in (a + 1)..n {
                            let t_ab = lp.var(tau, a, b);
                            lp.add_abs_bound(&entry(a, b), t_ab)?;
                        }
                    }
                }
                for a in 0..n {
                    let mut e = entry(a, a);
                    if let Some(tau) = tau {
                        for b in (0..n).filter(|&b| b != a) {
                            e.add_term(lp.var(tau, a.min(b), a.max(b)), -1.0);
                        }
                    }
                    lp.add_constraint(e, Relation::Ge, margin)?;
                }
            }
            RowMode::Free => unreachable!(),
        }
    }

    if let (Some(b), Some(eta)) = (budget, eta) {
        let g_m = b.g_m(set);
        let c = g_m * b.m_x * t_len as f64;
        let nu1 = lp.add_scalar("nu1", true)?;
        let nu2 = lp.add_scalar("nu2", true)?;
        for (block, cols, nu, name) in [(g1, n, nu1, "absG1"), (g2, big_n, nu2, "absG2")] {
            let abs = lp.add_block(name, t_len, cols, true)?;
            for t in 0..t_len {
                let mut row_sum = LinExpr::new();
                for k in 0..cols {
                    let a = lp.var(abs, t, k);
                    lp.add_abs_bound(&LinExpr::var(lp.var(block, t, k)), a)?;
                    row_sum.add_term(a, 1.0);
                }
                row_sum.add_term(nu, -1.0);
                lp.add_constraint(row_sum, Relation::Le, 0.0)?;
            }
        }
        // c nu1 + c L nu2 + c <= eta
        let mut e = LinExpr::new();
        e.add_term(nu1, c)
            .add_term(nu2, c * b.lipschitz)
            .add_term(eta, -1.0);
        lp.add_constraint(e, Relation::Le, -c)?;
    }

    if let Some(v) = delta {
        lp.set_objective(Direction::Maximize, LinExpr::var(v))?;
    }
    Ok((
        lp,
        Blocks {
            g1,
            g2,
            ps,
            px,
            delta,
            eta,
        },
    ))
}

struct Solved {
    controller: Controller,
    ps: Mat,
    px: Mat,
    slack: f64,
    eta: f64,
}

fn solve_once(
    problem: &SynthesisProblem<'_>,
    expansion: &ExpansionPoint,
    opts: &ContractionOptions,
    modes: &[RowMode],
    budget: Option<&DisturbanceBudget>,
) -> Result<Solved> {
    let (lp, b) = build(problem, expansion, opts, modes, budget)?;
    let out = lp.solve()?;
    match out.status {
        LpStatus::Optimal | LpStatus::Feasible => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible {
                phase1_residual: out.phase1_residual,
                context: format!("lambda = {}", opts.lambda),
            })
        }
        LpStatus::Unbounded => return Err(Error::LpUnbounded),
    }
    let controller = Controller::from_right_inverse(problem.data, out.block(b.g1), out.block(b.g2));
    Ok(Solved {
        controller,
        ps: out.block(b.ps),
        px: out.block(b.px),
        slack: b.delta.map_or(0.0, |v| out.value(v)),
        eta: b.eta.map_or(0.0, |v| out.value(v)),
    })
}

/// Solves the contraction LP at a fixed expansion point.
pub(super) fn solve_at(
    problem: &SynthesisProblem<'_>,
    expansion: &ExpansionPoint,
    opts: &ContractionOptions,
    budget: Option<&DisturbanceBudget>,
) -> Result<(Controller, SynthesisCertificate)> {
    if !(opts.lambda > 0.0 && opts.lambda <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {} must lie in (0, 1]",
            opts.lambda
        )));
    }
    if !(opts.eps_dd > 0.0) {
        return Err(Error::InvalidArgument("eps_dd must be positive".into()));
    }
    let s = problem.set.num_rows();
    let (solved, enforced) = match opts.definiteness {
        Definiteness::Off => (
            solve_once(problem, expansion, opts, &vec![RowMode::Free; s], budget)?,
            vec![false; s],
        ),
        Definiteness::Strict => (
            solve_once(
                problem,
                expansion,
                opts,
                &vec![RowMode::Dominant(opts.eps_dd); s],
                budget,
            )?,
            vec![true; s],
        ),
        Definiteness::ActiveRows => {
            // Probe with weak dominance; rows that come back with a nonzero
            // curvature matrix are made strict, the others pinned to zero.
            let probe = solve_once(
                problem,
                expansion,
                opts,
                &vec![RowMode::Dominant(0.0); s],
                budget,
            )?;
            let coeffs = problem.set.f() * &problem.data.x1 * &probe.controller.g2;
            let ms = curvature_matrices(&coeffs, &expansion.l2);
            let active: Vec<bool> = ms.iter().map(|m| linalg::max_abs(m) > EPS_ACT).collect();
            let modes: Vec<RowMode> = active
                .iter()
                .map(|&a| {
                    if a {
                        RowMode::Dominant(opts.eps_dd)
                    } else {
                        RowMode::Zero
                    }
                })
                .collect();
            (
                solve_once(problem, expansion, opts, &modes, budget)?,
                active,
            )
        }
    };
    let method = if budget.is_some() {
        Method::Cor2
    } else {
        Method::Thm2
    };
    let cert = certify(problem, expansion, opts, budget, method, &solved, enforced)?;
    Ok((solved.controller, cert))
}

fn certify(
    problem: &SynthesisProblem<'_>,
    expansion: &ExpansionPoint,
    opts: &ContractionOptions,
    budget: Option<&DisturbanceBudget>,
    method: Method,
    solved: &Solved,
    enforced: Vec<bool>,
) -> Result<SynthesisCertificate> {
    let data = problem.data;
    let set = problem.set;
    let f = set.f();
    let g = set.g();
    let c = &solved.controller;
    let (n, big_n) = (data.state_dim(), data.num_terms());
    let mut residuals = BTreeMap::new();

    let lhs = &solved.ps * g + &solved.px * &expansion.xbar;
    let contraction = (0..g.len())
        .map(|i| lhs[i] + solved.eta - opts.lambda * g[i])
        .fold(0.0, f64::max);
    residuals.insert("contraction".to_string(), contraction);
    residuals.insert(
        "linear_part".to_string(),
        linalg::max_abs(&(&solved.ps * f - f * &data.x1 * &c.g1 - &solved.px)),
    );
    let coeffs = f * &data.x1 * &c.g2;
    residuals.insert(
        "remainder_part".to_string(),
        linalg::max_abs(&(&coeffs * &expansion.l1 - &solved.px)),
    );
    residuals.insert(
        "right_inverse".to_string(),
        linalg::max_abs(&(&data.v0 * c.g() - Mat::identity(n + big_n, n + big_n))),
    );
    residuals.insert(
        "ps_nonneg".to_string(),
        (PS_FLOOR - solved.ps.min()).max(0.0),
    );
    residuals.insert(
        "gain_k1".to_string(),
        linalg::max_abs(&(&c.k1 - &data.u0 * &c.g1)),
    );
    residuals.insert(
        "gain_k2".to_string(),
        linalg::max_abs(&(&c.k2 - &data.u0 * &c.g2)),
    );
    let g_m = budget.map(|b| b.g_m(set));
    if let Some(b) = budget {
        let need = g_m.unwrap_or(0.0)
            * b.m_x
            * data.samples() as f64
            * (linalg::inf_norm(&c.g1) + b.lipschitz * linalg::inf_norm(&c.g2) + 1.0);
        residuals.insert("eta_bound".to_string(), (need - solved.eta).max(0.0));
    }

    let ms = curvature_matrices(&coeffs, &expansion.l2);
    let margins: Vec<f64> = ms.iter().map(linalg::smallest_eigenvalue).collect();
    if let Some((name, v)) = residuals.iter().find(|(_, &v)| v > TOL_CERT) {
        return Err(Error::CertificateRejected(format!(
            "residual `{name}` = {v:.3e} exceeds {TOL_CERT:.0e}"
        )));
    }
    for (i, (&on, &m)) in enforced.iter().zip(&margins).enumerate() {
        if on && m < opts.eps_dd / 2.0 {
            return Err(Error::CertificateRejected(format!(
                "row {i}: smallest eigenvalue {m:.3e} below eps_dd / 2"
            )));
        }
    }
    Ok(SynthesisCertificate {
        method,
        ps: solved.ps.clone(),
        px: solved.px.clone(),
        eta: solved.eta,
        lambda: opts.lambda,
        slack: solved.slack,
        expansion: expansion.clone(),
        residuals,
        definiteness_margins: margins,
        enforced_rows: enforced,
        eps_dd: opts.eps_dd,
        definiteness: opts.definiteness,
        budget: budget.copied(),
        g_m,
    })
}

fn synthesize(
    problem: &SynthesisProblem<'_>,
    opts: &ContractionOptions,
    x1: &ExpansionChoice,
    budget: Option<&DisturbanceBudget>,
) -> Result<(Controller, SynthesisCertificate)> {
    problem.check_dimensions()?;
    problem.require_v0_rank()?;
    match x1 {
        ExpansionChoice::Point(p) => {
            let e = problem.dictionary.expansion_point(p, problem.set)?;
            solve_at(problem, &e, opts, budget)
        }
        ExpansionChoice::Auto { seed } => search::search_expansion(problem, opts, budget, *seed),
    }
}

/// Noise-free contraction conditions.
pub fn synth_thm2(
    problem: &SynthesisProblem<'_>,
    opts: &ContractionOptions,
    x1: &ExpansionChoice,
) -> Result<(Controller, SynthesisCertificate)> {
    synthesize(problem, opts, x1, None)
}

/// Contraction conditions with the uniform disturbance slack `eta`.
pub fn synth_cor2(
    problem: &SynthesisProblem<'_>,
    opts: &ContractionOptions,
    x1: &ExpansionChoice,
    budget: &DisturbanceBudget,
) -> Result<(Controller, SynthesisCertificate)> {
    if !(budget.h_w >= 0.0 && budget.lipschitz >= 0.0 && budget.m_x >= 0.0) {
        return Err(Error::InvalidArgument(
            "h_w, L and M_x must be non-negative".into(),
        ));
    }
    synthesize(problem, opts, x1, Some(budget))
}
