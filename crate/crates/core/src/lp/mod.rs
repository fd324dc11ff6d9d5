//! Dense linear programming with named variable blocks.
//!
//! Programs are assembled from matrix-shaped variable blocks and sparse
//! linear expressions, converted to standard form (free variables split,
//! slacks for inequalities, artificials for equalities) and solved by a
//! two-phase simplex using Bland's rule.

mod simplex;

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::polytope::PolyhedralSet;

use simplex::{SimplexResult, StandardForm};

/// Residual tolerance for reported solutions.
pub const TOL_LP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(usize);

#[derive(Debug, Clone)]
pub struct VarBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub nonneg: bool,
    offset: usize,
}

/// `sum(coef * var) + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    terms: Vec<(Var, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: Var) -> Self {
        Self {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, v: Var, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        if scale != 0.0 {
            self.terms
                .extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
            self.constant += other.constant * scale;
        }
        self
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::new();
        out.add_scaled(self, scale);
        out
    }

    /// Merges repeated variables and drops zero coefficients.
    pub fn compact(&mut self) {
        self.terms.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(Var, f64)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            match merged.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.terms = merged;
    }

    pub fn terms(&self) -> &[(Var, f64)] {
        &self.terms
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|&(v, c)| c * values[v.0])
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub expr: LinExpr,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    /// Amount by which the constraint is violated (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.expr.evaluate(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Feasible,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub status: LpStatus,
    values: Vec<f64>,
    pub objective: f64,
    pub max_residual: f64,
    /// Sum of artificials left after phase 1 (only meaningful when infeasible).
    pub phase1_residual: f64,
    blocks: Vec<VarBlock>,
}

impl LpOutcome {
    pub fn is_solution(&self) -> bool {
        matches!(self.status, LpStatus::Optimal | LpStatus::Feasible)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn block(&self, id: BlockId) -> Mat {
        let b = &self.blocks[id.0];
        Mat::from_fn(b.rows, b.cols, |i, j| {
            self.values[b.offset + i * b.cols + j]
        })
    }

    pub fn block_by_name(&self, name: &str) -> Result<Mat> {
        let idx = self
            .blocks
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))?;
        Ok(self.block(BlockId(idx)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    blocks: Vec<VarBlock>,
    n_vars: usize,
    constraints: Vec<Constraint>,
    objective: Option<(Direction, LinExpr)>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        nonneg: bool,
    ) -> Result<BlockId> {
        if self.blocks.iter().any(|b| b.name == name) {
            return Err(Error::MalformedProgram(format!(
                "block `{name}` declared twice"
            )));
        }
        let id = BlockId(self.blocks.len());
        self.blocks.push(VarBlock {
            name: name.to_string(),
            rows,
            cols,
            nonneg,
            offset: self.n_vars,
        });
        self.n_vars += rows * cols;
        Ok(id)
    }

    /// A 1x1 block; returns its variable.
    pub fn add_scalar(&mut self, name: &str, nonneg: bool) -> Result<Var> {
        let id = self.add_block(name, 1, 1, nonneg)?;
        Ok(self.var(id, 0, 0))
    }

    pub fn block_id(&self, name: &str) -> Result<BlockId> {
        self.blocks
            .iter()
            .position(|b| b.name == name)
            .map(BlockId)
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))
    }

    pub fn block_info(&self, id: BlockId) -> &VarBlock {
        &self.blocks[id.0]
    }

    /// Variable at `(i, j)` of a block. Panics on out-of-range indices.
    pub fn var(&self, id: BlockId, i: usize, j: usize) -> Var {
        let b = &self.blocks[id.0];
        assert!(
            i < b.rows && j < b.cols,
            "({i},{j}) outside block `{}` of shape {}x{}",
            b.name,
            b.rows,
            b.cols
        );
        Var(b.offset + i * b.cols + j)
    }

    /// Checked lookup by block name.
    pub fn var_named(&self, name: &str, i: usize, j: usize) -> Result<Var> {
        let id = self.block_id(name)?;
        let b = &self.blocks[id.0];
        if i >= b.rows || j >= b.cols {
            return Err(Error::MalformedProgram(format!(
                "entry ({i},{j}) outside block `{name}` of shape {}x{}",
                b.rows, b.cols
            )));
        }
        Ok(self.var(id, i, j))
    }

    pub fn num_vars(&self) -> usize {
        self.n_vars
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn add_constraint(
        &mut self,
        mut expr: LinExpr,
        relation: Relation,
        rhs: f64,
    ) -> Result<()> {
        if let Some(&(v, _)) = expr.terms.iter().find(|(v, _)| v.0 >= self.n_vars) {
            return Err(Error::MalformedProgram(format!(
                "variable index {} is not declared",
                v.0
            )));
        }
        if !rhs.is_finite() || expr.terms.iter().any(|(_, c)| !c.is_finite()) {
            return Err(Error::MalformedProgram("non-finite coefficient".into()));
        }
        expr.compact();
        self.constraints.push(Constraint {
            expr,
            relation,
            rhs,
        });
        Ok(())
    }

    pub fn set_objective(&mut self, direction: Direction, mut expr: LinExpr) -> Result<()> {
        if expr.terms.iter().any(|(v, _)| v.0 >= self.n_vars) {
            return Err(Error::MalformedProgram(
                "objective references undeclared variable".into(),
            ));
        }
        expr.compact();
        self.objective = Some((direction, expr));
        Ok(())
    }

    /// Adds `t >= e` and `t >= -e`, i.e. `|e| <= t`.
    pub fn add_abs_bound(&mut self, e: &LinExpr, t: Var) -> Result<()> {
        if t.0 >= self.n_vars {
            return Err(Error::MalformedProgram(format!(
                "bound variable {} is not declared",
                t.0
            )));
        }
        for sign in [1.0, -1.0] {
            let mut expr = LinExpr::var(t);
            expr.add_scaled(e, -sign);
            self.add_constraint(expr, Relation::Ge, 0.0)?;
        }
        Ok(())
    }

    fn is_nonneg(&self, v: usize) -> bool {
        self.blocks
            .iter()
            .find(|b| v >= b.offset && v < b.offset + b.rows * b.cols)
            .is_some_and(|b| b.nonneg)
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        // Column map: nonneg vars get one column, free vars a (pos, neg) pair.
        let mut col_of = Vec::with_capacity(self.n_vars);
        let mut n_struct = 0;
        for v in 0..self.n_vars {
            if self.is_nonneg(v) {
                col_of.push((n_struct, None));
                n_struct += 1;
            } else {
                col_of.push((n_struct, Some(n_struct + 1)));
                n_struct += 2;
            }
        }

        struct Row {
            coefs: Vec<(usize, f64)>,
            relation: Relation,
            rhs: f64,
        }
        let mut rows = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let mut rhs = c.rhs - c.expr.constant;
            let mut coefs = Vec::with_capacity(2 * c.expr.terms.len());
            for &(v, a) in &c.expr.terms {
                let (p, n) = col_of[v.0];
                coefs.push((p, a));
                if let Some(n) = n {
                    coefs.push((n, -a));
                }
            }
            if coefs.is_empty() {
                let ok = match c.relation {
                    Relation::Le => 0.0 <= rhs + TOL_LP,
                    Relation::Ge => 0.0 >= rhs - TOL_LP,
                    Relation::Eq => rhs.abs() <= TOL_LP,
                };
                if !ok {
                    return Ok(self.infeasible_outcome(rhs.abs()));
                }
                continue;
            }
            let scale = coefs.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs()));
            let mut relation = c.relation;
            for (_, a) in coefs.iter_mut() {
                *a /= scale;
            }
            rhs /= scale;
            if rhs < 0.0 {
                rhs = -rhs;
                for (_, a) in coefs.iter_mut() {
                    *a = -*a;
                }
                relation = match relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            rows.push(Row {
                coefs,
                relation,
                rhs,
            });
        }

        let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
        let cols = n_struct + n_slack;
        let m = rows.len();
        let mut a = vec![0.0; m * cols];
        let mut b = vec![0.0; m];
        let mut initial_basic = vec![None; m];
        let mut slack = n_struct;
        for (r, row) in rows.iter().enumerate() {
            for &(j, v) in &row.coefs {
                a[r * cols + j] += v;
            }
            b[r] = row.rhs;
            match row.relation {
                Relation::Le => {
                    a[r * cols + slack] = 1.0;
                    initial_basic[r] = Some(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    a[r * cols + slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
        }

        let mut c = vec![0.0; cols];
        let mut has_objective = false;
        if let Some((dir, expr)) = &self.objective {
            let sign = match dir {
                Direction::Minimize => 1.0,
                Direction::Maximize => -1.0,
            };
            for &(v, coef) in &expr.terms {
                has_objective = true;
                let (p, n) = col_of[v.0];
                c[p] += sign * coef;
                if let Some(n) = n {
                    c[n] -= sign * coef;
                }
            }
        }

        let sf = StandardForm {
            rows: m,
            cols,
            a,
            b,
            c,
            initial_basic,
        };
        match simplex::solve(&sf) {
            SimplexResult::Optimal { x } => {
                let values: Vec<f64> = col_of
                    .iter()
                    .map(|&(p, n)| x[p] - n.map_or(0.0, |n| x[n]))
                    .collect();
                let max_residual = self
                    .constraints
                    .iter()
                    .map(|c| c.violation(&values))
                    .fold(0.0, f64::max);
                let objective = self
                    .objective
                    .as_ref()
                    .map_or(0.0, |(_, e)| e.evaluate(&values));
                Ok(LpOutcome {
                    status: if has_objective {
                        LpStatus::Optimal
                    } else {
                        LpStatus::Feasible
                    },
                    values,
                    objective,
                    max_residual,
                    phase1_residual: 0.0,
                    blocks: self.blocks.clone(),
                })
            }
            SimplexResult::Infeasible { phase1_residual } => {
                Ok(self.infeasible_outcome(phase1_residual))
            }
            SimplexResult::Unbounded => Ok(LpOutcome {
                status: LpStatus::Unbounded,
                values: vec![0.0; self.n_vars],
                objective: match self.objective {
                    Some((Direction::Maximize, _)) => f64::INFINITY,
                    _ => f64::NEG_INFINITY,
                },
                max_residual: 0.0,
                phase1_residual: 0.0,
                blocks: self.blocks.clone(),
            }),
            SimplexResult::IterationLimit => Err(Error::MalformedProgram(
                "simplex pivot limit reached".into(),
            )),
        }
    }

    fn infeasible_outcome(&self, phase1_residual: f64) -> LpOutcome {
        LpOutcome {
            status: LpStatus::Infeasible,
            values: vec![0.0; self.n_vars],
            objective: f64::NAN,
            max_residual: f64::NAN,
            phase1_residual,
            blocks: self.blocks.clone(),
        }
    }

    /// Writes the program in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let name = |v: Var| -> String {
            let b = self
                .blocks
                .iter()
                .find(|b| v.0 >= b.offset && v.0 < b.offset + b.rows * b.cols)
                .expect("declared variable");
            let k = v.0 - b.offset;
            format!("{}_{}_{}", b.name, k / b.cols, k % b.cols)
        };
        let render = |e: &LinExpr| -> String {
            if e.terms.is_empty() {
                return "0 dummy_zero".to_string();
            }
            let mut s = String::new();
            for (k, &(v, c)) in e.terms.iter().enumerate() {
                let sign = if c < 0.0 {
                    "-"
                } else if k == 0 {
                    ""
                } else {
                    "+"
                };
                let _ = write!(
                    s,
                    "{}{} {:.17e} {}",
                    if k == 0 { "" } else { " " },
                    sign,
                    c.abs(),
                    name(v)
                );
            }
            s
        };
        let mut out = String::new();
        match &self.objective {
            Some((Direction::Maximize, e)) => {
                let _ = writeln!(out, "Maximize\n obj: {}", render(e));
            }
            Some((Direction::Minimize, e)) => {
                let _ = writeln!(out, "Minimize\n obj: {}", render(e));
            }
            None => out.push_str("Minimize\n obj: 0 dummy_zero\n"),
        }
        out.push_str("Subject To\n");
        for (k, c) in self.constraints.iter().enumerate() {
            let op = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(
                out,
                " c{k}: {} {op} {:.17e}",
                render(&c.expr),
                c.rhs - c.expr.constant
            );
        }
        out.push_str("Bounds\n dummy_zero = 0\n");
        for b in &self.blocks {
            if !b.nonneg {
                for k in 0..b.rows * b.cols {
                    let _ = writeln!(out, " {} free", name(Var(b.offset + k)));
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

fn polytope_program(row: &DVector<f64>, set: &PolyhedralSet) -> Result<(LinearProgram, BlockId)> {
    let n = set.dim();
    if row.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "row has length {}, set has dimension {n}",
            row.len()
        )));
    }
    let mut lp = LinearProgram::new();
    let x = lp.add_block("x", n, 1, false)?;
    let f = set.f();
    for i in 0..set.num_rows() {
        let mut e = LinExpr::new();
        for k in 0..n {
            e.add_term(lp.var(x, k, 0), f[(i, k)]);
        }
        lp.add_constraint(e, Relation::Le, set.g()[i])?;
    }
    let mut obj = LinExpr::new();
    for k in 0..n {
        obj.add_term(lp.var(x, k, 0), row[k]);
    }
    lp.set_objective(Direction::Maximize, obj)?;
    Ok((lp, x))
}

/// `max { row . x : F x <= g }` with its maximizer.
pub fn polytope_argmax(row: &DVector<f64>, set: &PolyhedralSet) -> Result<(f64, DVector<f64>)> {
    let (lp, x) = polytope_program(row, set)?;
    let out = lp.solve()?;
    match out.status {
        LpStatus::Optimal | LpStatus::Feasible => {
            let arg = out.block(x).column(0).into_owned();
            Ok((row.dot(&arg), arg))
        }
        LpStatus::Unbounded => {
            let coord = row.iamax();
            Err(Error::Unbounded { coord })
        }
        LpStatus::Infeasible => Err(Error::EmptySet),
    }
}

/// `max { row . x : F x <= g }`.
pub fn polytope_max(row: &DVector<f64>, set: &PolyhedralSet) -> Result<f64> {
    polytope_argmax(row, set).map(|(v, _)| v)
}

/// `min { alpha . g : F^T alpha = row, alpha >= 0 }`, the LP dual of [`polytope_max`].
pub fn polytope_dual_min(row: &DVector<f64>, set: &PolyhedralSet) -> Result<(f64, DVector<f64>)> {
    let n = set.dim();
    let s = set.num_rows();
    if row.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "row has length {}, set has dimension {n}",
            row.len()
        )));
    }
    let mut lp = LinearProgram::new();
    let alpha = lp.add_block("alpha", s, 1, true)?;
    for k in 0..n {
        let mut e = LinExpr::new();
        for l in 0..s {
            e.add_term(lp.var(alpha, l, 0), set.f()[(l, k)]);
        }
        lp.add_constraint(e, Relation::Eq, row[k])?;
    }
    let mut obj = LinExpr::new();
    for l in 0..s {
        obj.add_term(lp.var(alpha, l, 0), set.g()[l]);
    }
    lp.set_objective(Direction::Minimize, obj)?;
    let out = lp.solve()?;
    match out.status {
        LpStatus::Optimal | LpStatus::Feasible => {
            let a = out.block(alpha).column(0).into_owned();
            Ok((out.objective, a))
        }
        // An infeasible dual means the primal is unbounded along `row`.
        LpStatus::Infeasible => Err(Error::Unbounded { coord: row.iamax() }),
        LpStatus::Unbounded => Err(Error::EmptySet),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_lp() -> (LinearProgram, Var) {
        let mut lp = LinearProgram::new();
        let b = lp.add_block("x", 1, 1, false).unwrap();
        let x = lp.var(b, 0, 0);
        (lp, x)
    }

    #[test]
    fn maximize_bounded_scalar() {
        let (mut lp, x) = scalar_lp();
        lp.add_constraint(LinExpr::var(x), Relation::Le, 3.0)
            .unwrap();
        lp.add_constraint(LinExpr::var(x), Relation::Ge, 0.0)
            .unwrap();
        lp.set_objective(Direction::Maximize, LinExpr::var(x))
            .unwrap();
        let out = lp.solve().unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value(x) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let (mut lp, x) = scalar_lp();
        lp.add_constraint(LinExpr::var(x), Relation::Le, -1.0)
            .unwrap();
        lp.add_constraint(LinExpr::var(x), Relation::Ge, 0.0)
            .unwrap();
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_maximization() {
        let (mut lp, x) = scalar_lp();
        lp.add_constraint(LinExpr::var(x), Relation::Ge, 0.0)
            .unwrap();
        lp.set_objective(Direction::Maximize, LinExpr::var(x))
            .unwrap();
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn feasibility_only_reports_feasible() {
        let (mut lp, x) = scalar_lp();
        lp.add_constraint(LinExpr::var(x), Relation::Eq, -2.5)
            .unwrap();
        let out = lp.solve().unwrap();
        assert_eq!(out.status, LpStatus::Feasible);
        assert!((out.value(x) + 2.5).abs() < 1e-12);
    }

    fn abs_fixture(fixed: f64) -> f64 {
        let mut lp = LinearProgram::new();
        let e = lp.add_block("e", 1, 1, false).unwrap();
        let t = lp.add_block("t", 1, 1, true).unwrap();
        let (e, t) = (lp.var(e, 0, 0), lp.var(t, 0, 0));
        lp.add_constraint(LinExpr::var(e), Relation::Eq, fixed)
            .unwrap();
        lp.add_abs_bound(&LinExpr::var(e), t).unwrap();
        lp.set_objective(Direction::Minimize, LinExpr::var(t))
            .unwrap();
        lp.solve().unwrap().value(t)
    }

    #[test]
    fn abs_bound_tracks_positive_and_negative_values() {
        assert!((abs_fixture(2.0) - 2.0).abs() < 1e-12);
        assert!((abs_fixture(-5.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn abs_bounds_give_l1_budget() {
        // Maximize e0 - 2 e1 + 3 e2 with |e0| + |e1| + |e2| <= 1.5: the
        // budget goes to the largest weight, so the optimum is 4.5.
        let mut lp = LinearProgram::new();
        let e = lp.add_block("e", 3, 1, false).unwrap();
        let t = lp.add_block("t", 3, 1, true).unwrap();
        let mut budget = LinExpr::new();
        for k in 0..3 {
            lp.add_abs_bound(&LinExpr::var(lp.var(e, k, 0)), lp.var(t, k, 0))
                .unwrap();
            budget.add_term(lp.var(t, k, 0), 1.0);
        }
        lp.add_constraint(budget, Relation::Le, 1.5).unwrap();
        let mut obj = LinExpr::new();
        for (k, w) in [1.0, -2.0, 3.0].into_iter().enumerate() {
            obj.add_term(lp.var(e, k, 0), w);
        }
        lp.set_objective(Direction::Maximize, obj).unwrap();
        let out = lp.solve().unwrap();
        // Enumerating the 6 signed vertices of the l1 ball gives the same value.
        let brute = [1.0f64, -2.0, 3.0]
            .iter()
            .map(|w| 1.5 * w.abs())
            .fold(0.0, f64::max);
        assert!((out.objective - brute).abs() < 1e-9);
        let l1: f64 = (0..3).map(|k| out.value(lp.var(e, k, 0)).abs()).sum();
        assert!(l1 <= 1.5 + 1e-9);
    }

    #[test]
    fn undeclared_names_are_rejected() {
        let (mut lp, _) = scalar_lp();
        assert!(matches!(
            lp.var_named("nope", 0, 0),
            Err(Error::UnknownBlock(_))
        ));
        assert!(matches!(
            lp.add_abs_bound(&LinExpr::new(), Var(7)),
            Err(Error::MalformedProgram(_))
        ));
        assert!(matches!(
            lp.add_constraint(LinExpr::var(Var(3)), Relation::Le, 0.0),
            Err(Error::MalformedProgram(_))
        ));
    }

    #[test]
    fn lp_format_mentions_every_constraint() {
        let (mut lp, x) = scalar_lp();
        lp.add_constraint(LinExpr::var(x), Relation::Le, 3.0)
            .unwrap();
        lp.set_objective(Direction::Maximize, LinExpr::var(x))
            .unwrap();
        let text = lp.to_lp_format();
        assert!(text.starts_with("Maximize"));
        assert!(text.contains(" c0: "));
        assert!(text.contains("x_0_0 free"));
    }
}
