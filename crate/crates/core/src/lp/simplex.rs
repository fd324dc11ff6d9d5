//! Dense two-phase tableau simplex.
//!
//! Pricing is Dantzig's most-negative reduced cost; after
//! [`DEGENERATE_STREAK`] consecutive degenerate pivots it falls back to
//! Bland's rule, which cannot cycle, until an improving pivot occurs.
//!
//! Works on a problem already in standard form: minimize `c x` subject to
//! `A x = b`, `x >= 0`, `b >= 0`, with an optional initial basic column per row
//! (a slack). Rows without one receive an artificial column for phase 1.

use nalgebra::DMatrix;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const PHASE1_TOL: f64 = 1e-8;
/// Primal feasibility slack of the Harris ratio test.
const HARRIS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;
const DEGENERATE_STREAK: usize = 1000;
/// Pivots between recomputations of the tableau from the original matrix.
const REINVERT_EVERY: usize = 100;
const SCALING_PASSES: usize = 4;

pub(crate) struct StandardForm {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Column that can start basic in each row (coefficient +1, zero elsewhere).
    pub initial_basic: Vec<Option<usize>>,
}

pub(crate) enum SimplexResult {
    Optimal { x: Vec<f64> },
    Infeasible { phase1_residual: f64 },
    Unbounded,
    IterationLimit,
}

struct Tableau {
    width: usize,
    /// `rows + 1` rows; the last holds reduced costs and `-objective` in the rhs slot.
    data: Vec<f64>,
    rows: usize,
    basis: Vec<usize>,
    /// Original row index of each tableau row.
    row_ids: Vec<usize>,
    forbidden: Vec<bool>,
    costs: Vec<f64>,
    pivots: usize,
    /// Original `[A | artificials | b]`, row-major with `width` columns.
    origin: Vec<f64>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, j: usize) -> f64 {
        self.data[r * self.width + j]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * self.width + self.width - 1]
    }

    fn obj_row(&self) -> usize {
        self.rows
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let w = self.width;
        let piv = self.data[p * w + q];
        {
            let row = &mut self.data[p * w..(p + 1) * w];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.data[p * w..(p + 1) * w].to_vec();
        let nz: Vec<usize> = (0..w).filter(|&j| pivot_row[j] != 0.0).collect();
        for r in 0..=self.rows {
            if r == p {
                continue;
            }
            let factor = self.data[r * w + q];
            if factor == 0.0 {
                continue;
            }
            let row = &mut self.data[r * w..(r + 1) * w];
            for &j in &nz {
                row[j] -= factor * pivot_row[j];
            }
            row[q] = 0.0;
        }
        self.basis[p] = q;
        self.pivots += 1;
        if self.pivots.is_multiple_of(REINVERT_EVERY) {
            self.reinvert();
        }
    }

    /// Rebuilds `B^-1 [A | b]` and the reduced costs from the original data.
    fn reinvert(&mut self) {
        let w = self.width;
        let k = self.rows;
        let mut bmat = DMatrix::zeros(k, k);
        let mut rest = DMatrix::zeros(k, w);
        for (r, &orig) in self.row_ids.iter().enumerate() {
            for (c, &j) in self.basis.iter().enumerate() {
                bmat[(r, c)] = self.origin[orig * w + j];
            }
            for j in 0..w {
                rest[(r, j)] = self.origin[orig * w + j];
            }
        }
        let Some(sol) = bmat.lu().solve(&rest) else {
            return;
        };
        if sol.iter().any(|v| !v.is_finite()) {
            return;
        }
        for r in 0..k {
            for j in 0..w {
                self.data[r * w + j] = sol[(r, j)];
            }
            self.data[r * w + self.basis[r]] = 1.0;
        }
        let costs = std::mem::take(&mut self.costs);
        self.set_costs(&costs);
    }

    fn entering(&self, skip: &[usize], bland: bool) -> Option<usize> {
        let obj = self.obj_row();
        let mut candidates = (0..self.width - 1)
            .filter(|&j| !self.forbidden[j] && !skip.contains(&j) && self.at(obj, j) < -COST_TOL);
        if bland {
            return candidates.next();
        }
        candidates.fold(None, |best: Option<usize>, j| match best {
            Some(b) if self.at(obj, b) <= self.at(obj, j) => Some(b),
            _ => Some(j),
        })
    }

    /// Bland's leaving rule: minimum ratio, ties to the lowest basic index.
    fn leaving_bland(&self, q: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, q);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(r).max(0.0) / a;
            best = match best {
                None => Some((r, ratio)),
                Some((br, bratio)) => {
                    let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                    if ratio < bratio && !tie || tie && self.basis[r] < self.basis[br] {
                        Some((r, ratio))
                    } else {
                        Some((br, bratio))
                    }
                }
            };
        }
        best.map(|(r, _)| r)
    }

    /// Harris two-pass test: the largest pivot among near-minimal ratios.
    fn leaving_harris(&self, q: usize) -> Option<usize> {
        let mut bound = f64::INFINITY;
        for r in 0..self.rows {
            let a = self.at(r, q);
            if a > PIVOT_TOL {
                bound = bound.min((self.rhs(r).max(0.0) + HARRIS_TOL) / a);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<usize> = None;
        for r in 0..self.rows {
            let a = self.at(r, q);
            if a > PIVOT_TOL
                && self.rhs(r).max(0.0) / a <= bound
                && best.is_none_or(|b| a > self.at(b, q))
            {
                best = Some(r);
            }
        }
        best
    }

    /// In phase 1 the objective is bounded below, so a column without a
    /// pivot is round-off and is skipped until the next pivot.
    fn run(&mut self, phase1: bool) -> Result<(), SimplexResult> {
        let mut skip = Vec::new();
        let mut degenerate = 0;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(SimplexResult::IterationLimit);
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let Some(q) = self.entering(&skip, bland) else {
                return Ok(());
            };
            let leave = if bland {
                self.leaving_bland(q)
            } else {
                self.leaving_harris(q)
            };
            match leave {
                Some(p) => {
                    if self.rhs(p) <= 1e-12 {
                        degenerate += 1;
                    } else {
                        degenerate = 0;
                    }
                    self.pivot(p, q);
                    skip.clear();
                }
                None if phase1 => skip.push(q),
                None => return Err(SimplexResult::Unbounded),
            }
        }
    }

    fn set_costs(&mut self, costs: &[f64]) {
        let w = self.width;
        let obj = self.obj_row();
        self.data[obj * w..obj * w + w - 1].copy_from_slice(&costs[..w - 1]);
        self.data[obj * w + w - 1] = 0.0;
        for r in 0..self.rows {
            let cb = costs[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for j in 0..w {
                let v = self.data[r * w + j];
                if v != 0.0 {
                    self.data[obj * w + j] -= cb * v;
                }
            }
        }
        self.costs = costs.to_vec();
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.width;
        self.data.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.row_ids.remove(r);
        self.rows -= 1;
    }
}

/// Alternating max-norm row and column equilibration. Returns the scaled
/// problem and the column factors: `x = col_scale * x_scaled`.
fn equilibrate(sf: &StandardForm) -> (StandardForm, Vec<f64>) {
    let (m, n) = (sf.rows, sf.cols);
    let mut a = sf.a.clone();
    let mut b = sf.b.clone();
    let mut col_scale = vec![1.0; n];
    // Columns holding an initial basic unit vector keep their scale.
    let mut pinned = vec![false; n];
    for j in sf.initial_basic.iter().flatten() {
        pinned[*j] = true;
    }
    for _ in 0..SCALING_PASSES {
        for j in (0..n).filter(|&j| !pinned[j]) {
            let mx = (0..m).fold(0.0f64, |acc, r| acc.max(a[r * n + j].abs()));
            if mx > 0.0 {
                for r in 0..m {
                    a[r * n + j] /= mx;
                }
                col_scale[j] /= mx;
            }
        }
        for r in 0..m {
            if sf.initial_basic[r].is_some() {
                continue;
            }
            let mx = a[r * n..(r + 1) * n]
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
            if mx > 0.0 {
                for v in &mut a[r * n..(r + 1) * n] {
                    *v /= mx;
                }
                b[r] /= mx;
            }
        }
    }
    let c = sf.c.iter().zip(&col_scale).map(|(c, s)| c * s).collect();
    (
        StandardForm {
            rows: m,
            cols: n,
            a,
            b,
            c,
            initial_basic: sf.initial_basic.clone(),
        },
        col_scale,
    )
}

pub(crate) fn solve(original: &StandardForm) -> SimplexResult {
    let (scaled, col_scale) = equilibrate(original);
    let sf = &scaled;
    let m = sf.rows;
    let n = sf.cols;
    let art_rows: Vec<usize> = (0..m).filter(|&r| sf.initial_basic[r].is_none()).collect();
    let n_art = art_rows.len();
    let width = n + n_art + 1;

    let mut data = vec![0.0; (m + 1) * width];
    let mut basis = vec![0; m];
    for r in 0..m {
        data[r * width..r * width + n].copy_from_slice(&sf.a[r * n..(r + 1) * n]);
        data[r * width + width - 1] = sf.b[r];
        if let Some(col) = sf.initial_basic[r] {
            basis[r] = col;
        }
    }
    for (k, &r) in art_rows.iter().enumerate() {
        data[r * width + n + k] = 1.0;
        basis[r] = n + k;
    }
    let origin = data[..m * width].to_vec();
    let mut t = Tableau {
        width,
        data,
        rows: m,
        basis,
        row_ids: (0..m).collect(),
        forbidden: vec![false; width - 1],
        costs: vec![0.0; width - 1],
        pivots: 0,
        origin,
    };

    if n_art > 0 {
        let mut phase1 = vec![0.0; width - 1];
        for c in phase1.iter_mut().skip(n) {
            *c = 1.0;
        }
        t.set_costs(&phase1);
        if let Err(e) = t.run(true) {
            return e;
        }
        t.reinvert();
        let residual = -t.rhs(t.obj_row());
        if residual > PHASE1_TOL {
            return SimplexResult::Infeasible {
                phase1_residual: residual,
            };
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < t.rows {
            if t.basis[r] >= n {
                let col = (0..n)
                    .filter(|&j| t.at(r, j).abs() > PIVOT_TOL)
                    .max_by(|&i, &j| t.at(r, i).abs().total_cmp(&t.at(r, j).abs()));
                match col {
                    Some(j) => {
                        t.pivot(r, j);
                        r += 1;
                    }
                    None => t.remove_row(r),
                }
            } else {
                r += 1;
            }
        }
        for f in t.forbidden.iter_mut().skip(n) {
            *f = true;
        }
    }

    let mut costs = sf.c.clone();
    costs.resize(width - 1, 0.0);
    t.set_costs(&costs);
    if let Err(e) = t.run(false) {
        return e;
    }
    t.reinvert();

    let mut x = vec![0.0; n];
    for r in 0..t.rows {
        let j = t.basis[r];
        if j < n {
            x[j] = t.rhs(r).max(0.0);
        }
    }
    if let Some(refined) = refine(sf, &t.basis[..t.rows]) {
        x = refined;
    }
    for (v, s) in x.iter_mut().zip(&col_scale) {
        *v *= s;
    }
    SimplexResult::Optimal { x }
}

/// Recomputes the basic solution from the original matrix to shed
/// round-off accumulated in the tableau.
fn refine(sf: &StandardForm, basis: &[usize]) -> Option<Vec<f64>> {
    let n = sf.cols;
    if basis.iter().any(|&j| j >= n) {
        return None;
    }
    let k = basis.len();
    // Remaining rows form a full-rank system; use least squares over all rows.
    let mut a = DMatrix::zeros(sf.rows, k);
    for r in 0..sf.rows {
        for (col, &j) in basis.iter().enumerate() {
            a[(r, col)] = sf.a[r * n + j];
        }
    }
    let b = nalgebra::DVector::from_column_slice(&sf.b);
    let sol = if k == sf.rows {
        a.clone().lu().solve(&b)?
    } else {
        a.clone().svd(true, true).solve(&b, 1e-13).ok()?
    };
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-7) {
        return None;
    }
    let mut x = vec![0.0; n];
    for (col, &j) in basis.iter().enumerate() {
        x[j] = sol[col].max(0.0);
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sf(
        rows: usize,
        cols: usize,
        a: &[f64],
        b: &[f64],
        c: &[f64],
        basic: Vec<Option<usize>>,
    ) -> StandardForm {
        StandardForm {
            rows,
            cols,
            a: a.to_vec(),
            b: b.to_vec(),
            c: c.to_vec(),
            initial_basic: basic,
        }
    }

    #[test]
    fn solves_small_program() {
        // min -x - y s.t. x + s1 = 2, y + s2 = 3
        let p = sf(
            2,
            4,
            &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            &[2.0, 3.0],
            &[-1.0, -1.0, 0.0, 0.0],
            vec![Some(2), Some(3)],
        );
        match solve(&p) {
            SimplexResult::Optimal { x } => {
                assert!((x[0] - 2.0).abs() < 1e-12);
                assert!((x[1] - 3.0).abs() < 1e-12);
            }
            _ => panic!("expected optimum"),
        }
    }

    #[test]
    fn detects_infeasible_equalities() {
        // x = 1 and x = 2
        let p = sf(2, 1, &[1.0, 1.0], &[1.0, 2.0], &[0.0], vec![None, None]);
        assert!(matches!(solve(&p), SimplexResult::Infeasible { .. }));
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        // x + y = 1 twice, minimize x
        let p = sf(
            2,
            2,
            &[1.0, 1.0, 1.0, 1.0],
            &[1.0, 1.0],
            &[1.0, 0.0],
            vec![None, None],
        );
        match solve(&p) {
            SimplexResult::Optimal { x } => {
                assert!(x[0].abs() < 1e-12);
                assert!((x[1] - 1.0).abs() < 1e-12);
            }
            _ => panic!("expected optimum"),
        }
    }
}
