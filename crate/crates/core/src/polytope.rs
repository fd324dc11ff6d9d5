//! Polyhedral C-sets `{x : F x <= g}` and the geometric queries used by
//! synthesis and verification.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::lp;

/// Tolerance for membership, active-set and deduplication decisions.
pub const TOL_GEOM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralSet {
    f: Mat,
    g: Vector,
}

impl PolyhedralSet {
    /// Validates the C-set invariants: `g > 0` and no all-zero row in `F`.
    pub fn new(f: Mat, g: Vector) -> Result<Self> {
        if f.nrows() != g.len() {
            return Err(Error::DimensionMismatch(format!(
                "F has {} rows but g has {} entries",
                f.nrows(),
                g.len()
            )));
        }
        if f.nrows() == 0 || f.ncols() == 0 {
            return Err(Error::InvalidSet("F must be non-empty".into()));
        }
        if let Some(i) = g.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidSet(format!(
                "g[{i}] = {} must be strictly positive",
                g[i]
            )));
        }
        if let Some(i) = f.row_iter().position(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidSet(format!("row {i} of F is all zero")));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSet("F has non-finite entries".into()));
        }
        Ok(Self { f, g })
    }

    pub fn from_rows(f: &[Vec<f64>], g: &[f64]) -> Result<Self> {
        let f = crate::linalg::from_rows(f).ok_or_else(|| Error::InvalidSet("ragged F".into()))?;
        Self::new(f, DVector::from_column_slice(g))
    }

    pub fn f(&self) -> &Mat {
        &self.f
    }

    pub fn g(&self) -> &Vector {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.f.nrows()
    }

    /// The set with `g` replaced by `scale * g`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale {scale} must be positive"
            )));
        }
        Self::new(self.f.clone(), &self.g * scale)
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has dimension {}, set has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Whether `F x <= scale * g` holds row-wise within [`TOL_GEOM`].
    pub fn contains(&self, x: &Vector, scale: f64) -> Result<bool> {
        self.check_dim(x)?;
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "scale {scale} must lie in (0, 1]"
            )));
        }
        Ok(self.contains_unchecked(x, scale))
    }

    pub(crate) fn contains_unchecked(&self, x: &Vector, scale: f64) -> bool {
        (0..self.num_rows())
            .all(|i| self.f.row(i).dot(&x.transpose()) <= scale * self.g[i] + TOL_GEOM)
    }

    /// Largest row violation `max_i (F_i x - g_i)`; non-positive inside the set.
    pub fn max_violation(&self, x: &Vector) -> f64 {
        (0..self.num_rows())
            .map(|i| self.f.row(i).dot(&x.transpose()) - self.g[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Axis-aligned bounding box from 2n coordinate LPs.
    pub fn interval_enclosure(&self) -> Result<IntervalBox> {
        let n = self.dim();
        let mut lo = Vector::zeros(n);
        let mut hi = Vector::zeros(n);
        for k in 0..n {
            let mut e = Vector::zeros(n);
            e[k] = 1.0;
            hi[k] = lp::polytope_max(&e, self).map_err(|err| match err {
                Error::Unbounded { .. } => Error::Unbounded { coord: k },
                other => other,
            })?;
            e[k] = -1.0;
            lo[k] = -lp::polytope_max(&e, self).map_err(|err| match err {
                Error::Unbounded { .. } => Error::Unbounded { coord: k },
                other => other,
            })?;
        }
        IntervalBox::new(lo, hi)
    }

    /// All vertices, by solving every n-subset of rows (n <= 3).
    pub fn enumerate_vertices(&self) -> Result<Vec<Vector>> {
        let n = self.dim();
        if n > 3 {
            return Err(Error::DimensionTooLarge(n));
        }
        let s = self.num_rows();
        let mut vertices: Vec<Vector> = Vec::new();
        for subset in combinations(s, n) {
            let a = Mat::from_fn(n, n, |r, c| self.f[(subset[r], c)]);
            let b = Vector::from_fn(n, |r, _| self.g[subset[r]]);
            let lu = a.lu();
            // Skip near-singular row subsets.
            let det = lu.determinant();
            let scale: f64 = subset.iter().map(|&i| self.f.row(i).norm()).product();
            if det.abs() <= 1e-12 * scale {
                continue;
            }
            let Some(x) = lu.solve(&b) else { continue };
            if !self.contains_unchecked(&x, 1.0) {
                continue;
            }
            if vertices
                .iter()
                .all(|v| (v - &x).amax() > TOL_GEOM.max(1e-9 * (1.0 + x.amax())))
            {
                vertices.push(x);
            }
        }
        if vertices.is_empty() {
            return Err(Error::EmptySet);
        }
        Ok(vertices)
    }

    /// Number of rows active at `x` within [`TOL_GEOM`].
    pub fn active_rows(&self, x: &Vector) -> usize {
        (0..self.num_rows())
            .filter(|&i| {
                (self.f.row(i).dot(&x.transpose()) - self.g[i]).abs()
                    <= TOL_GEOM * (1.0 + self.g[i])
            })
            .count()
    }

    /// Uniform grid over the enclosure box, filtered to the set, in row-major order.
    pub fn sample_grid(&self, resolution: &[usize]) -> Result<GridSamples<'_>> {
        if resolution.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "resolution has {} entries, set has dimension {}",
                resolution.len(),
                self.dim()
            )));
        }
        if let Some(&r) = resolution.iter().find(|&&r| r < 2) {
            return Err(Error::InvalidArgument(format!(
                "grid resolution {r} must be at least 2"
            )));
        }
        let bounds = self.interval_enclosure()?;
        Ok(GridSamples::new(self, bounds, resolution.to_vec()))
    }

    /// Orders 2-D vertices counter-clockwise around their centroid.
    pub fn polygon(&self) -> Result<Vec<Vector>> {
        if self.dim() != 2 {
            return Err(Error::InvalidArgument(
                "polygon ordering needs n = 2".into(),
            ));
        }
        let mut vs = self.enumerate_vertices()?;
        let cx = vs.iter().map(|v| v[0]).sum::<f64>() / vs.len() as f64;
        let cy = vs.iter().map(|v| v[1]).sum::<f64>() / vs.len() as f64;
        vs.sort_by(|a, b| {
            let ta = (a[1] - cy).atan2(a[0] - cx);
            let tb = (b[1] - cy).atan2(b[0] - cx);
            ta.total_cmp(&tb)
        });
        Ok(vs)
    }
}

fn combinations(s: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, s: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..s {
            cur.push(i);
            rec(i + 1, s, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, s, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Axis-aligned interval box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalBox {
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    lo: Vector,
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    hi: Vector,
}

impl IntervalBox {
    pub fn new(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(
                "box bounds differ in length".into(),
            ));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("box requires lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// `max(||lo||_inf, ||hi||_inf)`: a bound on `||x||_inf` over the box.
    pub fn m_x(&self) -> f64 {
        self.lo.amax().max(self.hi.amax())
    }

    /// Per-coordinate magnitude bound `max(|lo_k|, |hi_k|)`.
    pub fn radius(&self) -> Vector {
        Vector::from_fn(self.dim(), |k, _| self.lo[k].abs().max(self.hi[k].abs()))
    }

    pub fn contains(&self, x: &Vector) -> bool {
        (0..self.dim()).all(|k| x[k] >= self.lo[k] - TOL_GEOM && x[k] <= self.hi[k] + TOL_GEOM)
    }

    /// The box scaled about the origin.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lo: &self.lo * factor,
            hi: &self.hi * factor,
        }
    }

    /// Euclidean diagonal of one grid cell at the given resolution.
    pub fn cell_diagonal(&self, resolution: &[usize]) -> f64 {
        (0..self.dim())
            .map(|k| {
                let h = (self.hi[k] - self.lo[k]) / (resolution[k] - 1) as f64;
                h * h
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Iterator over grid points inside a set. The last coordinate varies fastest.
pub struct GridSamples<'a> {
    set: &'a PolyhedralSet,
    bounds: IntervalBox,
    resolution: Vec<usize>,
    index: Vec<usize>,
    done: bool,
}

impl<'a> GridSamples<'a> {
    fn new(set: &'a PolyhedralSet, bounds: IntervalBox, resolution: Vec<usize>) -> Self {
        let n = resolution.len();
        Self {
            set,
            bounds,
            resolution,
            index: vec![0; n],
            done: false,
        }
    }

    pub fn bounds(&self) -> &IntervalBox {
        &self.bounds
    }

    fn point(&self) -> Vector {
        Vector::from_fn(self.index.len(), |k, _| {
            let t = self.index[k] as f64 / (self.resolution[k] - 1) as f64;
            if self.index[k] + 1 == self.resolution[k] {
                self.bounds.hi[k]
            } else {
                self.bounds.lo[k] + t * (self.bounds.hi[k] - self.bounds.lo[k])
            }
        })
    }

    fn advance(&mut self) {
        for k in (0..self.index.len()).rev() {
            self.index[k] += 1;
            if self.index[k] < self.resolution[k] {
                return;
            }
            self.index[k] = 0;
        }
        self.done = true;
    }
}

impl Iterator for GridSamples<'_> {
    type Item = Vector;

    fn next(&mut self) -> Option<Vector> {
        while !self.done {
            let p = self.point();
            self.advance();
            if self.set.contains_unchecked(&p, 1.0) {
                return Some(p);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sec_v_set() -> PolyhedralSet {
        PolyhedralSet::from_rows(
            &[
                vec![0.2, 0.4],
                vec![-0.2, -0.4],
                vec![-0.15, 0.2],
                vec![0.15, -0.2],
            ],
            &[1.0, 1.0, 1.0, 1.0],
        )
        .unwrap()
    }

    fn unit_box() -> PolyhedralSet {
        PolyhedralSet::from_rows(
            &[
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
            ],
            &[1.0; 4],
        )
        .unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    /// Brute-force vertex oracle: every pair of rows, solved by Cramer's rule.
    fn row_pair_vertices(set: &PolyhedralSet) -> Vec<Vector> {
        let f = set.f();
        let g = set.g();
        let mut out: Vec<Vector> = Vec::new();
        for i in 0..set.num_rows() {
            for j in (i + 1)..set.num_rows() {
                let det = f[(i, 0)] * f[(j, 1)] - f[(i, 1)] * f[(j, 0)];
                if det.abs() < 1e-14 {
                    continue;
                }
                let x = (g[i] * f[(j, 1)] - f[(i, 1)] * g[j]) / det;
                let y = (f[(i, 0)] * g[j] - g[i] * f[(j, 0)]) / det;
                let p = v(&[x, y]);
                if set.max_violation(&p) <= 1e-12 && out.iter().all(|q| (q - &p).amax() > 1e-9) {
                    out.push(p);
                }
            }
        }
        out
    }

    fn same_points(a: &[Vector], b: &[Vector]) -> bool {
        a.len() == b.len() && a.iter().all(|p| b.iter().any(|q| (p - q).amax() < 1e-9))
    }

    #[test]
    fn rejects_non_positive_offsets_and_zero_rows() {
        assert!(matches!(
            PolyhedralSet::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]], &[1.0, 0.0]),
            Err(Error::InvalidSet(_))
        ));
        assert!(matches!(
            PolyhedralSet::from_rows(&[vec![0.0, 0.0], vec![-1.0, 0.0]], &[1.0, 1.0]),
            Err(Error::InvalidSet(_))
        ));
    }

    #[test]
    fn membership_examples() {
        let p = sec_v_set();
        assert!(p.contains(&v(&[0.0, 0.0]), 1.0).unwrap());
        assert!(p.contains(&v(&[6.0, -0.5]), 1.0).unwrap());
        assert!(!p.contains(&v(&[6.0, -0.5]), 0.95).unwrap());
        assert!(matches!(
            p.contains(&v(&[0.0]), 1.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn enclosure_examples() {
        let b = sec_v_set().interval_enclosure().unwrap();
        assert!((b.lo() - v(&[-6.0, -3.5])).amax() < 1e-9);
        assert!((b.hi() - v(&[6.0, 3.5])).amax() < 1e-9);
        assert!((b.m_x() - 6.0).abs() < 1e-9);

        let u = unit_box().interval_enclosure().unwrap();
        assert!((u.lo() - v(&[-1.0, -1.0])).amax() < 1e-12);
        assert!((u.hi() - v(&[1.0, 1.0])).amax() < 1e-12);

        let half = PolyhedralSet::from_rows(&[vec![1.0, 0.0]], &[1.0]).unwrap();
        assert!(matches!(
            half.interval_enclosure(),
            Err(Error::Unbounded { .. })
        ));
    }

    #[test]
    fn vertex_examples_match_row_pair_oracle() {
        let p = sec_v_set();
        let got = p.enumerate_vertices().unwrap();
        let oracle = row_pair_vertices(&p);
        let listed = [
            v(&[-2.0, 3.5]),
            v(&[6.0, -0.5]),
            v(&[-6.0, 0.5]),
            v(&[2.0, -3.5]),
        ];
        assert!(same_points(&got, &oracle));
        assert!(same_points(&got, &listed));

        let corners = [
            v(&[1.0, 1.0]),
            v(&[1.0, -1.0]),
            v(&[-1.0, 1.0]),
            v(&[-1.0, -1.0]),
        ];
        assert!(same_points(
            &unit_box().enumerate_vertices().unwrap(),
            &corners
        ));

        let redundant = PolyhedralSet::from_rows(
            &[
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
                vec![1.0, 1.0],
            ],
            &[1.0, 1.0, 1.0, 1.0, 10.0],
        )
        .unwrap();
        let got = redundant.enumerate_vertices().unwrap();
        assert!(same_points(&got, &row_pair_vertices(&redundant)));
        assert!(same_points(&got, &corners));
    }

    #[test]
    fn vertices_are_active_and_inside_enclosure() {
        let p = sec_v_set();
        let b = p.interval_enclosure().unwrap();
        for vert in p.enumerate_vertices().unwrap() {
            assert!(p.contains(&vert, 1.0).unwrap());
            assert!(p.active_rows(&vert) >= 2);
            assert!(b.contains(&vert));
        }
    }

    #[test]
    fn large_dimension_is_rejected() {
        let f = Mat::identity(4, 4);
        let p = PolyhedralSet::new(f, Vector::from_element(4, 1.0)).unwrap();
        assert_eq!(p.enumerate_vertices(), Err(Error::DimensionTooLarge(4)));
    }

    #[test]
    fn grid_examples() {
        let pts: Vec<_> = unit_box().sample_grid(&[3, 3]).unwrap().collect();
        assert_eq!(pts.len(), 9);
        assert!(pts.iter().any(|p| p.amax() < 1e-15));
        for c in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
            assert!(pts.iter().any(|p| (p - v(&c)).amax() < 1e-15));
        }
        // Row-major: first point is the lower-left corner, second moves along x2.
        assert_eq!(pts[0], v(&[-1.0, -1.0]));
        assert_eq!(pts[1], v(&[-1.0, 0.0]));

        let p = sec_v_set();
        let mut count = 0;
        for x in p.sample_grid(&[201, 201]).unwrap() {
            assert!(p.max_violation(&x) <= TOL_GEOM);
            count += 1;
        }
        assert!(count > 1000);

        assert!(matches!(
            unit_box().sample_grid(&[1, 3]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn scaled_membership_equivalence() {
        let p = sec_v_set();
        let scaled = p.scaled(0.9).unwrap();
        for x in p.sample_grid(&[41, 41]).unwrap() {
            assert_eq!(
                p.contains(&x, 0.9).unwrap(),
                scaled.contains(&x, 1.0).unwrap()
            );
        }
    }
}
