//! Dictionary-based plant models.
//!
//! The dictionary `S(x)` is a list of terms that all vanish at the origin:
//! monomials of degree at least one, `sin(x_k)` and `cos(x_k) - 1`. Each
//! term has closed-form first and second derivatives, which makes the
//! expansion-point data and the interval Lipschitz bound exact.
//!
//! `A_s` is the state Jacobian of `S` at the origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::polytope::{IntervalBox, PolyhedralSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DictionaryTerm {
    Monomial { exponents: Vec<u32> },
    Sin { coord: usize },
    Cosm1 { coord: usize },
}

impl DictionaryTerm {
    pub fn monomial(exponents: &[u32]) -> Self {
        Self::Monomial {
            exponents: exponents.to_vec(),
        }
    }

    fn validate(&self, n: usize) -> std::result::Result<(), String> {
        match self {
            Self::Monomial { exponents } => {
                if exponents.len() != n {
                    return Err(format!(
                        "exponents has length {}, expected {n}",
                        exponents.len()
                    ));
                }
                if exponents.iter().sum::<u32>() == 0 {
                    return Err("monomial must have total degree >= 1".into());
                }
            }
            Self::Sin { coord } | Self::Cosm1 { coord } => {
                if *coord >= n {
                    return Err(format!("coord {coord} out of range for n = {n}"));
                }
            }
        }
        Ok(())
    }

    fn eval(&self, x: &Vector) -> f64 {
        match self {
            Self::Monomial { exponents } => exponents
                .iter()
                .enumerate()
                .map(|(k, &e)| x[k].powi(e as i32))
                .product(),
            Self::Sin { coord } => x[*coord].sin(),
            Self::Cosm1 { coord } => x[*coord].cos() - 1.0,
        }
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let n = x.len();
        match self {
            Self::Monomial { exponents } => Vector::from_fn(n, |k, _| {
                if exponents[k] == 0 {
                    return 0.0;
                }
                let mut p = exponents[k] as f64 * x[k].powi(exponents[k] as i32 - 1);
                for (j, &e) in exponents.iter().enumerate() {
                    if j != k {
                        p *= x[j].powi(e as i32);
                    }
                }
                p
            }),
            Self::Sin { coord } => {
                let mut g = Vector::zeros(n);
                g[*coord] = x[*coord].cos();
                g
            }
            Self::Cosm1 { coord } => {
                let mut g = Vector::zeros(n);
                g[*coord] = -x[*coord].sin();
                g
            }
        }
    }

    fn hessian(&self, x: &Vector) -> Mat {
        let n = x.len();
        match self {
            Self::Monomial { exponents } => Mat::from_fn(n, n, |a, b| {
                let mut e: Vec<i32> = exponents.iter().map(|&v| v as i32).collect();
                let mut coef = e[a] as f64;
                e[a] -= 1;
                coef *= e[b] as f64;
                e[b] -= 1;
                if coef == 0.0 {
                    return 0.0;
                }
                e.iter()
                    .enumerate()
                    .map(|(k, &p)| x[k].powi(p))
                    .product::<f64>()
                    * coef
            }),
            Self::Sin { coord } => {
                let mut h = Mat::zeros(n, n);
                h[(*coord, *coord)] = -x[*coord].sin();
                h
            }
            Self::Cosm1 { coord } => {
                let mut h = Mat::zeros(n, n);
                h[(*coord, *coord)] = -x[*coord].cos();
                h
            }
        }
    }

    /// Sound bounds on `|d/dx_k (term - A_s row)|` over a box with
    /// per-coordinate magnitude bound `radius`.
    fn remainder_gradient_bound(&self, radius: &Vector) -> Vector {
        let n = radius.len();
        match self {
            Self::Monomial { exponents } => {
                // Degree-one monomials are linear: their remainder is zero.
                if exponents.iter().sum::<u32>() == 1 {
                    return Vector::zeros(n);
                }
                Vector::from_fn(n, |k, _| {
                    if exponents[k] == 0 {
                        return 0.0;
                    }
                    let mut p = exponents[k] as f64 * radius[k].powi(exponents[k] as i32 - 1);
                    for (j, &e) in exponents.iter().enumerate() {
                        if j != k {
                            p *= radius[j].powi(e as i32);
                        }
                    }
                    p
                })
            }
            // d/dx (sin x - x) = cos x - 1, |.| <= 1 - cos(min(r, pi)).
            Self::Sin { coord } => {
                let mut b = Vector::zeros(n);
                let r = radius[*coord].min(std::f64::consts::PI);
                b[*coord] = 1.0 - r.cos();
                b
            }
            // d/dx (cos x - 1) = -sin x, |.| <= sin(min(r, pi/2)).
            Self::Cosm1 { coord } => {
                let mut b = Vector::zeros(n);
                let r = radius[*coord].min(std::f64::consts::FRAC_PI_2);
                b[*coord] = r.sin();
                b
            }
        }
    }
}

/// An ordered list of dictionary terms over `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    n: usize,
    terms: Vec<DictionaryTerm>,
    a_s: Mat,
}

impl Dictionary {
    pub fn new(n: usize, terms: Vec<DictionaryTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument(
                "dictionary needs at least one term".into(),
            ));
        }
        for (j, t) in terms.iter().enumerate() {
            t.validate(n)
                .map_err(|m| Error::validation(format!("dictionary[{j}]"), m))?;
        }
        let zero = Vector::zeros(n);
        let a_s = Mat::from_fn(terms.len(), n, |j, k| terms[j].gradient(&zero)[k]);
        Ok(Self { n, terms, a_s })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[DictionaryTerm] {
        &self.terms
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "state has dimension {}, dictionary expects {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn eval_s(&self, x: &Vector) -> Result<Vector> {
        self.check(x)?;
        Ok(Vector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|t| t.eval(x)),
        ))
    }

    pub fn jacobian_s(&self, x: &Vector) -> Result<Mat> {
        self.check(x)?;
        let mut j = Mat::zeros(self.terms.len(), self.n);
        for (r, t) in self.terms.iter().enumerate() {
            j.set_row(r, &t.gradient(x).transpose());
        }
        Ok(j)
    }

    pub fn hessians_s(&self, x: &Vector) -> Result<Vec<Mat>> {
        self.check(x)?;
        Ok(self.terms.iter().map(|t| t.hessian(x)).collect())
    }

    /// `A_s`, the Jacobian of `S` at the origin.
    pub fn linearization_matrix(&self) -> &Mat {
        &self.a_s
    }

    /// `Q(x) = S(x) - A_s x`.
    pub fn remainder_q(&self, x: &Vector) -> Result<Vector> {
        Ok(self.eval_s(x)? - &self.a_s * x)
    }

    pub(crate) fn remainder_unchecked(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.terms.len(), self.terms.iter().map(|t| t.eval(x)))
            - &self.a_s * x
    }

    /// Columnwise `Q` of a state matrix.
    pub fn remainder_columns(&self, xs: &Mat) -> Result<Mat> {
        let mut out = Mat::zeros(self.terms.len(), xs.ncols());
        for (c, col) in xs.column_iter().enumerate() {
            out.set_column(c, &self.remainder_q(&col.into_owned())?);
        }
        Ok(out)
    }

    /// Expansion-point data for the remainder at `x1`.
    pub fn expansion_point(&self, x1: &Vector, safe_set: &PolyhedralSet) -> Result<ExpansionPoint> {
        self.check(x1)?;
        if x1.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroExpansionPoint);
        }
        if !safe_set.contains(x1, 1.0)? {
            return Err(Error::OutsideSafeSet(x1.iter().copied().collect()));
        }
        let l1 = self.jacobian_s(x1)? - &self.a_s;
        // A_s x is linear, so the Hessians of Q equal those of S.
        let l2 = self.hessians_s(x1)?;
        let q1 = self.remainder_q(x1)?;
        let xbar = x1 + linalg::pinv(&l1, linalg::PINV_RTOL) * &q1;
        Ok(ExpansionPoint {
            x1: x1.clone(),
            l1,
            l2,
            q1,
            xbar,
        })
    }

    /// Upper bound on `sup ||dQ/dx||_inf` over the box, via interval bounds per entry.
    pub fn lipschitz_bound(&self, bounds: &IntervalBox) -> f64 {
        let radius = bounds.radius();
        self.terms
            .iter()
            .map(|t| t.remainder_gradient_bound(&radius).sum())
            .fold(0.0, f64::max)
    }
}

/// Remainder derivatives at a nonzero point of the safe set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionPoint {
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    pub x1: Vector,
    /// Jacobian of `Q` at `x1` (N x n).
    #[serde(serialize_with = "crate::scenario::ser_mat")]
    pub l1: Mat,
    /// Hessian of each `Q_j` at `x1` (N matrices, n x n).
    #[serde(serialize_with = "crate::scenario::ser_mats")]
    pub l2: Vec<Mat>,
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    pub q1: Vector,
    /// `x1 + pinv(L1) Q(x1)`.
    #[serde(serialize_with = "crate::scenario::ser_vec")]
    pub xbar: Vector,
}

/// State and remainder feedback gains: `u = K1 x + K2 Q(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGains {
    pub k1: Mat,
    pub k2: Mat,
}

impl FeedbackGains {
    pub fn zeros(m: usize, n: usize, big_n: usize) -> Self {
        Self {
            k1: Mat::zeros(m, n),
            k2: Mat::zeros(m, big_n),
        }
    }

    pub fn input(&self, dictionary: &Dictionary, x: &Vector) -> Vector {
        &self.k1 * x + &self.k2 * dictionary.remainder_unchecked(x)
    }
}

/// Ground-truth plant `x+ = A1 x + A2 S(x) + B u + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a1: Mat,
    pub a2: Mat,
    pub b: Mat,
    pub dictionary: Dictionary,
    pub h_w: f64,
}

impl PlantModel {
    pub fn new(a1: Mat, a2: Mat, b: Mat, dictionary: Dictionary, h_w: f64) -> Result<Self> {
        let n = dictionary.state_dim();
        let big_n = dictionary.len();
        if a1.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "A1 must be {n}x{n}, got {:?}",
                a1.shape()
            )));
        }
        if a2.shape() != (n, big_n) {
            return Err(Error::DimensionMismatch(format!(
                "A2 must be {n}x{big_n}, got {:?}",
                a2.shape()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {n}xm with m >= 1, got {:?}",
                b.shape()
            )));
        }
        if !(h_w >= 0.0) || !h_w.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "h_w = {h_w} must be non-negative"
            )));
        }
        Ok(Self {
            a1,
            a2,
            b,
            dictionary,
            h_w,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a1.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn num_terms(&self) -> usize {
        self.dictionary.len()
    }

    /// `A1 + A2 A_s`: the linear part seen by the remainder feedback.
    pub fn a1_bar(&self) -> Mat {
        &self.a1 + &self.a2 * self.dictionary.linearization_matrix()
    }

    /// Closed-loop `(A1_bar + B K1, A2 + B K2)`.
    pub fn closed_loop(&self, gains: &FeedbackGains) -> (Mat, Mat) {
        (
            self.a1_bar() + &self.b * &gains.k1,
            &self.a2 + &self.b * &gains.k2,
        )
    }

    pub fn step(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        let n = self.state_dim();
        if x.len() != n || w.len() != n || u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "step expects x, w in R^{n} and u in R^{}",
                self.input_dim()
            )));
        }
        let norm = linalg::vec_inf_norm(w);
        if norm > self.h_w {
            return Err(Error::DisturbanceOutOfBounds {
                norm,
                bound: self.h_w,
            });
        }
        Ok(self.step_unchecked(x, u, w))
    }

    pub(crate) fn step_unchecked(&self, x: &Vector, u: &Vector, w: &Vector) -> Vector {
        let s = Vector::from_iterator(
            self.dictionary.len(),
            self.dictionary.terms.iter().map(|t| t.eval(x)),
        );
        &self.a1 * x + &self.a2 * s + &self.b * u + w
    }

    /// Closed-loop rollout under `u = K1 x + K2 Q(x)`; one disturbance per step.
    pub fn simulate(
        &self,
        gains: &FeedbackGains,
        x0: &Vector,
        disturbances: &[Vector],
    ) -> Result<Trajectory> {
        if gains.k1.shape() != (self.input_dim(), self.state_dim())
            || gains.k2.shape() != (self.input_dim(), self.num_terms())
        {
            return Err(Error::DimensionMismatch(
                "controller gains do not match the plant".into(),
            ));
        }
        let mut states = Vec::with_capacity(disturbances.len() + 1);
        let mut inputs = Vec::with_capacity(disturbances.len());
        let mut x = x0.clone();
        for w in disturbances {
            let u = gains.input(&self.dictionary, &x);
            let next = self.step(&x, &u, w)?;
            states.push(std::mem::replace(&mut x, next));
            inputs.push(u);
        }
        states.push(x);
        Ok(Trajectory { states, inputs })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `horizon + 1` states.
    pub states: Vec<Vector>,
    /// `horizon` inputs.
    pub inputs: Vec<Vector>,
}

impl Trajectory {
    /// CSV with columns `t, x1..xn, u1..um`; the final row has empty inputs.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut out = String::from("t");
        for k in 1..=n {
            let _ = write!(out, ",x{k}");
        }
        for k in 1..=m {
            let _ = write!(out, ",u{k}");
        }
        out.push('\n');
        for (t, x) in self.states.iter().enumerate() {
            let _ = write!(out, "{t}");
            for v in x.iter() {
                let _ = write!(out, ",{}", crate::scenario::fmt_f64(*v));
            }
            match self.inputs.get(t) {
                Some(u) => {
                    for v in u.iter() {
                        let _ = write!(out, ",{}", crate::scenario::fmt_f64(*v));
                    }
                }
                None => out.push_str(&",".repeat(m)),
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn squares() -> Dictionary {
        Dictionary::new(
            2,
            vec![
                DictionaryTerm::monomial(&[2, 0]),
                DictionaryTerm::monomial(&[0, 2]),
            ],
        )
        .unwrap()
    }

    fn sec_v_plant() -> PlantModel {
        PlantModel::new(
            Mat::from_row_slice(2, 2, &[0.8, 0.5, -0.4, 1.2]),
            Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            squares(),
            0.05,
        )
        .unwrap()
    }

    fn sec_v_set() -> PolyhedralSet {
        PolyhedralSet::from_rows(
            &[
                vec![0.2, 0.4],
                vec![-0.2, -0.4],
                vec![-0.15, 0.2],
                vec![0.15, -0.2],
            ],
            &[1.0; 4],
        )
        .unwrap()
    }

    fn mixed() -> Dictionary {
        Dictionary::new(
            2,
            vec![
                DictionaryTerm::Sin { coord: 0 },
                DictionaryTerm::monomial(&[1, 1]),
                DictionaryTerm::Cosm1 { coord: 1 },
                DictionaryTerm::monomial(&[3, 1]),
                DictionaryTerm::monomial(&[0, 1]),
            ],
        )
        .unwrap()
    }

    fn fd_jacobian(d: &Dictionary, x: &Vector, h: f64) -> Mat {
        let mut j = Mat::zeros(d.len(), x.len());
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let col = (d.eval_s(&xp).unwrap() - d.eval_s(&xm).unwrap()) / (2.0 * h);
            j.set_column(k, &col);
        }
        j
    }

    fn fd_hessians(d: &Dictionary, x: &Vector, h: f64) -> Vec<Mat> {
        let n = x.len();
        let mut hs = vec![Mat::zeros(n, n); d.len()];
        for a in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[a] += h;
            xm[a] -= h;
            let diff = (d.jacobian_s(&xp).unwrap() - d.jacobian_s(&xm).unwrap()) / (2.0 * h);
            for (j, hj) in hs.iter_mut().enumerate() {
                for b in 0..n {
                    hj[(a, b)] = diff[(j, b)];
                }
            }
        }
        hs
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(squares().eval_s(&v(&[1.0, 2.0])).unwrap(), v(&[1.0, 4.0]));
        let d = Dictionary::new(
            2,
            vec![
                DictionaryTerm::Sin { coord: 0 },
                DictionaryTerm::monomial(&[1, 1]),
            ],
        )
        .unwrap();
        let j = d.jacobian_s(&v(&[0.0, 0.0])).unwrap();
        let fd = fd_jacobian(&d, &v(&[0.0, 0.0]), 1e-6);
        assert!((&j - &fd).amax() < 1e-8);
        assert_eq!(j, Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let single = Dictionary::new(2, vec![DictionaryTerm::monomial(&[2, 0])]).unwrap();
        for x in [v(&[0.3, -1.0]), v(&[5.0, 2.0])] {
            assert_eq!(
                single.hessians_s(&x).unwrap()[0],
                Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])
            );
        }
    }

    #[test]
    fn linearization_examples() {
        assert_eq!(squares().linearization_matrix(), &Mat::zeros(2, 2));
        let s = Dictionary::new(2, vec![DictionaryTerm::Sin { coord: 0 }]).unwrap();
        assert_eq!(
            s.linearization_matrix(),
            &Mat::from_row_slice(1, 2, &[1.0, 0.0])
        );
        let c = Dictionary::new(2, vec![DictionaryTerm::Cosm1 { coord: 1 }]).unwrap();
        assert_eq!(c.linearization_matrix(), &Mat::zeros(1, 2));
    }

    #[test]
    fn remainder_examples() {
        assert_eq!(
            squares().remainder_q(&v(&[1.0, 1.0])).unwrap(),
            v(&[1.0, 1.0])
        );
        let s = Dictionary::new(2, vec![DictionaryTerm::Sin { coord: 0 }]).unwrap();
        let q = s
            .remainder_q(&v(&[std::f64::consts::FRAC_PI_6, 0.0]))
            .unwrap();
        assert!((q[0] - (0.5 - std::f64::consts::FRAC_PI_6)).abs() < 1e-15);
        assert!((q[0] + 0.02360).abs() < 1e-5);
        assert_eq!(
            mixed().remainder_q(&v(&[0.0, 0.0])).unwrap(),
            Vector::zeros(5)
        );
    }

    #[test]
    fn expansion_point_examples() {
        let set = sec_v_set();
        let e = squares().expansion_point(&v(&[0.5, 0.5]), &set).unwrap();
        assert!((&e.l1 - Mat::identity(2, 2)).amax() < 1e-15);
        assert_eq!(e.l2[0], Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        assert_eq!(e.l2[1], Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]));
        assert!((&e.q1 - v(&[0.25, 0.25])).amax() < 1e-15);
        assert!((&e.xbar - v(&[0.75, 0.75])).amax() < 1e-12);
        let fd = fd_jacobian(&squares(), &v(&[0.5, 0.5]), 1e-6);
        assert!((&e.l1 - fd).amax() < 1e-8);

        assert_eq!(
            squares().expansion_point(&v(&[0.0, 0.0]), &set),
            Err(Error::ZeroExpansionPoint)
        );
        assert!(matches!(
            squares().expansion_point(&v(&[6.0, 3.0]), &set),
            Err(Error::OutsideSafeSet(_))
        ));

        let s = Dictionary::new(2, vec![DictionaryTerm::Sin { coord: 0 }]).unwrap();
        let e = s
            .expansion_point(&v(&[std::f64::consts::FRAC_PI_2, 0.0]), &set)
            .unwrap();
        assert!((e.l1[(0, 0)] + 1.0).abs() < 1e-15);
        assert_eq!(e.l1[(0, 1)], 0.0);
        let fd = fd_jacobian(&s, &v(&[std::f64::consts::FRAC_PI_2, 0.0]), 1e-6)
            - s.linearization_matrix();
        assert!((&e.l1 - fd).amax() < 1e-8);
    }

    #[test]
    fn lipschitz_examples() {
        let bounds = IntervalBox::new(v(&[-6.0, -3.5]), v(&[6.0, 3.5])).unwrap();
        assert_eq!(squares().lipschitz_bound(&bounds), 12.0);
        let s = Dictionary::new(2, vec![DictionaryTerm::Sin { coord: 0 }]).unwrap();
        assert!(s.lipschitz_bound(&bounds) <= 2.0);
        let linear = Dictionary::new(2, vec![DictionaryTerm::monomial(&[1, 0])]).unwrap();
        assert_eq!(linear.lipschitz_bound(&bounds), 0.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let d = mixed();
        let bounds = IntervalBox::new(v(&[-2.0, -1.5]), v(&[2.0, 1.5])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = v(&[rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5)]);
            let j = d.jacobian_s(&x).unwrap();
            let fd = fd_jacobian(&d, &x, 1e-5);
            assert!((&j - &fd).amax() <= 1e-6 * (1.0 + j.amax()));
            let hs = d.hessians_s(&x).unwrap();
            for (h, hf) in hs.iter().zip(fd_hessians(&d, &x, 1e-5)) {
                assert!((h - &hf).amax() <= 1e-6 * (1.0 + h.amax()));
                assert!((h - h.transpose()).amax() <= 1e-12);
            }
            assert!(bounds.contains(&x));
        }
    }

    #[test]
    fn remainder_is_lipschitz_on_random_pairs() {
        let d = mixed();
        let bounds = IntervalBox::new(v(&[-2.0, -1.5]), v(&[2.0, 1.5])).unwrap();
        let l = d.lipschitz_bound(&bounds);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20_000 {
            let x = v(&[rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5)]);
            let y = v(&[rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5)]);
            let lhs = (d.remainder_q(&x).unwrap() - d.remainder_q(&y).unwrap()).amax();
            assert!(lhs <= l * (&x - &y).amax() + 1e-12);
        }
    }

    #[test]
    fn step_examples() {
        let p = sec_v_plant();
        let next = p
            .step(&v(&[1.0, 0.0]), &v(&[0.0]), &v(&[0.0, 0.0]))
            .unwrap();
        assert!((next - v(&[0.8, 0.6])).amax() < 1e-15);
        assert_eq!(
            p.step(&v(&[0.0, 0.0]), &v(&[0.0]), &v(&[0.0, 0.0]))
                .unwrap(),
            v(&[0.0, 0.0])
        );
        assert!(matches!(
            p.step(&v(&[0.0, 0.0]), &v(&[0.0]), &v(&[0.06, 0.0])),
            Err(Error::DisturbanceOutOfBounds { .. })
        ));
    }

    #[test]
    fn controlled_step_matches_closed_loop_form() {
        let p = Dictionary::new(
            2,
            vec![
                DictionaryTerm::Sin { coord: 0 },
                DictionaryTerm::monomial(&[0, 2]),
            ],
        )
        .and_then(|d| {
            PlantModel::new(
                Mat::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.7]),
                Mat::from_row_slice(2, 2, &[0.3, -0.2, 0.5, 0.4]),
                Mat::from_row_slice(2, 1, &[0.0, 1.0]),
                d,
                0.1,
            )
        })
        .unwrap();
        let gains = FeedbackGains {
            k1: Mat::from_row_slice(1, 2, &[-0.3, 0.2]),
            k2: Mat::from_row_slice(1, 2, &[0.1, -0.4]),
        };
        let (acl1, acl2) = p.closed_loop(&gains);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = v(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let w = v(&[rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)]);
            let u = gains.input(&p.dictionary, &x);
            let direct = p.step(&x, &u, &w).unwrap();
            let via_cl = &acl1 * &x + &acl2 * p.dictionary.remainder_q(&x).unwrap() + &w;
            assert!((direct - via_cl).amax() < 1e-12);
        }
    }

    #[test]
    fn dictionary_validation() {
        assert!(Dictionary::new(2, vec![DictionaryTerm::monomial(&[2])]).is_err());
        assert!(Dictionary::new(2, vec![DictionaryTerm::monomial(&[0, 0])]).is_err());
        assert!(Dictionary::new(2, vec![DictionaryTerm::Sin { coord: 2 }]).is_err());
        assert!(Dictionary::new(2, vec![]).is_err());
    }

    #[test]
    fn term_json_shape() {
        let t: DictionaryTerm =
            serde_json::from_str(r#"{"kind":"monomial","exponents":[2,0]}"#).unwrap();
        assert_eq!(t, DictionaryTerm::monomial(&[2, 0]));
        let t: DictionaryTerm = serde_json::from_str(r#"{"kind":"cosm1","coord":1}"#).unwrap();
        assert_eq!(t, DictionaryTerm::Cosm1 { coord: 1 });
        assert!(serde_json::from_str::<DictionaryTerm>(r#"{"kind":"tanh","coord":1}"#).is_err());
    }
}
