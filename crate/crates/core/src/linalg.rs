//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular-value cutoff used for pseudo-inverses, relative to the largest singular value.
pub const PINV_RTOL: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse with singular values below `rtol * sigma_max` dropped.
pub fn pinv(m: &Mat, rtol: f64) -> Mat {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Mat::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = rtol * sigma_max;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut out = Mat::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (v_t.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// Numerical rank and the threshold used (`rtol * sigma_max`).
pub fn numerical_rank(m: &Mat, rtol: f64) -> (usize, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0, 0.0);
    }
    let sv = m.clone().singular_values();
    let threshold = rtol * sv.max();
    let rank = sv.iter().filter(|&&s| s > threshold && s > 0.0).count();
    (rank, threshold)
}

/// Induced infinity norm (maximum absolute row sum).
pub fn inf_norm(m: &Mat) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn vec_inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds a matrix from nested rows. All rows must share a length.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Smallest eigenvalue of a symmetric matrix.
///
/// Uses the characteristic polynomial in closed form for n <= 3 and cyclic
/// Jacobi rotations otherwise.
pub fn smallest_eigenvalue(sym: &Mat) -> f64 {
    let n = sym.nrows();
    assert_eq!(n, sym.ncols(), "smallest_eigenvalue needs a square matrix");
    match n {
        0 => f64::INFINITY,
        1 => sym[(0, 0)],
        2 => {
            let a = sym[(0, 0)];
            let d = sym[(1, 1)];
            let b = 0.5 * (sym[(0, 1)] + sym[(1, 0)]);
            let mean = 0.5 * (a + d);
            let half_gap = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            mean - half_gap
        }
        3 => smallest_eig_3(sym),
        _ => jacobi_eigenvalues(sym)
            .into_iter()
            .fold(f64::INFINITY, f64::min),
    }
}

fn smallest_eig_3(m: &Mat) -> f64 {
    let s = |i: usize, j: usize| 0.5 * (m[(i, j)] + m[(j, i)]);
    let p1 = s(0, 1).powi(2) + s(0, 2).powi(2) + s(1, 2).powi(2);
    if p1 == 0.0 {
        return s(0, 0).min(s(1, 1)).min(s(2, 2));
    }
    let q = (s(0, 0) + s(1, 1) + s(2, 2)) / 3.0;
    let p2 = (s(0, 0) - q).powi(2) + (s(1, 1) - q).powi(2) + (s(2, 2) - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    // B = (A - qI) / p, r = det(B) / 2
    let b = |i: usize, j: usize| (s(i, j) - if i == j { q } else { 0.0 }) / p;
    let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
        - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    // Eigenvalues are q + 2p cos(phi + 2k pi / 3); the smallest is k = 1.
    q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos()
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi sweeps.
pub fn jacobi_eigenvalues(sym: &Mat) -> Vec<f64> {
    let n = sym.nrows();
    let mut a = Mat::from_fn(n, n, |i, j| 0.5 * (sym[(i, j)] + sym[(j, i)]));
    let scale = max_abs(&a).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_min_eig(m: &Mat) -> f64 {
        m.clone().symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn pinv_of_identity_is_identity() {
        let i = Mat::identity(3, 3);
        assert!((pinv(&i, PINV_RTOL) - i).abs().max() < 1e-14);
    }

    #[test]
    fn pinv_of_rank_one_matrix() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let p = pinv(&m, PINV_RTOL);
        // m p m = m for any generalized inverse
        assert!((&m * &p * &m - &m).abs().max() < 1e-12);
        assert_eq!(numerical_rank(&m, 1e-8).0, 1);
    }

    #[test]
    fn rank_of_zero_matrix_is_zero() {
        assert_eq!(numerical_rank(&Mat::zeros(3, 5), 1e-8).0, 0);
    }

    #[test]
    fn inf_norm_is_max_row_sum() {
        let m = Mat::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.5]);
        assert_eq!(inf_norm(&m), 3.0);
    }

    #[test]
    fn diagonal_eigenvalues() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![3.0, -1.0, 2.0]));
        assert_eq!(smallest_eigenvalue(&m), -1.0);
    }

    proptest! {
        #[test]
        fn closed_form_matches_reference(n in 1usize..=5, entries in prop::collection::vec(-5.0f64..5.0, 25)) {
            let raw = Mat::from_fn(n, n, |i, j| entries[i * 5 + j]);
            let sym = (&raw + raw.transpose()) * 0.5;
            let got = smallest_eigenvalue(&sym);
            let want = reference_min_eig(&sym);
            prop_assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }
}
