//! Small dense matrix helpers used by the cycle algebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn det(x: &Mat) -> f64 {
    match x.nrows() {
        0 => 1.0,
        1 => x[(0, 0)],
        2 => x[(0, 0)] * x[(1, 1)] - x[(0, 1)] * x[(1, 0)],
        _ => x.clone().lu().determinant(),
    }
}

/// `x` with row `r` and column `c` removed.
pub fn minor(x: &Mat, r: usize, c: usize) -> Mat {
    x.clone().remove_row(r).remove_column(c)
}

/// Classical adjugate: transpose of the cofactor matrix. Defined for singular `x`.
pub fn adjugate(x: &Mat) -> Mat {
    let n = x.nrows();
    assert_eq!(n, x.ncols(), "adjugate needs a square matrix");
    if n == 1 {
        return Mat::from_element(1, 1, 1.0);
    }
    let mut adj = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(j, i)] = sign * det(&minor(x, i, j));
        }
    }
    adj
}

/// First row of `adj(x)`.
pub fn adjugate_first_row(x: &Mat) -> Vector {
    let n = x.nrows();
    if n == 1 {
        return Vector::from_element(1, 1.0);
    }
    Vector::from_fn(n, |j, _| {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sign * det(&minor(x, j, 0))
    })
}

/// Largest absolute entry.
pub fn max_norm(x: &Mat) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn vec_max_norm(x: &Vector) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Scale-aware singularity test: `|det| < tol * max(1, ||x||_max)^N`.
pub fn is_singular(x: &Mat, tol: f64) -> bool {
    det(x).abs() < tol * det_scale(x)
}

/// `max(1, ||x||_max)^N`, the normalizer used for determinant residuals.
pub fn det_scale(x: &Mat) -> f64 {
    max_norm(x).max(1.0).powi(x.nrows() as i32)
}

pub fn eigenvalues(x: &Mat) -> Vec<Complex64> {
    let n = x.nrows();
    let mut ev: Vec<Complex64> = match n {
        0 => Vec::new(),
        1 => vec![Complex64::new(x[(0, 0)], 0.0)],
        2 => {
            let tr = x[(0, 0)] + x[(1, 1)];
            let dt = det(x);
            let disc = Complex64::new(tr * tr / 4.0 - dt, 0.0).sqrt();
            let half = Complex64::new(tr / 2.0, 0.0);
            vec![half + disc, half - disc]
        }
        _ => x.complex_eigenvalues().iter().copied().collect(),
    };
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    ev
}

/// Unit vector spanning the (numerical) null space direction of a wide
/// `k x (k+1)` matrix, taken from the SVD of the matrix padded to square.
pub fn null_vector(j: &Mat) -> Vector {
    let (k, n) = j.shape();
    let mut padded = Mat::zeros(n.max(k), n);
    padded.view_mut((0, 0), (k, n)).copy_from(j);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("svd with v_t");
    let (idx, _) = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let row = v_t.row(idx).transpose();
    let nrm = row.norm();
    row / nrm
}

/// Solves `a x = b`; `None` when `a` is numerically singular.
pub fn solve(a: &Mat, b: &Vector) -> Option<Vector> {
    let lu = a.clone().lu();
    let x = lu.solve(b)?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
