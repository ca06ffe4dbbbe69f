//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative tolerance on pivoted-QR diagonal entries when counting rank.
pub const RANK_TOL: f64 = 1e-10;

/// Numerical rank from a column-pivoted QR decomposition.
pub fn numerical_rank(x: &DMatrix<f64>) -> usize {
    if x.ncols() == 0 || x.nrows() == 0 {
        return 0;
    }
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let lead = diag.iter().cloned().fold(0.0, f64::max);
    if lead == 0.0 {
        return 0;
    }
    diag.iter().filter(|v| **v > RANK_TOL * lead).count()
}

pub fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let columns = x.ncols();
    if columns > x.nrows() {
        return Err(Error::SingularDesign {
            rank: numerical_rank(x),
            columns,
        });
    }
    let rank = numerical_rank(x);
    if rank < columns {
        return Err(Error::SingularDesign { rank, columns });
    }
    Ok(())
}

/// `Xᵀ diag(w) X`.
pub fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let p = x.ncols();
    let mut g = DMatrix::zeros(p, p);
    for (i, wi) in w.iter().enumerate() {
        for a in 0..p {
            let xa = x[(i, a)] * wi;
            if xa == 0.0 {
                continue;
            }
            for b in a..p {
                g[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// `Xᵀ diag(w) v`.
pub fn weighted_cross(x: &DMatrix<f64>, w: &[f64], v: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(x.ncols());
    for i in 0..x.nrows() {
        let s = w[i] * v[i];
        for a in 0..x.ncols() {
            out[a] += x[(i, a)] * s;
        }
    }
    out
}

/// Cholesky factor of a symmetric positive-definite matrix; failure is a
/// singular design.
pub fn spd_factor(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    Cholesky::new(m).ok_or(Error::SingularDesign { rank: 0, columns: n })
}

/// `x_iᵀ M⁻¹ x_i` for every row of `x`, given the factor of `M`.
pub fn row_quadratic_forms(x: &DMatrix<f64>, factor: &Cholesky<f64, Dyn>) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            let xi = x.row(i).transpose();
            let sol = factor.solve(&xi);
            xi.dot(&sol)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_duplicated_column() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&x), 1);
        assert!(matches!(
            check_full_rank(&x),
            Err(Error::SingularDesign { rank: 1, columns: 2 })
        ));
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        assert!(check_full_rank(&y).is_ok());
    }

    #[test]
    fn gram_matches_dense_product() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, -1.0, 1.0, 0.5]);
        let w = [0.5, 2.0, 1.0];
        let dense = x.transpose() * DMatrix::from_diagonal(&DVector::from_row_slice(&w)) * &x;
        assert!((weighted_gram(&x, &w) - dense).norm() < 1e-14);
    }
}
