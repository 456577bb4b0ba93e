//! Ordinary least squares.
//!
//! The design is first reduced with a Householder QR; the small triangular
//! factor is then solved through its SVD, which yields the minimum-norm
//! solution whenever the design is rank deficient. Singular values below
//! `RANK_TOL` times the largest one count as zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    pub rank: usize,
    pub n_rows: usize,
}

impl LeastSquaresFit {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.coefficients.len()
    }
}

/// Minimizes `||x b - y||` over `b`.
pub fn least_squares(x: &DMatrix<f64>, y: &[f64]) -> Result<LeastSquaresFit> {
    let (n, p) = x.shape();
    if n == 0 {
        return Err(Error::NoRows);
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows, response has {}",
            y.len()
        )));
    }
    if p == 0 {
        return Ok(LeastSquaresFit {
            coefficients: Vec::new(),
            rank: 0,
            n_rows: n,
        });
    }

    let (core, rhs) = if n > p {
        let qr = x.clone().qr();
        let mut qty = DVector::from_column_slice(y);
        qr.q_tr_mul(&mut qty);
        (qr.r(), qty.rows(0, p).into_owned())
    } else {
        (x.clone(), DVector::from_column_slice(y))
    };

    let svd = core.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = RANK_TOL * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let b = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;

    Ok(LeastSquaresFit {
        coefficients: b.iter().copied().collect(),
        rank,
        n_rows: n,
    })
}
