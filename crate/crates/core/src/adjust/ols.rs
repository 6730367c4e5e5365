use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest admissible ratio of extreme singular values of `[1, X]`.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// `y ≈ intercept + coefficients · x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    /// Predictions for every row of `x`.
    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .enumerate()
                        .map(|(j, b)| b * x[(i, j)])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Ordinary least squares of `y` on `[1, x]` through a singular value decomposition.
pub fn fit_arm_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearModel> {
    let (n, k) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::LengthMismatch {
            what: "outcome",
            expected: n,
            got: y.len(),
        });
    }
    if n < k + 1 || n < 2 {
        return Err(Error::TooFewObservations {
            required: (k + 1).max(2),
            got: n,
        });
    }
    if y.iter().any(|v| v.is_nan()) || x.iter().any(|v| v.is_nan()) {
        return Err(Error::NotANumber("regression inputs"));
    }
    if k == 0 {
        return Ok(LinearModel {
            intercept: y.iter().sum::<f64>() / n as f64,
            coefficients: Vec::new(),
        });
    }

    let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let svd = design.svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if ratio.is_nan() || ratio <= RANK_TOLERANCE {
        return Err(Error::RankDeficient { ratio });
    }
    let beta = svd
        .solve(&DVector::from_column_slice(y), 0.0)
        .map_err(|e| Error::Data(e.to_string()))?;
    Ok(LinearModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}
