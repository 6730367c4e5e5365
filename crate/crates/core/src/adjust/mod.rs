//! Average-treatment-effect point estimates and the arm-wise adjusted samples
//! that feed the variance estimators.

mod ols;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ols::{fit_arm_ols, LinearModel, RANK_TOLERANCE};

/// Observed outcomes, binary treatment and an `N × k` covariate matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    y_obs: Vec<f64>,
    z: Vec<bool>,
    x: DMatrix<f64>,
}

impl ExperimentData {
    pub fn new(y_obs: Vec<f64>, z: Vec<bool>, x: DMatrix<f64>) -> Result<Self> {
        let n = y_obs.len();
        if z.len() != n {
            return Err(Error::LengthMismatch {
                what: "treatment",
                expected: n,
                got: z.len(),
            });
        }
        if x.nrows() != n {
            return Err(Error::LengthMismatch {
                what: "covariate rows",
                expected: n,
                got: x.nrows(),
            });
        }
        if y_obs.iter().any(|v| v.is_nan()) {
            return Err(Error::NotANumber("outcomes"));
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::NotANumber("covariates"));
        }
        let treated = z.iter().filter(|&&t| t).count();
        check_arm("treated", treated)?;
        check_arm("control", n - treated)?;
        Ok(ExperimentData { y_obs, z, x })
    }

    /// Data without covariates.
    pub fn without_covariates(y_obs: Vec<f64>, z: Vec<bool>) -> Result<Self> {
        let n = y_obs.len();
        Self::new(y_obs, z, DMatrix::zeros(n, 0))
    }

    pub fn y_obs(&self) -> &[f64] {
        &self.y_obs
    }

    pub fn treatment(&self) -> &[bool] {
        &self.z
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.y_obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_obs.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_treated(&self) -> usize {
        self.z.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.len() - self.n_treated()
    }

    fn arm_outcomes(&self, treated: bool) -> Vec<f64> {
        self.y_obs
            .iter()
            .zip(&self.z)
            .filter(|(_, &t)| t == treated)
            .map(|(&y, _)| y)
            .collect()
    }

    pub fn treated_outcomes(&self) -> Vec<f64> {
        self.arm_outcomes(true)
    }

    pub fn control_outcomes(&self) -> Vec<f64> {
        self.arm_outcomes(false)
    }
}

fn check_arm(arm: &'static str, size: usize) -> Result<()> {
    if size < 2 {
        return Err(Error::ArmTooSmall {
            arm,
            size,
            required: 2,
        });
    }
    Ok(())
}

/// Sample-adjusted outcomes of the two arms plus the design quantities that
/// scale them in the variance formulas.
///
/// `n_t` and `n_tbar` are the design counts (arm sizes under complete
/// randomization, `π N` under Bernoulli assignment); the realized counts are the
/// lengths of the residual lists.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjustedSamples {
    eps1: Vec<f64>,
    eps0: Vec<f64>,
    n_t: f64,
    n_tbar: f64,
    population: usize,
}

impl AdjustedSamples {
    pub fn new(
        eps1: Vec<f64>,
        eps0: Vec<f64>,
        n_t: f64,
        n_tbar: f64,
        population: usize,
    ) -> Result<Self> {
        if eps1.is_empty() || eps0.is_empty() {
            return Err(Error::EmptySample);
        }
        if eps1.iter().chain(&eps0).any(|v| v.is_nan()) {
            return Err(Error::NotANumber("adjusted outcomes"));
        }
        if population < 2 {
            return Err(Error::InvalidParameter(format!(
                "population size {population} below 2"
            )));
        }
        for (name, v) in [("n_T", n_t), ("n_Tbar", n_tbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "design count {name} = {v} must be positive"
                )));
            }
        }
        let n = population as f64;
        if n_t + n_tbar > n * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "design counts {n_t} + {n_tbar} exceed population {population}"
            )));
        }
        if eps1.len() + eps0.len() > population {
            return Err(Error::InvalidParameter(format!(
                "{} adjusted outcomes exceed population {population}",
                eps1.len() + eps0.len()
            )));
        }
        Ok(AdjustedSamples {
            eps1,
            eps0,
            n_t,
            n_tbar,
            population,
        })
    }

    /// Same residuals with different design counts (e.g. `π N` under Bernoulli assignment).
    pub fn with_design_counts(self, n_t: f64, n_tbar: f64) -> Result<Self> {
        Self::new(self.eps1, self.eps0, n_t, n_tbar, self.population)
    }

    pub fn eps1(&self) -> &[f64] {
        &self.eps1
    }

    pub fn eps0(&self) -> &[f64] {
        &self.eps0
    }

    pub fn n_t(&self) -> f64 {
        self.n_t
    }

    pub fn n_tbar(&self) -> f64 {
        self.n_tbar
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn realized_nt(&self) -> usize {
        self.eps1.len()
    }

    pub fn realized_ntbar(&self) -> usize {
        self.eps0.len()
    }

    /// Mean squared adjusted outcome among selected treated units.
    pub fn a_hat(&self) -> f64 {
        mean_square(&self.eps1)
    }

    /// Mean squared adjusted outcome among selected control units.
    pub fn b_hat(&self) -> f64 {
        mean_square(&self.eps0)
    }
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Dim,
    Lin,
    Generic,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Dim => "dim",
            EstimatorKind::Lin => "lin",
            EstimatorKind::Generic => "generic",
        })
    }
}

/// Estimators selectable from configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dim,
    Lin,
}

impl Method {
    pub fn estimate(self, data: &ExperimentData) -> Result<(PointEstimate, AdjustedSamples)> {
        match self {
            Method::Dim => dim_estimate(data),
            Method::Lin => lin_estimate(data),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Dim => "dim",
            Method::Lin => "lin",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dim" => Ok(Method::Dim),
            "lin" => Ok(Method::Lin),
            other => Err(Error::InvalidParameter(format!(
                "unknown estimator `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEstimate {
    pub tau_hat: f64,
    pub kind: EstimatorKind,
}

/// Difference in arm means; adjusted samples are the arm-demeaned outcomes.
pub fn dim_estimate(data: &ExperimentData) -> Result<(PointEstimate, AdjustedSamples)> {
    let y1 = data.treated_outcomes();
    let y0 = data.control_outcomes();
    check_arm("treated", y1.len())?;
    check_arm("control", y0.len())?;
    let (m1, m0) = (mean(&y1), mean(&y0));
    let eps1: Vec<f64> = y1.iter().map(|y| y - m1).collect();
    let eps0: Vec<f64> = y0.iter().map(|y| y - m0).collect();
    let (n1, n0) = (eps1.len() as f64, eps0.len() as f64);
    let adj = AdjustedSamples::new(eps1, eps0, n1, n0, data.len())?;
    Ok((
        PointEstimate {
            tau_hat: m1 - m0,
            kind: EstimatorKind::Dim,
        },
        adj,
    ))
}

/// Fitted arm-wise models of Lin's interacted regression, on centered covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct LinFit {
    pub treated: LinearModel,
    pub control: LinearModel,
    pub covariate_means: Vec<f64>,
}

impl LinFit {
    /// Predictions `(f1(X_i), f0(X_i))` for every row of the raw (uncentered) covariates.
    pub fn predictions(&self, x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
        let centered = center_columns(x, &self.covariate_means);
        (
            self.treated.predict_rows(&centered),
            self.control.predict_rows(&centered),
        )
    }
}

fn center_columns(x: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j])
}

fn arm_rows(x: &DMatrix<f64>, z: &[bool], treated: bool) -> DMatrix<f64> {
    let rows: Vec<usize> = (0..z.len()).filter(|&i| z[i] == treated).collect();
    DMatrix::from_fn(rows.len(), x.ncols(), |r, j| x[(rows[r], j)])
}

/// Arm-wise least-squares fits on covariates centered at the full-sample mean.
pub fn lin_fit(data: &ExperimentData) -> Result<LinFit> {
    let x = data.covariates();
    let n = data.len() as f64;
    let means: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).sum() / n).collect();
    let xc = center_columns(x, &means);
    let z = data.treatment();
    let treated = fit_arm_ols(&arm_rows(&xc, z, true), &data.treated_outcomes())?;
    let control = fit_arm_ols(&arm_rows(&xc, z, false), &data.control_outcomes())?;
    Ok(LinFit {
        treated,
        control,
        covariate_means: means,
    })
}

/// Lin's fully interacted regression estimator.
///
/// Without covariates this is exactly [`dim_estimate`].
pub fn lin_estimate(data: &ExperimentData) -> Result<(PointEstimate, AdjustedSamples)> {
    if data.n_covariates() == 0 {
        return dim_estimate(data);
    }
    let fit = lin_fit(data)?;
    let (f1, f0) = fit.predictions(data.covariates());
    let mut eps1 = Vec::with_capacity(data.n_treated());
    let mut eps0 = Vec::with_capacity(data.n_control());
    for (i, (&y, &t)) in data.y_obs().iter().zip(data.treatment()).enumerate() {
        if t {
            eps1.push(y - f1[i]);
        } else {
            eps0.push(y - f0[i]);
        }
    }
    let (n1, n0) = (eps1.len() as f64, eps0.len() as f64);
    let adj = AdjustedSamples::new(eps1, eps0, n1, n0, data.len())?;
    Ok((
        PointEstimate {
            tau_hat: fit.treated.intercept - fit.control.intercept,
            kind: EstimatorKind::Lin,
        },
        adj,
    ))
}

/// Adjusted estimator with general sampling indicators and caller-supplied
/// outcome-model predictions:
///
/// `τ̂ = (1/n_T) Σ T_i (y_i − f1_i) − (1/n_T̄) Σ T̄_i (y_i − f0_i) + (1/N) Σ (f1_i − f0_i)`.
///
/// Indicators may only select observed potential outcomes (`T_i ≤ Z_i`,
/// `T̄_i ≤ 1 − Z_i`).
pub fn generic_adjusted_estimate(
    data: &ExperimentData,
    t: &[bool],
    tbar: &[bool],
    f1_pred: &[f64],
    f0_pred: &[f64],
    n_t: f64,
    n_tbar: f64,
) -> Result<(PointEstimate, AdjustedSamples)> {
    let n = data.len();
    for (what, len) in [
        ("T", t.len()),
        ("Tbar", tbar.len()),
        ("f1 predictions", f1_pred.len()),
        ("f0 predictions", f0_pred.len()),
    ] {
        if len != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                got: len,
            });
        }
    }
    if f1_pred.iter().chain(f0_pred).any(|v| v.is_nan()) {
        return Err(Error::NotANumber("predictions"));
    }
    let z = data.treatment();
    for i in 0..n {
        if (t[i] && !z[i]) || (tbar[i] && z[i]) {
            return Err(Error::UnobservedOutcome { index: i });
        }
    }
    let y = data.y_obs();
    let eps1: Vec<f64> = (0..n)
        .filter(|&i| t[i])
        .map(|i| y[i] - f1_pred[i])
        .collect();
    let eps0: Vec<f64> = (0..n)
        .filter(|&i| tbar[i])
        .map(|i| y[i] - f0_pred[i])
        .collect();
    if eps1.is_empty() || eps0.is_empty() {
        return Err(Error::EmptySample);
    }
    let adj = AdjustedSamples::new(eps1, eps0, n_t, n_tbar, n)?;
    let drift: f64 = f1_pred.iter().zip(f0_pred).map(|(a, b)| a - b).sum::<f64>() / n as f64;
    let tau_hat =
        adj.eps1.iter().sum::<f64>() / n_t - adj.eps0.iter().sum::<f64>() / n_tbar + drift;
    Ok((
        PointEstimate {
            tau_hat,
            kind: EstimatorKind::Generic,
        },
        adj,
    ))
}

/// Post-stratification covariates for stratum labels `1..=K`: column `j` is
/// `1{C_i = j} − π_j` for `j < K`, with `π_j` the sample share of stratum `j`.
pub fn encode_strata(categories: &[usize]) -> Result<DMatrix<f64>> {
    if categories.is_empty() {
        return Err(Error::EmptySample);
    }
    let k = *categories.iter().max().unwrap();
    if categories.contains(&0) {
        return Err(Error::InvalidParameter("stratum labels start at 1".into()));
    }
    if k < 2 {
        return Err(Error::InvalidParameter(
            "post-stratification needs at least two strata".into(),
        ));
    }
    let mut counts = vec![0usize; k];
    for &c in categories {
        counts[c - 1] += 1;
    }
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidParameter(format!(
            "stratum {} is empty",
            j + 1
        )));
    }
    let n = categories.len();
    let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(DMatrix::from_fn(n, k - 1, |i, j| {
        let indicator = if categories[i] == j + 1 { 1.0 } else { 0.0 };
        indicator - shares[j]
    }))
}

/// Maps arbitrary labels to `1..=K` in sorted label order.
pub fn label_strata<T: Ord + Clone>(labels: &[T]) -> Vec<usize> {
    let levels: BTreeMap<T, usize> = labels
        .iter()
        .cloned()
        .collect::<std::collections::BTreeSet<T>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i + 1))
        .collect();
    labels.iter().map(|l| levels[l]).collect()
}
