//! Variance estimators for adjusted treatment-effect estimators.
//!
//! All three upper bounds share the identified part
//! `((N − n_T)/n_T) Â + ((N − n_T̄)/n_T̄) B̂` and differ only in how they bound the
//! unidentified cross-term between treated and control adjusted outcomes:
//!
//! | estimator       | cross-term used                    |
//! |-----------------|------------------------------------|
//! | conventional    | `Â + B̂` (AM-GM)                    |
//! | Cauchy–Schwarz  | `2 √(Â B̂)`                         |
//! | sharp upper     | `2 E[ε₁ ε₀]` under the comonotone coupling |
//! | sharp lower     | `2 E[ε₁ ε₀]` under the countermonotone coupling |
//!
//! `Â`, `B̂` are arm means of squared adjusted outcomes; the marginals for the
//! couplings are the arm-wise empirical distributions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::adjust::AdjustedSamples;
use crate::empirical::{comonotone_cross_moment, countermonotone_cross_moment, Ecdf};
use crate::error::{Error, Result};

fn identified_part(adj: &AdjustedSamples) -> f64 {
    let n = adj.population() as f64;
    (n - adj.n_t()) / adj.n_t() * adj.a_hat() + (n - adj.n_tbar()) / adj.n_tbar() * adj.b_hat()
}

/// `Â/n_T + B̂/n_T̄`, or with `df_correct` Lin's
/// `Σ ε₁² / (n₁(n₁−1)) + Σ ε₀² / (n₀(n₀−1))` over realized arm sizes.
pub fn conventional_variance(adj: &AdjustedSamples, df_correct: bool) -> Result<f64> {
    if !df_correct {
        return Ok(adj.a_hat() / adj.n_t() + adj.b_hat() / adj.n_tbar());
    }
    let term = |eps: &[f64], arm: &'static str| -> Result<f64> {
        let n = eps.len();
        if n < 2 {
            return Err(Error::ArmTooSmall {
                arm,
                size: n,
                required: 2,
            });
        }
        let ss: f64 = eps.iter().map(|e| e * e).sum();
        Ok(ss / (n as f64 * (n as f64 - 1.0)))
    };
    Ok(term(adj.eps1(), "treated")? + term(adj.eps0(), "control")?)
}

pub fn cauchy_schwarz_variance(adj: &AdjustedSamples) -> f64 {
    let n = adj.population() as f64;
    (identified_part(adj) + 2.0 * (adj.a_hat() * adj.b_hat()).sqrt()) / n
}

/// Plug-in sharp bounds and the extremal cross-moments behind them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpBounds {
    pub lower: f64,
    /// Lower bound before clamping at zero.
    pub lower_raw: f64,
    pub upper: f64,
    pub cross_lower: f64,
    pub cross_upper: f64,
}

pub fn sharp_variance_bounds(adj: &AdjustedSamples) -> Result<SharpBounds> {
    let g = Ecdf::from_sample(adj.eps1())?;
    let f = Ecdf::from_sample(adj.eps0())?;
    let cross_upper = comonotone_cross_moment(&g, &f);
    let cross_lower = countermonotone_cross_moment(&g, &f);
    let n = adj.population() as f64;
    let base = identified_part(adj);
    let upper = (base + 2.0 * cross_upper) / n;
    let lower_raw = (base + 2.0 * cross_lower) / n;
    Ok(SharpBounds {
        lower: lower_raw.max(0.0),
        lower_raw,
        upper: upper.max(0.0),
        cross_lower,
        cross_upper,
    })
}

/// Neyman's estimator `Ŝ₁²/n₁ + Ŝ₀²/n₀` with `(n − 1)`-divisor sample variances.
pub fn neyman_dim_variance(y_treated: &[f64], y_control: &[f64]) -> Result<f64> {
    let term = |y: &[f64], arm: &'static str| -> Result<f64> {
        let n = y.len();
        if n < 2 {
            return Err(Error::ArmTooSmall {
                arm,
                size: n,
                required: 2,
            });
        }
        if y.iter().any(|v| v.is_nan()) {
            return Err(Error::NotANumber("outcomes"));
        }
        let m = y.iter().sum::<f64>() / n as f64;
        let s2 = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        Ok(s2 / n as f64)
    };
    Ok(term(y_treated, "treated")? + term(y_control, "control")?)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(Normal::standard().inverse_cdf(p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `τ̂ ± z_{1−α/2} √variance`.
pub fn wald_interval(tau_hat: f64, variance: f64, alpha: f64) -> Result<Interval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} outside (0, 1)"
        )));
    }
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "variance {variance} is negative"
        )));
    }
    let half = normal_quantile(1.0 - alpha / 2.0)? * variance.sqrt();
    Ok(Interval {
        lo: tau_hat - half,
        hi: tau_hat + half,
    })
}

/// Everything reported for one point estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub tau_hat: f64,
    pub alpha: f64,
    pub df_correct: bool,
    pub v_conventional: f64,
    pub v_cauchy_schwarz: f64,
    pub v_sharp_upper: f64,
    pub v_sharp_lower: f64,
    pub v_sharp_lower_raw: f64,
    pub cross_upper: f64,
    pub cross_lower: f64,
    pub a_hat: f64,
    pub b_hat: f64,
    pub ci_conventional: Interval,
    pub ci_cauchy_schwarz: Interval,
    pub ci_sharp: Interval,
    /// `v_conventional / v_sharp_upper`.
    pub ratio_conventional: f64,
    /// `v_cauchy_schwarz / v_sharp_upper`.
    pub ratio_cauchy_schwarz: f64,
}

impl VarianceReport {
    /// All estimates are zero.
    pub fn is_degenerate(&self) -> bool {
        self.v_sharp_upper == 0.0
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Computes every variance estimate and its Wald interval.
///
/// `df_correct` only affects the conventional estimator; the Cauchy–Schwarz and
/// sharp estimators always use plain arm means of squared adjusted outcomes.
pub fn variance_report(
    adj: &AdjustedSamples,
    tau_hat: f64,
    alpha: f64,
    df_correct: bool,
) -> Result<VarianceReport> {
    let v_conventional = conventional_variance(adj, df_correct)?;
    let v_cauchy_schwarz = cauchy_schwarz_variance(adj);
    let sharp = sharp_variance_bounds(adj)?;
    Ok(VarianceReport {
        tau_hat,
        alpha,
        df_correct,
        v_conventional,
        v_cauchy_schwarz,
        v_sharp_upper: sharp.upper,
        v_sharp_lower: sharp.lower,
        v_sharp_lower_raw: sharp.lower_raw,
        cross_upper: sharp.cross_upper,
        cross_lower: sharp.cross_lower,
        a_hat: adj.a_hat(),
        b_hat: adj.b_hat(),
        ci_conventional: wald_interval(tau_hat, v_conventional, alpha)?,
        ci_cauchy_schwarz: wald_interval(tau_hat, v_cauchy_schwarz, alpha)?,
        ci_sharp: wald_interval(tau_hat, sharp.upper, alpha)?,
        ratio_conventional: ratio(v_conventional, sharp.upper),
        ratio_cauchy_schwarz: ratio(v_cauchy_schwarz, sharp.upper),
    })
}
