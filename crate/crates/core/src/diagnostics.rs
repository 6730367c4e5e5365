//! Diagnostics for judging how much the sharp bound gains over the
//! Cauchy–Schwarz and conventional estimators.

use serde::{Deserialize, Serialize};

use crate::adjust::AdjustedSamples;
use crate::empirical::{merged_probability_grid, Ecdf, ProbabilityGrid};
use crate::error::{Error, Result};
use crate::variance::VarianceReport;

/// Paired quantiles of the treated and control adjusted outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QqSeries {
    pub probs: Vec<f64>,
    pub q_treated: Vec<f64>,
    pub q_control: Vec<f64>,
}

impl QqSeries {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// True when every pair lies on the diagonal.
    pub fn on_diagonal(&self) -> bool {
        self.q_treated
            .iter()
            .zip(&self.q_control)
            .all(|(a, b)| a == b)
    }
}

/// Q-Q pairs on the merged grid of both arms (the default) or on `{i/g}`.
pub fn qq_pairs(adj: &AdjustedSamples, grid_size: Option<usize>) -> Result<QqSeries> {
    let g = Ecdf::from_sample(adj.eps1())?;
    let f = Ecdf::from_sample(adj.eps0())?;
    let grid = match grid_size {
        Some(0) => {
            return Err(Error::InvalidParameter("grid size must be positive".into()));
        }
        Some(size) => ProbabilityGrid::uniform(size as u64)?,
        None => merged_probability_grid(adj.realized_nt() as u64, adj.realized_ntbar() as u64)?,
    };
    let levels = &grid.breakpoints()[1..];
    let mut series = QqSeries {
        probs: Vec::with_capacity(levels.len()),
        q_treated: Vec::with_capacity(levels.len()),
        q_control: Vec::with_capacity(levels.len()),
    };
    for &p in levels {
        series.probs.push(p.to_f64());
        series.q_treated.push(g.quantile_at(p)?);
        series.q_control.push(f.quantile_at(p)?);
    }
    Ok(series)
}

/// Pearson correlation of the ascending-sorted adjusted outcomes of two arms
/// of equal size.
///
/// For centered residuals, `ρ √(Â B̂)` equals the comonotone cross-moment, so
/// `ρ` is the ratio of the sharp to the Cauchy–Schwarz cross-term.
pub fn sorted_residual_correlation(adj: &AdjustedSamples) -> Result<f64> {
    let (n1, n0) = (adj.realized_nt(), adj.realized_ntbar());
    if n1 != n0 {
        return Err(Error::InvalidParameter(format!(
            "sorted-residual correlation needs balanced arms, got {n1} and {n0}"
        )));
    }
    let mut a = adj.eps1().to_vec();
    let mut b = adj.eps0().to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = n1 as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Data(
            "sorted-residual correlation undefined for a zero-variance arm".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Sharp bound relative to the two looser estimators (values at most one).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRatios {
    /// `v_sharp_upper / v_conventional`
    pub conv_ratio: f64,
    /// `v_sharp_upper / v_cauchy_schwarz`
    pub cs_ratio: f64,
    /// Relative variance reduction against the conventional estimator, `1 − conv_ratio`.
    pub conv_reduction: f64,
}

pub fn bound_ratios(report: &VarianceReport) -> Result<BoundRatios> {
    if report.v_sharp_upper.is_nan() || report.v_sharp_upper <= 0.0 {
        return Err(Error::Data("sharp variance bound is zero".into()));
    }
    let conv_ratio = report.v_sharp_upper / report.v_conventional;
    Ok(BoundRatios {
        conv_ratio,
        cs_ratio: report.v_sharp_upper / report.v_cauchy_schwarz,
        conv_reduction: 1.0 - conv_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variance::{sharp_variance_bounds, variance_report};

    fn adj(eps1: &[f64], eps0: &[f64]) -> AdjustedSamples {
        let (n1, n0) = (eps1.len() as f64, eps0.len() as f64);
        AdjustedSamples::new(
            eps1.to_vec(),
            eps0.to_vec(),
            n1,
            n0,
            eps1.len() + eps0.len(),
        )
        .unwrap()
    }

    #[test]
    fn identical_arms_are_diagonal() {
        let q = qq_pairs(&adj(&[0.5, -1.0, 2.0], &[2.0, 0.5, -1.0]), None).unwrap();
        assert!(q.on_diagonal());
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn qq_fixture() {
        let q = qq_pairs(&adj(&[-1.0, 1.0], &[-1.0, 0.0, 1.0]), None).unwrap();
        let probs = [1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0];
        for (p, e) in q.probs.iter().zip(probs) {
            assert!((p - e).abs() < 1e-15);
        }
        assert_eq!(q.q_treated, vec![-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(q.q_control, vec![-1.0, 0.0, 0.0, 1.0]);
        assert!(!q.on_diagonal());
    }

    #[test]
    fn single_level_grid_reads_maxima() {
        let q = qq_pairs(&adj(&[-1.0, 3.0], &[-1.0, 0.0, 1.0]), Some(1)).unwrap();
        assert_eq!(q.probs, vec![1.0]);
        assert_eq!((q.q_treated[0], q.q_control[0]), (3.0, 1.0));
        assert!(qq_pairs(&adj(&[-1.0, 3.0], &[0.0, 1.0]), Some(0)).is_err());
    }

    #[test]
    fn qq_sequences_are_monotone() {
        let q = qq_pairs(
            &adj(&[0.3, -2.0, 1.5, 0.0, 0.9], &[4.0, -1.0, 0.2]),
            Some(17),
        )
        .unwrap();
        assert!(q.q_treated.windows(2).all(|w| w[0] <= w[1]));
        assert!(q.q_control.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn correlation_fixtures() {
        assert!(
            (sorted_residual_correlation(&adj(&[1.0, -1.0, 0.0], &[0.0, 1.0, -1.0])).unwrap()
                - 1.0)
                .abs()
                < 1e-15
        );

        let rho = sorted_residual_correlation(&adj(&[-1.0, 0.0, 1.0], &[-1.0, -1.0, 2.0])).unwrap();
        assert!((rho - 1.0 / (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((rho - 0.8660).abs() < 1e-4);

        let e1 = [0.4, -1.2, 0.8];
        let e0: Vec<f64> = e1.iter().rev().map(|v| 2.0 * v + 3.0).collect();
        assert!((sorted_residual_correlation(&adj(&e1, &e0)).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn correlation_errors() {
        assert!(sorted_residual_correlation(&adj(&[-1.0, 1.0], &[-1.0, 0.0, 1.0])).is_err());
        assert!(sorted_residual_correlation(&adj(&[0.0, 0.0], &[-1.0, 1.0])).is_err());
    }

    #[test]
    fn correlation_scales_cross_term() {
        let a = adj(&[-1.0, 0.0, 1.0], &[-1.0, -1.0, 2.0]);
        let rho = sorted_residual_correlation(&a).unwrap();
        let s = sharp_variance_bounds(&a).unwrap();
        assert!((rho * (a.a_hat() * a.b_hat()).sqrt() - s.cross_upper).abs() < 1e-12);
    }

    #[test]
    fn ratio_fixtures() {
        let r = variance_report(
            &adj(&[-1.0, 0.0, 1.0], &[-1.0, -1.0, 2.0]),
            0.0,
            0.05,
            false,
        )
        .unwrap();
        let b = bound_ratios(&r).unwrap();
        let cs_hand = (2.0 / 3.0 + 2.0 + 2.0 * (4.0f64 / 3.0).sqrt()) / 6.0;
        assert!((b.cs_ratio - (7.0 / 9.0) / cs_hand).abs() < 1e-12);
        assert!((b.cs_ratio - 0.9379).abs() < 1e-4);
        assert!((b.conv_reduction - (1.0 - b.conv_ratio)).abs() < 1e-15);

        // comonotone residuals of equal spread: every estimator coincides
        let eq = variance_report(&adj(&[-1.0, 1.0], &[-1.0, 1.0]), 0.0, 0.05, false).unwrap();
        let b = bound_ratios(&eq).unwrap();
        assert!((b.conv_ratio - 1.0).abs() < 1e-15 && (b.cs_ratio - 1.0).abs() < 1e-15);

        let zero = variance_report(&adj(&[0.0; 2], &[0.0; 2]), 0.0, 0.05, false).unwrap();
        assert!(bound_ratios(&zero).is_err());
    }

    #[test]
    fn unit_correlation_iff_no_gain_over_cauchy_schwarz() {
        let cases: [(&[f64], &[f64]); 4] = [
            (&[-1.0, 0.0, 1.0], &[-2.0, 0.0, 2.0]),
            (&[-1.0, 0.0, 1.0], &[-1.0, -1.0, 2.0]),
            (&[-3.0, 1.0, 2.0], &[-1.5, 0.5, 1.0]),
            (&[-3.0, 1.0, 2.0], &[-2.0, 1.0, 1.0]),
        ];
        for (e1, e0) in cases {
            let a = adj(e1, e0);
            let rho = sorted_residual_correlation(&a).unwrap();
            let r = variance_report(&a, 0.0, 0.05, false).unwrap();
            let b = bound_ratios(&r).unwrap();
            assert_eq!((rho - 1.0).abs() < 1e-12, (b.cs_ratio - 1.0).abs() < 1e-12);
        }
    }
}
