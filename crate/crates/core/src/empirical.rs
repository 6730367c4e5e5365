//! Weighted empirical distributions and cross-moments under extremal couplings.
//!
//! An [`Ecdf`] built from an unweighted sample keeps integer atom counts, so its
//! cumulative probabilities are exact rationals `c / n`. Two such distributions
//! can be integrated against each other on their merged probability grid with no
//! floating-point tie artifacts: every breakpoint is an exact [`Rational`] and every
//! order-statistic index `ceil(n p)` is computed in integer arithmetic.
//!
//! Weighted distributions go through a sweep over the union of cumulative weights,
//! which evaluates the same piecewise-constant quantile integral.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A probability `num / den` in `[0, 1]`, compared exactly by cross-multiplication.
#[derive(Clone, Copy, Debug)]
pub struct Rational {
    num: u64,
    den: u64,
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::InvalidParameter(format!(
                "{num}/{den} is not a probability"
            )));
        }
        Ok(Rational { num, den })
    }

    pub const ZERO: Rational = Rational { num: 0, den: 1 };
    pub const ONE: Rational = Rational { num: 1, den: 1 };

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `1 - self`.
    pub fn complement(self) -> Rational {
        Rational {
            num: self.den - self.num,
            den: self.den,
        }
    }

    /// `ceil(n * self)` in exact integer arithmetic.
    pub fn ceil_scaled(self, n: u64) -> u64 {
        let prod = n as u128 * self.num as u128;
        prod.div_ceil(self.den as u128) as u64
    }

    /// `self - lower` as a float; requires `lower <= self`.
    fn width_from(self, lower: Rational) -> f64 {
        let hi = self.num as u128 * lower.den as u128;
        let lo = lower.num as u128 * self.den as u128;
        debug_assert!(hi >= lo);
        (hi - lo) as f64 / (self.den as u128 * lower.den as u128) as f64
    }
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Rational {}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

/// Strictly increasing breakpoints `0 = p_0 < p_1 < ... < p_P = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityGrid {
    breakpoints: Vec<Rational>,
}

impl ProbabilityGrid {
    pub fn from_breakpoints(breakpoints: Vec<Rational>) -> Result<Self> {
        if breakpoints.len() < 2
            || breakpoints[0] != Rational::ZERO
            || *breakpoints.last().unwrap() != Rational::ONE
        {
            return Err(Error::InvalidParameter(
                "grid must start at 0 and end at 1".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "grid breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(ProbabilityGrid { breakpoints })
    }

    /// The grid `{0, 1/n, ..., 1}`.
    pub fn uniform(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("grid size must be positive".into()));
        }
        Ok(ProbabilityGrid {
            breakpoints: (0..=n).map(|i| Rational { num: i, den: n }).collect(),
        })
    }

    pub fn breakpoints(&self) -> &[Rational] {
        &self.breakpoints
    }

    /// Number of cells (`P`).
    pub fn cells(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Sorted distinct union of two grids.
    pub fn union(&self, other: &ProbabilityGrid) -> ProbabilityGrid {
        let (a, b) = (&self.breakpoints, &other.breakpoints);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => match x.cmp(y) {
                    Ordering::Less => {
                        i += 1;
                        *x
                    }
                    Ordering::Greater => {
                        j += 1;
                        *y
                    }
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                        *x
                    }
                },
                (Some(x), None) => {
                    i += 1;
                    *x
                }
                (None, Some(y)) => {
                    j += 1;
                    *y
                }
                (None, None) => unreachable!(),
            };
            out.push(next);
        }
        ProbabilityGrid { breakpoints: out }
    }

    /// True when every breakpoint of `other` also appears here.
    pub fn refines(&self, other: &ProbabilityGrid) -> bool {
        other
            .breakpoints
            .iter()
            .all(|p| self.breakpoints.binary_search(p).is_ok())
    }
}

/// Sorted distinct union of `{i / n_a}` and `{j / n_b}`.
pub fn merged_probability_grid(n_a: u64, n_b: u64) -> Result<ProbabilityGrid> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::InvalidParameter(
            "sample counts must be positive".into(),
        ));
    }
    Ok(ProbabilityGrid::uniform(n_a)?.union(&ProbabilityGrid::uniform(n_b)?))
}

#[derive(Clone, Debug, PartialEq)]
struct AtomCounts {
    cumulative: Vec<u64>,
    total: u64,
}

/// Discrete distribution on sorted distinct atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Ecdf {
    values: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    counts: Option<AtomCounts>,
}

impl Ecdf {
    /// Equal-weight empirical distribution of a sample. Duplicate values are merged.
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        check_values(values)?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let total = sorted.len() as u64;

        let mut atoms: Vec<f64> = Vec::new();
        let mut cum: Vec<u64> = Vec::new();
        for (k, &v) in sorted.iter().enumerate() {
            if atoms.last() == Some(&v) {
                *cum.last_mut().unwrap() = k as u64 + 1;
            } else {
                atoms.push(v);
                cum.push(k as u64 + 1);
            }
        }
        let mut prev = 0;
        let weights = cum
            .iter()
            .map(|&c| {
                let w = (c - prev) as f64 / total as f64;
                prev = c;
                w
            })
            .collect();
        let cumulative = cum.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Ecdf {
            values: atoms,
            weights,
            cumulative,
            counts: Some(AtomCounts {
                cumulative: cum,
                total,
            }),
        })
    }

    /// Weighted empirical distribution; weights are normalized to sum to one.
    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        check_values(values)?;
        if weights.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: values.len(),
                got: weights.len(),
            });
        }
        for (index, &w) in weights.iter().enumerate() {
            if w.is_nan() {
                return Err(Error::NotANumber("weights"));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidWeight { index, value: w });
            }
        }
        let total: f64 = weights.iter().sum();
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .zip(weights)
            .map(|(&v, &w)| (v, w / total))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

        let mut atoms: Vec<f64> = Vec::new();
        let mut masses: Vec<f64> = Vec::new();
        for (v, w) in pairs {
            if atoms.last() == Some(&v) {
                *masses.last_mut().unwrap() += w;
            } else {
                atoms.push(v);
                masses.push(w);
            }
        }
        let mut running = 0.0;
        let mut cumulative: Vec<f64> = masses
            .iter()
            .map(|w| {
                running += w;
                running
            })
            .collect();
        // the last atom closes the distribution exactly
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Ecdf {
            values: atoms,
            weights: masses,
            cumulative,
            counts: None,
        })
    }

    /// Distinct atoms in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cumulative weight at each atom; the last entry is exactly 1.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Size of the underlying sample for equal-weight distributions.
    pub fn sample_size(&self) -> Option<u64> {
        self.counts.as_ref().map(|c| c.total)
    }

    pub fn is_uniform(&self) -> bool {
        self.counts.is_some()
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * v * w)
            .sum()
    }

    /// Left-continuous inverse `inf { y : F(y) >= u }` for `u` in `(0, 1]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::InvalidProbability(u));
        }
        let k = match &self.counts {
            Some(c) => c
                .cumulative
                .partition_point(|&m| (m as f64 / c.total as f64) < u),
            None => self.cumulative.partition_point(|&m| m < u),
        };
        Ok(self.values[k.min(self.values.len() - 1)])
    }

    /// Exact left-continuous inverse at a rational level (equal-weight distributions
    /// use integer comparisons; weighted ones fall back to the float level).
    pub fn quantile_at(&self, p: Rational) -> Result<f64> {
        if p.num == 0 {
            return Err(Error::InvalidProbability(0.0));
        }
        match &self.counts {
            Some(c) => {
                let k = c.cumulative.partition_point(|&m| {
                    (m as u128 * p.den as u128) < (p.num as u128 * c.total as u128)
                });
                Ok(self.values[k])
            }
            None => self.quantile(p.to_f64()),
        }
    }

    /// `k`-th order statistic (1-based) of the underlying equal-weight sample.
    pub fn order_statistic(&self, k: u64) -> Option<f64> {
        let c = self.counts.as_ref()?;
        if k == 0 || k > c.total {
            return None;
        }
        let idx = c.cumulative.partition_point(|&m| m < k);
        Some(self.values[idx])
    }

    /// Distribution of `-X`: atoms negated and reversed, masses carried along.
    pub fn mirrored(&self) -> Ecdf {
        let values: Vec<f64> = self.values.iter().rev().map(|v| -v).collect();
        let weights: Vec<f64> = self.weights.iter().rev().copied().collect();
        let counts = self.counts.as_ref().map(|c| {
            let mut prev = 0;
            let per_atom: Vec<u64> = c
                .cumulative
                .iter()
                .map(|&m| {
                    let d = m - prev;
                    prev = m;
                    d
                })
                .collect();
            let mut acc = 0;
            AtomCounts {
                cumulative: per_atom
                    .iter()
                    .rev()
                    .map(|d| {
                        acc += d;
                        acc
                    })
                    .collect(),
                total: c.total,
            }
        });
        let cumulative = match &counts {
            Some(c) => c
                .cumulative
                .iter()
                .map(|&m| m as f64 / c.total as f64)
                .collect(),
            None => {
                let mut running = 0.0;
                let mut cum: Vec<f64> = weights
                    .iter()
                    .map(|w| {
                        running += w;
                        running
                    })
                    .collect();
                *cum.last_mut().unwrap() = 1.0;
                cum
            }
        };
        Ecdf {
            values,
            weights,
            cumulative,
            counts,
        }
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NotANumber("sample values"));
    }
    Ok(())
}

/// Builds an [`Ecdf`]; equal weights when `weights` is `None`.
pub fn ecdf_from_sample(values: &[f64], weights: Option<&[f64]>) -> Result<Ecdf> {
    match weights {
        None => Ecdf::from_sample(values),
        Some(w) => Ecdf::from_weighted(values, w),
    }
}

/// Extremal dependence between two marginals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coupling {
    /// Quantiles paired in the same order (upper Fréchet–Hoeffding bound).
    Comonotone,
    /// Quantiles paired in opposite order (lower bound).
    Countermonotone,
}

/// `∫ A⁻¹(u) B⁻¹(u) du`, the largest cross-moment compatible with the marginals.
pub fn comonotone_cross_moment(a: &Ecdf, b: &Ecdf) -> f64 {
    match (a.sample_size(), b.sample_size()) {
        (Some(na), Some(nb)) => {
            let grid = merged_probability_grid(na, nb).expect("non-empty samples");
            grid_sum(a, b, &grid, Coupling::Comonotone)
        }
        _ => sweep(a, b),
    }
}

/// `∫ A⁻¹(u) B⁻¹(1 - u) du`, the smallest cross-moment compatible with the marginals.
pub fn countermonotone_cross_moment(a: &Ecdf, b: &Ecdf) -> f64 {
    match (a.sample_size(), b.sample_size()) {
        (Some(na), Some(nb)) => {
            let grid = merged_probability_grid(na, nb).expect("non-empty samples");
            grid_sum(a, b, &grid, Coupling::Countermonotone)
        }
        _ => -sweep(a, &b.mirrored()),
    }
}

/// Evaluates the coupling integral on a caller-supplied grid.
///
/// The result is exact whenever the grid refines the jump points of both
/// distributions; for equal-weight inputs any refinement of
/// [`merged_probability_grid`] qualifies. On each cell `(p_{i-1}, p_i]` the
/// left-continuous inverses are read at the right endpoint; for the
/// countermonotone coupling the second factor is read at `1 - p_{i-1}`, the
/// right endpoint of the mirrored cell.
pub fn cross_moment_on_grid(a: &Ecdf, b: &Ecdf, grid: &ProbabilityGrid, coupling: Coupling) -> f64 {
    grid_sum(a, b, grid, coupling)
}

fn grid_sum(a: &Ecdf, b: &Ecdf, grid: &ProbabilityGrid, coupling: Coupling) -> f64 {
    grid.breakpoints
        .windows(2)
        .map(|cell| {
            let (lo, hi) = (cell[0], cell[1]);
            let qa = a.quantile_at(hi).expect("positive level");
            let qb = match coupling {
                Coupling::Comonotone => b.quantile_at(hi),
                Coupling::Countermonotone => b.quantile_at(lo.complement()),
            }
            .expect("positive level");
            hi.width_from(lo) * qa * qb
        })
        .sum()
}

/// Two-pointer walk over the union of cumulative weights.
fn sweep(a: &Ecdf, b: &Ecdf) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut p = 0.0;
    let mut total = 0.0;
    while i < a.values.len() && j < b.values.len() {
        let next = a.cumulative[i].min(b.cumulative[j]);
        total += (next - p) * a.values[i] * b.values[j];
        p = next;
        if a.cumulative[i] <= next {
            i += 1;
        }
        if b.cumulative[j] <= next {
            j += 1;
        }
    }
    total
}

/// Comonotone cross-moment by the index formula over sorted samples, with
/// order statistics `ceil(n_a p_i)` and `ceil(n_b p_i)`. For the
/// countermonotone coupling the second index uses `p_{P+1-i}`.
pub fn sorted_index_cross_moment(a: &[f64], b: &[f64], coupling: Coupling) -> Result<f64> {
    check_values(a)?;
    check_values(b)?;
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as u64, sb.len() as u64);
    let grid = merged_probability_grid(na, nb)?;
    let p = grid.breakpoints();
    let last = p.len() - 1;
    let mut total = 0.0;
    for i in 1..=last {
        let ia = p[i].ceil_scaled(na) as usize;
        let pb = match coupling {
            Coupling::Comonotone => p[i],
            Coupling::Countermonotone => p[last + 1 - i],
        };
        let ib = pb.ceil_scaled(nb) as usize;
        total += p[i].width_from(p[i - 1]) * sa[ia - 1] * sb[ib - 1];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: u64, d: u64) -> Rational {
        Rational::new(n, d).unwrap()
    }

    /// Midpoint rule on the lcm grid; exact for equal-weight inputs because every
    /// jump of both inverses lies on a multiple of 1/lcm.
    fn quantile_integral_oracle(a: &Ecdf, b: &Ecdf, coupling: Coupling) -> f64 {
        let (na, nb) = (a.sample_size().unwrap(), b.sample_size().unwrap());
        let l = na * nb;
        (0..l)
            .map(|k| {
                let u = (k as f64 + 0.5) / l as f64;
                let qb = match coupling {
                    Coupling::Comonotone => b.quantile(u),
                    Coupling::Countermonotone => b.quantile(1.0 - u),
                };
                a.quantile(u).unwrap() * qb.unwrap()
            })
            .sum::<f64>()
            / l as f64
    }

    #[test]
    fn duplicates_merge() {
        let e = Ecdf::from_sample(&[3.0, 1.0, 1.0]).unwrap();
        assert_eq!(e.values(), &[1.0, 3.0]);
        assert!((e.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((e.weights()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_has_unit_mass() {
        let e = Ecdf::from_sample(&[5.0]).unwrap();
        assert_eq!(e.values(), &[5.0]);
        assert_eq!(e.weights(), &[1.0]);
    }

    #[test]
    fn weights_are_normalized() {
        let e = ecdf_from_sample(&[0.0, 1.0], Some(&[1.0, 3.0])).unwrap();
        assert_eq!(e.weights(), &[0.25, 0.75]);
        assert!(!e.is_uniform());
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(Ecdf::from_sample(&[]), Err(Error::EmptySample)));
        assert!(matches!(
            Ecdf::from_sample(&[1.0, f64::NAN]),
            Err(Error::NotANumber(_))
        ));
        assert!(matches!(
            Ecdf::from_weighted(&[1.0, 2.0], &[1.0, 0.0]),
            Err(Error::InvalidWeight { index: 1, .. })
        ));
        assert!(matches!(
            Ecdf::from_weighted(&[1.0, 2.0], &[1.0, -2.0]),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            Ecdf::from_weighted(&[1.0, 2.0], &[1.0, f64::NAN]),
            Err(Error::NotANumber(_))
        ));
        assert!(matches!(
            Ecdf::from_weighted(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn quantile_boundaries() {
        let e = Ecdf::from_sample(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(e.quantile(1.0 / 3.0).unwrap(), -1.0);
        assert_eq!(e.quantile(0.34).unwrap(), 0.0);
        assert_eq!(e.quantile(1.0).unwrap(), 1.0);
        assert_eq!(e.quantile_at(r(1, 3)).unwrap(), -1.0);
        assert_eq!(e.quantile_at(r(2, 6)).unwrap(), -1.0);
        assert_eq!(e.quantile_at(r(1, 2)).unwrap(), 0.0);
        for u in [0.0, -0.1, 1.0000001, f64::NAN] {
            assert!(e.quantile(u).is_err());
        }
    }

    #[test]
    fn quantile_at_cumulative_weight_returns_atom() {
        let e = Ecdf::from_weighted(&[2.0, -1.0, 7.0, 4.0], &[0.3, 0.1, 0.2, 0.4]).unwrap();
        for (k, &c) in e.cumulative().iter().enumerate() {
            assert_eq!(e.quantile(c).unwrap(), e.values()[k]);
        }
    }

    #[test]
    fn grid_enumeration() {
        let g = merged_probability_grid(2, 3).unwrap();
        let expect = [r(0, 1), r(1, 3), r(1, 2), r(2, 3), r(1, 1)];
        assert_eq!(g.breakpoints(), &expect);
        assert_eq!(
            merged_probability_grid(1, 1).unwrap().breakpoints(),
            &[r(0, 1), r(1, 1)]
        );
        let g = merged_probability_grid(2, 4).unwrap();
        assert_eq!(
            g.breakpoints(),
            &[r(0, 1), r(1, 4), r(1, 2), r(3, 4), r(1, 1)]
        );
        assert!(merged_probability_grid(0, 3).is_err());
        assert!(merged_probability_grid(3, 0).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(ProbabilityGrid::from_breakpoints(vec![r(0, 1), r(1, 2), r(1, 1)]).is_ok());
        assert!(
            ProbabilityGrid::from_breakpoints(vec![r(0, 1), r(1, 2), r(2, 4), r(1, 1)]).is_err()
        );
        assert!(ProbabilityGrid::from_breakpoints(vec![r(1, 2), r(1, 1)]).is_err());
        assert!(ProbabilityGrid::from_breakpoints(vec![r(0, 1), r(1, 2)]).is_err());
    }

    #[test]
    fn hand_fixtures() {
        let a = Ecdf::from_sample(&[-1.0, 1.0]).unwrap();
        let b = Ecdf::from_sample(&[-1.0, 0.0, 1.0]).unwrap();
        let co = comonotone_cross_moment(&a, &b);
        let counter = countermonotone_cross_moment(&a, &b);
        assert!((co - 2.0 / 3.0).abs() < 1e-15);
        assert!((counter + 2.0 / 3.0).abs() < 1e-15);
        assert!((quantile_integral_oracle(&a, &b, Coupling::Comonotone) - 2.0 / 3.0).abs() < 1e-14);
        assert!(
            (quantile_integral_oracle(&a, &b, Coupling::Countermonotone) + 2.0 / 3.0).abs() < 1e-14
        );

        let s = Ecdf::from_sample(&[1.0, 2.0, 3.0]).unwrap();
        assert!((comonotone_cross_moment(&s, &s) - 14.0 / 3.0).abs() < 1e-14);

        assert!((countermonotone_cross_moment(&a, &a) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constants_factorize() {
        let c = Ecdf::from_sample(&[2.5]).unwrap();
        let b = Ecdf::from_sample(&[-1.0, 4.0, 0.5, 0.5]).unwrap();
        let m = b.mean();
        assert!((comonotone_cross_moment(&c, &b) - 2.5 * m).abs() < 1e-12);
        assert!((countermonotone_cross_moment(&c, &b) - 2.5 * m).abs() < 1e-12);
    }

    #[test]
    fn weighted_path_matches_grid_path() {
        let xa = [0.3, -1.2, 2.0, 0.3, 5.0];
        let xb = [1.0, -0.5, 0.0];
        let ua = Ecdf::from_sample(&xa).unwrap();
        let ub = Ecdf::from_sample(&xb).unwrap();
        let wa = Ecdf::from_weighted(&xa, &[1.0; 5]).unwrap();
        let wb = Ecdf::from_weighted(&xb, &[2.0; 3]).unwrap();
        assert!(
            (comonotone_cross_moment(&ua, &ub) - comonotone_cross_moment(&wa, &wb)).abs() < 1e-12
        );
        assert!(
            (countermonotone_cross_moment(&ua, &ub) - countermonotone_cross_moment(&wa, &wb)).abs()
                < 1e-12
        );
    }

    #[test]
    fn weighted_fixture_by_hand() {
        // a: 0 w.p. 0.25, 1 w.p. 0.75; b: 0 w.p. 0.5, 2 w.p. 0.5
        let a = Ecdf::from_weighted(&[0.0, 1.0], &[1.0, 3.0]).unwrap();
        let b = Ecdf::from_weighted(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        // comonotone: cells (0,.25]:0*0, (.25,.5]:1*0, (.5,1]:1*2 -> 1.0
        assert!((comonotone_cross_moment(&a, &b) - 1.0).abs() < 1e-15);
        // countermonotone: b reversed -> (0,.25]:0*2, (.25,.5]:1*2, (.5,1]:1*0 -> 0.5
        assert!((countermonotone_cross_moment(&a, &b) - 0.5).abs() < 1e-15);
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![(-50i32..50).prop_map(|v| v as f64 / 4.0), -10.0f64..10.0],
            1..12,
        )
    }

    proptest! {
        #[test]
        fn routes_agree(xa in sample(), xb in sample()) {
            let a = Ecdf::from_sample(&xa).unwrap();
            let b = Ecdf::from_sample(&xb).unwrap();
            let co = comonotone_cross_moment(&a, &b);
            let counter = countermonotone_cross_moment(&a, &b);
            prop_assert!((co - sorted_index_cross_moment(&xa, &xb, Coupling::Comonotone).unwrap()).abs() < 1e-12);
            prop_assert!((counter - sorted_index_cross_moment(&xa, &xb, Coupling::Countermonotone).unwrap()).abs() < 1e-12);
            // mirrored route for the countermonotone coupling
            prop_assert!((counter + comonotone_cross_moment(&a, &b.mirrored())).abs() < 1e-12);
            prop_assert!((co - quantile_integral_oracle(&a, &b, Coupling::Comonotone)).abs() < 1e-10);
            prop_assert!((counter - quantile_integral_oracle(&a, &b, Coupling::Countermonotone)).abs() < 1e-10);
        }

        #[test]
        fn cauchy_schwarz_envelope(xa in sample(), xb in sample()) {
            let a = Ecdf::from_sample(&xa).unwrap();
            let b = Ecdf::from_sample(&xb).unwrap();
            let bound = (a.second_moment() * b.second_moment()).sqrt();
            prop_assert!(comonotone_cross_moment(&a, &b).abs() <= bound + 1e-12);
            prop_assert!(countermonotone_cross_moment(&a, &b).abs() <= bound + 1e-12);
            prop_assert!(countermonotone_cross_moment(&a, &b) <= comonotone_cross_moment(&a, &b) + 1e-12);
        }

        #[test]
        fn grid_refinement_is_invariant(xa in sample(), xb in sample(), ka in 1u64..4, kb in 1u64..4) {
            let a = Ecdf::from_sample(&xa).unwrap();
            let b = Ecdf::from_sample(&xb).unwrap();
            let (na, nb) = (xa.len() as u64, xb.len() as u64);
            let base = merged_probability_grid(na, nb).unwrap();
            let fine = base.union(&merged_probability_grid(na * ka, nb * kb + 1).unwrap());
            prop_assert!(fine.refines(&base));
            for c in [Coupling::Comonotone, Coupling::Countermonotone] {
                let coarse = cross_moment_on_grid(&a, &b, &base, c);
                let refined = cross_moment_on_grid(&a, &b, &fine, c);
                prop_assert!((coarse - refined).abs() < 1e-12);
            }
        }

        #[test]
        fn shift_equivariance(xa in sample(), xb in sample(), s in -5.0f64..5.0, t in -5.0f64..5.0) {
            let a = Ecdf::from_sample(&xa).unwrap();
            let b = Ecdf::from_sample(&xb).unwrap();
            let sa: Vec<f64> = xa.iter().map(|v| v + s).collect();
            let tb: Vec<f64> = xb.iter().map(|v| v + t).collect();
            let shifted = comonotone_cross_moment(
                &Ecdf::from_sample(&sa).unwrap(),
                &Ecdf::from_sample(&tb).unwrap(),
            );
            let expect = comonotone_cross_moment(&a, &b) + s * b.mean() + t * a.mean() + s * t;
            prop_assert!((shifted - expect).abs() < 1e-9);
        }

        #[test]
        fn quantile_monotone(xa in sample(), u in 0.001f64..1.0, v in 0.001f64..1.0) {
            let a = Ecdf::from_sample(&xa).unwrap();
            let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
            prop_assert!(a.quantile(lo).unwrap() <= a.quantile(hi).unwrap());
        }
    }
}
