//! Finite-population simulation harness.
//!
//! Potential outcomes are drawn once per study; afterwards only the treatment
//! assignment is random. Every random quantity comes from a ChaCha8 stream
//! (`rand_chacha` 0.9) whose 64-bit seed is derived from the master seed with a
//! SplitMix64 mix of `(master, stream tag, index)`. Per-draw seeds depend only on
//! the draw index, and reductions run in index order, so results are identical
//! for any number of worker threads.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjust::{fit_arm_ols, AdjustedSamples, ExperimentData, Method, PointEstimate};
use crate::empirical::{comonotone_cross_moment, countermonotone_cross_moment, Ecdf};
use crate::error::{Error, Result};
use crate::variance::variance_report;

/// Monte Carlo draws used for the true variance, per estimator draw.
pub const TRUTH_REPS_FACTOR: usize = 10;
/// Smallest replication count accepted by [`monte_carlo_bias`].
pub const MIN_BIAS_REPS: usize = 100;
const MAX_REDRAWS: u64 = 10_000;

const STREAM_POPULATION: u64 = 1;
const STREAM_ESTIMATES: u64 = 2;
const STREAM_TRUTH: u64 = 3;
const STREAM_SWEEP: u64 = 4;
const STREAM_REDRAW: u64 = 5;
const STREAM_COVERAGE: u64 = 6;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of sub-stream `(stream, index)` of `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Both potential outcomes and covariates of every unit.
#[derive(Clone, Debug, PartialEq)]
pub struct FinitePopulation {
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    pub x: DMatrix<f64>,
}

impl FinitePopulation {
    pub fn new(y1: Vec<f64>, y0: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y0.len() != y1.len() || x.nrows() != y1.len() {
            return Err(Error::LengthMismatch {
                what: "potential outcomes",
                expected: y1.len(),
                got: y0.len().min(x.nrows()),
            });
        }
        if y1.len() < 4 {
            return Err(Error::InvalidParameter(
                "population needs at least 4 units".into(),
            ));
        }
        if y1.iter().chain(&y0).chain(x.iter()).any(|v| v.is_nan()) {
            return Err(Error::NotANumber("population"));
        }
        Ok(FinitePopulation { y1, y0, x })
    }

    pub fn len(&self) -> usize {
        self.y1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y1.is_empty()
    }

    /// Average treatment effect over the population.
    pub fn tau(&self) -> f64 {
        self.y1
            .iter()
            .zip(&self.y0)
            .map(|(a, b)| a - b)
            .sum::<f64>()
            / self.len() as f64
    }

    /// Observed data under assignment `z`.
    pub fn observe(&self, z: &[bool]) -> Result<ExperimentData> {
        let y = z
            .iter()
            .enumerate()
            .map(|(i, &t)| if t { self.y1[i] } else { self.y0[i] })
            .collect();
        ExperimentData::new(y, z.to_vec(), self.x.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CovariateDist {
    StandardNormal,
    Uniform { lo: f64, hi: f64 },
}

/// Parameters of the data-generating process
/// `Y(0) = α₀ + β₀ x + e`, `Y(1) = Y(0)` if `p = 0` else `level + scale · e`,
/// with `p ~ Bernoulli(θ)` and `e ~ N(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    pub n: usize,
    pub theta: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub covariates: CovariateDist,
    pub effect_level: f64,
    pub effect_noise_scale: f64,
}

impl DgpParams {
    pub fn new(n: usize, theta: f64) -> Self {
        DgpParams {
            n,
            theta,
            alpha0: 0.0,
            beta0: 1.0,
            covariates: CovariateDist::StandardNormal,
            effect_level: 10.0,
            effect_noise_scale: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta = {} outside [0, 1]",
                self.theta
            )));
        }
        if self.n < 8 {
            return Err(Error::InvalidParameter(format!(
                "population size {} below 8",
                self.n
            )));
        }
        if let CovariateDist::Uniform { lo, hi } = self.covariates {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::InvalidParameter(
                    "uniform covariate needs lo < hi".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn generate_population(params: &DgpParams, seed: u64) -> Result<FinitePopulation> {
    params.validate()?;
    let mut rng = rng_from(derive_seed(seed, STREAM_POPULATION, 0));
    let n = params.n;
    let mut x = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = match params.covariates {
            CovariateDist::StandardNormal => StandardNormal.sample(&mut rng),
            CovariateDist::Uniform { lo, hi } => rng.random_range(lo..hi),
        };
        let e: f64 = StandardNormal.sample(&mut rng);
        let shifted = rng.random::<f64>() < params.theta;
        let base = params.alpha0 + params.beta0 * xi + e;
        x.push(xi);
        y0.push(base);
        y1.push(if shifted {
            params.effect_level + params.effect_noise_scale * e
        } else {
            base
        });
    }
    FinitePopulation::new(y1, y0, DMatrix::from_column_slice(n, 1, &x))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DesignSpec {
    /// Exactly `n1` treated units, uniform over subsets.
    Complete { n1: usize },
    /// Independent assignment with probability `pi`.
    Bernoulli { pi: f64 },
}

impl DesignSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            DesignSpec::Complete { n1 } if n1 < 2 || n1 + 2 > n => Err(Error::InvalidParameter(
                format!("complete randomization needs 2 <= n1 <= N - 2, got n1 = {n1}, N = {n}"),
            )),
            DesignSpec::Bernoulli { pi } if !(pi > 0.0 && pi < 1.0) => Err(
                Error::InvalidParameter(format!("Bernoulli probability {pi} outside (0, 1)")),
            ),
            _ => Ok(()),
        }
    }

    /// Deterministic design counts `(n_T, n_T̄)`.
    pub fn design_counts(&self, n: usize) -> (f64, f64) {
        match *self {
            DesignSpec::Complete { n1 } => (n1 as f64, (n - n1) as f64),
            DesignSpec::Bernoulli { pi } => (pi * n as f64, (1.0 - pi) * n as f64),
        }
    }
}

fn assign(n: usize, design: &DesignSpec, rng: &mut ChaCha8Rng) -> Vec<bool> {
    match *design {
        DesignSpec::Complete { n1 } => {
            let mut z = vec![false; n];
            for i in index::sample(rng, n, n1) {
                z[i] = true;
            }
            z
        }
        DesignSpec::Bernoulli { pi } => (0..n).map(|_| rng.random::<f64>() < pi).collect(),
    }
}

pub fn draw_assignment(n: usize, design: &DesignSpec, seed: u64) -> Result<Vec<bool>> {
    design.validate(n)?;
    Ok(assign(n, design, &mut rng_from(seed)))
}

/// Draws an assignment with at least two units per arm; Bernoulli draws that
/// fail are redrawn from a dedicated sub-stream. Returns the number of rejections.
pub fn draw_valid_assignment(n: usize, design: &DesignSpec, seed: u64) -> Result<(Vec<bool>, u64)> {
    design.validate(n)?;
    let balanced = |z: &[bool]| {
        let t = z.iter().filter(|&&b| b).count();
        t >= 2 && n - t >= 2
    };
    let z = assign(n, design, &mut rng_from(seed));
    if balanced(&z) {
        return Ok((z, 0));
    }
    for attempt in 1..=MAX_REDRAWS {
        let z = assign(
            n,
            design,
            &mut rng_from(derive_seed(seed, STREAM_REDRAW, attempt)),
        );
        if balanced(&z) {
            return Ok((z, attempt));
        }
    }
    Err(Error::InvalidParameter(format!(
        "no assignment with two units per arm after {MAX_REDRAWS} redraws"
    )))
}

/// Point estimate and adjusted samples for one assignment, with design counts
/// taken from the design rather than the realized arm sizes.
pub fn estimate_draw(
    pop: &FinitePopulation,
    z: &[bool],
    design: &DesignSpec,
    estimator: Method,
) -> Result<(PointEstimate, AdjustedSamples)> {
    let data = pop.observe(z)?;
    let (est, adj) = estimator.estimate(&data)?;
    let (n_t, n_tbar) = design.design_counts(pop.len());
    Ok((est, adj.with_design_counts(n_t, n_tbar)?))
}

/// Population-adjusted potential outcomes: deviations from the arm mean (`Dim`)
/// or residuals of the least-squares projection on `(1, X)` over all units (`Lin`).
pub fn population_residuals(
    pop: &FinitePopulation,
    estimator: Method,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let resid = |y: &[f64]| -> Result<Vec<f64>> {
        let x = match estimator {
            Method::Dim => DMatrix::zeros(y.len(), 0),
            Method::Lin => pop.x.clone(),
        };
        let model = fit_arm_ols(&x, y)?;
        Ok(y.iter()
            .zip(model.predict_rows(&x))
            .map(|(v, f)| v - f)
            .collect())
    };
    Ok((resid(&pop.y1)?, resid(&pop.y0)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleMode {
    /// Closed form from the population-adjusted potential outcomes.
    Formula,
    /// Empirical variance of the point estimate over `reps` assignment draws.
    MonteCarlo { reps: usize, seed: u64 },
}

/// True sampling variance of the adjusted estimator on a known population.
///
/// The formula mode evaluates
/// `(1/N)[(n₀/n₁) mean(ε₁²) + (n₁/n₀) mean(ε₀²) + 2 mean(ε₁ ε₀)]`
/// with the population-adjusted outcomes of [`population_residuals`].
pub fn true_variance_oracle(
    pop: &FinitePopulation,
    design: &DesignSpec,
    estimator: Method,
    mode: OracleMode,
) -> Result<f64> {
    design.validate(pop.len())?;
    match mode {
        OracleMode::Formula => {
            let (e1, e0) = population_residuals(pop, estimator)?;
            let n = pop.len() as f64;
            let (n1, n0) = design.design_counts(pop.len());
            let ms = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>() / n;
            let cross = e1.iter().zip(&e0).map(|(a, b)| a * b).sum::<f64>() / n;
            Ok((n0 / n1 * ms(&e1) + n1 / n0 * ms(&e0) + 2.0 * cross) / n)
        }
        OracleMode::MonteCarlo { reps, seed } => {
            if reps < 2 {
                return Err(Error::InvalidParameter(format!(
                    "Monte Carlo oracle needs at least 2 draws, got {reps}"
                )));
            }
            let (taus, _) = tau_draws(pop, design, estimator, reps, seed)?;
            Ok(moments(&taus).variance)
        }
    }
}

fn tau_draws(
    pop: &FinitePopulation,
    design: &DesignSpec,
    estimator: Method,
    reps: usize,
    seed: u64,
) -> Result<(Vec<f64>, u64)> {
    let draws: Vec<(f64, u64)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let (z, rejected) = draw_valid_assignment(pop.len(), design, derive_seed(seed, 0, r))?;
            let (est, _) = estimate_draw(pop, &z, design, estimator)?;
            Ok((est.tau_hat, rejected))
        })
        .collect::<Result<_>>()?;
    let rejected = draws.iter().map(|d| d.1).sum();
    Ok((draws.into_iter().map(|d| d.0).collect(), rejected))
}

struct Moments {
    mean: f64,
    variance: f64,
    /// Standard error of the mean.
    se_mean: f64,
    /// Standard error of the sample variance.
    se_variance: f64,
}

fn moments(v: &[f64]) -> Moments {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let variance = m2 * n / (n - 1.0);
    Moments {
        mean,
        variance,
        se_mean: (variance / n).sqrt(),
        se_variance: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBias {
    pub mean_estimate: f64,
    pub standard_error: f64,
    pub bias: f64,
    pub bias_standard_error: f64,
    /// `ln(bias)` when the bias is positive.
    pub log_bias: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub n: usize,
    pub estimator: Method,
    pub reps: usize,
    pub seed: u64,
    pub true_variance: f64,
    pub true_variance_se: f64,
    pub conventional: EstimatorBias,
    pub cauchy_schwarz: EstimatorBias,
    pub sharp: EstimatorBias,
    pub rejected_draws: u64,
    /// Draws violating `sharp_lower <= sharp_upper <= CS <= conventional`.
    pub ordering_violations: usize,
}

/// Small-sample bias of the conventional, Cauchy–Schwarz and sharp upper
/// estimators (conventional without degrees-of-freedom correction), against a
/// Monte Carlo true variance using [`TRUTH_REPS_FACTOR`] times as many draws.
pub fn monte_carlo_bias(
    pop: &FinitePopulation,
    design: &DesignSpec,
    estimator: Method,
    reps: usize,
    seed: u64,
) -> Result<BiasSummary> {
    if reps < MIN_BIAS_REPS {
        return Err(Error::InvalidParameter(format!(
            "bias study needs at least {MIN_BIAS_REPS} draws, got {reps}"
        )));
    }
    design.validate(pop.len())?;
    let estimate_seed = derive_seed(seed, STREAM_ESTIMATES, 0);
    let draws: Vec<([f64; 3], bool, u64)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let (z, rejected) =
                draw_valid_assignment(pop.len(), design, derive_seed(estimate_seed, 0, r))?;
            let (est, adj) = estimate_draw(pop, &z, design, estimator)?;
            let rep = variance_report(&adj, est.tau_hat, 0.05, false)?;
            let ordered = rep.v_sharp_lower <= rep.v_sharp_upper + 1e-12
                && rep.v_sharp_upper <= rep.v_cauchy_schwarz + 1e-12
                && rep.v_cauchy_schwarz <= rep.v_conventional + 1e-12;
            Ok((
                [rep.v_conventional, rep.v_cauchy_schwarz, rep.v_sharp_upper],
                ordered,
                rejected,
            ))
        })
        .collect::<Result<_>>()?;

    let (taus, truth_rejected) = tau_draws(
        pop,
        design,
        estimator,
        reps * TRUTH_REPS_FACTOR,
        derive_seed(seed, STREAM_TRUTH, 0),
    )?;
    let truth = moments(&taus);

    let summarize = |k: usize| {
        let v: Vec<f64> = draws.iter().map(|d| d.0[k]).collect();
        let m = moments(&v);
        let bias = m.mean - truth.variance;
        EstimatorBias {
            mean_estimate: m.mean,
            standard_error: m.se_mean,
            bias,
            bias_standard_error: (m.se_mean.powi(2) + truth.se_variance.powi(2)).sqrt(),
            log_bias: (bias > 0.0).then(|| bias.ln()),
        }
    };
    Ok(BiasSummary {
        n: pop.len(),
        estimator,
        reps,
        seed,
        true_variance: truth.variance,
        true_variance_se: truth.se_variance,
        conventional: summarize(0),
        cauchy_schwarz: summarize(1),
        sharp: summarize(2),
        rejected_draws: draws.iter().map(|d| d.2).sum::<u64>() + truth_rejected,
        ordering_violations: draws.iter().filter(|d| !d.1).count(),
    })
}

/// Mean cross-term estimates at one value of `θ`, all on the scale of
/// `2 · mean(ε₁ ε₀)`: conventional `Â + B̂`, Cauchy–Schwarz `2 √(Â B̂)`, sharp
/// `2 · comonotone cross-moment`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossTermPoint {
    pub theta: f64,
    pub reps: usize,
    pub seed: u64,
    pub conventional: f64,
    pub cauchy_schwarz: f64,
    pub sharp: f64,
    /// `2 · mean(ε₁ ε₀)` from the full potential-outcome table.
    pub oracle: f64,
    pub se_conventional: f64,
    pub se_cauchy_schwarz: f64,
    pub se_sharp: f64,
    /// Population-scale extremal cross terms (countermonotone, comonotone).
    pub oracle_lower: f64,
    pub oracle_upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossTermCurve {
    pub n: usize,
    pub points: Vec<CrossTermPoint>,
}

/// Sweeps `θ`, drawing one population per grid value and averaging the
/// cross-term estimates of Lin's estimator over `reps` assignments.
///
/// Streams are keyed by the value of `θ`, so a grid point's result does not
/// depend on the rest of the grid.
pub fn theta_sweep(
    theta_grid: &[f64],
    params_base: &DgpParams,
    design: &DesignSpec,
    reps: usize,
    seed: u64,
) -> Result<CrossTermCurve> {
    if theta_grid.is_empty() {
        return Err(Error::InvalidParameter("empty theta grid".into()));
    }
    if let Some(t) = theta_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidParameter(format!(
            "theta = {t} outside [0, 1]"
        )));
    }
    if reps < 2 {
        return Err(Error::InvalidParameter(format!(
            "theta sweep needs at least 2 draws, got {reps}"
        )));
    }
    design.validate(params_base.n)?;
    let mut grid = theta_grid.to_vec();
    grid.sort_by(f64::total_cmp);

    let points = grid
        .par_iter()
        .map(|&theta| {
            let key = theta.to_bits();
            let params = DgpParams {
                theta,
                ..*params_base
            };
            let pop = generate_population(&params, derive_seed(seed, STREAM_POPULATION, key))?;
            let (p1, p0) = population_residuals(&pop, Method::Lin)?;
            let n = pop.len() as f64;
            let oracle = 2.0 * p1.iter().zip(&p0).map(|(a, b)| a * b).sum::<f64>() / n;
            let (g, f) = (Ecdf::from_sample(&p1)?, Ecdf::from_sample(&p0)?);

            let draw_seed = derive_seed(seed, STREAM_SWEEP, key);
            let terms: Vec<[f64; 3]> = (0..reps as u64)
                .into_par_iter()
                .map(|r| {
                    let (z, _) =
                        draw_valid_assignment(pop.len(), design, derive_seed(draw_seed, 0, r))?;
                    let (est, adj) = estimate_draw(&pop, &z, design, Method::Lin)?;
                    let rep = variance_report(&adj, est.tau_hat, 0.05, false)?;
                    Ok([
                        rep.a_hat + rep.b_hat,
                        2.0 * (rep.a_hat * rep.b_hat).sqrt(),
                        2.0 * rep.cross_upper,
                    ])
                })
                .collect::<Result<_>>()?;
            let column = |k: usize| moments(&terms.iter().map(|t| t[k]).collect::<Vec<_>>());
            let (conv, cs, sharp) = (column(0), column(1), column(2));
            Ok(CrossTermPoint {
                theta,
                reps,
                seed,
                conventional: conv.mean,
                cauchy_schwarz: cs.mean,
                sharp: sharp.mean,
                oracle,
                se_conventional: conv.se_mean,
                se_cauchy_schwarz: cs.se_mean,
                se_sharp: sharp.se_mean,
                oracle_lower: 2.0 * countermonotone_cross_moment(&g, &f),
                oracle_upper: 2.0 * comonotone_cross_moment(&g, &f),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossTermCurve {
        n: params_base.n,
        points,
    })
}

/// Fraction of assignment draws whose Wald interval covers the true effect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub reps: usize,
    pub alpha: f64,
    pub tau: f64,
    pub conventional: f64,
    pub cauchy_schwarz: f64,
    pub sharp: f64,
}

pub fn coverage_study(
    pop: &FinitePopulation,
    design: &DesignSpec,
    estimator: Method,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<CoverageSummary> {
    if reps == 0 {
        return Err(Error::InvalidParameter("coverage study needs draws".into()));
    }
    let tau = pop.tau();
    let hits: Vec<[bool; 3]> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let (z, _) =
                draw_valid_assignment(pop.len(), design, derive_seed(seed, STREAM_COVERAGE, r))?;
            let (est, adj) = estimate_draw(pop, &z, design, estimator)?;
            let rep = variance_report(&adj, est.tau_hat, alpha, false)?;
            Ok([
                rep.ci_conventional.contains(tau),
                rep.ci_cauchy_schwarz.contains(tau),
                rep.ci_sharp.contains(tau),
            ])
        })
        .collect::<Result<_>>()?;
    let rate = |k: usize| hits.iter().filter(|h| h[k]).count() as f64 / reps as f64;
    Ok(CoverageSummary {
        reps,
        alpha,
        tau,
        conventional: rate(0),
        cauchy_schwarz: rate(1),
        sharp: rate(2),
    })
}
