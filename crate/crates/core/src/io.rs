//! CSV ingestion and report records.
//!
//! Input files are comma-delimited UTF-8 with a header row. Missing cells are
//! errors; nothing is imputed. Reports are flat records written either as JSON
//! (with a top-level `schema_version`) or as a one-row CSV with the same field
//! names. Floats use the shortest representation that parses back to the same
//! value.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::adjust::{encode_strata, label_strata, AdjustedSamples, ExperimentData, Method};
use crate::diagnostics::{bound_ratios, sorted_residual_correlation, QqSeries};
use crate::error::{Error, Result};
use crate::simulate::{BiasSummary, CrossTermPoint, DesignSpec};
use crate::variance::VarianceReport;

pub const SCHEMA_VERSION: u32 = 1;

/// Column roles in an input file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub outcome_column: String,
    pub treatment_column: String,
    pub covariate_columns: Vec<String>,
    pub strata_column: Option<String>,
}

impl CsvSchema {
    pub fn new(outcome: &str, treatment: &str) -> Self {
        CsvSchema {
            outcome_column: outcome.to_string(),
            treatment_column: treatment.to_string(),
            covariate_columns: Vec::new(),
            strata_column: None,
        }
    }

    fn columns(&self) -> Vec<&str> {
        let mut cols = vec![self.outcome_column.as_str(), self.treatment_column.as_str()];
        cols.extend(self.covariate_columns.iter().map(String::as_str));
        cols.extend(self.strata_column.as_deref());
        cols
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in self.columns() {
            if c.is_empty() {
                return Err(Error::InvalidParameter("empty column name".into()));
            }
            if !seen.insert(c) {
                return Err(Error::InvalidParameter(format!("column `{c}` named twice")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub estimator: Method,
    pub alpha: f64,
    pub df_correct: bool,
    pub seed: Option<u64>,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            estimator: Method::Lin,
            alpha: 0.05,
            df_correct: false,
            seed: None,
            output_format: OutputFormat::Json,
            output_path: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<ExperimentData> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, schema)
}

/// [`load_csv`] on any reader.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<ExperimentData> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
    };
    let y_col = position(&schema.outcome_column)?;
    let z_col = position(&schema.treatment_column)?;
    let x_cols = schema
        .covariate_columns
        .iter()
        .map(|c| position(c))
        .collect::<Result<Vec<_>>>()?;
    let s_col = schema.strata_column.as_deref().map(position).transpose()?;

    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut x: Vec<f64> = Vec::new();
    let mut strata = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |col: usize| -> Result<&str> {
            let v = record.get(col).map(str::trim).unwrap_or("");
            if v.is_empty() {
                return Err(Error::Data(format!(
                    "row {row}, column `{}`: missing value",
                    &headers[col]
                )));
            }
            Ok(v)
        };
        let number = |col: usize| -> Result<f64> {
            let v = cell(col)?;
            match v.parse::<f64>() {
                Ok(f) if f.is_finite() => Ok(f),
                _ => Err(Error::Data(format!(
                    "row {row}, column `{}`: `{v}` is not a finite number",
                    &headers[col]
                ))),
            }
        };
        y.push(number(y_col)?);
        z.push(match cell(z_col)? {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Data(format!(
                    "row {row}, column `{}`: treatment must be 0 or 1, got `{other}`",
                    &headers[z_col]
                )))
            }
        });
        for &c in &x_cols {
            x.push(number(c)?);
        }
        if let Some(c) = s_col {
            strata.push(cell(c)?.to_string());
        }
    }
    if y.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }

    let n = y.len();
    let k = x_cols.len();
    let mut covariates = DMatrix::from_row_slice(n, k, &x);
    if s_col.is_some() {
        let dummies = encode_strata(&label_strata(&strata))?;
        let extra = dummies.ncols();
        covariates = covariates.resize_horizontally(k + extra, 0.0);
        covariates.columns_mut(k, extra).copy_from(&dummies);
    }
    ExperimentData::new(y, z, covariates)
}

/// Flat estimate report, one record per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub schema_version: u32,
    pub estimator: Method,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub n_covariates: usize,
    pub tau_hat: f64,
    pub alpha: f64,
    pub df_correct: bool,
    pub v_conventional: f64,
    pub v_cauchy_schwarz: f64,
    pub v_sharp_upper: f64,
    pub v_sharp_lower: f64,
    pub a_hat: f64,
    pub b_hat: f64,
    pub cross_upper: f64,
    pub cross_lower: f64,
    pub ci_conventional_lo: f64,
    pub ci_conventional_hi: f64,
    pub ci_cauchy_schwarz_lo: f64,
    pub ci_cauchy_schwarz_hi: f64,
    pub ci_sharp_lo: f64,
    pub ci_sharp_hi: f64,
    /// `v_sharp_upper / v_conventional`
    pub conv_ratio: Option<f64>,
    /// `v_sharp_upper / v_cauchy_schwarz`
    pub cs_ratio: Option<f64>,
    pub conv_reduction: Option<f64>,
    pub rho: Option<f64>,
    pub rho_note: Option<String>,
    pub degenerate: bool,
    pub warning: Option<String>,
}

impl EstimateRecord {
    pub fn new(
        estimator: Method,
        data: &ExperimentData,
        adj: &AdjustedSamples,
        report: &VarianceReport,
        warning: Option<String>,
    ) -> Self {
        let ratios = bound_ratios(report).ok();
        let (rho, rho_note) = rho_with_note(adj);
        EstimateRecord {
            schema_version: SCHEMA_VERSION,
            estimator,
            n: data.len(),
            n_treated: data.n_treated(),
            n_control: data.n_control(),
            n_covariates: data.n_covariates(),
            tau_hat: report.tau_hat,
            alpha: report.alpha,
            df_correct: report.df_correct,
            v_conventional: report.v_conventional,
            v_cauchy_schwarz: report.v_cauchy_schwarz,
            v_sharp_upper: report.v_sharp_upper,
            v_sharp_lower: report.v_sharp_lower,
            a_hat: report.a_hat,
            b_hat: report.b_hat,
            cross_upper: report.cross_upper,
            cross_lower: report.cross_lower,
            ci_conventional_lo: report.ci_conventional.lo,
            ci_conventional_hi: report.ci_conventional.hi,
            ci_cauchy_schwarz_lo: report.ci_cauchy_schwarz.lo,
            ci_cauchy_schwarz_hi: report.ci_cauchy_schwarz.hi,
            ci_sharp_lo: report.ci_sharp.lo,
            ci_sharp_hi: report.ci_sharp.hi,
            conv_ratio: ratios.map(|r| r.conv_ratio),
            cs_ratio: ratios.map(|r| r.cs_ratio),
            conv_reduction: ratios.map(|r| r.conv_reduction),
            rho,
            rho_note,
            degenerate: report.is_degenerate(),
            warning,
        }
    }
}

/// Sorted-residual correlation, or the reason it is not reported.
pub fn rho_with_note(adj: &AdjustedSamples) -> (Option<f64>, Option<String>) {
    if adj.realized_nt() != adj.realized_ntbar() {
        return (
            None,
            Some(format!(
                "unbalanced arms ({} treated, {} control)",
                adj.realized_nt(),
                adj.realized_ntbar()
            )),
        );
    }
    match sorted_residual_correlation(adj) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Summary printed by the diagnose command alongside the Q-Q file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseRecord {
    pub schema_version: u32,
    pub estimator: Method,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub qq_points: usize,
    pub rho: Option<f64>,
    pub rho_note: Option<String>,
    pub conv_ratio: Option<f64>,
    pub cs_ratio: Option<f64>,
    pub conv_reduction: Option<f64>,
    pub warning: Option<String>,
}

#[derive(Serialize)]
struct QqRow {
    prob: f64,
    q_treated: f64,
    q_control: f64,
}

pub fn write_qq_csv<W: Write>(out: W, qq: &QqSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for i in 0..qq.len() {
        w.serialize(QqRow {
            prob: qq.probs[i],
            q_treated: qq.q_treated[i],
            q_control: qq.q_control[i],
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub n: usize,
    pub theta: f64,
    pub estimator: Method,
    pub design: String,
    pub reps: usize,
    pub seed: u64,
    pub true_variance: f64,
    pub true_variance_se: f64,
    pub conventional_mean: f64,
    pub conventional_bias: f64,
    pub conventional_bias_se: f64,
    pub conventional_log_bias: Option<f64>,
    pub cauchy_schwarz_mean: f64,
    pub cauchy_schwarz_bias: f64,
    pub cauchy_schwarz_bias_se: f64,
    pub cauchy_schwarz_log_bias: Option<f64>,
    pub sharp_mean: f64,
    pub sharp_bias: f64,
    pub sharp_bias_se: f64,
    pub sharp_log_bias: Option<f64>,
    pub rejected_draws: u64,
    pub ordering_violations: usize,
}

impl BiasRow {
    pub fn new(s: &BiasSummary, theta: f64, design: &DesignSpec) -> Self {
        BiasRow {
            n: s.n,
            theta,
            estimator: s.estimator,
            design: design_label(design),
            reps: s.reps,
            seed: s.seed,
            true_variance: s.true_variance,
            true_variance_se: s.true_variance_se,
            conventional_mean: s.conventional.mean_estimate,
            conventional_bias: s.conventional.bias,
            conventional_bias_se: s.conventional.bias_standard_error,
            conventional_log_bias: s.conventional.log_bias,
            cauchy_schwarz_mean: s.cauchy_schwarz.mean_estimate,
            cauchy_schwarz_bias: s.cauchy_schwarz.bias,
            cauchy_schwarz_bias_se: s.cauchy_schwarz.bias_standard_error,
            cauchy_schwarz_log_bias: s.cauchy_schwarz.log_bias,
            sharp_mean: s.sharp.mean_estimate,
            sharp_bias: s.sharp.bias,
            sharp_bias_se: s.sharp.bias_standard_error,
            sharp_log_bias: s.sharp.log_bias,
            rejected_draws: s.rejected_draws,
            ordering_violations: s.ordering_violations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub theta: f64,
    pub design: String,
    pub reps: usize,
    pub seed: u64,
    pub conventional: f64,
    pub cauchy_schwarz: f64,
    pub sharp: f64,
    pub oracle: f64,
    pub se_conventional: f64,
    pub se_cauchy_schwarz: f64,
    pub se_sharp: f64,
    pub oracle_lower: f64,
    pub oracle_upper: f64,
}

impl SweepRow {
    pub fn new(n: usize, p: &CrossTermPoint, design: &DesignSpec) -> Self {
        SweepRow {
            n,
            theta: p.theta,
            design: design_label(design),
            reps: p.reps,
            seed: p.seed,
            conventional: p.conventional,
            cauchy_schwarz: p.cauchy_schwarz,
            sharp: p.sharp,
            oracle: p.oracle,
            se_conventional: p.se_conventional,
            se_cauchy_schwarz: p.se_cauchy_schwarz,
            se_sharp: p.se_sharp,
            oracle_lower: p.oracle_lower,
            oracle_upper: p.oracle_upper,
        }
    }
}

/// `cre:<n1>` or `bre:<pi>`.
pub fn design_label(design: &DesignSpec) -> String {
    match design {
        DesignSpec::Complete { n1 } => format!("cre:{n1}"),
        DesignSpec::Bernoulli { pi } => format!("bre:{pi}"),
    }
}

pub fn write_csv_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_rows<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
