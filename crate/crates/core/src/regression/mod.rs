//! Linear models of genuine-pair scores: a small term language, a catalog of
//! named models, QR least squares with t-tests, and Table-style reports.

pub mod design;
pub mod ols;
pub mod report;
pub mod student_t;
pub mod terms;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ComparisonRecord;
use crate::par::{self, Execution};
use crate::quality::Family;

pub use design::{design_matrix, term_value};
pub use ols::{fit_ols, Matrix, OlsFit, TermFit};
pub use report::{fit_report, Report};
pub use student_t::student_t_sf;
pub use terms::{parse_models, Covariate, ModelSpec, Slot, Term};

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("model `{model}`: {message}")]
    InvalidModel { model: String, message: String },
    #[error("model syntax: {0}")]
    Syntax(String),
    #[error("unknown model `{name}`; catalog models: {available}")]
    UnknownModel { name: String, available: String },
    #[error("no observations")]
    EmptyInput,
    #[error("model `{model}` needs {term} but pair ({}, {}) lacks it", pair.0, pair.1)]
    MissingCovariate {
        model: String,
        term: String,
        pair: (String, String),
    },
    #[error("{n} observations cannot identify {p} coefficients")]
    Underdetermined { n: usize, p: usize },
    #[error("design matrix is rank deficient in columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },
    #[error("non-finite value in design matrix or response")]
    NonFinite,
    #[error("degrees of freedom must be >= 1, got {0}")]
    InvalidDf(f64),
}

/// Every named model: the D, B and V families plus the three final models.
pub fn catalog() -> Vec<ModelSpec> {
    parse_models(CATALOG).expect("embedded catalog is valid")
}

/// Text of the embedded catalog file.
pub fn catalog_text() -> &'static str {
    CATALOG
}

/// Looks models up by name in `models`.
pub fn select_models(models: &[ModelSpec], names: &[&str]) -> Result<Vec<ModelSpec>, RegressionError> {
    names
        .iter()
        .map(|name| {
            models
                .iter()
                .find(|m| m.name == *name)
                .cloned()
                .ok_or_else(|| RegressionError::UnknownModel {
                    name: name.to_string(),
                    available: models.iter().map(|m| m.name.as_str()).collect::<Vec<_>>().join(", "),
                })
        })
        .collect()
}

const CATALOG: &str = include_str!("catalog.txt");

pub const DAYS_PER_YEAR: f64 = 365.25;

/// A fitted named model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub family: Family,
    pub n: usize,
    pub df: usize,
    pub terms: Vec<TermFit>,
    pub r2: f64,
    pub residual_variance: f64,
}

impl FitResult {
    pub fn term(&self, name: &str) -> Option<&TermFit> {
        self.terms.iter().find(|t| t.name == name)
    }

    /// Time coefficient in score units per day.
    pub fn time_slope(&self) -> Option<f64> {
        self.term(&Term::Time.to_string()).map(|t| t.beta)
    }

    pub fn time_slope_per_year(&self) -> Option<f64> {
        self.time_slope().map(|b| b * DAYS_PER_YEAR)
    }
}

/// Fits one model to the records.
pub fn fit_model(records: &[ComparisonRecord], spec: &ModelSpec) -> Result<FitResult, RegressionError> {
    spec.validate()?;
    let (x, y) = design_matrix(records, spec)?;
    let fit = fit_ols(&x, &y)?;
    let terms = spec
        .terms
        .iter()
        .enumerate()
        .map(|(j, term)| TermFit {
            name: term.to_string(),
            beta: fit.beta[j],
            se: fit.se[j],
            t: fit.t[j],
            p: fit.p[j],
        })
        .collect();
    Ok(FitResult {
        model: spec.name.clone(),
        family: spec.family,
        n: fit.n,
        df: fit.df(),
        terms,
        r2: fit.r2,
        residual_variance: fit.residual_variance,
    })
}

/// Fits several models independently; results keep the input order.
pub fn fit_models(
    records: &[ComparisonRecord],
    specs: &[ModelSpec],
    exec: Execution,
) -> Result<Vec<FitResult>, RegressionError> {
    par::try_map(exec, specs, |spec| fit_model(records, spec))
}
