//! Group comparisons: two-sample t-tests, Fisher's exact test and the
//! Shapiro-Wilk normality test.

mod compare;
mod fisher;
mod shapiro;
pub mod special;
mod ttest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compare::{
    compare_categorical, compare_summaries, demographic_rows, format_p, group_compare, normality_table,
    read_categorical_csv, read_summary_csv, write_categorical_csv, write_normality_csv, write_report_csv,
    write_t_values_csv, write_table_layout_csv, CategoricalCounts, CategoricalRow, CompareOptions, ComparisonRow,
    NormalityRow, RegionSummary, P_FLOOR, SIGNIFICANCE,
};
pub use fisher::{fisher_exact, FisherResult};
pub use shapiro::shapiro_wilk;
pub use ttest::{t_test_raw, t_test_summary, SummaryStat, TTestVariant};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("{what} needs at least {need} samples, got {got}")]
    InsufficientSamples {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("contingency table is all zero")]
    AllZeroTable,
    #[error("region {0} has no volumes in the cohort")]
    UnknownRegion(String),
    #[error("group {0} has no subjects")]
    SingleGroup(&'static str),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "pooled-t")]
    PooledT,
    #[serde(rename = "welch-t")]
    WelchT,
    /// Lower tail: P(X ≤ observed).
    #[serde(rename = "fisher-exact-1s")]
    FisherLower,
    #[serde(rename = "fisher-exact-upper")]
    FisherUpper,
    #[serde(rename = "fisher-exact-2s")]
    FisherTwoSided,
    #[serde(rename = "shapiro-wilk")]
    ShapiroWilk,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::PooledT => "pooled-t",
            Method::WelchT => "welch-t",
            Method::FisherLower => "fisher-exact-1s",
            Method::FisherUpper => "fisher-exact-upper",
            Method::FisherTwoSided => "fisher-exact-2s",
            Method::ShapiroWilk => "shapiro-wilk",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: Option<f64>,
    pub p: f64,
    pub method: Method,
    /// Set when the p-value is a convention rather than a computed tail.
    pub degenerate: bool,
}
