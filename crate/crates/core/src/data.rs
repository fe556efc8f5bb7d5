//! Price-series ingestion, return computation, and train/test splitting.
//!
//! Input files are CSV with header `date,adj_close`: ISO-8601 calendar dates
//! and positive adjusted-close prices. Returns are continuously-compounded
//! percent returns on adjusted close, r_t = 100 ln(P_t / P_{t-1}), dated by
//! the later of the two prices.

use chrono::{Datelike, NaiveDate};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("expected header `date,adj_close`, found `{found}`")]
    BadHeader { found: String },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: adjusted close must be positive, got {value}")]
    NonpositivePrice { line: u64, value: f64 },
    #[error("duplicate date {date} in price series")]
    DuplicateDate { date: NaiveDate },
    #[error("price series needs at least 2 observations, got {len}")]
    TooShort { len: usize },
    #[error("price at index {index} must be positive, got {value}")]
    InvalidPrice { index: usize, value: f64 },
    #[error("no returns dated in or before {cutoff_year}: training window is empty")]
    EmptyTrainingWindow { cutoff_year: i32 },
    #[error("every return is dated in or before {cutoff_year}: test window is empty")]
    NoTestWindow { cutoff_year: i32 },
}

/// Adjusted-close prices on strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<f64>,
}

/// Continuously-compounded percent returns; one fewer entry than prices,
/// each dated by the later price.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.returns
    }

    /// Training and test slices (y_{1:s}, y_{s+1:T}) for a computed split.
    pub fn split(&self, spec: &SplitSpec) -> (&[f64], &[f64]) {
        self.returns.split_at(spec.s)
    }
}

/// Training length s and total length T of a train/test split, 1 <= s < T.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    /// Number of training returns y_{1:s}.
    pub s: usize,
    /// Total number of returns.
    pub t: usize,
}

/// A parsed series plus non-fatal ingestion warnings for the caller to
/// surface.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub series: PriceSeries,
    pub warnings: Vec<String>,
}

/// Load and validate a `date,adj_close` CSV. Malformed rows are rejected
/// with their line numbers; duplicate dates are rejected; rows out of date
/// order are sorted with a warning in the report.
pub fn load_prices(path: &Path) -> Result<LoadReport, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != ["date", "adj_close"] {
        return Err(DataError::BadHeader { found: found.join(",") });
    }

    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(DataError::Malformed {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let date: NaiveDate = record[0].parse().map_err(|e| DataError::Malformed {
            line,
            message: format!("bad date `{}`: {e}", &record[0]),
        })?;
        let price: f64 = record[1].parse().map_err(|e| DataError::Malformed {
            line,
            message: format!("bad price `{}`: {e}", &record[1]),
        })?;
        if !price.is_finite() || price <= 0.0 {
            return Err(DataError::NonpositivePrice { line, value: price });
        }
        rows.push((date, price));
    }

    let mut warnings = Vec::new();
    if rows.windows(2).any(|w| w[1].0 < w[0].0) {
        rows.sort_by_key(|(date, _)| *date);
        warnings.push("input rows were not in date order; sorted ascending by date".to_string());
    }
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(DataError::DuplicateDate { date: w[0].0 });
    }

    let (dates, prices) = rows.into_iter().unzip();
    Ok(LoadReport { series: PriceSeries { dates, prices }, warnings })
}

/// r_t = 100 ln(P_t / P_{t-1}) for t = 2..=T, dated by the later price.
pub fn log_returns(series: &PriceSeries) -> Result<ReturnSeries, DataError> {
    if series.prices.len() < 2 {
        return Err(DataError::TooShort { len: series.prices.len() });
    }
    if let Some((index, &value)) = series
        .prices
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p <= 0.0)
    {
        return Err(DataError::InvalidPrice { index, value });
    }
    let returns = series
        .prices
        .windows(2)
        .map(|w| 100.0 * (w[1] / w[0]).ln())
        .collect();
    Ok(ReturnSeries { dates: series.dates[1..].to_vec(), returns })
}

/// Split a return series into training returns (dated in or before
/// `cutoff_year`) and test returns (everything after). Both windows must be
/// nonempty.
pub fn split_by_year(series: &ReturnSeries, cutoff_year: i32) -> Result<SplitSpec, DataError> {
    let t = series.len();
    let s = series
        .dates
        .iter()
        .filter(|d| d.year() <= cutoff_year)
        .count();
    if s == 0 {
        return Err(DataError::EmptyTrainingWindow { cutoff_year });
    }
    if s == t {
        return Err(DataError::NoTestWindow { cutoff_year });
    }
    Ok(SplitSpec { s, t })
}
