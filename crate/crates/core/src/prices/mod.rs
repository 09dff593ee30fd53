//! Hourly electricity prices, representative-day clustering and synthetic
//! series.

mod cluster;
pub mod synthetic;

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

pub use cluster::{cluster, kmeans, reconstruct_annual, KMeansResult, RepDaySet};

pub const HOURS_PER_DAY: usize = 24;
pub const DAYS_PER_YEAR: usize = 365;
pub const HOURS_PER_YEAR: usize = HOURS_PER_DAY * DAYS_PER_YEAR;
const LEAP_HOURS: usize = HOURS_PER_YEAR + HOURS_PER_DAY;
/// Index of 29 February in a leap year (0-based day of year).
const LEAP_DAY: usize = 59;
const DAYS_IN_MONTH: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, thiserror::Error)]
pub enum PriceError {
    #[error("cannot read price file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("price file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("expected 8760 hourly rows, found {0}")]
    RowCount(usize),
    #[error("price series length {0} is not a whole number of days")]
    PartialDay(usize),
    #[error("invalid clustering request: {0}")]
    Cluster(String),
    #[error("unknown price pattern '{0}'")]
    UnknownPattern(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriceFormat {
    /// Header `timestamp,price_usd_per_mwh`.
    #[default]
    Csv,
    /// One price per line, no header.
    Headerless,
}

/// Hourly prices in $/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub values: Vec<f64>,
    pub label: String,
}

impl PriceSeries {
    /// A series of whole days; any number of days is accepted.
    pub fn from_days(values: Vec<f64>, label: impl Into<String>) -> Result<Self, PriceError> {
        if values.is_empty() || values.len() % HOURS_PER_DAY != 0 {
            return Err(PriceError::PartialDay(values.len()));
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    /// A full non-leap year.
    pub fn annual(values: Vec<f64>, label: impl Into<String>) -> Result<Self, PriceError> {
        if values.len() != HOURS_PER_YEAR {
            return Err(PriceError::RowCount(values.len()));
        }
        Self::from_days(values, label)
    }

    pub fn num_days(&self) -> usize {
        self.values.len() / HOURS_PER_DAY
    }

    pub fn day(&self, d: usize) -> &[f64] {
        &self.values[d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        (self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    /// Prices sorted from highest to lowest.
    pub fn duration_curve(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

/// ISO timestamp of hour `h` in a non-leap year.
pub fn timestamp(year: i32, h: usize) -> String {
    let mut day = h / HOURS_PER_DAY;
    let hour = h % HOURS_PER_DAY;
    let mut month = 0;
    while month < 11 && day >= DAYS_IN_MONTH[month] {
        day -= DAYS_IN_MONTH[month];
        month += 1;
    }
    format!("{year:04}-{:02}-{:02}T{hour:02}:00", month + 1, day + 1)
}

fn parse_price(raw: &str, row: usize, path: &str) -> Result<f64, PriceError> {
    let v: f64 = raw.trim().parse().map_err(|_| PriceError::Parse {
        path: path.to_string(),
        message: format!("row {row}: cannot parse price '{}'", raw.trim()),
    })?;
    if !v.is_finite() {
        return Err(PriceError::Parse {
            path: path.to_string(),
            message: format!("row {row}: price is not finite"),
        });
    }
    Ok(v)
}

/// Loads one year of hourly prices. Leap years lose 29 February.
pub fn load_prices(path: &Path, format: PriceFormat) -> Result<PriceSeries, PriceError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| PriceError::Io {
        path: display.clone(),
        source,
    })?;
    let mut values = Vec::with_capacity(LEAP_HOURS);
    let mut stamps: Vec<String> = Vec::new();
    match format {
        PriceFormat::Headerless => {
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                values.push(parse_price(line, n + 1, &display)?);
            }
        }
        PriceFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            let headers = rdr.headers().map_err(|e| PriceError::Parse {
                path: display.clone(),
                message: e.to_string(),
            })?;
            let price_col = headers
                .iter()
                .position(|h| h == "price_usd_per_mwh")
                .ok_or_else(|| PriceError::Parse {
                    path: display.clone(),
                    message: "missing column 'price_usd_per_mwh'".into(),
                })?;
            let ts_col = headers.iter().position(|h| h == "timestamp");
            for (n, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| PriceError::Parse {
                    path: display.clone(),
                    message: e.to_string(),
                })?;
                let raw = rec.get(price_col).ok_or_else(|| PriceError::Parse {
                    path: display.clone(),
                    message: format!("row {}: missing price field", n + 2),
                })?;
                values.push(parse_price(raw, n + 2, &display)?);
                if let Some(c) = ts_col {
                    stamps.push(rec.get(c).unwrap_or("").to_string());
                }
            }
        }
    }
    match values.len() {
        HOURS_PER_YEAR => {}
        LEAP_HOURS => {
            warn!("{display}: 8784 rows (leap year); dropping 29 February");
            let leap_rows: Vec<usize> = stamps
                .iter()
                .enumerate()
                .filter(|(_, s)| s.contains("-02-29"))
                .map(|(k, _)| k)
                .collect();
            if leap_rows.len() == HOURS_PER_DAY {
                let first = leap_rows[0];
                values.drain(first..first + HOURS_PER_DAY);
            } else {
                let first = LEAP_DAY * HOURS_PER_DAY;
                values.drain(first..first + HOURS_PER_DAY);
            }
        }
        n => return Err(PriceError::RowCount(n)),
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PriceSeries::annual(values, label)
}

/// Writes a series in the CSV format read by [`load_prices`].
pub fn write_prices(path: &Path, series: &PriceSeries) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "price_usd_per_mwh"])?;
    for (h, v) in series.values.iter().enumerate() {
        w.write_record([timestamp(2022, h), format!("{v}")])?;
    }
    w.flush()
}
