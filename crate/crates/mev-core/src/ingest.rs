//! CSV ingestion of daily series, analysis-interval selection, and
//! byte-stable export of Gumbel-plot data.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::blocks::{DailyRecord, DailySeries};
use crate::error::{MevError, Result};
use crate::montecarlo::GumbelPlotSeries;

fn default_date_column() -> String {
    "date".into()
}
fn default_amount_column() -> String {
    "amount_mm".into()
}
fn default_threshold() -> f64 {
    10.0
}
fn default_replicates() -> usize {
    200
}
fn default_widths() -> Vec<usize> {
    vec![10, 5, 2, 1]
}

/// Station-level analysis configuration, read from TOML or JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationConfig {
    #[serde(default)]
    pub input_path: Option<String>,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_amount_column")]
    pub amount_column: String,
    #[serde(default = "default_threshold")]
    pub threshold_h0: f64,
    #[serde(default)]
    pub trace_threshold: f64,
    /// Non-overlapping, ordered (start_year, end_year) analysis intervals.
    #[serde(default)]
    pub intervals: Vec<(i32, i32)>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
}

impl Default for StationConfig {
    fn default() -> Self {
        Self {
            input_path: None,
            date_column: default_date_column(),
            amount_column: default_amount_column(),
            threshold_h0: default_threshold(),
            trace_threshold: 0.0,
            intervals: Vec::new(),
            seed: 0,
            replicates: default_replicates(),
            widths: default_widths(),
        }
    }
}

impl StationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_h0 < 0.0 {
            return Err(MevError::InvalidParameter(
                "threshold_h0 must be non-negative".into(),
            ));
        }
        for pair in self.intervals.windows(2) {
            if pair[1].0 <= pair[0].1 {
                return Err(MevError::InvalidParameter(format!(
                    "intervals must be ordered and non-overlapping: {:?} then {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        for &(start, end) in &self.intervals {
            if end < start {
                return Err(MevError::InvalidParameter(format!(
                    "interval {start}-{end} ends before it starts"
                )));
            }
        }
        Ok(())
    }

    /// Load from a `.toml` or `.json` file, deciding by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| MevError::Parse {
                row: 0,
                message: e.to_string(),
            })?
        };
        config.validate()?;
        Ok(config)
    }
}

/// Parse a daily CSV: ISO-8601 dates, non-negative amounts, strictly
/// increasing dates. Gaps stay absent (missing, not zero).
pub fn parse_daily_csv(path: &Path, config: &StationConfig) -> Result<DailySeries> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| MevError::Io(std::io::Error::other(e.to_string())))?;
    let headers = reader
        .headers()
        .map_err(|e| MevError::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| MevError::Parse {
            row: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let date_idx = col(&config.date_column)?;
    let amount_idx = col(&config.amount_column)?;

    let mut records = Vec::new();
    let mut prev: Option<NaiveDate> = None;
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2; // 1-based, after the header
        let row = row.map_err(|e| MevError::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let date_str = row.get(date_idx).ok_or_else(|| MevError::Parse {
            row: row_no,
            message: "missing date field".into(),
        })?;
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|e| MevError::Parse {
            row: row_no,
            message: format!("bad date '{date_str}': {e}"),
        })?;
        let amount_str = row.get(amount_idx).ok_or_else(|| MevError::Parse {
            row: row_no,
            message: "missing amount field".into(),
        })?;
        let amount: f64 = amount_str.trim().parse().map_err(|e| MevError::Parse {
            row: row_no,
            message: format!("bad amount '{amount_str}': {e}"),
        })?;
        if amount < 0.0 {
            return Err(MevError::NegativeAmount {
                row: row_no,
                amount,
            });
        }
        match prev {
            Some(p) if date == p => {
                return Err(MevError::DuplicateDate {
                    row: row_no,
                    date: date.to_string(),
                })
            }
            Some(p) if date < p => {
                return Err(MevError::Parse {
                    row: row_no,
                    message: format!("dates not increasing: {p} then {date}"),
                })
            }
            _ => {}
        }
        prev = Some(date);
        records.push(DailyRecord {
            date,
            amount_mm: amount,
        });
    }
    let station = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("station")
        .to_string();
    DailySeries::new(records, station)
}

/// Records with year in `[start_year, end_year]`, metadata annotated.
pub fn select_interval(series: &DailySeries, start_year: i32, end_year: i32) -> Result<DailySeries> {
    let records: Vec<DailyRecord> = series
        .records
        .iter()
        .copied()
        .filter(|r| (start_year..=end_year).contains(&r.date.year()))
        .collect();
    if records.is_empty() {
        return Err(MevError::EmptyInterval {
            start: start_year,
            end: end_year,
        });
    }
    let base = series
        .station
        .split(" [")
        .next()
        .unwrap_or(&series.station);
    DailySeries::new(records, format!("{base} [{start_year}-{end_year}]"))
}

/// Output file format for plot data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// 10 significant digits, fixed scientific notation; byte-stable.
pub fn fmt_sig10(x: f64) -> String {
    format!("{x:.9e}")
}

/// Write Gumbel-plot series as CSV (label, y_mm, reduced_variate, comment)
/// or the JSON equivalent. Clamped points are flagged in the comment column.
pub fn export_gumbel_plot(
    series_list: &[GumbelPlotSeries],
    path: &Path,
    format: ExportFormat,
) -> Result<()> {
    for series in series_list {
        for p in &series.points {
            if !p.y_mm.is_finite() || !p.reduced_variate.is_finite() {
                return Err(MevError::NonFiniteValue(format!(
                    "series '{}' at y={}",
                    series.label, p.y_mm
                )));
            }
        }
    }
    let mut out = String::new();
    match format {
        ExportFormat::Csv => {
            out.push_str("label,y_mm,reduced_variate,comment\n");
            for series in series_list {
                for p in &series.points {
                    let comment = if p.clamped { "clamped" } else { "" };
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        series.label,
                        fmt_sig10(p.y_mm),
                        fmt_sig10(p.reduced_variate),
                        comment
                    ));
                }
            }
        }
        ExportFormat::Json => {
            #[derive(Serialize)]
            struct JsonPoint<'a> {
                y_mm: &'a str,
                reduced_variate: &'a str,
                clamped: bool,
            }
            #[derive(Serialize)]
            struct JsonSeries<'a> {
                label: &'a str,
                points: Vec<JsonPoint<'a>>,
            }
            let rendered: Vec<(String, Vec<(String, String, bool)>)> = series_list
                .iter()
                .map(|s| {
                    (
                        s.label.clone(),
                        s.points
                            .iter()
                            .map(|p| (fmt_sig10(p.y_mm), fmt_sig10(p.reduced_variate), p.clamped))
                            .collect(),
                    )
                })
                .collect();
            let doc: Vec<JsonSeries> = rendered
                .iter()
                .map(|(label, points)| JsonSeries {
                    label,
                    points: points
                        .iter()
                        .map(|(y, rv, clamped)| JsonPoint {
                            y_mm: y,
                            reduced_variate: rv,
                            clamped: *clamped,
                        })
                        .collect(),
                })
                .collect();
            out = serde_json::to_string_pretty(&doc)?;
            out.push('\n');
        }
    }
    let mut file = File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
