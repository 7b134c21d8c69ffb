//! Per-site stage timings, their aggregation, and speedup against
//! photogrammetry baseline hours.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

/// Shipped reference timings: eight sites with 2D/3D stage seconds and a
/// structure-from-motion hour range.
pub const BENCHMARK_CSV: &str = include_str!("../fixtures/metrics.csv");

const SECONDS_PER_HOUR: f64 = 3600.0;
/// Rows whose `total` differs from `t2d + t3d` by more than this are rejected.
const TOTAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no rows to aggregate")]
    Empty,
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("baseline range [{low}, {high}] is inverted")]
    InvertedBaseline { low: f64, high: f64 },
    #[error("row {site:?}: total {total} != {t2d} + {t3d}")]
    TotalMismatch {
        site: String,
        t2d: f64,
        t3d: f64,
        total: f64,
    },
    #[error("summary does not match the rows it is reported with")]
    MismatchedSummary,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Photogrammetry (SfM + MVS) time estimate in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineHours {
    pub low: f64,
    pub high: f64,
}

impl BaselineHours {
    pub fn new(low: f64, high: f64) -> Result<Self, MetricsError> {
        if !(low > 0.0) {
            return Err(MetricsError::NonPositive {
                what: "baseline low",
                value: low,
            });
        }
        if !(high >= low) {
            return Err(MetricsError::InvertedBaseline { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn midpoint(&self) -> f64 {
        (self.low + self.high) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub site_name: String,
    pub t2d: f64,
    pub t3d: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineHours>,
}

impl MetricsRow {
    pub fn new(site_name: impl Into<String>, t2d: f64, t3d: f64, baseline: Option<BaselineHours>) -> Self {
        Self {
            site_name: site_name.into(),
            t2d,
            t3d,
            total: t2d + t3d,
            baseline,
        }
    }

    pub fn check(&self) -> Result<(), MetricsError> {
        if (self.total - (self.t2d + self.t3d)).abs() > TOTAL_TOLERANCE {
            return Err(MetricsError::TotalMismatch {
                site: self.site_name.clone(),
                t2d: self.t2d,
                t3d: self.t3d,
                total: self.total,
            });
        }
        if let Some(b) = self.baseline {
            BaselineHours::new(b.low, b.high)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub rows: usize,
    pub mean_t2d: f64,
    pub mean_t3d: f64,
    pub mean_total: f64,
    /// Means over rows that carry a baseline; `None` when none do.
    pub mean_baseline_low: Option<f64>,
    pub mean_baseline_high: Option<f64>,
    pub mean_baseline_mid: Option<f64>,
    pub speedup_low: Option<f64>,
    pub speedup_high: Option<f64>,
}

/// Order-independent mean: values are summed in sorted order.
fn mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Some(values.into_iter().sum::<f64>() / n)
}

/// Arithmetic column means, unrounded.
pub fn aggregate(rows: &[MetricsRow]) -> Result<MetricsSummary, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let col = |f: fn(&MetricsRow) -> f64| mean(rows.iter().map(f).collect()).expect("non-empty");
    let baselines: Vec<BaselineHours> = rows.iter().filter_map(|r| r.baseline).collect();
    let mean_total = col(|r| r.total);
    let mean_baseline_low = mean(baselines.iter().map(|b| b.low).collect());
    let mean_baseline_high = mean(baselines.iter().map(|b| b.high).collect());
    let (speedup_low, speedup_high) = match (mean_baseline_low, mean_baseline_high) {
        (Some(low), Some(high)) if mean_total > 0.0 => (
            Some(low * SECONDS_PER_HOUR / mean_total),
            Some(high * SECONDS_PER_HOUR / mean_total),
        ),
        _ => (None, None),
    };
    Ok(MetricsSummary {
        rows: rows.len(),
        mean_t2d: col(|r| r.t2d),
        mean_t3d: col(|r| r.t3d),
        mean_total,
        mean_baseline_low,
        mean_baseline_high,
        mean_baseline_mid: mean(baselines.iter().map(BaselineHours::midpoint).collect()),
        speedup_low,
        speedup_high,
    })
}

/// Ratio of baseline time to pipeline time, for each end of the baseline range.
pub fn speedup(total_seconds: f64, baseline: BaselineHours) -> Result<(f64, f64), MetricsError> {
    if !(total_seconds > 0.0) {
        return Err(MetricsError::NonPositive {
            what: "total seconds",
            value: total_seconds,
        });
    }
    let baseline = BaselineHours::new(baseline.low, baseline.high)?;
    Ok((
        baseline.low * SECONDS_PER_HOUR / total_seconds,
        baseline.high * SECONDS_PER_HOUR / total_seconds,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvRow {
    site: String,
    t2d_s: f64,
    t3d_s: f64,
    total_s: f64,
    sfm_low_hr: Option<f64>,
    sfm_high_hr: Option<f64>,
}

/// Site label of the summary row [`emit_report`] appends.
pub const AVERAGE_LABEL: &str = "Average";

/// Reads rows in the `metrics.csv` schema and checks each row's invariants.
/// A final `Average` row, as written by [`emit_report`], is skipped.
pub fn load_rows_csv<R: io::Read>(reader: R) -> Result<Vec<MetricsRow>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut records = rdr.deserialize::<CsvRow>().collect::<Result<Vec<_>, _>>()?;
    if records.last().is_some_and(|r| r.site == AVERAGE_LABEL) {
        records.pop();
    }
    let mut rows = Vec::new();
    for rec in records {
        let baseline = match (rec.sfm_low_hr, rec.sfm_high_hr) {
            (Some(low), Some(high)) => Some(BaselineHours::new(low, high)?),
            _ => None,
        };
        let row = MetricsRow {
            site_name: rec.site,
            t2d: rec.t2d_s,
            t3d: rec.t3d_s,
            total: rec.total_s,
            baseline,
        };
        row.check()?;
        rows.push(row);
    }
    Ok(rows)
}

/// The shipped eight-site fixture.
pub fn benchmark_rows() -> Vec<MetricsRow> {
    load_rows_csv(BENCHMARK_CSV.as_bytes()).expect("shipped fixture is valid")
}

/// Rounds half away from zero to one decimal place.
pub fn round1(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}

fn fmt1(value: f64) -> String {
    format!("{:.1}", round1(value))
}

fn fmt_hours(value: f64) -> String {
    if value.fract() == 0.0 {
        format!("{value:.0}")
    } else {
        fmt1(value)
    }
}

/// Renders rows plus an average line. `summary` must equal `aggregate(rows)`.
pub fn emit_report(
    rows: &[MetricsRow],
    summary: &MetricsSummary,
    format: ReportFormat,
) -> Result<Vec<u8>, MetricsError> {
    if aggregate(rows)? != *summary {
        return Err(MetricsError::MismatchedSummary);
    }
    Ok(match format {
        ReportFormat::Csv => csv_report(rows, summary)?,
        ReportFormat::Markdown => markdown_report(rows, summary).into_bytes(),
    })
}

fn csv_report(rows: &[MetricsRow], summary: &MetricsSummary) -> Result<Vec<u8>, MetricsError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["site", "t2d_s", "t3d_s", "total_s", "sfm_low_hr", "sfm_high_hr"])?;
    let opt = |v: Option<f64>, f: fn(f64) -> String| v.map(f).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.site_name.clone(),
            fmt1(r.t2d),
            fmt1(r.t3d),
            fmt1(r.total),
            opt(r.baseline.map(|b| b.low), fmt_hours),
            opt(r.baseline.map(|b| b.high), fmt_hours),
        ])?;
    }
    w.write_record([
        AVERAGE_LABEL.to_string(),
        fmt1(summary.mean_t2d),
        fmt1(summary.mean_t3d),
        fmt1(summary.mean_total),
        opt(summary.mean_baseline_low, fmt1),
        opt(summary.mean_baseline_high, fmt1),
    ])?;
    w.into_inner().map_err(|e| MetricsError::Io(e.into_error()))
}

fn markdown_report(rows: &[MetricsRow], summary: &MetricsSummary) -> String {
    let mut out = String::new();
    out.push_str("| Heritage Site | 2D (s) | 3D (s) | Total (s) | SfM (hr) |\n");
    out.push_str("|---|---:|---:|---:|---:|\n");
    for r in rows {
        let sfm = r
            .baseline
            .map(|b| format!("{}–{}", fmt_hours(b.low), fmt_hours(b.high)))
            .unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.site_name.replace('|', "\\|"),
            fmt1(r.t2d),
            fmt1(r.t3d),
            fmt1(r.total),
            sfm
        );
    }
    let mid = summary.mean_baseline_mid.map(fmt1).unwrap_or_else(|| "n/a".into());
    let _ = writeln!(
        out,
        "| **Average** | **{}** | **{}** | **{}** | **{}** |",
        fmt1(summary.mean_t2d),
        fmt1(summary.mean_t3d),
        fmt1(summary.mean_total),
        mid
    );
    if summary.mean_baseline_mid.is_some() {
        out.push_str("\nSfM average is the mean of per-site range midpoints.\n");
    }
    if let (Some(lo), Some(hi)) = (summary.speedup_low, summary.speedup_high) {
        let _ = writeln!(
            out,
            "Speedup over SfM: {}x to {}x (mean baseline range / mean total).",
            fmt1(lo),
            fmt1(hi)
        );
    }
    out
}
