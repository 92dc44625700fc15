// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! Ordinary least-squares fits of precision and recall against coverage.

use std::fmt::Write as _;

use thiserror::Error;

use crate::coverage::CoverageRow;
use crate::eval::ClassificationReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("{xs} predictor values but {ys} responses")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("predictor has zero variance")]
    ConstantPredictor,
    #[error("response has zero variance")]
    ConstantResponse,
    #[error("row {index}: coverage run `{coverage}` does not match metrics run `{metrics}`")]
    Misaligned {
        index: usize,
        coverage: String,
        metrics: String,
    },
    #[error("{predictor} vs {response}: {source}")]
    Fit {
        predictor: &'static str,
        response: &'static str,
        source: Box<RegressionError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Closed-form simple regression of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<Fit, RegressionError> {
    if xs.len() != ys.len() {
        return Err(RegressionError::LengthMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    let n = xs.len();
    if n < 3 {
        return Err(RegressionError::TooFewPoints(n));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(RegressionError::ConstantPredictor);
    }
    if syy == 0.0 {
        return Err(RegressionError::ConstantResponse);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    Ok(Fit {
        slope,
        intercept,
        r_squared: (1.0 - ss_res / syy).clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub predictor: &'static str,
    pub response: &'static str,
    pub fit: Fit,
}

pub const PREDICTORS: [&str; 4] = ["instruction", "branch", "line", "method"];
pub const RESPONSES: [&str; 4] = [
    "precision_orig",
    "recall_orig",
    "precision_total",
    "recall_total",
];

/// A metrics row as used for regression: run label plus the four
/// percentages in [`RESPONSES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub label: String,
    pub pct: [f64; 4],
}

impl MetricsRow {
    pub fn new(label: impl Into<String>, report: &ClassificationReport) -> Self {
        MetricsRow {
            label: label.into(),
            pct: report.percentages().map(crate::eval::round2),
        }
    }
}

/// Every (coverage kind, response) fit, best r² first. Ties keep the
/// predictor/response declaration order.
pub fn correlation_report(
    coverage: &[CoverageRow],
    metrics: &[MetricsRow],
) -> Result<Vec<RegressionResult>, RegressionError> {
    if coverage.len() != metrics.len() {
        return Err(RegressionError::LengthMismatch {
            xs: coverage.len(),
            ys: metrics.len(),
        });
    }
    for (index, (c, m)) in coverage.iter().zip(metrics).enumerate() {
        if c.label != m.label {
            return Err(RegressionError::Misaligned {
                index,
                coverage: c.label.clone(),
                metrics: m.label.clone(),
            });
        }
    }
    let mut results = Vec::with_capacity(16);
    for (pi, predictor) in PREDICTORS.iter().enumerate() {
        let xs: Vec<f64> = coverage.iter().map(|c| c.pct[pi]).collect();
        for (ri, response) in RESPONSES.iter().enumerate() {
            let ys: Vec<f64> = metrics.iter().map(|m| m.pct[ri]).collect();
            let fit = linear_fit(&xs, &ys).map_err(|e| RegressionError::Fit {
                predictor,
                response,
                source: Box::new(e),
            })?;
            results.push(RegressionResult {
                predictor,
                response,
                fit,
            });
        }
    }
    results.sort_by(|a, b| b.fit.r_squared.total_cmp(&a.fit.r_squared));
    Ok(results)
}

pub const CORRELATION_HEADER: [&str; 5] =
    ["predictor", "response", "slope", "intercept", "r_squared"];

pub fn correlation_csv(results: &[RegressionResult]) -> String {
    let mut out = CORRELATION_HEADER.join(",");
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            r.predictor, r.response, r.fit.slope, r.fit.intercept, r.fit.r_squared
        );
    }
    out
}

pub fn correlation_text(results: &[RegressionResult]) -> String {
    let cells: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.predictor.to_string(),
                r.response.to_string(),
                format!("{:.4}", r.fit.slope),
                format!("{:.4}", r.fit.intercept),
                format!("{:.4}", r.fit.r_squared),
            ]
        })
        .collect();
    crate::eval::align_table(&CORRELATION_HEADER, &cells)
}

#[derive(Debug, Error)]
pub enum MetricsCsvError {
    #[error("metrics csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("metrics csv line {line}: {msg}")]
    Row { line: u64, msg: String },
}

/// Reads the percentage columns of a metrics CSV.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, MetricsCsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MetricsCsvError::Row {
                line: 1,
                msg: format!("missing column `{name}`"),
            })
    };
    let run = column("run")?;
    let cols: Vec<usize> = RESPONSES
        .iter()
        .map(|r| column(r))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let mut pct = [0.0; 4];
        for (p, &c) in pct.iter_mut().zip(&cols) {
            let field = record.get(c).unwrap_or("");
            *p = field
                .trim_end_matches('*')
                .parse()
                .map_err(|_| MetricsCsvError::Row {
                    line,
                    msg: format!("bad percentage `{field}`"),
                })?;
        }
        rows.push(MetricsRow {
            label: record.get(run).unwrap_or("").to_string(),
            pct,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn perfect_line() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!(close(f.slope, 2.0) && close(f.intercept, 0.0) && close(f.r_squared, 1.0));
    }

    #[test]
    fn constant_inputs_are_rejected() {
        assert_eq!(
            linear_fit(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(RegressionError::ConstantResponse)
        );
        assert_eq!(
            linear_fit(&[4.0, 4.0, 4.0], &[1.0, 2.0, 3.0]),
            Err(RegressionError::ConstantPredictor)
        );
        assert_eq!(
            linear_fit(&[1.0, 2.0], &[1.0, 2.0]),
            Err(RegressionError::TooFewPoints(2))
        );
        assert!(matches!(
            linear_fit(&[1.0, 2.0, 3.0], &[1.0]),
            Err(RegressionError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn four_point_example() {
        // Normal equations by hand: mean x 1.5, mean y 2.75, Sxx 5, Sxy 5.5,
        // Syy 8.75, SSres 2.7.
        let f = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 5.0]).unwrap();
        assert!(close(f.slope, 1.1));
        assert!(close(f.intercept, 1.1));
        assert!(close(f.r_squared, 1.0 - 2.7 / 8.75));
    }

    #[test]
    fn report_rejects_misaligned_rows() {
        let cov = vec![CoverageRow {
            label: "a".into(),
            tests: 1,
            pct: [1.0; 4],
        }];
        let met = vec![MetricsRow {
            label: "b".into(),
            pct: [1.0; 4],
        }];
        assert!(matches!(
            correlation_report(&cov, &met),
            Err(RegressionError::Misaligned { .. })
        ));
    }

    #[test]
    fn report_is_sorted_and_complete() {
        let cov: Vec<CoverageRow> = (0..4)
            .map(|i| CoverageRow {
                label: i.to_string(),
                tests: 1,
                pct: [i as f64, (i * i) as f64, 1.0 + i as f64, 10.0 - i as f64],
            })
            .collect();
        let met: Vec<MetricsRow> = (0..4)
            .map(|i| MetricsRow {
                label: i.to_string(),
                pct: [
                    2.0 * i as f64,
                    1.0 + (i % 2) as f64,
                    i as f64,
                    3.0 * i as f64,
                ],
            })
            .collect();
        let results = correlation_report(&cov, &met).unwrap();
        assert_eq!(results.len(), 16);
        assert!(results
            .windows(2)
            .all(|w| w[0].fit.r_squared >= w[1].fit.r_squared));
        let csv = correlation_csv(&results);
        assert_eq!(csv.lines().next().unwrap(), CORRELATION_HEADER.join(","));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let report = ClassificationReport::from_counts(898, 954, 2340, 19, 274);
        let text = crate::eval::metrics_csv(&[("x, y".into(), report)]);
        let rows = parse_metrics_csv(&text).unwrap();
        assert_eq!(rows, [MetricsRow::new("x, y", &report)]);
        assert_eq!(rows[0].pct, [27.73, 97.93, 28.96, 77.69]);
    }
}
