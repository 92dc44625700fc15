// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! Instruction, branch, line and method coverage from probe hits.
//!
//! A probe counts once no matter how often it fires. "Instruction" means a
//! straight-line statement group carrying one probe, so absolute numbers
//! are only comparable between runs of the same subject.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use crate::eval::{align_table, csv_field, round2};
use crate::trace::{ProbeEvent, ProbeKind, ProbeManifest};

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("probe {kind} `{id}` is not declared in the manifest")]
    UndeclaredProbe { kind: ProbeKind, id: String },
    #[error("coverage csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("coverage csv line {line}: {msg}")]
    Row { line: u64, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KindCoverage {
    pub hit: usize,
    pub declared: usize,
}

impl KindCoverage {
    /// Exact hit fraction; zero when nothing is declared.
    pub fn ratio(&self) -> BigRational {
        if self.declared == 0 {
            return BigRational::from_integer(BigInt::from(0));
        }
        BigRational::new(BigInt::from(self.hit), BigInt::from(self.declared))
    }

    pub fn percent(&self) -> f64 {
        if self.declared == 0 {
            0.0
        } else {
            100.0 * self.hit as f64 / self.declared as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CoverageReport {
    /// Indexed in [`ProbeKind::ALL`] order.
    pub kinds: [KindCoverage; 4],
}

impl CoverageReport {
    pub fn get(&self, kind: ProbeKind) -> KindCoverage {
        self.kinds[kind_index(kind)]
    }

    pub fn percentages(&self) -> [f64; 4] {
        self.kinds.map(|k| k.percent())
    }
}

fn kind_index(kind: ProbeKind) -> usize {
    ProbeKind::ALL
        .iter()
        .position(|k| *k == kind)
        .expect("known kind")
}

/// Distinct probe ids hit per kind.
pub fn hit_sets<'e>(events: impl IntoIterator<Item = &'e ProbeEvent>) -> [BTreeSet<&'e str>; 4] {
    let mut sets: [BTreeSet<&str>; 4] = Default::default();
    for e in events {
        sets[kind_index(e.kind)].insert(e.id.as_str());
    }
    sets
}

pub fn compute_coverage<'e>(
    events: impl IntoIterator<Item = &'e ProbeEvent>,
    manifest: &ProbeManifest,
) -> Result<CoverageReport, CoverageError> {
    let sets = hit_sets(events);
    let mut report = CoverageReport::default();
    for (i, kind) in ProbeKind::ALL.into_iter().enumerate() {
        if let Some(id) = sets[i].iter().find(|id| !manifest.contains(kind, id)) {
            return Err(CoverageError::UndeclaredProbe {
                kind,
                id: id.to_string(),
            });
        }
        report.kinds[i] = KindCoverage {
            hit: sets[i].len(),
            declared: manifest.count(kind),
        };
    }
    Ok(report)
}

/// One row of the coverage table, percentages already rounded.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub label: String,
    pub tests: usize,
    /// instruction, branch, line, method.
    pub pct: [f64; 4],
}

impl CoverageRow {
    pub fn new(label: impl Into<String>, tests: usize, report: &CoverageReport) -> Self {
        CoverageRow {
            label: label.into(),
            tests,
            pct: report.percentages().map(round2),
        }
    }
}

pub const COVERAGE_HEADER: [&str; 6] = [
    "run",
    "total_tests",
    "instruction_pct",
    "branch_pct",
    "line_pct",
    "method_pct",
];

pub fn coverage_csv(rows: &[CoverageRow]) -> String {
    let mut out = COVERAGE_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let [i, b, l, m] = r.pct;
        let _ = writeln!(
            out,
            "{},{},{i:.2},{b:.2},{l:.2},{m:.2}",
            csv_field(&r.label),
            r.tests
        );
    }
    out
}

pub fn coverage_text(rows: &[CoverageRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.label.clone(), r.tests.to_string()];
            row.extend(r.pct.iter().map(|p| format!("{p:.2}")));
            row
        })
        .collect();
    align_table(&COVERAGE_HEADER, &cells)
}

/// Reads a coverage CSV; whitespace around fields is ignored.
pub fn parse_coverage_csv(text: &str) -> Result<Vec<CoverageRow>, CoverageError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |msg: String| CoverageError::Row { line, msg };
        if record.len() != COVERAGE_HEADER.len() {
            return Err(bad(format!("expected {} fields", COVERAGE_HEADER.len())));
        }
        let tests = record[1]
            .parse()
            .map_err(|_| bad(format!("bad test count `{}`", &record[1])))?;
        let mut pct = [0.0; 4];
        for (i, p) in pct.iter_mut().enumerate() {
            let field = &record[2 + i];
            *p = field
                .parse()
                .ok()
                .filter(|v: &f64| (0.0..=100.0).contains(v))
                .ok_or_else(|| bad(format!("bad percentage `{field}`")))?;
        }
        rows.push(CoverageRow {
            label: record[0].to_string(),
            tests,
            pct,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> ProbeManifest {
        let mut m = ProbeManifest::default();
        for kind in ProbeKind::ALL {
            m.declare(kind, "a");
        }
        m.declare(ProbeKind::Branch, "b");
        m
    }

    fn hit(kind: ProbeKind, id: &str) -> ProbeEvent {
        ProbeEvent::new(kind, id)
    }

    #[test]
    fn full_half_and_empty() {
        let m = manifest();
        let all: Vec<ProbeEvent> = ProbeKind::ALL
            .iter()
            .map(|k| hit(*k, "a"))
            .chain([hit(ProbeKind::Branch, "b")])
            .collect();
        assert_eq!(
            compute_coverage(&all, &m).unwrap().percentages(),
            [100.0; 4]
        );

        let half: Vec<ProbeEvent> = ProbeKind::ALL.iter().map(|k| hit(*k, "a")).collect();
        let r = compute_coverage(&half, &m).unwrap();
        assert_eq!(r.percentages(), [100.0, 50.0, 100.0, 100.0]);
        assert_eq!(
            r.get(ProbeKind::Branch).ratio(),
            BigRational::new(1.into(), 2.into())
        );

        assert_eq!(compute_coverage(&[], &m).unwrap().percentages(), [0.0; 4]);
    }

    #[test]
    fn repeated_hits_count_once() {
        let m = manifest();
        let events = vec![hit(ProbeKind::Branch, "a"); 5];
        let r = compute_coverage(&events, &m).unwrap();
        assert_eq!(r.get(ProbeKind::Branch).hit, 1);
    }

    #[test]
    fn undeclared_probe_is_an_error() {
        let err = compute_coverage(&[hit(ProbeKind::Line, "zzz")], &manifest()).unwrap_err();
        assert!(matches!(err, CoverageError::UndeclaredProbe { .. }));
    }

    #[test]
    fn table_row_golden() {
        let rows = vec![CoverageRow {
            label: "Valid & Invalid: UT & IT".into(),
            tests: 140,
            pct: [91.20, 90.40, 95.70, 94.10],
        }];
        let csv = coverage_csv(&rows);
        let line = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        assert_eq!(
            fields,
            [
                "Valid & Invalid: UT & IT",
                "140",
                "91.20",
                "90.40",
                "95.70",
                "94.10"
            ]
        );
        assert_eq!(parse_coverage_csv(&csv).unwrap(), rows);
        let text = coverage_text(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].len(), lines[1].len());
        assert!(lines[1]
            .split_whitespace()
            .rev()
            .take(4)
            .eq(["94.10", "95.70", "90.40", "91.20"]));
    }

    #[test]
    fn zero_row() {
        let row = CoverageRow::new("Valid: UT", 0, &CoverageReport::default());
        assert_eq!(
            coverage_csv(&[row]).lines().nth(1).unwrap(),
            "Valid: UT,0,0.00,0.00,0.00,0.00"
        );
    }

    #[test]
    fn malformed_csv_rows_are_rejected() {
        let text = "run,total_tests,instruction_pct,branch_pct,line_pct,method_pct\nA,1,2,3,4\n";
        assert!(parse_coverage_csv(text).is_err());
        let text =
            "run,total_tests,instruction_pct,branch_pct,line_pct,method_pct\nA,1,2,3,4,101\n";
        assert!(matches!(
            parse_coverage_csv(text),
            Err(CoverageError::Row { line: 2, .. })
        ));
    }
}
