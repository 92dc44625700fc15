// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! The end-to-end experiment: for each selected run, execute the suites,
//! measure coverage, infer a specification and classify it; then tabulate
//! and correlate across runs.
//!
//! Output layout under the output directory:
//!
//! ```text
//! probes.manifest  ground_truth.spec  review.txt
//! <slug>.trace  <slug>.spec          one pair per run
//! coverage.csv  metrics.csv  correlation.csv
//! ```

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::correlation::{
    correlation_csv, correlation_report, MetricsRow, RegressionError, RegressionResult,
};
use crate::coverage::{compute_coverage, coverage_csv, CoverageError, CoverageReport, CoverageRow};
use crate::engine::{infer, EngineError, InferenceConfig, InferredSpec};
use crate::eval::{
    classify, metrics_csv, ClassificationReport, EvalError, GroundTruthSpec, Review,
};
use crate::subject::{self, RunConfig, SubjectError, TestResult};
use crate::trace::write_trace;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Subject(#[from] SubjectError),
    #[error("{run}: {source}")]
    Engine {
        run: &'static str,
        source: EngineError,
    },
    #[error("{run}: {source}")]
    Coverage {
        run: &'static str,
        source: CoverageError,
    },
    #[error(transparent)]
    Review(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("output directory {0} does not exist")]
    MissingOutDir(PathBuf),
    #[error("correlation: {0}")]
    Correlation(#[from] RegressionError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    /// 1 for a failing subject test, 3 for degenerate correlation input,
    /// 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Subject(_) => 1,
            ExperimentError::Correlation(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub runs: Vec<&'static RunConfig>,
    pub inference: InferenceConfig,
    /// Review text; the bundled review when `None`.
    pub review: Option<String>,
    /// Worker threads; rayon's default when `None`.
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            out_dir: out_dir.into(),
            runs: subject::RUNS.iter().collect(),
            inference: InferenceConfig::default(),
            review: None,
            jobs: None,
        }
    }
}

#[derive(Debug)]
pub struct RunRecord {
    pub config: RunConfig,
    pub results: Vec<TestResult>,
    pub coverage: CoverageReport,
    pub spec: InferredSpec,
    pub report: ClassificationReport,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub runs: Vec<RunRecord>,
    /// `None` when fewer than three runs were selected.
    pub correlation: Option<Vec<RegressionResult>>,
    pub warnings: Vec<String>,
}

impl ExperimentOutput {
    pub fn coverage_rows(&self) -> Vec<CoverageRow> {
        self.runs
            .iter()
            .map(|r| CoverageRow::new(r.config.label, r.results.len(), &r.coverage))
            .collect()
    }

    pub fn metrics_rows(&self) -> Vec<(String, ClassificationReport)> {
        self.runs
            .iter()
            .map(|r| (r.config.label.to_string(), r.report))
            .collect()
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn run_one(
    config: &'static RunConfig,
    inference: &InferenceConfig,
    gt: &GroundTruthSpec,
    review: &Review,
    out_dir: &Path,
) -> Result<RunRecord, ExperimentError> {
    let output = subject::run_suite(config)?;
    let coverage =
        compute_coverage(&output.trace.probes, &subject::manifest()).map_err(|source| {
            ExperimentError::Coverage {
                run: config.label,
                source,
            }
        })?;
    let spec = infer(&output.trace, inference).map_err(|source| ExperimentError::Engine {
        run: config.label,
        source,
    })?;
    let report = classify(&spec, &mut gt.clone(), review);
    write_atomic(
        &out_dir.join(format!("{}.trace", config.slug)),
        &write_trace(&output.trace),
    )?;
    write_atomic(
        &out_dir.join(format!("{}.spec", config.slug)),
        &spec.to_text(),
    )?;
    Ok(RunRecord {
        config: *config,
        results: output.results,
        coverage,
        spec,
        report,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let out = &config.out_dir;
    if !out.is_dir() {
        return Err(ExperimentError::MissingOutDir(out.clone()));
    }
    config
        .inference
        .validate()
        .map_err(|source| ExperimentError::Engine {
            run: "config",
            source,
        })?;
    let gt = subject::ground_truth();
    let review_text = config.review.as_deref().unwrap_or(subject::review_text());
    let review = Review::parse(review_text, &gt)?;

    write_atomic(&out.join("probes.manifest"), &subject::manifest().write())?;
    write_atomic(&out.join("ground_truth.spec"), subject::ground_truth_text())?;
    write_atomic(&out.join("review.txt"), review_text)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = config.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let runs = pool.install(|| {
        config
            .runs
            .par_iter()
            .map(|run| run_one(run, &config.inference, &gt, &review, out))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut output = ExperimentOutput {
        runs,
        correlation: None,
        warnings: Vec::new(),
    };
    let coverage = output.coverage_rows();
    let metrics = output.metrics_rows();
    write_atomic(&out.join("coverage.csv"), &coverage_csv(&coverage))?;
    write_atomic(&out.join("metrics.csv"), &metrics_csv(&metrics))?;

    if output.runs.len() < 3 {
        let stale = out.join("correlation.csv");
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|source| ExperimentError::Io {
                path: stale,
                source,
            })?;
        }
        output.warnings.push(format!(
            "correlation skipped: needs at least 3 runs, got {}",
            output.runs.len()
        ));
        return Ok(output);
    }
    // Fit on the rounded figures, as tabulated.
    let metrics: Vec<MetricsRow> = metrics
        .iter()
        .map(|(l, r)| MetricsRow::new(l.clone(), r))
        .collect();
    let results = correlation_report(&coverage, &metrics)?;
    write_atomic(&out.join("correlation.csv"), &correlation_csv(&results))?;
    output.correlation = Some(results);
    Ok(output)
}
