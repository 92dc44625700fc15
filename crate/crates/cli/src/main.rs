// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use specminer_core::correlation::{
    correlation_csv, correlation_report, correlation_text, parse_metrics_csv,
};
use specminer_core::coverage::{
    compute_coverage, coverage_csv, coverage_text, parse_coverage_csv, CoverageRow,
};
use specminer_core::engine::{infer, InferenceConfig, InferredSpec};
use specminer_core::eval::{classify, metrics_csv, metrics_text, GroundTruthSpec, Review};
use specminer_core::experiment::{run_experiment, ExperimentConfig};
use specminer_core::subject::{self, find_run, RunConfig, RUNS};
use specminer_core::trace::{parse_trace, ProbeManifest};

#[derive(Parser)]
#[command(
    name = "specminer",
    version,
    about = "Mine likely invariants from execution traces and relate their quality to test coverage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites, infer, classify and correlate across runs.
    RunExperiment {
        /// Existing directory receiving every artifact.
        #[arg(long)]
        out: PathBuf,
        /// Run labels or slugs, comma separated; all nine by default.
        #[arg(long, value_delimiter = ',')]
        runs: Vec<String>,
        /// Review file accepting or rejecting extra invariants.
        #[arg(long)]
        review: Option<PathBuf>,
        #[command(flatten)]
        inference: InferenceArgs,
        /// Runs executed in parallel.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Infer a specification from a trace file.
    Infer {
        trace: PathBuf,
        /// Probe manifest; the bundled subject's by default.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        inference: InferenceArgs,
    },
    /// Classify an inferred specification against a ground truth.
    Evaluate {
        inferred: PathBuf,
        ground_truth: PathBuf,
        #[arg(long)]
        review: Option<PathBuf>,
        /// Row label in the output.
        #[arg(long, default_value = "run")]
        label: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Coverage of the probe events in a trace.
    Coverage {
        trace: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        label: String,
        /// Test count reported in the row.
        #[arg(long, default_value_t = 0)]
        tests: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Regress every metric on every coverage kind.
    Correlate {
        coverage: PathBuf,
        metrics: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// List the nine run configurations.
    ListRuns,
}

#[derive(Args)]
struct InferenceArgs {
    /// Largest set a `one of` invariant may hold.
    #[arg(long, default_value_t = 3)]
    oneof_k: usize,
    /// Chance probability below which an invariant is reported.
    #[arg(long, default_value_t = 0.01)]
    justify_threshold: f64,
    /// Skip three-variable linear invariants.
    #[arg(long)]
    no_ternary: bool,
}

impl InferenceArgs {
    fn config(&self) -> InferenceConfig {
        InferenceConfig {
            justify_threshold: self.justify_threshold,
            oneof_cardinality: self.oneof_k,
            enable_ternary: !self.no_ternary,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Table,
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    msg: String,
}

fn fail<E: Display>(code: u8) -> impl Fn(E) -> Failure {
    move |e| Failure {
        code,
        msg: e.to_string(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        msg: format!("{}: {e}", path.display()),
    })
}

fn in_file<E: Display>(path: &Path) -> impl Fn(E) -> Failure + '_ {
    move |e| Failure {
        code: 2,
        msg: format!("{}: {e}", path.display()),
    }
}

fn load_manifest(path: Option<&Path>) -> Result<ProbeManifest, Failure> {
    match path {
        None => Ok(subject::manifest()),
        Some(p) => ProbeManifest::parse(&read(p)?).map_err(in_file(p)),
    }
}

fn select_runs(names: &[String]) -> Result<Vec<&'static RunConfig>, Failure> {
    if names.is_empty() {
        return Ok(RUNS.iter().collect());
    }
    names
        .iter()
        .map(|n| {
            find_run(n).ok_or_else(|| Failure {
                code: 2,
                msg: format!("unknown run `{n}`; see `specminer list-runs`"),
            })
        })
        .collect()
}

fn execute(command: Command) -> Result<String, Failure> {
    match command {
        Command::RunExperiment {
            out,
            runs,
            review,
            inference,
            jobs,
            format,
        } => {
            let config = ExperimentConfig {
                out_dir: out,
                runs: select_runs(&runs)?,
                inference: inference.config(),
                review: review.as_deref().map(read).transpose()?,
                jobs,
            };
            let output = run_experiment(&config).map_err(|e| Failure {
                code: e.exit_code() as u8,
                msg: e.to_string(),
            })?;
            for w in &output.warnings {
                eprintln!("warning: {w}");
            }
            let coverage = output.coverage_rows();
            let metrics = output.metrics_rows();
            let mut text = match format {
                Format::Csv => format!("{}\n{}", coverage_csv(&coverage), metrics_csv(&metrics)),
                Format::Table => {
                    format!("{}\n{}", coverage_text(&coverage), metrics_text(&metrics))
                }
            };
            if let Some(results) = &output.correlation {
                text.push('\n');
                text.push_str(&match format {
                    Format::Csv => correlation_csv(results),
                    Format::Table => correlation_text(results),
                });
            }
            Ok(text)
        }
        Command::Infer {
            trace,
            manifest,
            inference,
        } => {
            let manifest = load_manifest(manifest.as_deref())?;
            let parsed = parse_trace(&read(&trace)?, &manifest).map_err(in_file(&trace))?;
            let spec = infer(&parsed, &inference.config()).map_err(fail(2))?;
            Ok(spec.to_text())
        }
        Command::Evaluate {
            inferred,
            ground_truth,
            review,
            label,
            format,
        } => {
            let spec = InferredSpec::parse(&read(&inferred)?).map_err(in_file(&inferred))?;
            let mut gt =
                GroundTruthSpec::parse(&read(&ground_truth)?).map_err(in_file(&ground_truth))?;
            let review = match review {
                Some(p) => Review::parse(&read(&p)?, &gt).map_err(in_file(&p))?,
                None => Review::default(),
            };
            let rows = [(label, classify(&spec, &mut gt, &review))];
            Ok(match format {
                Format::Csv => metrics_csv(&rows),
                Format::Table => metrics_text(&rows),
            })
        }
        Command::Coverage {
            trace,
            manifest,
            label,
            tests,
            format,
        } => {
            let manifest = load_manifest(manifest.as_deref())?;
            let parsed = parse_trace(&read(&trace)?, &manifest).map_err(in_file(&trace))?;
            let report = compute_coverage(&parsed.probes, &manifest).map_err(fail(2))?;
            let rows = [CoverageRow::new(label, tests, &report)];
            Ok(match format {
                Format::Csv => coverage_csv(&rows),
                Format::Table => coverage_text(&rows),
            })
        }
        Command::Correlate {
            coverage,
            metrics,
            format,
        } => {
            let cov = parse_coverage_csv(&read(&coverage)?).map_err(in_file(&coverage))?;
            let met = parse_metrics_csv(&read(&metrics)?).map_err(in_file(&metrics))?;
            let results = correlation_report(&cov, &met).map_err(fail(3))?;
            Ok(match format {
                Format::Csv => correlation_csv(&results),
                Format::Table => correlation_text(&results),
            })
        }
        Command::ListRuns => {
            let mut out = String::new();
            for run in &RUNS {
                let suites: Vec<String> = run
                    .suites
                    .iter()
                    .map(|s| format!("{}-{}", s.family(), s.polarity()))
                    .collect();
                out.push_str(&format!(
                    "{}\t{}\t{}\n",
                    run.slug,
                    run.label,
                    suites.join(",")
                ));
            }
            Ok(out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("specminer: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
