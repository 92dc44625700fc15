// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use specminer_core::coverage::hit_sets;
use specminer_core::subject::{self, find_run, run_suite, tests, Polarity, RunConfig, Suite, RUNS};
use specminer_core::trace::{pair_invocations, parse_trace, write_trace, Trace, Value};

fn single(suite: Suite) -> RunConfig {
    let suites: &'static [Suite] = match suite {
        Suite::UnitValid => &[Suite::UnitValid],
        Suite::UnitInvalid => &[Suite::UnitInvalid],
        Suite::IntegrationValid => &[Suite::IntegrationValid],
        Suite::IntegrationInvalid => &[Suite::IntegrationInvalid],
    };
    RunConfig {
        label: "single",
        slug: "single",
        suites,
    }
}

fn hits(trace: &Trace) -> Vec<BTreeSet<String>> {
    hit_sets(&trace.probes)
        .into_iter()
        .map(|s| s.into_iter().map(String::from).collect())
        .collect()
}

#[test]
fn runs_are_deterministic() {
    for run in &RUNS {
        let a = run_suite(run).unwrap();
        let b = run_suite(run).unwrap();
        assert_eq!(
            write_trace(&a.trace),
            write_trace(&b.trace),
            "{}",
            run.label
        );
        assert_eq!(a.results, b.results);
    }
}

#[test]
fn every_subject_test_passes() {
    let sizes: Vec<usize> = Suite::ALL.iter().map(|s| tests(*s).len()).collect();
    assert_eq!(sizes, [38, 10, 29, 32]);
    for run in &RUNS {
        let out = run_suite(run).unwrap();
        let expected: usize = run.suites.iter().map(|s| tests(*s).len()).sum();
        assert_eq!(out.test_count(), expected, "{}", run.label);
        assert!(out.results.iter().all(|r| r.failure.is_none()));
    }
}

#[test]
fn run_hits_are_the_union_of_its_suites() {
    let per_suite: Vec<(Suite, Vec<BTreeSet<String>>)> = Suite::ALL
        .iter()
        .map(|s| (*s, hits(&run_suite(&single(*s)).unwrap().trace)))
        .collect();
    for run in &RUNS {
        let got = hits(&run_suite(run).unwrap().trace);
        for (kind, set) in got.iter().enumerate() {
            let union: BTreeSet<String> = per_suite
                .iter()
                .filter(|(s, _)| run.suites.contains(s))
                .flat_map(|(_, h)| h[kind].iter().cloned())
                .collect();
            assert_eq!(set, &union, "{} kind #{kind}", run.label);
        }
    }
}

#[test]
fn valid_unit_tests_never_raise() {
    let out = run_suite(find_run("Valid: UT").unwrap()).unwrap();
    for inv in pair_invocations(&out.trace).unwrap() {
        assert!(
            inv.exit.is_some(),
            "{} raised",
            out.trace.decls[inv.enter.point].key
        );
    }
}

#[test]
fn invalid_suites_raise_at_least_once_per_test() {
    for suite in [Suite::UnitInvalid, Suite::IntegrationInvalid] {
        assert_eq!(suite.polarity(), Polarity::Invalid);
        let out = run_suite(&single(suite)).unwrap();
        let raised = pair_invocations(&out.trace)
            .unwrap()
            .iter()
            .filter(|i| i.exit.is_none())
            .count();
        assert!(raised > 0, "{suite:?}");
        // Only the facade audits; every code is one of the nine typed errors.
        let audits = out
            .trace
            .decls
            .iter()
            .position(|d| d.key.method == "AuditLog.recordFailure");
        assert_eq!(audits.is_some(), suite == Suite::IntegrationInvalid);
        let Some(audits) = audits else { continue };
        let codes: BTreeSet<i64> = out
            .trace
            .samples_at(audits)
            .map(|s| match s.values[0] {
                Value::Int(c) => c,
                ref other => panic!("code {other}"),
            })
            .collect();
        assert!(codes.iter().all(|c| (1..=9).contains(c)), "{codes:?}");
    }
}

#[test]
fn subject_traces_round_trip() {
    let manifest = subject::manifest();
    for run in &RUNS {
        let trace = run_suite(run).unwrap().trace;
        assert_eq!(
            parse_trace(&write_trace(&trace), &manifest).unwrap(),
            trace,
            "{}",
            run.label
        );
    }
}

#[test]
fn diversified_deposits_use_many_amounts() {
    let trace = subject::run_diversified_deposits().unwrap();
    let point = trace
        .decls
        .iter()
        .position(|d| d.key.to_string() == "UserAccount.deposit:::ENTER")
        .unwrap();
    let amount = trace.decls[point].var_index("amount").unwrap();
    let amounts: BTreeSet<String> = trace
        .samples_at(point)
        .map(|s| s.values[amount].to_string())
        .collect();
    assert!(amounts.len() >= 8, "{amounts:?}");
}

#[test]
fn runs_resolve_by_label_and_slug() {
    for run in &RUNS {
        assert_eq!(find_run(run.label).unwrap().slug, run.slug);
        assert_eq!(find_run(run.slug).unwrap().label, run.label);
    }
    assert!(find_run("Valid: everything").is_none());
}

#[test]
fn bundled_review_parses() {
    let review = subject::review().unwrap();
    assert_eq!(review.accepted().count(), 7);
}
