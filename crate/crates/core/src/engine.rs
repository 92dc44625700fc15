// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! Runs a trace through the candidate grammar and keeps what survives.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::invariant::{
    instantiate_candidates, justified, Constant, GrammarError, Invariant, JustificationPolicy,
    Number, Predicate, TemplateConfig, TemplateError,
};
use crate::trace::{PointKey, PointKind, ProgramPointDecl, Sample, Trace, TraceError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("at {point}: {source}")]
    Template {
        point: PointKey,
        source: TemplateError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub justify_threshold: f64,
    pub oneof_cardinality: usize,
    pub enable_ternary: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            justify_threshold: 0.01,
            oneof_cardinality: 3,
            enable_ternary: true,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.justify_threshold > 0.0 && self.justify_threshold <= 1.0) {
            return Err(EngineError::Config(format!(
                "justification threshold {} is outside (0, 1]",
                self.justify_threshold
            )));
        }
        if self.oneof_cardinality == 0 {
            return Err(EngineError::Config(
                "one-of cardinality must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn templates(&self) -> TemplateConfig {
        TemplateConfig {
            oneof_cardinality: self.oneof_cardinality,
            ternary: self.enable_ternary,
        }
    }

    pub fn policy(&self) -> JustificationPolicy {
        JustificationPolicy {
            threshold: self.justify_threshold,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Grammar { line: usize, source: GrammarError },
}

/// Surviving invariants per program point, in canonical order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InferredSpec {
    points: BTreeMap<PointKey, Vec<Predicate>>,
}

impl InferredSpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a point (possibly with no invariants); predicates are merged
    /// into canonical order.
    pub fn insert(&mut self, point: PointKey, predicates: impl IntoIterator<Item = Predicate>) {
        let list = self.points.entry(point).or_default();
        list.extend(predicates);
        list.sort();
        list.dedup();
    }

    pub fn points(&self) -> impl Iterator<Item = (&PointKey, &[Predicate])> {
        self.points.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn get(&self, point: &PointKey) -> &[Predicate] {
        self.points.get(point).map_or(&[], Vec::as_slice)
    }

    pub fn contains_point(&self, point: &PointKey) -> bool {
        self.points.contains_key(point)
    }

    pub fn invariants(&self) -> impl Iterator<Item = Invariant> + '_ {
        self.points.iter().flat_map(|(point, preds)| {
            preds.iter().map(move |p| Invariant {
                point: point.clone(),
                predicate: p.clone(),
            })
        })
    }

    /// Total number of invariants over all points.
    pub fn len(&self) -> usize {
        self.points.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, (point, preds)) in self.points.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "point {} {}", point.method, point.kind);
            for p in preds {
                let _ = writeln!(out, "{p}");
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SpecParseError> {
        let mut spec = InferredSpec::new();
        let mut current: Option<PointKey> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("point ") {
                let key = parse_point_header(rest).ok_or_else(|| SpecParseError::Syntax {
                    line: lineno,
                    msg: format!("bad point header `{line}`"),
                })?;
                spec.insert(key.clone(), []);
                current = Some(key);
                continue;
            }
            let Some(point) = &current else {
                return Err(SpecParseError::Syntax {
                    line: lineno,
                    msg: "invariant before any `point` header".into(),
                });
            };
            let predicate = line.parse().map_err(|source| SpecParseError::Grammar {
                line: lineno,
                source,
            })?;
            spec.insert(point.clone(), [predicate]);
        }
        Ok(spec)
    }
}

/// Parses `<name> <ENTER|EXIT>`.
pub fn parse_point_header(text: &str) -> Option<PointKey> {
    let mut parts = text.split_whitespace();
    let method = parts.next()?;
    let kind: PointKind = parts.next()?.parse().ok()?;
    parts.next().is_none().then(|| PointKey::new(method, kind))
}

/// Infers the invariants of one program point from its samples.
pub fn infer_point<'s>(
    decl: &ProgramPointDecl,
    samples: impl IntoIterator<Item = &'s Sample>,
    config: &InferenceConfig,
) -> Result<Vec<Predicate>, TemplateError> {
    let mut candidates = instantiate_candidates(decl, config.templates());
    for sample in samples {
        for c in &mut candidates {
            c.feed(sample)?;
        }
    }
    let policy = config.policy();
    let survivors = candidates
        .iter()
        .filter(|c| justified(c, &policy))
        .filter_map(|c| c.predicate())
        .collect();
    Ok(prune_redundant(survivors))
}

/// Infers a specification for every program point that has samples.
pub fn infer(trace: &Trace, config: &InferenceConfig) -> Result<InferredSpec, EngineError> {
    config.validate()?;
    trace.validate()?;
    let mut buckets: Vec<Vec<&Sample>> = vec![Vec::new(); trace.decls.len()];
    for s in &trace.samples {
        buckets[s.point].push(s);
    }
    let results: Vec<(PointKey, Vec<Predicate>)> = trace
        .decls
        .par_iter()
        .zip(buckets.par_iter())
        .filter(|(_, samples)| !samples.is_empty())
        .map(|(decl, samples)| {
            infer_point(decl, samples.iter().copied(), config)
                .map(|preds| (decl.key.clone(), preds))
                .map_err(|source| EngineError::Template {
                    point: decl.key.clone(),
                    source,
                })
        })
        .collect::<Result<_, _>>()?;
    let mut spec = InferredSpec::new();
    for (point, preds) in results {
        spec.insert(point, preds);
    }
    Ok(spec)
}

fn numeric_values(values: &[Constant]) -> Option<Vec<Number>> {
    values.iter().map(Constant::as_number).collect()
}

/// Whether `a` logically implies `b` under the pruning rules. Both are
/// assumed to be at the same program point.
pub fn implies(a: &Predicate, b: &Predicate) -> bool {
    use Predicate::*;
    if a.vars().iter().collect::<std::collections::BTreeSet<_>>()
        != b.vars().iter().collect::<std::collections::BTreeSet<_>>()
    {
        return false;
    }
    match (a, b) {
        (OneOf { values: s, .. }, OneOf { values: t, .. }) => {
            s != t && s.iter().all(|v| t.contains(v))
        }
        (OneOf { values, .. }, LowerBound { bound, .. }) => {
            numeric_values(values).is_some_and(|ns| ns.iter().all(|n| n.value_cmp(*bound).is_ge()))
        }
        (OneOf { values, .. }, UpperBound { bound, .. }) => {
            numeric_values(values).is_some_and(|ns| ns.iter().all(|n| n.value_cmp(*bound).is_le()))
        }
        (OneOf { values, .. }, NonZero { .. }) => {
            numeric_values(values).is_some_and(|ns| ns.iter().all(|n| !n.is_zero()))
        }
        (LowerBound { bound: c1, .. }, LowerBound { bound: c2, .. }) => {
            c1 != c2 && c2.value_cmp(*c1).is_le()
        }
        (UpperBound { bound: c1, .. }, UpperBound { bound: c2, .. }) => {
            c1 != c2 && c2.value_cmp(*c1).is_ge()
        }
        (LowerBound { bound, .. }, NonZero { .. }) => bound.value_cmp(Number::Int(0)).is_gt(),
        (UpperBound { bound, .. }, NonZero { .. }) => bound.value_cmp(Number::Int(0)).is_lt(),
        (VarEqual { .. }, VarLessEqual { .. }) => true,
        (VarLess { x, y }, VarLessEqual { x: x2, y: y2 }) => x == x2 && y == y2,
        _ => false,
    }
}

/// Removes every predicate implied by another one in the list. Predicates
/// that imply each other keep the canonically smaller one.
pub fn prune_redundant(mut predicates: Vec<Predicate>) -> Vec<Predicate> {
    predicates.sort();
    predicates.dedup();
    let keep: Vec<bool> = predicates
        .iter()
        .map(|b| {
            !predicates
                .iter()
                .any(|a| a != b && implies(a, b) && !(implies(b, a) && b < a))
        })
        .collect();
    predicates
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointDiff {
    pub added: Vec<Predicate>,
    pub removed: Vec<Predicate>,
}

/// Per-point differences between two specifications; points without
/// differences are omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpecDiff {
    pub points: BTreeMap<PointKey, PointDiff>,
}

impl SpecDiff {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn added(&self) -> usize {
        self.points.values().map(|d| d.added.len()).sum()
    }

    pub fn removed(&self) -> usize {
        self.points.values().map(|d| d.removed.len()).sum()
    }
}

/// Compares by canonical rendering: `added` holds what `b` has and `a`
/// lacks.
pub fn diff_specs(a: &InferredSpec, b: &InferredSpec) -> SpecDiff {
    let keys: std::collections::BTreeSet<&PointKey> =
        a.points.keys().chain(b.points.keys()).collect();
    let mut diff = SpecDiff::default();
    for key in keys {
        let left: std::collections::BTreeSet<String> =
            a.get(key).iter().map(ToString::to_string).collect();
        let right: std::collections::BTreeSet<String> =
            b.get(key).iter().map(ToString::to_string).collect();
        let pick = |from: &InferredSpec, missing: &std::collections::BTreeSet<String>| {
            from.get(key)
                .iter()
                .filter(|p| !missing.contains(&p.to_string()))
                .cloned()
                .collect::<Vec<_>>()
        };
        let d = PointDiff {
            added: pick(b, &left),
            removed: pick(a, &right),
        };
        if !d.added.is_empty() || !d.removed.is_empty() {
            diff.points.insert(key.clone(), d);
        }
    }
    diff
}
