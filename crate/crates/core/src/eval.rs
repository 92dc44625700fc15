// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! Classification of inferred invariants against a hand-written
//! specification, and the precision/recall figures derived from it.
//!
//! An inferred invariant is correct only when its satisfying set equals
//! that of a property. A stronger invariant over-approximates (rejects
//! acceptable values) and a weaker one under-approximates; both count as
//! incorrect.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::engine::{parse_point_header, InferredSpec, SpecParseError};
use crate::invariant::{GrammarError, Invariant, Number, Predicate};
use crate::trace::PointKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchVerdict {
    Equivalent,
    OverApproximation,
    UnderApproximation,
    Unrelated,
}

impl MatchVerdict {
    fn from_inclusion(sub: bool, sup: bool) -> Self {
        match (sub, sup) {
            (true, true) => MatchVerdict::Equivalent,
            (true, false) => MatchVerdict::OverApproximation,
            (false, true) => MatchVerdict::UnderApproximation,
            (false, false) => MatchVerdict::Unrelated,
        }
    }
}

/// Satisfying set of a unary numeric predicate.
enum NumSet {
    Finite(Vec<BigRational>),
    AtLeast(BigRational),
    AtMost(BigRational),
    NonZero,
}

impl NumSet {
    fn of(p: &Predicate) -> Option<NumSet> {
        Some(match p {
            Predicate::OneOf { values, .. } => NumSet::Finite(
                values
                    .iter()
                    .map(|c| c.as_number().map(Number::to_rational))
                    .collect::<Option<_>>()?,
            ),
            Predicate::LowerBound { bound, .. } => NumSet::AtLeast(bound.to_rational()),
            Predicate::UpperBound { bound, .. } => NumSet::AtMost(bound.to_rational()),
            Predicate::NonZero { .. } => NumSet::NonZero,
            _ => return None,
        })
    }

    fn contains(&self, v: &BigRational) -> bool {
        match self {
            NumSet::Finite(s) => s.contains(v),
            NumSet::AtLeast(c) => v >= c,
            NumSet::AtMost(c) => v <= c,
            NumSet::NonZero => !v.is_zero(),
        }
    }

    fn subset_of(&self, other: &NumSet) -> bool {
        match (self, other) {
            (NumSet::Finite(s), _) => s.iter().all(|v| other.contains(v)),
            (NumSet::AtLeast(a), NumSet::AtLeast(b)) => a >= b,
            (NumSet::AtLeast(a), NumSet::NonZero) => a.is_positive(),
            (NumSet::AtMost(a), NumSet::AtMost(b)) => a <= b,
            (NumSet::AtMost(a), NumSet::NonZero) => a.is_negative(),
            (NumSet::NonZero, NumSet::NonZero) => true,
            _ => false,
        }
    }
}

/// The relation as a linear form `sum(k_v * v) + c == 0`, scaled so the
/// coefficient of the alphabetically first variable is 1.
fn linear_form(p: &Predicate) -> Option<(BTreeMap<String, BigRational>, BigRational)> {
    let one = || BigRational::from_integer(1.into());
    let (mut terms, constant) = match p {
        Predicate::VarEqual { x, y } => (
            vec![(x.clone(), one()), (y.clone(), -one())],
            BigRational::zero(),
        ),
        Predicate::LinearBinary { x, y, a, b } => {
            (vec![(x.clone(), a.clone()), (y.clone(), -one())], b.clone())
        }
        Predicate::LinearTernary { x, y, z, a, b, c } => (
            vec![
                (x.clone(), a.clone()),
                (y.clone(), b.clone()),
                (z.clone(), -one()),
            ],
            c.clone(),
        ),
        _ => return None,
    };
    terms.sort_by(|l, r| l.0.cmp(&r.0));
    let scale = terms.iter().map(|t| &t.1).find(|k| !k.is_zero())?.clone();
    let form = terms.into_iter().map(|(v, k)| (v, k / &scale)).collect();
    Some((form, constant / scale))
}

/// Orderings of (`first`, `second`) a comparison-style predicate admits.
fn orderings(p: &Predicate, first: &str) -> Option<BTreeSet<std::cmp::Ordering>> {
    use std::cmp::Ordering::*;
    let oriented = |x: &String, set: &[std::cmp::Ordering]| -> BTreeSet<_> {
        if x == first {
            set.iter().copied().collect()
        } else {
            set.iter().map(|o| o.reverse()).collect()
        }
    };
    match p {
        Predicate::VarEqual { .. } => Some([Equal].into()),
        Predicate::VarLessEqual { x, .. } => Some(oriented(x, &[Less, Equal])),
        Predicate::VarLess { x, .. } => Some(oriented(x, &[Less])),
        Predicate::LinearBinary { a, b, .. } => {
            (a == &BigRational::from_integer(1.into()) && b.is_zero()).then(|| [Equal].into())
        }
        _ => None,
    }
}

fn var_set(p: &Predicate) -> BTreeSet<&str> {
    p.vars().into_iter().collect()
}

/// Compares satisfying sets of two predicates at the same point.
pub fn match_predicates(inferred: &Predicate, property: &Predicate) -> MatchVerdict {
    if var_set(inferred) != var_set(property) {
        return MatchVerdict::Unrelated;
    }
    if let (Some(a), Some(b)) = (NumSet::of(inferred), NumSet::of(property)) {
        return MatchVerdict::from_inclusion(a.subset_of(&b), b.subset_of(&a));
    }
    match (inferred, property) {
        (Predicate::OneOf { values: a, .. }, Predicate::OneOf { values: b, .. }) => {
            let sub = a.iter().all(|v| b.contains(v));
            let sup = b.iter().all(|v| a.contains(v));
            return MatchVerdict::from_inclusion(sub, sup);
        }
        (Predicate::NonNull { .. }, Predicate::NonNull { .. }) => {
            return MatchVerdict::Equivalent;
        }
        _ => {}
    }
    let vars = inferred.vars();
    if vars.len() == 2 {
        let first = vars.iter().min().copied().unwrap_or_default();
        if let (Some(a), Some(b)) = (orderings(inferred, first), orderings(property, first)) {
            return MatchVerdict::from_inclusion(a.is_subset(&b), b.is_subset(&a));
        }
    }
    match (linear_form(inferred), linear_form(property)) {
        (Some(a), Some(b)) if a == b => MatchVerdict::Equivalent,
        _ => MatchVerdict::Unrelated,
    }
}

pub fn match_invariant(inferred: &Invariant, property: &Invariant) -> MatchVerdict {
    if inferred.point != property.point {
        return MatchVerdict::Unrelated;
    }
    match_predicates(&inferred.predicate, &property.predicate)
}

fn equivalent(a: &Predicate, b: &Predicate) -> bool {
    match_predicates(a, b) == MatchVerdict::Equivalent
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Spec(#[from] SpecParseError),
    #[error("line {line}: duplicate property `{property}` at {point}")]
    Duplicate {
        line: usize,
        point: PointKey,
        property: String,
    },
    #[error("review line {line}: {msg}")]
    Review { line: usize, msg: String },
    #[error("review line {line}: {source}")]
    ReviewGrammar { line: usize, source: GrammarError },
    #[error("review line {line}: unknown program point {point}")]
    UnknownPoint { line: usize, point: PointKey },
    #[error("review line {line}: `{invariant}` is both accepted and rejected")]
    Conflict { line: usize, invariant: String },
}

/// The hand-written specification, plus properties accepted as extras.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruthSpec {
    pub original: BTreeMap<PointKey, Vec<Predicate>>,
    pub extra: BTreeMap<PointKey, Vec<Predicate>>,
}

impl GroundTruthSpec {
    /// Parses the inferred-spec text format; duplicate properties at a
    /// point are rejected.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        // Validate syntax with the shared parser, then re-read in order to
        // catch duplicates with their line numbers.
        InferredSpec::parse(text)?;
        let mut original: BTreeMap<PointKey, Vec<Predicate>> = BTreeMap::new();
        let mut current = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("point ") {
                let key = parse_point_header(rest).expect("validated above");
                original.entry(key.clone()).or_default();
                current = Some(key);
                continue;
            }
            let point = current.clone().expect("validated above");
            let predicate: Predicate = line.parse().expect("validated above");
            let list = original.entry(point.clone()).or_default();
            if list.contains(&predicate) {
                return Err(EvalError::Duplicate {
                    line: i + 1,
                    point,
                    property: predicate.to_string(),
                });
            }
            list.push(predicate);
        }
        for list in original.values_mut() {
            list.sort();
        }
        Ok(GroundTruthSpec {
            original,
            extra: BTreeMap::new(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut spec = InferredSpec::new();
        for (point, preds) in &self.original {
            spec.insert(point.clone(), preds.iter().cloned());
        }
        spec.to_text()
    }

    pub fn original_count(&self) -> usize {
        self.original.values().map(Vec::len).sum()
    }

    pub fn knows_point(&self, point: &PointKey) -> bool {
        self.original.contains_key(point) || self.extra.contains_key(point)
    }

    /// Records `predicate` as an extra property unless it is already
    /// covered by an original or extra property at `point`.
    pub fn add_extra(&mut self, point: &PointKey, predicate: Predicate) -> bool {
        let known = self
            .original
            .get(point)
            .into_iter()
            .chain(self.extra.get(point))
            .flatten()
            .any(|p| equivalent(&predicate, p));
        if known {
            return false;
        }
        self.extra.entry(point.clone()).or_default().push(predicate);
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReviewDecision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewEntry {
    pub decision: ReviewDecision,
    pub invariant: Invariant,
}

/// Human decisions on inferred invariants that match no property.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Review {
    pub entries: Vec<ReviewEntry>,
}

impl Review {
    /// Lines are `accept|reject <point-name> <ENTER|EXIT> <invariant>`;
    /// every point must exist in `gt`.
    pub fn parse(text: &str, gt: &GroundTruthSpec) -> Result<Self, EvalError> {
        let mut entries: Vec<ReviewEntry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| EvalError::Review {
                line: lineno,
                msg: msg.to_string(),
            };
            let mut parts = line.splitn(4, char::is_whitespace);
            let decision = match parts.next() {
                Some("accept") => ReviewDecision::Accept,
                Some("reject") => ReviewDecision::Reject,
                _ => return Err(bad("expected `accept` or `reject`")),
            };
            let (Some(method), Some(kind), Some(rest)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(
                    "expected `<decision> <point> <ENTER|EXIT> <invariant>`",
                ));
            };
            let point = parse_point_header(&format!("{method} {kind}"))
                .ok_or_else(|| bad("bad program point"))?;
            if !gt.knows_point(&point) {
                return Err(EvalError::UnknownPoint {
                    line: lineno,
                    point,
                });
            }
            let predicate: Predicate = rest.parse().map_err(|source| EvalError::ReviewGrammar {
                line: lineno,
                source,
            })?;
            let invariant = Invariant { point, predicate };
            if let Some(prev) = entries.iter().find(|e| e.invariant == invariant) {
                if prev.decision != decision {
                    return Err(EvalError::Conflict {
                        line: lineno,
                        invariant: invariant.to_string(),
                    });
                }
                continue;
            }
            entries.push(ReviewEntry {
                decision,
                invariant,
            });
        }
        Ok(Review { entries })
    }

    pub fn accepted(&self) -> impl Iterator<Item = &Invariant> {
        self.entries
            .iter()
            .filter(|e| e.decision == ReviewDecision::Accept)
            .map(|e| &e.invariant)
    }
}

/// A percentage with a flag for the 0/0 case, which reports as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub undefined: bool,
}

impl Ratio {
    pub fn percent(num: usize, den: usize) -> Ratio {
        if den == 0 {
            Ratio {
                value: 0.0,
                undefined: true,
            }
        } else {
            Ratio {
                value: 100.0 * num as f64 / den as f64,
                undefined: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub correct_orig: usize,
    pub correct_total: usize,
    pub incorrect: usize,
    pub missed_orig: usize,
    pub missed_total: usize,
    pub precision_orig: Ratio,
    pub recall_orig: Ratio,
    pub precision_total: Ratio,
    pub recall_total: Ratio,
}

impl ClassificationReport {
    pub fn from_counts(
        correct_orig: usize,
        correct_total: usize,
        incorrect: usize,
        missed_orig: usize,
        missed_total: usize,
    ) -> Self {
        ClassificationReport {
            correct_orig,
            correct_total,
            incorrect,
            missed_orig,
            missed_total,
            precision_orig: Ratio::percent(correct_orig, correct_orig + incorrect),
            recall_orig: Ratio::percent(correct_orig, correct_orig + missed_orig),
            precision_total: Ratio::percent(correct_total, correct_total + incorrect),
            recall_total: Ratio::percent(correct_total, correct_total + missed_total),
        }
    }

    /// precision_orig, recall_orig, precision_total, recall_total.
    pub fn percentages(&self) -> [f64; 4] {
        [
            self.precision_orig.value,
            self.recall_orig.value,
            self.precision_total.value,
            self.recall_total.value,
        ]
    }
}

/// Per-invariant outcome, kept for reports.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Classification {
    pub correct_orig: Vec<Invariant>,
    pub correct_extra: Vec<Invariant>,
    pub incorrect: Vec<Invariant>,
    pub missed_orig: Vec<Invariant>,
    pub missed_extra: Vec<Invariant>,
}

impl Classification {
    pub fn report(&self) -> ClassificationReport {
        let co = self.correct_orig.len();
        let mo = self.missed_orig.len();
        ClassificationReport::from_counts(
            co,
            co + self.correct_extra.len(),
            self.incorrect.len(),
            mo,
            mo + self.missed_extra.len(),
        )
    }
}

/// Classifies every inferred invariant. Accepted review entries are added
/// to `gt.extra` before matching.
pub fn classify_detailed(
    inferred: &InferredSpec,
    gt: &mut GroundTruthSpec,
    review: &Review,
) -> Classification {
    for inv in review.accepted() {
        gt.add_extra(&inv.point, inv.predicate.clone());
    }
    let mut out = Classification::default();
    let empty = Vec::new();
    for inv in inferred.invariants() {
        let orig = gt.original.get(&inv.point).unwrap_or(&empty);
        let extra = gt.extra.get(&inv.point).unwrap_or(&empty);
        if orig.iter().any(|p| equivalent(&inv.predicate, p)) {
            out.correct_orig.push(inv);
        } else if extra.iter().any(|p| equivalent(&inv.predicate, p)) {
            out.correct_extra.push(inv);
        } else {
            out.incorrect.push(inv);
        }
    }
    let found =
        |point: &PointKey, p: &Predicate| inferred.get(point).iter().any(|q| equivalent(q, p));
    for (point, props) in &gt.original {
        for p in props.iter().filter(|p| !found(point, p)) {
            out.missed_orig.push(Invariant {
                point: point.clone(),
                predicate: p.clone(),
            });
        }
    }
    for (point, props) in &gt.extra {
        for p in props.iter().filter(|p| !found(point, p)) {
            out.missed_extra.push(Invariant {
                point: point.clone(),
                predicate: p.clone(),
            });
        }
    }
    out
}

pub fn classify(
    inferred: &InferredSpec,
    gt: &mut GroundTruthSpec,
    review: &Review,
) -> ClassificationReport {
    classify_detailed(inferred, gt, review).report()
}

/// Two-decimal rounding used for every reported percentage.
pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub const METRICS_HEADER: [&str; 10] = [
    "run",
    "correct_orig",
    "correct_total",
    "incorrect",
    "missed_orig",
    "missed_total",
    "precision_orig",
    "recall_orig",
    "precision_total",
    "recall_total",
];

pub fn metrics_csv(rows: &[(String, ClassificationReport)]) -> String {
    let mut out = METRICS_HEADER.join(",");
    out.push('\n');
    for (label, r) in rows {
        let [po, ro, pt, rt] = r.percentages().map(round2);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{po:.2},{ro:.2},{pt:.2},{rt:.2}",
            csv_field(label),
            r.correct_orig,
            r.correct_total,
            r.incorrect,
            r.missed_orig,
            r.missed_total,
        );
    }
    out
}

/// Aligned text rendering of the metrics table; undefined ratios get a `*`.
pub fn metrics_text(rows: &[(String, ClassificationReport)]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, r)| {
            let pct = |x: Ratio| {
                format!(
                    "{:.2}{}",
                    round2(x.value),
                    if x.undefined { "*" } else { "" }
                )
            };
            vec![
                label.clone(),
                r.correct_orig.to_string(),
                r.correct_total.to_string(),
                r.incorrect.to_string(),
                r.missed_orig.to_string(),
                r.missed_total.to_string(),
                pct(r.precision_orig),
                pct(r.recall_orig),
                pct(r.precision_total),
                pct(r.recall_total),
            ]
        })
        .collect();
    align_table(&METRICS_HEADER, &cells)
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Left-aligns the first column and right-aligns the rest.
pub(crate) fn align_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut text = String::new();
        for (i, (c, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(text, "{c:<w$}");
            } else {
                let _ = write!(text, "  {c:>w$}");
            }
        }
        out.push_str(text.trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}
