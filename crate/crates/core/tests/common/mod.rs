// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! Shared test support: a brute-force inference oracle and a seeded random
//! trace generator.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeSet;

use num_rational::BigRational;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specminer_core::engine::{prune_redundant, InferenceConfig, InferredSpec};
use specminer_core::invariant::{Constant, Number, Predicate};
use specminer_core::trace::{
    PointKey, ProgramPointDecl, Sample, Trace, TraceBuilder, Value, VarDecl, VarKind,
};

fn number(v: &Value) -> Option<Number> {
    match v {
        Value::Int(i) => Some(Number::Int(*i)),
        Value::Real(r) => Some(Number::Real(*r)),
        _ => None,
    }
}

fn rational(v: &Value) -> BigRational {
    number(v).expect("numeric").to_rational()
}

/// Every predicate that holds on all `samples` of `decl`, enumerated
/// directly from the columns, then filtered by the library's justification
/// policy and redundancy pruning.
pub fn oracle_point(
    decl: &ProgramPointDecl,
    samples: &[&Sample],
    config: &InferenceConfig,
) -> Vec<Predicate> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let k = config.oneof_cardinality;
    let policy = config.policy();
    let column = |i: usize| -> Vec<&Value> { samples.iter().map(|s| &s.values[i]).collect() };
    let mut found: Vec<(Predicate, bool)> = Vec::new();

    for (i, var) in decl.vars.iter().enumerate() {
        let col = column(i);
        let name = var.name.clone();
        let has_null = col.iter().any(|v| v.is_null());
        match var.kind {
            VarKind::Ref => {
                if !has_null {
                    found.push((Predicate::NonNull { var: name }, true));
                }
            }
            _ if has_null => {}
            kind => {
                let set: BTreeSet<Constant> = col
                    .iter()
                    .map(|v| match v {
                        Value::Bool(b) => Constant::Bool(*b),
                        Value::Text(s) => Constant::Text(s.clone()),
                        v => Constant::Num(number(v).unwrap()),
                    })
                    .collect();
                if set.len() <= k {
                    found.push((
                        Predicate::OneOf {
                            var: name.clone(),
                            values: set.into_iter().collect(),
                        },
                        true,
                    ));
                }
                if kind.is_numeric() {
                    let nums: Vec<Number> = col.iter().map(|v| number(v).unwrap()).collect();
                    let lo = nums.iter().copied().fold(nums[0], |a, b| {
                        if b.value_cmp(a).is_lt() {
                            b
                        } else {
                            a
                        }
                    });
                    let hi = nums.iter().copied().fold(nums[0], |a, b| {
                        if b.value_cmp(a).is_gt() {
                            b
                        } else {
                            a
                        }
                    });
                    found.push((
                        Predicate::LowerBound {
                            var: name.clone(),
                            bound: lo,
                        },
                        true,
                    ));
                    found.push((
                        Predicate::UpperBound {
                            var: name.clone(),
                            bound: hi,
                        },
                        true,
                    ));
                    if nums.iter().all(|v| !v.is_zero()) {
                        found.push((Predicate::NonZero { var: name }, true));
                    }
                }
            }
        }
    }

    for kind in [VarKind::Int, VarKind::Real] {
        let group: Vec<usize> = decl
            .vars
            .iter()
            .enumerate()
            .filter(|(i, v)| v.kind == kind && column(*i).iter().all(|x| !x.is_null()))
            .map(|(i, _)| i)
            .collect();
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                found.extend(pair_predicates(decl, &column(i), &column(j), i, j));
            }
        }
        if config.enable_ternary {
            for (a, &i) in group.iter().enumerate() {
                for (b, &j) in group.iter().enumerate().skip(a + 1) {
                    for &l in &group[b + 1..] {
                        if let Some(p) = plane(decl, &column(i), &column(j), &column(l), [i, j, l])
                        {
                            found.push((p, true));
                        }
                    }
                }
            }
        }
    }

    let accepted = found
        .into_iter()
        .filter(|(p, distinct)| policy.accepts(p, n, *distinct))
        .map(|(p, _)| p)
        .collect();
    prune_redundant(accepted)
}

fn pair_predicates(
    decl: &ProgramPointDecl,
    xs: &[&Value],
    ys: &[&Value],
    i: usize,
    j: usize,
) -> Vec<(Predicate, bool)> {
    let name = |v: usize| decl.vars[v].name.clone();
    let orders: BTreeSet<Ordering> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| rational(x).cmp(&rational(y)))
        .collect();
    let tuples: BTreeSet<(BigRational, BigRational)> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (rational(x), rational(y)))
        .collect();
    let distinct = tuples.len() >= 2;
    let (x, y) = if orders.contains(&Ordering::Greater) {
        (name(j), name(i))
    } else {
        (name(i), name(j))
    };
    let both = orders.contains(&Ordering::Less) && orders.contains(&Ordering::Greater);
    let mut out = Vec::new();
    if orders.len() == 1 && orders.contains(&Ordering::Equal) {
        out.push((
            Predicate::VarEqual {
                x: x.clone(),
                y: y.clone(),
            },
            distinct,
        ));
    }
    if !both {
        out.push((
            Predicate::VarLessEqual {
                x: x.clone(),
                y: y.clone(),
            },
            distinct,
        ));
        if !orders.contains(&Ordering::Equal) {
            out.push((
                Predicate::VarLess {
                    x: x.clone(),
                    y: y.clone(),
                },
                distinct,
            ));
        }
    }
    // y == a * x + b through the extreme x values, checked on every sample.
    let pts: Vec<(BigRational, BigRational)> = tuples.into_iter().collect();
    let (lo, hi) = (&pts[0], &pts[pts.len() - 1]);
    if lo.0 != hi.0 {
        let a = (&hi.1 - &lo.1) / (&hi.0 - &lo.0);
        let b = &lo.1 - &a * &lo.0;
        if pts.iter().all(|(px, py)| *py == &a * px + &b) {
            out.push((
                Predicate::LinearBinary {
                    x: name(i),
                    y: name(j),
                    a,
                    b,
                },
                true,
            ));
        }
    }
    out
}

/// z == a * x + b * y + c fitted through some non-collinear triple of
/// distinct points by Cramer's rule, then checked on every sample.
fn plane(
    decl: &ProgramPointDecl,
    xs: &[&Value],
    ys: &[&Value],
    zs: &[&Value],
    idx: [usize; 3],
) -> Option<Predicate> {
    let pts: Vec<[BigRational; 3]> = xs
        .iter()
        .zip(ys)
        .zip(zs)
        .map(|((x, y), z)| [rational(x), rational(y), rational(z)])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let m = pts.len();
    for p in 0..m {
        for q in p + 1..m {
            for r in q + 1..m {
                let rows = [&pts[p], &pts[q], &pts[r]];
                let one = BigRational::from_integer(1.into());
                let det3 = |c: [[BigRational; 3]; 3]| -> BigRational {
                    &c[0][0] * (&c[1][1] * &c[2][2] - &c[1][2] * &c[2][1])
                        - &c[0][1] * (&c[1][0] * &c[2][2] - &c[1][2] * &c[2][0])
                        + &c[0][2] * (&c[1][0] * &c[2][1] - &c[1][1] * &c[2][0])
                };
                let matrix = |col: Option<usize>| -> [[BigRational; 3]; 3] {
                    rows.map(|row| {
                        let mut line = [row[0].clone(), row[1].clone(), one.clone()];
                        if let Some(c) = col {
                            line[c] = row[2].clone();
                        }
                        line
                    })
                };
                let d = det3(matrix(None));
                if d.is_zero() {
                    continue;
                }
                let a = det3(matrix(Some(0))) / &d;
                let b = det3(matrix(Some(1))) / &d;
                let c = det3(matrix(Some(2))) / &d;
                if !pts.iter().all(|t| t[2] == &a * &t[0] + &b * &t[1] + &c) {
                    return None;
                }
                let name = |v: usize| decl.vars[v].name.clone();
                return Some(Predicate::LinearTernary {
                    x: name(idx[0]),
                    y: name(idx[1]),
                    z: name(idx[2]),
                    a,
                    b,
                    c,
                });
            }
        }
    }
    None
}

pub fn oracle(trace: &Trace, config: &InferenceConfig) -> InferredSpec {
    let mut spec = InferredSpec::new();
    for (p, decl) in trace.decls.iter().enumerate() {
        let samples: Vec<&Sample> = trace.samples_at(p).collect();
        if !samples.is_empty() {
            spec.insert(decl.key.clone(), oracle_point(decl, &samples, config));
        }
    }
    spec
}

/// How a generated variable draws its values.
#[derive(Clone, Copy)]
enum Source {
    Constant,
    Small,
    Wide,
    /// `a * v + b` of an earlier variable of the same kind.
    Affine(usize, i64, i64),
    /// `a * v + b * w + c` of two earlier variables of the same kind.
    Plane(usize, usize, i64, i64, i64),
}

struct GenVar {
    name: String,
    kind: VarKind,
    source: Source,
    nullable: bool,
}

/// Plans `count` variables. Sources index into `inherited` followed by the
/// planned variables themselves.
fn plan_vars(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    count: usize,
    inherited: &[VarKind],
) -> Vec<GenVar> {
    let mut vars: Vec<GenVar> = Vec::new();
    for v in 0..count {
        let previous = vars.last().map(|g| g.kind).or(inherited.last().copied());
        let kind = match previous {
            Some(k) if k.is_numeric() && rng.gen_bool(0.5) => k,
            _ => *[
                VarKind::Int,
                VarKind::Int,
                VarKind::Int,
                VarKind::Real,
                VarKind::Real,
                VarKind::Bool,
                VarKind::Text,
                VarKind::Ref,
            ]
            .choose(rng)
            .unwrap(),
        };
        let same: Vec<usize> = inherited
            .iter()
            .copied()
            .chain(vars.iter().map(|g| g.kind))
            .enumerate()
            .filter(|(_, k)| *k == kind)
            .map(|(i, _)| i)
            .collect();
        let source = match (kind.is_numeric(), rng.gen_range(0..8)) {
            (_, 0) => Source::Constant,
            (true, 1..=3) if !same.is_empty() => Source::Affine(
                *same.choose(rng).unwrap(),
                *[1, 1, 2, -1, 3].choose(rng).unwrap(),
                rng.gen_range(-3..=3),
            ),
            (true, 4..=5) if same.len() >= 2 => {
                let mut two = same.choose_multiple(rng, 2);
                Source::Plane(
                    *two.next().unwrap(),
                    *two.next().unwrap(),
                    *[1, 1, -1, 2].choose(rng).unwrap(),
                    *[1, 1, -2, 3].choose(rng).unwrap(),
                    rng.gen_range(-2..=2),
                )
            }
            (_, 6) => Source::Wide,
            _ => Source::Small,
        };
        vars.push(GenVar {
            name: format!("{prefix}{v}"),
            kind,
            source,
            nullable: rng.gen_bool(0.1),
        });
    }
    vars
}

fn draw(
    rng: &mut ChaCha8Rng,
    vars: &[GenVar],
    constants: &[Value],
    inherited: &[Value],
) -> Vec<Value> {
    let mut out: Vec<Value> = inherited.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let value = match var.source {
            Source::Constant => constants[i].clone(),
            Source::Small | Source::Wide => {
                let span = if matches!(var.source, Source::Small) {
                    3
                } else {
                    40
                };
                random_value(rng, var.kind, span)
            }
            Source::Affine(src, a, b) => match &out[src] {
                Value::Int(v) => Value::Int(a * v + b),
                Value::Real(v) => Value::Real(a as f64 * v + b as f64),
                _ => Value::Null,
            },
            Source::Plane(p, q, a, b, c) => match (&out[p], &out[q]) {
                (Value::Int(x), Value::Int(y)) => Value::Int(a * x + b * y + c),
                (Value::Real(x), Value::Real(y)) => {
                    Value::Real(a as f64 * x + b as f64 * y + c as f64)
                }
                _ => Value::Null,
            },
        };
        let value = if var.nullable && rng.gen_bool(0.05) {
            Value::Null
        } else {
            value
        };
        out.push(value);
    }
    out.split_off(inherited.len())
}

fn random_value(rng: &mut ChaCha8Rng, kind: VarKind, span: i64) -> Value {
    match kind {
        VarKind::Int => Value::Int(rng.gen_range(-span..=span)),
        // Quarter steps keep sums exact.
        VarKind::Real => Value::Real(rng.gen_range(-4 * span..=4 * span) as f64 / 4.0),
        VarKind::Bool => Value::Bool(rng.gen_bool(0.5)),
        VarKind::Text => {
            let words = ["a", "b", "c", "d", "e", "f"];
            Value::Text(words[rng.gen_range(0..(span as usize).min(words.len()))].to_string())
        }
        VarKind::Ref => Value::Ref(rng.gen_range(1..=3)),
    }
}

/// A random trace with one or two methods, at most five variables per
/// point (derived `orig` variables included) and at most fifty samples per
/// point. About one invocation in five ends exceptionally.
pub fn random_trace(seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = TraceBuilder::new();
    let methods = rng.gen_range(1..=2);
    let mut nonce = 0u64;
    for m in 0..methods {
        let method = format!("C{m}.m");
        let count = rng.gen_range(0..=3);
        let enter_vars = plan_vars(&mut rng, "e", count, &[]);
        let origs: Vec<VarKind> = enter_vars
            .iter()
            .map(|v| v.kind)
            .filter(|k| k.is_numeric())
            .collect();
        let count = rng.gen_range(0..=5 - origs.len());
        let exit_vars = plan_vars(&mut rng, "x", count, &origs);
        let decl = |vars: &[GenVar]| -> Vec<VarDecl> {
            vars.iter()
                .map(|v| VarDecl::new(v.name.clone(), v.kind))
                .collect()
        };
        let enter = builder
            .declare(PointKey::enter(method.clone()), decl(&enter_vars))
            .expect("fresh point");
        let exit = builder
            .declare(PointKey::exit(method.clone()), decl(&exit_vars))
            .expect("fresh point");
        let enter_consts: Vec<Value> = enter_vars
            .iter()
            .map(|v| random_value(&mut rng, v.kind, 3))
            .collect();
        let exit_consts: Vec<Value> = exit_vars
            .iter()
            .map(|v| random_value(&mut rng, v.kind, 3))
            .collect();
        for _ in 0..rng.gen_range(0..=50) {
            nonce += 1;
            let values = draw(&mut rng, &enter_vars, &enter_consts, &[]);
            let orig_values: Vec<Value> = enter_vars
                .iter()
                .zip(&values)
                .filter(|(v, _)| v.kind.is_numeric())
                .map(|(_, value)| value.clone())
                .collect();
            builder.sample(enter, nonce, values).expect("valid sample");
            if rng.gen_bool(0.8) {
                let values = draw(&mut rng, &exit_vars, &exit_consts, &orig_values);
                builder.sample(exit, nonce, values).expect("valid sample");
            }
        }
    }
    builder.finish()
}
