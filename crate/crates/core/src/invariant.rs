// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! The grammar of candidate invariants.
//!
//! Every candidate is an instance of one of ten templates over at most three
//! variables. A [`Candidate`] consumes samples one at a time: unary
//! templates fix their parameters from the first sample and weaken them
//! afterwards, linear templates collect points until their coefficients are
//! pinned down, and any counterexample falsifies the candidate for good.
//!
//! Predicates render to a canonical text form which [`Predicate::from_str`]
//! parses back; ground-truth specifications are written in the same form.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::trace::{quote, unquote, PointKey, ProgramPointDecl, Sample, Value, VarKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("variable `{var}` is missing from the sample")]
    MissingVariable { var: String },
    #[error("value of `{var}` has the wrong type for this template")]
    WrongType { var: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse invariant `{text}`: {msg}")]
pub struct GrammarError {
    pub text: String,
    pub msg: String,
}

/// A numeric constant, kept in the type of the variable it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Number {
    Int(i64),
    Real(f64),
}

impl Number {
    pub fn to_rational(self) -> BigRational {
        match self {
            Number::Int(v) => BigRational::from_integer(BigInt::from(v)),
            Number::Real(v) => BigRational::from_float(v).expect("reals are finite"),
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Number::Int(v) => v == 0,
            Number::Real(v) => v == 0.0,
        }
    }

    /// Numeric comparison, ignoring representation.
    pub fn value_cmp(self, other: Number) -> Ordering {
        match (self, other) {
            (Number::Int(a), Number::Int(b)) => a.cmp(&b),
            (Number::Real(a), Number::Real(b)) => a.partial_cmp(&b).expect("reals are finite"),
            (a, b) => a.to_rational().cmp(&b.to_rational()),
        }
    }

    fn from_value(value: &Value) -> Option<Number> {
        match value {
            Value::Int(v) => Some(Number::Int(*v)),
            Value::Real(v) => Some(Number::Real(*v)),
            _ => None,
        }
    }
}

impl Eq for Number {}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value_cmp(*other).then_with(|| {
            let rank = |n: &Number| matches!(n, Number::Real(_)) as u8;
            rank(self).cmp(&rank(other))
        })
    }
}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Int(v) => write!(f, "{v}"),
            Number::Real(v) => write!(f, "{v:?}"),
        }
    }
}

/// A constant that can appear in a `one of` set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Constant {
    Num(Number),
    Bool(bool),
    Text(String),
}

impl Constant {
    pub fn from_value(value: &Value) -> Option<Constant> {
        match value {
            Value::Int(_) | Value::Real(_) => Number::from_value(value).map(Constant::Num),
            Value::Bool(b) => Some(Constant::Bool(*b)),
            Value::Text(s) => Some(Constant::Text(s.clone())),
            Value::Ref(_) | Value::Null => None,
        }
    }

    pub fn as_number(&self) -> Option<Number> {
        match self {
            Constant::Num(n) => Some(*n),
            _ => None,
        }
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Num(n) => write!(f, "{n}"),
            Constant::Bool(b) => write!(f, "{b}"),
            Constant::Text(s) => f.write_str(&quote(s)),
        }
    }
}

/// Template identity; the declaration order is the canonical output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InvariantKind {
    OneOf,
    LowerBound,
    UpperBound,
    NonZero,
    NonNull,
    VarEqual,
    VarLessEqual,
    VarLess,
    LinearBinary,
    LinearTernary,
}

impl InvariantKind {
    pub fn arity(self) -> usize {
        use InvariantKind::*;
        match self {
            OneOf | LowerBound | UpperBound | NonZero | NonNull => 1,
            VarEqual | VarLessEqual | VarLess | LinearBinary => 2,
            LinearTernary => 3,
        }
    }
}

/// An instantiated template with canonical parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    /// `var one of {..}`; values sorted ascending and distinct.
    OneOf {
        var: String,
        values: Vec<Constant>,
    },
    LowerBound {
        var: String,
        bound: Number,
    },
    UpperBound {
        var: String,
        bound: Number,
    },
    NonZero {
        var: String,
    },
    NonNull {
        var: String,
    },
    VarEqual {
        x: String,
        y: String,
    },
    VarLessEqual {
        x: String,
        y: String,
    },
    VarLess {
        x: String,
        y: String,
    },
    /// `y == a * x + b`
    LinearBinary {
        x: String,
        y: String,
        a: BigRational,
        b: BigRational,
    },
    /// `z == a * x + b * y + c`
    LinearTernary {
        x: String,
        y: String,
        z: String,
        a: BigRational,
        b: BigRational,
        c: BigRational,
    },
}

impl Predicate {
    pub fn kind(&self) -> InvariantKind {
        match self {
            Predicate::OneOf { .. } => InvariantKind::OneOf,
            Predicate::LowerBound { .. } => InvariantKind::LowerBound,
            Predicate::UpperBound { .. } => InvariantKind::UpperBound,
            Predicate::NonZero { .. } => InvariantKind::NonZero,
            Predicate::NonNull { .. } => InvariantKind::NonNull,
            Predicate::VarEqual { .. } => InvariantKind::VarEqual,
            Predicate::VarLessEqual { .. } => InvariantKind::VarLessEqual,
            Predicate::VarLess { .. } => InvariantKind::VarLess,
            Predicate::LinearBinary { .. } => InvariantKind::LinearBinary,
            Predicate::LinearTernary { .. } => InvariantKind::LinearTernary,
        }
    }

    pub fn vars(&self) -> Vec<&str> {
        match self {
            Predicate::OneOf { var, .. }
            | Predicate::LowerBound { var, .. }
            | Predicate::UpperBound { var, .. }
            | Predicate::NonZero { var }
            | Predicate::NonNull { var } => vec![var],
            Predicate::VarEqual { x, y }
            | Predicate::VarLessEqual { x, y }
            | Predicate::VarLess { x, y }
            | Predicate::LinearBinary { x, y, .. } => vec![x, y],
            Predicate::LinearTernary { x, y, z, .. } => vec![x, y, z],
        }
    }

    /// Evaluates the predicate; `None` from `lookup` or a type mismatch
    /// makes it false. Nulls only satisfy nothing but `NonNull`'s negation.
    pub fn holds<'v>(&self, lookup: impl Fn(&str) -> Option<&'v Value>) -> bool {
        let num = |name: &str| lookup(name).and_then(Number::from_value);
        let rat = |name: &str| num(name).map(Number::to_rational);
        match self {
            Predicate::OneOf { var, values } => lookup(var)
                .and_then(Constant::from_value)
                .is_some_and(|c| values.contains(&c)),
            Predicate::LowerBound { var, bound } => {
                num(var).is_some_and(|v| v.value_cmp(*bound) != Ordering::Less)
            }
            Predicate::UpperBound { var, bound } => {
                num(var).is_some_and(|v| v.value_cmp(*bound) != Ordering::Greater)
            }
            Predicate::NonZero { var } => num(var).is_some_and(|v| !v.is_zero()),
            Predicate::NonNull { var } => lookup(var).is_some_and(|v| !v.is_null()),
            Predicate::VarEqual { x, y } => compare(num(x), num(y)) == Some(Ordering::Equal),
            Predicate::VarLessEqual { x, y } => {
                matches!(
                    compare(num(x), num(y)),
                    Some(Ordering::Less | Ordering::Equal)
                )
            }
            Predicate::VarLess { x, y } => compare(num(x), num(y)) == Some(Ordering::Less),
            Predicate::LinearBinary { x, y, a, b } => match (rat(x), rat(y)) {
                (Some(xv), Some(yv)) => yv == a * xv + b,
                _ => false,
            },
            Predicate::LinearTernary { x, y, z, a, b, c } => match (rat(x), rat(y), rat(z)) {
                (Some(xv), Some(yv), Some(zv)) => zv == a * xv + b * yv + c,
                _ => false,
            },
        }
    }

    /// Linear forms with a zero coefficient, or `y == x`, restate a
    /// lower-arity invariant that is alive over the same samples.
    pub fn is_degenerate(&self) -> bool {
        match self {
            Predicate::LinearBinary { a, b, .. } => a.is_zero() || (a.is_one() && b.is_zero()),
            Predicate::LinearTernary { a, b, .. } => a.is_zero() || b.is_zero(),
            _ => false,
        }
    }

    fn params_cmp(&self, other: &Self) -> Ordering {
        use Predicate::*;
        match (self, other) {
            (OneOf { values: a, .. }, OneOf { values: b, .. }) => a.cmp(b),
            (LowerBound { bound: a, .. }, LowerBound { bound: b, .. })
            | (UpperBound { bound: a, .. }, UpperBound { bound: b, .. }) => a.cmp(b),
            (LinearBinary { a, b, .. }, LinearBinary { a: a2, b: b2, .. }) => (a, b).cmp(&(a2, b2)),
            (
                LinearTernary { a, b, c, .. },
                LinearTernary {
                    a: a2,
                    b: b2,
                    c: c2,
                    ..
                },
            ) => (a, b, c).cmp(&(a2, b2, c2)),
            _ => Ordering::Equal,
        }
    }
}

fn compare(x: Option<Number>, y: Option<Number>) -> Option<Ordering> {
    Some(x?.value_cmp(y?))
}

impl Ord for Predicate {
    /// Canonical order: template kind, then variable tuple, then parameters.
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind()
            .cmp(&other.kind())
            .then_with(|| self.vars().cmp(&other.vars()))
            .then_with(|| self.params_cmp(other))
    }
}

impl PartialOrd for Predicate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn write_linear(
    f: &mut fmt::Formatter<'_>,
    terms: &[(&BigRational, &str)],
    constant: &BigRational,
) -> fmt::Result {
    for (i, (coef, var)) in terms.iter().enumerate() {
        let magnitude = coef.abs();
        match (i, coef.is_negative()) {
            (0, true) => f.write_char('-')?,
            (0, false) => {}
            (_, true) => f.write_str(" - ")?,
            (_, false) => f.write_str(" + ")?,
        }
        if !magnitude.is_one() {
            write!(f, "{magnitude} * ")?;
        }
        f.write_str(var)?;
    }
    if !constant.is_zero() {
        let sign = if constant.is_negative() { '-' } else { '+' };
        write!(f, " {sign} {}", constant.abs())?;
    }
    Ok(())
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::OneOf { var, values } if values.len() == 1 => {
                write!(f, "{var} == {}", values[0])
            }
            Predicate::OneOf { var, values } => {
                write!(f, "{var} one of {{")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_char('}')
            }
            Predicate::LowerBound { var, bound } => write!(f, "{var} >= {bound}"),
            Predicate::UpperBound { var, bound } => write!(f, "{var} <= {bound}"),
            Predicate::NonZero { var } => write!(f, "{var} != 0"),
            Predicate::NonNull { var } => write!(f, "{var} != null"),
            Predicate::VarEqual { x, y } => write!(f, "{x} == {y}"),
            Predicate::VarLessEqual { x, y } => write!(f, "{x} <= {y}"),
            Predicate::VarLess { x, y } => write!(f, "{x} < {y}"),
            Predicate::LinearBinary { x, y, a, b } => {
                write_linear(f, &[(a, x)], b)?;
                write!(f, " == {y}")
            }
            Predicate::LinearTernary { x, y, z, a, b, c } => {
                write_linear(f, &[(a, x), (b, y)], c)?;
                write!(f, " == {z}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Num(String),
    Str(String),
    Op(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    const OPS: [&str; 11] = ["==", ">=", "<=", "!=", "<", "+", "-", "*", "{", "}", ","];
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                i += if bytes[i] == b'\\' { 2 } else { 1 };
            }
            if i >= bytes.len() {
                return Err("unterminated string".into());
            }
            i += 1;
            let s = unquote(&text[start..i]).ok_or("bad string escape")?;
            tokens.push(Token::Str(s));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() {
                let d = bytes[i] as char;
                let exp_sign = (d == '-' || d == '+') && matches!(bytes[i - 1], b'e' | b'E');
                if d.is_ascii_digit() || matches!(d, '.' | 'e' | 'E' | '/') || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            tokens.push(Token::Num(text[start..i].to_string()));
        } else if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'_' | b'.' | b'$'))
            {
                i += 1;
            }
            let mut ident = text[start..i].to_string();
            if ident == "orig" && bytes.get(i) == Some(&b'(') {
                let close = text[i..].find(')').ok_or("unclosed orig(")? + i;
                ident = format!("orig({})", text[i + 1..close].trim());
                i = close + 1;
            }
            tokens.push(Token::Ident(ident));
        } else if let Some(op) = OPS.iter().find(|op| text[i..].starts_with(**op)) {
            tokens.push(Token::Op(op));
            i += op.len();
        } else {
            return Err(format!("unexpected character `{c}`"));
        }
    }
    Ok(tokens)
}

/// Parses a decimal (`-1.25`, `3e-2`) or ratio (`7/3`) literal exactly.
pub fn parse_exact(text: &str) -> Option<BigRational> {
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = n.parse().ok()?;
        let d: BigInt = d.parse().ok()?;
        return (!d.is_zero()).then(|| BigRational::new(n, d));
    }
    let (mantissa, exp) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let digits = digits.trim_start_matches(['+', '-']);
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut value = BigRational::from_integer(digits.parse().ok()?);
    if int_part.starts_with('-') {
        value = -value;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let factor = num_traits::pow(ten, scale.unsigned_abs() as usize);
    Some(if scale >= 0 {
        value * factor
    } else {
        value / factor
    })
}

fn number_literal(negative: bool, text: &str) -> Option<Number> {
    if text.contains('/') {
        return None;
    }
    let signed = if negative {
        format!("-{text}")
    } else {
        text.to_string()
    };
    if text.contains(['.', 'e', 'E']) {
        signed
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .map(Number::Real)
    } else {
        signed.parse().ok().map(Number::Int)
    }
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn eat(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Token::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn done(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn ident(&mut self) -> Result<String, String> {
        match self.next() {
            Some(Token::Ident(s)) if !is_keyword(s) => Ok(s.clone()),
            other => Err(format!("expected a variable, found {other:?}")),
        }
    }

    fn constant(&mut self) -> Result<Constant, String> {
        let negative = self.eat("-");
        match self.next() {
            Some(Token::Num(n)) => number_literal(negative, n)
                .map(Constant::Num)
                .ok_or_else(|| format!("bad number `{n}`")),
            Some(Token::Str(s)) if !negative => Ok(Constant::Text(s.clone())),
            Some(Token::Ident(b)) if !negative && b == "true" => Ok(Constant::Bool(true)),
            Some(Token::Ident(b)) if !negative && b == "false" => Ok(Constant::Bool(false)),
            other => Err(format!("expected a constant, found {other:?}")),
        }
    }

    /// `[-] term { (+|-) term }` where a term is `k * v`, `v`, or `k`.
    fn linear(&mut self) -> Result<(Vec<(BigRational, String)>, BigRational), String> {
        let mut terms = Vec::new();
        let mut constant = BigRational::zero();
        let mut negative = self.eat("-");
        loop {
            let sign = if negative {
                -BigRational::one()
            } else {
                BigRational::one()
            };
            match self.next() {
                Some(Token::Num(n)) => {
                    let k = parse_exact(n).ok_or_else(|| format!("bad coefficient `{n}`"))?;
                    if self.eat("*") {
                        terms.push((sign * k, self.ident()?));
                    } else {
                        constant += sign * k;
                    }
                }
                Some(Token::Ident(v)) if !is_keyword(v) => {
                    terms.push((sign, v.clone()));
                }
                other => return Err(format!("expected a term, found {other:?}")),
            }
            negative = match self.peek() {
                Some(Token::Op("+")) => false,
                Some(Token::Op("-")) => true,
                _ => break,
            };
            self.pos += 1;
        }
        Ok((terms, constant))
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "true" | "false" | "null" | "one" | "of")
}

fn parse_predicate(text: &str) -> Result<Predicate, String> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens: &tokens,
        pos: 0,
    };

    // Forms with a single variable on the left.
    if let (Some(Token::Ident(var)), Some(next)) = (tokens.first(), tokens.get(1)) {
        if !is_keyword(var) {
            let var = var.clone();
            let rest_is_ident = matches!(tokens.get(2), Some(Token::Ident(s)) if !is_keyword(s));
            let single_rhs = tokens.len() == 3;
            p.pos = 2;
            let predicate = match next {
                Token::Ident(one) if one == "one" => {
                    match p.next() {
                        Some(Token::Ident(of)) if of == "of" => {}
                        _ => return Err("expected `one of {..}`".into()),
                    }
                    if !p.eat("{") {
                        return Err("expected `{`".into());
                    }
                    let mut values = vec![p.constant()?];
                    while p.eat(",") {
                        values.push(p.constant()?);
                    }
                    if !p.eat("}") {
                        return Err("expected `}`".into());
                    }
                    values.sort();
                    values.dedup();
                    Some(Predicate::OneOf { var, values })
                }
                Token::Op("==") if !(rest_is_ident && single_rhs) => {
                    let value = p.constant()?;
                    Some(Predicate::OneOf {
                        var,
                        values: vec![value],
                    })
                }
                Token::Op(op @ (">=" | "<=")) if !rest_is_ident => {
                    let bound = p.constant()?.as_number().ok_or("bounds must be numeric")?;
                    Some(if *op == ">=" {
                        Predicate::LowerBound { var, bound }
                    } else {
                        Predicate::UpperBound { var, bound }
                    })
                }
                Token::Op("!=") => match p.next() {
                    Some(Token::Ident(n)) if n == "null" => Some(Predicate::NonNull { var }),
                    Some(Token::Num(n)) if parse_exact(n).is_some_and(|v| v.is_zero()) => {
                        Some(Predicate::NonZero { var })
                    }
                    _ => return Err("`!=` is only supported against 0 or null".into()),
                },
                Token::Op("<=") => Some(Predicate::VarLessEqual {
                    x: var,
                    y: p.ident()?,
                }),
                Token::Op("<") => Some(Predicate::VarLess {
                    x: var,
                    y: p.ident()?,
                }),
                _ => None,
            };
            if let Some(predicate) = predicate {
                return if p.done() {
                    Ok(predicate)
                } else {
                    Err("trailing input".into())
                };
            }
        }
    }

    // Linear forms: `<expr> == v`.
    p.pos = 0;
    let (terms, constant) = p.linear()?;
    if !p.eat("==") {
        return Err("expected `==`".into());
    }
    let dependent = p.ident()?;
    if !p.done() {
        return Err("trailing input".into());
    }
    match terms.as_slice() {
        [(a, x)] if a.is_one() && constant.is_zero() => Ok(Predicate::VarEqual {
            x: x.clone(),
            y: dependent,
        }),
        [(a, x)] => Ok(Predicate::LinearBinary {
            x: x.clone(),
            y: dependent,
            a: a.clone(),
            b: constant,
        }),
        [(a, x), (b, y)] => Ok(Predicate::LinearTernary {
            x: x.clone(),
            y: y.clone(),
            z: dependent,
            a: a.clone(),
            b: b.clone(),
            c: constant,
        }),
        _ => Err("linear forms take one or two variables on the left".into()),
    }
}

impl FromStr for Predicate {
    type Err = GrammarError;

    fn from_str(text: &str) -> Result<Self, GrammarError> {
        parse_predicate(text.trim()).map_err(|msg| GrammarError {
            text: text.trim().to_string(),
            msg,
        })
    }
}

/// A predicate asserted at a program point.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Invariant {
    pub point: PointKey,
    pub predicate: Predicate,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.point, self.predicate)
    }
}

/// Lifecycle of a candidate. Transitions only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Unconstrained,
    Alive,
    Falsified,
}

#[derive(Debug, Clone)]
enum Progress {
    OneOf(Vec<Constant>),
    Bound(Option<Number>),
    Flag,
    /// Which orderings of (x, y) have been seen, plus whether two distinct
    /// tuples have been observed.
    Compare {
        less: bool,
        equal: bool,
        greater: bool,
        first: Option<(Number, Number)>,
        distinct: bool,
    },
    Linear {
        pending: Vec<Vec<BigRational>>,
        coeffs: Option<Vec<BigRational>>,
    },
}

/// Streaming state of one template instantiation at one program point.
#[derive(Debug, Clone)]
pub struct Candidate {
    kind: InvariantKind,
    vars: Vec<(usize, String)>,
    max_oneof: usize,
    status: Status,
    samples_seen: usize,
    progress: Progress,
}

impl Candidate {
    pub fn new(kind: InvariantKind, vars: Vec<(usize, String)>, max_oneof: usize) -> Self {
        assert_eq!(vars.len(), kind.arity());
        use InvariantKind::*;
        let progress = match kind {
            OneOf => Progress::OneOf(Vec::new()),
            LowerBound | UpperBound => Progress::Bound(None),
            NonZero | NonNull => Progress::Flag,
            VarEqual | VarLessEqual | VarLess => Progress::Compare {
                less: false,
                equal: false,
                greater: false,
                first: None,
                distinct: false,
            },
            LinearBinary | LinearTernary => Progress::Linear {
                pending: Vec::new(),
                coeffs: None,
            },
        };
        Candidate {
            kind,
            vars,
            max_oneof,
            status: Status::Unconstrained,
            samples_seen: 0,
            progress,
        }
    }

    pub fn kind(&self) -> InvariantKind {
        self.kind
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn samples_seen(&self) -> usize {
        self.samples_seen
    }

    pub fn var_names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|(_, n)| n.as_str())
    }

    /// Whether two distinct value tuples have been seen; only tracked for
    /// the comparison templates.
    pub fn distinct_tuples(&self) -> bool {
        match &self.progress {
            Progress::Compare { distinct, .. } => *distinct,
            _ => true,
        }
    }

    fn falsify(&mut self) {
        self.status = Status::Falsified;
        self.progress = Progress::Flag;
    }

    /// Consumes one sample of the candidate's program point.
    pub fn feed(&mut self, sample: &Sample) -> Result<(), TemplateError> {
        let mut values = Vec::with_capacity(self.vars.len());
        for (idx, name) in &self.vars {
            let value = sample
                .values
                .get(*idx)
                .ok_or_else(|| TemplateError::MissingVariable { var: name.clone() })?;
            values.push(value);
        }
        if self.status == Status::Falsified {
            return Ok(());
        }
        self.samples_seen += 1;

        if self.kind == InvariantKind::NonNull {
            if values[0].is_null() {
                self.falsify();
            } else {
                self.status = Status::Alive;
            }
            return Ok(());
        }
        if values.iter().any(|v| v.is_null()) {
            self.falsify();
            return Ok(());
        }
        let wrong_type = |i: usize| TemplateError::WrongType {
            var: self.vars[i].1.clone(),
        };

        let max_oneof = self.max_oneof;
        let kind = self.kind;
        let mut falsified = false;
        match &mut self.progress {
            Progress::OneOf(set) => {
                let c = Constant::from_value(values[0]).ok_or_else(|| wrong_type(0))?;
                if let Err(pos) = set.binary_search(&c) {
                    set.insert(pos, c);
                }
                falsified = set.len() > max_oneof;
            }
            Progress::Bound(bound) => {
                let v = Number::from_value(values[0]).ok_or_else(|| wrong_type(0))?;
                let keep_new = match bound {
                    None => true,
                    Some(b) if kind == InvariantKind::LowerBound => v.value_cmp(*b).is_lt(),
                    Some(b) => v.value_cmp(*b).is_gt(),
                };
                if keep_new {
                    *bound = Some(v);
                }
            }
            Progress::Flag => {
                let v = Number::from_value(values[0]).ok_or_else(|| wrong_type(0))?;
                falsified = v.is_zero();
            }
            Progress::Compare {
                less,
                equal,
                greater,
                first,
                distinct,
            } => {
                let x = Number::from_value(values[0]).ok_or_else(|| wrong_type(0))?;
                let y = Number::from_value(values[1]).ok_or_else(|| wrong_type(1))?;
                match x.value_cmp(y) {
                    Ordering::Less => *less = true,
                    Ordering::Equal => *equal = true,
                    Ordering::Greater => *greater = true,
                }
                match first {
                    None => *first = Some((x, y)),
                    Some(f) if *f != (x, y) => *distinct = true,
                    Some(_) => {}
                }
                falsified = match kind {
                    InvariantKind::VarEqual => *less || *greater,
                    InvariantKind::VarLessEqual => *less && *greater,
                    _ => *equal || (*less && *greater),
                };
            }
            Progress::Linear { pending, coeffs } => {
                let mut point = Vec::with_capacity(values.len());
                for (i, v) in values.iter().enumerate() {
                    point.push(
                        Number::from_value(v)
                            .ok_or_else(|| wrong_type(i))?
                            .to_rational(),
                    );
                }
                match coeffs {
                    Some(c) => falsified = !on_plane(c, &point),
                    None => {
                        if !pending.contains(&point) {
                            pending.push(point);
                        }
                        if let Some(c) = determine(pending) {
                            falsified = !pending.iter().all(|p| on_plane(&c, p));
                            *coeffs = Some(c);
                            pending.clear();
                        }
                    }
                }
                if coeffs.is_none() && !falsified {
                    // Still collecting points.
                    return Ok(());
                }
            }
        }
        if falsified {
            self.falsify();
        } else {
            self.status = Status::Alive;
        }
        Ok(())
    }

    /// The current predicate, once the candidate is alive.
    pub fn predicate(&self) -> Option<Predicate> {
        if self.status != Status::Alive {
            return None;
        }
        let name = |i: usize| self.vars[i].1.clone();
        Some(match (&self.progress, self.kind) {
            (Progress::OneOf(values), _) => Predicate::OneOf {
                var: name(0),
                values: values.clone(),
            },
            (Progress::Bound(Some(bound)), InvariantKind::LowerBound) => Predicate::LowerBound {
                var: name(0),
                bound: *bound,
            },
            (Progress::Bound(Some(bound)), _) => Predicate::UpperBound {
                var: name(0),
                bound: *bound,
            },
            (Progress::Flag, InvariantKind::NonZero) => Predicate::NonZero { var: name(0) },
            (Progress::Flag, _) => Predicate::NonNull { var: name(0) },
            (Progress::Compare { greater, .. }, kind) => {
                // Orient so that the smaller variable is on the left.
                let (x, y) = if *greater {
                    (name(1), name(0))
                } else {
                    (name(0), name(1))
                };
                match kind {
                    InvariantKind::VarEqual => Predicate::VarEqual { x, y },
                    InvariantKind::VarLessEqual => Predicate::VarLessEqual { x, y },
                    _ => Predicate::VarLess { x, y },
                }
            }
            (
                Progress::Linear {
                    coeffs: Some(c), ..
                },
                InvariantKind::LinearBinary,
            ) => Predicate::LinearBinary {
                x: name(0),
                y: name(1),
                a: c[0].clone(),
                b: c[1].clone(),
            },
            (
                Progress::Linear {
                    coeffs: Some(c), ..
                },
                _,
            ) => Predicate::LinearTernary {
                x: name(0),
                y: name(1),
                z: name(2),
                a: c[0].clone(),
                b: c[1].clone(),
                c: c[2].clone(),
            },
            _ => return None,
        })
    }
}

/// Whether the last coordinate of `p` equals the affine form `c` applied to
/// the others.
fn on_plane(c: &[BigRational], p: &[BigRational]) -> bool {
    let n = p.len() - 1;
    let mut rhs = c[n].clone();
    for i in 0..n {
        rhs += &c[i] * &p[i];
    }
    rhs == p[n]
}

/// Solves for the coefficients once the distinct points collected so far
/// contain an affinely independent set (2 distinct x values for the binary
/// form, 3 non-collinear (x, y) pairs for the ternary form).
fn determine(points: &[Vec<BigRational>]) -> Option<Vec<BigRational>> {
    let p0 = points.first()?;
    if p0.len() == 2 {
        let p1 = points.iter().find(|p| p[0] != p0[0])?;
        let a = (&p1[1] - &p0[1]) / (&p1[0] - &p0[0]);
        let b = &p0[1] - &a * &p0[0];
        return Some(vec![a, b]);
    }
    let p1 = points.iter().find(|p| p[0] != p0[0] || p[1] != p0[1])?;
    let (dx1, dy1, dz1) = (&p1[0] - &p0[0], &p1[1] - &p0[1], &p1[2] - &p0[2]);
    for p2 in points {
        let (dx2, dy2, dz2) = (&p2[0] - &p0[0], &p2[1] - &p0[1], &p2[2] - &p0[2]);
        let det = &dx1 * &dy2 - &dy1 * &dx2;
        if det.is_zero() {
            continue;
        }
        let a = (&dz1 * &dy2 - &dy1 * &dz2) / &det;
        let b = (&dx1 * &dz2 - &dz1 * &dx2) / &det;
        let c = &p0[2] - &a * &p0[0] - &b * &p0[1];
        return Some(vec![a, b, c]);
    }
    None
}

/// Parameters controlling which templates are instantiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateConfig {
    pub oneof_cardinality: usize,
    pub ternary: bool,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            oneof_cardinality: 3,
            ternary: true,
        }
    }
}

/// One candidate per type-compatible (template, variable tuple) at `point`.
pub fn instantiate_candidates(point: &ProgramPointDecl, config: TemplateConfig) -> Vec<Candidate> {
    use InvariantKind::*;
    let k = config.oneof_cardinality;
    let vars: Vec<(usize, String, VarKind)> = point
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.name.clone(), v.kind))
        .collect();
    let mut out = Vec::new();
    for (i, name, kind) in &vars {
        let one = || vec![(*i, name.clone())];
        match kind {
            VarKind::Int | VarKind::Real => {
                for t in [OneOf, LowerBound, UpperBound, NonZero] {
                    out.push(Candidate::new(t, one(), k));
                }
            }
            VarKind::Bool | VarKind::Text => out.push(Candidate::new(OneOf, one(), k)),
            VarKind::Ref => out.push(Candidate::new(NonNull, one(), k)),
        }
    }
    for kind in [VarKind::Int, VarKind::Real] {
        let group: Vec<(usize, String)> = vars
            .iter()
            .filter(|v| v.2 == kind)
            .map(|v| (v.0, v.1.clone()))
            .collect();
        for a in 0..group.len() {
            for b in a + 1..group.len() {
                for t in [VarEqual, VarLessEqual, VarLess, LinearBinary] {
                    out.push(Candidate::new(
                        t,
                        vec![group[a].clone(), group[b].clone()],
                        k,
                    ));
                }
            }
        }
        if config.ternary {
            for a in 0..group.len() {
                for b in a + 1..group.len() {
                    for c in b + 1..group.len() {
                        out.push(Candidate::new(
                            LinearTernary,
                            vec![group[a].clone(), group[b].clone(), group[c].clone()],
                            k,
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Decides whether an alive candidate has enough evidence to be reported.
///
/// Relational templates (comparisons, linear forms, `!= 0`, `!= null`) are
/// assumed to hold by chance with probability 1/2 per sample and are
/// justified once `0.5^n` drops below `threshold`. `one of` sets and bounds
/// are justified by a single sample; a `one of` covering both booleans says
/// nothing and is never justified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JustificationPolicy {
    pub threshold: f64,
}

impl Default for JustificationPolicy {
    fn default() -> Self {
        JustificationPolicy { threshold: 0.01 }
    }
}

impl JustificationPolicy {
    pub fn chance(samples: usize) -> f64 {
        0.5f64.powi(samples.min(i32::MAX as usize) as i32)
    }

    pub fn accepts(&self, predicate: &Predicate, samples: usize, distinct_tuples: bool) -> bool {
        if samples == 0 || predicate.is_degenerate() {
            return false;
        }
        let by_chance = Self::chance(samples) < self.threshold;
        match predicate {
            Predicate::OneOf { values, .. } => {
                values != &[Constant::Bool(false), Constant::Bool(true)]
            }
            Predicate::LowerBound { .. } | Predicate::UpperBound { .. } => true,
            Predicate::VarEqual { .. }
            | Predicate::VarLessEqual { .. }
            | Predicate::VarLess { .. } => distinct_tuples && by_chance,
            _ => by_chance,
        }
    }
}

/// `justified` for a streaming candidate; false unless it is alive.
pub fn justified(candidate: &Candidate, policy: &JustificationPolicy) -> bool {
    candidate
        .predicate()
        .is_some_and(|p| policy.accepts(&p, candidate.samples_seen(), candidate.distinct_tuples()))
}
