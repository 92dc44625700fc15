// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! Program-point declarations, value samples and probe events, plus the
//! line-oriented text format they are stored in.
//!
//! A trace document looks like this:
//!
//! ```text
//! # comment
//! ppt UserAccount.deposit ENTER
//! var amount real
//! var balance real
//!
//! ppt UserAccount.deposit EXIT
//! var amount real
//! var balance real
//!
//! sample UserAccount.deposit ENTER 1
//! val amount 100.0
//! val balance 35.0
//!
//! sample UserAccount.deposit EXIT 1
//! val amount 100.0
//! val balance 135.0
//!
//! probe method UserAccount.deposit
//! ```
//!
//! EXIT points implicitly carry one `orig(v)` variable for every numeric
//! variable `v` of the matching ENTER point. Those variables are never
//! written to the document: the parser derives them from the declarations
//! and fills their values from the ENTER sample with the same invocation
//! nonce.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: variable `{var}` is not declared at {point}")]
    UndeclaredVariable {
        line: usize,
        point: String,
        var: String,
    },
    #[error("line {line}: probe `{id}` of kind {kind} is not declared in the manifest")]
    UndeclaredProbe {
        line: usize,
        kind: ProbeKind,
        id: String,
    },
    #[error("line {line}: value `{literal}` does not match the declared kind {kind} of `{var}`")]
    TypeMismatch {
        line: usize,
        var: String,
        kind: VarKind,
        literal: String,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("duplicate invocation nonce {nonce} at {point}")]
    DuplicateInvocation { point: String, nonce: u64 },
    #[error("invalid trace: {0}")]
    Invalid(String),
}

/// Declared type of an instrumented variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    Int,
    Real,
    Bool,
    Text,
    Ref,
}

impl VarKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VarKind::Int => "int",
            VarKind::Real => "real",
            VarKind::Bool => "bool",
            VarKind::Text => "text",
            VarKind::Ref => "ref",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, VarKind::Int | VarKind::Real)
    }
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "int" => VarKind::Int,
            "real" => VarKind::Real,
            "bool" => VarKind::Bool,
            "text" => VarKind::Text,
            "ref" => VarKind::Ref,
            _ => return Err(()),
        })
    }
}

/// A recorded variable value. Reals are always finite.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
    Text(String),
    Ref(u64),
    Null,
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Whether this value may be stored in a variable of `kind`.
    pub fn fits(&self, kind: VarKind) -> bool {
        matches!(
            (self, kind),
            (Value::Null, _)
                | (Value::Int(_), VarKind::Int)
                | (Value::Real(_), VarKind::Real)
                | (Value::Bool(_), VarKind::Bool)
                | (Value::Text(_), VarKind::Text)
                | (Value::Ref(_), VarKind::Ref)
        )
    }

    fn parse_literal(literal: &str, kind: VarKind) -> Option<Value> {
        if literal == "null" {
            return Some(Value::Null);
        }
        match kind {
            VarKind::Int => literal.parse().ok().map(Value::Int),
            VarKind::Real => {
                // `f64::from_str` also accepts `inf` and `NaN`
                if !literal.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '.') {
                    return None;
                }
                literal
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Value::Real)
            }
            VarKind::Bool => match literal {
                "true" => Some(Value::Bool(true)),
                "false" => Some(Value::Bool(false)),
                _ => None,
            },
            VarKind::Text => unquote(literal).map(Value::Text),
            VarKind::Ref => literal
                .strip_prefix('@')
                .and_then(|id| id.parse().ok())
                .map(Value::Ref),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            // Debug formatting is the shortest representation that round-trips.
            Value::Real(v) => write!(f, "{v:?}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(&quote(s)),
            Value::Ref(id) => write!(f, "@{id}"),
            Value::Null => f.write_str("null"),
        }
    }
}

/// Double-quotes `s`, escaping backslashes, quotes, newlines and tabs.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Inverse of [`quote`]; the whole input must be a single quoted literal.
pub fn unquote(s: &str) -> Option<String> {
    let inner = s.strip_prefix('"')?.strip_suffix('"')?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => out.push(match chars.next()? {
                '"' => '"',
                '\\' => '\\',
                'n' => '\n',
                't' => '\t',
                'r' => '\r',
                _ => return None,
            }),
            '"' => return None,
            c => out.push(c),
        }
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
}

impl VarDecl {
    pub fn new(name: impl Into<String>, kind: VarKind) -> Self {
        VarDecl {
            name: name.into(),
            kind,
        }
    }

    /// Variables named `orig(..)` are derived at EXIT points.
    pub fn is_derived(&self) -> bool {
        self.name.starts_with("orig(")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointKind {
    Enter,
    Exit,
}

impl PointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PointKind::Enter => "ENTER",
            PointKind::Exit => "EXIT",
        }
    }
}

impl fmt::Display for PointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PointKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "ENTER" => Ok(PointKind::Enter),
            "EXIT" => Ok(PointKind::Exit),
            _ => Err(()),
        }
    }
}

/// Identifies a program point: a method name plus ENTER or EXIT.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointKey {
    pub method: String,
    pub kind: PointKind,
}

impl PointKey {
    pub fn new(method: impl Into<String>, kind: PointKind) -> Self {
        PointKey {
            method: method.into(),
            kind,
        }
    }

    pub fn enter(method: impl Into<String>) -> Self {
        Self::new(method, PointKind::Enter)
    }

    pub fn exit(method: impl Into<String>) -> Self {
        Self::new(method, PointKind::Exit)
    }
}

impl fmt::Display for PointKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:::{}", self.method, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramPointDecl {
    pub key: PointKey,
    /// Derived `orig(..)` variables (EXIT only) come first, in ENTER order.
    pub vars: Vec<VarDecl>,
}

impl ProgramPointDecl {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Index into [`Trace::decls`].
    pub point: usize,
    pub invocation: u64,
    /// Aligned with the point's `vars`.
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProbeKind {
    Instruction,
    Branch,
    Line,
    Method,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 4] = [
        ProbeKind::Instruction,
        ProbeKind::Branch,
        ProbeKind::Line,
        ProbeKind::Method,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::Instruction => "instruction",
            ProbeKind::Branch => "branch",
            ProbeKind::Line => "line",
            ProbeKind::Method => "method",
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        ProbeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProbeEvent {
    pub kind: ProbeKind,
    pub id: String,
}

impl ProbeEvent {
    pub fn new(kind: ProbeKind, id: impl Into<String>) -> Self {
        ProbeEvent {
            kind,
            id: id.into(),
        }
    }
}

/// Every probe a subject declares, per kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProbeManifest {
    declared: BTreeMap<ProbeKind, BTreeSet<String>>,
}

impl ProbeManifest {
    pub fn declare(&mut self, kind: ProbeKind, id: impl Into<String>) -> bool {
        self.declared.entry(kind).or_default().insert(id.into())
    }

    pub fn contains(&self, kind: ProbeKind, id: &str) -> bool {
        self.declared.get(&kind).is_some_and(|ids| ids.contains(id))
    }

    pub fn ids(&self, kind: ProbeKind) -> impl Iterator<Item = &str> {
        self.declared
            .get(&kind)
            .into_iter()
            .flat_map(|ids| ids.iter().map(String::as_str))
    }

    pub fn count(&self, kind: ProbeKind) -> usize {
        self.declared.get(&kind).map_or(0, BTreeSet::len)
    }

    /// A usable manifest declares at least one probe of every kind.
    pub fn validate(&self) -> Result<(), TraceError> {
        match ProbeKind::ALL.into_iter().find(|k| self.count(*k) == 0) {
            Some(kind) => Err(TraceError::Invalid(format!(
                "manifest declares no {kind} probes"
            ))),
            None => Ok(()),
        }
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut manifest = ProbeManifest::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            match fields.as_slice() {
                ["declare", kind, id] => {
                    let kind = kind.parse().map_err(|_| TraceError::Syntax {
                        line,
                        msg: format!("unknown probe kind `{kind}`"),
                    })?;
                    manifest.declare(kind, *id);
                }
                _ => {
                    return Err(TraceError::Syntax {
                        line,
                        msg: "expected `declare <kind> <probe-id>`".into(),
                    })
                }
            }
        }
        Ok(manifest)
    }

    pub fn write(&self) -> String {
        let mut out = String::new();
        for (kind, ids) in &self.declared {
            for id in ids {
                out.push_str(&format!("declare {kind} {id}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub decls: Vec<ProgramPointDecl>,
    pub samples: Vec<Sample>,
    pub probes: Vec<ProbeEvent>,
}

/// An ENTER sample and, for normal returns, its EXIT sample.
#[derive(Debug, Clone, Copy)]
pub struct Invocation<'a> {
    pub enter: &'a Sample,
    pub exit: Option<&'a Sample>,
}

impl Trace {
    pub fn point_index(&self, key: &PointKey) -> Option<usize> {
        self.decls.iter().position(|d| &d.key == key)
    }

    pub fn point(&self, key: &PointKey) -> Option<&ProgramPointDecl> {
        self.decls.iter().find(|d| &d.key == key)
    }

    /// Samples recorded at the point with index `point`, in trace order.
    pub fn samples_at(&self, point: usize) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.point == point)
    }

    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut keys = BTreeSet::new();
        for decl in &self.decls {
            if !keys.insert(&decl.key) {
                return Err(TraceError::Invalid(format!(
                    "program point {} declared twice",
                    decl.key
                )));
            }
            let mut names = BTreeSet::new();
            for var in &decl.vars {
                if !names.insert(&var.name) {
                    return Err(TraceError::Invalid(format!(
                        "variable `{}` declared twice at {}",
                        var.name, decl.key
                    )));
                }
            }
        }
        for sample in &self.samples {
            let decl = self.decls.get(sample.point).ok_or_else(|| {
                TraceError::Invalid(format!("sample refers to unknown point #{}", sample.point))
            })?;
            if sample.values.len() != decl.vars.len() {
                return Err(TraceError::Invalid(format!(
                    "sample {} at {} has {} values for {} variables",
                    sample.invocation,
                    decl.key,
                    sample.values.len(),
                    decl.vars.len()
                )));
            }
            for (var, value) in decl.vars.iter().zip(&sample.values) {
                if !value.fits(var.kind) {
                    return Err(TraceError::Invalid(format!(
                        "value {value} does not fit {} `{}` at {}",
                        var.kind, var.name, decl.key
                    )));
                }
            }
        }
        pair_invocations(self).map(|_| ())
    }
}

/// Pairs every ENTER sample with the EXIT sample sharing its invocation
/// nonce. Exceptional invocations have no EXIT sample and are returned with
/// `exit: None`.
pub fn pair_invocations(trace: &Trace) -> Result<Vec<Invocation<'_>>, TraceError> {
    let mut enters: HashMap<(&str, u64), usize> = HashMap::new();
    let mut pairs: Vec<Invocation<'_>> = Vec::new();
    let mut seen_exits: BTreeSet<(&str, u64)> = BTreeSet::new();

    for sample in &trace.samples {
        let decl = &trace.decls[sample.point];
        let method = decl.key.method.as_str();
        match decl.key.kind {
            PointKind::Enter => {
                if enters
                    .insert((method, sample.invocation), pairs.len())
                    .is_some()
                {
                    return Err(TraceError::DuplicateInvocation {
                        point: decl.key.to_string(),
                        nonce: sample.invocation,
                    });
                }
                pairs.push(Invocation {
                    enter: sample,
                    exit: None,
                });
            }
            PointKind::Exit => {
                if !seen_exits.insert((method, sample.invocation)) {
                    return Err(TraceError::DuplicateInvocation {
                        point: decl.key.to_string(),
                        nonce: sample.invocation,
                    });
                }
                let slot = enters.get(&(method, sample.invocation)).ok_or_else(|| {
                    TraceError::Invalid(format!(
                        "EXIT sample {} at {} has no earlier ENTER sample",
                        sample.invocation, decl.key
                    ))
                })?;
                let pair = &mut pairs[*slot];
                let enter_decl = &trace.decls[pair.enter.point];
                for (idx, var) in decl.vars.iter().enumerate() {
                    let Some(inner) = var
                        .name
                        .strip_prefix("orig(")
                        .and_then(|n| n.strip_suffix(')'))
                    else {
                        continue;
                    };
                    let consistent = enter_decl
                        .var_index(inner)
                        .is_some_and(|i| pair.enter.values[i] == sample.values[idx]);
                    if !consistent {
                        return Err(TraceError::Invalid(format!(
                            "{} of invocation {} at {} disagrees with its ENTER sample",
                            var.name, sample.invocation, decl.key
                        )));
                    }
                }
                pair.exit = Some(sample);
            }
        }
    }
    Ok(pairs)
}

/// Builds a [`Trace`] incrementally, deriving `orig(..)` variables and
/// their values the same way the parser does.
#[derive(Debug, Default)]
pub struct TraceBuilder {
    trace: Trace,
    index: HashMap<PointKey, usize>,
    open: HashMap<(String, u64), usize>,
    closed: BTreeSet<(String, u64)>,
}

impl TraceBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a point. EXIT points require their ENTER point to be
    /// declared first. Returns the point index.
    pub fn declare(&mut self, key: PointKey, vars: Vec<VarDecl>) -> Result<usize, TraceError> {
        if self.index.contains_key(&key) {
            return Err(TraceError::Invalid(format!(
                "program point {key} declared twice"
            )));
        }
        let mut all = Vec::new();
        if key.kind == PointKind::Exit {
            let enter = self
                .index
                .get(&PointKey::enter(key.method.clone()))
                .ok_or_else(|| {
                    TraceError::Invalid(format!("{key} declared before its ENTER point"))
                })?;
            all.extend(
                self.trace.decls[*enter]
                    .vars
                    .iter()
                    .filter(|v| v.kind.is_numeric())
                    .map(|v| VarDecl::new(format!("orig({})", v.name), v.kind)),
            );
        }
        for var in vars {
            if var.is_derived() {
                return Err(TraceError::Invalid(format!(
                    "`{}` is reserved for derived variables",
                    var.name
                )));
            }
            if all.iter().any(|v| v.name == var.name) {
                return Err(TraceError::Invalid(format!(
                    "variable `{}` declared twice at {key}",
                    var.name
                )));
            }
            all.push(var);
        }
        let idx = self.trace.decls.len();
        self.index.insert(key.clone(), idx);
        self.trace.decls.push(ProgramPointDecl { key, vars: all });
        Ok(idx)
    }

    pub fn point_index(&self, key: &PointKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn decl(&self, point: usize) -> &ProgramPointDecl {
        &self.trace.decls[point]
    }

    /// Records a sample given values for the point's declared (non-derived)
    /// variables, in declaration order.
    pub fn sample(
        &mut self,
        point: usize,
        invocation: u64,
        declared: Vec<Value>,
    ) -> Result<(), TraceError> {
        let decl = self
            .trace
            .decls
            .get(point)
            .ok_or_else(|| TraceError::Invalid(format!("unknown point #{point}")))?;
        let derived = decl.vars.iter().take_while(|v| v.is_derived()).count();
        if declared.len() + derived != decl.vars.len() {
            return Err(TraceError::Invalid(format!(
                "{} expects {} values, got {}",
                decl.key,
                decl.vars.len() - derived,
                declared.len()
            )));
        }
        for (var, value) in decl.vars[derived..].iter().zip(&declared) {
            if !value.fits(var.kind) {
                return Err(TraceError::Invalid(format!(
                    "value {value} does not fit {} `{}` at {}",
                    var.kind, var.name, decl.key
                )));
            }
        }
        let method = decl.key.method.clone();
        let slot = (method, invocation);
        let values = match decl.key.kind {
            PointKind::Enter => {
                if self.open.contains_key(&slot) {
                    return Err(TraceError::DuplicateInvocation {
                        point: decl.key.to_string(),
                        nonce: invocation,
                    });
                }
                self.open.insert(slot, self.trace.samples.len());
                declared
            }
            PointKind::Exit => {
                if self.closed.contains(&slot) {
                    return Err(TraceError::DuplicateInvocation {
                        point: decl.key.to_string(),
                        nonce: invocation,
                    });
                }
                let enter = *self.open.get(&slot).ok_or_else(|| {
                    TraceError::Invalid(format!(
                        "EXIT sample {invocation} at {} has no earlier ENTER sample",
                        decl.key
                    ))
                })?;
                let enter = &self.trace.samples[enter];
                let enter_decl = &self.trace.decls[enter.point];
                let mut values: Vec<Value> = enter_decl
                    .vars
                    .iter()
                    .zip(&enter.values)
                    .filter(|(v, _)| v.kind.is_numeric())
                    .map(|(_, value)| value.clone())
                    .collect();
                values.extend(declared);
                self.closed.insert(slot);
                values
            }
        };
        self.trace.samples.push(Sample {
            point,
            invocation,
            values,
        });
        Ok(())
    }

    pub fn probe(&mut self, event: ProbeEvent) {
        self.trace.probes.push(event);
    }

    pub fn finish(self) -> Trace {
        self.trace
    }
}

enum Block {
    None,
    Decl,
    Sample {
        line: usize,
        point: usize,
        invocation: u64,
        values: Vec<Option<Value>>,
    },
}

/// Parses a trace document. Probe events are checked against `manifest`.
pub fn parse_trace(text: &str, manifest: &ProbeManifest) -> Result<Trace, TraceError> {
    let mut builder = TraceBuilder::new();
    let mut block = Block::None;

    let lines: Vec<&str> = text.lines().collect();
    // A trailing virtual blank line closes the last block.
    for idx in 0..=lines.len() {
        let line = idx + 1;
        let raw = lines.get(idx).copied().unwrap_or("");
        let trimmed = raw.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            if let Block::Sample {
                line,
                point,
                invocation,
                values,
            } = std::mem::replace(&mut block, Block::None)
            {
                finish_sample(&mut builder, line, point, invocation, values)?;
            }
            continue;
        }

        let (head, rest) = trimmed.split_once(' ').unwrap_or((trimmed, ""));
        match (head, &mut block) {
            ("var", Block::Decl) => {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                let [name, kind] = fields.as_slice() else {
                    return Err(TraceError::Syntax {
                        line,
                        msg: "expected `var <name> <kind>`".into(),
                    });
                };
                let kind = kind.parse().map_err(|_| TraceError::Syntax {
                    line,
                    msg: format!("unknown variable kind `{kind}`"),
                })?;
                check_identifier(name, line)?;
                let point = builder.trace.decls.len() - 1;
                let decl = &mut builder.trace.decls[point];
                if VarDecl::new(*name, kind).is_derived() {
                    return Err(TraceError::Malformed {
                        line,
                        msg: format!("`{name}` is reserved for derived variables"),
                    });
                }
                if decl.var_index(name).is_some() {
                    return Err(TraceError::Malformed {
                        line,
                        msg: format!("variable `{name}` declared twice at {}", decl.key),
                    });
                }
                decl.vars.push(VarDecl::new(*name, kind));
            }
            ("val", Block::Sample { point, values, .. }) => {
                let rest = rest.trim_start();
                let (name, literal) = rest.split_once(' ').ok_or_else(|| TraceError::Syntax {
                    line,
                    msg: "expected `val <name> <literal>`".into(),
                })?;
                let literal = literal.trim();
                let decl = builder.decl(*point);
                let idx = decl
                    .var_index(name)
                    .filter(|i| !decl.vars[*i].is_derived())
                    .ok_or_else(|| TraceError::UndeclaredVariable {
                        line,
                        point: decl.key.to_string(),
                        var: name.to_string(),
                    })?;
                let kind = decl.vars[idx].kind;
                let value = Value::parse_literal(literal, kind).ok_or_else(|| {
                    TraceError::TypeMismatch {
                        line,
                        var: name.to_string(),
                        kind,
                        literal: literal.to_string(),
                    }
                })?;
                if values[idx].replace(value).is_some() {
                    return Err(TraceError::Malformed {
                        line,
                        msg: format!("`{name}` given twice in one sample"),
                    });
                }
            }
            (_, Block::Decl | Block::Sample { .. }) => {
                return Err(TraceError::Syntax {
                    line,
                    msg: format!("unexpected `{head}` inside a block (missing blank line?)"),
                })
            }
            ("ppt", Block::None) => {
                let (name, kind) = name_and_kind(rest, line)?;
                builder
                    .declare(PointKey::new(name, kind), Vec::new())
                    .map_err(|e| TraceError::Malformed {
                        line,
                        msg: e.to_string(),
                    })?;
                block = Block::Decl;
            }
            ("sample", Block::None) => {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                let [name, kind, nonce] = fields.as_slice() else {
                    return Err(TraceError::Syntax {
                        line,
                        msg: "expected `sample <ppt-name> <ENTER|EXIT> <invocation-nonce>`".into(),
                    });
                };
                let (name, kind) = name_and_kind(&format!("{name} {kind}"), line)?;
                let invocation = nonce.parse().map_err(|_| TraceError::Syntax {
                    line,
                    msg: format!("invalid invocation nonce `{nonce}`"),
                })?;
                let key = PointKey::new(name, kind);
                let point = builder
                    .point_index(&key)
                    .ok_or_else(|| TraceError::Malformed {
                        line,
                        msg: format!("sample refers to undeclared program point {key}"),
                    })?;
                let width = builder.decl(point).vars.len();
                block = Block::Sample {
                    line,
                    point,
                    invocation,
                    values: vec![None; width],
                };
            }
            ("probe", Block::None) => {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                let [kind, id] = fields.as_slice() else {
                    return Err(TraceError::Syntax {
                        line,
                        msg: "expected `probe <kind> <probe-id>`".into(),
                    });
                };
                let kind: ProbeKind = kind.parse().map_err(|_| TraceError::Syntax {
                    line,
                    msg: format!("unknown probe kind `{kind}`"),
                })?;
                if !manifest.contains(kind, id) {
                    return Err(TraceError::UndeclaredProbe {
                        line,
                        kind,
                        id: id.to_string(),
                    });
                }
                builder.probe(ProbeEvent::new(kind, *id));
            }
            (other, Block::None) => {
                return Err(TraceError::Syntax {
                    line,
                    msg: format!("unknown record `{other}`"),
                })
            }
        }
    }
    Ok(builder.finish())
}

fn finish_sample(
    builder: &mut TraceBuilder,
    line: usize,
    point: usize,
    invocation: u64,
    values: Vec<Option<Value>>,
) -> Result<(), TraceError> {
    let decl = builder.decl(point);
    let mut declared = Vec::with_capacity(values.len());
    for (var, value) in decl.vars.iter().zip(values) {
        if var.is_derived() {
            continue;
        }
        declared.push(value.ok_or_else(|| TraceError::Malformed {
            line,
            msg: format!(
                "sample at {} is missing a value for `{}`",
                decl.key, var.name
            ),
        })?);
    }
    builder
        .sample(point, invocation, declared)
        .map_err(|e| match e {
            TraceError::Invalid(msg) => TraceError::Malformed { line, msg },
            other => other,
        })
}

fn name_and_kind(rest: &str, line: usize) -> Result<(String, PointKind), TraceError> {
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let [name, kind] = fields.as_slice() else {
        return Err(TraceError::Syntax {
            line,
            msg: "expected `<name> <ENTER|EXIT>`".into(),
        });
    };
    let kind = kind.parse().map_err(|_| TraceError::Syntax {
        line,
        msg: format!("expected ENTER or EXIT, found `{kind}`"),
    })?;
    check_identifier(name, line)?;
    Ok((name.to_string(), kind))
}

fn check_identifier(name: &str, line: usize) -> Result<(), TraceError> {
    let ok = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_' || c == '$')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '(' | ')'));
    if ok {
        Ok(())
    } else {
        Err(TraceError::Syntax {
            line,
            msg: format!("invalid identifier `{name}`"),
        })
    }
}

/// Renders a trace document: declarations, then samples, then probes.
pub fn write_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for decl in &trace.decls {
        out.push_str(&format!("ppt {} {}\n", decl.key.method, decl.key.kind));
        for var in decl.vars.iter().filter(|v| !v.is_derived()) {
            out.push_str(&format!("var {} {}\n", var.name, var.kind));
        }
        out.push('\n');
    }
    for sample in &trace.samples {
        let decl = &trace.decls[sample.point];
        out.push_str(&format!(
            "sample {} {} {}\n",
            decl.key.method, decl.key.kind, sample.invocation
        ));
        for (var, value) in decl.vars.iter().zip(&sample.values) {
            if !var.is_derived() {
                out.push_str(&format!("val {} {}\n", var.name, value));
            }
        }
        out.push('\n');
    }
    for probe in &trace.probes {
        out.push_str(&format!("probe {} {}\n", probe.kind, probe.id));
    }
    out
}
