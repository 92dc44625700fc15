// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! Trace and probe recording for the instrumented subject.

use crate::trace::{
    PointKey, ProbeEvent, ProbeKind, ProbeManifest, Trace, TraceBuilder, Value, VarDecl, VarKind,
};

/// Declared probes per method: statement groups with their line counts, and
/// two-armed branches.
pub(crate) struct MethodProbes {
    pub name: &'static str,
    pub blocks: &'static [(&'static str, usize)],
    pub branches: &'static [&'static str],
}

pub(crate) const PROBES: &[MethodProbes] = &[
    MethodProbes {
        name: "UserProfile.create",
        blocks: &[("entry", 1), ("reject", 2), ("duplicate", 2), ("store", 3)],
        branches: &["valid_uid", "fresh"],
    },
    MethodProbes {
        name: "UserAccount.open",
        blocks: &[("entry", 1), ("reject", 2), ("store", 4)],
        branches: &["valid_initial"],
    },
    MethodProbes {
        name: "UserAccount.deposit",
        blocks: &[("entry", 1), ("closed", 2), ("reject", 2), ("apply", 2)],
        branches: &["is_open", "valid_amount"],
    },
    MethodProbes {
        name: "UserAccount.withdraw",
        blocks: &[
            ("entry", 1),
            ("closed", 2),
            ("reject", 2),
            ("short", 2),
            ("apply", 2),
        ],
        branches: &["is_open", "valid_amount", "covered"],
    },
    MethodProbes {
        name: "UserAccount.close",
        blocks: &[("entry", 1), ("closed", 2), ("settle", 3)],
        branches: &["is_open"],
    },
    MethodProbes {
        name: "UserAccount.applyInterest",
        blocks: &[("entry", 1), ("reject", 2), ("accrue", 3)],
        branches: &["valid_rate"],
    },
    MethodProbes {
        name: "SessionManager.open",
        blocks: &[("entry", 1), ("unknown", 2), ("issue", 3)],
        branches: &["known"],
    },
    MethodProbes {
        name: "SessionManager.validate",
        blocks: &[("entry", 2)],
        branches: &["active"],
    },
    MethodProbes {
        name: "SessionManager.close",
        blocks: &[("entry", 1), ("unknown", 2), ("drop", 2)],
        branches: &["active"],
    },
    MethodProbes {
        name: "ChargeCalculator.withdrawalCharge",
        blocks: &[("entry", 1), ("savings", 1), ("current", 1)],
        branches: &["savings"],
    },
    MethodProbes {
        name: "ChargeCalculator.foreignCharge",
        blocks: &[("entry", 1), ("premium", 1), ("standard", 1)],
        branches: &["premium"],
    },
    MethodProbes {
        name: "Bank.createProfile",
        blocks: &[("entry", 1), ("ok", 2), ("fail", 3)],
        branches: &["created"],
    },
    MethodProbes {
        name: "Bank.login",
        blocks: &[("entry", 1), ("ok", 1), ("fail", 3)],
        branches: &["opened"],
    },
    MethodProbes {
        name: "Bank.logout",
        blocks: &[("entry", 1), ("ok", 1), ("fail", 3)],
        branches: &["closed"],
    },
    MethodProbes {
        name: "Bank.openAccount",
        blocks: &[("entry", 2), ("no_session", 3), ("ok", 3), ("fail", 3)],
        branches: &["session", "opened"],
    },
    MethodProbes {
        name: "Bank.closeAccount",
        blocks: &[
            ("entry", 2),
            ("no_session", 3),
            ("not_owner", 3),
            ("ok", 2),
            ("fail", 2),
        ],
        branches: &["session", "owner", "closed"],
    },
    MethodProbes {
        name: "Bank.deposit",
        blocks: &[
            ("entry", 2),
            ("no_session", 3),
            ("not_owner", 3),
            ("ok", 2),
            ("fail", 2),
        ],
        branches: &["session", "owner", "done"],
    },
    MethodProbes {
        name: "Bank.withdraw",
        blocks: &[
            ("entry", 2),
            ("no_session", 3),
            ("not_owner", 3),
            ("charge", 2),
            ("ok", 2),
            ("fail", 2),
        ],
        branches: &["session", "owner", "done"],
    },
    MethodProbes {
        name: "Bank.transferLocal",
        blocks: &[
            ("entry", 2),
            ("no_session", 3),
            ("not_owner", 3),
            ("same", 3),
            ("debit", 2),
            ("credit", 2),
            ("fail", 2),
        ],
        branches: &["session", "owner", "distinct", "debited"],
    },
    MethodProbes {
        name: "Bank.transferForeign",
        blocks: &[
            ("entry", 2),
            ("no_session", 3),
            ("not_owner", 3),
            ("bad_iban", 3),
            ("charge", 2),
            ("debit", 2),
            ("fail", 2),
        ],
        branches: &["session", "owner", "iban", "debited"],
    },
    MethodProbes {
        name: "Bank.balance",
        blocks: &[("entry", 2), ("no_session", 3), ("not_owner", 3), ("ok", 2)],
        branches: &["session", "owner"],
    },
    MethodProbes {
        name: "AuditLog.recordFailure",
        blocks: &[("entry", 1), ("append", 2)],
        branches: &[],
    },
];

/// The probe manifest of the subject.
pub fn manifest() -> ProbeManifest {
    let mut m = ProbeManifest::default();
    for method in PROBES {
        m.declare(ProbeKind::Method, method.name);
        for (block, lines) in method.blocks {
            m.declare(ProbeKind::Instruction, format!("{}/{block}", method.name));
            for l in 1..=*lines {
                m.declare(ProbeKind::Line, format!("{}/{block}:{l}", method.name));
            }
        }
        for branch in method.branches {
            for arm in ["T", "F"] {
                m.declare(ProbeKind::Branch, format!("{}/{branch}:{arm}", method.name));
            }
        }
    }
    m
}

/// A named, typed value passed to the recorder.
#[derive(Debug, Clone)]
pub struct Arg {
    name: &'static str,
    kind: VarKind,
    value: Value,
}

pub fn int(name: &'static str, v: i64) -> Arg {
    Arg {
        name,
        kind: VarKind::Int,
        value: Value::Int(v),
    }
}

pub fn real(name: &'static str, v: f64) -> Arg {
    Arg {
        name,
        kind: VarKind::Real,
        value: Value::Real(v),
    }
}

pub fn boolean(name: &'static str, v: bool) -> Arg {
    Arg {
        name,
        kind: VarKind::Bool,
        value: Value::Bool(v),
    }
}

pub fn text(name: &'static str, v: &str) -> Arg {
    Arg {
        name,
        kind: VarKind::Text,
        value: Value::Text(v.to_string()),
    }
}

pub fn reference(name: &'static str, v: Option<u64>) -> Arg {
    Arg {
        name,
        kind: VarKind::Ref,
        value: v.map_or(Value::Null, Value::Ref),
    }
}

/// An open invocation.
#[must_use]
pub struct Frame {
    method: &'static str,
    nonce: u64,
}

/// Records samples and probe hits for one run. Invocation nonces increase
/// monotonically across the whole run.
#[derive(Debug, Default)]
pub struct Recorder {
    builder: TraceBuilder,
    next_nonce: u64,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    fn point(&mut self, key: PointKey, args: &[Arg]) -> usize {
        if let Some(idx) = self.builder.point_index(&key) {
            return idx;
        }
        let vars = args.iter().map(|a| VarDecl::new(a.name, a.kind)).collect();
        self.builder
            .declare(key, vars)
            .expect("instrumentation declares consistent points")
    }

    /// Method entry: hits the method probe and its `entry` block.
    pub fn enter(&mut self, method: &'static str, args: &[Arg]) -> Frame {
        self.hit(ProbeKind::Method, method.to_string());
        self.block(method, "entry");
        let nonce = self.next_nonce;
        self.next_nonce += 1;
        let point = self.point(PointKey::enter(method), args);
        self.builder
            .sample(point, nonce, args.iter().map(|a| a.value.clone()).collect())
            .expect("instrumentation records consistent samples");
        Frame { method, nonce }
    }

    /// Normal return. Exceptional returns just drop the frame.
    pub fn exit(&mut self, frame: Frame, vars: &[Arg]) {
        let point = self.point(PointKey::exit(frame.method), vars);
        self.builder
            .sample(
                point,
                frame.nonce,
                vars.iter().map(|a| a.value.clone()).collect(),
            )
            .expect("instrumentation records consistent samples");
    }

    pub fn block(&mut self, method: &'static str, block: &'static str) {
        let lines = PROBES
            .iter()
            .find(|m| m.name == method)
            .and_then(|m| m.blocks.iter().find(|b| b.0 == block))
            .map_or(0, |b| b.1);
        self.hit(ProbeKind::Instruction, format!("{method}/{block}"));
        for l in 1..=lines {
            self.hit(ProbeKind::Line, format!("{method}/{block}:{l}"));
        }
    }

    pub fn branch(&mut self, method: &'static str, branch: &'static str, cond: bool) -> bool {
        let arm = if cond { "T" } else { "F" };
        self.hit(ProbeKind::Branch, format!("{method}/{branch}:{arm}"));
        cond
    }

    fn hit(&mut self, kind: ProbeKind, id: String) {
        self.builder.probe(ProbeEvent::new(kind, id));
    }

    pub fn finish(self) -> Trace {
        self.builder.finish()
    }
}
