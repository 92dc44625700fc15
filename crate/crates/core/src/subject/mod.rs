// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! The instrumented subject: a small financial transaction system, its four
//! test-suite families and the nine run configurations built from them.
//!
//! Test inputs are fixed constants reused across tests (amounts 50, 100 and
//! 200; opening balances 0, 35 and 100; user ids 3, 7 and 12). Every test
//! starts from a fresh state and checks a single property. Unit tests call
//! the low-level classes directly after an uninstrumented set-up;
//! integration tests go through the `Bank` facade for set-up as well.

pub mod fts;
mod recorder;

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::eval::{EvalError, GroundTruthSpec, Review};
use crate::trace::{ProbeManifest, Trace};

use fts::{
    account_apply_interest, account_close, account_deposit, account_open, account_withdraw,
    foreign_charge, profile_create, session_close, session_open, session_validate,
    withdrawal_charge, Account,
};
pub use fts::{Bank, FtsError, FtsState};
pub use recorder::Recorder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Unit,
    Integration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suite {
    UnitValid,
    UnitInvalid,
    IntegrationValid,
    IntegrationInvalid,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::UnitValid,
        Suite::UnitInvalid,
        Suite::IntegrationValid,
        Suite::IntegrationInvalid,
    ];

    pub fn family(self) -> Family {
        match self {
            Suite::UnitValid | Suite::UnitInvalid => Family::Unit,
            _ => Family::Integration,
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            Suite::UnitValid | Suite::IntegrationValid => Polarity::Valid,
            _ => Polarity::Invalid,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Unit => "unit",
            Family::Integration => "integration",
        })
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Valid => "valid",
            Polarity::Invalid => "invalid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub label: &'static str,
    pub slug: &'static str,
    pub suites: &'static [Suite],
}

use Suite::{IntegrationInvalid as II, IntegrationValid as IV, UnitInvalid as UI, UnitValid as UV};

/// The nine runs in table order.
pub const RUNS: [RunConfig; 9] = [
    RunConfig {
        label: "Valid: UT",
        slug: "valid-ut",
        suites: &[UV],
    },
    RunConfig {
        label: "Invalid: UT",
        slug: "invalid-ut",
        suites: &[UI],
    },
    RunConfig {
        label: "Valid & Invalid: UT",
        slug: "valid-invalid-ut",
        suites: &[UV, UI],
    },
    RunConfig {
        label: "Valid: IT",
        slug: "valid-it",
        suites: &[IV],
    },
    RunConfig {
        label: "Invalid: IT",
        slug: "invalid-it",
        suites: &[II],
    },
    RunConfig {
        label: "Valid & Invalid: IT",
        slug: "valid-invalid-it",
        suites: &[IV, II],
    },
    RunConfig {
        label: "Valid: UT & IT",
        slug: "valid-ut-it",
        suites: &[UV, IV],
    },
    RunConfig {
        label: "Invalid: UT & IT",
        slug: "invalid-ut-it",
        suites: &[UI, II],
    },
    RunConfig {
        label: "Valid & Invalid: UT & IT",
        slug: "valid-invalid-ut-it",
        suites: &[UV, UI, IV, II],
    },
];

/// Looks a run up by label or slug.
pub fn find_run(name: &str) -> Option<&'static RunConfig> {
    let name = name.trim();
    RUNS.iter().find(|r| r.label == name || r.slug == name)
}

type Outcome = Result<(), String>;

pub struct TestCase {
    pub name: &'static str,
    pub suite: Suite,
    body: fn(&mut Bank) -> Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestResult {
    pub name: &'static str,
    pub family: Family,
    pub polarity: Polarity,
    pub failure: Option<String>,
}

#[derive(Debug, Error)]
pub enum SubjectError {
    #[error("subject test `{name}` failed: {msg}")]
    TestFailed { name: &'static str, msg: String },
}

/// Everything one run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub config: RunConfig,
    pub trace: Trace,
    pub results: Vec<TestResult>,
}

impl RunOutput {
    pub fn test_count(&self) -> usize {
        self.results.len()
    }
}

/// Every test of `suite`, in execution order.
pub fn tests(suite: Suite) -> Vec<TestCase> {
    let table: Table = match suite {
        Suite::UnitValid => UNIT_VALID,
        Suite::UnitInvalid => UNIT_INVALID,
        Suite::IntegrationValid => INTEGRATION_VALID,
        Suite::IntegrationInvalid => INTEGRATION_INVALID,
    };
    table
        .iter()
        .map(|(name, body)| TestCase {
            name,
            suite,
            body: *body,
        })
        .collect()
}

fn execute(
    tests: impl IntoIterator<Item = TestCase>,
) -> Result<(Trace, Vec<TestResult>), SubjectError> {
    let mut rec = Recorder::new();
    let mut results = Vec::new();
    for test in tests {
        let mut bank = Bank::new(&mut rec);
        if let Err(msg) = (test.body)(&mut bank) {
            return Err(SubjectError::TestFailed {
                name: test.name,
                msg,
            });
        }
        results.push(TestResult {
            name: test.name,
            family: test.suite.family(),
            polarity: test.suite.polarity(),
            failure: None,
        });
    }
    Ok((rec.finish(), results))
}

/// Runs the suites of `config` in order, each test against a fresh state.
pub fn run_suite(config: &RunConfig) -> Result<RunOutput, SubjectError> {
    let (trace, results) = execute(config.suites.iter().flat_map(|s| tests(*s)))?;
    Ok(RunOutput {
        config: *config,
        trace,
        results,
    })
}

/// Deposits of ten distinct amounts, zero included, through the facade.
pub fn run_diversified_deposits() -> Result<Trace, SubjectError> {
    const AMOUNTS: [f64; 10] = [0.0, 5.0, 12.5, 20.0, 50.0, 75.0, 100.0, 150.0, 200.0, 250.0];
    fn body(b: &mut Bank) -> Outcome {
        let (s, n) = customer(b, 3, false, false, 35.0)?;
        let mut expected = 35.0;
        for amount in AMOUNTS {
            expected += amount;
            eq(
                b.deposit(s, n, amount),
                Ok(expected),
                "balance after deposit",
            )?;
        }
        Ok(())
    }
    let case = TestCase {
        name: "deposit_diverse_amounts",
        suite: Suite::IntegrationValid,
        body,
    };
    execute([case]).map(|(trace, _)| trace)
}

pub fn manifest() -> ProbeManifest {
    recorder::manifest()
}

const GROUND_TRUTH: &str = include_str!("../../data/fts_ground_truth.spec");
const REVIEW: &str = include_str!("../../data/fts_review.txt");

/// The hand-written specification of every instrumented method.
pub fn ground_truth() -> GroundTruthSpec {
    GroundTruthSpec::parse(GROUND_TRUTH).expect("bundled ground truth parses")
}

pub fn ground_truth_text() -> &'static str {
    GROUND_TRUTH
}

/// Reviewed extras: correct invariants the specification does not list.
pub fn review() -> Result<Review, EvalError> {
    Review::parse(REVIEW, &ground_truth())
}

pub fn review_text() -> &'static str {
    REVIEW
}

/// `name  family  polarity  result` table of a run's tests.
pub fn results_table(results: &[TestResult]) -> String {
    let width = results
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut out = format!(
        "{:<width$}  {:<11}  {:<8}  result\n",
        "name", "family", "polarity"
    );
    for r in results {
        let status = match &r.failure {
            None => "pass".to_string(),
            Some(msg) => format!("FAIL: {msg}"),
        };
        let _ = writeln!(
            out,
            "{:<width$}  {:<11}  {:<8}  {status}",
            r.name,
            r.family.to_string(),
            r.polarity.to_string()
        );
    }
    out
}

fn ensure(cond: bool, msg: &str) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn eq<T: PartialEq + fmt::Debug>(got: T, want: T, what: &str) -> Outcome {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: expected {want:?}, got {got:?}"))
    }
}

/// The operation fails with `expected` and leaves observable state alone.
fn rejects<T: fmt::Debug>(
    b: &mut Bank,
    expected: FtsError,
    op: impl FnOnce(&mut Bank) -> Result<T, FtsError>,
) -> Outcome {
    let before = b.state.observable();
    let got = op(b);
    eq(got.map(|_| ()), Err(expected), "error")?;
    ensure(
        b.state.observable() == before,
        "rejected call changed state",
    )
}

/// The facade call returns `sentinel`, audits `code`, and changes nothing.
fn sentinel<T: PartialEq + fmt::Debug>(
    b: &mut Bank,
    want: T,
    code: FtsError,
    op: impl FnOnce(&mut Bank) -> T,
) -> Outcome {
    let before = b.state.observable();
    eq(op(b), want, "sentinel")?;
    eq(
        b.state.audit.last().copied(),
        Some(code.code()),
        "audit code",
    )?;
    ensure(
        b.state.observable() == before,
        "rejected call changed state",
    )
}

/// Runs `f` on an account and the recorder at once.
fn on_account<T>(b: &mut Bank, n: i64, f: impl FnOnce(&mut Recorder, &mut Account) -> T) -> T {
    let acct = b.state.accounts.get_mut(&n).expect("fixture account");
    f(b.rec, acct)
}

fn balance_of(b: &Bank, n: i64) -> f64 {
    b.state.account(n).balance
}

/// Creates a profile, logs in and opens one account through the facade.
fn customer(
    b: &mut Bank,
    uid: i64,
    premium: bool,
    savings: bool,
    initial: f64,
) -> Result<(i64, i64), String> {
    ensure(
        b.create_profile(uid, premium).is_some(),
        "profile not created",
    )?;
    let session = b.login(uid);
    ensure(session > 0, "login failed")?;
    let number = b.open_account(session, savings, initial);
    ensure(number >= 1000, "account not opened")?;
    Ok((session, number))
}

const IBAN_DE: &str = "DE89370400440532013000";
const IBAN_MT: &str = "MT84MALT011000012345MTLCAST001S";

type Table = &'static [(&'static str, fn(&mut Bank) -> Outcome)];

fn deposit_case(b: &mut Bank, balance: f64, amount: f64) -> Outcome {
    let n = b.state.fixture_account(3, false, balance);
    let got = on_account(b, n, |r, a| account_deposit(r, a, amount));
    eq(got, Ok(balance + amount), "balance")
}

fn withdraw_case(b: &mut Bank, balance: f64, amount: f64, charge: f64) -> Outcome {
    let n = b.state.fixture_account(3, charge > 0.0, balance);
    let got = on_account(b, n, |r, a| account_withdraw(r, a, amount, charge));
    eq(got, Ok(balance - amount - charge), "balance")
}

fn close_case(b: &mut Bank, balance: f64) -> Outcome {
    let n = b.state.fixture_account(7, true, balance);
    eq(on_account(b, n, account_close), Ok(balance), "refund")?;
    ensure(
        !b.state.account(n).open && balance_of(b, n) == 0.0,
        "not settled",
    )
}

fn open_case(b: &mut Bank, uid: i64, savings: bool, initial: f64) -> Outcome {
    b.state.fixture_user(uid, false);
    let n = account_open(b.rec, &mut b.state, uid, savings, initial);
    eq(n.map(|n| balance_of(b, n)), Ok(initial), "opening balance")
}

const UNIT_VALID: Table = &[
    ("profile_create_standard", |b| {
        profile_create(b.rec, &mut b.state, 3, false).map_err(|e| e.to_string())?;
        ensure(!b.state.users[&3].premium, "mode")
    }),
    ("profile_create_premium", |b| {
        profile_create(b.rec, &mut b.state, 7, true).map_err(|e| e.to_string())?;
        ensure(b.state.users[&7].premium, "mode")
    }),
    ("profile_create_second_user", |b| {
        b.state.fixture_user(3, false);
        profile_create(b.rec, &mut b.state, 12, false).map_err(|e| e.to_string())?;
        eq(b.state.users.len(), 2, "users")
    }),
    ("account_open_current", |b| open_case(b, 3, false, 35.0)),
    ("account_open_savings", |b| open_case(b, 7, true, 100.0)),
    ("account_open_empty", |b| open_case(b, 12, false, 0.0)),
    ("account_open_empty_savings", |b| open_case(b, 3, true, 0.0)),
    ("account_open_second_account", |b| {
        b.state.fixture_account(7, false, 35.0);
        open_case(b, 7, true, 35.0)
    }),
    ("account_deposit", |b| deposit_case(b, 35.0, 100.0)),
    ("account_deposit_into_empty", |b| deposit_case(b, 0.0, 50.0)),
    ("account_deposit_large", |b| deposit_case(b, 100.0, 200.0)),
    ("account_deposit_small", |b| deposit_case(b, 35.0, 50.0)),
    ("account_deposit_doubles_balance", |b| {
        deposit_case(b, 100.0, 100.0)
    }),
    ("account_deposit_large_into_empty", |b| {
        deposit_case(b, 0.0, 200.0)
    }),
    ("account_deposit_large_small_balance", |b| {
        deposit_case(b, 35.0, 200.0)
    }),
    ("account_deposit_twice", |b| {
        let n = b.state.fixture_account(3, false, 0.0);
        on_account(b, n, |r, a| account_deposit(r, a, 100.0)).map_err(|e| e.to_string())?;
        eq(
            on_account(b, n, |r, a| account_deposit(r, a, 50.0)),
            Ok(150.0),
            "balance",
        )
    }),
    ("account_withdraw_current", |b| {
        withdraw_case(b, 200.0, 50.0, 0.0)
    }),
    ("account_withdraw_savings_charge", |b| {
        withdraw_case(b, 100.0, 50.0, 1.0)
    }),
    ("account_withdraw_exact_balance", |b| {
        withdraw_case(b, 100.0, 100.0, 0.0)
    }),
    ("account_withdraw_half", |b| {
        withdraw_case(b, 200.0, 100.0, 0.0)
    }),
    ("account_withdraw_large", |b| {
        withdraw_case(b, 200.0, 200.0, 0.0)
    }),
    ("account_withdraw_savings_large", |b| {
        withdraw_case(b, 201.0, 200.0, 1.0)
    }),
    ("account_withdraw_with_foreign_charge", |b| {
        withdraw_case(b, 100.0, 50.0, 5.0)
    }),
    ("account_close_refunds_balance", |b| close_case(b, 35.0)),
    ("account_close_empty", |b| close_case(b, 0.0)),
    ("account_close_full", |b| close_case(b, 100.0)),
    ("account_close_after_deposit", |b| close_case(b, 135.0)),
    ("account_apply_interest", |b| {
        let n = b.state.fixture_account(7, true, 100.0);
        eq(
            on_account(b, n, |r, a| account_apply_interest(r, a, 0.02)),
            Ok(102.0),
            "balance",
        )
    }),
    ("account_apply_zero_interest", |b| {
        let n = b.state.fixture_account(7, true, 35.0);
        eq(
            on_account(b, n, |r, a| account_apply_interest(r, a, 0.0)),
            Ok(35.0),
            "balance",
        )
    }),
    ("session_open", |b| {
        b.state.fixture_user(3, false);
        eq(session_open(b.rec, &mut b.state, 3), Ok(1), "session id")
    }),
    ("session_open_second", |b| {
        b.state.fixture_user(7, true);
        b.state.fixture_session(7);
        eq(session_open(b.rec, &mut b.state, 7), Ok(2), "session id")
    }),
    ("session_validate_active", |b| {
        b.state.fixture_user(3, false);
        let s = b.state.fixture_session(3);
        ensure(session_validate(b.rec, &b.state, s), "session inactive")
    }),
    ("session_validate_closed", |b| {
        b.state.fixture_user(3, false);
        let s = b.state.fixture_session(3);
        b.state.sessions.remove(&s);
        ensure(!session_validate(b.rec, &b.state, s), "session active")
    }),
    ("session_close", |b| {
        b.state.fixture_user(3, false);
        let s = b.state.fixture_session(3);
        session_close(b.rec, &mut b.state, s).map_err(|e| e.to_string())?;
        ensure(b.state.sessions.is_empty(), "session kept")
    }),
    ("withdrawal_charge_savings", |b| {
        eq(withdrawal_charge(b.rec, true), 1.0, "charge")
    }),
    ("withdrawal_charge_current", |b| {
        eq(withdrawal_charge(b.rec, false), 0.0, "charge")
    }),
    ("foreign_charge_premium", |b| {
        eq(foreign_charge(b.rec, true), 2.0, "charge")
    }),
    ("foreign_charge_standard", |b| {
        eq(foreign_charge(b.rec, false), 5.0, "charge")
    }),
];

const UNIT_INVALID: Table = &[
    ("profile_create_negative_uid", |b| {
        rejects(b, FtsError::InvalidUser, |b| {
            profile_create(b.rec, &mut b.state, -1, false)
        })
    }),
    ("profile_create_duplicate", |b| {
        b.state.fixture_user(3, false);
        rejects(b, FtsError::DuplicateUser, |b| {
            profile_create(b.rec, &mut b.state, 3, true)
        })
    }),
    ("account_open_negative_initial", |b| {
        b.state.fixture_user(3, false);
        rejects(b, FtsError::InvalidAmount, |b| {
            account_open(b.rec, &mut b.state, 3, false, -10.0)
        })
    }),
    ("account_deposit_negative", |b| {
        let n = b.state.fixture_account(3, false, 35.0);
        rejects(b, FtsError::InvalidAmount, |b| {
            on_account(b, n, |r, a| account_deposit(r, a, -5.0))
        })
    }),
    ("account_deposit_closed", |b| {
        let n = b.state.fixture_account(3, false, 0.0);
        b.state.accounts.get_mut(&n).unwrap().open = false;
        rejects(b, FtsError::AccountClosed, |b| {
            on_account(b, n, |r, a| account_deposit(r, a, 100.0))
        })
    }),
    ("account_withdraw_insufficient", |b| {
        let n = b.state.fixture_account(3, false, 35.0);
        rejects(b, FtsError::InsufficientFunds, |b| {
            on_account(b, n, |r, a| account_withdraw(r, a, 100.0, 0.0))
        })
    }),
    ("account_withdraw_negative", |b| {
        let n = b.state.fixture_account(3, false, 35.0);
        rejects(b, FtsError::InvalidAmount, |b| {
            on_account(b, n, |r, a| account_withdraw(r, a, -5.0, 0.0))
        })
    }),
    ("account_close_twice", |b| {
        let n = b.state.fixture_account(3, false, 0.0);
        b.state.accounts.get_mut(&n).unwrap().open = false;
        rejects(b, FtsError::AccountClosed, |b| {
            on_account(b, n, account_close)
        })
    }),
    ("session_open_unknown_user", |b| {
        rejects(b, FtsError::InvalidUser, |b| {
            session_open(b.rec, &mut b.state, 12)
        })
    }),
    ("session_close_unknown", |b| {
        rejects(b, FtsError::InvalidSession, |b| {
            session_close(b.rec, &mut b.state, 9)
        })
    }),
];

fn bank_deposit_case(b: &mut Bank, initial: f64, amount: f64) -> Outcome {
    let (s, n) = customer(b, 3, false, false, initial)?;
    eq(b.deposit(s, n, amount), Ok(initial + amount), "balance")
}

fn bank_withdraw_case(b: &mut Bank, savings: bool, amount: f64) -> Outcome {
    let (s, n) = customer(b, 7, false, savings, 100.0)?;
    b.deposit(s, n, 200.0).map_err(|e| e.to_string())?;
    let charge = if savings { 1.0 } else { 0.0 };
    eq(
        b.withdraw(s, n, amount),
        Ok(300.0 - amount - charge),
        "balance",
    )
}

fn bank_transfer_local_case(b: &mut Bank, initial: f64, amount: f64) -> Outcome {
    let (s, from) = customer(b, 12, false, false, initial)?;
    let to = b.open_account(s, true, 35.0);
    b.transfer_local(s, from, to, amount)
        .map_err(|e| e.to_string())?;
    let got = (b.balance(s, from), b.balance(s, to));
    eq(got, (Ok(initial - amount), Ok(35.0 + amount)), "balances")
}

fn bank_transfer_foreign_case(b: &mut Bank, premium: bool, iban: &str, amount: f64) -> Outcome {
    let (s, n) = customer(b, 3, premium, false, 100.0)?;
    b.deposit(s, n, 200.0).map_err(|e| e.to_string())?;
    b.transfer_foreign(s, n, iban, amount)
        .map_err(|e| e.to_string())?;
    let charge = if premium { 2.0 } else { 5.0 };
    eq(b.balance(s, n), Ok(300.0 - amount - charge), "balance")
}

fn bank_close_case(b: &mut Bank, initial: f64, deposit: Option<f64>) -> Outcome {
    let (s, n) = customer(b, 7, true, true, initial)?;
    if let Some(amount) = deposit {
        b.deposit(s, n, amount).map_err(|e| e.to_string())?;
    }
    eq(
        b.close_account(s, n),
        Ok(initial + deposit.unwrap_or(0.0)),
        "refund",
    )
}

const INTEGRATION_VALID: Table = &[
    ("bank_login_after_signup", |b| {
        ensure(b.create_profile(3, false).is_some(), "profile")?;
        eq(b.login(3), 1, "session id")
    }),
    ("bank_second_login", |b| {
        ensure(b.create_profile(7, true).is_some(), "profile")?;
        b.login(7);
        eq(b.login(7), 2, "session id")
    }),
    ("bank_open_account", |b| {
        let (s, n) = customer(b, 3, false, false, 35.0)?;
        eq(b.balance(s, n), Ok(35.0), "balance")
    }),
    ("bank_open_savings_account", |b| {
        let (s, n) = customer(b, 7, true, true, 100.0)?;
        eq(b.balance(s, n), Ok(100.0), "balance")
    }),
    ("bank_open_empty_account", |b| {
        let (s, n) = customer(b, 12, false, false, 0.0)?;
        eq(b.balance(s, n), Ok(0.0), "balance")
    }),
    ("bank_open_two_accounts", |b| {
        let (s, n) = customer(b, 3, false, false, 35.0)?;
        let m = b.open_account(s, true, 100.0);
        eq(
            (b.balance(s, n), b.balance(s, m)),
            (Ok(35.0), Ok(100.0)),
            "balances",
        )
    }),
    ("bank_deposit", |b| bank_deposit_case(b, 35.0, 100.0)),
    ("bank_deposit_small", |b| bank_deposit_case(b, 35.0, 50.0)),
    ("bank_deposit_into_empty", |b| {
        bank_deposit_case(b, 0.0, 200.0)
    }),
    ("bank_deposit_into_full", |b| {
        bank_deposit_case(b, 100.0, 100.0)
    }),
    ("bank_deposit_twice", |b| {
        let (s, n) = customer(b, 12, false, false, 0.0)?;
        b.deposit(s, n, 50.0).map_err(|e| e.to_string())?;
        eq(b.deposit(s, n, 200.0), Ok(250.0), "balance")
    }),
    ("bank_deposit_savings", |b| {
        let (s, n) = customer(b, 7, true, true, 100.0)?;
        eq(b.deposit(s, n, 200.0), Ok(300.0), "balance")
    }),
    ("bank_withdraw_current", |b| {
        bank_withdraw_case(b, false, 50.0)
    }),
    ("bank_withdraw_current_large", |b| {
        bank_withdraw_case(b, false, 200.0)
    }),
    ("bank_withdraw_savings_charge", |b| {
        bank_withdraw_case(b, true, 50.0)
    }),
    ("bank_withdraw_savings_large", |b| {
        bank_withdraw_case(b, true, 100.0)
    }),
    ("bank_withdraw_everything", |b| {
        let (s, n) = customer(b, 12, false, false, 35.0)?;
        b.deposit(s, n, 200.0).map_err(|e| e.to_string())?;
        eq(b.withdraw(s, n, 235.0), Ok(0.0), "balance")
    }),
    ("bank_transfer_local", |b| {
        bank_transfer_local_case(b, 100.0, 50.0)
    }),
    ("bank_transfer_local_everything", |b| {
        bank_transfer_local_case(b, 100.0, 100.0)
    }),
    ("bank_transfer_local_twice", |b| {
        let (s, from) = customer(b, 3, false, false, 100.0)?;
        let to = b.open_account(s, false, 0.0);
        for _ in 0..2 {
            b.transfer_local(s, from, to, 50.0)
                .map_err(|e| e.to_string())?;
        }
        eq(
            (b.balance(s, from), b.balance(s, to)),
            (Ok(0.0), Ok(100.0)),
            "balances",
        )
    }),
    ("bank_transfer_foreign_premium", |b| {
        bank_transfer_foreign_case(b, true, IBAN_DE, 100.0)
    }),
    ("bank_transfer_foreign_standard", |b| {
        bank_transfer_foreign_case(b, false, IBAN_MT, 200.0)
    }),
    ("bank_transfer_foreign_small", |b| {
        bank_transfer_foreign_case(b, false, IBAN_DE, 50.0)
    }),
    ("bank_close_account", |b| {
        bank_close_case(b, 35.0, Some(50.0))
    }),
    ("bank_close_empty_account", |b| {
        bank_close_case(b, 0.0, None)
    }),
    ("bank_close_full_account", |b| {
        bank_close_case(b, 100.0, Some(200.0))
    }),
    ("bank_logout", |b| {
        let (s, _) = customer(b, 3, false, false, 0.0)?;
        ensure(b.logout(s), "logout")?;
        ensure(b.state.sessions.is_empty(), "session kept")
    }),
    ("bank_logout_keeps_other_sessions", |b| {
        let (s1, _) = customer(b, 3, false, false, 0.0)?;
        let (s2, _) = customer(b, 7, true, false, 35.0)?;
        ensure(b.logout(s2), "logout")?;
        eq(
            b.state.sessions.keys().copied().collect::<Vec<_>>(),
            vec![s1],
            "sessions",
        )
    }),
    ("bank_two_customers", |b| {
        let (s1, n1) = customer(b, 3, false, false, 35.0)?;
        let (s2, n2) = customer(b, 7, true, true, 100.0)?;
        b.deposit(s1, n1, 100.0).map_err(|e| e.to_string())?;
        b.deposit(s2, n2, 50.0).map_err(|e| e.to_string())?;
        eq(
            (b.balance(s1, n1), b.balance(s2, n2)),
            (Ok(135.0), Ok(150.0)),
            "balances",
        )
    }),
];

/// A customer whose account has received one deposit.
fn funded(
    b: &mut Bank,
    uid: i64,
    premium: bool,
    savings: bool,
    initial: f64,
    amount: f64,
) -> Result<(i64, i64), String> {
    let (s, n) = customer(b, uid, premium, savings, initial)?;
    eq(
        b.deposit(s, n, amount),
        Ok(initial + amount),
        "funding deposit",
    )?;
    Ok((s, n))
}

/// Like [`rejects`], then reads the balance back through the facade.
fn rejects_keeping_balance<T: fmt::Debug>(
    b: &mut Bank,
    (session, number): (i64, i64),
    expected: FtsError,
    op: impl FnOnce(&mut Bank) -> Result<T, FtsError>,
) -> Outcome {
    let before = balance_of(b, number);
    rejects(b, expected, op)?;
    eq(
        b.balance(session, number),
        Ok(before),
        "balance after rejection",
    )
}

const INTEGRATION_INVALID: Table = &[
    ("bank_signup_negative_uid", |b| {
        sentinel(b, None, FtsError::InvalidUser, |b| {
            b.create_profile(-1, false)
        })
    }),
    ("bank_signup_duplicate", |b| {
        ensure(b.create_profile(3, false).is_some(), "profile")?;
        sentinel(b, None, FtsError::DuplicateUser, |b| {
            b.create_profile(3, true)
        })
    }),
    ("bank_login_unknown_user", |b| {
        sentinel(b, -1, FtsError::InvalidUser, |b| b.login(7))
    }),
    ("bank_open_account_without_session", |b| {
        ensure(b.create_profile(3, false).is_some(), "profile")?;
        sentinel(b, -1, FtsError::InvalidSession, |b| {
            b.open_account(4, false, 35.0)
        })
    }),
    ("bank_open_account_negative_initial", |b| {
        ensure(b.create_profile(12, true).is_some(), "profile")?;
        let s = b.login(12);
        sentinel(b, -1, FtsError::InvalidAmount, |b| {
            b.open_account(s, true, -10.0)
        })
    }),
    ("bank_deposit_negative", |b| {
        let (s, n) = funded(b, 3, false, false, 35.0, 100.0)?;
        rejects_keeping_balance(b, (s, n), FtsError::InvalidAmount, |b| {
            b.deposit(s, n, -5.0)
        })
    }),
    ("bank_deposit_foreign_account", |b| {
        let (s1, _) = funded(b, 7, true, false, 100.0, 200.0)?;
        let victim = funded(b, 3, false, false, 35.0, 50.0)?;
        rejects_keeping_balance(b, victim, FtsError::InvalidAccount, |b| {
            b.deposit(s1, victim.1, 50.0)
        })
    }),
    ("bank_deposit_after_logout", |b| {
        let (s, n) = funded(b, 12, false, true, 0.0, 50.0)?;
        ensure(b.logout(s), "logout")?;
        rejects(b, FtsError::InvalidSession, |b| b.deposit(s, n, 100.0))
    }),
    ("bank_deposit_after_close", |b| {
        let (s, n) = funded(b, 3, false, false, 100.0, 100.0)?;
        eq(b.withdraw(s, n, 50.0), Ok(150.0), "balance")?;
        eq(b.close_account(s, n), Ok(150.0), "refund")?;
        rejects(b, FtsError::AccountClosed, |b| b.deposit(s, n, 200.0))
    }),
    ("bank_withdraw_insufficient", |b| {
        let (s, n) = customer(b, 3, false, false, 35.0)?;
        rejects_keeping_balance(b, (s, n), FtsError::InsufficientFunds, |b| {
            b.withdraw(s, n, 50.0)
        })
    }),
    ("bank_withdraw_insufficient_after_deposit", |b| {
        let (s, n) = funded(b, 7, false, false, 0.0, 100.0)?;
        rejects_keeping_balance(b, (s, n), FtsError::InsufficientFunds, |b| {
            b.withdraw(s, n, 200.0)
        })
    }),
    ("bank_withdraw_savings_charge_not_covered", |b| {
        let (s, n) = funded(b, 12, false, true, 0.0, 50.0)?;
        rejects_keeping_balance(b, (s, n), FtsError::InsufficientFunds, |b| {
            b.withdraw(s, n, 50.0)
        })
    }),
    ("bank_withdraw_negative", |b| {
        let (s, n) = funded(b, 3, false, false, 100.0, 50.0)?;
        rejects_keeping_balance(b, (s, n), FtsError::InvalidAmount, |b| {
            b.withdraw(s, n, -5.0)
        })
    }),
    ("bank_withdraw_after_close", |b| {
        let (s, n) = funded(b, 7, true, true, 100.0, 200.0)?;
        eq(b.withdraw(s, n, 200.0), Ok(99.0), "balance")?;
        eq(b.close_account(s, n), Ok(99.0), "refund")?;
        rejects(b, FtsError::AccountClosed, |b| b.withdraw(s, n, 50.0))
    }),
    ("bank_withdraw_foreign_account", |b| {
        let (s1, _) = customer(b, 12, false, false, 35.0)?;
        let victim = funded(b, 3, false, false, 100.0, 100.0)?;
        rejects_keeping_balance(b, victim, FtsError::InvalidAccount, |b| {
            b.withdraw(s1, victim.1, 50.0)
        })
    }),
    ("bank_transfer_to_same_account", |b| {
        let (s, n) = funded(b, 3, false, false, 100.0, 50.0)?;
        rejects(b, FtsError::InvalidAccount, |b| {
            b.transfer_local(s, n, n, 50.0)
        })
    }),
    ("bank_transfer_local_insufficient", |b| {
        let (s, from) = customer(b, 12, false, false, 35.0)?;
        let to = b.open_account(s, true, 0.0);
        rejects(b, FtsError::InsufficientFunds, |b| {
            b.transfer_local(s, from, to, 100.0)
        })
    }),
    ("bank_transfer_local_without_session", |b| {
        let (s, from) = funded(b, 7, true, false, 100.0, 200.0)?;
        let to = b.open_account(s, false, 35.0);
        ensure(b.logout(s), "logout")?;
        rejects(b, FtsError::InvalidSession, |b| {
            b.transfer_local(s, from, to, 50.0)
        })
    }),
    ("bank_transfer_local_from_foreign_account", |b| {
        let (_, n1) = customer(b, 3, false, false, 100.0)?;
        let (s2, n2) = customer(b, 7, true, false, 35.0)?;
        rejects(b, FtsError::InvalidAccount, |b| {
            b.transfer_local(s2, n1, n2, 50.0)
        })
    }),
    ("bank_transfer_foreign_bad_iban", |b| {
        let (s, n) = funded(b, 7, true, false, 100.0, 100.0)?;
        rejects_keeping_balance(b, (s, n), FtsError::InvalidIban, |b| {
            b.transfer_foreign(s, n, "12-3", 50.0)
        })
    }),
    ("bank_transfer_foreign_insufficient", |b| {
        let (s, n) = customer(b, 3, false, false, 100.0)?;
        rejects_keeping_balance(b, (s, n), FtsError::InsufficientFunds, |b| {
            b.transfer_foreign(s, n, IBAN_DE, 100.0)
        })
    }),
    ("bank_transfer_foreign_without_session", |b| {
        let (s, n) = funded(b, 12, false, false, 35.0, 200.0)?;
        ensure(b.logout(s), "logout")?;
        rejects(b, FtsError::InvalidSession, |b| {
            b.transfer_foreign(s, n, IBAN_MT, 50.0)
        })
    }),
    ("bank_transfer_foreign_from_foreign_account", |b| {
        let (_, n1) = customer(b, 3, false, false, 100.0)?;
        let (s2, _) = customer(b, 7, true, false, 35.0)?;
        rejects(b, FtsError::InvalidAccount, |b| {
            b.transfer_foreign(s2, n1, IBAN_DE, 50.0)
        })
    }),
    ("bank_close_account_twice", |b| {
        let (s, n) = funded(b, 12, false, true, 35.0, 50.0)?;
        b.close_account(s, n).map_err(|e| e.to_string())?;
        rejects(b, FtsError::AccountClosed, |b| b.close_account(s, n))
    }),
    ("bank_close_account_without_session", |b| {
        let (s, n) = funded(b, 3, false, false, 100.0, 200.0)?;
        eq(b.withdraw(s, n, 100.0), Ok(200.0), "balance")?;
        ensure(b.logout(s), "logout")?;
        rejects(b, FtsError::InvalidSession, |b| b.close_account(s, n))
    }),
    ("bank_close_foreign_account", |b| {
        let (_, n1) = customer(b, 3, false, false, 35.0)?;
        let (s2, _) = customer(b, 7, true, true, 100.0)?;
        rejects(b, FtsError::InvalidAccount, |b| b.close_account(s2, n1))
    }),
    ("bank_balance_without_session", |b| {
        let (s, n) = funded(b, 12, false, false, 35.0, 100.0)?;
        eq(b.withdraw(s, n, 100.0), Ok(35.0), "balance")?;
        ensure(b.logout(s), "logout")?;
        rejects(b, FtsError::InvalidSession, |b| b.balance(s, n))
    }),
    ("bank_balance_of_foreign_account", |b| {
        let (_, n1) = customer(b, 3, false, false, 35.0)?;
        let (s2, _) = customer(b, 7, true, false, 100.0)?;
        rejects(b, FtsError::InvalidAccount, |b| b.balance(s2, n1))
    }),
    ("bank_overdraw_after_withdrawal", |b| {
        let (s, n) = funded(b, 3, false, false, 100.0, 100.0)?;
        eq(b.withdraw(s, n, 200.0), Ok(0.0), "balance")?;
        rejects_keeping_balance(b, (s, n), FtsError::InsufficientFunds, |b| {
            b.withdraw(s, n, 50.0)
        })
    }),
    ("bank_overdraw_savings_after_withdrawal", |b| {
        let (s, n) = funded(b, 7, true, true, 100.0, 50.0)?;
        eq(b.withdraw(s, n, 50.0), Ok(99.0), "balance")?;
        rejects_keeping_balance(b, (s, n), FtsError::InsufficientFunds, |b| {
            b.withdraw(s, n, 100.0)
        })
    }),
    ("bank_transfer_foreign_premium_insufficient", |b| {
        let (s, n) = funded(b, 12, true, false, 35.0, 50.0)?;
        eq(b.withdraw(s, n, 50.0), Ok(35.0), "balance")?;
        rejects_keeping_balance(b, (s, n), FtsError::InsufficientFunds, |b| {
            b.transfer_foreign(s, n, IBAN_MT, 50.0)
        })
    }),
    ("bank_logout_twice", |b| {
        let (s, _) = customer(b, 3, false, false, 0.0)?;
        ensure(b.logout(s), "logout")?;
        sentinel(b, false, FtsError::InvalidSession, |b| b.logout(s))
    }),
];
