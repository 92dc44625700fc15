// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! The financial transaction system: profiles, accounts, sessions, charges,
//! and a `Bank` facade over them. Every public operation is instrumented.
//!
//! Users are standard or premium; accounts are current or savings. Savings
//! withdrawals cost a flat 1.0; foreign transfers cost 2.0 for premium users
//! and 5.0 otherwise. Facade calls that create things return sentinels on
//! failure (`None`, `-1`, `false`); monetary calls return typed errors. Both
//! kinds of failure are written to the audit log.

use std::collections::BTreeMap;

use thiserror::Error;

use super::recorder::{boolean, int, real, reference, text, Recorder};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FtsError {
    #[error("invalid user id")]
    InvalidUser,
    #[error("user already exists")]
    DuplicateUser,
    #[error("invalid session")]
    InvalidSession,
    #[error("invalid account")]
    InvalidAccount,
    #[error("invalid amount")]
    InvalidAmount,
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("account is closed")]
    AccountClosed,
    #[error("invalid IBAN")]
    InvalidIban,
    #[error("invalid interest rate")]
    InvalidRate,
}

impl FtsError {
    pub fn code(self) -> i64 {
        match self {
            FtsError::InvalidUser => 1,
            FtsError::DuplicateUser => 2,
            FtsError::InvalidSession => 3,
            FtsError::InvalidAccount => 4,
            FtsError::InvalidAmount => 5,
            FtsError::InsufficientFunds => 6,
            FtsError::AccountClosed => 7,
            FtsError::InvalidIban => 8,
            FtsError::InvalidRate => 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub uid: i64,
    pub premium: bool,
    pub handle: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Account {
    pub number: i64,
    pub owner: i64,
    pub savings: bool,
    pub balance: f64,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtsState {
    pub users: BTreeMap<i64, Profile>,
    pub accounts: BTreeMap<i64, Account>,
    /// session id -> user id
    pub sessions: BTreeMap<i64, i64>,
    pub audit: Vec<i64>,
    next_account: i64,
    next_session: i64,
    next_handle: u64,
}

impl Default for FtsState {
    fn default() -> Self {
        FtsState {
            users: BTreeMap::new(),
            accounts: BTreeMap::new(),
            sessions: BTreeMap::new(),
            audit: Vec::new(),
            next_account: 1000,
            next_session: 1,
            next_handle: 1,
        }
    }
}

/// What a client can observe; the audit log is excluded.
pub type Observable = (
    BTreeMap<i64, Profile>,
    BTreeMap<i64, Account>,
    BTreeMap<i64, i64>,
);

impl FtsState {
    pub fn observable(&self) -> Observable {
        (
            self.users.clone(),
            self.accounts.clone(),
            self.sessions.clone(),
        )
    }

    // Uninstrumented set-up helpers for unit tests.

    pub fn fixture_user(&mut self, uid: i64, premium: bool) {
        let handle = self.next_handle;
        self.next_handle += 1;
        self.users.insert(
            uid,
            Profile {
                uid,
                premium,
                handle,
            },
        );
    }

    pub fn fixture_account(&mut self, owner: i64, savings: bool, balance: f64) -> i64 {
        let number = self.next_account;
        self.next_account += 1;
        self.accounts.insert(
            number,
            Account {
                number,
                owner,
                savings,
                balance,
                open: true,
            },
        );
        number
    }

    pub fn fixture_session(&mut self, uid: i64) -> i64 {
        let id = self.next_session;
        self.next_session += 1;
        self.sessions.insert(id, uid);
        id
    }

    pub fn account(&self, number: i64) -> &Account {
        &self.accounts[&number]
    }
}

pub fn profile_create(
    rec: &mut Recorder,
    state: &mut FtsState,
    uid: i64,
    premium: bool,
) -> Result<u64, FtsError> {
    const M: &str = "UserProfile.create";
    let f = rec.enter(M, &[int("uid", uid), boolean("premium", premium)]);
    if !rec.branch(M, "valid_uid", uid >= 0) {
        rec.block(M, "reject");
        return Err(FtsError::InvalidUser);
    }
    if !rec.branch(M, "fresh", !state.users.contains_key(&uid)) {
        rec.block(M, "duplicate");
        return Err(FtsError::DuplicateUser);
    }
    rec.block(M, "store");
    state.fixture_user(uid, premium);
    let handle = state.users[&uid].handle;
    rec.exit(
        f,
        &[
            int("uid", uid),
            boolean("premium", premium),
            reference("return", Some(handle)),
        ],
    );
    Ok(handle)
}

pub fn account_open(
    rec: &mut Recorder,
    state: &mut FtsState,
    owner: i64,
    savings: bool,
    initial: f64,
) -> Result<i64, FtsError> {
    const M: &str = "UserAccount.open";
    let args = [
        int("owner", owner),
        boolean("savings", savings),
        real("initial", initial),
    ];
    let f = rec.enter(M, &args);
    if !rec.branch(M, "valid_initial", initial >= 0.0) {
        rec.block(M, "reject");
        return Err(FtsError::InvalidAmount);
    }
    rec.block(M, "store");
    let number = state.fixture_account(owner, savings, initial);
    rec.exit(
        f,
        &[
            int("owner", owner),
            boolean("savings", savings),
            real("initial", initial),
            int("return", number),
            real("balance", initial),
        ],
    );
    Ok(number)
}

pub fn account_deposit(
    rec: &mut Recorder,
    acct: &mut Account,
    amount: f64,
) -> Result<f64, FtsError> {
    const M: &str = "UserAccount.deposit";
    let f = rec.enter(M, &[real("amount", amount), real("balance", acct.balance)]);
    if !rec.branch(M, "is_open", acct.open) {
        rec.block(M, "closed");
        return Err(FtsError::AccountClosed);
    }
    if !rec.branch(M, "valid_amount", amount >= 0.0) {
        rec.block(M, "reject");
        return Err(FtsError::InvalidAmount);
    }
    rec.block(M, "apply");
    acct.balance += amount;
    rec.exit(f, &[real("amount", amount), real("balance", acct.balance)]);
    Ok(acct.balance)
}

pub fn account_withdraw(
    rec: &mut Recorder,
    acct: &mut Account,
    amount: f64,
    charge: f64,
) -> Result<f64, FtsError> {
    const M: &str = "UserAccount.withdraw";
    let f = rec.enter(
        M,
        &[
            real("amount", amount),
            real("charge", charge),
            real("balance", acct.balance),
        ],
    );
    if !rec.branch(M, "is_open", acct.open) {
        rec.block(M, "closed");
        return Err(FtsError::AccountClosed);
    }
    if !rec.branch(M, "valid_amount", amount >= 0.0) {
        rec.block(M, "reject");
        return Err(FtsError::InvalidAmount);
    }
    if !rec.branch(M, "covered", amount + charge <= acct.balance) {
        rec.block(M, "short");
        return Err(FtsError::InsufficientFunds);
    }
    rec.block(M, "apply");
    acct.balance -= amount + charge;
    rec.exit(
        f,
        &[
            real("amount", amount),
            real("charge", charge),
            real("balance", acct.balance),
        ],
    );
    Ok(acct.balance)
}

pub fn account_close(rec: &mut Recorder, acct: &mut Account) -> Result<f64, FtsError> {
    const M: &str = "UserAccount.close";
    let f = rec.enter(M, &[real("balance", acct.balance)]);
    if !rec.branch(M, "is_open", acct.open) {
        rec.block(M, "closed");
        return Err(FtsError::AccountClosed);
    }
    rec.block(M, "settle");
    let refund = acct.balance;
    acct.balance = 0.0;
    acct.open = false;
    rec.exit(f, &[real("balance", acct.balance), real("return", refund)]);
    Ok(refund)
}

pub fn account_apply_interest(
    rec: &mut Recorder,
    acct: &mut Account,
    rate: f64,
) -> Result<f64, FtsError> {
    const M: &str = "UserAccount.applyInterest";
    let f = rec.enter(M, &[real("rate", rate), real("balance", acct.balance)]);
    if !rec.branch(M, "valid_rate", rate >= 0.0) {
        rec.block(M, "reject");
        return Err(FtsError::InvalidRate);
    }
    rec.block(M, "accrue");
    acct.balance += acct.balance * rate;
    rec.exit(f, &[real("rate", rate), real("balance", acct.balance)]);
    Ok(acct.balance)
}

pub fn session_open(rec: &mut Recorder, state: &mut FtsState, uid: i64) -> Result<i64, FtsError> {
    const M: &str = "SessionManager.open";
    let f = rec.enter(M, &[int("uid", uid)]);
    if !rec.branch(M, "known", state.users.contains_key(&uid)) {
        rec.block(M, "unknown");
        return Err(FtsError::InvalidUser);
    }
    rec.block(M, "issue");
    let id = state.fixture_session(uid);
    rec.exit(f, &[int("uid", uid), int("return", id)]);
    Ok(id)
}

pub fn session_validate(rec: &mut Recorder, state: &FtsState, session: i64) -> bool {
    const M: &str = "SessionManager.validate";
    let f = rec.enter(M, &[int("session", session)]);
    let active = rec.branch(M, "active", state.sessions.contains_key(&session));
    rec.exit(f, &[int("session", session), boolean("return", active)]);
    active
}

pub fn session_close(
    rec: &mut Recorder,
    state: &mut FtsState,
    session: i64,
) -> Result<(), FtsError> {
    const M: &str = "SessionManager.close";
    let f = rec.enter(M, &[int("session", session)]);
    if !rec.branch(M, "active", state.sessions.contains_key(&session)) {
        rec.block(M, "unknown");
        return Err(FtsError::InvalidSession);
    }
    rec.block(M, "drop");
    state.sessions.remove(&session);
    rec.exit(f, &[int("session", session)]);
    Ok(())
}

pub fn withdrawal_charge(rec: &mut Recorder, savings: bool) -> f64 {
    const M: &str = "ChargeCalculator.withdrawalCharge";
    let f = rec.enter(M, &[boolean("savings", savings)]);
    let charge = if rec.branch(M, "savings", savings) {
        rec.block(M, "savings");
        1.0
    } else {
        rec.block(M, "current");
        0.0
    };
    rec.exit(f, &[boolean("savings", savings), real("return", charge)]);
    charge
}

pub fn foreign_charge(rec: &mut Recorder, premium: bool) -> f64 {
    const M: &str = "ChargeCalculator.foreignCharge";
    let f = rec.enter(M, &[boolean("premium", premium)]);
    let charge = if rec.branch(M, "premium", premium) {
        rec.block(M, "premium");
        2.0
    } else {
        rec.block(M, "standard");
        5.0
    };
    rec.exit(f, &[boolean("premium", premium), real("return", charge)]);
    charge
}

fn audit(rec: &mut Recorder, state: &mut FtsState, err: FtsError) {
    const M: &str = "AuditLog.recordFailure";
    let code = err.code();
    let f = rec.enter(M, &[int("code", code)]);
    rec.block(M, "append");
    state.audit.push(code);
    rec.exit(f, &[int("code", code)]);
}

/// An IBAN here is two upper-case letters followed by 13 to 32 digits or
/// upper-case letters.
pub fn iban_is_valid(iban: &str) -> bool {
    let b = iban.as_bytes();
    (15..=34).contains(&b.len())
        && b[..2].iter().all(u8::is_ascii_uppercase)
        && b[2..]
            .iter()
            .all(|c| c.is_ascii_digit() || c.is_ascii_uppercase())
}

/// The facade, bound to a recorder for the duration of one test.
pub struct Bank<'r> {
    pub state: FtsState,
    pub rec: &'r mut Recorder,
}

impl<'r> Bank<'r> {
    pub fn new(rec: &'r mut Recorder) -> Self {
        Bank {
            state: FtsState::default(),
            rec,
        }
    }

    fn fail(&mut self, method: &'static str, block: &'static str, err: FtsError) -> FtsError {
        self.rec.block(method, block);
        audit(self.rec, &mut self.state, err);
        err
    }

    /// The user behind `session`, if it is active.
    fn session_user(&mut self, method: &'static str, session: i64) -> Result<i64, FtsError> {
        let active = session_validate(self.rec, &self.state, session);
        if !self.rec.branch(method, "session", active) {
            return Err(self.fail(method, "no_session", FtsError::InvalidSession));
        }
        Ok(self.state.sessions[&session])
    }

    fn owned(&mut self, method: &'static str, uid: i64, number: i64) -> Result<(), FtsError> {
        let owns = self
            .state
            .accounts
            .get(&number)
            .is_some_and(|a| a.owner == uid);
        if !self.rec.branch(method, "owner", owns) {
            return Err(self.fail(method, "not_owner", FtsError::InvalidAccount));
        }
        Ok(())
    }

    pub fn create_profile(&mut self, uid: i64, premium: bool) -> Option<u64> {
        const M: &str = "Bank.createProfile";
        let f = self
            .rec
            .enter(M, &[int("uid", uid), boolean("premium", premium)]);
        let result = profile_create(self.rec, &mut self.state, uid, premium);
        let handle = if self.rec.branch(M, "created", result.is_ok()) {
            self.rec.block(M, "ok");
            result.ok()
        } else {
            self.fail(M, "fail", result.unwrap_err());
            None
        };
        self.rec.exit(
            f,
            &[
                int("uid", uid),
                boolean("premium", premium),
                reference("return", handle),
            ],
        );
        handle
    }

    pub fn login(&mut self, uid: i64) -> i64 {
        const M: &str = "Bank.login";
        let f = self.rec.enter(M, &[int("uid", uid)]);
        let result = session_open(self.rec, &mut self.state, uid);
        let session = if self.rec.branch(M, "opened", result.is_ok()) {
            self.rec.block(M, "ok");
            result.unwrap()
        } else {
            self.fail(M, "fail", result.unwrap_err());
            -1
        };
        self.rec.exit(f, &[int("uid", uid), int("return", session)]);
        session
    }

    pub fn logout(&mut self, session: i64) -> bool {
        const M: &str = "Bank.logout";
        let f = self.rec.enter(M, &[int("session", session)]);
        let result = session_close(self.rec, &mut self.state, session);
        let closed = self.rec.branch(M, "closed", result.is_ok());
        if closed {
            self.rec.block(M, "ok");
        } else {
            self.fail(M, "fail", result.unwrap_err());
        }
        self.rec
            .exit(f, &[int("session", session), boolean("return", closed)]);
        closed
    }

    pub fn open_account(&mut self, session: i64, savings: bool, initial: f64) -> i64 {
        const M: &str = "Bank.openAccount";
        let args = [
            int("session", session),
            boolean("savings", savings),
            real("initial", initial),
        ];
        let f = self.rec.enter(M, &args);
        let number = match self.session_user(M, session) {
            Err(_) => -1,
            Ok(uid) => {
                let result = account_open(self.rec, &mut self.state, uid, savings, initial);
                if self.rec.branch(M, "opened", result.is_ok()) {
                    self.rec.block(M, "ok");
                    result.unwrap()
                } else {
                    self.fail(M, "fail", result.unwrap_err());
                    -1
                }
            }
        };
        let mut vars = args.to_vec();
        vars.push(int("return", number));
        self.rec.exit(f, &vars);
        number
    }

    pub fn close_account(&mut self, session: i64, number: i64) -> Result<f64, FtsError> {
        const M: &str = "Bank.closeAccount";
        let f = self
            .rec
            .enter(M, &[int("session", session), int("number", number)]);
        let uid = self.session_user(M, session)?;
        self.owned(M, uid, number)?;
        let acct = self.state.accounts.get_mut(&number).expect("owned");
        let result = account_close(self.rec, acct);
        if !self.rec.branch(M, "closed", result.is_ok()) {
            return Err(self.fail(M, "fail", result.unwrap_err()));
        }
        self.rec.block(M, "ok");
        let refund = result.unwrap();
        self.rec.exit(
            f,
            &[
                int("session", session),
                int("number", number),
                real("return", refund),
            ],
        );
        Ok(refund)
    }

    pub fn deposit(&mut self, session: i64, number: i64, amount: f64) -> Result<f64, FtsError> {
        const M: &str = "Bank.deposit";
        let args = [
            int("session", session),
            int("number", number),
            real("amount", amount),
        ];
        let f = self.rec.enter(M, &args);
        let uid = self.session_user(M, session)?;
        self.owned(M, uid, number)?;
        let acct = self.state.accounts.get_mut(&number).expect("owned");
        let result = account_deposit(self.rec, acct, amount);
        if !self.rec.branch(M, "done", result.is_ok()) {
            return Err(self.fail(M, "fail", result.unwrap_err()));
        }
        self.rec.block(M, "ok");
        let balance = result.unwrap();
        let mut vars = args.to_vec();
        vars.push(real("return", balance));
        self.rec.exit(f, &vars);
        Ok(balance)
    }

    pub fn withdraw(&mut self, session: i64, number: i64, amount: f64) -> Result<f64, FtsError> {
        const M: &str = "Bank.withdraw";
        let args = [
            int("session", session),
            int("number", number),
            real("amount", amount),
        ];
        let f = self.rec.enter(M, &args);
        let uid = self.session_user(M, session)?;
        self.owned(M, uid, number)?;
        self.rec.block(M, "charge");
        let charge = withdrawal_charge(self.rec, self.state.accounts[&number].savings);
        let acct = self.state.accounts.get_mut(&number).expect("owned");
        let result = account_withdraw(self.rec, acct, amount, charge);
        if !self.rec.branch(M, "done", result.is_ok()) {
            return Err(self.fail(M, "fail", result.unwrap_err()));
        }
        self.rec.block(M, "ok");
        let balance = result.unwrap();
        let mut vars = args.to_vec();
        vars.push(real("return", balance));
        self.rec.exit(f, &vars);
        Ok(balance)
    }

    pub fn transfer_local(
        &mut self,
        session: i64,
        from: i64,
        to: i64,
        amount: f64,
    ) -> Result<(), FtsError> {
        const M: &str = "Bank.transferLocal";
        let args = [
            int("session", session),
            int("from", from),
            int("to", to),
            real("amount", amount),
        ];
        let f = self.rec.enter(M, &args);
        let uid = self.session_user(M, session)?;
        self.owned(M, uid, from)?;
        let target_ok = to != from && self.state.accounts.get(&to).is_some_and(|a| a.open);
        if !self.rec.branch(M, "distinct", target_ok) {
            return Err(self.fail(M, "same", FtsError::InvalidAccount));
        }
        let source = self.state.accounts.get_mut(&from).expect("owned");
        let debit = account_withdraw(self.rec, source, amount, 0.0);
        if !self.rec.branch(M, "debited", debit.is_ok()) {
            return Err(self.fail(M, "fail", debit.unwrap_err()));
        }
        self.rec.block(M, "debit");
        let target = self.state.accounts.get_mut(&to).expect("checked");
        account_deposit(self.rec, target, amount).expect("target is open and amount was accepted");
        self.rec.block(M, "credit");
        self.rec.exit(f, &args);
        Ok(())
    }

    pub fn transfer_foreign(
        &mut self,
        session: i64,
        from: i64,
        iban: &str,
        amount: f64,
    ) -> Result<(), FtsError> {
        const M: &str = "Bank.transferForeign";
        let args = [
            int("session", session),
            int("from", from),
            text("iban", iban),
            real("amount", amount),
        ];
        let f = self.rec.enter(M, &args);
        let uid = self.session_user(M, session)?;
        self.owned(M, uid, from)?;
        if !self.rec.branch(M, "iban", iban_is_valid(iban)) {
            return Err(self.fail(M, "bad_iban", FtsError::InvalidIban));
        }
        self.rec.block(M, "charge");
        let charge = foreign_charge(self.rec, self.state.users[&uid].premium);
        let source = self.state.accounts.get_mut(&from).expect("owned");
        let debit = account_withdraw(self.rec, source, amount, charge);
        if !self.rec.branch(M, "debited", debit.is_ok()) {
            return Err(self.fail(M, "fail", debit.unwrap_err()));
        }
        self.rec.block(M, "debit");
        self.rec.exit(f, &args);
        Ok(())
    }

    pub fn balance(&mut self, session: i64, number: i64) -> Result<f64, FtsError> {
        const M: &str = "Bank.balance";
        let f = self
            .rec
            .enter(M, &[int("session", session), int("number", number)]);
        let uid = self.session_user(M, session)?;
        self.owned(M, uid, number)?;
        let balance = self.state.accounts[&number].balance;
        self.rec.block(M, "ok");
        self.rec.exit(
            f,
            &[
                int("session", session),
                int("number", number),
                real("return", balance),
            ],
        );
        Ok(balance)
    }
}
