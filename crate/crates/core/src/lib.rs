// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dynamic invariant inference from execution traces, together with the
//! coverage and precision/recall tooling used to study how test-suite
//! coverage relates to the quality of the mined specification.

pub mod correlation;
pub mod coverage;
pub mod engine;
pub mod eval;
pub mod experiment;
pub mod invariant;
pub mod subject;
pub mod trace;
