//! Argument parsing helpers for the `newton-chaos` binary.

// Negated comparisons are used so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod spec;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const HYPOTHESES: i32 = 3;
    pub const CERTIFICATION: i32 = 4;
}

/// Version of the `--json` output layout.
pub const SCHEMA_VERSION: u32 = 1;
