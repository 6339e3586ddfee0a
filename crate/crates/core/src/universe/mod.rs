//! Point-in-time index membership and universe set algebra.
//!
//! Three base indexes exist: F (token `50`), H (`100`) and T (`200`).
//! Derived universes such as `200-100+50` are evaluated at a date by taking each base index's
//! members on that date and applying the set operators, always inside T.

mod expr;
mod membership;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{parse_universe, UniverseExpr};
pub(crate) use membership::intervals_from_runs;
pub use membership::{
    load_membership, MembershipCalendar, MembershipInterval, NestingViolation, MEMBERSHIP_HEADER, OPEN_END,
};

/// The three indexes and their four standard subuniverses.
pub const STANDARD_UNIVERSES: [&str; 7] = ["200", "100", "50", "200-50", "200-100", "200-100+50", "100-50"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IndexId {
    /// Top 50 by market cap (`50`).
    F,
    /// Top 100, sector diversified (`100`).
    H,
    /// Full 200-name pool (`200`).
    T,
}

impl IndexId {
    pub const ALL: [IndexId; 3] = [IndexId::F, IndexId::H, IndexId::T];

    pub fn token(self) -> &'static str {
        match self {
            IndexId::F => "50",
            IndexId::H => "100",
            IndexId::T => "200",
        }
    }
}

impl fmt::Display for IndexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for IndexId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "50" => Ok(IndexId::F),
            "100" => Ok(IndexId::H),
            "200" => Ok(IndexId::T),
            other => Err(format!("unknown index token `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UniverseError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown index token `{token}` at position {position} (expected 50, 100 or 200)")]
    UnknownIndexToken { position: usize, token: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed membership row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("unknown instrument `{instrument}` in membership (line {line})")]
    UnknownInstrument { line: u64, instrument: String },
    #[error("interval end {end} before start {start} (line {line})")]
    EndBeforeStart {
        line: u64,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error("overlapping membership intervals for {instrument} in index {index}")]
    OverlappingInterval { index: IndexId, instrument: String },
}
