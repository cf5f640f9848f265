//! Crate-wide error type.

use thiserror::Error;

use crate::shafer::ShaferError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TbmError {
    // --- constraint network ---
    #[error("grain must be a positive tick count")]
    InvalidGrain,
    #[error("a point must belong to at least one overlay")]
    NoOverlay,
    #[error("unknown overlay {0}")]
    UnknownOverlay(u64),
    #[error("unknown point {0}")]
    UnknownPoint(u64),
    #[error("unknown constraint {0}")]
    UnknownConstraint(u64),
    #[error("unknown interval {0}")]
    UnknownInterval(u64),
    #[error("constraint {0} is protected (interval ordering)")]
    ProtectedConstraint(u64),
    #[error("point {point} is not in overlay {overlay}")]
    NotInOverlay { point: u64, overlay: u64 },
    #[error("points {p} and {q} share no overlay")]
    DisjointOverlays { p: u64, q: u64 },
    #[error("range [{lo}, {hi}] is not a satisfiable distance range")]
    InvalidRange { lo: String, hi: String },
    #[error("constraint set is inconsistent")]
    Inconsistent,

    // --- belief store ---
    #[error("pattern is not ground: {0}")]
    NotGround(String),
    #[error("time object {time} is not in overlay {overlay}")]
    TimeNotInOverlay { time: u64, overlay: u64 },
    #[error("unknown belief {0}")]
    UnknownBelief(u64),
    #[error("unknown monitor {0}")]
    UnknownMonitor(u64),
    #[error("an assessor is already registered for head {0:?}")]
    DuplicateAssessor(String),
    #[error("no assessor registered for head {0:?}")]
    NoAssessor(String),
    #[error("dependency edge {from} -> {to} would create a cycle")]
    CyclicDependency { from: u64, to: u64 },
    #[error("transactions cannot nest")]
    NestedTransaction,

    // --- rules ---
    #[error("unknown rule {0}")]
    UnknownRule(u64),
    #[error("variable {0} does not appear in the trigger pattern")]
    VariableRestriction(String),
    #[error("consequent duration must be positive")]
    InvalidDuration,

    // --- evidence calculus ---
    #[error("combination of totally conflicting evidence")]
    TotalConflict,
    #[error("elapsed time may not be negative")]
    NegativeElapsed,
    #[error("evidence components must lie in [0, 1] and sum to at most 1")]
    InvalidStrength,

    // --- parsing ---
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: u32, col: u32, msg: String },
}

impl From<ShaferError> for TbmError {
    fn from(e: ShaferError) -> Self {
        match e {
            ShaferError::TotalConflict => TbmError::TotalConflict,
            ShaferError::NegativeElapsed => TbmError::NegativeElapsed,
            ShaferError::InvalidComponents => TbmError::InvalidStrength,
        }
    }
}
