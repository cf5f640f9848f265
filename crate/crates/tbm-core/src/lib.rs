//! Temporal belief maintenance: a belief store whose instances are scoped
//! to points and intervals of a metric constraint network, with
//! evidential strengths, monitors, dependency signalling, lazily firing
//! causal rules, and a reference calculus for decaying evidence.
//!
//! The layers, bottom up:
//!
//! - [`time`]: extended tick arithmetic and `[lo, hi]` ranges, generic
//!   over the signed integer tick type.
//! - [`net`]: the constraint network. Points live in overlays (each with
//!   a grain); pairwise distance constraints keep an all-pairs tight
//!   bound matrix transitively closed, incrementally on add and by full
//!   rebuild on retract. Inconsistent additions fail without effect.
//! - [`shafer`]: two-component evidential strengths — support for and
//!   against — with combination, negation, and linear decay.
//! - [`sexpr`] / [`pattern`]: the surface syntax and ground/variable
//!   patterns with matching and unification.
//! - [`engine`]: the store itself — belief instances, fetch, assess,
//!   monitors, transactions with exact rollback, and the dependency
//!   graph that routes change signals.
//! - [`rules`]: lazy causal rules driven by fetches, with firing records,
//!   declined-firing retry, and consequent regeneration.
//! - [`calculus`]: the reference assessors and generators for decaying
//!   observations (persistence with a linear survival model).
//!
//! The engine is generic over the strength type and never interprets it;
//! the type aliases at the crate root fix the concrete desk setup: `i64`
//! ticks and `f64` evidential strengths.

pub mod calculus;
pub mod deps;
pub mod engine;
pub mod error;
pub mod net;
pub mod pattern;
pub mod rules;
pub mod sexpr;
pub mod shafer;
pub mod testkit;
pub mod time;

pub use deps::{BeliefId, DepGraph, DistanceId, FiringId, MonitorId, NodeId, RuleId};
pub use engine::{
    AssessCtx, AssessorFn, BeliefDraft, BeliefInstance, Change, DependencyChange,
    DistanceStrengthFn, MonitorFire, MonitorHook, MonitorSpec, Provenance, SignalFn, Source,
    Stats, StrengthLike, Tbm, TimeRef, TraceEvent, WindowSpec,
};
pub use error::TbmError;
pub use net::{Constraint, ConstraintId, Interval, IntervalId, OverlayId, PointId, TemporalNet};
pub use pattern::{Bindings, Pattern};
pub use rules::{CausalRule, FiringInput, FiringOutcome, FiringRecord, GeneratorFn, GeneratorOutcome};
pub use shafer::{ShaferError, ShaferStrength};
pub use time::{Extended, TickRange, TickScalar};

/// Concrete tick type for the desk setup.
pub type Tick = i64;
/// Concrete strength type for the desk setup.
pub type Shafer = ShaferStrength<f64>;
/// Concrete range type for the desk setup.
pub type Range = TickRange<Tick>;
