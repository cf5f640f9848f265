//! Tick arithmetic for the constraint network.
//!
//! Times are signed integer ticks extended with two infinities. A `TickRange`
//! is a closed interval of possible distances between two time points; the
//! network stores and derives these, and overlays coarsen them to a grain.

use std::fmt;

use num_traits::{CheckedAdd, Euclid, PrimInt, Signed};

use crate::error::TbmError;

/// Integer scalar usable as a tick count.
///
/// Implemented for the built-in signed integer widths; the engine fixes
/// `i64` (see the crate-root `Tick` alias) but the network itself does not
/// care which width it runs on.
pub trait TickScalar:
    PrimInt + Signed + CheckedAdd + Euclid + fmt::Debug + fmt::Display + Default + 'static
{
}

impl<T> TickScalar for T where
    T: PrimInt + Signed + CheckedAdd + Euclid + fmt::Debug + fmt::Display + Default + 'static
{
}

// ---------------------------------------------------------------------------
// Extended ticks
// ---------------------------------------------------------------------------

/// A tick count extended with `-inf` and `+inf`.
///
/// The derived `Ord` relies on the variant order: `NegInf < Finite < PosInf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Extended<T> {
    NegInf,
    Finite(T),
    PosInf,
}

impl<T: TickScalar> Extended<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Extended::Finite(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    /// Sum of two extended ticks. `NegInf + PosInf` has no meaning here and
    /// is a caller bug; path accumulation must skip `PosInf` legs instead.
    pub fn add(self, other: Self) -> Self {
        use Extended::*;
        match (self, other) {
            (Finite(a), Finite(b)) => Finite(a.checked_add(&b).expect("tick overflow")),
            (PosInf, NegInf) | (NegInf, PosInf) => {
                unreachable!("adding opposite infinities")
            }
            (PosInf, _) | (_, PosInf) => PosInf,
            (NegInf, _) | (_, NegInf) => NegInf,
        }
    }

    pub fn neg(self) -> Self {
        match self {
            Extended::NegInf => Extended::PosInf,
            Extended::PosInf => Extended::NegInf,
            Extended::Finite(t) => Extended::Finite(-t),
        }
    }

    /// Round down to a multiple of `grain` (identity on infinities).
    pub fn floor_to(self, grain: T) -> Self {
        match self {
            Extended::Finite(t) => Extended::Finite(t.div_euclid(&grain) * grain),
            inf => inf,
        }
    }

    /// Round up to a multiple of `grain` (identity on infinities).
    pub fn ceil_to(self, grain: T) -> Self {
        match self {
            Extended::Finite(t) => {
                let q = (-t).div_euclid(&grain);
                Extended::Finite(-(q * grain))
            }
            inf => inf,
        }
    }
}

impl<T: fmt::Display> fmt::Display for Extended<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::NegInf => write!(f, "-inf"),
            Extended::PosInf => write!(f, "+inf"),
            Extended::Finite(t) => write!(f, "{t}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Ranges
// ---------------------------------------------------------------------------

/// A closed interval `[lo, hi]` of tick distances; endpoints may be infinite.
///
/// Construction rejects `lo > hi`, and also `lo = +inf` or `hi = -inf`: those
/// shapes denote an empty set of reals, i.e. a constraint nothing satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TickRange<T> {
    lo: Extended<T>,
    hi: Extended<T>,
}

impl<T: TickScalar> TickRange<T> {
    pub fn new(lo: Extended<T>, hi: Extended<T>) -> Result<Self, TbmError> {
        if lo > hi || lo == Extended::PosInf || hi == Extended::NegInf {
            return Err(TbmError::InvalidRange {
                lo: lo.to_string(),
                hi: hi.to_string(),
            });
        }
        Ok(TickRange { lo, hi })
    }

    /// Finite range `[lo, hi]`.
    pub fn bounded(lo: T, hi: T) -> Result<Self, TbmError> {
        Self::new(Extended::Finite(lo), Extended::Finite(hi))
    }

    /// The exact range `[t, t]`.
    pub fn exactly(t: T) -> Self {
        TickRange {
            lo: Extended::Finite(t),
            hi: Extended::Finite(t),
        }
    }

    /// `[-inf, +inf]`: no information.
    pub fn unbounded() -> Self {
        TickRange {
            lo: Extended::NegInf,
            hi: Extended::PosInf,
        }
    }

    /// `[lo, +inf]`.
    pub fn at_least(lo: T) -> Self {
        TickRange {
            lo: Extended::Finite(lo),
            hi: Extended::PosInf,
        }
    }

    pub fn lo(&self) -> Extended<T> {
        self.lo
    }

    pub fn hi(&self) -> Extended<T> {
        self.hi
    }

    pub fn contains(&self, t: Extended<T>) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn contains_range(&self, other: &Self) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Outward quantization: floor the lower bound and ceil the upper bound
    /// to multiples of `grain`. The result always contains `self`.
    pub fn quantize(&self, grain: T) -> Self {
        TickRange {
            lo: self.lo.floor_to(grain),
            hi: self.hi.ceil_to(grain),
        }
    }
}

impl<T: TickScalar> fmt::Display for TickRange<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
