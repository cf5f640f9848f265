//! Evidence intervals over a binary frame.
//!
//! A `ShaferStrength` carries separate support for and against a single
//! proposition; whatever is left over is uncommitted. Combination follows
//! Dempster's rule restricted to the two-element frame, which makes the
//! normalizing conflict term a simple cross product.

use std::fmt;

use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ShaferError {
    #[error("combination of totally conflicting evidence")]
    TotalConflict,
    #[error("elapsed time may not be negative")]
    NegativeElapsed,
    #[error("components must lie in [0, 1] and sum to at most 1")]
    InvalidComponents,
}

/// Support for and against one proposition; `1 - for - against` stays
/// uncommitted. Components lie in `[0, 1]` and sum to at most `1` (up to a
/// small validation tolerance for accumulated rounding).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShaferStrength<F> {
    support_for: F,
    support_against: F,
}

impl<F: Float> ShaferStrength<F> {
    const VALIDATION_EPS: f64 = 1e-9;

    pub fn new(support_for: F, support_against: F) -> Result<Self, ShaferError> {
        let zero = F::zero();
        let one = F::one();
        let eps = F::from(Self::VALIDATION_EPS).unwrap();
        let in_unit = |x: F| x >= zero && x <= one;
        if !in_unit(support_for)
            || !in_unit(support_against)
            || support_for + support_against > one + eps
        {
            return Err(ShaferError::InvalidComponents);
        }
        Ok(ShaferStrength {
            support_for,
            support_against,
        })
    }

    /// No evidence either way: `[0, 0]`, the combination identity.
    pub fn vacuous() -> Self {
        ShaferStrength {
            support_for: F::zero(),
            support_against: F::zero(),
        }
    }

    pub fn support_for(&self) -> F {
        self.support_for
    }

    pub fn support_against(&self) -> F {
        self.support_against
    }

    /// Mass left uncommitted.
    pub fn residual(&self) -> F {
        F::one() - self.support_for - self.support_against
    }

    /// Dempster combination of two independent bodies of evidence.
    ///
    /// The conflict `k` is the mass assigned to contradictory pairs; the
    /// remainder is renormalized. Total conflict (`k = 1`) has no defined
    /// result and errors.
    pub fn combine(&self, other: &Self) -> Result<Self, ShaferError> {
        let k = self.support_for * other.support_against
            + self.support_against * other.support_for;
        if k >= F::one() {
            return Err(ShaferError::TotalConflict);
        }
        let norm = F::one() - k;
        let rx = self.residual();
        let ry = other.residual();
        let support_for = (self.support_for * other.support_for
            + (self.support_for * ry + other.support_for * rx))
            / norm;
        let support_against = (self.support_against * other.support_against
            + (self.support_against * ry + other.support_against * rx))
            / norm;
        Ok(ShaferStrength {
            support_for,
            support_against,
        })
    }

    /// Evidence for the negated proposition: swap the components.
    pub fn negate(&self) -> Self {
        ShaferStrength {
            support_for: self.support_against,
            support_against: self.support_for,
        }
    }

    fn decay_factor(elapsed: F, lifetime: F) -> Result<F, ShaferError> {
        if elapsed < F::zero() {
            return Err(ShaferError::NegativeElapsed);
        }
        assert!(lifetime > F::zero(), "lifetime must be positive");
        Ok(F::zero().max(F::one() - elapsed / lifetime))
    }

    /// Linear decay of the supporting component only; evidence against is
    /// left standing.
    pub fn decay_support(&self, elapsed: F, lifetime: F) -> Result<Self, ShaferError> {
        let f = Self::decay_factor(elapsed, lifetime)?;
        Ok(ShaferStrength {
            support_for: self.support_for * f,
            support_against: self.support_against,
        })
    }

    /// Linear decay of both components.
    pub fn decay_both(&self, elapsed: F, lifetime: F) -> Result<Self, ShaferError> {
        let f = Self::decay_factor(elapsed, lifetime)?;
        Ok(ShaferStrength {
            support_for: self.support_for * f,
            support_against: self.support_against * f,
        })
    }
}

impl<F: Float + fmt::Display> fmt::Display for ShaferStrength<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.support_for, self.support_against)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(f: f64, a: f64) -> ShaferStrength<f64> {
        ShaferStrength::new(f, a).unwrap()
    }

    #[test]
    fn construction_validates_components() {
        assert!(ShaferStrength::new(0.0f64, 0.0).is_ok());
        assert!(ShaferStrength::new(1.0f64, 0.0).is_ok());
        assert!(ShaferStrength::new(0.6f64, 0.4).is_ok());
        assert_eq!(
            ShaferStrength::new(0.7f64, 0.4),
            Err(ShaferError::InvalidComponents)
        );
        assert_eq!(
            ShaferStrength::new(-0.1f64, 0.0),
            Err(ShaferError::InvalidComponents)
        );
        assert_eq!(
            ShaferStrength::new(1.1f64, 0.0),
            Err(ShaferError::InvalidComponents)
        );
    }

    #[test]
    fn vacuous_is_the_exact_identity() {
        let x = s(0.37, 0.21);
        let id = ShaferStrength::vacuous();
        let c = x.combine(&id).unwrap();
        assert_eq!(c.support_for(), x.support_for());
        assert_eq!(c.support_against(), x.support_against());
        let c = id.combine(&x).unwrap();
        assert_eq!(c.support_for(), x.support_for());
        assert_eq!(c.support_against(), x.support_against());
    }

    #[test]
    fn combination_is_bitwise_commutative() {
        let pairs = [
            (s(0.9, 0.0), s(0.0, 0.9986111111111111)),
            (s(0.3, 0.3), s(0.2, 0.5)),
            (s(0.123, 0.456), s(0.654, 0.321)),
        ];
        for (x, y) in pairs {
            let a = x.combine(&y).unwrap();
            let b = y.combine(&x).unwrap();
            assert_eq!(a.support_for(), b.support_for());
            assert_eq!(a.support_against(), b.support_against());
        }
    }

    #[test]
    fn shooting_combination_reproduces_known_value() {
        let alive = s(0.9, 0.0);
        let lethal = s(0.0, 1.0 - 60.0 / 43200.0);
        let c = alive.combine(&lethal).unwrap();
        assert!((c.support_for() - 1.0 / 81.0).abs() < 1e-12);
        assert!((c.support_against() - 719.0 / 729.0).abs() < 1e-12);
    }

    #[test]
    fn total_conflict_is_an_error() {
        assert_eq!(
            s(1.0, 0.0).combine(&s(0.0, 1.0)),
            Err(ShaferError::TotalConflict)
        );
        // Just short of total conflict still combines.
        assert!(s(1.0, 0.0).combine(&s(0.0, 0.999999)).is_ok());
    }

    #[test]
    fn negate_swaps_and_is_involutive() {
        let x = s(0.3, 0.4);
        assert_eq!(x.negate(), s(0.4, 0.3));
        assert_eq!(x.negate().negate(), x);
    }

    #[test]
    fn negate_commutes_with_combination() {
        let x = s(0.25, 0.5);
        let y = s(0.4, 0.1);
        let a = x.negate().combine(&y.negate()).unwrap();
        let b = x.combine(&y).unwrap().negate();
        assert!((a.support_for() - b.support_for()).abs() < 1e-15);
        assert!((a.support_against() - b.support_against()).abs() < 1e-15);
    }

    #[test]
    fn decay_support_leaves_against_standing() {
        let x = s(0.6, 0.2);
        let d = x.decay_support(129_600.0, 259_200.0).unwrap();
        assert!((d.support_for() - 0.3).abs() < 1e-15);
        assert_eq!(d.support_against(), 0.2);
    }

    #[test]
    fn decay_both_scales_both() {
        let x = s(1.0, 0.0);
        let d = x.decay_both(60.0, 43_200.0).unwrap();
        assert_eq!(d.support_for(), 1.0 - 60.0 / 43_200.0);
        assert_eq!(d.support_against(), 0.0);
    }

    #[test]
    fn decay_at_zero_is_identity_and_clamps_past_lifetime() {
        let x = s(0.8, 0.1);
        let d = x.decay_both(0.0, 100.0).unwrap();
        assert_eq!(d.support_for(), 0.8);
        assert_eq!(d.support_against(), 0.1);
        let d = x.decay_both(100.0, 100.0).unwrap();
        assert_eq!(d.support_for(), 0.0);
        let d = x.decay_both(250.0, 100.0).unwrap();
        assert_eq!(d.support_for(), 0.0);
        assert_eq!(
            x.decay_support(-1.0, 100.0),
            Err(ShaferError::NegativeElapsed)
        );
    }

    #[test]
    fn works_at_single_precision() {
        let x = ShaferStrength::new(0.9f32, 0.0).unwrap();
        let y = ShaferStrength::new(0.0f32, 0.5).unwrap();
        let c = x.combine(&y).unwrap();
        assert!((c.support_for() - 0.45 / 0.55).abs() < 1e-5);
        assert!((c.support_against() - 0.05 / 0.55).abs() < 1e-5);
        assert!(c.support_for() + c.support_against() <= 1.0 + 1e-6);
        let d = x.decay_both(30.0f32, 60.0).unwrap();
        assert!((d.support_for() - 0.45).abs() < 1e-6);
    }

    // Small independent check: combine via explicit mass functions over
    // {yes}, {no}, {either} and renormalize.
    fn mass_combine(x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
        let mx = [x.0, x.1, 1.0 - x.0 - x.1];
        let my = [y.0, y.1, 1.0 - y.0 - y.1];
        let mut out = [0.0f64; 3];
        let mut conflict = 0.0;
        for (i, a) in mx.iter().enumerate() {
            for (j, b) in my.iter().enumerate() {
                let m = a * b;
                match (i, j) {
                    (0, 1) | (1, 0) => conflict += m,
                    (0, _) | (_, 0) => out[0] += m,
                    (1, _) | (_, 1) => out[1] += m,
                    _ => out[2] += m,
                }
            }
        }
        (out[0] / (1.0 - conflict), out[1] / (1.0 - conflict))
    }

    #[test]
    fn matches_mass_function_combination() {
        let cases = [
            ((0.9, 0.0), (0.0, 0.9986111111111111)),
            ((0.5, 0.2), (0.1, 0.3)),
            ((0.0, 0.0), (0.7, 0.2)),
            ((0.33, 0.33), (0.33, 0.33)),
        ];
        for (a, b) in cases {
            let got = s(a.0, a.1).combine(&s(b.0, b.1)).unwrap();
            let (ef, ea) = mass_combine(a, b);
            assert!((got.support_for() - ef).abs() < 1e-12);
            assert!((got.support_against() - ea).abs() < 1e-12);
        }
    }
}
