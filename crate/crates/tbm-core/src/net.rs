//! Constraint network over time points.
//!
//! Points carry no absolute dates; all temporal knowledge is pairwise
//! distance constraints `dist(from, to) in [lo, hi]`, and every queryable
//! fact is a derived tight range obtained by shortest-path propagation over
//! the constraint graph. Overlays group points and coarsen query answers to
//! a grain; intervals are ordered pairs of points built on a protected
//! ordering constraint.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::TbmError;
use crate::time::{Extended, TickRange, TickScalar};

macro_rules! net_id {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

net_id!(OverlayId);
net_id!(PointId);
net_id!(ConstraintId);
net_id!(IntervalId);

#[derive(Debug, Clone)]
struct Overlay<T> {
    grain: T,
    members: BTreeSet<PointId>,
}

#[derive(Debug, Clone)]
struct Point {
    overlays: BTreeSet<OverlayId>,
}

#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub from: PointId,
    pub to: PointId,
    pub range: TickRange<T>,
    pub protected: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Interval {
    pub begin: PointId,
    pub end: PointId,
    pub ordering: ConstraintId,
}

/// The network: points, overlays, constraints, intervals, and the derived
/// all-pairs upper-bound matrix kept transitively closed at all times.
#[derive(Debug, Clone)]
pub struct TemporalNet<T> {
    next_id: u64,
    overlays: BTreeMap<OverlayId, Overlay<T>>,
    points: BTreeMap<PointId, Point>,
    constraints: BTreeMap<ConstraintId, Constraint<T>>,
    intervals: BTreeMap<IntervalId, Interval>,
    /// Matrix position of each point.
    index: BTreeMap<PointId, usize>,
    /// Point at each matrix position.
    order: Vec<PointId>,
    /// Row-major `n*n` tight upper bounds: `upper[i*n+j]` bounds
    /// `t(order[j]) - t(order[i])` from above.
    upper: Vec<Extended<T>>,
}

impl<T: TickScalar> Default for TemporalNet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: TickScalar> TemporalNet<T> {
    pub fn new() -> Self {
        TemporalNet {
            next_id: 1,
            overlays: BTreeMap::new(),
            points: BTreeMap::new(),
            constraints: BTreeMap::new(),
            intervals: BTreeMap::new(),
            index: BTreeMap::new(),
            order: Vec::new(),
            upper: Vec::new(),
        }
    }

    fn fresh(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    // -----------------------------------------------------------------
    // Overlays and points
    // -----------------------------------------------------------------

    /// New overlay with the given grain size (ticks per reported unit).
    pub fn create_overlay(&mut self, grain: T) -> Result<OverlayId, TbmError> {
        if grain <= T::zero() {
            return Err(TbmError::InvalidGrain);
        }
        let id = OverlayId(self.fresh());
        self.overlays.insert(
            id,
            Overlay {
                grain,
                members: BTreeSet::new(),
            },
        );
        Ok(id)
    }

    /// New point, initially unconstrained, member of every listed overlay.
    pub fn create_point(&mut self, overlays: &[OverlayId]) -> Result<PointId, TbmError> {
        if overlays.is_empty() {
            return Err(TbmError::NoOverlay);
        }
        for ov in overlays {
            if !self.overlays.contains_key(ov) {
                return Err(TbmError::UnknownOverlay(ov.0));
            }
        }
        let id = PointId(self.fresh());
        self.points.insert(
            id,
            Point {
                overlays: overlays.iter().copied().collect(),
            },
        );
        for ov in overlays {
            self.overlays.get_mut(ov).unwrap().members.insert(id);
        }

        // Grow the matrix by one row and column.
        let n = self.order.len();
        let m = n + 1;
        let mut next = vec![Extended::PosInf; m * m];
        for i in 0..n {
            for j in 0..n {
                next[i * m + j] = self.upper[i * n + j];
            }
        }
        next[n * m + n] = Extended::Finite(T::zero());
        self.upper = next;
        self.index.insert(id, n);
        self.order.push(id);
        Ok(id)
    }

    pub fn contains_point(&self, p: PointId) -> bool {
        self.points.contains_key(&p)
    }

    pub fn contains_overlay(&self, ov: OverlayId) -> bool {
        self.overlays.contains_key(&ov)
    }

    pub fn point_overlays(&self, p: PointId) -> Result<&BTreeSet<OverlayId>, TbmError> {
        self.points
            .get(&p)
            .map(|pt| &pt.overlays)
            .ok_or(TbmError::UnknownPoint(p.0))
    }

    pub fn overlay_grain(&self, ov: OverlayId) -> Result<T, TbmError> {
        self.overlays
            .get(&ov)
            .map(|o| o.grain)
            .ok_or(TbmError::UnknownOverlay(ov.0))
    }

    pub fn is_member(&self, p: PointId, ov: OverlayId) -> bool {
        self.points
            .get(&p)
            .map(|pt| pt.overlays.contains(&ov))
            .unwrap_or(false)
    }

    fn shared_overlay_exists(&self, p: PointId, q: PointId) -> bool {
        match (self.points.get(&p), self.points.get(&q)) {
            (Some(a), Some(b)) => a.overlays.intersection(&b.overlays).next().is_some(),
            _ => false,
        }
    }

    /// Lowest-numbered overlay both points belong to.
    pub fn shared_overlay(&self, p: PointId, q: PointId) -> Option<OverlayId> {
        let a = &self.points.get(&p)?.overlays;
        let b = &self.points.get(&q)?.overlays;
        a.intersection(b).next().copied()
    }

    // -----------------------------------------------------------------
    // Constraints
    // -----------------------------------------------------------------

    /// Assert `dist(from, to) in range`, i.e. bound `t(to) - t(from)`.
    ///
    /// Propagation is tentative: if the tightened network would contain an
    /// empty derived range the call errors with `Inconsistent` and the
    /// network is left bit-identical to the state before the call.
    pub fn add_constraint(
        &mut self,
        from: PointId,
        to: PointId,
        range: TickRange<T>,
    ) -> Result<ConstraintId, TbmError> {
        self.add_constraint_inner(from, to, range, false)
    }

    fn add_constraint_inner(
        &mut self,
        from: PointId,
        to: PointId,
        range: TickRange<T>,
        protected: bool,
    ) -> Result<ConstraintId, TbmError> {
        for p in [from, to] {
            if !self.points.contains_key(&p) {
                return Err(TbmError::UnknownPoint(p.0));
            }
        }
        if !self.shared_overlay_exists(from, to) {
            return Err(TbmError::DisjointOverlays { p: from.0, q: to.0 });
        }

        let a = self.index[&from];
        let b = self.index[&to];
        let mut scratch = self.upper.clone();
        if let Extended::Finite(hi) = range.hi() {
            Self::tighten(&mut scratch, self.order.len(), a, b, hi);
        }
        if let Extended::Finite(lo) = range.lo() {
            Self::tighten(&mut scratch, self.order.len(), b, a, -lo);
        }
        let n = self.order.len();
        for i in 0..n {
            if scratch[i * n + i] < Extended::Finite(T::zero()) {
                return Err(TbmError::Inconsistent);
            }
        }

        self.upper = scratch;
        let id = ConstraintId(self.fresh());
        self.constraints.insert(
            id,
            Constraint {
                from,
                to,
                range,
                protected,
            },
        );
        Ok(id)
    }

    /// One incremental closure pass after tightening edge `a -> b` to `w`:
    /// every path may now route through the new edge exactly once.
    fn tighten(upper: &mut [Extended<T>], n: usize, a: usize, b: usize, w: T) {
        let w = Extended::Finite(w);
        if upper[a * n + b] <= w {
            return;
        }
        for i in 0..n {
            let ia = upper[i * n + a];
            if ia == Extended::PosInf {
                continue;
            }
            let head = ia.add(w);
            for j in 0..n {
                let bj = upper[b * n + j];
                if bj == Extended::PosInf {
                    continue;
                }
                let cand = head.add(bj);
                if cand < upper[i * n + j] {
                    upper[i * n + j] = cand;
                }
            }
        }
    }

    /// Remove a previously added constraint and re-derive every range.
    pub fn retract_constraint(&mut self, id: ConstraintId) -> Result<(), TbmError> {
        match self.constraints.get(&id) {
            None => return Err(TbmError::UnknownConstraint(id.0)),
            Some(c) if c.protected => return Err(TbmError::ProtectedConstraint(id.0)),
            Some(_) => {}
        }
        self.constraints.remove(&id);
        self.rebuild();
        Ok(())
    }

    /// Full from-scratch propagation over the stored constraints.
    fn rebuild(&mut self) {
        let n = self.order.len();
        let mut upper = vec![Extended::PosInf; n * n];
        for i in 0..n {
            upper[i * n + i] = Extended::Finite(T::zero());
        }
        for c in self.constraints.values() {
            let a = self.index[&c.from];
            let b = self.index[&c.to];
            if let Extended::Finite(hi) = c.range.hi() {
                if Extended::Finite(hi) < upper[a * n + b] {
                    upper[a * n + b] = Extended::Finite(hi);
                }
            }
            if let Extended::Finite(lo) = c.range.lo() {
                if Extended::Finite(-lo) < upper[b * n + a] {
                    upper[b * n + a] = Extended::Finite(-lo);
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                let ik = upper[i * n + k];
                if ik == Extended::PosInf {
                    continue;
                }
                for j in 0..n {
                    let kj = upper[k * n + j];
                    if kj == Extended::PosInf {
                        continue;
                    }
                    let cand = ik.add(kj);
                    if cand < upper[i * n + j] {
                        upper[i * n + j] = cand;
                    }
                }
            }
        }
        debug_assert!((0..n).all(|i| upper[i * n + i] >= Extended::Finite(T::zero())));
        self.upper = upper;
    }

    pub fn constraint(&self, id: ConstraintId) -> Result<&Constraint<T>, TbmError> {
        self.constraints.get(&id).ok_or(TbmError::UnknownConstraint(id.0))
    }

    // -----------------------------------------------------------------
    // Queries
    // -----------------------------------------------------------------

    /// Tight upper bound on `t(q) - t(p)`.
    pub fn upper_bound(&self, p: PointId, q: PointId) -> Result<Extended<T>, TbmError> {
        let (i, j) = (self.pos(p)?, self.pos(q)?);
        let n = self.order.len();
        Ok(self.upper[i * n + j])
    }

    fn pos(&self, p: PointId) -> Result<usize, TbmError> {
        self.index.get(&p).copied().ok_or(TbmError::UnknownPoint(p.0))
    }

    /// Tightest derivable range for `t(q) - t(p)`, unquantized.
    pub fn tight_distance(&self, p: PointId, q: PointId) -> Result<TickRange<T>, TbmError> {
        let ub = self.upper_bound(p, q)?;
        let lb = self.upper_bound(q, p)?.neg();
        Ok(TickRange::new(lb, ub).expect("consistent network yields nonempty ranges"))
    }

    /// Derived distance as seen through an overlay: the tight range rounded
    /// outward to the overlay's grain. Both points must be members.
    pub fn distance(
        &self,
        p: PointId,
        q: PointId,
        overlay: OverlayId,
    ) -> Result<TickRange<T>, TbmError> {
        let grain = self.overlay_grain(overlay)?;
        for pt in [p, q] {
            if !self.points.contains_key(&pt) {
                return Err(TbmError::UnknownPoint(pt.0));
            }
            if !self.is_member(pt, overlay) {
                return Err(TbmError::NotInOverlay {
                    point: pt.0,
                    overlay: overlay.0,
                });
            }
        }
        Ok(self.tight_distance(p, q)?.quantize(grain))
    }

    /// Whether `p` occurring at or before `q` is consistent with everything
    /// currently constrained, i.e. whether `dist(p, q) >= 0` could still be
    /// asserted.
    pub fn consistent_order(&self, p: PointId, q: PointId) -> Result<bool, TbmError> {
        Ok(self.upper_bound(p, q)? >= Extended::Finite(T::zero()))
    }

    // -----------------------------------------------------------------
    // Intervals
    // -----------------------------------------------------------------

    /// An interval from `begin` to `end`, backed by a protected ordering
    /// constraint `dist(begin, end) >= 0`. Zero length is allowed; an end
    /// provably before its begin is not.
    pub fn create_interval(
        &mut self,
        begin: PointId,
        end: PointId,
    ) -> Result<IntervalId, TbmError> {
        let ordering =
            self.add_constraint_inner(begin, end, TickRange::at_least(T::zero()), true)?;
        let id = IntervalId(self.fresh());
        self.intervals.insert(
            id,
            Interval {
                begin,
                end,
                ordering,
            },
        );
        Ok(id)
    }

    pub fn interval(&self, id: IntervalId) -> Result<Interval, TbmError> {
        self.intervals
            .get(&id)
            .copied()
            .ok_or(TbmError::UnknownInterval(id.0))
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    /// Snapshot of the full derived matrix, for equality checks in tests.
    pub fn derived_matrix(&self) -> Vec<Extended<T>> {
        self.upper.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net1() -> (TemporalNet<i64>, OverlayId) {
        let mut net = TemporalNet::new();
        let ov = net.create_overlay(1).unwrap();
        (net, ov)
    }

    #[test]
    fn grain_must_be_positive() {
        let mut net = TemporalNet::<i64>::new();
        assert_eq!(net.create_overlay(0), Err(TbmError::InvalidGrain));
        assert_eq!(net.create_overlay(-5), Err(TbmError::InvalidGrain));
        assert!(net.create_overlay(60).is_ok());
    }

    #[test]
    fn point_needs_known_overlays() {
        let (mut net, ov) = net1();
        assert_eq!(net.create_point(&[]), Err(TbmError::NoOverlay));
        assert_eq!(
            net.create_point(&[OverlayId(999)]),
            Err(TbmError::UnknownOverlay(999))
        );
        let p = net.create_point(&[ov]).unwrap();
        assert_eq!(
            net.distance(p, p, ov).unwrap(),
            TickRange::bounded(0, 0).unwrap()
        );
    }

    #[test]
    fn unconstrained_points_are_unbounded() {
        let (mut net, ov) = net1();
        let a = net.create_point(&[ov]).unwrap();
        let b = net.create_point(&[ov]).unwrap();
        assert_eq!(net.distance(a, b, ov).unwrap(), TickRange::unbounded());
        assert!(net.consistent_order(a, b).unwrap());
        assert!(net.consistent_order(b, a).unwrap());
    }

    #[test]
    fn chain_composes_and_is_antisymmetric() {
        let (mut net, ov) = net1();
        let a = net.create_point(&[ov]).unwrap();
        let b = net.create_point(&[ov]).unwrap();
        let c = net.create_point(&[ov]).unwrap();
        net.add_constraint(a, b, TickRange::bounded(1, 2).unwrap()).unwrap();
        net.add_constraint(b, c, TickRange::bounded(3, 5).unwrap()).unwrap();
        assert_eq!(net.distance(a, c, ov).unwrap(), TickRange::bounded(4, 7).unwrap());
        assert_eq!(net.distance(c, a, ov).unwrap(), TickRange::bounded(-7, -4).unwrap());
    }

    #[test]
    fn parallel_constraints_intersect() {
        let (mut net, ov) = net1();
        let a = net.create_point(&[ov]).unwrap();
        let b = net.create_point(&[ov]).unwrap();
        net.add_constraint(a, b, TickRange::bounded(0, 10).unwrap()).unwrap();
        net.add_constraint(a, b, TickRange::bounded(5, 20).unwrap()).unwrap();
        assert_eq!(net.distance(a, b, ov).unwrap(), TickRange::bounded(5, 10).unwrap());
    }

    #[test]
    fn inconsistent_add_rolls_back_exactly() {
        let (mut net, ov) = net1();
        let a = net.create_point(&[ov]).unwrap();
        let b = net.create_point(&[ov]).unwrap();
        net.add_constraint(a, b, TickRange::bounded(5, 10).unwrap()).unwrap();
        let before = net.derived_matrix();
        let err = net.add_constraint(b, a, TickRange::bounded(0, 1).unwrap());
        assert_eq!(err.unwrap_err(), TbmError::Inconsistent);
        assert_eq!(net.derived_matrix(), before);
        assert_eq!(net.distance(a, b, ov).unwrap(), TickRange::bounded(5, 10).unwrap());
    }

    #[test]
    fn quantization_follows_overlay_grain() {
        let mut net = TemporalNet::<i64>::new();
        let fine = net.create_overlay(1).unwrap();
        let coarse = net.create_overlay(60).unwrap();
        let a = net.create_point(&[fine, coarse]).unwrap();
        let b = net.create_point(&[fine, coarse]).unwrap();
        net.add_constraint(a, b, TickRange::bounded(30, 250).unwrap()).unwrap();
        assert_eq!(net.distance(a, b, fine).unwrap(), TickRange::bounded(30, 250).unwrap());
        assert_eq!(net.distance(a, b, coarse).unwrap(), TickRange::bounded(0, 300).unwrap());
        // Soundness: the quantized range contains the tight one.
        assert!(net
            .distance(a, b, coarse)
            .unwrap()
            .contains_range(&net.tight_distance(a, b).unwrap()));
    }

    #[test]
    fn membership_is_checked_for_distance() {
        let mut net = TemporalNet::<i64>::new();
        let ov1 = net.create_overlay(1).unwrap();
        let ov2 = net.create_overlay(1).unwrap();
        let a = net.create_point(&[ov1]).unwrap();
        let b = net.create_point(&[ov1, ov2]).unwrap();
        assert_eq!(
            net.distance(a, b, ov2),
            Err(TbmError::NotInOverlay { point: a.0, overlay: ov2.0 })
        );
        assert!(net.distance(a, b, ov1).is_ok());
    }

    #[test]
    fn constraints_need_a_shared_overlay() {
        let mut net = TemporalNet::<i64>::new();
        let ov1 = net.create_overlay(1).unwrap();
        let ov2 = net.create_overlay(1).unwrap();
        let a = net.create_point(&[ov1]).unwrap();
        let b = net.create_point(&[ov2]).unwrap();
        assert_eq!(
            net.add_constraint(a, b, TickRange::bounded(0, 1).unwrap()),
            Err(TbmError::DisjointOverlays { p: a.0, q: b.0 })
        );
    }

    #[test]
    fn order_consistency_reads_the_tight_range() {
        let (mut net, ov) = net1();
        let p = net.create_point(&[ov]).unwrap();
        let q = net.create_point(&[ov]).unwrap();
        net.add_constraint(p, q, TickRange::bounded(-5, -1).unwrap()).unwrap();
        assert!(!net.consistent_order(p, q).unwrap());
        assert!(net.consistent_order(q, p).unwrap());

        let r = net.create_point(&[ov]).unwrap();
        net.add_constraint(p, r, TickRange::bounded(-1, 3).unwrap()).unwrap();
        assert!(net.consistent_order(p, r).unwrap());
        assert!(net.consistent_order(r, p).unwrap());
    }

    #[test]
    fn intervals_enforce_ordering() {
        let (mut net, ov) = net1();
        let b = net.create_point(&[ov]).unwrap();
        let e = net.create_point(&[ov]).unwrap();
        let iv = net.create_interval(b, e).unwrap();
        let got = net.interval(iv).unwrap();
        assert_eq!((got.begin, got.end), (b, e));
        assert!(net.distance(b, e, ov).unwrap().lo() >= Extended::Finite(0));

        // Zero length is fine.
        let z = net.create_point(&[ov]).unwrap();
        assert!(net.create_interval(z, z).is_ok());

        // End provably before begin is not.
        let x = net.create_point(&[ov]).unwrap();
        let y = net.create_point(&[ov]).unwrap();
        net.add_constraint(x, y, TickRange::bounded(-4, -2).unwrap()).unwrap();
        assert_eq!(net.create_interval(x, y), Err(TbmError::Inconsistent));
    }

    #[test]
    fn ordering_constraints_are_protected() {
        let (mut net, ov) = net1();
        let b = net.create_point(&[ov]).unwrap();
        let e = net.create_point(&[ov]).unwrap();
        let iv = net.create_interval(b, e).unwrap();
        let ordering = net.interval(iv).unwrap().ordering;
        assert_eq!(
            net.retract_constraint(ordering),
            Err(TbmError::ProtectedConstraint(ordering.0))
        );
        assert_eq!(
            net.retract_constraint(ConstraintId(4242)),
            Err(TbmError::UnknownConstraint(4242))
        );
    }

    #[test]
    fn retraction_restores_ignorance() {
        let (mut net, ov) = net1();
        let a = net.create_point(&[ov]).unwrap();
        let b = net.create_point(&[ov]).unwrap();
        let c = net.add_constraint(a, b, TickRange::bounded(2, 4).unwrap()).unwrap();
        net.retract_constraint(c).unwrap();
        assert_eq!(net.distance(a, b, ov).unwrap(), TickRange::unbounded());
    }

    #[test]
    fn retraction_keeps_remaining_constraints() {
        let (mut net, ov) = net1();
        let a = net.create_point(&[ov]).unwrap();
        let b = net.create_point(&[ov]).unwrap();
        let first = net.add_constraint(a, b, TickRange::bounded(0, 10).unwrap()).unwrap();
        net.add_constraint(a, b, TickRange::bounded(5, 20).unwrap()).unwrap();
        net.retract_constraint(first).unwrap();
        assert_eq!(net.distance(a, b, ov).unwrap(), TickRange::bounded(5, 20).unwrap());
    }

    #[test]
    fn half_infinite_constraints_propagate() {
        let (mut net, ov) = net1();
        let a = net.create_point(&[ov]).unwrap();
        let b = net.create_point(&[ov]).unwrap();
        let c = net.create_point(&[ov]).unwrap();
        net.add_constraint(a, b, TickRange::at_least(3)).unwrap();
        net.add_constraint(b, c, TickRange::at_least(4)).unwrap();
        let d = net.distance(a, c, ov).unwrap();
        assert_eq!(d.lo(), Extended::Finite(7));
        assert_eq!(d.hi(), Extended::PosInf);
    }

    #[test]
    fn self_constraint_must_admit_zero() {
        let (mut net, ov) = net1();
        let p = net.create_point(&[ov]).unwrap();
        assert!(net.add_constraint(p, p, TickRange::bounded(-1, 2).unwrap()).is_ok());
        assert_eq!(
            net.add_constraint(p, p, TickRange::bounded(1, 2).unwrap()),
            Err(TbmError::Inconsistent)
        );
    }

    #[test]
    fn works_on_narrower_scalars() {
        let mut net = TemporalNet::<i32>::new();
        let ov = net.create_overlay(10).unwrap();
        let a = net.create_point(&[ov]).unwrap();
        let b = net.create_point(&[ov]).unwrap();
        net.add_constraint(a, b, TickRange::bounded(12, 25).unwrap()).unwrap();
        assert_eq!(net.distance(a, b, ov).unwrap(), TickRange::bounded(10, 30).unwrap());
    }
}
