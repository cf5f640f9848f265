//! The belief store: temporally scoped belief instances over a constraint
//! network, with monitors, dependency signalling, and transactions.
//!
//! All mutation happens inside a transaction. Public mutating operations
//! called outside one are wrapped in their own; hooks run synchronously on
//! the committing thread and see tentative state. A failed transaction
//! restores the engine to its pre-transaction snapshot exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

use crate::deps::{BeliefId, DepGraph, DistanceId, FiringId, MonitorId, NodeId, RuleId};
use crate::error::TbmError;
use crate::net::{ConstraintId, IntervalId, OverlayId, PointId, TemporalNet};
use crate::pattern::{Bindings, Pattern};
use crate::rules::{CausalRule, FiringRecord};
use crate::time::Extended;
use crate::{Range, Tick};

/// Belief strengths are opaque to the engine: anything cloneable and
/// comparable for change detection works.
pub trait StrengthLike: Clone + PartialEq + fmt::Debug + 'static {}
impl<T: Clone + PartialEq + fmt::Debug + 'static> StrengthLike for T {}

/// When a belief holds: at a point, or over an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TimeRef {
    Point(PointId),
    Interval(IntervalId),
}

/// How an instance came to be believed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observation,
    Assessment,
}

/// Which machinery created an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Asserted directly through the public interface.
    App,
    /// Created by a registered assessor.
    Assessor,
    /// Asserted as the consequent of a rule firing.
    Consequent(FiringId),
}

/// A temporal window: `[start - lead, end]`, where `start` and `end` are
/// network points and `lead` widens the window into the past.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Window {
    pub start: PointId,
    pub end: PointId,
    pub lead: Tick,
}

/// Signal hook: runs when one of the belief's dependencies changes.
pub type SignalFn<S> =
    Rc<dyn Fn(&mut Tbm<S>, BeliefId, &[DependencyChange<S>]) -> Result<(), TbmError>>;

/// Monitor hook: runs when a newly asserted instance matches the monitor.
pub type MonitorHook<S> = Rc<dyn Fn(&mut Tbm<S>, &MonitorFire<S>) -> Result<(), TbmError>>;

/// Assessor: computes a fresh summary judgment for a ground pattern at a
/// point, returning the draft the engine installs.
pub type AssessorFn<S> = Rc<dyn Fn(&mut Tbm<S>, &AssessCtx) -> Result<BeliefDraft<S>, TbmError>>;

/// Maps a derived distance estimate plus the queried range to a strength.
pub type DistanceStrengthFn<S> = Rc<dyn Fn(&Range, &Range) -> S>;

/// One belief instance.
#[derive(Clone)]
pub struct BeliefInstance<S: StrengthLike> {
    id: BeliefId,
    pattern: Pattern,
    duration: TimeRef,
    strength: S,
    provenance: Provenance,
    source: Source,
    overlays: BTreeSet<OverlayId>,
    signal: Option<SignalFn<S>>,
}

impl<S: StrengthLike> BeliefInstance<S> {
    pub fn id(&self) -> BeliefId {
        self.id
    }
    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }
    pub fn duration(&self) -> TimeRef {
        self.duration
    }
    pub fn strength(&self) -> &S {
        &self.strength
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    pub fn source(&self) -> Source {
        self.source
    }
    pub fn overlays(&self) -> &BTreeSet<OverlayId> {
        &self.overlays
    }
}

impl<S: StrengthLike> fmt::Debug for BeliefInstance<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BeliefInstance")
            .field("id", &self.id)
            .field("pattern", &self.pattern.to_string())
            .field("duration", &self.duration)
            .field("strength", &self.strength)
            .field("provenance", &self.provenance)
            .finish_non_exhaustive()
    }
}

#[derive(Clone)]
enum MonitorAction<S: StrengthLike> {
    Hook(MonitorHook<S>),
    FireRule(RuleId),
    NotifyDependents,
}

#[derive(Clone)]
struct Monitor<S: StrengthLike> {
    pattern: Pattern,
    window: Window,
    overlays: BTreeSet<OverlayId>,
    action: MonitorAction<S>,
    owner: Option<BeliefId>,
}

/// What a monitor hook receives when it fires.
pub struct MonitorFire<S: StrengthLike> {
    pub monitor: MonitorId,
    pub belief: BeliefId,
    pub instance: BeliefInstance<S>,
    pub bindings: Bindings,
}

/// A monitor requested by an assessor; the engine owns its lifecycle and
/// wires it into the assessment's dependencies.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MonitorSpec {
    pub pattern: Pattern,
    pub window: WindowSpec,
    pub overlays: BTreeSet<OverlayId>,
}

/// Public window description for monitor specs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WindowSpec {
    Interval(IntervalId),
    Lookback { end: PointId, lead: Tick },
}

/// Input handed to an assessor.
#[derive(Debug, Clone)]
pub struct AssessCtx {
    pub pattern: Pattern,
    pub at: PointId,
    pub overlays: BTreeSet<OverlayId>,
    /// Present when re-running for an existing assessment instance.
    pub refresh_of: Option<BeliefId>,
}

/// What an assessor returns: the strength plus the wiring the engine
/// installs on the assessment instance.
pub struct BeliefDraft<S: StrengthLike> {
    pub strength: S,
    pub depends_on: BTreeSet<NodeId>,
    pub monitors: Vec<MonitorSpec>,
    pub signal: Option<SignalFn<S>>,
}

impl<S: StrengthLike> BeliefDraft<S> {
    pub fn new(strength: S) -> Self {
        Self {
            strength,
            depends_on: BTreeSet::new(),
            monitors: Vec::new(),
            signal: None,
        }
    }
}

/// One observed change to a dependency, as delivered to signal hooks.
#[derive(Debug, Clone)]
pub struct DependencyChange<S: StrengthLike> {
    pub node: NodeId,
    pub change: Change<S>,
}

#[derive(Debug, Clone)]
pub enum Change<S: StrengthLike> {
    Strength { old: S, new: S },
    Estimate { old: Range, new: Range },
    MonitorMatched { instance: BeliefId },
    MonitorRemoved,
    ConstraintRetracted,
}

/// Observational counters and event log; not rolled back on abort.
#[derive(Debug, Clone, Default)]
pub struct Stats {
    pub generator_calls: BTreeMap<RuleId, u64>,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    MonitorFired {
        monitor: MonitorId,
        belief: BeliefId,
    },
    Fired {
        rule: RuleId,
        rule_name: String,
        trigger: BeliefId,
        consequent: BeliefId,
    },
    Declined {
        rule: RuleId,
        rule_name: String,
        trigger: BeliefId,
    },
    Retried {
        rule: RuleId,
        trigger: BeliefId,
    },
    Signaled {
        node: NodeId,
    },
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::MonitorFired { monitor, belief } => {
                write!(f, "monitor {monitor} fired for belief {belief}")
            }
            TraceEvent::Fired {
                rule_name,
                trigger,
                consequent,
                ..
            } => write!(
                f,
                "rule {rule_name} fired for trigger {trigger} -> belief {consequent}"
            ),
            TraceEvent::Declined {
                rule_name, trigger, ..
            } => write!(f, "rule {rule_name} declined for trigger {trigger}"),
            TraceEvent::Retried { rule, trigger } => {
                write!(f, "rule {rule} retried for trigger {trigger}")
            }
            TraceEvent::Signaled { node } => write!(f, "signalled {node}"),
        }
    }
}

#[derive(Clone)]
struct DistWatch {
    p: PointId,
    q: PointId,
    overlay: OverlayId,
    last: Range,
}

#[derive(Clone)]
pub(crate) struct EngineState<S: StrengthLike> {
    pub(crate) net: TemporalNet<Tick>,
    next_id: u64,
    pub(crate) beliefs: BTreeMap<BeliefId, BeliefInstance<S>>,
    monitors: BTreeMap<MonitorId, Monitor<S>>,
    pub(crate) rules: BTreeMap<RuleId, CausalRule<S>>,
    pub(crate) firings: BTreeMap<FiringId, FiringRecord>,
    pub(crate) firing_by_trigger: BTreeMap<(RuleId, BeliefId), FiringId>,
    trigger_monitor_keys: BTreeSet<(RuleId, PointId, PointId, Tick, String)>,
    assessors: BTreeMap<String, AssessorFn<S>>,
    assessment_index: BTreeMap<(String, PointId), BeliefId>,
    pub(crate) deps: DepGraph,
    dist_watch: BTreeMap<DistanceId, DistWatch>,
    dist_by_pair: BTreeMap<(PointId, PointId, OverlayId), DistanceId>,
}

struct Txn<S: StrengthLike> {
    snapshot: Box<EngineState<S>>,
    pending_beliefs: Vec<BeliefId>,
    pending_signals: Vec<(NodeId, DependencyChange<S>)>,
    fired_pairs: BTreeSet<(MonitorId, BeliefId)>,
    signaled: BTreeSet<NodeId>,
}

const COMMIT_ROUND_CAP: usize = 100_000;

/// The engine. Generic over the strength type, which it never interprets.
pub struct Tbm<S: StrengthLike> {
    pub(crate) state: EngineState<S>,
    txn: Option<Txn<S>>,
    pub(crate) firing_stack: Vec<RuleId>,
    pub(crate) stats: Stats,
}

impl<S: StrengthLike> Default for Tbm<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: StrengthLike> Tbm<S> {
    pub fn new() -> Self {
        Tbm {
            state: EngineState {
                net: TemporalNet::new(),
                next_id: 1,
                beliefs: BTreeMap::new(),
                monitors: BTreeMap::new(),
                rules: BTreeMap::new(),
                firings: BTreeMap::new(),
                firing_by_trigger: BTreeMap::new(),
                trigger_monitor_keys: BTreeSet::new(),
                assessors: BTreeMap::new(),
                assessment_index: BTreeMap::new(),
                deps: DepGraph::new(),
                dist_watch: BTreeMap::new(),
                dist_by_pair: BTreeMap::new(),
            },
            txn: None,
            firing_stack: Vec::new(),
            stats: Stats::default(),
        }
    }

    pub(crate) fn fresh_id(&mut self) -> u64 {
        let id = self.state.next_id;
        self.state.next_id += 1;
        id
    }

    // ------------------------------------------------------------------
    // Transactions

    pub fn in_transaction(&self) -> bool {
        self.txn.is_some()
    }

    /// Run `body` atomically: mutations buffer their consequences, which
    /// settle at commit (monitor fires, then dependency signals, repeated
    /// until quiescent). Any error rolls the whole engine back.
    pub fn transaction<R>(
        &mut self,
        body: impl FnOnce(&mut Self) -> Result<R, TbmError>,
    ) -> Result<R, TbmError> {
        if self.txn.is_some() {
            return Err(TbmError::NestedTransaction);
        }
        self.txn = Some(Txn {
            snapshot: Box::new(self.state.clone()),
            pending_beliefs: Vec::new(),
            pending_signals: Vec::new(),
            fired_pairs: BTreeSet::new(),
            signaled: BTreeSet::new(),
        });
        let result = body(self).and_then(|r| self.commit().map(|()| r));
        let txn = self.txn.take().expect("transaction still open");
        match result {
            Ok(r) => Ok(r),
            Err(e) => {
                self.state = *txn.snapshot;
                self.firing_stack.clear();
                Err(e)
            }
        }
    }

    /// Run inside the current transaction, or wrap in a fresh one.
    pub(crate) fn with_txn<R>(
        &mut self,
        f: impl FnOnce(&mut Self) -> Result<R, TbmError>,
    ) -> Result<R, TbmError> {
        if self.txn.is_some() {
            f(self)
        } else {
            self.transaction(f)
        }
    }

    fn txn_mut(&mut self) -> &mut Txn<S> {
        self.txn.as_mut().expect("mutation outside transaction")
    }

    /// Record a change on `node` for every current dependent.
    pub(crate) fn enqueue_change(&mut self, node: NodeId, change: Change<S>) {
        let dependents = self.state.deps.dependents_of(node);
        let txn = self.txn_mut();
        for d in dependents {
            txn.pending_signals.push((
                d,
                DependencyChange {
                    node,
                    change: change.clone(),
                },
            ));
        }
    }

    fn commit(&mut self) -> Result<(), TbmError> {
        for _ in 0..COMMIT_ROUND_CAP {
            {
                let txn = self.txn.as_ref().expect("commit inside transaction");
                if txn.pending_beliefs.is_empty() && txn.pending_signals.is_empty() {
                    return Ok(());
                }
            }

            // Monitor phase: match instances asserted since the last round
            // against monitors that predate them.
            let pending = std::mem::take(&mut self.txn_mut().pending_beliefs);
            let mut fires: Vec<(MonitorId, BeliefId, Bindings)> = Vec::new();
            for &bid in &pending {
                let Some(inst) = self.state.beliefs.get(&bid) else {
                    continue;
                };
                for (&mid, mon) in &self.state.monitors {
                    if mid.0 >= bid.0 {
                        continue;
                    }
                    if let Some(bindings) = self.matches_monitor(mon, inst)? {
                        fires.push((mid, bid, bindings));
                    }
                }
            }
            fires.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
            for (mid, bid, bindings) in fires {
                if !self.txn_mut().fired_pairs.insert((mid, bid)) {
                    continue;
                }
                let Some(mon) = self.state.monitors.get(&mid).cloned() else {
                    continue;
                };
                let Some(inst) = self.state.beliefs.get(&bid).cloned() else {
                    continue;
                };
                self.stats.trace.push(TraceEvent::MonitorFired {
                    monitor: mid,
                    belief: bid,
                });
                match mon.action.clone() {
                    MonitorAction::Hook(h) => {
                        let fire = MonitorFire {
                            monitor: mid,
                            belief: bid,
                            instance: inst,
                            bindings,
                        };
                        h(self, &fire)?;
                    }
                    MonitorAction::FireRule(rid) => {
                        self.fire_rule_for_monitor(rid, bid, mon.window)?;
                    }
                    MonitorAction::NotifyDependents => {}
                }
                self.enqueue_change(NodeId::Monitor(mid), Change::MonitorMatched { instance: bid });
            }

            // Signal phase: deliver buffered changes, each node at most once
            // per transaction, dependencies before dependents.
            let signals = std::mem::take(&mut self.txn_mut().pending_signals);
            let mut grouped: BTreeMap<NodeId, Vec<DependencyChange<S>>> = BTreeMap::new();
            {
                let txn = self.txn.as_ref().expect("commit inside transaction");
                for (dependent, change) in signals {
                    if txn.signaled.contains(&dependent) {
                        continue;
                    }
                    grouped.entry(dependent).or_default().push(change);
                }
            }
            let pos = self.state.deps.topo_positions();
            let mut order: Vec<NodeId> = grouped.keys().copied().collect();
            order.sort_by_key(|n| (pos.get(n).copied().unwrap_or(usize::MAX), *n));
            for node in order {
                let changes = grouped.remove(&node).expect("grouped by key");
                self.txn_mut().signaled.insert(node);
                self.stats.trace.push(TraceEvent::Signaled { node });
                self.dispatch_signal(node, &changes)?;
            }
        }
        panic!("belief maintenance failed to quiesce after {COMMIT_ROUND_CAP} rounds");
    }

    fn dispatch_signal(
        &mut self,
        node: NodeId,
        changes: &[DependencyChange<S>],
    ) -> Result<(), TbmError> {
        match node {
            NodeId::Belief(b) => {
                let hook = self.state.beliefs.get(&b).and_then(|i| i.signal.clone());
                if let Some(h) = hook {
                    h(self, b, changes)?;
                }
                Ok(())
            }
            NodeId::Firing(f) => self.retry_firing(f),
            _ => Ok(()),
        }
    }

    // ------------------------------------------------------------------
    // Temporal layer passthroughs

    pub fn create_overlay(&mut self, grain: Tick) -> Result<OverlayId, TbmError> {
        self.with_txn(|t| t.state.net.create_overlay(grain))
    }

    pub fn create_point(&mut self, overlays: &[OverlayId]) -> Result<PointId, TbmError> {
        self.with_txn(|t| t.state.net.create_point(overlays))
    }

    pub fn add_constraint(
        &mut self,
        from: PointId,
        to: PointId,
        range: Range,
    ) -> Result<ConstraintId, TbmError> {
        self.with_txn(|t| {
            let id = t.state.net.add_constraint(from, to, range)?;
            t.sync_distance_watches();
            Ok(id)
        })
    }

    pub fn retract_constraint(&mut self, id: ConstraintId) -> Result<(), TbmError> {
        self.with_txn(|t| {
            t.state.net.retract_constraint(id)?;
            t.enqueue_change(NodeId::Constraint(id), Change::ConstraintRetracted);
            t.state.deps.remove_node(NodeId::Constraint(id));
            t.sync_distance_watches();
            Ok(())
        })
    }

    pub fn create_interval(&mut self, begin: PointId, end: PointId) -> Result<IntervalId, TbmError> {
        self.with_txn(|t| {
            let id = t.state.net.create_interval(begin, end)?;
            t.sync_distance_watches();
            Ok(id)
        })
    }

    /// Read-only view of the temporal network.
    pub fn net(&self) -> &TemporalNet<Tick> {
        &self.state.net
    }

    /// Re-derive every watched distance estimate and signal changed ones.
    fn sync_distance_watches(&mut self) {
        let mut updates = Vec::new();
        for (&did, w) in &self.state.dist_watch {
            let now = self
                .state
                .net
                .distance(w.p, w.q, w.overlay)
                .expect("watched points stay in their overlay");
            if now != w.last {
                updates.push((did, w.last, now));
            }
        }
        for (did, old, new) in updates {
            self.state.dist_watch.get_mut(&did).expect("just seen").last = new;
            self.enqueue_change(NodeId::Distance(did), Change::Estimate { old, new });
        }
    }

    // ------------------------------------------------------------------
    // Window feasibility

    pub(crate) fn resolve_window(&self, spec: &WindowSpec) -> Result<Window, TbmError> {
        match *spec {
            WindowSpec::Interval(iv) => {
                let i = self.state.net.interval(iv)?;
                Ok(Window {
                    start: i.begin,
                    end: i.end,
                    lead: 0,
                })
            }
            WindowSpec::Lookback { end, lead } => Ok(Window {
                start: end,
                end,
                lead,
            }),
        }
    }

    /// Whether the duration can still intersect the window, judged from the
    /// tight bounds alone.
    pub(crate) fn window_meets(&self, duration: &TimeRef, w: &Window) -> Result<bool, TbmError> {
        let (ib, ie) = match *duration {
            TimeRef::Point(p) => (p, p),
            TimeRef::Interval(iv) => {
                let i = self.state.net.interval(iv)?;
                (i.begin, i.end)
            }
        };
        Ok(self.state.net.upper_bound(ib, w.end)? >= Extended::Finite(0)
            && self.state.net.upper_bound(w.start, ie)? >= Extended::Finite(-w.lead))
    }

    /// Whether a trigger point can lie inside both the window and the
    /// rule's activity interval.
    pub(crate) fn point_in_active(
        &self,
        t: PointId,
        active: IntervalId,
        w: &Window,
    ) -> Result<bool, TbmError> {
        let iv = self.state.net.interval(active)?;
        let zero = Extended::Finite(0);
        Ok(self.state.net.upper_bound(iv.begin, t)? >= zero
            && self.state.net.upper_bound(t, iv.end)? >= zero
            && self.state.net.upper_bound(iv.begin, w.end)? >= zero
            && self.state.net.upper_bound(w.start, iv.end)? >= Extended::Finite(-w.lead))
    }

    fn matches_monitor(
        &self,
        mon: &Monitor<S>,
        inst: &BeliefInstance<S>,
    ) -> Result<Option<Bindings>, TbmError> {
        if mon.overlays.intersection(&inst.overlays).next().is_none() {
            return Ok(None);
        }
        let Some(bindings) = mon.pattern.match_ground(&inst.pattern) else {
            return Ok(None);
        };
        if !self.window_meets(&inst.duration, &mon.window)? {
            return Ok(None);
        }
        Ok(Some(bindings))
    }

    // ------------------------------------------------------------------
    // Beliefs

    pub fn assert_belief(
        &mut self,
        pattern: &Pattern,
        at: TimeRef,
        strength: S,
        provenance: Provenance,
        overlays: &BTreeSet<OverlayId>,
    ) -> Result<BeliefId, TbmError> {
        let pattern = pattern.clone();
        let overlays = overlays.clone();
        self.with_txn(move |t| {
            t.insert_belief(
                pattern,
                at,
                strength,
                provenance,
                Source::App,
                overlays,
                BTreeSet::new(),
                None,
            )
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn insert_belief(
        &mut self,
        pattern: Pattern,
        at: TimeRef,
        strength: S,
        provenance: Provenance,
        source: Source,
        overlays: BTreeSet<OverlayId>,
        deps: BTreeSet<NodeId>,
        signal: Option<SignalFn<S>>,
    ) -> Result<BeliefId, TbmError> {
        if !pattern.is_ground() {
            return Err(TbmError::NotGround(pattern.to_string()));
        }
        let points: Vec<PointId> = match at {
            TimeRef::Point(p) => {
                if !self.state.net.contains_point(p) {
                    return Err(TbmError::UnknownPoint(p.0));
                }
                vec![p]
            }
            TimeRef::Interval(iv) => {
                let i = self.state.net.interval(iv)?;
                vec![i.begin, i.end]
            }
        };
        for &ov in &overlays {
            if !self.state.net.contains_overlay(ov) {
                return Err(TbmError::UnknownOverlay(ov.0));
            }
            for &p in &points {
                if !self.state.net.is_member(p, ov) {
                    return Err(TbmError::TimeNotInOverlay {
                        time: p.0,
                        overlay: ov.0,
                    });
                }
            }
        }
        let id = BeliefId(self.fresh_id());
        let node = NodeId::Belief(id);
        self.state.deps.set_dependencies(node, &deps)?;
        self.state.beliefs.insert(
            id,
            BeliefInstance {
                id,
                pattern,
                duration: at,
                strength,
                provenance,
                source,
                overlays,
                signal,
            },
        );
        self.txn_mut().pending_beliefs.push(id);
        Ok(id)
    }

    pub fn instance(&self, id: BeliefId) -> Result<&BeliefInstance<S>, TbmError> {
        self.state
            .beliefs
            .get(&id)
            .ok_or(TbmError::UnknownBelief(id.0))
    }

    pub fn instances(&self) -> impl Iterator<Item = &BeliefInstance<S>> {
        self.state.beliefs.values()
    }

    pub fn depends_on(&self, id: BeliefId) -> Result<BTreeSet<NodeId>, TbmError> {
        if !self.state.beliefs.contains_key(&id) {
            return Err(TbmError::UnknownBelief(id.0));
        }
        Ok(self.state.deps.dependencies_of(NodeId::Belief(id)))
    }

    pub fn update_strength(&mut self, id: BeliefId, strength: S) -> Result<(), TbmError> {
        self.with_txn(move |t| {
            let inst = t
                .state
                .beliefs
                .get_mut(&id)
                .ok_or(TbmError::UnknownBelief(id.0))?;
            if inst.strength == strength {
                return Ok(());
            }
            let old = std::mem::replace(&mut inst.strength, strength.clone());
            t.enqueue_change(
                NodeId::Belief(id),
                Change::Strength {
                    old,
                    new: strength,
                },
            );
            Ok(())
        })
    }

    /// Replace a belief's dependency set (cycle-checked).
    pub fn set_dependencies(
        &mut self,
        id: BeliefId,
        deps: &BTreeSet<NodeId>,
    ) -> Result<(), TbmError> {
        let deps = deps.clone();
        self.with_txn(move |t| {
            if !t.state.beliefs.contains_key(&id) {
                return Err(TbmError::UnknownBelief(id.0));
            }
            t.state.deps.set_dependencies(NodeId::Belief(id), &deps)
        })
    }

    pub fn set_signal_hook(
        &mut self,
        id: BeliefId,
        hook: Option<SignalFn<S>>,
    ) -> Result<(), TbmError> {
        self.with_txn(move |t| {
            let inst = t
                .state
                .beliefs
                .get_mut(&id)
                .ok_or(TbmError::UnknownBelief(id.0))?;
            inst.signal = hook;
            Ok(())
        })
    }

    // ------------------------------------------------------------------
    // Fetch

    /// All instances whose pattern matches, whose overlay set meets the
    /// query's, and whose duration can intersect the interval. Rules get a
    /// chance to fire for the query first.
    pub fn fetch(
        &mut self,
        pattern: &Pattern,
        interval: IntervalId,
        overlays: &BTreeSet<OverlayId>,
    ) -> Result<Vec<(BeliefInstance<S>, Bindings)>, TbmError> {
        let i = self.state.net.interval(interval)?;
        let w = Window {
            start: i.begin,
            end: i.end,
            lead: 0,
        };
        let pattern = pattern.clone();
        let overlays = overlays.clone();
        self.with_txn(move |t| t.fetch_window(&pattern, w, &overlays))
    }

    /// Like `fetch`, over the window reaching `lead` ticks back from `end`.
    pub fn fetch_lookback(
        &mut self,
        pattern: &Pattern,
        end: PointId,
        lead: Tick,
        overlays: &BTreeSet<OverlayId>,
    ) -> Result<Vec<(BeliefInstance<S>, Bindings)>, TbmError> {
        if !self.state.net.contains_point(end) {
            return Err(TbmError::UnknownPoint(end.0));
        }
        let w = Window {
            start: end,
            end,
            lead,
        };
        let pattern = pattern.clone();
        let overlays = overlays.clone();
        self.with_txn(move |t| t.fetch_window(&pattern, w, &overlays))
    }

    pub(crate) fn fetch_window(
        &mut self,
        pattern: &Pattern,
        w: Window,
        overlays: &BTreeSet<OverlayId>,
    ) -> Result<Vec<(BeliefInstance<S>, Bindings)>, TbmError> {
        for &ov in overlays {
            if !self.state.net.contains_overlay(ov) {
                return Err(TbmError::UnknownOverlay(ov.0));
            }
        }
        self.fire_for_fetch(pattern, w, overlays)?;
        let mut hits = Vec::new();
        for inst in self.state.beliefs.values() {
            if inst.overlays.intersection(overlays).next().is_none() {
                continue;
            }
            let Some(bindings) = pattern.match_ground(&inst.pattern) else {
                continue;
            };
            if !self.window_meets(&inst.duration, &w)? {
                continue;
            }
            hits.push((inst.clone(), bindings));
        }
        Ok(hits)
    }

    // ------------------------------------------------------------------
    // Monitors

    /// Watch for future asserts matching `pattern` that can intersect the
    /// interval; never fires for instances that already exist.
    pub fn add_monitor(
        &mut self,
        pattern: &Pattern,
        interval: IntervalId,
        overlays: &BTreeSet<OverlayId>,
        hook: MonitorHook<S>,
    ) -> Result<MonitorId, TbmError> {
        let pattern = pattern.clone();
        let overlays = overlays.clone();
        self.with_txn(move |t| {
            let i = t.state.net.interval(interval)?;
            for &ov in &overlays {
                if !t.state.net.contains_overlay(ov) {
                    return Err(TbmError::UnknownOverlay(ov.0));
                }
            }
            let id = MonitorId(t.fresh_id());
            t.state.monitors.insert(
                id,
                Monitor {
                    pattern,
                    window: Window {
                        start: i.begin,
                        end: i.end,
                        lead: 0,
                    },
                    overlays,
                    action: MonitorAction::Hook(hook),
                    owner: None,
                },
            );
            Ok(id)
        })
    }

    pub fn remove_monitor(&mut self, id: MonitorId) -> Result<(), TbmError> {
        self.with_txn(move |t| {
            if !t.state.monitors.contains_key(&id) {
                return Err(TbmError::UnknownMonitor(id.0));
            }
            t.enqueue_change(NodeId::Monitor(id), Change::MonitorRemoved);
            t.state.monitors.remove(&id);
            t.state.deps.remove_node(NodeId::Monitor(id));
            Ok(())
        })
    }

    pub fn monitor_count(&self) -> usize {
        self.state.monitors.len()
    }

    /// Install a rule-trigger monitor unless an equivalent one exists.
    pub(crate) fn ensure_trigger_monitor(
        &mut self,
        rule: RuleId,
        pattern: &Pattern,
        w: Window,
        overlays: &BTreeSet<OverlayId>,
    ) {
        let key = (rule, w.start, w.end, w.lead, pattern.to_string());
        if self.state.trigger_monitor_keys.contains(&key) {
            return;
        }
        self.state.trigger_monitor_keys.insert(key);
        let id = MonitorId(self.fresh_id());
        self.state.monitors.insert(
            id,
            Monitor {
                pattern: pattern.clone(),
                window: w,
                overlays: overlays.clone(),
                action: MonitorAction::FireRule(rule),
                owner: None,
            },
        );
    }

    /// Bring the set of assessor-requested monitors owned by `owner` in
    /// line with `specs`, reusing equivalent ones. Returns their node ids.
    fn reconcile_owned_monitors(
        &mut self,
        owner: BeliefId,
        specs: &[MonitorSpec],
    ) -> Result<BTreeSet<NodeId>, TbmError> {
        let mut existing: BTreeMap<(String, Window, BTreeSet<OverlayId>), MonitorId> = self
            .state
            .monitors
            .iter()
            .filter(|(_, m)| m.owner == Some(owner))
            .map(|(&id, m)| {
                (
                    (m.pattern.to_string(), m.window, m.overlays.clone()),
                    id,
                )
            })
            .collect();
        let mut keep_nodes = BTreeSet::new();
        let mut keep_ids = BTreeSet::new();
        for spec in specs {
            let w = self.resolve_window(&spec.window)?;
            for &ov in &spec.overlays {
                if !self.state.net.contains_overlay(ov) {
                    return Err(TbmError::UnknownOverlay(ov.0));
                }
            }
            let key = (spec.pattern.to_string(), w, spec.overlays.clone());
            let id = match existing.get(&key) {
                Some(&id) => id,
                None => {
                    let id = MonitorId(self.fresh_id());
                    self.state.monitors.insert(
                        id,
                        Monitor {
                            pattern: spec.pattern.clone(),
                            window: w,
                            overlays: spec.overlays.clone(),
                            action: MonitorAction::NotifyDependents,
                            owner: Some(owner),
                        },
                    );
                    existing.insert(key, id);
                    id
                }
            };
            keep_ids.insert(id);
            keep_nodes.insert(NodeId::Monitor(id));
        }
        let stale: Vec<MonitorId> = existing
            .values()
            .filter(|id| !keep_ids.contains(id))
            .copied()
            .collect();
        for id in stale {
            self.state.monitors.remove(&id);
            self.state.deps.remove_node(NodeId::Monitor(id));
        }
        Ok(keep_nodes)
    }

    // ------------------------------------------------------------------
    // Assessors

    pub fn register_assessor(&mut self, head: &str, f: AssessorFn<S>) -> Result<(), TbmError> {
        let head = head.to_string();
        self.with_txn(move |t| {
            if t.state.assessors.contains_key(&head) {
                return Err(TbmError::DuplicateAssessor(head));
            }
            t.state.assessors.insert(head, f);
            Ok(())
        })
    }

    pub fn remove_assessor(&mut self, head: &str) -> Result<(), TbmError> {
        let head = head.to_string();
        self.with_txn(move |t| {
            if t.state.assessors.remove(&head).is_none() {
                return Err(TbmError::NoAssessor(head));
            }
            Ok(())
        })
    }

    /// The assessment instance previously produced for this exact pattern
    /// at this point, if any.
    pub fn assessment_for(&self, pattern: &Pattern, at: PointId) -> Option<BeliefId> {
        self.state
            .assessment_index
            .get(&(pattern.to_string(), at))
            .copied()
    }

    /// Compute (or recompute in place) the summary judgment for a ground
    /// pattern at a point. Rules fire for the pattern first; then the
    /// registered assessor for the pattern's head runs.
    pub fn assess(
        &mut self,
        pattern: &Pattern,
        at: PointId,
        overlays: &BTreeSet<OverlayId>,
    ) -> Result<BeliefId, TbmError> {
        let pattern = pattern.clone();
        let overlays = overlays.clone();
        self.with_txn(move |t| t.assess_inner(&pattern, at, &overlays))
    }

    fn assess_inner(
        &mut self,
        pattern: &Pattern,
        at: PointId,
        overlays: &BTreeSet<OverlayId>,
    ) -> Result<BeliefId, TbmError> {
        if !pattern.is_ground() {
            return Err(TbmError::NotGround(pattern.to_string()));
        }
        if !self.state.net.contains_point(at) {
            return Err(TbmError::UnknownPoint(at.0));
        }
        let head = pattern
            .head()
            .ok_or_else(|| TbmError::NoAssessor(pattern.to_string()))?
            .to_string();
        let assessor = self
            .state
            .assessors
            .get(&head)
            .cloned()
            .ok_or(TbmError::NoAssessor(head))?;
        let w = Window {
            start: at,
            end: at,
            lead: 0,
        };
        self.fire_for_fetch(pattern, w, overlays)?;
        let existing = self.assessment_for(pattern, at);
        // The assessor may fail after partial writes; restore them without
        // aborting the surrounding transaction.
        let snapshot = self.state.clone();
        let queue_marks = self.txn.as_ref().map(|t| {
            (
                t.pending_beliefs.len(),
                t.pending_signals.len(),
            )
        });
        match self.apply_assessment(assessor, pattern, at, overlays, existing) {
            Ok(id) => Ok(id),
            Err(e) => {
                self.state = snapshot;
                if let (Some((nb, ns)), Some(txn)) = (queue_marks, self.txn.as_mut()) {
                    txn.pending_beliefs.truncate(nb);
                    txn.pending_signals.truncate(ns);
                }
                Err(e)
            }
        }
    }

    pub(crate) fn refresh_assessment(&mut self, id: BeliefId) -> Result<(), TbmError> {
        let Some(inst) = self.state.beliefs.get(&id) else {
            return Ok(());
        };
        if inst.source != Source::Assessor {
            return Ok(());
        }
        let pattern = inst.pattern.clone();
        let overlays = inst.overlays.clone();
        let TimeRef::Point(at) = inst.duration else {
            return Ok(());
        };
        let head = pattern
            .head()
            .ok_or_else(|| TbmError::NoAssessor(pattern.to_string()))?
            .to_string();
        let assessor = self
            .state
            .assessors
            .get(&head)
            .cloned()
            .ok_or(TbmError::NoAssessor(head))?;
        self.apply_assessment(assessor, &pattern, at, &overlays, Some(id))
            .map(|_| ())
    }

    fn apply_assessment(
        &mut self,
        assessor: AssessorFn<S>,
        pattern: &Pattern,
        at: PointId,
        overlays: &BTreeSet<OverlayId>,
        existing: Option<BeliefId>,
    ) -> Result<BeliefId, TbmError> {
        let ctx = AssessCtx {
            pattern: pattern.clone(),
            at,
            overlays: overlays.clone(),
            refresh_of: existing,
        };
        let draft = assessor(self, &ctx)?;
        match existing {
            Some(id) => {
                let monitor_nodes = self.reconcile_owned_monitors(id, &draft.monitors)?;
                let mut deps = draft.depends_on;
                deps.extend(monitor_nodes);
                self.state.deps.set_dependencies(NodeId::Belief(id), &deps)?;
                let inst = self
                    .state
                    .beliefs
                    .get_mut(&id)
                    .ok_or(TbmError::UnknownBelief(id.0))?;
                if let Some(sig) = draft.signal {
                    inst.signal = Some(sig);
                }
                if inst.strength != draft.strength {
                    let old = std::mem::replace(&mut inst.strength, draft.strength.clone());
                    self.enqueue_change(
                        NodeId::Belief(id),
                        Change::Strength {
                            old,
                            new: draft.strength,
                        },
                    );
                }
                Ok(id)
            }
            None => {
                let signal = draft
                    .signal
                    .unwrap_or_else(|| Rc::new(|t: &mut Tbm<S>, b, _: &_| t.refresh_assessment(b)));
                let id = self.insert_belief(
                    pattern.clone(),
                    TimeRef::Point(at),
                    draft.strength,
                    Provenance::Assessment,
                    Source::Assessor,
                    overlays.clone(),
                    BTreeSet::new(),
                    Some(signal),
                )?;
                let monitor_nodes = self.reconcile_owned_monitors(id, &draft.monitors)?;
                let mut deps = draft.depends_on;
                deps.extend(monitor_nodes);
                self.state.deps.set_dependencies(NodeId::Belief(id), &deps)?;
                self.state
                    .assessment_index
                    .insert((pattern.to_string(), at), id);
                Ok(id)
            }
        }
    }

    /// Whether `candidate` must be left out of the evidence while
    /// recomputing `refresh_of`: itself, or anything downstream of it.
    pub fn evidence_excluded(&self, refresh_of: Option<BeliefId>, candidate: BeliefId) -> bool {
        match refresh_of {
            None => false,
            Some(b) => {
                b == candidate
                    || self
                        .state
                        .deps
                        .reaches(NodeId::Belief(b), NodeId::Belief(candidate))
            }
        }
    }

    // ------------------------------------------------------------------
    // Distance beliefs

    /// Create a belief about the derived distance between two points as
    /// seen through their shared overlay, kept current as constraints
    /// change. `to_strength` maps (current estimate, queried range) to the
    /// instance's strength.
    pub fn assess_distance_belief(
        &mut self,
        p: PointId,
        q: PointId,
        queried: Range,
        to_strength: DistanceStrengthFn<S>,
    ) -> Result<BeliefId, TbmError> {
        self.with_txn(move |t| {
            let overlay = t
                .state
                .net
                .shared_overlay(p, q)
                .ok_or(TbmError::DisjointOverlays { p: p.0, q: q.0 })?;
            let estimate = t.state.net.distance(p, q, overlay)?;
            let strength = to_strength(&estimate, &queried);
            let did = match t.state.dist_by_pair.get(&(p, q, overlay)) {
                Some(&d) => d,
                None => {
                    let d = DistanceId(t.fresh_id());
                    t.state.dist_by_pair.insert((p, q, overlay), d);
                    t.state.dist_watch.insert(
                        d,
                        DistWatch {
                            p,
                            q,
                            overlay,
                            last: estimate,
                        },
                    );
                    d
                }
            };
            let pattern = distance_pattern(p, q, &queried);
            let hook: SignalFn<S> = {
                let to_strength = to_strength.clone();
                Rc::new(move |t: &mut Tbm<S>, b, _: &_| {
                    let est = t.state.net.distance(p, q, overlay)?;
                    let s = to_strength(&est, &queried);
                    t.update_strength(b, s)
                })
            };
            t.insert_belief(
                pattern,
                TimeRef::Point(p),
                strength,
                Provenance::Assessment,
                Source::App,
                [overlay].into(),
                [NodeId::Distance(did)].into(),
                Some(hook),
            )
        })
    }

    // ------------------------------------------------------------------
    // Instrumentation

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn generator_calls(&self, rule: RuleId) -> u64 {
        self.stats.generator_calls.get(&rule).copied().unwrap_or(0)
    }
}

/// Ground pattern naming a distance judgment, with infinite bounds spelled
/// as symbols.
fn distance_pattern(p: PointId, q: PointId, queried: &Range) -> Pattern {
    fn bound(b: Extended<Tick>) -> Pattern {
        match b {
            Extended::Finite(t) => Pattern::Int(t),
            Extended::NegInf => Pattern::Sym("-inf".into()),
            Extended::PosInf => Pattern::Sym("+inf".into()),
        }
    }
    Pattern::List(vec![
        Pattern::Sym("distance".into()),
        Pattern::Int(p.0 as i64),
        Pattern::Int(q.0 as i64),
        bound(queried.lo()),
        bound(queried.hi()),
    ])
}
