//! Causal rules: lazy, fetch-driven firing with retry and regeneration.
//!
//! A rule never fires eagerly. When a fetch (or assessment) asks about a
//! pattern its consequent can unify with, the engine searches the widened
//! window for point-duration trigger instances, installs a monitor so
//! later-arriving triggers fire too, and runs the rule's generator for
//! each trigger it has not fired for before. The generator either declines
//! or produces the consequent's strength; declined firings retry when a
//! precondition assessment changes, and fired consequents regenerate when
//! anything they depend on changes.

use std::collections::BTreeSet;
use std::fmt;
use std::rc::Rc;

use crate::deps::{BeliefId, FiringId, NodeId, RuleId};
use crate::engine::{
    BeliefInstance, Provenance, Source, StrengthLike, Tbm, TimeRef, TraceEvent, Window,
};
use crate::error::TbmError;
use crate::net::{IntervalId, OverlayId, PointId};
use crate::pattern::{Bindings, Pattern};
use crate::Tick;

/// The generator's verdict for one trigger instance.
pub enum GeneratorOutcome<S> {
    Fire {
        strength: S,
        /// Extra nodes the consequent should depend on, beyond the rule,
        /// trigger, and precondition assessments.
        also_depends_on: BTreeSet<NodeId>,
    },
    Decline,
}

/// Everything a generator sees about one potential firing.
pub struct FiringInput<S: StrengthLike> {
    pub rule: RuleId,
    pub trigger: BeliefInstance<S>,
    pub trigger_point: PointId,
    pub preconditions: Vec<BeliefInstance<S>>,
    pub bindings: Bindings,
}

pub type GeneratorFn<S> =
    Rc<dyn Fn(&mut Tbm<S>, &FiringInput<S>) -> Result<GeneratorOutcome<S>, TbmError>>;

#[derive(Clone)]
pub struct CausalRule<S: StrengthLike> {
    id: RuleId,
    name: String,
    trigger: Pattern,
    preconditions: Vec<Pattern>,
    consequent: Pattern,
    consequent_duration: Tick,
    active: IntervalId,
    overlays: BTreeSet<OverlayId>,
    generator: GeneratorFn<S>,
}

impl<S: StrengthLike> CausalRule<S> {
    pub fn id(&self) -> RuleId {
        self.id
    }
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn trigger(&self) -> &Pattern {
        &self.trigger
    }
    pub fn consequent(&self) -> &Pattern {
        &self.consequent
    }
    pub fn consequent_duration(&self) -> Tick {
        self.consequent_duration
    }
}

impl<S: StrengthLike> fmt::Debug for CausalRule<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CausalRule")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("trigger", &self.trigger.to_string())
            .field("consequent", &self.consequent.to_string())
            .finish_non_exhaustive()
    }
}

/// Outcome of one (rule, trigger) pairing; at most one ever exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiringRecord {
    pub id: FiringId,
    pub rule: RuleId,
    pub trigger: BeliefId,
    pub bindings: Bindings,
    pub outcome: FiringOutcome,
    /// Assessment instances for the instantiated preconditions.
    pub preconditions: Vec<BeliefId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiringOutcome {
    Declined,
    Fired(BeliefId),
}

impl<S: StrengthLike> Tbm<S> {
    /// Define a rule. Precondition and consequent variables must all be
    /// bound by the trigger; the consequent persists for
    /// `consequent_duration` ticks past its trigger for search purposes.
    #[allow(clippy::too_many_arguments)]
    pub fn define_rule(
        &mut self,
        name: &str,
        trigger: Pattern,
        preconditions: Vec<Pattern>,
        consequent: Pattern,
        consequent_duration: Tick,
        active: IntervalId,
        overlays: &BTreeSet<OverlayId>,
        generator: GeneratorFn<S>,
    ) -> Result<RuleId, TbmError> {
        let name = name.to_string();
        let overlays = overlays.clone();
        self.with_txn(move |t| {
            if consequent_duration <= 0 {
                return Err(TbmError::InvalidDuration);
            }
            t.state.net.interval(active)?;
            for &ov in &overlays {
                if !t.state.net.contains_overlay(ov) {
                    return Err(TbmError::UnknownOverlay(ov.0));
                }
            }
            let tvars = trigger.vars();
            for pre in &preconditions {
                for v in pre.vars() {
                    if !tvars.contains(v) {
                        return Err(TbmError::VariableRestriction(v.to_string()));
                    }
                }
            }
            for v in consequent.vars() {
                if !tvars.contains(v) {
                    return Err(TbmError::VariableRestriction(v.to_string()));
                }
            }
            let id = RuleId(t.fresh_id());
            t.state.rules.insert(
                id,
                CausalRule {
                    id,
                    name,
                    trigger,
                    preconditions,
                    consequent,
                    consequent_duration,
                    active,
                    overlays,
                    generator,
                },
            );
            Ok(id)
        })
    }

    pub fn rules(&self) -> impl Iterator<Item = &CausalRule<S>> {
        self.state.rules.values()
    }

    pub fn firing_records(&self) -> impl Iterator<Item = &FiringRecord> {
        self.state.firings.values()
    }

    /// Give every rule whose consequent could answer `query` a chance to
    /// fire over the window before the fetch scans the store.
    pub(crate) fn fire_for_fetch(
        &mut self,
        query: &Pattern,
        w: Window,
        overlays: &BTreeSet<OverlayId>,
    ) -> Result<(), TbmError> {
        let rule_ids: Vec<RuleId> = self.state.rules.keys().copied().collect();
        for rid in rule_ids {
            if self.firing_stack.contains(&rid) {
                continue;
            }
            let Some(rule) = self.state.rules.get(&rid).cloned() else {
                continue;
            };
            if rule.overlays.intersection(overlays).next().is_none() {
                continue;
            }
            let Some(csubst) = rule.consequent.unify(query) else {
                continue;
            };
            let search_pattern = rule.trigger.substitute(&csubst);
            let search = Window {
                start: w.start,
                end: w.end,
                lead: w.lead + rule.consequent_duration,
            };
            self.firing_stack.push(rid);
            let result = self.fire_rule_in_window(&rule, &search_pattern, search);
            self.firing_stack.pop();
            result?;
        }
        Ok(())
    }

    fn fire_rule_in_window(
        &mut self,
        rule: &CausalRule<S>,
        search_pattern: &Pattern,
        search: Window,
    ) -> Result<(), TbmError> {
        self.ensure_trigger_monitor(rule.id, search_pattern, search, &rule.overlays);
        let overlays = rule.overlays.clone();
        let candidates = self.fetch_window(search_pattern, search, &overlays)?;
        for (inst, _) in candidates {
            self.consider_firing(rule, inst, search)?;
        }
        Ok(())
    }

    /// Entry point for trigger monitors: a fresh in-window instance.
    pub(crate) fn fire_rule_for_monitor(
        &mut self,
        rid: RuleId,
        belief: BeliefId,
        w: Window,
    ) -> Result<(), TbmError> {
        if self.firing_stack.contains(&rid) {
            return Ok(());
        }
        let Some(rule) = self.state.rules.get(&rid).cloned() else {
            return Ok(());
        };
        let Some(inst) = self.state.beliefs.get(&belief).cloned() else {
            return Ok(());
        };
        self.firing_stack.push(rid);
        let result = self.consider_firing(&rule, inst, w);
        self.firing_stack.pop();
        result
    }

    fn consider_firing(
        &mut self,
        rule: &CausalRule<S>,
        inst: BeliefInstance<S>,
        w: Window,
    ) -> Result<(), TbmError> {
        let TimeRef::Point(t) = inst.duration() else {
            return Ok(());
        };
        if self
            .state
            .firing_by_trigger
            .contains_key(&(rule.id, inst.id()))
        {
            return Ok(());
        }
        if !self.point_in_active(t, rule.active, &w)? {
            return Ok(());
        }
        let Some(bindings) = rule.trigger.match_ground(inst.pattern()) else {
            return Ok(());
        };
        let fid = FiringId(self.fresh_id());
        self.state.firing_by_trigger.insert((rule.id, inst.id()), fid);
        self.state.firings.insert(
            fid,
            FiringRecord {
                id: fid,
                rule: rule.id,
                trigger: inst.id(),
                bindings,
                outcome: FiringOutcome::Declined,
                preconditions: Vec::new(),
            },
        );
        self.run_generator(rule, fid)
    }

    /// Assess preconditions, consult the generator, and either assert the
    /// consequent or park the firing as declined with retry wiring.
    fn run_generator(&mut self, rule: &CausalRule<S>, fid: FiringId) -> Result<(), TbmError> {
        let record = self
            .state
            .firings
            .get(&fid)
            .cloned()
            .expect("firing record exists");
        let Some(trigger) = self.state.beliefs.get(&record.trigger).cloned() else {
            return Ok(());
        };
        let TimeRef::Point(t) = trigger.duration() else {
            return Ok(());
        };
        let mut pre_ids = Vec::new();
        let mut pre_insts = Vec::new();
        for pre in &rule.preconditions {
            let ground = pre.substitute(&record.bindings);
            let pid = self.assess(&ground, t, &rule.overlays)?;
            pre_ids.push(pid);
            pre_insts.push(self.instance(pid)?.clone());
        }
        self.state
            .firings
            .get_mut(&fid)
            .expect("firing record exists")
            .preconditions = pre_ids.clone();
        *self.stats.generator_calls.entry(rule.id).or_insert(0) += 1;
        let input = FiringInput {
            rule: rule.id,
            trigger: trigger.clone(),
            trigger_point: t,
            preconditions: pre_insts,
            bindings: record.bindings.clone(),
        };
        let generator = rule.generator.clone();
        match generator(self, &input)? {
            GeneratorOutcome::Decline => {
                self.stats.trace.push(TraceEvent::Declined {
                    rule: rule.id,
                    rule_name: rule.name.clone(),
                    trigger: record.trigger,
                });
                let deps: BTreeSet<NodeId> =
                    pre_ids.iter().map(|&p| NodeId::Belief(p)).collect();
                self.state.deps.set_dependencies(NodeId::Firing(fid), &deps)
            }
            GeneratorOutcome::Fire {
                strength,
                also_depends_on,
            } => {
                let pattern = rule.consequent.substitute(&record.bindings);
                let mut deps: BTreeSet<NodeId> =
                    pre_ids.iter().map(|&p| NodeId::Belief(p)).collect();
                deps.insert(NodeId::Rule(rule.id));
                deps.insert(NodeId::Belief(record.trigger));
                deps.extend(also_depends_on);
                let signal: crate::engine::SignalFn<S> =
                    Rc::new(move |t: &mut Tbm<S>, b, _: &_| t.regenerate(fid, b));
                let cid = self.insert_belief(
                    pattern,
                    TimeRef::Point(t),
                    strength,
                    Provenance::Assessment,
                    Source::Consequent(fid),
                    rule.overlays.clone(),
                    deps,
                    Some(signal),
                )?;
                self.state
                    .firings
                    .get_mut(&fid)
                    .expect("firing record exists")
                    .outcome = FiringOutcome::Fired(cid);
                self.state
                    .deps
                    .set_dependencies(NodeId::Firing(fid), &BTreeSet::new())?;
                self.stats.trace.push(TraceEvent::Fired {
                    rule: rule.id,
                    rule_name: rule.name.clone(),
                    trigger: record.trigger,
                    consequent: cid,
                });
                Ok(())
            }
        }
    }

    /// A declined firing's precondition changed: ask the generator again.
    /// The declined-to-fired transition happens at most once.
    pub(crate) fn retry_firing(&mut self, fid: FiringId) -> Result<(), TbmError> {
        let Some(record) = self.state.firings.get(&fid).cloned() else {
            return Ok(());
        };
        match record.outcome {
            FiringOutcome::Fired(c) => self.regenerate(fid, c),
            FiringOutcome::Declined => {
                let Some(rule) = self.state.rules.get(&record.rule).cloned() else {
                    return Ok(());
                };
                if self.firing_stack.contains(&rule.id) {
                    return Ok(());
                }
                self.stats.trace.push(TraceEvent::Retried {
                    rule: rule.id,
                    trigger: record.trigger,
                });
                self.firing_stack.push(rule.id);
                let result = self.run_generator(&rule, fid);
                self.firing_stack.pop();
                result
            }
        }
    }

    /// A fired consequent's dependency changed: recompute its strength
    /// with current inputs. A decline here keeps the old strength.
    pub(crate) fn regenerate(&mut self, fid: FiringId, consequent: BeliefId) -> Result<(), TbmError> {
        let Some(record) = self.state.firings.get(&fid).cloned() else {
            return Ok(());
        };
        let Some(rule) = self.state.rules.get(&record.rule).cloned() else {
            return Ok(());
        };
        if self.firing_stack.contains(&rule.id) {
            return Ok(());
        }
        if !self.state.beliefs.contains_key(&consequent) {
            return Ok(());
        }
        let Some(trigger) = self.state.beliefs.get(&record.trigger).cloned() else {
            return Ok(());
        };
        let TimeRef::Point(t) = trigger.duration() else {
            return Ok(());
        };
        let pre_insts: Vec<BeliefInstance<S>> = record
            .preconditions
            .iter()
            .filter_map(|p| self.state.beliefs.get(p).cloned())
            .collect();
        *self.stats.generator_calls.entry(rule.id).or_insert(0) += 1;
        let input = FiringInput {
            rule: rule.id,
            trigger,
            trigger_point: t,
            preconditions: pre_insts,
            bindings: record.bindings.clone(),
        };
        let generator = rule.generator.clone();
        self.firing_stack.push(rule.id);
        let outcome = generator(self, &input);
        self.firing_stack.pop();
        match outcome? {
            GeneratorOutcome::Decline => Ok(()),
            GeneratorOutcome::Fire {
                strength,
                also_depends_on,
            } => {
                let mut deps: BTreeSet<NodeId> = record
                    .preconditions
                    .iter()
                    .map(|&p| NodeId::Belief(p))
                    .collect();
                deps.insert(NodeId::Rule(rule.id));
                deps.insert(NodeId::Belief(record.trigger));
                deps.extend(also_depends_on);
                self.state
                    .deps
                    .set_dependencies(NodeId::Belief(consequent), &deps)?;
                self.update_strength(consequent, strength)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{AssessCtx, BeliefDraft, MonitorSpec, Provenance, Source, TimeRef, WindowSpec};
    use crate::error::TbmError;
    use crate::net::{IntervalId, OverlayId, PointId};
    
    use crate::{Range, Tick};

    fn pat(s: &str) -> Pattern {
        Pattern::parse(s).unwrap()
    }

    struct Desk {
        t: Tbm<i32>,
        ov: OverlayId,
        origin: PointId,
    }

    impl Desk {
        fn new() -> Self {
            let mut t: Tbm<i32> = Tbm::new();
            let ov = t.create_overlay(1).unwrap();
            let origin = t.create_point(&[ov]).unwrap();
            Desk { t, ov, origin }
        }

        fn at(&mut self, tick: Tick) -> PointId {
            let p = self.t.create_point(&[self.ov]).unwrap();
            self.t
                .add_constraint(self.origin, p, Range::exactly(tick))
                .unwrap();
            p
        }

        fn span(&mut self, lo: Tick, hi: Tick) -> IntervalId {
            let b = self.at(lo);
            let e = self.at(hi);
            self.t.create_interval(b, e).unwrap()
        }

        fn ovs(&self) -> BTreeSet<OverlayId> {
            [self.ov].into()
        }

        fn observe(&mut self, pattern: &str, p: PointId, s: i32) -> crate::deps::BeliefId {
            self.t
                .assert_belief(&pat(pattern), TimeRef::Point(p), s, Provenance::Observation, &self.ovs())
                .unwrap()
        }

        fn copy_rule(&mut self, name: &str, trigger: &str, consequent: &str) -> RuleId {
            let active = self.span(-1_000_000, 1_000_000);
            self.t
                .define_rule(
                    name,
                    pat(trigger),
                    vec![],
                    pat(consequent),
                    100,
                    active,
                    &self.ovs(),
                    Rc::new(|_t, input: &FiringInput<i32>| {
                        Ok(GeneratorOutcome::Fire {
                            strength: *input.trigger.strength(),
                            also_depends_on: BTreeSet::new(),
                        })
                    }),
                )
                .unwrap()
        }
    }

    /// Assessor whose judgment is ten times the count of `(raw X)`
    /// observations in the last 1000 ticks; used as a rule precondition.
    fn gate_assessor() -> crate::engine::AssessorFn<i32> {
        Rc::new(|t, ctx: &AssessCtx| {
            let subject = match &ctx.pattern {
                Pattern::List(items) if items.len() == 2 => items[1].clone(),
                _ => return Err(TbmError::NotGround(ctx.pattern.to_string())),
            };
            let raw = Pattern::List(vec![Pattern::Sym("raw".into()), subject]);
            let hits = t.fetch_lookback(&raw, ctx.at, 1000, &ctx.overlays)?;
            let mut deps = BTreeSet::new();
            let mut n = 0;
            for (inst, _) in &hits {
                if t.evidence_excluded(ctx.refresh_of, inst.id()) {
                    continue;
                }
                n += 1;
                deps.insert(NodeId::Belief(inst.id()));
            }
            let mut draft = BeliefDraft::new(n * 10);
            draft.depends_on = deps;
            draft.monitors = vec![MonitorSpec {
                pattern: raw,
                window: WindowSpec::Lookback { end: ctx.at, lead: 1000 },
                overlays: ctx.overlays.clone(),
            }];
            Ok(draft)
        })
    }

    fn gated_rule(d: &mut Desk) -> RuleId {
        d.t.register_assessor("gate", gate_assessor()).unwrap();
        let active = d.span(-1_000_000, 1_000_000);
        d.t.define_rule(
            "gated",
            pat("(ping ?x)"),
            vec![pat("(gate ?x)")],
            pat("(pong ?x)"),
            100,
            active,
            &d.ovs(),
            Rc::new(|_t, input: &FiringInput<i32>| {
                let gate = *input.preconditions[0].strength();
                if gate == 0 {
                    Ok(GeneratorOutcome::Decline)
                } else {
                    Ok(GeneratorOutcome::Fire {
                        strength: gate,
                        also_depends_on: BTreeSet::new(),
                    })
                }
            }),
        )
        .unwrap()
    }

    fn pongs(d: &Tbm<i32>) -> Vec<i32> {
        d.instances()
            .filter(|i| i.pattern().head() == Some("pong"))
            .map(|i| *i.strength())
            .collect()
    }

    #[test]
    fn rule_fires_during_fetch_and_result_is_in_that_fetch() {
        let mut d = Desk::new();
        let rid = d.copy_rule("echoes", "(ping ?x)", "(pong ?x)");
        let p5 = d.at(5);
        d.observe("(ping a)", p5, 7);
        let iv = d.span(0, 10);
        let hits = d.t.fetch(&pat("(pong a)"), iv, &d.ovs()).unwrap();
        assert_eq!(hits.len(), 1);
        let (inst, _) = &hits[0];
        assert_eq!(*inst.strength(), 7);
        assert_eq!(inst.duration(), TimeRef::Point(p5));
        assert!(matches!(inst.source(), Source::Consequent(_)));
        assert_eq!(d.t.generator_calls(rid), 1);
    }

    #[test]
    fn refetching_does_not_fire_again() {
        let mut d = Desk::new();
        let rid = d.copy_rule("echoes", "(ping ?x)", "(pong ?x)");
        let p5 = d.at(5);
        d.observe("(ping a)", p5, 7);
        let iv = d.span(0, 10);
        assert_eq!(d.t.fetch(&pat("(pong a)"), iv, &d.ovs()).unwrap().len(), 1);
        let monitors_after_first = d.t.monitor_count();
        assert_eq!(d.t.fetch(&pat("(pong a)"), iv, &d.ovs()).unwrap().len(), 1);
        assert_eq!(d.t.generator_calls(rid), 1);
        assert_eq!(d.t.monitor_count(), monitors_after_first);
        assert_eq!(d.t.firing_records().count(), 1);
    }

    #[test]
    fn late_trigger_fires_through_the_search_monitor() {
        let mut d = Desk::new();
        let rid = d.copy_rule("echoes", "(ping ?x)", "(pong ?x)");
        let iv = d.span(0, 10);
        assert!(d.t.fetch(&pat("(pong ?x)"), iv, &d.ovs()).unwrap().is_empty());
        assert_eq!(d.t.generator_calls(rid), 0);
        let p5 = d.at(5);
        d.observe("(ping b)", p5, 3);
        // No second fetch: the monitor installed by the search fired the rule.
        assert_eq!(d.t.generator_calls(rid), 1);
        assert_eq!(pongs(&d.t), vec![3]);
    }

    #[test]
    fn trigger_outside_search_window_waits() {
        let mut d = Desk::new();
        let rid = d.copy_rule("echoes", "(ping ?x)", "(pong ?x)");
        let iv = d.span(0, 10);
        assert!(d.t.fetch(&pat("(pong a)"), iv, &d.ovs()).unwrap().is_empty());
        let p500 = d.at(500);
        d.observe("(ping a)", p500, 1);
        // 500 is outside [0 - 100, 10]; the monitor must not fire the rule.
        assert_eq!(d.t.generator_calls(rid), 0);
        assert!(pongs(&d.t).is_empty());
    }

    #[test]
    fn inactive_rule_never_runs_its_generator() {
        let mut d = Desk::new();
        let active = d.span(100, 200);
        let rid =
            d.t.define_rule(
                "dormant",
                pat("(ping ?x)"),
                vec![],
                pat("(pong ?x)"),
                100,
                active,
                &d.ovs(),
                Rc::new(|_t, input: &FiringInput<i32>| {
                    Ok(GeneratorOutcome::Fire {
                        strength: *input.trigger.strength(),
                        also_depends_on: BTreeSet::new(),
                    })
                }),
            )
            .unwrap();
        let p5 = d.at(5);
        d.observe("(ping a)", p5, 7);
        let iv = d.span(0, 10);
        assert!(d.t.fetch(&pat("(pong a)"), iv, &d.ovs()).unwrap().is_empty());
        assert_eq!(d.t.generator_calls(rid), 0);
        assert_eq!(d.t.firing_records().count(), 0);
    }

    #[test]
    fn declined_firing_retries_when_its_precondition_strengthens() {
        let mut d = Desk::new();
        let rid = gated_rule(&mut d);
        let p5 = d.at(5);
        d.observe("(ping a)", p5, 1);
        let iv = d.span(0, 10);
        assert!(d.t.fetch(&pat("(pong a)"), iv, &d.ovs()).unwrap().is_empty());
        assert_eq!(d.t.generator_calls(rid), 1);
        assert_eq!(
            d.t.firing_records().map(|r| r.outcome).collect::<Vec<_>>(),
            vec![FiringOutcome::Declined]
        );

        let p3 = d.at(3);
        d.observe("(raw a)", p3, 1);
        // Gate assessment refreshed 0 -> 10, the firing retried, and the
        // consequent landed, all inside that one assertion's transaction.
        assert_eq!(d.t.generator_calls(rid), 2);
        assert_eq!(pongs(&d.t), vec![10]);
        assert!(matches!(
            d.t.firing_records().next().unwrap().outcome,
            FiringOutcome::Fired(_)
        ));
    }

    #[test]
    fn fired_rule_regenerates_in_place_on_new_evidence() {
        let mut d = Desk::new();
        let rid = gated_rule(&mut d);
        let p3 = d.at(3);
        let p5 = d.at(5);
        d.observe("(raw a)", p3, 1);
        d.observe("(ping a)", p5, 1);
        let iv = d.span(0, 10);
        assert_eq!(d.t.fetch(&pat("(pong a)"), iv, &d.ovs()).unwrap().len(), 1);
        assert_eq!(pongs(&d.t), vec![10]);
        let calls_after_fire = d.t.generator_calls(rid);

        let p4 = d.at(4);
        d.observe("(raw a)", p4, 1);
        // Same consequent instance, new strength; no duplicate.
        assert_eq!(pongs(&d.t), vec![20]);
        assert_eq!(d.t.generator_calls(rid), calls_after_fire + 1);
        assert_eq!(d.t.firing_records().count(), 1);
    }

    #[test]
    fn consequent_variables_must_come_from_the_trigger() {
        let mut d = Desk::new();
        let active = d.span(0, 10);
        let err =
            d.t.define_rule(
                "bad",
                pat("(ping ?x)"),
                vec![],
                pat("(pong ?x ?y)"),
                100,
                active,
                &d.ovs(),
                Rc::new(|_t, _i: &FiringInput<i32>| Ok(GeneratorOutcome::Decline)),
            )
            .unwrap_err();
        assert!(matches!(err, TbmError::VariableRestriction(_)));
        let err2 =
            d.t.define_rule(
                "bad2",
                pat("(ping ?x)"),
                vec![pat("(gate ?z)")],
                pat("(pong ?x)"),
                100,
                active,
                &d.ovs(),
                Rc::new(|_t, _i: &FiringInput<i32>| Ok(GeneratorOutcome::Decline)),
            )
            .unwrap_err();
        assert!(matches!(err2, TbmError::VariableRestriction(_)));
    }

    #[test]
    fn nonpositive_duration_is_rejected() {
        let mut d = Desk::new();
        let active = d.span(0, 10);
        for dur in [0, -5] {
            let err =
                d.t.define_rule(
                    "bad",
                    pat("(ping ?x)"),
                    vec![],
                    pat("(pong ?x)"),
                    dur,
                    active,
                    &d.ovs(),
                    Rc::new(|_t, _i: &FiringInput<i32>| Ok(GeneratorOutcome::Decline)),
                )
                .unwrap_err();
            assert_eq!(err, TbmError::InvalidDuration);
        }
    }

    #[test]
    fn self_consequent_search_terminates() {
        let mut d = Desk::new();
        let active = d.span(-1_000_000, 1_000_000);
        let rid =
            d.t.define_rule(
                "reverb",
                pat("(echo ?x)"),
                vec![],
                pat("(echo ?x)"),
                100,
                active,
                &d.ovs(),
                Rc::new(|_t, _i: &FiringInput<i32>| Ok(GeneratorOutcome::Decline)),
            )
            .unwrap();
        let p5 = d.at(5);
        d.observe("(echo a)", p5, 1);
        let iv = d.span(0, 10);
        let hits = d.t.fetch(&pat("(echo a)"), iv, &d.ovs()).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(d.t.generator_calls(rid), 1);
        assert_eq!(
            d.t.firing_records().map(|r| r.outcome).collect::<Vec<_>>(),
            vec![FiringOutcome::Declined]
        );
    }

    #[test]
    fn two_triggers_fire_independently() {
        let mut d = Desk::new();
        let rid = d.copy_rule("echoes", "(ping ?x)", "(pong ?x)");
        let p2 = d.at(2);
        let p8 = d.at(8);
        d.observe("(ping a)", p2, 1);
        d.observe("(ping b)", p8, 2);
        let iv = d.span(0, 10);
        let hits = d.t.fetch(&pat("(pong ?who)"), iv, &d.ovs()).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(d.t.generator_calls(rid), 2);
        let mut who: Vec<String> = hits.iter().map(|(_, b)| b["?who"].to_string()).collect();
        who.sort();
        assert_eq!(who, vec!["a", "b"]);
    }
}
