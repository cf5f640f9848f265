//! Reference calculus: assessors and generators for decaying evidence.
//!
//! Fact types here model persistence with linear decay. Being alive is
//! confirmed by positive evidence whose support fades over a lifetime
//! window (disconfirming support does not fade), plus standing evidence
//! from a sufficiently recent birth. A gun being loaded is modeled by the
//! single latest report, with both components decaying. The shoot
//! generator turns a shot with a loaded gun into evidence against the
//! victim being alive.

use std::collections::BTreeSet;
use std::rc::Rc;

use crate::deps::{BeliefId, NodeId};
use crate::engine::{
    AssessorFn, BeliefDraft, MonitorSpec, Provenance, StrengthLike, Tbm, TimeRef, WindowSpec,
};
use crate::error::TbmError;
use crate::net::PointId;
use crate::pattern::Pattern;
use crate::rules::{GeneratorFn, GeneratorOutcome};
use crate::shafer::ShaferStrength;
use crate::time::Extended;
use crate::{Shafer, Tick};

/// Tunables for the reference fact types. Tick unit is one minute in the
/// bundled scenarios: the defaults read as six months, one month, and
/// seventy years, with birth worth support 0.9.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalculusConfig {
    pub alive_lifetime: Tick,
    pub loaded_lifetime: Tick,
    pub born_cutoff: Tick,
    pub born_evidence: Shafer,
}

impl Default for CalculusConfig {
    fn default() -> Self {
        CalculusConfig {
            alive_lifetime: 259_200,
            loaded_lifetime: 43_200,
            born_cutoff: 36_792_000,
            born_evidence: ShaferStrength::new(0.9, 0.0).expect("valid default"),
        }
    }
}

impl CalculusConfig {
    pub fn validate(&self) -> Result<(), TbmError> {
        if self.alive_lifetime <= 0 || self.loaded_lifetime <= 0 || self.born_cutoff <= 0 {
            return Err(TbmError::InvalidDuration);
        }
        Ok(())
    }
}

/// Register the reference assessors (`alive`, `loaded`) on an engine.
pub fn register_reference_calculus(
    t: &mut Tbm<Shafer>,
    config: CalculusConfig,
) -> Result<(), TbmError> {
    config.validate()?;
    t.register_assessor("alive", alive_assessor(config))?;
    t.register_assessor("loaded", loaded_assessor(config))?;
    Ok(())
}

/// Look up a built-in generator by its scenario-file name.
pub fn generator_by_name(name: &str) -> Option<GeneratorFn<Shafer>> {
    match name {
        "gen-born" | "gen-load" | "copy" => Some(copy_generator()),
        "gen-shoot" => Some(shoot_generator()),
        _ => None,
    }
}

/// Ticks from an instance's time to `at`, clamped below at zero; instances
/// whose latest possible time is unbounded count as infinitely old.
fn elapsed_ticks<S: StrengthLike>(t: &Tbm<S>, duration: TimeRef, at: PointId) -> f64 {
    let p = match duration {
        TimeRef::Point(p) => p,
        TimeRef::Interval(iv) => t.net().interval(iv).expect("known interval").end,
    };
    match t.net().upper_bound(p, at).expect("known points") {
        Extended::Finite(h) => h.max(0) as f64,
        Extended::PosInf | Extended::NegInf => f64::INFINITY,
    }
}

/// The thing a unary fact is about: the argument after the head symbol.
fn subject_of(pattern: &Pattern) -> Option<&Pattern> {
    match pattern {
        Pattern::List(items) if items.len() >= 2 => Some(&items[1]),
        _ => None,
    }
}

/// Usable evidence instance: elapsed time, id, strength, provenance.
type Evidence = (f64, BeliefId, Shafer, Provenance);

/// Later means smaller elapsed time; ties go to the higher id.
fn later(a: &Evidence, b: &Evidence) -> std::cmp::Ordering {
    a.0.partial_cmp(&b.0)
        .expect("elapsed times are never NaN")
        .then_with(|| b.1.cmp(&a.1))
}

/// Assessor for `(alive X)`: gather in-window evidence, drop everything
/// that predates the latest prior assessment (it already summarized those),
/// decay each survivor's confirming support by its age, add the standing
/// birth evidence when a birth lies within the cutoff, and combine.
pub fn alive_assessor(config: CalculusConfig) -> AssessorFn<Shafer> {
    Rc::new(move |t, ctx| {
        let hits = t.fetch_lookback(&ctx.pattern, ctx.at, config.alive_lifetime, &ctx.overlays)?;
        let mut usable: Vec<Evidence> = Vec::new();
        for (inst, _) in &hits {
            if t.evidence_excluded(ctx.refresh_of, inst.id()) {
                continue;
            }
            let e = elapsed_ticks(t, inst.duration(), ctx.at);
            usable.push((e, inst.id(), *inst.strength(), inst.provenance()));
        }
        let latest_assessment = usable
            .iter()
            .filter(|u| u.3 == Provenance::Assessment)
            .min_by(|a, b| later(a, b))
            .cloned();
        let mut survivors: Vec<Evidence> = usable
            .into_iter()
            .filter(|u| match &latest_assessment {
                None => true,
                Some(la) => u.0 <= la.0,
            })
            .collect();
        survivors.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("elapsed times are never NaN")
                .then_with(|| a.1.cmp(&b.1))
        });

        let mut deps: BTreeSet<NodeId> = BTreeSet::new();
        let mut acc = ShaferStrength::vacuous();
        for (e, id, s, _) in &survivors {
            let decayed = s.decay_support(*e, config.alive_lifetime as f64)?;
            acc = acc.combine(&decayed)?;
            deps.insert(NodeId::Belief(*id));
        }

        let mut monitors = vec![MonitorSpec {
            pattern: ctx.pattern.clone(),
            window: WindowSpec::Lookback {
                end: ctx.at,
                lead: config.alive_lifetime,
            },
            overlays: ctx.overlays.clone(),
        }];

        if let Some(subject) = subject_of(&ctx.pattern) {
            let born_pat = Pattern::List(vec![Pattern::Sym("born".into()), subject.clone()]);
            let born_hits =
                t.fetch_lookback(&born_pat, ctx.at, config.born_cutoff, &ctx.overlays)?;
            let mut born_seen = false;
            for (inst, _) in &born_hits {
                if t.evidence_excluded(ctx.refresh_of, inst.id()) {
                    continue;
                }
                born_seen = true;
                deps.insert(NodeId::Belief(inst.id()));
            }
            if born_seen {
                acc = acc.combine(&config.born_evidence)?;
            }
            monitors.push(MonitorSpec {
                pattern: born_pat,
                window: WindowSpec::Lookback {
                    end: ctx.at,
                    lead: config.born_cutoff,
                },
                overlays: ctx.overlays.clone(),
            });
        }

        let mut draft = BeliefDraft::new(acc);
        draft.depends_on = deps;
        draft.monitors = monitors;
        Ok(draft)
    })
}

/// Assessor for `(loaded G)`: the single latest report within the
/// lifetime, both components decayed by its age; vacuous if none. Watches
/// the gap between that report and the query point for newer reports.
pub fn loaded_assessor(config: CalculusConfig) -> AssessorFn<Shafer> {
    Rc::new(move |t, ctx| {
        let hits = t.fetch_lookback(&ctx.pattern, ctx.at, config.loaded_lifetime, &ctx.overlays)?;
        let mut latest: Option<Evidence> = None;
        for (inst, _) in &hits {
            if t.evidence_excluded(ctx.refresh_of, inst.id()) {
                continue;
            }
            let e = elapsed_ticks(t, inst.duration(), ctx.at);
            let candidate = (e, inst.id(), *inst.strength(), inst.provenance());
            let better = match &latest {
                None => true,
                Some(best) => later(&candidate, best).is_lt(),
            };
            if better {
                latest = Some(candidate);
            }
        }
        let mut draft = match &latest {
            None => BeliefDraft::new(ShaferStrength::vacuous()),
            Some((e, id, s, _)) => {
                let mut d = BeliefDraft::new(s.decay_both(*e, config.loaded_lifetime as f64)?);
                d.depends_on = [NodeId::Belief(*id)].into();
                d
            }
        };
        let lead = match &latest {
            Some((e, ..)) if e.is_finite() => *e as Tick,
            _ => config.loaded_lifetime,
        };
        draft.monitors = vec![MonitorSpec {
            pattern: ctx.pattern.clone(),
            window: WindowSpec::Lookback { end: ctx.at, lead },
            overlays: ctx.overlays.clone(),
        }];
        Ok(draft)
    })
}

/// Generator that passes the trigger's strength straight through.
pub fn copy_generator<S: StrengthLike>() -> GeneratorFn<S> {
    Rc::new(|_t, input| {
        Ok(GeneratorOutcome::Fire {
            strength: input.trigger.strength().clone(),
            also_depends_on: BTreeSet::new(),
        })
    })
}

/// Generator for `(shoot X G)` with precondition `(loaded G)`: declines
/// without loaded support; otherwise the consequent is the victim's
/// current alive assessment combined with `[0, l1*s1]` — disconfirming
/// evidence proportional to both the gun being loaded and the shot having
/// happened.
pub fn shoot_generator() -> GeneratorFn<Shafer> {
    Rc::new(|t, input| {
        let loaded = input
            .preconditions
            .first()
            .map(|i| *i.strength())
            .unwrap_or_else(ShaferStrength::vacuous);
        let l1 = loaded.support_for();
        if l1 == 0.0 {
            return Ok(GeneratorOutcome::Decline);
        }
        let s1 = input.trigger.strength().support_for();
        let Some(victim) = subject_of(input.trigger.pattern()).cloned() else {
            return Ok(GeneratorOutcome::Decline);
        };
        let alive_pat = Pattern::List(vec![Pattern::Sym("alive".into()), victim]);
        let overlays = input.trigger.overlays().clone();
        let aid = t.assess(&alive_pat, input.trigger_point, &overlays)?;
        let alive_now = *t.instance(aid)?.strength();
        let shot_evidence = ShaferStrength::new(0.0, l1 * s1)?;
        let strength = alive_now.combine(&shot_evidence)?;
        Ok(GeneratorOutcome::Fire {
            strength,
            also_depends_on: [NodeId::Belief(aid)].into(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Provenance;
    use crate::net::{IntervalId, OverlayId};
    use crate::Range;

    fn pat(s: &str) -> Pattern {
        Pattern::parse(s).unwrap()
    }

    fn strength(f: f64, a: f64) -> Shafer {
        ShaferStrength::new(f, a).unwrap()
    }

    struct Desk {
        t: Tbm<Shafer>,
        ov: OverlayId,
        origin: PointId,
    }

    impl Desk {
        fn new() -> Self {
            let mut t: Tbm<Shafer> = Tbm::new();
            let ov = t.create_overlay(1).unwrap();
            let origin = t.create_point(&[ov]).unwrap();
            register_reference_calculus(&mut t, CalculusConfig::default()).unwrap();
            Desk { t, ov, origin }
        }

        fn at(&mut self, tick: Tick) -> PointId {
            let p = self.t.create_point(&[self.ov]).unwrap();
            self.t
                .add_constraint(self.origin, p, Range::exactly(tick))
                .unwrap();
            p
        }

        fn observe(&mut self, pattern: &str, p: PointId, s: Shafer) -> BeliefId {
            self.t
                .assert_belief(
                    &pat(pattern),
                    TimeRef::Point(p),
                    s,
                    Provenance::Observation,
                    &[self.ov].into(),
                )
                .unwrap()
        }

        fn assess(&mut self, pattern: &str, p: PointId) -> Shafer {
            let id = self.t.assess(&pat(pattern), p, &[self.ov].into()).unwrap();
            *self.t.instance(id).unwrap().strength()
        }

        fn rules(&mut self) -> IntervalId {
            let lo = self.at(-10_000_000_000);
            let hi = self.at(20_000_000_000);
            let active = self.t.create_interval(lo, hi).unwrap();
            let ovs: BTreeSet<OverlayId> = [self.ov].into();
            self.t
                .define_rule(
                    "birth-starts-life",
                    pat("(born ?x)"),
                    vec![],
                    pat("(alive ?x)"),
                    525_600,
                    active,
                    &ovs,
                    copy_generator(),
                )
                .unwrap();
            self.t
                .define_rule(
                    "loading-loads",
                    pat("(load ?g)"),
                    vec![],
                    pat("(loaded ?g)"),
                    525_600,
                    active,
                    &ovs,
                    copy_generator(),
                )
                .unwrap();
            self.t
                .define_rule(
                    "shot-ends-life",
                    pat("(shoot ?x ?g)"),
                    vec![pat("(loaded ?g)")],
                    pat("(alive ?x)"),
                    525_600,
                    active,
                    &ovs,
                    shoot_generator(),
                )
                .unwrap();
            active
        }
    }

    #[test]
    fn alive_with_only_a_recent_birth_is_the_birth_evidence() {
        let mut d = Desk::new();
        let birth = d.at(0);
        let query = d.at(10_512_000);
        d.observe("(born fred)", birth, strength(1.0, 0.0));
        let s = d.assess("(alive fred)", query);
        assert_eq!(s, strength(0.9, 0.0));
    }

    #[test]
    fn alive_with_no_evidence_is_vacuous() {
        let mut d = Desk::new();
        let query = d.at(100);
        let s = d.assess("(alive fred)", query);
        assert_eq!(s, ShaferStrength::vacuous());
    }

    #[test]
    fn alive_birth_outside_cutoff_gives_nothing() {
        let mut d = Desk::new();
        let birth = d.at(0);
        let query = d.at(36_792_001);
        d.observe("(born fred)", birth, strength(1.0, 0.0));
        let s = d.assess("(alive fred)", query);
        assert_eq!(s, ShaferStrength::vacuous());
    }

    #[test]
    fn alive_keeps_prior_assessment_and_rejoins_birth_evidence() {
        // Requested verbatim behavior: a later assessment keeps the prior
        // one as evidence while adding the birth evidence again, so the
        // birth's weight compounds across assessments.
        let mut d = Desk::new();
        let birth = d.at(0);
        let shot = d.at(10_512_060);
        let later = d.at(10_512_060); // same instant, distinct point
        d.observe("(born fred)", birth, strength(1.0, 0.0));
        // Plant the post-shot judgment as a fixed record with assessment
        // provenance, so this test exercises only the fold (a live
        // assessment would recompute itself from the actual evidence).
        d.t.assert_belief(
            &pat("(alive fred)"),
            TimeRef::Point(shot),
            strength(1.0 / 81.0, 719.0 / 729.0),
            Provenance::Assessment,
            &[d.ov].into(),
        )
        .unwrap();
        let s = d.assess("(alive fred)", later);
        assert!((s.support_for() - 11.0 / 91.0).abs() < 1e-12);
        assert!((s.support_against() - 719.0 / 819.0).abs() < 1e-12);
    }

    #[test]
    fn loaded_with_no_reports_is_vacuous() {
        let mut d = Desk::new();
        let query = d.at(100);
        let s = d.assess("(loaded gun1)", query);
        assert_eq!(s, ShaferStrength::vacuous());
    }

    #[test]
    fn loaded_decays_the_latest_report_by_its_age() {
        let mut d = Desk::new();
        let load = d.at(10_512_000);
        let query = d.at(10_512_060);
        d.observe("(loaded gun1)", load, strength(1.0, 0.0));
        let s = d.assess("(loaded gun1)", query);
        assert_eq!(s.support_for(), 1.0 - 60.0 / 43_200.0);
        assert_eq!(s.support_against(), 0.0);
    }

    #[test]
    fn loaded_closed_form_across_ages() {
        for e in [0_i64, 60, 21_600, 43_200, 50_000] {
            let mut d = Desk::new();
            let load = d.at(0);
            let query = d.at(e);
            d.observe("(loaded gun1)", load, strength(1.0, 0.0));
            let s = d.assess("(loaded gun1)", query);
            let expected = (1.0 - (e as f64) / 43_200.0).max(0.0);
            assert_eq!(s.support_for().to_bits(), expected.to_bits());
            assert_eq!(s.support_against(), 0.0);
        }
    }

    #[test]
    fn loaded_takes_the_latest_not_the_strongest() {
        let mut d = Desk::new();
        let early = d.at(0);
        let late = d.at(100);
        let query = d.at(160);
        d.observe("(loaded gun1)", early, strength(1.0, 0.0));
        d.observe("(loaded gun1)", late, strength(0.0, 1.0));
        let s = d.assess("(loaded gun1)", query);
        assert_eq!(s.support_for(), 0.0);
        assert_eq!(s.support_against(), 1.0 - 60.0 / 43_200.0);
    }

    #[test]
    fn loaded_refreshes_when_a_newer_report_lands_in_the_gap() {
        let mut d = Desk::new();
        let early = d.at(0);
        let late = d.at(43_000);
        let query = d.at(43_100);
        d.observe("(loaded gun1)", early, strength(1.0, 0.0));
        let id = d.t.assess(&pat("(loaded gun1)"), query, &[d.ov].into()).unwrap();
        let first = *d.t.instance(id).unwrap().strength();
        assert_eq!(first.support_for(), 1.0 - 43_100.0 / 43_200.0);
        d.observe("(loaded gun1)", late, strength(1.0, 0.0));
        let second = *d.t.instance(id).unwrap().strength();
        assert_eq!(second.support_for(), 1.0 - 100.0 / 43_200.0);
    }

    #[test]
    fn full_pipeline_shot_with_loaded_gun() {
        let mut d = Desk::new();
        d.rules();
        let birth = d.at(0);
        let load = d.at(10_512_000);
        let shot = d.at(10_512_060);
        d.observe("(born fred)", birth, strength(1.0, 0.0));
        d.observe("(load gun1)", load, strength(1.0, 0.0));
        d.observe("(shoot fred gun1)", shot, strength(1.0, 0.0));
        let window = d.t.create_interval(shot, shot).unwrap();
        let hits = d.t.fetch(&pat("(alive fred)"), window, &[d.ov].into()).unwrap();
        let newest = hits.iter().max_by_key(|(i, _)| i.id()).unwrap();
        let s = *newest.0.strength();
        assert!((s.support_for() - 1.0 / 81.0).abs() < 1e-12);
        assert!((s.support_against() - 719.0 / 729.0).abs() < 1e-12);
        assert!(s.support_against() > 0.9);
    }

    #[test]
    fn full_pipeline_without_load_declines() {
        let mut d = Desk::new();
        d.rules();
        let birth = d.at(0);
        let shot = d.at(10_512_060);
        d.observe("(born fred)", birth, strength(1.0, 0.0));
        d.observe("(shoot fred gun1)", shot, strength(1.0, 0.0));
        let window = d.t.create_interval(shot, shot).unwrap();
        let hits = d.t.fetch(&pat("(alive fred)"), window, &[d.ov].into()).unwrap();
        // Only the alive assessment created during the search exists, and
        // the fallback judgment is the birth evidence alone.
        let s = d.assess("(alive fred)", shot);
        assert_eq!(s, strength(0.9, 0.0));
        assert!(hits
            .iter()
            .all(|(i, _)| i.source() != crate::engine::Source::App));
        let declined = d
            .t
            .firing_records()
            .filter(|r| matches!(r.outcome, crate::rules::FiringOutcome::Declined))
            .count();
        assert_eq!(declined, 1);
    }

    #[test]
    fn full_pipeline_late_load_matches_batch_run() {
        let mut d = Desk::new();
        d.rules();
        let birth = d.at(0);
        let load = d.at(10_512_000);
        let shot = d.at(10_512_060);
        d.observe("(born fred)", birth, strength(1.0, 0.0));
        d.observe("(shoot fred gun1)", shot, strength(1.0, 0.0));
        let window = d.t.create_interval(shot, shot).unwrap();
        let first = d.t.fetch(&pat("(alive fred)"), window, &[d.ov].into()).unwrap();
        let fallback = d.assess("(alive fred)", shot);
        assert_eq!(fallback, strength(0.9, 0.0));
        let before = first.len();

        // The late arrival: monitors fire, the declined firing retries,
        // and the consequent lands — all in this one transaction.
        d.observe("(load gun1)", load, strength(1.0, 0.0));

        let hits = d.t.fetch(&pat("(alive fred)"), window, &[d.ov].into()).unwrap();
        assert!(hits.len() > before);
        let newest = hits.iter().max_by_key(|(i, _)| i.id()).unwrap();
        let s = *newest.0.strength();
        assert!((s.support_for() - 1.0 / 81.0).abs() < 1e-12);
        assert!((s.support_against() - 719.0 / 729.0).abs() < 1e-12);
        let fired = d
            .t
            .firing_records()
            .filter(|r| matches!(r.outcome, crate::rules::FiringOutcome::Fired(_)))
            .count();
        assert!(fired >= 2); // the load copy-through and the shot
    }

    #[test]
    fn shoot_generator_scales_by_shot_support() {
        let mut d = Desk::new();
        d.rules();
        let load = d.at(10_512_000);
        let shot = d.at(10_512_060);
        d.observe("(load gun1)", load, strength(1.0, 0.0));
        d.observe("(shoot fred gun1)", shot, strength(0.0, 0.0));
        let window = d.t.create_interval(shot, shot).unwrap();
        let hits = d.t.fetch(&pat("(alive fred)"), window, &[d.ov].into()).unwrap();
        // s1 = 0: combining with [0, 0] leaves the alive assessment as is,
        // which is vacuous (no birth ever observed).
        let newest = hits.iter().max_by_key(|(i, _)| i.id()).unwrap();
        assert_eq!(*newest.0.strength(), ShaferStrength::vacuous());
    }
}
