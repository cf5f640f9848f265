//! Scenario execution and reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde_json::json;
use tbm_core::calculus::register_reference_calculus;
use tbm_core::calculus::generator_by_name;
use tbm_core::pattern::Pattern;
use tbm_core::{
    Extended, IntervalId, OverlayId, PointId, Provenance, Range, Shafer, Tbm, TbmError, TimeRef,
    TraceEvent,
};

use crate::scenario::{Anchor, Scenario, Step};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// All events in one transaction, then the queries.
    Batch,
    /// One transaction per script step, in file order.
    Stepped,
}

#[derive(Debug, Clone)]
pub struct QueryReport {
    pub pattern: String,
    /// Ticks from the origin to the query point.
    pub at: i64,
    pub support_for: f64,
    pub support_against: f64,
    /// Raw node ids the answering belief depends on, sorted.
    pub depends_on: Vec<u64>,
    /// Unmet expectations attached to this query.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub queries: Vec<QueryReport>,
    pub trace: Vec<String>,
}

impl Report {
    pub fn expectations_met(&self) -> bool {
        self.queries.iter().all(|q| q.failures.is_empty())
    }

    pub fn render_text(&self, with_trace: bool) -> String {
        let mut out = String::new();
        for q in &self.queries {
            let _ = writeln!(out, "query {} @ {}", q.pattern, q.at);
            let _ = writeln!(out, "  for       {:.12e}", q.support_for);
            let _ = writeln!(out, "  against   {:.12e}", q.support_against);
            let ids: Vec<String> = q.depends_on.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "  depends on [{}]", ids.join(", "));
            for f in &q.failures {
                let _ = writeln!(out, "  EXPECT FAILED: {f}");
            }
        }
        if with_trace {
            for line in &self.trace {
                let _ = writeln!(out, "trace: {line}");
            }
        }
        out
    }

    pub fn render_json(&self, with_trace: bool) -> String {
        let queries: Vec<serde_json::Value> = self
            .queries
            .iter()
            .map(|q| {
                json!({
                    "pattern": q.pattern,
                    "at": q.at,
                    "for": q.support_for,
                    "against": q.support_against,
                    "depends_on": q.depends_on,
                    "failures": q.failures,
                })
            })
            .collect();
        let trace: Vec<&String> = if with_trace {
            self.trace.iter().collect()
        } else {
            Vec::new()
        };
        let doc = json!({ "queries": queries, "trace": trace });
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

fn trace_line(e: &TraceEvent) -> String {
    match e {
        TraceEvent::MonitorFired { monitor, belief } => {
            format!("MONITOR {monitor} matched belief {belief}")
        }
        TraceEvent::Fired {
            rule_name,
            trigger,
            consequent,
            ..
        } => format!("FIRED {rule_name}: trigger {trigger} -> consequent {consequent}"),
        TraceEvent::Declined {
            rule_name, trigger, ..
        } => format!("DECLINED {rule_name}: trigger {trigger}"),
        TraceEvent::Retried { rule, trigger } => {
            format!("RETRIED rule {rule}: trigger {trigger}")
        }
        TraceEvent::Signaled { node } => format!("SIGNALLED {node}"),
    }
}

struct Stage {
    t: Tbm<Shafer>,
    overlays: BTreeSet<OverlayId>,
    origin: PointId,
    points: BTreeMap<String, PointId>,
    query_intervals: BTreeMap<PointId, IntervalId>,
}

impl Stage {
    fn build(sc: &Scenario) -> Result<Stage, CliError> {
        let mut t: Tbm<Shafer> = Tbm::new();
        register_reference_calculus(&mut t, sc.config)?;

        let mut overlay_list = Vec::new();
        for o in &sc.overlays {
            overlay_list.push(t.create_overlay(o.grain)?);
        }
        if overlay_list.is_empty() {
            overlay_list.push(t.create_overlay(1)?);
        }
        let overlays: BTreeSet<OverlayId> = overlay_list.iter().copied().collect();

        let mut points = BTreeMap::new();
        let mut origin = None;
        for p in &sc.points {
            let pid = t.create_point(&overlay_list)?;
            match &p.anchor {
                Anchor::Origin => origin = Some(pid),
                Anchor::At(ticks) => {
                    let base = origin.expect("parser requires the origin first");
                    t.add_constraint(base, pid, Range::exactly(*ticks))?;
                }
                Anchor::After { base, lo, hi } => {
                    let base = points[base.as_str()];
                    t.add_constraint(base, pid, Range::new(*lo, *hi)?)?;
                }
            }
            points.insert(p.name.clone(), pid);
        }
        let origin = origin.expect("parser requires an origin");

        let mut intervals = BTreeMap::new();
        for iv in &sc.intervals {
            let id = t.create_interval(points[iv.from.as_str()], points[iv.to.as_str()])?;
            intervals.insert(iv.name.clone(), id);
        }

        let mut default_active: Option<IntervalId> = None;
        for r in &sc.rules {
            let active = match &r.active {
                Some(name) => intervals[name.as_str()],
                None => match default_active {
                    Some(iv) => iv,
                    None => {
                        let lo = t.create_point(&overlay_list)?;
                        let hi = t.create_point(&overlay_list)?;
                        t.add_constraint(origin, lo, Range::exactly(-10_000_000_000))?;
                        t.add_constraint(origin, hi, Range::exactly(10_000_000_000))?;
                        let iv = t.create_interval(lo, hi)?;
                        default_active = Some(iv);
                        iv
                    }
                },
            };
            let generator =
                generator_by_name(&r.generator).expect("parser validated the generator name");
            t.define_rule(
                &r.name,
                r.trigger.clone(),
                r.pre.clone(),
                r.consequent.clone(),
                r.duration,
                active,
                &overlays,
                generator,
            )?;
        }

        Ok(Stage {
            t,
            overlays,
            origin,
            points,
            query_intervals: BTreeMap::new(),
        })
    }

    fn assert(
        &mut self,
        pattern: &Pattern,
        at: &str,
        strength: (f64, f64),
    ) -> Result<(), TbmError> {
        let pid = self.points[at];
        let s = Shafer::new(strength.0, strength.1)?;
        self.t.assert_belief(
            pattern,
            TimeRef::Point(pid),
            s,
            Provenance::Observation,
            &self.overlays,
        )?;
        Ok(())
    }

    fn query(&mut self, pattern: &Pattern, at: &str) -> Result<QueryReport, TbmError> {
        let pid = self.points[at];
        let iv = match self.query_intervals.get(&pid) {
            Some(iv) => *iv,
            None => {
                let iv = self.t.create_interval(pid, pid)?;
                self.query_intervals.insert(pid, iv);
                iv
            }
        };
        let hits = self.t.fetch(pattern, iv, &self.overlays)?;
        let mut best = hits.iter().map(|(inst, _)| inst.id()).max();
        if best.is_none() && pattern.is_ground() {
            best = match self.t.assess(pattern, pid, &self.overlays) {
                Ok(id) => Some(id),
                Err(TbmError::NoAssessor(_)) => None,
                Err(e) => return Err(e),
            };
        }
        let (support_for, support_against, depends_on) = match best {
            Some(id) => {
                let s = *self.t.instance(id)?.strength();
                let mut deps: Vec<u64> =
                    self.t.depends_on(id)?.iter().map(|n| n.raw()).collect();
                deps.sort_unstable();
                (s.support_for(), s.support_against(), deps)
            }
            None => (0.0, 0.0, Vec::new()),
        };
        let at_ticks = match self.t.net().upper_bound(self.origin, pid)? {
            Extended::Finite(v) => v,
            _ => 0,
        };
        Ok(QueryReport {
            pattern: pattern.to_string(),
            at: at_ticks,
            support_for,
            support_against,
            depends_on,
            failures: Vec::new(),
        })
    }
}

fn check_expect(
    q: &mut QueryReport,
    support_for: Option<f64>,
    support_against: Option<f64>,
    tol: f64,
) {
    if let Some(want) = support_for {
        if !((q.support_for - want).abs() <= tol) {
            q.failures.push(format!(
                "for is {:.12e}, expected {:.12e} (tolerance {:e})",
                q.support_for, want, tol
            ));
        }
    }
    if let Some(want) = support_against {
        if !((q.support_against - want).abs() <= tol) {
            q.failures.push(format!(
                "against is {:.12e}, expected {:.12e} (tolerance {:e})",
                q.support_against, want, tol
            ));
        }
    }
}

pub fn execute(sc: &Scenario, mode: Mode) -> Result<Report, CliError> {
    let mut stage = Stage::build(sc)?;
    let mut report = Report::default();

    match mode {
        Mode::Batch => {
            let mut failing = 0usize;
            let asserts: Vec<(usize, &Pattern, &str, (f64, f64))> = sc
                .script
                .iter()
                .enumerate()
                .filter_map(|(i, s)| match s {
                    Step::Assert {
                        pattern,
                        at,
                        strength,
                    } => Some((i + 1, pattern, at.as_str(), *strength)),
                    _ => None,
                })
                .collect();
            if !asserts.is_empty() {
                let t = &mut stage.t;
                let points = &stage.points;
                let overlays = &stage.overlays;
                t.transaction(|t| {
                    for (i, pattern, at, strength) in &asserts {
                        failing = *i;
                        let s = Shafer::new(strength.0, strength.1)?;
                        t.assert_belief(
                            pattern,
                            TimeRef::Point(points[*at]),
                            s,
                            Provenance::Observation,
                            overlays,
                        )?;
                    }
                    Ok(())
                })
                .map_err(|e| CliError::Step {
                    step: failing,
                    source: e,
                })?;
            }
            for (i, step) in sc.script.iter().enumerate() {
                match step {
                    Step::Assert { .. } => {}
                    Step::Query { pattern, at } => {
                        let q = stage.query(pattern, at).map_err(|e| CliError::Step {
                            step: i + 1,
                            source: e,
                        })?;
                        report.queries.push(q);
                    }
                    Step::Expect {
                        support_for,
                        support_against,
                        tol,
                    } => {
                        let q = report.queries.last_mut().expect("parser requires a query");
                        check_expect(q, *support_for, *support_against, *tol);
                    }
                }
            }
        }
        Mode::Stepped => {
            for (i, step) in sc.script.iter().enumerate() {
                let at_step = |e| CliError::Step {
                    step: i + 1,
                    source: e,
                };
                match step {
                    Step::Assert {
                        pattern,
                        at,
                        strength,
                    } => stage.assert(pattern, at, *strength).map_err(at_step)?,
                    Step::Query { pattern, at } => {
                        report.queries.push(stage.query(pattern, at).map_err(at_step)?);
                    }
                    Step::Expect {
                        support_for,
                        support_against,
                        tol,
                    } => {
                        let q = report.queries.last_mut().expect("parser requires a query");
                        check_expect(q, *support_for, *support_against, *tol);
                    }
                }
            }
        }
    }

    report.trace = stage.t.stats().trace.iter().map(trace_line).collect();
    Ok(report)
}
