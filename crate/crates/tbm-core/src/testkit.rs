//! Deterministic generators and independent reference implementations
//! used by the randomized test suites.
//!
//! The RNG is a fixed SplitMix64 rather than an external generator so the
//! sampled cases are reproducible bit-for-bit across platforms and
//! dependency upgrades: a failing seed reported on one machine replays
//! exactly anywhere. The reference implementations deliberately use
//! different algorithms from the production code (single-source relaxation
//! instead of incremental tightening, subset convolution instead of the
//! closed-form combination) so agreement is meaningful.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use crate::calculus::copy_generator;
use crate::engine::{Provenance, Tbm, TimeRef};
use crate::net::{OverlayId, PointId, TemporalNet};
use crate::pattern::Pattern;
use crate::time::{Extended, TickRange};
use crate::{Range, TbmError};

/// SplitMix64: tiny, seedable, and stable forever.
pub struct Mix(u64);

impl Mix {
    pub fn new(seed: u64) -> Self {
        Mix(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    /// Uniform in `lo..=hi`.
    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.below((hi - lo + 1) as u64) as i64
    }

    /// True with probability `percent / 100`.
    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

// ---------------------------------------------------------------------------
// Temporal network reference: Bellman-Ford relaxation.

/// True when the difference-constraint system `dist[v] - dist[u] <= w` for
/// every edge has a solution (no negative cycle).
pub fn edges_consistent(n: usize, edges: &[(usize, usize, i64)]) -> bool {
    let mut dist = vec![0i64; n];
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, w) in edges {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            return true;
        }
    }
    edges.iter().all(|&(u, v, w)| dist[u] + w >= dist[v])
}

/// All-pairs tightest upper bounds by single-source relaxation from every
/// point. Callers must check `edges_consistent` first.
pub fn edge_bounds(n: usize, edges: &[(usize, usize, i64)]) -> Vec<Vec<Extended<i64>>> {
    (0..n)
        .map(|s| {
            let mut dist = vec![Extended::PosInf; n];
            dist[s] = Extended::Finite(0);
            for _ in 0..n {
                for &(u, v, w) in edges {
                    if let Extended::Finite(du) = dist[u] {
                        let cand = Extended::Finite(du + w);
                        if cand < dist[v] {
                            dist[v] = cand;
                        }
                    }
                }
            }
            dist
        })
        .collect()
}

/// Drive one randomly grown network against the reference implementation.
///
/// Draws up to 12 points and 30 constraints with finite legs in
/// `[-50, 50]` and roughly one leg in ten unbounded, adding them one at a
/// time. Every accepted constraint must leave the derived bounds equal to
/// the reference relaxation; every rejected one must be refused by the
/// reference too and must leave the derived matrix untouched bit-for-bit.
/// Returns (points, accepted, rejected).
pub fn check_random_net(seed: u64) -> (usize, usize, usize) {
    let mut mix = Mix::new(seed);
    let n = 2 + mix.below(11) as usize;
    let mut net: TemporalNet<i64> = TemporalNet::new();
    let ov = net.create_overlay(1).unwrap();
    let pts: Vec<PointId> = (0..n).map(|_| net.create_point(&[ov]).unwrap()).collect();
    let attempts = 1 + mix.below(30) as usize;
    let mut edges: Vec<(usize, usize, i64)> = Vec::new();
    let (mut accepted, mut rejected) = (0, 0);
    for _ in 0..attempts {
        let a = mix.below(n as u64) as usize;
        let b = mix.below(n as u64) as usize;
        let lo = if mix.chance(10) {
            Extended::NegInf
        } else {
            Extended::Finite(mix.range(-50, 50))
        };
        let hi = if mix.chance(10) {
            Extended::PosInf
        } else {
            Extended::Finite(mix.range(-50, 50))
        };
        let (lo, hi) = match (lo, hi) {
            (Extended::Finite(x), Extended::Finite(y)) if x > y => {
                (Extended::Finite(y), Extended::Finite(x))
            }
            pair => pair,
        };
        let range = TickRange::new(lo, hi).unwrap();
        let mut cand = edges.clone();
        if let Extended::Finite(h) = hi {
            cand.push((a, b, h));
        }
        if let Extended::Finite(l) = lo {
            cand.push((b, a, -l));
        }
        let before = net.derived_matrix();
        match net.add_constraint(pts[a], pts[b], range) {
            Ok(_) => {
                assert!(
                    edges_consistent(n, &cand),
                    "seed {seed}: accepted a constraint the reference refuses"
                );
                edges = cand;
                accepted += 1;
            }
            Err(TbmError::Inconsistent) => {
                assert!(
                    !edges_consistent(n, &cand),
                    "seed {seed}: refused a constraint the reference accepts"
                );
                assert_eq!(
                    net.derived_matrix(),
                    before,
                    "seed {seed}: refused add disturbed the derived bounds"
                );
                rejected += 1;
            }
            Err(e) => panic!("seed {seed}: unexpected error {e}"),
        }
    }
    let want = edge_bounds(n, &edges);
    for (i, row) in want.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            assert_eq!(
                net.upper_bound(pts[i], pts[j]).unwrap(),
                *b,
                "seed {seed}: bound {i}->{j} disagrees with the reference"
            );
        }
    }
    (n, accepted, rejected)
}

// ---------------------------------------------------------------------------
// Evidence combination reference: subset convolution over the frame.

/// Combine two mass assignments over the two-element frame by explicit
/// subset convolution. Index `i` holds the mass of the subset with bit
/// encoding `i + 1` (1 = for, 2 = against, 3 = either). Returns `None` on
/// total conflict.
pub fn combine_masses(a: [f64; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut out = [0.0f64; 3];
    let mut conflict = 0.0;
    for (i, &ma) in a.iter().enumerate() {
        for (j, &mb) in b.iter().enumerate() {
            let meet = (i + 1) & (j + 1);
            if meet == 0 {
                conflict += ma * mb;
            } else {
                out[meet - 1] += ma * mb;
            }
        }
    }
    let norm = 1.0 - conflict;
    if norm <= 0.0 {
        return None;
    }
    Some([out[0] / norm, out[1] / norm, out[2] / norm])
}

/// A valid (for, against) pair, uniform over the triangle where both
/// components are nonnegative and sum to at most one.
pub fn random_strength(mix: &mut Mix) -> (f64, f64) {
    let mut a = mix.unit();
    let mut b = mix.unit();
    if a + b > 1.0 {
        a = 1.0 - a;
        b = 1.0 - b;
    }
    (a, b)
}

// ---------------------------------------------------------------------------
// Monitor completeness trial.

/// Run a random interleaving of monitor installs and assertions, counting
/// hook invocations per (monitor, belief) pair. Returns the observed
/// counts and the expected counts computed arithmetically from the known
/// construction times: exactly one invocation for every pair where the
/// monitor came first, the patterns unify, and the instant lies inside the
/// window; zero everywhere else.
#[allow(clippy::type_complexity)]
pub fn monitor_trial(
    seed: u64,
    ops: usize,
) -> (BTreeMap<(u64, u64), u64>, BTreeMap<(u64, u64), u64>) {
    let mut mix = Mix::new(seed);
    let mut t: Tbm<i32> = Tbm::new();
    let ov = t.create_overlay(1).unwrap();
    let origin = t.create_point(&[ov]).unwrap();
    let ovs: BTreeSet<OverlayId> = [ov].into();
    let counts: Rc<RefCell<BTreeMap<(u64, u64), u64>>> = Rc::default();
    let heads = ["red", "blue"];
    let subs = ["x", "y"];
    let mut monitors: Vec<(u64, Pattern, i64, i64)> = Vec::new();
    let mut beliefs: Vec<(u64, Pattern, i64)> = Vec::new();

    let mk_point = |t: &mut Tbm<i32>, tick: i64| {
        let p = t.create_point(&[ov]).unwrap();
        t.add_constraint(origin, p, Range::exactly(tick)).unwrap();
        p
    };

    for _ in 0..ops {
        let head = heads[mix.below(2) as usize];
        if mix.chance(40) {
            let sub = if mix.chance(30) {
                "?s".to_string()
            } else {
                subs[mix.below(2) as usize].to_string()
            };
            let pattern = Pattern::parse(&format!("({head} {sub})")).unwrap();
            let lo = mix.range(-100, 100);
            let hi = lo + mix.range(0, 40);
            let b = mk_point(&mut t, lo);
            let e = mk_point(&mut t, hi);
            let iv = t.create_interval(b, e).unwrap();
            let c = counts.clone();
            let mid = t
                .add_monitor(
                    &pattern,
                    iv,
                    &ovs,
                    Rc::new(move |_t, fire| {
                        *c.borrow_mut()
                            .entry((fire.monitor.0, fire.belief.0))
                            .or_insert(0) += 1;
                        Ok(())
                    }),
                )
                .unwrap();
            monitors.push((mid.0, pattern, lo, hi));
        } else {
            let sub = subs[mix.below(2) as usize];
            let pattern = Pattern::parse(&format!("({head} {sub})")).unwrap();
            let tick = mix.range(-100, 100);
            let p = mk_point(&mut t, tick);
            let bid = t
                .assert_belief(&pattern, TimeRef::Point(p), 1, Provenance::Observation, &ovs)
                .unwrap();
            beliefs.push((bid.0, pattern, tick));
        }
    }

    let mut expected = BTreeMap::new();
    for (mid, mpat, lo, hi) in &monitors {
        for (bid, bpat, tick) in &beliefs {
            if mid < bid && mpat.unify(bpat).is_some() && (*lo..=*hi).contains(tick) {
                expected.insert((*mid, *bid), 1);
            }
        }
    }
    let actual = counts.borrow().clone();
    (actual, expected)
}

// ---------------------------------------------------------------------------
// Order-independence trial: demand-driven versus eager evaluation.

pub const SCENARIO_HEADS: [&str; 5] = ["alpha", "beta", "gamma", "delta", "omega"];

/// A small random knowledge base: pass-through rules over a fixed head
/// alphabet (triggers always map to strictly later heads, so chains are
/// acyclic), timestamped observations, and windowed probes.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    /// (trigger head, consequent head) index pairs, trigger < consequent.
    pub rules: Vec<(usize, usize)>,
    /// (head, tick, strength) observations.
    pub events: Vec<(usize, i64, i32)>,
    /// (head, tick) probes; each looks back 30 ticks.
    pub probes: Vec<(usize, i64)>,
}

pub fn random_scenario(mix: &mut Mix) -> ScenarioSpec {
    let mut rules = BTreeSet::new();
    for _ in 0..1 + mix.below(3) {
        let a = mix.below(4) as usize;
        let b = a + 1 + mix.below((SCENARIO_HEADS.len() - a - 1) as u64) as usize;
        rules.insert((a, b));
    }
    let events = (0..1 + mix.below(10))
        .map(|_| {
            (
                mix.below(SCENARIO_HEADS.len() as u64) as usize,
                mix.range(0, 50),
                1 + mix.below(9) as i32,
            )
        })
        .collect();
    let probes = (0..1 + mix.below(4))
        .map(|_| (mix.below(SCENARIO_HEADS.len() as u64) as usize, mix.range(0, 60)))
        .collect();
    ScenarioSpec {
        rules: rules.into_iter().collect(),
        events,
        probes,
    }
}

struct Bench {
    t: Tbm<i32>,
    ov: OverlayId,
    origin: PointId,
    points: BTreeMap<i64, PointId>,
    ticks: BTreeMap<PointId, i64>,
}

impl Bench {
    fn new() -> Self {
        let mut t: Tbm<i32> = Tbm::new();
        let ov = t.create_overlay(1).unwrap();
        let origin = t.create_point(&[ov]).unwrap();
        let mut b = Bench {
            t,
            ov,
            origin,
            points: BTreeMap::new(),
            ticks: BTreeMap::new(),
        };
        b.points.insert(0, origin);
        b.ticks.insert(origin, 0);
        b
    }

    fn at(&mut self, tick: i64) -> PointId {
        if let Some(p) = self.points.get(&tick) {
            return *p;
        }
        let p = self.t.create_point(&[self.ov]).unwrap();
        self.t
            .add_constraint(self.origin, p, Range::exactly(tick))
            .unwrap();
        self.points.insert(tick, p);
        self.ticks.insert(p, tick);
        p
    }

    fn probe_all(&mut self, spec: &ScenarioSpec, out: &mut BTreeSet<(String, i64, i32)>) {
        let ovs: BTreeSet<OverlayId> = [self.ov].into();
        for &(h, tick) in &spec.probes {
            let b = self.at(tick - 30);
            let e = self.at(tick);
            let iv = self.t.create_interval(b, e).unwrap();
            let query = Pattern::parse(&format!("({} ?s)", SCENARIO_HEADS[h])).unwrap();
            for (inst, _) in self.t.fetch(&query, iv, &ovs).unwrap() {
                let TimeRef::Point(p) = inst.duration() else {
                    panic!("scenario instances are point-shaped");
                };
                out.insert((inst.pattern().to_string(), self.ticks[&p], *inst.strength()));
            }
        }
    }
}

/// Run a scenario to quiescence and collect what the probes see at the
/// end. With `eager`, every probe runs again after each observation, so
/// rules fire as early as possible; otherwise everything waits for the
/// final probe pass. The two schedules must converge on the same answers.
pub fn run_scenario(spec: &ScenarioSpec, eager: bool) -> BTreeSet<(String, i64, i32)> {
    let mut bench = Bench::new();
    let ovs: BTreeSet<OverlayId> = [bench.ov].into();
    let lo = bench.at(-1_000);
    let hi = bench.at(1_000);
    let active = bench.t.create_interval(lo, hi).unwrap();
    for (i, &(a, b)) in spec.rules.iter().enumerate() {
        bench
            .t
            .define_rule(
                &format!("r{i}"),
                Pattern::parse(&format!("({} ?s)", SCENARIO_HEADS[a])).unwrap(),
                vec![],
                Pattern::parse(&format!("({} ?s)", SCENARIO_HEADS[b])).unwrap(),
                20,
                active,
                &ovs,
                copy_generator(),
            )
            .unwrap();
    }
    let mut scratch = BTreeSet::new();
    for &(h, tick, s) in &spec.events {
        let p = bench.at(tick);
        let pattern = Pattern::parse(&format!("({} it)", SCENARIO_HEADS[h])).unwrap();
        bench
            .t
            .assert_belief(&pattern, TimeRef::Point(p), s, Provenance::Observation, &ovs)
            .unwrap();
        if eager {
            bench.probe_all(spec, &mut scratch);
        }
    }
    let mut out = BTreeSet::new();
    bench.probe_all(spec, &mut out);
    out
}
