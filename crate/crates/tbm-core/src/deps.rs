//! Dependency graph among engine objects.
//!
//! Nodes are beliefs, monitors, rules, firing records, constraints, and
//! watched distance estimates. An edge from a dependency to a dependent
//! means "when this changes, signal that". The graph is kept acyclic;
//! attempts to close a cycle fail without partial effect.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::TbmError;
use crate::net::ConstraintId;

macro_rules! engine_id {
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

engine_id!(BeliefId);
engine_id!(MonitorId);
engine_id!(RuleId);
engine_id!(FiringId);
engine_id!(DistanceId);

/// Anything a belief (or firing record) can depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Belief(BeliefId),
    Monitor(MonitorId),
    Rule(RuleId),
    Constraint(ConstraintId),
    Firing(FiringId),
    Distance(DistanceId),
}

impl NodeId {
    /// Raw id for reports. Engine-minted ids share one counter and never
    /// collide; constraint ids come from the network's own counter.
    pub fn raw(&self) -> u64 {
        match self {
            NodeId::Belief(id) => id.0,
            NodeId::Monitor(id) => id.0,
            NodeId::Rule(id) => id.0,
            NodeId::Constraint(id) => id.0,
            NodeId::Firing(id) => id.0,
            NodeId::Distance(id) => id.0,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Belief(id) => write!(f, "belief:{id}"),
            NodeId::Monitor(id) => write!(f, "monitor:{id}"),
            NodeId::Rule(id) => write!(f, "rule:{id}"),
            NodeId::Constraint(id) => write!(f, "constraint:{id}"),
            NodeId::Firing(id) => write!(f, "firing:{id}"),
            NodeId::Distance(id) => write!(f, "distance:{id}"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DepGraph {
    /// dependency -> dependents signalled when it changes
    dependents: BTreeMap<NodeId, BTreeSet<NodeId>>,
    /// dependent -> its dependencies
    dependencies: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl DepGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dependencies_of(&self, n: NodeId) -> BTreeSet<NodeId> {
        self.dependencies.get(&n).cloned().unwrap_or_default()
    }

    pub fn dependents_of(&self, n: NodeId) -> BTreeSet<NodeId> {
        self.dependents.get(&n).cloned().unwrap_or_default()
    }

    /// Whether a change to `from` can reach `to` through dependent edges.
    pub fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        if from == to {
            return true;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if let Some(deps) = self.dependents.get(&n) {
                for &d in deps {
                    if d == to {
                        return true;
                    }
                    if seen.insert(d) {
                        stack.push(d);
                    }
                }
            }
        }
        false
    }

    /// Replace `dependent`'s dependency set. Validates every new edge
    /// before touching anything: an edge whose source is reachable from
    /// `dependent` would close a cycle and fails the whole call.
    pub fn set_dependencies(
        &mut self,
        dependent: NodeId,
        deps: &BTreeSet<NodeId>,
    ) -> Result<(), TbmError> {
        for &d in deps {
            if d == dependent || self.reaches(dependent, d) {
                return Err(TbmError::CyclicDependency {
                    from: d.raw(),
                    to: dependent.raw(),
                });
            }
        }
        let old = self.dependencies.remove(&dependent).unwrap_or_default();
        for d in &old {
            if let Some(set) = self.dependents.get_mut(d) {
                set.remove(&dependent);
                if set.is_empty() {
                    self.dependents.remove(d);
                }
            }
        }
        if !deps.is_empty() {
            self.dependencies.insert(dependent, deps.clone());
            for &d in deps {
                self.dependents.entry(d).or_default().insert(dependent);
            }
        }
        Ok(())
    }

    /// Drop a node and all its edges; returns the dependents that were
    /// pointing at it so the caller can signal them.
    pub fn remove_node(&mut self, n: NodeId) -> BTreeSet<NodeId> {
        let dependents = self.dependents.remove(&n).unwrap_or_default();
        for d in &dependents {
            if let Some(set) = self.dependencies.get_mut(d) {
                set.remove(&n);
            }
        }
        if let Some(deps) = self.dependencies.remove(&n) {
            for d in deps {
                if let Some(set) = self.dependents.get_mut(&d) {
                    set.remove(&n);
                }
            }
        }
        dependents
    }

    /// Deterministic topological position of every node with edges:
    /// dependencies come before dependents, ties in id order.
    pub fn topo_positions(&self) -> BTreeMap<NodeId, usize> {
        let mut indeg: BTreeMap<NodeId, usize> = BTreeMap::new();
        for (dep, dependents) in &self.dependents {
            indeg.entry(*dep).or_insert(0);
            for d in dependents {
                *indeg.entry(*d).or_insert(0) += 1;
            }
        }
        let mut frontier: BTreeSet<NodeId> = indeg
            .iter()
            .filter(|(_, deg)| **deg == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut pos = BTreeMap::new();
        let mut next = 0usize;
        while let Some(n) = frontier.pop_first() {
            pos.insert(n, next);
            next += 1;
            if let Some(dependents) = self.dependents.get(&n) {
                for d in dependents {
                    let deg = indeg.get_mut(d).unwrap();
                    *deg -= 1;
                    if *deg == 0 {
                        frontier.insert(*d);
                    }
                }
            }
        }
        pos
    }
}
