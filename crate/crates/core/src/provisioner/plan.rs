//! Deployment planning: topology in, ordered stages out.
//!
//! Stages are dependency levels processed from the sinks upward — every node
//! lands one stage after the deepest thing it depends on, so hosts are always
//! installed before what they host. Both relations contribute to the
//! levelling: a component that connects to another is scheduled after it,
//! which is what puts an application artifact later than the database stack
//! it talks to. Should the connects_to edges form a cycle (legal — two
//! services may call each other), levelling falls back to the hosted_on
//! subgraph alone, which validation guarantees acyclic. Connection
//! establishment itself always runs after all stages.

use crate::model::topology::{Relation, TopologyModel};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// One connects_to establishment, scheduled after both endpoints' stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionStep {
    pub from: String,
    pub to: String,
    /// Index of the last stage that must complete before this connection.
    pub after_stage: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    /// Node ids grouped by install order; nodes within a stage are
    /// independent and may install in parallel. Ids are sorted within each
    /// stage, so the plan is deterministic.
    pub stages: Vec<Vec<String>>,
    pub connections: Vec<ConnectionStep>,
}

impl DeploymentPlan {
    pub fn stage_of(&self, node: &str) -> Option<usize> {
        self.stages
            .iter()
            .position(|stage| stage.iter().any(|n| n == node))
    }

    pub fn node_count(&self) -> usize {
        self.stages.iter().map(|s| s.len()).sum()
    }

    /// All node ids in install order (stage by stage).
    pub fn nodes_in_order(&self) -> Vec<String> {
        self.stages.iter().flatten().cloned().collect()
    }
}

/// Plan the whole topology.
pub fn plan(topology: &TopologyModel) -> DeploymentPlan {
    plan_scoped(topology, &topology.node_ids())
}

/// Plan only `scope` (a fragment's node set); edges with an endpoint outside
/// the scope are ignored.
pub fn plan_scoped(topology: &TopologyModel, scope: &BTreeSet<String>) -> DeploymentPlan {
    let levels = match levels_for(topology, scope, true) {
        Some(levels) => levels,
        // union graph has a cycle through connects_to edges
        None => levels_for(topology, scope, false)
            .expect("hosted_on subgraph is acyclic by validation"),
    };

    let mut stages: Vec<Vec<String>> = Vec::new();
    for (node, level) in &levels {
        if stages.len() <= *level {
            stages.resize(*level + 1, Vec::new());
        }
        stages[*level].push(node.clone());
    }
    // BTreeMap iteration already walks node ids in order, so each stage is
    // sorted as built; the resize above never leaves an all-empty stage
    // because levels are contiguous by construction.

    let mut connections = Vec::new();
    for edge in topology.connects_to_edges() {
        if !scope.contains(&edge.from) || !scope.contains(&edge.to) {
            continue;
        }
        let after_stage = levels[&edge.from].max(levels[&edge.to]);
        connections.push(ConnectionStep {
            from: edge.from.clone(),
            to: edge.to.clone(),
            after_stage,
        });
    }

    DeploymentPlan { stages, connections }
}

/// Longest-path levels over the dependency graph restricted to `scope`.
/// Returns None if the considered edge set is cyclic.
fn levels_for(
    topology: &TopologyModel,
    scope: &BTreeSet<String>,
    include_connects_to: bool,
) -> Option<BTreeMap<String, usize>> {
    let mut deps: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for id in scope {
        deps.insert(id.as_str(), Vec::new());
    }
    for edge in &topology.edges {
        if !scope.contains(&edge.from) || !scope.contains(&edge.to) {
            continue;
        }
        if edge.relation == Relation::ConnectsTo && !include_connects_to {
            continue;
        }
        deps.get_mut(edge.from.as_str())
            .expect("scope nodes were seeded")
            .push(edge.to.as_str());
    }

    let mut levels: BTreeMap<String, usize> = BTreeMap::new();
    // fixed-point relaxation is fine at fixture scale; each pass settles at
    // least one more level, so `scope.len()` passes suffice on a DAG
    for _ in 0..=scope.len() {
        let mut changed = false;
        for (node, targets) in &deps {
            if levels.contains_key(*node) {
                continue;
            }
            let mut level = 0;
            let mut ready = true;
            for target in targets {
                match levels.get(*target) {
                    Some(l) => level = level.max(l + 1),
                    None => {
                        ready = false;
                        break;
                    }
                }
            }
            if ready {
                levels.insert((*node).to_string(), level);
                changed = true;
            }
        }
        if levels.len() == scope.len() {
            return Some(levels);
        }
        if !changed {
            return None;
        }
    }
    None
}
