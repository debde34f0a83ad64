//! The topology model: a directed graph whose nodes are deployable artifacts
//! and whose edges are dependencies. Edges point from the dependent artifact
//! to its dependency (a Java program is `hosted_on` the JVM it needs), so
//! provisioning walks them in reverse, bottom-to-top.
//!
//! File format (JSON): `{id, nodes[], edges[]}` with nodes `{id, type,
//! installer, properties{}}` and edges `{from, to, relation}` where relation
//! is `hosted_on` or `connects_to`.

use crate::model::workflow::WorkflowModel;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyModel {
    pub id: String,
    pub nodes: Vec<TopologyNode>,
    #[serde(default)]
    pub edges: Vec<TopologyEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyNode {
    pub id: String,
    #[serde(rename = "type")]
    pub artifact_type: String,
    pub installer: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyEdge {
    pub from: String,
    pub to: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    HostedOn,
    ConnectsTo,
}

/// The topology slice one activity's implementation transitively requires:
/// its node plus everything reachable over `hosted_on` and `connects_to`
/// edges. Closure over both relations makes the fragment a fixed point —
/// the fragment of any node inside it is a subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyFragment {
    pub activity_id: String,
    pub node_ids: BTreeSet<String>,
}

impl TopologyModel {
    pub fn node(&self, id: &str) -> Option<&TopologyNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_ids(&self) -> BTreeSet<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    /// Dependencies of `id`: targets of its outgoing edges, optionally
    /// restricted to one relation.
    pub fn dependencies(&self, id: &str, relation: Option<Relation>) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.from == id && relation.map(|r| e.relation == r).unwrap_or(true))
            .map(|e| e.to.as_str())
            .collect()
    }

    pub fn connects_to_edges(&self) -> Vec<&TopologyEdge> {
        self.edges
            .iter()
            .filter(|e| e.relation == Relation::ConnectsTo)
            .collect()
    }
}

pub fn parse_topology(document: &str) -> Result<TopologyModel, Vec<String>> {
    let model: TopologyModel = serde_json::from_str(document)
        .map_err(|e| vec![format!("syntax error at line {}, column {}: {e}", e.line(), e.column())])?;
    let diagnostics = validate_topology(&model);
    if diagnostics.is_empty() {
        Ok(model)
    } else {
        Err(diagnostics)
    }
}

pub fn serialize_topology(model: &TopologyModel) -> String {
    serde_json::to_string_pretty(model).expect("topology models serialize infallibly")
}

/// Empty diagnostics iff the model is well-formed: unique node ids, edges
/// referencing existing nodes, and an acyclic hosted_on subgraph.
pub fn validate_topology(model: &TopologyModel) -> Vec<String> {
    let mut diags = Vec::new();
    let mut ids = BTreeSet::new();
    for node in &model.nodes {
        if !ids.insert(node.id.as_str()) {
            diags.push(format!("duplicate node id {}", node.id));
        }
    }
    for (i, edge) in model.edges.iter().enumerate() {
        if !ids.contains(edge.from.as_str()) {
            diags.push(format!("edge {i}: unknown source {}", edge.from));
        }
        if !ids.contains(edge.to.as_str()) {
            diags.push(format!("edge {i}: unknown target {}", edge.to));
        }
    }

    if let Some(witness) = find_hosted_on_cycle(model) {
        diags.push(format!("hosted_on cycle through node {witness}"));
    }
    diags
}

fn find_hosted_on_cycle(model: &TopologyModel) -> Option<String> {
    let index: HashMap<&str, usize> = model
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let n = model.nodes.len();
    let mut adjacency = vec![Vec::new(); n];
    for edge in &model.edges {
        if edge.relation != Relation::HostedOn {
            continue;
        }
        if let (Some(&u), Some(&v)) = (index.get(edge.from.as_str()), index.get(edge.to.as_str()))
        {
            adjacency[u].push(v);
        }
    }

    // Kahn's algorithm: nodes left unprocessed participate in a cycle
    let mut indegree = vec![0usize; n];
    for targets in &adjacency {
        for &v in targets {
            indegree[v] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut processed = 0;
    while let Some(u) = queue.pop() {
        processed += 1;
        for &v in &adjacency[u] {
            indegree[v] -= 1;
            if indegree[v] == 0 {
                queue.push(v);
            }
        }
    }
    if processed == n {
        None
    } else {
        (0..n)
            .find(|&i| indegree[i] > 0)
            .map(|i| model.nodes[i].id.clone())
    }
}

/// Compute the topology fragment backing one activity's implementation.
pub fn fragment_for(
    workflow: &WorkflowModel,
    topology: &TopologyModel,
    activity_id: &str,
) -> Result<TopologyFragment, String> {
    let activity = workflow
        .activity(activity_id)
        .ok_or_else(|| format!("unknown activity {activity_id}"))?;
    let root = activity
        .implementation
        .topology_node
        .as_deref()
        .ok_or_else(|| format!("activity {activity_id} has no topology binding"))?;
    if topology.node(root).is_none() {
        return Err(format!(
            "activity {activity_id}: topology node {root} not found in topology {}",
            topology.id
        ));
    }
    Ok(TopologyFragment {
        activity_id: activity_id.to_string(),
        node_ids: closure(topology, root),
    })
}

/// Everything reachable from `root` following outgoing edges of both
/// relations, `root` included.
pub fn closure(topology: &TopologyModel, root: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![root.to_string()];
    while let Some(id) = stack.pop() {
        if !seen.insert(id.clone()) {
            continue;
        }
        for dep in topology.dependencies(&id, None) {
            if !seen.contains(dep) {
                stack.push(dep.to_string());
            }
        }
    }
    seen
}
