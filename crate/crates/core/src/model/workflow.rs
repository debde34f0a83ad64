//! The workflow model: a directed graph of activities whose control edges
//! carry Boolean transition conditions, partitioned into all-or-nothing
//! units of work.
//!
//! File format (JSON): top-level keys `id`, `params`, `activities[]`,
//! `edges[]`, `units[]`, `start[]`. An activity is `{id, kind,
//! impl{kind,target,topology_node}, in[], out[], compensator?}`; an edge is
//! `{from, to, cond, loop_back?}`. Conditions are strings in the expression
//! language of [`crate::condition`]; `cond` defaults to `true` and
//! `loop_back` to `false`. Mapping entries in `in[]`/`out[]` are either
//! `{"var": v, "field": f}` pairs or a bare string meaning both names
//! coincide.

use crate::condition::{parse_condition, ConditionExpr};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowModel {
    pub id: String,
    #[serde(rename = "params", default)]
    pub input_params: Vec<String>,
    pub activities: Vec<Activity>,
    #[serde(default)]
    pub edges: Vec<ControlEdge>,
    #[serde(rename = "units", default)]
    pub units_of_work: Vec<UnitOfWork>,
    #[serde(rename = "start", default)]
    pub start_activities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub id: String,
    pub kind: ActivityKind,
    #[serde(rename = "impl")]
    pub implementation: ImplementationBinding,
    #[serde(rename = "in", default, skip_serializing_if = "Vec::is_empty")]
    pub input_mapping: Vec<Mapping>,
    #[serde(rename = "out", default, skip_serializing_if = "Vec::is_empty")]
    pub output_mapping: Vec<Mapping>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compensator: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Classical,
    Quantum,
    Subworkflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplementationBinding {
    pub kind: BindingKind,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology_node: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingKind {
    InProcess,
    ProcessExec,
    QpuJob,
}

/// One rename in a data mapping. `in[]` entries map a workflow variable to an
/// implementation input field; `out[]` entries map an output field back to a
/// variable. A bare string uses the same name on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mapping {
    Same(String),
    Pair { var: String, field: String },
}

impl Mapping {
    pub fn var(&self) -> &str {
        match self {
            Mapping::Same(name) => name,
            Mapping::Pair { var, .. } => var,
        }
    }

    pub fn field(&self) -> &str {
        match self {
            Mapping::Same(name) => name,
            Mapping::Pair { field, .. } => field,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEdge {
    pub from: String,
    pub to: String,
    #[serde(
        rename = "cond",
        default = "ConditionExpr::always",
        with = "condition_string"
    )]
    pub condition: ConditionExpr,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub loop_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitOfWork {
    pub id: String,
    #[serde(rename = "members")]
    pub member_activities: Vec<String>,
}

/// Conditions appear in documents as strings in the edge expression language.
mod condition_string {
    use super::*;
    use serde::de::Error;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(expr: &ConditionExpr, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&expr.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ConditionExpr, D::Error> {
        let text = String::deserialize(d)?;
        parse_condition(&text).map_err(|e| D::Error::custom(format!("condition {text:?}: {e}")))
    }
}

impl WorkflowModel {
    pub fn activity(&self, id: &str) -> Option<&Activity> {
        self.activities.iter().find(|a| a.id == id)
    }

    /// Activity ids referenced as somebody's compensator.
    pub fn compensator_ids(&self) -> BTreeSet<String> {
        self.activities
            .iter()
            .filter_map(|a| a.compensator.clone())
            .collect()
    }

    /// A compensator that takes no part in the regular control flow: it only
    /// runs when the engine compensates a unit of work, so navigation and
    /// completion checks ignore it.
    pub fn is_detached_compensator(&self, id: &str) -> bool {
        self.compensator_ids().contains(id)
            && !self.edges.iter().any(|e| e.from == id || e.to == id)
    }

    /// Indices of edges leaving `id`.
    pub fn outgoing_edges(&self, id: &str) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.from == id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of non-loop edges entering `id` — the edges a join waits for.
    pub fn incoming_join_edges(&self, id: &str) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.to == id && !e.loop_back)
            .map(|(i, _)| i)
            .collect()
    }

    /// The unit of work containing `id`, if any.
    pub fn unit_of(&self, id: &str) -> Option<&UnitOfWork> {
        self.units_of_work
            .iter()
            .find(|u| u.member_activities.iter().any(|m| m == id))
    }

    /// Activities reachable from `start` over non-loop edges, including
    /// `start` itself — the subtree a firing loop_back edge resets.
    pub fn loop_subtree(&self, start: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start.to_string()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id.clone()) {
                continue;
            }
            for edge in self.edges.iter().filter(|e| e.from == id && !e.loop_back) {
                if !seen.contains(&edge.to) {
                    stack.push(edge.to.clone());
                }
            }
        }
        seen
    }
}

/// Parse and validate a workflow document. On failure every collected
/// diagnostic is returned, not just the first.
pub fn parse_workflow(document: &str) -> Result<WorkflowModel, Vec<String>> {
    let model: WorkflowModel = serde_json::from_str(document)
        .map_err(|e| vec![format!("syntax error at line {}, column {}: {e}", e.line(), e.column())])?;
    let diagnostics = validate_workflow(&model);
    if diagnostics.is_empty() {
        Ok(model)
    } else {
        Err(diagnostics)
    }
}

pub fn serialize_workflow(model: &WorkflowModel) -> String {
    serde_json::to_string_pretty(model).expect("workflow models serialize infallibly")
}

/// Check every structural invariant of a workflow model.
pub fn validate_workflow(model: &WorkflowModel) -> Vec<String> {
    let mut diags = Vec::new();
    let mut ids = HashSet::new();
    for activity in &model.activities {
        if !ids.insert(activity.id.as_str()) {
            diags.push(format!("duplicate activity id {}", activity.id));
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

    for id in &model.start_activities {
        if !ids.contains(id.as_str()) {
            diags.push(format!("unknown start activity {id}"));
        }
    }
    if model.start_activities.is_empty() && !model.activities.is_empty() {
        diags.push("no start activities declared".to_string());
    }
    for edge in model.edges.iter().filter(|e| !e.loop_back) {
        if model.start_activities.iter().any(|s| *s == edge.to) {
            diags.push(format!(
                "start activity {} has an incoming non-loop edge from {}",
                edge.to, edge.from
            ));
        }
    }

    diags.extend(check_acyclic_without_loop_edges(model));

    // units: members exist, appear once, and units are pairwise disjoint
    let mut member_owner: HashMap<&str, &str> = HashMap::new();
    for unit in &model.units_of_work {
        let mut seen = HashSet::new();
        for member in &unit.member_activities {
            if !ids.contains(member.as_str()) {
                diags.push(format!("unit {}: unknown member {member}", unit.id));
            }
            if !seen.insert(member.as_str()) {
                diags.push(format!("unit {}: member {member} listed twice", unit.id));
            }
            match member_owner.insert(member, &unit.id) {
                Some(other) if other != unit.id => diags.push(format!(
                    "overlapping units: activity {member} belongs to both {other} and {}",
                    unit.id
                )),
                _ => {}
            }
        }
    }

    for activity in &model.activities {
        if let Some(comp) = &activity.compensator {
            match model.activity(comp) {
                None => diags.push(format!(
                    "activity {}: unknown compensator {comp}",
                    activity.id
                )),
                Some(c) if c.kind != ActivityKind::Classical => diags.push(format!(
                    "activity {}: compensator {comp} must be classical",
                    activity.id
                )),
                _ => {}
            }
        }
        if activity.kind == ActivityKind::Quantum
            && activity.implementation.kind != BindingKind::QpuJob
        {
            diags.push(format!(
                "quantum activity {} must bind a qpu_job implementation",
                activity.id
            ));
        }
        if activity.kind == ActivityKind::Subworkflow && activity.implementation.target.is_empty()
        {
            diags.push(format!(
                "sub-workflow activity {} must reference a workflow model id",
                activity.id
            ));
        }
    }

    // every non-start activity must be reachable through at least one
    // non-loop edge (detached compensators excepted — they run only during
    // compensation)
    for activity in &model.activities {
        let is_start = model.start_activities.iter().any(|s| *s == activity.id);
        if is_start || model.is_detached_compensator(&activity.id) {
            continue;
        }
        if model.incoming_join_edges(&activity.id).is_empty() {
            diags.push(format!(
                "activity {} is unreachable: no incoming non-loop edge and not a start activity",
                activity.id
            ));
        }
    }

    diags
}

/// Every cycle must be closed by an explicitly flagged loop_back edge, so the
/// graph without loop_back edges has to be acyclic.
fn check_acyclic_without_loop_edges(model: &WorkflowModel) -> Vec<String> {
    let index: HashMap<&str, usize> = model
        .activities
        .iter()
        .enumerate()
        .map(|(i, a)| (a.id.as_str(), i))
        .collect();
    let n = model.activities.len();
    let mut adjacency = vec![Vec::new(); n];
    for edge in model.edges.iter().filter(|e| !e.loop_back) {
        if let (Some(&u), Some(&v)) = (index.get(edge.from.as_str()), index.get(edge.to.as_str()))
        {
            adjacency[u].push(v);
        }
    }

    // iterative three-color DFS; report one representative node per cycle
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color = vec![Color::White; n];
    let mut diags = Vec::new();
    for root in 0..n {
        if color[root] != Color::White {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = Color::Gray;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < adjacency[node].len() {
                let succ = adjacency[node][*next];
                *next += 1;
                match color[succ] {
                    Color::White => {
                        color[succ] = Color::Gray;
                        stack.push((succ, 0));
                    }
                    Color::Gray => diags.push(format!(
                        "cycle without loop_back flag through activity {}",
                        model.activities[succ].id
                    )),
                    Color::Black => {}
                }
            } else {
                color[node] = Color::Black;
                stack.pop();
            }
        }
    }
    diags
}

/// Assemble implementation inputs from instance variables per `in[]`.
/// Missing variables are reported, not silently dropped.
pub fn map_inputs(
    activity: &Activity,
    variables: &BTreeMap<String, serde_json::Value>,
) -> Result<BTreeMap<String, serde_json::Value>, String> {
    let mut inputs = BTreeMap::new();
    for mapping in &activity.input_mapping {
        let value = variables.get(mapping.var()).ok_or_else(|| {
            format!(
                "activity {}: input variable {} is unbound",
                activity.id,
                mapping.var()
            )
        })?;
        inputs.insert(mapping.field().to_string(), value.clone());
    }
    Ok(inputs)
}

/// Project implementation outputs back into variable updates per `out[]`.
/// Output fields absent from the completion payload are ignored.
pub fn map_outputs(
    activity: &Activity,
    outputs: &BTreeMap<String, serde_json::Value>,
) -> BTreeMap<String, serde_json::Value> {
    let mut updates = BTreeMap::new();
    for mapping in &activity.output_mapping {
        if let Some(value) = outputs.get(mapping.field()) {
            updates.insert(mapping.var().to_string(), value.clone());
        }
    }
    updates
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_doc() -> &'static str {
        r#"{
            "id": "two-step",
            "activities": [
                {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "stub:identity"}},
                {"id": "B", "kind": "classical", "impl": {"kind": "in_process", "target": "stub:identity"}}
            ],
            "edges": [{"from": "A", "to": "B", "cond": "true"}],
            "start": ["A"]
        }"#
    }

    #[test]
    fn parses_minimal_two_activity_model() {
        let model = parse_workflow(minimal_doc()).unwrap();
        assert_eq!(model.activities.len(), 2);
        assert_eq!(model.edges.len(), 1);
        assert_eq!(model.start_activities, vec!["A"]);
    }

    #[test]
    fn unknown_edge_target_is_diagnosed() {
        let doc = r#"{
            "id": "bad",
            "activities": [
                {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
            ],
            "edges": [{"from": "A", "to": "X"}],
            "start": ["A"]
        }"#;
        let diags = parse_workflow(doc).unwrap_err();
        assert!(
            diags.iter().any(|d| d.contains("unknown target X")),
            "{diags:?}"
        );
    }

    #[test]
    fn overlapping_units_are_diagnosed() {
        let doc = r#"{
            "id": "overlap",
            "activities": [
                {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                {"id": "B", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
            ],
            "edges": [{"from": "A", "to": "B"}],
            "units": [
                {"id": "u1", "members": ["A", "B"]},
                {"id": "u2", "members": ["B"]}
            ],
            "start": ["A"]
        }"#;
        let diags = parse_workflow(doc).unwrap_err();
        assert!(
            diags.iter().any(|d| d.contains("overlapping units")),
            "{diags:?}"
        );
    }

    #[test]
    fn unflagged_cycle_is_rejected_and_flagged_cycle_accepted() {
        let cyclic = r#"{
            "id": "cycle",
            "activities": [
                {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                {"id": "B", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
            ],
            "edges": [{"from": "A", "to": "B"}, {"from": "B", "to": "A"}],
            "start": ["A"]
        }"#;
        let diags = parse_workflow(cyclic).unwrap_err();
        assert!(diags.iter().any(|d| d.contains("loop_back")), "{diags:?}");

        let looped = cyclic.replace(
            r#"{"from": "B", "to": "A"}"#,
            r#"{"from": "B", "to": "A", "loop_back": true}"#,
        );
        parse_workflow(&looped).unwrap();
    }

    #[test]
    fn quantum_activity_requires_qpu_job_binding() {
        let doc = r#"{
            "id": "q",
            "activities": [
                {"id": "A", "kind": "quantum", "impl": {"kind": "in_process", "target": "t"}}
            ],
            "start": ["A"]
        }"#;
        let diags = parse_workflow(doc).unwrap_err();
        assert!(diags.iter().any(|d| d.contains("qpu_job")), "{diags:?}");
    }

    #[test]
    fn serialize_parse_round_trip_is_structural_identity() {
        let model = parse_workflow(minimal_doc()).unwrap();
        let reparsed = parse_workflow(&serialize_workflow(&model)).unwrap();
        assert_eq!(model, reparsed);
    }

    #[test]
    fn mappings_accept_bare_strings_and_pairs() {
        let doc = r#"{
            "id": "m",
            "activities": [
                {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"},
                 "in": ["x", {"var": "y", "field": "input_y"}],
                 "out": [{"field": "r", "var": "result"}]}
            ],
            "start": ["A"]
        }"#;
        let model = parse_workflow(doc).unwrap();
        let activity = model.activity("A").unwrap();
        let vars: BTreeMap<_, _> = [
            ("x".to_string(), serde_json::json!(1)),
            ("y".to_string(), serde_json::json!(2)),
        ]
        .into_iter()
        .collect();
        let inputs = map_inputs(activity, &vars).unwrap();
        assert_eq!(inputs["x"], serde_json::json!(1));
        assert_eq!(inputs["input_y"], serde_json::json!(2));

        let outputs: BTreeMap<_, _> = [("r".to_string(), serde_json::json!(7))].into_iter().collect();
        let updates = map_outputs(activity, &outputs);
        assert_eq!(updates["result"], serde_json::json!(7));
    }

    #[test]
    fn missing_input_variable_is_reported() {
        let doc = r#"{
            "id": "m",
            "activities": [
                {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"},
                 "in": ["absent"]}
            ],
            "start": ["A"]
        }"#;
        let model = parse_workflow(doc).unwrap();
        let err = map_inputs(model.activity("A").unwrap(), &BTreeMap::new()).unwrap_err();
        assert!(err.contains("absent"), "{err}");
    }

    #[test]
    fn loop_subtree_stops_at_loop_edges() {
        let doc = r#"{
            "id": "loop",
            "activities": [
                {"id": "setup", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                {"id": "body", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                {"id": "check", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                {"id": "done", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
            ],
            "edges": [
                {"from": "setup", "to": "body"},
                {"from": "body", "to": "check"},
                {"from": "check", "to": "body", "cond": "$again", "loop_back": true},
                {"from": "check", "to": "done", "cond": "!$again"}
            ],
            "start": ["setup"]
        }"#;
        let model = parse_workflow(doc).unwrap();
        let subtree = model.loop_subtree("body");
        assert!(subtree.contains("body") && subtree.contains("check") && subtree.contains("done"));
        assert!(!subtree.contains("setup"));
    }
}
