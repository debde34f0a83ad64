//! Workflow instance state and the event fold that builds it.
//!
//! [`WorkflowInstance::apply`] is the single place instance state changes.
//! The live engine appends an event to the log and then applies it; recovery
//! replays the log through the same fold — so every persisted prefix is, by
//! construction, a state the runtime can resume from.

use crate::clock::TimeMs;
use crate::engine::event::{CorrelationKey, EventKind, InstanceEvent};
use crate::model::workflow::WorkflowModel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityState {
    Inactive,
    Ready,
    Running,
    Completed,
    Failed,
    Compensating,
    Compensated,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeState {
    Unevaluated,
    FiredTrue,
    FiredFalse,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Running,
    Completed,
    Failed,
    Compensated,
}

/// One member of a compensation plan: the completed unit member, the token
/// of its completed invocation, and its compensator (None → skip with a
/// note).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationEntry {
    pub member: String,
    pub token: String,
    pub compensator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationState {
    pub unit: String,
    pub failed_activity: String,
    pub reason: String,
    pub plan: Vec<CompensationEntry>,
    /// Index of the next plan entry to process.
    pub next: usize,
    /// True while the current entry's compensator run is in flight.
    pub dispatched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkflowInstance {
    pub instance_id: String,
    pub model_id: String,
    pub variables: BTreeMap<String, serde_json::Value>,
    pub activity_states: BTreeMap<String, ActivityState>,
    /// Indexed like the model's edge list.
    pub edge_states: Vec<EdgeState>,
    pub loop_iteration_counts: BTreeMap<String, u64>,
    pub status: InstanceStatus,

    // --- bookkeeping derived from the same events ---
    /// Highest applied sequence number.
    pub applied_seq: u64,
    /// Per-activity count of starts, used to mint invocation tokens.
    pub start_counts: BTreeMap<String, u64>,
    /// Token of the in-flight invocation per running activity.
    pub running_tokens: BTreeMap<String, String>,
    /// Completion order as (activity, token), the compensation oracle.
    pub completion_order: Vec<(String, String)>,
    /// Sub-workflow children: activity id → child instance id.
    pub child_instances: BTreeMap<String, String>,
    /// Set when this instance runs as a sub-workflow of another.
    pub parent: Option<CorrelationKey>,
    pub compensation: Option<CompensationState>,
    pub failure_reasons: Vec<String>,
    pub created_ts: TimeMs,
    pub finished_ts: Option<TimeMs>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("instance {instance}: event {seq} out of order after {previous}")]
    OutOfOrder {
        instance: String,
        previous: u64,
        seq: u64,
    },
    #[error("instance {instance}: event {seq} has malformed payload: {detail}")]
    BadPayload {
        instance: String,
        seq: u64,
        detail: String,
    },
    #[error("instance {instance}: log does not begin with instantiated")]
    MissingInstantiation { instance: String },
}

impl WorkflowInstance {
    pub fn new(instance_id: &str, model: &WorkflowModel) -> Self {
        WorkflowInstance {
            instance_id: instance_id.to_string(),
            model_id: model.id.clone(),
            variables: BTreeMap::new(),
            activity_states: model
                .activities
                .iter()
                .map(|a| (a.id.clone(), ActivityState::Inactive))
                .collect(),
            edge_states: vec![EdgeState::Unevaluated; model.edges.len()],
            loop_iteration_counts: BTreeMap::new(),
            status: InstanceStatus::Running,
            applied_seq: 0,
            start_counts: BTreeMap::new(),
            running_tokens: BTreeMap::new(),
            completion_order: Vec::new(),
            child_instances: BTreeMap::new(),
            parent: None,
            compensation: None,
            failure_reasons: Vec::new(),
            created_ts: 0,
            finished_ts: None,
        }
    }

    pub fn activity_state(&self, id: &str) -> ActivityState {
        self.activity_states
            .get(id)
            .copied()
            .unwrap_or(ActivityState::Inactive)
    }

    pub fn is_terminal(&self) -> bool {
        self.status != InstanceStatus::Running
    }

    /// Rebuild an instance by folding its full event log.
    pub fn replay(
        instance_id: &str,
        model: &WorkflowModel,
        events: &[InstanceEvent],
    ) -> Result<Self, ReplayError> {
        let first = events.first().ok_or_else(|| ReplayError::MissingInstantiation {
            instance: instance_id.to_string(),
        })?;
        if first.kind != EventKind::Instantiated {
            return Err(ReplayError::MissingInstantiation {
                instance: instance_id.to_string(),
            });
        }
        let mut instance = WorkflowInstance::new(instance_id, model);
        for event in events {
            if event.seq <= instance.applied_seq {
                return Err(ReplayError::OutOfOrder {
                    instance: instance_id.to_string(),
                    previous: instance.applied_seq,
                    seq: event.seq,
                });
            }
            instance.apply(model, event).map_err(|detail| ReplayError::BadPayload {
                instance: instance_id.to_string(),
                seq: event.seq,
                detail,
            })?;
        }
        Ok(instance)
    }

    /// Fold one event into the state. Errors mean the payload is missing a
    /// required field — possible only on hand-edited logs.
    pub fn apply(&mut self, model: &WorkflowModel, event: &InstanceEvent) -> Result<(), String> {
        self.applied_seq = event.seq;
        let p = &event.payload;
        match event.kind {
            EventKind::Instantiated => {
                self.created_ts = event.ts;
                self.variables = object_field(p, "params")?;
                if let Some(parent) = p.get("parent") {
                    self.parent = Some(
                        serde_json::from_value(parent.clone())
                            .map_err(|e| format!("parent key: {e}"))?,
                    );
                }
            }
            EventKind::ActivityReady => {
                let activity = str_field(p, "activity")?;
                self.activity_states
                    .insert(activity.to_string(), ActivityState::Ready);
            }
            EventKind::ActivityStarted => {
                let activity = str_field(p, "activity")?;
                let token = str_field(p, "token")?;
                self.activity_states
                    .insert(activity.to_string(), ActivityState::Running);
                self.running_tokens
                    .insert(activity.to_string(), token.to_string());
                *self.start_counts.entry(activity.to_string()).or_insert(0) += 1;
                if let Some(child) = p.get("child_instance").and_then(|v| v.as_str()) {
                    self.child_instances
                        .insert(activity.to_string(), child.to_string());
                }
                if let Some(comp) = &mut self.compensation {
                    if comp.next < comp.plan.len()
                        && comp.plan[comp.next].compensator.as_deref() == Some(activity)
                    {
                        comp.dispatched = true;
                    }
                }
            }
            EventKind::ActivityCompleted => {
                let activity = str_field(p, "activity")?;
                let token = str_field(p, "token")?;
                self.activity_states
                    .insert(activity.to_string(), ActivityState::Completed);
                self.running_tokens.remove(activity);
                self.completion_order
                    .push((activity.to_string(), token.to_string()));
            }
            EventKind::ActivityFailed => {
                let activity = str_field(p, "activity")?;
                self.activity_states
                    .insert(activity.to_string(), ActivityState::Failed);
                self.running_tokens.remove(activity);
                self.failure_reasons
                    .push(str_field(p, "reason").unwrap_or("unspecified").to_string());
            }
            EventKind::EdgeFired => {
                self.apply_edge_fired(model, p)?;
            }
            EventKind::VariablesUpdated => {
                let updates = object_field(p, "updates")?;
                self.variables.extend(updates);
            }
            EventKind::CompensationStarted => {
                let plan_value = p
                    .get("plan")
                    .and_then(|v| v.as_array())
                    .ok_or("compensation_started without plan")?;
                let mut plan = Vec::new();
                for entry in plan_value {
                    plan.push(CompensationEntry {
                        member: str_field(entry, "member")?.to_string(),
                        token: str_field(entry, "token")?.to_string(),
                        compensator: entry
                            .get("compensator")
                            .and_then(|v| v.as_str())
                            .map(String::from),
                    });
                }
                for entry in &plan {
                    if entry.compensator.is_some() {
                        self.activity_states
                            .insert(entry.member.clone(), ActivityState::Compensating);
                    }
                }
                // late completions from still-running unit members are stale
                // once compensation starts
                let unit = str_field(p, "unit")?.to_string();
                if let Some(u) = model.units_of_work.iter().find(|u| u.id == unit) {
                    for member in &u.member_activities {
                        self.running_tokens.remove(member);
                    }
                }
                self.compensation = Some(CompensationState {
                    unit,
                    failed_activity: str_field(p, "failed_activity")?.to_string(),
                    reason: str_field(p, "reason")?.to_string(),
                    plan,
                    next: 0,
                    dispatched: false,
                });
            }
            EventKind::CompensationDone => {
                if let Some(member) = p.get("member").and_then(|v| v.as_str()) {
                    // one plan entry finished (compensated, or skipped for
                    // lack of a compensator)
                    if p.get("compensator").and_then(|v| v.as_str()).is_some() {
                        self.activity_states
                            .insert(member.to_string(), ActivityState::Compensated);
                    }
                    if let Some(comp) = &mut self.compensation {
                        comp.next += 1;
                        comp.dispatched = false;
                    }
                } else {
                    // the whole unit is done
                    self.status = InstanceStatus::Compensated;
                    self.finished_ts = Some(event.ts);
                }
            }
            EventKind::InstanceCompleted => {
                self.status = InstanceStatus::Completed;
                self.finished_ts = Some(event.ts);
            }
            EventKind::InstanceFailed => {
                self.status = InstanceStatus::Failed;
                self.finished_ts = Some(event.ts);
                if let Some(reasons) = p.get("reasons").and_then(|v| v.as_array()) {
                    for r in reasons {
                        if let Some(r) = r.as_str() {
                            if !self.failure_reasons.iter().any(|x| x == r) {
                                self.failure_reasons.push(r.to_string());
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_edge_fired(
        &mut self,
        model: &WorkflowModel,
        p: &serde_json::Value,
    ) -> Result<(), String> {
        let index = p
            .get("edge")
            .and_then(|v| v.as_u64())
            .ok_or("edge_fired without edge index")? as usize;
        let result = str_field(p, "result")?;
        if index >= self.edge_states.len() {
            return Err(format!("edge index {index} out of range"));
        }
        self.edge_states[index] = match result {
            "true" => EdgeState::FiredTrue,
            "false" => EdgeState::FiredFalse,
            "dead" => EdgeState::Dead,
            other => return Err(format!("unknown edge result {other}")),
        };

        let edge = &model.edges[index];
        if edge.loop_back && result == "true" {
            self.reset_loop_subtree(model, &edge.to);
            return Ok(());
        }

        // join resolution for the target: once every non-loop incoming edge
        // is resolved and none fired true, the activity is skipped and its
        // own edges will be marked dead by the navigator (dead-path
        // elimination)
        if !edge.loop_back && self.activity_state(&edge.to) == ActivityState::Inactive {
            let join = model.incoming_join_edges(&edge.to);
            let resolved = join
                .iter()
                .all(|&i| self.edge_states[i] != EdgeState::Unevaluated);
            let any_true = join
                .iter()
                .any(|&i| self.edge_states[i] == EdgeState::FiredTrue);
            if resolved && !any_true {
                self.activity_states
                    .insert(edge.to.clone(), ActivityState::Skipped);
            }
        }
        Ok(())
    }

    /// A loop_back edge fired true: count the iteration and reset the body —
    /// every activity reachable from the loop target over non-loop edges
    /// returns to inactive and the edges leaving that subtree are
    /// re-armed. Edges entering the subtree from outside keep their fired
    /// state, so re-entry joins are immediately satisfied again.
    fn reset_loop_subtree(&mut self, model: &WorkflowModel, target: &str) {
        *self
            .loop_iteration_counts
            .entry(target.to_string())
            .or_insert(0) += 1;
        let subtree = model.loop_subtree(target);
        for id in &subtree {
            self.activity_states
                .insert(id.clone(), ActivityState::Inactive);
            self.running_tokens.remove(id);
        }
        for (i, edge) in model.edges.iter().enumerate() {
            if subtree.contains(&edge.from) {
                self.edge_states[i] = EdgeState::Unevaluated;
            }
        }
    }
}

fn str_field<'a>(value: &'a serde_json::Value, key: &str) -> Result<&'a str, String> {
    value
        .get(key)
        .and_then(|v| v.as_str())
        .ok_or_else(|| format!("payload missing string field {key}"))
}

fn object_field(
    value: &serde_json::Value,
    key: &str,
) -> Result<BTreeMap<String, serde_json::Value>, String> {
    match value.get(key) {
        Some(serde_json::Value::Object(map)) => {
            Ok(map.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        }
        Some(other) => Err(format!("payload field {key} is not an object: {other}")),
        None => Err(format!("payload missing object field {key}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::event::payload;
    use crate::model::workflow::parse_workflow;

    fn linear_model() -> WorkflowModel {
        parse_workflow(
            r#"{
                "id": "linear",
                "activities": [
                    {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                    {"id": "B", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
                ],
                "edges": [{"from": "A", "to": "B"}],
                "start": ["A"]
            }"#,
        )
        .unwrap()
    }

    fn ev(seq: u64, kind: EventKind, payload: serde_json::Value) -> InstanceEvent {
        InstanceEvent {
            seq,
            ts: seq,
            kind,
            payload,
        }
    }

    #[test]
    fn replay_reconstructs_linear_run() {
        let model = linear_model();
        let vars: payload::Vars = BTreeMap::new();
        let outs: payload::Vars =
            [("r".to_string(), serde_json::json!(1))].into_iter().collect();
        let events = vec![
            ev(1, EventKind::Instantiated, payload::instantiated("linear", &vars, None)),
            ev(2, EventKind::ActivityReady, payload::activity_ready("A")),
            ev(3, EventKind::ActivityStarted, payload::activity_started("A", "i-1-A-1", &vars, None)),
            ev(4, EventKind::ActivityCompleted, payload::activity_completed("A", "i-1-A-1", &outs)),
            ev(5, EventKind::EdgeFired, payload::edge_fired(0, "A", "B", "true", false)),
            ev(6, EventKind::ActivityReady, payload::activity_ready("B")),
        ];
        let instance = WorkflowInstance::replay("i-1", &model, &events).unwrap();
        assert_eq!(instance.activity_state("A"), ActivityState::Completed);
        assert_eq!(instance.activity_state("B"), ActivityState::Ready);
        assert_eq!(instance.edge_states[0], EdgeState::FiredTrue);
        assert_eq!(instance.completion_order, vec![("A".to_string(), "i-1-A-1".to_string())]);
        assert_eq!(instance.status, InstanceStatus::Running);
    }

    #[test]
    fn replay_is_deterministic_at_every_prefix() {
        let model = linear_model();
        let vars: payload::Vars = BTreeMap::new();
        let events = vec![
            ev(1, EventKind::Instantiated, payload::instantiated("linear", &vars, None)),
            ev(2, EventKind::ActivityReady, payload::activity_ready("A")),
            ev(3, EventKind::ActivityStarted, payload::activity_started("A", "t1", &vars, None)),
        ];
        for prefix in 1..=events.len() {
            let a = WorkflowInstance::replay("i-1", &model, &events[..prefix]).unwrap();
            let b = WorkflowInstance::replay("i-1", &model, &events[..prefix]).unwrap();
            assert_eq!(a, b, "prefix {prefix}");
        }
    }

    #[test]
    fn join_with_no_true_edge_skips_target() {
        let model = linear_model();
        let vars: payload::Vars = BTreeMap::new();
        let events = vec![
            ev(1, EventKind::Instantiated, payload::instantiated("linear", &vars, None)),
            ev(2, EventKind::EdgeFired, payload::edge_fired(0, "A", "B", "false", false)),
        ];
        let instance = WorkflowInstance::replay("i-1", &model, &events).unwrap();
        assert_eq!(instance.activity_state("B"), ActivityState::Skipped);
    }

    #[test]
    fn loop_back_reset_rearms_the_body() {
        let model = parse_workflow(
            r#"{
                "id": "loop",
                "activities": [
                    {"id": "body", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                    {"id": "check", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
                ],
                "edges": [
                    {"from": "body", "to": "check"},
                    {"from": "check", "to": "body", "cond": "$more", "loop_back": true}
                ],
                "start": ["body"]
            }"#,
        )
        .unwrap();
        let vars: payload::Vars = BTreeMap::new();
        let outs: payload::Vars = BTreeMap::new();
        let events = vec![
            ev(1, EventKind::Instantiated, payload::instantiated("loop", &vars, None)),
            ev(2, EventKind::ActivityStarted, payload::activity_started("body", "t1", &vars, None)),
            ev(3, EventKind::ActivityCompleted, payload::activity_completed("body", "t1", &outs)),
            ev(4, EventKind::EdgeFired, payload::edge_fired(0, "body", "check", "true", false)),
            ev(5, EventKind::ActivityStarted, payload::activity_started("check", "t2", &vars, None)),
            ev(6, EventKind::ActivityCompleted, payload::activity_completed("check", "t2", &outs)),
            ev(7, EventKind::EdgeFired, payload::edge_fired(1, "check", "body", "true", true)),
        ];
        let instance = WorkflowInstance::replay("i-1", &model, &events).unwrap();
        assert_eq!(instance.loop_iteration_counts["body"], 1);
        assert_eq!(instance.activity_state("body"), ActivityState::Inactive);
        assert_eq!(instance.activity_state("check"), ActivityState::Inactive);
        assert_eq!(instance.edge_states[0], EdgeState::Unevaluated);
        assert_eq!(instance.edge_states[1], EdgeState::Unevaluated);
    }

    #[test]
    fn out_of_order_replay_is_rejected() {
        let model = linear_model();
        let vars: payload::Vars = BTreeMap::new();
        let events = vec![
            ev(2, EventKind::Instantiated, payload::instantiated("linear", &vars, None)),
            ev(1, EventKind::ActivityReady, payload::activity_ready("A")),
        ];
        assert!(matches!(
            WorkflowInstance::replay("i-1", &model, &events),
            Err(ReplayError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn compensation_events_drive_plan_state() {
        let model = parse_workflow(
            r#"{
                "id": "unit",
                "activities": [
                    {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}, "compensator": "undo_A"},
                    {"id": "B", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                    {"id": "undo_A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
                ],
                "edges": [{"from": "A", "to": "B"}],
                "units": [{"id": "u1", "members": ["A", "B"]}],
                "start": ["A"]
            }"#,
        )
        .unwrap();
        let vars: payload::Vars = BTreeMap::new();
        let outs: payload::Vars = BTreeMap::new();
        let plan = vec![("A".to_string(), "t1".to_string(), Some("undo_A".to_string()))];
        let events = vec![
            ev(1, EventKind::Instantiated, payload::instantiated("unit", &vars, None)),
            ev(2, EventKind::ActivityStarted, payload::activity_started("A", "t1", &vars, None)),
            ev(3, EventKind::ActivityCompleted, payload::activity_completed("A", "t1", &outs)),
            ev(4, EventKind::EdgeFired, payload::edge_fired(0, "A", "B", "true", false)),
            ev(5, EventKind::ActivityStarted, payload::activity_started("B", "t2", &vars, None)),
            ev(6, EventKind::ActivityFailed, payload::activity_failed("B", "t2", "boom")),
            ev(7, EventKind::CompensationStarted,
               payload::compensation_started("u1", "B", "boom", &plan)),
            ev(8, EventKind::ActivityStarted, payload::activity_started("undo_A", "t3", &vars, None)),
            ev(9, EventKind::ActivityCompleted, payload::activity_completed("undo_A", "t3", &outs)),
            ev(10, EventKind::CompensationDone, payload::compensation_member_done("A", Some("undo_A"))),
            ev(11, EventKind::CompensationDone, payload::compensation_unit_done("u1")),
        ];
        let instance = WorkflowInstance::replay("i-1", &model, &events).unwrap();
        assert_eq!(instance.status, InstanceStatus::Compensated);
        assert_eq!(instance.activity_state("A"), ActivityState::Compensated);
        assert_eq!(instance.activity_state("B"), ActivityState::Failed);
        assert_eq!(instance.compensation.as_ref().unwrap().next, 1);
    }
}
