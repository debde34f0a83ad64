//! Instance events — the persistent record of everything an instance does.
//!
//! Log line format: `{"seq": n, "ts": ms, "kind": "...", "payload": {...}}`,
//! one event per line, sequence numbers strictly increasing per instance.
//! The instance id is carried by the log file name, not repeated per line.

use crate::clock::TimeMs;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Instantiated,
    ActivityReady,
    ActivityStarted,
    ActivityCompleted,
    ActivityFailed,
    EdgeFired,
    VariablesUpdated,
    CompensationStarted,
    CompensationDone,
    InstanceCompleted,
    InstanceFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEvent {
    pub seq: u64,
    pub ts: TimeMs,
    pub kind: EventKind,
    pub payload: serde_json::Value,
}

/// Ties an asynchronous completion back to the exact dispatch it answers:
/// the instance, the activity, and the invocation token minted when the
/// activity started. Tokens are unique per dispatch, so duplicate or late
/// responses are detectable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorrelationKey {
    pub instance_id: String,
    pub activity_id: String,
    pub token: String,
}

/// Payload constructors, so every emitter and the fold agree on key names.
pub mod payload {
    use super::*;

    pub type Vars = BTreeMap<String, serde_json::Value>;

    pub fn instantiated(
        model_id: &str,
        params: &Vars,
        parent: Option<&CorrelationKey>,
    ) -> serde_json::Value {
        let mut p = serde_json::json!({"model": model_id, "params": params});
        if let Some(parent) = parent {
            p["parent"] = serde_json::to_value(parent).expect("keys serialize");
        }
        p
    }

    pub fn activity_ready(activity: &str) -> serde_json::Value {
        serde_json::json!({"activity": activity})
    }

    pub fn activity_started(
        activity: &str,
        token: &str,
        inputs: &Vars,
        child_instance: Option<&str>,
    ) -> serde_json::Value {
        let mut p = serde_json::json!({"activity": activity, "token": token, "inputs": inputs});
        if let Some(child) = child_instance {
            p["child_instance"] = serde_json::json!(child);
        }
        p
    }

    pub fn activity_completed(activity: &str, token: &str, outputs: &Vars) -> serde_json::Value {
        serde_json::json!({"activity": activity, "token": token, "outputs": outputs})
    }

    pub fn activity_failed(activity: &str, token: &str, reason: &str) -> serde_json::Value {
        serde_json::json!({"activity": activity, "token": token, "reason": reason})
    }

    /// `result` is "true", "false", or "dead" (dead-path elimination).
    pub fn edge_fired(
        edge: usize,
        from: &str,
        to: &str,
        result: &str,
        loop_back: bool,
    ) -> serde_json::Value {
        serde_json::json!({
            "edge": edge, "from": from, "to": to, "result": result, "loop_back": loop_back
        })
    }

    pub fn variables_updated(activity: &str, token: &str, updates: &Vars) -> serde_json::Value {
        serde_json::json!({"activity": activity, "token": token, "updates": updates})
    }

    /// One entry per unit member to compensate, already in reverse
    /// completion order.
    pub fn compensation_started(
        unit: &str,
        failed_activity: &str,
        reason: &str,
        plan: &[(String, String, Option<String>)],
    ) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = plan
            .iter()
            .map(|(member, token, compensator)| {
                serde_json::json!({"member": member, "token": token, "compensator": compensator})
            })
            .collect();
        serde_json::json!({
            "unit": unit, "failed_activity": failed_activity, "reason": reason, "plan": entries
        })
    }

    pub fn compensation_member_done(member: &str, compensator: Option<&str>) -> serde_json::Value {
        match compensator {
            Some(c) => serde_json::json!({"member": member, "compensator": c}),
            None => serde_json::json!({"member": member, "skipped": true}),
        }
    }

    pub fn compensation_unit_done(unit: &str) -> serde_json::Value {
        serde_json::json!({"unit": unit, "outcome": "compensated"})
    }

    pub fn instance_completed(variables: &Vars) -> serde_json::Value {
        serde_json::json!({"variables": variables})
    }

    pub fn instance_failed(reasons: &[String]) -> serde_json::Value {
        serde_json::json!({"reasons": reasons})
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_round_trip_as_ndjson_lines() {
        let event = InstanceEvent {
            seq: 3,
            ts: 1200,
            kind: EventKind::EdgeFired,
            payload: payload::edge_fired(0, "A", "B", "true", false),
        };
        let line = serde_json::to_string(&event).unwrap();
        assert!(!line.contains('\n'));
        let back: InstanceEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, event);
    }

    #[test]
    fn kind_serializes_snake_case() {
        let json = serde_json::to_string(&EventKind::CompensationStarted).unwrap();
        assert_eq!(json, "\"compensation_started\"");
    }
}
