//! Audit trail: completed instances are moved out of the runtime store into
//! per-model JSON documents that keep the full event history plus derived
//! views (activity durations, input/output snapshots, edge decisions) so a
//! run can be analysed and reproduced without the live engine.

use crate::clock::TimeMs;
use crate::engine::event::{EventKind, InstanceEvent};
use crate::engine::instance::{InstanceStatus, WorkflowInstance};
use crate::model::workflow::WorkflowModel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// One activity invocation as seen in the event history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityAudit {
    pub activity: String,
    pub token: String,
    pub started_ts: TimeMs,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub finished_ts: Option<TimeMs>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub duration_ms: Option<u64>,
    /// completed | failed | interrupted
    pub outcome: String,
    pub inputs: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outputs: Option<BTreeMap<String, serde_json::Value>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// One edge decision: why a path was or was not taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeAudit {
    pub edge: usize,
    pub from: String,
    pub to: String,
    pub condition: String,
    pub result: String,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub loop_back: bool,
    pub ts: TimeMs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub instance_id: String,
    pub model_id: String,
    pub status: InstanceStatus,
    pub created_ts: TimeMs,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub finished_ts: Option<TimeMs>,
    pub variables: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failure_reasons: Vec<String>,
    pub activities: Vec<ActivityAudit>,
    pub edges: Vec<EdgeAudit>,
    /// The untouched event history, exactly as persisted by the engine.
    pub events: Vec<InstanceEvent>,
}

impl AuditRecord {
    /// Derive a record from a folded instance and its full event history.
    pub fn build(
        model: &WorkflowModel,
        instance: &WorkflowInstance,
        events: Vec<InstanceEvent>,
    ) -> AuditRecord {
        let mut activities: Vec<ActivityAudit> = Vec::new();
        let mut edges = Vec::new();
        for event in &events {
            let p = &event.payload;
            match event.kind {
                EventKind::ActivityStarted => {
                    activities.push(ActivityAudit {
                        activity: str_of(p, "activity"),
                        token: str_of(p, "token"),
                        started_ts: event.ts,
                        finished_ts: None,
                        duration_ms: None,
                        outcome: "interrupted".to_string(),
                        inputs: map_of(p, "inputs"),
                        outputs: None,
                        error: None,
                    });
                }
                EventKind::ActivityCompleted => {
                    let token = str_of(p, "token");
                    if let Some(entry) = activities.iter_mut().rev().find(|a| a.token == token) {
                        entry.finished_ts = Some(event.ts);
                        entry.duration_ms = Some(event.ts.saturating_sub(entry.started_ts));
                        entry.outcome = "completed".to_string();
                        entry.outputs = Some(map_of(p, "outputs"));
                    }
                }
                EventKind::ActivityFailed => {
                    let token = str_of(p, "token");
                    if let Some(entry) = activities.iter_mut().rev().find(|a| a.token == token) {
                        entry.finished_ts = Some(event.ts);
                        entry.duration_ms = Some(event.ts.saturating_sub(entry.started_ts));
                        entry.outcome = "failed".to_string();
                        entry.error = p.get("reason").and_then(|v| v.as_str()).map(String::from);
                    }
                }
                EventKind::EdgeFired => {
                    let index = p.get("edge").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
                    let condition = model
                        .edges
                        .get(index)
                        .map(|e| e.condition.to_string())
                        .unwrap_or_default();
                    edges.push(EdgeAudit {
                        edge: index,
                        from: str_of(p, "from"),
                        to: str_of(p, "to"),
                        condition,
                        result: str_of(p, "result"),
                        loop_back: p.get("loop_back").and_then(|v| v.as_bool()).unwrap_or(false),
                        ts: event.ts,
                    });
                }
                _ => {}
            }
        }
        AuditRecord {
            instance_id: instance.instance_id.clone(),
            model_id: instance.model_id.clone(),
            status: instance.status,
            created_ts: instance.created_ts,
            finished_ts: instance.finished_ts,
            variables: instance.variables.clone(),
            failure_reasons: instance.failure_reasons.clone(),
            activities,
            edges,
            events,
        }
    }
}

/// Filter for audit queries.
#[derive(Debug, Clone, PartialEq)]
pub enum AuditFilter {
    Model(String),
    Instance(String),
    /// Matches records created within `[from, to]` (inclusive).
    TimeRange { from: TimeMs, to: TimeMs },
}

impl AuditFilter {
    fn matches(&self, record: &AuditRecord) -> bool {
        match self {
            AuditFilter::Model(id) => record.model_id == *id,
            AuditFilter::Instance(id) => record.instance_id == *id,
            AuditFilter::TimeRange { from, to } => {
                record.created_ts >= *from && record.created_ts <= *to
            }
        }
    }
}

/// File-backed audit store: one JSON document per record, grouped by model.
pub struct AuditStore {
    root: PathBuf,
}

impl AuditStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<AuditStore> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(AuditStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_path(&self, model_id: &str, instance_id: &str) -> PathBuf {
        self.root.join(model_id).join(format!("{instance_id}.json"))
    }

    pub fn write(&self, record: &AuditRecord) -> io::Result<PathBuf> {
        let path = self.record_path(&record.model_id, &record.instance_id);
        fs::create_dir_all(path.parent().expect("record path has a parent"))?;
        let body = serde_json::to_string_pretty(record).map_err(io::Error::other)?;
        fs::write(&path, body)?;
        Ok(path)
    }

    pub fn exists(&self, model_id: &str, instance_id: &str) -> bool {
        self.record_path(model_id, instance_id).is_file()
    }

    pub fn load(&self, model_id: &str, instance_id: &str) -> io::Result<AuditRecord> {
        let body = fs::read_to_string(self.record_path(model_id, instance_id))?;
        serde_json::from_str(&body).map_err(io::Error::other)
    }

    /// Find the record for an instance without knowing its model.
    pub fn find_instance(&self, instance_id: &str) -> io::Result<Option<AuditRecord>> {
        let hits = self.query(&AuditFilter::Instance(instance_id.to_string()))?;
        Ok(hits.into_iter().next())
    }

    /// Scan the store and return matching records ordered by creation time,
    /// then instance id.
    pub fn query(&self, filter: &AuditFilter) -> io::Result<Vec<AuditRecord>> {
        let mut out = Vec::new();
        for model_entry in sorted_dir(&self.root)? {
            if !model_entry.is_dir() {
                continue;
            }
            for record_entry in sorted_dir(&model_entry)? {
                if record_entry.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let body = fs::read_to_string(&record_entry)?;
                let record: AuditRecord = match serde_json::from_str(&body) {
                    Ok(r) => r,
                    Err(err) => {
                        log::warn!("skipping unreadable audit record {record_entry:?}: {err}");
                        continue;
                    }
                };
                if filter.matches(&record) {
                    out.push(record);
                }
            }
        }
        out.sort_by(|a, b| {
            a.created_ts
                .cmp(&b.created_ts)
                .then_with(|| a.instance_id.cmp(&b.instance_id))
        });
        Ok(out)
    }
}

fn sorted_dir(path: &Path) -> io::Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = match fs::read_dir(path) {
        Ok(iter) => iter
            .collect::<io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .collect(),
        Err(err) if err.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(err) => return Err(err),
    };
    entries.sort();
    Ok(entries)
}

fn str_of(value: &serde_json::Value, key: &str) -> String {
    value
        .get(key)
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string()
}

fn map_of(value: &serde_json::Value, key: &str) -> BTreeMap<String, serde_json::Value> {
    value
        .get(key)
        .and_then(|v| v.as_object())
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::event::payload;
    use crate::model::workflow::parse_workflow;

    fn sample() -> (WorkflowModel, WorkflowInstance, Vec<InstanceEvent>) {
        let model = parse_workflow(
            r#"{
                "id": "audited",
                "activities": [
                    {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                    {"id": "B", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
                ],
                "edges": [{"from": "A", "to": "B", "cond": "$x > 0"}],
                "start": ["A"]
            }"#,
        )
        .unwrap();
        let vars: payload::Vars = BTreeMap::new();
        let outs: payload::Vars =
            [("x".to_string(), serde_json::json!(2))].into_iter().collect();
        let mut events = vec![
            InstanceEvent {
                seq: 1,
                ts: 10,
                kind: EventKind::Instantiated,
                payload: payload::instantiated("audited", &vars, None),
            },
            InstanceEvent {
                seq: 2,
                ts: 10,
                kind: EventKind::ActivityStarted,
                payload: payload::activity_started("A", "i-A-1", &vars, None),
            },
            InstanceEvent {
                seq: 3,
                ts: 25,
                kind: EventKind::ActivityCompleted,
                payload: payload::activity_completed("A", "i-A-1", &outs),
            },
            InstanceEvent {
                seq: 4,
                ts: 25,
                kind: EventKind::VariablesUpdated,
                payload: payload::variables_updated("A", "i-A-1", &outs),
            },
            InstanceEvent {
                seq: 5,
                ts: 25,
                kind: EventKind::EdgeFired,
                payload: payload::edge_fired(0, "A", "B", "true", false),
            },
            InstanceEvent {
                seq: 6,
                ts: 26,
                kind: EventKind::ActivityStarted,
                payload: payload::activity_started("B", "i-B-1", &vars, None),
            },
            InstanceEvent {
                seq: 7,
                ts: 30,
                kind: EventKind::ActivityCompleted,
                payload: payload::activity_completed("B", "i-B-1", &BTreeMap::new()),
            },
        ];
        let next = events.len() as u64 + 1;
        events.push(InstanceEvent {
            seq: next,
            ts: 30,
            kind: EventKind::InstanceCompleted,
            payload: payload::instance_completed(&outs),
        });
        let instance = WorkflowInstance::replay("i-1", &model, &events).unwrap();
        (model, instance, events)
    }

    #[test]
    fn record_derives_durations_and_edge_decisions() {
        let (model, instance, events) = sample();
        let record = AuditRecord::build(&model, &instance, events.clone());
        assert_eq!(record.status, InstanceStatus::Completed);
        assert_eq!(record.activities.len(), 2);
        assert_eq!(record.activities[0].activity, "A");
        assert_eq!(record.activities[0].duration_ms, Some(15));
        assert_eq!(record.activities[0].outcome, "completed");
        assert_eq!(
            record.activities[0].outputs.as_ref().unwrap()["x"],
            serde_json::json!(2)
        );
        assert_eq!(record.activities[1].duration_ms, Some(4));
        assert_eq!(record.edges.len(), 1);
        assert_eq!(record.edges[0].result, "true");
        assert_eq!(record.edges[0].condition, "($x > 0)");
        assert_eq!(record.events, events, "history is preserved untouched");
    }

    #[test]
    fn store_round_trips_records() {
        let dir = tempfile::tempdir().unwrap();
        let store = AuditStore::open(dir.path().join("audit")).unwrap();
        let (model, instance, events) = sample();
        let record = AuditRecord::build(&model, &instance, events);
        let path = store.write(&record).unwrap();
        assert!(path.ends_with("audited/i-1.json"));
        assert!(store.exists("audited", "i-1"));
        let loaded = store.load("audited", "i-1").unwrap();
        assert_eq!(loaded, record);
    }

    #[test]
    fn query_filters_by_model_instance_and_time() {
        let dir = tempfile::tempdir().unwrap();
        let store = AuditStore::open(dir.path().join("audit")).unwrap();
        let (model, instance, events) = sample();
        for (id, ts) in [("i-1", 10u64), ("i-2", 50), ("i-3", 90)] {
            let mut record = AuditRecord::build(&model, &instance, events.clone());
            record.instance_id = id.to_string();
            record.created_ts = ts;
            store.write(&record).unwrap();
        }
        let by_model = store
            .query(&AuditFilter::Model("audited".to_string()))
            .unwrap();
        assert_eq!(by_model.len(), 3);
        assert_eq!(by_model[0].instance_id, "i-1");
        let by_instance = store
            .query(&AuditFilter::Instance("i-2".to_string()))
            .unwrap();
        assert_eq!(by_instance.len(), 1);
        let by_time = store
            .query(&AuditFilter::TimeRange { from: 40, to: 90 })
            .unwrap();
        assert_eq!(by_time.len(), 2);
        assert_eq!(by_time[1].instance_id, "i-3");
        assert!(store
            .query(&AuditFilter::Model("other".to_string()))
            .unwrap()
            .is_empty());
        assert!(store.find_instance("i-3").unwrap().is_some());
        assert!(store.find_instance("nope").unwrap().is_none());
    }
}
