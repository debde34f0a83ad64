//! Hybrid-loop detection: find workflow cycles that contain a quantum
//! activity. Such loops are the variational pattern — a quantum program
//! invoked repeatedly with classically optimized parameters — and the
//! gateway uses them to decide QPU session reservation.

use crate::model::workflow::{ActivityKind, WorkflowModel};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

/// One cycle-closure of the workflow graph (a strongly connected component
/// closed by at least one loop_back edge) containing quantum work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridLoop {
    pub members: BTreeSet<String>,
    pub quantum_members: BTreeSet<String>,
}

impl HybridLoop {
    pub fn contains(&self, activity_id: &str) -> bool {
        self.members.contains(activity_id)
    }
}

/// Detect hybrid loops: strongly connected components that contain ≥1
/// loop_back edge and ≥1 quantum activity. Results are ordered by their
/// smallest member id so callers see a deterministic list.
pub fn detect_hybrid_loops(model: &WorkflowModel) -> Vec<HybridLoop> {
    let index: HashMap<&str, usize> = model
        .activities
        .iter()
        .enumerate()
        .map(|(i, a)| (a.id.as_str(), i))
        .collect();
    let n = model.activities.len();
    let mut adjacency = vec![Vec::new(); n];
    for edge in &model.edges {
        if let (Some(&u), Some(&v)) = (index.get(edge.from.as_str()), index.get(edge.to.as_str()))
        {
            adjacency[u].push(v);
        }
    }

    let components = tarjan_sccs(n, &adjacency);

    let mut loops = Vec::new();
    for component in components {
        let members: BTreeSet<usize> = component.iter().copied().collect();
        let is_cycle = members.len() > 1
            || component
                .first()
                .map(|&v| adjacency[v].contains(&v))
                .unwrap_or(false);
        if !is_cycle {
            continue;
        }
        let closed_by_loop_edge = model.edges.iter().any(|e| {
            e.loop_back
                && index.get(e.from.as_str()).is_some_and(|u| members.contains(u))
                && index.get(e.to.as_str()).is_some_and(|v| members.contains(v))
        });
        if !closed_by_loop_edge {
            continue;
        }
        let member_ids: BTreeSet<String> = members
            .iter()
            .map(|&i| model.activities[i].id.clone())
            .collect();
        let quantum_members: BTreeSet<String> = members
            .iter()
            .filter(|&&i| model.activities[i].kind == ActivityKind::Quantum)
            .map(|&i| model.activities[i].id.clone())
            .collect();
        if quantum_members.is_empty() {
            continue;
        }
        loops.push(HybridLoop {
            members: member_ids,
            quantum_members,
        });
    }
    loops.sort_by(|a, b| a.members.iter().next().cmp(&b.members.iter().next()));
    loops
}

/// Tarjan's strongly-connected-components algorithm, iterative to keep deep
/// graphs off the call stack. Returns components in discovery order.
fn tarjan_sccs(n: usize, adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    #[derive(Clone)]
    struct NodeState {
        index: Option<usize>,
        lowlink: usize,
        on_stack: bool,
    }
    let mut state = vec![
        NodeState {
            index: None,
            lowlink: 0,
            on_stack: false,
        };
        n
    ];
    let mut next_index = 0;
    let mut stack: Vec<usize> = Vec::new();
    let mut components = Vec::new();

    for root in 0..n {
        if state[root].index.is_some() {
            continue;
        }
        // each frame: (node, next successor position)
        let mut call_stack = vec![(root, 0usize)];
        while let Some(&mut (v, ref mut next)) = call_stack.last_mut() {
            if *next == 0 {
                state[v].index = Some(next_index);
                state[v].lowlink = next_index;
                next_index += 1;
                stack.push(v);
                state[v].on_stack = true;
            }
            if *next < adjacency[v].len() {
                let w = adjacency[v][*next];
                *next += 1;
                match state[w].index {
                    None => call_stack.push((w, 0)),
                    Some(w_index) => {
                        if state[w].on_stack {
                            state[v].lowlink = state[v].lowlink.min(w_index);
                        }
                    }
                }
            } else {
                if state[v].lowlink == state[v].index.unwrap() {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        state[w].on_stack = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    components.push(component);
                }
                call_stack.pop();
                if let Some(&mut (parent, _)) = call_stack.last_mut() {
                    state[parent].lowlink = state[parent].lowlink.min(state[v].lowlink);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::workflow::parse_workflow;

    #[test]
    fn acyclic_model_has_no_loops() {
        let model = parse_workflow(
            r#"{
                "id": "line",
                "activities": [
                    {"id": "A", "kind": "quantum", "impl": {"kind": "qpu_job", "target": "c"}},
                    {"id": "B", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
                ],
                "edges": [{"from": "A", "to": "B"}],
                "start": ["A"]
            }"#,
        )
        .unwrap();
        assert!(detect_hybrid_loops(&model).is_empty());
    }

    #[test]
    fn variational_two_activity_loop_is_detected() {
        // quantum circuit execution feeding a classical parameter optimizer
        // that loops back — the variational eigensolver shape
        let model = parse_workflow(
            r#"{
                "id": "vqe-shape",
                "activities": [
                    {"id": "execute_circuit", "kind": "quantum",
                     "impl": {"kind": "qpu_job", "target": "circuit"}},
                    {"id": "optimize_parameters", "kind": "classical",
                     "impl": {"kind": "in_process", "target": "stub:optimize"}}
                ],
                "edges": [
                    {"from": "execute_circuit", "to": "optimize_parameters"},
                    {"from": "optimize_parameters", "to": "execute_circuit",
                     "cond": "$delta > $tol", "loop_back": true}
                ],
                "start": ["execute_circuit"]
            }"#,
        )
        .unwrap();
        let loops = detect_hybrid_loops(&model);
        assert_eq!(loops.len(), 1);
        let expected: BTreeSet<String> = ["execute_circuit", "optimize_parameters"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(loops[0].members, expected);
        assert_eq!(
            loops[0].quantum_members.iter().collect::<Vec<_>>(),
            vec!["execute_circuit"]
        );
    }

    #[test]
    fn classical_only_cycle_is_not_hybrid() {
        let model = parse_workflow(
            r#"{
                "id": "classical-loop",
                "activities": [
                    {"id": "A", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                    {"id": "B", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
                ],
                "edges": [
                    {"from": "A", "to": "B"},
                    {"from": "B", "to": "A", "loop_back": true}
                ],
                "start": ["A"]
            }"#,
        )
        .unwrap();
        assert!(detect_hybrid_loops(&model).is_empty());
    }

    #[test]
    fn two_disjoint_loops_are_ordered_by_smallest_member() {
        let model = parse_workflow(
            r#"{
                "id": "two-loops",
                "activities": [
                    {"id": "m_run", "kind": "quantum", "impl": {"kind": "qpu_job", "target": "c"}},
                    {"id": "m_tune", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                    {"id": "bridge", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}},
                    {"id": "a_run", "kind": "quantum", "impl": {"kind": "qpu_job", "target": "c"}},
                    {"id": "a_tune", "kind": "classical", "impl": {"kind": "in_process", "target": "t"}}
                ],
                "edges": [
                    {"from": "m_run", "to": "m_tune"},
                    {"from": "m_tune", "to": "m_run", "cond": "$more", "loop_back": true},
                    {"from": "m_tune", "to": "bridge", "cond": "!$more"},
                    {"from": "bridge", "to": "a_run"},
                    {"from": "a_run", "to": "a_tune"},
                    {"from": "a_tune", "to": "a_run", "cond": "$again", "loop_back": true}
                ],
                "start": ["m_run"]
            }"#,
        )
        .unwrap();
        let loops = detect_hybrid_loops(&model);
        assert_eq!(loops.len(), 2);
        assert_eq!(loops[0].members.iter().next().unwrap(), "a_run");
        assert_eq!(loops[1].members.iter().next().unwrap(), "m_run");
    }

    #[test]
    fn self_loop_on_quantum_activity_counts() {
        let model = parse_workflow(
            r#"{
                "id": "self",
                "activities": [
                    {"id": "Q", "kind": "quantum", "impl": {"kind": "qpu_job", "target": "c"}}
                ],
                "edges": [{"from": "Q", "to": "Q", "cond": "$more", "loop_back": true}],
                "start": ["Q"]
            }"#,
        )
        .unwrap();
        let loops = detect_hybrid_loops(&model);
        assert_eq!(loops.len(), 1);
        assert!(loops[0].contains("Q"));
    }
}
