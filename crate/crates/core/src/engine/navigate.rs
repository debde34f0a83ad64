//! Pure navigation: given a model and the current instance state, decide the
//! next batch of transitions.
//!
//! The navigator never touches storage or executors. It returns [`NavAction`]
//! values; the runtime turns each into a persisted event (and, for starts, a
//! dispatch) and folds it back into the instance, then asks again. Because
//! the decision is a pure function of replayable state, a recovered instance
//! continues exactly where the crashed one left off.
//!
//! Priorities, highest first:
//! 1. terminal instances produce nothing;
//! 2. an active compensation run drives its plan, one member at a time;
//! 3. unevaluated edges leaving completed activities are fired (conditions
//!    evaluated against the current variables) and edges leaving skipped
//!    activities are marked dead, eliminating dead paths transitively;
//! 4. inactive activities whose incoming joins are satisfied become ready;
//! 5. ready activities are started;
//! 6. when nothing is running or pending and every non-compensator activity
//!    is completed or skipped, the instance completes.

use crate::condition::{eval_condition, EvalError, VarSet};
use crate::engine::instance::{ActivityState, EdgeState, InstanceStatus, WorkflowInstance};
use crate::model::workflow::WorkflowModel;

/// Outcome recorded for a fired edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOutcome {
    True,
    False,
    Dead,
}

impl EdgeOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeOutcome::True => "true",
            EdgeOutcome::False => "false",
            EdgeOutcome::Dead => "dead",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NavAction {
    /// Record the outcome of edge `index` in the model's edge list.
    FireEdge { index: usize, outcome: EdgeOutcome },
    /// Mark an activity ready (its join is satisfied).
    MarkReady { activity: String },
    /// Start a ready activity: mint a token, persist, dispatch.
    StartActivity { activity: String },
    /// Current compensation entry has no compensator: record it skipped.
    SkipCompensation { member: String },
    /// Dispatch the compensator run for the current compensation entry.
    StartCompensator { member: String, compensator: String },
    /// Every plan entry is processed: the unit is compensated.
    FinishCompensation { unit: String },
    /// All work is done.
    CompleteInstance,
    /// Unrecoverable navigation error.
    FailInstance { reason: String },
}

/// Compute the next batch of transitions for `instance`. Empty means the
/// instance is either terminal or waiting on running work.
pub fn next_step(
    model: &WorkflowModel,
    instance: &WorkflowInstance,
    max_iterations: u64,
) -> Vec<NavAction> {
    if instance.status != InstanceStatus::Running {
        return Vec::new();
    }

    if let Some(comp) = &instance.compensation {
        return compensation_step(comp);
    }

    let edge_actions = fire_edges(model, instance, max_iterations);
    match edge_actions {
        Ok(actions) if !actions.is_empty() => return actions,
        Ok(_) => {}
        Err(fail) => return vec![fail],
    }

    let ready = ready_scan(model, instance);
    if !ready.is_empty() {
        return ready;
    }

    let starts: Vec<NavAction> = instance
        .activity_states
        .iter()
        .filter(|(_, state)| **state == ActivityState::Ready)
        .map(|(id, _)| NavAction::StartActivity {
            activity: id.clone(),
        })
        .collect();
    if !starts.is_empty() {
        return starts;
    }

    terminal_scan(model, instance)
}

fn compensation_step(comp: &crate::engine::instance::CompensationState) -> Vec<NavAction> {
    if comp.next >= comp.plan.len() {
        return vec![NavAction::FinishCompensation {
            unit: comp.unit.clone(),
        }];
    }
    if comp.dispatched {
        // current compensator run is in flight
        return Vec::new();
    }
    let entry = &comp.plan[comp.next];
    match &entry.compensator {
        None => vec![NavAction::SkipCompensation {
            member: entry.member.clone(),
        }],
        Some(compensator) => vec![NavAction::StartCompensator {
            member: entry.member.clone(),
            compensator: compensator.clone(),
        }],
    }
}

/// Fire every unevaluated edge whose source has settled. Fails the instance
/// on evaluation errors and on loop iteration overruns.
fn fire_edges(
    model: &WorkflowModel,
    instance: &WorkflowInstance,
    max_iterations: u64,
) -> Result<Vec<NavAction>, NavAction> {
    let mut actions = Vec::new();
    let vars: VarSet = instance.variables.clone();
    for (index, edge) in model.edges.iter().enumerate() {
        if instance.edge_states[index] != EdgeState::Unevaluated {
            continue;
        }
        let outcome = match instance.activity_state(&edge.from) {
            ActivityState::Skipped => EdgeOutcome::Dead,
            ActivityState::Completed => match eval_condition(&edge.condition, &vars) {
                Ok(true) => EdgeOutcome::True,
                Ok(false) => EdgeOutcome::False,
                Err(err) => {
                    return Err(NavAction::FailInstance {
                        reason: format!(
                            "condition on edge {} -> {} failed: {}",
                            edge.from,
                            edge.to,
                            describe_eval_error(&err)
                        ),
                    });
                }
            },
            _ => continue,
        };
        if edge.loop_back && outcome == EdgeOutcome::True {
            let count = instance
                .loop_iteration_counts
                .get(&edge.to)
                .copied()
                .unwrap_or(0);
            if count + 1 > max_iterations {
                return Err(NavAction::FailInstance {
                    reason: format!(
                        "loop at {} exceeded the iteration limit of {}",
                        edge.to, max_iterations
                    ),
                });
            }
        }
        actions.push(NavAction::FireEdge { index, outcome });
    }
    // loop_back edges fire after their siblings: a firing loop edge resets
    // its subtree, and results recorded for sibling edges afterwards would
    // survive the reset and poison the next iteration
    actions.sort_by_key(|action| match action {
        NavAction::FireEdge { index, .. } => (model.edges[*index].loop_back, *index),
        _ => (false, usize::MAX),
    });
    Ok(actions)
}

fn ready_scan(model: &WorkflowModel, instance: &WorkflowInstance) -> Vec<NavAction> {
    let mut ready = Vec::new();
    for (id, state) in &instance.activity_states {
        if *state != ActivityState::Inactive {
            continue;
        }
        let join = model.incoming_join_edges(id);
        let satisfied = if model.start_activities.iter().any(|s| s == id) {
            // validated start activities have no incoming non-loop edges
            true
        } else if join.is_empty() {
            // unreachable except through compensation; never scheduled here
            false
        } else {
            join.iter()
                .all(|&i| instance.edge_states[i] != EdgeState::Unevaluated)
                && join
                    .iter()
                    .any(|&i| instance.edge_states[i] == EdgeState::FiredTrue)
        };
        if satisfied {
            ready.push(NavAction::MarkReady {
                activity: id.clone(),
            });
        }
    }
    ready
}

fn terminal_scan(model: &WorkflowModel, instance: &WorkflowInstance) -> Vec<NavAction> {
    let mut all_settled = true;
    for (id, state) in &instance.activity_states {
        match state {
            ActivityState::Ready | ActivityState::Running | ActivityState::Compensating => {
                return Vec::new();
            }
            ActivityState::Completed | ActivityState::Skipped => {}
            ActivityState::Inactive => {
                if !model.is_detached_compensator(id) {
                    all_settled = false;
                }
            }
            ActivityState::Failed | ActivityState::Compensated => {
                // a failed activity outside a unit fails the instance before
                // navigation resumes; compensated members end via the unit
                all_settled = false;
            }
        }
    }
    if all_settled {
        vec![NavAction::CompleteInstance]
    } else {
        // nothing runnable and not everything settled: a stuck instance
        // (possible only on models that validation cannot rule out, e.g. a
        // join reachable only through a loop-back edge)
        vec![NavAction::FailInstance {
            reason: "no runnable activities remain but the workflow is incomplete".to_string(),
        }]
    }
}

fn describe_eval_error(err: &EvalError) -> String {
    err.to_string()
}
