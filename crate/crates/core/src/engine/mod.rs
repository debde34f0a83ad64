//! The workflow engine: event-sourced instance state, graph navigation,
//! executor contracts, and the audit trail.
//!
//! Every state change of a workflow instance is an [`event::InstanceEvent`]
//! appended to the instance's log *before* its side effect becomes
//! observable (write-ahead). Replaying the log through the
//! [`instance::WorkflowInstance`] fold reconstructs the exact state, which
//! is what makes execution interruptible and recoverable at any point. The
//! live runtime and recovery share that single fold.

pub mod audit;
pub mod event;
pub mod executor;
pub mod instance;
pub mod navigate;
pub mod store;

pub use audit::{AuditFilter, AuditRecord, AuditStore};
pub use event::{CorrelationKey, EventKind, InstanceEvent};
pub use instance::{ActivityState, EdgeState, InstanceStatus, WorkflowInstance};
pub use store::EventStore;
