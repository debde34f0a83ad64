//! Domain types and static analyses: workflow graphs, topology graphs,
//! fragment mapping, and hybrid-loop detection.
//!
//! Everything in this module is immutable after construction and analysed by
//! pure functions, so values can be shared freely across threads.

pub mod hybrid;
pub mod topology;
pub mod workflow;

pub use hybrid::{detect_hybrid_loops, HybridLoop};
pub use topology::{
    fragment_for, parse_topology, serialize_topology, validate_topology, Relation, TopologyEdge,
    TopologyFragment, TopologyModel, TopologyNode,
};
pub use workflow::{
    parse_workflow, serialize_workflow, validate_workflow, Activity, ActivityKind, BindingKind,
    ControlEdge, ImplementationBinding, Mapping, UnitOfWork, WorkflowModel,
};
