//! duorch — a self-contained runtime for hybrid quantum-classical applications.
//!
//! Two orchestrations run intertwined here: the *workflow* orchestration
//! (control and data flow over a directed activity graph, executed by the
//! engine) and the *deployment* orchestration (an artifact topology installed
//! bottom-to-top by the provisioning engine). Applications ship as
//! self-contained Quantum Application Archives and enter the runtime through
//! a queue-style gateway speaking newline-delimited JSON envelopes. Quantum
//! activities execute against a simulated QPU whose shared-queue latency can
//! be bypassed by reserving an exclusive session for hybrid loops.
//!
//! Module map:
//! - [`model`] — workflow/topology domain types, validation, fragment
//!   mapping, hybrid-loop detection
//! - [`condition`] — the Boolean expression language on control edges
//! - [`engine`] — event-sourced instance state, navigation, audit trail
//! - [`provisioner`] — deployment plans, installers, install-state tracking
//! - [`archive`] — pack/unpack/validate of `.qaa` application archives
//! - [`qpusim`] — discrete-event QPU with sessions and latency statistics
//! - [`runtime`] — the kernel tying engine, provisioner, and QPU together
//! - [`gateway`] — TCP envelope server implementing the RUN protocol
//! - [`fixtures`] — shipped sample application and test workflows
//! - [`bench`] — the reservation latency benchmark

pub mod archive;
pub mod bench;
pub mod clock;
pub mod condition;
pub mod config;
pub mod engine;
pub mod fixtures;
pub mod gateway;
pub mod model;
pub mod provisioner;
pub mod qpusim;
pub mod runtime;
