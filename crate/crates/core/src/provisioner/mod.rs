//! Deployment orchestration: turns a topology (or a fragment of one) into an
//! ordered plan, drives pluggable installers bottom-to-top with per-stage
//! parallelism, records every action in an install log, and tears
//! environments down again with reference-counted sharing between fragments.

pub mod engine;
pub mod installer;
pub mod plan;

pub use engine::{
    replay_install_log, ConnectionState, InstallLogEntry, NodeState, ProvisionEngine,
    ProvisionError, ProvisionOptions, ProvisionState,
};
pub use installer::{FaultPlan, Installer, InstallerRegistry, MockInstaller, ProcessExecInstaller};
pub use plan::{plan, plan_scoped, ConnectionStep, DeploymentPlan};
