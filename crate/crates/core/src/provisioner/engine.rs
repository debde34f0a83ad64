//! Plan execution: installs stage by stage (parallel within a stage, with
//! retries and backoff), establishes connections last, tears down in reverse,
//! and appends every action to the environment's install log.
//!
//! Sharing between fragments is tracked as claims: each fragment provision
//! stamps its claimant id on every node it needs, and a node is only
//! uninstalled once its last claim is withdrawn. Claims make repeated
//! provisioning of the same fragment a strict no-op while still letting
//! overlapping fragments share hosts.

use crate::clock::TimeMs;
use crate::model::topology::{TopologyFragment, TopologyModel};
use crate::provisioner::installer::InstallerRegistry;
use crate::provisioner::plan::{plan_scoped, DeploymentPlan};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

/// Claimant id used for whole-topology (eager) provisioning.
pub const ENVIRONMENT_CLAIM: &str = "environment";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Pending,
    Installing,
    Installed,
    Failed,
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionState {
    Pending,
    Established,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionState {
    pub environment_id: String,
    pub nodes: BTreeMap<String, NodeState>,
    /// Keyed `from->to`.
    pub connections: BTreeMap<String, ConnectionState>,
    /// Which fragments (by claimant id) currently need each node.
    pub claims: BTreeMap<String, BTreeSet<String>>,
}

impl ProvisionState {
    pub fn new(environment_id: &str) -> ProvisionState {
        ProvisionState {
            environment_id: environment_id.to_string(),
            nodes: BTreeMap::new(),
            connections: BTreeMap::new(),
            claims: BTreeMap::new(),
        }
    }

    pub fn node_state(&self, id: &str) -> NodeState {
        self.nodes.get(id).copied().unwrap_or(NodeState::Pending)
    }

    pub fn is_installed(&self, id: &str) -> bool {
        self.node_state(id) == NodeState::Installed
    }

    pub fn installed_nodes(&self) -> BTreeSet<String> {
        self.nodes
            .iter()
            .filter(|(_, s)| **s == NodeState::Installed)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn connection_state(&self, from: &str, to: &str) -> ConnectionState {
        self.connections
            .get(&connection_key(from, to))
            .copied()
            .unwrap_or(ConnectionState::Pending)
    }

    pub fn established_connections(&self) -> Vec<String> {
        self.connections
            .iter()
            .filter(|(_, s)| **s == ConnectionState::Established)
            .map(|(k, _)| k.clone())
            .collect()
    }

    fn claim(&mut self, node: &str, claimant: &str) {
        self.claims
            .entry(node.to_string())
            .or_default()
            .insert(claimant.to_string());
    }

    fn withdraw(&mut self, node: &str, claimant: &str) {
        if let Some(set) = self.claims.get_mut(node) {
            set.remove(claimant);
            if set.is_empty() {
                self.claims.remove(node);
            }
        }
    }

    pub fn reference_count(&self, node: &str) -> usize {
        self.claims.get(node).map(|s| s.len()).unwrap_or(0)
    }
}

pub fn connection_key(from: &str, to: &str) -> String {
    format!("{from}->{to}")
}

/// One line of `install.log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstallLogEntry {
    pub ts: TimeMs,
    pub node: String,
    /// install | uninstall | connect | disconnect
    pub action: String,
    /// ok | retry | failed
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct ProvisionOptions {
    /// Additional attempts after the first failure.
    pub retries: u32,
    /// Base of the exponential backoff between attempts; None sleeps not at
    /// all (simulated clock).
    pub backoff_base_ms: Option<u64>,
}

impl Default for ProvisionOptions {
    fn default() -> Self {
        ProvisionOptions {
            retries: 3,
            backoff_base_ms: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProvisionError {
    #[error("no installer named '{installer}' for node {node}")]
    UnknownInstaller { node: String, installer: String },
    #[error("install of {node} failed after {attempts} attempts: {detail}")]
    InstallFailed {
        node: String,
        attempts: u32,
        detail: String,
    },
    #[error("install log: {0}")]
    Io(#[from] io::Error),
}

/// Executes plans against one environment directory.
pub struct ProvisionEngine<'a> {
    topology: &'a TopologyModel,
    registry: &'a InstallerRegistry,
    env_dir: PathBuf,
    options: ProvisionOptions,
    time: Box<dyn Fn() -> TimeMs + 'a>,
}

struct InstallOutcome {
    node: String,
    /// Failure detail of every attempt that was retried.
    retried: Vec<String>,
    attempts: u32,
    result: Result<String, String>,
}

impl<'a> ProvisionEngine<'a> {
    pub fn new(
        topology: &'a TopologyModel,
        registry: &'a InstallerRegistry,
        env_dir: impl Into<PathBuf>,
        options: ProvisionOptions,
        time: Box<dyn Fn() -> TimeMs + 'a>,
    ) -> io::Result<ProvisionEngine<'a>> {
        let env_dir = env_dir.into();
        fs::create_dir_all(&env_dir)?;
        Ok(ProvisionEngine {
            topology,
            registry,
            env_dir,
            options,
            time,
        })
    }

    pub fn env_dir(&self) -> &Path {
        &self.env_dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.env_dir.join("install.log")
    }

    fn now(&self) -> TimeMs {
        (self.time)()
    }

    /// Provision the whole topology and claim it for the environment.
    pub fn provision_all(&self, state: &mut ProvisionState) -> Result<(), ProvisionError> {
        let plan = plan_scoped(self.topology, &self.topology.node_ids());
        self.execute_plan(&plan, state)?;
        for node in plan.nodes_in_order() {
            state.claim(&node, ENVIRONMENT_CLAIM);
        }
        Ok(())
    }

    /// Provision the nodes of `fragment` that are not installed yet; already
    /// shared nodes are reused. The fragment's claim is recorded either way.
    pub fn provision_fragment(
        &self,
        fragment: &TopologyFragment,
        state: &mut ProvisionState,
    ) -> Result<(), ProvisionError> {
        let plan = plan_scoped(self.topology, &fragment.node_ids);
        self.execute_plan(&plan, state)?;
        for node in &fragment.node_ids {
            state.claim(node, &fragment.activity_id);
        }
        Ok(())
    }

    fn execute_plan(
        &self,
        plan: &DeploymentPlan,
        state: &mut ProvisionState,
    ) -> Result<(), ProvisionError> {
        for stage in &plan.stages {
            let pending: Vec<&str> = stage
                .iter()
                .map(String::as_str)
                .filter(|id| !state.is_installed(id))
                .collect();
            if pending.is_empty() {
                continue;
            }

            // resolve everything up front so an unknown installer aborts the
            // stage before side effects
            let mut workers = Vec::new();
            for id in &pending {
                let node = self.topology.node(id).expect("planned nodes exist");
                let installer = self.registry.resolve(&node.installer).ok_or_else(|| {
                    ProvisionError::UnknownInstaller {
                        node: node.id.clone(),
                        installer: node.installer.clone(),
                    }
                })?;
                workers.push((node, installer));
            }

            for id in &pending {
                state.nodes.insert((*id).to_string(), NodeState::Installing);
            }

            let retries = self.options.retries;
            let backoff = self.options.backoff_base_ms;
            let env_dir = self.env_dir.as_path();
            let outcomes: Vec<InstallOutcome> = std::thread::scope(|scope| {
                let handles: Vec<_> = workers
                    .into_iter()
                    .map(|(node, installer)| {
                        scope.spawn(move || install_with_retry(node, installer, env_dir, retries, backoff))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("install worker panicked"))
                    .collect()
            });

            // fold results and write the log in deterministic (stage) order
            let ts = self.now();
            let mut entries = Vec::new();
            let mut failure: Option<ProvisionError> = None;
            for outcome in outcomes {
                for detail in &outcome.retried {
                    entries.push(InstallLogEntry {
                        ts,
                        node: outcome.node.clone(),
                        action: "install".to_string(),
                        outcome: "retry".to_string(),
                        detail: Some(detail.clone()),
                    });
                }
                match &outcome.result {
                    Ok(_) => {
                        state
                            .nodes
                            .insert(outcome.node.clone(), NodeState::Installed);
                        entries.push(InstallLogEntry {
                            ts,
                            node: outcome.node.clone(),
                            action: "install".to_string(),
                            outcome: "ok".to_string(),
                            detail: None,
                        });
                    }
                    Err(detail) => {
                        state.nodes.insert(outcome.node.clone(), NodeState::Failed);
                        entries.push(InstallLogEntry {
                            ts,
                            node: outcome.node.clone(),
                            action: "install".to_string(),
                            outcome: "failed".to_string(),
                            detail: Some(detail.clone()),
                        });
                        if failure.is_none() {
                            failure = Some(ProvisionError::InstallFailed {
                                node: outcome.node.clone(),
                                attempts: outcome.attempts,
                                detail: detail.clone(),
                            });
                        }
                    }
                }
            }
            self.append_log(&entries)?;
            if let Some(err) = failure {
                // stage aborted: later stages stay pending
                return Err(err);
            }
        }

        let mut entries = Vec::new();
        for step in &plan.connections {
            let key = connection_key(&step.from, &step.to);
            if state.connections.get(&key) == Some(&ConnectionState::Established) {
                continue;
            }
            state.connections.insert(key.clone(), ConnectionState::Established);
            entries.push(InstallLogEntry {
                ts: self.now(),
                node: key,
                action: "connect".to_string(),
                outcome: "ok".to_string(),
                detail: None,
            });
        }
        self.append_log(&entries)?;
        Ok(())
    }

    /// Tear down everything: connections first, then nodes from the top of
    /// the stack downwards (exact reverse of the install stages). A failing
    /// uninstall marks the node failed and the teardown continues.
    pub fn deprovision_all(&self, state: &mut ProvisionState) -> Result<(), ProvisionError> {
        let plan = plan_scoped(self.topology, &self.topology.node_ids());
        let scope: Vec<String> = plan.nodes_in_order();
        self.teardown(&plan, &scope, state)?;
        state.claims.clear();
        Ok(())
    }

    /// Withdraw `fragment`'s claims and tear down only what nothing else
    /// still claims.
    pub fn deprovision_fragment(
        &self,
        fragment: &TopologyFragment,
        state: &mut ProvisionState,
    ) -> Result<(), ProvisionError> {
        for node in &fragment.node_ids {
            state.withdraw(node, &fragment.activity_id);
        }
        let removable: Vec<String> = fragment
            .node_ids
            .iter()
            .filter(|n| state.reference_count(n) == 0 && state.is_installed(n))
            .cloned()
            .collect();
        let plan = plan_scoped(self.topology, &fragment.node_ids);
        self.teardown(&plan, &removable, state)
    }

    fn teardown(
        &self,
        plan: &DeploymentPlan,
        removable: &[String],
        state: &mut ProvisionState,
    ) -> Result<(), ProvisionError> {
        let mut entries = Vec::new();

        // connections first: any established connection losing an endpoint
        for step in plan.connections.iter().rev() {
            let key = connection_key(&step.from, &step.to);
            let touches_removed =
                removable.contains(&step.from) || removable.contains(&step.to);
            if touches_removed
                && state.connections.get(&key) == Some(&ConnectionState::Established)
            {
                state.connections.insert(key.clone(), ConnectionState::Pending);
                entries.push(InstallLogEntry {
                    ts: self.now(),
                    node: key,
                    action: "disconnect".to_string(),
                    outcome: "ok".to_string(),
                    detail: None,
                });
            }
        }

        for stage in plan.stages.iter().rev() {
            for id in stage.iter().rev() {
                if !removable.contains(id) || !state.is_installed(id) {
                    continue;
                }
                let node = self.topology.node(id).expect("planned nodes exist");
                let installer = self.registry.resolve(&node.installer).ok_or_else(|| {
                    ProvisionError::UnknownInstaller {
                        node: node.id.clone(),
                        installer: node.installer.clone(),
                    }
                })?;
                match installer.uninstall(node, &self.env_dir) {
                    Ok(()) => {
                        state.nodes.insert(id.clone(), NodeState::Removed);
                        entries.push(InstallLogEntry {
                            ts: self.now(),
                            node: id.clone(),
                            action: "uninstall".to_string(),
                            outcome: "ok".to_string(),
                            detail: None,
                        });
                    }
                    Err(detail) => {
                        state.nodes.insert(id.clone(), NodeState::Failed);
                        entries.push(InstallLogEntry {
                            ts: self.now(),
                            node: id.clone(),
                            action: "uninstall".to_string(),
                            outcome: "failed".to_string(),
                            detail: Some(detail),
                        });
                    }
                }
            }
        }
        self.append_log(&entries)?;
        Ok(())
    }

    fn append_log(&self, entries: &[InstallLogEntry]) -> io::Result<()> {
        if entries.is_empty() {
            return Ok(());
        }
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.log_path())?;
        let mut body = String::new();
        for entry in entries {
            body.push_str(&serde_json::to_string(entry).map_err(io::Error::other)?);
            body.push('\n');
        }
        file.write_all(body.as_bytes())?;
        file.flush()
    }
}

fn install_with_retry(
    node: &crate::model::topology::TopologyNode,
    installer: Arc<dyn crate::provisioner::installer::Installer>,
    env_dir: &Path,
    retries: u32,
    backoff_base_ms: Option<u64>,
) -> InstallOutcome {
    let mut retried = Vec::new();
    let mut attempts = 0;
    loop {
        attempts += 1;
        match installer.install(node, env_dir) {
            Ok(handle) => {
                return InstallOutcome {
                    node: node.id.clone(),
                    retried,
                    attempts,
                    result: Ok(handle),
                };
            }
            Err(detail) => {
                let may_retry = attempts <= retries && installer.idempotent();
                if !may_retry {
                    return InstallOutcome {
                        node: node.id.clone(),
                        retried,
                        attempts,
                        result: Err(detail),
                    };
                }
                retried.push(detail);
                if let Some(base) = backoff_base_ms {
                    let factor = 1u64 << (attempts - 1).min(6);
                    std::thread::sleep(std::time::Duration::from_millis(base * factor));
                }
            }
        }
    }
}

/// Rebuild environment state from its install log (crash recovery). Nodes
/// whose last action is a successful install are considered installed and
/// claimed by the environment.
pub fn replay_install_log(environment_id: &str, log_path: &Path) -> io::Result<ProvisionState> {
    let mut state = ProvisionState::new(environment_id);
    let body = match fs::read_to_string(log_path) {
        Ok(body) => body,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(state),
        Err(e) => return Err(e),
    };
    for line in body.lines().filter(|l| !l.trim().is_empty()) {
        let entry: InstallLogEntry = serde_json::from_str(line).map_err(io::Error::other)?;
        match (entry.action.as_str(), entry.outcome.as_str()) {
            ("install", "ok") => {
                state.nodes.insert(entry.node.clone(), NodeState::Installed);
                state.claim(&entry.node, ENVIRONMENT_CLAIM);
            }
            ("install", "failed") => {
                state.nodes.insert(entry.node.clone(), NodeState::Failed);
            }
            ("uninstall", "ok") => {
                state.nodes.insert(entry.node.clone(), NodeState::Removed);
                state.claims.remove(&entry.node);
            }
            ("connect", "ok") => {
                state
                    .connections
                    .insert(entry.node.clone(), ConnectionState::Established);
            }
            ("disconnect", "ok") => {
                state
                    .connections
                    .insert(entry.node.clone(), ConnectionState::Pending);
            }
            _ => {}
        }
    }
    Ok(state)
}
