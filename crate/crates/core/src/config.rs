//! Runtime configuration: one JSON document wiring together the gateway
//! listener, state locations, clock mode, QPU latency model, resource
//! policies, installers, and injectable faults. Every field has a default so
//! a minimal deployment can run with an empty object.

use crate::clock::ClockMode;
use crate::qpusim::LatencyModel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Environment lifecycle: keep the provisioned environment between runs, or
/// build it per run and tear it down afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    #[default]
    KeepAlive,
    PerRun,
}

/// When topology nodes are installed: all up front, or per activity fragment
/// right before its first dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProvisioningMode {
    #[default]
    Eager,
    Lazy,
}

/// Whether hybrid loops reserve exclusive QPU access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReservationPolicy {
    Off,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstallerKind {
    Mock,
    ProcessExec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstallerConfig {
    pub kind: InstallerKind,
    /// Helper command line for `process_exec` installers.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub command: Option<String>,
}

/// Injectable faults for tests and drills.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FaultConfig {
    /// Number of deployment provision steps (gateway step ordering) that
    /// fail once each before succeeding on retry.
    pub fail_provision_steps: u32,
    /// Per-node injected install failures (count; u32::MAX = permanent).
    pub fail_install: BTreeMap<String, u32>,
    /// Reject every QPU submission.
    pub qpu_offline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// TCP listen address for the gateway; the DUORCH_LISTEN environment
    /// variable takes precedence when set.
    pub listen: Option<String>,
    /// Directory under which `state/` and `audit/` live.
    pub root_dir: PathBuf,
    pub clock: ClockMode,
    pub latency: LatencyModel,
    pub lifecycle: Lifecycle,
    pub provisioning: ProvisioningMode,
    pub qpu_reservation: ReservationPolicy,
    /// Additional install attempts after a failure.
    pub provision_retries: u32,
    /// Loop iteration guard per loop target.
    pub max_iterations: u64,
    /// Maximum concurrently deploying RUN_ARCHIVE requests.
    pub max_inflight_deployments: usize,
    pub installers: BTreeMap<String, InstallerConfig>,
    pub faults: FaultConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        let mut installers = BTreeMap::new();
        installers.insert(
            "mock".to_string(),
            InstallerConfig {
                kind: InstallerKind::Mock,
                command: None,
            },
        );
        RuntimeConfig {
            listen: None,
            root_dir: PathBuf::from("."),
            clock: ClockMode::Simulated,
            latency: LatencyModel::default(),
            lifecycle: Lifecycle::default(),
            provisioning: ProvisioningMode::default(),
            qpu_reservation: ReservationPolicy::default(),
            provision_retries: 3,
            max_iterations: 1000,
            max_inflight_deployments: 4,
            installers,
            faults: FaultConfig::default(),
        }
    }
}

impl RuntimeConfig {
    pub fn from_json(document: &str) -> Result<RuntimeConfig, String> {
        serde_json::from_str(document).map_err(|e| format!("configuration: {e}"))
    }

    pub fn load(path: &std::path::Path) -> Result<RuntimeConfig, String> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| format!("configuration {}: {e}", path.display()))?;
        RuntimeConfig::from_json(&body)
    }

    /// The address to bind: DUORCH_LISTEN wins over the config file.
    pub fn listen_address(&self) -> Option<String> {
        match std::env::var("DUORCH_LISTEN") {
            Ok(addr) if !addr.trim().is_empty() => Some(addr),
            _ => self.listen.clone(),
        }
    }

    /// Fragments are provisioned lazily either when asked for explicitly or
    /// whenever the environment only lives for the run.
    pub fn effective_provisioning(&self) -> ProvisioningMode {
        if self.lifecycle == Lifecycle::PerRun {
            ProvisioningMode::Lazy
        } else {
            self.provisioning
        }
    }

    pub fn state_dir(&self) -> PathBuf {
        self.root_dir.join("state")
    }

    pub fn audit_dir(&self) -> PathBuf {
        self.root_dir.join("audit")
    }
}
