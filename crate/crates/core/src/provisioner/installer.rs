//! Pluggable installers and the registry that resolves them by name.
//!
//! Real deployment technology is out of scope: the mock installer material-
//! izes each node as a small JSON artifact under the environment directory,
//! which is enough to observe ordering, sharing, retries, and teardown. A
//! process_exec installer shells out to a local helper for nodes that need
//! real side effects.

use crate::engine::executor::run_process;
use crate::model::topology::TopologyNode;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

/// A deployment driver for one class of artifacts.
pub trait Installer: Send + Sync {
    /// Install `node` into the environment rooted at `env_dir`; returns an
    /// artifact handle (e.g. a path) recorded for diagnostics.
    fn install(&self, node: &TopologyNode, env_dir: &Path) -> Result<String, String>;
    fn uninstall(&self, node: &TopologyNode, env_dir: &Path) -> Result<(), String>;
    /// Idempotent installers may be retried blindly after a failure.
    fn idempotent(&self) -> bool {
        true
    }
}

/// Scripted install failures, keyed by node id: each install attempt on a
/// listed node consumes one failure until the budget runs out. `u32::MAX`
/// never runs out, making the failure permanent.
#[derive(Debug, Default, Clone)]
pub struct FaultPlan {
    budgets: Arc<Mutex<BTreeMap<String, u32>>>,
}

impl FaultPlan {
    pub fn new() -> FaultPlan {
        FaultPlan::default()
    }

    pub fn fail_node(&self, node: &str, times: u32) {
        self.budgets
            .lock()
            .expect("fault plan lock")
            .insert(node.to_string(), times);
    }

    /// Consume one scheduled failure for `node` if any remains.
    pub fn take_fault(&self, node: &str) -> bool {
        let mut budgets = self.budgets.lock().expect("fault plan lock");
        match budgets.get_mut(node) {
            Some(0) => false,
            Some(remaining) => {
                if *remaining != u32::MAX {
                    *remaining -= 1;
                }
                true
            }
            None => false,
        }
    }
}

/// Default installer: one JSON file per node under `<env>/nodes/`.
#[derive(Default, Clone)]
pub struct MockInstaller {
    faults: FaultPlan,
}

impl MockInstaller {
    pub fn new() -> MockInstaller {
        MockInstaller::default()
    }

    pub fn with_faults(faults: FaultPlan) -> MockInstaller {
        MockInstaller { faults }
    }

    fn artifact_path(node: &TopologyNode, env_dir: &Path) -> std::path::PathBuf {
        env_dir.join("nodes").join(format!("{}.json", node.id))
    }
}

impl Installer for MockInstaller {
    fn install(&self, node: &TopologyNode, env_dir: &Path) -> Result<String, String> {
        if self.faults.take_fault(&node.id) {
            return Err(format!("injected install fault for {}", node.id));
        }
        let path = Self::artifact_path(node, env_dir);
        fs::create_dir_all(path.parent().expect("artifact path has a parent"))
            .map_err(|e| format!("create {}: {e}", path.display()))?;
        let body = serde_json::json!({
            "id": node.id,
            "type": node.artifact_type,
            "properties": node.properties,
        });
        fs::write(&path, serde_json::to_string_pretty(&body).expect("json"))
            .map_err(|e| format!("write {}: {e}", path.display()))?;
        Ok(path.display().to_string())
    }

    fn uninstall(&self, node: &TopologyNode, env_dir: &Path) -> Result<(), String> {
        let path = Self::artifact_path(node, env_dir);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(format!("remove {}: {e}", path.display())),
        }
    }
}

/// Installer that delegates to a local helper process. The helper receives
/// `{action, node, type, properties, env_dir}` as JSON on stdin; a non-zero
/// exit fails the step.
pub struct ProcessExecInstaller {
    command: String,
}

impl ProcessExecInstaller {
    pub fn new(command: &str) -> ProcessExecInstaller {
        ProcessExecInstaller {
            command: command.to_string(),
        }
    }

    fn run(&self, action: &str, node: &TopologyNode, env_dir: &Path) -> Result<String, String> {
        let inputs: BTreeMap<String, serde_json::Value> = [
            ("action".to_string(), serde_json::json!(action)),
            ("node".to_string(), serde_json::json!(node.id)),
            ("type".to_string(), serde_json::json!(node.artifact_type)),
            ("properties".to_string(), serde_json::json!(node.properties)),
            ("env_dir".to_string(), serde_json::json!(env_dir.display().to_string())),
        ]
        .into_iter()
        .collect();
        let outputs = run_process(&self.command, &inputs)?;
        Ok(outputs
            .get("handle")
            .and_then(|v| v.as_str())
            .unwrap_or(&node.id)
            .to_string())
    }
}

impl Installer for ProcessExecInstaller {
    fn install(&self, node: &TopologyNode, env_dir: &Path) -> Result<String, String> {
        self.run("install", node, env_dir)
    }

    fn uninstall(&self, node: &TopologyNode, env_dir: &Path) -> Result<(), String> {
        self.run("uninstall", node, env_dir).map(|_| ())
    }
}

/// Named installers, resolved per topology node.
#[derive(Clone, Default)]
pub struct InstallerRegistry {
    installers: BTreeMap<String, Arc<dyn Installer>>,
}

impl InstallerRegistry {
    pub fn new() -> InstallerRegistry {
        InstallerRegistry::default()
    }

    /// Registry with a plain mock installer under the conventional name.
    pub fn with_mock() -> InstallerRegistry {
        let mut registry = InstallerRegistry::new();
        registry.register("mock", Arc::new(MockInstaller::new()));
        registry
    }

    pub fn register(&mut self, name: &str, installer: Arc<dyn Installer>) {
        self.installers.insert(name.to_string(), installer);
    }

    pub fn resolve(&self, name: &str) -> Option<Arc<dyn Installer>> {
        self.installers.get(name).cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str) -> TopologyNode {
        TopologyNode {
            id: id.to_string(),
            artifact_type: "test".to_string(),
            installer: "mock".to_string(),
            properties: BTreeMap::new(),
        }
    }

    #[test]
    fn mock_install_creates_and_uninstall_removes_the_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let installer = MockInstaller::new();
        let n = node("db");
        let handle = installer.install(&n, dir.path()).unwrap();
        assert!(Path::new(&handle).is_file());
        installer.uninstall(&n, dir.path()).unwrap();
        assert!(!Path::new(&handle).exists());
        // uninstalling twice is fine
        installer.uninstall(&n, dir.path()).unwrap();
    }

    #[test]
    fn fault_budget_is_consumed_per_attempt() {
        let dir = tempfile::tempdir().unwrap();
        let faults = FaultPlan::new();
        faults.fail_node("db", 2);
        let installer = MockInstaller::with_faults(faults);
        let n = node("db");
        assert!(installer.install(&n, dir.path()).is_err());
        assert!(installer.install(&n, dir.path()).is_err());
        assert!(installer.install(&n, dir.path()).is_ok());
    }

    #[test]
    fn permanent_fault_never_clears() {
        let faults = FaultPlan::new();
        faults.fail_node("db", u32::MAX);
        for _ in 0..10 {
            assert!(faults.take_fault("db"));
        }
    }

    #[test]
    fn registry_resolves_by_name() {
        let registry = InstallerRegistry::with_mock();
        assert!(registry.resolve("mock").is_some());
        assert!(registry.resolve("ansible").is_none());
    }

    #[test]
    fn process_installer_runs_helper() {
        let dir = tempfile::tempdir().unwrap();
        // `cat` echoes the request JSON; no "handle" key → node id is used
        let installer = ProcessExecInstaller::new("cat");
        let handle = installer.install(&node("svc"), dir.path()).unwrap();
        assert_eq!(handle, "svc");
    }
}
