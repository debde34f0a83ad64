//! Activity executors for the two classical binding kinds.
//!
//! `in_process` targets resolve against a registry of native stubs;
//! `process_exec` targets run a child process that receives the mapped
//! inputs as JSON on stdin and answers with JSON on stdout. Quantum
//! (`qpu_job`) bindings are handled by the runtime's QPU adapter, not here.

use crate::engine::event::payload::Vars;
use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::Arc;

/// A native activity implementation: mapped inputs in, output fields out.
pub type StubFn = Arc<dyn Fn(&Vars) -> Result<Vars, String> + Send + Sync>;

/// Named native implementations for `in_process` bindings.
#[derive(Clone, Default)]
pub struct StubRegistry {
    stubs: BTreeMap<String, StubFn>,
}

impl StubRegistry {
    pub fn new() -> StubRegistry {
        StubRegistry::default()
    }

    pub fn register<F>(&mut self, target: &str, stub: F)
    where
        F: Fn(&Vars) -> Result<Vars, String> + Send + Sync + 'static,
    {
        self.stubs.insert(target.to_string(), Arc::new(stub));
    }

    pub fn get(&self, target: &str) -> Option<StubFn> {
        self.stubs.get(target).cloned()
    }

    pub fn targets(&self) -> Vec<String> {
        self.stubs.keys().cloned().collect()
    }
}

/// Run a `process_exec` target to completion. The target string is split on
/// whitespace into program and arguments; inputs are piped in as one JSON
/// object. If stdout parses as a JSON object it becomes the output map,
/// otherwise the trimmed text is returned as `{"stdout": ...}`. A non-zero
/// exit status is a failure carrying the status and stderr.
pub fn run_process(target: &str, inputs: &Vars) -> Result<Vars, String> {
    let mut parts = target.split_whitespace();
    let program = parts.next().ok_or("empty process target")?;
    let mut child = Command::new(program)
        .args(parts)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("spawn {program}: {e}"))?;

    let body = serde_json::to_string(inputs).map_err(|e| e.to_string())?;
    // a target that never reads stdin (closing its end early) is fine
    if let Err(e) = child
        .stdin
        .take()
        .expect("stdin was piped")
        .write_all(body.as_bytes())
    {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            return Err(format!("write stdin of {program}: {e}"));
        }
    }

    let output = child
        .wait_with_output()
        .map_err(|e| format!("wait for {program}: {e}"))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(format!(
            "{program} exited with {}: {}",
            output.status,
            stderr.trim()
        ));
    }

    let stdout = String::from_utf8_lossy(&output.stdout);
    match serde_json::from_str::<serde_json::Value>(stdout.trim()) {
        Ok(serde_json::Value::Object(map)) => {
            Ok(map.into_iter().collect())
        }
        _ => {
            let mut out = Vars::new();
            out.insert(
                "stdout".to_string(),
                serde_json::Value::String(stdout.trim().to_string()),
            );
            Ok(out)
        }
    }
}
