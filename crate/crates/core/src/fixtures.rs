//! Built-in example artifacts: a layered retrieval topology, a hybrid
//! clustering application with three sub-workflows, and small workflows
//! exercising recovery, compensation, and the reservation benchmark.
//!
//! The clustering app follows the classic hybrid pipeline: data
//! preparation (retrieve the points, compute the distance matrix), feature
//! engineering (covariance, Pauli coefficients, a variational eigenvalue
//! loop, a PCA projection), then clustering (a QAOA-style max-cut loop and
//! the final cluster assignment). The numerics are tiny deterministic
//! placeholders over a 6-point toy dataset shipped in `data/` — just
//! enough structure for end-to-end runs to produce stable, checkable
//! variables.

use crate::archive::{self, ArchiveError, ArchiveLayout, Manifest, ProgramEntry, ProgramKind};
use crate::engine::event::payload::Vars;
use crate::engine::executor::StubRegistry;
use crate::model::topology::{parse_topology, TopologyModel};
use crate::model::workflow::{parse_workflow, WorkflowModel};
use serde_json::{json, Value};
use std::fs;
use std::path::Path;

/// The Fig-style layered deployment: a retrieval service on a JVM stack
/// talking to a customer database on a DB2 stack.
pub const RETRIEVAL_TOPOLOGY_JSON: &str = r#"{
  "id": "retrieval-topology",
  "nodes": [
    {"id": "Server", "type": "physical-server", "installer": "mock"},
    {"id": "VM", "type": "virtual-machine", "installer": "mock"},
    {"id": "JVM", "type": "java-runtime", "installer": "mock"},
    {"id": "Linux", "type": "operating-system", "installer": "mock"},
    {"id": "DB2", "type": "database-system", "installer": "mock"},
    {"id": "CustomerDB", "type": "database-schema", "installer": "mock"},
    {"id": "RetrieveData", "type": "java-service", "installer": "mock"}
  ],
  "edges": [
    {"from": "RetrieveData", "to": "JVM", "relation": "hosted_on"},
    {"from": "JVM", "to": "Server", "relation": "hosted_on"},
    {"from": "CustomerDB", "to": "DB2", "relation": "hosted_on"},
    {"from": "DB2", "to": "Linux", "relation": "hosted_on"},
    {"from": "Linux", "to": "VM", "relation": "hosted_on"},
    {"from": "RetrieveData", "to": "CustomerDB", "relation": "connects_to"}
  ]
}
"#;

/// The retrieval topology extended with a QPU access node for the hybrid
/// clustering application.
pub const CLUSTERING_TOPOLOGY_JSON: &str = r#"{
  "id": "clustering-topology",
  "nodes": [
    {"id": "Server", "type": "physical-server", "installer": "mock"},
    {"id": "VM", "type": "virtual-machine", "installer": "mock"},
    {"id": "JVM", "type": "java-runtime", "installer": "mock"},
    {"id": "Linux", "type": "operating-system", "installer": "mock"},
    {"id": "DB2", "type": "database-system", "installer": "mock"},
    {"id": "CustomerDB", "type": "database-schema", "installer": "mock"},
    {"id": "RetrieveData", "type": "java-service", "installer": "mock"},
    {"id": "QpuAccess", "type": "qpu-gateway", "installer": "mock", "properties": {"shots": 1024}}
  ],
  "edges": [
    {"from": "RetrieveData", "to": "JVM", "relation": "hosted_on"},
    {"from": "JVM", "to": "Server", "relation": "hosted_on"},
    {"from": "CustomerDB", "to": "DB2", "relation": "hosted_on"},
    {"from": "DB2", "to": "Linux", "relation": "hosted_on"},
    {"from": "Linux", "to": "VM", "relation": "hosted_on"},
    {"from": "RetrieveData", "to": "CustomerDB", "relation": "connects_to"},
    {"from": "QpuAccess", "to": "Server", "relation": "hosted_on"}
  ]
}
"#;

/// Main clustering workflow: a linear pipeline through the three phases,
/// delegating the quantum-heavy parts to sub-workflows.
pub const CLUSTERING_MAIN_JSON: &str = r#"{
  "id": "clustering-main",
  "params": ["k"],
  "start": ["retrieve_data"],
  "activities": [
    {"id": "retrieve_data", "kind": "classical",
     "impl": {"kind": "in_process", "target": "retrieve_data", "topology_node": "RetrieveData"},
     "out": ["points", "count"]},
    {"id": "distance_matrix", "kind": "classical",
     "impl": {"kind": "in_process", "target": "distance_matrix"},
     "in": ["points"], "out": ["distances"]},
    {"id": "covariance_matrix", "kind": "classical",
     "impl": {"kind": "in_process", "target": "covariance_matrix"},
     "in": ["points"], "out": ["covariance"]},
    {"id": "pauli_decomposition", "kind": "classical",
     "impl": {"kind": "in_process", "target": "pauli_decomposition"},
     "in": ["covariance"], "out": ["coefficients"]},
    {"id": "eigen_solve", "kind": "subworkflow",
     "impl": {"kind": "in_process", "target": "eigenvalue-solver"},
     "in": ["coefficients"],
     "out": ["eigenvalue", {"var": "vqe_iterations", "field": "iteration"}]},
    {"id": "pca_transform", "kind": "subworkflow",
     "impl": {"kind": "in_process", "target": "pca-transform"},
     "in": ["points", "eigenvalue"], "out": ["transformed"]},
    {"id": "maxcut_clustering", "kind": "subworkflow",
     "impl": {"kind": "in_process", "target": "maxcut-qaoa"},
     "in": ["distances"],
     "out": ["cut", {"var": "cut_score", "field": "best_score"}]},
    {"id": "assign_clusters", "kind": "classical",
     "impl": {"kind": "in_process", "target": "assign_clusters"},
     "in": ["cut", "count"], "out": ["cluster_assignments"]}
  ],
  "edges": [
    {"from": "retrieve_data", "to": "distance_matrix"},
    {"from": "distance_matrix", "to": "covariance_matrix"},
    {"from": "covariance_matrix", "to": "pauli_decomposition"},
    {"from": "pauli_decomposition", "to": "eigen_solve"},
    {"from": "eigen_solve", "to": "pca_transform"},
    {"from": "pca_transform", "to": "maxcut_clustering"},
    {"from": "maxcut_clustering", "to": "assign_clusters"}
  ]
}
"#;

/// Variational eigenvalue sub-workflow: prepare an ansatz, then iterate a
/// quantum circuit against a classical optimizer until the step size
/// drops below the threshold. One hybrid loop, one quantum activity.
pub const EIGENVALUE_SOLVER_JSON: &str = r#"{
  "id": "eigenvalue-solver",
  "params": ["coefficients"],
  "start": ["prepare_ansatz"],
  "activities": [
    {"id": "prepare_ansatz", "kind": "classical",
     "impl": {"kind": "in_process", "target": "prepare_ansatz"},
     "in": ["coefficients"], "out": ["ansatz", "iteration", "delta", "energy"]},
    {"id": "execute_circuit", "kind": "quantum",
     "impl": {"kind": "qpu_job", "target": "vqe-circuit", "topology_node": "QpuAccess"},
     "in": ["ansatz", "coefficients", "iteration"],
     "out": [{"var": "measurements", "field": "counts"}, {"var": "energy_sample", "field": "value"}]},
    {"id": "optimize", "kind": "classical",
     "impl": {"kind": "in_process", "target": "vqe_optimize"},
     "in": ["iteration", "energy", "energy_sample", "ansatz"],
     "out": ["iteration", "delta", "energy", "eigenvalue", "ansatz"]}
  ],
  "edges": [
    {"from": "prepare_ansatz", "to": "execute_circuit"},
    {"from": "execute_circuit", "to": "optimize"},
    {"from": "optimize", "to": "execute_circuit", "cond": "$delta > 0.1", "loop_back": true}
  ]
}
"#;

/// PCA projection sub-workflow: a single classical activity that projects
/// the points onto the axis given by the solved eigenvalue.
pub const PCA_TRANSFORM_JSON: &str = r#"{
  "id": "pca-transform",
  "params": ["points", "eigenvalue"],
  "start": ["project"],
  "activities": [
    {"id": "project", "kind": "classical",
     "impl": {"kind": "in_process", "target": "pca_project"},
     "in": ["points", "eigenvalue"], "out": ["transformed"]}
  ],
  "edges": []
}
"#;

/// QAOA-style max-cut sub-workflow: sample candidate cuts from a quantum
/// circuit for a fixed number of rounds, keep the best, then finalize. The
/// loop has an explicit exit edge into the finalization step.
pub const MAXCUT_QAOA_JSON: &str = r#"{
  "id": "maxcut-qaoa",
  "params": ["distances"],
  "start": ["build_graph"],
  "activities": [
    {"id": "build_graph", "kind": "classical",
     "impl": {"kind": "in_process", "target": "build_cut_graph"},
     "in": ["distances"], "out": ["graph", "round", "best_score", "cut"]},
    {"id": "sample_cut", "kind": "quantum",
     "impl": {"kind": "qpu_job", "target": "qaoa-circuit", "topology_node": "QpuAccess"},
     "in": ["graph", "round"],
     "out": [{"var": "counts", "field": "counts"}, {"var": "sample_value", "field": "value"}]},
    {"id": "select_round", "kind": "classical",
     "impl": {"kind": "in_process", "target": "qaoa_select"},
     "in": ["counts", "sample_value", "round", "best_score", "cut", "graph"],
     "out": ["round", "best_score", "cut"]},
    {"id": "finalize_cut", "kind": "classical",
     "impl": {"kind": "in_process", "target": "finalize_cut"},
     "in": ["cut", "best_score"], "out": ["cut"]}
  ],
  "edges": [
    {"from": "build_graph", "to": "sample_cut"},
    {"from": "sample_cut", "to": "select_round"},
    {"from": "select_round", "to": "sample_cut", "cond": "$round < 2", "loop_back": true},
    {"from": "select_round", "to": "finalize_cut", "cond": "!($round < 2)"}
  ]
}
"#;

/// Six-activity diamond used by the recovery tests: a linear head, a
/// parallel split, a join, and a reporting tail. All-integer arithmetic so
/// replayed and uninterrupted runs compare exactly.
pub const RECOVERY_WORKFLOW_JSON: &str = r#"{
  "id": "staged-pipeline",
  "params": ["base"],
  "start": ["load"],
  "activities": [
    {"id": "load", "kind": "classical",
     "impl": {"kind": "in_process", "target": "stage_load"},
     "in": ["base"], "out": ["staged"]},
    {"id": "split", "kind": "classical",
     "impl": {"kind": "in_process", "target": "stage_split"},
     "in": ["staged"], "out": ["left_in", "right_in"]},
    {"id": "left", "kind": "classical",
     "impl": {"kind": "in_process", "target": "stage_left"},
     "in": ["left_in"], "out": ["l"]},
    {"id": "right", "kind": "classical",
     "impl": {"kind": "in_process", "target": "stage_right"},
     "in": ["right_in"], "out": ["r"]},
    {"id": "merge", "kind": "classical",
     "impl": {"kind": "in_process", "target": "stage_merge"},
     "in": ["l", "r"], "out": ["total"]},
    {"id": "report", "kind": "classical",
     "impl": {"kind": "in_process", "target": "stage_report"},
     "in": ["total"], "out": ["summary"]}
  ],
  "edges": [
    {"from": "load", "to": "split"},
    {"from": "split", "to": "left"},
    {"from": "split", "to": "right"},
    {"from": "left", "to": "merge"},
    {"from": "right", "to": "merge"},
    {"from": "merge", "to": "report"}
  ]
}
"#;

/// Travel-booking saga: three members in one unit of work, the last of
/// which always fails, driving the compensators in reverse order.
pub const COMPENSATION_WORKFLOW_JSON: &str = r#"{
  "id": "travel-booking",
  "start": ["reserve_car"],
  "activities": [
    {"id": "reserve_car", "kind": "classical",
     "impl": {"kind": "in_process", "target": "reserve_car"},
     "out": ["car"], "compensator": "cancel_car"},
    {"id": "reserve_hotel", "kind": "classical",
     "impl": {"kind": "in_process", "target": "reserve_hotel"},
     "out": ["hotel"], "compensator": "cancel_hotel"},
    {"id": "charge_card", "kind": "classical",
     "impl": {"kind": "in_process", "target": "charge_card"}},
    {"id": "cancel_car", "kind": "classical",
     "impl": {"kind": "in_process", "target": "cancel_car"},
     "out": ["car_cancelled"]},
    {"id": "cancel_hotel", "kind": "classical",
     "impl": {"kind": "in_process", "target": "cancel_hotel"},
     "out": ["hotel_cancelled"]}
  ],
  "edges": [
    {"from": "reserve_car", "to": "reserve_hotel"},
    {"from": "reserve_hotel", "to": "charge_card"}
  ],
  "units": [
    {"id": "booking", "members": ["reserve_car", "reserve_hotel", "charge_card"]}
  ]
}
"#;

/// Reservation benchmark workflow: a hybrid loop of `remaining` quantum
/// probes steered by a classical countdown.
pub const BENCH_WORKFLOW_JSON: &str = r#"{
  "id": "reservation-bench",
  "params": ["remaining"],
  "start": ["probe"],
  "activities": [
    {"id": "probe", "kind": "quantum",
     "impl": {"kind": "qpu_job", "target": "bench-probe"},
     "in": ["remaining"],
     "out": [{"var": "probe_counts", "field": "counts"}]},
    {"id": "steer", "kind": "classical",
     "impl": {"kind": "in_process", "target": "bench_steer"},
     "in": ["remaining"], "out": ["remaining"]}
  ],
  "edges": [
    {"from": "probe", "to": "steer"},
    {"from": "steer", "to": "probe", "cond": "$remaining > 0", "loop_back": true}
  ]
}
"#;

/// Toy dataset: two well-separated groups of three points each.
pub const SAMPLE_POINTS_JSON: &str =
    "[[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [3.0, 3.0], [3.2, 2.9], [2.9, 3.1]]\n";

pub fn retrieval_topology() -> TopologyModel {
    parse_topology(RETRIEVAL_TOPOLOGY_JSON).expect("retrieval topology fixture is valid")
}

pub fn clustering_topology() -> TopologyModel {
    parse_topology(CLUSTERING_TOPOLOGY_JSON).expect("clustering topology fixture is valid")
}

/// All four clustering workflows: main first, then the sub-workflows.
pub fn clustering_workflows() -> Vec<WorkflowModel> {
    [
        CLUSTERING_MAIN_JSON,
        EIGENVALUE_SOLVER_JSON,
        PCA_TRANSFORM_JSON,
        MAXCUT_QAOA_JSON,
    ]
    .iter()
    .map(|doc| parse_workflow(doc).expect("clustering workflow fixture is valid"))
    .collect()
}

pub fn recovery_workflow() -> WorkflowModel {
    parse_workflow(RECOVERY_WORKFLOW_JSON).expect("recovery workflow fixture is valid")
}

pub fn compensation_workflow() -> WorkflowModel {
    parse_workflow(COMPENSATION_WORKFLOW_JSON).expect("compensation workflow fixture is valid")
}

pub fn bench_workflow() -> WorkflowModel {
    parse_workflow(BENCH_WORKFLOW_JSON).expect("bench workflow fixture is valid")
}

pub fn sample_points() -> Vec<(f64, f64)> {
    let raw: Vec<(f64, f64)> =
        serde_json::from_str(SAMPLE_POINTS_JSON).expect("sample points fixture is valid");
    raw
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn req<'v>(vars: &'v Vars, key: &str) -> Result<&'v Value, String> {
    vars.get(key).ok_or_else(|| format!("missing input {key}"))
}

fn num(vars: &Vars, key: &str) -> Result<f64, String> {
    req(vars, key)?
        .as_f64()
        .ok_or_else(|| format!("input {key} is not a number"))
}

fn int(vars: &Vars, key: &str) -> Result<i64, String> {
    req(vars, key)?
        .as_i64()
        .ok_or_else(|| format!("input {key} is not an integer"))
}

fn points_of(vars: &Vars) -> Result<Vec<(f64, f64)>, String> {
    let raw = req(vars, "points")?
        .as_array()
        .ok_or("points is not an array")?;
    raw.iter()
        .map(|p| {
            let pair = p.as_array().filter(|a| a.len() == 2);
            let pair = pair.ok_or("each point must be an [x, y] pair")?;
            let x = pair[0].as_f64().ok_or("point coordinate is not a number")?;
            let y = pair[1].as_f64().ok_or("point coordinate is not a number")?;
            Ok((x, y))
        })
        .collect()
}

fn vars_of(entries: Vec<(&str, Value)>) -> Vars {
    entries
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Native implementations for every `in_process` target the fixtures use.
pub fn builtin_stubs() -> StubRegistry {
    let mut reg = StubRegistry::new();

    reg.register("noop", |inputs| Ok(inputs.clone()));

    // --- clustering: data preparation ---------------------------------
    reg.register("retrieve_data", |_| {
        let points: Value = serde_json::from_str(SAMPLE_POINTS_JSON).expect("static dataset");
        let count = points.as_array().map(|a| a.len()).unwrap_or(0);
        Ok(vars_of(vec![("points", points), ("count", json!(count))]))
    });

    reg.register("distance_matrix", |inputs| {
        let pts = points_of(inputs)?;
        let mut flat = Vec::with_capacity(pts.len() * pts.len());
        for &(xi, yi) in &pts {
            for &(xj, yj) in &pts {
                let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                flat.push(round6(d));
            }
        }
        Ok(vars_of(vec![("distances", json!(flat))]))
    });

    // --- clustering: feature engineering ------------------------------
    reg.register("covariance_matrix", |inputs| {
        let pts = points_of(inputs)?;
        if pts.is_empty() {
            return Err("covariance of an empty dataset".to_string());
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let cxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n;
        let cyy = pts.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n;
        let cxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
        let matrix = json!([
            [round6(cxx), round6(cxy)],
            [round6(cxy), round6(cyy)]
        ]);
        Ok(vars_of(vec![("covariance", matrix)]))
    });

    reg.register("pauli_decomposition", |inputs| {
        let cov = req(inputs, "covariance")?;
        let a = cov[0][0].as_f64().ok_or("covariance[0][0] missing")?;
        let b = cov[0][1].as_f64().ok_or("covariance[0][1] missing")?;
        let c = cov[1][1].as_f64().ok_or("covariance[1][1] missing")?;
        let coefficients = json!({
            "i": round6((a + c) / 2.0),
            "z": round6((a - c) / 2.0),
            "x": round6(b)
        });
        Ok(vars_of(vec![("coefficients", coefficients)]))
    });

    reg.register("prepare_ansatz", |inputs| {
        let coeff = req(inputs, "coefficients")?;
        let x = coeff["x"].as_f64().ok_or("coefficients.x missing")?;
        let z = coeff["z"].as_f64().ok_or("coefficients.z missing")?;
        Ok(vars_of(vec![
            ("ansatz", json!([x, z])),
            ("iteration", json!(0)),
            ("delta", json!(1.0)),
            ("energy", json!(0.0)),
        ]))
    });

    reg.register("vqe_optimize", |inputs| {
        let iteration = int(inputs, "iteration")? + 1;
        let energy = num(inputs, "energy")?;
        let sample = num(inputs, "energy_sample")?;
        let ansatz = req(inputs, "ansatz")?
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or("ansatz must hold two parameters")?
            .clone();
        let a0 = ansatz[0].as_f64().ok_or("ansatz[0] is not a number")?;
        let a1 = ansatz[1].as_f64().ok_or("ansatz[1] is not a number")?;
        let delta = round6(0.5f64.powi(iteration as i32));
        let energy = round6((energy + sample) / 2.0);
        Ok(vars_of(vec![
            ("iteration", json!(iteration)),
            ("delta", json!(delta)),
            ("energy", json!(energy)),
            ("eigenvalue", json!(energy)),
            (
                "ansatz",
                json!([round6(a0 + sample * 0.1), round6(a1 - sample * 0.1)]),
            ),
        ]))
    });

    reg.register("pca_project", |inputs| {
        let pts = points_of(inputs)?;
        let theta = num(inputs, "eigenvalue")?;
        let projected: Vec<f64> = pts
            .iter()
            .map(|&(x, y)| round6(x * theta.cos() + y * theta.sin()))
            .collect();
        Ok(vars_of(vec![("transformed", json!(projected))]))
    });

    // --- clustering: cut sampling + assignment ------------------------
    reg.register("build_cut_graph", |inputs| {
        let weights = req(inputs, "distances")?
            .as_array()
            .ok_or("distances is not an array")?;
        let n = (weights.len() as f64).sqrt() as u64;
        if (n * n) as usize != weights.len() {
            return Err("distances is not a square matrix".to_string());
        }
        Ok(vars_of(vec![
            ("graph", json!({"n": n, "weights": weights})),
            ("round", json!(0)),
            ("best_score", json!(-1.0)),
            ("cut", json!("")),
        ]))
    });

    reg.register("qaoa_select", |inputs| {
        let round = int(inputs, "round")? + 1;
        let sample = num(inputs, "sample_value")?;
        let best = num(inputs, "best_score")?;
        let cut = req(inputs, "cut")?
            .as_str()
            .ok_or("cut is not a string")?
            .to_string();
        let zeros = req(inputs, "counts")?["0"]
            .as_u64()
            .ok_or("counts.0 missing")?;
        let n = req(inputs, "graph")?["n"].as_u64().ok_or("graph.n missing")?;
        // derive a candidate bitstring from the low bits of the histogram
        let candidate: String = (0..n)
            .map(|i| if (zeros >> i) & 1 == 1 { '1' } else { '0' })
            .collect();
        let score = round6((sample + 1.0) / 2.0);
        let (best, cut) = if score > best { (score, candidate) } else { (best, cut) };
        Ok(vars_of(vec![
            ("round", json!(round)),
            ("best_score", json!(best)),
            ("cut", json!(cut)),
        ]))
    });

    reg.register("finalize_cut", |inputs| {
        let cut = req(inputs, "cut")?
            .as_str()
            .ok_or("cut is not a string")?
            .to_string();
        if cut.is_empty() {
            return Err("no cut was selected".to_string());
        }
        Ok(vars_of(vec![("cut", json!(cut))]))
    });

    reg.register("assign_clusters", |inputs| {
        let cut = req(inputs, "cut")?
            .as_str()
            .ok_or("cut is not a string")?
            .to_string();
        let count = int(inputs, "count")? as usize;
        let assignments: Vec<u32> = (0..count)
            .map(|i| {
                cut.chars()
                    .nth(i)
                    .and_then(|c| c.to_digit(10))
                    .unwrap_or((i % 2) as u32)
            })
            .collect();
        Ok(vars_of(vec![("cluster_assignments", json!(assignments))]))
    });

    // --- reservation benchmark ----------------------------------------
    reg.register("bench_steer", |inputs| {
        let remaining = int(inputs, "remaining")? - 1;
        Ok(vars_of(vec![("remaining", json!(remaining))]))
    });

    // --- recovery pipeline --------------------------------------------
    reg.register("stage_load", |inputs| {
        Ok(vars_of(vec![("staged", json!(int(inputs, "base")? + 1))]))
    });
    reg.register("stage_split", |inputs| {
        let staged = int(inputs, "staged")?;
        Ok(vars_of(vec![
            ("left_in", json!(staged + 1)),
            ("right_in", json!(staged * 2)),
        ]))
    });
    reg.register("stage_left", |inputs| {
        Ok(vars_of(vec![("l", json!(int(inputs, "left_in")? * 3))]))
    });
    reg.register("stage_right", |inputs| {
        Ok(vars_of(vec![("r", json!(int(inputs, "right_in")? + 10))]))
    });
    reg.register("stage_merge", |inputs| {
        let total = int(inputs, "l")? + int(inputs, "r")?;
        Ok(vars_of(vec![("total", json!(total))]))
    });
    reg.register("stage_report", |inputs| {
        let total = int(inputs, "total")?;
        Ok(vars_of(vec![("summary", json!(format!("total={total}")))]))
    });

    // --- travel-booking saga ------------------------------------------
    reg.register("reserve_car", |_| {
        Ok(vars_of(vec![("car", json!("CAR-42"))]))
    });
    reg.register("reserve_hotel", |_| {
        Ok(vars_of(vec![("hotel", json!("HTL-7"))]))
    });
    reg.register("charge_card", |_| Err("card declined".to_string()));
    reg.register("cancel_car", |_| {
        Ok(vars_of(vec![("car_cancelled", json!(true))]))
    });
    reg.register("cancel_hotel", |_| {
        Ok(vars_of(vec![("hotel_cancelled", json!(true))]))
    });

    reg
}

const VQE_CIRCUIT_JSON: &str = r#"{
  "name": "vqe-circuit",
  "qubits": 2,
  "gates": ["ry(theta0) q0", "ry(theta1) q1", "cx q0 q1", "measure all"]
}
"#;

const QAOA_CIRCUIT_JSON: &str = r#"{
  "name": "qaoa-circuit",
  "qubits": 6,
  "gates": ["h all", "zz(gamma) edges", "rx(beta) all", "measure all"]
}
"#;

/// Write the complete clustering application as an archive source
/// directory: workflows, topology, circuit descriptions, dataset, and a
/// manifest with fresh checksums.
pub fn build_sample_app(dir: &Path) -> Result<ArchiveLayout, ArchiveError> {
    for sub in ["workflows", "topology", "programs", "data"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let files: [(&str, &str); 8] = [
        ("workflows/clustering-main.json", CLUSTERING_MAIN_JSON),
        ("workflows/eigenvalue-solver.json", EIGENVALUE_SOLVER_JSON),
        ("workflows/pca-transform.json", PCA_TRANSFORM_JSON),
        ("workflows/maxcut-qaoa.json", MAXCUT_QAOA_JSON),
        ("topology/clustering-topology.json", CLUSTERING_TOPOLOGY_JSON),
        ("programs/vqe-circuit.json", VQE_CIRCUIT_JSON),
        ("programs/qaoa-circuit.json", QAOA_CIRCUIT_JSON),
        ("data/points.json", SAMPLE_POINTS_JSON),
    ];
    for (path, body) in files {
        fs::write(dir.join(path), body)?;
    }
    let manifest = Manifest {
        name: "sample-clustering".to_string(),
        version: "1.0.0".to_string(),
        entry_workflow: "clustering-main".to_string(),
        workflows: vec![
            "workflows/clustering-main.json".to_string(),
            "workflows/eigenvalue-solver.json".to_string(),
            "workflows/pca-transform.json".to_string(),
            "workflows/maxcut-qaoa.json".to_string(),
        ],
        topology: "topology/clustering-topology.json".to_string(),
        programs: vec![
            ProgramEntry {
                path: "programs/vqe-circuit.json".to_string(),
                kind: ProgramKind::Quantum,
            },
            ProgramEntry {
                path: "programs/qaoa-circuit.json".to_string(),
                kind: ProgramKind::Quantum,
            },
        ],
        data: vec!["data/points.json".to_string()],
        checksums: Default::default(),
        lifecycle: None,
    };
    archive::write_manifest(dir, &manifest)?;
    archive::load_dir(dir)
}
