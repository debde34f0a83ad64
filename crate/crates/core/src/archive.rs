//! Application archives: a single `.qaa` file bundling the topology, the
//! workflow models, program stubs, and data, described by a root
//! `manifest.json` with SHA-256 integrity checksums.
//!
//! Packing is deterministic — entries are sorted, timestamps fixed, contents
//! stored uncompressed — so identical inputs produce identical bytes.
//! Validation checks that the archive is self-contained: every manifest path
//! resolves inside the archive, every checksum matches, and every
//! cross-reference (entry workflow, sub-workflow targets, topology_node
//! bindings) resolves against the packaged documents.

use crate::config::Lifecycle;
use crate::model::topology::parse_topology;
use crate::model::workflow::{parse_workflow, ActivityKind, WorkflowModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_PATH: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramKind {
    Classical,
    Quantum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramEntry {
    pub path: String,
    pub kind: ProgramKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    /// Id of the workflow started by a RUN message.
    pub entry_workflow: String,
    pub workflows: Vec<String>,
    pub topology: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub programs: Vec<ProgramEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub checksums: BTreeMap<String, String>,
    /// Optional environment lifecycle hint honored by the gateway.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifecycle: Option<Lifecycle>,
}

impl Manifest {
    /// Every archive path the manifest references (excluding itself).
    pub fn referenced_paths(&self) -> Vec<&str> {
        let mut paths: Vec<&str> = Vec::new();
        paths.extend(self.workflows.iter().map(String::as_str));
        paths.push(self.topology.as_str());
        paths.extend(self.programs.iter().map(|p| p.path.as_str()));
        paths.extend(self.data.iter().map(String::as_str));
        paths
    }
}

/// An unpacked archive on disk.
#[derive(Debug, Clone)]
pub struct ArchiveLayout {
    pub root: PathBuf,
    pub manifest: Manifest,
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("manifest.json not found in {0}")]
    ManifestMissing(String),
    #[error("manifest.json invalid: {0}")]
    ManifestInvalid(String),
    #[error("referenced file missing: {path}")]
    MissingFile { path: String },
    #[error("entry workflow '{id}' is not among the packaged workflows")]
    UnresolvedEntryWorkflow { id: String },
    #[error("invalid document {path}: {detail}")]
    InvalidDocument { path: String, detail: String },
    #[error("checksum mismatch for {path}")]
    ChecksumMismatch { path: String },
    #[error("unsafe archive path: {path}")]
    UnsafePath { path: String },
    #[error("archive unreadable: {0}")]
    Unreadable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical manifest serialization used in archives: pretty JSON plus a
/// trailing newline. Writing fixture manifests through this keeps
/// pack → unpack round-trips byte-identical.
pub fn canonical_manifest_bytes(manifest: &Manifest) -> Vec<u8> {
    let mut body = serde_json::to_string_pretty(manifest).expect("manifests serialize infallibly");
    body.push('\n');
    body.into_bytes()
}

/// Write `manifest` (with freshly computed checksums) into `dir`.
pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), ArchiveError> {
    let mut manifest = manifest.clone();
    manifest.checksums = compute_dir_checksums(dir, &manifest)?;
    fs::write(dir.join(MANIFEST_PATH), canonical_manifest_bytes(&manifest))?;
    Ok(())
}

fn compute_dir_checksums(
    dir: &Path,
    manifest: &Manifest,
) -> Result<BTreeMap<String, String>, ArchiveError> {
    let mut checksums = BTreeMap::new();
    for path in manifest.referenced_paths() {
        check_safe_path(path)?;
        let full = dir.join(path);
        let bytes = fs::read(&full).map_err(|_| ArchiveError::MissingFile {
            path: path.to_string(),
        })?;
        checksums.insert(path.to_string(), sha256_hex(&bytes));
    }
    Ok(checksums)
}

fn check_safe_path(path: &str) -> Result<(), ArchiveError> {
    let unsafe_path = path.is_empty()
        || path.starts_with('/')
        || path.contains('\\')
        || path.split('/').any(|part| part == ".." || part == "." || part.is_empty());
    if unsafe_path {
        return Err(ArchiveError::UnsafePath {
            path: path.to_string(),
        });
    }
    Ok(())
}

/// Pack `source` (a directory containing `manifest.json`) into archive
/// bytes. Referenced documents are parsed so a broken workflow or topology
/// never ships; checksums are recomputed and embedded.
pub fn pack(source: &Path) -> Result<Vec<u8>, ArchiveError> {
    let manifest_body = fs::read_to_string(source.join(MANIFEST_PATH))
        .map_err(|_| ArchiveError::ManifestMissing(source.display().to_string()))?;
    let mut manifest: Manifest = serde_json::from_str(&manifest_body)
        .map_err(|e| ArchiveError::ManifestInvalid(e.to_string()))?;

    // gather & verify contents
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for path in manifest.referenced_paths() {
        check_safe_path(path)?;
        let bytes = fs::read(source.join(path)).map_err(|_| ArchiveError::MissingFile {
            path: path.to_string(),
        })?;
        files.insert(path.to_string(), bytes);
    }

    let mut workflow_ids = Vec::new();
    for path in &manifest.workflows {
        let model = parse_workflow_bytes(path, &files[path])?;
        workflow_ids.push(model.id);
    }
    if !workflow_ids.iter().any(|id| id == &manifest.entry_workflow) {
        return Err(ArchiveError::UnresolvedEntryWorkflow {
            id: manifest.entry_workflow.clone(),
        });
    }
    let topology_body = String::from_utf8_lossy(&files[&manifest.topology]).to_string();
    parse_topology(&topology_body).map_err(|diags| ArchiveError::InvalidDocument {
        path: manifest.topology.clone(),
        detail: diags.join("; "),
    })?;

    manifest.checksums = files
        .iter()
        .map(|(path, bytes)| (path.clone(), sha256_hex(bytes)))
        .collect();

    // deterministic zip: manifest first, then sorted entries, all stored
    // with a fixed timestamp
    let options = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Stored)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644);
    let mut writer = zip::ZipWriter::new(Cursor::new(Vec::new()));
    writer
        .start_file(MANIFEST_PATH, options)
        .map_err(|e| ArchiveError::Unreadable(e.to_string()))?;
    writer.write_all(&canonical_manifest_bytes(&manifest))?;
    for (path, bytes) in &files {
        writer
            .start_file(path.as_str(), options)
            .map_err(|e| ArchiveError::Unreadable(e.to_string()))?;
        writer.write_all(bytes)?;
    }
    let cursor = writer
        .finish()
        .map_err(|e| ArchiveError::Unreadable(e.to_string()))?;
    Ok(cursor.into_inner())
}

fn parse_workflow_bytes(path: &str, bytes: &[u8]) -> Result<WorkflowModel, ArchiveError> {
    let body = String::from_utf8_lossy(bytes).to_string();
    parse_workflow(&body).map_err(|diags| ArchiveError::InvalidDocument {
        path: path.to_string(),
        detail: diags.join("; "),
    })
}

/// All entries as (name, raw bytes). Raw reads skip the container's CRC so
/// corruption is reported by our own checksums instead of a read error.
fn read_entries(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>, ArchiveError> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes))
        .map_err(|e| ArchiveError::Unreadable(e.to_string()))?;
    let mut entries = BTreeMap::new();
    for index in 0..archive.len() {
        let mut file = archive
            .by_index_raw(index)
            .map_err(|e| ArchiveError::Unreadable(e.to_string()))?;
        if file.is_dir() {
            continue;
        }
        let name = file.name().to_string();
        let mut content = Vec::new();
        file.read_to_end(&mut content)?;
        entries.insert(name, content);
    }
    Ok(entries)
}

/// Read just the manifest out of archive bytes.
/// Read a source or unpacked directory back as a layout.
pub fn load_dir(dir: &Path) -> Result<ArchiveLayout, ArchiveError> {
    let body = fs::read_to_string(dir.join(MANIFEST_PATH))
        .map_err(|_| ArchiveError::ManifestMissing(dir.display().to_string()))?;
    let manifest: Manifest =
        serde_json::from_str(&body).map_err(|e| ArchiveError::ManifestInvalid(e.to_string()))?;
    Ok(ArchiveLayout {
        root: dir.to_path_buf(),
        manifest,
    })
}

pub fn read_manifest(bytes: &[u8]) -> Result<Manifest, ArchiveError> {
    let entries = read_entries(bytes)?;
    let body = entries
        .get(MANIFEST_PATH)
        .ok_or_else(|| ArchiveError::ManifestMissing("archive".to_string()))?;
    serde_json::from_slice(body).map_err(|e| ArchiveError::ManifestInvalid(e.to_string()))
}

/// Unpack archive bytes into `dest`, verifying checksums.
pub fn unpack(bytes: &[u8], dest: &Path) -> Result<ArchiveLayout, ArchiveError> {
    let entries = read_entries(bytes)?;
    let manifest_body = entries
        .get(MANIFEST_PATH)
        .ok_or_else(|| ArchiveError::ManifestMissing("archive".to_string()))?;
    let manifest: Manifest = serde_json::from_slice(manifest_body)
        .map_err(|e| ArchiveError::ManifestInvalid(e.to_string()))?;

    for path in manifest.referenced_paths() {
        let content = entries.get(path).ok_or_else(|| ArchiveError::MissingFile {
            path: path.to_string(),
        })?;
        match manifest.checksums.get(path) {
            Some(digest) if *digest == sha256_hex(content) => {}
            _ => {
                return Err(ArchiveError::ChecksumMismatch {
                    path: path.to_string(),
                })
            }
        }
    }

    fs::create_dir_all(dest)?;
    for (name, content) in &entries {
        check_safe_path(name)?;
        let target = dest.join(name);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&target, content)?;
    }
    Ok(ArchiveLayout {
        root: dest.to_path_buf(),
        manifest,
    })
}

/// Validate archive bytes without unpacking. Returns diagnostics; an empty
/// list means the archive is self-contained and consistent.
pub fn validate_archive(bytes: &[u8]) -> Vec<String> {
    let mut diags = Vec::new();
    let entries = match read_entries(bytes) {
        Ok(entries) => entries,
        Err(e) => return vec![e.to_string()],
    };
    let manifest_body = match entries.get(MANIFEST_PATH) {
        Some(body) => body,
        None => return vec!["manifest.json not found in archive".to_string()],
    };
    let manifest: Manifest = match serde_json::from_slice(manifest_body) {
        Ok(m) => m,
        Err(e) => return vec![format!("manifest.json invalid: {e}")],
    };

    for path in manifest.referenced_paths() {
        if let Err(e) = check_safe_path(path) {
            diags.push(e.to_string());
            continue;
        }
        match entries.get(path) {
            None => diags.push(format!("missing from archive: {path}")),
            Some(content) => match manifest.checksums.get(path) {
                None => diags.push(format!("no checksum recorded for {path}")),
                Some(digest) if *digest != sha256_hex(content) => {
                    diags.push(format!("checksum mismatch for {path}"));
                }
                Some(_) => {}
            },
        }
    }
    let referenced: Vec<&str> = manifest.referenced_paths();
    for name in entries.keys() {
        if name != MANIFEST_PATH && !referenced.contains(&name.as_str()) {
            diags.push(format!("not referenced by manifest: {name}"));
        }
    }

    // parse packaged documents and check cross-references
    let mut workflows: Vec<WorkflowModel> = Vec::new();
    for path in &manifest.workflows {
        let Some(content) = entries.get(path) else {
            continue;
        };
        match parse_workflow_bytes(path, content) {
            Ok(model) => workflows.push(model),
            Err(e) => diags.push(e.to_string()),
        }
    }
    let topology = entries.get(&manifest.topology).and_then(|content| {
        match parse_topology(&String::from_utf8_lossy(content)) {
            Ok(model) => Some(model),
            Err(errors) => {
                diags.push(format!(
                    "invalid document {}: {}",
                    manifest.topology,
                    errors.join("; ")
                ));
                None
            }
        }
    });

    if !workflows.iter().any(|w| w.id == manifest.entry_workflow) {
        diags.push(format!(
            "entry workflow '{}' is not packaged",
            manifest.entry_workflow
        ));
    }
    let workflow_ids: Vec<&str> = workflows.iter().map(|w| w.id.as_str()).collect();
    for workflow in &workflows {
        for activity in &workflow.activities {
            if let Some(node) = &activity.implementation.topology_node {
                if let Some(topology) = &topology {
                    if topology.node(node).is_none() {
                        diags.push(format!(
                            "unbound topology_node '{node}' (workflow '{}', activity '{}')",
                            workflow.id, activity.id
                        ));
                    }
                }
            }
            if activity.kind == ActivityKind::Subworkflow
                && !workflow_ids.contains(&activity.implementation.target.as_str())
            {
                diags.push(format!(
                    "unresolved sub-workflow '{}' (workflow '{}', activity '{}')",
                    activity.implementation.target, workflow.id, activity.id
                ));
            }
        }
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A minimal but complete application directory.
    fn build_tiny_app(dir: &Path) {
        fs::create_dir_all(dir.join("workflows")).unwrap();
        fs::create_dir_all(dir.join("topology")).unwrap();
        fs::create_dir_all(dir.join("programs")).unwrap();
        fs::create_dir_all(dir.join("data")).unwrap();
        fs::write(
            dir.join("workflows/main.json"),
            r#"{
                "id": "main",
                "activities": [
                    {"id": "only", "kind": "classical",
                     "impl": {"kind": "in_process", "target": "noop", "topology_node": "host"}}
                ],
                "edges": [],
                "start": ["only"]
            }"#,
        )
        .unwrap();
        fs::write(
            dir.join("topology/app.json"),
            r#"{
                "id": "tiny-topology",
                "nodes": [{"id": "host", "type": "server", "installer": "mock"}]
            }"#,
        )
        .unwrap();
        fs::write(dir.join("programs/noop.sh"), "#!/bin/sh\ncat\n").unwrap();
        fs::write(dir.join("data/points.json"), "[1, 2, 3]\n").unwrap();
        let manifest = Manifest {
            name: "tiny".to_string(),
            version: "0.1.0".to_string(),
            entry_workflow: "main".to_string(),
            workflows: vec!["workflows/main.json".to_string()],
            topology: "topology/app.json".to_string(),
            programs: vec![ProgramEntry {
                path: "programs/noop.sh".to_string(),
                kind: ProgramKind::Classical,
            }],
            data: vec!["data/points.json".to_string()],
            checksums: BTreeMap::new(),
            lifecycle: None,
        };
        write_manifest(dir, &manifest).unwrap();
    }

    fn file_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(root).unwrap().to_str().unwrap().to_string();
                    out.insert(rel, fs::read(&path).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn unpack_of_pack_reproduces_the_directory_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let source = dir.path().join("app");
        build_tiny_app(&source);
        let bytes = pack(&source).unwrap();
        assert!(validate_archive(&bytes).is_empty());

        let dest = dir.path().join("unpacked");
        let layout = unpack(&bytes, &dest).unwrap();
        assert_eq!(layout.manifest.name, "tiny");
        assert_eq!(file_bytes(&source), file_bytes(&dest));
    }

    #[test]
    fn packing_twice_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let source = dir.path().join("app");
        build_tiny_app(&source);
        let first = pack(&source).unwrap();
        let second = pack(&source).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn single_byte_corruption_is_one_checksum_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let source = dir.path().join("app");
        build_tiny_app(&source);
        let mut bytes = pack(&source).unwrap();

        // contents are stored uncompressed, so the program body is verbatim
        let needle = b"#!/bin/sh\ncat\n";
        let at = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .expect("stored program bytes present");
        bytes[at] ^= 0x01;

        let diags = validate_archive(&bytes);
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert!(diags[0].contains("checksum mismatch for programs/noop.sh"));

        let err = unpack(&bytes, &dir.path().join("x")).unwrap_err();
        assert!(matches!(err, ArchiveError::ChecksumMismatch { .. }));
    }

    #[test]
    fn missing_referenced_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let source = dir.path().join("app");
        build_tiny_app(&source);
        fs::remove_file(source.join("data/points.json")).unwrap();
        let err = pack(&source).unwrap_err();
        assert!(err.to_string().contains("data/points.json"), "{err}");
    }

    #[test]
    fn unresolved_entry_workflow_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let source = dir.path().join("app");
        build_tiny_app(&source);
        let body = fs::read_to_string(source.join(MANIFEST_PATH)).unwrap();
        fs::write(
            source.join(MANIFEST_PATH),
            body.replace("\"entry_workflow\": \"main\"", "\"entry_workflow\": \"ghost\""),
        )
        .unwrap();
        let err = pack(&source).unwrap_err();
        assert!(matches!(err, ArchiveError::UnresolvedEntryWorkflow { .. }));
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn unbound_topology_node_is_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        let source = dir.path().join("app");
        build_tiny_app(&source);
        let workflow = fs::read_to_string(source.join("workflows/main.json")).unwrap();
        fs::write(
            source.join("workflows/main.json"),
            workflow.replace("\"host\"", "\"ghost-node\""),
        )
        .unwrap();
        // refresh checksums so only the cross-reference is at fault
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(source.join(MANIFEST_PATH)).unwrap()).unwrap();
        write_manifest(&source, &manifest).unwrap();

        let bytes = pack(&source).unwrap();
        let diags = validate_archive(&bytes);
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert!(diags[0].contains("unbound topology_node 'ghost-node'"));
    }

    #[test]
    fn unsafe_manifest_paths_are_rejected() {
        for path in ["../escape", "/absolute", "a/../b", ""] {
            assert!(check_safe_path(path).is_err(), "{path:?}");
        }
        for path in ["workflows/main.json", "a/b/c.txt"] {
            assert!(check_safe_path(path).is_ok(), "{path:?}");
        }
    }

    #[test]
    fn truncated_archive_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let source = dir.path().join("app");
        build_tiny_app(&source);
        let bytes = pack(&source).unwrap();
        let truncated = &bytes[..bytes.len() / 2];
        assert!(!validate_archive(truncated).is_empty());
        assert!(matches!(
            unpack(truncated, &dir.path().join("x")),
            Err(ArchiveError::Unreadable(_))
        ));
    }
}
