use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::{self, atomic_write, sha256_hex};

pub const HASH_ALGORITHM: &str = "sha256";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("artifact name `{0}` is not a valid logical name")]
    InvalidName(String),
    #[error("artifact `{0}` not found")]
    NotFound(String),
    #[error("artifact `{name}` has no version {version}")]
    VersionNotFound { name: String, version: u64 },
    #[error("artifact `{name}` v{version}: file digest does not match the manifest")]
    DigestMismatch { name: String, version: u64 },
    #[error("manifest uses hash `{0}`, this build uses {HASH_ALGORITHM}")]
    HashAlgorithm(String),
    #[error("run `{0}` has no checkpoint")]
    UnknownRun(String),
    #[error("checkpoint for `{run_id}` is unusable: {reason}")]
    CorruptCheckpoint { run_id: String, reason: String },
    #[error("project is locked by another writer ({0})")]
    LockHeld(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub logical_name: String,
    pub version: u64,
    pub content_hash: String,
    pub producer: String,
    pub created_at: String,
    pub path: String,
    #[serde(default)]
    pub no_op: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestHeader {
    manifest_version: u32,
    hash_algorithm: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ManifestLine {
    Header(ManifestHeader),
    Record(ArtifactRecord),
}

/// Crash points for fault-injection tests.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    AfterTempWrite,
    AfterRename,
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
    #[doc(hidden)]
    pub fault: Option<FaultPoint>,
}

pub fn valid_logical_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl ArtifactStore {
    pub fn new(project_root: impl Into<PathBuf>) -> Self {
        Self {
            root: project_root.into(),
            fault: None,
        }
    }

    pub fn project_root(&self) -> &Path {
        &self.root
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.root.join(".aris/artifacts")
    }

    pub fn state_dir(&self) -> PathBuf {
        self.root.join(".aris/state")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.state_dir().join("manifest.jsonl")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.state_dir().join("checkpoints")
    }

    pub fn artifact_path(&self, name: &str, version: u64) -> PathBuf {
        self.artifacts_dir().join(name).join(format!("{version}.md"))
    }

    /// Every indexed record in manifest order. A torn final line is ignored:
    /// it never finished indexing, so its version is free for reuse.
    pub fn records(&self) -> Result<Vec<ArtifactRecord>, ArtifactError> {
        let (lines, _skipped) = fsutil::read_jsonl::<ManifestLine>(&self.manifest_path())?;
        let mut out = Vec::new();
        for line in lines {
            match line {
                ManifestLine::Header(h) if h.hash_algorithm != HASH_ALGORITHM => {
                    return Err(ArtifactError::HashAlgorithm(h.hash_algorithm));
                }
                ManifestLine::Header(_) => {}
                ManifestLine::Record(r) => out.push(r),
            }
        }
        Ok(out)
    }

    pub fn history(&self, name: &str) -> Result<Vec<ArtifactRecord>, ArtifactError> {
        Ok(self
            .records()?
            .into_iter()
            .filter(|r| r.logical_name == name)
            .collect())
    }

    pub fn latest_versions(&self) -> Result<BTreeMap<String, u64>, ArtifactError> {
        let mut out = BTreeMap::new();
        for r in self.records()? {
            let v = out.entry(r.logical_name).or_insert(0);
            *v = (*v).max(r.version);
        }
        Ok(out)
    }

    fn ensure_header(&self) -> Result<(), ArtifactError> {
        let path = self.manifest_path();
        if path.exists() && fs::metadata(&path)?.len() > 0 {
            return Ok(());
        }
        let header = ManifestHeader {
            manifest_version: MANIFEST_VERSION,
            hash_algorithm: HASH_ALGORITHM.to_string(),
        };
        fsutil::append_line(&path, &serde_json::to_string(&header).expect("header serializes"))?;
        Ok(())
    }

    pub fn put_artifact(
        &self,
        name: &str,
        content: &[u8],
        producer: &str,
    ) -> Result<ArtifactRecord, ArtifactError> {
        if !valid_logical_name(name) {
            return Err(ArtifactError::InvalidName(name.to_string()));
        }
        self.ensure_header()?;
        let history = self.history(name)?;
        let hash = sha256_hex(content);
        let last = history.iter().max_by_key(|r| r.version);
        let version = last.map_or(1, |r| r.version + 1);
        let no_op = last.is_some_and(|r| r.content_hash == hash);

        let path = self.artifact_path(name, version);
        fs::create_dir_all(path.parent().expect("artifact path has a parent"))?;
        let tmp = fsutil::tmp_path(&path);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(content)?;
            f.sync_all()?;
        }
        if self.fault == Some(FaultPoint::AfterTempWrite) {
            return Err(io::Error::other("injected crash after temp write").into());
        }
        fs::rename(&tmp, &path)?;
        if self.fault == Some(FaultPoint::AfterRename) {
            return Err(io::Error::other("injected crash after rename").into());
        }
        let record = ArtifactRecord {
            logical_name: name.to_string(),
            version,
            content_hash: hash,
            producer: producer.to_string(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            path: path
                .strip_prefix(&self.root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/"),
            no_op,
        };
        fsutil::append_line(
            &self.manifest_path(),
            &serde_json::to_string(&record).expect("record serializes"),
        )?;
        Ok(record)
    }

    pub fn get_artifact(
        &self,
        name: &str,
        version: Option<u64>,
    ) -> Result<(Vec<u8>, ArtifactRecord), ArtifactError> {
        let history = self.history(name)?;
        if history.is_empty() {
            return Err(ArtifactError::NotFound(name.to_string()));
        }
        let record = match version {
            None => history.into_iter().max_by_key(|r| r.version).expect("non-empty"),
            Some(v) => history
                .into_iter()
                .find(|r| r.version == v)
                .ok_or(ArtifactError::VersionNotFound {
                    name: name.to_string(),
                    version: v,
                })?,
        };
        let bytes = fs::read(self.artifact_path(name, record.version))?;
        if sha256_hex(&bytes) != record.content_hash {
            return Err(ArtifactError::DigestMismatch {
                name: name.to_string(),
                version: record.version,
            });
        }
        Ok((bytes, record))
    }

    pub fn get_text(&self, name: &str, version: Option<u64>) -> Result<String, ArtifactError> {
        let (bytes, _) = self.get_artifact(name, version)?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    fn checkpoint_path(&self, run_id: &str) -> PathBuf {
        self.checkpoint_dir().join(format!("{run_id}.json"))
    }

    /// Persist the latest checkpoint of a run. A checkpoint that names a
    /// version the store does not hold is refused.
    pub fn save_checkpoint(&self, checkpoint: &Checkpoint) -> Result<(), ArtifactError> {
        let known: BTreeSet<(String, u64)> = self
            .records()?
            .into_iter()
            .map(|r| (r.logical_name, r.version))
            .collect();
        for (name, v) in &checkpoint.artifact_versions {
            if !known.contains(&(name.clone(), *v)) {
                return Err(ArtifactError::VersionNotFound {
                    name: name.clone(),
                    version: *v,
                });
            }
        }
        let text = serde_json::to_string_pretty(checkpoint).expect("checkpoint serializes");
        atomic_write(&self.checkpoint_path(&checkpoint.run_id), text.as_bytes())?;
        Ok(())
    }

    pub fn load_checkpoint(&self, run_id: &str) -> Result<Checkpoint, ArtifactError> {
        let path = self.checkpoint_path(run_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(ArtifactError::UnknownRun(run_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| ArtifactError::CorruptCheckpoint {
            run_id: run_id.to_string(),
            reason: e.to_string(),
        })?;
        if cp.run_id != run_id {
            return Err(ArtifactError::CorruptCheckpoint {
                run_id: run_id.to_string(),
                reason: format!("file names run `{}`", cp.run_id),
            });
        }
        Ok(cp)
    }

    /// Load a checkpoint, confirm every pinned artifact is intact, and fork
    /// a fresh run id for the continuation. The source checkpoint is left
    /// untouched.
    pub fn resume(&self, run_id: &str) -> Result<(String, Checkpoint), ArtifactError> {
        let cp = self.load_checkpoint(run_id)?;
        for (name, v) in &cp.artifact_versions {
            self.get_artifact(name, Some(*v))
                .map_err(|e| ArtifactError::CorruptCheckpoint {
                    run_id: run_id.to_string(),
                    reason: e.to_string(),
                })?;
        }
        let prefix = format!("{run_id}.a");
        let mut attempt = 1;
        if let Ok(rd) = fs::read_dir(self.checkpoint_dir()) {
            for entry in rd.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                let Some(stem) = name.strip_suffix(".json") else { continue };
                if let Some(n) = stem.strip_prefix(&prefix).and_then(|s| s.parse::<u32>().ok()) {
                    attempt = attempt.max(n + 1);
                }
            }
        }
        Ok((format!("{prefix}{attempt}"), cp))
    }

    pub fn view(&self, versions: BTreeMap<String, u64>) -> ArtifactView<'_> {
        ArtifactView { store: self, versions }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub run_id: String,
    pub workflow: String,
    /// Index of the next step to execute.
    pub step_index: usize,
    pub artifact_versions: BTreeMap<String, u64>,
    pub round_state: serde_json::Value,
    #[serde(default)]
    pub parent_run: Option<String>,
}

/// Artifacts pinned to specific versions, as seen by one run.
#[derive(Debug, Clone)]
pub struct ArtifactView<'a> {
    store: &'a ArtifactStore,
    pub versions: BTreeMap<String, u64>,
}

impl ArtifactView<'_> {
    pub fn get(&self, name: &str) -> Result<(Vec<u8>, ArtifactRecord), ArtifactError> {
        match self.versions.get(name) {
            Some(v) => self.store.get_artifact(name, Some(*v)),
            None => Err(ArtifactError::NotFound(name.to_string())),
        }
    }
}

/// Exclusive writer lock for a project directory, released on drop.
#[derive(Debug)]
pub struct ProjectLock {
    path: PathBuf,
}

impl ProjectLock {
    pub fn acquire(project_root: &Path) -> Result<Self, ArtifactError> {
        let path = project_root.join(".aris/state/writer.lock");
        fs::create_dir_all(path.parent().expect("lock has a parent"))?;
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "pid {}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default();
                Err(ArtifactError::LockHeld(format!(
                    "{} held by {}",
                    path.display(),
                    holder.trim()
                )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for ProjectLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractStep {
    pub skill: String,
    pub consumes: Vec<String>,
    pub produces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContractViolation {
    pub step_index: usize,
    pub skill: String,
    pub artifact: String,
}

/// Every consumed artifact must be a declared input or produced by an
/// earlier step. Because only earlier producers count, the contract graph
/// over steps is acyclic by construction.
pub fn validate_contracts(steps: &[ContractStep], inputs: &[String]) -> Vec<ContractViolation> {
    let mut available: BTreeSet<&str> = inputs.iter().map(String::as_str).collect();
    let mut out = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        for name in &step.consumes {
            if !available.contains(name.as_str()) {
                out.push(ContractViolation {
                    step_index: i,
                    skill: step.skill.clone(),
                    artifact: name.clone(),
                });
            }
        }
        available.extend(step.produces.iter().map(String::as_str));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (tempfile::TempDir, ArtifactStore) {
        let dir = tempfile::tempdir().unwrap();
        let s = ArtifactStore::new(dir.path());
        (dir, s)
    }

    #[test]
    fn versions_and_no_op_flag() {
        let (_d, s) = store();
        let r1 = s.put_artifact("IDEA_REPORT", b"one", "idea-discovery").unwrap();
        assert_eq!((r1.version, r1.no_op), (1, false));
        let r2 = s.put_artifact("IDEA_REPORT", b"two", "idea-discovery").unwrap();
        assert_eq!((r2.version, r2.no_op), (2, false));
        assert_ne!(r1.content_hash, r2.content_hash);
        let r3 = s.put_artifact("IDEA_REPORT", b"two", "idea-discovery").unwrap();
        assert_eq!((r3.version, r3.no_op), (3, true));
        assert_eq!(r3.content_hash, sha256_hex(b"two"));
    }

    #[test]
    fn get_latest_and_pinned() {
        let (_d, s) = store();
        s.put_artifact("IDEA_REPORT", b"v1", "p").unwrap();
        s.put_artifact("IDEA_REPORT", b"v2", "p").unwrap();
        assert_eq!(s.get_artifact("IDEA_REPORT", None).unwrap().0, b"v2");
        assert_eq!(s.get_artifact("IDEA_REPORT", Some(1)).unwrap().0, b"v1");
        assert!(matches!(s.get_artifact("UNKNOWN", None), Err(ArtifactError::NotFound(_))));
        assert!(matches!(
            s.get_artifact("IDEA_REPORT", Some(9)),
            Err(ArtifactError::VersionNotFound { version: 9, .. })
        ));
    }

    #[test]
    fn empty_name_is_rejected() {
        let (_d, s) = store();
        assert!(matches!(s.put_artifact("", b"x", "p"), Err(ArtifactError::InvalidName(_))));
        assert!(matches!(s.put_artifact("../x", b"x", "p"), Err(ArtifactError::InvalidName(_))));
    }

    #[test]
    fn manifest_header_records_hash() {
        let (_d, s) = store();
        s.put_artifact("A", b"x", "p").unwrap();
        let first = fs::read_to_string(s.manifest_path()).unwrap();
        let header: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        assert_eq!(header["hash_algorithm"], "sha256");
    }

    #[test]
    fn checkpoint_round_trip_and_pinning() {
        let (_d, s) = store();
        s.put_artifact("DRAFT", b"d1", "w2").unwrap();
        let cp = Checkpoint {
            run_id: "run1".into(),
            workflow: "auto_review_loop".into(),
            step_index: 1,
            artifact_versions: s.latest_versions().unwrap(),
            round_state: serde_json::json!({"round": 2, "scores": [5.0, 6.0]}),
            parent_run: None,
        };
        s.save_checkpoint(&cp).unwrap();
        s.put_artifact("DRAFT", b"d2", "other-session").unwrap();
        let (fork, back) = s.resume("run1").unwrap();
        assert_eq!(back, cp);
        assert_eq!(fork, "run1.a1");
        assert_eq!(back.round_state["round"], 2);
        let view = s.view(back.artifact_versions);
        assert_eq!(view.get("DRAFT").unwrap().0, b"d1");
        assert!(matches!(s.resume("nope"), Err(ArtifactError::UnknownRun(_))));
    }

    #[test]
    fn fork_counter_increases() {
        let (_d, s) = store();
        let mut cp = Checkpoint {
            run_id: "r".into(),
            workflow: "w".into(),
            step_index: 0,
            artifact_versions: BTreeMap::new(),
            round_state: serde_json::Value::Null,
            parent_run: None,
        };
        s.save_checkpoint(&cp).unwrap();
        let (a1, _) = s.resume("r").unwrap();
        cp.run_id = a1.clone();
        cp.parent_run = Some("r".into());
        s.save_checkpoint(&cp).unwrap();
        assert_eq!(s.resume("r").unwrap().0, "r.a2");
    }

    #[test]
    fn corrupt_checkpoint() {
        let (_d, s) = store();
        fs::create_dir_all(s.checkpoint_dir()).unwrap();
        fs::write(s.checkpoint_dir().join("bad.json"), "{ not json").unwrap();
        assert!(matches!(s.resume("bad"), Err(ArtifactError::CorruptCheckpoint { .. })));
    }

    #[test]
    fn checkpoint_with_unknown_version_is_refused() {
        let (_d, s) = store();
        let cp = Checkpoint {
            run_id: "r".into(),
            workflow: "w".into(),
            step_index: 0,
            artifact_versions: BTreeMap::from([("GHOST".to_string(), 1)]),
            round_state: serde_json::Value::Null,
            parent_run: None,
        };
        assert!(matches!(s.save_checkpoint(&cp), Err(ArtifactError::VersionNotFound { .. })));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let held = ProjectLock::acquire(dir.path()).unwrap();
        assert!(matches!(ProjectLock::acquire(dir.path()), Err(ArtifactError::LockHeld(_))));
        drop(held);
        assert!(ProjectLock::acquire(dir.path()).is_ok());
    }

    fn step(skill: &str, consumes: &[&str], produces: &[&str]) -> ContractStep {
        ContractStep {
            skill: skill.into(),
            consumes: consumes.iter().map(|s| s.to_string()).collect(),
            produces: produces.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn contracts() {
        assert!(validate_contracts(&[], &[]).is_empty());
        let ok = [
            step("idea-discovery", &[], &["IDEA_REPORT"]),
            step("experiment-bridge", &["IDEA_REPORT"], &["EXPERIMENT_LOG"]),
        ];
        assert!(validate_contracts(&ok, &[]).is_empty());
        let bad = [step("auto-review-loop", &["EXPERIMENT_LOG"], &["NARRATIVE_REPORT"])];
        assert_eq!(
            validate_contracts(&bad, &[]),
            vec![ContractViolation {
                step_index: 0,
                skill: "auto-review-loop".into(),
                artifact: "EXPERIMENT_LOG".into()
            }]
        );
    }
}
