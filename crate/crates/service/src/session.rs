//! Dataset, model and segment registries persisted to a session directory.
//!
//! Layout: `manifest.json` lists ids in creation order; each entry lives in
//! `datasets/<id>.json`, `models/<id>.json` or `segments/<id>.json`.
//! Every write goes through a temporary file and a rename.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use sensolab_core::dataset::{summarize, Dataset, DatasetSummary, Role};
use sensolab_core::inddiff::SegmentSet;

use crate::request::{FitRequest, ResultBundle};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("corrupt session file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SessionError + '_ {
    move |source| SessionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatus {
    pub state: JobState,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// Set on failure: numerical breakdown rather than bad input.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub numerical: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub violations: Vec<String>,
}

impl JobStatus {
    pub fn queued() -> Self {
        Self {
            state: JobState::Queued,
            error: None,
            numerical: false,
            violations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub request: FitRequest,
    pub status: JobStatus,
    pub consumer_labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub result: Option<Arc<ResultBundle>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: String,
    pub model: String,
    pub dataset: String,
    pub segments: SegmentSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetListing {
    pub id: String,
    pub name: String,
    pub role: Role,
    pub summary: DatasetSummary,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    datasets: Vec<String>,
    models: Vec<String>,
    segments: Vec<String>,
}

#[derive(Default)]
struct State {
    manifest: Manifest,
    datasets: HashMap<String, Arc<Dataset>>,
    models: HashMap<String, ModelRecord>,
    segments: HashMap<String, SegmentRecord>,
}

/// Registries of one service session. Readers share the lock; every
/// mutation takes it exclusively.
pub struct Session {
    dir: Option<PathBuf>,
    state: RwLock<State>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SessionError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SessionError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| SessionError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl Session {
    /// A session that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            state: RwLock::new(State::default()),
        }
    }

    /// Open (or create) a session directory and load everything in it.
    /// Jobs that were still queued or running when the previous process
    /// stopped are marked failed.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        for sub in ["datasets", "models", "segments"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = if manifest_path.exists() {
            read_json(&manifest_path)?
        } else {
            Manifest::default()
        };
        let mut state = State::default();
        for id in &manifest.datasets {
            let p = dir.join("datasets").join(format!("{id}.json"));
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            let d = Dataset::from_json(&bytes).map_err(|e| SessionError::Corrupt {
                path: p.clone(),
                message: e.to_string(),
            })?;
            state.datasets.insert(id.clone(), Arc::new(d));
        }
        let mut interrupted = Vec::new();
        for id in &manifest.models {
            let mut m: ModelRecord = read_json(&dir.join("models").join(format!("{id}.json")))?;
            if !m.status.state.is_terminal() {
                m.status = JobStatus {
                    state: JobState::Failed,
                    error: Some("job interrupted by a service restart".into()),
                    numerical: false,
                    violations: Vec::new(),
                };
                interrupted.push(m.clone());
            }
            state.models.insert(id.clone(), m);
        }
        for id in &manifest.segments {
            let s: SegmentRecord = read_json(&dir.join("segments").join(format!("{id}.json")))?;
            state.segments.insert(id.clone(), s);
        }
        state.manifest = manifest;
        let session = Self {
            dir: Some(dir),
            state: RwLock::new(state),
        };
        for m in &interrupted {
            session.persist_model(m)?;
        }
        Ok(session)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn persist_manifest(&self, m: &Manifest) -> Result<(), SessionError> {
        match &self.dir {
            Some(dir) => write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(m).expect("serialisable")),
            None => Ok(()),
        }
    }

    fn persist_model(&self, m: &ModelRecord) -> Result<(), SessionError> {
        match &self.dir {
            Some(dir) => write_atomic(
                &dir.join("models").join(format!("{}.json", m.id)),
                &serde_json::to_vec(m).expect("serialisable"),
            ),
            None => Ok(()),
        }
    }

    pub fn add_dataset(&self, d: Dataset) -> Result<DatasetListing, SessionError> {
        let id = d.id().to_string();
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join("datasets").join(format!("{id}.json")), d.to_json().as_bytes())?;
        }
        let listing = listing(&d);
        let mut st = self.state.write();
        st.datasets.insert(id.clone(), Arc::new(d));
        st.manifest.datasets.push(id);
        self.persist_manifest(&st.manifest)?;
        Ok(listing)
    }

    pub fn dataset(&self, id: &str) -> Option<Arc<Dataset>> {
        self.state.read().datasets.get(id).cloned()
    }

    pub fn list_datasets(&self) -> Vec<DatasetListing> {
        let st = self.state.read();
        st.manifest.datasets.iter().map(|id| listing(&st.datasets[id])).collect()
    }

    /// Returns false when no such dataset exists.
    pub fn remove_dataset(&self, id: &str) -> Result<bool, SessionError> {
        let mut st = self.state.write();
        if st.datasets.remove(id).is_none() {
            return Ok(false);
        }
        st.manifest.datasets.retain(|x| x != id);
        self.persist_manifest(&st.manifest)?;
        if let Some(dir) = &self.dir {
            let p = dir.join("datasets").join(format!("{id}.json"));
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
        Ok(true)
    }

    pub fn add_model(&self, m: ModelRecord) -> Result<(), SessionError> {
        self.persist_model(&m)?;
        let mut st = self.state.write();
        st.manifest.models.push(m.id.clone());
        st.models.insert(m.id.clone(), m);
        self.persist_manifest(&st.manifest)
    }

    pub fn model(&self, id: &str) -> Option<ModelRecord> {
        self.state.read().models.get(id).cloned()
    }

    pub fn list_models(&self) -> Vec<ModelRecord> {
        let st = self.state.read();
        st.manifest
            .models
            .iter()
            .map(|id| {
                let mut m = st.models[id].clone();
                m.result = None;
                m
            })
            .collect()
    }

    /// Move a job to a new state. Terminal states are never left; the
    /// return value says whether the transition happened.
    pub fn update_job(
        &self,
        id: &str,
        status: JobStatus,
        result: Option<ResultBundle>,
    ) -> Result<bool, SessionError> {
        let snapshot = {
            let mut st = self.state.write();
            let Some(m) = st.models.get_mut(id) else {
                return Ok(false);
            };
            if m.status.state.is_terminal() {
                return Ok(false);
            }
            m.status = status;
            if let Some(r) = result {
                m.result = Some(Arc::new(r));
            }
            m.clone()
        };
        self.persist_model(&snapshot)?;
        Ok(true)
    }

    pub fn add_segments(&self, rec: SegmentRecord) -> Result<(), SessionError> {
        if let Some(dir) = &self.dir {
            write_atomic(
                &dir.join("segments").join(format!("{}.json", rec.id)),
                &serde_json::to_vec_pretty(&rec).expect("serialisable"),
            )?;
        }
        let mut st = self.state.write();
        st.manifest.segments.push(rec.id.clone());
        st.segments.insert(rec.id.clone(), rec);
        self.persist_manifest(&st.manifest)
    }

    pub fn list_segments(&self) -> Vec<SegmentRecord> {
        let st = self.state.read();
        st.manifest.segments.iter().map(|id| st.segments[id].clone()).collect()
    }
}

fn listing(d: &Dataset) -> DatasetListing {
    DatasetListing {
        id: d.id().to_string(),
        name: d.name().to_string(),
        role: d.role(),
        summary: summarize(d),
    }
}
