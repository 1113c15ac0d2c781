//! Filesystem persistence.
//!
//! ```text
//! <root>/
//!   catalog/        catalog.json + payloads/
//!   annotations/    <content-hash>.annotations.json
//!   projects/<id>/  project.json, assets/, renders/
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::project::Project;

pub const PROJECT_FILE: &str = "project.json";

/// Pretty JSON with object keys sorted at every level.
///
/// `serde_json::Value` keeps its maps ordered by key, so a round trip through
/// it is enough to canonicalize struct field order and map order alike.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let value = serde_json::to_value(value)?;
    let mut out = serde_json::to_vec_pretty(&value)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn write_canonical_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let bytes = to_canonical_json(value).map_err(io::Error::other)?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("project {0} not found")]
    NotFound(String),
    #[error("project {id} is unreadable: {message}")]
    Corrupt { id: String, message: String },
    #[error("storage failure: {0}")]
    Io(#[from] io::Error),
}

/// Project ids double as directory names, so only a narrow alphabet is
/// accepted.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

#[derive(Debug, Clone)]
pub struct ProjectStore {
    root: PathBuf,
}

impl ProjectStore {
    /// Opens the store, creating the directory skeleton if it is missing.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in ["projects", "catalog", "annotations"] {
            fs::create_dir_all(root.join(dir))?;
        }
        Ok(ProjectStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn catalog_dir(&self) -> PathBuf {
        self.root.join("catalog")
    }

    pub fn annotations_dir(&self) -> PathBuf {
        self.root.join("annotations")
    }

    pub fn project_dir(&self, id: &str) -> PathBuf {
        self.root.join("projects").join(id)
    }

    pub fn assets_dir(&self, id: &str) -> PathBuf {
        self.project_dir(id).join("assets")
    }

    pub fn renders_dir(&self, id: &str) -> PathBuf {
        self.project_dir(id).join("renders")
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_id(id) && self.project_dir(id).join(PROJECT_FILE).is_file()
    }

    /// Creates and persists an empty project with a fresh id.
    pub fn create(&self, created_at_ms: u64) -> Result<Project, StoreError> {
        let id = format!("prj-{}", uuid::Uuid::new_v4().simple());
        let project = Project::new(id, created_at_ms);
        self.save(&project)?;
        Ok(project)
    }

    pub fn save(&self, project: &Project) -> Result<(), StoreError> {
        if !valid_id(&project.id) {
            return Err(StoreError::Io(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("invalid project id {:?}", project.id),
            )));
        }
        fs::create_dir_all(self.assets_dir(&project.id))?;
        fs::create_dir_all(self.renders_dir(&project.id))?;
        write_canonical_json(&self.project_dir(&project.id).join(PROJECT_FILE), project)?;
        Ok(())
    }

    pub fn load(&self, id: &str) -> Result<Project, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let bytes = match fs::read(self.project_dir(id).join(PROJECT_FILE)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            id: id.to_string(),
            message: e.to_string(),
        })
    }

    /// Ids of every stored project, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join("projects"))? {
            let name = entry?.file_name();
            if let Some(name) = name.to_str() {
                if self.exists(name) {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn write_asset(&self, id: &str, file_name: &str, bytes: &[u8]) -> Result<PathBuf, StoreError> {
        let dir = self.assets_dir(id);
        fs::create_dir_all(&dir)?;
        let path = dir.join(file_name);
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    pub fn write_render(&self, id: &str, render_id: &str, wav: &[u8]) -> Result<PathBuf, StoreError> {
        let dir = self.renders_dir(id);
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{render_id}.wav"));
        write_atomic(&path, wav)?;
        Ok(path)
    }

    pub fn read_render(&self, id: &str, render_id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        if !valid_id(id) || !valid_id(render_id) {
            return Ok(None);
        }
        match fs::read(self.renders_dir(id).join(format!("{render_id}.wav"))) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
