//! Dataset manifest: `{"entries": [{"image_id", "path", "annotations"?}]}`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    /// Resolved against the manifest's directory when relative.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<Detection>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    /// Writes the manifest with paths relative to `path`'s directory where possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let rel = DatasetManifest {
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    path: e.path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| e.path.clone()),
                    ..e.clone()
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&rel)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// Image ids become artifact directory names, so they must be a single
/// plain path component.
fn check_image_id(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() {
        return Err("image_id is empty".into());
    }
    if id == "." || id == ".." || id.contains(['/', '\\']) || id.chars().any(char::is_control) {
        return Err(format!("image_id {id:?} is not a plain file name"));
    }
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let raw_entries = root
        .get("entries")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Manifest {
            path: path.to_path_buf(),
            message: "missing \"entries\" array".into(),
        })?;

    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(raw_entries.len());
    for (index, raw) in raw_entries.iter().enumerate() {
        let entry_err = |message: String| Error::ManifestEntry {
            path: path.to_path_buf(),
            index,
            message,
        };
        let mut entry: ManifestEntry =
            serde_json::from_value(raw.clone()).map_err(|e| entry_err(e.to_string()))?;
        check_image_id(&entry.image_id).map_err(entry_err)?;
        if !seen.insert(entry.image_id.clone()) {
            return Err(Error::DuplicateImageId {
                path: path.to_path_buf(),
                index,
                id: entry.image_id,
            });
        }
        if let Some(annotations) = &entry.annotations {
            for d in annotations {
                d.validate().map_err(|e| entry_err(e.to_string()))?;
            }
        }
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        if !entry.path.is_file() {
            return Err(entry_err(format!(
                "image path {} does not exist",
                entry.path.display()
            )));
        }
        entries.push(entry);
    }
    Ok(DatasetManifest { entries })
}
