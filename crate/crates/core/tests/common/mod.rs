//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use perturbex::synth::{write_blob_dataset, BlobDatasetSpec};

/// Every regular file under `root`, keyed by its `/`-separated relative
/// path. Paths whose first component is listed in `skip_dirs`, and files
/// named in `skip_files`, are left out.
pub fn tree(root: &Path, skip_dirs: &[&str], skip_files: &[&str]) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            let rel = path.strip_prefix(root).unwrap();
            let rel_str = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            let first = rel_str.split('/').next().unwrap_or("");
            if skip_dirs.contains(&first) {
                continue;
            }
            if path.is_dir() {
                stack.push(path);
            } else if !skip_files.contains(&rel_str.as_str()) {
                out.insert(rel_str, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Names of files that differ between two trees (including one-sided files).
pub fn tree_diff(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let mut diff: Vec<String> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    diff.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
    diff
}

pub fn blob_dataset(dir: &Path, n_images: usize) -> PathBuf {
    write_blob_dataset(
        dir,
        &BlobDatasetSpec {
            n_images,
            ..BlobDatasetSpec::default()
        },
    )
    .unwrap()
}

/// A `perturbex mock-serve` child process on an ephemeral port.
pub struct ServeProcess {
    pub child: Child,
    pub url: String,
}

impl ServeProcess {
    pub fn start(extra: &[&str]) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_perturbex"))
            .args(["mock-serve", "--port", "0"])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn mock-serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Self { child, url }
    }
}

impl Drop for ServeProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
