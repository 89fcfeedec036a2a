use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::StorageError;
use crate::orchestrator::InstanceId;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content-addressed blobs, kept in memory or under `<root>/<sha256>`.
#[derive(Debug, Default)]
pub struct BlobStore {
    root: Option<PathBuf>,
    mem: BTreeMap<String, Vec<u8>>,
}

impl BlobStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(root: &Path) -> Result<Self, StorageError> {
        fs::create_dir_all(root)?;
        Ok(BlobStore { root: Some(root.to_path_buf()), mem: BTreeMap::new() })
    }

    /// Store `bytes` and return their hash. Writing an existing blob is a no-op.
    /// On disk the blob is written to a temporary name and renamed into place.
    pub fn put(&mut self, bytes: &[u8]) -> Result<String, StorageError> {
        let sha = sha256_hex(bytes);
        match &self.root {
            None => {
                self.mem.entry(sha.clone()).or_insert_with(|| bytes.to_vec());
            }
            Some(root) => {
                let dest = root.join(&sha);
                if !dest.exists() {
                    let tmp = root.join(format!(".{sha}.tmp"));
                    let mut f = File::create(&tmp)?;
                    f.write_all(bytes)?;
                    f.sync_all()?;
                    fs::rename(&tmp, &dest)?;
                }
            }
        }
        Ok(sha)
    }

    pub fn get(&self, sha: &str) -> Result<Option<Vec<u8>>, StorageError> {
        match &self.root {
            None => Ok(self.mem.get(sha).cloned()),
            Some(root) => {
                let p = root.join(sha);
                if p.exists() {
                    Ok(Some(fs::read(p)?))
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// Hashes of all stored blobs, sorted.
    pub fn hashes(&self) -> Result<Vec<String>, StorageError> {
        match &self.root {
            None => Ok(self.mem.keys().cloned().collect()),
            Some(root) => {
                let mut out = Vec::new();
                for entry in fs::read_dir(root)? {
                    let name = entry?.file_name().to_string_lossy().into_owned();
                    if !name.starts_with('.') && !name.ends_with(".jsonl") {
                        out.push(name);
                    }
                }
                out.sort();
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalwareSample {
    pub sha256: String,
    pub size: u64,
    pub first_seen_ts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceId>,
    pub path: String,
}

/// Where and when a file was collected.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub ts: f64,
    pub instance: Option<InstanceId>,
    pub path: String,
}

/// Deduplicating malware store. Sample metadata is append-only.
#[derive(Debug, Default)]
pub struct Vault {
    blobs: BlobStore,
    samples: BTreeMap<String, MalwareSample>,
    order: Vec<String>,
    meta_log: Option<PathBuf>,
}

const META_FILE: &str = "samples.jsonl";

impl Vault {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open or create a vault directory, reloading existing metadata.
    pub fn open(root: &Path) -> Result<Self, StorageError> {
        let blobs = BlobStore::open(root)?;
        let meta = root.join(META_FILE);
        let mut v = Vault { blobs, meta_log: Some(meta.clone()), ..Default::default() };
        if meta.exists() {
            for (n, line) in BufReader::new(File::open(&meta)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let s: MalwareSample = serde_json::from_str(&line)
                    .map_err(|e| StorageError::Corrupt { line: n + 1, reason: e.to_string() })?;
                if !v.samples.contains_key(&s.sha256) {
                    v.order.push(s.sha256.clone());
                    v.samples.insert(s.sha256.clone(), s);
                }
            }
        }
        Ok(v)
    }

    /// Store a collected file. Returns the sample record and whether it was new;
    /// a duplicate returns the original record unchanged.
    pub fn store_sample(&mut self, bytes: &[u8], meta: SampleMeta) -> Result<(MalwareSample, bool), StorageError> {
        if bytes.is_empty() {
            return Err(StorageError::EmptyFile);
        }
        let sha = sha256_hex(bytes);
        if let Some(existing) = self.samples.get(&sha) {
            return Ok((existing.clone(), false));
        }
        self.blobs.put(bytes)?;
        let sample = MalwareSample {
            sha256: sha.clone(),
            size: bytes.len() as u64,
            first_seen_ts: meta.ts,
            instance: meta.instance,
            path: meta.path,
        };
        if let Some(p) = &self.meta_log {
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            writeln!(f, "{}", serde_json::to_string(&sample)?)?;
        }
        self.order.push(sha.clone());
        self.samples.insert(sha, sample.clone());
        Ok((sample, true))
    }

    pub fn get(&self, sha: &str) -> Option<&MalwareSample> {
        self.samples.get(sha)
    }

    pub fn blob(&self, sha: &str) -> Result<Option<Vec<u8>>, StorageError> {
        self.blobs.get(sha)
    }

    /// Samples in first-seen order.
    pub fn samples(&self) -> impl Iterator<Item = &MalwareSample> {
        self.order.iter().map(|s| &self.samples[s])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn blob_hashes(&self) -> Result<Vec<String>, StorageError> {
        self.blobs.hashes()
    }
}
