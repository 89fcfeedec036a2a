use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::vault::BlobStore;
use super::StorageError;
use crate::orchestrator::InstanceId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackupFile {
    pub path: String,
    pub size: u64,
    pub sha256: String,
}

/// Filesystem delta of a reaped instance, plus the image it ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backup {
    pub id: String,
    pub instance: InstanceId,
    pub image_id: String,
    pub created_at: f64,
    pub files: Vec<BackupFile>,
}

/// Backups with content-addressed file bodies. Ids are sequential, so the
/// same sequence of stores yields the same ids.
#[derive(Debug, Default)]
pub struct BackupStore {
    blobs: BlobStore,
    backups: Vec<Backup>,
    index: Option<PathBuf>,
}

impl BackupStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(root: &Path) -> Result<Self, StorageError> {
        fs::create_dir_all(root)?;
        Ok(BackupStore {
            blobs: BlobStore::open(&root.join("blobs"))?,
            backups: Vec::new(),
            index: Some(root.join("backups.jsonl")),
        })
    }

    /// Store the given files (path, content) and return the new backup id.
    /// Files are recorded sorted by path.
    pub fn store(
        &mut self,
        instance: InstanceId,
        image_id: &str,
        created_at: f64,
        files: &[(String, Vec<u8>)],
    ) -> Result<String, StorageError> {
        let mut recorded = Vec::with_capacity(files.len());
        for (path, body) in files {
            let sha256 = self.blobs.put(body)?;
            recorded.push(BackupFile { path: path.clone(), size: body.len() as u64, sha256 });
        }
        recorded.sort_by(|a, b| a.path.cmp(&b.path));
        let backup = Backup {
            id: format!("bk-{:06}", self.backups.len() + 1),
            instance,
            image_id: image_id.to_string(),
            created_at,
            files: recorded,
        };
        if let Some(p) = &self.index {
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            writeln!(f, "{}", serde_json::to_string(&backup)?)?;
        }
        let id = backup.id.clone();
        self.backups.push(backup);
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<&Backup> {
        self.backups.iter().find(|b| b.id == id)
    }

    pub fn backups(&self) -> &[Backup] {
        &self.backups
    }

    pub fn file_body(&self, sha: &str) -> Result<Option<Vec<u8>>, StorageError> {
        self.blobs.get(sha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_sequential_and_files_sorted() {
        let mut s = BackupStore::in_memory();
        let a =
            s.store(InstanceId(1), "img", 5.0, &[("/b".into(), b"2".to_vec()), ("/a".into(), b"1".to_vec())]).unwrap();
        let b = s.store(InstanceId(2), "img", 6.0, &[]).unwrap();
        assert_eq!((a.as_str(), b.as_str()), ("bk-000001", "bk-000002"));
        let paths: Vec<&str> = s.get(&a).unwrap().files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, vec!["/a", "/b"]);
        assert!(s.get(&b).unwrap().files.is_empty());
        let sha = &s.get(&a).unwrap().files[0].sha256;
        assert_eq!(s.file_body(sha).unwrap().unwrap(), b"1");
    }
}
