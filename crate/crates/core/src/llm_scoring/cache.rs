use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Response store with one JSON file per request digest.
///
/// Entries are written to a temporary file and renamed into place, so
/// concurrent writers are safe and readers never see a partial entry.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    request: Value,
    response: String,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(DiskCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// sha256 of the canonical (key-sorted) JSON form of `request`.
    pub fn digest(request: &Value) -> String {
        sha256_hex(request.to_string().as_bytes())
    }

    pub fn entry_path(&self, request: &Value) -> PathBuf {
        self.dir.join(format!("{}.json", Self::digest(request)))
    }

    pub fn get(&self, request: &Value) -> Result<Option<String>> {
        let path = self.entry_path(request);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let entry: CacheEntry = serde_json::from_str(&text)?;
        Ok((entry.request == *request).then_some(entry.response))
    }

    pub fn put(&self, request: &Value, response: &str) -> Result<()> {
        let path = self.entry_path(request);
        let entry = CacheEntry {
            request: request.clone(),
            response: response.to_owned(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        tmp.write_all(serde_json::to_string_pretty(&entry)?.as_bytes())
            .map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path().join("c")).unwrap();
        let req = json!({"prompt": "p", "backend": "b"});
        assert_eq!(cache.get(&req).unwrap(), None);
        cache.put(&req, "answer").unwrap();
        assert_eq!(cache.get(&req).unwrap().as_deref(), Some("answer"));
        assert_eq!(cache.get(&json!({"prompt": "q", "backend": "b"})).unwrap(), None);
        let files: Vec<_> = std::fs::read_dir(cache.dir()).unwrap().collect();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn digest_ignores_key_order() {
        assert_eq!(
            DiskCache::digest(&json!({"a": 1, "b": 2})),
            DiskCache::digest(&serde_json::from_str(r#"{"b": 2, "a": 1}"#).unwrap())
        );
    }

    #[test]
    fn concurrent_writers_leave_a_complete_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let req = json!({"k": "v"});
        std::thread::scope(|s| {
            for i in 0..8 {
                let (cache, req) = (&cache, &req);
                s.spawn(move || {
                    for _ in 0..20 {
                        cache.put(req, &format!("r{i}")).unwrap();
                        let got = cache.get(req).unwrap().unwrap();
                        assert!(got.starts_with('r'));
                    }
                });
            }
        });
    }
}
