use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Content-addressed JSON store: `<dir>/<namespace>/<key>.json`.
///
/// Entries are written to a temporary file and renamed into place, so
/// concurrent writers of the same key never expose a partial document.
/// A cache without a directory never hits.
#[derive(Debug, Default)]
pub struct Cache {
    dir: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), ..Self::default() }
    }

    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn path(&self, namespace: &str, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(namespace).join(format!("{key}.json")))
    }

    pub fn get<T: DeserializeOwned>(&self, namespace: &str, key: &str) -> Option<T> {
        let found = self.path(namespace, key).and_then(|p| {
            let bytes = std::fs::read(&p).ok()?;
            match serde_json::from_slice(&bytes) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("ignoring unreadable cache entry {}: {e}", p.display());
                    None
                }
            }
        });
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    pub fn put<T: Serialize>(&self, namespace: &str, key: &str, value: &T) -> Result<()> {
        let Some(path) = self.path(namespace, key) else { return Ok(()) };
        let parent = path.parent().expect("namespaced path");
        std::fs::create_dir_all(parent)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        tmp.write_all(&serde_json::to_vec_pretty(value)?)?;
        tmp.persist(&path).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    /// Cached value for `key`, computing and storing it on a miss.
    pub fn get_or_insert_with<T, F>(&self, namespace: &str, key: &str, compute: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        if let Some(v) = self.get(namespace, key) {
            return Ok(v);
        }
        let v = compute()?;
        self.put(namespace, key, &v)?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_counters() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        assert_eq!(cache.get::<Vec<u32>>("ns", "k"), None);
        let v = cache.get_or_insert_with("ns", "k", || Ok(vec![1u32, 2])).unwrap();
        assert_eq!(v, vec![1, 2]);
        let again = cache.get_or_insert_with("ns", "k", || -> Result<Vec<u32>> { panic!("recomputed") }).unwrap();
        assert_eq!(again, v);
        assert_eq!((cache.hits(), cache.misses()), (1, 2));
        // no stray temporary files
        let names: Vec<_> = std::fs::read_dir(dir.path().join("ns")).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn disabled_never_hits() {
        let cache = Cache::disabled();
        cache.put("ns", "k", &1).unwrap();
        assert_eq!(cache.get::<i32>("ns", "k"), None);
    }

    #[test]
    fn concurrent_writers_leave_a_whole_document() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        std::thread::scope(|s| {
            for i in 0..8 {
                let cache = &cache;
                s.spawn(move || cache.put("ns", "k", &vec![i; 1000]).unwrap());
            }
        });
        let v: Vec<i32> = cache.get("ns", "k").unwrap();
        assert!(v.iter().all(|&x| x == v[0]));
    }
}
