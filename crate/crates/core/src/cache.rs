//! Content-addressed on-disk cache for expensive intermediates.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Incremental content hash over meshes and parameters.
#[derive(Default, Clone)]
pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new(kind: &str) -> Self {
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        h.update([0]);
        Self(h)
    }

    pub fn mesh(mut self, mesh: &Mesh) -> Self {
        self.0.update((mesh.vertex_count() as u64).to_le_bytes());
        for p in mesh.vertices() {
            for c in p.iter() {
                self.0.update(c.to_bits().to_le_bytes());
            }
        }
        self.0.update((mesh.face_count() as u64).to_le_bytes());
        for f in mesh.faces() {
            for &i in f {
                self.0.update((i as u64).to_le_bytes());
            }
        }
        self
    }

    pub fn u64(mut self, x: u64) -> Self {
        self.0.update(x.to_le_bytes());
        self
    }

    pub fn f64(self, x: f64) -> Self {
        self.u64(x.to_bits())
    }

    pub fn finish(self) -> String {
        self.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A directory of entries, each a subdirectory named by its key. Entries
/// are written to a temporary sibling and renamed into place, so readers
/// never see partial entries.
#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry(&self, key: &str) -> PathBuf {
        self.root.join(key)
    }

    /// Existing entry directory for `key`, if complete.
    pub fn get(&self, key: &str) -> Option<PathBuf> {
        let p = self.entry(key);
        p.is_dir().then_some(p)
    }

    /// Populate `key` with `fill` unless it already exists. Concurrent
    /// writers race harmlessly: the first rename wins.
    pub fn insert(&self, key: &str, fill: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let dest = self.entry(key);
        if dest.is_dir() {
            return Ok(dest);
        }
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let tmp = self
            .root
            .join(format!(".tmp-{key}-{}-{:?}", std::process::id(), std::thread::current().id()));
        let _ = fs::remove_dir_all(&tmp);
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        if let Err(e) = fill(&tmp) {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        if fs::rename(&tmp, &dest).is_err() {
            let _ = fs::remove_dir_all(&tmp);
            if !dest.is_dir() {
                return Err(Error::io(&dest, std::io::Error::other("could not publish cache entry")));
            }
        }
        Ok(dest)
    }
}

/// How a computation consults its cache: read existing entries when `reuse`
/// is set, and recompute then overwrite when `refresh` is set.
#[derive(Debug, Clone)]
pub struct CachePolicy {
    pub cache: Cache,
    pub reuse: bool,
    pub refresh: bool,
}

impl CachePolicy {
    pub fn fetch<T>(
        &self,
        key: &str,
        load: impl Fn(&Path) -> Result<T>,
        compute: impl FnOnce() -> Result<T>,
        store: impl Fn(&T, &Path) -> Result<()>,
    ) -> Result<T> {
        if self.reuse && !self.refresh {
            if let Some(dir) = self.cache.get(key) {
                match load(&dir) {
                    Ok(v) => return Ok(v),
                    Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", dir.display()),
                }
            }
        }
        let value = compute()?;
        if self.refresh {
            let dest = self.cache.entry(key);
            if dest.exists() {
                fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
            }
        }
        if self.reuse || self.refresh {
            self.cache.insert(key, |dir| store(&value, dir))?;
        }
        Ok(value)
    }
}
