//! On-disk layout of a data directory.
//!
//! ```text
//! facts.v1.jsonl        one GeoFact per line
//! media.v1.jsonl        one media manifest line per record
//! params/shared.params  shared parameters
//! params/user-<hex id>.params
//! media/                default root for relative media uris
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use egomedia_core::learner::ParamStore;
use egomedia_core::params::{Owner, ParamVector, ParamsError};
use egomedia_core::world::{GeoFact, WorldError, WorldStore};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    World { path: PathBuf, source: WorldError },
    #[error("{path}: {source}")]
    Params { path: PathBuf, source: ParamsError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_path_buf(), source }
}

/// Writes through a sibling temp file so readers never see a torn file.
fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), PersistError> {
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    /// Opens `root`, creating it and its subdirectories when missing.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, PersistError> {
        let d = Self { root: root.into() };
        for p in [d.root.clone(), d.params_dir(), d.media_root()] {
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(d)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn facts_path(&self) -> PathBuf {
        self.root.join("facts.v1.jsonl")
    }

    pub fn media_path(&self) -> PathBuf {
        self.root.join("media.v1.jsonl")
    }

    pub fn params_dir(&self) -> PathBuf {
        self.root.join("params")
    }

    pub fn media_root(&self) -> PathBuf {
        self.root.join("media")
    }

    fn params_path(&self, owner: &Owner) -> PathBuf {
        match owner {
            Owner::Shared => self.params_dir().join("shared.params"),
            Owner::User(u) => self.params_dir().join(format!("user-{}.params", hex::encode(u))),
        }
    }

    /// Facts and media; contexts are not persisted.
    pub fn load_world(&self) -> Result<WorldStore, PersistError> {
        let mut store = WorldStore::new();
        let fp = self.facts_path();
        if fp.exists() {
            let r = BufReader::new(File::open(&fp).map_err(io_err(&fp))?);
            for (i, line) in r.lines().enumerate() {
                let line = line.map_err(io_err(&fp))?;
                if line.trim().is_empty() {
                    continue;
                }
                let fact: GeoFact = serde_json::from_str(&line).map_err(|e| PersistError::Record {
                    path: fp.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                store.insert_fact(fact);
            }
        }
        let mp = self.media_path();
        if mp.exists() {
            let r = BufReader::new(File::open(&mp).map_err(io_err(&mp))?);
            let rep = store
                .ingest_media_manifest(r)
                .map_err(|source| PersistError::World { path: mp.clone(), source })?;
            if let Some(bad) = rep.invalid.first() {
                return Err(PersistError::Record { path: mp, line: bad.line, message: bad.reason.clone() });
            }
        }
        Ok(store)
    }

    pub fn save_world(&self, store: &WorldStore) -> Result<(), PersistError> {
        write_atomic(&self.facts_path(), |w| {
            for f in store.facts().facts() {
                serde_json::to_writer(&mut *w, f)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })?;
        write_atomic(&self.media_path(), |w| {
            for m in store.media().records() {
                let line = serde_json::json!({
                    "id": m.id,
                    "kind": m.kind,
                    "lat": m.lat,
                    "lon": m.lon,
                    "timestamp": m.timestamp,
                    "uri": m.uri,
                });
                serde_json::to_writer(&mut *w, &line)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }

    pub fn save_params(&self, theta: &ParamVector) -> Result<(), PersistError> {
        let path = self.params_path(&theta.owner);
        write_atomic(&path, |w| {
            theta.write_to(&mut *w).map_err(|e| match e {
                ParamsError::Io(io) => io,
                other => std::io::Error::other(other.to_string()),
            })
        })
    }

    /// Shared parameters (zero when absent) plus every stored fork.
    pub fn load_params(&self) -> Result<ParamStore, PersistError> {
        let read = |path: &Path| -> Result<ParamVector, PersistError> {
            let f = File::open(path).map_err(io_err(path))?;
            ParamVector::read_from(BufReader::new(f)).map_err(|source| PersistError::Params { path: path.to_path_buf(), source })
        };
        let shared_path = self.params_path(&Owner::Shared);
        let shared = if shared_path.exists() { read(&shared_path)? } else { ParamVector::zero(Owner::Shared) };
        let mut store = ParamStore::new(shared);
        let dir = self.params_dir();
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("user-") && n.ends_with(".params")))
            .collect();
        entries.sort();
        for p in entries {
            let theta = read(&p)?;
            if let Owner::User(u) = theta.owner.clone() {
                store.insert_fork(&u, theta);
            }
        }
        Ok(store)
    }
}
