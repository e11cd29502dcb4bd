//! Project directory layout:
//!
//! ```text
//! project/
//!   escher.manifest
//!   releases/<n>/<CLASS>.esc
//!   handlers/<CLASS>/<from>_to_<to>.est
//! ```
//!
//! The manifest is line oriented: `project <name>`, then `release <n>`
//! followed by its `class <NAME> version <v>` lines, then one
//! `transformer <CLASS> <from> <to> <digest>` line per handler entry. The
//! digest is the sha256 of the handler text as the tool last generated it, so
//! a file whose content no longer matches was edited by hand.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Release, ReleaseError, Repository};
use crate::converter::ConverterRegistry;
use crate::schema::{parse_schema, render_schema, SchemaError};
use crate::transformer::{parse_transformer, render_transformer, TransformerError};

pub const MANIFEST: &str = "escher.manifest";
pub const LOCK: &str = "escher.lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("IoError {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("ManifestError line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("{path}: {source}")]
    Schema {
        path: PathBuf,
        #[source]
        source: SchemaError,
    },
    #[error("{path}: {source}")]
    Transformer {
        path: PathBuf,
        #[source]
        source: TransformerError,
    },
    #[error("RepositoryLocked {0}")]
    Locked(PathBuf),
    #[error("InconsistentRepository {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Release(#[from] ReleaseError),
}

impl StoreError {
    pub fn is_io(&self) -> bool {
        matches!(self, StoreError::Io { .. } | StoreError::Locked(_))
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Exclusive access to a project directory, released on drop.
#[derive(Debug)]
pub struct ProjectLock {
    path: PathBuf,
}

impl ProjectLock {
    pub fn acquire(root: &Path) -> Result<Self, StoreError> {
        let path = root.join(LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(ProjectLock { path }),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked(path)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for ProjectLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// A repository together with the digests recorded in its manifest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stored {
    pub repo: Repository,
    pub digests: BTreeMap<(String, u32, u32), String>,
}

pub fn handler_path(root: &Path, class: &str, from: u32, to: u32) -> PathBuf {
    root.join("handlers").join(class).join(format!("{from}_to_{to}.est"))
}

pub fn schema_path(root: &Path, release: u32, class: &str) -> PathBuf {
    root.join("releases").join(release.to_string()).join(format!("{class}.esc"))
}

pub fn is_project(root: &Path) -> bool {
    root.join(MANIFEST).is_file()
}

struct Manifest {
    project: String,
    releases: Vec<(u32, Vec<(String, u32)>)>,
    transformers: Vec<(String, u32, u32, String)>,
}

fn parse_manifest(text: &str) -> Result<Manifest, StoreError> {
    let mut m = Manifest {
        project: String::new(),
        releases: Vec::new(),
        transformers: Vec::new(),
    };
    let mut saw_project = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let err = |reason: &str| StoreError::Manifest {
            line: n,
            reason: reason.to_string(),
        };
        let num = |s: &str| s.parse::<u32>().ok().filter(|v| *v >= 1).ok_or_else(|| err("bad number"));
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[..] {
            [] => {}
            ["project", name] if !saw_project => {
                saw_project = true;
                m.project = name.to_string();
            }
            ["release", number] => m.releases.push((num(number)?, Vec::new())),
            ["class", name, "version", v] => {
                let (_, classes) = m.releases.last_mut().ok_or_else(|| err("class before release"))?;
                classes.push((name.to_string(), num(v)?));
            }
            ["transformer", class, from, to, dig] => {
                m.transformers
                    .push((class.to_string(), num(from)?, num(to)?, dig.to_string()));
            }
            _ => return Err(err(&format!("unrecognised line `{line}`"))),
        }
    }
    if !saw_project {
        return Err(StoreError::Manifest {
            line: 1,
            reason: "missing `project` line".into(),
        });
    }
    Ok(m)
}

pub fn render_manifest(stored: &Stored) -> String {
    let repo = &stored.repo;
    let mut out = format!("project {}\n", repo.project_name);
    for r in &repo.releases {
        let _ = writeln!(out, "release {}", r.number);
        for (name, s) in &r.schemas {
            let _ = writeln!(out, "class {name} version {}", s.version);
        }
    }
    for (class, h) in &repo.handlers {
        for (from, to) in h.keys() {
            let key = (class.clone(), *from, *to);
            let dig = stored
                .digests
                .get(&key)
                .cloned()
                .unwrap_or_else(|| digest(&render_transformer(&h[&(*from, *to)])));
            let _ = writeln!(out, "transformer {class} {from} {to} {dig}");
        }
    }
    out
}

pub fn load(root: &Path, registry: &ConverterRegistry) -> Result<Stored, StoreError> {
    let manifest_path = root.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest = parse_manifest(&text)?;
    let mut stored = Stored {
        repo: Repository::new(manifest.project),
        digests: BTreeMap::new(),
    };
    for (number, classes) in manifest.releases {
        let mut schemas = BTreeMap::new();
        for (class, version) in classes {
            let path = schema_path(root, number, &class);
            let src = fs::read_to_string(&path).map_err(io_err(&path))?;
            let schema = parse_schema(&src).map_err(|source| StoreError::Schema {
                path: path.clone(),
                source,
            })?;
            if schema.name != class || schema.version != version {
                return Err(StoreError::Inconsistent(format!(
                    "{} holds {} version {}, manifest says {class} version {version}",
                    path.display(),
                    schema.name,
                    schema.version
                )));
            }
            schemas.insert(class, schema);
        }
        stored.repo.releases.push(Release { number, schemas });
    }
    for (class, from, to, dig) in manifest.transformers {
        let path = handler_path(root, &class, from, to);
        let src = fs::read_to_string(&path).map_err(io_err(&path))?;
        let t = parse_transformer(&src, registry).map_err(|source| StoreError::Transformer {
            path: path.clone(),
            source,
        })?;
        if t.class_name != class || (t.from_version, t.to_version) != (from, to) {
            return Err(StoreError::Inconsistent(format!(
                "{} declares {} {} -> {}",
                path.display(),
                t.class_name,
                t.from_version,
                t.to_version
            )));
        }
        stored
            .repo
            .handlers
            .entry(class.clone())
            .or_default()
            .insert((from, to), t);
        stored.digests.insert((class, from, to), dig);
    }
    stored
        .repo
        .check_invariants()
        .map_err(StoreError::Inconsistent)?;
    Ok(stored)
}

/// How a handler file was treated by [`save`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandlerWrite {
    Written(String, u32, u32),
    /// An existing file the user edited (or wrote before it was registered)
    /// was left alone instead of being replaced by a generated stub.
    KeptUserFile(String, u32, u32),
}

/// Writes the repository. Handler entries listed in `force` (explicit
/// registrations) always replace their file; any other entry is written
/// only if its file is missing or still holds exactly what the tool last
/// generated.
pub fn save(
    root: &Path,
    previous: &Stored,
    repo: &Repository,
    force: &BTreeSet<(String, u32, u32)>,
) -> Result<(Stored, Vec<HandlerWrite>), StoreError> {
    let mut stored = Stored {
        repo: repo.clone(),
        digests: BTreeMap::new(),
    };
    let mut writes = Vec::new();
    for r in &repo.releases {
        for (class, s) in &r.schemas {
            let path = schema_path(root, r.number, class);
            write_if_changed(&path, &render_schema(s))?;
        }
    }
    for (class, h) in &repo.handlers {
        for ((from, to), t) in h {
            let key = (class.clone(), *from, *to);
            let path = handler_path(root, class, *from, *to);
            let text = render_transformer(t);
            let generated = digest(&text);
            let on_disk = match fs::read_to_string(&path) {
                Ok(s) => Some(s),
                Err(e) if e.kind() == io::ErrorKind::NotFound => None,
                Err(e) => return Err(io_err(&path)(e)),
            };
            let tool_owned = match (&on_disk, previous.digests.get(&key)) {
                (None, _) => true,
                (Some(existing), Some(recorded)) => digest(existing) == *recorded,
                (Some(_), None) => false,
            };
            if tool_owned || force.contains(&key) {
                write_if_changed(&path, &text)?;
                stored.digests.insert(key.clone(), generated);
                writes.push(HandlerWrite::Written(key.0, key.1, key.2));
            } else {
                let recorded = previous.digests.get(&key).cloned().unwrap_or(generated);
                stored.digests.insert(key.clone(), recorded);
                writes.push(HandlerWrite::KeptUserFile(key.0, key.1, key.2));
            }
        }
    }
    let manifest_path = root.join(MANIFEST);
    write_if_changed(&manifest_path, &render_manifest(&stored))?;
    Ok((stored, writes))
}

fn write_if_changed(path: &Path, text: &str) -> Result<(), StoreError> {
    if fs::read_to_string(path).ok().as_deref() == Some(text) {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}
