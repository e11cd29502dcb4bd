//! Releases, per-class version histories and registered transformers.
//!
//! [`Repository`] is the in-memory model; [`store`] maps it onto a project
//! directory.

pub mod store;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::converter::ConverterRegistry;
use crate::schema::ClassSchema;
use crate::smo::diff_schemas;
use crate::transformer::{generate_transformer, ObjectTransformer, TransformerError};

#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    pub number: u32,
    pub schemas: BTreeMap<String, ClassSchema>,
}

pub type Handler = BTreeMap<(u32, u32), ObjectTransformer>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Repository {
    pub project_name: String,
    pub releases: Vec<Release>,
    pub handlers: BTreeMap<String, Handler>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReleaseError {
    #[error("VersionTagTamper {class} {found} (expected {expected})")]
    VersionTagTamper {
        class: String,
        found: u32,
        expected: String,
    },
    #[error("UnknownVersion {0} {1}")]
    UnknownVersion(String, u32),
    #[error("OverwriteRefused {0} {1} {2}")]
    OverwriteRefused(String, u32, u32),
    #[error("InvalidTransformer {0}")]
    InvalidTransformer(#[from] TransformerError),
    #[error("InvalidSchema {class}: {reason}")]
    InvalidSchema { class: String, reason: String },
    #[error("UnknownClass {0}")]
    UnknownClass(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassChange {
    Unchanged { class: String, version: u32 },
    Changed { class: String, from: u32, to: u32 },
    Added { class: String },
    Dropped { class: String, version: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseOutcome {
    pub repo: Repository,
    /// `None` when nothing changed and no release was made.
    pub release_number: Option<u32>,
    pub changes: Vec<ClassChange>,
    /// `(class, from, to)` of each stub transformer generated.
    pub stubs: Vec<(String, u32, u32)>,
}

impl ReleaseOutcome {
    pub fn is_noop(&self) -> bool {
        self.release_number.is_none()
    }
}

impl Repository {
    pub fn new(project_name: impl Into<String>) -> Self {
        Repository {
            project_name: project_name.into(),
            ..Default::default()
        }
    }

    pub fn latest_release(&self) -> Option<&Release> {
        self.releases.last()
    }

    pub fn release(&self, number: u32) -> Option<&Release> {
        self.releases.iter().find(|r| r.number == number)
    }

    /// Most recently released schema of a class.
    pub fn latest_schema(&self, class: &str) -> Option<&ClassSchema> {
        self.releases.iter().rev().find_map(|r| r.schemas.get(class))
    }

    pub fn schema(&self, class: &str, version: u32) -> Option<&ClassSchema> {
        self.releases
            .iter()
            .filter_map(|r| r.schemas.get(class))
            .find(|s| s.version == version)
    }

    /// Distinct version tags a class has had, ascending.
    pub fn versions(&self, class: &str) -> BTreeSet<u32> {
        self.releases
            .iter()
            .filter_map(|r| r.schemas.get(class))
            .map(|s| s.version)
            .collect()
    }

    pub fn classes(&self) -> BTreeSet<&str> {
        self.releases
            .iter()
            .flat_map(|r| r.schemas.keys().map(String::as_str))
            .collect()
    }

    pub fn handler(&self, class: &str) -> Option<&Handler> {
        self.handlers.get(class)
    }

    pub fn transformer(&self, class: &str, from: u32, to: u32) -> Option<&ObjectTransformer> {
        self.handlers.get(class).and_then(|h| h.get(&(from, to)))
    }

    /// Checks release numbering, monotone version tags and handler
    /// versions.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, r) in self.releases.iter().enumerate() {
            if r.number != i as u32 + 1 {
                return Err(format!("release {} at position {}", r.number, i + 1));
            }
            for (name, s) in &r.schemas {
                if *name != s.name {
                    return Err(format!("release {} files {} under {name}", r.number, s.name));
                }
            }
        }
        for class in self.classes() {
            let mut last: Option<&ClassSchema> = None;
            for s in self.releases.iter().filter_map(|r| r.schemas.get(class)) {
                if let Some(prev) = last {
                    let ok = if prev.same_content(s) {
                        s.version == prev.version
                    } else {
                        s.version == prev.version + 1
                    };
                    if !ok {
                        return Err(format!(
                            "{class} goes from version {} to {}",
                            prev.version, s.version
                        ));
                    }
                }
                last = Some(s);
            }
        }
        for (class, h) in &self.handlers {
            let versions = self.versions(class);
            for (from, to) in h.keys() {
                if !versions.contains(from) || !versions.contains(to) {
                    return Err(format!("handler {class} {from}->{to} names unknown versions"));
                }
            }
        }
        Ok(())
    }
}

/// Releases a working set: bumps the tag of every class whose attributes,
/// invariant or generic parameters changed, tags new classes 1, and, when
/// anything changed, appends a release and generates forward stub
/// transformers for changed classes (never replacing registered ones).
pub fn release(
    repo: &Repository,
    working_set: &BTreeMap<String, ClassSchema>,
    registry: &ConverterRegistry,
) -> Result<ReleaseOutcome, ReleaseError> {
    let mut schemas = BTreeMap::new();
    let mut changes = Vec::new();
    let mut any_change = false;
    for (name, schema) in working_set {
        if *name != schema.name {
            return Err(ReleaseError::InvalidSchema {
                class: name.clone(),
                reason: format!("working set entry holds class {}", schema.name),
            });
        }
        schema.validate().map_err(|e| ReleaseError::InvalidSchema {
            class: name.clone(),
            reason: e.to_string(),
        })?;
        let mut released = schema.clone();
        match repo.latest_schema(name) {
            None => {
                if schema.version != 1 {
                    return Err(ReleaseError::VersionTagTamper {
                        class: name.clone(),
                        found: schema.version,
                        expected: "1".into(),
                    });
                }
                any_change = true;
                changes.push(ClassChange::Added {
                    class: name.clone(),
                });
            }
            Some(prev) if prev.same_content(schema) => {
                if schema.version != prev.version {
                    return Err(ReleaseError::VersionTagTamper {
                        class: name.clone(),
                        found: schema.version,
                        expected: prev.version.to_string(),
                    });
                }
                changes.push(ClassChange::Unchanged {
                    class: name.clone(),
                    version: prev.version,
                });
            }
            Some(prev) => {
                let next = prev.version + 1;
                if schema.version != prev.version && schema.version != next {
                    return Err(ReleaseError::VersionTagTamper {
                        class: name.clone(),
                        found: schema.version,
                        expected: format!("{} or {next}", prev.version),
                    });
                }
                released.version = next;
                any_change = true;
                changes.push(ClassChange::Changed {
                    class: name.clone(),
                    from: prev.version,
                    to: next,
                });
            }
        }
        schemas.insert(name.clone(), released);
    }
    if let Some(latest) = repo.latest_release() {
        for (name, s) in &latest.schemas {
            if !working_set.contains_key(name) {
                any_change = true;
                changes.push(ClassChange::Dropped {
                    class: name.clone(),
                    version: s.version,
                });
            }
        }
    }
    if !any_change {
        return Ok(ReleaseOutcome {
            repo: repo.clone(),
            release_number: None,
            changes,
            stubs: Vec::new(),
        });
    }

    let mut next = repo.clone();
    let mut stubs = Vec::new();
    for change in &changes {
        let ClassChange::Changed { class, from, to } = change else {
            continue;
        };
        let handler = next.handlers.entry(class.clone()).or_default();
        if handler.contains_key(&(*from, *to)) {
            continue;
        }
        let old = repo.schema(class, *from).expect("released version");
        let transformation = diff_schemas(old, &schemas[class]).expect("same class identity");
        handler.insert((*from, *to), generate_transformer(&transformation, registry));
        stubs.push((class.clone(), *from, *to));
    }
    let number = repo.releases.len() as u32 + 1;
    next.releases.push(Release { number, schemas });
    Ok(ReleaseOutcome {
        repo: next,
        release_number: Some(number),
        changes,
        stubs,
    })
}

/// Adds a transformer to its class's handler. Replacing an existing
/// `(from, to)` entry requires `overwrite`.
pub fn register_transformer(
    repo: &Repository,
    t: ObjectTransformer,
    overwrite: bool,
) -> Result<Repository, ReleaseError> {
    t.validate()?;
    let versions = repo.versions(&t.class_name);
    for v in [t.from_version, t.to_version] {
        if !versions.contains(&v) {
            return Err(ReleaseError::UnknownVersion(t.class_name.clone(), v));
        }
    }
    let key = (t.from_version, t.to_version);
    if !overwrite && repo.transformer(&t.class_name, key.0, key.1).is_some() {
        return Err(ReleaseError::OverwriteRefused(t.class_name.clone(), key.0, key.1));
    }
    let mut next = repo.clone();
    next.handlers
        .entry(t.class_name.clone())
        .or_default()
        .insert(key, t);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("InvariantNeedsFilteredAttribute {tag} {name}")]
    InvariantNeedsFilteredAttribute { tag: String, name: String },
    #[error("UnknownAttribute {0}")]
    UnknownAttribute(String),
}

/// Restricts a schema to the attributes chosen for the serialized form.
pub fn apply_filter(
    schema: &ClassSchema,
    keep: &BTreeSet<String>,
) -> Result<ClassSchema, FilterError> {
    if let Some(unknown) = keep.iter().find(|k| schema.attribute(k).is_none()) {
        return Err(FilterError::UnknownAttribute(unknown.clone()));
    }
    for clause in &schema.invariant.clauses {
        if let Some(name) = clause
            .body
            .attribute_refs()
            .into_iter()
            .find(|n| !keep.contains(*n))
        {
            return Err(FilterError::InvariantNeedsFilteredAttribute {
                tag: clause.tag.clone(),
                name: name.to_string(),
            });
        }
    }
    let mut out = schema.clone();
    out.attributes.retain(|a| keep.contains(&a.name));
    Ok(out)
}
