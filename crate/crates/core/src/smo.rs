//! Schema modification operators (SMOs) and class transformations.
//!
//! Each SMO is an atomic change to one attribute. A class transformation is
//! an ordered list of SMOs applied left to right. [`diff_schemas`] infers a
//! transformation between two versions of a class by comparing their
//! attribute lists.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::schema::{type_equal, Attachment, Attribute, ClassSchema, NormType, TypeExpr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Smo {
    NoChange(Attribute),
    Added(Attribute),
    Renamed {
        old_name: String,
        new_name: String,
        ty: TypeExpr,
        /// Inferred from a unique type match rather than declared.
        candidate: bool,
    },
    TypeChanged {
        name: String,
        old_type: TypeExpr,
        new_type: TypeExpr,
    },
    Removed {
        name: String,
        old_type: TypeExpr,
    },
    AttachAdded {
        name: String,
        inner_type: TypeExpr,
    },
}

impl Smo {
    /// Attribute name this SMO targets in the resulting schema, if any.
    pub fn target_name(&self) -> Option<&str> {
        match self {
            Smo::NoChange(a) | Smo::Added(a) => Some(&a.name),
            Smo::Renamed { new_name, .. } => Some(new_name),
            Smo::TypeChanged { name, .. } | Smo::AttachAdded { name, .. } => Some(name),
            Smo::Removed { .. } => None,
        }
    }
}

/// One line of the diff report, without the leading `smo ` keyword.
impl fmt::Display for Smo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smo::NoChange(a) => write!(f, "no_change {} {}", a.name, a.ty),
            Smo::Added(a) => write!(f, "added {} {}", a.name, a.ty),
            Smo::Renamed {
                old_name,
                new_name,
                ty,
                candidate,
            } => {
                write!(f, "renamed {old_name} -> {new_name} {ty}")?;
                if *candidate {
                    f.write_str(" candidate")?;
                }
                Ok(())
            }
            Smo::TypeChanged {
                name,
                old_type,
                new_type,
            } => write!(f, "type_changed {name} {old_type} -> {new_type}"),
            Smo::Removed { name, old_type } => write!(f, "removed {name} {old_type}"),
            Smo::AttachAdded { name, inner_type } => write!(f, "attach_added {name} {inner_type}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmoError {
    #[error("PremiseViolated {smo}: {reason}")]
    PremiseViolated { smo: String, reason: String },
    #[error("InvariantDanglesAfterRemoval {0}")]
    InvariantDanglesAfterRemoval(String),
    #[error("MismatchedClassIdentity {old} {new}")]
    MismatchedClassIdentity { old: String, new: String },
    #[error("{source} (at SMO {index})")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<SmoError>,
    },
}

impl SmoError {
    /// The error without any positional wrapper.
    pub fn root(&self) -> &SmoError {
        match self {
            SmoError::AtIndex { source, .. } => source.root(),
            e => e,
        }
    }
}

/// What to do with invariant clauses that mention an attribute which no
/// longer exists after a removal or rename.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DanglingPolicy {
    #[default]
    Error,
    DropWithWarning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub schema: ClassSchema,
    pub warnings: Vec<String>,
}

fn premise(smo: &Smo, reason: impl Into<String>) -> SmoError {
    SmoError::PremiseViolated {
        smo: smo.to_string(),
        reason: reason.into(),
    }
}

fn existing(
    schema: &ClassSchema,
    smo: &Smo,
    name: &str,
    ty: &TypeExpr,
) -> Result<usize, SmoError> {
    let idx = schema
        .attribute_index(name)
        .ok_or_else(|| premise(smo, format!("no attribute `{name}`")))?;
    let actual = &schema.attributes[idx].ty;
    if !type_equal(actual, ty) {
        return Err(premise(
            smo,
            format!("attribute `{name}` has type {actual}, not {ty}"),
        ));
    }
    Ok(idx)
}

fn absent(schema: &ClassSchema, smo: &Smo, name: &str) -> Result<(), SmoError> {
    if schema.attribute(name).is_some() || schema.generic_params.iter().any(|g| g == name) {
        Err(premise(smo, format!("name `{name}` already in use")))
    } else {
        Ok(())
    }
}

fn handle_dangling(
    schema: &mut ClassSchema,
    vanished: &str,
    policy: DanglingPolicy,
    warnings: &mut Vec<String>,
) -> Result<(), SmoError> {
    let dangling: Vec<String> = schema
        .invariant
        .clauses_referencing(vanished)
        .map(|c| c.tag.clone())
        .collect();
    if dangling.is_empty() {
        return Ok(());
    }
    match policy {
        DanglingPolicy::Error => Err(SmoError::InvariantDanglesAfterRemoval(vanished.to_string())),
        DanglingPolicy::DropWithWarning => {
            schema.invariant.clauses.retain(|c| !dangling.contains(&c.tag));
            for tag in dangling {
                warnings.push(format!(
                    "dropped invariant clause {tag} referencing vanished attribute {vanished}"
                ));
            }
            Ok(())
        }
    }
}

/// Applies one SMO. Name, generics, invariant and version are carried over;
/// invariant clauses left dangling by a removal or rename are handled per
/// `policy`.
pub fn apply_smo(
    schema: &ClassSchema,
    smo: &Smo,
    policy: DanglingPolicy,
) -> Result<Applied, SmoError> {
    let mut out = schema.clone();
    let mut warnings = Vec::new();
    match smo {
        Smo::NoChange(a) => {
            existing(schema, smo, &a.name, &a.ty)?;
        }
        Smo::Added(a) => {
            absent(schema, smo, &a.name)?;
            out.attributes.push(a.clone());
        }
        Smo::Renamed {
            old_name,
            new_name,
            ty,
            ..
        } => {
            if old_name == new_name {
                return Err(premise(smo, "rename to the same name"));
            }
            let idx = existing(schema, smo, old_name, ty)?;
            absent(schema, smo, new_name)?;
            out.attributes[idx].name = new_name.clone();
            handle_dangling(&mut out, old_name, policy, &mut warnings)?;
        }
        Smo::TypeChanged {
            name,
            old_type,
            new_type,
        } => {
            if type_equal(old_type, new_type) {
                return Err(premise(smo, "old and new types are equal"));
            }
            let idx = existing(schema, smo, name, old_type)?;
            out.attributes[idx].ty = new_type.clone();
        }
        Smo::Removed { name, old_type } => {
            let idx = existing(schema, smo, name, old_type)?;
            out.attributes.remove(idx);
            handle_dangling(&mut out, name, policy, &mut warnings)?;
        }
        Smo::AttachAdded { name, inner_type } => {
            let idx = existing(schema, smo, name, inner_type)?;
            if schema.attributes[idx].ty.attachment() == Attachment::Attached {
                return Err(premise(smo, format!("`{name}` is already attached")));
            }
            out.attributes[idx].ty = TypeExpr::attached(inner_type.unmarked().clone());
        }
    }
    Ok(Applied {
        schema: out,
        warnings,
    })
}

/// Left-to-right fold of [`apply_smo`]; errors carry the failing index.
pub fn apply_transformation(
    schema: &ClassSchema,
    smos: &[Smo],
    policy: DanglingPolicy,
) -> Result<Applied, SmoError> {
    let mut acc = Applied {
        schema: schema.clone(),
        warnings: Vec::new(),
    };
    for (index, smo) in smos.iter().enumerate() {
        let step = apply_smo(&acc.schema, smo, policy).map_err(|e| SmoError::AtIndex {
            index,
            source: Box::new(e),
        })?;
        acc.schema = step.schema;
        acc.warnings.extend(step.warnings);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTransformation {
    pub source: ClassSchema,
    pub target: ClassSchema,
    pub smos: Vec<Smo>,
    /// Informational remarks that do not affect migration.
    pub notes: Vec<String>,
}

impl ClassTransformation {
    /// Whether applying the SMOs to `source` reproduces `target`'s attribute
    /// set (order-insensitive, types compared with `type_equal`).
    pub fn is_sound(&self) -> bool {
        apply_transformation(&self.source, &self.smos, DanglingPolicy::DropWithWarning)
            .map(|a| a.schema.attribute_set() == self.target.attribute_set())
            .unwrap_or(false)
    }

    /// The line-oriented report: one `smo ...` line per SMO, then one
    /// `note ...` line per note.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for smo in &self.smos {
            out.push_str("smo ");
            out.push_str(&smo.to_string());
            out.push('\n');
        }
        for note in &self.notes {
            out.push_str("note ");
            out.push_str(note);
            out.push('\n');
        }
        out
    }
}

fn check_identity(old: &ClassSchema, new: &ClassSchema) -> Result<(), SmoError> {
    if old.name != new.name || old.generic_params != new.generic_params {
        let show = |s: &ClassSchema| {
            if s.generic_params.is_empty() {
                s.name.clone()
            } else {
                format!("{}[{}]", s.name, s.generic_params.join(","))
            }
        };
        return Err(SmoError::MismatchedClassIdentity {
            old: show(old),
            new: show(new),
        });
    }
    Ok(())
}

/// Infers the SMOs turning `old` into `new`.
///
/// Attributes matched by name become `NoChange`, `AttachAdded` (pure
/// strengthening to `attached`) or `TypeChanged`. Unmatched attributes are
/// paired into a rename candidate only when exactly one removed and exactly
/// one added attribute share a type; everything else is a removal or an
/// addition. Output order: no-change, type/attachment changes, renames,
/// removals (old order), additions (new order).
pub fn diff_schemas(old: &ClassSchema, new: &ClassSchema) -> Result<ClassTransformation, SmoError> {
    check_identity(old, new)?;
    let mut unchanged = Vec::new();
    let mut changed = Vec::new();
    let mut notes = Vec::new();
    for a in &new.attributes {
        let Some(prev) = old.attribute(&a.name) else {
            continue;
        };
        if type_equal(&prev.ty, &a.ty) {
            unchanged.push(Smo::NoChange(a.clone()));
            continue;
        }
        let same_inner = type_equal(prev.ty.unmarked(), a.ty.unmarked());
        match (prev.ty.attachment(), a.ty.attachment()) {
            (Attachment::Detachable, Attachment::Attached) if same_inner => {
                changed.push(Smo::AttachAdded {
                    name: a.name.clone(),
                    inner_type: prev.ty.unmarked().clone(),
                });
            }
            (old_att, new_att) => {
                if same_inner && old_att == Attachment::Attached && new_att == Attachment::Detachable
                {
                    notes.push(format!("attachment_relaxed {}", a.name));
                }
                changed.push(Smo::TypeChanged {
                    name: a.name.clone(),
                    old_type: prev.ty.clone(),
                    new_type: a.ty.clone(),
                });
            }
        }
    }

    let removed: Vec<&Attribute> = old
        .attributes
        .iter()
        .filter(|a| new.attribute(&a.name).is_none())
        .collect();
    let added: Vec<&Attribute> = new
        .attributes
        .iter()
        .filter(|a| old.attribute(&a.name).is_none())
        .collect();

    let mut removed_by_type: BTreeMap<(Attachment, NormType), Vec<&Attribute>> = BTreeMap::new();
    for a in &removed {
        removed_by_type.entry(a.ty.normalized()).or_default().push(a);
    }
    let mut added_by_type: BTreeMap<(Attachment, NormType), Vec<&Attribute>> = BTreeMap::new();
    for a in &added {
        added_by_type.entry(a.ty.normalized()).or_default().push(a);
    }

    let mut renamed = Vec::new();
    let mut renamed_old = Vec::new();
    let mut renamed_new = Vec::new();
    for r in &removed {
        let key = r.ty.normalized();
        let (Some(rs), Some(ads)) = (removed_by_type.get(&key), added_by_type.get(&key)) else {
            continue;
        };
        if rs.len() == 1 && ads.len() == 1 {
            renamed.push(Smo::Renamed {
                old_name: r.name.clone(),
                new_name: ads[0].name.clone(),
                ty: r.ty.clone(),
                candidate: true,
            });
            renamed_old.push(r.name.as_str());
            renamed_new.push(ads[0].name.as_str());
        }
    }

    let mut smos = unchanged;
    smos.extend(changed);
    smos.extend(renamed);
    smos.extend(
        removed
            .iter()
            .filter(|a| !renamed_old.contains(&a.name.as_str()))
            .map(|a| Smo::Removed {
                name: a.name.clone(),
                old_type: a.ty.clone(),
            }),
    );
    smos.extend(
        added
            .iter()
            .filter(|a| !renamed_new.contains(&a.name.as_str()))
            .map(|a| Smo::Added((*a).clone())),
    );
    Ok(ClassTransformation {
        source: old.clone(),
        target: new.clone(),
        smos,
        notes,
    })
}

/// Canonical witness that any attribute change is expressible: remove every
/// old attribute, then add every new one.
pub fn completeness_witness(
    old: &ClassSchema,
    new: &ClassSchema,
) -> Result<ClassTransformation, SmoError> {
    check_identity(old, new)?;
    let smos = old
        .attributes
        .iter()
        .map(|a| Smo::Removed {
            name: a.name.clone(),
            old_type: a.ty.clone(),
        })
        .chain(new.attributes.iter().cloned().map(Smo::Added))
        .collect();
    Ok(ClassTransformation {
        source: old.clone(),
        target: new.clone(),
        smos,
        notes: Vec::new(),
    })
}
