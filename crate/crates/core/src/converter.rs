//! Value converters between attribute types and the assignability relation
//! used when generating transformers.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::schema::{type_equal, Attachment, NormType, TypeExpr, INTEGER, REAL, STRING};
use crate::value::{format_real, ObjectValue};

pub type ConvertFn = Arc<dyn Fn(&ObjectValue) -> Result<ObjectValue, String> + Send + Sync>;

#[derive(Clone)]
pub struct Converter {
    pub id: String,
    pub source: TypeExpr,
    pub target: TypeExpr,
    func: ConvertFn,
}

impl Converter {
    pub fn apply(&self, value: &ObjectValue) -> Result<ObjectValue, String> {
        (self.func)(value)
    }
}

impl fmt::Debug for Converter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Converter({}: {} -> {})", self.id, self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("DuplicateConverterId {0}")]
    DuplicateId(String),
    #[error("DuplicateConversion {source_type} -> {target_type}")]
    DuplicateConversion {
        source_type: String,
        target_type: String,
    },
}

/// Registered converters, keyed both by id and by (source, target) type
/// pair. Attachment markers are ignored for the type key.
#[derive(Debug, Clone, Default)]
pub struct ConverterRegistry {
    by_id: BTreeMap<String, Converter>,
    by_types: BTreeMap<(NormType, NormType), String>,
}

fn type_key(t: &TypeExpr) -> NormType {
    t.unmarked().normalized().1
}

impl ConverterRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the primitive converters.
    pub fn builtins() -> Self {
        let mut reg = Self::empty();
        let int = || TypeExpr::class(INTEGER);
        let real = || TypeExpr::class(REAL);
        let string = || TypeExpr::class(STRING);
        reg.register("STRING_TO_INTEGER", string(), int(), |v| match v {
            ObjectValue::Str(s) => s
                .parse::<i64>()
                .map(ObjectValue::Int)
                .map_err(|_| format!("{} is not a decimal integer", v)),
            other => Err(format!("expected STRING, got {}", other.kind())),
        })
        .expect("fresh registry");
        reg.register("INTEGER_TO_STRING", int(), string(), |v| match v {
            ObjectValue::Int(i) => Ok(ObjectValue::Str(i.to_string())),
            other => Err(format!("expected INTEGER, got {}", other.kind())),
        })
        .expect("fresh registry");
        reg.register("INTEGER_TO_REAL", int(), real(), |v| match v {
            ObjectValue::Int(i) => Ok(ObjectValue::Real(*i as f64)),
            other => Err(format!("expected INTEGER, got {}", other.kind())),
        })
        .expect("fresh registry");
        reg.register("REAL_TO_INTEGER", real(), int(), |v| match v {
            ObjectValue::Real(r) => {
                let t = r.trunc();
                // i64::MAX as f64 rounds up to 2^63, which is out of range.
                if t >= -(2f64.powi(63)) && t < 2f64.powi(63) {
                    Ok(ObjectValue::Int(t as i64))
                } else {
                    Err(format!("{} is out of INTEGER range", format_real(*r)))
                }
            }
            ObjectValue::Int(i) => Ok(ObjectValue::Int(*i)),
            other => Err(format!("expected REAL, got {}", other.kind())),
        })
        .expect("fresh registry");
        reg.register("STRING_TO_REAL", string(), real(), |v| match v {
            ObjectValue::Str(s) => match s.parse::<f64>() {
                Ok(r) if r.is_finite() => Ok(ObjectValue::Real(r)),
                _ => Err(format!("{} is not a decimal real", v)),
            },
            other => Err(format!("expected STRING, got {}", other.kind())),
        })
        .expect("fresh registry");
        reg.register("REAL_TO_STRING", real(), string(), |v| match v {
            ObjectValue::Real(r) => Ok(ObjectValue::Str(format_real(*r))),
            ObjectValue::Int(i) => Ok(ObjectValue::Str(format_real(*i as f64))),
            other => Err(format!("expected REAL, got {}", other.kind())),
        })
        .expect("fresh registry");
        reg
    }

    pub fn register<F>(
        &mut self,
        id: impl Into<String>,
        source: TypeExpr,
        target: TypeExpr,
        func: F,
    ) -> Result<(), RegistryError>
    where
        F: Fn(&ObjectValue) -> Result<ObjectValue, String> + Send + Sync + 'static,
    {
        let id = id.into();
        if self.by_id.contains_key(&id) {
            return Err(RegistryError::DuplicateId(id));
        }
        let key = (type_key(&source), type_key(&target));
        if self.by_types.contains_key(&key) {
            return Err(RegistryError::DuplicateConversion {
                source_type: source.to_string(),
                target_type: target.to_string(),
            });
        }
        self.by_types.insert(key, id.clone());
        self.by_id.insert(
            id.clone(),
            Converter {
                id,
                source,
                target,
                func: Arc::new(func),
            },
        );
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Converter> {
        self.by_id.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn lookup(&self, source: &TypeExpr, target: &TypeExpr) -> Option<&Converter> {
        self.by_types
            .get(&(type_key(source), type_key(target)))
            .and_then(|id| self.by_id.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.by_id.keys().map(String::as_str)
    }
}

/// Whether a value of type `from` can be stored in a field of type `to`
/// without conversion: equal types, attached into detachable of the same
/// type, or INTEGER widened to REAL.
pub fn assignable(from: &TypeExpr, to: &TypeExpr) -> bool {
    if type_equal(from, to) {
        return true;
    }
    let attachment_ok =
        from.attachment() == Attachment::Attached || to.attachment() == Attachment::Detachable;
    if !attachment_ok {
        return false;
    }
    if type_equal(from.unmarked(), to.unmarked()) {
        return true;
    }
    matches!((from.primitive(), to.primitive()), (Some(INTEGER), Some(REAL)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(name: &str) -> TypeExpr {
        TypeExpr::class(name)
    }

    #[test]
    fn assignability_table() {
        assert!(assignable(&t("INTEGER"), &t("INTEGER")));
        assert!(assignable(
            &TypeExpr::attached(t("STRING")),
            &TypeExpr::detachable(t("STRING"))
        ));
        assert!(!assignable(
            &TypeExpr::detachable(t("STRING")),
            &TypeExpr::attached(t("STRING"))
        ));
        assert!(assignable(&t("INTEGER"), &t("REAL")));
        assert!(!assignable(&t("REAL"), &t("INTEGER")));
        assert!(!assignable(&t("STRING"), &t("INTEGER")));
    }

    #[test]
    fn builtin_lookup_and_conversions() {
        let reg = ConverterRegistry::builtins();
        let c = reg.lookup(&t("STRING"), &t("INTEGER")).unwrap();
        assert_eq!(c.id, "STRING_TO_INTEGER");
        assert_eq!(c.apply(&ObjectValue::Str("42".into())), Ok(ObjectValue::Int(42)));
        assert!(c.apply(&ObjectValue::Str("abc".into())).is_err());
        assert!(c.apply(&ObjectValue::Void).is_err());
        let r2i = reg.get("REAL_TO_INTEGER").unwrap();
        assert_eq!(r2i.apply(&ObjectValue::Real(-2.9)), Ok(ObjectValue::Int(-2)));
        assert!(r2i.apply(&ObjectValue::Real(1e300)).is_err());
        assert!(reg
            .lookup(
                &TypeExpr::attached(t("STRING")),
                &TypeExpr::detachable(t("INTEGER"))
            )
            .is_some());
        assert!(reg.lookup(&t("BOOLEAN"), &t("INTEGER")).is_none());
    }

    #[test]
    fn duplicates_rejected() {
        let mut reg = ConverterRegistry::builtins();
        assert_eq!(
            reg.register("X", t("STRING"), t("INTEGER"), |v| Ok(v.clone())),
            Err(RegistryError::DuplicateConversion {
                source_type: "STRING".into(),
                target_type: "INTEGER".into()
            })
        );
        assert!(reg
            .register("INTEGER_TO_STRING", t("A"), t("B"), |v| Ok(v.clone()))
            .is_err());
        reg.register("A_TO_B", t("A"), t("B"), |v| Ok(v.clone())).unwrap();
        assert_eq!(reg.lookup(&t("A"), &t("B")).unwrap().id, "A_TO_B");
    }
}
