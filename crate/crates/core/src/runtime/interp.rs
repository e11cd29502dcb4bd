use std::collections::BTreeMap;

use super::{value_conforms, Field, ObjectRecord, RuntimeError};
use crate::converter::ConverterRegistry;
use crate::expr::{eval, EvalError, Scope};
use crate::schema::{ClassSchema, TypeExpr, BOOLEAN, INTEGER, REAL, STRING};
use crate::transformer::{Instr, ObjectTransformer};
use crate::value::ObjectValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterpretOptions {
    /// Run `require_attached` checks.
    pub check_attached: bool,
}

impl Default for InterpretOptions {
    fn default() -> Self {
        InterpretOptions {
            check_attached: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interpreted {
    pub record: ObjectRecord,
    pub warnings: Vec<String>,
}

/// Value an unassigned attribute receives.
pub fn default_value(ty: &TypeExpr) -> ObjectValue {
    match ty.primitive() {
        Some(INTEGER) => ObjectValue::Int(0),
        Some(REAL) => ObjectValue::Real(0.0),
        Some(BOOLEAN) => ObjectValue::Bool(false),
        Some(STRING) => ObjectValue::Str(String::new()),
        _ => ObjectValue::Void,
    }
}

struct MigrationScope<'a> {
    old: &'a ObjectRecord,
    inputs: &'a BTreeMap<String, ObjectValue>,
    registry: &'a ConverterRegistry,
}

impl Scope for MigrationScope<'_> {
    fn old_field(&self, name: &str) -> Result<ObjectValue, EvalError> {
        self.old
            .value(name)
            .cloned()
            .ok_or_else(|| EvalError::MissingAttribute(name.to_string()))
    }

    fn input(&self, name: &str) -> Result<ObjectValue, EvalError> {
        self.inputs
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::MissingInput(name.to_string()))
    }

    fn convert(&self, converter: &str, value: ObjectValue) -> Result<ObjectValue, EvalError> {
        let conv = self
            .registry
            .get(converter)
            .ok_or_else(|| EvalError::UnknownConverter(converter.to_string()))?;
        conv.apply(&value).map_err(|_| EvalError::Conversion {
            converter: converter.to_string(),
            value: value.to_string(),
        })
    }
}

/// Integer values widen into REAL fields; everything else must already fit.
fn store(value: ObjectValue, ty: &TypeExpr) -> Option<ObjectValue> {
    match (value, ty.primitive()) {
        (ObjectValue::Int(i), Some(REAL)) => Some(ObjectValue::Real(i as f64)),
        (v, _) if value_conforms(&v, ty) => Some(v),
        _ => None,
    }
}

/// Runs `t` over `old`, producing a record of the new version with exactly
/// the attributes of `new_schema`.
pub fn interpret_transformer(
    t: &ObjectTransformer,
    old: &ObjectRecord,
    inputs: &BTreeMap<String, ObjectValue>,
    registry: &ConverterRegistry,
    new_schema: &ClassSchema,
    options: InterpretOptions,
) -> Result<Interpreted, RuntimeError> {
    if old.class_name != t.class_name || new_schema.name != t.class_name {
        return Err(RuntimeError::RecordMismatch(format!(
            "transformer for {} applied to a {} with target schema {}",
            t.class_name, old.class_name, new_schema.name
        )));
    }
    if old.version != t.from_version || new_schema.version != t.to_version {
        return Err(RuntimeError::RecordMismatch(format!(
            "transformer {}->{} applied to version {} with target schema version {}",
            t.from_version, t.to_version, old.version, new_schema.version
        )));
    }
    if let Some(missing) = t.required_inputs().into_iter().find(|n| !inputs.contains_key(n)) {
        return Err(RuntimeError::MissingInput(missing));
    }

    let scope = MigrationScope {
        old,
        inputs,
        registry,
    };
    let mut assigned: BTreeMap<&str, ObjectValue> = BTreeMap::new();
    for (index, instr) in t.instructions.iter().enumerate() {
        let eval_err = |reason: String| RuntimeError::Evaluation { index, reason };
        match instr {
            Instr::Noop { .. } => {}
            Instr::CheckAttached { target } => {
                if options.check_attached
                    && assigned.get(target.as_str()).is_none_or(ObjectValue::is_void)
                {
                    return Err(RuntimeError::AttachmentViolation(target.clone()));
                }
            }
            assign => {
                let target = assign.assigned_target().expect("assignment");
                let attr = new_schema
                    .attribute(target)
                    .ok_or_else(|| eval_err(format!("no attribute {target} in target schema")))?;
                let expr = assign.source_expr().expect("assignment");
                let value = eval(&expr, &scope).map_err(|e| match e {
                    EvalError::MissingInput(n) => RuntimeError::MissingInput(n),
                    EvalError::Conversion { converter, value } => {
                        RuntimeError::ConversionFailure { converter, value }
                    }
                    other => eval_err(other.to_string()),
                })?;
                let kind = value.kind();
                let value = store(value, &attr.ty)
                    .ok_or_else(|| eval_err(format!("{kind} value for {target}: {}", attr.ty)))?;
                assigned.insert(target, value);
            }
        }
    }

    let mut warnings = Vec::new();
    let fields = new_schema
        .attributes
        .iter()
        .map(|a| {
            let value = assigned.remove(a.name.as_str()).unwrap_or_else(|| {
                let d = default_value(&a.ty);
                warnings.push(format!(
                    "{} object {}: attribute {} not assigned, defaulted to {d}",
                    t.class_name, old.id, a.name
                ));
                d
            });
            Field::new(a.name.clone(), a.ty.clone(), value)
        })
        .collect();
    Ok(Interpreted {
        record: ObjectRecord {
            id: old.id,
            class_name: old.class_name.clone(),
            version: t.to_version,
            fields,
        },
        warnings,
    })
}
