use std::fmt::Write as _;

use super::RuntimeError;
use crate::schema::{parse_type_str, TypeExpr, BOOLEAN, INTEGER, REAL, STRING};
use crate::value::{parse_value, ObjectValue};

const HEADER: &str = "ESCHER-OBJECTS 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub ty: TypeExpr,
    pub value: ObjectValue,
}

impl Field {
    pub fn new(name: impl Into<String>, ty: TypeExpr, value: ObjectValue) -> Self {
        Field {
            name: name.into(),
            ty,
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub id: usize,
    pub class_name: String,
    pub version: u32,
    pub fields: Vec<Field>,
}

impl ObjectRecord {
    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn value(&self, name: &str) -> Option<&ObjectValue> {
        self.field(name).map(|f| &f.value)
    }
}

/// Flat table of records; record `i` has id `i` and record 0 is the root.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectGraph {
    pub records: Vec<ObjectRecord>,
}

impl ObjectGraph {
    pub fn new(records: Vec<ObjectRecord>) -> Result<Self, RuntimeError> {
        let g = ObjectGraph { records };
        g.validate()?;
        Ok(g)
    }

    pub fn root(&self) -> Option<&ObjectRecord> {
        self.records.first()
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        for (i, r) in self.records.iter().enumerate() {
            if r.id != i {
                return Err(RuntimeError::Format {
                    line: 0,
                    reason: format!("record {i} carries id {}", r.id),
                });
            }
            for (k, f) in r.fields.iter().enumerate() {
                if r.fields[..k].iter().any(|g| g.name == f.name) {
                    return Err(RuntimeError::Format {
                        line: 0,
                        reason: format!("duplicate field {} in object {i}", f.name),
                    });
                }
            }
        }
        for r in &self.records {
            for f in &r.fields {
                if let ObjectValue::Ref(id) = f.value {
                    if id >= self.records.len() {
                        return Err(RuntimeError::DanglingReference(id));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every `(from, field, to)` reference edge.
    pub fn references(&self) -> Vec<(usize, String, usize)> {
        let mut out = Vec::new();
        for r in &self.records {
            for f in &r.fields {
                if let ObjectValue::Ref(to) = f.value {
                    out.push((r.id, f.name.clone(), to));
                }
            }
        }
        out
    }
}

/// Whether `value` is a legal stored value for a field declared `ty`.
/// Generic parameter types accept anything; object types accept references
/// and `Void`.
pub fn value_conforms(value: &ObjectValue, ty: &TypeExpr) -> bool {
    use ObjectValue as V;
    if matches!(ty.unmarked(), TypeExpr::Generic(_)) {
        return true;
    }
    match (ty.primitive(), value) {
        (Some(INTEGER), V::Int(_)) => true,
        (Some(REAL), V::Real(_)) => true,
        (Some(BOOLEAN), V::Bool(_)) => true,
        (Some(STRING), V::Str(_) | V::Void) => true,
        (Some(_), _) => false,
        (None, V::Ref(_) | V::Void) => true,
        (None, _) => false,
    }
}

pub fn serialize(graph: &ObjectGraph) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in &graph.records {
        let _ = writeln!(out, "obj {} {} version {}", r.id, r.class_name, r.version);
        for f in &r.fields {
            let _ = writeln!(out, "  {}: {} = {}", f.name, f.ty, f.value);
        }
        out.push_str("end\n");
    }
    out
}

fn format_err(line: usize, reason: impl Into<String>) -> RuntimeError {
    RuntimeError::Format {
        line,
        reason: reason.into(),
    }
}

pub fn deserialize(text: &str) -> Result<ObjectGraph, RuntimeError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with("--"));
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, other)) => return Err(format_err(n, format!("expected `{HEADER}`, found `{other}`"))),
        None => return Err(format_err(1, format!("expected `{HEADER}`"))),
    }
    let mut records: Vec<ObjectRecord> = Vec::new();
    let mut current: Option<ObjectRecord> = None;
    for (n, line) in lines {
        if let Some(rec) = current.as_mut() {
            if line == "end" {
                records.push(current.take().expect("open record"));
                continue;
            }
            let (name, rest) = line
                .split_once(':')
                .ok_or_else(|| format_err(n, "expected `name: TYPE = value` or `end`"))?;
            let name = name.trim();
            if !crate::lexer::is_identifier(name) {
                return Err(format_err(n, format!("bad field name `{name}`")));
            }
            let (ty_text, value_text) = rest
                .split_once('=')
                .ok_or_else(|| format_err(n, "missing `=`"))?;
            let ty = parse_type_str(ty_text, &[]).map_err(|e| format_err(n, e.to_string()))?;
            let value = parse_value(value_text).map_err(|e| format_err(n, e))?;
            if !value_conforms(&value, &ty) {
                return Err(format_err(
                    n,
                    format!("{} value for field {name} of type {ty}", value.kind()),
                ));
            }
            if rec.field(name).is_some() {
                return Err(format_err(n, format!("duplicate field {name}")));
            }
            rec.fields.push(Field::new(name, ty, value));
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [kw, id, class_name, version_kw, version] = parts[..] else {
            return Err(format_err(n, "expected `obj <id> <CLASS> version <n>`"));
        };
        if kw != "obj" || version_kw != "version" {
            return Err(format_err(n, "expected `obj <id> <CLASS> version <n>`"));
        }
        let id: usize = id.parse().map_err(|_| format_err(n, "bad object id"))?;
        if id != records.len() {
            return Err(format_err(
                n,
                format!("object ids must be dense, expected {} found {id}", records.len()),
            ));
        }
        if !crate::lexer::is_identifier(class_name) {
            return Err(format_err(n, format!("bad class name `{class_name}`")));
        }
        let version: u32 = version
            .parse()
            .ok()
            .filter(|v| *v >= 1)
            .ok_or_else(|| format_err(n, "bad version"))?;
        current = Some(ObjectRecord {
            id,
            class_name: class_name.to_string(),
            version,
            fields: Vec::new(),
        });
    }
    if let Some(rec) = current {
        return Err(format_err(
            text.lines().count(),
            format!("object {} not closed by `end`", rec.id),
        ));
    }
    let graph = ObjectGraph { records };
    graph.validate()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int() -> TypeExpr {
        TypeExpr::class("INTEGER")
    }

    fn bank_record() -> ObjectRecord {
        ObjectRecord {
            id: 0,
            class_name: "BANK_ACCOUNT".into(),
            version: 1,
            fields: vec![
                Field::new("tot_deposits", int(), ObjectValue::Int(100)),
                Field::new("tot_withdrawals", int(), ObjectValue::Int(30)),
                Field::new("info", TypeExpr::class("STRING"), ObjectValue::Str("42".into())),
            ],
        }
    }

    #[test]
    fn bank_record_text() {
        let g = ObjectGraph::new(vec![bank_record()]).unwrap();
        let text = serialize(&g);
        assert_eq!(
            text,
            "ESCHER-OBJECTS 1
obj 0 BANK_ACCOUNT version 1
  tot_deposits: INTEGER = 100
  tot_withdrawals: INTEGER = 30
  info: STRING = \"42\"
end
"
        );
        assert_eq!(deserialize(&text).unwrap(), g);
    }

    #[test]
    fn cycle_round_trips() {
        let node = |id, to| ObjectRecord {
            id,
            class_name: "NODE".into(),
            version: 1,
            fields: vec![Field::new("next", TypeExpr::class("NODE"), ObjectValue::Ref(to))],
        };
        let g = ObjectGraph::new(vec![node(0, 1), node(1, 0)]).unwrap();
        assert_eq!(deserialize(&serialize(&g)).unwrap(), g);
    }

    #[test]
    fn dangling_reference() {
        let text = "ESCHER-OBJECTS 1\nobj 0 NODE version 1\n  next: NODE = ref 7\nend\n";
        assert_eq!(deserialize(text), Err(RuntimeError::DanglingReference(7)));
    }

    #[test]
    fn format_errors() {
        assert!(matches!(
            deserialize("obj 0 A version 1\nend\n"),
            Err(RuntimeError::Format { line: 1, .. })
        ));
        let bad_kind = "ESCHER-OBJECTS 1\nobj 0 A version 1\n  x: INTEGER = \"no\"\nend\n";
        assert!(matches!(deserialize(bad_kind), Err(RuntimeError::Format { line: 3, .. })));
        let sparse = "ESCHER-OBJECTS 1\nobj 1 A version 1\nend\n";
        assert!(matches!(deserialize(sparse), Err(RuntimeError::Format { line: 2, .. })));
        let unclosed = "ESCHER-OBJECTS 1\nobj 0 A version 1\n";
        assert!(matches!(deserialize(unclosed), Err(RuntimeError::Format { .. })));
        let real_needs_dot = "ESCHER-OBJECTS 1\nobj 0 A version 1\n  r: REAL = 3\nend\n";
        assert!(deserialize(real_needs_dot).is_err());
    }

    #[test]
    fn strings_with_equals_and_escapes() {
        let rec = ObjectRecord {
            id: 0,
            class_name: "A".into(),
            version: 2,
            fields: vec![
                Field::new("s", TypeExpr::class("STRING"), ObjectValue::Str("a = \"b\"\n".into())),
                Field::new("o", TypeExpr::attached(TypeExpr::class("A")), ObjectValue::Ref(0)),
                Field::new("v", TypeExpr::class("STRING"), ObjectValue::Void),
                Field::new("r", TypeExpr::class("REAL"), ObjectValue::Real(-0.25)),
            ],
        };
        let g = ObjectGraph::new(vec![rec]).unwrap();
        assert_eq!(deserialize(&serialize(&g)).unwrap(), g);
    }
}
