use super::{ObjectRecord, RuntimeError};
use crate::expr::{eval, EvalError, Scope};
use crate::schema::ClassSchema;
use crate::value::ObjectValue;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvariantOutcome {
    Pass,
    /// Tag of the first clause that evaluated to false.
    Fail(String),
}

struct RecordScope<'a>(&'a ObjectRecord);

impl Scope for RecordScope<'_> {
    fn attribute(&self, name: &str) -> Result<ObjectValue, EvalError> {
        self.0
            .value(name)
            .cloned()
            .ok_or_else(|| EvalError::MissingAttribute(name.to_string()))
    }
}

/// Evaluates the class invariant of `schema` on `record`, clause by clause.
pub fn eval_invariant(
    record: &ObjectRecord,
    schema: &ClassSchema,
) -> Result<InvariantOutcome, RuntimeError> {
    if record.class_name != schema.name {
        return Err(RuntimeError::RecordMismatch(format!(
            "object {} is a {}, schema is {}",
            record.id, record.class_name, schema.name
        )));
    }
    let scope = RecordScope(record);
    for clause in &schema.invariant.clauses {
        let mismatch = |reason: String| RuntimeError::TypeMismatchInInvariant {
            tag: clause.tag.clone(),
            reason,
        };
        match eval(&clause.body, &scope) {
            Ok(ObjectValue::Bool(true)) => {}
            Ok(ObjectValue::Bool(false)) => return Ok(InvariantOutcome::Fail(clause.tag.clone())),
            Ok(other) => return Err(mismatch(format!("clause yields {}", other.kind()))),
            Err(EvalError::MissingAttribute(name)) => {
                return Err(RuntimeError::MissingAttribute(name))
            }
            Err(e) => return Err(mismatch(e.to_string())),
        }
    }
    Ok(InvariantOutcome::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::Field;
    use crate::schema::{parse_schema, TypeExpr};

    fn record(fields: &[(&str, i64)]) -> ObjectRecord {
        ObjectRecord {
            id: 0,
            class_name: "BANK_ACCOUNT".into(),
            version: 2,
            fields: fields
                .iter()
                .map(|(n, v)| Field::new(*n, TypeExpr::class("INTEGER"), ObjectValue::Int(*v)))
                .collect(),
        }
    }

    fn v2() -> ClassSchema {
        parse_schema("version 2 class BANK_ACCOUNT feature balance: INTEGER info: INTEGER invariant valid_account: balance > 0 end").unwrap()
    }

    #[test]
    fn positive_balance_passes() {
        assert_eq!(
            eval_invariant(&record(&[("balance", 70), ("info", 42)]), &v2()),
            Ok(InvariantOutcome::Pass)
        );
    }

    #[test]
    fn zero_balance_fails() {
        assert_eq!(
            eval_invariant(&record(&[("balance", 0), ("info", 42)]), &v2()),
            Ok(InvariantOutcome::Fail("valid_account".into()))
        );
    }

    #[test]
    fn v1_constructor_state_passes() {
        let v1 = parse_schema("class BANK_ACCOUNT feature info: STRING tot_deposits: INTEGER tot_withdrawals: INTEGER invariant valid_account: tot_deposits > tot_withdrawals end").unwrap();
        let mut r = record(&[("tot_deposits", 1), ("tot_withdrawals", 0)]);
        r.version = 1;
        assert_eq!(eval_invariant(&r, &v1), Ok(InvariantOutcome::Pass));
    }

    #[test]
    fn first_failing_clause_reported() {
        let s = parse_schema("class BANK_ACCOUNT feature balance: INTEGER invariant a: balance >= 0 b: balance > 10 c: balance > 100 end").unwrap();
        assert_eq!(
            eval_invariant(&record(&[("balance", 5)]), &s),
            Ok(InvariantOutcome::Fail("b".into()))
        );
    }

    #[test]
    fn errors() {
        assert_eq!(
            eval_invariant(&record(&[("info", 1)]), &v2()),
            Err(RuntimeError::MissingAttribute("balance".into()))
        );
        let s = parse_schema("class BANK_ACCOUNT feature balance: INTEGER invariant t: balance + 1 end").unwrap();
        assert!(matches!(
            eval_invariant(&record(&[("balance", 1)]), &s),
            Err(RuntimeError::TypeMismatchInInvariant { tag, .. }) if tag == "t"
        ));
    }
}
