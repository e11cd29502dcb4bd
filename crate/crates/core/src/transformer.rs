//! Object transformers: instruction lists that build an instance of a new
//! class version from a serialized instance of an old one.
//!
//! Concrete syntax (`.est` files):
//!
//! ```text
//! transform BANK_ACCOUNT from 1 to 2
//!   Result.info := convert STRING_TO_INTEGER (oldc.info)
//!   -- warning: attribute tot_deposits removed; value will be dropped
//!   noop
//!   Result.balance := input balance
//! end
//! ```

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::converter::{assignable, ConverterRegistry};
use crate::expr::{parse_expr, Expr, ExprMode};
use crate::lexer::{tokenize, Cursor, LexError, Tok};
use crate::smo::{ClassTransformation, Smo};

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    /// `Result.<target> := oldc.<source>`
    CopyField { target: String, source: String },
    /// `Result.<target> := input <target>`
    AssignInput { target: String },
    /// `Result.<target> := convert <CONV> (oldc.<source>)`
    AssignConverted {
        target: String,
        converter: String,
        source: String,
    },
    /// Any other source expression; only written by hand.
    AssignExpr { target: String, expr: Expr },
    Noop { warning: String },
    /// `require_attached Result.<target>`
    CheckAttached { target: String },
}

impl Instr {
    fn classify(target: String, expr: Expr) -> Instr {
        match expr {
            Expr::OldField(source) => Instr::CopyField { target, source },
            Expr::Input(ref name) if *name == target => Instr::AssignInput { target },
            Expr::Convert { converter, arg } if matches!(*arg, Expr::OldField(_)) => {
                let Expr::OldField(source) = *arg else {
                    unreachable!()
                };
                Instr::AssignConverted {
                    target,
                    converter,
                    source,
                }
            }
            expr => Instr::AssignExpr { target, expr },
        }
    }

    /// The attribute this instruction assigns, if it is an assignment.
    pub fn assigned_target(&self) -> Option<&str> {
        match self {
            Instr::CopyField { target, .. }
            | Instr::AssignInput { target }
            | Instr::AssignConverted { target, .. }
            | Instr::AssignExpr { target, .. } => Some(target),
            Instr::Noop { .. } | Instr::CheckAttached { .. } => None,
        }
    }

    /// Source expression of an assignment.
    pub fn source_expr(&self) -> Option<Expr> {
        Some(match self {
            Instr::CopyField { source, .. } => Expr::OldField(source.clone()),
            Instr::AssignInput { target } => Expr::Input(target.clone()),
            Instr::AssignConverted {
                converter, source, ..
            } => Expr::Convert {
                converter: converter.clone(),
                arg: Box::new(Expr::OldField(source.clone())),
            },
            Instr::AssignExpr { expr, .. } => expr.clone(),
            Instr::Noop { .. } | Instr::CheckAttached { .. } => return None,
        })
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Noop { warning } if warning.is_empty() => f.write_str("noop"),
            Instr::Noop { warning } => write!(f, "-- warning: {warning}\nnoop"),
            Instr::CheckAttached { target } => write!(f, "require_attached Result.{target}"),
            assign => write!(
                f,
                "Result.{} := {}",
                assign.assigned_target().unwrap_or_default(),
                assign.source_expr().expect("assignment")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformerError {
    #[error("SyntaxError {line}:{column}: expected {expected}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
    },
    #[error("UnknownConverter {0}")]
    UnknownConverter(String),
    #[error("DuplicateTarget {0}")]
    DuplicateTarget(String),
    #[error("SameVersion {0}")]
    SameVersion(u32),
}

impl From<LexError> for TransformerError {
    fn from(e: LexError) -> Self {
        TransformerError::Syntax {
            line: e.line,
            column: e.column,
            expected: e.expected,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTransformer {
    pub class_name: String,
    pub from_version: u32,
    pub to_version: u32,
    pub instructions: Vec<Instr>,
}

impl ObjectTransformer {
    pub fn new(
        class_name: impl Into<String>,
        from_version: u32,
        to_version: u32,
        instructions: Vec<Instr>,
    ) -> Result<Self, TransformerError> {
        let t = ObjectTransformer {
            class_name: class_name.into(),
            from_version,
            to_version,
            instructions,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TransformerError> {
        if self.from_version == self.to_version {
            return Err(TransformerError::SameVersion(self.from_version));
        }
        let mut seen = BTreeSet::new();
        for target in self.instructions.iter().filter_map(Instr::assigned_target) {
            if !seen.insert(target) {
                return Err(TransformerError::DuplicateTarget(target.to_string()));
            }
        }
        Ok(())
    }

    /// Every name read through `input <name>`.
    pub fn required_inputs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for instr in &self.instructions {
            if let Some(expr) = instr.source_expr() {
                expr.walk(&mut |e| {
                    if let Expr::Input(n) = e {
                        out.insert(n.clone());
                    }
                });
            }
        }
        out
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.instructions.iter().filter_map(|i| match i {
            Instr::Noop { warning } if !warning.is_empty() => Some(warning.as_str()),
            _ => None,
        })
    }

    /// Converter ids referenced anywhere in the instructions.
    pub fn converters(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for instr in &self.instructions {
            if let Some(expr) = instr.source_expr() {
                expr.walk(&mut |e| {
                    if let Expr::Convert { converter, .. } = e {
                        out.insert(converter.clone());
                    }
                });
            }
        }
        out
    }
}

pub fn render_transformer(t: &ObjectTransformer) -> String {
    let mut out = format!(
        "transform {} from {} to {}\n",
        t.class_name, t.from_version, t.to_version
    );
    for instr in &t.instructions {
        for line in instr.to_string().lines() {
            out.push_str("  ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

impl fmt::Display for ObjectTransformer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_transformer(self))
    }
}

fn expect_version(cur: &mut Cursor) -> Result<u32, TransformerError> {
    match cur.peek().tok {
        Tok::Int(v) if v >= 1 && v <= u32::MAX as i64 => {
            cur.bump();
            Ok(v as u32)
        }
        _ => Err(cur.error("positive version number").into()),
    }
}

fn end_of_statement(cur: &mut Cursor) -> Result<(), TransformerError> {
    if let Tok::Comment(_) = cur.peek().tok {
        cur.bump();
    }
    if cur.eat(&Tok::Newline) || cur.at(&Tok::Eof) {
        Ok(())
    } else {
        Err(cur.error("end of line").into())
    }
}

/// Parses a transformer; converter ids must be known to `registry`.
pub fn parse_transformer(
    source: &str,
    registry: &ConverterRegistry,
) -> Result<ObjectTransformer, TransformerError> {
    let mut cur = Cursor::new(tokenize(source, true)?);
    cur.skip_newlines();
    cur.expect(&Tok::Ident("transform".into()))?;
    let class_name = cur.expect_ident("class name")?;
    cur.expect(&Tok::Ident("from".into()))?;
    let from_version = expect_version(&mut cur)?;
    cur.expect(&Tok::Ident("to".into()))?;
    let to_version = expect_version(&mut cur)?;
    end_of_statement(&mut cur)?;

    let mut instructions = Vec::new();
    let mut pending_warning: Option<String> = None;
    loop {
        match cur.peek().tok.clone() {
            Tok::Newline => {
                cur.bump();
            }
            Tok::Comment(text) => {
                cur.bump();
                if let Some(w) = text.strip_prefix("warning:") {
                    pending_warning = Some(w.trim().to_string());
                }
            }
            Tok::Ident(word) => match word.as_str() {
                "end" => {
                    cur.bump();
                    break;
                }
                "noop" => {
                    cur.bump();
                    instructions.push(Instr::Noop {
                        warning: pending_warning.take().unwrap_or_default(),
                    });
                    end_of_statement(&mut cur)?;
                }
                "require_attached" => {
                    cur.bump();
                    pending_warning = None;
                    cur.expect(&Tok::Ident("Result".into()))?;
                    cur.expect(&Tok::Dot)?;
                    let target = cur.expect_ident("attribute name")?;
                    instructions.push(Instr::CheckAttached { target });
                    end_of_statement(&mut cur)?;
                }
                "Result" => {
                    cur.bump();
                    pending_warning = None;
                    cur.expect(&Tok::Dot)?;
                    let target = cur.expect_ident("attribute name")?;
                    cur.expect(&Tok::Assign)?;
                    let expr = parse_expr(&mut cur, ExprMode::Transformer)?;
                    let mut unknown = None;
                    expr.walk(&mut |e| {
                        if let Expr::Convert { converter, .. } = e {
                            if unknown.is_none() && !registry.contains(converter) {
                                unknown = Some(converter.clone());
                            }
                        }
                    });
                    if let Some(id) = unknown {
                        return Err(TransformerError::UnknownConverter(id));
                    }
                    instructions.push(Instr::classify(target, expr));
                    end_of_statement(&mut cur)?;
                }
                _ => return Err(cur.error("statement or `end`").into()),
            },
            _ => return Err(cur.error("statement or `end`").into()),
        }
    }
    cur.skip_newlines();
    if !cur.at(&Tok::Eof) {
        return Err(cur.error("end of input").into());
    }
    ObjectTransformer::new(class_name, from_version, to_version, instructions)
}

/// Generates the transformer for a class transformation. Generation never
/// fails: whatever cannot be translated becomes a warning and, for target
/// attributes, an input placeholder.
pub fn generate_transformer(
    transformation: &ClassTransformation,
    registry: &ConverterRegistry,
) -> ObjectTransformer {
    let from_version = transformation.source.version;
    let mut to_version = transformation.target.version;
    let mut instructions = Vec::new();
    if to_version == from_version {
        to_version = from_version + 1;
        instructions.push(Instr::Noop {
            warning: format!(
                "source and target both tagged version {from_version}; target assumed to be {to_version}"
            ),
        });
    }
    for smo in &transformation.smos {
        match smo {
            Smo::NoChange(a) => instructions.push(Instr::CopyField {
                target: a.name.clone(),
                source: a.name.clone(),
            }),
            Smo::Added(a) => instructions.push(Instr::AssignInput {
                target: a.name.clone(),
            }),
            Smo::Renamed {
                old_name,
                new_name,
                candidate,
                ..
            } => {
                if *candidate {
                    instructions.push(Instr::Noop {
                        warning: format!(
                            "possible rename of {old_name} to {new_name}; verify semantics"
                        ),
                    });
                }
                instructions.push(Instr::CopyField {
                    target: new_name.clone(),
                    source: old_name.clone(),
                });
            }
            Smo::TypeChanged {
                name,
                old_type,
                new_type,
            } => {
                if assignable(old_type, new_type) {
                    instructions.push(Instr::CopyField {
                        target: name.clone(),
                        source: name.clone(),
                    });
                } else if let Some(conv) = registry.lookup(old_type, new_type) {
                    instructions.push(Instr::AssignConverted {
                        target: name.clone(),
                        converter: conv.id.clone(),
                        source: name.clone(),
                    });
                } else {
                    instructions.push(Instr::Noop {
                        warning: format!("no conversion from {old_type} to {new_type} for {name}"),
                    });
                    instructions.push(Instr::AssignInput {
                        target: name.clone(),
                    });
                }
            }
            Smo::Removed { name, .. } => instructions.push(Instr::Noop {
                warning: format!("attribute {name} removed; value will be dropped"),
            }),
            Smo::AttachAdded { name, .. } => {
                instructions.push(Instr::CopyField {
                    target: name.clone(),
                    source: name.clone(),
                });
                instructions.push(Instr::CheckAttached {
                    target: name.clone(),
                });
            }
        }
    }
    ObjectTransformer {
        class_name: transformation.target.name.clone(),
        from_version,
        to_version,
        instructions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schema;
    use crate::smo::diff_schemas;

    const GOLDEN: &str = "transform BANK_ACCOUNT from 1 to 2
  Result.info := convert STRING_TO_INTEGER (oldc.info)
  -- warning: attribute tot_deposits removed; value will be dropped
  noop
  -- warning: attribute tot_withdrawals removed; value will be dropped
  noop
  Result.balance := input balance
end
";

    fn bank_transformation() -> ClassTransformation {
        let v1 = parse_schema(
            "class BANK_ACCOUNT feature info: STRING tot_deposits: INTEGER tot_withdrawals: INTEGER
             invariant valid_account: tot_deposits > tot_withdrawals end",
        )
        .unwrap();
        let v2 = parse_schema(
            "version 2 class BANK_ACCOUNT feature balance: INTEGER info: INTEGER
             invariant valid_account: balance > 0 end",
        )
        .unwrap();
        diff_schemas(&v1, &v2).unwrap()
    }

    #[test]
    fn bank_account_generation_matches_golden() {
        let reg = ConverterRegistry::builtins();
        let t = generate_transformer(&bank_transformation(), &reg);
        assert_eq!(
            t.instructions[0],
            Instr::AssignConverted {
                target: "info".into(),
                converter: "STRING_TO_INTEGER".into(),
                source: "info".into()
            }
        );
        assert_eq!(
            t.instructions[3],
            Instr::AssignInput {
                target: "balance".into()
            }
        );
        assert_eq!(t.required_inputs(), BTreeSet::from(["balance".to_string()]));
        assert_eq!(render_transformer(&t), GOLDEN);
        assert_eq!(parse_transformer(GOLDEN, &reg).unwrap(), t);
    }

    #[test]
    fn identity_transformer() {
        let s = parse_schema("class C feature a: INTEGER b: STRING end").unwrap();
        let mut s2 = s.clone();
        s2.version = 2;
        let t = generate_transformer(&diff_schemas(&s, &s2).unwrap(), &ConverterRegistry::builtins());
        assert_eq!(t.instructions.len(), 2);
        assert!(t
            .instructions
            .iter()
            .all(|i| matches!(i, Instr::CopyField { target, source } if target == source)));
    }

    #[test]
    fn widening_copies_and_unknown_conversion_asks_input() {
        let old = parse_schema("class C feature x: INTEGER p: PERSON end").unwrap();
        let new = parse_schema("version 2 class C feature x: REAL p: ADDRESS end").unwrap();
        let t = generate_transformer(&diff_schemas(&old, &new).unwrap(), &ConverterRegistry::builtins());
        assert_eq!(
            t.instructions,
            vec![
                Instr::CopyField {
                    target: "x".into(),
                    source: "x".into()
                },
                Instr::Noop {
                    warning: "no conversion from PERSON to ADDRESS for p".into()
                },
                Instr::AssignInput { target: "p".into() },
            ]
        );
    }

    #[test]
    fn rename_and_attach() {
        let old = parse_schema("class C feature a: INTEGER o: PERSON end").unwrap();
        let new = parse_schema("version 2 class C feature b: INTEGER o: attached PERSON end").unwrap();
        let t = generate_transformer(&diff_schemas(&old, &new).unwrap(), &ConverterRegistry::builtins());
        let text = render_transformer(&t);
        assert_eq!(
            text,
            "transform C from 1 to 2
  Result.o := oldc.o
  require_attached Result.o
  -- warning: possible rename of a to b; verify semantics
  noop
  Result.b := oldc.a
end
"
        );
        assert_eq!(parse_transformer(&text, &ConverterRegistry::builtins()).unwrap(), t);
    }

    #[test]
    fn hand_written_arithmetic_parses() {
        let src = GOLDEN.replace(
            "Result.balance := input balance",
            "Result.balance := oldc.tot_deposits - oldc.tot_withdrawals",
        );
        let t = parse_transformer(&src, &ConverterRegistry::builtins()).unwrap();
        assert!(matches!(&t.instructions[3], Instr::AssignExpr { target, .. } if target == "balance"));
        assert!(t.required_inputs().is_empty());
        assert_eq!(parse_transformer(&render_transformer(&t), &ConverterRegistry::builtins()).unwrap(), t);
    }

    #[test]
    fn parse_errors() {
        let reg = ConverterRegistry::builtins();
        let dup = "transform C from 1 to 2\n Result.balance := input balance\n Result.balance := 0\nend\n";
        assert_eq!(
            parse_transformer(dup, &reg),
            Err(TransformerError::DuplicateTarget("balance".into()))
        );
        let unknown = "transform C from 1 to 2\n Result.x := convert NOPE (oldc.x)\nend\n";
        assert_eq!(
            parse_transformer(unknown, &reg),
            Err(TransformerError::UnknownConverter("NOPE".into()))
        );
        let same = "transform C from 2 to 2\nend\n";
        assert_eq!(parse_transformer(same, &reg), Err(TransformerError::SameVersion(2)));
        let two_per_line = "transform C from 1 to 2\n noop noop\nend\n";
        assert!(matches!(
            parse_transformer(two_per_line, &reg),
            Err(TransformerError::Syntax { .. })
        ));
        assert!(matches!(
            parse_transformer("transform C from 1 to 2\n", &reg),
            Err(TransformerError::Syntax { .. })
        ));
    }

    #[test]
    fn same_version_generation_bumps_target() {
        let s = parse_schema("class C feature a: INTEGER end").unwrap();
        let t = generate_transformer(&diff_schemas(&s, &s).unwrap(), &ConverterRegistry::builtins());
        assert_eq!((t.from_version, t.to_version), (1, 2));
        assert!(t.validate().is_ok());
    }
}
