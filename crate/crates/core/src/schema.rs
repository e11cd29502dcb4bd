//! Class schemas and the class definition language.
//!
//! ```text
//! version 2
//! class BANK_ACCOUNT feature
//!   balance: INTEGER
//!   info: INTEGER
//! invariant
//!   valid_account: balance > 0
//! end
//! ```
//!
//! Schemas are flattened: no inheritance clause and no routines, only the
//! attributes that end up in the serialized form plus the class invariant.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::expr::{parse_expr, Expr, ExprMode};
use crate::lexer::{is_identifier, tokenize, Cursor, LexError, Tok};

pub const INTEGER: &str = "INTEGER";
pub const REAL: &str = "REAL";
pub const BOOLEAN: &str = "BOOLEAN";
pub const STRING: &str = "STRING";

pub fn is_primitive(name: &str) -> bool {
    matches!(name, INTEGER | REAL | BOOLEAN | STRING)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeExpr {
    Class(String),
    Generic(String),
    Derived { base: Box<TypeExpr>, arg: Box<TypeExpr> },
    Attached(Box<TypeExpr>),
    Detachable(Box<TypeExpr>),
}

/// Whether a type may hold a void reference. Unmarked types default to
/// [`Attachment::Detachable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attachment {
    Attached,
    Detachable,
}

impl TypeExpr {
    pub fn class(name: impl Into<String>) -> Self {
        TypeExpr::Class(name.into())
    }

    pub fn generic(name: impl Into<String>) -> Self {
        TypeExpr::Generic(name.into())
    }

    pub fn derived(base: TypeExpr, arg: TypeExpr) -> Self {
        TypeExpr::Derived {
            base: Box::new(base),
            arg: Box::new(arg),
        }
    }

    pub fn attached(inner: TypeExpr) -> Self {
        TypeExpr::Attached(Box::new(inner))
    }

    pub fn detachable(inner: TypeExpr) -> Self {
        TypeExpr::Detachable(Box::new(inner))
    }

    /// The type with its outermost attachment marker removed.
    pub fn unmarked(&self) -> &TypeExpr {
        match self {
            TypeExpr::Attached(t) | TypeExpr::Detachable(t) => t,
            t => t,
        }
    }

    pub fn attachment(&self) -> Attachment {
        match self {
            TypeExpr::Attached(_) => Attachment::Attached,
            _ => Attachment::Detachable,
        }
    }

    /// Name of the outermost class, ignoring markers and derivations.
    pub fn base_class(&self) -> Option<&str> {
        match self.unmarked() {
            TypeExpr::Class(n) => Some(n),
            TypeExpr::Derived { base, .. } => base.base_class(),
            _ => None,
        }
    }

    /// The primitive name if this is one of the built-in value types.
    pub fn primitive(&self) -> Option<&str> {
        match self.unmarked() {
            TypeExpr::Class(n) if is_primitive(n) => Some(n),
            _ => None,
        }
    }

    /// Canonical form used for equality: every level carries an explicit
    /// marker, unmarked meaning detachable.
    pub fn normalized(&self) -> (Attachment, NormType) {
        let core = match self.unmarked() {
            TypeExpr::Class(n) => NormType::Class(n.clone()),
            TypeExpr::Generic(n) => NormType::Generic(n.clone()),
            TypeExpr::Derived { base, arg } => NormType::Derived(
                Box::new(base.normalized()),
                Box::new(arg.normalized()),
            ),
            // Markers never nest; a nested one is treated as its inner type.
            t @ (TypeExpr::Attached(_) | TypeExpr::Detachable(_)) => t.normalized().1,
        };
        (self.attachment(), core)
    }

    fn check_well_formed(&self) -> Result<(), String> {
        match self {
            TypeExpr::Attached(inner) | TypeExpr::Detachable(inner) => {
                if matches!(**inner, TypeExpr::Attached(_) | TypeExpr::Detachable(_)) {
                    return Err(format!("nested attachment markers in `{self}`"));
                }
                inner.check_well_formed()
            }
            TypeExpr::Derived { base, arg } => {
                if !matches!(**base, TypeExpr::Class(_) | TypeExpr::Derived { .. }) {
                    return Err(format!("generic derivation base must be a class in `{self}`"));
                }
                base.check_well_formed()?;
                arg.check_well_formed()
            }
            TypeExpr::Class(n) | TypeExpr::Generic(n) => {
                if is_identifier(n) && !crate::lexer::is_keyword(n) {
                    Ok(())
                } else {
                    Err(format!("bad type name `{n}`"))
                }
            }
        }
    }

    fn generic_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            TypeExpr::Generic(n) => out.push(n),
            TypeExpr::Class(_) => {}
            TypeExpr::Derived { base, arg } => {
                base.generic_refs(out);
                arg.generic_refs(out);
            }
            TypeExpr::Attached(t) | TypeExpr::Detachable(t) => t.generic_refs(out),
        }
    }
}

/// Marker-explicit structural form of a [`TypeExpr`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NormType {
    Class(String),
    Generic(String),
    Derived(Box<(Attachment, NormType)>, Box<(Attachment, NormType)>),
}

/// Structural type equality where an unmarked type equals its explicitly
/// detachable form.
pub fn type_equal(a: &TypeExpr, b: &TypeExpr) -> bool {
    a.normalized() == b.normalized()
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Class(n) | TypeExpr::Generic(n) => f.write_str(n),
            TypeExpr::Derived { base, arg } => write!(f, "{base}[{arg}]"),
            TypeExpr::Attached(t) => write!(f, "attached {t}"),
            TypeExpr::Detachable(t) => write!(f, "detachable {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Attribute {
    pub name: String,
    pub ty: TypeExpr,
}

impl Attribute {
    pub fn new(name: impl Into<String>, ty: TypeExpr) -> Self {
        Attribute {
            name: name.into(),
            ty,
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.ty)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantClause {
    pub tag: String,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Invariant {
    pub clauses: Vec<InvariantClause>,
}

impl Invariant {
    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Clauses whose body references `name`.
    pub fn clauses_referencing<'a>(
        &'a self,
        name: &'a str,
    ) -> impl Iterator<Item = &'a InvariantClause> + 'a {
        self.clauses
            .iter()
            .filter(move |c| c.body.attribute_refs().contains(&name))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSchema {
    pub name: String,
    pub generic_params: Vec<String>,
    pub attributes: Vec<Attribute>,
    pub invariant: Invariant,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("SyntaxError {line}:{column}: expected {expected}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
    },
    #[error("DuplicateAttribute {0}")]
    DuplicateAttribute(String),
    #[error("DuplicateGenericParam {0}")]
    DuplicateGenericParam(String),
    #[error("UnknownGenericParam {0}")]
    UnknownGenericParam(String),
    #[error("InvariantRefersUnknownAttribute {tag} {name}")]
    InvariantRefersUnknownAttribute { tag: String, name: String },
    #[error("InvalidVersion {0}")]
    InvalidVersion(i64),
    #[error("MalformedType {0}")]
    MalformedType(String),
    #[error("InvalidName {0}")]
    InvalidName(String),
}

impl From<LexError> for SchemaError {
    fn from(e: LexError) -> Self {
        SchemaError::Syntax {
            line: e.line,
            column: e.column,
            expected: e.expected,
        }
    }
}

impl ClassSchema {
    pub fn new(name: impl Into<String>) -> Self {
        ClassSchema {
            name: name.into(),
            generic_params: Vec::new(),
            attributes: Vec::new(),
            invariant: Invariant::default(),
            version: 1,
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Checks every structural invariant of a schema.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if !is_identifier(&self.name) || crate::lexer::is_keyword(&self.name) {
            return Err(SchemaError::InvalidName(self.name.clone()));
        }
        if self.version == 0 {
            return Err(SchemaError::InvalidVersion(0));
        }
        let mut generics = HashSet::new();
        for g in &self.generic_params {
            if !is_identifier(g) || crate::lexer::is_keyword(g) {
                return Err(SchemaError::InvalidName(g.clone()));
            }
            if !generics.insert(g.as_str()) {
                return Err(SchemaError::DuplicateGenericParam(g.clone()));
            }
        }
        let mut names = HashSet::new();
        for a in &self.attributes {
            if !is_identifier(&a.name) || crate::lexer::is_keyword(&a.name) {
                return Err(SchemaError::InvalidName(a.name.clone()));
            }
            if !names.insert(a.name.as_str()) {
                return Err(SchemaError::DuplicateAttribute(a.name.clone()));
            }
            if generics.contains(a.name.as_str()) {
                return Err(SchemaError::DuplicateAttribute(a.name.clone()));
            }
            a.ty.check_well_formed().map_err(SchemaError::MalformedType)?;
            let mut refs = Vec::new();
            a.ty.generic_refs(&mut refs);
            if let Some(bad) = refs.into_iter().find(|r| !generics.contains(r)) {
                return Err(SchemaError::UnknownGenericParam(bad.to_string()));
            }
        }
        for clause in &self.invariant.clauses {
            for r in clause.body.attribute_refs() {
                if !names.contains(r) {
                    return Err(SchemaError::InvariantRefersUnknownAttribute {
                        tag: clause.tag.clone(),
                        name: r.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Attribute `(name, normalized type)` pairs, order-insensitive.
    pub fn attribute_set(&self) -> std::collections::BTreeSet<(String, (Attachment, NormType))> {
        self.attributes
            .iter()
            .map(|a| (a.name.clone(), a.ty.normalized()))
            .collect()
    }

    /// Same class identity and same attributes, invariant and generics,
    /// ignoring the version tag.
    pub fn same_content(&self, other: &ClassSchema) -> bool {
        self.name == other.name
            && self.generic_params == other.generic_params
            && self.attributes == other.attributes
            && self.invariant == other.invariant
    }
}

pub fn parse_schema(source: &str) -> Result<ClassSchema, SchemaError> {
    let mut cur = Cursor::new(tokenize(source, false)?);
    let version = if cur.eat_keyword("version") {
        match cur.peek().tok {
            Tok::Int(v) if v >= 1 && v <= u32::MAX as i64 => {
                cur.bump();
                v as u32
            }
            Tok::Int(v) => return Err(SchemaError::InvalidVersion(v)),
            _ => return Err(cur.error("version number").into()),
        }
    } else {
        1
    };
    cur.expect_keyword("class")?;
    let name = cur.expect_ident("class name")?;
    let mut generic_params = Vec::new();
    if cur.eat(&Tok::LBracket) {
        loop {
            let g = cur.expect_ident("generic parameter")?;
            if generic_params.contains(&g) {
                return Err(SchemaError::DuplicateGenericParam(g));
            }
            generic_params.push(g);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
        cur.expect(&Tok::RBracket)?;
    }
    cur.expect_keyword("feature")?;
    let mut attributes: Vec<Attribute> = Vec::new();
    while let Tok::Ident(s) = &cur.peek().tok {
        if s == "invariant" || s == "end" {
            break;
        }
        let attr_name = cur.expect_ident("attribute name")?;
        cur.expect(&Tok::Colon)?;
        let ty = parse_type(&mut cur, &generic_params)?;
        if attributes.iter().any(|a| a.name == attr_name) || generic_params.contains(&attr_name) {
            return Err(SchemaError::DuplicateAttribute(attr_name));
        }
        attributes.push(Attribute::new(attr_name, ty));
    }
    let mut invariant = Invariant::default();
    if cur.eat_keyword("invariant") {
        while !cur.at_keyword("end") {
            let tag = cur.expect_ident("invariant tag")?;
            cur.expect(&Tok::Colon)?;
            let body = parse_expr(&mut cur, ExprMode::Invariant)?;
            invariant.clauses.push(InvariantClause { tag, body });
        }
    }
    cur.expect_keyword("end")?;
    if !cur.at(&Tok::Eof) {
        return Err(cur.error("end of input").into());
    }
    let schema = ClassSchema {
        name,
        generic_params,
        attributes,
        invariant,
        version,
    };
    schema.validate()?;
    Ok(schema)
}

/// Parses a type expression; identifiers listed in `generics` become
/// generic parameter references.
pub fn parse_type(cur: &mut Cursor, generics: &[String]) -> Result<TypeExpr, SchemaError> {
    if cur.eat_keyword("attached") {
        return Ok(TypeExpr::attached(parse_unmarked_type(cur, generics)?));
    }
    if cur.eat_keyword("detachable") {
        return Ok(TypeExpr::detachable(parse_unmarked_type(cur, generics)?));
    }
    parse_unmarked_type(cur, generics)
}

fn parse_unmarked_type(cur: &mut Cursor, generics: &[String]) -> Result<TypeExpr, SchemaError> {
    let name = cur.expect_ident("type name")?;
    let mut ty = if generics.contains(&name) {
        TypeExpr::Generic(name)
    } else {
        TypeExpr::Class(name)
    };
    while cur.at(&Tok::LBracket) {
        if matches!(ty, TypeExpr::Generic(_)) {
            return Err(cur.error("no generic derivation of a generic parameter").into());
        }
        cur.bump();
        let arg = parse_type(cur, generics)?;
        cur.expect(&Tok::RBracket)?;
        ty = TypeExpr::derived(ty, arg);
    }
    Ok(ty)
}

/// Parses a standalone type such as `attached ARRAY[INTEGER]`.
pub fn parse_type_str(src: &str, generics: &[String]) -> Result<TypeExpr, SchemaError> {
    let mut cur = Cursor::new(tokenize(src, false)?);
    let ty = parse_type(&mut cur, generics)?;
    if !cur.at(&Tok::Eof) {
        return Err(cur.error("end of type").into());
    }
    Ok(ty)
}

/// Canonical text of a schema; `parse_schema` of the result is structurally
/// equal to the input.
pub fn render_schema(schema: &ClassSchema) -> String {
    let mut out = format!("version {}\nclass {}", schema.version, schema.name);
    if !schema.generic_params.is_empty() {
        out.push_str(&format!(" [{}]", schema.generic_params.join(", ")));
    }
    out.push_str(" feature\n");
    for a in &schema.attributes {
        out.push_str(&format!("  {a}\n"));
    }
    if !schema.invariant.is_empty() {
        out.push_str("invariant\n");
        for c in &schema.invariant.clauses {
            out.push_str(&format!("  {}: {}\n", c.tag, c.body));
        }
    }
    out.push_str("end\n");
    out
}

impl fmt::Display for ClassSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_schema(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANK_V1: &str = "
-- routines dropped, attributes and invariant only
class BANK_ACCOUNT feature
  info: STRING
  tot_deposits: INTEGER
  tot_withdrawals: INTEGER
invariant
  valid_account: tot_deposits > tot_withdrawals
end
";

    #[test]
    fn bank_account_v1() {
        let s = parse_schema(BANK_V1).unwrap();
        assert_eq!(s.name, "BANK_ACCOUNT");
        assert_eq!(s.version, 1);
        assert_eq!(s.attributes.len(), 3);
        assert_eq!(s.invariant.clauses.len(), 1);
        assert_eq!(s.invariant.clauses[0].tag, "valid_account");
        assert_eq!(parse_schema(&render_schema(&s)).unwrap(), s);
    }

    #[test]
    fn empty_class() {
        let s = parse_schema("class C feature end").unwrap();
        assert!(s.attributes.is_empty() && s.invariant.is_empty());
        assert_eq!(render_schema(&s), "version 1\nclass C feature\nend\n");
    }

    #[test]
    fn generic_box() {
        let s = parse_schema("class BOX [G] feature item: G end").unwrap();
        assert_eq!(s.generic_params, vec!["G"]);
        assert_eq!(s.attributes[0].ty, TypeExpr::generic("G"));
        let text = render_schema(&s);
        assert_eq!(text, "version 1\nclass BOX [G] feature\n  item: G\nend\n");
        assert_eq!(parse_schema(&text).unwrap(), s);
    }

    #[test]
    fn markers_and_derivations() {
        let s = parse_schema(
            "version 3 class P [K, V] feature a: attached ARRAY[detachable K] b: TABLE[V][INTEGER] end",
        )
        .unwrap();
        assert_eq!(s.version, 3);
        assert_eq!(
            s.attributes[0].ty,
            TypeExpr::attached(TypeExpr::derived(
                TypeExpr::class("ARRAY"),
                TypeExpr::detachable(TypeExpr::generic("K"))
            ))
        );
        assert_eq!(parse_schema(&render_schema(&s)).unwrap(), s);
    }

    #[test]
    fn rejects_bad_schemas() {
        assert_eq!(
            parse_schema("class C feature a: INTEGER a: REAL end"),
            Err(SchemaError::DuplicateAttribute("a".into()))
        );
        assert!(matches!(
            parse_schema("class C feature a: INTEGER invariant t: b > 0 end"),
            Err(SchemaError::InvariantRefersUnknownAttribute { .. })
        ));
        assert!(matches!(
            parse_schema("class C feature end extra"),
            Err(SchemaError::Syntax { .. })
        ));
        assert!(matches!(
            parse_schema("class C feature class: INTEGER end"),
            Err(SchemaError::Syntax { .. })
        ));
        assert!(matches!(
            parse_schema("class C feature a: attached attached X end"),
            Err(SchemaError::Syntax { .. })
        ));
        assert!(matches!(
            parse_schema("class C [G] feature a: G[INTEGER] end"),
            Err(SchemaError::Syntax { .. })
        ));
        assert_eq!(
            parse_schema("class C [G] feature G: INTEGER end"),
            Err(SchemaError::DuplicateAttribute("G".into()))
        );
        assert_eq!(
            parse_schema("version 0 class C feature end"),
            Err(SchemaError::InvalidVersion(0))
        );
    }

    #[test]
    fn unknown_generic_param_via_validate() {
        let mut s = ClassSchema::new("C");
        s.attributes.push(Attribute::new("x", TypeExpr::generic("G")));
        assert_eq!(s.validate(), Err(SchemaError::UnknownGenericParam("G".into())));
    }

    #[test]
    fn syntax_error_position() {
        match parse_schema("class C feature\n  a INTEGER\nend") {
            Err(SchemaError::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_equality_cases() {
        let int = TypeExpr::class("INTEGER");
        let string = TypeExpr::class("STRING");
        assert!(type_equal(&int, &int));
        assert!(!type_equal(
            &TypeExpr::attached(string.clone()),
            &TypeExpr::detachable(string.clone())
        ));
        assert!(type_equal(&string, &TypeExpr::detachable(string.clone())));
        assert!(!type_equal(&string, &TypeExpr::attached(string.clone())));
        assert!(!type_equal(
            &TypeExpr::derived(TypeExpr::class("ARRAY"), int.clone()),
            &TypeExpr::derived(TypeExpr::class("ARRAY"), TypeExpr::class("REAL"))
        ));
    }
}
