//! Expression language shared by class invariants and object transformers.
//!
//! Invariants refer to attributes by bare name. Transformer sources refer to
//! the old object with `oldc.<name>`, to developer-supplied values with
//! `input <name>` and to registered converters with `convert <ID> (<expr>)`.
//! Which atom forms are legal is chosen by [`ExprMode`] at parse time.

use std::fmt;

use crate::lexer::{is_keyword, Cursor, LexError, Tok};
use crate::value::{format_real, quote_string, ObjectValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    IntDiv,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::IntDiv => 6,
        }
    }

    fn is_comparison(self) -> bool {
        self.precedence() == 4
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "=",
            BinOp::Ne => "/=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::IntDiv => "//",
        }
    }
}

const PREC_NOT: u8 = 3;
const PREC_NEG: u8 = 7;
const PREC_ATOM: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Attr(String),
    OldField(String),
    Input(String),
    Convert { converter: String, arg: Box<Expr> },
    Int(i64),
    Real(f64),
    Bool(bool),
    Str(String),
    Void,
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Not(_) => PREC_NOT,
            Expr::Neg(_) => PREC_NEG,
            _ => PREC_ATOM,
        }
    }

    /// Calls `f` on every node, parents before children.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Convert { arg, .. } => arg.walk(f),
            Expr::Neg(e) | Expr::Not(e) => e.walk(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            _ => {}
        }
    }

    /// Bare attribute names referenced (invariant mode).
    pub fn attribute_refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Attr(n) = e {
                out.push(n.as_str());
            }
        });
        out
    }

    fn render_into(&self, min_prec: u8, out: &mut String) {
        let prec = self.precedence();
        let paren = prec < min_prec;
        if paren {
            out.push('(');
        }
        match self {
            Expr::Attr(n) => out.push_str(n),
            Expr::OldField(n) => {
                out.push_str("oldc.");
                out.push_str(n);
            }
            Expr::Input(n) => {
                out.push_str("input ");
                out.push_str(n);
            }
            Expr::Convert { converter, arg } => {
                out.push_str("convert ");
                out.push_str(converter);
                out.push_str(" (");
                arg.render_into(0, out);
                out.push(')');
            }
            Expr::Int(i) => out.push_str(&i.to_string()),
            Expr::Real(r) => out.push_str(&format_real(*r)),
            Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Expr::Str(s) => out.push_str(&quote_string(s)),
            Expr::Void => out.push_str("Void"),
            Expr::Neg(e) => {
                out.push('-');
                // `-(5)` and `-(-5)` keep literals apart from `-5`.
                let mut inner = String::new();
                e.render_into(PREC_ATOM, &mut inner);
                if matches!(**e, Expr::Int(_)) || inner.starts_with('-') {
                    out.push('(');
                    out.push_str(&inner);
                    out.push(')');
                } else {
                    out.push_str(&inner);
                }
            }
            Expr::Not(e) => {
                out.push_str("not ");
                e.render_into(PREC_NOT, out);
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                let lhs_min = if op.is_comparison() { p + 1 } else { p };
                lhs.render_into(lhs_min, out);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                rhs.render_into(p + 1, out);
            }
        }
        if paren {
            out.push(')');
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.render_into(0, &mut s);
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprMode {
    Invariant,
    Transformer,
}

pub fn parse_expr(cur: &mut Cursor, mode: ExprMode) -> Result<Expr, LexError> {
    parse_level(cur, mode, 1)
}

fn binop_at(tok: &Tok) -> Option<BinOp> {
    Some(match tok {
        Tok::Ident(s) if s == "or" => BinOp::Or,
        Tok::Ident(s) if s == "and" => BinOp::And,
        Tok::Eq => BinOp::Eq,
        Tok::Ne => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        Tok::Plus => BinOp::Add,
        Tok::Minus => BinOp::Sub,
        Tok::Star => BinOp::Mul,
        Tok::SlashSlash => BinOp::IntDiv,
        _ => return None,
    })
}

fn parse_level(cur: &mut Cursor, mode: ExprMode, min_prec: u8) -> Result<Expr, LexError> {
    let mut lhs = parse_prefix(cur, mode, min_prec)?;
    while let Some(op) = binop_at(&cur.peek().tok) {
        let p = op.precedence();
        if p < min_prec {
            break;
        }
        cur.bump();
        let rhs = parse_level(cur, mode, p + 1)?;
        lhs = Expr::binary(op, lhs, rhs);
        if op.is_comparison() && binop_at(&cur.peek().tok).is_some_and(|o| o.is_comparison()) {
            return Err(cur.error("no chained comparison"));
        }
    }
    Ok(lhs)
}

fn parse_prefix(cur: &mut Cursor, mode: ExprMode, min_prec: u8) -> Result<Expr, LexError> {
    if cur.at_keyword("not") && min_prec <= PREC_NOT {
        cur.bump();
        let inner = parse_level(cur, mode, PREC_NOT)?;
        return Ok(Expr::Not(Box::new(inner)));
    }
    if cur.at(&Tok::Minus) {
        cur.bump();
        if let Tok::Int(i) = cur.peek().tok {
            cur.bump();
            return Ok(Expr::Int(-i));
        }
        let inner = parse_prefix(cur, mode, PREC_ATOM)?;
        return Ok(Expr::Neg(Box::new(inner)));
    }
    parse_atom(cur, mode)
}

fn parse_atom(cur: &mut Cursor, mode: ExprMode) -> Result<Expr, LexError> {
    let tok = cur.peek().tok.clone();
    match tok {
        Tok::Int(i) => {
            cur.bump();
            Ok(Expr::Int(i))
        }
        Tok::Real(r) => {
            cur.bump();
            Ok(Expr::Real(r))
        }
        Tok::Str(s) => {
            cur.bump();
            Ok(Expr::Str(s))
        }
        Tok::LParen => {
            cur.bump();
            let e = parse_level(cur, mode, 1)?;
            cur.expect(&Tok::RParen)?;
            Ok(e)
        }
        Tok::Ident(ref s) => match s.as_str() {
            "true" => {
                cur.bump();
                Ok(Expr::Bool(true))
            }
            "false" => {
                cur.bump();
                Ok(Expr::Bool(false))
            }
            "Void" => {
                cur.bump();
                Ok(Expr::Void)
            }
            "oldc" if mode == ExprMode::Transformer => {
                cur.bump();
                cur.expect(&Tok::Dot)?;
                Ok(Expr::OldField(cur.expect_ident("attribute name")?))
            }
            "input" if mode == ExprMode::Transformer => {
                cur.bump();
                Ok(Expr::Input(cur.expect_ident("attribute name")?))
            }
            "convert" if mode == ExprMode::Transformer => {
                cur.bump();
                let converter = cur.expect_ident("converter name")?;
                cur.expect(&Tok::LParen)?;
                let arg = parse_level(cur, mode, 1)?;
                cur.expect(&Tok::RParen)?;
                Ok(Expr::Convert {
                    converter,
                    arg: Box::new(arg),
                })
            }
            name if mode == ExprMode::Invariant && !is_keyword(name) => {
                let name = name.to_string();
                cur.bump();
                Ok(Expr::Attr(name))
            }
            _ => Err(cur.error("expression")),
        },
        _ => Err(cur.error("expression")),
    }
}

/// Failure while evaluating an expression. Callers map these onto the error
/// type of their context (invariant check or transformer interpretation).
#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    MissingAttribute(String),
    MissingInput(String),
    UnknownConverter(String),
    Conversion { converter: String, value: String },
    TypeMismatch(String),
    DivisionByZero,
    Overflow,
    NotAllowed(&'static str),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::MissingAttribute(n) => write!(f, "missing attribute {n}"),
            EvalError::MissingInput(n) => write!(f, "missing input {n}"),
            EvalError::UnknownConverter(c) => write!(f, "unknown converter {c}"),
            EvalError::Conversion { converter, value } => {
                write!(f, "{converter} cannot convert {value}")
            }
            EvalError::TypeMismatch(m) => write!(f, "type mismatch: {m}"),
            EvalError::DivisionByZero => f.write_str("integer division by zero"),
            EvalError::Overflow => f.write_str("arithmetic overflow"),
            EvalError::NotAllowed(what) => write!(f, "{what} not allowed here"),
        }
    }
}

/// Resolves the free names of an expression.
pub trait Scope {
    fn attribute(&self, _name: &str) -> Result<ObjectValue, EvalError> {
        Err(EvalError::NotAllowed("attribute reference"))
    }
    fn old_field(&self, _name: &str) -> Result<ObjectValue, EvalError> {
        Err(EvalError::NotAllowed("oldc reference"))
    }
    fn input(&self, _name: &str) -> Result<ObjectValue, EvalError> {
        Err(EvalError::NotAllowed("input"))
    }
    fn convert(&self, _converter: &str, _value: ObjectValue) -> Result<ObjectValue, EvalError> {
        Err(EvalError::NotAllowed("convert"))
    }
}

pub fn eval(expr: &Expr, scope: &dyn Scope) -> Result<ObjectValue, EvalError> {
    use ObjectValue as V;
    match expr {
        Expr::Attr(n) => scope.attribute(n),
        Expr::OldField(n) => scope.old_field(n),
        Expr::Input(n) => scope.input(n),
        Expr::Convert { converter, arg } => {
            let v = eval(arg, scope)?;
            scope.convert(converter, v)
        }
        Expr::Int(i) => Ok(V::Int(*i)),
        Expr::Real(r) => Ok(V::Real(*r)),
        Expr::Bool(b) => Ok(V::Bool(*b)),
        Expr::Str(s) => Ok(V::Str(s.clone())),
        Expr::Void => Ok(V::Void),
        Expr::Neg(e) => match eval(e, scope)? {
            V::Int(i) => i.checked_neg().map(V::Int).ok_or(EvalError::Overflow),
            V::Real(r) => Ok(V::Real(-r)),
            other => Err(EvalError::TypeMismatch(format!("cannot negate {}", other.kind()))),
        },
        Expr::Not(e) => match eval(e, scope)? {
            V::Bool(b) => Ok(V::Bool(!b)),
            other => Err(EvalError::TypeMismatch(format!("`not` on {}", other.kind()))),
        },
        Expr::Binary { op, lhs, rhs } => {
            let l = eval(lhs, scope)?;
            let r = eval(rhs, scope)?;
            apply_binary(*op, l, r)
        }
    }
}

fn as_real(v: &ObjectValue) -> Option<f64> {
    match v {
        ObjectValue::Int(i) => Some(*i as f64),
        ObjectValue::Real(r) => Some(*r),
        _ => None,
    }
}

fn finite(r: f64) -> Result<ObjectValue, EvalError> {
    if r.is_finite() {
        Ok(ObjectValue::Real(r))
    } else {
        Err(EvalError::Overflow)
    }
}

fn apply_binary(op: BinOp, l: ObjectValue, r: ObjectValue) -> Result<ObjectValue, EvalError> {
    use std::cmp::Ordering;
    use ObjectValue as V;
    let mismatch = |l: &V, r: &V| {
        EvalError::TypeMismatch(format!(
            "{} {} {}",
            l.kind(),
            op.symbol(),
            r.kind()
        ))
    };
    match op {
        BinOp::And | BinOp::Or => match (&l, &r) {
            (V::Bool(a), V::Bool(b)) => Ok(V::Bool(if op == BinOp::And {
                *a && *b
            } else {
                *a || *b
            })),
            _ => Err(mismatch(&l, &r)),
        },
        BinOp::Add | BinOp::Sub | BinOp::Mul => match (&l, &r) {
            (V::Int(a), V::Int(b)) => {
                let res = match op {
                    BinOp::Add => a.checked_add(*b),
                    BinOp::Sub => a.checked_sub(*b),
                    _ => a.checked_mul(*b),
                };
                res.map(V::Int).ok_or(EvalError::Overflow)
            }
            _ => match (as_real(&l), as_real(&r)) {
                (Some(a), Some(b)) => finite(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    _ => a * b,
                }),
                _ => Err(mismatch(&l, &r)),
            },
        },
        BinOp::IntDiv => match (&l, &r) {
            (V::Int(_), V::Int(0)) => Err(EvalError::DivisionByZero),
            (V::Int(a), V::Int(b)) => a.checked_div(*b).map(V::Int).ok_or(EvalError::Overflow),
            _ => Err(mismatch(&l, &r)),
        },
        BinOp::Eq | BinOp::Ne => {
            let equal = match (&l, &r) {
                (V::Void, other) | (other, V::Void) => other.is_void(),
                (V::Int(a), V::Int(b)) => a == b,
                (V::Str(a), V::Str(b)) => a == b,
                (V::Bool(a), V::Bool(b)) => a == b,
                (V::Ref(a), V::Ref(b)) => a == b,
                _ => match (as_real(&l), as_real(&r)) {
                    (Some(a), Some(b)) => a == b,
                    _ => return Err(mismatch(&l, &r)),
                },
            };
            Ok(V::Bool(if op == BinOp::Eq { equal } else { !equal }))
        }
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = match (&l, &r) {
                (V::Int(a), V::Int(b)) => Some(a.cmp(b)),
                (V::Str(a), V::Str(b)) => Some(a.cmp(b)),
                _ => match (as_real(&l), as_real(&r)) {
                    (Some(a), Some(b)) => a.partial_cmp(&b),
                    _ => return Err(mismatch(&l, &r)),
                },
            };
            let ord = ord.ok_or_else(|| mismatch(&l, &r))?;
            Ok(V::Bool(match op {
                BinOp::Lt => ord == Ordering::Less,
                BinOp::Le => ord != Ordering::Greater,
                BinOp::Gt => ord == Ordering::Greater,
                _ => ord != Ordering::Less,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::tokenize;
    use std::collections::HashMap;

    fn parse(src: &str, mode: ExprMode) -> Expr {
        let mut cur = Cursor::new(tokenize(src, false).unwrap());
        let e = parse_expr(&mut cur, mode).unwrap();
        assert!(cur.at(&Tok::Eof), "trailing input in {src}");
        e
    }

    struct Attrs(HashMap<&'static str, ObjectValue>);

    impl Scope for Attrs {
        fn attribute(&self, name: &str) -> Result<ObjectValue, EvalError> {
            self.0
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError::MissingAttribute(name.into()))
        }
    }

    fn run(src: &str, attrs: &[(&'static str, ObjectValue)]) -> Result<ObjectValue, EvalError> {
        let scope = Attrs(attrs.iter().cloned().collect());
        eval(&parse(src, ExprMode::Invariant), &scope)
    }

    #[test]
    fn precedence_and_rendering() {
        let e = parse("a - (b - c) * 2 > 0 and not x = Void or y", ExprMode::Invariant);
        assert_eq!(e.to_string(), "a - (b - c) * 2 > 0 and not x = Void or y");
        let e = parse("(a or b) and c", ExprMode::Invariant);
        assert_eq!(e.to_string(), "(a or b) and c");
        let e = parse("a - -5", ExprMode::Invariant);
        assert_eq!(e.to_string(), "a - -5");
    }

    #[test]
    fn double_negation_renders_with_parens() {
        let e = Expr::Neg(Box::new(Expr::Int(-1)));
        assert_eq!(e.to_string(), "-(-1)");
        assert_eq!(parse("-(-1)", ExprMode::Invariant), e);
        let e = Expr::Neg(Box::new(Expr::Neg(Box::new(Expr::Attr("x".into())))));
        assert_eq!(e.to_string(), "-(-x)");
        assert_eq!(parse("-(-x)", ExprMode::Invariant), e);
        let e = Expr::Neg(Box::new(Expr::Int(3)));
        assert_eq!(e.to_string(), "-(3)");
        assert_eq!(parse("-(3)", ExprMode::Invariant), e);
        assert_eq!(parse("-3", ExprMode::Invariant), Expr::Int(-3));
    }

    #[test]
    fn chained_comparison_rejected() {
        let mut cur = Cursor::new(tokenize("a < b < c", false).unwrap());
        assert!(parse_expr(&mut cur, ExprMode::Invariant).is_err());
    }

    #[test]
    fn transformer_atoms() {
        let e = parse(
            "convert STRING_TO_INTEGER (oldc.info) + input x",
            ExprMode::Transformer,
        );
        assert_eq!(e.to_string(), "convert STRING_TO_INTEGER (oldc.info) + input x");
        let mut cur = Cursor::new(tokenize("balance", false).unwrap());
        assert!(parse_expr(&mut cur, ExprMode::Transformer).is_err());
    }

    #[test]
    fn comparison_semantics() {
        use ObjectValue as V;
        assert_eq!(run("a > b", &[("a", V::Int(1)), ("b", V::Int(0))]), Ok(V::Bool(true)));
        assert_eq!(run("a >= 1.5", &[("a", V::Int(2))]), Ok(V::Bool(true)));
        assert_eq!(run("s < t", &[("s", V::Str("ab".into())), ("t", V::Str("b".into()))]), Ok(V::Bool(true)));
        assert_eq!(run("x /= Void", &[("x", V::Ref(3))]), Ok(V::Bool(true)));
        assert_eq!(run("x /= Void", &[("x", V::Void)]), Ok(V::Bool(false)));
        assert!(matches!(run("a < s", &[("a", V::Int(1)), ("s", V::Str("x".into()))]), Err(EvalError::TypeMismatch(_))));
        assert!(matches!(run("b < c", &[("b", V::Bool(true)), ("c", V::Bool(false))]), Err(EvalError::TypeMismatch(_))));
    }

    #[test]
    fn arithmetic_errors() {
        use ObjectValue as V;
        assert_eq!(run("7 // 2", &[]), Ok(V::Int(3)));
        assert_eq!(run("-7 // 2", &[]), Ok(V::Int(-3)));
        assert_eq!(run("1 // 0", &[]), Err(EvalError::DivisionByZero));
        assert_eq!(run("9223372036854775807 + 1", &[]), Err(EvalError::Overflow));
        assert_eq!(run("1 + 0.5", &[]), Ok(V::Real(1.5)));
        assert!(matches!(run("1.0 // 2", &[]), Err(EvalError::TypeMismatch(_))));
        assert_eq!(run("q", &[]), Err(EvalError::MissingAttribute("q".into())));
    }
}
