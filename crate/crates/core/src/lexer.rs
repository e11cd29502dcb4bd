//! Tokenizer shared by the class DSL, the transformer language and the
//! object/history file readers.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    /// Text after `--` up to end of line, leading whitespace trimmed.
    Comment(String),
    Newline,
    Colon,
    Comma,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Dot,
    Assign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    SlashSlash,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(i) => write!(f, "integer `{i}`"),
            Tok::Real(r) => write!(f, "real `{r}`"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::Comment(_) => f.write_str("comment"),
            Tok::Newline => f.write_str("end of line"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Assign => f.write_str("`:=`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Ne => f.write_str("`/=`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::SlashSlash => f.write_str("`//`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

/// A lexical error: position plus a description of what was expected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
}

/// Words that can never be used as identifiers.
pub const KEYWORDS: &[&str] = &[
    "class",
    "feature",
    "end",
    "invariant",
    "version",
    "attached",
    "detachable",
    "and",
    "or",
    "not",
    "Void",
    "true",
    "false",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Tokenizes `src`. Newline and comment tokens are only emitted when
/// `line_mode` is set; otherwise both are skipped as whitespace.
pub fn tokenize(src: &str, line_mode: bool) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! push {
        ($tok:expr, $l:expr, $c:expr) => {
            out.push(Token {
                tok: $tok,
                line: $l,
                column: $c,
            })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        match c {
            '\n' => {
                if line_mode {
                    push!(Tok::Newline, l0, c0);
                }
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '-' if chars.get(i + 1) == Some(&'-') => {
                let start = i + 2;
                let mut j = start;
                while j < chars.len() && chars[j] != '\n' {
                    j += 1;
                }
                if line_mode {
                    let text: String = chars[start..j].iter().collect();
                    push!(Tok::Comment(text.trim().to_string()), l0, c0);
                }
                col += j - i;
                i = j;
            }
            '"' => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => {
                            return Err(LexError {
                                line: l0,
                                column: c0,
                                expected: "closing `\"`".into(),
                            })
                        }
                        Some('"') => break,
                        Some('\\') => {
                            let esc = match chars.get(j + 1) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                _ => {
                                    return Err(LexError {
                                        line,
                                        column: col + (j - i),
                                        expected: "escape `\\\"`, `\\\\` or `\\n`".into(),
                                    })
                                }
                            };
                            s.push(esc);
                            j += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                push!(Tok::Str(s), l0, c0);
                col += j + 1 - i;
                i = j + 1;
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let mut is_real = false;
                if chars.get(j) == Some(&'.') && chars.get(j + 1).is_some_and(|d| d.is_ascii_digit())
                {
                    is_real = true;
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    if matches!(chars.get(j), Some('e' | 'E')) {
                        let mut k = j + 1;
                        if matches!(chars.get(k), Some('+' | '-')) {
                            k += 1;
                        }
                        if chars.get(k).is_some_and(|d| d.is_ascii_digit()) {
                            while k < chars.len() && chars[k].is_ascii_digit() {
                                k += 1;
                            }
                            j = k;
                        }
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let tok = if is_real {
                    match text.parse::<f64>() {
                        Ok(r) if r.is_finite() => Tok::Real(r),
                        _ => {
                            return Err(LexError {
                                line: l0,
                                column: c0,
                                expected: "finite real literal".into(),
                            })
                        }
                    }
                } else {
                    Tok::Int(text.parse::<i64>().map_err(|_| LexError {
                        line: l0,
                        column: c0,
                        expected: "integer literal within 64-bit range".into(),
                    })?)
                };
                push!(tok, l0, c0);
                col += j - i;
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let text: String = chars[i..j].iter().collect();
                push!(Tok::Ident(text), l0, c0);
                col += j - i;
                i = j;
            }
            _ => {
                let next = chars.get(i + 1).copied();
                let (tok, len) = match (c, next) {
                    (':', Some('=')) => (Tok::Assign, 2),
                    (':', _) => (Tok::Colon, 1),
                    (',', _) => (Tok::Comma, 1),
                    ('[', _) => (Tok::LBracket, 1),
                    (']', _) => (Tok::RBracket, 1),
                    ('(', _) => (Tok::LParen, 1),
                    (')', _) => (Tok::RParen, 1),
                    ('.', _) => (Tok::Dot, 1),
                    ('=', _) => (Tok::Eq, 1),
                    ('/', Some('=')) => (Tok::Ne, 2),
                    ('/', Some('/')) => (Tok::SlashSlash, 2),
                    ('<', Some('=')) => (Tok::Le, 2),
                    ('<', _) => (Tok::Lt, 1),
                    ('>', Some('=')) => (Tok::Ge, 2),
                    ('>', _) => (Tok::Gt, 1),
                    ('+', _) => (Tok::Plus, 1),
                    ('-', _) => (Tok::Minus, 1),
                    ('*', _) => (Tok::Star, 1),
                    _ => {
                        return Err(LexError {
                            line: l0,
                            column: c0,
                            expected: format!("a token, found `{c}`"),
                        })
                    }
                };
                push!(tok, l0, c0);
                i += len;
                col += len;
            }
        }
    }
    push!(Tok::Eof, line, col);
    Ok(out)
}

/// Cursor over a token vector with the small helpers every parser needs.
pub struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

impl Cursor {
    pub fn new(toks: Vec<Token>) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    pub fn peek_at(&self, ahead: usize) -> &Tok {
        &self.toks[(self.pos + ahead).min(self.toks.len() - 1)].tok
    }

    pub fn bump(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    pub fn at(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    pub fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn error(&self, expected: impl Into<String>) -> LexError {
        let t = self.peek();
        LexError {
            line: t.line,
            column: t.column,
            expected: format!("{}, found {}", expected.into(), t.tok),
        }
    }

    pub fn expect(&mut self, tok: &Tok) -> Result<Token, LexError> {
        if self.at(tok) {
            Ok(self.bump())
        } else {
            Err(self.error(tok.to_string()))
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<(), LexError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(format!("`{kw}`")))
        }
    }

    /// A non-keyword identifier.
    pub fn expect_ident(&mut self, what: &str) -> Result<String, LexError> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(what.to_string())),
        }
    }

    pub fn skip_newlines(&mut self) {
        while matches!(self.peek().tok, Tok::Newline | Tok::Comment(_)) {
            self.bump();
        }
    }
}
