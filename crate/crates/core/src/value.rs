use std::fmt;

/// A runtime value stored in an object field.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectValue {
    Int(i64),
    Real(f64),
    Bool(bool),
    Str(String),
    Void,
    Ref(usize),
}

impl ObjectValue {
    pub fn kind(&self) -> &'static str {
        match self {
            ObjectValue::Int(_) => "INTEGER",
            ObjectValue::Real(_) => "REAL",
            ObjectValue::Bool(_) => "BOOLEAN",
            ObjectValue::Str(_) => "STRING",
            ObjectValue::Void => "Void",
            ObjectValue::Ref(_) => "reference",
        }
    }

    pub fn is_void(&self) -> bool {
        matches!(self, ObjectValue::Void)
    }
}

/// Shortest round-tripping decimal with a mandatory `.`.
pub fn format_real(r: f64) -> String {
    let s = format!("{r}");
    if s.contains('.') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn quote_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for ObjectValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectValue::Int(i) => write!(f, "{i}"),
            ObjectValue::Real(r) => f.write_str(&format_real(*r)),
            ObjectValue::Bool(b) => write!(f, "{b}"),
            ObjectValue::Str(s) => f.write_str(&quote_string(s)),
            ObjectValue::Void => f.write_str("Void"),
            ObjectValue::Ref(id) => write!(f, "ref {id}"),
        }
    }
}

/// Parses a single value in object-file literal syntax: decimal integer
/// (optionally negative), real with a `.`, `true`/`false`, quoted string,
/// `Void` or `ref <id>`.
pub fn parse_value(text: &str) -> Result<ObjectValue, String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("empty value".into());
    }
    match t {
        "true" => return Ok(ObjectValue::Bool(true)),
        "false" => return Ok(ObjectValue::Bool(false)),
        "Void" => return Ok(ObjectValue::Void),
        _ => {}
    }
    if let Some(rest) = t.strip_prefix("ref ") {
        return rest
            .trim()
            .parse::<usize>()
            .map(ObjectValue::Ref)
            .map_err(|_| format!("bad reference `{t}`"));
    }
    if t.starts_with('"') {
        return parse_quoted(t).map(ObjectValue::Str);
    }
    let digits = t.strip_prefix('-').unwrap_or(t);
    if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
        return t
            .parse::<i64>()
            .map(ObjectValue::Int)
            .map_err(|_| format!("integer out of range `{t}`"));
    }
    if t.contains('.')
        && digits
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'))
        && digits.starts_with(|c: char| c.is_ascii_digit())
    {
        return match t.parse::<f64>() {
            Ok(r) if r.is_finite() => Ok(ObjectValue::Real(r)),
            _ => Err(format!("bad real `{t}`")),
        };
    }
    Err(format!("unrecognized value `{t}`"))
}

fn parse_quoted(t: &str) -> Result<String, String> {
    let inner = t
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .filter(|_| t.len() >= 2)
        .ok_or_else(|| format!("unterminated string `{t}`"))?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                Some('n') => out.push('\n'),
                _ => return Err(format!("bad escape in `{t}`")),
            },
            '"' => return Err(format!("unescaped quote in `{t}`")),
            c => out.push(c),
        }
    }
    Ok(out)
}
