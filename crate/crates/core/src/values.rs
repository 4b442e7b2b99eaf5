//! Typed test-input values.
//!
//! A [`TypedValue`] has two renderings. [`sim_text`] is a compact, lossy
//! string used for edit-distance similarity. [`encode_typed`] is a lossless
//! JSON envelope (`{"t":<tag>,"v":<payload>}`) used to ship inputs to the
//! test adapter and to key deduplication.

use std::fmt;

use serde_json::{json, Map, Number, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValueError {
    #[error("malformed typed envelope: {0}")]
    MalformedEnvelope(String),
    #[error("char payload must hold exactly one scalar, found {0}")]
    CharArity(usize),
    #[error("text {text:?} does not fit the {kind} shape")]
    Unparseable { text: String, kind: ValueKind },
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Null,
    Bool,
    Int,
    Float,
    Char,
    Str,
    Array,
    Object,
}

impl ValueKind {
    pub fn tag(self) -> &'static str {
        match self {
            ValueKind::Null => "null",
            ValueKind::Bool => "bool",
            ValueKind::Int => "int",
            ValueKind::Float => "float",
            ValueKind::Char => "char",
            ValueKind::Str => "str",
            ValueKind::Array => "arr",
            ValueKind::Object => "obj",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Recursive model of one test input.
///
/// Equality is structural; floats compare by bit pattern, with every NaN
/// equal to every other NaN, so the codec round-trip is checkable with `==`.
#[derive(Debug, Clone)]
pub enum TypedValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Char(char),
    Str(String),
    Array(Vec<TypedValue>),
    Object(Vec<(String, TypedValue)>),
}

impl PartialEq for TypedValue {
    fn eq(&self, other: &Self) -> bool {
        use TypedValue::*;
        match (self, other) {
            (Null, Null) => true,
            (Bool(a), Bool(b)) => a == b,
            (Int(a), Int(b)) => a == b,
            (Float(a), Float(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (Char(a), Char(b)) => a == b,
            (Str(a), Str(b)) => a == b,
            (Array(a), Array(b)) => a == b,
            (Object(a), Object(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for TypedValue {}

impl TypedValue {
    pub fn str(s: impl Into<String>) -> Self {
        TypedValue::Str(s.into())
    }

    /// Builds an object, rejecting repeated field names.
    pub fn object(entries: Vec<(String, TypedValue)>) -> Result<Self, ValueError> {
        check_unique(entries.iter().map(|(k, _)| k.as_str()))?;
        Ok(TypedValue::Object(entries))
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            TypedValue::Null => ValueKind::Null,
            TypedValue::Bool(_) => ValueKind::Bool,
            TypedValue::Int(_) => ValueKind::Int,
            TypedValue::Float(_) => ValueKind::Float,
            TypedValue::Char(_) => ValueKind::Char,
            TypedValue::Str(_) => ValueKind::Str,
            TypedValue::Array(_) => ValueKind::Array,
            TypedValue::Object(_) => ValueKind::Object,
        }
    }
}

fn check_unique<'a>(names: impl Iterator<Item = &'a str>) -> Result<(), ValueError> {
    let mut seen = std::collections::HashSet::new();
    for name in names {
        if !seen.insert(name) {
            return Err(ValueError::DuplicateName(name.to_string()));
        }
    }
    Ok(())
}

/// The argument list of one call to the buggy function, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParamTuple {
    entries: Vec<(String, TypedValue)>,
}

impl ParamTuple {
    pub fn new(entries: Vec<(String, TypedValue)>) -> Result<Self, ValueError> {
        check_unique(entries.iter().map(|(k, _)| k.as_str()))?;
        Ok(ParamTuple { entries })
    }

    /// Single-parameter tuple.
    pub fn single(name: impl Into<String>, value: TypedValue) -> Self {
        ParamTuple {
            entries: vec![(name.into(), value)],
        }
    }

    pub fn entries(&self) -> &[(String, TypedValue)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&TypedValue> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    /// Replaces the value at `index`, keeping the name.
    pub fn with_value(&self, index: usize, value: TypedValue) -> ParamTuple {
        let mut entries = self.entries.clone();
        entries[index].1 = value;
        ParamTuple { entries }
    }

    pub fn to_object(&self) -> TypedValue {
        TypedValue::Object(self.entries.clone())
    }

    pub fn from_object(value: TypedValue) -> Result<Self, ValueError> {
        match value {
            TypedValue::Object(entries) => ParamTuple::new(entries),
            other => Err(ValueError::MalformedEnvelope(format!(
                "parameter tuple must be an obj envelope, found {}",
                other.kind()
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Similarity text
// ---------------------------------------------------------------------------

/// Compact rendering used for similarity. A bare string (or a string directly
/// bound to a parameter) renders unquoted; strings nested in composites are
/// quoted with `\"` and `\\` escapes.
pub fn sim_text(value: &TypedValue) -> String {
    let mut out = String::new();
    render(value, false, &mut out);
    out
}

pub fn params_sim_text(params: &ParamTuple) -> String {
    let mut out = String::from("{");
    for (i, (name, value)) in params.entries.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(name);
        out.push(':');
        render(value, false, &mut out);
    }
    out.push('}');
    out
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "Infinity" } else { "-Infinity" }.to_string()
    } else {
        format!("{x:?}")
    }
}

fn parse_float(text: &str) -> Option<f64> {
    match text {
        "NaN" => Some(f64::NAN),
        "Infinity" => Some(f64::INFINITY),
        "-Infinity" => Some(f64::NEG_INFINITY),
        // Rust also accepts "inf"/"nan" spellings; the renderer never emits them.
        t if t.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E') => None,
        t => t.parse().ok(),
    }
}

fn render(value: &TypedValue, nested: bool, out: &mut String) {
    match value {
        TypedValue::Null => out.push_str("null"),
        TypedValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        TypedValue::Int(i) => out.push_str(&i.to_string()),
        TypedValue::Float(x) => out.push_str(&format_float(*x)),
        TypedValue::Char(c) => out.push(*c),
        TypedValue::Str(s) if nested => {
            out.push('"');
            for c in s.chars() {
                if c == '"' || c == '\\' {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
        TypedValue::Str(s) => out.push_str(s),
        TypedValue::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                render(item, true, out);
            }
            out.push(']');
        }
        TypedValue::Object(entries) => {
            out.push('{');
            for (i, (name, item)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(name);
                out.push(':');
                render(item, true, out);
            }
            out.push('}');
        }
    }
}

// ---------------------------------------------------------------------------
// Typed envelope codec
// ---------------------------------------------------------------------------

pub fn to_envelope(value: &TypedValue) -> Value {
    let payload = match value {
        TypedValue::Null => Value::Null,
        TypedValue::Bool(b) => Value::Bool(*b),
        TypedValue::Int(i) => Value::Number((*i).into()),
        TypedValue::Float(x) => match Number::from_f64(*x) {
            Some(n) => Value::Number(n),
            None => Value::String(format_float(*x)),
        },
        TypedValue::Char(c) => Value::String(c.to_string()),
        TypedValue::Str(s) => Value::String(s.clone()),
        TypedValue::Array(items) => Value::Array(items.iter().map(to_envelope).collect()),
        TypedValue::Object(entries) => Value::Array(
            entries
                .iter()
                .map(|(k, v)| json!([k, to_envelope(v)]))
                .collect(),
        ),
    };
    let mut map = Map::new();
    map.insert("t".into(), Value::String(value.kind().tag().into()));
    map.insert("v".into(), payload);
    Value::Object(map)
}

/// Lossless JSON text for a value. Also the identity key for deduplication.
pub fn encode_typed(value: &TypedValue) -> String {
    to_envelope(value).to_string()
}

/// Parameter tuples travel as `obj` envelopes.
pub fn encode_params(params: &ParamTuple) -> String {
    params_envelope(params).to_string()
}

pub fn params_envelope(params: &ParamTuple) -> Value {
    to_envelope(&params.to_object())
}

pub fn decode_typed(text: &str) -> Result<TypedValue, ValueError> {
    let json: Value =
        serde_json::from_str(text).map_err(|e| ValueError::MalformedEnvelope(e.to_string()))?;
    from_envelope(&json)
}

pub fn decode_params(text: &str) -> Result<ParamTuple, ValueError> {
    ParamTuple::from_object(decode_typed(text)?)
}

fn malformed(msg: impl Into<String>) -> ValueError {
    ValueError::MalformedEnvelope(msg.into())
}

pub fn from_envelope(json: &Value) -> Result<TypedValue, ValueError> {
    let obj = json
        .as_object()
        .ok_or_else(|| malformed("envelope must be an object"))?;
    let tag = obj
        .get("t")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing string field `t`"))?;
    let payload = obj.get("v").ok_or_else(|| malformed("missing field `v`"))?;
    let bad = || malformed(format!("payload does not match tag `{tag}`"));
    Ok(match tag {
        "null" => TypedValue::Null,
        "bool" => TypedValue::Bool(payload.as_bool().ok_or_else(bad)?),
        "int" => TypedValue::Int(payload.as_i64().ok_or_else(bad)?),
        "float" => match payload {
            Value::Number(n) => TypedValue::Float(n.as_f64().ok_or_else(bad)?),
            Value::String(s) => match s.as_str() {
                "NaN" | "Infinity" | "-Infinity" => {
                    TypedValue::Float(parse_float(s).ok_or_else(bad)?)
                }
                _ => return Err(bad()),
            },
            _ => return Err(bad()),
        },
        "char" => {
            let s = payload.as_str().ok_or_else(bad)?;
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => TypedValue::Char(c),
                _ => return Err(ValueError::CharArity(s.chars().count())),
            }
        }
        "str" => TypedValue::Str(payload.as_str().ok_or_else(bad)?.to_string()),
        "arr" => TypedValue::Array(
            payload
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(from_envelope)
                .collect::<Result<_, _>>()?,
        ),
        "obj" => {
            let mut entries = Vec::new();
            for entry in payload.as_array().ok_or_else(bad)? {
                match entry.as_array().map(Vec::as_slice) {
                    Some([Value::String(name), node]) => {
                        entries.push((name.clone(), from_envelope(node)?))
                    }
                    _ => return Err(malformed("obj entries must be [name, envelope] pairs")),
                }
            }
            TypedValue::object(entries).map_err(|e| malformed(e.to_string()))?
        }
        other => return Err(malformed(format!("unknown tag `{other}`"))),
    })
}

// ---------------------------------------------------------------------------
// Skeleton-guided parsing of similarity text
// ---------------------------------------------------------------------------

/// Reads `text` back into a value shaped like `skeleton`.
///
/// Used to turn a string-level mutant of `sim_text(skeleton)` back into a
/// typed input. Arrays may change length; every element is read with the
/// skeleton of the element at the same index (or the last one).
pub fn parse_guided(text: &str, skeleton: &TypedValue) -> Result<TypedValue, ValueError> {
    let unparseable = || ValueError::Unparseable {
        text: text.to_string(),
        kind: skeleton.kind(),
    };
    match skeleton {
        TypedValue::Str(_) => Ok(TypedValue::Str(text.to_string())),
        TypedValue::Array(_) | TypedValue::Object(_) => {
            let chars: Vec<char> = text.chars().collect();
            let mut cursor = Cursor { chars: &chars, pos: 0 };
            let value = cursor.value(skeleton).ok_or_else(unparseable)?;
            if cursor.pos != chars.len() {
                return Err(unparseable());
            }
            Ok(value)
        }
        scalar => scalar_from_token(text, scalar).ok_or_else(unparseable),
    }
}

/// Parameter-tuple counterpart of [`parse_guided`]. Top-level string
/// parameters are unquoted, so they are delimited by the next `,name:` or by
/// the closing brace.
pub fn parse_params_guided(text: &str, skeleton: &ParamTuple) -> Result<ParamTuple, ValueError> {
    let unparseable = || ValueError::Unparseable {
        text: text.to_string(),
        kind: ValueKind::Object,
    };
    let inner = text
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(unparseable)?;
    let mut rest = inner;
    let mut entries = Vec::with_capacity(skeleton.len());
    for (i, (name, shape)) in skeleton.entries.iter().enumerate() {
        if i > 0 {
            rest = rest.strip_prefix(',').ok_or_else(unparseable)?;
        }
        rest = rest
            .strip_prefix(name.as_str())
            .and_then(|r| r.strip_prefix(':'))
            .ok_or_else(unparseable)?;
        let end = match skeleton.entries.get(i + 1) {
            None => rest.len(),
            Some((next, _)) => match shape {
                TypedValue::Str(_) => rest.find(&format!(",{next}:")).ok_or_else(unparseable)?,
                _ => {
                    let chars: Vec<char> = rest.chars().collect();
                    let mut cursor = Cursor { chars: &chars, pos: 0 };
                    cursor.top_level_extent(shape).ok_or_else(unparseable)?
                }
            },
        };
        let (field, tail) = rest.split_at(end);
        entries.push((name.clone(), parse_guided(field, shape)?));
        rest = tail;
    }
    if !rest.is_empty() {
        return Err(unparseable());
    }
    ParamTuple::new(entries)
}

fn scalar_from_token(token: &str, skeleton: &TypedValue) -> Option<TypedValue> {
    match skeleton {
        TypedValue::Null => (token == "null").then_some(TypedValue::Null),
        TypedValue::Bool(_) => match token {
            "true" => Some(TypedValue::Bool(true)),
            "false" => Some(TypedValue::Bool(false)),
            _ => None,
        },
        TypedValue::Int(_) => token.parse().ok().map(TypedValue::Int),
        TypedValue::Float(_) => parse_float(token).map(TypedValue::Float),
        TypedValue::Char(_) => {
            let mut chars = token.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Some(TypedValue::Char(c)),
                _ => None,
            }
        }
        TypedValue::Str(_) => Some(TypedValue::Str(token.to_string())),
        TypedValue::Array(_) | TypedValue::Object(_) => None,
    }
}

struct Cursor<'a> {
    chars: &'a [char],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> Option<()> {
        (self.peek()? == c).then(|| self.pos += 1)
    }

    /// Length in bytes of a non-string top-level field value starting here.
    fn top_level_extent(&mut self, shape: &TypedValue) -> Option<usize> {
        let start = self.pos;
        self.value(shape)?;
        Some(self.chars[start..self.pos].iter().map(|c| c.len_utf8()).sum())
    }

    fn token(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if matches!(c, ',' | ']' | '}') {
                break;
            }
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn value(&mut self, shape: &TypedValue) -> Option<TypedValue> {
        match shape {
            TypedValue::Char(_) => {
                let c = self.peek()?;
                self.pos += 1;
                Some(TypedValue::Char(c))
            }
            TypedValue::Str(_) => {
                self.eat('"')?;
                let mut s = String::new();
                loop {
                    let c = self.peek()?;
                    self.pos += 1;
                    match c {
                        '"' => break,
                        '\\' => {
                            s.push(self.peek()?);
                            self.pos += 1;
                        }
                        c => s.push(c),
                    }
                }
                Some(TypedValue::Str(s))
            }
            TypedValue::Array(items) => {
                self.eat('[')?;
                let mut out = Vec::new();
                if self.eat(']').is_some() {
                    return Some(TypedValue::Array(out));
                }
                loop {
                    let elem_shape = items.get(out.len()).or(items.last())?;
                    out.push(self.value(elem_shape)?);
                    if self.eat(']').is_some() {
                        return Some(TypedValue::Array(out));
                    }
                    self.eat(',')?;
                }
            }
            TypedValue::Object(fields) => {
                self.eat('{')?;
                let mut out: Vec<(String, TypedValue)> = Vec::new();
                if self.eat('}').is_some() {
                    return Some(TypedValue::Object(out));
                }
                loop {
                    let start = self.pos;
                    while self.peek()? != ':' {
                        self.pos += 1;
                    }
                    let name: String = self.chars[start..self.pos].iter().collect();
                    self.pos += 1;
                    let field_shape = fields.iter().find(|(k, _)| *k == name).map(|(_, v)| v)?;
                    if out.iter().any(|(k, _)| *k == name) {
                        return None;
                    }
                    let v = self.value(field_shape)?;
                    out.push((name, v));
                    if self.eat('}').is_some() {
                        return Some(TypedValue::Object(out));
                    }
                    self.eat(',')?;
                }
            }
            scalar => {
                let tok = self.token();
                scalar_from_token(&tok, scalar)
            }
        }
    }
}
