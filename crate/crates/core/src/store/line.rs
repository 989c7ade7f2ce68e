//! Line protocol encoding: `measurement[,tag=v...] field=v[,field=v...] timestamp_ns`.
//!
//! Escapes: measurement `,` ` ` `\`; tag keys, tag values and field keys
//! `,` `=` ` ` `\`; string field values `"` `\` and newline. Floats use the
//! shortest decimal that round-trips, integers carry an `i` suffix.

use std::fmt::{self, Write as _};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Float(f64),
    Integer(i64),
    Boolean(bool),
    String(String),
}

impl FieldValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FieldValue::Float(v) => Some(*v),
            FieldValue::Integer(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            FieldValue::Integer(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            FieldValue::Boolean(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            FieldValue::String(v) => Some(v),
            _ => None,
        }
    }
}

impl From<f64> for FieldValue {
    fn from(v: f64) -> Self {
        FieldValue::Float(v)
    }
}

impl From<i64> for FieldValue {
    fn from(v: i64) -> Self {
        FieldValue::Integer(v)
    }
}

impl From<bool> for FieldValue {
    fn from(v: bool) -> Self {
        FieldValue::Boolean(v)
    }
}

impl From<&str> for FieldValue {
    fn from(v: &str) -> Self {
        FieldValue::String(v.to_string())
    }
}

impl From<String> for FieldValue {
    fn from(v: String) -> Self {
        FieldValue::String(v)
    }
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Float(v) => write!(f, "{v}"),
            FieldValue::Integer(v) => write!(f, "{v}i"),
            FieldValue::Boolean(v) => write!(f, "{v}"),
            FieldValue::String(s) => {
                f.write_char('"')?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        c => f.write_char(c)?,
                    }
                }
                f.write_char('"')
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PointError {
    #[error("measurement is empty")]
    EmptyMeasurement,
    #[error("point has no fields")]
    NoFields,
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("empty tag key, tag value or field key")]
    EmptyKey,
    #[error("newline in identifier {0:?}")]
    Newline(String),
    #[error("field {0:?} is not finite")]
    NonFinite(String),
}

/// measurement, tags, fields, timestamp
pub(crate) type PointParts = (String, Vec<(String, String)>, Vec<(String, FieldValue)>, i64);

/// One time-series point. Tags are kept sorted by key.
#[derive(Debug, Clone, PartialEq)]
pub struct LinePoint {
    measurement: String,
    tags: Vec<(String, String)>,
    fields: Vec<(String, FieldValue)>,
    timestamp: i64,
}

impl LinePoint {
    pub fn new(
        measurement: impl Into<String>,
        mut tags: Vec<(String, String)>,
        fields: Vec<(String, FieldValue)>,
        timestamp: i64,
    ) -> Result<Self, PointError> {
        let measurement = measurement.into();
        if measurement.is_empty() {
            return Err(PointError::EmptyMeasurement);
        }
        if fields.is_empty() {
            return Err(PointError::NoFields);
        }
        tags.sort_by(|a, b| a.0.cmp(&b.0));
        for w in tags.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(PointError::DuplicateKey(w[0].0.clone()));
            }
        }
        let mut field_keys: Vec<&str> = fields.iter().map(|(k, _)| k.as_str()).collect();
        field_keys.sort_unstable();
        for w in field_keys.windows(2) {
            if w[0] == w[1] {
                return Err(PointError::DuplicateKey(w[0].to_string()));
            }
        }
        let idents = std::iter::once(&measurement)
            .chain(tags.iter().flat_map(|(k, v)| [k, v]))
            .chain(fields.iter().map(|(k, _)| k));
        for ident in idents {
            if ident.contains('\n') {
                return Err(PointError::Newline(ident.clone()));
            }
        }
        if tags.iter().any(|(k, v)| k.is_empty() || v.is_empty()) || fields.iter().any(|(k, _)| k.is_empty()) {
            return Err(PointError::EmptyKey);
        }
        for (k, v) in &fields {
            if matches!(v, FieldValue::Float(x) if !x.is_finite()) {
                return Err(PointError::NonFinite(k.clone()));
            }
        }
        Ok(LinePoint { measurement, tags, fields, timestamp })
    }

    pub fn builder(measurement: impl Into<String>) -> PointBuilder {
        PointBuilder { measurement: measurement.into(), tags: Vec::new(), fields: Vec::new(), timestamp: 0 }
    }

    pub fn measurement(&self) -> &str {
        &self.measurement
    }

    pub fn tags(&self) -> &[(String, String)] {
        &self.tags
    }

    pub fn fields(&self) -> &[(String, FieldValue)] {
        &self.fields
    }

    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn field(&self, key: &str) -> Option<&FieldValue> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Overlays `other`'s fields onto this point: existing keys are replaced,
    /// new keys appended.
    pub(crate) fn merge_fields(&mut self, other: Vec<(String, FieldValue)>) {
        for (k, v) in other {
            match self.fields.iter_mut().find(|(key, _)| *key == k) {
                Some(slot) => slot.1 = v,
                None => self.fields.push((k, v)),
            }
        }
    }

    pub(crate) fn into_parts(self) -> PointParts {
        (self.measurement, self.tags, self.fields, self.timestamp)
    }
}

pub struct PointBuilder {
    measurement: String,
    tags: Vec<(String, String)>,
    fields: Vec<(String, FieldValue)>,
    timestamp: i64,
}

impl PointBuilder {
    pub fn tag(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.tags.push((key.into(), value.into()));
        self
    }

    pub fn field(mut self, key: impl Into<String>, value: impl Into<FieldValue>) -> Self {
        self.fields.push((key.into(), value.into()));
        self
    }

    /// Adds the field only when `value` is present.
    pub fn field_opt<V: Into<FieldValue>>(self, key: impl Into<String>, value: Option<V>) -> Self {
        match value {
            Some(v) => self.field(key, v),
            None => self,
        }
    }

    pub fn timestamp(mut self, ns: i64) -> Self {
        self.timestamp = ns;
        self
    }

    pub fn build(self) -> Result<LinePoint, PointError> {
        LinePoint::new(self.measurement, self.tags, self.fields, self.timestamp)
    }
}

fn escape_into(out: &mut String, s: &str, special: &[char]) {
    for c in s.chars() {
        if c == '\\' || special.contains(&c) {
            out.push('\\');
        }
        out.push(c);
    }
}

const MEASUREMENT_SPECIAL: &[char] = &[',', ' '];
const KEY_SPECIAL: &[char] = &[',', '=', ' '];

pub fn encode_line(p: &LinePoint) -> String {
    let mut out = String::with_capacity(64);
    escape_into(&mut out, &p.measurement, MEASUREMENT_SPECIAL);
    for (k, v) in &p.tags {
        out.push(',');
        escape_into(&mut out, k, KEY_SPECIAL);
        out.push('=');
        escape_into(&mut out, v, KEY_SPECIAL);
    }
    out.push(' ');
    for (i, (k, v)) in p.fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        escape_into(&mut out, k, KEY_SPECIAL);
        out.push('=');
        write!(out, "{v}").expect("writing to a String");
    }
    write!(out, " {}", p.timestamp).expect("writing to a String");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("invalid escape at byte {0}")]
    BadEscape(usize),
    #[error("missing field set")]
    MissingFields,
    #[error("missing timestamp")]
    MissingTimestamp,
    #[error("invalid timestamp {0:?}")]
    BadTimestamp(String),
    #[error("invalid field value {0:?}")]
    BadFieldValue(String),
    #[error("unterminated string field")]
    UnterminatedString,
    #[error("expected {expected:?} at byte {at}")]
    Expected { expected: char, at: usize },
    #[error(transparent)]
    Point(#[from] PointError),
}

struct Cursor<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { chars: src.char_indices().collect(), pos: 0, _src: src }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(usize::MAX, |&(i, _)| i)
    }

    /// Reads until an unescaped terminator; `escapable` lists what may follow
    /// a backslash.
    fn read_token(&mut self, terminators: &[char], escapable: &[char]) -> Result<String, DecodeError> {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if terminators.contains(&c) {
                break;
            }
            if c == '\\' {
                let at = self.offset();
                self.pos += 1;
                match self.peek() {
                    Some(e) if e == '\\' || escapable.contains(&e) => out.push(e),
                    _ => return Err(DecodeError::BadEscape(at)),
                }
            } else {
                out.push(c);
            }
            self.pos += 1;
        }
        Ok(out)
    }

    fn expect(&mut self, expected: char) -> Result<(), DecodeError> {
        if self.peek() == Some(expected) {
            self.pos += 1;
            Ok(())
        } else {
            Err(DecodeError::Expected { expected, at: self.offset() })
        }
    }

    fn read_string_value(&mut self) -> Result<String, DecodeError> {
        self.expect('"')?;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(DecodeError::UnterminatedString),
                Some('"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some('\\') => {
                    let at = self.offset();
                    self.pos += 1;
                    match self.peek() {
                        Some('"') => out.push('"'),
                        Some('\\') => out.push('\\'),
                        Some('n') => out.push('\n'),
                        _ => return Err(DecodeError::BadEscape(at)),
                    }
                    self.pos += 1;
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }
}

fn parse_scalar(raw: &str) -> Result<FieldValue, DecodeError> {
    let bad = || DecodeError::BadFieldValue(raw.to_string());
    match raw {
        "true" => return Ok(FieldValue::Boolean(true)),
        "false" => return Ok(FieldValue::Boolean(false)),
        _ => {}
    }
    if let Some(int) = raw.strip_suffix('i') {
        return int.parse().map(FieldValue::Integer).map_err(|_| bad());
    }
    let starts_numeric = raw.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+' || c == '.');
    if !starts_numeric {
        return Err(bad());
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(FieldValue::Float(v)),
        _ => Err(bad()),
    }
}

pub fn decode_line(line: &str) -> Result<LinePoint, DecodeError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let mut cur = Cursor::new(line);
    let measurement = cur.read_token(&[',', ' '], MEASUREMENT_SPECIAL)?;
    let mut tags = Vec::new();
    while cur.peek() == Some(',') {
        cur.pos += 1;
        let key = cur.read_token(&['=', ',', ' '], KEY_SPECIAL)?;
        cur.expect('=')?;
        let value = cur.read_token(&[',', ' ', '='], KEY_SPECIAL)?;
        tags.push((key, value));
    }
    if cur.peek() != Some(' ') {
        return Err(DecodeError::MissingFields);
    }
    cur.pos += 1;
    let mut fields = Vec::new();
    loop {
        if cur.peek().is_none() || cur.peek() == Some(' ') {
            return Err(DecodeError::MissingFields);
        }
        let key = cur.read_token(&['=', ',', ' '], KEY_SPECIAL)?;
        if cur.peek() != Some('=') {
            return Err(DecodeError::MissingFields);
        }
        cur.pos += 1;
        let value = if cur.peek() == Some('"') {
            FieldValue::String(cur.read_string_value()?)
        } else {
            let start = cur.pos;
            while cur.peek().is_some_and(|c| c != ',' && c != ' ') {
                cur.pos += 1;
            }
            let raw: String = cur.chars[start..cur.pos].iter().map(|&(_, c)| c).collect();
            parse_scalar(&raw)?
        };
        fields.push((key, value));
        match cur.peek() {
            Some(',') => cur.pos += 1,
            Some(' ') => break,
            None => return Err(DecodeError::MissingTimestamp),
            Some(_) => return Err(DecodeError::Expected { expected: ' ', at: cur.offset() }),
        }
    }
    cur.pos += 1;
    let ts: String = cur.chars[cur.pos..].iter().map(|&(_, c)| c).collect();
    if ts.is_empty() {
        return Err(DecodeError::MissingTimestamp);
    }
    let timestamp = ts.parse::<i64>().map_err(|_| DecodeError::BadTimestamp(ts.clone()))?;
    Ok(LinePoint::new(measurement, tags, fields, timestamp)?)
}
