//! `application/link-format` TimeMap documents.
//!
//! The parser is deliberately forgiving: archives and aggregators emit
//! entries with bare attribute values, missing datetimes, stray separators
//! and the like. Each malformed entry is skipped and counted; the document
//! only fails as a whole when nothing in it looks like a link entry.

use std::fmt::Write as _;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};

/// One `<target>; name="value"; ...` entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkEntry {
    pub target: String,
    /// Relation tokens in document order, e.g. `["first", "memento"]`.
    pub rel: Vec<String>,
    pub datetime: Option<DateTime<Utc>>,
    /// Attributes other than the first `rel` and a well-formed first `datetime`.
    pub raw_attributes: Vec<(String, String)>,
}

impl LinkEntry {
    pub fn new(target: impl Into<String>, rel: &str) -> Self {
        LinkEntry {
            target: target.into(),
            rel: rel.split_whitespace().map(str::to_owned).collect(),
            datetime: None,
            raw_attributes: Vec::new(),
        }
    }

    pub fn with_datetime(mut self, datetime: DateTime<Utc>) -> Self {
        self.datetime = Some(datetime);
        self
    }

    pub fn with_attribute(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.raw_attributes.push((name.into(), value.into()));
        self
    }

    /// Case-insensitive relation token match.
    pub fn has_rel(&self, token: &str) -> bool {
        self.rel.iter().any(|r| r.eq_ignore_ascii_case(token))
    }

    /// True when any relation token mentions `memento` (`memento`,
    /// `first memento`, `last memento`, ...).
    pub fn is_memento(&self) -> bool {
        self.rel
            .iter()
            .any(|r| r.to_ascii_lowercase().contains("memento"))
    }

    /// The relation value as written in a document, tokens joined by a space.
    pub fn rel_value(&self) -> String {
        self.rel.join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawTimeMap {
    pub entries: Vec<LinkEntry>,
    /// URI-R: the `rel="original"` target, or the caller-declared URI.
    pub original: Option<String>,
    pub self_uri: Option<String>,
    pub timegate: Option<String>,
    /// Entries dropped because they were malformed.
    pub skipped: usize,
    /// `datetime` attributes that failed to parse as RFC 1123.
    pub bad_datetimes: usize,
}

impl RawTimeMap {
    /// Builds a map from entries, deriving `original`, `self_uri` and `timegate`.
    pub fn from_entries(entries: Vec<LinkEntry>, declared_uri_r: Option<&str>) -> Self {
        let first_with = |rel: &str| {
            entries
                .iter()
                .find(|e| e.has_rel(rel))
                .map(|e| e.target.clone())
        };
        let original = first_with("original").or_else(|| declared_uri_r.map(str::to_owned));
        let self_uri = first_with("self");
        let timegate = first_with("timegate");
        RawTimeMap {
            entries,
            original,
            self_uri,
            timegate,
            skipped: 0,
            bad_datetimes: 0,
        }
    }

    pub fn mementos(&self) -> impl Iterator<Item = &LinkEntry> {
        self.entries.iter().filter(|e| e.is_memento())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses RFC 1123 text such as `Thu, 13 Dec 2007 00:21:02 GMT`.
pub fn parse_http_datetime(text: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc2822(text.trim())
        .ok()
        .map(|dt| dt.with_timezone(&Utc))
}

pub fn format_http_datetime(datetime: &DateTime<Utc>) -> String {
    datetime.format("%a, %d %b %Y %H:%M:%S GMT").to_string()
}

/// Scheme followed by `:` and a non-empty remainder, with no characters that
/// would break the `<...>` framing.
pub fn is_absolute_uri(text: &str) -> bool {
    let Some((scheme, rest)) = text.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    let scheme_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok
        && !rest.is_empty()
        && !text
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || matches!(c, '<' | '>' | '"'))
}

/// Parses a link-format body.
///
/// `declared_uri_r` stands in for the URI-R when the body has no
/// `rel="original"` entry. An empty or blank body is a valid 0-sized TimeMap.
pub fn parse_timemap(body: &str, declared_uri_r: Option<&str>) -> Result<RawTimeMap> {
    let mut scanner = Scanner { bytes: body.as_bytes(), text: body, pos: 0 };
    let mut entries = Vec::new();
    let mut skipped = 0;
    let mut bad_datetimes = 0;

    loop {
        scanner.skip_while(|b| b.is_ascii_whitespace() || b == b',');
        if scanner.at_end() {
            break;
        }
        if scanner.peek() != Some(b'<') {
            // Stray text (an elision line, say) before the next link.
            skipped += 1;
            scanner.skip_stray();
            continue;
        }
        let start = scanner.pos;
        match scanner.entry() {
            Ok(fields) => match build_entry(fields) {
                Ok((entry, bad)) => {
                    bad_datetimes += bad;
                    entries.push(entry);
                }
                Err(bad) => {
                    bad_datetimes += bad;
                    skipped += 1;
                }
            },
            Err(()) => {
                skipped += 1;
                scanner.recover();
                if scanner.pos == start {
                    scanner.pos += 1;
                }
            }
        }
    }

    if entries.is_empty() && !body.trim().is_empty() {
        return Err(Error::HardParseFailure { skipped });
    }

    let mut map = RawTimeMap::from_entries(entries, declared_uri_r);
    map.skipped = skipped;
    map.bad_datetimes = bad_datetimes;
    Ok(map)
}

/// Serializes a map in canonical form: one entry per line, `rel` first,
/// then `datetime`, then remaining attributes in order, every value quoted.
pub fn serialize_timemap(map: &RawTimeMap) -> String {
    let mut out = String::new();
    for (i, entry) in map.entries.iter().enumerate() {
        if i > 0 {
            out.push_str(",\n");
        }
        write_entry(&mut out, entry);
    }
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

fn write_entry(out: &mut String, entry: &LinkEntry) {
    let _ = write!(out, "<{}>", entry.target);
    let raw_has = |name: &str| {
        entry
            .raw_attributes
            .iter()
            .any(|(n, _)| n.eq_ignore_ascii_case(name))
    };
    // An empty rel is written out only when a later raw `rel` would
    // otherwise be promoted on re-parse.
    if !entry.rel.is_empty() || raw_has("rel") {
        write_attr(out, "rel", &entry.rel_value());
    }
    if let Some(dt) = &entry.datetime {
        write_attr(out, "datetime", &format_http_datetime(dt));
    }
    for (name, value) in &entry.raw_attributes {
        write_attr(out, name, value);
    }
}

fn write_attr(out: &mut String, name: &str, value: &str) {
    let _ = write!(out, "; {name}=\"");
    for c in value.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

struct EntryFields {
    target: String,
    attributes: Vec<(String, String)>,
}

/// Validates scanned fields. The error carries the bad-datetime count so it
/// is still reported for skipped entries.
fn build_entry(fields: EntryFields) -> std::result::Result<(LinkEntry, usize), usize> {
    let mut rel: Option<Vec<String>> = None;
    let mut datetime_seen = false;
    let mut datetime = None;
    let mut bad = 0;
    let mut raw_attributes = Vec::new();

    for (name, value) in fields.attributes {
        if rel.is_none() && name.eq_ignore_ascii_case("rel") {
            rel = Some(value.split_whitespace().map(str::to_owned).collect());
        } else if !datetime_seen && name.eq_ignore_ascii_case("datetime") {
            datetime_seen = true;
            match parse_http_datetime(&value) {
                Some(dt) => datetime = Some(dt),
                None => {
                    bad += 1;
                    raw_attributes.push((name, value));
                }
            }
        } else {
            raw_attributes.push((name, value));
        }
    }

    let entry = LinkEntry {
        target: fields.target,
        rel: rel.unwrap_or_default(),
        datetime,
        raw_attributes,
    };
    if !is_absolute_uri(&entry.target) || (entry.is_memento() && entry.datetime.is_none()) {
        return Err(bad);
    }
    Ok((entry, bad))
}

struct Scanner<'a> {
    bytes: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl Scanner<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_while(&mut self, pred: impl Fn(u8) -> bool) {
        while self.peek().is_some_and(&pred) {
            self.pos += 1;
        }
    }

    fn take_until(&mut self, stop: impl Fn(u8) -> bool) -> &str {
        let start = self.pos;
        self.skip_while(|b| !stop(b));
        &self.text[start..self.pos]
    }

    fn entry(&mut self) -> std::result::Result<EntryFields, ()> {
        if self.peek() != Some(b'<') {
            return Err(());
        }
        self.pos += 1;
        let target = self.take_until(|b| b == b'>').trim().to_owned();
        if self.peek() != Some(b'>') {
            return Err(());
        }
        self.pos += 1;

        let mut attributes = Vec::new();
        loop {
            self.skip_while(|b| b.is_ascii_whitespace());
            match self.peek() {
                None => break,
                Some(b',') => {
                    self.pos += 1;
                    break;
                }
                Some(b';') => {
                    self.pos += 1;
                    self.skip_while(|b| b.is_ascii_whitespace());
                    if matches!(self.peek(), None | Some(b',' | b';')) {
                        continue;
                    }
                    attributes.push(self.attribute()?);
                }
                Some(_) => return Err(()),
            }
        }
        Ok(EntryFields { target, attributes })
    }

    fn attribute(&mut self) -> std::result::Result<(String, String), ()> {
        let name = self
            .take_until(|b| matches!(b, b'=' | b';' | b',' | b'"' | b'<') || b.is_ascii_whitespace())
            .to_owned();
        if name.is_empty() {
            return Err(());
        }
        self.skip_while(|b| b.is_ascii_whitespace());
        if self.peek() != Some(b'=') {
            return Ok((name, String::new()));
        }
        self.pos += 1;
        self.skip_while(|b| b.is_ascii_whitespace());
        let value = if self.peek() == Some(b'"') {
            self.pos += 1;
            self.quoted()?
        } else {
            self.take_until(|b| matches!(b, b';' | b',') || b.is_ascii_whitespace())
                .to_owned()
        };
        Ok((name, value))
    }

    fn quoted(&mut self) -> std::result::Result<String, ()> {
        let mut value = String::new();
        loop {
            let chunk = self.take_until(|b| b == b'"' || b == b'\\');
            value.push_str(chunk);
            match self.peek() {
                None => return Err(()),
                Some(b'"') => {
                    self.pos += 1;
                    return Ok(value);
                }
                _ => {
                    self.pos += 1;
                    // Escaped character; copy the whole (possibly multibyte) char.
                    let Some(c) = self.text[self.pos..].chars().next() else {
                        return Err(());
                    };
                    value.push(c);
                    self.pos += c.len_utf8();
                }
            }
        }
    }

    /// Skips to the next `<` or just past the next `,`, outside quotes.
    fn skip_stray(&mut self) {
        let mut in_quote = false;
        while let Some(b) = self.peek() {
            match b {
                b'<' if !in_quote => return,
                b',' if !in_quote => {
                    self.pos += 1;
                    return;
                }
                b'"' => in_quote = !in_quote,
                b'\\' if in_quote => self.pos += 1,
                _ => {}
            }
            self.pos += 1;
        }
        self.pos = self.pos.min(self.bytes.len());
    }

    /// Skips to just past the next top-level `,`.
    fn recover(&mut self) {
        let mut in_quote = false;
        while let Some(b) = self.peek() {
            self.pos += 1;
            match b {
                b'\\' if in_quote => self.pos += 1,
                b'"' => in_quote = !in_quote,
                b',' if !in_quote => return,
                _ => {}
            }
        }
        self.pos = self.pos.min(self.bytes.len());
    }
}
