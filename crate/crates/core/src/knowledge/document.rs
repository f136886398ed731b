use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::KnowledgeError;

/// Stable, unique identifier of a company document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocumentId(pub String);

impl DocumentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DocumentId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A scalar metadata value attached to a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Number(f64),
    Tags(Vec<String>),
    Date(NaiveDate),
    Text(String),
}

impl MetaValue {
    /// Parses a front-matter value: `[a, b]` is a tag list, a quoted string is
    /// always text, `YYYY-MM-DD` is a date, anything numeric is a number.
    pub fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        if let Some(inner) = raw.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let tags = inner
                .split(',')
                .map(|t| t.trim())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
            return MetaValue::Tags(tags);
        }
        if raw.len() >= 2 && raw.starts_with('"') && raw.ends_with('"') {
            return MetaValue::Text(raw[1..raw.len() - 1].to_string());
        }
        if let Ok(date) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
            return MetaValue::Date(date);
        }
        if let Ok(n) = raw.parse::<f64>() {
            if n.is_finite() {
                return MetaValue::Number(n);
            }
        }
        MetaValue::Text(raw.to_string())
    }

    /// Renders the value so that [`MetaValue::parse`] yields it back.
    pub fn render(&self) -> String {
        match self {
            MetaValue::Number(n) => format!("{n}"),
            MetaValue::Date(d) => d.format("%Y-%m-%d").to_string(),
            MetaValue::Tags(tags) => format!("[{}]", tags.join(", ")),
            MetaValue::Text(t) => {
                if matches!(MetaValue::parse(t), MetaValue::Text(ref back) if back == t) {
                    t.clone()
                } else {
                    format!("\"{t}\"")
                }
            }
        }
    }

    /// Normalized values used for exact metadata matching. Tag lists expand
    /// to one value per tag.
    pub fn index_values(&self) -> Vec<String> {
        match self {
            MetaValue::Tags(tags) => tags.iter().map(|t| normalize_value(t)).collect(),
            other => vec![normalize_value(&other.render())],
        }
    }
}

pub(crate) fn normalize_value(raw: &str) -> String {
    raw.trim().trim_matches('"').trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: DocumentId,
    pub title: String,
    pub body: String,
    pub metadata: BTreeMap<String, MetaValue>,
    pub annotations: BTreeMap<String, String>,
    pub source: String,
    pub revision: u64,
}

impl Document {
    /// Normalized `(field, value)` pairs over metadata and annotations.
    pub fn field_values(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (field, value) in &self.metadata {
            for v in value.index_values() {
                out.push((field.clone(), v));
            }
        }
        for (field, value) in &self.annotations {
            out.push((field.clone(), normalize_value(value)));
        }
        out.sort();
        out.dedup();
        out
    }
}

const RESERVED_KEYS: [&str; 4] = ["id", "title", "source", "revision"];
const ANNOTATION_PREFIX: &str = "annotation.";

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Parses a `documents/*.md` file. `fallback_id` and `fallback_source` are
/// used when the front matter omits `id` or `source`.
pub fn parse_document(
    text: &str,
    fallback_id: &str,
    fallback_source: &str,
    path: &str,
) -> Result<Document, KnowledgeError> {
    let malformed = |reason: String| KnowledgeError::MalformedFile {
        path: path.to_string(),
        reason,
    };

    let mut lines = text.lines();
    let mut header = Vec::new();
    let body: String;
    if text.trim_start().starts_with("---") {
        // skip leading blank lines and the opening delimiter
        for line in lines.by_ref() {
            if line.trim() == "---" {
                break;
            }
            if !line.trim().is_empty() {
                return Err(malformed("content before front matter".into()));
            }
        }
        let mut closed = false;
        for line in lines.by_ref() {
            if line.trim() == "---" {
                closed = true;
                break;
            }
            header.push(line);
        }
        if !closed {
            return Err(malformed("front matter is not closed by `---`".into()));
        }
        body = lines.collect::<Vec<_>>().join("\n");
    } else {
        body = text.to_string();
    }

    let mut doc = Document {
        id: DocumentId::new(fallback_id),
        title: String::new(),
        body: body.trim().to_string(),
        metadata: BTreeMap::new(),
        annotations: BTreeMap::new(),
        source: fallback_source.to_string(),
        revision: 1,
    };

    for (n, line) in header.iter().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(malformed(format!("front matter line {} has no `key: value`", n + 1)));
        };
        let key = key.trim().to_lowercase();
        let value = value.trim();
        match key.as_str() {
            "id" => doc.id = DocumentId::new(value),
            "title" => doc.title = value.to_string(),
            "source" => doc.source = value.to_string(),
            "revision" => {
                doc.revision = value
                    .parse()
                    .map_err(|_| malformed(format!("revision `{value}` is not an integer")))?;
                if doc.revision == 0 {
                    return Err(malformed("revision must be at least 1".into()));
                }
            }
            _ => {
                if let Some(ann) = key.strip_prefix(ANNOTATION_PREFIX) {
                    if !valid_key(ann) {
                        return Err(malformed(format!("invalid annotation key `{key}`")));
                    }
                    doc.annotations.insert(ann.to_string(), value.to_string());
                } else if valid_key(&key) {
                    doc.metadata.insert(key, MetaValue::parse(value));
                } else {
                    return Err(malformed(format!("unknown front matter field `{key}`")));
                }
            }
        }
    }

    if doc.id.0.trim().is_empty() {
        return Err(malformed("empty document id".into()));
    }
    if doc.body.is_empty() {
        return Err(malformed("document body is empty".into()));
    }
    Ok(doc)
}

pub fn render_document(doc: &Document) -> String {
    let mut out = String::from("---\n");
    out.push_str(&format!("id: {}\n", doc.id));
    out.push_str(&format!("title: {}\n", doc.title));
    out.push_str(&format!("source: {}\n", doc.source));
    out.push_str(&format!("revision: {}\n", doc.revision));
    for (key, value) in &doc.metadata {
        debug_assert!(!RESERVED_KEYS.contains(&key.as_str()));
        out.push_str(&format!("{key}: {}\n", value.render()));
    }
    for (key, value) in &doc.annotations {
        out.push_str(&format!("{ANNOTATION_PREFIX}{key}: {value}\n"));
    }
    out.push_str("---\n");
    out.push_str(&doc.body);
    out.push('\n');
    out
}

pub(crate) fn is_reserved_key(key: &str) -> bool {
    RESERVED_KEYS.contains(&key)
}
