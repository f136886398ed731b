use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SheetKind {
    Individual,
    Kind,
    Process,
    Collection,
}

/// Value stored in a fact-sheet slot. Concept references are written as
/// `{"concept": "milk"}` in the JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlotValue {
    Concept {
        concept: String,
    },
    Number(f64),
    Text(String),
    List(Vec<SlotValue>),
}

impl SlotValue {
    pub fn concept(c: &str) -> Self {
        SlotValue::Concept {
            concept: c.to_string(),
        }
    }

    /// Every concept referenced by the value, recursively.
    pub fn concepts(&self) -> Vec<&str> {
        match self {
            SlotValue::Concept { concept } => vec![concept.as_str()],
            SlotValue::List(items) => items.iter().flat_map(|v| v.concepts()).collect(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for SlotValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotValue::Concept { concept } => f.write_str(concept),
            SlotValue::Number(n) => write!(f, "{n}"),
            SlotValue::Text(t) => f.write_str(t),
            SlotValue::List(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relation {
    pub name: String,
    pub target: String,
}

/// A knowledge-graph record: an individual, kind, process or collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactSheet {
    pub id: String,
    pub kind: SheetKind,
    pub concept: String,
    pub label: String,
    #[serde(default)]
    pub slots: BTreeMap<String, SlotValue>,
    #[serde(default)]
    pub relations: Vec<Relation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_text: Option<String>,
}

impl FactSheet {
    pub fn relations_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Relation> + 'a {
        self.relations.iter().filter(move |r| r.name == name)
    }

    /// Every text field of the sheet an answer may quote from.
    pub fn quotable_fields(&self) -> Vec<String> {
        let mut out = vec![self.id.clone(), self.label.clone(), self.concept.clone()];
        out.extend(self.answer_text.iter().cloned());
        for (name, value) in &self.slots {
            out.push(name.clone());
            out.push(value.to_string());
        }
        for r in &self.relations {
            out.push(r.name.clone());
            out.push(r.target.clone());
        }
        out
    }
}
