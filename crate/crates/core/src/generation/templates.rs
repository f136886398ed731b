use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Template ids shipped with the engine, one file each.
pub const TEMPLATE_IDS: [&str; 5] = ["standard", "factoid", "definition", "procedural", "yesno"];

const DEFAULTS: [(&str, &str); 5] = [
    ("standard", include_str!("../../resources/templates/standard.txt")),
    ("factoid", include_str!("../../resources/templates/factoid.txt")),
    ("definition", include_str!("../../resources/templates/definition.txt")),
    ("procedural", include_str!("../../resources/templates/procedural.txt")),
    ("yesno", include_str!("../../resources/templates/yesno.txt")),
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("no template named `{0}`")]
    Unknown(String),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

/// Prompt templates by id. Files in an override directory (`<id>.txt`)
/// replace the built-in text; `reload` re-reads them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateStore {
    templates: BTreeMap<String, String>,
    dir: Option<PathBuf>,
}

impl Default for TemplateStore {
    fn default() -> Self {
        Self {
            templates: DEFAULTS.iter().map(|(id, t)| (id.to_string(), t.to_string())).collect(),
            dir: None,
        }
    }
}

fn check(path: &Path, text: &str) -> Result<(), TemplateError> {
    for placeholder in ["{context}", "{query}"] {
        if !text.contains(placeholder) {
            return Err(TemplateError::Invalid {
                path: path.display().to_string(),
                reason: format!("missing placeholder {placeholder}"),
            });
        }
    }
    Ok(())
}

impl TemplateStore {
    /// Built-in templates overridden by any `<id>.txt` in `dir`. A missing
    /// directory leaves the defaults in place.
    pub fn load(dir: impl Into<PathBuf>) -> Result<Self, TemplateError> {
        let mut store = Self { dir: Some(dir.into()), ..Self::default() };
        store.reload()?;
        Ok(store)
    }

    pub fn reload(&mut self) -> Result<(), TemplateError> {
        let mut templates: BTreeMap<String, String> =
            DEFAULTS.iter().map(|(id, t)| (id.to_string(), t.to_string())).collect();
        if let Some(dir) = &self.dir {
            for id in TEMPLATE_IDS {
                let path = dir.join(format!("{id}.txt"));
                if !path.exists() {
                    continue;
                }
                let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Invalid {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })?;
                check(&path, &text)?;
                templates.insert(id.to_string(), text);
            }
        }
        self.templates = templates;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&str, TemplateError> {
        self.templates
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::Unknown(id.to_string()))
    }

    pub fn all(&self) -> impl Iterator<Item = (&str, &str)> {
        self.templates.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}
