//! Company-provided knowledge: documents, fact sheets, ontology, lexicon and
//! the pipeline rules, loaded from a human-editable directory layout.
//!
//! ```text
//! <kb>/
//!   documents/*.md      front matter + body
//!   factsheets/*.json   one FactSheet per file
//!   ontology.toml
//!   lexicon.toml
//!   rules.toml          optional, built-in defaults otherwise
//!   templates/*.txt     optional prompt template overrides
//! ```

mod document;
mod factsheet;
mod lexicon;
mod ontology;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use document::{parse_document, render_document, Document, DocumentId, MetaValue};
pub(crate) use document::{is_reserved_key, normalize_value};
pub use factsheet::{FactSheet, Relation, SheetKind, SlotValue};
pub use lexicon::{Lexicon, LexiconEntry, LexiconFile, Pos};
pub use ontology::{
    ImplicationRule, Ontology, OntologyFile, ParaphraseRule, SynonymSet, TermExpansion,
};

use crate::nlu::Rules;

pub const DOCUMENTS_DIR: &str = "documents";
pub const FACTSHEETS_DIR: &str = "factsheets";
pub const ONTOLOGY_FILE: &str = "ontology.toml";
pub const LEXICON_FILE: &str = "lexicon.toml";
pub const RULES_FILE: &str = "rules.toml";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnowledgeError {
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
    #[error("dangling reference in {file}: `{target}` does not exist")]
    DanglingReference { file: String, target: String },
    #[error("ontology isa edges form a cycle: {}", cycle.join(" -> "))]
    CyclicOntology { cycle: Vec<String> },
    #[error("document body is empty")]
    EmptyBody,
    #[error("unknown document `{0}`")]
    UnknownDocument(DocumentId),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
}

fn io_err(path: &Path, e: std::io::Error) -> KnowledgeError {
    KnowledgeError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    pub documents: BTreeMap<DocumentId, Document>,
    pub factsheets: BTreeMap<String, FactSheet>,
    pub ontology: Ontology,
    pub lexicon: Lexicon,
    pub rules: Rules,
    /// Bumped on every edit to the store.
    pub revision: u64,
}

/// Summary counts reported by `validate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct KbCounts {
    pub documents: usize,
    pub factsheets: usize,
    pub concepts: usize,
    pub lexicon_entries: usize,
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, KnowledgeError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn read(path: &Path) -> Result<String, KnowledgeError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn rel(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

impl KnowledgeBase {
    /// Loads the directory layout and cross-validates it. Stops at the first
    /// error; see [`KnowledgeBase::load_all_errors`] for exhaustive reporting.
    pub fn load(root: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        Self::load_all_errors(root).map_err(|mut errs| errs.remove(0))
    }

    /// Like [`KnowledgeBase::load`] but collects every error it can find.
    pub fn load_all_errors(root: impl AsRef<Path>) -> Result<Self, Vec<KnowledgeError>> {
        let root = root.as_ref();
        let mut errors = Vec::new();
        if !root.is_dir() {
            return Err(vec![KnowledgeError::Io {
                path: root.display().to_string(),
                reason: "not a directory".into(),
            }]);
        }

        let ontology_path = root.join(ONTOLOGY_FILE);
        let ontology = if ontology_path.is_file() {
            read(&ontology_path)
                .and_then(|text| {
                    toml::from_str::<OntologyFile>(&text).map_err(|e| KnowledgeError::MalformedFile {
                        path: ONTOLOGY_FILE.into(),
                        reason: e.message().to_string(),
                    })
                })
                .and_then(|file| Ontology::from_file(file, ONTOLOGY_FILE))
                .unwrap_or_else(|e| {
                    errors.push(e);
                    Ontology::default()
                })
        } else {
            Ontology::default()
        };

        let lexicon_path = root.join(LEXICON_FILE);
        let lexicon = if lexicon_path.is_file() {
            read(&lexicon_path)
                .and_then(|text| {
                    toml::from_str::<LexiconFile>(&text).map_err(|e| KnowledgeError::MalformedFile {
                        path: LEXICON_FILE.into(),
                        reason: e.message().to_string(),
                    })
                })
                .and_then(|file| Lexicon::new(file.entries, LEXICON_FILE))
                .unwrap_or_else(|e| {
                    errors.push(e);
                    Lexicon::default()
                })
        } else {
            Lexicon::default()
        };

        let rules_path = root.join(RULES_FILE);
        let rules = if rules_path.is_file() {
            read(&rules_path)
                .and_then(|text| Rules::parse(&text, RULES_FILE))
                .unwrap_or_else(|e| {
                    errors.push(e);
                    Rules::default()
                })
        } else {
            Rules::default()
        };

        let mut documents = BTreeMap::new();
        match sorted_files(&root.join(DOCUMENTS_DIR), "md") {
            Ok(files) => {
                for path in files {
                    let name = rel(root, &path);
                    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                    match read(&path).and_then(|text| parse_document(&text, stem, &name, &name)) {
                        Ok(doc) => {
                            if documents.contains_key(&doc.id) {
                                errors.push(KnowledgeError::MalformedFile {
                                    path: name,
                                    reason: format!("duplicate document id `{}`", doc.id),
                                });
                            } else {
                                documents.insert(doc.id.clone(), doc);
                            }
                        }
                        Err(e) => errors.push(e),
                    }
                }
            }
            Err(e) => errors.push(e),
        }

        let mut factsheets = BTreeMap::new();
        let mut sheet_files = BTreeMap::new();
        match sorted_files(&root.join(FACTSHEETS_DIR), "json") {
            Ok(files) => {
                for path in files {
                    let name = rel(root, &path);
                    let parsed = read(&path).and_then(|text| {
                        serde_json::from_str::<FactSheet>(&text).map_err(|e| {
                            KnowledgeError::MalformedFile {
                                path: name.clone(),
                                reason: e.to_string(),
                            }
                        })
                    });
                    match parsed {
                        Ok(mut sheet) => {
                            sheet.concept = sheet.concept.trim().to_lowercase();
                            for value in sheet.slots.values_mut() {
                                normalize_slot(value);
                            }
                            if factsheets.contains_key(&sheet.id) {
                                errors.push(KnowledgeError::MalformedFile {
                                    path: name,
                                    reason: format!("duplicate fact sheet id `{}`", sheet.id),
                                });
                            } else {
                                sheet_files.insert(sheet.id.clone(), name);
                                factsheets.insert(sheet.id.clone(), sheet);
                            }
                        }
                        Err(e) => errors.push(e),
                    }
                }
            }
            Err(e) => errors.push(e),
        }

        let kb = KnowledgeBase {
            documents,
            factsheets,
            ontology,
            lexicon,
            rules,
            revision: 0,
        };
        errors.extend(kb.cross_reference_errors(&sheet_files));
        if errors.is_empty() {
            Ok(kb)
        } else {
            Err(errors)
        }
    }

    fn cross_reference_errors(&self, sheet_files: &BTreeMap<String, String>) -> Vec<KnowledgeError> {
        let mut errors = Vec::new();
        for sheet in self.factsheets.values() {
            let source = sheet_files
                .get(&sheet.id)
                .cloned()
                .unwrap_or_else(|| format!("{FACTSHEETS_DIR}/{}", sheet.id));
            let dangling = |target: &str| KnowledgeError::DanglingReference {
                file: source.clone(),
                target: target.to_string(),
            };
            if !self.ontology.contains(&sheet.concept) {
                errors.push(dangling(&sheet.concept));
            }
            for value in sheet.slots.values() {
                for c in value.concepts() {
                    if !self.ontology.contains(c) {
                        errors.push(dangling(c));
                    }
                }
            }
            for r in &sheet.relations {
                if !self.factsheets.contains_key(&r.target) {
                    errors.push(dangling(&r.target));
                }
            }
        }
        for entry in self.lexicon.entries() {
            if let Some(c) = &entry.concept {
                if !self.ontology.contains(c) {
                    errors.push(KnowledgeError::DanglingReference {
                        file: format!("{LEXICON_FILE} ({})", entry.surface),
                        target: c.clone(),
                    });
                }
            }
        }
        errors
    }

    /// Writes the knowledge base in the layout [`KnowledgeBase::load`] reads.
    pub fn save(&self, root: impl AsRef<Path>) -> Result<(), KnowledgeError> {
        let root = root.as_ref();
        let docs_dir = root.join(DOCUMENTS_DIR);
        let sheets_dir = root.join(FACTSHEETS_DIR);
        for dir in [root, &docs_dir, &sheets_dir] {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let write = |path: PathBuf, text: String| fs::write(&path, text).map_err(|e| io_err(&path, e));
        for doc in self.documents.values() {
            write(docs_dir.join(format!("{}.md", file_stem(doc.id.as_str()))), render_document(doc))?;
        }
        for sheet in self.factsheets.values() {
            let json = serde_json::to_string_pretty(sheet).expect("fact sheet serializes");
            write(sheets_dir.join(format!("{}.json", file_stem(&sheet.id))), json + "\n")?;
        }
        write(root.join(ONTOLOGY_FILE), to_toml(&self.ontology.to_file()))?;
        write(
            root.join(LEXICON_FILE),
            to_toml(&LexiconFile {
                entries: self.lexicon.entries().to_vec(),
            }),
        )?;
        write(root.join(RULES_FILE), to_toml(&self.rules.to_file()))?;
        Ok(())
    }

    pub fn counts(&self) -> KbCounts {
        KbCounts {
            documents: self.documents.len(),
            factsheets: self.factsheets.len(),
            concepts: self.ontology.concept_count(),
            lexicon_entries: self.lexicon.len(),
        }
    }

    fn next_document_id(&self) -> DocumentId {
        let mut n = self.documents.len() + 1;
        loop {
            let id = DocumentId::new(format!("doc-{n:04}"));
            if !self.documents.contains_key(&id) {
                return id;
            }
            n += 1;
        }
    }

    /// Stores a new document at revision 1 and returns its id.
    pub fn ingest_document(
        &mut self,
        title: &str,
        body: &str,
        metadata: BTreeMap<String, MetaValue>,
    ) -> Result<DocumentId, KnowledgeError> {
        let body = body.trim();
        if body.is_empty() {
            return Err(KnowledgeError::EmptyBody);
        }
        let mut clean = BTreeMap::new();
        for (key, value) in metadata {
            let key = key.trim().to_lowercase();
            if is_reserved_key(&key) || key.starts_with("annotation.") || key.is_empty() {
                return Err(KnowledgeError::MalformedFile {
                    path: "<ingest>".into(),
                    reason: format!("metadata key `{key}` is reserved or invalid"),
                });
            }
            clean.insert(key, value);
        }
        let id = self.next_document_id();
        self.documents.insert(
            id.clone(),
            Document {
                id: id.clone(),
                title: title.trim().to_string(),
                body: body.to_string(),
                metadata: clean,
                annotations: BTreeMap::new(),
                source: "ingest".into(),
                revision: 1,
            },
        );
        self.revision += 1;
        Ok(id)
    }

    /// Sets an annotation (last write wins) and returns the new revision.
    pub fn annotate_document(
        &mut self,
        id: &DocumentId,
        key: &str,
        value: &str,
    ) -> Result<u64, KnowledgeError> {
        let doc = self
            .documents
            .get_mut(id)
            .ok_or_else(|| KnowledgeError::UnknownDocument(id.clone()))?;
        let key = key.trim().to_lowercase();
        if key.is_empty() {
            return Err(KnowledgeError::MalformedFile {
                path: "<annotate>".into(),
                reason: "empty annotation key".into(),
            });
        }
        doc.annotations.insert(key, value.trim().to_string());
        doc.revision += 1;
        self.revision += 1;
        Ok(doc.revision)
    }

    /// Replaces title and body of an existing document.
    pub fn edit_document(
        &mut self,
        id: &DocumentId,
        title: &str,
        body: &str,
    ) -> Result<u64, KnowledgeError> {
        let body = body.trim();
        if body.is_empty() {
            return Err(KnowledgeError::EmptyBody);
        }
        let doc = self
            .documents
            .get_mut(id)
            .ok_or_else(|| KnowledgeError::UnknownDocument(id.clone()))?;
        doc.title = title.trim().to_string();
        doc.body = body.to_string();
        doc.revision += 1;
        self.revision += 1;
        Ok(doc.revision)
    }

    pub fn delete_document(&mut self, id: &DocumentId) -> Result<Document, KnowledgeError> {
        let doc = self
            .documents
            .remove(id)
            .ok_or_else(|| KnowledgeError::UnknownDocument(id.clone()))?;
        self.revision += 1;
        Ok(doc)
    }

    pub fn is_subconcept(&self, a: &str, b: &str) -> Result<bool, KnowledgeError> {
        self.ontology.is_subconcept(a, b)
    }

    pub fn expand_term(&self, lemma: &str) -> TermExpansion {
        self.ontology.expand(lemma)
    }
}

fn normalize_slot(value: &mut SlotValue) {
    match value {
        SlotValue::Concept { concept } => *concept = concept.trim().to_lowercase(),
        SlotValue::List(items) => items.iter_mut().for_each(normalize_slot),
        _ => {}
    }
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn to_toml<T: serde::Serialize>(value: &T) -> String {
    toml::to_string_pretty(value).expect("knowledge files serialize to toml")
}
