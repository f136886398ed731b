use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::embed::{dot, embed_with_vocabulary, normalize, Embedder, HashedEmbedder};
use super::{
    RetrievalConfig, RetrievalError, RetrievalMethod, RetrievalWarning, ScoreComponents,
    ScoredDocument,
};
use crate::knowledge::{normalize_value, Document, DocumentId, Ontology};
use crate::nlu::{is_content, Lemmatizer};

/// First line of a serialized index. The number is bumped whenever the
/// layout changes.
pub const INDEX_HEADER: &str = "CTRLBOT-INDEX 1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: DocumentId,
    pub tf: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Index {
    /// lemma -> postings sorted by document id
    pub postings: BTreeMap<String, Vec<Posting>>,
    /// document -> number of content tokens
    pub doc_lengths: BTreeMap<DocumentId, usize>,
    pub doc_count: usize,
    /// field -> normalized value -> documents
    pub metadata_index: BTreeMap<String, BTreeMap<String, BTreeSet<DocumentId>>>,
    /// document -> embedding (unit norm, or zero for content-free bodies)
    pub vectors: BTreeMap<DocumentId, Vec<f64>>,
    pub vocabulary: Vec<String>,
    #[serde(skip)]
    idf: BTreeMap<String, f64>,
    #[serde(skip)]
    doc_tfidf: BTreeMap<DocumentId, BTreeMap<String, f64>>,
}

fn tf_counts(lemmas: &[String]) -> BTreeMap<String, f64> {
    let mut counts = BTreeMap::new();
    for l in lemmas {
        *counts.entry(l.clone()).or_insert(0.0) += 1.0;
    }
    counts
}

fn by_score_then_id(a: &ScoredDocument, b: &ScoredDocument) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.id.cmp(&b.id))
}

impl Index {
    /// Indexes `documents` with the built-in hashed embedder.
    pub fn build<'a>(documents: impl IntoIterator<Item = &'a Document>, lemmatizer: &Lemmatizer) -> Self {
        Self::build_with(documents, lemmatizer, &HashedEmbedder)
    }

    pub fn build_with<'a>(
        documents: impl IntoIterator<Item = &'a Document>,
        lemmatizer: &Lemmatizer,
        embedder: &dyn Embedder,
    ) -> Self {
        let mut index = Index::default();
        for doc in documents {
            index.insert(doc, lemmatizer, embedder);
        }
        index.recompute_statistics();
        if index.doc_count == 0 {
            tracing::warn!("building index over an empty corpus; searches will return nothing");
        }
        index
    }

    /// Adds one document and refreshes the global statistics.
    pub fn add_document(&mut self, doc: &Document, lemmatizer: &Lemmatizer) {
        self.insert(doc, lemmatizer, &HashedEmbedder);
        self.recompute_statistics();
    }

    fn insert(&mut self, doc: &Document, lemmatizer: &Lemmatizer, embedder: &dyn Embedder) {
        if self.doc_lengths.contains_key(&doc.id) {
            self.remove(&doc.id);
        }
        let lemmas = lemmatizer.content_lemmas(&doc.body);
        for (lemma, tf) in tf_counts(&lemmas) {
            let list = self.postings.entry(lemma).or_default();
            let posting = Posting {
                doc: doc.id.clone(),
                tf: tf as u32,
            };
            let at = list.partition_point(|p| p.doc < doc.id);
            list.insert(at, posting);
        }
        for (field, value) in doc.field_values() {
            self.metadata_index
                .entry(field)
                .or_default()
                .entry(value)
                .or_default()
                .insert(doc.id.clone());
        }
        self.vectors.insert(doc.id.clone(), embedder.embed_lemmas(&lemmas));
        self.doc_lengths.insert(doc.id.clone(), lemmas.len());
    }

    fn remove(&mut self, id: &DocumentId) {
        for list in self.postings.values_mut() {
            list.retain(|p| &p.doc != id);
        }
        self.postings.retain(|_, list| !list.is_empty());
        for values in self.metadata_index.values_mut() {
            for docs in values.values_mut() {
                docs.remove(id);
            }
            values.retain(|_, docs| !docs.is_empty());
        }
        self.metadata_index.retain(|_, values| !values.is_empty());
        self.vectors.remove(id);
        self.doc_lengths.remove(id);
    }

    /// Recomputes idf (`ln(N / df)`) and the unit-normalized tf-idf document
    /// vectors from the postings.
    fn recompute_statistics(&mut self) {
        self.doc_count = self.doc_lengths.len();
        self.vocabulary = self.postings.keys().cloned().collect();
        let n = self.doc_count as f64;
        self.idf = self
            .postings
            .iter()
            .map(|(lemma, list)| (lemma.clone(), (n / list.len() as f64).ln()))
            .collect();
        let mut vectors: BTreeMap<DocumentId, BTreeMap<String, f64>> = self
            .doc_lengths
            .keys()
            .map(|id| (id.clone(), BTreeMap::new()))
            .collect();
        for (lemma, list) in &self.postings {
            let idf = self.idf[lemma];
            for p in list {
                let w = p.tf as f64 * idf;
                if w > 0.0 {
                    vectors.get_mut(&p.doc).expect("posting doc is indexed").insert(lemma.clone(), w);
                }
            }
        }
        for v in vectors.values_mut() {
            let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.values_mut().for_each(|x| *x /= norm);
            }
        }
        self.doc_tfidf = vectors;
    }

    pub fn idf(&self, lemma: &str) -> Option<f64> {
        self.idf.get(lemma).copied()
    }

    pub fn tf(&self, lemma: &str, doc: &DocumentId) -> u32 {
        self.postings
            .get(lemma)
            .and_then(|list| list.iter().find(|p| &p.doc == doc))
            .map_or(0, |p| p.tf)
    }

    pub fn warnings(&self) -> Vec<RetrievalWarning> {
        if self.doc_count == 0 {
            vec![RetrievalWarning::EmptyCorpus]
        } else {
            Vec::new()
        }
    }

    fn query_vector(&self, tf: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
        let mut q: BTreeMap<String, f64> = tf
            .iter()
            .filter_map(|(l, &c)| self.idf.get(l).map(|idf| (l.clone(), c * idf)))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        let norm = q.values().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            q.values_mut().for_each(|x| *x /= norm);
        }
        q
    }

    fn cosine(&self, query: &BTreeMap<String, f64>, doc: &DocumentId) -> f64 {
        let Some(d) = self.doc_tfidf.get(doc) else {
            return 0.0;
        };
        query
            .iter()
            .filter_map(|(l, w)| d.get(l).map(|x| x * w))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Query lemmas plus, for Semantic search, the lemmas of each lemma's
    /// concept and of that concept's generalizations (added once each).
    pub fn expand_query(
        lemmas: &[String],
        lemmatizer: &Lemmatizer,
        ontology: &Ontology,
    ) -> BTreeMap<String, f64> {
        let mut tf = tf_counts(lemmas);
        let mut extra = BTreeSet::new();
        for lemma in lemmas {
            let concept = lemmatizer
                .concept_of(lemma)
                .or_else(|| ontology.concept_for_lemma(lemma).map(str::to_string));
            let Some(concept) = concept else { continue };
            let mut concepts = vec![concept.clone()];
            concepts.extend(ontology.ancestors(&concept));
            for c in concepts {
                extra.extend(ontology.lemmas_for_concept(&c));
                extra.extend(lemmatizer.lemmas_with_concept(&c));
            }
        }
        for lemma in extra {
            tf.entry(lemma).or_insert(1.0);
        }
        tf
    }

    /// Ranked search: results sorted by score (desc) then id (asc), zero
    /// scores dropped, at most `config.k` entries.
    pub fn search(
        &self,
        lemmatizer: &Lemmatizer,
        ontology: &Ontology,
        query: &str,
        config: &RetrievalConfig,
        query_metadata: &BTreeMap<String, String>,
    ) -> Result<Vec<ScoredDocument>, RetrievalError> {
        self.search_with(lemmatizer, ontology, query, config, query_metadata, &HashedEmbedder)
    }

    pub fn search_with(
        &self,
        lemmatizer: &Lemmatizer,
        ontology: &Ontology,
        query: &str,
        config: &RetrievalConfig,
        query_metadata: &BTreeMap<String, String>,
        embedder: &dyn Embedder,
    ) -> Result<Vec<ScoredDocument>, RetrievalError> {
        config.validate()?;
        if self.doc_count == 0 {
            return Ok(Vec::new());
        }
        let (_, tokens) = lemmatizer.tokens(query);
        let lemmas: Vec<String> = tokens.into_iter().filter(is_content).map(|t| t.lemma).collect();
        let query_tf = if config.method == RetrievalMethod::Semantic {
            Self::expand_query(&lemmas, lemmatizer, ontology)
        } else {
            tf_counts(&lemmas)
        };
        let query_vec = self.query_vector(&query_tf);

        let vocabulary: BTreeSet<String> = self.vocabulary.iter().cloned().collect();
        let mut query_emb = embed_with_vocabulary(embedder, &lemmas, &vocabulary);
        normalize(&mut query_emb);

        let wanted: Vec<(String, String)> = query_metadata
            .iter()
            .map(|(f, v)| (f.trim().to_lowercase(), normalize_value(v)))
            .collect();

        let mut results = Vec::new();
        for id in self.doc_lengths.keys() {
            let matched_fields: Vec<String> = wanted
                .iter()
                .filter(|(f, v)| {
                    self.metadata_index
                        .get(f)
                        .and_then(|values| values.get(v))
                        .is_some_and(|docs| docs.contains(id))
                })
                .map(|(f, _)| f.clone())
                .collect();
            let components = ScoreComponents {
                text_score: self.cosine(&query_vec, id),
                meta_score: if wanted.is_empty() {
                    0.0
                } else {
                    matched_fields.len() as f64 / wanted.len() as f64
                },
                vec_score: self
                    .vectors
                    .get(id)
                    .map_or(0.0, |v| dot(&query_emb, v).clamp(0.0, 1.0)),
            };
            let score = config.combine(&components).clamp(0.0, 1.0);
            if score > 0.0 {
                results.push(ScoredDocument {
                    id: id.clone(),
                    score,
                    components,
                    matched_fields,
                });
            }
        }
        results.sort_by(by_score_then_id);
        results.truncate(config.k);
        Ok(results)
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{INDEX_HEADER}")?;
        serde_json::to_writer(&mut out, self)?;
        writeln!(out)
    }

    pub fn read_from(input: impl BufRead) -> Result<Self, RetrievalError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| RetrievalError::Format(e.to_string()))?
            .unwrap_or_default();
        if header.trim() != INDEX_HEADER {
            return Err(RetrievalError::Format(format!(
                "expected header `{INDEX_HEADER}`, found `{header}`"
            )));
        }
        let body: String = lines
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| RetrievalError::Format(e.to_string()))?
            .join("\n");
        let mut index: Index =
            serde_json::from_str(&body).map_err(|e| RetrievalError::Format(e.to_string()))?;
        index.recompute_statistics();
        Ok(index)
    }
}
