//! Brute-force reference implementations. They share tokenization with the
//! engine but none of its scoring, indexing or matching code.

use std::collections::{BTreeMap, BTreeSet};

use ctrlbot_core::knowledge::{Document, FactSheet, KnowledgeBase, Ontology, SlotValue};
use ctrlbot_core::nlu::{
    Constraint, ConstraintValue, Lemmatizer, MatchResult, MatchStrength, ParsedUtterance, Term,
};
use ctrlbot_core::retrieval::{RetrievalConfig, RetrievalMethod};

/// Reflexive-transitive closure of `isa` by Warshall's algorithm:
/// `(a, b)` is present iff `a` is a subconcept of `b`.
pub fn subsumption_closure(ontology: &Ontology) -> BTreeSet<(String, String)> {
    let concepts: Vec<String> = ontology.concepts().cloned().collect();
    let n = concepts.len();
    let pos: BTreeMap<&str, usize> = concepts.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for (a, b) in ontology.isa_edges() {
        reach[pos[a.as_str()]][pos[b.as_str()]] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                let via = reach[k].clone();
                for (cell, through) in reach[i].iter_mut().zip(via) {
                    *cell |= through;
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if reach[i][j] {
                out.insert((concepts[i].clone(), concepts[j].clone()));
            }
        }
    }
    out
}

struct OntologyView {
    closure: BTreeSet<(String, String)>,
    implications: Vec<(String, String)>,
    isa: Vec<(String, String)>,
}

impl OntologyView {
    fn new(ontology: &Ontology) -> Self {
        Self {
            closure: subsumption_closure(ontology),
            implications: ontology
                .implication_rules()
                .iter()
                .map(|r| (r.from.clone(), r.to.clone()))
                .collect(),
            isa: ontology.isa_edges(),
        }
    }

    fn sub(&self, a: &str, b: &str) -> bool {
        self.closure.contains(&(a.to_string(), b.to_string()))
    }

    fn compatible(&self, a: &str, b: &str) -> bool {
        self.sub(a, b) || self.sub(b, a)
    }

    fn up(&self, c: &str) -> BTreeSet<String> {
        self.closure.iter().filter(|(a, _)| a == c).map(|(_, b)| b.clone()).collect()
    }

    /// Everything reachable from the up-closure of `c` over implication and
    /// isa edges, minus that up-closure.
    fn implied(&self, c: &str) -> BTreeSet<String> {
        let own = self.up(c);
        let mut reached = own.clone();
        loop {
            let mut grew = false;
            let edges = self.implications.iter().chain(self.isa.iter());
            let next: Vec<String> = edges
                .filter(|(from, _)| reached.contains(from))
                .map(|(_, to)| to.clone())
                .collect();
            for n in next {
                grew |= reached.insert(n);
            }
            if !grew {
                break;
            }
        }
        reached.difference(&own).cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum V {
    Sat,
    Unv,
    Con,
}

fn value_verdict(value: &SlotValue, expected: &ConstraintValue, view: &OntologyView, ontology: &Ontology) -> V {
    let hit = match (value, expected) {
        (SlotValue::List(items), _) if items.is_empty() => return V::Unv,
        (SlotValue::List(items), _) => items.iter().any(|i| value_verdict(i, expected, view, ontology) == V::Sat),
        (SlotValue::Concept { concept }, ConstraintValue::Concept(e)) => view.compatible(concept, e),
        (SlotValue::Concept { concept }, ConstraintValue::Scalar(s)) => {
            s.trim().eq_ignore_ascii_case(concept)
                || ontology.concept_for_lemma(s).is_some_and(|c| view.compatible(c, concept))
        }
        (SlotValue::Number(n), ConstraintValue::Scalar(s)) => {
            s.trim().parse::<f64>().is_ok_and(|x| x == *n) || n.to_string() == s.trim().to_lowercase()
        }
        (SlotValue::Text(t), ConstraintValue::Scalar(s)) => t.trim().to_lowercase() == s.trim().to_lowercase()
            || matches!((t.trim().parse::<f64>(), s.trim().parse::<f64>()), (Ok(a), Ok(b)) if a == b),
        (SlotValue::Number(n), ConstraintValue::Concept(e)) => {
            ontology.concept_for_lemma(&n.to_string()).is_some_and(|c| view.compatible(c, e))
        }
        (SlotValue::Text(t), ConstraintValue::Concept(e)) => ontology
            .concept_for_lemma(&t.trim().to_lowercase())
            .is_some_and(|c| view.compatible(c, e)),
    };
    if hit {
        V::Sat
    } else {
        V::Con
    }
}

fn verdict(c: &Constraint, sheet: &FactSheet, kb: &KnowledgeBase, view: &OntologyView) -> V {
    if let Some(v) = sheet.slots.get(&c.slot) {
        return value_verdict(v, &c.expected, view, &kb.ontology);
    }
    let targets: Vec<&str> = sheet
        .relations
        .iter()
        .filter(|r| r.name == c.slot)
        .map(|r| r.target.as_str())
        .collect();
    if targets.is_empty() {
        return V::Unv;
    }
    let hit = targets.iter().any(|t| match kb.factsheets.get(*t) {
        None => false,
        Some(target) => match &c.expected {
            ConstraintValue::Concept(e) => view.compatible(&target.concept, e),
            ConstraintValue::Scalar(s) => target.id.eq_ignore_ascii_case(s) || target.label.eq_ignore_ascii_case(s),
        },
    });
    if hit {
        V::Sat
    } else {
        V::Con
    }
}

/// Evaluates every sheet against every constraint of `term`, sorts all
/// candidates by (strength, satisfied desc, unverifiable asc, id) and
/// returns the first.
pub fn match_term(term: &Term, kb: &KnowledgeBase) -> Option<MatchResult> {
    let concept = term.concept.as_deref()?;
    if term.unresolved {
        return None;
    }
    let view = OntologyView::new(&kb.ontology);
    let implied = view.implied(concept);
    let mut all = Vec::new();
    for sheet in kb.factsheets.values() {
        if !(view.sub(&sheet.concept, concept) || implied.contains(&sheet.concept)) {
            continue;
        }
        let mut r = MatchResult { sheet: Some(sheet.id.clone()), ..MatchResult::none() };
        for c in &term.constraints {
            match verdict(c, sheet, kb, &view) {
                V::Sat => r.satisfied.push(c.clone()),
                V::Unv => r.unverifiable.push(c.clone()),
                V::Con => r.contradicted.push(c.clone()),
            }
        }
        r.strength = if !r.contradicted.is_empty() {
            MatchStrength::None
        } else if !r.unverifiable.is_empty() {
            MatchStrength::Supportive
        } else {
            MatchStrength::Conclusive
        };
        all.push(r);
    }
    all.sort_by(|a, b| {
        a.strength
            .cmp(&b.strength)
            .then(b.satisfied.len().cmp(&a.satisfied.len()))
            .then(a.unverifiable.len().cmp(&b.unverifiable.len()))
            .then(a.sheet.cmp(&b.sheet))
    });
    all.into_iter().next()
}

pub fn match_utterance(u: &ParsedUtterance, kb: &KnowledgeBase) -> MatchResult {
    if u.terms.iter().any(|t| t.unresolved) {
        return MatchResult::none();
    }
    let mut best: Option<MatchResult> = None;
    for (i, term) in u.terms.iter().enumerate() {
        if let Some(mut r) = match_term(term, kb) {
            r.term = Some(i);
            let better = match &best {
                None => true,
                Some(b) => {
                    let key = |x: &MatchResult| {
                        (x.strength, std::cmp::Reverse(x.satisfied.len()), x.unverifiable.len(), x.sheet.clone())
                    };
                    key(&r) < key(b)
                }
            };
            if better {
                best = Some(r);
            }
        }
    }
    best.unwrap_or_else(MatchResult::none)
}

/// Checks the three strength biconditionals; returns a description of the
/// first violation.
pub fn strength_invariants(r: &MatchResult, query_constraints: &[Constraint]) -> Result<(), String> {
    let sheet = r.sheet.is_some();
    let all_satisfied = query_constraints.iter().all(|c| r.satisfied.contains(c));
    let conclusive = sheet && r.unverifiable.is_empty() && r.contradicted.is_empty() && all_satisfied;
    let supportive = sheet && r.contradicted.is_empty() && !r.unverifiable.is_empty();
    let none = !sheet || !r.contradicted.is_empty();
    let ok = match r.strength {
        MatchStrength::Conclusive => conclusive && !supportive && !none,
        MatchStrength::Supportive => supportive && !conclusive && !none,
        MatchStrength::None => none && !conclusive && !supportive,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("strength {:?} inconsistent with {r:?}", r.strength))
    }
}

/// One ranked hit from the full-scan oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleHit {
    pub id: String,
    pub score: f64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

fn hashed(lemmas: &[String]) -> Vec<f64> {
    let mut v = vec![0.0; 256];
    for l in lemmas {
        v[(fnv1a(l.as_bytes()) % 256) as usize] += 1.0;
    }
    unit(&mut v);
    v
}

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

fn unit_map(m: &mut BTreeMap<String, f64>) {
    let n = m.values().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in m.values_mut() {
            *x /= n;
        }
    }
}

fn counts(lemmas: &[String]) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for l in lemmas {
        *m.entry(l.clone()).or_insert(0.0) += 1.0;
    }
    m
}

fn norm_value(v: &str) -> String {
    v.trim().trim_matches('"').trim().to_lowercase()
}

/// Query lemmas plus, once each, every lemma naming the concept of a query
/// lemma or one of its generalizations (ontology name, synonyms, lexicon).
fn semantic_expansion(lemmas: &[String], kb: &KnowledgeBase) -> BTreeMap<String, f64> {
    let view = OntologyView::new(&kb.ontology);
    let mut q = counts(lemmas);
    let mut extra = BTreeSet::new();
    for l in lemmas {
        let concept = kb
            .lexicon
            .entries()
            .iter()
            .find(|e| &e.lemma == l && e.concept.is_some())
            .and_then(|e| e.concept.clone())
            .or_else(|| kb.ontology.concept_for_lemma(l).map(str::to_string));
        let Some(concept) = concept else { continue };
        for c in view.up(&concept) {
            extra.insert(c.clone());
            for set in kb.ontology.synonym_sets().iter().filter(|s| s.concept == c) {
                extra.extend(set.lemmas.iter().cloned());
            }
            for e in kb.lexicon.entries().iter().filter(|e| e.concept.as_deref() == Some(c.as_str())) {
                extra.insert(e.lemma.clone());
            }
        }
    }
    for l in extra {
        q.entry(l).or_insert(1.0);
    }
    q
}

/// Full scan over `docs`: recomputes document frequencies, tf-idf vectors
/// and embeddings from scratch for every call.
pub fn search(
    docs: &[Document],
    kb: &KnowledgeBase,
    lemmatizer: &Lemmatizer,
    query: &str,
    config: &RetrievalConfig,
    query_metadata: &BTreeMap<String, String>,
) -> Vec<OracleHit> {
    let n = docs.len() as f64;
    let doc_lemmas: Vec<Vec<String>> = docs.iter().map(|d| lemmatizer.content_lemmas(&d.body)).collect();
    let mut df: BTreeMap<String, f64> = BTreeMap::new();
    for lemmas in &doc_lemmas {
        for l in lemmas.iter().collect::<BTreeSet<_>>() {
            *df.entry(l.clone()).or_insert(0.0) += 1.0;
        }
    }
    let idf = |l: &str| df.get(l).map(|d| (n / d).ln());

    let q_lemmas = lemmatizer.content_lemmas(query);
    let q_tf = if config.method == RetrievalMethod::Semantic {
        semantic_expansion(&q_lemmas, kb)
    } else {
        counts(&q_lemmas)
    };
    let mut q_vec: BTreeMap<String, f64> = q_tf
        .iter()
        .filter_map(|(l, c)| idf(l).map(|w| (l.clone(), c * w)))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    unit_map(&mut q_vec);
    let in_vocab: Vec<String> = q_lemmas.iter().filter(|l| df.contains_key(*l)).cloned().collect();
    let q_emb = hashed(&in_vocab);
    let wanted: Vec<(String, String)> = query_metadata
        .iter()
        .map(|(f, v)| (f.trim().to_lowercase(), norm_value(v)))
        .collect();

    let mut hits = Vec::new();
    for (doc, lemmas) in docs.iter().zip(&doc_lemmas) {
        let mut d_vec: BTreeMap<String, f64> = counts(lemmas)
            .into_iter()
            .map(|(l, c)| {
                let w = c * idf(&l).unwrap();
                (l, w)
            })
            .filter(|(_, w)| *w > 0.0)
            .collect();
        unit_map(&mut d_vec);
        let text: f64 = q_vec
            .iter()
            .filter_map(|(l, w)| d_vec.get(l).map(|x| x * w))
            .sum::<f64>()
            .clamp(0.0, 1.0);
        let fields = doc.field_values();
        let matched = wanted.iter().filter(|p| fields.contains(p)).count();
        let meta = if wanted.is_empty() { 0.0 } else { matched as f64 / wanted.len() as f64 };
        let d_emb = hashed(lemmas);
        let vec: f64 = q_emb.iter().zip(&d_emb).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0);
        let score = match config.method {
            RetrievalMethod::MetadataOnly => meta,
            RetrievalMethod::FullText | RetrievalMethod::Semantic => text,
            RetrievalMethod::Vector => vec,
            RetrievalMethod::Hybrid => config.w_text * text + config.w_meta * meta + config.w_vec * vec,
        }
        .clamp(0.0, 1.0);
        if score > 0.0 {
            hits.push(OracleHit { id: doc.id.to_string(), score });
        }
    }
    hits.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then_with(|| a.id.cmp(&b.id)));
    hits.truncate(config.k);
    hits
}

/// The five retrieval methods at `k`, Hybrid with the default weights.
pub fn all_methods(k: usize) -> Vec<RetrievalConfig> {
    [
        RetrievalMethod::MetadataOnly,
        RetrievalMethod::FullText,
        RetrievalMethod::Semantic,
        RetrievalMethod::Vector,
        RetrievalMethod::Hybrid,
    ]
    .into_iter()
    .map(|m| RetrievalConfig::new(m, k))
    .collect()
}

/// Runs every query under every config through a freshly built index and
/// through [`search`]; returns one line per disagreement (order must match
/// exactly, scores within `tol`).
pub fn compare_with_index(
    kb: &KnowledgeBase,
    queries: &[(String, BTreeMap<String, String>)],
    configs: &[RetrievalConfig],
    tol: f64,
) -> Vec<String> {
    let lemmatizer = Lemmatizer::from_kb(kb);
    let docs: Vec<Document> = kb.documents.values().cloned().collect();
    let index = ctrlbot_core::retrieval::Index::build(&docs, &lemmatizer);
    let mut problems = Vec::new();
    for config in configs {
        for (q, meta) in queries {
            let got = match index.search(&lemmatizer, &kb.ontology, q, config, meta) {
                Ok(g) => g,
                Err(e) => {
                    problems.push(format!("{:?} {q:?}: {e}", config.method));
                    continue;
                }
            };
            let want = search(&docs, kb, &lemmatizer, q, config, meta);
            let got_ids: Vec<&str> = got.iter().map(|d| d.id.as_str()).collect();
            let want_ids: Vec<&str> = want.iter().map(|h| h.id.as_str()).collect();
            if got_ids != want_ids {
                problems.push(format!("{:?} {q:?}: order {got_ids:?} vs {want_ids:?}", config.method));
                continue;
            }
            for (g, w) in got.iter().zip(&want) {
                if (g.score - w.score).abs() > tol {
                    problems.push(format!("{:?} {q:?} {}: {} vs {}", config.method, w.id, g.score, w.score));
                }
            }
        }
    }
    problems
}
