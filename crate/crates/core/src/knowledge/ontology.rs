//! Concept hierarchy with synonym sets, paraphrases and implication rules.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynonymSet {
    pub concept: String,
    pub lemmas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaphraseRule {
    pub pattern: Vec<String>,
    pub concept: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImplicationRule {
    pub from: String,
    pub to: String,
}

/// On-disk shape of `ontology.toml`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologyFile {
    #[serde(default)]
    pub concepts: Vec<String>,
    #[serde(default)]
    pub isa: Vec<(String, String)>,
    #[serde(default)]
    pub synonyms: Vec<SynonymSet>,
    #[serde(default)]
    pub paraphrases: Vec<ParaphraseRule>,
    #[serde(default)]
    pub implications: Vec<ImplicationRule>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ontology {
    concepts: BTreeSet<String>,
    parents: BTreeMap<String, BTreeSet<String>>,
    synonym_sets: Vec<SynonymSet>,
    lemma_concept: BTreeMap<String, String>,
    paraphrases: Vec<ParaphraseRule>,
    implications: Vec<ImplicationRule>,
}

/// Result of expanding a lemma through the ontology. Empty when the lemma is
/// unknown.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermExpansion {
    pub concept: Option<String>,
    pub synonyms: BTreeSet<String>,
    pub generalizations: Vec<String>,
    pub implications: Vec<String>,
}

impl TermExpansion {
    pub fn is_empty(&self) -> bool {
        self.concept.is_none()
    }
}

pub(crate) fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

impl Ontology {
    pub fn from_file(file: OntologyFile, path: &str) -> Result<Self, KnowledgeError> {
        let dangling = |target: &str| KnowledgeError::DanglingReference {
            file: path.to_string(),
            target: target.to_string(),
        };

        let concepts: BTreeSet<String> = file.concepts.iter().map(|c| norm(c)).collect();
        let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (child, parent) in &file.isa {
            let (child, parent) = (norm(child), norm(parent));
            for c in [&child, &parent] {
                if !concepts.contains(c) {
                    return Err(dangling(c));
                }
            }
            parents.entry(child).or_default().insert(parent);
        }

        let mut lemma_concept = BTreeMap::new();
        let mut synonym_sets = Vec::new();
        for set in &file.synonyms {
            let concept = norm(&set.concept);
            if !concepts.contains(&concept) {
                return Err(dangling(&concept));
            }
            let lemmas: Vec<String> = set.lemmas.iter().map(|l| norm(l)).collect();
            for lemma in &lemmas {
                if concepts.contains(lemma) && *lemma != concept {
                    return Err(KnowledgeError::MalformedFile {
                        path: path.to_string(),
                        reason: format!("synonym `{lemma}` is also the name of another concept"),
                    });
                }
                if let Some(prev) = lemma_concept.insert(lemma.clone(), concept.clone()) {
                    return Err(KnowledgeError::MalformedFile {
                        path: path.to_string(),
                        reason: format!(
                            "lemma `{lemma}` appears in synonym sets of `{prev}` and `{concept}`"
                        ),
                    });
                }
            }
            synonym_sets.push(SynonymSet { concept, lemmas });
        }

        let mut paraphrases = Vec::new();
        for rule in &file.paraphrases {
            let concept = norm(&rule.concept);
            if !concepts.contains(&concept) {
                return Err(dangling(&concept));
            }
            if rule.pattern.is_empty() {
                return Err(KnowledgeError::MalformedFile {
                    path: path.to_string(),
                    reason: format!("empty paraphrase pattern for `{concept}`"),
                });
            }
            paraphrases.push(ParaphraseRule {
                pattern: rule.pattern.iter().map(|l| norm(l)).collect(),
                concept,
            });
        }

        let mut implications = Vec::new();
        for rule in &file.implications {
            let (from, to) = (norm(&rule.from), norm(&rule.to));
            for c in [&from, &to] {
                if !concepts.contains(c) {
                    return Err(dangling(c));
                }
            }
            implications.push(ImplicationRule { from, to });
        }

        let ontology = Self {
            concepts,
            parents,
            synonym_sets,
            lemma_concept,
            paraphrases,
            implications,
        };
        if let Some(cycle) = ontology.find_cycle() {
            return Err(KnowledgeError::CyclicOntology { cycle });
        }
        Ok(ontology)
    }

    pub fn to_file(&self) -> OntologyFile {
        OntologyFile {
            concepts: self.concepts.iter().cloned().collect(),
            isa: self
                .parents
                .iter()
                .flat_map(|(c, ps)| ps.iter().map(move |p| (c.clone(), p.clone())))
                .collect(),
            synonyms: self.synonym_sets.clone(),
            paraphrases: self.paraphrases.clone(),
            implications: self.implications.clone(),
        }
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        fn visit(
            node: &str,
            ont: &Ontology,
            marks: &mut BTreeMap<String, Mark>,
            stack: &mut Vec<String>,
        ) -> Option<Vec<String>> {
            match marks.get(node) {
                Some(Mark::Done) => return None,
                Some(Mark::Active) => {
                    let start = stack.iter().position(|n| n == node).unwrap_or(0);
                    let mut cycle = stack[start..].to_vec();
                    cycle.push(node.to_string());
                    return Some(cycle);
                }
                None => {}
            }
            marks.insert(node.to_string(), Mark::Active);
            stack.push(node.to_string());
            if let Some(parents) = ont.parents.get(node) {
                for p in parents {
                    if let Some(c) = visit(p, ont, marks, stack) {
                        return Some(c);
                    }
                }
            }
            stack.pop();
            marks.insert(node.to_string(), Mark::Done);
            None
        }

        let mut marks = BTreeMap::new();
        for c in &self.concepts {
            let mut stack = Vec::new();
            if let Some(cycle) = visit(c, self, &mut marks, &mut stack) {
                return Some(cycle);
            }
        }
        None
    }

    pub fn concepts(&self) -> impl Iterator<Item = &String> {
        self.concepts.iter()
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.concepts.contains(&norm(concept))
    }

    pub fn isa_edges(&self) -> Vec<(String, String)> {
        self.to_file().isa
    }

    pub fn synonym_sets(&self) -> &[SynonymSet] {
        &self.synonym_sets
    }

    pub fn paraphrases(&self) -> &[ParaphraseRule] {
        &self.paraphrases
    }

    pub fn implication_rules(&self) -> &[ImplicationRule] {
        &self.implications
    }

    /// Concept a lemma denotes: its synonym set's concept, or the concept of
    /// the same name.
    pub fn concept_for_lemma(&self, lemma: &str) -> Option<&str> {
        let lemma = norm(lemma);
        if let Some(c) = self.lemma_concept.get(&lemma) {
            return Some(c.as_str());
        }
        self.concepts.get(&lemma).map(String::as_str)
    }

    /// Surface lemmas for a concept: its own name plus its synonyms.
    pub fn lemmas_for_concept(&self, concept: &str) -> BTreeSet<String> {
        let concept = norm(concept);
        let mut out = BTreeSet::new();
        if self.concepts.contains(&concept) {
            out.insert(concept.clone());
        }
        for set in self.synonym_sets.iter().filter(|s| s.concept == concept) {
            out.extend(set.lemmas.iter().cloned());
        }
        out
    }

    /// Strict ancestors along `isa` edges, in breadth-first order.
    pub fn ancestors(&self, concept: &str) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        let mut queue: VecDeque<String> = VecDeque::from([norm(concept)]);
        while let Some(c) = queue.pop_front() {
            if let Some(parents) = self.parents.get(&c) {
                for p in parents {
                    if seen.insert(p.clone()) {
                        order.push(p.clone());
                        queue.push_back(p.clone());
                    }
                }
            }
        }
        order
    }

    /// Reflexive-transitive subsumption: does `a` reach `b` via `isa` edges?
    pub fn is_subconcept(&self, a: &str, b: &str) -> Result<bool, KnowledgeError> {
        let (a, b) = (norm(a), norm(b));
        for c in [&a, &b] {
            if !self.concepts.contains(c) {
                return Err(KnowledgeError::UnknownConcept(c.clone()));
            }
        }
        Ok(a == b || self.ancestors(&a).contains(&b))
    }

    /// Subsumption in either direction; false for unknown concepts.
    pub fn compatible(&self, a: &str, b: &str) -> bool {
        self.is_subconcept(a, b).unwrap_or(false) || self.is_subconcept(b, a).unwrap_or(false)
    }

    /// Concepts implied by `concept`. Rules attached to a concept also apply
    /// to its descendants, and implied concepts carry their own implications,
    /// so the result is the fixpoint over both edge kinds minus the concept's
    /// own up-closure.
    pub fn implications(&self, concept: &str) -> Vec<String> {
        let concept = norm(concept);
        let mut own_closure: BTreeSet<String> = self.ancestors(&concept).into_iter().collect();
        own_closure.insert(concept.clone());

        let mut reached = own_closure.clone();
        let mut order = Vec::new();
        let mut queue: VecDeque<String> = reached.iter().cloned().collect();
        while let Some(c) = queue.pop_front() {
            let mut next: Vec<String> = self
                .implications
                .iter()
                .filter(|r| r.from == c)
                .map(|r| r.to.clone())
                .collect();
            next.extend(self.parents.get(&c).into_iter().flatten().cloned());
            for n in next {
                if reached.insert(n.clone()) {
                    if !own_closure.contains(&n) {
                        order.push(n.clone());
                    }
                    queue.push_back(n);
                }
            }
        }
        order
    }

    /// Lemma-level expansion: concept, co-synonyms, generalizations and
    /// implications.
    pub fn expand(&self, lemma: &str) -> TermExpansion {
        let Some(concept) = self.concept_for_lemma(lemma).map(str::to_string) else {
            return TermExpansion::default();
        };
        let mut synonyms = self.lemmas_for_concept(&concept);
        synonyms.remove(&concept);
        TermExpansion {
            generalizations: self.ancestors(&concept),
            implications: self.implications(&concept),
            synonyms,
            concept: Some(concept),
        }
    }

    /// Longest paraphrase pattern that is a suffix of `lemmas`, if any.
    pub fn paraphrase_suffix(&self, lemmas: &[String]) -> Option<(&str, usize)> {
        self.paraphrases
            .iter()
            .filter(|rule| {
                rule.pattern.len() <= lemmas.len()
                    && lemmas[lemmas.len() - rule.pattern.len()..] == rule.pattern[..]
            })
            .max_by_key(|rule| rule.pattern.len())
            .map(|rule| (rule.concept.as_str(), rule.pattern.len()))
    }
}
