//! Retrieval corpora, query sets and random fact-sheet stores.

use std::collections::BTreeMap;

use ctrlbot_core::knowledge::{
    Document, DocumentId, FactSheet, KnowledgeBase, MetaValue, Relation, SheetKind, SlotValue,
};
use ctrlbot_core::nlu::{Constraint, ConstraintValue, Term};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub fn doc(id: &str, title: &str, body: &str, meta: &[(&str, &str)]) -> Document {
    Document {
        id: DocumentId::new(id),
        title: title.to_string(),
        body: body.to_string(),
        metadata: meta.iter().map(|(k, v)| (k.to_string(), MetaValue::parse(v))).collect(),
        annotations: BTreeMap::new(),
        source: format!("{id}.md"),
        revision: 1,
    }
}

/// Three documents, two of which mention chocolate (idf ln(3/2)). Only the
/// first uses the word praline.
pub fn three_docs() -> Vec<Document> {
    vec![
        doc("a", "Pralines", "Chocolate pralines have a fair price.", &[("category", "pricing"), ("topic", "[chocolate]")]),
        doc("b", "Dark bars", "Dark chocolate with hazelnut pieces.", &[("category", "products"), ("topic", "[dark_chocolate, nut]")]),
        doc("c", "Delivery", "Every order ships by parcel service.", &[("category", "shipping"), ("topic", "[shipping]")]),
    ]
}

/// Fixture knowledge base with its documents replaced by `docs`.
pub fn kb_with_docs(base: &KnowledgeBase, docs: Vec<Document>) -> KnowledgeBase {
    let mut kb = base.clone();
    kb.documents = docs.into_iter().map(|d| (d.id.clone(), d)).collect();
    kb
}

const WORDS: &[&str] = &[
    "chocolate", "pralines", "nuts", "hazelnut", "milk", "price", "shipping", "delivery", "cocoa",
    "beans", "bars", "box", "shop", "workshop", "parcel", "phone", "euro", "dark", "tasting", "gift",
    "vegan", "sugar", "vanilla", "caramel", "recipe", "storage", "cellar", "orders", "returns",
    "allergy", "label", "ribbon", "summer", "winter", "truffle", "origin", "farm", "roast",
];
const TOPICS: &[&str] = &[
    "chocolate", "dark_chocolate", "milk_chocolate", "nut", "milk", "shipping", "ingredient", "food",
];
const INTENTS: &[&str] = &["factoid", "definition", "procedural", "yesno"];

/// `n` documents of 4 to 18 random words with random topic and intent tags.
pub fn synthetic_docs(seed: u64, n: usize) -> Vec<Document> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(4..=18);
            let words: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            let body = format!("{}.", words.join(" "));
            let n_topics = rng.gen_range(0..3);
            let topics: Vec<&str> = TOPICS.choose_multiple(&mut rng, n_topics).copied().collect();
            let intent = *INTENTS.choose(&mut rng).unwrap();
            let mut d = doc(
                &format!("syn-{i:03}"),
                &format!("Synthetic {i}"),
                &body,
                &[("topic", &format!("[{}]", topics.join(", "))), ("intent", &format!("[{intent}]"))],
            );
            if rng.gen_bool(0.2) {
                d.annotations.insert("audience".into(), "vegan".into());
            }
            d
        })
        .collect()
}

/// Twenty queries with the metadata retrieval would be given for them.
pub fn queries() -> Vec<(String, BTreeMap<String, String>)> {
    let fixed: &[(&str, &[(&str, &str)])] = &[
        ("praline price", &[]),
        ("How much does dark chocolate cost?", &[("intent", "factoid"), ("topic", "dark_chocolate")]),
        ("Do you sell chocolate containing nuts?", &[("intent", "yesno"), ("topic", "chocolate")]),
        ("How long does delivery take?", &[("intent", "factoid"), ("topic", "shipping")]),
        ("Can I return a damaged parcel?", &[("intent", "yesno")]),
        ("Where do the cocoa beans come from?", &[("intent", "factoid")]),
        ("vegan", &[("audience", "vegan")]),
        ("Tell me about milk chocolate.", &[("topic", "milk_chocolate")]),
        ("hazelnut", &[("topic", "nut")]),
        ("schokolade nuss", &[]),
        ("Is there a tasting workshop?", &[("intent", "yesno")]),
        ("phone number", &[]),
        ("gift box ribbon", &[("intent", "factoid")]),
        ("xyzzy plugh", &[]),
        ("", &[("topic", "chocolate")]),
        ("caramel truffle summer", &[]),
        ("How should I store the bars?", &[("intent", "procedural")]),
        ("milk", &[("topic", "milk"), ("intent", "definition")]),
        ("food", &[]),
        ("shipping shipping shipping", &[("topic", "\"Shipping\"")]),
    ];
    fixed
        .iter()
        .map(|(q, m)| (q.to_string(), m.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()))
        .collect()
}

/// Concepts available in the fixture ontology.
pub const FIXTURE_CONCEPTS: &[&str] = &[
    "product", "food", "chocolate", "dark_chocolate", "milk_chocolate", "ingredient", "nut", "milk", "shipping",
];

fn random_value(rng: &mut StdRng) -> SlotValue {
    match rng.gen_range(0..4) {
        0 => SlotValue::concept(FIXTURE_CONCEPTS.choose(rng).unwrap()),
        1 => SlotValue::List(Vec::new()),
        2 => SlotValue::List(
            (0..rng.gen_range(1..3))
                .map(|_| SlotValue::concept(FIXTURE_CONCEPTS.choose(rng).unwrap()))
                .collect(),
        ),
        _ => SlotValue::Number(rng.gen_range(1..6) as f64),
    }
}

/// Fixture ontology with up to `max_sheets` random fact sheets. Slots are
/// drawn from `contains`, `price` and `source`; some sheets get a
/// `contains` relation instead of a slot.
pub fn random_sheet_kb(base: &KnowledgeBase, rng: &mut StdRng, max_sheets: usize) -> KnowledgeBase {
    let mut kb = base.clone();
    kb.factsheets.clear();
    let n = rng.gen_range(1..=max_sheets);
    let ids: Vec<String> = (0..n).map(|i| format!("rs-{i:02}")).collect();
    for id in &ids {
        let mut slots = BTreeMap::new();
        for slot in ["contains", "price", "source"] {
            if rng.gen_bool(0.5) {
                slots.insert(slot.to_string(), random_value(rng));
            }
        }
        let mut relations = Vec::new();
        if !slots.contains_key("contains") && rng.gen_bool(0.3) {
            relations.push(Relation { name: "contains".into(), target: ids.choose(rng).unwrap().clone() });
        }
        kb.factsheets.insert(
            id.clone(),
            FactSheet {
                id: id.clone(),
                kind: SheetKind::Individual,
                concept: FIXTURE_CONCEPTS.choose(rng).unwrap().to_string(),
                label: id.to_uppercase(),
                slots,
                relations,
                answer_text: None,
            },
        );
    }
    kb
}

pub fn random_term(rng: &mut StdRng) -> Term {
    let constraints = (0..rng.gen_range(0..4))
        .map(|_| {
            let slot = ["contains", "price", "source"].choose(rng).unwrap().to_string();
            let expected = if rng.gen_bool(0.7) {
                ConstraintValue::Concept(FIXTURE_CONCEPTS.choose(rng).unwrap().to_string())
            } else {
                ConstraintValue::Scalar(rng.gen_range(1..6).to_string())
            };
            Constraint { slot, expected }
        })
        .collect();
    Term::new(FIXTURE_CONCEPTS.choose(rng).unwrap(), constraints)
}
