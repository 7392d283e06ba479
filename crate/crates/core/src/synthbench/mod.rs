//! Synthetic benchmarks: fictional authors with five attributes each, a
//! corruption generator for restoration experiments, a real-world utility
//! fact pool and lowercase template filler text.
//!
//! Every generator is a pure function of its inputs and seed.

mod words;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lm::encode_document;
use crate::train::Example;

pub use words::CAPITALS;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("word list for {kind} holds {available} values, {needed} needed")]
    Capacity { kind: String, available: usize, needed: usize },
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error("retain set has {available} items, {needed} requested")]
    Size { available: usize, needed: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Birthplace,
    Genre,
    DebutYear,
    Award,
    BookTitle,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 5] =
        [AttributeKind::Birthplace, AttributeKind::Genre, AttributeKind::DebutYear, AttributeKind::Award, AttributeKind::BookTitle];

    /// Every value this kind can take.
    pub fn values(self) -> Vec<String> {
        match self {
            AttributeKind::Birthplace => words::BIRTHPLACES.iter().map(|s| s.to_string()).collect(),
            AttributeKind::Genre => {
                words::GENRE_MOODS.iter().flat_map(|m| words::GENRES.iter().map(move |g| format!("{m} {g}"))).collect()
            }
            AttributeKind::DebutYear => words::DEBUT_YEARS.map(|y| y.to_string()).collect(),
            AttributeKind::Award => {
                words::AWARD_METALS.iter().flat_map(|m| words::AWARD_OBJECTS.iter().map(move |o| format!("{m} {o}"))).collect()
            }
            AttributeKind::BookTitle => words::TITLE_ADJ
                .iter()
                .flat_map(|a| words::TITLE_NOUN.iter().map(move |n| format!("The {a} {n}")))
                .collect(),
        }
    }

    pub fn question(self, name: &str) -> String {
        match self {
            AttributeKind::Birthplace => format!("Q: Where was {name} born? A:"),
            AttributeKind::Genre => format!("Q: What genre does {name} write? A:"),
            AttributeKind::DebutYear => format!("Q: In which year did {name} debut? A:"),
            AttributeKind::Award => format!("Q: Which award did {name} win? A:"),
            AttributeKind::BookTitle => format!("Q: Which book did {name} write? A:"),
        }
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("serializes");
        f.write_str(s.as_str().expect("string variant"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: usize,
    pub name: String,
    pub attributes: BTreeMap<AttributeKind, String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Forget,
    Retain,
    Holdout,
    Utility,
    Filler,
    /// Entities seen during pretraining only, never forgotten or evaluated.
    Background,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub text: String,
    pub split_tag: SplitTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<usize>,
}

impl Document {
    pub fn example(&self) -> Example {
        Example::document(&self.text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub answer: String,
    pub perturbed_answers: Vec<String>,
    pub split_tag: SplitTag,
    pub entity_id: Option<usize>,
}

impl QaItem {
    /// The text generation is conditioned on: the question and one space.
    pub fn prompt(&self) -> String {
        format!("{} ", self.question)
    }

    /// Question and answer as one document.
    pub fn text(&self) -> String {
        format!("{} {}", self.question, self.answer)
    }

    /// Answer-only supervision.
    pub fn example(&self) -> Example {
        Example::completion(&self.prompt(), &self.answer)
    }
}

/// Sizes and seeds of one benchmark instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSpec {
    pub seed: u64,
    pub n_entities: usize,
    pub forget_fraction: f64,
    pub facts_per_entity: usize,
    pub filler_tokens: usize,
    pub utility_facts: usize,
    pub corruption_seed: u64,
    /// Fraction of retain entities whose facts are corrupted in restoration
    /// experiments.
    pub corrupt_fraction: f64,
    pub n_perturbed: usize,
    /// Extra entities rendered into the pretraining corpus.
    pub background_entities: usize,
    /// Distinct values drawn per attribute kind; 0 uses whole word lists.
    pub values_per_kind: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_entities: 64,
            forget_fraction: 0.10,
            facts_per_entity: 5,
            filler_tokens: 200_000,
            utility_facts: 8,
            corruption_seed: 1,
            corrupt_fraction: 0.25,
            n_perturbed: 3,
            background_entities: 0,
            values_per_kind: 0,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: String| Err(BenchError::Config(m));
        if self.n_entities < 2 {
            return fail("n_entities must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.forget_fraction) {
            return fail(format!("forget_fraction {} outside [0, 1)", self.forget_fraction));
        }
        if !(1..=AttributeKind::ALL.len()).contains(&self.facts_per_entity) {
            return fail(format!("facts_per_entity must be in 1..={}", AttributeKind::ALL.len()));
        }
        if self.utility_facts == 0 || self.utility_facts > CAPITALS.len() {
            return fail(format!("utility_facts must be in 1..={}", CAPITALS.len()));
        }
        if self.n_perturbed < 3 {
            return fail("at least 3 perturbed answers are required".into());
        }
        if !(0.0..=1.0).contains(&self.corrupt_fraction) {
            return fail(format!("corrupt_fraction {} outside [0, 1]", self.corrupt_fraction));
        }
        Ok(())
    }

    /// Forget entity count: `floor(fraction·n)`, at least 1 when the
    /// fraction is positive.
    pub fn n_forget(&self) -> usize {
        forget_count(self.n_entities, self.forget_fraction)
    }
}

fn forget_count(n: usize, fraction: f64) -> usize {
    if fraction <= 0.0 {
        0
    } else {
        ((fraction * n as f64).floor() as usize).max(1)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` entities. First and last names are each drawn without replacement,
/// so either half identifies its entity. Each attribute kind is drawn without
/// replacement while its word list lasts, then the shuffled list repeats.
pub fn gen_entities(seed: u64, n: usize) -> Result<Vec<Entity>, BenchError> {
    gen_entities_pooled(seed, n, 0)
}

/// As [`gen_entities`], but each kind uses only `values_per_kind` values of
/// its shuffled list (all when 0), so values recur across entities.
pub fn gen_entities_pooled(seed: u64, n: usize, values_per_kind: usize) -> Result<Vec<Entity>, BenchError> {
    let capacity = words::FIRST_NAMES.len().min(words::LAST_NAMES.len());
    if n > capacity {
        return Err(BenchError::Capacity { kind: "name".into(), available: capacity, needed: n });
    }
    let mut rng = rng_for(seed, 1);
    let mut first = words::FIRST_NAMES.to_vec();
    let mut last = words::LAST_NAMES.to_vec();
    first.shuffle(&mut rng);
    last.shuffle(&mut rng);
    let columns: Vec<(AttributeKind, Vec<String>)> = AttributeKind::ALL
        .iter()
        .map(|&kind| {
            let mut pool = kind.values();
            pool.shuffle(&mut rng);
            if values_per_kind > 0 {
                pool.truncate(values_per_kind);
            }
            (kind, (0..n).map(|i| pool[i % pool.len()].clone()).collect())
        })
        .collect();
    Ok((0..n)
        .map(|i| Entity {
            id: i,
            name: format!("{} {}", first[i], last[i]),
            attributes: columns.iter().map(|(k, vals)| (*k, vals[i].clone())).collect(),
        })
        .collect())
}

/// `n` distinct values of `kind` other than `answer`, chosen by `rng`.
fn perturbed(kind_values: &[String], answer: &str, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let others: Vec<&String> = kind_values.iter().filter(|v| v.as_str() != answer).collect();
    others.choose_multiple(rng, n).map(|s| s.to_string()).collect()
}

/// One QA document per fact plus the matching QA items, for the first
/// `facts_per_entity` attribute kinds. Items are tagged `tag`.
pub fn render_corpus(
    entities: &[Entity],
    facts_per_entity: usize,
    n_perturbed: usize,
    seed: u64,
    tag: impl Fn(&Entity) -> SplitTag,
) -> (Vec<Document>, Vec<QaItem>) {
    let mut rng = rng_for(seed, 2);
    let pools: BTreeMap<AttributeKind, Vec<String>> = AttributeKind::ALL.iter().map(|&k| (k, k.values())).collect();
    let mut docs = Vec::new();
    let mut items = Vec::new();
    for e in entities {
        let split_tag = tag(e);
        for &kind in AttributeKind::ALL.iter().take(facts_per_entity) {
            let answer = e.attributes[&kind].clone();
            let item = QaItem {
                question: kind.question(&e.name),
                perturbed_answers: perturbed(&pools[&kind], &answer, n_perturbed, &mut rng),
                answer,
                split_tag,
                entity_id: Some(e.id),
            };
            docs.push(Document { text: item.text(), split_tag, entity_id: Some(e.id) });
            items.push(item);
        }
    }
    (docs, items)
}

/// Entity-level partition into forget, retain and holdout sets (ids sorted).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySplit {
    pub forget: Vec<usize>,
    pub retain: Vec<usize>,
    pub holdout: Vec<usize>,
}

impl EntitySplit {
    pub fn tag(&self, id: usize) -> SplitTag {
        if self.forget.binary_search(&id).is_ok() {
            SplitTag::Forget
        } else if self.holdout.binary_search(&id).is_ok() {
            SplitTag::Holdout
        } else {
            SplitTag::Retain
        }
    }
}

/// Shuffles entity ids with `seed`, then takes `floor(fraction·n)` (at least
/// one) forget entities followed by as many holdout entities; the rest are
/// retained. A fraction of 0 yields an empty forget set and one holdout.
pub fn partition(entities: &[Entity], fraction: f64, seed: u64) -> Result<EntitySplit, BenchError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(BenchError::Config(format!("forget fraction {fraction} outside [0, 1)")));
    }
    let n = entities.len();
    let n_forget = forget_count(n, fraction);
    let n_holdout = n_forget.max(1);
    if n_forget + n_holdout >= n {
        return Err(BenchError::Config(format!("{n} entities leave no retain set")));
    }
    let mut ids: Vec<usize> = entities.iter().map(|e| e.id).collect();
    ids.shuffle(&mut rng_for(seed, 3));
    let mut forget = ids[..n_forget].to_vec();
    let mut holdout = ids[n_forget..n_forget + n_holdout].to_vec();
    let mut retain = ids[n_forget + n_holdout..].to_vec();
    forget.sort_unstable();
    holdout.sort_unstable();
    retain.sort_unstable();
    Ok(EntitySplit { forget, retain, holdout })
}

/// [`partition`] for a positive fraction; an empty forget set is an error.
pub fn split_forget(entities: &[Entity], fraction: f64, seed: u64) -> Result<EntitySplit, BenchError> {
    if fraction <= 0.0 {
        return Err(BenchError::Config("forget set would be empty".into()));
    }
    partition(entities, fraction, seed)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub entity_id: usize,
    pub kind: AttributeKind,
    pub original: String,
    pub corrupted: String,
}

/// Replaces every attribute of every given entity with a different value of
/// the same kind. Returns the corrupted entities and the mapping.
pub fn corrupt(entities: &[Entity], corruption_seed: u64) -> (Vec<Entity>, Vec<Corruption>) {
    let mut rng = rng_for(corruption_seed, 4);
    let pools: BTreeMap<AttributeKind, Vec<String>> = AttributeKind::ALL.iter().map(|&k| (k, k.values())).collect();
    let mut mapping = Vec::new();
    let corrupted = entities
        .iter()
        .map(|e| {
            let mut out = e.clone();
            for (kind, value) in out.attributes.iter_mut() {
                let others: Vec<&String> = pools[kind].iter().filter(|v| *v != value).collect();
                let new = others.choose(&mut rng).expect("every pool has several values").to_string();
                mapping.push(Corruption { entity_id: e.id, kind: *kind, original: value.clone(), corrupted: new.clone() });
                *value = new;
            }
            out
        })
        .collect();
    (corrupted, mapping)
}

/// Lowercase template sentences, grouped into documents of one or two
/// sentences, until at least `n_tokens` tokens (as encoded documents) exist.
pub fn gen_filler(seed: u64, n_tokens: usize) -> Vec<Document> {
    let mut rng = rng_for(seed, 5);
    let mut docs = Vec::new();
    let mut total = 0;
    while total < n_tokens {
        let n_sent = rng.gen_range(1..=2);
        let text = (0..n_sent).map(|_| filler_sentence(&mut rng)).collect::<Vec<_>>().join(" ");
        total += encode_document(&text).len();
        docs.push(Document { text, split_tag: SplitTag::Filler, entity_id: None });
    }
    docs
}

fn filler_sentence(rng: &mut ChaCha8Rng) -> String {
    use words::*;
    let pick = |rng: &mut ChaCha8Rng, list: &[&'static str]| *list.choose(rng).expect("non-empty");
    let subject = format!("{} {} {}", pick(rng, FILLER_DET), pick(rng, FILLER_ADJ), pick(rng, FILLER_NOUN));
    let object = format!("{} {}", pick(rng, FILLER_DET), pick(rng, FILLER_NOUN));
    if rng.gen_bool(0.5) {
        format!("{subject} {} {object}.", pick(rng, FILLER_VERB))
    } else {
        format!("{subject} {} {object} {} the {}.", pick(rng, FILLER_VERB), pick(rng, FILLER_PREP), pick(rng, FILLER_NOUN))
    }
}

/// The first `n` capital-city facts as QA items and documents.
pub fn utility_facts(n: usize, n_perturbed: usize, seed: u64) -> (Vec<Document>, Vec<QaItem>) {
    let mut rng = rng_for(seed, 6);
    let pool: Vec<String> = CAPITALS.iter().map(|(_, c)| c.to_string()).collect();
    let items: Vec<QaItem> = CAPITALS
        .iter()
        .take(n)
        .map(|(country, capital)| QaItem {
            question: format!("Q: What is the capital of {country}? A:"),
            answer: capital.to_string(),
            perturbed_answers: perturbed(&pool, capital, n_perturbed, &mut rng),
            split_tag: SplitTag::Utility,
            entity_id: None,
        })
        .collect();
    let docs = items.iter().map(|q| Document { text: q.text(), split_tag: SplitTag::Utility, entity_id: None }).collect();
    (docs, items)
}

/// A complete benchmark instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bench {
    pub spec: BenchSpec,
    pub entities: Vec<Entity>,
    pub split: EntitySplit,
    pub documents: Vec<Document>,
    pub qa: Vec<QaItem>,
    pub filler: Vec<Document>,
}

impl Bench {
    pub fn generate(spec: &BenchSpec) -> Result<Self, BenchError> {
        spec.validate()?;
        let entities = gen_entities_pooled(spec.seed, spec.n_entities + spec.background_entities, spec.values_per_kind)?;
        let split = partition(&entities[..spec.n_entities], spec.forget_fraction, spec.seed)?;
        let n = spec.n_entities;
        let tag = |e: &Entity| if e.id >= n { SplitTag::Background } else { split.tag(e.id) };
        let (mut documents, mut qa) = render_corpus(&entities, spec.facts_per_entity, spec.n_perturbed, spec.seed, tag);
        let (udocs, uqa) = utility_facts(spec.utility_facts, spec.n_perturbed, spec.seed);
        documents.extend(udocs);
        qa.extend(uqa);
        let filler = gen_filler(spec.seed, spec.filler_tokens);
        Ok(Self { spec: spec.clone(), entities, split, documents, qa, filler })
    }

    pub fn documents_tagged(&self, tag: SplitTag) -> Vec<&Document> {
        self.documents.iter().filter(|d| d.split_tag == tag).collect()
    }

    pub fn qa_tagged(&self, tag: SplitTag) -> Vec<&QaItem> {
        self.qa.iter().filter(|q| q.split_tag == tag).collect()
    }

    pub fn entity(&self, id: usize) -> &Entity {
        &self.entities[id]
    }

    /// Retain entities chosen for corruption: `floor(corrupt_fraction·n)` of
    /// them, at least one, by `corruption_seed`.
    pub fn corruption_targets(&self) -> Vec<usize> {
        let mut ids = self.split.retain.clone();
        ids.shuffle(&mut rng_for(self.spec.corruption_seed, 7));
        let n = ((self.spec.corrupt_fraction * ids.len() as f64).floor() as usize).max(1).min(ids.len());
        let mut out = ids[..n].to_vec();
        out.sort_unstable();
        out
    }

    /// Writes `documents.jsonl`, `qa.jsonl` and `filler.jsonl` under `dir`.
    pub fn write_jsonl(&self, dir: &Path) -> Result<(), BenchError> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("documents.jsonl"), &self.documents)?;
        write_jsonl(&dir.join("qa.jsonl"), &self.qa)?;
        write_jsonl(&dir.join("filler.jsonl"), &self.filler)?;
        Ok(())
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, BenchError> {
    let text = std::fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Uniform sample of `n` items without replacement, in sampled order.
pub fn sample_subset<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<T>, BenchError> {
    if items.len() < n {
        return Err(BenchError::Size { available: items.len(), needed: n });
    }
    let mut rng = rng_for(seed, 8);
    Ok(items.choose_multiple(&mut rng, n).cloned().collect())
}

/// Names and attribute values of every entity, for leak scans.
pub fn entity_vocabulary(entities: &[Entity]) -> BTreeSet<String> {
    entities.iter().flat_map(|e| std::iter::once(e.name.clone()).chain(e.attributes.values().cloned())).collect()
}
