//! Corpus ingestion: DocRED-style JSON and line-delimited triple files,
//! canonicalized into [`Document`]s, plus entity-pair enumeration.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;

use crate::error::{DocreError, Result};

/// One surface occurrence of an entity inside a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Mention {
    pub surface: Vec<String>,
    pub sent_id: usize,
    /// Half-open token interval [start, end) within the sentence.
    pub span: (usize, usize),
    pub ent_type: String,
}

/// A group of coreferent mentions.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub mentions: Vec<Mention>,
    /// First mention's surface by default.
    pub canonical_name: Vec<String>,
}

impl Entity {
    pub fn from_mentions(mentions: Vec<Mention>) -> Self {
        assert!(!mentions.is_empty(), "entity needs at least one mention");
        let canonical_name = mentions[0].surface.clone();
        Entity {
            mentions,
            canonical_name,
        }
    }
}

/// A gold fact: (head entity index, tail entity index, relation id, evidence sentences).
#[derive(Debug, Clone, PartialEq)]
pub struct GoldLabel {
    pub head_idx: usize,
    pub tail_idx: usize,
    pub relation_id: usize,
    pub evidence: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<String>>,
    pub entities: Vec<Entity>,
    pub gold_labels: Vec<GoldLabel>,
}

impl Document {
    pub fn flat_tokens(&self) -> Vec<String> {
        self.sentences.iter().flatten().cloned().collect()
    }

    fn validate(&self) -> Result<()> {
        let n: usize = self.sentences.iter().map(|s| s.len()).sum();
        if n == 0 {
            return Err(DocreError::Validation {
                doc_id: self.doc_id.clone(),
                message: "document has no tokens".into(),
            });
        }
        for e in &self.entities {
            for m in &e.mentions {
                if m.span.0 >= m.span.1 {
                    return Err(DocreError::Validation {
                        doc_id: self.doc_id.clone(),
                        message: format!("empty mention span {:?}", m.span),
                    });
                }
                let sent = self.sentences.get(m.sent_id).ok_or_else(|| DocreError::Validation {
                    doc_id: self.doc_id.clone(),
                    message: format!("mention sent_id {} out of range", m.sent_id),
                })?;
                if m.span.1 > sent.len() {
                    return Err(DocreError::Validation {
                        doc_id: self.doc_id.clone(),
                        message: format!(
                            "mention span {:?} exceeds sentence {} length {}",
                            m.span,
                            m.sent_id,
                            sent.len()
                        ),
                    });
                }
            }
        }
        for l in &self.gold_labels {
            if l.head_idx >= self.entities.len() || l.tail_idx >= self.entities.len() {
                return Err(DocreError::Validation {
                    doc_id: self.doc_id.clone(),
                    message: format!("label entity index out of range ({}, {})", l.head_idx, l.tail_idx),
                });
            }
            if l.head_idx == l.tail_idx {
                return Err(DocreError::Validation {
                    doc_id: self.doc_id.clone(),
                    message: "label head equals tail".into(),
                });
            }
        }
        Ok(())
    }
}

/// Relation label inventory. Index 0 is always the explicit no-relation class.
#[derive(Debug, Clone)]
pub struct RelationSchema {
    pub id_to_label: Vec<String>,
    pub label_to_id: HashMap<String, usize>,
    pub na_id: usize,
}

pub const NA_LABEL: &str = "no_relation";

impl RelationSchema {
    /// Builds a schema from relation names; `no_relation` is prepended if absent
    /// and must otherwise be first.
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let mut id_to_label = Vec::new();
        if labels.first().map(String::as_str) != Some(NA_LABEL) {
            id_to_label.push(NA_LABEL.to_string());
        }
        id_to_label.extend(labels);
        let mut label_to_id = HashMap::new();
        for (i, l) in id_to_label.iter().enumerate() {
            if label_to_id.insert(l.clone(), i).is_some() {
                return Err(DocreError::Config(format!("duplicate relation label {l:?}")));
            }
        }
        if id_to_label.len() < 2 {
            return Err(DocreError::Config(
                "schema needs at least one relation besides no_relation".into(),
            ));
        }
        Ok(RelationSchema {
            id_to_label,
            label_to_id,
            na_id: 0,
        })
    }

    /// Reads a line-delimited schema file; line 0 must be `no_relation`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let labels: Vec<String> = text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
        if labels.first().map(String::as_str) != Some(NA_LABEL) {
            return Err(DocreError::Config(format!(
                "schema file {} must start with {NA_LABEL:?}",
                path.display()
            )));
        }
        Self::new(labels[1..].to_vec())
    }

    pub fn len(&self) -> usize {
        self.id_to_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_label.is_empty()
    }

    pub fn id_of(&self, label: &str) -> Result<usize> {
        self.label_to_id
            .get(label)
            .copied()
            .ok_or_else(|| DocreError::Schema {
                label: label.to_string(),
            })
    }
}

/// One (document, head, tail, relation) classification unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInstance {
    pub doc_id: String,
    pub head_tokens: Vec<String>,
    pub tail_tokens: Vec<String>,
    pub doc_tokens: Vec<String>,
    pub relation_id: usize,
}

// DocRED wire format.
#[derive(Deserialize)]
struct DocredRecord {
    title: String,
    sents: Vec<Vec<String>>,
    #[serde(rename = "vertexSet")]
    vertex_set: Vec<Vec<DocredMention>>,
    #[serde(default)]
    labels: Vec<DocredLabel>,
}

#[derive(Deserialize)]
struct DocredMention {
    name: String,
    sent_id: usize,
    pos: (usize, usize),
    #[serde(rename = "type", default)]
    ent_type: String,
}

#[derive(Deserialize)]
struct DocredLabel {
    h: usize,
    t: usize,
    r: String,
    #[serde(default)]
    evidence: Vec<usize>,
}

/// Loads a DocRED JSON array into Documents. Mentions are grouped into
/// entities by vertexSet index; relation names go through the schema.
pub fn load_docred(path: &Path, schema: &RelationSchema) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path)?;
    let records: Vec<serde_json::Value> = serde_json::from_str(&text)?;
    let mut docs = Vec::with_capacity(records.len());
    for (idx, value) in records.into_iter().enumerate() {
        let rec: DocredRecord =
            serde_json::from_value(value).map_err(|e| DocreError::Parse {
                record: idx,
                message: e.to_string(),
            })?;
        let entities = rec
            .vertex_set
            .into_iter()
            .map(|group| {
                let mentions = group
                    .into_iter()
                    .map(|m| Mention {
                        surface: m.name.split_whitespace().map(str::to_string).collect(),
                        sent_id: m.sent_id,
                        span: m.pos,
                        ent_type: m.ent_type,
                    })
                    .collect::<Vec<_>>();
                if mentions.is_empty() {
                    Err(DocreError::Validation {
                        doc_id: rec.title.clone(),
                        message: "empty vertexSet group".into(),
                    })
                } else {
                    Ok(Entity::from_mentions(mentions))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let gold_labels = rec
            .labels
            .iter()
            .map(|l| {
                Ok(GoldLabel {
                    head_idx: l.h,
                    tail_idx: l.t,
                    relation_id: schema.id_of(&l.r)?,
                    evidence: l.evidence.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let doc = Document {
            doc_id: rec.title,
            sentences: rec.sents,
            entities,
            gold_labels,
        };
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Deserialize)]
struct TripleRecord {
    text: String,
    head: String,
    tail: String,
    relation: String,
}

/// Finds the first occurrence of `needle` as a contiguous token run.
fn find_span(tokens: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - needle.len()).find(|&i| tokens[i..i + needle.len()] == *needle)
}

/// Loads line-delimited {text, head, tail, relation} records as single-sentence
/// Documents. Head and tail become single-mention entities located by their
/// first occurrence in the text.
pub fn load_triples(path: &Path, schema: &RelationSchema) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path)?;
    let mut docs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripleRecord = serde_json::from_str(line).map_err(|e| DocreError::Parse {
            record: idx,
            message: e.to_string(),
        })?;
        let doc_id = format!("triple-{idx}");
        let tokens: Vec<String> = rec.text.split_whitespace().map(str::to_string).collect();
        let head: Vec<String> = rec.head.split_whitespace().map(str::to_string).collect();
        let tail: Vec<String> = rec.tail.split_whitespace().map(str::to_string).collect();
        let head_start = find_span(&tokens, &head).ok_or_else(|| DocreError::Validation {
            doc_id: doc_id.clone(),
            message: format!("head {:?} not found in text", rec.head),
        })?;
        let tail_start = find_span(&tokens, &tail).ok_or_else(|| DocreError::Validation {
            doc_id: doc_id.clone(),
            message: format!("tail {:?} not found in text", rec.tail),
        })?;
        if head_start == tail_start && head == tail {
            return Err(DocreError::Validation {
                doc_id,
                message: "head and tail resolve to the same span".into(),
            });
        }
        let mk_entity = |surface: Vec<String>, start: usize| {
            Entity::from_mentions(vec![Mention {
                span: (start, start + surface.len()),
                surface,
                sent_id: 0,
                ent_type: String::new(),
            }])
        };
        let doc = Document {
            doc_id,
            sentences: vec![tokens],
            entities: vec![mk_entity(head, head_start), mk_entity(tail, tail_start)],
            gold_labels: vec![GoldLabel {
                head_idx: 0,
                tail_idx: 1,
                relation_id: schema.id_of(&rec.relation)?,
                evidence: vec![0],
            }],
        };
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

/// How unlabeled ordered entity pairs become NA training instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativePolicy {
    /// Every unlabeled ordered pair.
    All,
    /// At most k unlabeled pairs per document, drawn without replacement.
    Sampled(usize),
    /// Gold pairs only.
    None,
}

/// Expands a Document into PairInstances: one instance per gold relation on an
/// ordered pair, plus NA instances for unlabeled pairs per the policy.
pub fn enumerate_pairs<R: Rng>(
    doc: &Document,
    schema: &RelationSchema,
    policy: NegativePolicy,
    rng: &mut R,
) -> Vec<PairInstance> {
    let doc_tokens = doc.flat_tokens();
    let mut instances = Vec::new();
    let make = |head: usize, tail: usize, relation_id: usize| PairInstance {
        doc_id: doc.doc_id.clone(),
        head_tokens: doc.entities[head].canonical_name.clone(),
        tail_tokens: doc.entities[tail].canonical_name.clone(),
        doc_tokens: doc_tokens.clone(),
        relation_id,
    };
    let mut labeled: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    for l in &doc.gold_labels {
        instances.push(make(l.head_idx, l.tail_idx, l.relation_id));
        labeled.insert((l.head_idx, l.tail_idx));
    }
    if policy == NegativePolicy::None {
        return instances;
    }
    let mut negatives: Vec<(usize, usize)> = Vec::new();
    for h in 0..doc.entities.len() {
        for t in 0..doc.entities.len() {
            if h != t && !labeled.contains(&(h, t)) {
                negatives.push((h, t));
            }
        }
    }
    if let NegativePolicy::Sampled(k) = policy {
        negatives.shuffle(rng);
        negatives.truncate(k);
        // Keep output order deterministic for a given seed but stable across runs.
        negatives.sort_unstable();
    }
    for (h, t) in negatives {
        instances.push(make(h, t, schema.na_id));
    }
    instances
}
