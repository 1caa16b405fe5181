//! Annotated-corpus ingestion: document model, JSONL parsing with
//! validation, label sets for both task modes, and dataset statistics.

pub mod blue;
pub mod instances;
pub mod vocab;

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use instances::{generate_instances, Instance, InstanceKind};
pub use vocab::{build_vocab, detokenize, tokenize, Token, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Cpi,
    Ddi,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cpi" => Ok(Task::Cpi),
            "ddi" => Ok(Task::Ddi),
            other => Err(Error::InvalidArgument(format!(
                "unknown task {other}, expected cpi or ddi"
            ))),
        }
    }
}

const CPI_LABELS: &[&str] = &["CPR:3", "CPR:4", "CPR:5", "CPR:6", "CPR:9", "False"];
const DDI_LABELS: &[&str] = &["Advice", "Effect", "Mechanism", "Int", "False"];

/// The closed label inventory for one task; False is always last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSet {
    task: Task,
    names: &'static [&'static str],
}

impl LabelSet {
    pub fn for_task(task: Task) -> Self {
        let names = match task {
            Task::Cpi => CPI_LABELS,
            Task::Ddi => DDI_LABELS,
        };
        LabelSet { task, names }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn names(&self) -> &'static [&'static str] {
        self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| *n == name)
    }

    pub fn name(&self, index: usize) -> Option<&'static str> {
        self.names.get(index).copied()
    }

    pub fn false_index(&self) -> usize {
        self.names.len() - 1
    }

    pub fn false_name(&self) -> &'static str {
        self.names[self.false_index()]
    }

    pub fn positive_names(&self) -> &'static [&'static str] {
        &self.names[..self.names.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    /// Undirected dependency edges as (head, dependent) pairs over the
    /// sentence's whitespace-token indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dep_edges: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    #[serde(alias = "Chemical", alias = "CHEMICAL")]
    Chemical,
    #[serde(
        alias = "Protein",
        alias = "PROTEIN",
        alias = "gene",
        alias = "Gene",
        alias = "GENE"
    )]
    Protein,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    #[serde(rename = "id")]
    pub entity_id: String,
    pub kind: EntityKind,
    #[serde(rename = "sentence")]
    pub sentence_index: usize,
    /// Character span, half-open, over the sentence text.
    pub start: usize,
    pub end: usize,
    #[serde(rename = "text")]
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub chem_id: String,
    pub prot_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub doc_id: String,
    pub title: String,
    pub sentences: Vec<Sentence>,
    #[serde(default)]
    pub entities: Vec<EntityMention>,
    #[serde(default)]
    pub relations: Vec<GoldRelation>,
}

impl AnnotatedDocument {
    pub fn entity(&self, id: &str) -> Option<&EntityMention> {
        self.entities.iter().find(|e| e.entity_id == id)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusFormat {
    pub task: Task,
}

impl Default for CorpusFormat {
    fn default() -> Self {
        CorpusFormat { task: Task::Cpi }
    }
}

/// Parse a line-delimited corpus file, one JSON document per line, and
/// validate every document. Blank lines are permitted and skipped.
pub fn parse_corpus(path: &Path, format: &CorpusFormat) -> Result<Vec<AnnotatedDocument>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let labels = LabelSet::for_task(format.task);
    let mut docs = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let record = line_no + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: AnnotatedDocument = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(record, e.to_string()))?;
        validate_document(&doc, &labels, record)?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Check the structural invariants of one document: spans inside their
/// sentence with matching surface text, unique entity ids, relations over
/// existing correctly-typed entities with known labels, and dependency
/// edges over valid token indices.
pub fn validate_document(
    doc: &AnnotatedDocument,
    labels: &LabelSet,
    record: usize,
) -> Result<()> {
    let ctx = |subject: &str, msg: String| {
        Error::validation(subject, format!("record {record}: {msg}"))
    };

    let mut seen = std::collections::HashSet::new();
    for entity in &doc.entities {
        let id = entity.entity_id.as_str();
        if !seen.insert(id) {
            return Err(ctx(id, format!("duplicate entity id in {}", doc.doc_id)));
        }
        let Some(sentence) = doc.sentences.get(entity.sentence_index) else {
            return Err(ctx(
                id,
                format!(
                    "sentence index {} out of range for {}",
                    entity.sentence_index, doc.doc_id
                ),
            ));
        };
        let chars: Vec<char> = sentence.text.chars().collect();
        if entity.start >= entity.end || entity.end > chars.len() {
            return Err(ctx(
                id,
                format!(
                    "span ({}, {}) invalid for a {}-char sentence",
                    entity.start,
                    entity.end,
                    chars.len()
                ),
            ));
        }
        let actual: String = chars[entity.start..entity.end].iter().collect();
        if actual != entity.surface {
            return Err(ctx(
                id,
                format!(
                    "surface {:?} does not match sentence span text {:?}",
                    entity.surface, actual
                ),
            ));
        }
    }

    for (i, rel) in doc.relations.iter().enumerate() {
        let subject = format!("{}:relation[{i}]", doc.doc_id);
        let chem = doc
            .entity(&rel.chem_id)
            .ok_or_else(|| ctx(&subject, format!("unknown chemical id {}", rel.chem_id)))?;
        let prot = doc
            .entity(&rel.prot_id)
            .ok_or_else(|| ctx(&subject, format!("unknown protein id {}", rel.prot_id)))?;
        if chem.kind != EntityKind::Chemical {
            return Err(ctx(
                &subject,
                format!("{} is not a chemical mention", rel.chem_id),
            ));
        }
        if prot.kind != EntityKind::Protein {
            return Err(ctx(
                &subject,
                format!("{} is not a protein mention", rel.prot_id),
            ));
        }
        if labels.index_of(&rel.label).is_none() {
            return Err(ctx(
                &subject,
                format!(
                    "label {:?} not in the {:?} label set {:?}",
                    rel.label,
                    labels.task(),
                    labels.names()
                ),
            ));
        }
    }

    for (s_idx, sentence) in doc.sentences.iter().enumerate() {
        if let Some(edges) = &sentence.dep_edges {
            let n_words = sentence.text.split_whitespace().count();
            for &(h, d) in edges {
                if h >= n_words || d >= n_words {
                    return Err(ctx(
                        &format!("{}:sentence[{s_idx}]", doc.doc_id),
                        format!("dependency edge ({h}, {d}) exceeds {n_words} tokens"),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Instance counts for one split: totals, kind breakdown, per-label tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub total: usize,
    pub overlapping: usize,
    pub normal: usize,
    pub label_counts: BTreeMap<String, usize>,
}

pub fn corpus_stats(instances: &[Instance]) -> SplitStats {
    let mut stats = SplitStats::default();
    for ins in instances {
        stats.total += 1;
        match ins.kind {
            InstanceKind::Overlapping => stats.overlapping += 1,
            InstanceKind::Normal => stats.normal += 1,
        }
        *stats.label_counts.entry(ins.label.clone()).or_insert(0) += 1;
    }
    stats
}
