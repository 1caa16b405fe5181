//! Prepared training data: each candidate pair bundled with its title
//! tokens and knowledge sequence, and the id-level encoding the model
//! consumes.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::vocab::{tokenize, Token, Vocab};
use crate::corpus::{generate_instances, AnnotatedDocument, Instance, InstanceKind, LabelSet};
use crate::error::{Error, Result};
use crate::gaussian::relative_distances;
use crate::kb::{build_knowledge_sequence, KnowledgeBase, KnowledgeSequence};

/// One instance with everything the model reads alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedInstance {
    pub instance: Instance,
    /// Subword tokens of the document title.
    pub title_tokens: Vec<Token>,
    pub knowledge: KnowledgeSequence,
}

/// Expand documents into prepared instances, in document order.
pub fn prepare_dataset(
    docs: &[AnnotatedDocument],
    kb: &KnowledgeBase,
    vocab: &Vocab,
) -> Result<Vec<PreparedInstance>> {
    let mut out = Vec::new();
    for doc in docs {
        let title_tokens = tokenize(&doc.title, vocab);
        for instance in generate_instances(doc)? {
            let knowledge = build_knowledge_sequence(&instance, doc, kb)?;
            out.push(PreparedInstance {
                instance,
                title_tokens: title_tokens.clone(),
                knowledge,
            });
        }
    }
    Ok(out)
}

pub fn write_prepared(path: &Path, prepared: &[PreparedInstance]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for p in prepared {
        let line = serde_json::to_string(p)
            .map_err(|e| Error::validation(p.instance.instance_id.clone(), e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_prepared(path: &Path) -> Result<Vec<PreparedInstance>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PreparedInstance =
            serde_json::from_str(&line).map_err(|e| Error::malformed(i + 1, e.to_string()))?;
        out.push(p);
    }
    Ok(out)
}

/// An instance lowered to vocabulary ids. Every sequence is wrapped in the
/// delimiter pair; the distance lists cover only the sentence tokens
/// between the instance delimiters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedInstance {
    pub instance_id: String,
    pub kind: InstanceKind,
    pub label: String,
    pub gold: usize,
    pub instance_ids: Vec<usize>,
    pub dist1: Vec<i64>,
    pub dist2: Vec<i64>,
    pub title_ids: Vec<usize>,
    pub knowledge_ids: Vec<usize>,
}

impl EncodedInstance {
    /// Sentence-token count, excluding the two delimiters.
    pub fn inner_len(&self) -> usize {
        self.instance_ids.len() - 2
    }
}

fn wrap(ids: impl IntoIterator<Item = usize>, vocab: &Vocab) -> Vec<usize> {
    std::iter::once(vocab.seq_start_id())
        .chain(ids)
        .chain(std::iter::once(vocab.seq_end_id()))
        .collect()
}

/// Lower one prepared instance to ids and distances.
pub fn encode_instance(
    prepared: &PreparedInstance,
    vocab: &Vocab,
    labels: &LabelSet,
) -> Result<EncodedInstance> {
    let ins = &prepared.instance;
    let gold = labels.index_of(&ins.label).ok_or_else(|| {
        Error::validation(
            ins.instance_id.clone(),
            format!("label {:?} not in the {:?} set", ins.label, labels.task()),
        )
    })?;
    let distances = relative_distances(ins.tokens.len(), ins.target1_span, ins.target2_span)?;
    Ok(EncodedInstance {
        instance_id: ins.instance_id.clone(),
        kind: ins.kind,
        label: ins.label.clone(),
        gold,
        instance_ids: wrap(vocab.encode(&ins.tokens), vocab),
        dist1: distances.x1,
        dist2: distances.x2,
        title_ids: wrap(vocab.encode(&prepared.title_tokens), vocab),
        knowledge_ids: wrap(vocab.encode(&prepared.knowledge.tokens()), vocab),
    })
}

pub fn encode_dataset(
    prepared: &[PreparedInstance],
    vocab: &Vocab,
    labels: &LabelSet,
) -> Result<Vec<EncodedInstance>> {
    prepared
        .iter()
        .map(|p| encode_instance(p, vocab, labels))
        .collect()
}
