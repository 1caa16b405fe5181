//! Candidate-pair enumeration and target masking.
//!
//! Every chemical–protein pair co-occurring in a sentence yields one
//! instance: the sentence with the two target mentions replaced by mask
//! tokens, labeled from the gold relations (False when absent), and
//! classified Normal when the sentence holds exactly one candidate pair,
//! Overlapping otherwise.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::vocab::{Token, CHEM_MASK, GENE_MASK};
use crate::corpus::{AnnotatedDocument, EntityKind, EntityMention, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Overlapping,
    Normal,
}

impl std::fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InstanceKind::Overlapping => write!(f, "overlapping"),
            InstanceKind::Normal => write!(f, "normal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub doc_id: String,
    pub sentence_index: usize,
    /// Masked sentence tokens, word-level; the two masks are single tokens.
    pub tokens: Vec<Token>,
    /// Inclusive token span of the chemical mask.
    pub target1_span: (usize, usize),
    /// Inclusive token span of the protein mask.
    pub target2_span: (usize, usize),
    pub chem_id: String,
    pub prot_id: String,
    pub label: String,
    pub kind: InstanceKind,
    /// Dependency edges remapped into this instance's token indices.
    /// Empty when the sentence carries no parse.
    pub dep_edges: Vec<(usize, usize)>,
}

/// One instance per co-sentential chemical–protein pair, in deterministic
/// order (sentence, then chemical span, then protein span). Pairs whose
/// gold annotations carry more than one distinct label are dropped with a
/// warning.
pub fn generate_instances(doc: &AnnotatedDocument) -> Result<Vec<Instance>> {
    let mut pair_labels: BTreeMap<(&str, &str), BTreeSet<&str>> = BTreeMap::new();
    for rel in &doc.relations {
        pair_labels
            .entry((rel.chem_id.as_str(), rel.prot_id.as_str()))
            .or_default()
            .insert(rel.label.as_str());
    }

    let mut instances = Vec::new();
    for (s_idx, sentence) in doc.sentences.iter().enumerate() {
        let mut chems: Vec<&EntityMention> = doc
            .entities
            .iter()
            .filter(|e| e.sentence_index == s_idx && e.kind == EntityKind::Chemical)
            .collect();
        let mut prots: Vec<&EntityMention> = doc
            .entities
            .iter()
            .filter(|e| e.sentence_index == s_idx && e.kind == EntityKind::Protein)
            .collect();
        chems.sort_by_key(|e| (e.start, e.entity_id.clone()));
        prots.sort_by_key(|e| (e.start, e.entity_id.clone()));

        let n_pairs = chems.len() * prots.len();
        if n_pairs == 0 {
            continue;
        }
        let kind = if n_pairs == 1 {
            InstanceKind::Normal
        } else {
            InstanceKind::Overlapping
        };

        for chem in &chems {
            for prot in &prots {
                let key = (chem.entity_id.as_str(), prot.entity_id.as_str());
                let label = match pair_labels.get(&key) {
                    Some(labels) if labels.len() > 1 => {
                        log::warn!(
                            "dropping pair ({}, {}) in {}: conflicting gold labels {:?}",
                            chem.entity_id,
                            prot.entity_id,
                            doc.doc_id,
                            labels
                        );
                        continue;
                    }
                    Some(labels) => (*labels.iter().next().unwrap()).to_string(),
                    None => "False".to_string(),
                };
                let masked = mask_sentence(sentence, chem, prot)?;
                instances.push(Instance {
                    instance_id: format!(
                        "{}.s{}.{}.{}",
                        doc.doc_id, s_idx, chem.entity_id, prot.entity_id
                    ),
                    doc_id: doc.doc_id.clone(),
                    sentence_index: s_idx,
                    tokens: masked.tokens,
                    target1_span: (masked.chem_token, masked.chem_token),
                    target2_span: (masked.prot_token, masked.prot_token),
                    chem_id: chem.entity_id.clone(),
                    prot_id: prot.entity_id.clone(),
                    label,
                    kind,
                    dep_edges: masked.dep_edges,
                });
            }
        }
    }
    Ok(instances)
}

/// Write instances as line-delimited JSON, one per line.
pub fn write_instances(path: &std::path::Path, instances: &[Instance]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for ins in instances {
        let line = serde_json::to_string(ins)
            .map_err(|e| Error::validation(ins.instance_id.clone(), e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_instances(path: &std::path::Path) -> Result<Vec<Instance>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut instances = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ins: Instance = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(i + 1, e.to_string()))?;
        instances.push(ins);
    }
    Ok(instances)
}

struct MaskedSentence {
    tokens: Vec<Token>,
    chem_token: usize,
    prot_token: usize,
    dep_edges: Vec<(usize, usize)>,
}

/// Replace the two target spans with mask tokens, tracking where every
/// original word ends up so dependency edges can be remapped. A span
/// swallows everything it covers, including interior whitespace, so a
/// multi-word mention collapses to one mask token; text touching a span
/// boundary mid-word stays glued to the mask.
fn mask_sentence(
    sentence: &Sentence,
    chem: &EntityMention,
    prot: &EntityMention,
) -> Result<MaskedSentence> {
    if chem.start < prot.end && prot.start < chem.end {
        return Err(Error::validation(
            format!("{}+{}", chem.entity_id, prot.entity_id),
            format!(
                "target spans ({}, {}) and ({}, {}) overlap",
                chem.start, chem.end, prot.start, prot.end
            ),
        ));
    }

    let chars: Vec<char> = sentence.text.chars().collect();
    let in_chem = |i: usize| i >= chem.start && i < chem.end;
    let in_prot = |i: usize| i >= prot.start && i < prot.end;

    let mut tokens: Vec<Token> = Vec::new();
    let mut char_token: Vec<Option<usize>> = vec![None; chars.len()];
    let mut chem_token: Option<usize> = None;
    let mut prot_token: Option<usize> = None;
    let mut plain = String::new();
    let mut plain_starts_word = true;
    let mut at_word_start = true;

    macro_rules! flush_plain {
        () => {
            if !plain.is_empty() {
                tokens.push(Token {
                    surface: std::mem::take(&mut plain),
                    continuation: !plain_starts_word,
                });
            }
        };
    }

    for (i, &c) in chars.iter().enumerate() {
        if in_chem(i) {
            flush_plain!();
            if chem_token.is_none() {
                chem_token = Some(tokens.len());
                tokens.push(Token {
                    surface: CHEM_MASK.to_string(),
                    continuation: !at_word_start,
                });
                at_word_start = false;
            }
            char_token[i] = chem_token;
        } else if in_prot(i) {
            flush_plain!();
            if prot_token.is_none() {
                prot_token = Some(tokens.len());
                tokens.push(Token {
                    surface: GENE_MASK.to_string(),
                    continuation: !at_word_start,
                });
                at_word_start = false;
            }
            char_token[i] = prot_token;
        } else if c.is_whitespace() {
            flush_plain!();
            at_word_start = true;
        } else {
            if plain.is_empty() {
                plain_starts_word = at_word_start;
            }
            char_token[i] = Some(tokens.len());
            plain.push(c);
            at_word_start = false;
        }
    }
    flush_plain!();

    let (Some(chem_token), Some(prot_token)) = (chem_token, prot_token) else {
        return Err(Error::validation(
            format!("{}+{}", chem.entity_id, prot.entity_id),
            "a target span produced no mask token".to_string(),
        ));
    };

    let mask_count = |mask: &str| tokens.iter().filter(|t| t.surface == mask).count();
    if mask_count(CHEM_MASK) != 1 || mask_count(GENE_MASK) != 1 {
        return Err(Error::validation(
            format!("{}+{}", chem.entity_id, prot.entity_id),
            "sentence text already contains a mask string".to_string(),
        ));
    }

    // Original word index -> instance token index. Words intersecting a
    // target span point at its mask so dependency endpoints follow the
    // entities they referred to.
    let mut dep_edges = Vec::new();
    if let Some(edges) = &sentence.dep_edges {
        let mut word_origin = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if chars[i].is_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() {
                i += 1;
            }
            let intersects = |s: usize, e: usize| start < e && i > s;
            let origin = if intersects(chem.start, chem.end) && intersects(prot.start, prot.end) {
                if chem.start.max(start) <= prot.start.max(start) {
                    chem_token
                } else {
                    prot_token
                }
            } else if intersects(chem.start, chem.end) {
                chem_token
            } else if intersects(prot.start, prot.end) {
                prot_token
            } else {
                char_token[start].expect("non-space char maps to a token")
            };
            word_origin.push(origin);
        }

        let mut remapped = BTreeSet::new();
        for &(h, d) in edges {
            let (Some(&h2), Some(&d2)) = (word_origin.get(h), word_origin.get(d)) else {
                return Err(Error::validation(
                    format!("{}+{}", chem.entity_id, prot.entity_id),
                    format!("dependency edge ({h}, {d}) exceeds sentence words"),
                ));
            };
            if h2 != d2 {
                remapped.insert((h2, d2));
            }
        }
        dep_edges = remapped.into_iter().collect();
    }

    Ok(MaskedSentence {
        tokens,
        chem_token,
        prot_token,
        dep_edges,
    })
}
