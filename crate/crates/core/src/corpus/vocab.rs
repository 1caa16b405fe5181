//! Corpus-trained subword vocabulary with greedy longest-match tokenization.
//!
//! Units are plain substrings scored by corpus frequency; full words are
//! always candidates regardless of length. Special tokens are fixed at the
//! lowest ids and are never split, and the relation-tag units sit right
//! after them so knowledge sequences encode to stable ids even when a tag
//! never occurs in corpus text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedDocument;
use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const SEQ_START: &str = "[SEQ_START]";
pub const SEQ_END: &str = "[SEQ_END]";
pub const CHEM_MASK: &str = "@CHEMICAL$";
pub const GENE_MASK: &str = "@GENE$";

pub const SPECIALS: [&str; 6] = [PAD, UNK, SEQ_START, SEQ_END, CHEM_MASK, GENE_MASK];

/// Tag units reserved directly after the specials, in this order.
pub const RESERVED_TAGS: [&str; 7] = [
    "CPR:3", "CPR:4", "CPR:5", "CPR:6", "CPR:7", "CPR:8", "CPR:9",
];

const SUBSTRING_LEN_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    /// True when this token attaches to the previous one with no space.
    pub continuation: bool,
}

impl Token {
    pub fn word(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            continuation: false,
        }
    }

    pub fn piece(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            continuation: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Vocab {
    units: Vec<String>,
    token_to_id: HashMap<String, usize>,
    max_unit_chars: usize,
}

impl Vocab {
    /// Assemble a vocabulary from an explicit unit list. The list must
    /// start with the special tokens and reserved tags in their fixed
    /// order; later units must be unique and whitespace-free.
    pub fn from_units(units: Vec<String>) -> Result<Self> {
        let reserved: Vec<&str> = SPECIALS.iter().chain(RESERVED_TAGS.iter()).copied().collect();
        if units.len() < reserved.len() {
            return Err(Error::validation(
                "vocab",
                format!("needs at least the {} reserved units", reserved.len()),
            ));
        }
        for (i, want) in reserved.iter().enumerate() {
            if units[i] != *want {
                return Err(Error::validation(
                    "vocab",
                    format!("unit {i} must be {want}, found {}", units[i]),
                ));
            }
        }
        let mut token_to_id = HashMap::with_capacity(units.len());
        for (id, unit) in units.iter().enumerate() {
            if unit.is_empty() || unit.chars().any(char::is_whitespace) {
                return Err(Error::validation(
                    "vocab",
                    format!("unit {id} is empty or contains whitespace"),
                ));
            }
            if token_to_id.insert(unit.clone(), id).is_some() {
                return Err(Error::validation("vocab", format!("duplicate unit {unit}")));
            }
        }
        let max_unit_chars = units.iter().map(|u| u.chars().count()).max().unwrap_or(1);
        Ok(Vocab {
            units,
            token_to_id,
            max_unit_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn unit(&self, id: usize) -> Option<&str> {
        self.units.get(id).map(String::as_str)
    }

    pub fn id_of(&self, unit: &str) -> Option<usize> {
        self.token_to_id.get(unit).copied()
    }

    pub fn pad_id(&self) -> usize {
        0
    }

    pub fn unk_id(&self) -> usize {
        1
    }

    pub fn seq_start_id(&self) -> usize {
        2
    }

    pub fn seq_end_id(&self) -> usize {
        3
    }

    /// Id for a token surface; unknown surfaces collapse to UNK.
    pub fn encode_unit(&self, surface: &str) -> usize {
        self.id_of(surface).unwrap_or_else(|| self.unk_id())
    }

    pub fn encode(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.encode_unit(&t.surface)).collect()
    }

    /// FNV-1a over the unit list; stable fingerprint for checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for unit in &self.units {
            for &b in unit.as_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= b'\n' as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for unit in &self.units {
            out.push_str(unit);
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let units: Vec<String> = text.lines().map(str::to_string).collect();
        Vocab::from_units(units)
    }
}

/// Build a vocabulary from corpus text (sentences and titles).
///
/// Candidate units are every substring up to 16 characters plus every full
/// word; each is scored by occurrences weighted by word frequency. Units
/// are admitted by descending score, ties broken by the unit string, until
/// `max_size` is reached. Deterministic for identical input and config.
pub fn build_vocab(
    docs: &[AnnotatedDocument],
    max_size: usize,
    min_freq: u64,
) -> Result<Vocab> {
    let reserved = SPECIALS.len() + RESERVED_TAGS.len();
    if max_size <= reserved {
        return Err(Error::InvalidArgument(format!(
            "max_size {max_size} must exceed the {reserved} reserved units"
        )));
    }
    if min_freq == 0 {
        return Err(Error::InvalidArgument(
            "min_freq must be at least 1".into(),
        ));
    }

    let mut word_freq: BTreeMap<String, u64> = BTreeMap::new();
    for doc in docs {
        for text in std::iter::once(doc.title.as_str())
            .chain(doc.sentences.iter().map(|s| s.text.as_str()))
        {
            for word in text.split_whitespace() {
                *word_freq.entry(word.to_string()).or_insert(0) += 1;
            }
        }
    }
    if word_freq.is_empty() {
        return Err(Error::validation("corpus", "no text to build a vocabulary from"));
    }

    let mut scores: BTreeMap<String, u64> = BTreeMap::new();
    for (word, freq) in &word_freq {
        *scores.entry(word.clone()).or_insert(0) += freq;
        let chars: Vec<char> = word.chars().collect();
        let n = chars.len();
        for start in 0..n {
            let max_len = SUBSTRING_LEN_CAP.min(n - start);
            for len in 1..=max_len {
                if start == 0 && len == n {
                    continue; // already counted as the full word
                }
                let sub: String = chars[start..start + len].iter().collect();
                *scores.entry(sub).or_insert(0) += freq;
            }
        }
    }

    let reserved_set: HashSet<&str> =
        SPECIALS.iter().chain(RESERVED_TAGS.iter()).copied().collect();
    let mut candidates: Vec<(&String, &u64)> = scores
        .iter()
        .filter(|(unit, freq)| **freq >= min_freq && !reserved_set.contains(unit.as_str()))
        .collect();
    candidates.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));

    let mut units: Vec<String> = SPECIALS
        .iter()
        .chain(RESERVED_TAGS.iter())
        .map(|s| s.to_string())
        .collect();
    for (unit, _) in candidates {
        if units.len() >= max_size {
            break;
        }
        units.push(unit.clone());
    }
    Vocab::from_units(units)
}

/// Split a word into pieces around embedded special tokens, specials kept
/// atomic. Returns (piece, is_special) pairs in order.
pub(crate) fn split_on_specials(word: &str) -> Vec<(&str, bool)> {
    let mut pieces = Vec::new();
    let mut rest = word;
    let mut base = 0;
    'outer: while !rest.is_empty() {
        let mut earliest: Option<(usize, &str)> = None;
        for special in SPECIALS {
            if let Some(pos) = rest.find(special) {
                let better = match earliest {
                    None => true,
                    Some((best_pos, best)) => {
                        pos < best_pos || (pos == best_pos && special.len() > best.len())
                    }
                };
                if better {
                    earliest = Some((pos, special));
                }
            }
        }
        match earliest {
            Some((pos, special)) => {
                if pos > 0 {
                    pieces.push((&word[base..base + pos], false));
                }
                pieces.push((special, true));
                base += pos + special.len();
                rest = &word[base..];
            }
            None => {
                pieces.push((&word[base..], false));
                break 'outer;
            }
        }
    }
    pieces
}

/// Greedy longest-match tokenization. Total over all strings: unknown
/// spans become UNK-mapped tokens that keep their original surface, so
/// detokenization always reconstructs the whitespace-normalized input.
pub fn tokenize(text: &str, vocab: &Vocab) -> Vec<Token> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut first_in_word = true;
        for (piece, is_special) in split_on_specials(word) {
            if is_special {
                tokens.push(Token {
                    surface: piece.to_string(),
                    continuation: !first_in_word,
                });
                first_in_word = false;
                continue;
            }
            let chars: Vec<char> = piece.chars().collect();
            let mut i = 0;
            while i < chars.len() {
                let surface = match longest_match_at(&chars, i, vocab) {
                    Some(len) => {
                        let s: String = chars[i..i + len].iter().collect();
                        i += len;
                        s
                    }
                    None => {
                        // Extend the unknown span until a match resumes.
                        let mut j = i + 1;
                        while j < chars.len() && longest_match_at(&chars, j, vocab).is_none() {
                            j += 1;
                        }
                        let s: String = chars[i..j].iter().collect();
                        i = j;
                        s
                    }
                };
                tokens.push(Token {
                    surface,
                    continuation: !first_in_word,
                });
                first_in_word = false;
            }
        }
    }
    tokens
}

fn longest_match_at(chars: &[char], start: usize, vocab: &Vocab) -> Option<usize> {
    let max_len = vocab.max_unit_chars.min(chars.len() - start);
    for len in (1..=max_len).rev() {
        let cand: String = chars[start..start + len].iter().collect();
        if vocab.id_of(&cand).is_some() {
            return Some(len);
        }
    }
    None
}

/// Inverse of [`tokenize`] on whitespace-normalized text.
pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 && !tok.continuation {
            out.push(' ');
        }
        out.push_str(&tok.surface);
    }
    out
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace-normalized round-trip check used by tests and `prepare`.
pub fn round_trips(text: &str, vocab: &Vocab) -> bool {
    detokenize(&tokenize(text, vocab)) == normalize_ws(text)
}
