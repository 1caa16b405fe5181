//! Synthetic overlapping-relation corpus. Every sentence carries a 2-3 x 2-3
//! grid of chemical and protein mentions where the label of each pair is
//! decided purely by a trigger verb sitting next to that pair. All mentions
//! of a kind share one surface inside a sentence, so the instances differ
//! only in which occurrence is masked: bag-of-words features cannot tell
//! them apart, positions can.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::corpus::{
    AnnotatedDocument, EntityKind, EntityMention, GoldRelation, LabelSet, Sentence, Task,
};
use crate::error::{Error, Result};

/// Trigger verbs and the label each one encodes.
pub const TRIGGERS: [(&str, &str); 5] = [
    ("activates", "CPR:3"),
    ("inhibits", "CPR:4"),
    ("agonizes", "CPR:5"),
    ("antagonizes", "CPR:6"),
    ("metabolizes", "CPR:9"),
];

const MIN_DOCS: usize = 50;
const KB_FRACTION: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub chem_pool: Vec<String>,
    pub prot_pool: Vec<String>,
    pub fillers: Vec<String>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let words = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        SynthSpec {
            chem_pool: words(&[
                "aspirin",
                "dasatinib",
                "quercetin",
                "nicotine",
                "ketamine",
                "ritonavir",
                "haloperidol",
                "caffeine",
                "morphine",
                "tamoxifen",
            ]),
            prot_pool: words(&[
                "CYP3A4", "EGFR", "BRCA1", "TP53", "AKT1", "MAPK1", "ALK5", "JAK2", "HDAC6",
                "PPARG",
            ]),
            fillers: words(&[
                "the",
                "in",
                "treated",
                "cells",
                "and",
                "a",
                "dose",
                "dependent",
                "manner",
                "study",
                "observed",
                "during",
                "assay",
                "with",
                "of",
                "results",
                "after",
                "exposure",
            ]),
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        for (name, pool) in [
            ("chem_pool", &self.chem_pool),
            ("prot_pool", &self.prot_pool),
            ("fillers", &self.fillers),
        ] {
            if pool.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} is empty")));
            }
        }
        let mut seen = BTreeSet::new();
        let triggers = TRIGGERS.iter().map(|(w, _)| w.to_string());
        for word in self
            .chem_pool
            .iter()
            .chain(&self.prot_pool)
            .chain(&self.fillers)
            .cloned()
            .chain(triggers)
        {
            if word.split_whitespace().count() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "pool word {word:?} is not a single token"
                )));
            }
            if !seen.insert(word.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "word {word:?} appears in more than one pool"
                )));
            }
        }
        Ok(())
    }
}

pub struct SyntheticCorpus {
    pub train: Vec<AnnotatedDocument>,
    pub dev: Vec<AnnotatedDocument>,
    pub test: Vec<AnnotatedDocument>,
    /// (chemical surface, protein surface, tag) rows for the prior-knowledge
    /// file, sorted.
    pub kb_rows: Vec<(String, String, String)>,
}

pub struct SynthPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub kb: PathBuf,
}

impl SyntheticCorpus {
    pub fn write(&self, dir: &Path) -> Result<SynthPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let dump = |name: &str, docs: &[AnnotatedDocument]| -> Result<PathBuf> {
            let path = dir.join(name);
            let mut out = String::new();
            for doc in docs {
                let line = serde_json::to_string(doc)
                    .map_err(|e| Error::validation(doc.doc_id.clone(), e.to_string()))?;
                out.push_str(&line);
                out.push('\n');
            }
            fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        };
        let train = dump("train.jsonl", &self.train)?;
        let dev = dump("dev.jsonl", &self.dev)?;
        let test = dump("test.jsonl", &self.test)?;
        let kb = dir.join("kb.tsv");
        let mut out = String::new();
        for (c, p, tag) in &self.kb_rows {
            out.push_str(&format!("{c}\t{p}\t{tag}\n"));
        }
        fs::write(&kb, out).map_err(|e| Error::io(&kb, e))?;
        Ok(SynthPaths {
            train,
            dev,
            test,
            kb,
        })
    }
}

/// Returns the label a distance-capped trigger scan assigns to the pair at
/// the two token positions: some trigger verb within `radius` tokens of
/// both, or None.
pub fn trigger_oracle(
    tokens: &[&str],
    pos_a: usize,
    pos_b: usize,
    radius: usize,
) -> Option<&'static str> {
    let near = |t: usize, e: usize| t.abs_diff(e) <= radius;
    tokens.iter().enumerate().find_map(|(t, word)| {
        TRIGGERS
            .iter()
            .find(|(w, _)| w == word)
            .filter(|_| near(t, pos_a) && near(t, pos_b))
            .map(|(_, label)| *label)
    })
}

enum Segment {
    Couplet { trigger: usize, chem_first: bool },
    StrayChem,
    StrayProt,
}

pub fn make_synthetic_corpus(
    seed: u64,
    n_docs: usize,
    spec: &SynthSpec,
) -> Result<SyntheticCorpus> {
    if n_docs < MIN_DOCS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_DOCS} documents, got {n_docs}"
        )));
    }
    spec.validate()?;
    let labels = LabelSet::for_task(Task::Cpi);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        docs.push(make_document(d, spec, &mut rng)?);
    }
    for (i, doc) in docs.iter().enumerate() {
        crate::corpus::validate_document(doc, &labels, i + 1)?;
    }

    // One knowledge row for 30% of the distinct positive surface pairs; the
    // tag comes from the pair's first occurrence so lookups stay unambiguous.
    let mut pair_tag: BTreeMap<(String, String), String> = BTreeMap::new();
    for doc in &docs {
        for rel in &doc.relations {
            let chem = doc.entity(&rel.chem_id).expect("validated").surface.clone();
            let prot = doc.entity(&rel.prot_id).expect("validated").surface.clone();
            pair_tag.entry((chem, prot)).or_insert_with(|| rel.label.clone());
        }
    }
    let mut pairs: Vec<(String, String)> = pair_tag.keys().cloned().collect();
    pairs.shuffle(&mut rng);
    let n_kb = ((pairs.len() as f64 * KB_FRACTION).round() as usize).max(1);
    let mut kb_rows: Vec<(String, String, String)> = pairs
        .into_iter()
        .take(n_kb)
        .map(|pair| {
            let tag = pair_tag[&pair].clone();
            (pair.0, pair.1, tag)
        })
        .collect();
    kb_rows.sort();

    let n_train = n_docs * 7 / 10;
    let n_dev = (n_docs - n_train) / 2;
    let mut docs = docs.into_iter();
    let train: Vec<_> = docs.by_ref().take(n_train).collect();
    let dev: Vec<_> = docs.by_ref().take(n_dev).collect();
    let test: Vec<_> = docs.collect();

    Ok(SyntheticCorpus {
        train,
        dev,
        test,
        kb_rows,
    })
}

fn make_document(index: usize, spec: &SynthSpec, rng: &mut ChaCha20Rng) -> Result<AnnotatedDocument> {
    let doc_id = format!("synth{index:04}");
    let chem = spec.chem_pool.choose(rng).unwrap().clone();
    let prot = spec.prot_pool.choose(rng).unwrap().clone();

    // Mostly 2x2 grids with the odd third mention, which keeps a 200-doc
    // corpus near 800 instances.
    let n_chem = if rng.gen_bool(0.1) { 3 } else { 2 };
    let n_prot = if rng.gen_bool(0.1) { 3 } else { 2 };
    let n_couplets = rng.gen_range(1..=n_chem.min(n_prot));

    let mut segments: Vec<Segment> = Vec::new();
    for _ in 0..n_couplets {
        segments.push(Segment::Couplet {
            trigger: rng.gen_range(0..TRIGGERS.len()),
            chem_first: rng.gen_bool(0.5),
        });
    }
    segments.extend((n_couplets..n_chem).map(|_| Segment::StrayChem));
    segments.extend((n_couplets..n_prot).map(|_| Segment::StrayProt));
    segments.shuffle(rng);

    // Entity occurrences in reading order: (kind, token index, couplet).
    let mut tokens: Vec<String> = Vec::new();
    let mut placed: Vec<(EntityKind, usize, Option<usize>)> = Vec::new();
    let mut couplet_labels: Vec<&str> = Vec::new();
    let fill = |tokens: &mut Vec<String>, rng: &mut ChaCha20Rng, lo: usize, hi: usize| {
        for _ in 0..rng.gen_range(lo..=hi) {
            tokens.push(spec.fillers.choose(rng).unwrap().clone());
        }
    };
    fill(&mut tokens, rng, 1, 2);
    let mut couplet_no = 0;
    for segment in &segments {
        match segment {
            Segment::Couplet {
                trigger,
                chem_first,
            } => {
                let (word, label) = TRIGGERS[*trigger];
                let (first, second) = if *chem_first {
                    (EntityKind::Chemical, EntityKind::Protein)
                } else {
                    (EntityKind::Protein, EntityKind::Chemical)
                };
                placed.push((first, tokens.len(), Some(couplet_no)));
                tokens.push(surface_of(first, &chem, &prot));
                tokens.push(word.to_string());
                placed.push((second, tokens.len(), Some(couplet_no)));
                tokens.push(surface_of(second, &chem, &prot));
                couplet_labels.push(label);
                couplet_no += 1;
            }
            Segment::StrayChem => {
                placed.push((EntityKind::Chemical, tokens.len(), None));
                tokens.push(chem.clone());
            }
            Segment::StrayProt => {
                placed.push((EntityKind::Protein, tokens.len(), None));
                tokens.push(prot.clone());
            }
        }
        // At least three fillers between segments keep every trigger out of
        // range of the other segments' entities.
        fill(&mut tokens, rng, 3, 5);
    }

    let mut text = String::new();
    let mut char_starts = Vec::with_capacity(tokens.len());
    for token in &tokens {
        if !text.is_empty() {
            text.push(' ');
        }
        char_starts.push(text.chars().count());
        text.push_str(token);
    }
    let dep_edges: Vec<(usize, usize)> = (1..tokens.len()).map(|i| (i - 1, i)).collect();

    let mut entities = Vec::new();
    let mut couplet_members: BTreeMap<usize, BTreeMap<EntityKind, String>> = BTreeMap::new();
    for (n, (kind, token_idx, couplet)) in placed.iter().enumerate() {
        let entity_id = format!("T{}", n + 1);
        let surface = surface_of(*kind, &chem, &prot);
        let start = char_starts[*token_idx];
        entities.push(EntityMention {
            entity_id: entity_id.clone(),
            kind: *kind,
            sentence_index: 0,
            start,
            end: start + surface.chars().count(),
            surface,
        });
        if let Some(c) = couplet {
            couplet_members.entry(*c).or_default().insert(*kind, entity_id);
        }
    }
    let relations: Vec<GoldRelation> = couplet_members
        .iter()
        .map(|(c, members)| GoldRelation {
            chem_id: members[&EntityKind::Chemical].clone(),
            prot_id: members[&EntityKind::Protein].clone(),
            label: couplet_labels[*c].to_string(),
        })
        .collect();

    // The pair labels must be exactly what a +/-2 trigger scan recovers.
    let token_refs: Vec<&str> = tokens.iter().map(|s| s.as_str()).collect();
    let gold: BTreeMap<(&str, &str), &str> = relations
        .iter()
        .map(|r| ((r.chem_id.as_str(), r.prot_id.as_str()), r.label.as_str()))
        .collect();
    for (i, (kind_c, pos_c, _)) in placed.iter().enumerate() {
        if *kind_c != EntityKind::Chemical {
            continue;
        }
        for (j, (kind_p, pos_p, _)) in placed.iter().enumerate() {
            if *kind_p != EntityKind::Protein {
                continue;
            }
            let c_id = entities[i].entity_id.as_str();
            let p_id = entities[j].entity_id.as_str();
            let expected = gold.get(&(c_id, p_id)).copied();
            let recovered = trigger_oracle(&token_refs, *pos_c, *pos_p, 2);
            if expected != recovered {
                return Err(Error::validation(
                    doc_id,
                    format!(
                        "pair ({c_id}, {p_id}) labelled {expected:?} but the trigger scan finds {recovered:?}"
                    ),
                ));
            }
        }
    }

    // The title leaks the first couplet's trigger, so models that read it
    // get a label-correlated signal.
    let first_label_trigger = {
        let first = placed
            .iter()
            .find_map(|(_, _, c)| *c)
            .expect("at least one couplet");
        TRIGGERS
            .iter()
            .find(|(_, l)| *l == couplet_labels[first])
            .unwrap()
            .0
    };
    let title = format!("evidence that {chem} {first_label_trigger} {prot}");

    Ok(AnnotatedDocument {
        doc_id,
        title,
        sentences: vec![Sentence {
            text,
            dep_edges: Some(dep_edges),
        }],
        entities,
        relations,
    })
}

fn surface_of(kind: EntityKind, chem: &str, prot: &str) -> String {
    match kind {
        EntityKind::Chemical => chem.to_string(),
        EntityKind::Protein => prot.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_instances, parse_corpus, CorpusFormat, InstanceKind};

    #[test]
    fn too_few_documents_is_rejected() {
        assert!(make_synthetic_corpus(1, 49, &SynthSpec::default()).is_err());
        assert!(make_synthetic_corpus(1, 50, &SynthSpec::default()).is_ok());
    }

    #[test]
    fn same_seed_gives_byte_identical_files() {
        let spec = SynthSpec::default();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        make_synthetic_corpus(9, 60, &spec).unwrap().write(a.path()).unwrap();
        make_synthetic_corpus(9, 60, &spec).unwrap().write(b.path()).unwrap();
        for name in ["train.jsonl", "dev.jsonl", "test.jsonl", "kb.tsv"] {
            let left = std::fs::read(a.path().join(name)).unwrap();
            let right = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(left, right, "{name} differs across runs");
        }
        let other = tempfile::tempdir().unwrap();
        make_synthetic_corpus(10, 60, &spec).unwrap().write(other.path()).unwrap();
        assert_ne!(
            std::fs::read(a.path().join("train.jsonl")).unwrap(),
            std::fs::read(other.path().join("train.jsonl")).unwrap(),
            "different seeds should differ"
        );
    }

    #[test]
    fn every_sentence_yields_at_least_four_overlapping_instances() {
        let corpus = make_synthetic_corpus(3, 50, &SynthSpec::default()).unwrap();
        for doc in corpus.train.iter().chain(&corpus.dev).chain(&corpus.test) {
            let instances = generate_instances(doc).unwrap();
            assert!(instances.len() >= 4, "{} has {}", doc.doc_id, instances.len());
            assert!(instances.iter().all(|i| i.kind == InstanceKind::Overlapping));
        }
    }

    #[test]
    fn trigger_scan_recovers_every_gold_label() {
        // Generation already asserts this; recompute from the emitted
        // documents to pin the public data, not the builder's internals.
        let corpus = make_synthetic_corpus(17, 80, &SynthSpec::default()).unwrap();
        let mut positives = 0;
        for doc in corpus.train.iter().chain(&corpus.dev).chain(&corpus.test) {
            let text = &doc.sentences[0].text;
            let tokens: Vec<&str> = text.split_whitespace().collect();
            let token_at = |char_start: usize| {
                text.chars().take(char_start).filter(|c| *c == ' ').count()
            };
            for c in doc.entities.iter().filter(|e| e.kind == EntityKind::Chemical) {
                for p in doc.entities.iter().filter(|e| e.kind == EntityKind::Protein) {
                    let want = doc
                        .relations
                        .iter()
                        .find(|r| r.chem_id == c.entity_id && r.prot_id == p.entity_id)
                        .map(|r| r.label.as_str());
                    let got = trigger_oracle(&tokens, token_at(c.start), token_at(p.start), 2);
                    assert_eq!(want, got, "{} ({}, {})", doc.doc_id, c.entity_id, p.entity_id);
                    positives += usize::from(want.is_some());
                }
            }
        }
        assert!(positives > 0);
    }

    #[test]
    fn kb_covers_a_third_of_distinct_positive_pairs() {
        let corpus = make_synthetic_corpus(5, 100, &SynthSpec::default()).unwrap();
        let mut distinct = BTreeSet::new();
        for doc in corpus.train.iter().chain(&corpus.dev).chain(&corpus.test) {
            for rel in &doc.relations {
                distinct.insert((
                    doc.entity(&rel.chem_id).unwrap().surface.clone(),
                    doc.entity(&rel.prot_id).unwrap().surface.clone(),
                ));
            }
        }
        let expected = ((distinct.len() as f64 * 0.3).round() as usize).max(1);
        assert_eq!(corpus.kb_rows.len(), expected);
        for (c, p, tag) in &corpus.kb_rows {
            assert!(distinct.contains(&(c.clone(), p.clone())));
            assert!(TRIGGERS.iter().any(|(_, l)| l == tag));
        }
        let mut pairs: Vec<_> = corpus.kb_rows.iter().map(|(c, p, _)| (c, p)).collect();
        pairs.dedup();
        assert_eq!(pairs.len(), corpus.kb_rows.len(), "one tag per pair");
    }

    #[test]
    fn titles_carry_a_trigger_word() {
        let corpus = make_synthetic_corpus(2, 50, &SynthSpec::default()).unwrap();
        for doc in corpus.train.iter().chain(&corpus.dev).chain(&corpus.test) {
            assert!(
                TRIGGERS.iter().any(|(w, _)| doc.title.contains(w)),
                "{}: {:?}",
                doc.doc_id,
                doc.title
            );
        }
    }

    #[test]
    fn splits_partition_the_documents() {
        let corpus = make_synthetic_corpus(4, 90, &SynthSpec::default()).unwrap();
        assert_eq!(corpus.train.len(), 63);
        assert_eq!(corpus.dev.len(), 13);
        assert_eq!(corpus.test.len(), 14);
        let mut ids = BTreeSet::new();
        for doc in corpus.train.iter().chain(&corpus.dev).chain(&corpus.test) {
            assert!(ids.insert(doc.doc_id.clone()), "duplicate {}", doc.doc_id);
        }
        assert_eq!(ids.len(), 90);
    }

    #[test]
    fn written_files_parse_back_as_a_corpus() {
        let corpus = make_synthetic_corpus(6, 50, &SynthSpec::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = corpus.write(dir.path()).unwrap();
        let format = CorpusFormat::default();
        assert_eq!(parse_corpus(&paths.train, &format).unwrap(), corpus.train);
        assert_eq!(parse_corpus(&paths.dev, &format).unwrap(), corpus.dev);
        assert_eq!(parse_corpus(&paths.test, &format).unwrap(), corpus.test);
        let kb = crate::kb::load_kb(&paths.kb).unwrap();
        assert_eq!(kb.len(), corpus.kb_rows.len());
    }

    #[test]
    fn overlapping_pools_are_rejected() {
        let mut spec = SynthSpec::default();
        spec.fillers.push("aspirin".into());
        assert!(make_synthetic_corpus(1, 50, &spec).is_err());
        let mut spec = SynthSpec::default();
        spec.fillers.push("inhibits".into());
        assert!(make_synthetic_corpus(1, 50, &spec).is_err());
    }
}
