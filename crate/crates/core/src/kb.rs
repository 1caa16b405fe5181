//! File-backed knowledge base of (chemical, protein) → relation-tag facts,
//! plus the shortest-dependency-path extraction that together build the
//! knowledge sequence for an instance.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::vocab::{Token, RESERVED_TAGS};
use crate::corpus::{AnnotatedDocument, Instance};
use crate::error::{Error, Result};

/// Tag types kept by lookups; everything else is dropped as low-precision.
const LOOKUP_TAGS: [&str; 3] = ["CPR:4", "CPR:5", "CPR:6"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    facts: BTreeMap<(String, String), BTreeSet<String>>,
}

impl KnowledgeBase {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn tags(&self, chemical: &str, protein: &str) -> Option<&BTreeSet<String>> {
        self.facts
            .get(&(normalize(chemical), normalize(protein)))
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Load a TSV of chemical⟨TAB⟩protein⟨TAB⟩tag rows. Keys are lowercased and
/// whitespace-normalized; duplicate rows collapse. All seven relation tags
/// are accepted here — filtering happens at lookup time.
pub fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut facts: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::malformed(
                line_no,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let chemical = normalize(cols[0]);
        let protein = normalize(cols[1]);
        if chemical.is_empty() || protein.is_empty() {
            return Err(Error::malformed(line_no, "empty chemical or protein column"));
        }
        let raw_tag = cols[2].trim().to_uppercase();
        let Some(tag) = RESERVED_TAGS.iter().find(|t| **t == raw_tag) else {
            return Err(Error::malformed(
                line_no,
                format!("unknown tag {:?}, expected one of {:?}", cols[2].trim(), RESERVED_TAGS),
            ));
        };
        facts
            .entry((chemical, protein))
            .or_default()
            .insert(tag.to_string());
    }
    Ok(KnowledgeBase { facts })
}

/// Tags for a pair, restricted to the lookup types. More than one distinct
/// surviving tag makes the pair ambiguous and yields nothing, so the result
/// is always empty or a single tag.
pub fn lookup_cpr_tags(chemical: &str, protein: &str, kb: &KnowledgeBase) -> Vec<String> {
    let Some(tags) = kb.tags(chemical, protein) else {
        return Vec::new();
    };
    let surviving: Vec<&String> = tags
        .iter()
        .filter(|t| LOOKUP_TAGS.contains(&t.as_str()))
        .collect();
    match surviving.as_slice() {
        [one] => vec![(*one).clone()],
        _ => Vec::new(),
    }
}

/// Shortest path between two token indices over undirected edges, endpoints
/// included. Among equal-length paths the lexicographically smallest index
/// sequence wins. Disconnected endpoints give an empty path.
pub fn shortest_dependency_path(
    dep_edges: &[(usize, usize)],
    start: usize,
    end: usize,
) -> Vec<usize> {
    if start == end {
        return vec![start];
    }
    let n = dep_edges
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .chain([start, end])
        .max()
        .unwrap_or(0)
        + 1;
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in dep_edges {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }

    let dist_to_end = bfs_distances(&adj, end);
    let Some(total) = dist_to_end[start] else {
        return Vec::new();
    };

    // Walk from the start, always taking the smallest neighbor that still
    // lies on some shortest path; the earliest position dominates the
    // lexicographic order, so the greedy choice is optimal.
    let mut path = Vec::with_capacity(total + 1);
    let mut current = start;
    path.push(current);
    for remaining in (0..total).rev() {
        let next = adj[current]
            .iter()
            .copied()
            .find(|&v| dist_to_end[v] == Some(remaining))
            .expect("BFS distance guarantees a next hop");
        path.push(next);
        current = next;
    }
    path
}

fn bfs_distances(adj: &[BTreeSet<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Knowledge sequence for one instance: retrieved tags, then the tokens on
/// the shortest dependency path between the two mask tokens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSequence {
    pub tags: Vec<String>,
    pub sdp_tokens: Vec<Token>,
}

impl KnowledgeSequence {
    pub fn is_empty(&self) -> bool {
        self.tags.is_empty() && self.sdp_tokens.is_empty()
    }

    /// Flat token view: tags first, path tokens after.
    pub fn tokens(&self) -> Vec<Token> {
        self.tags
            .iter()
            .map(Token::word)
            .chain(
                self.sdp_tokens
                    .iter()
                    .map(|t| Token::word(t.surface.clone())),
            )
            .collect()
    }
}

/// Assemble an instance's knowledge sequence. Tags are looked up under the
/// pair's document surface forms; path endpoints are the mask tokens.
pub fn build_knowledge_sequence(
    instance: &Instance,
    doc: &AnnotatedDocument,
    kb: &KnowledgeBase,
) -> Result<KnowledgeSequence> {
    let surface = |id: &str| -> Result<&str> {
        doc.entity(id)
            .map(|e| e.surface.as_str())
            .ok_or_else(|| {
                Error::validation(
                    instance.instance_id.clone(),
                    format!("entity {id} not found in document {}", doc.doc_id),
                )
            })
    };
    let tags = lookup_cpr_tags(surface(&instance.chem_id)?, surface(&instance.prot_id)?, kb);

    let sdp_tokens = if instance.dep_edges.is_empty() {
        Vec::new()
    } else {
        shortest_dependency_path(
            &instance.dep_edges,
            instance.target1_span.0,
            instance.target2_span.0,
        )
        .into_iter()
        .map(|i| instance.tokens[i].clone())
        .collect()
    };

    Ok(KnowledgeSequence { tags, sdp_tokens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::{CHEM_MASK, GENE_MASK};
    use crate::corpus::{generate_instances, EntityKind, EntityMention, GoldRelation, Sentence};
    use std::io::Write;

    fn write_kb(rows: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.tsv");
        let mut f = std::fs::File::create(&path).unwrap();
        for row in rows {
            writeln!(f, "{row}").unwrap();
        }
        (dir, path)
    }

    #[test]
    fn empty_file_is_empty_kb() {
        let (_d, p) = write_kb(&[]);
        let kb = load_kb(&p).unwrap();
        assert!(kb.is_empty());
        assert!(lookup_cpr_tags("aspirin", "PTGS2", &kb).is_empty());
    }

    #[test]
    fn duplicate_rows_collapse() {
        let (_d, p) = write_kb(&["aspirin\tPTGS2\tCPR:4", "aspirin\tPTGS2\tCPR:4"]);
        let kb = load_kb(&p).unwrap();
        assert_eq!(kb.len(), 1);
        assert_eq!(lookup_cpr_tags("aspirin", "PTGS2", &kb), vec!["CPR:4"]);
    }

    #[test]
    fn keys_normalize_case_and_whitespace() {
        let (_d, p) = write_kb(&["  Acetyl   Salicylic Acid \tPtgs2\tcpr:5"]);
        let kb = load_kb(&p).unwrap();
        assert_eq!(
            lookup_cpr_tags("acetyl salicylic  ACID", " PTGS2 ", &kb),
            vec!["CPR:5"]
        );
    }

    #[test]
    fn wrong_column_count_names_the_line() {
        let (_d, p) = write_kb(&["aspirin\tPTGS2\tCPR:4", "aspirin\tPTGS2"]);
        let err = load_kb(&p).unwrap_err();
        assert!(err.to_string().contains("record 2"), "{err}");
    }

    #[test]
    fn unknown_tag_is_rejected() {
        let (_d, p) = write_kb(&["aspirin\tPTGS2\tCPR:11"]);
        let err = load_kb(&p).unwrap_err();
        assert!(err.to_string().contains("CPR:11"), "{err}");
    }

    #[test]
    fn lookup_filters_tag_types() {
        let (_d, p) = write_kb(&["a\tp\tCPR:3", "a\tp\tCPR:9"]);
        let kb = load_kb(&p).unwrap();
        // Both tags exist but neither is a lookup type.
        assert_eq!(kb.tags("a", "p").unwrap().len(), 2);
        assert!(lookup_cpr_tags("a", "p", &kb).is_empty());
    }

    #[test]
    fn one_survivor_after_filtering_is_kept() {
        let (_d, p) = write_kb(&["a\tp\tCPR:3", "a\tp\tCPR:5"]);
        let kb = load_kb(&p).unwrap();
        assert_eq!(lookup_cpr_tags("a", "p", &kb), vec!["CPR:5"]);
    }

    #[test]
    fn two_survivors_are_ambiguous() {
        let (_d, p) = write_kb(&["a\tp\tCPR:4", "a\tp\tCPR:6"]);
        let kb = load_kb(&p).unwrap();
        assert!(lookup_cpr_tags("a", "p", &kb).is_empty());
    }

    #[test]
    fn sdp_trivial_cases() {
        assert_eq!(shortest_dependency_path(&[(0, 1), (1, 2)], 0, 2), vec![0, 1, 2]);
        assert_eq!(shortest_dependency_path(&[(0, 1)], 1, 1), vec![1]);
        assert!(shortest_dependency_path(&[(0, 1), (2, 3)], 0, 3).is_empty());
        assert!(shortest_dependency_path(&[], 0, 5).is_empty());
    }

    #[test]
    fn sdp_prefers_lexicographically_smaller_path() {
        // Two 3-hop routes 0->5: via (1,3) and via (2,4); [0,1,3,5] wins.
        let edges = [(0, 1), (1, 3), (3, 5), (0, 2), (2, 4), (4, 5)];
        assert_eq!(shortest_dependency_path(&edges, 0, 5), vec![0, 1, 3, 5]);
        // A shorter route beats a lexicographically smaller long one.
        let edges2 = [(0, 1), (1, 2), (2, 5), (0, 4), (4, 5)];
        assert_eq!(shortest_dependency_path(&edges2, 0, 5), vec![0, 4, 5]);
    }

    fn brute_force_sdp(edges: &[(usize, usize)], start: usize, end: usize) -> Vec<usize> {
        let n = edges
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .chain([start, end])
            .max()
            .unwrap_or(0)
            + 1;
        let mut adj = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        let mut best: Option<Vec<usize>> = None;
        let mut stack = vec![start];
        let mut visited = vec![false; n];
        visited[start] = true;
        fn dfs(
            adj: &[BTreeSet<usize>],
            end: usize,
            stack: &mut Vec<usize>,
            visited: &mut [bool],
            best: &mut Option<Vec<usize>>,
        ) {
            let u = *stack.last().unwrap();
            if u == end {
                let better = match best {
                    None => true,
                    Some(b) => stack.len() < b.len() || (stack.len() == b.len() && *stack < *b),
                };
                if better {
                    *best = Some(stack.clone());
                }
                return;
            }
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    stack.push(v);
                    dfs(adj, end, stack, visited, best);
                    stack.pop();
                    visited[v] = false;
                }
            }
        }
        dfs(&adj, end, &mut stack, &mut visited, &mut best);
        best.unwrap_or_default()
    }

    #[test]
    fn sdp_matches_exhaustive_enumeration_on_random_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(2..=8);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if rng.gen_bool(0.35) {
                        edges.push((a, b));
                    }
                }
            }
            let start = rng.gen_range(0..n);
            let end = rng.gen_range(0..n);
            let got = shortest_dependency_path(&edges, start, end);
            let want = brute_force_sdp(&edges, start, end);
            assert_eq!(got, want, "edges {edges:?} start {start} end {end}");
        }
    }

    fn parsed_doc() -> crate::corpus::AnnotatedDocument {
        crate::corpus::AnnotatedDocument {
            doc_id: "d".into(),
            title: "t".into(),
            sentences: vec![Sentence {
                text: "aspirin strongly inhibits PTGS2".into(),
                // Words: aspirin(0) strongly(1) inhibits(2) PTGS2(3)
                dep_edges: Some(vec![(0, 2), (1, 2), (2, 3)]),
            }],
            entities: vec![
                EntityMention {
                    entity_id: "T1".into(),
                    kind: EntityKind::Chemical,
                    sentence_index: 0,
                    start: 0,
                    end: 7,
                    surface: "aspirin".into(),
                },
                EntityMention {
                    entity_id: "T2".into(),
                    kind: EntityKind::Protein,
                    sentence_index: 0,
                    start: 26,
                    end: 31,
                    surface: "PTGS2".into(),
                },
            ],
            relations: vec![GoldRelation {
                chem_id: "T1".into(),
                prot_id: "T2".into(),
                label: "CPR:4".into(),
            }],
        }
    }

    #[test]
    fn knowledge_sequence_composes_tags_and_path() {
        let doc = parsed_doc();
        let ins = generate_instances(&doc).unwrap().remove(0);
        let (_d, p) = write_kb(&["Aspirin\tptgs2\tCPR:4"]);
        let kb = load_kb(&p).unwrap();
        let k = build_knowledge_sequence(&ins, &doc, &kb).unwrap();
        assert_eq!(k.tags, vec!["CPR:4"]);
        let surfaces: Vec<&str> = k.sdp_tokens.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(surfaces, vec![CHEM_MASK, "inhibits", GENE_MASK]);
        let flat: Vec<String> = k.tokens().into_iter().map(|t| t.surface).collect();
        assert_eq!(flat, vec!["CPR:4", CHEM_MASK, "inhibits", GENE_MASK]);
    }

    #[test]
    fn ambiguous_pair_still_yields_path_tokens() {
        let doc = parsed_doc();
        let ins = generate_instances(&doc).unwrap().remove(0);
        let (_d, p) = write_kb(&["aspirin\tptgs2\tCPR:4", "aspirin\tptgs2\tCPR:5"]);
        let kb = load_kb(&p).unwrap();
        let k = build_knowledge_sequence(&ins, &doc, &kb).unwrap();
        assert!(k.tags.is_empty());
        assert_eq!(k.sdp_tokens.len(), 3);
        assert!(!k.is_empty());
    }

    #[test]
    fn no_kb_entry_and_no_parse_gives_empty_sequence() {
        let mut doc = parsed_doc();
        doc.sentences[0].dep_edges = None;
        let ins = generate_instances(&doc).unwrap().remove(0);
        let kb = KnowledgeBase::default();
        let k = build_knowledge_sequence(&ins, &doc, &kb).unwrap();
        assert!(k.is_empty());
        assert!(k.tokens().is_empty());
    }

    #[test]
    fn knowledge_sequence_is_deterministic() {
        let doc = parsed_doc();
        let ins = generate_instances(&doc).unwrap().remove(0);
        let (_d, p) = write_kb(&["aspirin\tptgs2\tCPR:6"]);
        let kb = load_kb(&p).unwrap();
        let a = build_knowledge_sequence(&ins, &doc, &kb).unwrap();
        let b = build_knowledge_sequence(&ins, &doc, &kb).unwrap();
        assert_eq!(a, b);
    }
}
