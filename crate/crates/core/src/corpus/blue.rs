//! Converter for the benchmark's tab-separated instance format:
//! `index⟨TAB⟩sentence⟨TAB⟩label`, one pre-masked candidate pair per row,
//! optional header. Rows become [`Instance`]s directly, which is enough for
//! the stats and eval workflows; the raw unmasked sentences are not
//! recoverable from this format.
//!
//! The format does not say which rows share a sentence, so instance kind is
//! reconstructed. Chemical–protein indices look like `docid.T1.T52`; two
//! rows of one document that share an entity id must come from the same
//! sentence, and because every co-sentential pair gets a row, the connected
//! components of that sharing relation are exactly the sentences. Drug–drug
//! indices look like `Corpus.d519.s0.p0` and name their sentence outright.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use crate::corpus::vocab::{split_on_specials, Token, CHEM_MASK, GENE_MASK};
use crate::corpus::{Instance, InstanceKind, Task};
use crate::error::{Error, Result};

const DRUG_MASK: &str = "@DRUG$";

struct Row {
    line_no: usize,
    index: String,
    sentence: String,
    label: &'static str,
}

/// Parse one benchmark TSV file into instances. `task` selects the index
/// layout, the label aliases, and the mask conventions.
pub fn parse_blue_tsv(path: &Path, task: Task) -> Result<Vec<Instance>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);

    let mut rows = Vec::new();
    let mut seen_index: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if line_no == 1 && is_header(&cols) {
            continue;
        }
        if cols.len() != 3 {
            return Err(Error::malformed(
                line_no,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let index = cols[0].trim().to_string();
        if index.is_empty() {
            return Err(Error::malformed(line_no, "empty index column"));
        }
        if let Some(first) = seen_index.insert(index.clone(), line_no) {
            return Err(Error::malformed(
                line_no,
                format!("index {index} already appeared on line {first}"),
            ));
        }
        let label = canonical_label(cols[2].trim(), task).ok_or_else(|| {
            Error::malformed(
                line_no,
                format!("unknown {:?} label {:?}", task, cols[2].trim()),
            )
        })?;
        rows.push(Row {
            line_no,
            index,
            sentence: cols[1].to_string(),
            label,
        });
    }

    match task {
        Task::Cpi => build_pair_indexed(rows),
        Task::Ddi => build_sentence_indexed(rows),
    }
}

fn is_header(cols: &[&str]) -> bool {
    cols.len() == 3
        && cols[0].trim().eq_ignore_ascii_case("index")
        && cols[1].trim().eq_ignore_ascii_case("sentence")
        && cols[2].trim().eq_ignore_ascii_case("label")
}

fn canonical_label(raw: &str, task: Task) -> Option<&'static str> {
    let lower = raw.to_ascii_lowercase();
    match task {
        Task::Cpi => match lower.as_str() {
            "cpr:3" => Some("CPR:3"),
            "cpr:4" => Some("CPR:4"),
            "cpr:5" => Some("CPR:5"),
            "cpr:6" => Some("CPR:6"),
            "cpr:9" => Some("CPR:9"),
            "false" => Some("False"),
            _ => None,
        },
        Task::Ddi => match lower.strip_prefix("ddi-").unwrap_or(&lower) {
            "advice" | "advise" => Some("Advice"),
            "effect" => Some("Effect"),
            "mechanism" => Some("Mechanism"),
            "int" => Some("Int"),
            "false" => Some("False"),
            _ => None,
        },
    }
}

/// Chemical–protein rows: `docid.ARG1.ARG2`. Sentences are the connected
/// components of rows sharing an entity id within a document.
fn build_pair_indexed(rows: Vec<Row>) -> Result<Vec<Instance>> {
    struct Parsed {
        doc_id: String,
        arg1: String,
        arg2: String,
    }
    let mut parsed = Vec::with_capacity(rows.len());
    let mut dsu = Dsu::default();
    let mut nodes: HashMap<(String, String), usize> = HashMap::new();
    for row in &rows {
        let parts: Vec<&str> = row.index.split('.').collect();
        if parts.len() < 3 || parts.iter().any(|p| p.is_empty()) {
            return Err(Error::malformed(
                row.line_no,
                format!("index {:?} is not docid.arg1.arg2", row.index),
            ));
        }
        let arg2 = parts[parts.len() - 1].to_string();
        let arg1 = parts[parts.len() - 2].to_string();
        let doc_id = parts[..parts.len() - 2].join(".");
        let a = node(&mut dsu, &mut nodes, &doc_id, &arg1);
        let b = node(&mut dsu, &mut nodes, &doc_id, &arg2);
        dsu.union(a, b);
        parsed.push(Parsed { doc_id, arg1, arg2 });
    }

    let roots: Vec<usize> = parsed
        .iter()
        .map(|p| {
            let n = nodes[&(p.doc_id.clone(), p.arg1.clone())];
            dsu.find(n)
        })
        .collect();
    let mut group_size: HashMap<usize, usize> = HashMap::new();
    for &r in &roots {
        *group_size.entry(r).or_insert(0) += 1;
    }
    let mut sentence_of_root: HashMap<usize, usize> = HashMap::new();
    let mut next_sentence: HashMap<&str, usize> = HashMap::new();

    let mut instances = Vec::with_capacity(rows.len());
    for ((row, p), root) in rows.iter().zip(&parsed).zip(&roots) {
        let sentence_index = *sentence_of_root.entry(*root).or_insert_with(|| {
            let next = next_sentence.entry(p.doc_id.as_str()).or_insert(0);
            let s = *next;
            *next += 1;
            s
        });
        let (tokens, t1, t2) = masked_tokens(&row.sentence, row.line_no)?;
        instances.push(Instance {
            instance_id: row.index.clone(),
            doc_id: p.doc_id.clone(),
            sentence_index,
            tokens,
            target1_span: (t1, t1),
            target2_span: (t2, t2),
            chem_id: p.arg1.clone(),
            prot_id: p.arg2.clone(),
            label: row.label.to_string(),
            kind: kind_of(group_size[root]),
            dep_edges: Vec::new(),
        });
    }
    Ok(instances)
}

/// Drug–drug rows: `corpus.dN.sN.pN`; everything before the trailing pair
/// component names the sentence. Both targets arrive as `@DRUG$`; they are
/// remapped onto the pipeline's two mask strings in reading order.
fn build_sentence_indexed(rows: Vec<Row>) -> Result<Vec<Instance>> {
    struct Parsed {
        doc_id: String,
        sentence_key: String,
        sentence_no: usize,
        pair: String,
    }
    let mut parsed = Vec::with_capacity(rows.len());
    for row in &rows {
        let (sentence_key, pair) = split_trailing(&row.index, ".p").ok_or_else(|| {
            Error::malformed(
                row.line_no,
                format!("index {:?} lacks a .p<N> pair suffix", row.index),
            )
        })?;
        let (doc_id, sentence_no) = match split_trailing(sentence_key, ".s") {
            Some((doc, n)) => (doc.to_string(), n),
            None => (sentence_key.to_string(), 0),
        };
        parsed.push(Parsed {
            doc_id,
            sentence_key: sentence_key.to_string(),
            sentence_no,
            pair: format!("p{pair}"),
        });
    }

    let mut group_size: HashMap<&str, usize> = HashMap::new();
    for p in &parsed {
        *group_size.entry(p.sentence_key.as_str()).or_insert(0) += 1;
    }

    let mut instances = Vec::with_capacity(rows.len());
    for (row, p) in rows.iter().zip(&parsed) {
        let remapped = remap_drug_masks(&row.sentence, row.line_no)?;
        let (tokens, t1, t2) = masked_tokens(&remapped, row.line_no)?;
        instances.push(Instance {
            instance_id: row.index.clone(),
            doc_id: p.doc_id.clone(),
            sentence_index: p.sentence_no,
            tokens,
            target1_span: (t1, t1),
            target2_span: (t2, t2),
            chem_id: format!("{}.a1", p.pair),
            prot_id: format!("{}.a2", p.pair),
            label: row.label.to_string(),
            kind: kind_of(group_size[p.sentence_key.as_str()]),
            dep_edges: Vec::new(),
        });
    }
    Ok(instances)
}

fn kind_of(group_size: usize) -> InstanceKind {
    if group_size == 1 {
        InstanceKind::Normal
    } else {
        InstanceKind::Overlapping
    }
}

/// Split `index` at a trailing `<sep><digits>` component, returning the
/// prefix and the number.
fn split_trailing<'a>(index: &'a str, sep: &str) -> Option<(&'a str, usize)> {
    let pos = index.rfind(sep)?;
    let digits = &index[pos + sep.len()..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((&index[..pos], digits.parse().ok()?))
}

fn node(
    dsu: &mut Dsu,
    nodes: &mut HashMap<(String, String), usize>,
    doc: &str,
    entity: &str,
) -> usize {
    *nodes
        .entry((doc.to_string(), entity.to_string()))
        .or_insert_with(|| dsu.push())
}

fn remap_drug_masks(sentence: &str, line_no: usize) -> Result<String> {
    let count = sentence.matches(DRUG_MASK).count();
    if count != 2 {
        return Err(Error::malformed(
            line_no,
            format!("expected exactly 2 {DRUG_MASK} masks, found {count}"),
        ));
    }
    let out = sentence.replacen(DRUG_MASK, CHEM_MASK, 1);
    Ok(out.replacen(DRUG_MASK, GENE_MASK, 1))
}

/// Word-split the masked sentence, keeping embedded mask strings as their
/// own tokens, and locate the two targets.
fn masked_tokens(sentence: &str, line_no: usize) -> Result<(Vec<Token>, usize, usize)> {
    let mut tokens = Vec::new();
    for word in sentence.split_whitespace() {
        let mut first = true;
        for (piece, _) in split_on_specials(word) {
            tokens.push(Token {
                surface: piece.to_string(),
                continuation: !first,
            });
            first = false;
        }
    }
    let positions = |mask: &str| -> Vec<usize> {
        tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.surface == mask)
            .map(|(i, _)| i)
            .collect()
    };
    let chems = positions(CHEM_MASK);
    let genes = positions(GENE_MASK);
    if chems.len() != 1 || genes.len() != 1 {
        return Err(Error::malformed(
            line_no,
            format!(
                "expected exactly one {CHEM_MASK} and one {GENE_MASK}, found {} and {}",
                chems.len(),
                genes.len()
            ),
        ));
    }
    Ok((tokens, chems[0], genes[0]))
}

#[derive(Default)]
struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn push(&mut self) -> usize {
        let id = self.parent.len();
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tsv(rows: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.tsv");
        let mut f = std::fs::File::create(&path).unwrap();
        for row in rows {
            writeln!(f, "{row}").unwrap();
        }
        (dir, path)
    }

    #[test]
    fn empty_and_header_only_files_are_empty() {
        let (_d, p) = write_tsv(&[]);
        assert!(parse_blue_tsv(&p, Task::Cpi).unwrap().is_empty());
        let (_d2, p2) = write_tsv(&["index\tsentence\tlabel"]);
        assert!(parse_blue_tsv(&p2, Task::Cpi).unwrap().is_empty());
    }

    #[test]
    fn single_row_is_normal() {
        let (_d, p) = write_tsv(&[
            "10.T1.T2\t@CHEMICAL$ inhibits @GENE$ strongly\tCPR:4",
        ]);
        let ins = parse_blue_tsv(&p, Task::Cpi).unwrap();
        assert_eq!(ins.len(), 1);
        let i = &ins[0];
        assert_eq!(i.doc_id, "10");
        assert_eq!(i.kind, InstanceKind::Normal);
        assert_eq!(i.label, "CPR:4");
        assert_eq!(i.target1_span, (0, 0));
        assert_eq!(i.target2_span, (2, 2));
        assert_eq!(i.tokens.len(), 4);
    }

    #[test]
    fn shared_entities_mark_overlapping() {
        // T1 pairs with both genes; the chain T1-T5, T1-T6, T2-T6 is one
        // sentence even though (T2, T5) never appears.
        let (_d, p) = write_tsv(&[
            "9.T1.T5\t@CHEMICAL$ binds @GENE$ g6 c2\tCPR:3",
            "9.T1.T6\t@CHEMICAL$ binds g5 @GENE$ c2\tfalse",
            "9.T2.T6\tc1 binds g5 @GENE$ @CHEMICAL$\tfalse",
            "9.T3.T7\t@CHEMICAL$ blocks @GENE$\tCPR:6",
        ]);
        let ins = parse_blue_tsv(&p, Task::Cpi).unwrap();
        assert_eq!(ins.len(), 4);
        assert!(ins[..3].iter().all(|i| i.kind == InstanceKind::Overlapping));
        assert_eq!(ins[3].kind, InstanceKind::Normal);
        assert!(ins[..3].iter().all(|i| i.sentence_index == 0));
        assert_eq!(ins[3].sentence_index, 1);
    }

    #[test]
    fn labels_are_case_insensitive() {
        let (_d, p) = write_tsv(&[
            "1.T1.T2\t@CHEMICAL$ x @GENE$\tcpr:9",
            "1.T3.T4\t@CHEMICAL$ y @GENE$\tFALSE",
        ]);
        let ins = parse_blue_tsv(&p, Task::Cpi).unwrap();
        assert_eq!(ins[0].label, "CPR:9");
        assert_eq!(ins[1].label, "False");
    }

    #[test]
    fn unknown_label_names_the_line() {
        let (_d, p) = write_tsv(&[
            "index\tsentence\tlabel",
            "1.T1.T2\t@CHEMICAL$ x @GENE$\tCPR:4",
            "1.T3.T4\t@CHEMICAL$ y @GENE$\tCPR:7",
        ]);
        let err = parse_blue_tsv(&p, Task::Cpi).unwrap_err();
        assert!(err.to_string().contains("record 3"), "{err}");
    }

    #[test]
    fn wrong_column_count_names_the_line() {
        let (_d, p) = write_tsv(&["1.T1.T2\tonly two columns"]);
        let err = parse_blue_tsv(&p, Task::Cpi).unwrap_err();
        assert!(err.to_string().contains("record 1"), "{err}");
    }

    #[test]
    fn duplicate_index_is_rejected() {
        let (_d, p) = write_tsv(&[
            "1.T1.T2\t@CHEMICAL$ x @GENE$\tCPR:4",
            "1.T1.T2\t@CHEMICAL$ x @GENE$\tCPR:4",
        ]);
        let err = parse_blue_tsv(&p, Task::Cpi).unwrap_err();
        assert!(err.to_string().contains("already appeared"), "{err}");
    }

    #[test]
    fn glued_masks_become_their_own_tokens() {
        let (_d, p) = write_tsv(&[
            "1.T1.T2\t@CHEMICAL$-induced damage to @GENE$.\tCPR:4",
        ]);
        let ins = parse_blue_tsv(&p, Task::Cpi).unwrap();
        let toks = &ins[0].tokens;
        assert_eq!(toks[0].surface, CHEM_MASK);
        assert_eq!(toks[1].surface, "-induced");
        assert!(toks[1].continuation);
        assert_eq!(ins[0].target1_span, (0, 0));
        assert_eq!(toks[4].surface, GENE_MASK);
        assert_eq!(toks[5].surface, ".");
        assert_eq!(ins[0].target2_span, (4, 4));
    }

    #[test]
    fn missing_mask_is_rejected() {
        let (_d, p) = write_tsv(&["1.T1.T2\tno masks here\tCPR:4"]);
        assert!(parse_blue_tsv(&p, Task::Cpi).is_err());
        let (_d2, p2) = write_tsv(&["1.T1.T2\t@CHEMICAL$ twice @CHEMICAL$ @GENE$\tCPR:4"]);
        assert!(parse_blue_tsv(&p2, Task::Cpi).is_err());
    }

    #[test]
    fn malformed_pair_index_is_rejected() {
        let (_d, p) = write_tsv(&["nodots\t@CHEMICAL$ x @GENE$\tCPR:4"]);
        assert!(parse_blue_tsv(&p, Task::Cpi).is_err());
    }

    #[test]
    fn drug_rows_group_by_sentence_component() {
        let (_d, p) = write_tsv(&[
            "Corpus.d5.s0.p0\t@DRUG$ with @DRUG$ and aspirin\tDDI-effect",
            "Corpus.d5.s0.p1\t@DRUG$ with heparin and @DRUG$\tDDI-false",
            "Corpus.d5.s1.p0\t@DRUG$ alone beats @DRUG$\tDDI-advise",
        ]);
        let ins = parse_blue_tsv(&p, Task::Ddi).unwrap();
        assert_eq!(ins.len(), 3);
        assert_eq!(ins[0].kind, InstanceKind::Overlapping);
        assert_eq!(ins[1].kind, InstanceKind::Overlapping);
        assert_eq!(ins[2].kind, InstanceKind::Normal);
        assert_eq!(ins[0].doc_id, "Corpus.d5");
        assert_eq!(ins[0].sentence_index, 0);
        assert_eq!(ins[2].sentence_index, 1);
        assert_eq!(ins[0].label, "Effect");
        assert_eq!(ins[1].label, "False");
        assert_eq!(ins[2].label, "Advice");
    }

    #[test]
    fn drug_masks_map_to_pipeline_masks_in_order() {
        let (_d, p) = write_tsv(&[
            "C.d1.s0.p0\tgive @DRUG$ before @DRUG$ daily\tint",
        ]);
        let ins = parse_blue_tsv(&p, Task::Ddi).unwrap();
        let i = &ins[0];
        assert_eq!(i.tokens[1].surface, CHEM_MASK);
        assert_eq!(i.tokens[3].surface, GENE_MASK);
        assert_eq!(i.target1_span, (1, 1));
        assert_eq!(i.target2_span, (3, 3));
        assert_eq!(i.label, "Int");
    }

    #[test]
    fn drug_rows_need_exactly_two_masks() {
        let (_d, p) = write_tsv(&["C.d1.s0.p0\t@DRUG$ alone\tint"]);
        assert!(parse_blue_tsv(&p, Task::Ddi).is_err());
        let (_d2, p2) = write_tsv(&["C.d1.s0.p1\t@DRUG$ @DRUG$ @DRUG$\tint"]);
        assert!(parse_blue_tsv(&p2, Task::Ddi).is_err());
    }

    #[test]
    fn drug_index_without_pair_suffix_is_rejected() {
        let (_d, p) = write_tsv(&["C.d1.s0\t@DRUG$ and @DRUG$\tint"]);
        assert!(parse_blue_tsv(&p, Task::Ddi).is_err());
    }

    #[test]
    fn parse_is_deterministic() {
        let rows = [
            "9.T1.T5\t@CHEMICAL$ binds @GENE$ g6\tCPR:3",
            "9.T1.T6\t@CHEMICAL$ binds g5 @GENE$\tfalse",
        ];
        let (_d, p) = write_tsv(&rows);
        let a = parse_blue_tsv(&p, Task::Cpi).unwrap();
        let b = parse_blue_tsv(&p, Task::Cpi).unwrap();
        assert_eq!(a, b);
    }
}
