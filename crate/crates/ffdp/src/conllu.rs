//! CoNLL-U reading and writing plus tree-structural predicates.
//!
//! Sentences are sequences of syntactic words; multiword-token ranges
//! (`1-2`) and empty nodes (`1.1`) are dropped on read. Node 0 is an
//! implicit ROOT pseudo-token that is never emitted.

use std::fmt::Write as _;

use thiserror::Error;

/// Distinguished symbol standing in for an absent FEATS column.
pub const DUMMY_FEATS: &str = "<DUMMY>";

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("sentence {sentence}: {msg}")]
    Structure { sentence: usize, msg: String },
    #[error("{0}")]
    Argument(String),
}

/// One syntactic word with its gold annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based surface position.
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upostag: String,
    pub xpostag: Option<String>,
    /// Full morphological string treated atomically; never empty,
    /// absent FEATS maps to [`DUMMY_FEATS`].
    pub feats: String,
    pub gold_head: usize,
    pub gold_deprel: String,
    /// DEPS column, preserved verbatim but otherwise ignored.
    pub deps: String,
    /// MISC column, preserved verbatim but otherwise ignored.
    pub misc: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// Comment lines (without trailing newline), including the leading '#'.
    pub metadata: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Gold arcs as a [`DependencyTree`].
    pub fn gold_tree(&self) -> DependencyTree {
        DependencyTree {
            heads: self.tokens.iter().map(|t| t.gold_head).collect(),
            deprels: self.tokens.iter().map(|t| t.gold_deprel.clone()).collect(),
        }
    }
}

/// A labeled dependency tree over nodes 0..=n where 0 is the root
/// pseudo-node. Exactly one arc per dependent 1..=n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    heads: Vec<usize>,
    deprels: Vec<String>,
}

impl DependencyTree {
    /// Builds a tree from arcs `(head, deprel, dependent)`. Rejects
    /// duplicate or missing dependents, self-loops and cyclic head
    /// assignments.
    pub fn from_arcs<I, S>(n: usize, arcs: I) -> Result<Self, ConlluError>
    where
        I: IntoIterator<Item = (usize, S, usize)>,
        S: Into<String>,
    {
        let mut heads = vec![usize::MAX; n];
        let mut deprels = vec![String::new(); n];
        for (head, deprel, dep) in arcs {
            if dep == 0 || dep > n {
                return Err(ConlluError::Argument(format!(
                    "dependent {dep} out of range 1..={n}"
                )));
            }
            if head > n {
                return Err(ConlluError::Argument(format!(
                    "head {head} out of range 0..={n}"
                )));
            }
            if head == dep {
                return Err(ConlluError::Argument(format!("self-loop at node {dep}")));
            }
            if heads[dep - 1] != usize::MAX {
                return Err(ConlluError::Argument(format!(
                    "node {dep} has more than one head"
                )));
            }
            heads[dep - 1] = head;
            deprels[dep - 1] = deprel.into();
        }
        if let Some(i) = heads.iter().position(|&h| h == usize::MAX) {
            return Err(ConlluError::Argument(format!("node {} has no head", i + 1)));
        }
        let tree = DependencyTree { heads, deprels };
        if !tree.is_tree() {
            return Err(ConlluError::Argument(
                "head assignments contain a cycle".into(),
            ));
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Head of dependent `dep` (1-based).
    pub fn head_of(&self, dep: usize) -> usize {
        self.heads[dep - 1]
    }

    pub fn deprel_of(&self, dep: usize) -> &str {
        &self.deprels[dep - 1]
    }

    /// Arcs as `(head, deprel, dependent)` in dependent order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, &str, usize)> + '_ {
        self.heads
            .iter()
            .zip(&self.deprels)
            .enumerate()
            .map(|(i, (&h, d))| (h, d.as_str(), i + 1))
    }

    /// True iff every node 1..=n is reachable from node 0.
    fn is_tree(&self) -> bool {
        let n = self.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for (i, &h) in self.heads.iter().enumerate() {
            children[h].push(i + 1);
        }
        let mut seen = vec![false; n + 1];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 0;
        while let Some(node) = stack.pop() {
            count += 1;
            for &c in &children[node] {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        count == n + 1
    }
}

/// True iff no two arcs cross when drawn above the sentence.
///
/// Uses the descendant characterization: the tree is projective iff for
/// every arc, all nodes strictly between its endpoints are descendants
/// of the arc's head. The brute-force pairwise interleaving check lives
/// in the test suite as an independent oracle.
pub fn is_projective(tree: &DependencyTree, n: usize) -> bool {
    debug_assert_eq!(tree.len(), n);
    for dep in 1..=n {
        let head = tree.head_of(dep);
        let (lo, hi) = (head.min(dep), head.max(dep));
        for mid in (lo + 1)..hi {
            // walk up from mid; it must hit `head` before node 0
            let mut node = mid;
            loop {
                if node == head {
                    break;
                }
                if node == 0 {
                    return false;
                }
                node = tree.head_of(node);
            }
        }
    }
    true
}

/// Parses a CoNLL-U document into sentences.
///
/// Comment lines become metadata; multiword-token ranges and empty
/// nodes are skipped; `_` in FEATS maps to [`DUMMY_FEATS`]. Each
/// sentence's gold heads must form a single tree rooted at node 0.
pub fn parse_conllu(text: &str) -> Result<Vec<Sentence>, ConlluError> {
    let mut sentences = Vec::new();
    let mut current = Sentence::default();
    let mut sentence_no = 1usize;

    let mut flush = |current: &mut Sentence, sentence_no: &mut usize| -> Result<(), ConlluError> {
        if current.tokens.is_empty() && current.metadata.is_empty() {
            return Ok(());
        }
        let sent = std::mem::take(current);
        validate_sentence(&sent, *sentence_no)?;
        sentences.push(sent);
        *sentence_no += 1;
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            flush(&mut current, &mut sentence_no)?;
            continue;
        }
        if line.starts_with('#') {
            current.metadata.push(line.to_string());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::Format {
                line: lineno,
                msg: format!("expected 10 tab-separated columns, got {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            // multiword-token range or empty node
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| ConlluError::Format {
            line: lineno,
            msg: format!("non-integer token id {:?}", cols[0]),
        })?;
        let gold_head: usize = cols[6].parse().map_err(|_| ConlluError::Format {
            line: lineno,
            msg: format!("non-integer head {:?}", cols[6]),
        })?;
        if id == 0 {
            return Err(ConlluError::Format {
                line: lineno,
                msg: "token id must be >= 1".into(),
            });
        }
        if gold_head == id {
            return Err(ConlluError::Format {
                line: lineno,
                msg: format!("token {id} is its own head"),
            });
        }
        let feats = if cols[5] == "_" {
            DUMMY_FEATS.to_string()
        } else {
            cols[5].to_string()
        };
        current.tokens.push(Token {
            id,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upostag: cols[3].to_string(),
            xpostag: if cols[4] == "_" {
                None
            } else {
                Some(cols[4].to_string())
            },
            feats,
            gold_head,
            gold_deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
        });
    }
    flush(&mut current, &mut sentence_no)?;
    Ok(sentences)
}

fn validate_sentence(sent: &Sentence, sentence_no: usize) -> Result<(), ConlluError> {
    let n = sent.tokens.len();
    for (i, tok) in sent.tokens.iter().enumerate() {
        if tok.id != i + 1 {
            return Err(ConlluError::Structure {
                sentence: sentence_no,
                msg: format!(
                    "token ids not consecutive: expected {}, got {}",
                    i + 1,
                    tok.id
                ),
            });
        }
        if tok.gold_head > n {
            return Err(ConlluError::Structure {
                sentence: sentence_no,
                msg: format!("token {} has head {} > {}", tok.id, tok.gold_head, n),
            });
        }
    }
    let heads: Vec<usize> = sent.tokens.iter().map(|t| t.gold_head).collect();
    let tree = DependencyTree {
        heads,
        deprels: vec![String::new(); n],
    };
    if !tree.is_tree() {
        return Err(ConlluError::Structure {
            sentence: sentence_no,
            msg: "gold heads do not form a tree rooted at 0".into(),
        });
    }
    Ok(())
}

/// Serializes sentences to CoNLL-U. When `predicted` is given, the
/// HEAD/DEPREL columns carry the predicted arcs instead of the gold
/// ones. DEPS and MISC are written as `_`.
pub fn write_conllu(
    sentences: &[Sentence],
    predicted: Option<&[DependencyTree]>,
) -> Result<String, ConlluError> {
    if let Some(trees) = predicted {
        if trees.len() != sentences.len() {
            return Err(ConlluError::Argument(format!(
                "{} sentences but {} predicted trees",
                sentences.len(),
                trees.len()
            )));
        }
        for (i, (s, t)) in sentences.iter().zip(trees).enumerate() {
            if s.len() != t.len() {
                return Err(ConlluError::Argument(format!(
                    "sentence {} has {} tokens but its tree has {}",
                    i + 1,
                    s.len(),
                    t.len()
                )));
            }
        }
    }
    let mut out = String::new();
    for (i, sent) in sentences.iter().enumerate() {
        for meta in &sent.metadata {
            out.push_str(meta);
            out.push('\n');
        }
        for tok in &sent.tokens {
            let (head, deprel) = match predicted {
                Some(trees) => {
                    let t = &trees[i];
                    (t.head_of(tok.id), t.deprel_of(tok.id))
                }
                None => (tok.gold_head, tok.gold_deprel.as_str()),
            };
            let feats = if tok.feats == DUMMY_FEATS {
                "_"
            } else {
                &tok.feats
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t_\t_",
                tok.id,
                tok.form,
                tok.lemma,
                tok.upostag,
                tok.xpostag.as_deref().unwrap_or("_"),
                feats,
                head,
                deprel,
            )
            .expect("write to String cannot fail");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# text = a toy sentence
1\ta\ta\tDET\t_\tDefinite=Ind\t2\tdet\t_\t_
2\ttoy\ttoy\tNOUN\t_\t_\t3\tnsubj\t_\t_
3\tworks\twork\tVERB\tVBZ\tNumber=Sing\t0\troot\t_\t_
";

    #[test]
    fn parses_well_formed_block() {
        let sents = parse_conllu(SAMPLE).unwrap();
        assert_eq!(sents.len(), 1);
        let s = &sents[0];
        assert_eq!(s.len(), 3);
        assert_eq!(s.metadata, vec!["# text = a toy sentence"]);
        assert_eq!(
            s.tokens.iter().map(|t| t.id).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert_eq!(s.tokens[2].xpostag.as_deref(), Some("VBZ"));
    }

    #[test]
    fn absent_feats_maps_to_dummy() {
        let sents = parse_conllu(SAMPLE).unwrap();
        assert_eq!(sents[0].tokens[1].feats, DUMMY_FEATS);
        assert_eq!(sents[0].tokens[0].feats, "Definite=Ind");
    }

    #[test]
    fn skips_multiword_ranges_and_empty_nodes() {
        let text = "\
1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_
1\tde\tde\tADP\t_\t_\t2\tcase\t_\t_
2\tel\tel\tDET\t_\t_\t0\troot\t_\t_
2.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_
";
        let sents = parse_conllu(text).unwrap();
        assert_eq!(sents[0].len(), 2);
    }

    #[test]
    fn rejects_wrong_column_count() {
        let err = parse_conllu("1\tx\ty\n").unwrap_err();
        match err {
            ConlluError::Format { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_integer_head() {
        let err = parse_conllu("1\tx\tx\tX\t_\t_\tQ\tdep\t_\t_\n").unwrap_err();
        assert!(matches!(err, ConlluError::Format { line: 1, .. }));
    }

    #[test]
    fn rejects_head_cycle() {
        let text = "\
1\ta\ta\tX\t_\t_\t2\tdep\t_\t_
2\tb\tb\tX\t_\t_\t1\tdep\t_\t_
";
        let err = parse_conllu(text).unwrap_err();
        assert!(matches!(err, ConlluError::Structure { sentence: 1, .. }));
    }

    #[test]
    fn round_trip_preserves_structure() {
        let sents = parse_conllu(SAMPLE).unwrap();
        let written = write_conllu(&sents, None).unwrap();
        let reparsed = parse_conllu(&written).unwrap();
        assert_eq!(sents, reparsed);
    }

    #[test]
    fn writes_predicted_arcs() {
        let text = "1\tx\tx\tX\t_\t_\t0\troot\t_\t_\n";
        let sents = parse_conllu(text).unwrap();
        let tree = DependencyTree::from_arcs(1, [(0usize, "root", 1usize)]).unwrap();
        let out = write_conllu(&sents, Some(&[tree])).unwrap();
        let line = out.lines().next().unwrap();
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[6], "0");
        assert_eq!(cols[7], "root");
    }

    #[test]
    fn predicted_length_mismatch_is_an_error() {
        let sents = parse_conllu(SAMPLE).unwrap();
        let err = write_conllu(&sents, Some(&[])).unwrap_err();
        assert!(matches!(err, ConlluError::Argument(_)));
    }

    #[test]
    fn dummy_feats_written_as_underscore() {
        let sents = parse_conllu(SAMPLE).unwrap();
        let out = write_conllu(&sents, None).unwrap();
        let line = out.lines().find(|l| l.starts_with("2\t")).unwrap();
        assert_eq!(line.split('\t').nth(5), Some("_"));
    }

    #[test]
    fn left_branching_chain_is_projective() {
        let n = 5;
        let arcs: Vec<(usize, &str, usize)> = (1..=n)
            .map(|i| (if i == n { 0 } else { i + 1 }, "dep", i))
            .collect();
        let tree = DependencyTree::from_arcs(n, arcs).unwrap();
        assert!(is_projective(&tree, n));
    }

    #[test]
    fn crossing_arcs_are_not_projective() {
        // spans (1,3) and (2,4) strictly interleave
        let tree =
            DependencyTree::from_arcs(4, [(3, "a", 1), (4, "b", 2), (0, "root", 3), (3, "c", 4)])
                .unwrap();
        assert!(!is_projective(&tree, 4));
    }

    #[test]
    fn single_arc_is_projective() {
        let tree = DependencyTree::from_arcs(1, [(0, "root", 1)]).unwrap();
        assert!(is_projective(&tree, 1));
    }
}
