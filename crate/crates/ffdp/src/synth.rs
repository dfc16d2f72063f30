//! Deterministic synthetic treebanks and random trees.
//!
//! The generators here back the test suites: a tiny deterministic
//! grammar produces learnable CoNLL-U style sentences, and the random
//! tree samplers drive the oracle round-trip properties.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conllu::{DependencyTree, Sentence, Token, DUMMY_FEATS};

const DETS: &[&str] = &["the", "a", "every", "some"];
const ADJS: &[&str] = &["old", "red", "small", "quick", "lazy"];
const NOUNS: &[&str] = &[
    "cat", "dog", "bird", "fox", "child", "farmer", "river", "book", "tree", "house",
];
const VERBS: &[&str] = &[
    "sees", "chases", "finds", "likes", "follows", "watches", "helps",
];
const ADVS: &[&str] = &["today", "quickly", "quietly", "often"];

struct Draft {
    tokens: Vec<(String, &'static str, String)>,
    heads: Vec<usize>,
    deprels: Vec<&'static str>,
}

impl Draft {
    fn new() -> Self {
        Draft {
            tokens: Vec::new(),
            heads: Vec::new(),
            deprels: Vec::new(),
        }
    }

    fn push(&mut self, form: &str, upos: &'static str, feats: String) -> usize {
        self.tokens.push((form.to_string(), upos, feats));
        self.heads.push(0);
        self.deprels.push("dep");
        self.tokens.len() // 1-based id
    }

    fn attach(&mut self, dep: usize, head: usize, deprel: &'static str) {
        self.heads[dep - 1] = head;
        self.deprels[dep - 1] = deprel;
    }
}

fn noun_phrase(draft: &mut Draft, rng: &mut ChaCha8Rng) -> usize {
    let det = if rng.gen_bool(0.7) {
        Some(draft.push(DETS.choose(rng).unwrap(), "DET", DUMMY_FEATS.to_string()))
    } else {
        None
    };
    let adj = if rng.gen_bool(0.4) {
        Some(draft.push(ADJS.choose(rng).unwrap(), "ADJ", "Degree=Pos".to_string()))
    } else {
        None
    };
    let noun = draft.push(
        NOUNS.choose(rng).unwrap(),
        "NOUN",
        "Number=Sing".to_string(),
    );
    if let Some(d) = det {
        draft.attach(d, noun, "det");
    }
    if let Some(a) = adj {
        draft.attach(a, noun, "amod");
    }
    noun
}

fn finish(draft: Draft) -> Sentence {
    let tokens = draft
        .tokens
        .into_iter()
        .enumerate()
        .map(|(i, (form, upos, feats))| Token {
            id: i + 1,
            form: form.clone(),
            lemma: form,
            upostag: upos.to_string(),
            xpostag: None,
            feats,
            gold_head: draft.heads[i],
            gold_deprel: draft.deprels[i].to_string(),
            deps: "_".to_string(),
            misc: "_".to_string(),
        })
        .collect();
    Sentence {
        tokens,
        metadata: vec![],
    }
}

/// One projective sentence: subject NP, verb, optional object NP,
/// optional adverb, final punctuation.
fn projective_sentence(rng: &mut ChaCha8Rng) -> Sentence {
    let mut draft = Draft::new();
    let subj = noun_phrase(&mut draft, rng);
    let verb = draft.push(
        VERBS.choose(rng).unwrap(),
        "VERB",
        "Number=Sing|Tense=Pres".to_string(),
    );
    draft.attach(subj, verb, "nsubj");
    if rng.gen_bool(0.8) {
        let obj = noun_phrase(&mut draft, rng);
        draft.attach(obj, verb, "obj");
    }
    if rng.gen_bool(0.3) {
        let adv = draft.push(ADVS.choose(rng).unwrap(), "ADV", DUMMY_FEATS.to_string());
        draft.attach(adv, verb, "advmod");
    }
    let punct = draft.push(".", "PUNCT", DUMMY_FEATS.to_string());
    draft.attach(punct, verb, "punct");
    draft.attach(verb, 0, "root");
    finish(draft)
}

/// One non-projective sentence: an adverb attached to the subject noun
/// but placed after the verb, crossing the nsubj arc.
fn non_projective_sentence(rng: &mut ChaCha8Rng) -> Sentence {
    let mut draft = Draft::new();
    let subj = noun_phrase(&mut draft, rng);
    let verb = draft.push(
        VERBS.choose(rng).unwrap(),
        "VERB",
        "Number=Sing|Tense=Pres".to_string(),
    );
    draft.attach(subj, verb, "nsubj");
    let extraposed = draft.push(ADVS.choose(rng).unwrap(), "ADV", DUMMY_FEATS.to_string());
    draft.attach(extraposed, subj, "advmod");
    let obj = noun_phrase(&mut draft, rng);
    draft.attach(obj, verb, "obj");
    let punct = draft.push(".", "PUNCT", DUMMY_FEATS.to_string());
    draft.attach(punct, verb, "punct");
    draft.attach(verb, 0, "root");
    finish(draft)
}

/// A fully projective synthetic treebank.
pub fn projective_treebank(n_sentences: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sentences)
        .map(|_| projective_sentence(&mut rng))
        .collect()
}

/// A treebank where roughly `nonproj_percent`% of sentences carry one
/// crossing arc.
pub fn mixed_treebank(n_sentences: usize, seed: u64, nonproj_percent: u32) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sentences)
        .map(|_| {
            if rng.gen_ratio(nonproj_percent.min(100), 100) {
                non_projective_sentence(&mut rng)
            } else {
                projective_sentence(&mut rng)
            }
        })
        .collect()
}

/// Uniform-ish random projective tree over 1..=n with multi-child
/// spans, labels drawn from a small inventory.
pub fn random_projective_tree<R: Rng>(n: usize, rng: &mut R) -> DependencyTree {
    assert!(n >= 1);
    let mut heads = vec![0usize; n + 1];
    fn fill<R: Rng>(lo: usize, hi: usize, parent: usize, heads: &mut [usize], rng: &mut R) {
        let mut start = lo;
        while start <= hi {
            let end = rng.gen_range(start..=hi);
            let h = rng.gen_range(start..=end);
            heads[h] = parent;
            if h > start {
                fill(start, h - 1, h, heads, rng);
            }
            if end > h {
                fill(h + 1, end, h, heads, rng);
            }
            start = end + 1;
        }
    }
    let root = rng.gen_range(1..=n);
    heads[root] = 0;
    if root > 1 {
        fill(1, root - 1, root, &mut heads, rng);
    }
    if root < n {
        fill(root + 1, n, root, &mut heads, rng);
    }
    tree_from_heads(&heads[1..], rng)
}

/// Random (not necessarily projective) tree rooted at 0: nodes are
/// attached in random order, each to a uniformly chosen earlier node.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> DependencyTree {
    assert!(n >= 1);
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0usize; n + 1];
    let mut attached = vec![0usize];
    for &node in &order {
        heads[node] = *attached.choose(rng).unwrap();
        attached.push(node);
    }
    tree_from_heads(&heads[1..], rng)
}

fn tree_from_heads<R: Rng>(heads: &[usize], rng: &mut R) -> DependencyTree {
    const LABELS: &[&str] = &["la", "lb", "lc", "ld"];
    let n = heads.len();
    let arcs: Vec<(usize, String, usize)> = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let label = if h == 0 {
                "root".to_string()
            } else {
                LABELS[rng.gen_range(0..LABELS.len())].to_string()
            };
            (h, label, i + 1)
        })
        .collect();
    DependencyTree::from_arcs(n, arcs).expect("generated heads form a tree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::is_projective;
    use rand::SeedableRng;

    #[test]
    fn projective_treebank_is_projective_and_deterministic() {
        let a = projective_treebank(50, 7);
        let b = projective_treebank(50, 7);
        assert_eq!(a, b);
        for sent in &a {
            assert!(is_projective(&sent.gold_tree(), sent.len()));
        }
    }

    #[test]
    fn mixed_treebank_contains_crossings() {
        let sents = mixed_treebank(100, 3, 30);
        let nonproj = sents
            .iter()
            .filter(|s| !is_projective(&s.gold_tree(), s.len()))
            .count();
        assert!(nonproj > 10, "got {nonproj} non-projective sentences");
    }

    #[test]
    fn random_projective_trees_are_projective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=12);
            let tree = random_projective_tree(n, &mut rng);
            assert!(is_projective(&tree, n));
        }
    }

    #[test]
    fn random_trees_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..=12);
            let tree = random_tree(n, &mut rng);
            assert_eq!(tree.len(), n);
        }
    }
}
