//! Feature templates, symbol vocabularies and feature extraction.
//!
//! A template addresses a fixed set of tree elements relative to the
//! current configuration (stack/buffer positions, their children and
//! grand-children) and reads FORM/UPOSTAG/FEATS ids for each, plus
//! DEPREL ids for child and grand-child elements.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conllu::{Sentence, DUMMY_FEATS};
use crate::nn::SizeConfig;
use crate::transition::Configuration;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary file line {0}: {1}")]
    Format(usize, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureTemplate {
    /// 18 elements, 66 features.
    Standard,
    /// No grand-daughter elements: 14 elements, 50 features.
    NoGd,
    /// Direct stack/buffer elements only: 6 elements, 18 features.
    NoGdD,
}

impl fmt::Display for FeatureTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureTemplate::Standard => write!(f, "standard"),
            FeatureTemplate::NoGd => write!(f, "no-gd"),
            FeatureTemplate::NoGdD => write!(f, "no-gd-d"),
        }
    }
}

/// Addressing scheme for one tree element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Address {
    /// k-th word from the buffer front.
    Buffer(usize),
    /// k-th word from the stack top.
    Stack(usize),
    /// rank-th leftmost child (rank 1 or 2) of the k-th stack word.
    LeftChild { stack: usize, rank: usize },
    /// rank-th rightmost child of the k-th stack word.
    RightChild { stack: usize, rank: usize },
    /// Leftmost child of the leftmost child of the k-th stack word.
    LeftLeftChild { stack: usize },
    /// Rightmost child of the rightmost child of the k-th stack word.
    RightRightChild { stack: usize },
}

impl Address {
    /// Child and grand-child elements also contribute a DEPREL feature.
    pub fn uses_deprel(&self) -> bool {
        !matches!(self, Address::Buffer(_) | Address::Stack(_))
    }
}

impl FeatureTemplate {
    /// Element addresses in fixed template order.
    pub fn element_addresses(self) -> Vec<Address> {
        let mut addrs = Vec::with_capacity(18);
        for k in 0..3 {
            addrs.push(Address::Buffer(k));
        }
        for k in 0..3 {
            addrs.push(Address::Stack(k));
        }
        if self == FeatureTemplate::NoGdD {
            return addrs;
        }
        for stack in 0..2 {
            addrs.push(Address::LeftChild { stack, rank: 1 });
            addrs.push(Address::LeftChild { stack, rank: 2 });
            addrs.push(Address::RightChild { stack, rank: 1 });
            addrs.push(Address::RightChild { stack, rank: 2 });
        }
        if self == FeatureTemplate::NoGd {
            return addrs;
        }
        for stack in 0..2 {
            addrs.push(Address::LeftLeftChild { stack });
            addrs.push(Address::RightRightChild { stack });
        }
        addrs
    }

    pub fn n_elements(self) -> usize {
        match self {
            FeatureTemplate::Standard => 18,
            FeatureTemplate::NoGd => 14,
            FeatureTemplate::NoGdD => 6,
        }
    }

    /// Total feature count: 3 per direct element, 4 per child element.
    pub fn n_features(self) -> usize {
        self.element_addresses()
            .iter()
            .map(|a| if a.uses_deprel() { 4 } else { 3 })
            .sum()
    }
}

/// Resolves an address to a node index, or `None` when the element is
/// absent. Children come from the arcs built so far, never from gold.
pub fn resolve(config: &Configuration, addr: Address) -> Option<usize> {
    let child = |node: usize, from_left: bool, rank: usize| -> Option<usize> {
        let ch = config.children_of(node);
        if rank == 0 || rank > ch.len() {
            return None;
        }
        Some(if from_left {
            ch[rank - 1]
        } else {
            ch[ch.len() - rank]
        })
    };
    match addr {
        Address::Buffer(k) => config.buffer_nth(k),
        Address::Stack(k) => config.stack_nth(k),
        Address::LeftChild { stack, rank } => child(config.stack_nth(stack)?, true, rank),
        Address::RightChild { stack, rank } => child(config.stack_nth(stack)?, false, rank),
        Address::LeftLeftChild { stack } => {
            child(child(config.stack_nth(stack)?, true, 1)?, true, 1)
        }
        Address::RightRightChild { stack } => {
            child(child(config.stack_nth(stack)?, false, 1)?, false, 1)
        }
    }
}

/// Attribute kinds with their own symbol table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attribute {
    Form,
    Upostag,
    Feats,
    Deprel,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Form,
        Attribute::Upostag,
        Attribute::Feats,
        Attribute::Deprel,
    ];

    fn name(self) -> &'static str {
        match self {
            Attribute::Form => "form",
            Attribute::Upostag => "upostag",
            Attribute::Feats => "feats",
            Attribute::Deprel => "deprel",
        }
    }

    fn from_name(s: &str) -> Option<Attribute> {
        match s {
            "form" => Some(Attribute::Form),
            "upostag" => Some(Attribute::Upostag),
            "feats" => Some(Attribute::Feats),
            "deprel" => Some(Attribute::Deprel),
            _ => None,
        }
    }
}

/// Reserved symbol ids, identical across all attribute tables.
pub const NULL_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const ROOT_ID: u32 = 2;
pub const DUMMY_ID: u32 = 3;

const RESERVED: [&str; 4] = ["<NULL>", "<UNK>", "<ROOT>", "<DUMMY>"];

#[derive(Debug, Clone, Default, PartialEq)]
struct SymbolTable {
    map: HashMap<String, u32>,
    symbols: Vec<String>,
}

impl SymbolTable {
    fn with_reserved() -> Self {
        let mut t = SymbolTable::default();
        for s in RESERVED {
            t.intern(s);
        }
        t
    }

    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.map.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(s.to_string());
        self.map.insert(s.to_string(), id);
        id
    }

    fn get(&self, s: &str) -> Option<u32> {
        self.map.get(s).copied()
    }

    fn len(&self) -> usize {
        self.symbols.len()
    }
}

/// Per-attribute symbol tables built from a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    form: SymbolTable,
    upostag: SymbolTable,
    feats: SymbolTable,
    deprel: SymbolTable,
    /// Form ids that occurred exactly once in the training split;
    /// candidates for stochastic UNK replacement during training.
    singleton_forms: Vec<u32>,
}

impl Vocabulary {
    /// Builds the vocabulary from training sentences. Symbols are
    /// assigned ids in first-occurrence order after the reserved block.
    pub fn build(sentences: &[Sentence]) -> Vocabulary {
        let mut form = SymbolTable::with_reserved();
        let mut upostag = SymbolTable::with_reserved();
        let mut feats = SymbolTable::with_reserved();
        let mut deprel = SymbolTable::with_reserved();
        let mut form_freq: HashMap<u32, usize> = HashMap::new();
        for sent in sentences {
            for tok in &sent.tokens {
                let fid = form.intern(&tok.form);
                *form_freq.entry(fid).or_insert(0) += 1;
                upostag.intern(&tok.upostag);
                if tok.feats != DUMMY_FEATS {
                    feats.intern(&tok.feats);
                }
                deprel.intern(&tok.gold_deprel);
            }
        }
        let mut singleton_forms: Vec<u32> = form_freq
            .into_iter()
            .filter_map(|(id, c)| (c == 1).then_some(id))
            .collect();
        singleton_forms.sort_unstable();
        Vocabulary {
            form,
            upostag,
            feats,
            deprel,
            singleton_forms,
        }
    }

    fn table(&self, attr: Attribute) -> &SymbolTable {
        match attr {
            Attribute::Form => &self.form,
            Attribute::Upostag => &self.upostag,
            Attribute::Feats => &self.feats,
            Attribute::Deprel => &self.deprel,
        }
    }

    pub fn size(&self, attr: Attribute) -> usize {
        self.table(attr).len()
    }

    /// Deprel labels excluding reserved symbols, in id order. These
    /// define the arc-transition inventory.
    pub fn deprel_labels(&self) -> &[String] {
        &self.deprel.symbols[RESERVED.len()..]
    }

    pub fn deprel_id(&self, label: &str) -> Option<u32> {
        self.deprel.get(label)
    }

    pub fn is_singleton_form(&self, id: u32) -> bool {
        self.singleton_forms.binary_search(&id).is_ok()
    }

    pub fn singleton_count(&self) -> usize {
        self.singleton_forms.len()
    }

    /// Versioned flat-text serialization: one
    /// `attribute<TAB>symbol<TAB>id` triple per line, reserved first.
    pub fn to_text(&self) -> String {
        let mut out = String::from("ffdp-vocab\tv1\n");
        for attr in Attribute::ALL {
            for (id, sym) in self.table(attr).symbols.iter().enumerate() {
                out.push_str(&format!("{}\t{}\t{}\n", attr.name(), sym, id));
            }
        }
        for id in &self.singleton_forms {
            out.push_str(&format!("singleton\t{id}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Vocabulary, VocabError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "ffdp-vocab\tv1")) => {}
            _ => return Err(VocabError::Format(1, "missing ffdp-vocab v1 header".into())),
        }
        let mut vocab = Vocabulary {
            form: SymbolTable::default(),
            upostag: SymbolTable::default(),
            feats: SymbolTable::default(),
            deprel: SymbolTable::default(),
            singleton_forms: Vec::new(),
        };
        for (idx, line) in lines {
            let lineno = idx + 1;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols[0] == "singleton" {
                let id = cols
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| VocabError::Format(lineno, "bad singleton id".into()))?;
                vocab.singleton_forms.push(id);
                continue;
            }
            if cols.len() != 3 {
                return Err(VocabError::Format(lineno, "expected 3 columns".into()));
            }
            let attr = Attribute::from_name(cols[0]).ok_or_else(|| {
                VocabError::Format(lineno, format!("unknown attribute {:?}", cols[0]))
            })?;
            let expected: u32 = cols[2]
                .parse()
                .map_err(|_| VocabError::Format(lineno, "non-integer id".into()))?;
            let table = match attr {
                Attribute::Form => &mut vocab.form,
                Attribute::Upostag => &mut vocab.upostag,
                Attribute::Feats => &mut vocab.feats,
                Attribute::Deprel => &mut vocab.deprel,
            };
            let id = table.intern(cols[1]);
            if id != expected {
                return Err(VocabError::Format(
                    lineno,
                    format!("id {expected} out of order (expected {id})"),
                ));
            }
        }
        vocab.singleton_forms.sort_unstable();
        Ok(vocab)
    }

    /// SHA-256 of the text serialization; stored in model headers to
    /// detect model/vocabulary mismatches.
    pub fn hash(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.into()
    }
}

/// Per-attribute id lists in fixed template order. `deprels` covers
/// only the child and grand-child elements, in the same order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub forms: Vec<u32>,
    pub upostags: Vec<u32>,
    pub feats: Vec<u32>,
    pub deprels: Vec<u32>,
}

/// Extracts the feature ids for `config` under `template`.
///
/// Absent elements contribute NULL for all attributes; out-of-vocabulary
/// forms map to UNK; node 0 maps to the ROOT symbols; the DEPREL of an
/// element whose head has not been assigned yet is NULL.
pub fn featurize(
    config: &Configuration,
    sentence: &Sentence,
    template: FeatureTemplate,
    vocab: &Vocabulary,
) -> FeatureVector {
    let addrs = template.element_addresses();
    let n = addrs.len();
    let mut fv = FeatureVector {
        forms: Vec::with_capacity(n),
        upostags: Vec::with_capacity(n),
        feats: Vec::with_capacity(n),
        deprels: Vec::new(),
    };
    for addr in addrs {
        match resolve(config, addr) {
            None => {
                fv.forms.push(NULL_ID);
                fv.upostags.push(NULL_ID);
                fv.feats.push(NULL_ID);
                if addr.uses_deprel() {
                    fv.deprels.push(NULL_ID);
                }
            }
            Some(0) => {
                fv.forms.push(ROOT_ID);
                fv.upostags.push(ROOT_ID);
                fv.feats.push(ROOT_ID);
                if addr.uses_deprel() {
                    fv.deprels.push(NULL_ID);
                }
            }
            Some(node) => {
                let tok = &sentence.tokens[node - 1];
                fv.forms.push(vocab.form.get(&tok.form).unwrap_or(UNK_ID));
                fv.upostags
                    .push(vocab.upostag.get(&tok.upostag).unwrap_or(UNK_ID));
                fv.feats.push(if tok.feats == DUMMY_FEATS {
                    DUMMY_ID
                } else {
                    vocab.feats.get(&tok.feats).unwrap_or(UNK_ID)
                });
                if addr.uses_deprel() {
                    fv.deprels.push(match config.head_of(node) {
                        Some((_, label)) => vocab.deprel.get(label).unwrap_or(UNK_ID),
                        None => NULL_ID,
                    });
                }
            }
        }
    }
    fv
}

/// Input dimensionality of the oracle network for a template and
/// embedding sizes: form+upos+feats per element, plus deprel for child
/// and grand-child elements.
pub fn input_dim(template: FeatureTemplate, sizes: &SizeConfig) -> usize {
    template
        .element_addresses()
        .iter()
        .map(|a| {
            let base = sizes.form_dim + sizes.upos_dim + sizes.feats_dim;
            if a.uses_deprel() {
                base + sizes.deprel_dim
            } else {
                base
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::parse_conllu;
    use crate::transition::{apply, initial_config, Transition};

    fn toy_sentence() -> Sentence {
        let text = "\
1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_
2\tcat\tcat\tNOUN\t_\tNumber=Sing\t3\tnsubj\t_\t_
3\tsleeps\tsleep\tVERB\t_\tNumber=Sing\t0\troot\t_\t_
";
        parse_conllu(text).unwrap().remove(0)
    }

    #[test]
    fn element_counts_per_template() {
        assert_eq!(FeatureTemplate::Standard.element_addresses().len(), 18);
        assert_eq!(FeatureTemplate::NoGd.element_addresses().len(), 14);
        assert_eq!(FeatureTemplate::NoGdD.element_addresses().len(), 6);
        assert_eq!(FeatureTemplate::Standard.n_features(), 66);
        assert_eq!(FeatureTemplate::NoGd.n_features(), 50);
        assert_eq!(FeatureTemplate::NoGdD.n_features(), 18);
    }

    #[test]
    fn no_gd_is_prefix_of_standard() {
        let std = FeatureTemplate::Standard.element_addresses();
        let no_gd = FeatureTemplate::NoGd.element_addresses();
        assert_eq!(&std[..no_gd.len()], &no_gd[..]);
        let no_gdd = FeatureTemplate::NoGdD.element_addresses();
        assert_eq!(&std[..no_gdd.len()], &no_gdd[..]);
    }

    #[test]
    fn resolve_absent_and_children() {
        let c = initial_config(3);
        assert_eq!(resolve(&c, Address::Stack(1)), None);
        assert_eq!(resolve(&c, Address::Stack(0)), Some(0));
        assert_eq!(resolve(&c, Address::Buffer(0)), Some(1));

        // shift 1, shift 2, left-arc: 2 gains child 1; stack [0,2]
        let c = apply(&c, &Transition::shift()).unwrap();
        let c = apply(&c, &Transition::shift()).unwrap();
        let c = apply(&c, &Transition::left_arc("det")).unwrap();
        assert_eq!(
            resolve(&c, Address::LeftChild { stack: 0, rank: 1 }),
            Some(1)
        );
        assert_eq!(resolve(&c, Address::LeftChild { stack: 0, rank: 2 }), None);
        assert_eq!(resolve(&c, Address::LeftLeftChild { stack: 0 }), None);
    }

    #[test]
    fn featurize_initial_config_single_token() {
        let sent = toy_sentence();
        let vocab = Vocabulary::build(std::slice::from_ref(&sent));
        let one = Sentence {
            tokens: vec![sent.tokens[0].clone()],
            metadata: vec![],
        };
        let fv = featurize(&initial_config(1), &one, FeatureTemplate::Standard, &vocab);
        // b0 carries token 1, s0 is ROOT, everything else NULL
        assert_ne!(fv.forms[0], NULL_ID);
        assert_eq!(fv.forms[3], ROOT_ID);
        for i in [1, 2, 4, 5] {
            assert_eq!(fv.forms[i], NULL_ID);
        }
        for i in 6..18 {
            assert_eq!(fv.forms[i], NULL_ID);
        }
    }

    #[test]
    fn featurize_lengths_match_template() {
        let sent = toy_sentence();
        let vocab = Vocabulary::build(std::slice::from_ref(&sent));
        let c = initial_config(sent.len());
        let fv = featurize(&c, &sent, FeatureTemplate::NoGd, &vocab);
        assert_eq!(fv.forms.len(), 14);
        assert_eq!(fv.upostags.len(), 14);
        assert_eq!(fv.feats.len(), 14);
        assert_eq!(fv.deprels.len(), 8);
        let fv = featurize(&c, &sent, FeatureTemplate::NoGdD, &vocab);
        assert_eq!((fv.forms.len(), fv.deprels.len()), (6, 0));
    }

    #[test]
    fn assigned_deprel_is_visible() {
        let sent = toy_sentence();
        let vocab = Vocabulary::build(std::slice::from_ref(&sent));
        let c = initial_config(3);
        let c = apply(&c, &Transition::shift()).unwrap();
        let c = apply(&c, &Transition::shift()).unwrap();
        let c = apply(&c, &Transition::left_arc("det")).unwrap();
        // stack [0,2]; lc1(s0) = 1 with deprel "det"
        let fv = featurize(&c, &sent, FeatureTemplate::Standard, &vocab);
        let det_id = vocab.deprel_id("det").unwrap();
        assert_eq!(fv.deprels[0], det_id);
    }

    #[test]
    fn oov_form_maps_to_unk_and_dummy_feats_to_dummy() {
        let sent = toy_sentence();
        let vocab = Vocabulary::build(std::slice::from_ref(&sent));
        let mut other = sent.clone();
        other.tokens[0].form = "unseen".into();
        let fv = featurize(&initial_config(3), &other, FeatureTemplate::NoGdD, &vocab);
        assert_eq!(fv.forms[0], UNK_ID);
        assert_eq!(fv.feats[0], DUMMY_ID);
    }

    #[test]
    fn input_dims_match_paper_counts() {
        let sizes = SizeConfig::default();
        assert_eq!(input_dim(FeatureTemplate::Standard, &sizes), 1860);
        assert_eq!(input_dim(FeatureTemplate::NoGd, &sizes), 1420);
        assert_eq!(input_dim(FeatureTemplate::NoGdD, &sizes), 540);
    }

    #[test]
    fn vocab_round_trips_through_text() {
        let sent = toy_sentence();
        let vocab = Vocabulary::build(std::slice::from_ref(&sent));
        let text = vocab.to_text();
        let loaded = Vocabulary::from_text(&text).unwrap();
        assert_eq!(vocab, loaded);
        assert_eq!(vocab.hash(), loaded.hash());
        // reserved ids are stable
        assert_eq!(loaded.deprel_id("<NULL>"), Some(NULL_ID));
        assert_eq!(loaded.deprel_id("<ROOT>"), Some(ROOT_ID));
    }

    #[test]
    fn singleton_forms_are_tracked() {
        let sent = toy_sentence();
        let vocab = Vocabulary::build(std::slice::from_ref(&sent));
        // every form occurs once in the single toy sentence
        assert_eq!(vocab.singleton_count(), 3);
    }
}
