//! Randomized invariants: oracle round-trips, decoder well-formedness,
//! serialization identities and the projectivity predicate.

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ffdp::conllu::{is_projective, parse_conllu, write_conllu, DependencyTree, Sentence, Token};
use ffdp::features::FeatureTemplate;
use ffdp::synth::{mixed_treebank, projective_treebank, random_projective_tree, random_tree};
use ffdp::trainer::{train, Parser, TrainConfig, TrainOutput};
use ffdp::transition::{apply, initial_config, oracle_sequence, TransitionSystem};

/// Exhaustive pairwise-crossing check, the reference implementation
/// for projectivity over trees rooted at node 0.
fn projective_brute_force(tree: &DependencyTree, n: usize) -> bool {
    let arcs: Vec<(usize, usize)> = (1..=n)
        .map(|d| {
            let h = tree.head_of(d);
            (h.min(d), h.max(d))
        })
        .collect();
    for (i, &(a1, b1)) in arcs.iter().enumerate() {
        for &(a2, b2) in &arcs[i + 1..] {
            let crosses = (a1 < a2 && a2 < b1 && b1 < b2) || (a2 < a1 && a1 < b2 && b2 < b1);
            if crosses {
                return false;
            }
        }
    }
    true
}

#[test]
fn projectivity_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=12);
        let tree = random_tree(n, &mut rng);
        assert_eq!(
            is_projective(&tree, n),
            projective_brute_force(&tree, n),
            "disagreement on {tree:?}"
        );
    }
}

fn replay(gold: &DependencyTree, system: TransitionSystem) -> DependencyTree {
    let steps = oracle_sequence(gold, system).expect("oracle handles this tree");
    let mut config = initial_config(gold.len());
    for (pre, t) in &steps {
        assert_eq!(pre, &config, "recorded configurations match the replay");
        config = apply(&config, t).expect("oracle transitions are valid");
    }
    config.into_tree()
}

proptest! {
    #[test]
    fn oracle_round_trip_arc_standard(seed in any::<u64>(), n in 1usize..=15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = random_projective_tree(n, &mut rng);
        prop_assert_eq!(replay(&gold, TransitionSystem::ArcStandard), gold);
    }

    #[test]
    fn oracle_round_trip_swap(seed in any::<u64>(), n in 1usize..=15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = random_tree(n, &mut rng);
        prop_assert_eq!(replay(&gold, TransitionSystem::ArcStandardSwap), gold);
    }

    #[test]
    fn conllu_write_parse_identity(seed in any::<u64>(), count in 1usize..=5) {
        let sentences = mixed_treebank(count, seed, 25);
        let text = write_conllu(&sentences, None).unwrap();
        let parsed = parse_conllu(&text).unwrap();
        prop_assert_eq!(parsed, sentences);
    }
}

/// One small trained model shared by the decoder properties.
fn shared_model() -> &'static TrainOutput {
    static MODEL: OnceLock<TrainOutput> = OnceLock::new();
    MODEL.get_or_init(|| {
        let sents = projective_treebank(20, 77);
        let mut config =
            TrainConfig::new(TransitionSystem::ArcStandardSwap, FeatureTemplate::NoGdD);
        config.epochs = 1;
        config.hidden = 16;
        train(&sents, &config).unwrap()
    })
}

/// A sentence of arbitrary unseen forms, exercising the UNK path.
fn oov_sentence(seed: u64, n: usize) -> Sentence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = random_tree(n, &mut rng);
    let tokens = (1..=n)
        .map(|id| Token {
            id,
            form: format!("oov{}{}", seed % 1000, id),
            lemma: "_".into(),
            upostag: if rng.gen_bool(0.5) { "NOUN" } else { "XOOV" }.into(),
            xpostag: None,
            feats: "_".into(),
            gold_head: tree.head_of(id),
            gold_deprel: tree.deprel_of(id).into(),
            deps: "_".into(),
            misc: "_".into(),
        })
        .collect();
    Sentence {
        tokens,
        metadata: vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn decoder_always_yields_well_formed_trees(seed in any::<u64>(), n in 1usize..=30) {
        let out = shared_model();
        let parser = Parser::new(&out.params, &out.vocab).unwrap();
        let sent = oov_sentence(seed, n);
        let tree = parser.parse(&sent);
        // single-head and acyclicity are enforced by construction; the
        // decoder must cover every token
        prop_assert_eq!(tree.len(), n);
        for d in 1..=n {
            prop_assert!(tree.head_of(d) <= n);
            prop_assert!(!tree.deprel_of(d).is_empty());
        }
    }
}
