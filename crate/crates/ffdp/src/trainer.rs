//! Oracle-labeled instance generation, the training schedule, and
//! greedy decoding.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{is_projective, DependencyTree, Sentence};
use crate::features::{featurize, FeatureTemplate, FeatureVector, Vocabulary, UNK_ID};
use crate::nn::{
    backward, forward, sgd_step, Gradients, ModelMeta, ModelParams, NnError, SizeConfig,
};
use crate::transition::{
    apply, initial_config, is_terminal, oracle_sequence, valid_transitions, Transition,
    TransitionError, TransitionKind, TransitionSystem,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no usable training sentences")]
    NoData,
    #[error("model/vocabulary mismatch: vocab hash differs from the model header")]
    VocabHashMismatch,
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Training hyperparameters. Defaults: mini-batch 10, lr 0.02 with
/// exponential decay at rate 0.2, dropout 50%, 10 epochs, hidden 200.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub system: TransitionSystem,
    pub template: FeatureTemplate,
    pub sizes: SizeConfig,
    pub batch_size: usize,
    pub base_lr: f64,
    pub decay_rate: f64,
    pub dropout: f32,
    pub epochs: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(system: TransitionSystem, template: FeatureTemplate) -> TrainConfig {
        TrainConfig {
            system,
            template,
            sizes: SizeConfig::default(),
            batch_size: 10,
            base_lr: 0.02,
            decay_rate: 0.2,
            dropout: 0.5,
            epochs: 10,
            hidden: 200,
            seed: 1,
        }
    }
}

/// Exponentially decayed learning rate for an epoch (0-based):
/// `base_lr * exp(-decay_rate * epoch)`.
pub fn learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    debug_assert!(epoch < config.epochs);
    config.base_lr * (-config.decay_rate * epoch as f64).exp()
}

/// Fixed enumeration of the output layer: SHIFT, then SWAP for the
/// swap system, then LEFT-ARC/RIGHT-ARC per deprel label in vocabulary
/// order.
#[derive(Debug, Clone)]
pub struct TransitionInventory {
    system: TransitionSystem,
    labels: Vec<String>,
}

impl TransitionInventory {
    pub fn from_vocab(system: TransitionSystem, vocab: &Vocabulary) -> TransitionInventory {
        TransitionInventory {
            system,
            labels: vocab.deprel_labels().to_vec(),
        }
    }

    fn arc_base(&self) -> usize {
        if self.system.admits_swap() {
            2
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        self.arc_base() + 2 * self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, t: &Transition) -> Option<usize> {
        match t.kind {
            TransitionKind::Shift => Some(0),
            TransitionKind::Swap => self.system.admits_swap().then_some(1),
            TransitionKind::LeftArc | TransitionKind::RightArc => {
                let label = t.label.as_deref()?;
                let li = self.labels.iter().position(|l| l == label)?;
                let off = if t.kind == TransitionKind::LeftArc {
                    0
                } else {
                    1
                };
                Some(self.arc_base() + 2 * li + off)
            }
        }
    }

    pub fn decode(&self, index: usize) -> Transition {
        assert!(index < self.len());
        if index == 0 {
            return Transition::shift();
        }
        if self.system.admits_swap() && index == 1 {
            return Transition::swap();
        }
        let rel = index - self.arc_base();
        let label = self.labels[rel / 2].clone();
        if rel.is_multiple_of(2) {
            Transition::left_arc(label)
        } else {
            Transition::right_arc(label)
        }
    }

    pub fn kind_of(&self, index: usize) -> TransitionKind {
        if index == 0 {
            return TransitionKind::Shift;
        }
        if self.system.admits_swap() && index == 1 {
            return TransitionKind::Swap;
        }
        if (index - self.arc_base()).is_multiple_of(2) {
            TransitionKind::LeftArc
        } else {
            TransitionKind::RightArc
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub fv: FeatureVector,
    pub gold: usize,
}

/// Why sentences were skipped during instance generation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SkipReport {
    /// 0-based indices of non-projective sentences skipped under
    /// arc-standard.
    pub non_projective: Vec<usize>,
    /// (index, reason) for sentences the oracle could not process.
    pub oracle_failures: Vec<(usize, String)>,
}

impl SkipReport {
    pub fn skipped(&self) -> usize {
        self.non_projective.len() + self.oracle_failures.len()
    }
}

/// Replays the static oracle over each usable sentence and featurizes
/// every pre-transition configuration. Arc-standard skips
/// non-projective sentences; the swap system uses all of them.
pub fn generate_instances(
    sentences: &[Sentence],
    system: TransitionSystem,
    template: FeatureTemplate,
    vocab: &Vocabulary,
) -> (Vec<TrainingInstance>, SkipReport) {
    let inventory = TransitionInventory::from_vocab(system, vocab);
    let mut instances = Vec::new();
    let mut report = SkipReport::default();
    for (idx, sent) in sentences.iter().enumerate() {
        let gold = sent.gold_tree();
        if system == TransitionSystem::ArcStandard && !is_projective(&gold, sent.len()) {
            report.non_projective.push(idx);
            continue;
        }
        match oracle_sequence(&gold, system) {
            Ok(steps) => {
                for (config, t) in steps {
                    let fv = featurize(&config, sent, template, vocab);
                    let gold_idx = inventory
                        .index_of(&t)
                        .expect("oracle transitions use vocabulary labels");
                    instances.push(TrainingInstance { fv, gold: gold_idx });
                }
            }
            Err(e) => report.oracle_failures.push((idx, e.to_string())),
        }
    }
    (instances, report)
}

/// One line of the plain-text run log.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub train_acc: f64,
}

impl EpochLog {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}",
            self.epoch, self.lr, self.mean_loss, self.train_acc
        )
    }
}

#[derive(Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub epochs: Vec<EpochLog>,
    pub skips: SkipReport,
}

/// Trains a model over the given treebank split. Deterministic for a
/// fixed seed: vocabulary construction, Glorot initialization, epoch
/// shuffles, singleton-UNK noise and dropout masks all draw from one
/// seeded generator in a fixed order.
pub fn train(sentences: &[Sentence], config: &TrainConfig) -> Result<TrainOutput, TrainError> {
    let vocab = Vocabulary::build(sentences);
    let inventory = TransitionInventory::from_vocab(config.system, &vocab);
    let (instances, skips) = generate_instances(sentences, config.system, config.template, &vocab);
    if instances.is_empty() {
        return Err(TrainError::NoData);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let meta = ModelMeta {
        system: config.system,
        template: config.template,
        sizes: config.sizes,
        hidden: config.hidden,
        n_transitions: inventory.len(),
        vocab_hash: vocab.hash(),
    };
    let mut params = ModelParams::init(meta, &vocab, &mut rng);

    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = learning_rate(config, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut acc: Option<Gradients> = None;
            for &i in batch {
                let inst = &instances[i];
                // singleton forms flip to UNK with p = 0.5 so the UNK
                // embedding receives gradient
                let mut fv = inst.fv.clone();
                for id in fv.forms.iter_mut() {
                    if vocab.is_singleton_form(*id) && rng.gen::<f32>() < 0.5 {
                        *id = UNK_ID;
                    }
                }
                let trace = forward(&params, &fv, config.dropout, Some(&mut rng))?;
                loss_sum += -(trace.probs[inst.gold].max(f32::MIN_POSITIVE) as f64).ln();
                let argmax = trace
                    .probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(k, _)| k)
                    .unwrap();
                if argmax == inst.gold {
                    correct += 1;
                }
                let grads = backward(&params, &trace, inst.gold)?;
                match &mut acc {
                    Some(a) => a.add(&grads),
                    None => acc = Some(grads),
                }
            }
            let mut acc = acc.expect("chunks are non-empty");
            acc.scale(1.0 / batch.len() as f32);
            sgd_step(&mut params, &acc, lr as f32)?;
        }
        epochs.push(EpochLog {
            epoch,
            lr,
            mean_loss: loss_sum / instances.len() as f64,
            train_acc: correct as f64 / instances.len() as f64,
        });
    }

    Ok(TrainOutput {
        params,
        vocab,
        epochs,
        skips,
    })
}

/// A frozen model bound to its vocabulary, ready for greedy decoding.
/// Read-only: distinct sentences may be parsed concurrently.
pub struct Parser<'a> {
    params: &'a ModelParams,
    vocab: &'a Vocabulary,
    inventory: TransitionInventory,
    kinds: Vec<TransitionKind>,
}

impl<'a> Parser<'a> {
    pub fn new(params: &'a ModelParams, vocab: &'a Vocabulary) -> Result<Parser<'a>, TrainError> {
        if params.meta.vocab_hash != vocab.hash() {
            return Err(TrainError::VocabHashMismatch);
        }
        let inventory = TransitionInventory::from_vocab(params.meta.system, vocab);
        let kinds = (0..inventory.len()).map(|i| inventory.kind_of(i)).collect();
        Ok(Parser {
            params,
            vocab,
            inventory,
            kinds,
        })
    }

    /// Greedy masked decoding: repeatedly pick the highest-probability
    /// transition whose kind is currently valid (ties broken by lowest
    /// index) until the terminal configuration. Always yields a
    /// well-formed tree.
    pub fn parse(&self, sentence: &Sentence) -> DependencyTree {
        let n = sentence.len();
        let mut config = initial_config(n);
        let bound = 2 * n + n * n.saturating_sub(1) / 2 + 1;
        let mut steps = 0usize;
        while !is_terminal(&config) {
            debug_assert!(steps <= bound, "decode exceeded the transition bound");
            let fv = featurize(&config, sentence, self.params.meta.template, self.vocab);
            let trace = forward::<ChaCha8Rng>(self.params, &fv, 0.0, None)
                .expect("frozen model and template are consistent");
            let valid = valid_transitions(&config, self.params.meta.system)
                .expect("loop guard excludes terminal configurations");
            let mut best: Option<(usize, f32)> = None;
            for (idx, &p) in trace.probs.iter().enumerate() {
                if !valid.contains(&self.kinds[idx]) {
                    continue;
                }
                if best.is_none_or(|(_, bp)| p > bp) {
                    best = Some((idx, p));
                }
            }
            let (idx, _) = best.expect("valid set is never empty before terminal");
            let t = self.inventory.decode(idx);
            config = apply(&config, &t).expect("decoded transition passed the validity mask");
            steps += 1;
        }
        config.into_tree()
    }

    pub fn inventory(&self) -> &TransitionInventory {
        &self.inventory
    }
}

/// Convenience wrapper over [`Parser`] for one-off calls.
pub fn parse(
    params: &ModelParams,
    vocab: &Vocabulary,
    sentence: &Sentence,
) -> Result<DependencyTree, TrainError> {
    Ok(Parser::new(params, vocab)?.parse(sentence))
}
