//! Parser configurations, the arc-standard transition system and its
//! swap extension, and the static oracles used to derive gold
//! transition sequences.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::DependencyTree;

#[derive(Debug, Error)]
pub enum TransitionError {
    #[error("transition {0} violates precondition: {1}")]
    Precondition(String, String),
    #[error("valid_transitions called on a terminal configuration")]
    Terminal,
    #[error("oracle failure: {0}")]
    OracleFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionSystem {
    ArcStandard,
    ArcStandardSwap,
}

impl TransitionSystem {
    pub fn admits_swap(self) -> bool {
        matches!(self, TransitionSystem::ArcStandardSwap)
    }
}

impl fmt::Display for TransitionSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionSystem::ArcStandard => write!(f, "arc-standard"),
            TransitionSystem::ArcStandardSwap => write!(f, "swap"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    Shift,
    LeftArc,
    RightArc,
    Swap,
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionKind::Shift => write!(f, "SHIFT"),
            TransitionKind::LeftArc => write!(f, "LEFT-ARC"),
            TransitionKind::RightArc => write!(f, "RIGHT-ARC"),
            TransitionKind::Swap => write!(f, "SWAP"),
        }
    }
}

/// A transition; `label` is present iff the kind creates an arc.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub kind: TransitionKind,
    pub label: Option<String>,
}

impl Transition {
    pub fn shift() -> Self {
        Transition {
            kind: TransitionKind::Shift,
            label: None,
        }
    }

    pub fn swap() -> Self {
        Transition {
            kind: TransitionKind::Swap,
            label: None,
        }
    }

    pub fn left_arc(label: impl Into<String>) -> Self {
        Transition {
            kind: TransitionKind::LeftArc,
            label: Some(label.into()),
        }
    }

    pub fn right_arc(label: impl Into<String>) -> Self {
        Transition {
            kind: TransitionKind::RightArc,
            label: Some(label.into()),
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "{}({l})", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// Parser state: stack (bottom is node 0), buffer (front first) and
/// the arcs created so far. Immutable: [`apply`] returns a fresh
/// configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    stack: Vec<usize>,
    buffer: VecDeque<usize>,
    /// head_of[node] = (head, deprel), indexed by node, None while unattached.
    head_of: Vec<Option<(usize, String)>>,
    /// children[node], sorted by surface position.
    children: Vec<Vec<usize>>,
    n: usize,
}

/// Initial configuration: stack `[0]`, buffer `[1..n]`, no arcs.
pub fn initial_config(n: usize) -> Configuration {
    Configuration {
        stack: vec![0],
        buffer: (1..=n).collect(),
        head_of: vec![None; n + 1],
        children: vec![Vec::new(); n + 1],
        n,
    }
}

impl Configuration {
    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    pub fn buffer(&self) -> impl Iterator<Item = usize> + '_ {
        self.buffer.iter().copied()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// k-th item from the stack top (0 = top).
    pub fn stack_nth(&self, k: usize) -> Option<usize> {
        if k < self.stack.len() {
            Some(self.stack[self.stack.len() - 1 - k])
        } else {
            None
        }
    }

    /// k-th item from the buffer front (0 = front).
    pub fn buffer_nth(&self, k: usize) -> Option<usize> {
        self.buffer.get(k).copied()
    }

    pub fn n_tokens(&self) -> usize {
        self.n
    }

    pub fn head_of(&self, node: usize) -> Option<(usize, &str)> {
        self.head_of[node].as_ref().map(|(h, d)| (*h, d.as_str()))
    }

    /// Children assigned so far, sorted by surface position.
    pub fn children_of(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn arc_count(&self) -> usize {
        self.head_of.iter().filter(|h| h.is_some()).count()
    }

    /// Arcs created so far as `(head, deprel, dependent)`.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, &str, usize)> + '_ {
        self.head_of
            .iter()
            .enumerate()
            .filter_map(|(dep, h)| h.as_ref().map(|(head, l)| (*head, l.as_str(), dep)))
    }

    /// Converts the arc set into a tree; valid only at a terminal
    /// configuration reached from `initial_config(n)`.
    pub fn into_tree(self) -> DependencyTree {
        let n = self.n;
        let arcs: Vec<(usize, String, usize)> = self
            .head_of
            .into_iter()
            .enumerate()
            .filter_map(|(dep, h)| h.map(|(head, l)| (head, l, dep)))
            .collect();
        DependencyTree::from_arcs(n, arcs).expect("terminal configuration always yields a tree")
    }

    fn attach(&mut self, head: usize, label: String, dep: usize) {
        self.head_of[dep] = Some((head, label));
        let pos = self.children[head].partition_point(|&c| c < dep);
        self.children[head].insert(pos, dep);
    }
}

/// True iff stack is `[0]` and the buffer is empty.
pub fn is_terminal(config: &Configuration) -> bool {
    config.stack == [0] && config.buffer.is_empty()
}

/// Transition kinds applicable at `config` under `system`. Never empty
/// for a non-terminal reachable configuration.
pub fn valid_transitions(
    config: &Configuration,
    system: TransitionSystem,
) -> Result<Vec<TransitionKind>, TransitionError> {
    if is_terminal(config) {
        return Err(TransitionError::Terminal);
    }
    let mut kinds = Vec::with_capacity(4);
    if !config.buffer.is_empty() {
        kinds.push(TransitionKind::Shift);
    }
    let depth = config.stack.len();
    // LEFT-ARC takes the head from the top and the dependent from below
    // it; the dependent must not be node 0, hence depth >= 3.
    if depth >= 3 {
        kinds.push(TransitionKind::LeftArc);
    }
    if depth >= 2 && *config.stack.last().unwrap() != 0 {
        kinds.push(TransitionKind::RightArc);
    }
    if system.admits_swap() && depth >= 3 {
        let below = config.stack[depth - 2];
        let top = config.stack[depth - 1];
        if 0 < below && below < top {
            kinds.push(TransitionKind::Swap);
        }
    }
    Ok(kinds)
}

/// Applies a transition, returning the successor configuration.
pub fn apply(config: &Configuration, t: &Transition) -> Result<Configuration, TransitionError> {
    let mut next = config.clone();
    let depth = config.stack.len();
    let fail = |cond: &str| Err(TransitionError::Precondition(t.to_string(), cond.into()));
    match t.kind {
        TransitionKind::Shift => {
            let Some(front) = next.buffer.pop_front() else {
                return fail("buffer is empty");
            };
            next.stack.push(front);
        }
        TransitionKind::LeftArc => {
            if depth < 3 {
                return fail("needs two stack items above node 0");
            }
            let top = next.stack.pop().unwrap();
            let below = next.stack.pop().unwrap();
            let label = t.label.clone().expect("LEFT-ARC carries a label");
            next.attach(top, label, below);
            next.stack.push(top);
        }
        TransitionKind::RightArc => {
            if depth < 2 {
                return fail("needs two stack items");
            }
            if *next.stack.last().unwrap() == 0 {
                return fail("top of stack is node 0");
            }
            let top = next.stack.pop().unwrap();
            let below = *next.stack.last().unwrap();
            let label = t.label.clone().expect("RIGHT-ARC carries a label");
            next.attach(below, label, top);
        }
        TransitionKind::Swap => {
            if depth < 3 {
                return fail("needs two stack items above node 0");
            }
            let top = next.stack.pop().unwrap();
            let below = next.stack.pop().unwrap();
            if !(0 < below && below < top) {
                next.stack.push(below);
                next.stack.push(top);
                return fail("requires 0 < below < top in surface order");
            }
            next.stack.push(top);
            next.buffer.push_front(below);
        }
    }
    Ok(next)
}

/// In-order traversal rank of each node under which the gold tree is
/// projective: children of each head are visited in surface order with
/// the head between its left and right children. Returned vector is
/// indexed by node (entry 0 unused, set to 0); projective trees map to
/// the identity.
pub fn projective_order(gold: &DependencyTree, n: usize) -> Vec<usize> {
    debug_assert_eq!(gold.len(), n);
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for dep in 1..=n {
        children[gold.head_of(dep)].push(dep);
    }
    for ch in &mut children {
        ch.sort_unstable();
    }
    let mut order = vec![0usize; n + 1];
    let mut rank = 0usize;
    // iterative in-order traversal from node 0
    let mut stack: Vec<(usize, bool)> = vec![(0, false)];
    while let Some((node, visited)) = stack.pop() {
        if visited {
            if node != 0 {
                rank += 1;
                order[node] = rank;
            }
            continue;
        }
        let (left, right): (Vec<usize>, Vec<usize>) =
            children[node].iter().partition(|&&c| c < node);
        // reverse push order so left children pop first
        for &c in right.iter().rev() {
            stack.push((c, false));
        }
        stack.push((node, true));
        for &c in left.iter().rev() {
            stack.push((c, false));
        }
    }
    order
}

/// Precomputed gold-tree context for the static oracle.
pub struct OracleContext {
    gold: DependencyTree,
    order: Vec<usize>,
    gold_dep_count: Vec<usize>,
    system: TransitionSystem,
}

impl OracleContext {
    pub fn new(gold: DependencyTree, system: TransitionSystem) -> Self {
        let n = gold.len();
        let order = projective_order(&gold, n);
        let mut gold_dep_count = vec![0usize; n + 1];
        for dep in 1..=n {
            gold_dep_count[gold.head_of(dep)] += 1;
        }
        OracleContext {
            gold,
            order,
            gold_dep_count,
            system,
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Static oracle: the correct next transition at `config` for the gold
/// tree in `ctx`. Eager-swap policy: SWAP fires as soon as the top two
/// stack items are inverted in projective order.
pub fn static_oracle(
    config: &Configuration,
    ctx: &OracleContext,
) -> Result<Transition, TransitionError> {
    let depth = config.stack.len();
    if depth >= 2 {
        let top = config.stack[depth - 1];
        let below = config.stack[depth - 2];
        if ctx.system.admits_swap() && depth >= 3 && below != 0 && ctx.order[below] > ctx.order[top]
        {
            return Ok(Transition::swap());
        }
        if depth >= 3
            && below != 0
            && ctx.gold.head_of(below) == top
            && config.children_of(below).len() == ctx.gold_dep_count[below]
        {
            return Ok(Transition::left_arc(ctx.gold.deprel_of(below)));
        }
        if top != 0
            && ctx.gold.head_of(top) == below
            && config.children_of(top).len() == ctx.gold_dep_count[top]
        {
            return Ok(Transition::right_arc(ctx.gold.deprel_of(top)));
        }
    }
    if config.buffer.is_empty() {
        return Err(TransitionError::OracleFailure(
            "SHIFT demanded with an empty buffer (tree unreachable for this system)".into(),
        ));
    }
    Ok(Transition::shift())
}

/// Replays the oracle from the initial configuration, yielding the full
/// gold transition sequence with its pre-transition configurations.
pub fn oracle_sequence(
    gold: &DependencyTree,
    system: TransitionSystem,
) -> Result<Vec<(Configuration, Transition)>, TransitionError> {
    let ctx = OracleContext::new(gold.clone(), system);
    let n = gold.len();
    let mut config = initial_config(n);
    let mut steps = Vec::with_capacity(2 * n);
    let bound = 2 * n + n * (n.saturating_sub(1)) / 2 + 1;
    while !is_terminal(&config) {
        if steps.len() > bound {
            return Err(TransitionError::OracleFailure(
                "oracle exceeded the transition bound".into(),
            ));
        }
        let t = static_oracle(&config, &ctx)?;
        let next = apply(&config, &t)?;
        steps.push((config, t));
        config = next;
    }
    Ok(steps)
}

/// One line of the optional transition-trace dump.
pub fn trace_line(step: usize, config: &Configuration, t: &Transition) -> String {
    let stack: Vec<String> = config.stack.iter().map(|n| n.to_string()).collect();
    let buffer: Vec<String> = config.buffer.iter().map(|n| n.to_string()).collect();
    format!(
        "STEP {step} | [{}] | [{}] | {t}",
        stack.join(" "),
        buffer.join(" ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::DependencyTree;

    fn config_with_stack(stack: Vec<usize>, buffer: Vec<usize>, n: usize) -> Configuration {
        Configuration {
            stack,
            buffer: buffer.into(),
            head_of: vec![None; n + 1],
            children: vec![Vec::new(); n + 1],
            n,
        }
    }

    #[test]
    fn initial_config_shape() {
        let c = initial_config(3);
        assert_eq!(c.stack(), &[0]);
        assert_eq!(c.buffer().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(c.arc_count(), 0);

        assert!(is_terminal(&initial_config(0)));
        assert_eq!(initial_config(1).buffer().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn terminal_detection() {
        assert!(is_terminal(&config_with_stack(vec![0], vec![], 2)));
        assert!(!is_terminal(&config_with_stack(vec![0, 2], vec![], 2)));
        assert!(!is_terminal(&config_with_stack(vec![0], vec![1], 1)));
    }

    #[test]
    fn valid_transitions_initial() {
        let c = initial_config(2);
        let kinds = valid_transitions(&c, TransitionSystem::ArcStandard).unwrap();
        assert_eq!(kinds, vec![TransitionKind::Shift]);
    }

    #[test]
    fn valid_transitions_two_above_root() {
        let c = config_with_stack(vec![0, 1, 2], vec![], 2);
        let kinds = valid_transitions(&c, TransitionSystem::ArcStandard).unwrap();
        assert_eq!(
            kinds,
            vec![TransitionKind::LeftArc, TransitionKind::RightArc]
        );
    }

    #[test]
    fn swap_excluded_when_top_two_inverted() {
        // top-two are below=2, top=1: 2 > 1 so SWAP is not applicable
        let c = config_with_stack(vec![0, 2, 1], vec![], 2);
        let kinds = valid_transitions(&c, TransitionSystem::ArcStandardSwap).unwrap();
        assert_eq!(
            kinds,
            vec![TransitionKind::LeftArc, TransitionKind::RightArc]
        );
    }

    #[test]
    fn swap_included_when_in_order() {
        let c = config_with_stack(vec![0, 1, 2], vec![3], 3);
        let kinds = valid_transitions(&c, TransitionSystem::ArcStandardSwap).unwrap();
        assert!(kinds.contains(&TransitionKind::Swap));
    }

    #[test]
    fn valid_transitions_rejects_terminal() {
        let err = valid_transitions(&initial_config(0), TransitionSystem::ArcStandard);
        assert!(matches!(err, Err(TransitionError::Terminal)));
    }

    #[test]
    fn apply_left_arc() {
        let c = config_with_stack(vec![0, 1, 2], vec![], 2);
        let next = apply(&c, &Transition::left_arc("nsubj")).unwrap();
        assert_eq!(next.stack(), &[0, 2]);
        assert_eq!(next.head_of(1), Some((2, "nsubj")));
        // input untouched
        assert_eq!(c.stack(), &[0, 1, 2]);
        assert_eq!(c.arc_count(), 0);
    }

    #[test]
    fn apply_shift() {
        let c = initial_config(1);
        let next = apply(&c, &Transition::shift()).unwrap();
        assert_eq!(next.stack(), &[0, 1]);
        assert_eq!(next.buffer_len(), 0);
    }

    #[test]
    fn apply_swap() {
        let c = config_with_stack(vec![0, 1, 2], vec![3], 3);
        let next = apply(&c, &Transition::swap()).unwrap();
        assert_eq!(next.stack(), &[0, 2]);
        assert_eq!(next.buffer().collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn apply_rejects_invalid() {
        let c = initial_config(2);
        let err = apply(&c, &Transition::left_arc("x"));
        assert!(matches!(err, Err(TransitionError::Precondition(..))));
        let c2 = config_with_stack(vec![0], vec![], 0);
        assert!(apply(&c2, &Transition::shift()).is_err());
    }

    #[test]
    fn left_arc_never_targets_root() {
        // depth 2 means the would-be dependent is node 0
        let c = config_with_stack(vec![0, 1], vec![], 1);
        let kinds = valid_transitions(&c, TransitionSystem::ArcStandard).unwrap();
        assert!(!kinds.contains(&TransitionKind::LeftArc));
    }

    fn chain_tree(n: usize) -> DependencyTree {
        // head(i) = i+1, head(n) = 0
        DependencyTree::from_arcs(
            n,
            (1..=n).map(|i| (if i == n { 0 } else { i + 1 }, "dep", i)),
        )
        .unwrap()
    }

    #[test]
    fn projective_order_is_identity_for_projective_trees() {
        let tree = chain_tree(5);
        assert_eq!(projective_order(&tree, 5), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn projective_order_repairs_crossing_tree() {
        let tree =
            DependencyTree::from_arcs(4, [(3, "a", 1), (4, "b", 2), (0, "root", 3), (3, "c", 4)])
                .unwrap();
        let order = projective_order(&tree, 4);
        // node 2 must move after node 3 for the tree to become projective
        assert!(order[2] > order[3]);
        // reordering by `order` must make the tree projective: check by
        // relabeling node positions
        let mut pos_of = [0usize; 5];
        pos_of[1..=4].copy_from_slice(&order[1..=4]);
        let arcs: Vec<(usize, String, usize)> = (1..=4)
            .map(|d| {
                let h = tree.head_of(d);
                (
                    if h == 0 { 0 } else { pos_of[h] },
                    tree.deprel_of(d).to_string(),
                    pos_of[d],
                )
            })
            .collect();
        let reordered = DependencyTree::from_arcs(4, arcs).unwrap();
        assert!(crate::conllu::is_projective(&reordered, 4));
    }

    #[test]
    fn projective_order_singleton() {
        let tree = DependencyTree::from_arcs(1, [(0, "root", 1)]).unwrap();
        assert_eq!(projective_order(&tree, 1), vec![0, 1]);
    }

    #[test]
    fn oracle_left_arc_when_dependents_collected() {
        let gold = DependencyTree::from_arcs(2, [(2, "amod", 1), (0, "root", 2)]).unwrap();
        let ctx = OracleContext::new(gold, TransitionSystem::ArcStandard);
        let c = config_with_stack(vec![0, 1, 2], vec![], 2);
        let t = static_oracle(&c, &ctx).unwrap();
        assert_eq!(t, Transition::left_arc("amod"));
    }

    fn replay(gold: &DependencyTree, system: TransitionSystem) -> DependencyTree {
        let steps = oracle_sequence(gold, system).unwrap();
        let mut config = initial_config(gold.len());
        for (_, t) in &steps {
            config = apply(&config, t).unwrap();
        }
        assert!(is_terminal(&config));
        config.into_tree()
    }

    #[test]
    fn oracle_round_trip_projective() {
        let gold = chain_tree(6);
        assert_eq!(replay(&gold, TransitionSystem::ArcStandard), gold);
    }

    #[test]
    fn oracle_round_trip_non_projective_swap() {
        let gold =
            DependencyTree::from_arcs(4, [(3, "a", 1), (4, "b", 2), (0, "root", 3), (3, "c", 4)])
                .unwrap();
        let steps = oracle_sequence(&gold, TransitionSystem::ArcStandardSwap).unwrap();
        let swaps = steps
            .iter()
            .filter(|(_, t)| t.kind == TransitionKind::Swap)
            .count();
        assert!(swaps >= 1);
        assert_eq!(steps.len(), 2 * 4 + 2 * swaps);
        assert_eq!(replay(&gold, TransitionSystem::ArcStandardSwap), gold);
    }

    #[test]
    fn swap_oracle_matches_arc_standard_on_projective_input() {
        let gold = chain_tree(7);
        let a: Vec<Transition> = oracle_sequence(&gold, TransitionSystem::ArcStandard)
            .unwrap()
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        let b: Vec<Transition> = oracle_sequence(&gold, TransitionSystem::ArcStandardSwap)
            .unwrap()
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn arc_standard_oracle_emits_2n_transitions() {
        for n in 1..=8 {
            let gold = chain_tree(n);
            let steps = oracle_sequence(&gold, TransitionSystem::ArcStandard).unwrap();
            assert_eq!(steps.len(), 2 * n);
        }
    }

    #[test]
    fn oracle_fails_on_non_projective_tree_without_swap() {
        let gold =
            DependencyTree::from_arcs(4, [(3, "a", 1), (4, "b", 2), (0, "root", 3), (3, "c", 4)])
                .unwrap();
        assert!(oracle_sequence(&gold, TransitionSystem::ArcStandard).is_err());
    }

    #[test]
    fn trace_line_format() {
        let c = initial_config(2);
        assert_eq!(
            trace_line(0, &c, &Transition::shift()),
            "STEP 0 | [0] | [1 2] | SHIFT"
        );
    }
}
