//! LAS/UAS scoring, single-thread throughput measurement and the
//! stratified-shuffling significance comparator.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{DependencyTree, Sentence};
use crate::trainer::Parser;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("empty test set")]
    Empty,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScoreReport {
    pub las: f64,
    pub uas: f64,
    pub token_count: usize,
    pub sentence_count: usize,
}

impl ScoreReport {
    pub fn to_kv_text(&self) -> String {
        format!(
            "las\t{:.4}\nuas\t{:.4}\ntokens\t{}\nsentences\t{}\n",
            self.las, self.uas, self.token_count, self.sentence_count
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThroughputReport {
    /// Thousands of tokens parsed per second, mean of the runs.
    pub kt_per_sec: f64,
    pub per_run: Vec<f64>,
    pub token_count: usize,
}

impl ThroughputReport {
    pub fn to_kv_text(&self) -> String {
        let runs: Vec<String> = self.per_run.iter().map(|r| format!("{r:.4}")).collect();
        format!(
            "kt_per_sec\t{:.4}\nper_run\t{}\ntokens\t{}\n",
            self.kt_per_sec,
            runs.join(","),
            self.token_count
        )
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub observed_diff: f64,
    pub p_value: f64,
    pub iterations: usize,
    /// p < 0.05
    pub significant: bool,
}

impl SignificanceReport {
    pub fn to_kv_text(&self) -> String {
        format!(
            "observed_diff\t{:.4}\np_value\t{:.6}\niterations\t{}\nsignificant\t{}\n",
            self.observed_diff, self.p_value, self.iterations, self.significant
        )
    }
}

fn check_alignment(
    gold: &[Sentence],
    predicted: &[DependencyTree],
    what: &str,
) -> Result<(), EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::Misaligned(format!(
            "{} gold sentences vs {} {what} trees",
            gold.len(),
            predicted.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::Misaligned(format!(
                "sentence {}: {} tokens vs {} in {what}",
                i + 1,
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

/// Per-sentence correct-attachment counts.
fn sentence_counts(gold: &Sentence, predicted: &DependencyTree) -> (usize, usize) {
    let mut las = 0;
    let mut uas = 0;
    for tok in &gold.tokens {
        if predicted.head_of(tok.id) == tok.gold_head {
            uas += 1;
            if predicted.deprel_of(tok.id) == tok.gold_deprel {
                las += 1;
            }
        }
    }
    (las, uas)
}

/// Labeled and unlabeled attachment scores over all tokens, punctuation
/// included.
pub fn score(gold: &[Sentence], predicted: &[DependencyTree]) -> Result<ScoreReport, EvalError> {
    check_alignment(gold, predicted, "predicted")?;
    let mut las = 0usize;
    let mut uas = 0usize;
    let mut tokens = 0usize;
    for (g, p) in gold.iter().zip(predicted) {
        let (l, u) = sentence_counts(g, p);
        las += l;
        uas += u;
        tokens += g.len();
    }
    if tokens == 0 {
        return Err(EvalError::Empty);
    }
    Ok(ScoreReport {
        las: 100.0 * las as f64 / tokens as f64,
        uas: 100.0 * uas as f64 / tokens as f64,
        token_count: tokens,
        sentence_count: gold.len(),
    })
}

/// Parses the test set `runs` times end-to-end on the calling thread
/// (feature extraction, forward passes and transition application; no
/// file I/O) after one untimed warm-up pass, and reports thousands of
/// tokens per second averaged over the runs.
pub fn throughput(
    parser: &Parser<'_>,
    sentences: &[Sentence],
    runs: usize,
) -> Result<ThroughputReport, EvalError> {
    if sentences.is_empty() || runs == 0 {
        return Err(EvalError::Empty);
    }
    let token_count: usize = sentences.iter().map(|s| s.len()).sum();
    // warm-up pass excludes one-time allocation effects
    for sent in sentences {
        std::hint::black_box(parser.parse(sent));
    }
    let mut per_run = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        for sent in sentences {
            std::hint::black_box(parser.parse(sent));
        }
        let secs = start.elapsed().as_secs_f64();
        per_run.push(token_count as f64 / secs / 1000.0);
    }
    let kt_per_sec = per_run.iter().sum::<f64>() / per_run.len() as f64;
    Ok(ThroughputReport {
        kt_per_sec,
        per_run,
        token_count,
    })
}

/// Stratified-shuffling randomization test on the LAS difference.
///
/// Each iteration independently swaps the two systems' outputs on each
/// sentence with probability 1/2 and recomputes the absolute LAS
/// difference; `p = (count_geq + 1) / (iterations + 1)` where
/// `count_geq` counts shuffled differences at least as large as the
/// observed one.
pub fn significance<R: Rng>(
    gold: &[Sentence],
    outputs_a: &[DependencyTree],
    outputs_b: &[DependencyTree],
    iterations: usize,
    rng: &mut R,
) -> Result<SignificanceReport, EvalError> {
    check_alignment(gold, outputs_a, "system-a")?;
    check_alignment(gold, outputs_b, "system-b")?;
    let total_tokens: usize = gold.iter().map(|s| s.len()).sum();
    if total_tokens == 0 {
        return Err(EvalError::Empty);
    }
    let counts: Vec<(usize, usize)> = gold
        .iter()
        .zip(outputs_a.iter().zip(outputs_b))
        .map(|(g, (a, b))| (sentence_counts(g, a).0, sentence_counts(g, b).0))
        .collect();
    let las = |sum: usize| 100.0 * sum as f64 / total_tokens as f64;
    let sum_a: usize = counts.iter().map(|c| c.0).sum();
    let sum_b: usize = counts.iter().map(|c| c.1).sum();
    let observed_diff = (las(sum_a) - las(sum_b)).abs();

    let mut count_geq = 0usize;
    for _ in 0..iterations {
        let mut sa = 0usize;
        let mut sb = 0usize;
        for &(a, b) in &counts {
            if rng.gen::<bool>() {
                sa += b;
                sb += a;
            } else {
                sa += a;
                sb += b;
            }
        }
        if (las(sa) - las(sb)).abs() >= observed_diff {
            count_geq += 1;
        }
    }
    let p_value = (count_geq + 1) as f64 / (iterations + 1) as f64;
    Ok(SignificanceReport {
        observed_diff,
        p_value,
        iterations,
        significant: p_value < 0.05,
    })
}
