//! Experiment orchestration: training runs with manifests, evaluation
//! rows with significance classes, and the system × template ×
//! reduction grid.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conllu::{parse_conllu, write_conllu, DependencyTree, Sentence};
use crate::eval::{score, significance, throughput, EvalError, ScoreReport, ThroughputReport};
use crate::features::{input_dim, FeatureTemplate, Vocabulary};
use crate::nn::{
    load_model_file, reduced_sizes, save_model_file, ModelParams, NnError, SizeConfig,
};
use crate::trainer::{train, Parser, SkipReport, TrainConfig, TrainError};
use crate::transition::TransitionSystem;

/// Serializes throughput measurements across grid workers so the timed
/// region never shares the machine with another timed region.
static TIMING_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Conllu(#[from] crate::conllu::ConlluError),
    #[error(transparent)]
    Vocab(#[from] crate::features::VocabError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Other(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_treebank(path: &Path) -> Result<Vec<Sentence>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_conllu(&text)?)
}

/// One training/evaluation cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub train_path: PathBuf,
    pub dev_path: Option<PathBuf>,
    pub system: TransitionSystem,
    pub template: FeatureTemplate,
    pub reduction_percent: u8,
    pub config: TrainConfig,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn new(
        train_path: PathBuf,
        system: TransitionSystem,
        template: FeatureTemplate,
        reduction_percent: u8,
        out_dir: PathBuf,
    ) -> Result<ExperimentSpec, ExperimentError> {
        let mut config = TrainConfig::new(system, template);
        config.sizes = reduced_sizes(&SizeConfig::default(), reduction_percent)?;
        Ok(ExperimentSpec {
            train_path,
            dev_path: None,
            system,
            template,
            reduction_percent,
            config,
            out_dir,
        })
    }
}

/// Sidecar manifest recording the full configuration of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: TrainConfig,
    pub reduction_percent: u8,
    pub input_dim: usize,
    pub n_transitions: usize,
    /// Static-oracle variant baked into training data generation.
    pub oracle_variant: String,
    /// Shuffling granularity per epoch.
    pub shuffle: String,
    pub skips: SkipReport,
    pub epochs: Vec<crate::trainer::EpochLog>,
    pub dev_las: Option<f64>,
}

pub struct TrainArtifacts {
    pub model_path: PathBuf,
    pub vocab_path: PathBuf,
    pub manifest: Manifest,
}

/// Trains per the spec and writes `model.bin`, `vocab.txt`,
/// `manifest.json` and `runlog.tsv` into the output directory.
pub fn cmd_train(spec: &ExperimentSpec) -> Result<TrainArtifacts, ExperimentError> {
    let sentences = read_treebank(&spec.train_path)?;
    let output = train(&sentences, &spec.config)?;

    fs::create_dir_all(&spec.out_dir).map_err(io_err(&spec.out_dir))?;
    let model_path = spec.out_dir.join("model.bin");
    let vocab_path = spec.out_dir.join("vocab.txt");
    save_model_file(&model_path, &output.params)?;
    fs::write(&vocab_path, output.vocab.to_text()).map_err(io_err(&vocab_path))?;

    let runlog_path = spec.out_dir.join("runlog.tsv");
    let mut runlog = String::from("epoch\tlr\tmean_loss\ttrain_acc\n");
    for e in &output.epochs {
        runlog.push_str(&e.to_tsv());
        runlog.push('\n');
    }
    fs::write(&runlog_path, runlog).map_err(io_err(&runlog_path))?;

    // dev split is monitoring only, never selection
    let dev_las = match &spec.dev_path {
        Some(path) => {
            let dev = read_treebank(path)?;
            let parser = Parser::new(&output.params, &output.vocab)?;
            let trees: Vec<DependencyTree> = dev.iter().map(|s| parser.parse(s)).collect();
            Some(score(&dev, &trees)?.las)
        }
        None => None,
    };

    let manifest = Manifest {
        config: spec.config.clone(),
        reduction_percent: spec.reduction_percent,
        input_dim: input_dim(spec.template, &spec.config.sizes),
        n_transitions: output.params.meta.n_transitions,
        oracle_variant: "eager-swap".to_string(),
        shuffle: "instance-level".to_string(),
        skips: output.skips,
        epochs: output.epochs,
        dev_las,
    };
    let manifest_path = spec.out_dir.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(io_err(&manifest_path))?;

    Ok(TrainArtifacts {
        model_path,
        vocab_path,
        manifest,
    })
}

pub fn load_model_dir(dir: &Path) -> Result<(ModelParams, Vocabulary), ExperimentError> {
    let params = load_model_file(&dir.join("model.bin"))?;
    let vocab_text =
        fs::read_to_string(dir.join("vocab.txt")).map_err(io_err(&dir.join("vocab.txt")))?;
    let vocab = Vocabulary::from_text(&vocab_text)?;
    if params.meta.vocab_hash != vocab.hash() {
        return Err(ExperimentError::Train(TrainError::VocabHashMismatch));
    }
    Ok((params, vocab))
}

/// Four-way significance class used in the result tables: significant
/// gain/loss vs non-significant gain/loss relative to a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignClass {
    GainSig,
    Gain,
    Loss,
    LossSig,
}

impl SignClass {
    pub fn marker(self) -> &'static str {
        match self {
            SignClass::GainSig => "++",
            SignClass::Gain => "+",
            SignClass::Loss => "-",
            SignClass::LossSig => "--",
        }
    }

    pub fn classify(diff: f64, significant: bool) -> SignClass {
        match (diff >= 0.0, significant) {
            (true, true) => SignClass::GainSig,
            (true, false) => SignClass::Gain,
            (false, false) => SignClass::Loss,
            (false, true) => SignClass::LossSig,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub treebank: String,
    pub system: TransitionSystem,
    pub template: FeatureTemplate,
    pub reduction_percent: u8,
    pub las: f64,
    pub uas: f64,
    pub kt_per_sec: f64,
    pub p_value: Option<f64>,
    pub class: Option<SignClass>,
    pub error: Option<String>,
}

impl ResultRow {
    fn error_row(
        treebank: String,
        system: TransitionSystem,
        template: FeatureTemplate,
        reduction_percent: u8,
        error: String,
    ) -> ResultRow {
        ResultRow {
            treebank,
            system,
            template,
            reduction_percent,
            las: f64::NAN,
            uas: f64::NAN,
            kt_per_sec: f64::NAN,
            p_value: None,
            class: None,
            error: Some(error),
        }
    }
}

pub struct EvalOutcome {
    pub row: ResultRow,
    pub score: ScoreReport,
    pub throughput: ThroughputReport,
    pub predicted_path: PathBuf,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub runs: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            runs: 5,
            iterations: 10_000,
            seed: 1,
        }
    }
}

/// Parses the test set with a trained model, writes the predictions,
/// scores them, measures throughput and (when baseline outputs are
/// given) runs the significance comparator.
pub fn cmd_eval(
    model_dir: &Path,
    test_path: &Path,
    baseline_outputs: Option<&Path>,
    opts: &EvalOptions,
) -> Result<EvalOutcome, ExperimentError> {
    let (params, vocab) = load_model_dir(model_dir)?;
    let test = read_treebank(test_path)?;
    let parser = Parser::new(&params, &vocab)?;

    let trees: Vec<DependencyTree> = test.iter().map(|s| parser.parse(s)).collect();
    let predicted_path = model_dir.join("predicted.conllu");
    fs::write(&predicted_path, write_conllu(&test, Some(&trees))?)
        .map_err(io_err(&predicted_path))?;

    let score_report = score(&test, &trees)?;
    let tp = {
        let _guard = TIMING_LOCK.lock().unwrap();
        throughput(&parser, &test, opts.runs)?
    };

    let (p_value, class) = match baseline_outputs {
        Some(path) => {
            let baseline_sents = read_treebank(path)?;
            let baseline_trees: Vec<DependencyTree> =
                baseline_sents.iter().map(|s| s.gold_tree()).collect();
            let baseline_score = score(&test, &baseline_trees)?;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let sig = significance(&test, &trees, &baseline_trees, opts.iterations, &mut rng)?;
            let diff = score_report.las - baseline_score.las;
            (
                Some(sig.p_value),
                Some(SignClass::classify(diff, sig.significant)),
            )
        }
        None => (None, None),
    };

    let treebank = test_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "test".to_string());
    let row = ResultRow {
        treebank,
        system: params.meta.system,
        template: params.meta.template,
        reduction_percent: params.meta.sizes.reduction_percent,
        las: score_report.las,
        uas: score_report.uas,
        kt_per_sec: tp.kt_per_sec,
        p_value,
        class,
        error: None,
    };
    Ok(EvalOutcome {
        row,
        score: score_report,
        throughput: tp,
        predicted_path,
    })
}

/// Grid definition: the cross product of systems, templates and
/// reduction levels over one treebank.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub dev_path: Option<PathBuf>,
    pub systems: Vec<TransitionSystem>,
    pub templates: Vec<FeatureTemplate>,
    pub reductions: Vec<u8>,
    pub base_config: TrainConfig,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub eval: EvalOptions,
}

/// Stable per-cell seed: hash of the cell descriptor and the master
/// seed, so cells are independent yet reproducible.
pub fn cell_seed(
    master_seed: u64,
    treebank: &str,
    system: TransitionSystem,
    template: FeatureTemplate,
    reduction: u8,
) -> u64 {
    let descriptor = format!("{master_seed}|{treebank}|{system}|{template}|{reduction}");
    let digest = Sha256::digest(descriptor.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn cell_dir(
    out_dir: &Path,
    system: TransitionSystem,
    template: FeatureTemplate,
    red: u8,
) -> PathBuf {
    out_dir.join(format!("{system}_{template}_r{red}"))
}

fn run_cell(
    grid: &GridSpec,
    system: TransitionSystem,
    template: FeatureTemplate,
    red: u8,
) -> Result<EvalOutcome, ExperimentError> {
    let dir = cell_dir(&grid.out_dir, system, template, red);
    let mut spec =
        ExperimentSpec::new(grid.train_path.clone(), system, template, red, dir.clone())?;
    spec.dev_path = grid.dev_path.clone();
    spec.config = grid.base_config.clone();
    spec.config.system = system;
    spec.config.template = template;
    spec.config.sizes = reduced_sizes(&SizeConfig::default(), red)?;
    let treebank = grid
        .train_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    spec.config.seed = cell_seed(grid.master_seed, &treebank, system, template, red);
    cmd_train(&spec)?;
    cmd_eval(&dir, &grid.test_path, None, &grid.eval)
}

/// Runs every cell of the grid (cells that fail are recorded as ERROR
/// rows and the grid continues) and compares each cell against the
/// baseline cell (standard template, 0% reduction) of its system when
/// that baseline is part of the grid.
pub fn cmd_grid(grid: &GridSpec) -> Result<Vec<ResultRow>, ExperimentError> {
    fs::create_dir_all(&grid.out_dir).map_err(io_err(&grid.out_dir))?;
    let mut cells: Vec<(TransitionSystem, FeatureTemplate, u8)> = Vec::new();
    for &system in &grid.systems {
        for &template in &grid.templates {
            for &red in &grid.reductions {
                cells.push((system, template, red));
            }
        }
    }

    let workers: usize = std::env::var("FFDP_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1);

    let results: Vec<(usize, Result<EvalOutcome, ExperimentError>)> = if workers <= 1 {
        cells
            .iter()
            .enumerate()
            .map(|(i, &(s, t, r))| (i, run_cell(grid, s, t, r)))
            .collect()
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..workers.min(cells.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= cells.len() {
                        break;
                    }
                    let (s, t, r) = cells[i];
                    let outcome = run_cell(grid, s, t, r);
                    results.lock().unwrap().push((i, outcome));
                });
            }
        });
        let mut results = results.into_inner().unwrap();
        results.sort_by_key(|(i, _)| *i);
        results
    };

    let treebank = grid
        .test_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut rows = Vec::with_capacity(cells.len());
    for ((system, template, red), (_, outcome)) in cells.iter().zip(results) {
        match outcome {
            Ok(o) => rows.push(o.row),
            Err(e) => rows.push(ResultRow::error_row(
                treebank.clone(),
                *system,
                *template,
                *red,
                e.to_string(),
            )),
        }
    }

    // significance against the per-system baseline cell, when present
    let test = read_treebank(&grid.test_path)?;
    for &system in &grid.systems {
        let baseline_idx = cells
            .iter()
            .position(|&(s, t, r)| s == system && t == FeatureTemplate::Standard && r == 0);
        let Some(bi) = baseline_idx else { continue };
        if rows[bi].error.is_some() {
            continue;
        }
        let baseline_trees = read_predictions(&cell_dir(
            &grid.out_dir,
            system,
            FeatureTemplate::Standard,
            0,
        ))?;
        let baseline_las = rows[bi].las;
        for (i, &(s, t, r)) in cells.iter().enumerate() {
            if s != system || i == bi || rows[i].error.is_some() {
                continue;
            }
            let trees = read_predictions(&cell_dir(&grid.out_dir, s, t, r))?;
            let mut rng =
                ChaCha8Rng::seed_from_u64(cell_seed(grid.master_seed, "significance", s, t, r));
            let sig = significance(
                &test,
                &trees,
                &baseline_trees,
                grid.eval.iterations,
                &mut rng,
            )?;
            rows[i].p_value = Some(sig.p_value);
            rows[i].class = Some(SignClass::classify(
                rows[i].las - baseline_las,
                sig.significant,
            ));
        }
    }

    // structured results, one document per row
    let jsonl_path = grid.out_dir.join("results.jsonl");
    fs::write(&jsonl_path, rows_to_jsonl(&rows)).map_err(io_err(&jsonl_path))?;
    let table_path = grid.out_dir.join("results.txt");
    fs::write(&table_path, render_table(&rows)).map_err(io_err(&table_path))?;
    Ok(rows)
}

fn read_predictions(dir: &Path) -> Result<Vec<DependencyTree>, ExperimentError> {
    let sents = read_treebank(&dir.join("predicted.conllu"))?;
    Ok(sents.iter().map(|s| s.gold_tree()).collect())
}

pub fn rows_to_jsonl(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    out
}

pub fn rows_from_jsonl(text: &str) -> Result<Vec<ResultRow>, ExperimentError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ExperimentError::Other(e.to_string())))
        .collect()
}

/// Plain-text results table, one row per cell.
pub fn render_table(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<16} {:<12} {:<9} {:>6} {:>8} {:>8} {:>8} {:>9} {:>5}",
        "treebank", "system", "template", "reduce", "LAS", "UAS", "kt/s", "p", "sig"
    )
    .unwrap();
    for row in rows {
        if let Some(err) = &row.error {
            writeln!(
                out,
                "{:<16} {:<12} {:<9} {:>6} ERROR: {err}",
                row.treebank,
                row.system.to_string(),
                row.template.to_string(),
                row.reduction_percent,
            )
            .unwrap();
            continue;
        }
        writeln!(
            out,
            "{:<16} {:<12} {:<9} {:>6} {:>8.2} {:>8.2} {:>8.3} {:>9} {:>5}",
            row.treebank,
            row.system.to_string(),
            row.template.to_string(),
            row.reduction_percent,
            row.las,
            row.uas,
            row.kt_per_sec,
            row.p_value
                .map(|p| format!("{p:.4}"))
                .unwrap_or_else(|| "-".to_string()),
            row.class.map(|c| c.marker()).unwrap_or(""),
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_class_rules() {
        assert_eq!(SignClass::classify(0.5, true), SignClass::GainSig);
        assert_eq!(SignClass::classify(0.5, false), SignClass::Gain);
        assert_eq!(SignClass::classify(-0.5, false), SignClass::Loss);
        assert_eq!(SignClass::classify(-0.5, true), SignClass::LossSig);
        assert_eq!(SignClass::classify(0.0, false), SignClass::Gain);
    }

    #[test]
    fn cell_seed_is_stable_and_distinct() {
        let a = cell_seed(
            1,
            "tb",
            TransitionSystem::ArcStandard,
            FeatureTemplate::Standard,
            0,
        );
        let b = cell_seed(
            1,
            "tb",
            TransitionSystem::ArcStandard,
            FeatureTemplate::Standard,
            0,
        );
        assert_eq!(a, b);
        let c = cell_seed(
            1,
            "tb",
            TransitionSystem::ArcStandard,
            FeatureTemplate::NoGd,
            0,
        );
        assert_ne!(a, c);
        let d = cell_seed(
            2,
            "tb",
            TransitionSystem::ArcStandard,
            FeatureTemplate::Standard,
            0,
        );
        assert_ne!(a, d);
    }

    #[test]
    fn table_round_trips_through_jsonl() {
        let rows = vec![ResultRow {
            treebank: "toy".into(),
            system: TransitionSystem::ArcStandard,
            template: FeatureTemplate::NoGd,
            reduction_percent: 20,
            las: 81.25,
            uas: 84.0,
            kt_per_sec: 3.7,
            p_value: Some(0.21),
            class: Some(SignClass::Loss),
            error: None,
        }];
        let text = rows_to_jsonl(&rows);
        let parsed = rows_from_jsonl(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].las, rows[0].las);
        assert_eq!(parsed[0].class, rows[0].class);
        // rendering includes the row
        let table = render_table(&rows);
        assert!(table.contains("no-gd"));
        assert!(table.contains("81.25"));
    }

    #[test]
    fn empty_grid_renders_header_only() {
        let table = render_table(&[]);
        assert_eq!(table.lines().count(), 1);
    }
}
