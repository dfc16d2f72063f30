//! Command-line front end: training, parsing, evaluation, throughput
//! benchmarking, significance comparison and the experiment grid.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser as ClapParser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ffdp::conllu::{write_conllu, DependencyTree};
use ffdp::eval::{score, significance, throughput};
use ffdp::experiments::{
    cmd_eval, cmd_grid, cmd_train, load_model_dir, read_treebank, render_table, EvalOptions,
    ExperimentError, ExperimentSpec, GridSpec,
};
use ffdp::features::FeatureTemplate;
use ffdp::nn::{reduced_sizes, SizeConfig};
use ffdp::trainer::TrainConfig;
use ffdp::transition::TransitionSystem;

#[derive(ClapParser)]
#[command(
    name = "ffdp",
    version,
    about = "Feed-forward transition-based dependency parser"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_system(s: &str) -> Result<TransitionSystem, String> {
    match s {
        "arc-standard" => Ok(TransitionSystem::ArcStandard),
        "swap" => Ok(TransitionSystem::ArcStandardSwap),
        _ => Err(format!(
            "unknown system {s:?} (expected arc-standard or swap)"
        )),
    }
}

fn parse_template(s: &str) -> Result<FeatureTemplate, String> {
    match s {
        "standard" => Ok(FeatureTemplate::Standard),
        "no-gd" => Ok(FeatureTemplate::NoGd),
        "no-gd-d" => Ok(FeatureTemplate::NoGdD),
        _ => Err(format!(
            "unknown template {s:?} (expected standard, no-gd or no-gd-d)"
        )),
    }
}

fn parse_reduce(s: &str) -> Result<u8, String> {
    let v: u8 = s.parse().map_err(|_| format!("invalid percentage {s:?}"))?;
    if v <= 50 && v.is_multiple_of(10) {
        Ok(v)
    } else {
        Err(format!(
            "reduction must be one of 0,10,20,30,40,50 (got {v})"
        ))
    }
}

#[derive(Args)]
struct TrainOpts {
    /// Transition system: arc-standard or swap
    #[arg(long, default_value = "arc-standard", value_parser = parse_system)]
    system: TransitionSystem,
    /// Feature template: standard, no-gd or no-gd-d
    #[arg(long, default_value = "standard", value_parser = parse_template)]
    template: FeatureTemplate,
    /// Embedding-size reduction in percent (0..50 in steps of 10)
    #[arg(long, default_value_t = 0, value_parser = parse_reduce)]
    reduce: u8,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Mini-batch size
    #[arg(long, default_value_t = 10)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Hidden layer width
    #[arg(long, default_value_t = 200)]
    hidden: usize,
}

impl TrainOpts {
    fn to_config(&self) -> Result<TrainConfig, ExperimentError> {
        let mut config = TrainConfig::new(self.system, self.template);
        config.sizes = reduced_sizes(&SizeConfig::default(), self.reduce)?;
        config.epochs = self.epochs;
        config.batch_size = self.batch;
        config.seed = self.seed;
        config.hidden = self.hidden;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write model.bin, vocab.txt, manifest.json and
    /// runlog.tsv into the output directory
    Train {
        /// Training treebank (CoNLL-U)
        train: PathBuf,
        /// Held-out split scored after training (monitoring only)
        #[arg(long)]
        dev: Option<PathBuf>,
        #[command(flatten)]
        opts: TrainOpts,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a treebank with a trained model and emit CoNLL-U
    Parse {
        /// Model directory (from `train`)
        #[arg(long)]
        model: PathBuf,
        /// Input treebank (CoNLL-U; HEAD/DEPREL may be arbitrary)
        input: PathBuf,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a trained model on a test set (LAS/UAS, throughput, and a
    /// significance class when a baseline output file is given)
    Eval {
        #[arg(long)]
        model: PathBuf,
        test: PathBuf,
        /// Baseline system outputs (CoNLL-U predictions) to compare against
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Timed passes over the test set
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Shuffling iterations for the significance test
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Measure parsing throughput (thousands of tokens per second)
    Bench {
        #[arg(long)]
        model: PathBuf,
        test: PathBuf,
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
    /// Compare two systems' outputs on a gold treebank with the
    /// stratified-shuffling significance test
    Compare {
        /// Gold treebank
        gold: PathBuf,
        /// Outputs of system A (CoNLL-U predictions)
        a: PathBuf,
        /// Outputs of system B (CoNLL-U predictions)
        b: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train and evaluate every system × template × reduction cell and
    /// print the result table
    Grid {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Comma-separated transition systems
        #[arg(long, value_delimiter = ',', default_value = "arc-standard,swap", value_parser = parse_system)]
        systems: Vec<TransitionSystem>,
        /// Comma-separated feature templates
        #[arg(long, value_delimiter = ',', default_value = "standard,no-gd,no-gd-d", value_parser = parse_template)]
        templates: Vec<FeatureTemplate>,
        /// Comma-separated reduction percentages
        #[arg(long, value_delimiter = ',', default_value = "0", value_parser = parse_reduce)]
        reduce: Vec<u8>,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 10)]
        batch: usize,
        #[arg(long, default_value_t = 200)]
        hidden: usize,
        /// Master seed; each cell derives its own seed from it
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Train {
            train,
            dev,
            opts,
            out,
        } => {
            let mut spec =
                ExperimentSpec::new(train, opts.system, opts.template, opts.reduce, out)?;
            spec.dev_path = dev;
            spec.config = opts.to_config()?;
            let artifacts = cmd_train(&spec)?;
            let m = &artifacts.manifest;
            println!("model\t{}", artifacts.model_path.display());
            println!("input_dim\t{}", m.input_dim);
            println!("transitions\t{}", m.n_transitions);
            println!("skipped\t{}", m.skips.skipped());
            if let Some(last) = m.epochs.last() {
                println!("final_loss\t{:.6}", last.mean_loss);
                println!("final_train_acc\t{:.6}", last.train_acc);
            }
            if let Some(las) = m.dev_las {
                println!("dev_las\t{las:.4}");
            }
            Ok(())
        }
        Command::Parse { model, input, out } => {
            let (params, vocab) = load_model_dir(&model)?;
            let sentences = read_treebank(&input)?;
            let parser = ffdp::trainer::Parser::new(&params, &vocab)?;
            let trees: Vec<DependencyTree> = sentences.iter().map(|s| parser.parse(s)).collect();
            let text = write_conllu(&sentences, Some(&trees))?;
            match out {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|source| ExperimentError::Io { path, source })?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Eval {
            model,
            test,
            baseline,
            runs,
            iterations,
            seed,
        } => {
            let opts = EvalOptions {
                runs,
                iterations,
                seed,
            };
            let outcome = cmd_eval(&model, &test, baseline.as_deref(), &opts)?;
            print!("{}", outcome.score.to_kv_text());
            print!("{}", outcome.throughput.to_kv_text());
            if let Some(p) = outcome.row.p_value {
                println!("p_value\t{p:.6}");
            }
            if let Some(class) = outcome.row.class {
                println!("class\t{}", class.marker());
            }
            println!("predicted\t{}", outcome.predicted_path.display());
            Ok(())
        }
        Command::Bench { model, test, runs } => {
            let (params, vocab) = load_model_dir(&model)?;
            let sentences = read_treebank(&test)?;
            let parser = ffdp::trainer::Parser::new(&params, &vocab)?;
            let report = throughput(&parser, &sentences, runs)?;
            print!("{}", report.to_kv_text());
            Ok(())
        }
        Command::Compare {
            gold,
            a,
            b,
            iterations,
            seed,
        } => {
            let gold_sents = read_treebank(&gold)?;
            let a_trees: Vec<DependencyTree> =
                read_treebank(&a)?.iter().map(|s| s.gold_tree()).collect();
            let b_trees: Vec<DependencyTree> =
                read_treebank(&b)?.iter().map(|s| s.gold_tree()).collect();
            let las_a = score(&gold_sents, &a_trees)?.las;
            let las_b = score(&gold_sents, &b_trees)?.las;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = significance(&gold_sents, &a_trees, &b_trees, iterations, &mut rng)?;
            println!("las_a\t{las_a:.4}");
            println!("las_b\t{las_b:.4}");
            print!("{}", report.to_kv_text());
            Ok(())
        }
        Command::Grid {
            train,
            test,
            dev,
            systems,
            templates,
            reduce,
            epochs,
            batch,
            hidden,
            seed,
            runs,
            iterations,
            out,
        } => {
            let mut base_config =
                TrainConfig::new(TransitionSystem::ArcStandard, FeatureTemplate::Standard);
            base_config.epochs = epochs;
            base_config.batch_size = batch;
            base_config.hidden = hidden;
            let grid = GridSpec {
                train_path: train,
                test_path: test,
                dev_path: dev,
                systems,
                templates,
                reductions: reduce,
                base_config,
                master_seed: seed,
                out_dir: out,
                eval: EvalOptions {
                    runs,
                    iterations,
                    seed,
                },
            };
            let rows = cmd_grid(&grid)?;
            print!("{}", render_table(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
