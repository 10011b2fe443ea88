use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hmmlstm_core::harness::{
    self, append_results, emit_results_table, evaluate_model, fetch_dataset, known_dataset,
    load_checkpoint, load_dataset, read_results_csv, run_experiment, write_table, ExperimentConfig,
    Method, ResultsRow, VisualizeConfig, DEFAULT_VALID_FRACTION, KNOWN_DATASETS, SAMPLE_NAME,
};
use hmmlstm_core::interpret::{render_tree, TreeFormat};
use hmmlstm_core::{Error, ErrorClass};

#[derive(Debug, Parser)]
#[command(
    name = "hmmlstm",
    version,
    about = "Character-level LSTM, HMM and hybrid language models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one method, save its checkpoint and append its results row.
    Train(TrainArgs),
    /// Score a saved checkpoint on its dataset.
    Eval(EvalArgs),
    /// Train a Bayesian HMM by Gibbs sampling.
    Gibbs(GibbsArgs),
    /// Train an HMM-LSTM hybrid.
    Hybrid(HybridArgs),
    /// Write an HTML report of HMM states, LSTM clusters, a tree and PCA.
    Visualize(VisualizeArgs),
    /// Print the decision tree explaining one LSTM hidden dimension.
    Tree(TreeArgs),
    /// Merge results CSV files into results.csv and results.md.
    Table(TableArgs),
    /// Download a registered corpus and verify it.
    FetchData(FetchArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Registry name (sample, shakespeare, linux, ptb) or a text file path.
    #[arg(long, default_value = SAMPLE_NAME)]
    dataset: String,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    hmm_states: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    /// Gibbs iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_VALID_FRACTION)]
    valid_fraction: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn experiment(&self, method: Method) -> ExperimentConfig {
        ExperimentConfig {
            hidden_dim: self.hidden_dim,
            hmm_states: self.hmm_states,
            seed: self.seed,
            epochs: self.epochs,
            iters: self.iters,
            valid_fraction: self.valid_fraction,
            ..ExperimentConfig::new(self.dataset.clone(), method)
        }
    }

    fn visualize(&self, clusters: usize, excerpt: usize, dim: usize) -> VisualizeConfig {
        let d = VisualizeConfig::default();
        VisualizeConfig {
            dataset: self.dataset.clone(),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            hmm_states: self.hmm_states.unwrap_or(d.hmm_states),
            clusters,
            seed: self.seed,
            epochs: self.epochs.unwrap_or(d.epochs),
            iters: self.iters.unwrap_or(d.iters),
            valid_fraction: self.valid_fraction,
            excerpt_chars: excerpt,
            tree_dim: dim,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset to score on; defaults to the one the model was trained on.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    valid_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Emission {
    Discrete,
    Continuous,
}

#[derive(Debug, Args)]
struct GibbsArgs {
    #[arg(long, value_enum, default_value = "discrete")]
    emission: Emission,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HybridMode {
    /// Frozen HMM features feed the LSTM output layer.
    Sequential,
    /// HMM and LSTM trained together.
    Joint,
}

#[derive(Debug, Args)]
struct HybridArgs {
    #[arg(long, value_enum, default_value = "sequential")]
    mode: HybridMode,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct VisualizeArgs {
    /// Number of k-means clusters of LSTM states.
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    /// Characters shown in each colored panel.
    #[arg(long, default_value_t = 3000)]
    excerpt: usize,
    /// Hidden dimension explained by the tree.
    #[arg(long, default_value_t = 0)]
    dim: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TreeStyle {
    Text,
    Dot,
}

#[derive(Debug, Args)]
struct TreeArgs {
    #[arg(long, default_value_t = 0)]
    dim: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: TreeStyle,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TableArgs {
    /// Results CSV files to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FetchArgs {
    /// Registered corpus name, or `all`.
    #[arg(long, default_value = "shakespeare")]
    dataset: String,
    /// Target directory; defaults to $HMMLSTM_DATA or ./data.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

/// Runs one experiment, writes its checkpoint under `out/checkpoints/` and
/// merges its row into `out/results.{csv,md}`.
fn train_and_record(mut config: ExperimentConfig, out: &Path) -> hmmlstm_core::Result<ResultsRow> {
    config.validate()?;
    config.checkpoint_dir = Some(out.join("checkpoints").join(checkpoint_name(&config)));
    let outcome = run_experiment(&config)?;
    append_results(out, std::slice::from_ref(&outcome.row))?;
    let r = &outcome.row;
    println!(
        "{} {} params={} validation={:.4} training={:.4} ({:.1}s)",
        r.dataset, r.method, r.parameter_count, r.validation_ll, r.training_ll, r.wall_time_s
    );
    if let Some(dir) = &config.checkpoint_dir {
        println!("checkpoint: {}", dir.display());
    }
    Ok(outcome.row)
}

fn checkpoint_name(config: &ExperimentConfig) -> String {
    let mut s = format!(
        "{}-{}",
        harness::dataset_label(&config.dataset),
        config.method
    );
    if let Some(h) = config.hidden_dim.filter(|_| config.method.uses_lstm()) {
        s.push_str(&format!("-h{h}"));
    }
    if let Some(n) = config.hmm_states.filter(|_| config.method.uses_hmm()) {
        s.push_str(&format!("-n{n}"));
    }
    s.push_str(&format!("-s{}", config.seed));
    s
}

fn eval(args: &EvalArgs) -> hmmlstm_core::Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let trained: Option<ExperimentConfig> = serde_json::from_value(ckpt.config.clone()).ok();
    let dataset = match (&args.dataset, &trained) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => c.dataset.clone(),
        (None, None) => {
            return Err(Error::invalid(
                "checkpoint does not record its dataset; pass --dataset",
            ))
        }
    };
    let fraction = args
        .valid_fraction
        .or(trained.as_ref().map(|c| c.valid_fraction))
        .unwrap_or(DEFAULT_VALID_FRACTION);
    let corpus = load_dataset(&dataset, fraction)?;
    if corpus.vocab != ckpt.vocab {
        return Err(Error::Data(format!(
            "dataset `{dataset}` has a different vocabulary from the checkpoint"
        )));
    }
    let v = evaluate_model(&ckpt.model, &corpus, corpus.valid.clone())?;
    let t = evaluate_model(&ckpt.model, &corpus, corpus.train.clone())?;
    println!(
        "{} on {dataset}: validation={v:.6} training={t:.6}",
        ckpt.model.kind()
    );
    Ok(())
}

fn visualize(args: &VisualizeArgs) -> hmmlstm_core::Result<()> {
    let config = args.common.visualize(args.clusters, args.excerpt, args.dim);
    let report = harness::visualize_report(&config)?;
    let out = &args.common.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("report.html");
    std::fs::write(&path, &report.html).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn tree(args: &TreeArgs) -> hmmlstm_core::Result<()> {
    let config = args.common.visualize(1, 0, args.dim);
    let corpus = load_dataset(&config.dataset, config.valid_fraction)?;
    let tree = harness::fit_hidden_tree(&config, &corpus)?;
    let format = match args.format {
        TreeStyle::Text => TreeFormat::Text,
        TreeStyle::Dot => TreeFormat::Dot,
    };
    print!("{}", render_tree(&tree, &corpus.vocab, format));
    Ok(())
}

fn table(args: &TableArgs) -> hmmlstm_core::Result<()> {
    let mut rows = Vec::new();
    for p in &args.inputs {
        rows.extend(read_results_csv(p)?);
    }
    let table = emit_results_table(&rows)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_table(&args.out, &table)?;
    print!("{}", table.markdown);
    Ok(())
}

fn fetch(args: &FetchArgs) -> hmmlstm_core::Result<()> {
    let targets: Vec<_> = if args.dataset == "all" {
        KNOWN_DATASETS.iter().collect()
    } else {
        let d = known_dataset(&args.dataset).ok_or_else(|| {
            let names: Vec<&str> = KNOWN_DATASETS.iter().map(|d| d.name).collect();
            Error::invalid(format!(
                "unknown dataset `{}` (known: {}, all)",
                args.dataset,
                names.join(", ")
            ))
        })?;
        vec![d]
    };
    let dir = args.out.clone().unwrap_or_else(harness::data_dir);
    for d in targets {
        let f = fetch_dataset(d, &dir)?;
        println!("{} {} bytes sha256 {}", f.path.display(), f.bytes, f.sha256);
    }
    Ok(())
}

fn run(cli: Cli) -> hmmlstm_core::Result<()> {
    match cli.command {
        Command::Train(a) => {
            train_and_record(a.common.experiment(a.method), &a.common.out).map(drop)
        }
        Command::Eval(a) => eval(&a),
        Command::Gibbs(a) => {
            let method = match a.emission {
                Emission::Discrete => Method::DiscreteHmm,
                Emission::Continuous => Method::ContinuousHmm,
            };
            train_and_record(a.common.experiment(method), &a.common.out).map(drop)
        }
        Command::Hybrid(a) => {
            let method = match a.mode {
                HybridMode::Sequential => Method::Hybrid,
                HybridMode::Joint => Method::JointHybrid,
            };
            train_and_record(a.common.experiment(method), &a.common.out).map(drop)
        }
        Command::Visualize(a) => visualize(&a),
        Command::Tree(a) => tree(&a),
        Command::Table(a) => table(&a),
        Command::FetchData(a) => fetch(&a),
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
