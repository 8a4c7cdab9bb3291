use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use daeinit::data::{preprocess, read_table, MergedDataset, ParseOptions};
use daeinit::experiment::{pretrain_into, render_report, run_grid, train_into, RunConfig};
use daeinit::synth::{write_cohorts, SynthSpec};
use daeinit::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_TRAINING: u8 = 3;

#[derive(Parser)]
#[command(
    name = "daeinit",
    version,
    about = "Autoencoder-initialized classifiers for expression cohorts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic cohort tables.
    Synth(SynthArgs),
    /// Clean and merge cohort tables into a labeled dataset.
    Preprocess(PreprocessArgs),
    /// Pretrain the autoencoder of one cross-validation fold.
    Pretrain(FoldArgs),
    /// Train classifiers of one fold on its pretrained autoencoder.
    Train(FoldArgs),
    /// Run the full cross-validated grid.
    Run(RunArgs),
    /// Re-render the report of a run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    outdir: PathBuf,
    /// Comma-separated cohort names.
    #[arg(long, default_value = "thyroid,skin,stomach")]
    cohorts: String,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 50)]
    genes: usize,
    /// Genes whose mean differs between cohorts; defaults to all.
    #[arg(long)]
    informative: Option<usize>,
    /// Spread of cohort means, in units of the noise.
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.01)]
    missing_rate: f64,
    #[arg(long, default_value_t = 3)]
    constant_genes: usize,
    /// Genes left out of each cohort.
    #[arg(long, default_value_t = 0)]
    omit: usize,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Cohort tables; the file stem names the cohort.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "dataset")]
    outdir: PathBuf,
    /// Positive class written to the label column; defaults to the first cohort.
    #[arg(long)]
    class: Option<String>,
}

/// Experiment settings. Unset flags fall back to the config file, then to
/// built-in defaults.
#[derive(Args, Default)]
struct GridFlags {
    /// File of key=value lines using the long flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs_dae: Option<usize>,
    #[arg(long)]
    epochs_clf: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    code_dim: Option<usize>,
    #[arg(long)]
    corruption: Option<f64>,
    #[arg(long)]
    fc1: Option<usize>,
    #[arg(long)]
    fc2: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Comma-separated: encoder, complete.
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated: fixed, finetune.
    #[arg(long)]
    approach: Option<String>,
    /// Comma-separated positive classes; defaults to every cohort.
    #[arg(long)]
    class: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Preprocessed dataset directory.
    #[arg(long, default_value = "dataset")]
    data: PathBuf,
    #[arg(long, default_value = "run")]
    outdir: PathBuf,
    #[command(flatten)]
    grid: GridFlags,
}

#[derive(Args)]
struct FoldArgs {
    #[arg(long, default_value = "dataset")]
    data: PathBuf,
    #[arg(long, default_value = "run")]
    outdir: PathBuf,
    /// Zero-based fold index.
    #[arg(long)]
    fold: usize,
    #[command(flatten)]
    grid: GridFlags,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory.
    #[arg(long, default_value = "run")]
    outdir: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
    Training(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            Error::Training(_) | Error::NonFinite { .. } => Failure::Training(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl GridFlags {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            config
                .apply_text(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        }
        let flags: [(&str, Option<String>); 15] = [
            ("epochs-dae", self.epochs_dae.map(|v| v.to_string())),
            ("epochs-clf", self.epochs_clf.map(|v| v.to_string())),
            ("batch-size", self.batch_size.map(|v| v.to_string())),
            ("code-dim", self.code_dim.map(|v| v.to_string())),
            ("corruption", self.corruption.map(|v| v.to_string())),
            ("fc1", self.fc1.map(|v| v.to_string())),
            ("fc2", self.fc2.map(|v| v.to_string())),
            ("threshold", self.threshold.map(|v| v.to_string())),
            ("learning-rate", self.learning_rate.map(|v| v.to_string())),
            ("folds", self.folds.map(|v| v.to_string())),
            ("strategy", self.strategy.clone()),
            ("approach", self.approach.clone()),
            ("class", self.class.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("jobs", self.jobs.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config
                    .set(key, &v)
                    .map_err(|e| Failure::Usage(format!("--{key}: {e}")))?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn load_dataset(dir: &Path) -> Result<MergedDataset, Failure> {
    MergedDataset::load(dir)
        .map_err(|e| Failure::Data(format!("loading dataset {}: {e}", dir.display())))
}

fn single_class(config: &RunConfig, data: &MergedDataset) -> Result<String, Failure> {
    match config.resolve_classes(data)?.as_slice() {
        [one] if config.classes.len() == 1 => Ok(one.clone()),
        _ => Err(Failure::Usage(
            "this command needs exactly one --class".into(),
        )),
    }
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let names: Vec<&str> = args
        .cohorts
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.len() < 2 {
        return Err(Failure::Usage("--cohorts needs at least two names".into()));
    }
    let informative = args.informative.unwrap_or(args.genes);
    if informative > args.genes {
        return Err(Failure::Usage("--informative exceeds --genes".into()));
    }
    let spec = SynthSpec {
        missing_rate: args.missing_rate,
        constant_columns: args.constant_genes,
        omit_per_cohort: args.omit,
        ..SynthSpec::gaussian(
            &names,
            args.samples,
            args.genes,
            informative,
            args.separation,
            args.noise,
            args.seed,
        )
    };
    spec.validate(1)?;
    for path in write_cohorts(&spec, &args.outdir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn preprocess_cmd(args: &PreprocessArgs) -> Result<(), Failure> {
    if args.inputs.len() < 2 {
        return Err(Failure::Usage(
            "preprocess needs at least two input tables".into(),
        ));
    }
    let tables = args
        .inputs
        .iter()
        .map(|p| read_table(p, &ParseOptions::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let (merged, summary) = preprocess(&tables)?;
    let positive = args
        .class
        .clone()
        .unwrap_or_else(|| merged.cohort_names[0].clone());
    merged.save(&args.outdir, &positive)?;
    println!("{summary}");
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let config = args.grid.resolve()?;
    let data = load_dataset(&args.data)?;
    let outcome = run_grid(&data, &config, &args.outdir)?;
    print!("{}", outcome.report.table);
    if outcome.failures.is_empty() {
        return Ok(());
    }
    for f in &outcome.failures {
        eprintln!(
            "failed: {} fold {} {}-{}: {}",
            f.class, f.fold, f.strategy, f.approach, f.message
        );
    }
    Err(Failure::Training(format!(
        "{} training run(s) failed",
        outcome.failures.len()
    )))
}

fn pretrain(args: &FoldArgs) -> Result<(), Failure> {
    let config = args.grid.resolve()?;
    let data = load_dataset(&args.data)?;
    let class = single_class(&config, &data)?;
    let dae = pretrain_into(&data, &config, &class, args.fold, &args.outdir)?;
    if let Some(last) = dae.history().last() {
        println!(
            "{class} fold {}: epoch {} train loss {:.6}, val loss {:.6}",
            args.fold, last.epoch, last.train, last.val
        );
    }
    Ok(())
}

fn train(args: &FoldArgs) -> Result<(), Failure> {
    let config = args.grid.resolve()?;
    let data = load_dataset(&args.data)?;
    let class = single_class(&config, &data)?;
    let mut failed = 0;
    for &strategy in &config.strategies {
        for &approach in &config.approaches {
            match train_into(
                &data,
                &config,
                &class,
                args.fold,
                strategy,
                approach,
                &args.outdir,
            ) {
                Ok(run) => {
                    let b = &run.best.metrics;
                    println!(
                        "{class} fold {} {strategy}-{approach}: best epoch {} val loss {:.4} f1 {:.4}",
                        args.fold, b.epoch, b.val.loss, b.val.f1
                    );
                }
                Err(e @ (Error::Training(_) | Error::NonFinite { .. })) => {
                    eprintln!(
                        "failed: {class} fold {} {strategy}-{approach}: {e}",
                        args.fold
                    );
                    failed += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Training(format!(
            "{failed} training run(s) failed"
        )));
    }
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let rendered = render_report(&args.outdir)?;
    print!("{}", rendered.table);
    if rendered.missing.is_empty() {
        return Ok(());
    }
    for m in &rendered.missing {
        eprintln!("missing: {m}");
    }
    Err(Failure::Data(format!(
        "{} artifact(s) missing",
        rendered.missing.len()
    )))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Training(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_TRAINING)
        }
    }
}
