//! Cross-validated experiment grid and its on-disk run directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.snapshot                        key=value settings of the run
//! folds/<class>/split.csv                sample_index,fold
//! folds/<class>/fold<i>/dae.daept        pretrained autoencoder
//! folds/<class>/fold<i>/dae_history.csv  epoch,train_loss,val_loss
//! folds/<class>/fold<i>/<strategy>-<approach>/metrics.csv   epoch,split,loss,accuracy,precision,recall,f1
//! folds/<class>/fold<i>/<strategy>-<approach>/best.daept    best-epoch snapshot
//! folds/<class>/fold<i>/<strategy>-<approach>/error.txt     present when the run aborted
//! curves/<class>/*.csv                   epoch,mean,sd,variance across folds
//! per_fold_best.csv                      best-epoch validation record of every run
//! summary.csv                            mean, sd and variance per cell and metric
//! report.tsv                             table of `mean ± sd` cells
//! ```
//!
//! Everything after `folds/` is rendered by [`render_report`] from the
//! per-fold files alone, so re-rendering reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::classifier::{
    assemble, evaluate, train_classifier, ClassifierConfig, ClassifierRun, FoldData, TrainApproach,
};
use crate::dae::{build_dae, train_dae, DaeConfig, TrainedDae, TransferStrategy};
use crate::data::MergedDataset;
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate, select_best, stratified_kfold, Dispersion, EpochMetrics, FoldSplit, MetricsRecord,
};
use crate::nn::format::{format_real, read_network, write_network};
use crate::nn::{AdamConfig, LossKind, Network};
use crate::rng::{tags, RngStream};

pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const REPORT_FILE: &str = "report.tsv";
pub const PER_FOLD_FILE: &str = "per_fold_best.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
/// Version of the run directory layout, recorded in the snapshot.
pub const LAYOUT_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "epoch,split,loss,accuracy,precision,recall,f1";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub code_dim: usize,
    pub corruption: f64,
    pub dae_epochs: usize,
    pub clf_epochs: usize,
    pub batch_size: usize,
    pub fc1_dim: usize,
    pub fc2_dim: usize,
    pub threshold: f64,
    pub learning_rate: f64,
    pub folds: usize,
    pub seed: u64,
    /// Positive classes to run; empty means every cohort.
    pub classes: Vec<String>,
    pub strategies: Vec<TransferStrategy>,
    pub approaches: Vec<TrainApproach>,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            code_dim: DaeConfig::DEFAULT_CODE_DIM,
            corruption: DaeConfig::DEFAULT_CORRUPTION,
            dae_epochs: DaeConfig::DEFAULT_EPOCHS,
            clf_epochs: 300,
            batch_size: 500,
            fc1_dim: 64,
            fc2_dim: 16,
            threshold: 0.5,
            learning_rate: AdamConfig::default().learning_rate,
            folds: crate::evaluation::DEFAULT_FOLDS,
            seed: 0,
            classes: Vec::new(),
            strategies: TransferStrategy::ALL.to_vec(),
            approaches: TrainApproach::ALL.to_vec(),
            jobs: 1,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    Ok(items)
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Sets one option by its flag name (without dashes).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "code-dim" => self.code_dim = parse_value(key, value)?,
            "corruption" => self.corruption = parse_value(key, value)?,
            "epochs-dae" => self.dae_epochs = parse_value(key, value)?,
            "epochs-clf" => self.clf_epochs = parse_value(key, value)?,
            "batch-size" => self.batch_size = parse_value(key, value)?,
            "fc1" => self.fc1_dim = parse_value(key, value)?,
            "fc2" => self.fc2_dim = parse_value(key, value)?,
            "threshold" => self.threshold = parse_value(key, value)?,
            "learning-rate" => self.learning_rate = parse_value(key, value)?,
            "folds" => self.folds = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "class" => {
                self.classes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "strategy" => self.strategies = parse_list(value)?,
            "approach" => self.approaches = parse_list(value)?,
            "jobs" => self.jobs = parse_value(key, value)?,
            "layout" => {
                let v: u32 = parse_value(key, value)?;
                if v != LAYOUT_VERSION {
                    return Err(Error::Config(format!(
                        "run directory layout {v} is not supported (expected {LAYOUT_VERSION})"
                    )));
                }
            }
            other => return Err(Error::Config(format!("unknown option `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let pairs = [
            ("layout", LAYOUT_VERSION.to_string()),
            ("code-dim", self.code_dim.to_string()),
            ("corruption", format_real(self.corruption)),
            ("epochs-dae", self.dae_epochs.to_string()),
            ("epochs-clf", self.clf_epochs.to_string()),
            ("batch-size", self.batch_size.to_string()),
            ("fc1", self.fc1_dim.to_string()),
            ("fc2", self.fc2_dim.to_string()),
            ("threshold", format_real(self.threshold)),
            ("learning-rate", format_real(self.learning_rate)),
            ("folds", self.folds.to_string()),
            ("seed", self.seed.to_string()),
            ("class", self.classes.join(",")),
            ("strategy", join(&self.strategies)),
            ("approach", join(&self.approaches)),
            ("jobs", self.jobs.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn dae_config(&self, input_dim: usize) -> DaeConfig {
        DaeConfig {
            input_dim,
            code_dim: self.code_dim,
            corruption: self.corruption,
            epochs: self.dae_epochs,
            batch_size: self.batch_size,
            loss: LossKind::Mse,
            adam: self.adam(),
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            fc1_dim: self.fc1_dim,
            fc2_dim: self.fc2_dim,
            epochs: self.clf_epochs,
            batch_size: self.batch_size,
            threshold: self.threshold,
            adam: self.adam(),
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dae_config(1).validate()?;
        self.classifier_config().validate()?;
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.strategies.is_empty() || self.approaches.is_empty() {
            return Err(Error::Config(
                "at least one strategy and one approach are required".into(),
            ));
        }
        Ok(())
    }

    /// Classes to run against `data`: the configured ones, or every cohort.
    pub fn resolve_classes(&self, data: &MergedDataset) -> Result<Vec<String>> {
        if self.classes.is_empty() {
            return Ok(data.cohort_names.clone());
        }
        for c in &self.classes {
            if !data.cohort_names.contains(c) {
                return Err(Error::Data(format!(
                    "unknown class `{c}`; cohorts are {:?}",
                    data.cohort_names
                )));
            }
        }
        Ok(self.classes.clone())
    }
}

/// Stable index of a class within the dataset, used to key random streams so
/// a class gets the same folds whether it runs alone or with others.
fn class_key(data: &MergedDataset, class: &str) -> Result<u64> {
    data.cohort_names
        .iter()
        .position(|c| c == class)
        .map(|i| i as u64)
        .ok_or_else(|| Error::Data(format!("unknown class `{class}`")))
}

fn strategy_key(s: TransferStrategy) -> u64 {
    match s {
        TransferStrategy::EncoderOnly => 0,
        TransferStrategy::CompleteAe => 1,
    }
}

fn approach_key(a: TrainApproach) -> u64 {
    match a {
        TrainApproach::FixedWeights => 0,
        TrainApproach::FineTune => 1,
    }
}

pub fn class_dir(root: &Path, class: &str) -> PathBuf {
    root.join("folds").join(class)
}

pub fn fold_dir(root: &Path, class: &str, fold: usize) -> PathBuf {
    class_dir(root, class).join(format!("fold{fold}"))
}

pub fn cell_dir(
    root: &Path,
    class: &str,
    fold: usize,
    strategy: TransferStrategy,
    approach: TrainApproach,
) -> PathBuf {
    fold_dir(root, class, fold).join(format!("{strategy}-{approach}"))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Stratified split for `class`, keyed by the master seed and the class.
pub fn split_for(data: &MergedDataset, config: &RunConfig, class: &str) -> Result<FoldSplit> {
    let labels = data.labels(class)?;
    let mut rng =
        RngStream::new(config.seed, 0).derive_path(&[tags::FOLDS, class_key(data, class)?]);
    stratified_kfold(&labels, config.folds, &mut rng)
}

fn split_csv(split: &FoldSplit, n: usize) -> String {
    let mut out = String::from("sample_index,fold\n");
    for (i, f) in split.assignment(n).into_iter().enumerate() {
        let _ = writeln!(out, "{i},{f}");
    }
    out
}

pub fn fold_data(
    data: &MergedDataset,
    class: &str,
    split: &FoldSplit,
    fold: usize,
) -> Result<FoldData> {
    let labels = data.labels(class)?;
    let f = split
        .folds
        .get(fold)
        .ok_or_else(|| Error::Config(format!("fold {fold} out of range for k={}", split.k)))?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<u8>>();
    FoldData::new(
        data.features.select_rows(&f.train),
        pick(&f.train),
        data.features.select_rows(&f.validation),
        pick(&f.validation),
    )
}

/// Pretrains the fold's autoencoder on the training rows, validating on the
/// held-out rows of the same split.
pub fn pretrain_fold(
    data: &MergedDataset,
    config: &RunConfig,
    class: &str,
    split: &FoldSplit,
    fold: usize,
) -> Result<TrainedDae> {
    let fd = fold_data(data, class, split, fold)?;
    let dae_config = config.dae_config(data.genes());
    let rng = RngStream::new(config.seed, 0).derive_path(&[
        tags::DAE,
        class_key(data, class)?,
        fold as u64,
    ]);
    let net = build_dae(&dae_config, &mut rng.derive(tags::INIT))?;
    train_dae(
        net,
        &fd.train_x,
        &fd.val_x,
        &dae_config,
        &rng.derive(tags::SHUFFLE),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn train_cell(
    data: &MergedDataset,
    config: &RunConfig,
    class: &str,
    split: &FoldSplit,
    fold: usize,
    dae: &TrainedDae,
    strategy: TransferStrategy,
    approach: TrainApproach,
) -> Result<ClassifierRun> {
    let fd = fold_data(data, class, split, fold)?;
    let clf_config = config.classifier_config();
    let rng = RngStream::new(config.seed, 0).derive_path(&[
        tags::CLASSIFIER,
        class_key(data, class)?,
        fold as u64,
        strategy_key(strategy),
        approach_key(approach),
    ]);
    let net = assemble(
        dae,
        strategy,
        approach,
        &clf_config,
        &mut rng.derive(tags::INIT),
    )?;
    train_classifier(net, &fd, &clf_config, &rng.derive(tags::SHUFFLE))
}

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for h in history {
        for (split, r) in [("train", &h.train), ("val", &h.val)] {
            let _ = write!(out, "{},{split}", h.epoch);
            for v in r.values() {
                out.push(',');
                out.push_str(&format_real(v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some(METRICS_HEADER) {
        return Err(Error::Format {
            line: 1,
            message: format!("expected header `{METRICS_HEADER}`"),
        });
    }
    let mut train: BTreeMap<usize, MetricsRecord> = BTreeMap::new();
    let mut val: BTreeMap<usize, MetricsRecord> = BTreeMap::new();
    for (i, line) in lines.filter(|(_, l)| !l.is_empty()) {
        let bad = || Error::Format {
            line: i + 1,
            message: format!("bad metrics row `{line}`"),
        };
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(bad());
        }
        let epoch: usize = parts[0].parse().map_err(|_| bad())?;
        let mut v = [0.0; 5];
        for (slot, p) in v.iter_mut().zip(&parts[2..]) {
            *slot = p.parse().map_err(|_| bad())?;
        }
        let target = match parts[1] {
            "train" => &mut train,
            "val" => &mut val,
            _ => return Err(bad()),
        };
        target.insert(epoch, MetricsRecord::from_values(v));
    }
    if train.keys().ne(val.keys()) {
        return Err(Error::Format {
            line: 0,
            message: "train and val rows cover different epochs".into(),
        });
    }
    Ok(train
        .into_iter()
        .zip(val.into_values())
        .map(|((epoch, train), val)| EpochMetrics { epoch, train, val })
        .collect())
}

/// Best-epoch snapshot file contents.
pub fn checkpoint_daept(run: &ClassifierRun) -> String {
    write_network(
        &run.best.snapshot,
        &[
            ("model".into(), "classifier".into()),
            ("epoch".into(), run.best.metrics.epoch.to_string()),
        ],
    )
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, usize)> {
    let (net, meta) = read_network(&read(path)?)?;
    let epoch = meta
        .iter()
        .find(|(k, _)| k == "epoch")
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| Error::Format {
            line: 0,
            message: format!("{} lacks an epoch entry", path.display()),
        })?;
    Ok((net, epoch))
}

fn save_cell(dir: &Path, outcome: &Result<ClassifierRun>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let error_path = dir.join("error.txt");
    match outcome {
        Ok(run) => {
            write(&dir.join("metrics.csv"), &metrics_csv(&run.history))?;
            write(&dir.join("best.daept"), &checkpoint_daept(run))?;
            if error_path.exists() {
                fs::remove_file(&error_path).map_err(|e| Error::io(&error_path, e))?;
            }
        }
        Err(e) => write(&error_path, &format!("{e}\n"))?,
    }
    Ok(())
}

/// Re-evaluates a saved best-epoch snapshot on its fold's validation rows.
pub fn recompute_validation(
    data: &MergedDataset,
    config: &RunConfig,
    class: &str,
    fold: usize,
    snapshot: &Network,
) -> Result<MetricsRecord> {
    let split = split_for(data, config, class)?;
    let fd = fold_data(data, class, &split, fold)?;
    evaluate(snapshot, &fd.val_x, &fd.val_y, config.threshold)
}

fn ensure_snapshot(outdir: &Path, config: &RunConfig, class: &str) -> Result<()> {
    let path = outdir.join(SNAPSHOT_FILE);
    if path.exists() {
        return Ok(());
    }
    let mut snapshot = config.clone();
    snapshot.classes = vec![class.to_string()];
    write(&path, &snapshot.to_text())
}

/// Pretrains one fold's autoencoder and stores it, with the split and a
/// config snapshot, in the run directory.
pub fn pretrain_into(
    data: &MergedDataset,
    config: &RunConfig,
    class: &str,
    fold: usize,
    outdir: &Path,
) -> Result<TrainedDae> {
    config.validate()?;
    let split = split_for(data, config, class)?;
    ensure_snapshot(outdir, config, class)?;
    write(
        &class_dir(outdir, class).join("split.csv"),
        &split_csv(&split, data.samples()),
    )?;
    let dae = pretrain_fold(data, config, class, &split, fold)?;
    dae.save(&fold_dir(outdir, class, fold))?;
    Ok(dae)
}

/// Trains one classifier on top of the autoencoder stored for the fold and
/// records its metrics and best-epoch snapshot.
#[allow(clippy::too_many_arguments)]
pub fn train_into(
    data: &MergedDataset,
    config: &RunConfig,
    class: &str,
    fold: usize,
    strategy: TransferStrategy,
    approach: TrainApproach,
    outdir: &Path,
) -> Result<ClassifierRun> {
    config.validate()?;
    let split = split_for(data, config, class)?;
    let dae = TrainedDae::load(&fold_dir(outdir, class, fold))?;
    let outcome = train_cell(data, config, class, &split, fold, &dae, strategy, approach);
    save_cell(&cell_dir(outdir, class, fold, strategy, approach), &outcome)?;
    outcome
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellFailure {
    pub class: String,
    pub fold: usize,
    pub strategy: TransferStrategy,
    pub approach: TrainApproach,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RenderedReport,
    pub failures: Vec<CellFailure>,
}

/// Runs the full grid into `outdir` and renders the report.
///
/// A failing run is recorded in its cell directory and the rest continue.
pub fn run_grid(data: &MergedDataset, config: &RunConfig, outdir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let classes = config.resolve_classes(data)?;
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut snapshot = config.clone();
    snapshot.classes = classes.clone();
    write(&outdir.join(SNAPSHOT_FILE), &snapshot.to_text())?;

    let mut units = Vec::new();
    for class in &classes {
        let split = split_for(data, config, class)?;
        write(
            &class_dir(outdir, class).join("split.csv"),
            &split_csv(&split, data.samples()),
        )?;
        for fold in 0..config.folds {
            units.push((class.clone(), split.clone(), fold));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<CellFailure>>> = pool.install(|| {
        units
            .par_iter()
            .map(|(class, split, fold)| run_unit(data, config, outdir, class, split, *fold))
            .collect()
    });
    let mut failures = Vec::new();
    for r in results {
        failures.extend(r?);
    }
    let report = render_report(outdir)?;
    Ok(RunOutcome { report, failures })
}

fn run_unit(
    data: &MergedDataset,
    config: &RunConfig,
    outdir: &Path,
    class: &str,
    split: &FoldSplit,
    fold: usize,
) -> Result<Vec<CellFailure>> {
    log::info!("{class} fold {fold}: pretraining autoencoder");
    let dir = fold_dir(outdir, class, fold);
    let dae = pretrain_fold(data, config, class, split, fold);
    if let Ok(dae) = &dae {
        dae.save(&dir)?;
    }
    let mut failures = Vec::new();
    for &strategy in &config.strategies {
        for &approach in &config.approaches {
            let outcome = match &dae {
                Ok(dae) => {
                    log::info!("{class} fold {fold}: training {strategy}-{approach}");
                    train_cell(data, config, class, split, fold, dae, strategy, approach)
                }
                Err(e) => Err(Error::Training(format!(
                    "autoencoder pretraining failed: {e}"
                ))),
            };
            if let Err(e) = &outcome {
                log::warn!("{class} fold {fold} {strategy}-{approach}: {e}");
                failures.push(CellFailure {
                    class: class.to_string(),
                    fold,
                    strategy,
                    approach,
                    message: e.to_string(),
                });
            }
            save_cell(&cell_dir(outdir, class, fold, strategy, approach), &outcome)?;
        }
    }
    Ok(failures)
}

/// Cross-fold summary for one grid cell. `None` when any fold is missing.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub class: String,
    pub strategy: TransferStrategy,
    pub approach: TrainApproach,
    pub best: Option<Vec<EpochMetrics>>,
}

impl CellResult {
    pub fn report(&self) -> Option<crate::evaluation::CvReport> {
        self.best.as_ref().map(|b| {
            aggregate(
                format!("{}:{}-{}", self.class, self.strategy, self.approach),
                b.iter().map(|e| e.val).collect(),
            )
        })
    }
}

#[derive(Clone, Debug)]
pub struct RenderedReport {
    pub table: String,
    pub cells: Vec<CellResult>,
    /// Artifacts that were expected but absent or unreadable.
    pub missing: Vec<String>,
}

impl RenderedReport {
    pub fn cell(
        &self,
        class: &str,
        strategy: TransferStrategy,
        approach: TrainApproach,
    ) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.class == class && c.strategy == strategy && c.approach == approach)
    }
}

fn curve_csv(per_fold: &[Vec<f64>]) -> String {
    let epochs = per_fold.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = String::from("epoch,mean,sd,variance\n");
    for e in 0..epochs {
        let values: Vec<f64> = per_fold.iter().map(|f| f[e]).collect();
        let d = Dispersion::of(&values);
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e + 1,
            format_real(d.mean),
            format_real(d.sd),
            format_real(d.variance)
        );
    }
    out
}

/// Renders `report.tsv`, `per_fold_best.csv`, `summary.csv` and `curves/`
/// from the per-fold files of a run directory.
pub fn render_report(root: &Path) -> Result<RenderedReport> {
    let config = RunConfig::from_text(&read(&root.join(SNAPSHOT_FILE))?)?;
    let mut missing = Vec::new();
    let mut cells = Vec::new();
    let mut per_fold =
        String::from("class,strategy,approach,fold,epoch,loss,accuracy,precision,recall,f1\n");

    for class in &config.classes {
        let mut dae_train = Vec::new();
        let mut dae_val = Vec::new();
        for fold in 0..config.folds {
            let path = fold_dir(root, class, fold).join("dae_history.csv");
            match read(&path).and_then(|t| crate::dae::parse_history(&t)) {
                Ok(h) if h.len() == config.dae_epochs => {
                    dae_train.push(h.iter().map(|e| e.train).collect());
                    dae_val.push(h.iter().map(|e| e.val).collect());
                }
                _ => missing.push(path.display().to_string()),
            }
        }
        if !dae_train.is_empty() {
            let curves = root.join("curves").join(class);
            write(&curves.join("dae_train.csv"), &curve_csv(&dae_train))?;
            write(&curves.join("dae_val.csv"), &curve_csv(&dae_val))?;
        }

        for &strategy in &config.strategies {
            for &approach in &config.approaches {
                let mut best = Vec::new();
                let mut train_curves: Vec<Vec<f64>> = Vec::new();
                let mut val_curves: Vec<Vec<f64>> = Vec::new();
                let mut complete = true;
                for fold in 0..config.folds {
                    let path = cell_dir(root, class, fold, strategy, approach).join("metrics.csv");
                    let history = read(&path).and_then(|t| parse_metrics_csv(&t));
                    match history {
                        Ok(h) if h.len() == config.clf_epochs => {
                            let b = *select_best(&h).expect("non-empty history");
                            let _ = write!(
                                per_fold,
                                "{class},{strategy},{approach},{fold},{}",
                                b.epoch
                            );
                            for v in b.val.values() {
                                per_fold.push(',');
                                per_fold.push_str(&format_real(v));
                            }
                            per_fold.push('\n');
                            best.push(b);
                            train_curves.push(h.iter().map(|e| e.train.loss).collect());
                            val_curves.push(h.iter().map(|e| e.val.loss).collect());
                        }
                        _ => {
                            complete = false;
                            missing.push(path.display().to_string());
                        }
                    }
                }
                if !train_curves.is_empty() {
                    let curves = root.join("curves").join(class);
                    write(
                        &curves.join(format!("{strategy}-{approach}_train.csv")),
                        &curve_csv(&train_curves),
                    )?;
                    write(
                        &curves.join(format!("{strategy}-{approach}_val.csv")),
                        &curve_csv(&val_curves),
                    )?;
                }
                cells.push(CellResult {
                    class: class.clone(),
                    strategy,
                    approach,
                    best: complete.then_some(best),
                });
            }
        }
    }

    let mut summary = String::from("class,strategy,approach,metric,mean,sd,variance\n");
    for cell in &cells {
        if let Some(r) = cell.report() {
            for (name, s) in MetricsRecord::NAMES.iter().zip(r.stats) {
                let _ = writeln!(
                    summary,
                    "{},{},{},{name},{},{},{}",
                    cell.class,
                    cell.strategy,
                    cell.approach,
                    format_real(s.mean),
                    format_real(s.sd),
                    format_real(s.variance)
                );
            }
        }
    }

    let table = render_table(&config, &cells);
    write(&root.join(REPORT_FILE), &table)?;
    write(&root.join(PER_FOLD_FILE), &per_fold)?;
    write(&root.join(SUMMARY_FILE), &summary)?;
    Ok(RenderedReport {
        table,
        cells,
        missing,
    })
}

const METRIC_HEADERS: [&str; 5] = [
    "Loss",
    "Accuracy (%)",
    "Precision (%)",
    "Recall (%)",
    "F1 (%)",
];

fn render_table(config: &RunConfig, cells: &[CellResult]) -> String {
    let mut out = String::new();
    // group header row, then metric names
    out.push('\t');
    let groups: Vec<String> = config
        .approaches
        .iter()
        .map(|a| {
            let mut g = a.label().to_string();
            g.push_str(&"\t".repeat(METRIC_HEADERS.len() - 1));
            g
        })
        .collect();
    out.push_str(&groups.join("\t"));
    out.push('\n');
    out.push_str("Top Layers (DAE)");
    for _ in &config.approaches {
        for h in METRIC_HEADERS {
            out.push('\t');
            out.push_str(h);
        }
    }
    out.push('\n');
    for class in &config.classes {
        for &strategy in &config.strategies {
            out.push_str(&format!("{class}: {}", strategy.label()));
            for &approach in &config.approaches {
                let cell = cells.iter().find(|c| {
                    &c.class == class && c.strategy == strategy && c.approach == approach
                });
                match cell.and_then(CellResult::report) {
                    Some(r) => {
                        for m in 0..METRIC_HEADERS.len() {
                            out.push('\t');
                            out.push_str(&r.cell(m));
                        }
                    }
                    None => out.push_str(&"\tMISSING".repeat(METRIC_HEADERS.len())),
                }
            }
            out.push('\n');
        }
    }
    out
}
