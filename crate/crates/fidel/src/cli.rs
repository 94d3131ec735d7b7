//! Command-line definitions and the subcommand implementations.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fidel_core::augment::{augment_split_checked, AugmentationSpec, SplitCounts};
use fidel_core::glyph::{derive_targets, split_by_writer, SplitKind, SplitRatio};
use fidel_core::gradcheck::GradCheckOptions;
use fidel_core::model::{BackwardOptions, Mode};
use fidel_core::rng::domain;
use fidel_core::synth::{synth_glyphs, SynthConfig};
use fidel_core::train::{check_network_gradients, consistency_rate, evaluate, validate_alphas};
use fidel_core::{AlphabetGrid, ModelConfig, Network, RngStream, Tensor, TrainConfig};

use crate::checkpoint::Checkpoint;
use crate::container::{container_path, grid_digest, read_container, read_grid, write_dataset, DatasetManifest, SplitData};
use crate::error::{read_text, write_file, Error, Result};
use crate::fit::{fit, load_dataset, FitOptions, RunConfig, CONFIG_FILE};
use crate::ingest::{ingest_directory, load_image};
use crate::metrics::{read_metrics, transform_log_csv};
use crate::plot::{render_svg, Series};

pub const DATA_DIR_ENV: &str = "FIDEL_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "fidel", version, about = "Multi-task handwritten syllabary recognition toolkit")]
pub struct Cli {
    /// Log progress to stderr; repeat for more detail
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read `<writer>/<label>.<ext>` images and write writer-disjoint 9:2:1 splits
    Ingest(IngestArgs),
    /// Generate a synthetic grid-structured glyph dataset
    Synth(SynthArgs),
    /// Expand every split to fixed per-class counts with random transforms
    Augment(AugmentArgs),
    /// Train the three-head network on a dataset directory
    Train(TrainArgs),
    /// Report losses and accuracies of a checkpoint on one container
    Eval(EvalArgs),
    /// Classify a single image
    Predict(PredictArgs),
    /// Compare analytic and finite-difference gradients of the full objective
    Gradcheck(GradcheckArgs),
    /// Train once per alpha triple and seed and summarize the runs
    Sweep(SweepArgs),
    /// Draw loss and accuracy curves from metrics CSV files as SVG
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory holding one subdirectory of images per writer
    #[arg(long)]
    pub src: PathBuf,
    /// Alphabet grid CSV
    #[arg(long)]
    pub grid: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the writer partition
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side length images are resampled to
    #[arg(long, default_value_t = fidel_core::glyph::DEFAULT_CANVAS)]
    pub canvas: usize,
    /// Record the current time in the manifest
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Grid rows (base characters)
    #[arg(long)]
    pub rows: u16,
    /// Grid columns (orders)
    #[arg(long)]
    pub cols: u16,
    /// Images per class over all splits
    #[arg(long)]
    pub per_class: usize,
    /// Validation images per class [default: per-class / 6, rounded]
    #[arg(long)]
    pub val_per_class: Option<usize>,
    /// Test images per class [default: per-class / 12, rounded]
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = fidel_core::glyph::DEFAULT_CANVAS)]
    pub canvas: usize,
    /// Output dataset directory
    #[arg(long, env = DATA_DIR_ENV, hide_env_values = true)]
    pub out: PathBuf,
    /// Record the current time in the manifest
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Input dataset directory
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Target images per class for train, val and test
    #[arg(long, default_value = "4500,800,400", value_parser = parse_counts)]
    pub counts: SplitCounts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
    /// Also write transforms-<split>.csv logs to the output directory
    #[arg(long)]
    pub transform_logs: bool,
    /// Record the current time in the manifest
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset directory with train.amcr, optional val.amcr and grid.csv
    #[arg(long, env = DATA_DIR_ENV, hide_env_values = true)]
    pub data: PathBuf,
    /// Training configuration JSON; missing fields take their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Architecture JSON; head sizes always follow the dataset grid
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Override the maximum number of epochs
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Override the learning rate
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Write measured epoch durations to the seconds column instead of 0
    #[arg(long)]
    pub wall_clock: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Loss weights of the label, row and column heads
    #[arg(long, value_parser = parse_alphas)]
    pub alphas: Option<[f64; 3]>,
    /// Override the seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for metrics.csv, config.json and checkpoints
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from last.ckpt in the output directory
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset container (.amcr)
    #[arg(long)]
    pub data: PathBuf,
    /// Loss weights [default: those the checkpoint was trained with]
    #[arg(long, value_parser = parse_alphas)]
    pub alphas: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Alphabet grid CSV [default: the grid stored in the checkpoint]
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Architecture JSON [default: the default architecture]
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Alphabet grid CSV giving the head sizes [default: the built-in grid]
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Coordinates sampled from each large parameter tensor
    #[arg(long, default_value_t = 48)]
    pub samples: usize,
    #[arg(long, value_parser = parse_alphas, default_value = "1,0.35,0.65")]
    pub alphas: [f64; 3],
    #[arg(long, default_value_t = 0.01)]
    pub l2_lambda: f64,
    /// Check in evaluation mode instead of with a fixed dropout mask
    #[arg(long)]
    pub eval_mode: bool,
    /// Flip the sign of one backward gradient (negative control)
    #[arg(long)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Loss weight triple; repeat for each run
    #[arg(long, value_parser = parse_alphas, required = true)]
    pub alphas: Vec<[f64; 3]>,
    /// Seeds to run every triple with
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Output directory; one subdirectory per run plus summary.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Metrics CSV files; a config.json next to each labels its curves
    #[arg(long, required = true, num_args = 1..)]
    pub metrics: Vec<PathBuf>,
    /// Output SVG file
    #[arg(long)]
    pub out: PathBuf,
    /// Omit the generation timestamp
    #[arg(long)]
    pub deterministic: bool,
}

fn parse_floats(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

pub fn parse_alphas(s: &str) -> std::result::Result<[f64; 3], String> {
    let v = parse_floats(s)?;
    let a: [f64; 3] = v.try_into().map_err(|_| "expected three comma-separated weights".to_string())?;
    validate_alphas(a).map_err(|e| e.to_string())?;
    Ok(a)
}

pub fn parse_counts(s: &str) -> std::result::Result<SplitCounts, String> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match v[..] {
        [train, val, test] if train > 0 => Ok(SplitCounts { train, val, test }),
        [_, _, _] => Err("the training count must be positive".into()),
        _ => Err("expected three comma-separated counts".into()),
    }
}

fn alpha_label(a: [f64; 3]) -> String {
    format!("\u{3b1}=({}, {}, {})", a[0], a[1], a[2])
}

fn run_dir_name(a: [f64; 3], seed: u64) -> String {
    format!("a{}_{}_{}-s{seed}", a[0], a[1], a[2])
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(what, 0, format!("{}: {e}", path.display())))
}

fn load_grid_file(path: &Path) -> Result<AlphabetGrid> {
    Ok(fidel_core::grid::load_grid(&read_text(path)?)?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Augment(a) => augment(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Sweep(a) => sweep(a),
        Command::Plot(a) => plot(a),
    }
}

fn counts_of(splits: &[SplitData]) -> SplitCounts {
    let n = |k: SplitKind| splits.iter().find(|s| s.split == k).map_or(0, SplitData::len);
    SplitCounts {
        train: n(SplitKind::Train),
        val: n(SplitKind::Val),
        test: n(SplitKind::Test),
    }
}

fn print_counts(what: &str, c: SplitCounts) {
    println!("{what}: train {}, val {}, test {}", c.train, c.val, c.test);
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let grid = load_grid_file(&a.grid)?;
    let report = ingest_directory(&a.src, &grid, a.canvas)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let (splits, partition) = split_by_writer(report.samples, SplitRatio::DEFAULT, a.seed)?;
    let data = [
        SplitData::from_glyphs(SplitKind::Train, a.canvas, &splits.train, &grid)?,
        SplitData::from_glyphs(SplitKind::Val, a.canvas, &splits.val, &grid)?,
        SplitData::from_glyphs(SplitKind::Test, a.canvas, &splits.test, &grid)?,
    ];
    let counts = counts_of(&data);
    let manifest = DatasetManifest::new(&grid, a.canvas, counts, "ingest", a.seed).stamped(a.timestamp);
    write_dataset(&a.out, &data, &manifest, &grid)?;
    println!(
        "writers: train {}, val {}, test {}",
        partition.train.len(),
        partition.val.len(),
        partition.test.len()
    );
    print_counts("images", counts);
    if !report.warnings.is_empty() {
        println!("skipped {} file(s); see warnings", report.warnings.len());
    }
    Ok(())
}

/// Per-class split sizes for `synth`.
pub fn synth_counts(per_class: usize, val: Option<usize>, test: Option<usize>) -> Result<SplitCounts> {
    let val = val.unwrap_or((per_class as f64 / 6.0).round() as usize);
    let test = test.unwrap_or((per_class as f64 / 12.0).round() as usize);
    match per_class.checked_sub(val + test) {
        Some(train) if train > 0 => Ok(SplitCounts { train, val, test }),
        _ => Err(fidel_core::Error::Validation(format!(
            "per-class count {per_class} leaves no training images after {val} validation and {test} test images"
        ))
        .into()),
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let per = synth_counts(a.per_class, a.val_per_class, a.test_per_class)?;
    let mut config = SynthConfig::new(a.rows, a.cols, 0, a.seed);
    config.canvas = a.canvas;
    let mut data = Vec::new();
    let mut grid = None;
    for split in SplitKind::ALL {
        config.per_class = per.get(split);
        let (glyphs, g) = synth_glyphs(&config, split)?;
        data.push(SplitData::from_glyphs(split, a.canvas, &glyphs, &g)?);
        grid = Some(g);
    }
    let grid = grid.expect("three splits");
    let violations = fidel_core::grid::GridSpec::parse(&grid.to_file_string())?.violations();
    if !violations.is_empty() {
        return Err(fidel_core::Error::GridViolations(violations).into());
    }
    let counts = counts_of(&data);
    let manifest = DatasetManifest::new(&grid, a.canvas, counts, "synth", a.seed).stamped(a.timestamp);
    write_dataset(&a.out, &data, &manifest, &grid)?;
    println!("classes: {}", grid.num_labels());
    print_counts("images", counts);
    Ok(())
}

pub fn augment(a: AugmentArgs) -> Result<()> {
    let grid = read_grid(&a.input)?;
    let mut inputs = Vec::new();
    for split in SplitKind::ALL {
        let path = container_path(&a.input, split);
        if path.exists() {
            let (manifest, data) = read_container(&path)?;
            if manifest.grid_digest != grid_digest(&grid) {
                return Err(fidel_core::Error::Validation(format!("{} was built for a different grid", path.display())).into());
            }
            inputs.push((manifest, data));
        }
    }
    let Some(canvas) = inputs.first().map(|(m, _)| m.canvas) else {
        return Err(Error::Usage(format!("{}: no split containers found", a.input.display())));
    };
    let classes: BTreeSet<u16> = inputs.iter().flat_map(|(_, d)| d.labels.iter().copied()).collect();
    let spec = AugmentationSpec {
        per_class: a.counts,
        seed: a.seed,
        ..AugmentationSpec::default()
    };
    let mut out = Vec::new();
    for (_, data) in &inputs {
        let glyphs = data.to_glyphs();
        let augmented = augment_split_checked(&glyphs, classes.iter().copied(), &spec, a.counts.get(data.split), data.split)?;
        if a.transform_logs {
            let path = a.out.join(format!("transforms-{}.csv", data.split.name()));
            write_file(&path, transform_log_csv(&augmented.log).as_bytes())?;
        }
        out.push(SplitData::from_glyphs(data.split, canvas, &augmented.images, &grid)?);
    }
    let counts = counts_of(&out);
    let manifest = DatasetManifest::new(&grid, canvas, counts, "augment", a.seed)
        .with_augmentation(&spec)
        .stamped(a.timestamp);
    write_dataset(&a.out, &out, &manifest, &grid)?;
    println!("classes: {}", classes.len());
    print_counts("images", counts);
    Ok(())
}

fn run_configs(run: &RunArgs) -> Result<(TrainConfig, ModelConfig)> {
    let mut train: TrainConfig = match &run.config {
        Some(p) => read_json(p, "training config")?,
        None => TrainConfig::default(),
    };
    let model: ModelConfig = match &run.model {
        Some(p) => read_json(p, "model config")?,
        None => ModelConfig::default(),
    };
    if let Some(e) = run.max_epochs {
        train.max_epochs = e;
    }
    if let Some(lr) = run.learning_rate {
        train.learning_rate = lr;
    }
    Ok((train, model))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let (mut config, model) = run_configs(&a.run)?;
    if let Some(alphas) = a.alphas {
        config.alphas = alphas;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let data = load_dataset(&a.run.data)?;
    let options = FitOptions {
        wall_clock: a.run.wall_clock,
        resume: a.resume,
    };
    let summary = fit(&data, &model, &config, &a.out, options)?;
    println!(
        "epochs: {}, best epoch: {}, early stop: {}",
        summary.epochs,
        summary.best_epoch,
        if summary.stopped_early { "yes" } else { "no" }
    );
    if let Some(last) = summary.history.last() {
        let m = last.val.unwrap_or(last.train);
        println!(
            "final {} loss {:.6}, label acc {:.4}, row acc {:.4}, col acc {:.4}",
            if last.val.is_some() { "val" } else { "train" },
            m.total_loss,
            m.label_acc,
            m.row_acc,
            m.col_acc
        );
    }
    Ok(())
}

pub const EVAL_HEADER: &str = "split,total_loss,label_loss,row_loss,col_loss,l2,label_acc,row_acc,col_acc,consistency";

fn checkpoint_grid(ckpt: &Checkpoint, explicit: Option<&Path>) -> Result<AlphabetGrid> {
    match explicit {
        Some(p) => load_grid_file(p),
        None => ckpt
            .grid()?
            .ok_or_else(|| Error::Usage("checkpoint holds no grid; pass --grid".into())),
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::read(&a.checkpoint)?;
    let grid = checkpoint_grid(&ckpt, None)?;
    let network = ckpt.network()?;
    let (manifest, data) = read_container(&a.data)?;
    if manifest.grid_digest != grid_digest(&grid) {
        return Err(fidel_core::Error::Validation(format!(
            "{} was built for a different grid than the checkpoint",
            a.data.display()
        ))
        .into());
    }
    if manifest.canvas != network.config().canvas {
        return Err(fidel_core::Error::Validation(format!(
            "container canvas {} differs from model canvas {}",
            manifest.canvas,
            network.config().canvas
        ))
        .into());
    }
    let train = ckpt.meta.train.clone().unwrap_or_default();
    let alphas = a.alphas.unwrap_or(train.alphas);
    let dataset = data.to_dataset();
    let m = evaluate(&network, &dataset, alphas, train.l2_lambda)?;
    let consistency = consistency_rate(&network, &dataset, &grid)?;
    println!("{EVAL_HEADER}");
    println!(
        "{},{},{},{},{},{},{},{},{},{}",
        data.split.name(),
        m.total_loss,
        m.label_loss,
        m.row_loss,
        m.col_loss,
        m.l2,
        m.label_acc,
        m.row_acc,
        m.col_acc,
        consistency
    );
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::read(&a.checkpoint)?;
    let grid = checkpoint_grid(&ckpt, a.grid.as_deref())?;
    let network = ckpt.network()?;
    let image = load_image(&a.image, network.config().canvas)?;
    let p = network.predict(&image, &grid)?;
    let mut line = format!(
        "label={} row={} col={} label_conf={:.4} row_conf={:.4} col_conf={:.4} consistent={}",
        p.label, p.row, p.col, p.label_confidence, p.row_confidence, p.col_confidence, p.consistent
    );
    if let Some(name) = grid.glyph_name(p.label) {
        let _ = write!(line, " glyph={name}");
    }
    println!("{line}");
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let grid = match &a.grid {
        Some(p) => load_grid_file(p)?,
        None => AlphabetGrid::default_grid(),
    };
    let mut config: ModelConfig = match &a.config {
        Some(p) => read_json(p, "model config")?,
        None => ModelConfig::default(),
    };
    config.heads = ModelConfig::for_grid(&grid).heads;
    if a.batch == 0 {
        return Err(fidel_core::Error::Validation("batch must be at least 1".into()).into());
    }
    let network = Network::<f64>::build(&config, &grid, a.seed)?;
    let mut rng = RngStream::new(a.seed, domain::GRADCHECK | 2);
    let s = config.canvas;
    let images = Tensor::from_fn(&[a.batch, s, s, 1], |_| rng.uniform());
    let targets = (0..a.batch)
        .map(|_| derive_targets(rng.below(grid.num_labels() as usize) as u16 + 1, &grid))
        .collect::<fidel_core::Result<Vec<_>>>()?;
    let mode = if a.eval_mode {
        Mode::Eval
    } else {
        Mode::Train {
            keep_prob: config.keep_prob,
        }
    };
    let options = GradCheckOptions {
        epsilon: a.epsilon,
        samples_per_tensor: a.samples,
        seed: a.seed,
        ..GradCheckOptions::default()
    };
    let backward = BackwardOptions {
        inject_fault: a.inject_fault,
    };
    let report = check_network_gradients(&network, &images, &targets, a.alphas, a.l2_lambda, mode, backward, options)?;
    println!("{:<18} {:>8} {:>8} {:>14}", "param", "checked", "skipped", "max_rel_error");
    for p in &report.per_param {
        println!("{:<18} {:>8} {:>8} {:>14.3e}", p.name, p.checked, p.skipped, p.max_rel_error);
    }
    let max = report.max_rel_error();
    let worst = report.worst().map_or("-", |p| p.name.as_str());
    println!("max relative error {max:.3e} in {worst} (tolerance {:e})", a.tolerance);
    if max.is_nan() || max > a.tolerance {
        return Err(fidel_core::Error::Validation(format!(
            "gradient check failed: {worst} has relative error {max:.3e}"
        ))
        .into());
    }
    println!("PASS");
    Ok(())
}

pub const SWEEP_HEADER: &str =
    "alphas,seed,epochs,best_epoch,split,total_loss,label_loss,row_loss,col_loss,label_acc,row_acc,col_acc";

pub fn sweep(a: SweepArgs) -> Result<()> {
    let (base, model) = run_configs(&a.run)?;
    let data = load_dataset(&a.run.data)?;
    let mut summary = format!("{SWEEP_HEADER}\n");
    for &alphas in &a.alphas {
        for &seed in &a.seeds {
            let config = TrainConfig {
                alphas,
                seed,
                ..base.clone()
            };
            let dir = a.out.join(run_dir_name(alphas, seed));
            log::info!("run {}", dir.display());
            let options = FitOptions {
                wall_clock: a.run.wall_clock,
                resume: false,
            };
            let result = fit(&data, &model, &config, &dir, options)?;
            let Some(last) = result.history.last() else { continue };
            let (split, m) = match last.val {
                Some(v) => ("val", v),
                None => ("train", last.train),
            };
            let _ = writeln!(
                summary,
                "{} {} {},{seed},{},{},{split},{},{},{},{},{},{},{}",
                alphas[0],
                alphas[1],
                alphas[2],
                result.epochs,
                result.best_epoch,
                m.total_loss,
                m.label_loss,
                m.row_loss,
                m.col_loss,
                m.label_acc,
                m.row_acc,
                m.col_acc
            );
        }
    }
    write_file(&a.out.join("summary.csv"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn series_label(csv: &Path) -> String {
    let config = csv.parent().map(|d| d.join(CONFIG_FILE)).filter(|p| p.exists());
    match config.map(|p| RunConfig::read(&p)) {
        Some(Ok(run)) => format!("{} seed {}", alpha_label(run.train.alphas), run.train.seed),
        _ => csv.display().to_string(),
    }
}

pub fn plot(a: PlotArgs) -> Result<()> {
    let mut series = Vec::new();
    for path in &a.metrics {
        let rows = read_metrics(path)?;
        if rows.is_empty() {
            return Err(fidel_core::Error::Validation(format!("{}: no metrics rows", path.display())).into());
        }
        series.push(Series {
            label: series_label(path),
            rows,
        });
    }
    let timestamp = (!a.deterministic).then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    write_file(&a.out, render_svg(&series, timestamp).as_bytes())
}
