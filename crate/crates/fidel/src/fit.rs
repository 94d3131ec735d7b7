//! Training runs on disk: dataset loading, per-epoch metrics, best and last
//! checkpoints, and resumption.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fidel_core::glyph::{SplitKind, TensorDataset};
use fidel_core::train::MetricsRecord;
use fidel_core::{AlphabetGrid, ModelConfig, Network, TrainConfig, TrainState};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::container::{container_path, grid_digest, read_container, read_grid, DatasetManifest};
use crate::error::{read_text, write_file, Error, Result};
use crate::metrics::{record_lines, METRICS_HEADER};

pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const CONFIG_FILE: &str = "config.json";

/// The effective configuration of a run, written as `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::format("run config", 0, format!("{}: {e}", path.display())))
    }
}

pub struct Dataset {
    pub manifest: DatasetManifest,
    pub grid: AlphabetGrid,
    pub train: TensorDataset,
    pub val: Option<TensorDataset>,
}

/// Loads `train.amcr`, `val.amcr` when present, and the grid of a dataset
/// directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let grid = read_grid(dir)?;
    let digest = grid_digest(&grid);
    let load = |split: SplitKind| -> Result<(DatasetManifest, TensorDataset)> {
        let path = container_path(dir, split);
        let (manifest, data) = read_container(&path)?;
        if manifest.grid_digest != digest {
            return Err(fidel_core::Error::Validation(format!(
                "{} was built for a different grid than {}",
                path.display(),
                dir.join(crate::container::GRID_FILE).display()
            ))
            .into());
        }
        data.check_targets(&grid)?;
        Ok((manifest, data.to_dataset()))
    };
    let (manifest, train) = load(SplitKind::Train)?;
    let val = if container_path(dir, SplitKind::Val).exists() {
        Some(load(SplitKind::Val)?.1)
    } else {
        None
    };
    Ok(Dataset { manifest, grid, train, val })
}

/// `model` with head sizes from `grid` and dropout from `train`.
pub fn model_for(model: &ModelConfig, grid: &AlphabetGrid, train: &TrainConfig) -> ModelConfig {
    let mut m = model.clone();
    m.heads = ModelConfig::for_grid(grid).heads;
    m.keep_prob = train.keep_prob;
    m
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Record measured epoch durations in the metrics CSV instead of zeros.
    pub wall_clock: bool,
    /// Continue from `last.ckpt` when the output directory has one.
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub out_dir: PathBuf,
    /// Records of the epochs run by this call.
    pub history: Vec<MetricsRecord>,
    pub epochs: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn checkpoint_meta(state: &TrainState<f32>, grid: &AlphabetGrid, epoch: usize) -> CheckpointMeta {
    CheckpointMeta {
        model: state.network.config().clone(),
        train: Some(state.config.clone()),
        epoch,
        optimizer_step: state.optimizer.step,
        stopping: None,
        grid: Some(grid.to_file_string()),
    }
}

fn resume_state(out: &Path, model: &ModelConfig, train: &TrainConfig) -> Result<Option<(TrainState<f32>, String)>> {
    let last = out.join(LAST_CHECKPOINT);
    if !last.exists() {
        return Ok(None);
    }
    let mut state = Checkpoint::read(&last)?.into_state()?;
    let same = TrainConfig {
        max_epochs: state.config.max_epochs,
        ..train.clone()
    };
    if same != state.config || state.network.config() != model {
        return Err(Error::Usage(format!(
            "{} was written with a different configuration; use a fresh output directory",
            last.display()
        )));
    }
    state.config.max_epochs = train.max_epochs;
    let text = read_text(&out.join(METRICS_FILE))?;
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        let keep = i == 0
            || line
                .split(',')
                .next()
                .and_then(|e| e.parse::<usize>().ok())
                .is_some_and(|e| e <= state.epoch);
        if keep {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    Ok(Some((state, kept)))
}

/// Trains until `max_epochs` or early stopping, writing `metrics.csv`,
/// `config.json`, `last.ckpt` after every epoch and `best.ckpt` whenever the
/// monitored loss improves.
pub fn fit(data: &Dataset, model: &ModelConfig, train: &TrainConfig, out: &Path, options: FitOptions) -> Result<FitSummary> {
    train.validate()?;
    let model = model_for(model, &data.grid, train);
    if model.canvas != data.manifest.canvas {
        return Err(fidel_core::Error::Validation(format!(
            "model canvas {} does not match dataset canvas {}",
            model.canvas, data.manifest.canvas
        ))
        .into());
    }
    model.validate(Some(&data.grid))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let resumed = if options.resume { resume_state(out, &model, train)? } else { None };
    let (mut state, csv_text) = match resumed {
        Some((state, text)) => {
            log::info!("resuming after epoch {}", state.epoch);
            (state, text)
        }
        None => {
            let network = Network::build(&model, &data.grid, train.seed)?;
            (TrainState::new(network, train.clone())?, format!("{METRICS_HEADER}\n"))
        }
    };
    let run = RunConfig {
        train: state.config.clone(),
        model: model.clone(),
    };
    let mut config_json = serde_json::to_string_pretty(&run).expect("config serializes");
    config_json.push('\n');
    write_file(&out.join(CONFIG_FILE), config_json.as_bytes())?;

    let metrics_path = out.join(METRICS_FILE);
    write_file(&metrics_path, csv_text.as_bytes())?;
    let mut csv = std::fs::OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;

    let mut history = Vec::new();
    let mut stopped_early = state.epoch > 0 && state.stopping.since_best >= state.stopping.patience;
    while !stopped_early && !state.finished() {
        let started = Instant::now();
        let mut outcome = state.run_epoch(&data.train, data.val.as_ref())?;
        let seconds = started.elapsed().as_secs_f64();
        if options.wall_clock {
            outcome.record.seconds = seconds;
        }
        let r = &outcome.record;
        match &r.val {
            Some(v) => log::info!(
                "epoch {}: train loss {:.4} acc {:.3} | val loss {:.4} acc {:.3} ({seconds:.1}s)",
                r.epoch,
                r.train.total_loss,
                r.train.label_acc,
                v.total_loss,
                v.label_acc
            ),
            None => log::info!(
                "epoch {}: train loss {:.4} acc {:.3} ({seconds:.1}s)",
                r.epoch,
                r.train.total_loss,
                r.train.label_acc
            ),
        }
        csv.write_all(record_lines(r).as_bytes()).map_err(|e| Error::io(&metrics_path, e))?;
        if outcome.improved {
            let meta = checkpoint_meta(&state, &data.grid, state.epoch);
            Checkpoint::from_network(&state.best, meta).write(&out.join(BEST_CHECKPOINT))?;
        }
        Checkpoint::from_state(&state, &data.grid).write(&out.join(LAST_CHECKPOINT))?;
        history.push(outcome.record);
        if outcome.stop {
            stopped_early = true;
            log::info!(
                "early stop after epoch {}; best epoch {}",
                state.epoch,
                state.stopping.best_epoch
            );
            break;
        }
    }
    csv.flush().map_err(|e| Error::io(&metrics_path, e))?;
    Ok(FitSummary {
        out_dir: out.to_path_buf(),
        history,
        epochs: state.epoch,
        best_epoch: state.stopping.best_epoch,
        stopped_early,
    })
}
