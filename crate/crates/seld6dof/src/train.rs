//! Training loop with per-epoch validation and best-checkpoint selection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use seld6dof_core::accdoa::{encode_targets, AccdoaTarget};
use seld6dof_core::autodiff::Adam;
use seld6dof_core::formats::{decode_checkpoint, encode_checkpoint};
use seld6dof_core::net::{audio_input, sensor_input, Batch, Model, ModelConfig};
use seld6dof_core::sim::{MotionProfile, Split};

use crate::config::{RunConfig, TrainConfig};
use crate::dataset::{featurize, load_scenes, SceneData, Status};
use crate::error::{usage, AppError, Result};
use crate::io;

pub const CHECKPOINT: &str = "checkpoint.s6df";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_LOG: &str = "train_log.csv";

/// Saved next to the checkpoint; enough to rebuild the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model: ModelConfig,
    pub param_count: usize,
    pub train: TrainConfig,
    pub profiles: Vec<MotionProfile>,
    /// Epoch whose weights the checkpoint holds.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub status: Status,
    pub run_dir: PathBuf,
    pub model: ModelFile,
    pub log: Vec<EpochLog>,
}

/// Groups scenes of equal length into batches. Batch order and membership
/// depend only on `rng`.
pub fn make_batches(scenes: &[SceneData], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in scenes.iter().enumerate() {
        by_len.entry(s.frames).or_default().push(i);
    }
    let mut batches = Vec::new();
    for mut idx in by_len.into_values() {
        idx.shuffle(rng);
        batches.extend(idx.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

/// Stacks the selected scenes into network inputs and targets.
pub fn build_batch(scenes: &[SceneData], idx: &[usize], with_sensor: bool) -> Result<Batch> {
    let picked: Vec<&SceneData> = idx.iter().map(|&i| &scenes[i]).collect();
    let maps: Vec<_> = picked.iter().map(|s| &s.features).collect();
    let audio = audio_input(&maps)?;
    let sensor = if with_sensor {
        let mut streams = Vec::with_capacity(picked.len());
        for s in &picked {
            match &s.sensor {
                Some(t) => streams.push(t),
                None => usage!("scene `{}` has no pose file, which the model needs", s.entry.name),
            }
        }
        Some(sensor_input(&streams)?)
    } else {
        None
    };
    let targets = picked.iter().map(|s| encode_targets(&s.labels, s.frames)).collect::<seld6dof_core::Result<Vec<_>>>()?;
    Ok(Batch { audio, sensor, target: AccdoaTarget::concat(&targets) })
}

/// Scene-weighted mean loss over `scenes` in Eval mode.
pub fn mean_loss(model: &Model, scenes: &[SceneData], batch_size: usize) -> Result<f64> {
    let with_sensor = model.config.variant.uses_sensor();
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in scenes.iter().enumerate() {
        by_len.entry(s.frames).or_default().push(i);
    }
    let mut total = 0.0;
    for idx in by_len.values() {
        for chunk in idx.chunks(batch_size) {
            total += model.eval_loss(&build_batch(scenes, chunk, with_sensor)?)? * chunk.len() as f64;
        }
    }
    Ok(total / scenes.len() as f64)
}

/// Trains on `train`, selecting the epoch with the lowest loss on `val`.
/// Returns the best model, the per-epoch log and the best epoch.
pub fn fit(
    config: &ModelConfig,
    tc: &TrainConfig,
    train: &[SceneData],
    val: &[SceneData],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model, Vec<EpochLog>, usize, f64)> {
    if train.is_empty() {
        usage!("no training scenes for the selected profiles");
    }
    if val.is_empty() {
        usage!("no validation scenes for the selected profiles");
    }
    let with_sensor = config.variant.uses_sensor();
    if with_sensor {
        if let Some(s) = train.iter().chain(val).find(|s| s.sensor.is_none()) {
            usage!("variant {} needs pose files, but scene `{}` has none", config.variant.letter(), s.entry.name);
        }
    }
    let mut model = Model::new(config.clone(), tc.seed)?;
    let mut opt = Adam::new(tc.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut log = Vec::with_capacity(tc.epochs);
    let mut best: Option<(usize, f64, Model)> = None;
    for epoch in 1..=tc.epochs {
        let start = Instant::now();
        let mut sum = 0.0;
        for idx in make_batches(train, tc.batch_size, &mut rng) {
            sum += model.train_step(&mut opt, &build_batch(train, &idx, with_sensor)?)? * idx.len() as f64;
        }
        let val_loss = mean_loss(&model, val, tc.batch_size)?;
        if !val_loss.is_finite() {
            return Err(seld6dof_core::Error::Numeric(format!("validation loss is {val_loss} at epoch {epoch}")).into());
        }
        let entry = EpochLog { epoch, train_loss: sum / train.len() as f64, val_loss, seconds: start.elapsed().as_secs_f64() };
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|b| val_loss < b.1) {
            best = Some((epoch, val_loss, model.clone()));
        }
    }
    let (epoch, loss, model) = best.expect("at least one epoch");
    Ok((model, log, epoch, loss))
}

pub fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in log {
        w.serialize(e).map_err(|err| AppError::format(path, err))?;
    }
    let bytes = w.into_inner().map_err(|err| AppError::format(path, err))?;
    io::write_bytes(path, &bytes)
}

pub fn read_log(path: &Path) -> Result<Vec<EpochLog>> {
    let bytes = io::read_bytes(path)?;
    csv::Reader::from_reader(bytes.as_slice()).deserialize().map(|r| r.map_err(|e| AppError::format(path, e))).collect()
}

/// Loads a trained model from a run directory.
pub fn load_model(run_dir: &Path) -> Result<(Model, ModelFile)> {
    let meta: ModelFile = io::read_json(&run_dir.join(MODEL_FILE))?;
    load_checkpoint(&run_dir.join(CHECKPOINT), &meta)
}

pub fn load_checkpoint(path: &Path, meta: &ModelFile) -> Result<(Model, ModelFile)> {
    let records = decode_checkpoint(&io::read_bytes(path)?).map_err(|e| AppError::format(path, e))?;
    let mut model = Model::new(meta.model.clone(), 0)?;
    model.params.load(&records).map_err(|e| AppError::format(path, e))?;
    Ok((model, meta.clone()))
}

/// Featurizes if needed, trains and writes checkpoint, model description and
/// log into the run directory. Skips when the run is already complete with
/// the same settings.
pub fn train(cfg: &RunConfig, force: bool, jobs: usize, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainSummary> {
    let run_dir = &cfg.paths.run_dir;
    let model_path = run_dir.join(MODEL_FILE);
    let profiles = cfg.train.profiles_for(cfg.model.variant);
    if !force && model_path.exists() && run_dir.join(CHECKPOINT).exists() {
        let meta: ModelFile = io::read_json(&model_path)?;
        if meta.model == cfg.model && meta.train == cfg.train {
            let log = read_log(&run_dir.join(TRAIN_LOG))?;
            return Ok(TrainSummary { status: Status::UpToDate, run_dir: run_dir.clone(), model: meta, log });
        }
        usage!("{} holds a run with different settings; pass --force to overwrite", run_dir.display());
    }
    let manifest = cfg.paths.manifest();
    if !manifest.exists() {
        usage!("no dataset at {}; run `simulate` first", manifest.display());
    }
    let (_, index) = featurize(&manifest, &cfg.paths.feature_dir, &cfg.sensor, false, jobs)?;
    let train_set = load_scenes(&cfg.paths.feature_dir, &index, Split::Train, &profiles)?;
    let val_set = load_scenes(&cfg.paths.feature_dir, &index, Split::Val, &profiles)?;
    let (model, log, best_epoch, best_val_loss) = fit(&cfg.model, &cfg.train, &train_set, &val_set, &mut on_epoch)?;
    let meta = ModelFile {
        model: cfg.model.clone(),
        param_count: model.param_count(),
        train: cfg.train.clone(),
        profiles,
        best_epoch,
        best_val_loss,
    };
    io::write_bytes(&run_dir.join(CHECKPOINT), &encode_checkpoint(&model.params)?)?;
    write_log(&run_dir.join(TRAIN_LOG), &log)?;
    io::write_json(&model_path, &meta)?;
    Ok(TrainSummary { status: Status::Created, run_dir: run_dir.clone(), model: meta, log })
}
