//! Dataset generation, feature extraction and loading.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use seld6dof_core::accdoa::FrameLabel;
use seld6dof_core::audio::{extract_features, FeatureMap, Standardizer, HOP, WINDOW};
use seld6dof_core::autodiff::Tensor;
use seld6dof_core::net::TIME_POOL;
use seld6dof_core::sensor::SensorConfig;
use seld6dof_core::sim::{label_time, plan_split, render, MotionProfile, Split, SplitConfig};
use seld6dof_core::{LABEL_FRAME_S, SAMPLE_RATE};

use crate::error::{usage, AppError, Result};
use crate::io::{self, Manifest, ManifestEntry};

/// Runs `f` on a pool of `jobs` workers (0 = one per CPU); results keep input order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Outcome of a command that may find its outputs already present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Created,
    UpToDate,
}

#[derive(Debug, Clone)]
pub struct SimSummary {
    pub status: Status,
    pub manifest: PathBuf,
    /// Scene count per (profile, SNR in dB).
    pub by_condition: BTreeMap<(MotionProfile, i64), usize>,
    pub by_split: BTreeMap<Split, usize>,
}

impl SimSummary {
    fn from_entries(status: Status, manifest: PathBuf, entries: &[ManifestEntry]) -> Self {
        let mut by_condition = BTreeMap::new();
        let mut by_split = BTreeMap::new();
        for e in entries {
            *by_condition.entry((e.profile, e.snr_db.round() as i64)).or_insert(0) += 1;
            *by_split.entry(e.split).or_insert(0) += 1;
        }
        Self { status, manifest, by_condition, by_split }
    }

    pub fn render(&self) -> String {
        let mut s = String::from("profile  snr_db  scenes\n");
        for ((p, snr), n) in &self.by_condition {
            s += &format!("{:<8} {:>6}  {n:>6}\n", p.as_str(), snr);
        }
        let splits: Vec<String> = self.by_split.iter().map(|(k, n)| format!("{} {n}", k.as_str())).collect();
        s += &format!("splits: {}\n", splits.join(", "));
        s
    }
}

/// Renders every planned scene into `out_dir` and writes `manifest.json`
/// last, so an existing manifest marks a complete dataset.
pub fn simulate(cfg: &SplitConfig, out_dir: &Path, force: bool, jobs: usize) -> Result<SimSummary> {
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() && !force {
        let m = Manifest::load(&manifest_path)?;
        return Ok(SimSummary::from_entries(Status::UpToDate, manifest_path, &m.entries));
    }
    let plans = plan_split(cfg)?;
    let entries = parallel_map(&plans, jobs, |plan| {
        let scene = render(&plan.config)?;
        let entry = ManifestEntry {
            name: plan.name.clone(),
            wav: format!("scenes/{}.wav", plan.name),
            labels: format!("scenes/{}_labels.csv", plan.name),
            poses: format!("scenes/{}_poses.csv", plan.name),
            profile: plan.config.profile,
            snr_db: plan.config.snr_db,
            t60: plan.config.t60,
            split: plan.split,
        };
        io::write_wav(&out_dir.join(&entry.wav), &scene.audio, SAMPLE_RATE)?;
        io::write_labels(&out_dir.join(&entry.labels), &scene.label_rows())?;
        io::write_poses(&out_dir.join(&entry.poses), &scene.observed)?;
        Ok(entry)
    })?;
    io::write_json(&manifest_path, &entries)?;
    Ok(SimSummary::from_entries(Status::Created, manifest_path, &entries))
}

/// Index written by [`featurize`]; paths are relative to the feature directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndex {
    pub manifest: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub sensor: SensorConfig,
    pub standardizer: Standardizer,
    pub scenes: Vec<FeatureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub name: String,
    pub features: String,
    /// Absent when the scene has no pose file.
    pub sensor: Option<String>,
    /// Output (label) frames; the feature map has four times as many.
    pub frames: usize,
}

pub const FEATURE_INDEX: &str = "features.json";

/// Number of 100 ms label frames covering `samples` audio samples.
pub fn label_frames(samples: usize) -> usize {
    (samples as f64 / (LABEL_FRAME_S * SAMPLE_RATE as f64) - 1e-9).ceil() as usize
}

/// Pads with zeros so the STFT yields at least `4 · frames` frames.
fn pad_for_frames(wav: &mut [Vec<f64>], frames: usize) {
    let need = (TIME_POOL * frames - 1) * HOP + WINDOW;
    for ch in wav.iter_mut() {
        if ch.len() < need {
            ch.resize(need, 0.0);
        }
    }
}

/// Frame centres of the output grid.
pub fn frame_times(frames: usize) -> Vec<f64> {
    (0..frames).map(label_time).collect()
}

/// Extracts raw features and aligned sensor streams for every scene of the
/// manifest and fits the standardizer on the training split.
pub fn featurize(
    manifest_path: &Path,
    feature_dir: &Path,
    sensor: &SensorConfig,
    force: bool,
    jobs: usize,
) -> Result<(Status, FeatureIndex)> {
    let manifest = Manifest::load(manifest_path)?;
    let index_path = feature_dir.join(FEATURE_INDEX);
    if index_path.exists() && !force {
        let idx: FeatureIndex = io::read_json(&index_path)?;
        if idx.entries == manifest.entries && idx.sensor == *sensor {
            return Ok((Status::UpToDate, idx));
        }
    }
    let results = parallel_map(&manifest.entries, jobs, |e| {
        let wav_path = manifest.resolve(&e.wav);
        let (mut wav, rate) = io::read_wav(&wav_path)?;
        if wav.is_empty() || wav[0].is_empty() {
            return Err(AppError::format(&wav_path, "no audio samples"));
        }
        let frames = label_frames(wav[0].len());
        pad_for_frames(&mut wav, frames);
        let mut map = extract_features(&wav, rate).map_err(|err| AppError::format(&wav_path, err))?;
        map.frames = TIME_POOL * frames;
        map.values.truncate(map.frames * map.channels * map.bins);

        let features = format!("{}.s6ft", e.name);
        io::write_bytes(&feature_dir.join(&features), &seld6dof_core::formats::encode_features(&map)?)?;

        let pose_path = manifest.resolve(&e.poses);
        let sensor_file = if pose_path.exists() {
            let track = io::read_poses(&pose_path)?;
            let times = frame_times(frames);
            let stream = sensor.process(&track, &times).map_err(|err| AppError::format(&pose_path, err))?;
            let name = format!("{}_sensor.csv", e.name);
            io::write_sensor(&feature_dir.join(&name), &times, &stream)?;
            Some(name)
        } else {
            None
        };
        let record = FeatureRecord { name: e.name.clone(), features, sensor: sensor_file, frames };
        Ok((record, (e.split == Split::Train).then_some(map)))
    })?;

    let train_maps: Vec<&FeatureMap> = results.iter().filter_map(|(_, m)| m.as_ref()).collect();
    if train_maps.is_empty() {
        usage!("manifest {} has no training scenes to fit standardization on", manifest_path.display());
    }
    let standardizer = Standardizer::fit(&train_maps)?;
    let index = FeatureIndex {
        manifest: manifest_path.to_path_buf(),
        entries: manifest.entries.clone(),
        sensor: *sensor,
        standardizer,
        scenes: results.into_iter().map(|(r, _)| r).collect(),
    };
    io::write_json(&index_path, &index)?;
    Ok((Status::Created, index))
}

/// One scene ready for the network.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub entry: ManifestEntry,
    /// Standardized `[4 · frames, 7, 64]` features.
    pub features: FeatureMap,
    /// `[frames, 6]`
    pub sensor: Option<Tensor>,
    pub labels: Vec<FrameLabel>,
    pub frames: usize,
}

/// Loads the scenes of `split` restricted to `profiles`.
pub fn load_scenes(feature_dir: &Path, index: &FeatureIndex, split: Split, profiles: &[MotionProfile]) -> Result<Vec<SceneData>> {
    let manifest = Manifest::load(&index.manifest)?;
    let mut out = Vec::new();
    for (entry, rec) in index.entries.iter().zip(&index.scenes) {
        if entry.split != split || !profiles.contains(&entry.profile) {
            continue;
        }
        let fpath = feature_dir.join(&rec.features);
        let mut features =
            seld6dof_core::formats::decode_features(&io::read_bytes(&fpath)?).map_err(|e| AppError::format(&fpath, e))?;
        index.standardizer.apply(&mut features)?;
        let sensor = match &rec.sensor {
            Some(name) => Some(io::read_sensor(&feature_dir.join(name))?.1),
            None => None,
        };
        let labels = io::read_labels(&manifest.resolve(&entry.labels))?;
        out.push(SceneData { entry: entry.clone(), features, sensor, labels, frames: rec.frames });
    }
    Ok(out)
}
