//! Inference, decoding and metric computation over a dataset split.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seld6dof_core::accdoa::{decode, encode_targets, DecodeConfig};
use seld6dof_core::metrics::{ClassReport, Detection, MetricAccumulator, MetricConfig, MetricReport};
use seld6dof_core::net::Variant;
use seld6dof_core::sim::{MotionProfile, Split};

use crate::config::RunConfig;
use crate::dataset::{featurize, load_scenes, SceneData, Status};
use crate::error::{usage, Result};
use crate::io;
use crate::train::{load_checkpoint, ModelFile, MODEL_FILE};

/// Settings that must agree for two evaluations to be comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub metrics: MetricConfig,
    pub decode: DecodeConfig,
    pub split: Split,
    /// Absent for externally supplied predictions.
    pub variant: Option<Variant>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetReport {
    /// `all` or a motion profile name.
    pub subset: String,
    pub scenes: usize,
    #[serde(flatten)]
    pub report: MetricReport,
}

/// Evaluation result; the top-level scores cover all scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub er: f64,
    pub f1: f64,
    pub le_cd: f64,
    pub lr_cd: f64,
    pub per_class: Vec<ClassReport>,
    pub config: EvalConfig,
    pub subsets: Vec<SubsetReport>,
}

impl EvalReport {
    pub fn subset(&self, name: &str) -> Option<&SubsetReport> {
        self.subsets.iter().find(|s| s.subset == name)
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<6} {:>6} {:>7} {:>7} {:>8} {:>7}\n", "subset", "scenes", "ER", "F", "LE_CD", "LR_CD");
        for r in &self.subsets {
            let m = &r.report;
            let le = if m.le_undefined { "-".to_string() } else { format!("{:.2}", m.le_cd) };
            s += &format!("{:<6} {:>6} {:>7.3} {:>7.2} {:>8} {:>7.2}\n", r.subset, r.scenes, m.er, m.f1, le, m.lr_cd);
        }
        s
    }
}

pub const SUBSETS: [&str; 4] = ["all", "stat", "3dof", "6dof"];

/// Scores predictions for `scenes`. `predict` returns the flattened
/// `[frames, 3, 12, 3]` network output of one scene. Estimates are written
/// as CSV into `estimates_dir` when given.
pub fn evaluate(
    scenes: &[SceneData],
    mut predict: impl FnMut(&SceneData) -> Result<Vec<f64>>,
    config: EvalConfig,
    estimates_dir: Option<&Path>,
) -> Result<EvalReport> {
    let mut accs = SUBSETS.iter().map(|_| MetricAccumulator::new(config.metrics)).collect::<seld6dof_core::Result<Vec<_>>>()?;
    let mut counts = [0usize; 4];
    for scene in scenes {
        let frames = scene.frames;
        let pred = predict(scene)?;
        let est = decode(&pred, frames, &config.decode)?;
        if let Some(dir) = estimates_dir {
            io::write_estimates(&dir.join(format!("{}.csv", scene.entry.name)), &est)?;
        }
        let refs: Vec<Detection> = scene.labels.iter().filter(|l| l.frame < frames).map(Detection::from).collect();
        let preds: Vec<Detection> = est.iter().map(Detection::from).collect();
        let k = 1 + MotionProfile::ALL.iter().position(|p| *p == scene.entry.profile).expect("known profile");
        for i in [0, k] {
            accs[i].add(&refs, &preds, frames)?;
            counts[i] += 1;
        }
    }
    let subsets: Vec<SubsetReport> = SUBSETS
        .iter()
        .zip(&accs)
        .zip(counts)
        .map(|((name, acc), n)| SubsetReport { subset: name.to_string(), scenes: n, report: acc.report() })
        .collect();
    let all = subsets[0].report.clone();
    Ok(EvalReport { er: all.er, f1: all.f1, le_cd: all.le_cd, lr_cd: all.lr_cd, per_class: all.per_class, config, subsets })
}

pub fn report_path(run_dir: &Path, split: Split) -> PathBuf {
    run_dir.join(format!("eval_{}.json", split.as_str()))
}

fn split_scenes(cfg: &RunConfig, split: Split, jobs: usize) -> Result<Vec<SceneData>> {
    let manifest = cfg.paths.manifest();
    if !manifest.exists() {
        usage!("no dataset at {}; run `simulate` first", manifest.display());
    }
    let (_, index) = featurize(&manifest, &cfg.paths.feature_dir, &cfg.sensor, false, jobs)?;
    let scenes = load_scenes(&cfg.paths.feature_dir, &index, split, &MotionProfile::ALL)?;
    if scenes.is_empty() {
        usage!("split `{}` has no scenes", split.as_str());
    }
    Ok(scenes)
}

/// Encodes the reference labels as network outputs: the score of a perfect
/// model, used to check the decode and scoring chain.
pub fn oracle_prediction(scene: &SceneData) -> Result<Vec<f64>> {
    Ok(encode_targets(&scene.labels, scene.frames)?.dense())
}

/// Scores oracle predictions on `split`; writes nothing.
pub fn eval_oracle(cfg: &RunConfig, split: Split, jobs: usize) -> Result<EvalReport> {
    let scenes = split_scenes(cfg, split, jobs)?;
    let config = EvalConfig { metrics: cfg.metrics, decode: cfg.decode, split, variant: None, seed: None };
    evaluate(&scenes, oracle_prediction, config, None)
}

/// Evaluates the checkpoint of the run directory (or `checkpoint` when given)
/// on `split`, writing estimates and `eval_<split>.json` into the run
/// directory.
pub fn eval(cfg: &RunConfig, split: Split, checkpoint: Option<&Path>, force: bool, jobs: usize) -> Result<(Status, EvalReport)> {
    let run_dir = &cfg.paths.run_dir;
    let out = report_path(run_dir, split);
    if out.exists() && !force && checkpoint.is_none() {
        return Ok((Status::UpToDate, io::read_json(&out)?));
    }
    let model_path = run_dir.join(MODEL_FILE);
    if !model_path.exists() {
        usage!("no trained model in {}; run `train` first", run_dir.display());
    }
    let meta: ModelFile = io::read_json(&model_path)?;
    let ckpt = checkpoint.map_or_else(|| run_dir.join(crate::train::CHECKPOINT), Path::to_path_buf);
    if !ckpt.exists() {
        usage!("checkpoint {} does not exist", ckpt.display());
    }
    let (model, meta) = load_checkpoint(&ckpt, &meta)?;
    let scenes = split_scenes(cfg, split, jobs)?;
    let needs_sensor = model.config.variant.uses_sensor();
    if needs_sensor {
        if let Some(s) = scenes.iter().find(|s| s.sensor.is_none()) {
            usage!("variant {} needs pose files, but scene `{}` has none", model.config.variant.letter(), s.entry.name);
        }
    }
    let config = EvalConfig {
        metrics: cfg.metrics,
        decode: cfg.decode,
        split,
        variant: Some(meta.model.variant),
        seed: Some(meta.train.seed),
    };
    let est_dir = run_dir.join(format!("estimates_{}", split.as_str()));
    let report = evaluate(
        &scenes,
        |s| Ok(model.predict(&s.features, if needs_sensor { s.sensor.as_ref() } else { None })?),
        config,
        Some(&est_dir),
    )?;
    io::write_json(&out, &report)?;
    Ok((Status::Created, report))
}
