//! Causal SELD network with optional head-motion branch.
//!
//! The audio branch is three causal conv blocks that turn 25 ms feature
//! frames into 100 ms output frames. The sensor branch is a causal 1-D
//! residual CNN running on 100 ms frames. Their outputs are concatenated
//! per frame and fed through a uni-directional GRU and a tanh head in
//! Multi-ACCDOA layout. Every layer is causal in time, and in [`Mode::Eval`]
//! the output at frame `t` depends only on audio frames `<= 4t + 3` and
//! sensor frames `<= t`.

pub mod layers;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::accdoa::{adpit_loss, AccdoaTarget, FRAME_SIZE};
use crate::audio::{FeatureMap, AUDIO_CHANNELS, FEATURE_BINS};
use crate::autodiff::{Adam, Graph, ParamStore, Tensor, Var};
use crate::error::{bail, Error};
use crate::sensor::SENSOR_CHANNELS;
use crate::{Result, NUM_CLASSES, NUM_TRACKS};

pub use layers::{joint_dim, AudioBlock, BatchNorm, Gru, Init, Linear, MmtmBlock, Mode, ResBlock};

/// Audio frames per output frame.
pub const TIME_POOL: usize = 4;
const AUDIO_POOLS: [(usize, usize); 3] = [(TIME_POOL, 4), (1, 4), (1, 2)];
const FREQ_REDUCTION: usize = 4 * 4 * 2;

/// Model variants compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Variant {
    /// Audio-only baseline, trained on static scenes only.
    #[cfg_attr(feature = "serde", serde(rename = "A"))]
    BaselineStat,
    /// Audio-only baseline.
    #[cfg_attr(feature = "serde", serde(rename = "B"))]
    Baseline,
    /// Audio-only with squeeze-and-excitation after each conv block.
    #[cfg_attr(feature = "serde", serde(rename = "C"))]
    AudioSe,
    /// Sensor CNN output concatenated before the GRU.
    #[cfg_attr(feature = "serde", serde(rename = "D"))]
    SensorConcat,
    /// Sensor CNN fused with MMTM after each block, then concatenated.
    #[cfg_attr(feature = "serde", serde(rename = "E"))]
    SensorMmtm,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::BaselineStat, Variant::Baseline, Variant::AudioSe, Variant::SensorConcat, Variant::SensorMmtm];

    pub fn uses_sensor(self) -> bool {
        matches!(self, Variant::SensorConcat | Variant::SensorMmtm)
    }

    pub fn letter(self) -> char {
        match self {
            Variant::BaselineStat => 'A',
            Variant::Baseline => 'B',
            Variant::AudioSe => 'C',
            Variant::SensorConcat => 'D',
            Variant::SensorMmtm => 'E',
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::BaselineStat => "baseline (static training data)",
            Variant::Baseline => "baseline",
            Variant::AudioSe => "audio SE",
            Variant::SensorConcat => "sensor concat",
            Variant::SensorMmtm => "sensor MMTM",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "a" | "baseline_stat" => Variant::BaselineStat,
            "b" | "baseline" => Variant::Baseline,
            "c" | "audio_se" => Variant::AudioSe,
            "d" | "sensor_concat" => Variant::SensorConcat,
            "e" | "sensor_mmtm" => Variant::SensorMmtm,
            _ => bail!(Config, "unknown model variant `{s}` (expected A, B, C, D or E)"),
        })
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_channels: usize,
    pub input_bins: usize,
    /// Filters of each of the three audio conv blocks.
    pub audio_channels: usize,
    pub sensor_filters: [usize; 3],
    pub sensor_kernel: usize,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub bn_eps: f64,
    /// Weight of the current batch in running batch-norm statistics.
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SensorMmtm,
            input_channels: AUDIO_CHANNELS,
            input_bins: FEATURE_BINS,
            audio_channels: 64,
            sensor_filters: [64, 32, 16],
            sensor_kernel: 5,
            gru_hidden: 128,
            gru_layers: 2,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.audio_channels == 0 || self.gru_hidden == 0 || self.gru_layers == 0 {
            bail!(Config, "channel counts and GRU size must be positive");
        }
        if self.input_bins == 0 || self.input_bins % FREQ_REDUCTION != 0 {
            bail!(Config, "input bins {} must be a positive multiple of {FREQ_REDUCTION}", self.input_bins);
        }
        if self.sensor_filters.contains(&0) || self.sensor_kernel == 0 {
            bail!(Config, "sensor filters {:?} and kernel {} must be positive", self.sensor_filters, self.sensor_kernel);
        }
        if !(self.bn_eps > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            bail!(Config, "batch-norm eps must be positive and momentum in (0, 1]");
        }
        Ok(())
    }

    /// Width of the flattened audio embedding per output frame.
    pub fn audio_embedding(&self) -> usize {
        self.audio_channels * self.input_bins / FREQ_REDUCTION
    }

    fn gru_input(&self) -> usize {
        self.audio_embedding() + if self.variant.uses_sensor() { self.sensor_filters[2] } else { 0 }
    }
}

/// Network parameters and structure.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    audio: Vec<AudioBlock>,
    sensor: Vec<ResBlock>,
    fusion: Vec<MmtmBlock>,
    gru: Gru,
    head: Linear,
}

impl Model {
    /// Builds the model with PyTorch-style default initialization drawn from
    /// a seeded ChaCha8 stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init { store: &mut params, rng: ChaCha8Rng::seed_from_u64(seed) };
        let eps = config.bn_eps;
        let c = config.audio_channels;

        let audio = AUDIO_POOLS
            .iter()
            .enumerate()
            .map(|(i, &pool)| {
                let c_in = if i == 0 { config.input_channels } else { c };
                AudioBlock::new(&mut init, &format!("audio.{i}"), c_in, c, pool, eps)
            })
            .collect();
        let mut sensor = Vec::new();
        if config.variant.uses_sensor() {
            let mut c_in = SENSOR_CHANNELS;
            for (i, &c_out) in config.sensor_filters.iter().enumerate() {
                sensor.push(ResBlock::new(&mut init, &format!("sensor.{i}"), c_in, c_out, config.sensor_kernel, eps));
                c_in = c_out;
            }
        }
        let fusion = match config.variant {
            Variant::AudioSe => (0..3).map(|i| MmtmBlock::new(&mut init, &format!("se.{i}"), c, 0)).collect(),
            Variant::SensorMmtm => config
                .sensor_filters
                .iter()
                .enumerate()
                .map(|(i, &c_s)| MmtmBlock::new(&mut init, &format!("mmtm.{i}"), c, c_s))
                .collect(),
            _ => Vec::new(),
        };
        let gru = Gru::new(&mut init, "gru", config.gru_input(), config.gru_hidden, config.gru_layers);
        let head = Linear::new(&mut init, "head", config.gru_hidden, FRAME_SIZE, true);
        Ok(Self { config, params, audio, sensor, fusion, gru, head })
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.num_trainable()
    }

    pub fn fusion_blocks(&self) -> &[MmtmBlock] {
        &self.fusion
    }

    /// Records the forward pass.
    ///
    /// `audio` is `[b, channels, t, bins]`; `sensor` is `[b, 6, t / 4]` and
    /// must be present exactly for the sensor variants. The output is
    /// `[b, t / 4, 3, 12, 3]` with values in `[-1, 1]`.
    pub fn forward(&self, g: &mut Graph, audio: Var, sensor: Option<Var>, mode: Mode) -> Result<Var> {
        self.forward_with(&self.params, g, audio, sensor, mode)
    }

    /// [`Model::forward`] with an alternative store of the same layout.
    pub fn forward_with(&self, params: &ParamStore, g: &mut Graph, audio: Var, sensor: Option<Var>, mode: Mode) -> Result<Var> {
        let cfg = &self.config;
        let sa = g.shape(audio).to_vec();
        if sa.len() != 4 || sa[1] != cfg.input_channels || sa[3] != cfg.input_bins {
            bail!(Dimension, "audio input must be [b, {}, t, {}], got {:?}", cfg.input_channels, cfg.input_bins, sa);
        }
        let (b, t_out) = (sa[0], sa[2] / TIME_POOL);
        if t_out == 0 {
            bail!(Dimension, "audio input has {} frames, need at least {TIME_POOL}", sa[2]);
        }
        match (cfg.variant.uses_sensor(), sensor) {
            (true, None) => bail!(Config, "variant {} needs sensor input", cfg.variant),
            (false, Some(_)) => bail!(Config, "variant {} takes audio only", cfg.variant),
            (true, Some(s)) if g.shape(s) != [b, SENSOR_CHANNELS, t_out] => {
                bail!(Dimension, "sensor input must be [{b}, {SENSOR_CHANNELS}, {t_out}], got {:?}", g.shape(s))
            }
            _ => {}
        }

        let (mut a, mut s) = (audio, sensor);
        for i in 0..AUDIO_POOLS.len() {
            a = self.audio[i].apply(g, params, a, mode)?;
            if let Some(sv) = s {
                s = Some(self.sensor[i].apply(g, params, sv, mode)?);
            }
            if let Some(block) = self.fusion.get(i) {
                let gated_sensor = if block.c_s > 0 { s } else { None };
                let (ga, gs) = block.fuse(g, params, a, gated_sensor)?;
                a = ga;
                if gs.is_some() {
                    s = gs;
                }
            }
        }

        // [b, c, t', f'] to per-frame embeddings [b, t', c·f']
        let a = g.permute(a, &[0, 2, 1, 3])?;
        let mut x = g.reshape(a, &[b, t_out, cfg.audio_embedding()])?;
        if let Some(sv) = s {
            let sv = g.permute(sv, &[0, 2, 1])?;
            x = g.concat(&[x, sv], 2)?;
        }
        let h = self.gru.apply(g, params, x)?;
        let rows = g.reshape(h, &[b * t_out, cfg.gru_hidden])?;
        let y = self.head.apply(g, params, rows)?;
        let y = g.tanh(y);
        g.reshape(y, &[b, t_out, NUM_TRACKS, NUM_CLASSES, 3])
    }

    /// Multi-ACCDOA loss of a batch; `batch.target` holds the `b · t'`
    /// frames in batch order.
    pub fn loss(&self, g: &mut Graph, batch: &Batch, mode: Mode) -> Result<Var> {
        let audio = g.leaf(&batch.audio);
        let sensor = batch.sensor.as_ref().map(|s| g.leaf(s));
        let pred = self.forward(g, audio, sensor, mode)?;
        adpit_loss(g, pred, &batch.target)
    }

    /// One Adam step on `batch`; returns the loss before the update.
    pub fn train_step(&mut self, opt: &mut Adam, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.loss(&mut g, batch, Mode::Train)?;
        let value = g.value(loss)[0];
        if !value.is_finite() {
            bail!(Numeric, "training loss is {value}");
        }
        g.backward(loss)?;
        self.params.zero_grad();
        self.params.accumulate_grads(&g);
        opt.step(&mut self.params);
        self.params.apply_stat_updates(&g, self.config.bn_momentum);
        Ok(value)
    }

    /// Loss with frozen batch-norm statistics.
    pub fn eval_loss(&self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.loss(&mut g, batch, Mode::Eval)?;
        Ok(g.value(loss)[0])
    }

    /// Inference on one clip: `[t', 3, 12, 3]` values, flattened.
    pub fn predict(&self, audio: &FeatureMap, sensor: Option<&Tensor>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let a = g.leaf(&audio_input(&[audio])?);
        let s = match sensor {
            Some(s) => Some(g.leaf(&sensor_input(&[s])?)),
            None => None,
        };
        let y = self.forward(&mut g, a, s, Mode::Eval)?;
        Ok(g.value(y).to_vec())
    }
}

/// Network inputs with their Multi-ACCDOA targets.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[b, channels, t, bins]`
    pub audio: Tensor,
    /// `[b, 6, t / 4]`
    pub sensor: Option<Tensor>,
    pub target: AccdoaTarget,
}

/// Stacks `[t, c, f]` feature maps of equal size into `[b, c, t, f]`.
pub fn audio_input(maps: &[&FeatureMap]) -> Result<Tensor> {
    let Some(first) = maps.first() else { bail!(Dimension, "empty batch") };
    let (t, c, f) = (first.frames, first.channels, first.bins);
    let mut data = vec![0.0; maps.len() * c * t * f];
    for (bi, m) in maps.iter().enumerate() {
        if (m.frames, m.channels, m.bins) != (t, c, f) {
            bail!(Dimension, "feature maps differ in shape: [{t}, {c}, {f}] vs [{}, {}, {}]", m.frames, m.channels, m.bins);
        }
        for ti in 0..t {
            for ci in 0..c {
                let src = &m.values[(ti * c + ci) * f..][..f];
                data[((bi * c + ci) * t + ti) * f..][..f].copy_from_slice(src);
            }
        }
    }
    Tensor::new(&[maps.len(), c, t, f], data)
}

/// Stacks `[t', 6]` sensor streams into `[b, 6, t']`.
pub fn sensor_input(seqs: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = seqs.first() else { bail!(Dimension, "empty batch") };
    let shape = first.shape().to_vec();
    if shape.len() != 2 || shape[1] != SENSOR_CHANNELS {
        bail!(Dimension, "sensor stream must be [t, {SENSOR_CHANNELS}], got {:?}", shape);
    }
    let t = shape[0];
    let mut data = vec![0.0; seqs.len() * SENSOR_CHANNELS * t];
    for (bi, s) in seqs.iter().enumerate() {
        if s.shape() != shape.as_slice() {
            bail!(Dimension, "sensor streams differ in shape: {:?} vs {:?}", shape, s.shape());
        }
        for (ti, row) in s.data().chunks(SENSOR_CHANNELS).enumerate() {
            for (ci, v) in row.iter().enumerate() {
                data[(bi * SENSOR_CHANNELS + ci) * t + ti] = *v;
            }
        }
    }
    Tensor::new(&[seqs.len(), SENSOR_CHANNELS, t], data)
}
