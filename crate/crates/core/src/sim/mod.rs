//! Synthetic 6DoF scenes: a moving listener wearing a four-mic rig, fixed
//! point sources playing class-labelled clips, diffuse noise at a set SNR,
//! and head-relative labels on the 100 ms grid.

mod clip;
mod split;
mod trajectory;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub use clip::{class_am_hz, class_center_hz, synth_event_clip};
pub use split::{plan_split, ScenePlan, Split, SplitConfig};
pub use trajectory::{gen_trajectory, TRUTH_RATE};

use crate::accdoa::FrameLabel;
use crate::error::bail;
use crate::geometry::{self, norm, pose_from_trackers, sub, to_head_frame, Pose, TrackerLayout, Vec3};
use crate::math;
use crate::sensor::sample_track;
use crate::{Error, Result, LABEL_FRAME_S, NUM_CLASSES, NUM_TRACKS, SAMPLE_RATE, SPEED_OF_SOUND};

pub const SNR_CHOICES: [f64; 3] = [6.0, 10.0, 20.0];
pub const T60_CHOICES: [f64; 3] = [0.12, 0.30, 0.41];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MotionProfile {
    #[cfg_attr(feature = "serde", serde(rename = "stat"))]
    Stat,
    #[cfg_attr(feature = "serde", serde(rename = "3dof"))]
    ThreeDof,
    #[cfg_attr(feature = "serde", serde(rename = "6dof"))]
    SixDof,
}

impl MotionProfile {
    pub const ALL: [MotionProfile; 3] = [MotionProfile::Stat, MotionProfile::ThreeDof, MotionProfile::SixDof];

    pub fn as_str(&self) -> &'static str {
        match self {
            MotionProfile::Stat => "stat",
            MotionProfile::ThreeDof => "3dof",
            MotionProfile::SixDof => "6dof",
        }
    }
}

impl fmt::Display for MotionProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stat" => Ok(MotionProfile::Stat),
            "3dof" => Ok(MotionProfile::ThreeDof),
            "6dof" => Ok(MotionProfile::SixDof),
            _ => Err(Error::Config(alloc::format!("unknown motion profile {s:?} (expected stat, 3dof or 6dof)"))),
        }
    }
}

/// Head-frame microphone offsets in channel order (left-front, left-back,
/// right-front, right-back).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MicLayout(pub [Vec3; 4]);

impl Default for MicLayout {
    fn default() -> Self {
        Self([[0.04, 0.09, 0.0], [-0.04, 0.09, 0.0], [0.04, -0.09, 0.0], [-0.04, -0.09, 0.0]])
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneConfig {
    pub duration: f64,
    pub profile: MotionProfile,
    pub snr_db: f64,
    pub t60: f64,
    pub n_events: usize,
    pub class_count: usize,
    pub seed: u64,
    pub mic_layout: MicLayout,
    pub move_radius: f64,
    /// First-order wall reflections.
    pub echoes: bool,
    /// Diffuse noise; disabling it is meant for diagnostics.
    pub noise: bool,
    pub event_min_s: f64,
    pub event_max_s: f64,
    pub tracker_rate: f64,
    pub tracker_noise_m: f64,
    pub tracker_layout: TrackerLayout,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            duration: 6.0,
            profile: MotionProfile::Stat,
            snr_db: 20.0,
            t60: 0.30,
            n_events: 4,
            class_count: NUM_CLASSES,
            seed: 0,
            mic_layout: MicLayout::default(),
            move_radius: 0.75,
            echoes: true,
            noise: true,
            event_min_s: 1.0,
            event_max_s: 2.5,
            tracker_rate: 40.0,
            tracker_noise_m: 3e-4,
            tracker_layout: TrackerLayout::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            bail!(Config, "scene duration must be positive");
        }
        if !SNR_CHOICES.contains(&self.snr_db) {
            bail!(Config, "snr_db must be one of {:?}, got {}", SNR_CHOICES, self.snr_db);
        }
        if !T60_CHOICES.contains(&self.t60) {
            bail!(Config, "t60 must be one of {:?}, got {}", T60_CHOICES, self.t60);
        }
        if self.class_count == 0 || self.class_count > NUM_CLASSES {
            bail!(Config, "class_count must be in 1..={NUM_CLASSES}");
        }
        if !(self.event_min_s > 0.0 && self.event_min_s <= self.event_max_s) {
            bail!(Config, "event length range [{}, {}] is invalid", self.event_min_s, self.event_max_s);
        }
        if !(self.tracker_rate > 0.0) || !(self.tracker_noise_m >= 0.0) {
            bail!(Config, "tracker rate must be positive and noise non-negative");
        }
        Ok(())
    }

    /// Number of label frames, `ceil(duration / 0.1)`.
    pub fn label_frames(&self) -> usize {
        math::ceil(self.duration / LABEL_FRAME_S - 1e-9) as usize
    }

    pub fn samples(&self) -> usize {
        math::round(self.duration * SAMPLE_RATE as f64) as usize
    }
}

/// One placed sound event.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneEvent {
    pub class_id: usize,
    pub track_id: usize,
    pub onset: f64,
    pub offset: f64,
    pub source: Vec3,
    pub clip_seed: u64,
}

/// Labels of one event: head-relative direction per active label frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLabel {
    pub class_id: usize,
    pub track_id: usize,
    pub onset: f64,
    pub offset: f64,
    pub frames: Vec<(usize, geometry::DoaVector)>,
}

/// Centre time of label frame `k`.
pub fn label_time(k: usize) -> f64 {
    (k as f64 + 0.5) * LABEL_FRAME_S
}

/// A rendered scene with its separate clean and noise stems.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub audio: Vec<Vec<f64>>,
    pub clean: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub events: Vec<SceneEvent>,
    pub labels: Vec<EventLabel>,
    pub truth: Vec<Pose>,
    pub observed: Vec<Pose>,
}

impl Scene {
    /// Flat per-frame label rows sorted by (frame, class, track).
    pub fn label_rows(&self) -> Vec<FrameLabel> {
        let mut rows: Vec<FrameLabel> = self
            .labels
            .iter()
            .flat_map(|l| {
                l.frames.iter().map(move |(f, d)| FrameLabel { frame: *f, class: l.class_id, track: l.track_id, doa: *d })
            })
            .collect();
        rows.sort_by_key(|r| (r.frame, r.class, r.track));
        rows
    }

    /// Samples where any event is sounding at its source.
    pub fn active_mask(&self) -> Vec<bool> {
        let n = self.clean[0].len();
        let fs = SAMPLE_RATE as f64;
        let mut mask = vec![false; n];
        for e in &self.events {
            let a = math::round(e.onset * fs) as usize;
            let b = (math::round(e.offset * fs) as usize).min(n);
            mask[a.min(n)..b].iter_mut().for_each(|m| *m = true);
        }
        mask
    }
}

/// Active-sample SNR in dB between two stems on one channel.
pub fn measured_snr_db(clean: &[f64], noise: &[f64], mask: &[bool]) -> f64 {
    let (mut es, mut en) = (0.0, 0.0);
    for ((c, n), &m) in clean.iter().zip(noise).zip(mask) {
        if m {
            es += c * c;
            en += n * n;
        }
    }
    10.0 * math::log10(es / en)
}

/// Largest number of intervals covering a common instant.
fn max_overlap(iv: &[(f64, f64)]) -> usize {
    iv.iter().map(|&(s, _)| iv.iter().filter(|&&(a, b)| a <= s && s < b).count()).max().unwrap_or(0)
}

fn place_events(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<SceneEvent>> {
    let fs = SAMPLE_RATE as f64;
    let mut events: Vec<SceneEvent> = Vec::with_capacity(cfg.n_events);
    for _ in 0..cfg.n_events {
        let mut placed = false;
        for _ in 0..100 {
            let len = rng.random_range(cfg.event_min_s..=cfg.event_max_s).min(cfg.duration);
            let onset = math::round(rng.random_range(0.0..=(cfg.duration - len)) * fs) / fs;
            let offset = (onset + len).min(cfg.duration);
            let mut iv: Vec<(f64, f64)> = events.iter().map(|e| (e.onset, e.offset)).collect();
            iv.push((onset, offset));
            if max_overlap(&iv) > NUM_TRACKS {
                continue;
            }
            let az = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
            let r = rng.random_range(1.0..=2.0);
            let z = rng.random_range(-0.5..=1.0);
            events.push(SceneEvent {
                class_id: rng.random_range(0..cfg.class_count),
                track_id: 0,
                onset,
                offset,
                source: [r * math::cos(az), r * math::sin(az), z],
                clip_seed: rng.random(),
            });
            placed = true;
            break;
        }
        if !placed {
            bail!(Config, "could not place {} events with at most {NUM_TRACKS} overlapping after 100 attempts", cfg.n_events);
        }
    }
    // greedy interval colouring in onset order uses at most max-overlap tracks
    events.sort_by(|a, b| a.onset.total_cmp(&b.onset));
    for i in 0..events.len() {
        let busy: Vec<usize> = events[..i].iter().filter(|e| e.offset > events[i].onset).map(|e| e.track_id).collect();
        events[i].track_id = (0..NUM_TRACKS).find(|t| !busy.contains(t)).unwrap_or(0);
    }
    Ok(events)
}

/// Room used for first-order reflections: walls relative to the listener
/// centre (head height at z = 0).
const ROOM_HALF: [f64; 2] = [3.0, 2.5];
const FLOOR: f64 = -1.5;
const CEILING: f64 = 1.5;

fn image_sources(s: Vec3) -> [Vec3; 6] {
    [
        [2.0 * ROOM_HALF[0] - s[0], s[1], s[2]],
        [-2.0 * ROOM_HALF[0] - s[0], s[1], s[2]],
        [s[0], 2.0 * ROOM_HALF[1] - s[1], s[2]],
        [s[0], -2.0 * ROOM_HALF[1] - s[1], s[2]],
        [s[0], s[1], 2.0 * CEILING - s[2]],
        [s[0], s[1], 2.0 * FLOOR - s[2]],
    ]
}

/// Room-frame mic positions on the `k / TRUTH_RATE` grid, `[mic][k]`.
fn mic_tracks(truth: &[Pose], layout: &MicLayout, duration: f64) -> Result<[Vec<Vec3>; 4]> {
    let n = math::ceil(duration * TRUTH_RATE) as usize + 2;
    let t_end = truth[truth.len() - 1].t;
    let poses = (0..n).map(|k| sample_track(truth, (k as f64 / TRUTH_RATE).min(t_end))).collect::<Result<Vec<_>>>()?;
    Ok(core::array::from_fn(|m| poses.iter().map(|p| p.to_room(layout.0[m])).collect()))
}

fn mic_at(track: &[Vec3], t: f64) -> Vec3 {
    let x = (t * TRUTH_RATE).max(0.0);
    let k = (x as usize).min(track.len() - 2);
    geometry::lerp(track[k], track[k + 1], (x - k as f64).min(1.0))
}

/// Adds one propagation path of `clip` into `out` with per-sample delay.
fn add_path(out: &mut [f64], clip: &[f64], onset: f64, src: Vec3, mic: &[Vec3], direct: Option<&[f64]>, t60: f64) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    // longest image path in the room is under 10 m
    let max_delay = 0.05;
    let start = math::floor(onset * fs) as usize;
    let end = (math::ceil((onset + clip.len() as f64 / fs + max_delay) * fs) as usize).min(out.len());
    let mut dists = Vec::with_capacity(end.saturating_sub(start));
    for n in start..end {
        let t = n as f64 / fs;
        let r = norm(sub(src, mic_at(mic, t)));
        dists.push(r);
        let pos = (t - onset - r / SPEED_OF_SOUND) * fs;
        if pos < 0.0 {
            continue;
        }
        let i = pos as usize;
        if i >= clip.len() {
            continue;
        }
        let frac = pos - i as f64;
        let a = clip[i];
        let b = clip.get(i + 1).copied().unwrap_or(0.0);
        let mut g = 1.0 / r.max(0.1);
        if let Some(d) = direct {
            // reflection decays with its extra travel time
            let dt = (r - d[n - start]) / SPEED_OF_SOUND;
            g *= math::pow(10.0, -3.0 * dt / t60);
        }
        out[n] += g * (a + frac * (b - a));
    }
    dists
}

/// Nonuniform tracker observations (about `rate` Hz, ±20% jitter) turned
/// into poses from three noisy tracker positions.
pub fn observe_trackers(truth: &[Pose], cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Pose>> {
    let nominal = 1.0 / cfg.tracker_rate;
    let noise = Normal::new(0.0, cfg.tracker_noise_m.max(0.0)).map_err(|_| Error::Config("bad tracker noise".into()))?;
    let mut out = Vec::new();
    let mut t: f64 = 0.0;
    loop {
        let p = sample_track(truth, t.min(cfg.duration))?;
        let pts = cfg.tracker_layout.place(&p).map(|x| {
            let mut y = x;
            for v in &mut y {
                *v += noise.sample(rng);
            }
            y
        });
        out.push(pose_from_trackers(t.min(cfg.duration), pts[0], pts[1], pts[2], &cfg.tracker_layout)?);
        if t >= cfg.duration {
            break;
        }
        t = (t + nominal * rng.random_range(0.8..1.2)).min(cfg.duration);
    }
    Ok(out)
}

/// Renders a scene: audio mixture and stems, labels, and head tracks.
pub fn render(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stream = |k: u64| {
        let mut r = base.clone();
        r.set_stream(k);
        r
    };
    let truth = gen_trajectory(cfg.profile, cfg.duration, cfg.move_radius, &mut stream(1))?;
    let events = place_events(cfg, &mut stream(2))?;
    render_with(cfg, truth, events)
}

/// Renders given events for a given ground-truth head track covering
/// `[0, duration]`.
pub fn render_with(cfg: &SceneConfig, truth: Vec<Pose>, events: Vec<SceneEvent>) -> Result<Scene> {
    cfg.validate()?;
    if truth.len() < 2 || truth[0].t > 0.0 || truth[truth.len() - 1].t < cfg.duration - 1e-9 {
        bail!(Data, "head track must cover [0, {}] s", cfg.duration);
    }
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stream = |k: u64| {
        let mut r = base.clone();
        r.set_stream(k);
        r
    };
    let observed = observe_trackers(&truth, cfg, &mut stream(4))?;

    let n = cfg.samples();
    let mics = mic_tracks(&truth, &cfg.mic_layout, cfg.duration)?;
    let mut clean = vec![vec![0.0; n]; 4];
    for e in &events {
        let clip = synth_event_clip(e.class_id, e.offset - e.onset, e.clip_seed)?;
        for (m, out) in clean.iter_mut().enumerate() {
            let direct = add_path(out, &clip, e.onset, e.source, &mics[m], None, cfg.t60);
            if cfg.echoes {
                for img in image_sources(e.source) {
                    add_path(out, &clip, e.onset, img, &mics[m], Some(&direct), cfg.t60);
                }
            }
        }
    }

    let noise = if cfg.noise { diffuse_noise(n, &mut stream(3)) } else { vec![vec![0.0; n]; 4] };
    let mut scene = Scene { config: cfg.clone(), audio: Vec::new(), clean, noise, events, labels: Vec::new(), truth, observed };
    if cfg.noise {
        let mask = scene.active_mask();
        let (mut es, mut en) = (0.0, 0.0);
        for i in 0..n {
            if mask[i] {
                es += scene.clean[0][i] * scene.clean[0][i];
                en += scene.noise[0][i] * scene.noise[0][i];
            }
        }
        // without active samples, noise sits snr_db below unit level
        let target = if es > 0.0 && en > 0.0 { es / en } else { 1.0 };
        let k = math::sqrt(target / math::pow(10.0, cfg.snr_db / 10.0));
        scene.noise.iter_mut().flatten().for_each(|v| *v *= k);
    }
    scene.audio = scene.clean.iter().zip(&scene.noise).map(|(c, z)| c.iter().zip(z).map(|(a, b)| a + b).collect()).collect();
    scene.labels = compute_labels(&scene.events, &scene.truth, cfg.label_frames())?;
    Ok(scene)
}

/// Independent white noise per channel plus a common 500 Hz low-pass
/// component of equal power.
fn diffuse_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let alpha = math::exp(-core::f64::consts::TAU * 500.0 / SAMPLE_RATE as f64);
    let mut common = Vec::with_capacity(n);
    let mut y = 0.0;
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        y = alpha * y + (1.0 - alpha) * x;
        common.push(y);
    }
    let rms = math::sqrt(common.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).max(1e-300);
    (0..4)
        .map(|_| {
            common
                .iter()
                .map(|c| {
                    let w: f64 = rng.sample(StandardNormal);
                    (w + c / rms) * core::f64::consts::FRAC_1_SQRT_2
                })
                .collect()
        })
        .collect()
}

/// Head-relative labels at label-frame centres for every active event.
pub fn compute_labels(events: &[SceneEvent], truth: &[Pose], frames: usize) -> Result<Vec<EventLabel>> {
    let t_end = truth.last().map(|p| p.t).unwrap_or(0.0);
    events
        .iter()
        .map(|e| {
            let mut out = Vec::new();
            for k in 0..frames {
                let tc = label_time(k);
                if e.onset <= tc && tc < e.offset {
                    let pose = sample_track(truth, tc.min(t_end))?;
                    out.push((k, to_head_frame(e.source, &pose)?));
                }
            }
            Ok(EventLabel { class_id: e.class_id, track_id: e.track_id, onset: e.onset, offset: e.offset, frames: out })
        })
        .collect()
}

/// Short human-readable description, e.g. `6dof/snr10/t60=0.30`.
pub fn describe(cfg: &SceneConfig) -> String {
    alloc::format!("{}/snr{}/t60={:.2}", cfg.profile, cfg.snr_db, cfg.t60)
}
