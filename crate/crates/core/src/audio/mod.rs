//! Acoustic features: log-amplitude spectrograms and SALSA-Lite phase features.
//!
//! Four microphone channels at 48 kHz are transformed with a 1024-point
//! periodic Hann STFT at a 1200-sample (25 ms) hop. Bins 2..=193 (93.75 Hz to
//! 9046.875 Hz) are kept and averaged in groups of three, giving 64 bins.
//! Output channels are `log(1+|X_m|)` for the four mics followed by the three
//! inter-channel path differences relative to mic 0.

mod fft;

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

pub use fft::Fft;

use crate::error::bail;
use crate::math;
use crate::{Result, SAMPLE_RATE, SPEED_OF_SOUND};

pub const WINDOW: usize = 1024;
pub const HOP: usize = 1200;
pub const ONESIDED_BINS: usize = WINDOW / 2 + 1;
pub const BIN_LO: usize = 2;
pub const BIN_HI: usize = 193;
pub const POOL: usize = 3;
pub const FEATURE_BINS: usize = (BIN_HI - BIN_LO + 1) / POOL;
pub const MIC_CHANNELS: usize = 4;
pub const AUDIO_CHANNELS: usize = 7;
pub const FRAME_DT: f64 = HOP as f64 / SAMPLE_RATE as f64;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * math::cos(2.0 * core::f64::consts::PI * i as f64 / n as f64)).collect()
}

/// Complex onesided spectrogram, row-major `[frames, bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn at(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }
}

/// Number of full frames that fit in `n` samples.
pub fn frame_count(n: usize, hop: usize) -> usize {
    if n < WINDOW {
        0
    } else {
        (n - WINDOW) / hop + 1
    }
}

/// Short-time Fourier transform with a 1024-point Hann window. Only full
/// frames are produced; frame `k` covers samples `[k·hop, k·hop + 1024)`.
pub fn stft(x: &[f64], hop: usize) -> Result<Spectrogram> {
    if x.is_empty() {
        bail!(Data, "cannot transform an empty signal");
    }
    if hop == 0 {
        bail!(Config, "hop must be positive");
    }
    let plan = Fft::new(WINDOW)?;
    let win = hann(WINDOW);
    let frames = frame_count(x.len(), hop);
    let mut data = Vec::with_capacity(frames * ONESIDED_BINS);
    let mut buf = vec![Complex64::new(0.0, 0.0); WINDOW];
    for k in 0..frames {
        let seg = &x[k * hop..k * hop + WINDOW];
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex64::new(s * w, 0.0);
        }
        plan.forward(&mut buf);
        data.extend_from_slice(&buf[..ONESIDED_BINS]);
    }
    Ok(Spectrogram { frames, bins: ONESIDED_BINS, data })
}

/// SALSA-Lite path differences, `[frames, 3, bins]`, in meters:
/// `Λ_i = −c/(2πf) · arg(X_0 · conj(X_i))`. The DC bin and bins with
/// `|X_0 X_i| < 1e-12` are zero.
pub fn salsa_lite(specs: &[Spectrogram]) -> Result<Vec<f64>> {
    if specs.len() != MIC_CHANNELS {
        bail!(Config, "SALSA-Lite needs {MIC_CHANNELS} channels, got {}", specs.len());
    }
    let (t, f) = (specs[0].frames, specs[0].bins);
    if specs.iter().any(|s| s.frames != t || s.bins != f) {
        bail!(Dimension, "spectrograms are not aligned");
    }
    // bin spacing assumes a WINDOW-point transform at the system rate
    let df = SAMPLE_RATE as f64 / WINDOW as f64;
    let mut out = vec![0.0; t * 3 * f];
    for ti in 0..t {
        for (i, s) in specs[1..].iter().enumerate() {
            let row = &mut out[(ti * 3 + i) * f..(ti * 3 + i + 1) * f];
            for (k, v) in row.iter_mut().enumerate().skip(1) {
                let z = specs[0].at(ti, k) * s.at(ti, k).conj();
                if z.norm() >= 1e-12 {
                    let freq = k as f64 * df;
                    *v = -SPEED_OF_SOUND / (2.0 * core::f64::consts::PI * freq) * math::atan2(z.im, z.re);
                }
            }
        }
    }
    Ok(out)
}

/// Keeps bins 2..=193 of a `[T, C, 513]` array and averages groups of 3.
pub fn frequency_window(full: &[f64], frames: usize, channels: usize, bins: usize) -> Result<Vec<f64>> {
    if bins != ONESIDED_BINS {
        bail!(Config, "expected {ONESIDED_BINS} onesided bins, got {bins}");
    }
    if full.len() != frames * channels * bins {
        bail!(Dimension, "array of {} values does not match [{frames}, {channels}, {bins}]", full.len());
    }
    let mut out = Vec::with_capacity(frames * channels * FEATURE_BINS);
    for row in full.chunks_exact(bins) {
        let band = &row[BIN_LO..=BIN_HI];
        out.extend(band.chunks_exact(POOL).map(|g| g.iter().sum::<f64>() / POOL as f64));
    }
    Ok(out)
}

/// Acoustic features `[frames, channels, bins]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureMap {
    pub frames: usize,
    pub channels: usize,
    pub bins: usize,
    pub frame_dt: f64,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(frames: usize, channels: usize, bins: usize, frame_dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != frames * channels * bins {
            bail!(Dimension, "{} values do not fill [{frames}, {channels}, {bins}]", values.len());
        }
        Ok(Self { frames, channels, bins, frame_dt, values })
    }

    pub fn at(&self, t: usize, c: usize, f: usize) -> f64 {
        self.values[(t * self.channels + c) * self.bins + f]
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.frames).map(|k| k as f64 * self.frame_dt).collect()
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.frames, self.channels, self.bins]
    }
}

/// Four-channel recording to a `(T, 7, 64)` feature map.
pub fn extract_features<S: AsRef<[f64]>>(wav: &[S], sample_rate: u32) -> Result<FeatureMap> {
    if sample_rate != SAMPLE_RATE {
        bail!(Data, "expected {SAMPLE_RATE} Hz audio, got {sample_rate} Hz");
    }
    if wav.len() != MIC_CHANNELS {
        bail!(Config, "expected {MIC_CHANNELS} channels, got {}", wav.len());
    }
    let n = wav[0].as_ref().len();
    if wav.iter().any(|c| c.as_ref().len() != n) {
        bail!(Dimension, "channels have different lengths");
    }
    let specs = wav.iter().map(|c| stft(c.as_ref(), HOP)).collect::<Result<Vec<_>>>()?;
    let t = specs[0].frames;
    let mut full = vec![0.0; t * AUDIO_CHANNELS * ONESIDED_BINS];
    for ti in 0..t {
        for (m, s) in specs.iter().enumerate() {
            let dst = &mut full[(ti * AUDIO_CHANNELS + m) * ONESIDED_BINS..][..ONESIDED_BINS];
            for (d, x) in dst.iter_mut().zip(&s.data[ti * ONESIDED_BINS..(ti + 1) * ONESIDED_BINS]) {
                *d = math::log1p(x.norm());
            }
        }
    }
    let salsa = salsa_lite(&specs)?;
    for ti in 0..t {
        let src = &salsa[ti * 3 * ONESIDED_BINS..(ti + 1) * 3 * ONESIDED_BINS];
        full[(ti * AUDIO_CHANNELS + MIC_CHANNELS) * ONESIDED_BINS..][..3 * ONESIDED_BINS].copy_from_slice(src);
    }
    let values = frequency_window(&full, t, AUDIO_CHANNELS, ONESIDED_BINS)?;
    FeatureMap::new(t, AUDIO_CHANNELS, FEATURE_BINS, FRAME_DT, values)
}

/// Per-channel mean and standard deviation pooled over frames and bins.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits statistics on the given (training) feature maps.
    pub fn fit(maps: &[&FeatureMap]) -> Result<Self> {
        let Some(first) = maps.first() else {
            bail!(Data, "no feature maps to fit standardization on");
        };
        let c = first.channels;
        if maps.iter().any(|m| m.channels != c) {
            bail!(Dimension, "feature maps disagree on channel count");
        }
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut count = 0usize;
        for m in maps {
            for t in 0..m.frames {
                for ch in 0..c {
                    let row = &m.values[(t * c + ch) * m.bins..][..m.bins];
                    sum[ch] += row.iter().sum::<f64>();
                    sq[ch] += row.iter().map(|v| v * v).sum::<f64>();
                }
            }
            count += m.frames * m.bins;
        }
        if count == 0 {
            bail!(Data, "feature maps are empty");
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let v = (s / n - m * m).max(0.0);
                let sd = math::sqrt(v);
                if sd < 1e-8 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, map: &mut FeatureMap) -> Result<()> {
        if map.channels != self.mean.len() {
            bail!(Dimension, "standardizer has {} channels, map has {}", self.mean.len(), map.channels);
        }
        let (c, b) = (map.channels, map.bins);
        for (i, row) in map.values.chunks_exact_mut(b).enumerate() {
            let ch = i % c;
            for v in row {
                *v = (*v - self.mean[ch]) / self.std[ch];
            }
        }
        Ok(())
    }
}
