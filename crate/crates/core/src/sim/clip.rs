use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::Fft;
use crate::error::bail;
use crate::math;
use crate::{Result, NUM_CLASSES, SAMPLE_RATE};

/// Centre of the class-specific band.
pub fn class_center_hz(class_id: usize) -> f64 {
    600.0 + 650.0 * class_id as f64
}

/// Amplitude-modulation rate of the class.
pub fn class_am_hz(class_id: usize) -> f64 {
    2.0 + 0.75 * class_id as f64
}

const BAND_SIGMA_HZ: f64 = 120.0;
const LOW_BAND: (f64, f64) = (200.0, 900.0);
/// Share of clip energy in the common low band, which carries usable
/// inter-channel phase below the spatial aliasing limit.
const LOW_SHARE: f64 = 1.0 / 3.0;
const FADE_S: f64 = 0.01;

/// Deterministic class-labelled test signal of unit RMS.
///
/// Gaussian-shaped noise band at the class centre frequency plus a shared
/// 200–900 Hz band holding a third of the energy, amplitude-modulated at a
/// class-indexed rate, with 10 ms raised-cosine fades.
pub fn synth_event_clip(class_id: usize, duration: f64, seed: u64) -> Result<Vec<f64>> {
    if class_id >= NUM_CLASSES {
        bail!(Config, "class id {class_id} outside 0..{NUM_CLASSES}");
    }
    let fs = SAMPLE_RATE as f64;
    let n = math::round(duration * fs) as usize;
    if n == 0 {
        bail!(Config, "clip duration {duration} s is shorter than one sample");
    }
    let m = n.next_power_of_two();
    let df = fs / m as f64;
    let fc = class_center_hz(class_id);

    let band = |f: f64| math::exp(-(f - fc) * (f - fc) / (4.0 * BAND_SIGMA_HZ * BAND_SIGMA_HZ));
    let low = |f: f64| if (LOW_BAND.0..=LOW_BAND.1).contains(&f) { 1.0 } else { 0.0 };
    // pick the low-band gain from the discrete energies so the split is exact in expectation
    let (eb, el) = (1..m / 2).fold((0.0, 0.0), |(eb, el), k| {
        let f = k as f64 * df;
        (eb + band(f) * band(f), el + low(f))
    });
    let low_gain = math::sqrt(LOW_SHARE / (1.0 - LOW_SHARE) * eb / el);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((class_id as u64 + 1) << 56));
    let mut spec = vec![Complex64::new(0.0, 0.0); m];
    for k in 1..m / 2 {
        let f = k as f64 * df;
        let h = band(f) + low_gain * low(f);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        spec[k] = Complex64::new(re, im) * h;
        spec[m - k] = spec[k].conj();
    }
    // inverse transform through the forward plan: x = conj(F(conj X)) / m
    spec.iter_mut().for_each(|z| *z = z.conj());
    Fft::new(m)?.forward(&mut spec);

    let am = class_am_hz(class_id);
    let phase = rng.random_range(0.0..core::f64::consts::TAU);
    let fade = (FADE_S * fs) as usize;
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let env = 1.0 + 0.6 * math::sin(core::f64::consts::TAU * am * t + phase);
            let edge = i.min(n - 1 - i);
            let ramp = if edge < fade { 0.5 - 0.5 * math::cos(core::f64::consts::PI * edge as f64 / fade as f64) } else { 1.0 };
            spec[i].re * env * ramp
        })
        .collect();
    let rms = math::sqrt(x.iter().map(|v| v * v).sum::<f64>() / n as f64);
    if !(rms > 0.0) {
        bail!(Numeric, "synthesized clip has zero energy");
    }
    x.iter_mut().for_each(|v| *v /= rms);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centroid(x: &[f64]) -> f64 {
        let m = x.len().next_power_of_two();
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (b, v) in buf.iter_mut().zip(x) {
            *b = Complex64::new(*v, 0.0);
        }
        Fft::new(m).unwrap().forward(&mut buf);
        let df = 48_000.0 / m as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for (k, z) in buf.iter().enumerate().take(m / 2) {
            let p = z.norm_sqr();
            num += k as f64 * df * p;
            den += p;
        }
        num / den
    }

    #[test]
    fn deterministic_and_unit_rms() {
        for c in [0, 5, 11] {
            let a = synth_event_clip(c, 0.7, 42).unwrap();
            let b = synth_event_clip(c, 0.7, 42).unwrap();
            assert_eq!(a, b);
            let rms = (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt();
            assert!((rms - 1.0).abs() < 1e-6);
        }
        assert!(synth_event_clip(12, 1.0, 0).is_err());
    }

    #[test]
    fn class_centroids_are_separated() {
        let cents: Vec<f64> = (0..NUM_CLASSES).map(|c| centroid(&synth_event_clip(c, 2.0, 7).unwrap())).collect();
        for i in 0..NUM_CLASSES {
            for j in 0..i {
                assert!((cents[i] - cents[j]).abs() >= 300.0, "classes {i},{j}: {} vs {}", cents[i], cents[j]);
            }
        }
    }
}
