use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::MotionProfile;
use crate::error::bail;
use crate::geometry::{Pose, Quat, Vec3, DEG};
use crate::math;
use crate::Result;

/// Sampling rate of ground-truth head tracks.
pub const TRUTH_RATE: f64 = 200.0;

const YAW_RATE_PERIOD: f64 = 0.5;
const YAW_RATE_MAX_DEG: f64 = 150.0;
const TILT_PERIOD: f64 = 1.0;
const PITCH_MAX_DEG: f64 = 20.0;
const ROLL_MAX_DEG: f64 = 10.0;
const WALK_PERIOD: f64 = 1.2;
const JITTER_POS: f64 = 0.002;
const JITTER_ANG_DEG: f64 = 0.2;

fn smoothstep(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

/// C¹ curve through knots spaced `period` apart, flat at every knot.
struct Knots {
    values: Vec<f64>,
    period: f64,
}

impl Knots {
    fn random(rng: &mut ChaCha8Rng, duration: f64, period: f64, amp: f64) -> Self {
        let n = math::ceil(duration / period) as usize + 2;
        Self { values: (0..n).map(|_| rng.random_range(-amp..=amp)).collect(), period }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let k = ((t / self.period).max(0.0) as usize).min(self.values.len() - 2);
        (k, ((t - k as f64 * self.period) / self.period).clamp(0.0, 1.0))
    }

    fn eval(&self, t: f64) -> f64 {
        let (k, s) = self.locate(t);
        let (a, b) = (self.values[k], self.values[k + 1]);
        a + (b - a) * smoothstep(s)
    }

    /// ∫₀ᵗ of the curve, using ∫₀ˢ smoothstep = s³ − s⁴/2.
    fn integral(&self, t: f64) -> f64 {
        let (k, s) = self.locate(t);
        let full: f64 = self.values.windows(2).take(k).map(|w| (w[0] + w[1]) / 2.0).sum();
        let (a, b) = (self.values[k], self.values[k + 1]);
        self.period * (full + a * s + (b - a) * (s * s * s - s * s * s * s / 2.0))
    }
}

/// Sum of slow sinusoids with standard deviation `sigma`.
struct Jitter {
    parts: [(f64, f64, f64); 3],
}

impl Jitter {
    fn new(rng: &mut ChaCha8Rng, sigma: f64) -> Self {
        // three equal sinusoids: variance 3a²/2 = σ²
        let a = sigma * math::sqrt(2.0 / 3.0);
        let mut part = || (a, rng.random_range(0.05..0.25), rng.random_range(0.0..core::f64::consts::TAU));
        Self { parts: [part(), part(), part()] }
    }

    fn eval(&self, t: f64) -> f64 {
        self.parts.iter().map(|(a, f, ph)| a * math::sin(core::f64::consts::TAU * f * t + ph)).sum()
    }
}

struct Rotation {
    yaw0: f64,
    yaw_rate: Knots,
    pitch: Knots,
    roll: Knots,
}

impl Rotation {
    fn random(rng: &mut ChaCha8Rng, duration: f64) -> Self {
        Self {
            yaw0: rng.random_range(-180.0..180.0) * DEG,
            yaw_rate: Knots::random(rng, duration, YAW_RATE_PERIOD, YAW_RATE_MAX_DEG * DEG),
            pitch: Knots::random(rng, duration, TILT_PERIOD, PITCH_MAX_DEG * DEG),
            roll: Knots::random(rng, duration, TILT_PERIOD, ROLL_MAX_DEG * DEG),
        }
    }

    fn eval(&self, t: f64) -> Quat {
        Quat::from_yaw_pitch_roll(self.yaw0 + self.yaw_rate.integral(t), self.pitch.eval(t), self.roll.eval(t))
    }
}

/// Ground-truth head track on `[0, duration]` at [`TRUTH_RATE`].
///
/// * `stat`: fixed pose plus slow jitter (2 mm, 0.2°).
/// * `3dof`: fixed position; yaw rate through random knots in ±150°/s every
///   0.5 s, pitch ±20° and roll ±10° knots every second.
/// * `6dof`: the `3dof` rotation plus a walk through random waypoints inside
///   `0.8 · move_radius` of the start, one every 1.2 s (peak speed 1.5 m/s
///   for the default radius).
pub fn gen_trajectory(profile: MotionProfile, duration: f64, move_radius: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Pose>> {
    if !(duration > 0.0) {
        bail!(Config, "duration must be positive, got {duration}");
    }
    if !(move_radius > 0.0) {
        bail!(Config, "move radius must be positive, got {move_radius}");
    }
    let n = math::ceil(duration * TRUTH_RATE - 1e-9) as usize + 1;
    let times = (0..n).map(|k| (k as f64 / TRUTH_RATE).min(duration));

    match profile {
        MotionProfile::Stat => {
            let yaw0 = rng.random_range(-180.0..180.0) * DEG;
            let pos: [Jitter; 3] = core::array::from_fn(|_| Jitter::new(rng, JITTER_POS));
            let ang: [Jitter; 3] = core::array::from_fn(|_| Jitter::new(rng, JITTER_ANG_DEG * DEG));
            Ok(times
                .map(|t| {
                    let p = [pos[0].eval(t), pos[1].eval(t), pos[2].eval(t)];
                    let q = Quat::from_yaw_pitch_roll(yaw0 + ang[0].eval(t), ang[1].eval(t), ang[2].eval(t));
                    Pose::new(t, p, q)
                })
                .collect())
        }
        MotionProfile::ThreeDof => {
            let rot = Rotation::random(rng, duration);
            Ok(times.map(|t| Pose::new(t, [0.0; 3], rot.eval(t))).collect())
        }
        MotionProfile::SixDof => {
            let rot = Rotation::random(rng, duration);
            let r = 0.8 * move_radius;
            let m = math::ceil(duration / WALK_PERIOD) as usize + 2;
            let mut way: Vec<Vec3> = Vec::with_capacity(m);
            way.push([0.0; 3]);
            while way.len() < m {
                // uniform in the disk
                let rho = r * math::sqrt(rng.random::<f64>());
                let phi = rng.random_range(0.0..core::f64::consts::TAU);
                way.push([rho * math::cos(phi), rho * math::sin(phi), 0.0]);
            }
            Ok(times
                .map(|t| {
                    let k = ((t / WALK_PERIOD) as usize).min(m - 2);
                    let s = smoothstep(((t - k as f64 * WALK_PERIOD) / WALK_PERIOD).clamp(0.0, 1.0));
                    Pose::new(t, crate::geometry::lerp(way[k], way[k + 1], s), rot.eval(t))
                })
                .collect())
        }
    }
}
