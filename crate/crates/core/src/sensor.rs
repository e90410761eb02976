//! Pose track to velocity / angular-velocity stream.
//!
//! Nonuniform tracker poses are resampled onto a uniform grid, smoothed and
//! differentiated with a Savitzky-Golay filter, then aligned to network frames.
//! Channel order of the aligned stream is `(νx, νy, νz, ωx, ωy, ωz)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Tensor;
use crate::error::bail;
use crate::geometry::{angular_velocity, lerp, Pose, Quat, Vec3};
use crate::math;
use crate::Result;

pub const SENSOR_CHANNELS: usize = 6;

/// Motion sample: velocity in the room frame, angular velocity in the head frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SensorFrame {
    pub t: f64,
    pub nu: Vec3,
    pub omega: Vec3,
}

impl SensorFrame {
    pub fn channels(&self) -> [f64; SENSOR_CHANNELS] {
        [self.nu[0], self.nu[1], self.nu[2], self.omega[0], self.omega[1], self.omega[2]]
    }
}

/// How sensor samples are mapped onto query times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Alignment {
    /// Zero-order hold of the latest sample at or before the query.
    #[default]
    Causal,
    /// Linear interpolation between neighbouring samples.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SensorConfig {
    pub fps: f64,
    pub window: usize,
    pub order: usize,
    pub alignment: Alignment,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { fps: 20.0, window: 9, order: 2, alignment: Alignment::Causal }
    }
}

impl SensorConfig {
    /// Full pipeline: resample, differentiate, align to `frame_times`.
    pub fn process(&self, track: &[Pose], frame_times: &[f64]) -> Result<Tensor> {
        let uniform = resample_uniform(track, self.fps)?;
        let frames = derive_motion(&uniform, self.window, self.order)?;
        align_to_frames(&frames, frame_times, self.alignment)
    }
}

fn check_increasing(track: &[Pose]) -> Result<()> {
    if track.len() < 2 {
        bail!(Data, "need at least 2 pose samples, got {}", track.len());
    }
    for (i, w) in track.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            bail!(Data, "pose timestamps not strictly increasing at index {}: {} then {}", i + 1, w[0].t, w[1].t);
        }
    }
    Ok(())
}

/// Interpolated pose at time `t`: linear position, slerped orientation.
pub fn sample_track(track: &[Pose], t: f64) -> Result<Pose> {
    check_increasing(track)?;
    interp_sorted(track, t)
}

fn interp_sorted(track: &[Pose], t: f64) -> Result<Pose> {
    let (first, last) = (track[0].t, track[track.len() - 1].t);
    const EPS: f64 = 1e-9;
    if t < first - EPS || t > last + EPS {
        bail!(Range, "query time {t} outside track span [{first}, {last}]");
    }
    let t = t.clamp(first, last);
    let i = track.partition_point(|p| p.t <= t).clamp(1, track.len() - 1);
    let (a, b) = (&track[i - 1], &track[i]);
    let s = (t - a.t) / (b.t - a.t);
    if s == 0.0 {
        return Ok(Pose { t, ..*a });
    }
    if s == 1.0 {
        return Ok(Pose { t, ..*b });
    }
    Ok(Pose::new(t, lerp(a.p, b.p, s), a.q.slerp(b.q, s)))
}

/// Resamples onto the grid `k / fps` restricted to the input span.
pub fn resample_uniform(track: &[Pose], fps: f64) -> Result<Vec<Pose>> {
    if !(fps > 0.0) {
        bail!(Config, "target rate must be positive, got {fps}");
    }
    check_increasing(track)?;
    let (first, last) = (track[0].t, track[track.len() - 1].t);
    let k0 = math::ceil(first * fps - 1e-9) as i64;
    let k1 = math::floor(last * fps + 1e-9) as i64;
    if k1 < k0 {
        bail!(Range, "track span [{first}, {last}] contains no grid point at {fps} Hz");
    }
    (k0..=k1).map(|k| interp_sorted(track, k as f64 / fps)).collect()
}

/// Savitzky-Golay convolution weights for the centre sample, ordered from
/// offset `-h` to `+h`. For `deriv = 1` the weights give d/dx per sample.
pub fn savgol_coefficients(window: usize, order: usize, deriv: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window <= order {
        bail!(Config, "Savitzky-Golay window must be odd and larger than the order (window {window}, order {order})");
    }
    if deriv > order {
        bail!(Config, "derivative order {deriv} exceeds polynomial order {order}");
    }
    let h = (window / 2) as f64;
    let m = order + 1;
    // Normal equations G c = e_deriv with G = VᵀV, V_jk = x_j^k.
    let xs: Vec<f64> = (0..window).map(|j| j as f64 - h).collect();
    let mut g = vec![vec![0.0; m + 1]; m];
    for (r, row) in g.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().take(m).enumerate() {
            *v = xs.iter().map(|&x| math::powi(x, (r + c) as i32)).sum();
        }
        row[m] = if r == deriv { 1.0 } else { 0.0 };
    }
    let c = solve_augmented(g)?;
    let fact: f64 = (1..=deriv).map(|k| k as f64).product();
    Ok(xs.iter().map(|&x| fact * c.iter().enumerate().map(|(k, ck)| ck * math::powi(x, k as i32)).sum::<f64>()).collect())
}

/// Gaussian elimination with partial pivoting on an `n × (n+1)` augmented matrix.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap_or(col);
        if a[piv][col].abs() < 1e-300 {
            bail!(Numeric, "singular system");
        }
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Smoothed signal (`deriv = 0`) or its time derivative (`deriv = 1`,
/// scaled by `1/dt`), with mirror padding at the edges.
pub fn savgol(signal: &[f64], window: usize, order: usize, deriv: usize, dt: f64) -> Result<Vec<f64>> {
    let coef = savgol_coefficients(window, order, deriv)?;
    if signal.len() < window {
        bail!(Data, "signal of length {} shorter than filter window {window}", signal.len());
    }
    if deriv > 0 && !(dt > 0.0) {
        bail!(Contract, "sample spacing must be positive, got {dt}");
    }
    let n = signal.len() as isize;
    let h = (window / 2) as isize;
    // reflect about the edge sample without repeating it
    let at = |i: isize| -> f64 {
        let mut j = i;
        if j < 0 {
            j = -j;
        }
        if j >= n {
            j = 2 * (n - 1) - j;
        }
        signal[j as usize]
    };
    let s = if deriv == 0 { 1.0 } else { 1.0 / math::powi(dt, deriv as i32) };
    Ok((0..n).map(|i| s * coef.iter().enumerate().map(|(j, c)| c * at(i + j as isize - h)).sum::<f64>()).collect())
}

/// Velocity and angular velocity of a uniformly sampled pose track.
pub fn derive_motion(poses: &[Pose], window: usize, order: usize) -> Result<Vec<SensorFrame>> {
    if poses.len() < window.max(2) {
        bail!(Data, "pose track of length {} shorter than filter window {window}", poses.len());
    }
    let dt = poses[1].t - poses[0].t;
    if !(dt > 0.0) {
        bail!(Data, "pose timestamps not increasing");
    }
    for w in poses.windows(2) {
        if ((w[1].t - w[0].t) - dt).abs() > 1e-6 * dt.max(1.0) {
            bail!(Data, "pose track is not uniformly sampled");
        }
    }
    let n = poses.len();
    let mut nu = [vec![], vec![], vec![]];
    for (axis, out) in nu.iter_mut().enumerate() {
        let s: Vec<f64> = poses.iter().map(|p| p.p[axis]).collect();
        *out = savgol(&s, window, order, 1, dt)?;
    }

    // sign-continuous quaternion sequence so that smoothing does not average q with -q
    let mut qs: Vec<Quat> = Vec::with_capacity(n);
    for p in poses {
        let q = match qs.last() {
            Some(prev) if prev.dot(&p.q) < 0.0 => Quat::new(-p.q.w, -p.q.x, -p.q.y, -p.q.z),
            _ => p.q,
        };
        qs.push(q);
    }
    let comp = |f: fn(&Quat) -> f64| -> Result<Vec<f64>> { savgol(&qs.iter().map(f).collect::<Vec<_>>(), window, order, 0, dt) };
    let (w, x, y, z) = (comp(|q| q.w)?, comp(|q| q.x)?, comp(|q| q.y)?, comp(|q| q.z)?);
    let smooth: Vec<Quat> = (0..n).map(|i| Quat::new(w[i], x[i], y[i], z[i]).normalized()).collect();

    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let omega = angular_velocity(smooth[a], smooth[b], (b - a) as f64 * dt)?;
            Ok(SensorFrame { t: poses[i].t, nu: [nu[0][i], nu[1][i], nu[2][i]], omega })
        })
        .collect()
}

/// Sensor stream at the requested frame times as a `[T, 6]` tensor.
/// Queries outside the sensor span are clamped to the edge samples.
pub fn align_to_frames(sensor: &[SensorFrame], frame_times: &[f64], mode: Alignment) -> Result<Tensor> {
    if sensor.is_empty() || frame_times.is_empty() {
        bail!(Data, "empty sensor stream or frame grid");
    }
    let mut data = Vec::with_capacity(frame_times.len() * SENSOR_CHANNELS);
    for &t in frame_times {
        // index of the first sample strictly after t (with a small tolerance)
        let i = sensor.partition_point(|s| s.t <= t + 1e-9);
        let row = if i == 0 {
            sensor[0].channels()
        } else if i == sensor.len() || mode == Alignment::Causal {
            sensor[i - 1].channels()
        } else {
            let (a, b) = (&sensor[i - 1], &sensor[i]);
            let s = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
            let (ca, cb) = (a.channels(), b.channels());
            core::array::from_fn(|k| ca[k] + s * (cb[k] - ca[k]))
        };
        data.extend_from_slice(&row);
    }
    Tensor::new(&[frame_times.len(), SENSOR_CHANNELS], data)
}
