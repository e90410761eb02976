//! File formats: WAV, pose / sensor / label / estimate CSVs, manifest JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use seld6dof_core::accdoa::{EventEstimate, FrameLabel};
use seld6dof_core::autodiff::Tensor;
use seld6dof_core::geometry::{DoaVector, Pose, Quat};
use seld6dof_core::sensor::SENSOR_CHANNELS;
use seld6dof_core::sim::{MotionProfile, Split};

use crate::error::{AppError, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| AppError::io(path, e))
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| AppError::format(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::format(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// 32-bit float WAV, one channel per slice.
pub fn write_wav(path: &Path, channels: &[Vec<f64>], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut buf = std::io::Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).map_err(|e| AppError::format(path, e))?;
        let n = channels.first().map_or(0, Vec::len);
        for i in 0..n {
            for c in channels {
                w.write_sample(c[i] as f32).map_err(|e| AppError::format(path, e))?;
            }
        }
        w.finalize().map_err(|e| AppError::format(path, e))?;
    }
    write_bytes(path, &buf.into_inner())
}

/// Reads 16-bit PCM or 32-bit float WAV into per-channel `f64` samples
/// (PCM scaled to `[-1, 1)`). Returns the channels and the sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<Vec<f64>>, u32)> {
    let mut r = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => AppError::io(path, io),
        other => AppError::format(path, other),
    })?;
    let spec = r.spec();
    let nch = spec.channels as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Int, 16) => {
            r.samples::<i16>().map(|s| s.map(|v| f64::from(v) / 32768.0)).collect::<std::result::Result<_, _>>()
        }
        (fmt, bits) => return Err(AppError::format(path, format!("unsupported WAV sample format {fmt:?} {bits}-bit"))),
    }
    .map_err(|e| AppError::format(path, e))?;
    let mut out = vec![Vec::with_capacity(samples.len() / nch.max(1)); nch];
    for (i, s) in samples.into_iter().enumerate() {
        out[i % nch].push(s);
    }
    Ok((out, spec.sample_rate))
}

/// Headers are written explicitly so that empty files still carry them.
fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new())
}

fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| AppError::format(path, e))?;
    write_bytes(path, &bytes)
}

fn read_rows<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let bytes = read_bytes(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let found: Vec<String> = r.headers().map_err(|e| AppError::format(path, e))?.iter().map(str::to_string).collect();
    if found != header {
        return Err(AppError::format(path, format!("expected header `{}`, found `{}`", header.join(","), found.join(","))));
    }
    r.deserialize().map(|row| row.map_err(|e| AppError::format(path, e))).collect()
}

pub const POSE_HEADER: [&str; 8] = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"];
pub const SENSOR_HEADER: [&str; 7] = ["t", "vx", "vy", "vz", "wx", "wy", "wz"];
pub const LABEL_HEADER: [&str; 5] = ["frame", "class", "track", "az_deg", "el_deg"];
pub const ESTIMATE_HEADER: [&str; 5] = ["frame", "class", "az_deg", "el_deg", "score"];

pub fn write_poses(path: &Path, poses: &[Pose]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(POSE_HEADER).map_err(|e| AppError::format(path, e))?;
    for p in poses {
        let row = [p.t, p.p[0], p.p[1], p.p[2], p.q.w, p.q.x, p.q.y, p.q.z];
        w.serialize(row).map_err(|e| AppError::format(path, e))?;
    }
    finish_csv(path, w)
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose>> {
    let rows: Vec<[f64; 8]> = read_rows(path, &POSE_HEADER)?;
    Ok(rows.into_iter().map(|r| Pose::new(r[0], [r[1], r[2], r[3]], Quat::new(r[4], r[5], r[6], r[7]))).collect())
}

/// Writes a `[t, 6]` sensor stream with its frame times.
pub fn write_sensor(path: &Path, times: &[f64], stream: &Tensor) -> Result<()> {
    if stream.shape() != [times.len(), SENSOR_CHANNELS] {
        return Err(AppError::format(path, format!("sensor stream shape {:?} for {} times", stream.shape(), times.len())));
    }
    let mut w = csv_writer();
    w.write_record(SENSOR_HEADER).map_err(|e| AppError::format(path, e))?;
    for (t, row) in times.iter().zip(stream.data().chunks(SENSOR_CHANNELS)) {
        let rec = [*t, row[0], row[1], row[2], row[3], row[4], row[5]];
        w.serialize(rec).map_err(|e| AppError::format(path, e))?;
    }
    finish_csv(path, w)
}

/// Reads a sensor stream back as `(times, [t, 6] tensor)`.
pub fn read_sensor(path: &Path) -> Result<(Vec<f64>, Tensor)> {
    let rows: Vec<[f64; 7]> = read_rows(path, &SENSOR_HEADER)?;
    let times = rows.iter().map(|r| r[0]).collect();
    let data = rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
    Ok((times, Tensor::new(&[rows.len(), SENSOR_CHANNELS], data)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    frame: usize,
    class: usize,
    track: usize,
    az_deg: f64,
    el_deg: f64,
}

pub fn write_labels(path: &Path, rows: &[FrameLabel]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(LABEL_HEADER).map_err(|e| AppError::format(path, e))?;
    for r in rows {
        let rec = LabelRow {
            frame: r.frame,
            class: r.class,
            track: r.track,
            az_deg: r.doa.azimuth_deg(),
            el_deg: r.doa.elevation_deg(),
        };
        w.serialize(rec).map_err(|e| AppError::format(path, e))?;
    }
    finish_csv(path, w)
}

pub fn read_labels(path: &Path) -> Result<Vec<FrameLabel>> {
    let rows: Vec<LabelRow> = read_rows(path, &LABEL_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| FrameLabel {
            frame: r.frame,
            class: r.class,
            track: r.track,
            doa: DoaVector::from_az_el_deg(r.az_deg, r.el_deg),
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct EstimateRow {
    frame: usize,
    class: usize,
    az_deg: f64,
    el_deg: f64,
    score: f64,
}

pub fn write_estimates(path: &Path, est: &[EventEstimate]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(ESTIMATE_HEADER).map_err(|e| AppError::format(path, e))?;
    for e in est {
        let rec = EstimateRow {
            frame: e.frame,
            class: e.class,
            az_deg: e.doa.azimuth_deg(),
            el_deg: e.doa.elevation_deg(),
            score: e.score,
        };
        w.serialize(rec).map_err(|e| AppError::format(path, e))?;
    }
    finish_csv(path, w)
}

pub fn read_estimates(path: &Path) -> Result<Vec<EventEstimate>> {
    let rows: Vec<EstimateRow> = read_rows(path, &ESTIMATE_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| EventEstimate {
            frame: r.frame,
            class: r.class,
            doa: DoaVector::from_az_el_deg(r.az_deg, r.el_deg),
            score: r.score,
        })
        .collect())
}

/// One scene of a dataset. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub wav: String,
    pub labels: String,
    pub poses: String,
    pub profile: MotionProfile,
    pub snr_db: f64,
    pub t60: f64,
    pub split: Split,
}

/// Dataset index: the list of scenes plus the directory it lives in.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let entries: Vec<ManifestEntry> = read_json(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { dir, entries })
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}
