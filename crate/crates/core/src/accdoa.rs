//! Multi-ACCDOA targets, the class-wise ADPIT loss, and output decoding.
//!
//! Output layout per frame is `[track][class][xyz]` with 3 tracks and 12
//! classes. A class with `k` active sources admits every assignment of the 3
//! tracks onto its sources that uses each source at least once: 1 pattern for
//! `k = 1`, 6 for `k = 2` and 6 for `k = 3`.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::error::bail;
use crate::geometry::{angle_deg, norm, DoaVector, Vec3};
use crate::{Result, NUM_CLASSES, NUM_TRACKS};

/// Values per frame of a Multi-ACCDOA output.
pub const FRAME_SIZE: usize = NUM_TRACKS * NUM_CLASSES * 3;

/// One labelled source in one label frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLabel {
    pub frame: usize,
    pub class: usize,
    pub track: usize,
    pub doa: DoaVector,
}

/// Active source directions per frame and class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccdoaTarget {
    frames: usize,
    sources: Vec<Vec<Vec3>>,
}

impl AccdoaTarget {
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Source directions of `class` in `frame`, ordered by track id.
    pub fn sources(&self, frame: usize, class: usize) -> &[Vec3] {
        &self.sources[frame * NUM_CLASSES + class]
    }

    /// Joins targets of several sequences frame-wise (batch flattening).
    pub fn concat(parts: &[AccdoaTarget]) -> Self {
        Self {
            frames: parts.iter().map(|p| p.frames).sum(),
            sources: parts.iter().flat_map(|p| p.sources.iter().cloned()).collect(),
        }
    }

    /// Dense `[frames, 3, 12, 3]` target using the first admissible
    /// assignment of every class (duplication for k < 3).
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.frames * FRAME_SIZE];
        for t in 0..self.frames {
            for c in 0..NUM_CLASSES {
                let src = self.sources(t, c);
                if let Some(pat) = admissible_assignments(src.len()).first() {
                    write_pattern(&mut out[t * FRAME_SIZE..(t + 1) * FRAME_SIZE], c, src, pat);
                }
            }
        }
        out
    }
}

fn slot(track: usize, class: usize) -> usize {
    (track * NUM_CLASSES + class) * 3
}

fn write_pattern(frame: &mut [f64], class: usize, src: &[Vec3], pat: &[usize; NUM_TRACKS]) {
    for (tr, &s) in pat.iter().enumerate() {
        frame[slot(tr, class)..slot(tr, class) + 3].copy_from_slice(&src[s]);
    }
}

/// Track-to-source maps using every one of `k` sources at least once.
/// `k = 0` yields no pattern (the target is all zeros).
pub fn admissible_assignments(k: usize) -> Vec<[usize; NUM_TRACKS]> {
    if k == 0 || k > NUM_TRACKS {
        return Vec::new();
    }
    let mut out = Vec::new();
    for code in 0..k.pow(NUM_TRACKS as u32) {
        let pat: [usize; NUM_TRACKS] = core::array::from_fn(|i| (code / k.pow(i as u32)) % k);
        if (0..k).all(|s| pat.contains(&s)) {
            out.push(pat);
        }
    }
    out
}

/// Groups label rows into per-frame, per-class source lists. Rows at or
/// beyond `frames` are ignored.
pub fn encode_targets(labels: &[FrameLabel], frames: usize) -> Result<AccdoaTarget> {
    let mut rows: Vec<&FrameLabel> = labels.iter().filter(|l| l.frame < frames).collect();
    rows.sort_by_key(|l| (l.frame, l.class, l.track));
    let mut sources = vec![Vec::new(); frames * NUM_CLASSES];
    for l in rows {
        if l.class >= NUM_CLASSES {
            bail!(Data, "class {} outside 0..{NUM_CLASSES} at frame {}", l.class, l.frame);
        }
        let cell = &mut sources[l.frame * NUM_CLASSES + l.class];
        if cell.len() == NUM_TRACKS {
            bail!(Data, "more than {NUM_TRACKS} sources of class {} in frame {}", l.class, l.frame);
        }
        cell.push(l.doa.vector());
    }
    Ok(AccdoaTarget { frames, sources })
}

fn check_pred(pred: &[f64], target: &AccdoaTarget) -> Result<()> {
    if pred.len() != target.frames * FRAME_SIZE {
        bail!(Dimension, "prediction has {} values, target needs {} frames × {FRAME_SIZE}", pred.len(), target.frames);
    }
    if let Some(i) = pred.iter().position(|v| !v.is_finite()) {
        bail!(Numeric, "non-finite prediction at frame {}", i / FRAME_SIZE);
    }
    Ok(())
}

fn pattern_error(frame: &[f64], class: usize, src: &[Vec3], pat: Option<&[usize; NUM_TRACKS]>) -> f64 {
    (0..NUM_TRACKS)
        .map(|tr| {
            let want = pat.map(|p| src[p[tr]]).unwrap_or([0.0; 3]);
            (0..3)
                .map(|k| {
                    let d = frame[slot(tr, class) + k] - want[k];
                    d * d
                })
                .sum::<f64>()
        })
        .sum()
}

/// Best admissible dense target for `pred` (ties resolved by pattern order).
pub fn best_target(pred: &[f64], target: &AccdoaTarget) -> Result<Vec<f64>> {
    check_pred(pred, target)?;
    let mut out = vec![0.0; pred.len()];
    for t in 0..target.frames {
        let frame = &pred[t * FRAME_SIZE..(t + 1) * FRAME_SIZE];
        let dst = &mut out[t * FRAME_SIZE..(t + 1) * FRAME_SIZE];
        for c in 0..NUM_CLASSES {
            let src = target.sources(t, c);
            let pats = admissible_assignments(src.len());
            let best = pats.iter().map(|p| (pattern_error(frame, c, src, Some(p)), p)).min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((_, p)) = best {
                write_pattern(dst, c, src, p);
            }
        }
    }
    Ok(out)
}

/// ADPIT loss value: mean over frames, classes, tracks and components of
/// the squared error to the best assignment of each (frame, class).
pub fn adpit_loss_value(pred: &[f64], target: &AccdoaTarget) -> Result<f64> {
    let best = best_target(pred, target)?;
    let n = pred.len().max(1) as f64;
    Ok(pred.iter().zip(&best).map(|(p, b)| (p - b) * (p - b)).sum::<f64>() / n)
}

/// ADPIT loss as a graph node. The assignment is chosen from the current
/// prediction and treated as a constant target.
pub fn adpit_loss(g: &mut Graph, pred: Var, target: &AccdoaTarget) -> Result<Var> {
    let best = best_target(g.value(pred), target)?;
    let shape = g.shape(pred).to_vec();
    let tgt = g.constant(&shape, best)?;
    let diff = g.sub(pred, tgt)?;
    let sq = g.mul(diff, diff)?;
    Ok(g.mean(sq))
}

/// Decoding thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DecodeConfig {
    pub threshold: f64,
    pub unify_deg: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { threshold: 0.5, unify_deg: 15.0 }
    }
}

/// One detected event in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventEstimate {
    pub frame: usize,
    pub class: usize,
    pub doa: DoaVector,
    pub score: f64,
}

/// Thresholds track vectors and merges same-class tracks closer than the
/// unify angle into their norm-weighted mean direction.
pub fn decode(pred: &[f64], frames: usize, cfg: &DecodeConfig) -> Result<Vec<EventEstimate>> {
    if !(cfg.threshold > 0.0 && cfg.threshold < crate::math::sqrt(3.0)) {
        bail!(Config, "activity threshold must lie in (0, √3), got {}", cfg.threshold);
    }
    if pred.len() != frames * FRAME_SIZE {
        bail!(Dimension, "prediction has {} values, expected {frames} × {FRAME_SIZE}", pred.len());
    }
    let mut out = Vec::new();
    for t in 0..frames {
        let frame = &pred[t * FRAME_SIZE..(t + 1) * FRAME_SIZE];
        for c in 0..NUM_CLASSES {
            // clusters hold (summed vector, summed norm, members)
            let mut clusters: Vec<(Vec3, f64, usize)> = Vec::new();
            for tr in 0..NUM_TRACKS {
                let v: Vec3 = core::array::from_fn(|k| frame[slot(tr, c) + k]);
                let n = norm(v);
                if !(n > cfg.threshold) {
                    continue;
                }
                match clusters.iter_mut().find(|cl| angle_deg(cl.0, v) < cfg.unify_deg) {
                    Some(cl) => {
                        cl.0 = [cl.0[0] + v[0], cl.0[1] + v[1], cl.0[2] + v[2]];
                        cl.1 += n;
                        cl.2 += 1;
                    }
                    None => clusters.push((v, n, 1)),
                }
            }
            for (v, s, m) in clusters {
                out.push(EventEstimate { frame: t, class: c, doa: DoaVector::new(v)?, score: s / m as f64 });
            }
        }
    }
    Ok(out)
}
