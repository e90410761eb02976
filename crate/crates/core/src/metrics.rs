//! Location-dependent detection and class-dependent localization metrics.
//!
//! References and predictions are matched per (frame, class) with a
//! minimum-total-angle assignment. A matched pair within `Θ` is a true
//! positive; a pair beyond `Θ` counts as one miss and one false alarm.
//! Error rate is built from per-segment substitutions, deletions and
//! insertions; F1 is micro-averaged; LE/LR are macro-averaged over classes.

use alloc::vec;
use alloc::vec::Vec;

use crate::accdoa::{EventEstimate, FrameLabel};
use crate::error::bail;
use crate::geometry::{norm, DoaVector};
use crate::{Result, NUM_CLASSES};

/// Reported localization error when nothing was matched.
pub const LE_SENTINEL_DEG: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MetricConfig {
    pub theta_deg: f64,
    pub segment_s: f64,
    pub frame_s: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { theta_deg: 20.0, segment_s: 1.0, frame_s: 0.1 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_deg > 0.0) || !(self.frame_s > 0.0) || !(self.segment_s >= self.frame_s) {
            bail!(Config, "invalid metric configuration {:?}", self);
        }
        Ok(())
    }

    pub fn frames_per_segment(&self) -> usize {
        crate::math::round(self.segment_s / self.frame_s).max(1.0) as usize
    }
}

/// A reference or predicted source in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub class: usize,
    pub doa: DoaVector,
}

impl From<&FrameLabel> for Detection {
    fn from(l: &FrameLabel) -> Self {
        Self { frame: l.frame, class: l.class, doa: l.doa }
    }
}

impl From<&EventEstimate> for Detection {
    fn from(e: &EventEstimate) -> Self {
        Self { frame: e.frame, class: e.class, doa: e.doa }
    }
}

/// Minimum-cost assignment for an `r × c` cost matrix (row-major).
/// Returns `(row, col)` pairs; `min(r, c)` of them.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let at = |i: usize, j: usize| if transpose { cost[j * cols + i] } else { cost[i * cols + j] };
    // potentials method, 1-based with a virtual column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> =
        (1..=m).filter(|&j| p[j] != 0).map(|j| if transpose { (j - 1, p[j] - 1) } else { (p[j] - 1, j - 1) }).collect();
    out.sort_unstable();
    out
}

/// Result of matching one frame and class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    /// `(ref index, pred index, angular error in degrees)`
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_refs: Vec<usize>,
    pub unmatched_preds: Vec<usize>,
}

fn check_unit(d: &DoaVector) -> Result<()> {
    let n = norm(d.vector());
    if (n - 1.0).abs() > 1e-6 {
        bail!(Contract, "direction has norm {n}, expected a unit vector");
    }
    Ok(())
}

/// Minimum-total-angle one-to-one matching of same-class sources in a frame.
pub fn match_frame(refs: &[DoaVector], preds: &[DoaVector]) -> Result<FrameMatch> {
    for d in refs.iter().chain(preds) {
        check_unit(d)?;
    }
    let cost: Vec<f64> = refs.iter().flat_map(|r| preds.iter().map(move |p| r.angle_to_deg(p))).collect();
    let pairs: Vec<(usize, usize, f64)> =
        hungarian(&cost, refs.len(), preds.len()).into_iter().map(|(i, j)| (i, j, cost[i * preds.len() + j])).collect();
    Ok(FrameMatch {
        unmatched_refs: (0..refs.len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect(),
        unmatched_preds: (0..preds.len()).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect(),
        pairs,
    })
}

/// Per-class breakdown.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassReport {
    pub class: usize,
    pub n_ref: usize,
    pub n_pred: usize,
    pub tp: usize,
    pub fp: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
    pub matched: usize,
    /// Mean matched angular error, or the sentinel without matches.
    pub le: f64,
    /// Matched / references in percent; `None` without references.
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub er: f64,
    pub f1: f64,
    pub le_cd: f64,
    pub lr_cd: f64,
    /// True when `le_cd` is the no-match sentinel.
    pub le_undefined: bool,
    pub per_class: Vec<ClassReport>,
}

#[derive(Debug, Clone, Copy, Default)]
struct ClassAcc {
    n_ref: usize,
    n_pred: usize,
    tp: usize,
    matched: usize,
    err_sum: f64,
}

/// Accumulates counts over any number of recordings.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    cfg: MetricConfig,
    classes: [ClassAcc; NUM_CLASSES],
    s: usize,
    d: usize,
    i: usize,
    n: usize,
}

impl MetricAccumulator {
    pub fn new(cfg: MetricConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, classes: [ClassAcc::default(); NUM_CLASSES], s: 0, d: 0, i: 0, n: 0 })
    }

    /// Adds one recording of `frames` label frames.
    pub fn add(&mut self, refs: &[Detection], preds: &[Detection], frames: usize) -> Result<()> {
        for x in refs.iter().chain(preds) {
            if x.frame >= frames {
                bail!(Data, "detection at frame {} outside the {frames}-frame grid", x.frame);
            }
            if x.class >= NUM_CLASSES {
                bail!(Data, "class {} outside 0..{NUM_CLASSES}", x.class);
            }
        }
        let per_seg = self.cfg.frames_per_segment();
        let segments = frames.div_ceil(per_seg);
        let mut seg_fn = vec![0usize; segments];
        let mut seg_fp = vec![0usize; segments];
        let mut seg_n = vec![0usize; segments];
        let mut by_frame: Vec<(Vec<&Detection>, Vec<&Detection>)> = vec![(Vec::new(), Vec::new()); frames];
        for r in refs {
            by_frame[r.frame].0.push(r);
        }
        for p in preds {
            by_frame[p.frame].1.push(p);
        }
        for (f, (fr, fp)) in by_frame.iter().enumerate() {
            for c in 0..NUM_CLASSES {
                let r: Vec<DoaVector> = fr.iter().filter(|x| x.class == c).map(|x| x.doa).collect();
                let p: Vec<DoaVector> = fp.iter().filter(|x| x.class == c).map(|x| x.doa).collect();
                if r.is_empty() && p.is_empty() {
                    continue;
                }
                let m = match_frame(&r, &p)?;
                let tp = m.pairs.iter().filter(|x| x.2 <= self.cfg.theta_deg).count();
                let acc = &mut self.classes[c];
                acc.n_ref += r.len();
                acc.n_pred += p.len();
                acc.tp += tp;
                acc.matched += m.pairs.len();
                acc.err_sum += m.pairs.iter().map(|x| x.2).sum::<f64>();
                let seg = f / per_seg;
                seg_fn[seg] += r.len() - tp;
                seg_fp[seg] += p.len() - tp;
                seg_n[seg] += r.len();
            }
        }
        for k in 0..segments {
            let (fnk, fpk) = (seg_fn[k], seg_fp[k]);
            self.s += fnk.min(fpk);
            self.d += fnk.saturating_sub(fpk);
            self.i += fpk.saturating_sub(fnk);
            self.n += seg_n[k];
        }
        Ok(())
    }

    pub fn report(&self) -> MetricReport {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        let mut per_class = Vec::with_capacity(NUM_CLASSES);
        let (mut le_sum, mut le_n, mut lr_sum, mut lr_n) = (0.0, 0usize, 0.0, 0usize);
        for (c, a) in self.classes.iter().enumerate() {
            tp += a.tp;
            fp += a.n_pred - a.tp;
            fn_ += a.n_ref - a.tp;
            let le = if a.matched > 0 { a.err_sum / a.matched as f64 } else { LE_SENTINEL_DEG };
            if a.matched > 0 {
                le_sum += le;
                le_n += 1;
            }
            let lr = (a.n_ref > 0).then(|| 100.0 * a.matched as f64 / a.n_ref as f64);
            if let Some(v) = lr {
                lr_sum += v;
                lr_n += 1;
            }
            per_class.push(ClassReport {
                class: c,
                n_ref: a.n_ref,
                n_pred: a.n_pred,
                tp: a.tp,
                fp: a.n_pred - a.tp,
                fn_: a.n_ref - a.tp,
                matched: a.matched,
                le,
                lr,
            });
        }
        let denom = 2 * tp + fp + fn_;
        MetricReport {
            er: (self.s + self.d + self.i) as f64 / self.n.max(1) as f64,
            f1: if denom == 0 { 100.0 } else { 100.0 * 2.0 * tp as f64 / denom as f64 },
            le_cd: if le_n > 0 { le_sum / le_n as f64 } else { LE_SENTINEL_DEG },
            lr_cd: if lr_n > 0 { lr_sum / lr_n as f64 } else { 100.0 },
            le_undefined: le_n == 0,
            per_class,
        }
    }
}

/// Metrics of a single recording with `frames` label frames.
pub fn compute_metrics(refs: &[Detection], preds: &[Detection], frames: usize, cfg: &MetricConfig) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(*cfg)?;
    acc.add(refs, preds, frames)?;
    Ok(acc.report())
}
