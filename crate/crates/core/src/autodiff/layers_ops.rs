//! Fused network operations with hand-written backward passes: causal
//! convolution, batch normalization and max pooling.

use alloc::vec;
use alloc::vec::Vec;

use super::graph::{Graph, Op, Var};
use crate::error::bail;
use crate::math;
use crate::Result;

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    batch: usize,
    c_in: usize,
    c_out: usize,
    t: usize,
    f: usize,
    kt: usize,
    kf: usize,
}

impl ConvDims {
    fn pad_f(&self) -> usize {
        (self.kf - 1) / 2
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvSaved {
    x: Var,
    w: Var,
    b: Option<Var>,
    dims: ConvDims,
}

#[derive(Debug, Clone)]
pub(crate) struct BnSaved {
    x: Var,
    gamma: Var,
    beta: Var,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_stats: bool,
    channels: usize,
    inner: usize,
}

/// Valid output range `[lo, hi)` along frequency for kernel tap offset `df`.
fn f_range(f: usize, df: isize) -> (usize, usize) {
    let lo = if df < 0 { (-df) as usize } else { 0 };
    let hi = if df > 0 { f.saturating_sub(df as usize) } else { f };
    (lo, hi.max(lo))
}

impl ConvSaved {
    pub(crate) fn backward(&self, g: &Graph, grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let d = self.dims;
        let x = g.value(self.x);
        let w = g.value(self.w);
        let plane = d.t * d.f;
        let pf = d.pad_f() as isize;
        let need_x = g.node(self.x).requires_grad;
        let need_w = g.node(self.w).requires_grad;
        let mut gx = if need_x { vec![0.0; x.len()] } else { Vec::new() };
        let mut gw = if need_w { vec![0.0; w.len()] } else { Vec::new() };
        for b in 0..d.batch {
            for co in 0..d.c_out {
                let gplane = &grad[(b * d.c_out + co) * plane..][..plane];
                for ci in 0..d.c_in {
                    let xoff = (b * d.c_in + ci) * plane;
                    for kt in 0..d.kt {
                        let shift = d.kt - 1 - kt;
                        for kf in 0..d.kf {
                            let widx = ((co * d.c_in + ci) * d.kt + kt) * d.kf + kf;
                            let df = kf as isize - pf;
                            let (lo, hi) = f_range(d.f, df);
                            if lo >= hi {
                                continue;
                            }
                            let ilo = (lo as isize + df) as usize;
                            let wv = w[widx];
                            let mut acc = 0.0;
                            for t in shift..d.t {
                                let grow = &gplane[t * d.f + lo..t * d.f + hi];
                                let ibase = xoff + (t - shift) * d.f + ilo;
                                if need_w {
                                    let xrow = &x[ibase..ibase + (hi - lo)];
                                    acc += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                                }
                                if need_x {
                                    gx[ibase..ibase + (hi - lo)].iter_mut().zip(grow).for_each(|(dst, gv)| *dst += wv * gv);
                                }
                            }
                            if need_w {
                                gw[widx] += acc;
                            }
                        }
                    }
                }
            }
        }
        let mut out = Vec::new();
        if need_x {
            out.push((self.x, gx));
        }
        if need_w {
            out.push((self.w, gw));
        }
        if let Some(bv) = self.b {
            if g.node(bv).requires_grad {
                let mut gb = vec![0.0; d.c_out];
                for b in 0..d.batch {
                    for (co, slot) in gb.iter_mut().enumerate() {
                        *slot += grad[(b * d.c_out + co) * plane..][..plane].iter().sum::<f64>();
                    }
                }
                out.push((bv, gb));
            }
        }
        out
    }
}

impl BnSaved {
    pub(crate) fn backward(&self, g: &Graph, grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let gamma = g.value(self.gamma);
        let batch = grad.len() / (self.channels * self.inner);
        let mut gx = vec![0.0; grad.len()];
        let mut ggamma = vec![0.0; self.channels];
        let mut gbeta = vec![0.0; self.channels];
        for c in 0..self.channels {
            let idx = |b: usize| (b * self.channels + c) * self.inner;
            let (mut s1, mut s2) = (0.0, 0.0);
            for b in 0..batch {
                let o = idx(b);
                for j in 0..self.inner {
                    let gv = grad[o + j];
                    s1 += gv;
                    s2 += gv * self.xhat[o + j];
                }
            }
            ggamma[c] = s2;
            gbeta[c] = s1;
            let inv = self.inv_std[c];
            if self.batch_stats {
                // dx = inv/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)), dxhat = g·γ
                let n = (batch * self.inner) as f64;
                for b in 0..batch {
                    let o = idx(b);
                    for j in 0..self.inner {
                        let dxhat = grad[o + j] * gamma[c];
                        gx[o + j] = inv / n * (n * dxhat - gamma[c] * s1 - self.xhat[o + j] * gamma[c] * s2);
                    }
                }
            } else {
                for b in 0..batch {
                    let o = idx(b);
                    for j in 0..self.inner {
                        gx[o + j] = grad[o + j] * gamma[c] * inv;
                    }
                }
            }
        }
        let mut out = Vec::new();
        if g.node(self.x).requires_grad {
            out.push((self.x, gx));
        }
        if g.node(self.gamma).requires_grad {
            out.push((self.gamma, ggamma));
        }
        if g.node(self.beta).requires_grad {
            out.push((self.beta, gbeta));
        }
        out
    }
}

impl Graph {
    fn conv_impl(&mut self, x: Var, w: Var, b: Option<Var>, d: ConvDims, out_shape: Vec<usize>) -> Result<Var> {
        if d.kt == 0 || d.kf == 0 || d.kf % 2 == 0 {
            bail!(Config, "kernel {}x{} must have positive extents and odd frequency size", d.kt, d.kf);
        }
        if d.t == 0 || d.f + 2 * d.pad_f() < d.kf {
            bail!(Config, "kernel {}x{} larger than padded input {}x{}", d.kt, d.kf, d.t, d.f);
        }
        if let Some(bv) = b {
            if self.shape(bv) != [d.c_out] {
                bail!(Dimension, "conv bias {:?} for {} output channels", self.shape(bv), d.c_out);
            }
        }
        let plane = d.t * d.f;
        let pf = d.pad_f() as isize;
        let xv = self.value(x);
        let wv = self.value(w);
        let bias = b.map(|bv| self.value(bv));
        let mut out = vec![0.0; d.batch * d.c_out * plane];
        for bi in 0..d.batch {
            for co in 0..d.c_out {
                let oplane = &mut out[(bi * d.c_out + co) * plane..][..plane];
                if let Some(bias) = bias {
                    oplane.iter_mut().for_each(|v| *v = bias[co]);
                }
                for ci in 0..d.c_in {
                    let iplane = &xv[(bi * d.c_in + ci) * plane..][..plane];
                    for kt in 0..d.kt {
                        let shift = d.kt - 1 - kt;
                        for kf in 0..d.kf {
                            let wt = wv[((co * d.c_in + ci) * d.kt + kt) * d.kf + kf];
                            if wt == 0.0 {
                                continue;
                            }
                            let df = kf as isize - pf;
                            let (lo, hi) = f_range(d.f, df);
                            if lo >= hi {
                                continue;
                            }
                            let ilo = (lo as isize + df) as usize;
                            for t in shift..d.t {
                                let irow = &iplane[(t - shift) * d.f + ilo..][..hi - lo];
                                let orow = &mut oplane[t * d.f + lo..t * d.f + hi];
                                orow.iter_mut().zip(irow).for_each(|(o, i)| *o += wt * i);
                            }
                        }
                    }
                }
            }
        }
        let rg = self.node(x).requires_grad || self.node(w).requires_grad || b.is_some_and(|bv| self.node(bv).requires_grad);
        Ok(self.push(out_shape, out, Op::Conv(ConvSaved { x, w, b, dims: d }), rg))
    }

    /// Causal 2-D convolution over `[batch, c_in, time, freq]`.
    ///
    /// The time axis is left-padded with `kt - 1` zero frames, so output frame
    /// `t` only sees input frames `<= t`; frequency is padded symmetrically.
    /// Weights are `[c_out, c_in, kt, kf]`, stride 1.
    pub fn conv2d_causal(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            bail!(Dimension, "conv2d input {:?} with weights {:?}", sx, sw);
        }
        let d = ConvDims { batch: sx[0], c_in: sx[1], c_out: sw[0], t: sx[2], f: sx[3], kt: sw[2], kf: sw[3] };
        self.conv_impl(x, w, b, d, vec![d.batch, d.c_out, d.t, d.f])
    }

    /// Causal 1-D convolution over `[batch, c_in, time]` with weights
    /// `[c_out, c_in, k]`; the time axis is left-padded with `k - 1` zeros.
    pub fn conv1d_causal(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] {
            bail!(Dimension, "conv1d input {:?} with weights {:?}", sx, sw);
        }
        let d = ConvDims { batch: sx[0], c_in: sx[1], c_out: sw[0], t: sx[2], f: 1, kt: sw[2], kf: 1 };
        self.conv_impl(x, w, b, d, vec![d.batch, d.c_out, d.t])
    }

    fn bn_check(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let s = self.shape(x);
        if s.len() < 2 {
            bail!(Dimension, "batch-norm input {:?} needs a channel axis", s);
        }
        let c = s[1];
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            bail!(Dimension, "batch-norm affine params {:?}/{:?} for {} channels", self.shape(gamma), self.shape(beta), c);
        }
        Ok((s[0], c, s[2..].iter().product()))
    }

    fn bn_finish(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], inv_std: Vec<f64>, batch_stats: bool) -> Var {
        let (c, inner) = {
            let s = self.shape(x);
            (s[1], s[2..].iter().product::<usize>())
        };
        let xv = self.value(x);
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for (blk, chunk) in xv.chunks(inner).enumerate() {
            let ch = blk % c;
            for (j, &v) in chunk.iter().enumerate() {
                let h = (v - mean[ch]) * inv_std[ch];
                xhat[blk * inner + j] = h;
                out[blk * inner + j] = gv[ch] * h + bv[ch];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.node(x).requires_grad || self.node(gamma).requires_grad || self.node(beta).requires_grad;
        let saved = BnSaved { x, gamma, beta, xhat, inv_std, batch_stats, channels: c, inner };
        self.push(shape, out, Op::BatchNorm(saved), rg)
    }

    /// Batch normalization with statistics of the current batch over every
    /// axis except 1. Also returns the batch mean and unbiased variance.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (batch, c, inner) = self.bn_check(x, gamma, beta)?;
        let n = batch * inner;
        let xv = self.value(x);
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for (blk, chunk) in xv.chunks(inner).enumerate() {
            mean[blk % c] += chunk.iter().sum::<f64>();
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for (blk, chunk) in xv.chunks(inner).enumerate() {
            let m = mean[blk % c];
            var[blk % c] += chunk.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
        let biased: Vec<f64> = var.iter().map(|v| v / n as f64).collect();
        let unbiased: Vec<f64> = var.iter().map(|v| v / (n.max(2) - 1) as f64).collect();
        let inv_std = biased.iter().map(|v| 1.0 / math::sqrt(v + eps)).collect();
        let out = self.bn_finish(x, gamma, beta, &mean, inv_std, true);
        Ok((out, mean, unbiased))
    }

    /// Batch normalization with fixed (running) statistics; frame-local.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
        let (_, c, _) = self.bn_check(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            bail!(Dimension, "running statistics of length {}/{} for {} channels", mean.len(), var.len(), c);
        }
        let inv_std = var.iter().map(|v| 1.0 / math::sqrt(v + eps)).collect();
        Ok(self.bn_finish(x, gamma, beta, mean, inv_std, false))
    }

    /// Non-overlapping max pooling over the last two axes of `[b, c, t, f]`;
    /// trailing remainders are dropped.
    pub fn max_pool2d(&mut self, x: Var, pool_t: usize, pool_f: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || pool_t == 0 || pool_f == 0 {
            bail!(Dimension, "max_pool2d({}, {}) on {:?}", pool_t, pool_f, s);
        }
        let (to, fo) = (s[2] / pool_t, s[3] / pool_f);
        if to == 0 || fo == 0 {
            bail!(Dimension, "pooling {}x{} leaves nothing of {:?}", pool_t, pool_f, s);
        }
        let xv = self.value(x);
        let planes = s[0] * s[1];
        let mut out = Vec::with_capacity(planes * to * fo);
        let mut arg = Vec::with_capacity(planes * to * fo);
        for p in 0..planes {
            let base = p * s[2] * s[3];
            for t in 0..to {
                for f in 0..fo {
                    let mut best = f64::NEG_INFINITY;
                    let mut bi = 0;
                    for dt in 0..pool_t {
                        for dfi in 0..pool_f {
                            let i = base + (t * pool_t + dt) * s[3] + f * pool_f + dfi;
                            if xv[i] > best {
                                best = xv[i];
                                bi = i;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(bi);
                }
            }
        }
        let rg = self.node(x).requires_grad;
        Ok(self.push(vec![s[0], s[1], to, fo], out, Op::MaxPool(x, arg), rg))
    }
}
