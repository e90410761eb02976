//! Parameterized building blocks. Each block owns [`ParamId`]s into a shared
//! [`ParamStore`] and records its computation into a [`Graph`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamId, ParamStore, StatUpdate, Tensor, Var};
use crate::error::bail;
use crate::math;
use crate::Result;

/// Whether batch norms use batch statistics (and record running-statistic
/// updates) or their frozen running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameter factory with PyTorch-style default initialization.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: ChaCha8Rng,
}

impl Init<'_> {
    /// `U(-bound, bound)` trainable tensor.
    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.store.add(name, Tensor::new(shape, data).expect("shape and data agree").with_grad(true))
    }

    pub fn filled(&mut self, name: &str, shape: &[usize], value: f64, trainable: bool) -> ParamId {
        self.store.add(name, Tensor::full(shape, value).with_grad(trainable))
    }
}

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / math::sqrt(fan_in as f64)
}

/// `y = x·W + b` on `[n, in]` rows; `W` is stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, d_in: usize, d_out: usize, bias: bool) -> Self {
        let bound = fan_in_bound(d_in);
        let w = init.uniform(&format!("{name}.w"), &[d_in, d_out], bound);
        let b = bias.then(|| init.uniform(&format!("{name}.b"), &[d_out], bound));
        Self { w, b }
    }

    /// Zero weights and bias, for excitation heads that must start at unit gain.
    pub fn zeros(init: &mut Init, name: &str, d_in: usize, d_out: usize) -> Self {
        let w = init.filled(&format!("{name}.w"), &[d_in, d_out], 0.0, true);
        let b = Some(init.filled(&format!("{name}.b"), &[d_out], 0.0, true));
        Self { w, b }
    }

    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let y = g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = g.param(store, b);
                g.add(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Per-channel batch normalization with running statistics kept as
/// non-trainable entries of the store.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(init: &mut Init, name: &str, channels: usize, eps: f64) -> Self {
        Self {
            gamma: init.filled(&format!("{name}.gamma"), &[channels], 1.0, true),
            beta: init.filled(&format!("{name}.beta"), &[channels], 0.0, true),
            running_mean: init.filled(&format!("{name}.running_mean"), &[channels], 0.0, false),
            running_var: init.filled(&format!("{name}.running_var"), &[channels], 1.0, false),
            eps,
        }
    }

    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        match mode {
            Mode::Train => {
                let (y, batch_mean, batch_var) = g.batch_norm_train(x, gamma, beta, self.eps)?;
                g.record_stat_update(StatUpdate {
                    mean_param: self.running_mean,
                    var_param: self.running_var,
                    batch_mean,
                    batch_var,
                });
                Ok(y)
            }
            Mode::Eval => {
                let (m, v) = (store.get(self.running_mean).data(), store.get(self.running_var).data());
                g.batch_norm_eval(x, gamma, beta, m, v, self.eps)
            }
        }
    }
}

/// Causal 3×3 conv → batch norm → ReLU → max pool over `[b, c, t, f]`.
#[derive(Debug, Clone)]
pub struct AudioBlock {
    pub conv: ParamId,
    pub bn: BatchNorm,
    pub pool: (usize, usize),
}

impl AudioBlock {
    pub fn new(init: &mut Init, name: &str, c_in: usize, c_out: usize, pool: (usize, usize), eps: f64) -> Self {
        let conv = init.uniform(&format!("{name}.conv.w"), &[c_out, c_in, 3, 3], fan_in_bound(c_in * 9));
        Self { conv, bn: BatchNorm::new(init, &format!("{name}.bn"), c_out, eps), pool }
    }

    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let w = g.param(store, self.conv);
        let y = g.conv2d_causal(x, w, None)?;
        let y = self.bn.apply(g, store, y, mode)?;
        let y = g.relu(y);
        g.max_pool2d(y, self.pool.0, self.pool.1)
    }
}

/// Residual block of two causal 1-D convolutions over `[b, c, t]`, with a
/// 1×1 projection on the skip path when the channel count changes.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: ParamId,
    pub bn1: BatchNorm,
    pub conv2: ParamId,
    pub bn2: BatchNorm,
    pub proj: Option<(ParamId, ParamId)>,
}

impl ResBlock {
    pub fn new(init: &mut Init, name: &str, c_in: usize, c_out: usize, kernel: usize, eps: f64) -> Self {
        let conv1 = init.uniform(&format!("{name}.conv1.w"), &[c_out, c_in, kernel], fan_in_bound(c_in * kernel));
        let bn1 = BatchNorm::new(init, &format!("{name}.bn1"), c_out, eps);
        let conv2 = init.uniform(&format!("{name}.conv2.w"), &[c_out, c_out, kernel], fan_in_bound(c_out * kernel));
        let bn2 = BatchNorm::new(init, &format!("{name}.bn2"), c_out, eps);
        let proj = (c_in != c_out).then(|| {
            let bound = fan_in_bound(c_in);
            (
                init.uniform(&format!("{name}.proj.w"), &[c_out, c_in, 1], bound),
                init.uniform(&format!("{name}.proj.b"), &[c_out], bound),
            )
        });
        Self { conv1, bn1, conv2, bn2, proj }
    }

    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let w1 = g.param(store, self.conv1);
        let y = g.conv1d_causal(x, w1, None)?;
        let y = self.bn1.apply(g, store, y, mode)?;
        let y = g.relu(y);
        let w2 = g.param(store, self.conv2);
        let y = g.conv1d_causal(y, w2, None)?;
        let y = self.bn2.apply(g, store, y, mode)?;
        let skip = match self.proj {
            Some((w, b)) => {
                let (w, b) = (g.param(store, w), g.param(store, b));
                g.conv1d_causal(x, w, Some(b))?
            }
            None => x,
        };
        let y = g.add(y, skip)?;
        Ok(g.relu(y))
    }
}

/// Joint embedding width for fusing `c_a` and `c_s` channels.
pub fn joint_dim(c_a: usize, c_s: usize) -> usize {
    ((c_a + c_s) / 4).max(4)
}

/// Multi-modal transfer module, applied frame by frame.
///
/// The audio map is squeezed over frequency, joined with the sensor features
/// of the same frame into `Z = ReLU(W_A·â + W_S·s + b)`, and both modalities
/// are rescaled channel-wise by `2·sigmoid(U·Z)`. Without a sensor path this
/// is a squeeze-and-excitation block on the audio map alone.
#[derive(Debug, Clone)]
pub struct MmtmBlock {
    pub c_a: usize,
    pub c_s: usize,
    pub d_z: usize,
    pub w_a: Linear,
    pub w_s: Option<Linear>,
    pub u_a: Linear,
    pub u_s: Option<Linear>,
}

impl MmtmBlock {
    /// Excitation heads start at zero, so the block begins as the identity.
    /// `c_s = 0` builds the sensor-free squeeze-and-excitation form.
    pub fn new(init: &mut Init, name: &str, c_a: usize, c_s: usize) -> Self {
        let d_z = joint_dim(c_a, c_s);
        let w_a = Linear::new(init, &format!("{name}.w_a"), c_a, d_z, true);
        let w_s = (c_s > 0).then(|| Linear::new(init, &format!("{name}.w_s"), c_s, d_z, false));
        let u_a = Linear::zeros(init, &format!("{name}.u_a"), d_z, c_a);
        let u_s = (c_s > 0).then(|| Linear::zeros(init, &format!("{name}.u_s"), d_z, c_s));
        Self { c_a, c_s, d_z, w_a, w_s, u_a, u_s }
    }

    /// Fuses `a: [b, c_a, t, f]` with `s: [b, c_s, t]`; returns the gated pair.
    pub fn fuse(&self, g: &mut Graph, store: &ParamStore, a: Var, s: Option<Var>) -> Result<(Var, Option<Var>)> {
        let sa = g.shape(a).to_vec();
        if sa.len() != 4 || sa[1] != self.c_a {
            bail!(Dimension, "fusion expects audio [b, {}, t, f], got {:?}", self.c_a, sa);
        }
        let (b, t) = (sa[0], sa[2]);
        if s.is_some() != self.w_s.is_some() {
            bail!(Config, "fusion block built for {} sensor channels", self.c_s);
        }
        if let Some(s) = s {
            let ss = g.shape(s);
            if ss != [b, self.c_s, t] {
                bail!(Dimension, "fusion expects sensor [{b}, {}, {t}], got {:?}", self.c_s, ss);
            }
        }
        let squeezed = g.mean_axis(a, 3)?;
        let rows = to_rows(g, squeezed, b, self.c_a, t)?;
        let mut z = self.w_a.apply(g, store, rows)?;
        if let (Some(s), Some(w_s)) = (s, &self.w_s) {
            let rows = to_rows(g, s, b, self.c_s, t)?;
            let zs = w_s.apply(g, store, rows)?;
            z = g.add(z, zs)?;
        }
        let z = g.relu(z);

        let gate_a = gate(g, store, &self.u_a, z, b, self.c_a, t)?;
        let gate_a = g.reshape(gate_a, &[b, self.c_a, t, 1])?;
        let a = g.mul(a, gate_a)?;
        let s = match (s, &self.u_s) {
            (Some(s), Some(u_s)) => {
                let gate_s = gate(g, store, u_s, z, b, self.c_s, t)?;
                Some(g.mul(s, gate_s)?)
            }
            _ => None,
        };
        Ok((a, s))
    }
}

/// `[b, c, t, ...]` with unit trailing extents to `[b·t, c]` rows.
fn to_rows(g: &mut Graph, x: Var, b: usize, c: usize, t: usize) -> Result<Var> {
    let x = g.reshape(x, &[b, c, t])?;
    let x = g.permute(x, &[0, 2, 1])?;
    g.reshape(x, &[b * t, c])
}

/// `2·sigmoid(U·z)` back in `[b, c, t]` layout.
fn gate(g: &mut Graph, store: &ParamStore, u: &Linear, z: Var, b: usize, c: usize, t: usize) -> Result<Var> {
    let e = u.apply(g, store, z)?;
    let e = g.sigmoid(e);
    let e = g.scale(e, 2.0);
    let e = g.reshape(e, &[b, t, c])?;
    g.permute(e, &[0, 2, 1])
}

#[derive(Debug, Clone)]
struct GruLayer {
    w_i: ParamId,
    w_h: ParamId,
    b_i: ParamId,
    b_h: ParamId,
}

/// Stacked uni-directional GRU with PyTorch gate equations (order r, z, n):
///
/// ```text
/// r = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone)]
pub struct Gru {
    pub input: usize,
    pub hidden: usize,
    layers: Vec<GruLayer>,
}

impl Gru {
    pub fn new(init: &mut Init, name: &str, input: usize, hidden: usize, layers: usize) -> Self {
        let bound = fan_in_bound(hidden);
        let layers = (0..layers)
            .map(|l| {
                let d = if l == 0 { input } else { hidden };
                GruLayer {
                    w_i: init.uniform(&format!("{name}.{l}.w_i"), &[d, 3 * hidden], bound),
                    w_h: init.uniform(&format!("{name}.{l}.w_h"), &[hidden, 3 * hidden], bound),
                    b_i: init.uniform(&format!("{name}.{l}.b_i"), &[3 * hidden], bound),
                    b_h: init.uniform(&format!("{name}.{l}.b_h"), &[3 * hidden], bound),
                }
            })
            .collect();
        Self { input, hidden, layers }
    }

    /// `[b, t, input]` to `[b, t, hidden]`, starting from a zero state.
    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[2] != self.input {
            bail!(Dimension, "GRU expects [b, t, {}], got {:?}", self.input, s);
        }
        let (b, t, h) = (s[0], s[1], self.hidden);
        let mut x = x;
        for layer in &self.layers {
            let d = g.shape(x)[2];
            let rows = g.reshape(x, &[b * t, d])?;
            let w_i = g.param(store, layer.w_i);
            let b_i = g.param(store, layer.b_i);
            let w_h = g.param(store, layer.w_h);
            let b_h = g.param(store, layer.b_h);
            let xi = g.matmul(rows, w_i)?;
            let xi = g.add(xi, b_i)?;
            let xi = g.reshape(xi, &[b, t, 3 * h])?;
            let mut state = g.constant(&[b, h], vec![0.0; b * h])?;
            let mut outs = Vec::with_capacity(t);
            for k in 0..t {
                let xk = g.slice(xi, 1, k, 1)?;
                let xk = g.reshape(xk, &[b, 3 * h])?;
                let hh = g.matmul(state, w_h)?;
                let hh = g.add(hh, b_h)?;
                let part = |g: &mut Graph, v: Var, i: usize| g.slice(v, 1, i * h, h);
                let (xr, xz, xn) = (part(g, xk, 0)?, part(g, xk, 1)?, part(g, xk, 2)?);
                let (hr, hz, hn) = (part(g, hh, 0)?, part(g, hh, 1)?, part(g, hh, 2)?);
                let r = g.add(xr, hr)?;
                let r = g.sigmoid(r);
                let z = g.add(xz, hz)?;
                let z = g.sigmoid(z);
                let rn = g.mul(r, hn)?;
                let n = g.add(xn, rn)?;
                let n = g.tanh(n);
                let diff = g.sub(state, n)?;
                let zd = g.mul(z, diff)?;
                state = g.add(n, zd)?;
                outs.push(g.reshape(state, &[b, 1, h])?);
            }
            x = g.concat(&outs, 1)?;
        }
        Ok(x)
    }
}
