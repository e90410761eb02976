#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seld6dof_core::autodiff::{Graph, ParamStore, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap().with_grad(true)
}

/// Relative error with a small floor on the denominator so that vanishing
/// gradients do not blow up the ratio.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central finite differences (h = 1e-5) of the scalar produced by `f`
/// against the reverse-mode gradients. Returns the worst relative error.
pub fn grad_check<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let h = 1e-5;
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let loss = f(&mut g, &vars);
    g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> =
        vars.iter().map(|&v| g.grad(v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; g.value(v).len()])).collect();
    let eval = |ts: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.leaf(t)).collect();
        let l = f(&mut g, &vars);
        g.value(l)[0]
    };
    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        if !t.requires_grad() {
            continue;
        }
        for i in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k][i], numeric));
        }
    }
    worst
}

/// Finite-difference check over every trainable parameter that `f` binds and
/// every input tensor with `requires_grad`. Returns the worst relative error.
pub fn param_grad_check<F>(store: &ParamStore, inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Var,
{
    let h = 1e-5;
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let loss = f(&mut g, store, &vars);
    g.backward(loss).unwrap();
    let eval = |store: &ParamStore, ts: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.leaf(t)).collect();
        let l = f(&mut g, store, &vars);
        g.value(l)[0]
    };
    let mut worst: f64 = 0.0;
    for (id, v) in g.bindings().collect::<Vec<_>>() {
        if !store.get(id).requires_grad() {
            continue;
        }
        let analytic = g.grad(v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; g.value(v).len()]);
        for i in 0..analytic.len() {
            let mut plus = store.clone();
            plus.get_mut(id).data_mut()[i] += h;
            let mut minus = store.clone();
            minus.get_mut(id).data_mut()[i] -= h;
            let numeric = (eval(&plus, inputs) - eval(&minus, inputs)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    for (k, t) in inputs.iter().enumerate() {
        if !t.requires_grad() {
            continue;
        }
        let analytic = g.grad(vars[k]).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; t.numel()]);
        for i in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (eval(store, &plus) - eval(store, &minus)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    worst
}

/// Adds `U(-amp, amp)` noise to every trainable parameter and draws random
/// positive running statistics, so that no path is trivially zero.
pub fn jitter_params(store: &mut ParamStore, rng: &mut ChaCha8Rng, amp: f64) {
    for id in store.ids().collect::<Vec<_>>() {
        let trainable = store.get(id).requires_grad();
        let name = store.name(id).to_string();
        for v in store.get_mut(id).data_mut() {
            if trainable {
                *v += rng.random_range(-amp..amp);
            } else if name.ends_with("running_var") {
                *v = rng.random_range(0.5..2.0);
            } else {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }
}

/// Fixed random linear functional of `y`, a generic scalar probe.
pub fn probe(g: &mut Graph, y: Var, seed: u64) -> Var {
    let mut r = rng(seed);
    let shape = g.shape(y).to_vec();
    let n = g.value(y).len();
    let c = g.constant(&shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let p = g.mul(y, c).unwrap();
    g.sum(p)
}

pub mod oracles;
