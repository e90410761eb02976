mod common;

use common::{grad_check, random_tensor, rng};
use proptest::prelude::*;
use seld6dof_core::autodiff::{Graph, Tensor};
use seld6dof_core::Error;

#[test]
fn matmul_identity_and_projector() {
    let mut g = Graph::new();
    let i2 = g.constant(&[2, 2], vec![1., 0., 0., 1.]).unwrap();
    let m = g.constant(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
    let p = g.matmul(i2, m).unwrap();
    assert_eq!(g.value(p), &[1., 2., 3., 4.]);

    let proj = g.constant(&[2, 2], vec![1., 0., 0., 0.]).unwrap();
    let b = g.constant(&[2, 2], vec![5., 6., 7., 8.]).unwrap();
    let c = g.matmul(proj, b).unwrap();
    assert_eq!(g.value(c), &[5., 6., 0., 0.]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(&[2, 3], vec![0.0; 6]).unwrap();
    let b = g.constant(&[2, 3], vec![0.0; 6]).unwrap();
    match g.matmul(a, b) {
        Err(Error::Dimension(msg)) => assert!(msg.contains("[2, 3]")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut r = rng(1);
    let a = random_tensor(&mut r, &[3, 4]);
    let b = random_tensor(&mut r, &[4, 2]);
    let err = grad_check(&[a, b], |g, v| {
        let c = g.matmul(v[0], v[1]).unwrap();
        g.sum(c)
    });
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn activations_at_zero() {
    let mut g = Graph::new();
    let z = g.leaf(&Tensor::zeros(&[2, 3]).with_grad(true));
    let s = g.sigmoid(z);
    assert!(g.value(s).iter().all(|&v| v == 0.5));
    let t = g.tanh(z);
    assert!(g.value(t).iter().all(|&v| v == 0.0));
    let l = g.sum(t);
    g.backward(l).unwrap();
    assert!(g.grad(z).unwrap().iter().all(|&v| v == 1.0));
}

#[test]
fn mul_gradient_matches_finite_differences() {
    let mut r = rng(2);
    let a = random_tensor(&mut r, &[2, 3]);
    let b = random_tensor(&mut r, &[2, 3]);
    let err = grad_check(&[a, b], |g, v| {
        let c = g.mul(v[0], v[1]).unwrap();
        let d = g.tanh(c);
        g.sum(d)
    });
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn non_broadcastable_shapes_are_rejected() {
    let mut g = Graph::new();
    let a = g.constant(&[2, 3], vec![0.0; 6]).unwrap();
    let b = g.constant(&[2], vec![0.0; 2]).unwrap();
    assert!(matches!(g.add(a, b), Err(Error::Dimension(_))));
}

#[test]
fn backward_requires_scalar_loss() {
    let mut g = Graph::new();
    let x = g.leaf(&Tensor::zeros(&[3]).with_grad(true));
    assert!(matches!(g.backward(x), Err(Error::Contract(_))));
}

#[test]
fn sum_gives_ones_and_half_square_gives_identity() {
    let mut r = rng(3);
    let x = random_tensor(&mut r, &[2, 3, 2]);
    let mut g = Graph::new();
    let v = g.leaf(&x);
    let l = g.sum(v);
    g.backward(l).unwrap();
    assert!(g.grad(v).unwrap().iter().all(|&d| d == 1.0));

    let mut g = Graph::new();
    let v = g.leaf(&x);
    let sq = g.mul(v, v).unwrap();
    let s = g.sum(sq);
    let l = g.scale(s, 0.5);
    g.backward(l).unwrap();
    for (a, b) in g.grad(v).unwrap().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn repeated_backward_accumulates() {
    let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap().with_grad(true);
    let mut g = Graph::new();
    let v = g.leaf(&x);
    let sq = g.mul(v, v).unwrap();
    let l = g.sum(sq);
    g.backward(l).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(v).unwrap(), &[4.0, 8.0]);
    g.zero_grad();
    assert!(g.grad(v).is_none());
}

#[test]
fn broadcast_and_structural_ops_gradients() {
    let mut r = rng(4);
    let a = random_tensor(&mut r, &[2, 3, 4]);
    let b = random_tensor(&mut r, &[3, 1]);
    let c = random_tensor(&mut r, &[2, 2, 4]);
    let err = grad_check(&[a, b, c], |g, v| {
        let x = g.mul(v[0], v[1]).unwrap();
        let x = g.sub(x, v[1]).unwrap();
        let y = g.concat(&[x, v[2]], 1).unwrap();
        let y = g.permute(y, &[2, 0, 1]).unwrap();
        let y = g.slice(y, 2, 1, 3).unwrap();
        let m = g.mean_axis(y, 0).unwrap();
        let m = g.sigmoid(m);
        let m = g.affine(m, 3.0, -1.0);
        let m = g.reshape(m, &[6]).unwrap();
        let m = g.relu(m);
        let z = g.mul(m, m).unwrap();
        g.mean(z)
    });
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn conv2d_causal_gradient() {
    let mut r = rng(5);
    let x = random_tensor(&mut r, &[2, 2, 5, 4]);
    let w = random_tensor(&mut r, &[3, 2, 3, 3]);
    let b = random_tensor(&mut r, &[3]);
    let err = grad_check(&[x, w, b], |g, v| {
        let y = g.conv2d_causal(v[0], v[1], Some(v[2])).unwrap();
        let y = g.tanh(y);
        g.sum(y)
    });
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn conv1d_causal_gradient() {
    let mut r = rng(6);
    let x = random_tensor(&mut r, &[2, 3, 7]);
    let w = random_tensor(&mut r, &[2, 3, 5]);
    let b = random_tensor(&mut r, &[2]);
    let err = grad_check(&[x, w, b], |g, v| {
        let y = g.conv1d_causal(v[0], v[1], Some(v[2])).unwrap();
        let y = g.tanh(y);
        g.sum(y)
    });
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn conv_rejects_even_frequency_kernel() {
    let mut g = Graph::new();
    let x = g.constant(&[1, 1, 4, 3], vec![0.0; 12]).unwrap();
    let w = g.constant(&[1, 1, 1, 2], vec![0.0; 2]).unwrap();
    assert!(matches!(g.conv2d_causal(x, w, None), Err(Error::Config(_))));
}

#[test]
fn batch_norm_gradients_train_and_eval() {
    let mut r = rng(7);
    let x = random_tensor(&mut r, &[3, 2, 4]);
    let gamma = random_tensor(&mut r, &[2]);
    let beta = random_tensor(&mut r, &[2]);
    let weights = random_tensor(&mut r, &[3, 2, 4]).with_grad(false);
    let err = grad_check(&[x.clone(), gamma.clone(), beta.clone(), weights.clone()], |g, v| {
        let (y, _, _) = g.batch_norm_train(v[0], v[1], v[2], 1e-5).unwrap();
        let y = g.mul(y, v[3]).unwrap();
        g.sum(y)
    });
    assert!(err < 1e-5, "train rel err {err}");
    let err = grad_check(&[x, gamma, beta, weights], |g, v| {
        let y = g.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2], &[0.5, 2.0], 1e-5).unwrap();
        let y = g.mul(y, v[3]).unwrap();
        g.sum(y)
    });
    assert!(err < 1e-6, "eval rel err {err}");
}

#[test]
fn max_pool_gradient() {
    let mut r = rng(8);
    let x = random_tensor(&mut r, &[1, 2, 4, 6]);
    let err = grad_check(&[x], |g, v| {
        let y = g.max_pool2d(v[0], 2, 3).unwrap();
        let y = g.mul(y, y).unwrap();
        g.sum(y)
    });
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn identical_inputs_give_bit_identical_results() {
    let run = || {
        let mut r = rng(9);
        let x = random_tensor(&mut r, &[2, 3, 6, 4]);
        let w = random_tensor(&mut r, &[2, 3, 2, 3]);
        let mut g = Graph::new();
        let (xv, wv) = (g.leaf(&x), g.leaf(&w));
        let y = g.conv2d_causal(xv, wv, None).unwrap();
        let l = g.sum(y);
        g.backward(l).unwrap();
        (g.value(y).to_vec(), g.grad(wv).unwrap().to_vec())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_compositions_pass_gradient_check(seed in 0u64..10_000, rows in 1usize..4, inner in 1usize..5, cols in 1usize..4) {
        let mut r = rng(seed);
        let a = random_tensor(&mut r, &[rows, inner]);
        let b = random_tensor(&mut r, &[inner, cols]);
        let bias = random_tensor(&mut r, &[cols]);
        let err = grad_check(&[a, b, bias], |g, v| {
            let y = g.matmul(v[0], v[1]).unwrap();
            let y = g.add(y, v[2]).unwrap();
            let s = g.sigmoid(y);
            let t = g.tanh(y);
            let z = g.mul(s, t).unwrap();
            let z = g.affine(z, 2.0, 0.5);
            let z = g.mul(z, z).unwrap();
            g.mean(z)
        });
        prop_assert!(err < 1e-4, "rel err {}", err);
    }
}

#[test]
fn conv2d_identity_kernel_and_impulse_causality() {
    let mut r = rng(40);
    let x = random_tensor(&mut r, &[1, 2, 6, 5]);
    let mut g = Graph::new();
    let xv = g.leaf(&x);
    // 1×1 kernel with identity channel mixing
    let w = g.constant(&[2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let y = g.conv2d_causal(xv, w, None).unwrap();
    assert_eq!(g.value(y), x.data());

    // impulse at frame 3 through a dense 3×3 kernel
    let mut imp = vec![0.0; 8 * 5];
    imp[3 * 5 + 2] = 1.0;
    let xi = g.constant(&[1, 1, 8, 5], imp).unwrap();
    let w = g.leaf(&random_tensor(&mut r, &[1, 1, 3, 3]));
    let y = g.conv2d_causal(xi, w, None).unwrap();
    let out = g.value(y);
    assert!(out[..3 * 5].iter().all(|v| *v == 0.0));
    assert!(out[3 * 5..6 * 5].iter().any(|v| *v != 0.0));
    assert!(out[6 * 5..].iter().all(|v| *v == 0.0));
}

#[test]
fn conv_kernel_larger_than_padded_input_is_config_error() {
    let mut g = Graph::new();
    // symmetric padding only falls short of an odd kernel on an empty axis
    let x = g.constant(&[1, 1, 4, 0], vec![]).unwrap();
    let w = g.constant(&[1, 1, 1, 5], vec![0.0; 5]).unwrap();
    assert!(matches!(g.conv2d_causal(x, w, None), Err(Error::Config(_))));
}
