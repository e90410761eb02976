mod common;

use common::oracles::{brute_adpit, random_adpit_case, random_unit};
use seld6dof_core::accdoa::{adpit_loss, adpit_loss_value, decode, encode_targets, DecodeConfig, FrameLabel, FRAME_SIZE};
use seld6dof_core::autodiff::{Graph, Tensor};
use seld6dof_core::geometry::DoaVector;

fn rows(sources: &[Vec<Vec<[f64; 3]>>]) -> Vec<FrameLabel> {
    let mut out = Vec::new();
    for (f, per_class) in sources.iter().enumerate() {
        for (c, src) in per_class.iter().enumerate() {
            for (k, v) in src.iter().enumerate() {
                out.push(FrameLabel { frame: f, class: c, track: k, doa: DoaVector::new(*v).unwrap() });
            }
        }
    }
    out
}

#[test]
fn loss_equals_exhaustive_minimum() {
    let mut rng = common::rng(77);
    for case in 0..300 {
        let (pred, sources) = random_adpit_case(&mut rng);
        let target = encode_targets(&rows(&sources), 2).unwrap();
        let got = adpit_loss_value(&pred, &target).unwrap();
        let want = brute_adpit(&pred, &sources, 12);
        assert!((got - want).abs() <= 1e-9, "case {case}: {got} vs {want}");
    }
}

fn permute_tracks(pred: &[f64], perm: [usize; 3]) -> Vec<f64> {
    let mut out = vec![0.0; pred.len()];
    for f in 0..pred.len() / FRAME_SIZE {
        for tr in 0..3 {
            let src = f * FRAME_SIZE + perm[tr] * 36;
            let dst = f * FRAME_SIZE + tr * 36;
            out[dst..dst + 36].copy_from_slice(&pred[src..src + 36]);
        }
    }
    out
}

#[test]
fn global_track_permutation_leaves_loss_unchanged() {
    let mut rng = common::rng(8);
    for _ in 0..50 {
        let (pred, sources) = random_adpit_case(&mut rng);
        let target = encode_targets(&rows(&sources), 2).unwrap();
        let base = adpit_loss_value(&pred, &target).unwrap();
        for perm in [[1, 0, 2], [2, 1, 0], [1, 2, 0]] {
            let l = adpit_loss_value(&permute_tracks(&pred, perm), &target).unwrap();
            assert!((l - base).abs() <= 1e-12 * base.max(1.0));
        }
        assert!(base >= 0.0);
    }
}

#[test]
fn zero_exactly_at_admissible_assignments() {
    let mut rng = common::rng(9);
    for _ in 0..50 {
        let (_, sources) = random_adpit_case(&mut rng);
        let target = encode_targets(&rows(&sources), 2).unwrap();
        let dense = target.dense();
        assert_eq!(adpit_loss_value(&dense, &target).unwrap(), 0.0);
        // any other permutation of an admissible target is admissible too
        assert_eq!(adpit_loss_value(&permute_tracks(&dense, [2, 0, 1]), &target).unwrap(), 0.0);
        let mut off = dense.clone();
        off[5] += 1e-3;
        assert!(adpit_loss_value(&off, &target).unwrap() > 0.0);
    }
}

#[test]
fn graph_loss_matches_value_and_gradient() {
    let mut rng = common::rng(10);
    let (pred, sources) = random_adpit_case(&mut rng);
    let target = encode_targets(&rows(&sources), 2).unwrap();
    let t = Tensor::new(&[2, 3, 12, 3], pred.clone()).unwrap().with_grad(true);
    let mut g = Graph::new();
    let p = g.leaf(&t);
    let l = adpit_loss(&mut g, p, &target).unwrap();
    assert!((g.value(l)[0] - adpit_loss_value(&pred, &target).unwrap()).abs() < 1e-15);
    g.backward(l).unwrap();
    // d/dp mean((p - y)²) = 2 (p - y) / n with y the chosen assignment
    let best = seld6dof_core::accdoa::best_target(&pred, &target).unwrap();
    for (i, gr) in g.grad(p).unwrap().iter().enumerate() {
        assert!((gr - 2.0 * (pred[i] - best[i]) / pred.len() as f64).abs() < 1e-15);
    }
}

#[test]
fn encode_decode_round_trip() {
    let mut rng = common::rng(11);
    for _ in 0..100 {
        // distinct classes per frame, so no same-class overlap
        let mut labels = Vec::new();
        for f in 0..5 {
            for c in [1, 4, 9] {
                labels.push(FrameLabel { frame: f, class: c, track: 0, doa: DoaVector::new(random_unit(&mut rng)).unwrap() });
            }
        }
        let target = encode_targets(&labels, 5).unwrap();
        let est = decode(&target.dense(), 5, &DecodeConfig::default()).unwrap();
        assert_eq!(est.len(), labels.len());
        for l in &labels {
            let e = est.iter().find(|e| e.frame == l.frame && e.class == l.class).unwrap();
            assert!(e.doa.angle_to_deg(&l.doa) < 0.1);
        }
    }
}
