//! Exhaustive reference implementations used to cross-check the fast paths.

use std::collections::BTreeMap;

/// Plain detection record: (frame, class, unit vector).
pub type Det = (usize, usize, [f64; 3]);

fn angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d: f64 = (0..3).map(|k| a[k] * b[k]).sum();
    d.clamp(-1.0, 1.0).acos().to_degrees()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best one-to-one matching by trying every ordering of the larger side.
fn brute_match(r: &[[f64; 3]], p: &[[f64; 3]]) -> Vec<f64> {
    let k = r.len().min(p.len());
    if k == 0 {
        return Vec::new();
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    if r.len() <= p.len() {
        for perm in permutations(p.len()) {
            let errs: Vec<f64> = (0..k).map(|i| angle(r[i], p[perm[i]])).collect();
            let tot: f64 = errs.iter().sum();
            if best.as_ref().is_none_or(|b| tot < b.0) {
                best = Some((tot, errs));
            }
        }
    } else {
        for perm in permutations(r.len()) {
            let errs: Vec<f64> = (0..k).map(|j| angle(r[perm[j]], p[j])).collect();
            let tot: f64 = errs.iter().sum();
            if best.as_ref().is_none_or(|b| tot < b.0) {
                best = Some((tot, errs));
            }
        }
    }
    best.unwrap().1
}

/// (ER, F1 %, LE_CD deg, LR_CD %) by exhaustive matching.
pub fn brute_metrics(refs: &[Det], preds: &[Det], frames: usize, theta: f64, per_seg: usize) -> (f64, f64, f64, f64) {
    let mut cells: BTreeMap<(usize, usize), (Vec<[f64; 3]>, Vec<[f64; 3]>)> = BTreeMap::new();
    for &(f, c, v) in refs {
        cells.entry((f, c)).or_default().0.push(v);
    }
    for &(f, c, v) in preds {
        cells.entry((f, c)).or_default().1.push(v);
    }
    let nseg = frames.div_ceil(per_seg);
    let mut seg = vec![(0i64, 0i64, 0i64); nseg]; // (fn, fp, n)
    let (mut tp_all, mut fp_all, mut fn_all) = (0i64, 0i64, 0i64);
    let mut class_err: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut class_ref: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&(f, c), (r, p)) in &cells {
        let errs = brute_match(r, p);
        let tp = errs.iter().filter(|&&e| e <= theta).count() as i64;
        let s = &mut seg[f / per_seg];
        s.0 += r.len() as i64 - tp;
        s.1 += p.len() as i64 - tp;
        s.2 += r.len() as i64;
        tp_all += tp;
        fp_all += p.len() as i64 - tp;
        fn_all += r.len() as i64 - tp;
        class_err.entry(c).or_default().extend(&errs);
        let e = class_ref.entry(c).or_default();
        e.0 += r.len();
        e.1 += errs.len();
    }
    let (mut sdi, mut n) = (0i64, 0i64);
    for (fnk, fpk, nk) in seg {
        sdi += fnk.max(fpk); // S + D + I = max(FN, FP)
        n += nk;
    }
    let er = sdi as f64 / n.max(1) as f64;
    let f1 =
        if 2 * tp_all + fp_all + fn_all == 0 { 100.0 } else { 200.0 * tp_all as f64 / (2 * tp_all + fp_all + fn_all) as f64 };
    let les: Vec<f64> = class_err.values().filter(|e| !e.is_empty()).map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
    let le = if les.is_empty() { 180.0 } else { les.iter().sum::<f64>() / les.len() as f64 };
    let lrs: Vec<f64> = class_ref.values().filter(|x| x.0 > 0).map(|x| 100.0 * x.1 as f64 / x.0 as f64).collect();
    let lr = if lrs.is_empty() { 100.0 } else { lrs.iter().sum::<f64>() / lrs.len() as f64 };
    (er, f1, le, lr)
}

/// Track patterns for 1, 2 and 3 same-class sources, written out by hand
/// (letters index the sources).
pub fn hand_patterns(k: usize) -> Vec<[usize; 3]> {
    match k {
        1 => vec![[0, 0, 0]],
        2 => vec![[0, 0, 1], [0, 1, 0], [0, 1, 1], [1, 0, 0], [1, 0, 1], [1, 1, 0]],
        3 => vec![[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]],
        _ => vec![],
    }
}

/// ADPIT loss by exhaustive search: `pred` is `[frames][track][class][xyz]`,
/// `sources[frame][class]` the active directions.
pub fn brute_adpit(pred: &[f64], sources: &[Vec<Vec<[f64; 3]>>], classes: usize) -> f64 {
    let idx = |f: usize, tr: usize, c: usize, k: usize| ((f * 3 + tr) * classes + c) * 3 + k;
    let mut total = 0.0;
    for (f, per_class) in sources.iter().enumerate() {
        for (c, src) in per_class.iter().enumerate() {
            let cost = |target: &dyn Fn(usize) -> [f64; 3]| -> f64 {
                let mut s = 0.0;
                for tr in 0..3 {
                    let t = target(tr);
                    for k in 0..3 {
                        s += (pred[idx(f, tr, c, k)] - t[k]).powi(2);
                    }
                }
                s
            };
            total += if src.is_empty() {
                cost(&|_| [0.0; 3])
            } else {
                hand_patterns(src.len()).iter().map(|pat| cost(&|tr| src[pat[tr]])).fold(f64::INFINITY, f64::min)
            };
        }
    }
    total / pred.len() as f64
}

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn perturb(rng: &mut ChaCha8Rng, v: [f64; 3], scale: f64) -> [f64; 3] {
    let w = [
        v[0] + scale * rng.random_range(-1.0..1.0),
        v[1] + scale * rng.random_range(-1.0..1.0),
        v[2] + scale * rng.random_range(-1.0..1.0),
    ];
    let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    [w[0] / n, w[1] / n, w[2] / n]
}

/// Random small scene: ≤3 refs and ≤3 preds per (frame, class), few classes
/// so cells collide, predictions partly near references.
pub fn random_metric_case(rng: &mut ChaCha8Rng) -> (Vec<Det>, Vec<Det>, usize) {
    let frames = rng.random_range(1..=25);
    let (mut refs, mut preds) = (Vec::new(), Vec::new());
    for f in 0..frames {
        for c in 0..3 {
            let nr = rng.random_range(0..=3);
            let np = rng.random_range(0..=3);
            let rv: Vec<[f64; 3]> = (0..nr).map(|_| random_unit(rng)).collect();
            for v in &rv {
                refs.push((f, c, *v));
            }
            for j in 0..np {
                let v = if j < nr && rng.random_bool(0.7) {
                    {
                        let s = rng.random_range(0.0..0.8);
                        perturb(rng, rv[j], s)
                    }
                } else {
                    random_unit(rng)
                };
                preds.push((f, c, v));
            }
        }
    }
    (refs, preds, frames)
}

/// Random two-frame ADPIT case over all 12 classes.
pub fn random_adpit_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<Vec<[f64; 3]>>>) {
    let frames = 2;
    let sources: Vec<Vec<Vec<[f64; 3]>>> = (0..frames)
        .map(|_| {
            (0..12)
                .map(|_| {
                    let k = [0, 0, 1, 2, 3][rng.random_range(0..5)];
                    (0..k).map(|_| random_unit(rng)).collect()
                })
                .collect()
        })
        .collect();
    let pred: Vec<f64> = (0..frames * 108).map(|_| rng.random_range(-1.0..1.0)).collect();
    (pred, sources)
}
