//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs as a plain binary so the lines always reach the console.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::oracles::{brute_adpit, brute_metrics, random_adpit_case, random_metric_case, random_unit, Det};
use common::{grad_check, jitter_params, param_grad_check, probe, random_tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seld6dof::config::TrainConfig;
use seld6dof::dataset::{featurize, load_scenes, simulate};
use seld6dof::eval::{evaluate, EvalConfig};
use seld6dof::train::fit;
use seld6dof_core::accdoa::{adpit_loss, adpit_loss_value, encode_targets, DecodeConfig, FrameLabel};
use seld6dof_core::audio::{salsa_lite, stft, HOP, ONESIDED_BINS, WINDOW};
use seld6dof_core::autodiff::{Graph, ParamStore, Tensor};
use seld6dof_core::geometry::{norm, sub, DoaVector, Pose, Quat};
use seld6dof_core::metrics::{compute_metrics, Detection, MetricConfig};
use seld6dof_core::net::{AudioBlock, Gru, Init, Linear, MmtmBlock, Mode, Model, ModelConfig, ResBlock, Variant};
use seld6dof_core::sensor::{derive_motion, savgol};
use seld6dof_core::sim::{gen_trajectory, measured_snr_db, render, MotionProfile, SceneConfig, Split, SplitConfig};
use seld6dof_core::{SAMPLE_RATE, SPEED_OF_SOUND};

/// `Ok(detail)` passes, `Err(detail)` fails.
type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig { variant, audio_channels: 4, sensor_filters: [4, 3, 2], gru_hidden: 5, gru_layers: 2, ..ModelConfig::default() }
}

fn init(store: &mut ParamStore, seed: u64) -> Init<'_> {
    Init { store, rng: common::rng(seed) }
}

fn random_labels(rng: &mut ChaCha8Rng, frames: usize) -> Vec<FrameLabel> {
    let mut out = Vec::new();
    for f in 0..frames {
        for track in 0..rng.random_range(0..3) {
            let doa = DoaVector::new(random_unit(rng)).unwrap();
            out.push(FrameLabel { frame: f, class: rng.random_range(0..12), track, doa });
        }
    }
    out
}

fn gradient_suite() -> Check {
    let start = Instant::now();
    let mut errs: Vec<(&str, f64)> = Vec::new();
    let mut r = common::rng(1);

    let (x, w, b) = (random_tensor(&mut r, &[2, 2, 5, 5]), random_tensor(&mut r, &[3, 2, 3, 3]), random_tensor(&mut r, &[3]));
    errs.push((
        "conv2d",
        grad_check(&[x, w, b], |g, v| {
            let y = g.conv2d_causal(v[0], v[1], Some(v[2])).unwrap();
            probe(g, y, 2)
        }),
    ));
    let (x, w, b) = (random_tensor(&mut r, &[2, 3, 7]), random_tensor(&mut r, &[2, 3, 5]), random_tensor(&mut r, &[2]));
    errs.push((
        "conv1d",
        grad_check(&[x, w, b], |g, v| {
            let y = g.conv1d_causal(v[0], v[1], Some(v[2])).unwrap();
            probe(g, y, 3)
        }),
    ));
    let (x, gm, bt) = (random_tensor(&mut r, &[3, 2, 4]), random_tensor(&mut r, &[2]), random_tensor(&mut r, &[2]));
    errs.push((
        "batch-norm train",
        grad_check(&[x.clone(), gm.clone(), bt.clone()], |g, v| {
            let (y, _, _) = g.batch_norm_train(v[0], v[1], v[2], 1e-5).unwrap();
            probe(g, y, 4)
        }),
    ));
    errs.push((
        "batch-norm eval",
        grad_check(&[x, gm, bt], |g, v| {
            let y = g.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2], &[0.5, 2.0], 1e-5).unwrap();
            probe(g, y, 5)
        }),
    ));

    let mut store = ParamStore::new();
    let gru = Gru::new(&mut init(&mut store, 6), "gru", 3, 4, 2);
    let x = random_tensor(&mut r, &[2, 3, 3]);
    errs.push((
        "GRU",
        param_grad_check(&store, &[x], |g, s, v| {
            let y = gru.apply(g, s, v[0]).unwrap();
            probe(g, y, 7)
        }),
    ));

    let mut store = ParamStore::new();
    let mmtm = MmtmBlock::new(&mut init(&mut store, 8), "m", 3, 2);
    jitter_params(&mut store, &mut r, 0.5);
    let (a, s) = (random_tensor(&mut r, &[2, 3, 3, 4]), random_tensor(&mut r, &[2, 2, 3]));
    errs.push((
        "MMTM",
        param_grad_check(&store, &[a, s], |g, st, v| {
            let (a, s) = mmtm.fuse(g, st, v[0], Some(v[1])).unwrap();
            let (pa, ps) = (probe(g, a, 9), probe(g, s.unwrap(), 10));
            g.add(pa, ps).unwrap()
        }),
    ));

    let mut store = ParamStore::new();
    let res = ResBlock::new(&mut init(&mut store, 11), "r", 3, 4, 5, 1e-5);
    let mut it = init(&mut store, 12);
    let audio = AudioBlock::new(&mut it, "a", 2, 3, (2, 2), 1e-5);
    let (s, x) = (random_tensor(&mut r, &[2, 3, 6]), random_tensor(&mut r, &[2, 2, 4, 6]));
    errs.push((
        "residual + audio blocks",
        param_grad_check(&store, &[s, x], |g, st, v| {
            let y1 = res.apply(g, st, v[0], Mode::Train).unwrap();
            let y2 = audio.apply(g, st, v[1], Mode::Train).unwrap();
            let (p1, p2) = (probe(g, y1, 13), probe(g, y2, 14));
            g.add(p1, p2).unwrap()
        }),
    ));

    let mut store = ParamStore::new();
    let head = Linear::new(&mut init(&mut store, 15), "head", 4, 6, true);
    let x = random_tensor(&mut r, &[3, 4]);
    errs.push((
        "tanh head",
        param_grad_check(&store, &[x], |g, st, v| {
            let y = head.apply(g, st, v[0]).unwrap();
            let y = g.tanh(y);
            probe(g, y, 16)
        }),
    ));

    let mut model = Model::new(tiny(Variant::SensorMmtm), 20).unwrap();
    jitter_params(&mut model.params, &mut r, 0.3);
    let audio = random_tensor(&mut r, &[2, 7, 8, 64]).with_grad(false);
    let sensor = random_tensor(&mut r, &[2, 6, 2]);
    let target = encode_targets(&random_labels(&mut r, 4), 4).unwrap();
    errs.push((
        "full variant E",
        param_grad_check(&model.params, &[audio, sensor], |g, st, v| {
            let y = model.forward_with(st, g, v[0], Some(v[1]), Mode::Train).unwrap();
            adpit_loss(g, y, &target).unwrap()
        }),
    ));

    let secs = start.elapsed().as_secs_f64();
    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    ensure(worst < 1e-4 && secs < 120.0, format!("max rel err {worst:.2e} < 1e-4 in {secs:.1}s < 120s ({detail})"))
}

fn causality_suite() -> Check {
    let start = Instant::now();
    let (t_audio, t_out) = (24, 6);
    let mut worst_changed = usize::MAX;
    for (i, variant) in Variant::ALL.into_iter().enumerate() {
        let seed = 30 + i as u64;
        let mut model = Model::new(tiny(variant), seed).unwrap();
        let mut r = common::rng(seed + 1);
        jitter_params(&mut model.params, &mut r, 0.3);
        let audio = random_tensor(&mut r, &[1, 7, t_audio, 64]);
        let sensor = variant.uses_sensor().then(|| random_tensor(&mut r, &[1, 6, t_out]));
        let run = |a: &Tensor, s: &Option<Tensor>| {
            let mut g = Graph::new();
            let av = g.leaf(a);
            let sv = s.as_ref().map(|s| g.leaf(s));
            let y = model.forward(&mut g, av, sv, Mode::Eval).unwrap();
            g.value(y).to_vec()
        };
        let base = run(&audio, &sensor);
        for t in 0..t_out - 1 {
            let mut a = audio.clone();
            for c in 0..7 {
                for ti in 4 * t + 4..t_audio {
                    for f in 0..64 {
                        a.data_mut()[(c * t_audio + ti) * 64 + f] = r.random_range(-3.0..3.0);
                    }
                }
            }
            let mut s = sensor.clone();
            if let Some(s) = s.as_mut() {
                for c in 0..6 {
                    for ti in t + 1..t_out {
                        s.data_mut()[c * t_out + ti] = r.random_range(-3.0..3.0);
                    }
                }
            }
            let out = run(&a, &s);
            let keep = (t + 1) * 108;
            if out[..keep] != base[..keep] {
                return Err(format!("variant {variant}: frame ≤ {t} moved after perturbing later inputs"));
            }
            let changed = out[keep..].iter().zip(&base[keep..]).filter(|(x, y)| x != y).count();
            worst_changed = worst_changed.min(changed);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst_changed > 0 && secs < 60.0,
        format!(
            "5 variants bit-exact on past frames, later frames respond (min {worst_changed} changed values), {secs:.1}s < 60s"
        ),
    )
}

fn mmtm_identity() -> Check {
    let e = Model::new(tiny(Variant::SensorMmtm), 40).unwrap();
    let mut d = Model::new(tiny(Variant::SensorConcat), 41).unwrap();
    let records: Vec<_> = e.params.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data().to_vec())).collect();
    d.params.load(&records).map_err(|e| e.to_string())?;
    let mut r = common::rng(42);
    let audio = random_tensor(&mut r, &[2, 7, 12, 64]);
    let sensor = random_tensor(&mut r, &[2, 6, 3]);
    let mut worst: f64 = 0.0;
    for mode in [Mode::Train, Mode::Eval] {
        let out = |m: &Model| {
            let mut g = Graph::new();
            let (a, s) = (g.leaf(&audio), g.leaf(&sensor));
            let y = m.forward(&mut g, a, Some(s), mode).unwrap();
            g.value(y).to_vec()
        };
        let (ye, yd) = (out(&e), out(&d));
        worst = ye.iter().zip(&yd).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
    }
    ensure(worst <= 1e-12, format!("fresh E vs ungated network with the same weights: max |Δ| {worst:.1e} ≤ 1e-12"))
}

fn salsa_recovery() -> Check {
    let fs = SAMPLE_RATE as f64;
    let mut worst: f64 = 0.0;
    // delays up to 3 samples alias above 8 kHz; bins stay below that
    for k in [10usize, 20, 60, 120, 160] {
        let f = k as f64 * fs / WINDOW as f64;
        let chans: Vec<Vec<f64>> = (0..4usize)
            .map(|d| {
                (0..8000)
                    .map(|i| if i < d { 0.0 } else { (std::f64::consts::TAU * f * (i - d) as f64 / fs + 0.3).sin() })
                    .collect()
            })
            .collect();
        let sp: Vec<_> = chans.iter().map(|c| stft(c, HOP).unwrap()).collect();
        let l = salsa_lite(&sp).map_err(|e| e.to_string())?;
        for t in 1..sp[0].frames {
            for i in 0..3 {
                let want = -SPEED_OF_SOUND * (i + 1) as f64 / fs;
                worst = worst.max((l[(t * 3 + i) * ONESIDED_BINS + k] - want).abs());
            }
        }
    }
    ensure(worst < 1e-3, format!("pure delays of 1-3 samples, 5 tones: max path error {worst:.2e} m < 1e-3 m"))
}

fn savitzky_golay() -> Check {
    let dt = 0.05;
    let quad: Vec<f64> = (0..40)
        .map(|k| {
            let t = k as f64 * dt;
            1.0 - 2.0 * t + 0.7 * t * t
        })
        .collect();
    let sm = savgol(&quad, 9, 2, 0, dt).map_err(|e| e.to_string())?;
    let poly = (4..36).map(|i| (sm[i] - quad[i]).abs()).fold(0.0, f64::max);
    let slope_in: Vec<f64> = (0..40).map(|k| 3.0 * k as f64 * dt - 1.0).collect();
    let d = savgol(&slope_in, 9, 2, 1, dt).map_err(|e| e.to_string())?;
    let slope = d[4..36].iter().map(|v| (v - 3.0).abs()).fold(0.0, f64::max);

    // 90°/s yaw through the full motion pipeline
    let rate = std::f64::consts::FRAC_PI_2;
    let track: Vec<Pose> = (0..40)
        .map(|k| k as f64 * dt)
        .map(|t| Pose::new(t, [0.0; 3], Quat::from_axis_angle([0.0, 0.0, 1.0], rate * t)))
        .collect();
    let frames = derive_motion(&track, 9, 2).map_err(|e| e.to_string())?;
    // the central difference reaches one sample past the smoothing window
    let yaw = frames[5..35].iter().map(|f| norm(sub(f.omega, [0.0, 0.0, rate]))).fold(0.0, f64::max);
    ensure(
        poly <= 1e-9 && slope <= 1e-9 && yaw <= 1e-6,
        format!(
            "quadratic reproduction {poly:.1e} ≤ 1e-9, ramp slope {slope:.1e} ≤ 1e-9, constant yaw rate {yaw:.1e} ≤ 1e-6 rad/s"
        ),
    )
}

fn dets(x: &[Det]) -> Vec<Detection> {
    x.iter().map(|&(frame, class, v)| Detection { frame, class, doa: DoaVector::new(v).unwrap() }).collect()
}

fn metrics_oracle() -> Check {
    let mut rng = common::rng(2024);
    let cfg = MetricConfig::default();
    let mut worst = [0.0f64; 4];
    for _ in 0..1000 {
        let (r, p, frames) = random_metric_case(&mut rng);
        let got = compute_metrics(&dets(&r), &dets(&p), frames, &cfg).map_err(|e| e.to_string())?;
        let want = brute_metrics(&r, &p, frames, cfg.theta_deg, cfg.frames_per_segment());
        for (w, d) in worst.iter_mut().zip([got.er - want.0, got.f1 - want.1, got.le_cd - want.2, got.lr_cd - want.3]) {
            *w = w.max(d.abs());
        }
    }
    let agree = worst[0] < 1e-12 && worst[1] < 1e-9 && worst[2] < 1e-6 && worst[3] < 1e-9;
    let mut perfect = true;
    for _ in 0..100 {
        let (r, _, frames) = random_metric_case(&mut rng);
        if r.is_empty() {
            continue;
        }
        let m = compute_metrics(&dets(&r), &dets(&r), frames, &cfg).map_err(|e| e.to_string())?;
        perfect &= m.er == 0.0 && m.f1 == 100.0 && m.le_cd == 0.0 && m.lr_cd == 100.0;
    }
    ensure(
        agree && perfect,
        format!(
            "1000 random cases vs exhaustive scorer: |ΔER| {:.0e}, |ΔF| {:.0e}, |ΔLE| {:.0e}, |ΔLR| {:.0e}; perfect predictions give 0/100/0/100 exactly: {perfect}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn adpit_oracle() -> Check {
    let mut rng = common::rng(77);
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let (pred, sources) = random_adpit_case(&mut rng);
        let mut rows = Vec::new();
        for (f, per_class) in sources.iter().enumerate() {
            for (c, src) in per_class.iter().enumerate() {
                for (k, v) in src.iter().enumerate() {
                    rows.push(FrameLabel { frame: f, class: c, track: k, doa: DoaVector::new(*v).unwrap() });
                }
            }
        }
        let target = encode_targets(&rows, 2).map_err(|e| e.to_string())?;
        let got = adpit_loss_value(&pred, &target).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_adpit(&pred, &sources, 12)).abs());
    }
    ensure(worst <= 1e-9, format!("300 random two-frame cases: max |Δ| {worst:.1e} ≤ 1e-9"))
}

fn simulator() -> Check {
    let mut worst_snr: f64 = 0.0;
    for (i, profile) in MotionProfile::ALL.into_iter().enumerate() {
        for (j, snr) in [6.0, 10.0, 20.0].into_iter().enumerate() {
            let cfg = SceneConfig { duration: 4.0, profile, snr_db: snr, seed: (i * 3 + j) as u64, ..Default::default() };
            let s = render(&cfg).map_err(|e| e.to_string())?;
            let mask = s.active_mask();
            worst_snr = worst_snr.max((measured_snr_db(&s.clean[0], &s.noise[0], &mask) - snr).abs());
        }
    }
    let mut radius: f64 = 0.0;
    for seed in 0..50 {
        let tr =
            gen_trajectory(MotionProfile::SixDof, 12.0, 0.75, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        radius = tr.iter().map(|p| norm(sub(p.p, tr[0].p))).fold(radius, f64::max);
    }
    ensure(
        worst_snr <= 0.5 && radius <= 0.75,
        format!("9 scenes at 6/10/20 dB: max SNR error {worst_snr:.3} dB ≤ 0.5; 50 6DoF tracks: max radius {radius:.3} m ≤ 0.75"),
    )
}

/// Dataset and model scale of the desk-top experiment.
const E2E_SCENES: usize = 180;
const E2E_SEEDS: [u64; 3] = [0, 1, 2];

fn e2e_model(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        audio_channels: 16,
        sensor_filters: [16, 8, 8],
        gru_hidden: 32,
        gru_layers: 2,
        ..ModelConfig::default()
    }
}

struct SeedResult {
    seed: u64,
    f_a: [f64; 3],
    f_b: [f64; 3],
    val_b: f64,
    val_e: f64,
}

fn end_to_end() -> (Check, Check) {
    let start = Instant::now();
    let dir = tempfile::TempDir::new().unwrap();
    let split = SplitConfig { n_scenes: E2E_SCENES, seed: 7, ..SplitConfig::default() };
    let run = || -> seld6dof::Result<Vec<SeedResult>> {
        simulate(&split, dir.path(), false, 0)?;
        let (_, index) =
            featurize(&dir.path().join("manifest.json"), &dir.path().join("features"), &Default::default(), false, 0)?;
        let feat = dir.path().join("features");
        let all = MotionProfile::ALL;
        let (train_all, val_all) =
            (load_scenes(&feat, &index, Split::Train, &all)?, load_scenes(&feat, &index, Split::Val, &all)?);
        let stat = [MotionProfile::Stat];
        let (train_stat, val_stat) =
            (load_scenes(&feat, &index, Split::Train, &stat)?, load_scenes(&feat, &index, Split::Val, &stat)?);
        let test = load_scenes(&feat, &index, Split::Test, &all)?;
        let moving: Vec<_> = test.iter().filter(|s| s.entry.profile != MotionProfile::Stat).cloned().collect();
        println!(
            "  e2e data: {} scenes ({} train, {} val, {} test), simulated and featurized in {:.0}s",
            index.entries.len(),
            train_all.len(),
            val_all.len(),
            test.len(),
            start.elapsed().as_secs_f64()
        );
        let cfg = EvalConfig {
            metrics: MetricConfig::default(),
            decode: DecodeConfig::default(),
            split: Split::Test,
            variant: None,
            seed: None,
        };
        // F on [3dof ∪ 6dof, 3dof, 6dof]
        let f_scores = |m: &Model| -> seld6dof::Result<[f64; 3]> {
            let pred = |s: &seld6dof::dataset::SceneData| Ok(m.predict(&s.features, None)?);
            let union = evaluate(&moving, pred, cfg.clone(), None)?.f1;
            let per = evaluate(&test, pred, cfg.clone(), None)?;
            Ok([union, per.subset("3dof").unwrap().report.f1, per.subset("6dof").unwrap().report.f1])
        };
        let mut out = Vec::new();
        for seed in E2E_SEEDS {
            let tc = TrainConfig { epochs: 40, lr: 0.01, batch_size: 4, seed, profiles: None };
            let t0 = Instant::now();
            let (a, ..) = fit(&e2e_model(Variant::BaselineStat), &tc, &train_stat, &val_stat, |_| {})?;
            let (b, _, _, val_b) = fit(&e2e_model(Variant::Baseline), &tc, &train_all, &val_all, |_| {})?;
            let (_, _, _, val_e) = fit(&e2e_model(Variant::SensorMmtm), &tc, &train_all, &val_all, |_| {})?;
            let r = SeedResult { seed, f_a: f_scores(&a)?, f_b: f_scores(&b)?, val_b, val_e };
            println!(
                "  seed {}: F≤20° moving/3dof/6dof  A(stat-only) {:.2}/{:.2}/{:.2}  B(all) {:.2}/{:.2}/{:.2};  best val loss B {:.6}  E {:.6}  ({:.0}s)",
                r.seed, r.f_a[0], r.f_a[1], r.f_a[2], r.f_b[0], r.f_b[1], r.f_b[2], r.val_b, r.val_e, t0.elapsed().as_secs_f64()
            );
            out.push(r);
        }
        Ok(out)
    };
    let results = match run() {
        Ok(r) => r,
        Err(e) => return (Err(format!("experiment failed: {e}")), Err("experiment failed".into())),
    };
    let secs = start.elapsed().as_secs_f64();
    let wins_i = results.iter().filter(|r| r.f_b[0] > r.f_a[0]).count();
    let wins_ii = results.iter().filter(|r| r.val_e <= r.val_b).count();
    let time_ok = secs < 1800.0;
    let total = format!("{E2E_SCENES} scenes, 3 seeds, {secs:.0}s < 1800s");
    (
        ensure(wins_i >= 2 && time_ok, format!("B(all) beats A(stat-only) on 3dof+6dof F≤20° in {wins_i}/3 seeds ({total})")),
        ensure(wins_ii >= 2 && time_ok, format!("E val ADPIT loss ≤ B in {wins_ii}/3 seeds ({total})")),
    )
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    })
}

fn main() {
    // `cargo test -- --list` and filters are harness conventions; honour listing only.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    println!("acceptance criteria");
    println!("[N/A ] paper-number reproduction: needs the real recordings; the property checks below stand in");
    let mut failed = 0;
    let mut report = |name: &str, r: Check| match &r {
        Ok(d) => println!("[PASS] {name}: {d}"),
        Err(d) => {
            failed += 1;
            println!("[FAIL] {name}: {d}")
        }
    };
    report("gradient suite", guarded(gradient_suite));
    report("causality suite", guarded(causality_suite));
    report("MMTM identity", guarded(mmtm_identity));
    report("SALSA-Lite recovery", guarded(salsa_recovery));
    report("Savitzky-Golay", guarded(savitzky_golay));
    report("metrics oracle", guarded(metrics_oracle));
    report("ADPIT oracle", guarded(adpit_oracle));
    report("simulator SNR and radius", guarded(simulator));
    let (i, ii) = catch_unwind(end_to_end).unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    report("end-to-end (i) training on moving profiles helps", i);
    report("end-to-end (ii) sensor MMTM lowers validation loss", ii);
    println!("{} criteria failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
