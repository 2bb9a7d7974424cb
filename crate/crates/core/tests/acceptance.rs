//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

mod common;

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use aclnet::audio::{augment_example, normalize, resample_linear, AudioClip, AugmentConfig};
use aclnet::builder::{ConvType, NetworkConfig, WidthMultiplier};
use aclnet::complexity::{analyze, compare_published, sweep, ComplexityReport, SWEEP_WIDTHS};
use aclnet::error::{Error, StoreError};
use aclnet::layers::Mode;
use aclnet::mixup::{mixup_batch, mixup_pair, sample_beta, LabeledExample, MixupConfig};
use aclnet::model::Model;
use aclnet::store::{from_bytes, load, save, to_bytes};
use aclnet::train::{
    cross_entropy, evaluate, stack, train, train_step, training_waveform, zero_velocity, TrainConfig,
};
use aclnet::{Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, bad: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(bad.into())
    }
}

fn wm(num: u32, den: u32) -> WidthMultiplier {
    WidthMultiplier::new(num, den).unwrap()
}

fn report(rate: u32, conv: ConvType, w: WidthMultiplier) -> ComplexityReport {
    analyze(&NetworkConfig::new(rate, conv, w), 1.28).unwrap()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_aclnet"))
        .args(["analyze", "--paper-grid"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    if !out.status.success() {
        return Err(format!("analyze --paper-grid exited {:?}", out.status.code()));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    if text.contains("PARAMS") {
        return Err("paper-grid flags a parameter mismatch".into());
    }
    let rows = compare_published().map_err(|e| e.to_string())?;
    let mismatched: Vec<String> = rows
        .iter()
        .filter(|r| !r.params_ok())
        .map(|r| format!("{} wm {}", r.report.config.label(), r.report.config.width_multiplier))
        .collect();
    if !mismatched.is_empty() {
        return Err(format!("parameter mismatch in {}", mismatched.join(", ")));
    }
    let exact = [
        ("16k DWSC LLF", report(16_000, ConvType::Separable, wm(1, 1)).llf_params(), 1440),
        ("44.1k DWSC LLF", report(44_100, ConvType::Separable, wm(1, 1)).llf_params(), 1808),
        ("44.1k SC LLF", report(44_100, ConvType::Standard, wm(1, 1)).llf_params(), 6992),
        ("HLF DWSC 0.125", report(16_000, ConvType::Separable, wm(1, 8)).hlf_params(), 13_914),
        ("HLF DWSC 1.0", report(16_000, ConvType::Separable, wm(1, 1)).hlf_params(), 567_922),
        ("HLF SC 1.0", report(16_000, ConvType::Standard, wm(1, 1)).hlf_params(), 4_730_002),
    ];
    for (name, got, want) in exact {
        if got != want {
            return Err(format!("{name}: {got} != {want}"));
        }
    }
    check(
        elapsed < Duration::from_secs(1),
        format!("10/10 rows and 6 exact integers match; paper-grid ran in {elapsed:.2?}"),
        format!("paper-grid took {elapsed:.2?} (limit 1 s)"),
    )
}

fn criterion_2() -> Outcome {
    let mut problems = Vec::new();
    let llf = report(16_000, ConvType::Separable, wm(1, 1)).llf_macs();
    let llf_dev = (llf as f64 / 4.35e6 - 1.0).abs();
    if llf != 4_300_800 || llf_dev > 0.02 {
        problems.push(format!("16k DWSC LLF MACs {llf} ({:.2}% off 4.35M)", 100.0 * llf_dev));
    }
    let rows = compare_published().map_err(|e| e.to_string())?;
    let names = ["llf", "hlf", "total"];
    let mut over = Vec::new();
    for r in &rows {
        for (i, &ratio) in r.mmacs_ratio.iter().enumerate() {
            let factor = if ratio >= 1.0 { ratio } else { 1.0 / ratio };
            if factor > 2.0 {
                over.push(format!(
                    "{} wm {} {} x{:.2}",
                    r.report.config.label(),
                    r.report.config.width_multiplier,
                    names[i],
                    factor
                ));
            }
        }
    }
    if !over.is_empty() {
        problems.push(format!(
            "{} of 30 MMACS cells outside factor 2 (ours/published): {}",
            over.len(),
            over.join("; ")
        ));
    }
    for rate in [16_000, 44_100] {
        for conv in [ConvType::Standard, ConvType::Separable] {
            let configs: Vec<_> = SWEEP_WIDTHS
                .iter()
                .map(|&(n, d)| NetworkConfig::new(rate, conv, wm(n, d)))
                .collect();
            let macs: Vec<u64> = sweep(&configs, 1.28).unwrap().iter().map(|r| r.total_macs()).collect();
            if macs.windows(2).any(|w| w[1] <= w[0]) {
                problems.push(format!("MMACS not increasing with WM for {}", configs[0].label()));
            }
        }
        for &(n, d) in &SWEEP_WIDTHS {
            let sc = report(rate, ConvType::Standard, wm(n, d)).total_macs();
            let dw = report(rate, ConvType::Separable, wm(n, d)).total_macs();
            if dw >= sc {
                problems.push(format!("DWSC >= SC at {rate} Hz wm {n}/{d}"));
            }
        }
    }
    check(
        problems.is_empty(),
        format!(
            "LLF 4,300,800 MACs ({:.2}% off); all 30 cells within 2x; monotone in WM; DWSC < SC",
            100.0 * llf_dev
        ),
        problems.join(" | "),
    )
}

/// Soft-target cross entropy of the network output against `target`.
fn loss_of<T: Real>(model: &Model<T>, x: &Tensor<T>, target: &Tensor<T>) -> (f64, Tensor<T>, Vec<Tensor<T>>) {
    let mut m = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trace = m.forward(x, Mode::Train, &mut rng).unwrap();
    let probs = trace.probabilities().unwrap();
    let (loss, grad) = cross_entropy(&probs, target).unwrap();
    let grads = model.backward(&trace, &grad).unwrap();
    (loss, grad, grads)
}

fn fd_loss(model: &Model<f64>, x: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    let mut m = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trace = m.forward(x, Mode::Train, &mut rng).unwrap();
    cross_entropy(&trace.probabilities().unwrap(), target).unwrap().0
}

/// Per-tensor `||a - f|| / max(||a||, ||f||, 1e-3 * rms(f_all) * sqrt(n))`;
/// the floor keeps tensors whose true gradient is analytically zero from
/// turning rounding noise into a large relative error.
fn tensor_errors(sampled: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let (sq, n) = sampled
        .iter()
        .fold((0.0, 0usize), |(s, n), (_, f)| (s + f.iter().map(|v| v * v).sum::<f64>(), n + f.len()));
    let rms = (sq / n as f64).sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    sampled
        .iter()
        .map(|(a, f)| {
            let diff: Vec<f64> = a.iter().zip(f).map(|(x, y)| x - y).collect();
            norm(&diff) / norm(a).max(norm(f)).max(1e-3 * rms * (a.len() as f64).sqrt())
        })
        .collect()
}

fn gradient_check(conv: ConvType) -> Result<(f64, f64, usize), String> {
    let config = NetworkConfig {
        num_classes: 3,
        ..NetworkConfig::new(16_000, conv, wm(1, 32))
    };
    let mut m: Model<f64> = Model::new(&config, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for p in m.weights_mut().params.iter_mut() {
        let (base, scale) = if p.name.ends_with("gamma") {
            (1.0, 0.3)
        } else if p.name.ends_with("beta") {
            (0.0, 0.3)
        } else if p.name == "Conv12.weight" {
            (0.0, 0.5)
        } else {
            continue;
        };
        for v in p.tensor.data_mut() {
            *v = base + scale * rng.random_range(-1.0..1.0);
        }
    }
    let x: Vec<f64> = (0..2 * 3_200).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Tensor::from_vec([2, 3_200], x).unwrap();
    let target = Tensor::from_vec([2, 3], vec![1.0, 0.0, 0.0, 0.2, 0.3, 0.5]).unwrap();

    let (_, _, g64) = loss_of(&m, &x, &target);
    let m32 = Model::from_weights(&config, m.weights().cast::<f32>()).unwrap();
    let (_, _, g32) = loss_of(&m32, &x.cast::<f32>(), &target.cast::<f32>());

    let h = 1e-6;
    let (mut s64, mut s32) = (Vec::new(), Vec::new());
    let mut entries = 0;
    for (pi, g) in g64.iter().enumerate() {
        let step = (g.len() / 48).max(1);
        let (mut a64, mut a32, mut fd) = (Vec::new(), Vec::new(), Vec::new());
        for i in (pi % step..g.len()).step_by(step) {
            let mut p = m.clone();
            p.weights_mut().params[pi].tensor.data_mut()[i] += h;
            let mut q = m.clone();
            q.weights_mut().params[pi].tensor.data_mut()[i] -= h;
            fd.push((fd_loss(&p, &x, &target) - fd_loss(&q, &x, &target)) / (2.0 * h));
            a64.push(g.data()[i]);
            a32.push(g32[pi].data()[i] as f64);
        }
        entries += fd.len();
        s64.push((a64, fd.clone()));
        s32.push((a32, fd));
    }
    let worst = |s: &[(Vec<f64>, Vec<f64>)]| tensor_errors(s).into_iter().fold(0.0, f64::max);
    Ok((worst(&s32), worst(&s64), entries))
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for conv in [ConvType::Standard, ConvType::Separable] {
        let (e32, e64, n) = gradient_check(conv)?;
        ok &= e32 < 1e-4 && e64 < 1e-6;
        lines.push(format!("{conv}: f32 {e32:.1e} f64 {e64:.1e} over {n} entries"));
    }
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(300);
    let detail = format!("{} in {elapsed:.1?}", lines.join(", "));
    check(ok, detail.clone(), detail)
}

fn criterion_4() -> Outcome {
    let data = common::toy_corpus(20, 16_000, 1.0, 7);
    let net = NetworkConfig {
        num_classes: 2,
        ..NetworkConfig::new(16_000, ConvType::Standard, wm(1, 16))
    };
    let cfg = TrainConfig {
        batch_size: 4,
        lr_phases: vec![(0.05, 200)],
        mixup: None,
        eval_every: 1,
        target_accuracy: Some(1.0),
        ..TrainConfig::default()
    };
    let state = train(&net, &data, &data, &cfg, None, |_| {}).map_err(|e| e.to_string())?;
    let acc = evaluate(&state.model, &data).map_err(|e| e.to_string())?.accuracy;
    if acc < 1.0 {
        return Err(format!("train accuracy {acc:.3} after {} epochs", state.epoch));
    }

    let frozen = TrainConfig { augment: None, ..cfg };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch: Vec<LabeledExample> = data
        .iter()
        .take(8)
        .map(|c| LabeledExample::one_hot(training_waveform(&c.clip, &frozen, &mut rng).unwrap(), c.target, 2))
        .collect();
    let (x, y) = stack(&batch).unwrap();
    let mut model: Model<f32> = Model::new(&net, 1).unwrap();
    let mut velocity = zero_velocity(model.weights());
    let mut losses = Vec::new();
    for _ in 0..11 {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        losses.push(train_step(&mut model, &mut velocity, &x, &y, 1e-3, &frozen, &mut rng).map_err(|e| e.to_string())?);
    }
    check(
        losses.windows(2).all(|w| w[1] < w[0]),
        format!(
            "100% train accuracy after {} epochs; frozen-batch loss {:.4} -> {:.4} strictly decreasing over 10 steps",
            state.epoch, losses[0], losses[10]
        ),
        format!("frozen-batch losses not strictly decreasing: {losses:?}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    let mean = (0..n).map(|_| sample_beta(0.1, &mut rng).unwrap()).sum::<f64>() / n as f64;
    let mut u: Vec<f64> = (0..n).map(|_| sample_beta(1.0, &mut rng).unwrap()).collect();
    u.sort_by(f64::total_cmp);
    let ks = u
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
        .fold(0.0, f64::max);

    let mut worst_sym = 0f32;
    let mut worst_sum = 0f32;
    for _ in 0..1000 {
        let k = 50;
        let a = LabeledExample::one_hot((0..64).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(0..k), k);
        let b = LabeledExample::one_hot((0..64).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(0..k), k);
        let l = sample_beta(0.1, &mut rng).unwrap();
        let p = mixup_pair(&a, &b, l).unwrap();
        let q = mixup_pair(&b, &a, 1.0 - l).unwrap();
        for (u, v) in p.x.iter().chain(&p.y).zip(q.x.iter().chain(&q.y)) {
            worst_sym = worst_sym.max((u - v).abs());
        }
        worst_sum = worst_sum.max((p.y.iter().sum::<f32>() - 1.0).abs());
    }

    // warm-up: the mixup path must equal the no-mixup path bit for bit
    let batch: Vec<LabeledExample> = (0..4)
        .map(|i| LabeledExample::one_hot(vec![i as f32 * 0.1; 16], i % 2, 2))
        .collect();
    let cfg = MixupConfig::default();
    let identical_batch = (0..cfg.warmup_epochs).all(|e| mixup_batch(&batch, &cfg, e, &mut rng).unwrap() == batch);
    let data = common::toy_corpus(6, 16_000, 0.5, 4);
    let net = NetworkConfig {
        num_classes: 2,
        ..NetworkConfig::new(16_000, ConvType::Separable, wm(1, 32))
    };
    let base = TrainConfig {
        batch_size: 3,
        lr_phases: vec![(0.05, 3)],
        eval_every: 1,
        augment: Some(AugmentConfig {
            crop_seconds: 0.3,
            pre_crop_seconds: 0.4,
            ..AugmentConfig::default()
        }),
        ..TrainConfig::default()
    };
    let with = train(&net, &data, &data, &TrainConfig { mixup: Some(cfg), ..base.clone() }, None, |_| {})
        .map_err(|e| e.to_string())?;
    let without = train(&net, &data, &data, &TrainConfig { mixup: None, ..base }, None, |_| {})
        .map_err(|e| e.to_string())?;
    let identical_run = with.model == without.model
        && with
            .history
            .iter()
            .zip(&without.history)
            .all(|(a, b)| a.train_loss.to_bits() == b.train_loss.to_bits());

    let ok = (mean - 0.5).abs() <= 0.01
        && ks < 0.02
        && worst_sym <= 1e-6
        && worst_sum <= 1e-6
        && identical_batch
        && identical_run;
    let detail = format!(
        "Beta(0.1) mean {mean:.4}; Beta(1) KS {ks:.4}; symmetry err {worst_sym:.1e}; target sum err {worst_sum:.1e}; \
         warm-up identical (batch {identical_batch}, 3-epoch run {identical_run})"
    );
    check(ok, detail.clone(), detail)
}

fn sine(freq: f64, rate: u32, seconds: f64) -> AudioClip {
    let n = (rate as f64 * seconds) as usize;
    AudioClip::new(
        (0..n).map(|t| (2.0 * PI * freq * t as f64 / rate as f64).sin() as f32).collect(),
        rate,
    )
}

fn zero_crossing_hz(c: &AudioClip) -> f64 {
    let crossings = c
        .samples
        .windows(2)
        .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
        .count();
    crossings as f64 / 2.0 / c.duration()
}

fn criterion_6() -> Outcome {
    let config = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut bad_len = 0;
    for seed in 0..1000u64 {
        let rate = if seed % 2 == 0 { 16_000 } else { 44_100 };
        let seconds = rng.random_range(0.3..5.0);
        let (clip, _) = common::toy_clip(seed as usize, rate, seconds, &mut rng);
        let out = augment_example(&clip, &config, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        if out.len() != (1.5 * rate as f64) as usize {
            bad_len += 1;
        }
    }
    let s = sine(440.0, 16_000, 2.0);
    let identity = resample_linear(&s, 1.0).map_err(|e| e.to_string())? == s;
    let hz = zero_crossing_hz(&resample_linear(&s, 1.25).map_err(|e| e.to_string())?);
    let noise = common::toy_corpus(2, 16_000, 1.0, 3).remove(1).clip;
    let once = normalize(&noise).map_err(|e| e.to_string())?;
    let twice = normalize(&once).map_err(|e| e.to_string())?;
    let idem = once
        .samples
        .iter()
        .zip(&twice.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0f32, f32::max);
    let ok = bad_len == 0 && identity && (hz - 550.0).abs() <= 1.0 && idem <= 1e-6;
    let detail = format!(
        "{} of 1000 crops exactly 1.5 s; factor 1.0 identity {identity}; 440 Hz x1.25 -> {hz:.2} Hz; \
         normalize idempotence err {idem:.1e}",
        1000 - bad_len
    );
    check(ok, detail.clone(), detail)
}

fn criterion_7() -> Outcome {
    let data = common::toy_corpus(10, 16_000, 1.0, 8);
    let net = NetworkConfig {
        num_classes: 50,
        ..NetworkConfig::new(16_000, ConvType::Separable, wm(1, 16))
    };
    let cfg = TrainConfig {
        batch_size: 5,
        lr_phases: vec![(0.05, 2)],
        mixup: None,
        eval_every: 2,
        ..TrainConfig::default()
    };
    let model = train(&net, &data, &[], &cfg, None, |_| {}).map_err(|e| e.to_string())?.model;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0f64;
    for seconds in [1.0, 1.28, 1.5, 5.0] {
        let (clip, _) = common::toy_clip(1, 16_000, seconds, &mut rng);
        let p = model
            .predict(&normalize(&clip).map_err(|e| e.to_string())?.samples)
            .map_err(|e| e.to_string())?;
        if p.len() != 50 || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(format!("{seconds} s input gave an invalid distribution"));
        }
        worst = worst.max((p.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs());
    }
    check(
        worst <= 1e-6,
        format!("50-way distributions for 1.0/1.28/1.5/5.0 s inputs; worst |sum - 1| {worst:.1e}"),
        format!("probability sum off by {worst:.1e}"),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let net = NetworkConfig::new(44_100, ConvType::Separable, wm(3, 8));
    let model: Model<f32> = Model::new(&net, 4).unwrap();
    let a = dir.path().join("a.acln");
    let b = dir.path().join("b.acln");
    save(&a, model.config(), model.weights()).map_err(|e| e.to_string())?;
    let (config, weights) = load(&a).map_err(|e| e.to_string())?;
    save(&b, &config, &weights).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&a).unwrap();
    let identical = bytes == std::fs::read(&b).unwrap() && config == net && &weights == model.weights();

    let mut foreign = bytes.clone();
    foreign[..4].copy_from_slice(b"RIFF");
    let magic = matches!(from_bytes(&foreign), Err(Error::Store(StoreError::BadMagic { .. })));
    let truncated = match from_bytes(&bytes[..bytes.len() - 10]) {
        Err(e @ Error::Store(StoreError::Truncated(10))) => e.to_string().contains("payload short by 10 bytes"),
        _ => false,
    };
    let encoded = to_bytes(&config, &weights).map_err(|e| e.to_string())? == bytes;
    let ok = identical && magic && truncated && encoded;
    let detail = format!(
        "save/load/save byte-identical {identical} ({} bytes); bad magic rejected {magic}; truncation reported {truncated}",
        bytes.len()
    );
    check(ok, detail.clone(), detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("parameter reproduction", criterion_1),
        ("MMACS reproduction", criterion_2),
        ("gradient correctness", criterion_3),
        ("toy-training descent", criterion_4),
        ("mixup statistics", criterion_5),
        ("augmentation contract", criterion_6),
        ("arbitrary-length inference", criterion_7),
        ("serialization", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {tag} {name} [{:.1?}]: {detail}", i + 1, t.elapsed());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
