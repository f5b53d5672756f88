//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. Run with `cargo test --test acceptance`.
//! Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use kpstream::eval::{
    frechet_from_features, frechet_keypoint_distance, keypoint_mse, median, run_experiment, EvalDataset,
    EvalMode, ExperimentGrid, FkdFeature, RunKey,
};
use kpstream::keypoint::manifest::split_assignments;
use kpstream::keypoint::synth::{synth_periodic, synth_switching, SwitchingParams, SynthParams};
use kpstream::keypoint::{FrameVector, KeypointFrame, KeypointSequence, NormalizationStats, Split, FRAME_DIM};
use kpstream::kv::KvMap;
use kpstream::numeric::{gaussian_kl, gaussian_nll, grad_check, CellKind, DiagGaussian, DEFAULT_STEP};
use kpstream::predictor::vae::VaeSample;
use kpstream::predictor::{
    rnn_train, vae_train, vrnn_train, ModelCheckpoint, ModelKind, OraclePredictor, PersistencePredictor, Predictor,
    RnnConfig, RnnModel, TrainOptions, VaeConfig, VaeModel, VrnnConfig, VrnnModel,
};
use kpstream::protocol::{
    decode_frame, encode_frame, schedule_blocks, simulate_session, SessionOptions, WireBody, WireFrame,
    KEY_FRAME_BYTES, SKIP_FRAME_BYTES,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn gradient_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rand_vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let seq: Vec<Vec<f64>> = (0..5).map(|_| rand_vec(6)).collect();
    let mut worst = Vec::new();

    let mut rnn = RnnModel::new(
        RnnConfig {
            input_dim: 6,
            hidden_dim: 8,
            k_in: 3,
            k_out: 2,
            ..RnnConfig::default()
        },
        NormalizationStats::identity(),
    )
    .map_err(|e| e.to_string())?;
    let probe = rnn.clone();
    let r = grad_check(&mut rnn.params, |p| probe.window_loss(p, &seq), usize::MAX, 0, DEFAULT_STEP)
        .map_err(|e| e.to_string())?;
    worst.push(("rnn", r));

    let mut vae = VaeModel::new(
        VaeConfig {
            input_dim: 6,
            latent_dim: 4,
            encoder_hidden: vec![8],
            decoder_hidden: vec![8],
            max_lag: 4,
            ..VaeConfig::default()
        },
        NormalizationStats::identity(),
    )
    .map_err(|e| e.to_string())?;
    let sample = VaeSample {
        input: seq[0].clone(),
        target: seq[4].clone(),
        lag: 4,
        eps: rand_vec(4),
    };
    let probe = vae.clone();
    let r = grad_check(&mut vae.params, |p| probe.loss_and_grad(p, &sample), usize::MAX, 0, DEFAULT_STEP)
        .map_err(|e| e.to_string())?;
    worst.push(("vae", r));

    for cell in [CellKind::Gated, CellKind::SimpleTanh] {
        let mut vrnn = VrnnModel::new(
            VrnnConfig {
                input_dim: 6,
                hidden_dim: 8,
                latent_dim: 4,
                cell,
                k_in: 3,
                k_out: 2,
                ..VrnnConfig::default()
            },
            NormalizationStats::identity(),
        )
        .map_err(|e| e.to_string())?;
        let eps: Vec<Vec<f64>> = (0..5).map(|_| rand_vec(4)).collect();
        let probe = vrnn.clone();
        let r = grad_check(&mut vrnn.params, |p| probe.loss_and_grad(p, &seq, &eps), usize::MAX, 0, DEFAULT_STEP)
            .map_err(|e| e.to_string())?;
        worst.push((if cell == CellKind::Gated { "vrnn(gated)" } else { "vrnn(simple)" }, r));
    }
    // Every parameter entry is probed.
    let detail = worst
        .iter()
        .map(|(m, r)| {
            let over = r.probes.iter().filter(|p| p.rel_error >= 1e-4).count();
            format!("{m} {:.2e} ({over}/{} over)", r.max_rel_error, r.probes.len())
        })
        .collect::<Vec<_>>()
        .join(", ");
    ensure(worst.iter().all(|(_, r)| r.max_rel_error < 1e-4), format!("max relative error too large: {detail}"))?;
    Ok(format!("max relative errors: {detail}"))
}

fn gaussian_identities() -> Check {
    let g = |m: f64, v: f64| DiagGaussian::new(vec![m], vec![v.ln()]).unwrap();
    let kl1 = gaussian_kl(&g(1.0, 1.0), &g(0.0, 1.0)).unwrap();
    ensure((kl1 - 0.5).abs() <= 1e-12, format!("KL(N(1,1)||N(0,1)) = {kl1}"))?;
    let kl2 = gaussian_kl(&g(0.0, 4.0), &g(0.0, 1.0)).unwrap();
    ensure((kl2 - 0.806853).abs() <= 1e-6, format!("KL(N(0,4)||N(0,1)) = {kl2}"))?;

    // E_q[log q - log p] by sampling q = N(0.3, 2), p = N(-0.5, 0.7)
    let (q, p) = (g(0.3, 2.0), g(-0.5, 0.7));
    let exact = gaussian_kl(&q, &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = Normal::new(0.3, 2f64.sqrt()).unwrap();
    let n = 1_000_000;
    let mc: f64 = (0..n)
        .map(|_| {
            let x = [normal.sample(&mut rng)];
            gaussian_nll(&x, &p).unwrap() - gaussian_nll(&x, &q).unwrap()
        })
        .sum::<f64>()
        / n as f64;
    ensure((mc - exact).abs() < 1e-2, format!("Monte Carlo KL {mc} vs closed form {exact}"))?;

    for dim in [1, 3, 60] {
        let nll = gaussian_nll(&vec![0.0; dim], &DiagGaussian::standard(dim)).unwrap();
        ensure(
            (nll - 0.918939 * dim as f64).abs() <= 1e-6 * dim as f64,
            format!("nll at mean, dim {dim}: {nll}"),
        )?;
        let exact = 0.5 * (2.0 * std::f64::consts::PI).ln() * dim as f64;
        ensure((nll - exact).abs() <= 1e-9, format!("nll at mean, dim {dim}: {nll} vs {exact}"))?;
    }
    Ok(format!("KL {kl1}, {kl2:.6}; Monte Carlo {mc:.5} vs {exact:.5}"))
}

fn scheduler_arithmetic() -> Check {
    let s = schedule_blocks(30, 5).unwrap();
    ensure(s.frames_sent() == 15 && s.sent_fraction() == 0.5, format!("L=30 k=5: {s}"))?;
    let s = schedule_blocks(34, 6).unwrap();
    ensure(s.frames_sent() == 22, format!("L=34 k=6: {s}"))?;
    let mut count = 0;
    for len in 1..=500 {
        for k in 1..=len {
            let s = schedule_blocks(len, k).unwrap();
            s.validate().map_err(|e| format!("L={len} k={k}: {e}"))?;
            ensure(
                s.frames_predicted() == k * (len / (2 * k)),
                format!("L={len} k={k}: {} predicted", s.frames_predicted()),
            )?;
            ensure(s.frames_sent() + s.frames_predicted() == len, format!("L={len} k={k}: not a partition"))?;
            count += 1;
        }
    }
    Ok(format!("{count} schedules checked"))
}

fn ramp(len: usize) -> KeypointSequence {
    let frames = (0..len)
        .map(|t| {
            let v: Vec<f64> = (0..FRAME_DIM).map(|i| t as f64 * 0.125 + i as f64 * 0.5).collect();
            KeypointFrame::from_slice(&v).unwrap()
        })
        .collect();
    KeypointSequence::new(frames, 25.0, format!("ramp-{len}")).unwrap()
}

fn wire_codec() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in 0..10_000u32 {
        let frame = if rng.random_bool(0.8) {
            WireFrame {
                session: rng.random(),
                index: rng.random(),
                body: WireBody::Key(std::array::from_fn(|_| f32::from_bits(rng.random()))),
            }
        } else {
            WireFrame::skip(rng.random(), n)
        };
        let bytes = encode_frame(&frame);
        let expected = if matches!(frame.body, WireBody::Skip) { SKIP_FRAME_BYTES } else { KEY_FRAME_BYTES };
        ensure(bytes.len() == expected, format!("frame {n}: {} bytes", bytes.len()))?;
        let back = decode_frame(&bytes).map_err(|e| format!("frame {n}: {e}"))?;
        ensure(back == frame, format!("frame {n} did not round-trip"))?;
    }
    ensure(KEY_FRAME_BYTES == 257 && SKIP_FRAME_BYTES == 17, "frame sizes")?;
    let seq = ramp(30);
    let out = simulate_session(&seq, &PersistencePredictor, &SessionOptions::new(5), &NormalizationStats::identity())
        .map_err(|e| e.to_string())?;
    let ratio = out.report.bandwidth_ratio;
    ensure((ratio - 4110.0 / 7710.0).abs() <= 1e-12, format!("bandwidth ratio {ratio}"))?;
    Ok(format!("10^4 frames round-trip; L=30 k=5 ratio {} / {}", out.report.bytes_sent, out.report.bytes_baseline))
}

fn oracle_end_to_end() -> Check {
    let mut cases = 0;
    for len in [2, 7, 10, 11, 29, 30, 34, 61, 120] {
        let seq = ramp(len);
        let truth = seq.vectors();
        for k in [1, 2, 3, 5, 6, 8] {
            let oracle = OraclePredictor::new(truth.clone());
            let out = simulate_session(&seq, &oracle, &SessionOptions::new(k), &NormalizationStats::identity())
                .map_err(|e| format!("L={len} k={k}: {e}"))?;
            let rebuilt = out.reconstruction.vectors();
            ensure(rebuilt == truth, format!("L={len} k={k}: reconstruction differs"))?;
            let mse = keypoint_mse(&rebuilt, &truth).map_err(|e| e.to_string())?;
            ensure(mse == 0.0, format!("L={len} k={k}: mse {mse}"))?;
            if len >= 2 {
                let fkd = frechet_keypoint_distance(&rebuilt, &truth).map_err(|e| e.to_string())?;
                ensure(fkd == 0.0, format!("L={len} k={k}: fkd {fkd}"))?;
            }
            ensure(
                out.report.frame_errors.iter().all(|e| e.mse == 0.0),
                format!("L={len} k={k}: non-zero frame error"),
            )?;
            cases += 1;
        }
    }
    Ok(format!("{cases} (L, k) cases exact"))
}

fn split_dataset(seqs: Vec<KeypointSequence>, seed: u64) -> (Vec<KeypointSequence>, Vec<KeypointSequence>) {
    let splits = split_assignments(seqs.len(), seed);
    let (train, test): (Vec<_>, Vec<_>) = seqs
        .into_iter()
        .zip(splits)
        .map(|(s, sp)| s.with_split(sp))
        .partition(|s| s.split == Split::Train);
    (train, test)
}

fn normalized_mse(stats: &NormalizationStats, a: &[FrameVector], b: &[FrameVector]) -> f64 {
    let a: Vec<FrameVector> = a.iter().map(|v| stats.normalize(v).unwrap()).collect();
    let b: Vec<FrameVector> = b.iter().map(|v| stats.normalize(v).unwrap()).collect();
    keypoint_mse(&a, &b).unwrap()
}

fn learning_sanity() -> Check {
    let k = 6;
    let seqs = synth_periodic(7, 20, 120, 25.0, &SynthParams::default()).map_err(|e| e.to_string())?;
    let (train, test) = split_dataset(seqs, 7);
    let stats = NormalizationStats::fit(&train, "periodic/train").map_err(|e| e.to_string())?;
    let opts = TrainOptions::default();
    ensure(opts.steps == 500, format!("default budget is {} steps", opts.steps))?;

    let rnn = rnn_train(&train, RnnConfig { k_in: k, k_out: k, ..RnnConfig::default() }).map_err(|e| e.to_string())?;
    let vae = vae_train(&train, VaeConfig { max_lag: k, ..VaeConfig::default() }).map_err(|e| e.to_string())?;
    let vrnn =
        vrnn_train(&train, VrnnConfig { k_in: k, k_out: k, ..VrnnConfig::default() }).map_err(|e| e.to_string())?;

    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let models: [(&dyn Predictor, &[f64], bool); 3] = [
        (&rnn, &rnn.loss_history, true),
        (&vae, &vae.loss_history, false),
        (&vrnn, &vrnn.loss_history, true),
    ];
    for (model, history, loss_gate) in models {
        let (mut wins, mut total) = (0usize, 0usize);
        for seq in &test {
            let v = seq.vectors();
            for start in k..=v.len() - k {
                let context = &v[start - k..start];
                let truth = &v[start..start + k];
                let pred = model.predict_block(context, start, k).map_err(|e| e.to_string())?;
                let persist = vec![context[k - 1]; k];
                if normalized_mse(&stats, &pred, truth) < normalized_mse(&stats, &persist, truth) {
                    wins += 1;
                }
                total += 1;
            }
        }
        let rate = wins as f64 / total as f64;
        let tail = &history[history.len().saturating_sub(10)..];
        let last = tail.iter().sum::<f64>() / tail.len() as f64;
        let first = history[0];
        lines.push(format!("{} win {rate:.3} loss {first:.3}->{last:.3}", model.kind()));
        if rate < 0.8 {
            failures.push(format!("{} beats persistence on {:.1}% of windows", model.kind(), 100.0 * rate));
        }
        if loss_gate && !(last < 0.5 * first) {
            failures.push(format!("{} loss {first} -> {last}", model.kind()));
        }
    }
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(lines.join(", "))
}

fn ranking_on_switching() -> Check {
    let params = SwitchingParams {
        num_regimes: 3,
        switch_prob: 0.05,
        ..SwitchingParams::default()
    };
    let data = synth_switching(7, 20, 120, 25.0, &params).map_err(|e| e.to_string())?;
    let (train, test) = split_dataset(data.sequences, 7);
    let stats = NormalizationStats::fit(&train, "switching/train").map_err(|e| e.to_string())?;
    let eval = EvalDataset {
        name: "switching".into(),
        stats: stats.clone(),
        test,
    };
    let grid = ExperimentGrid {
        datasets: vec!["switching".into()],
        models: ModelKind::TRAINED.to_vec(),
        blocks: vec![(5, 5), (6, 6)],
        seeds: (0..5).collect(),
        modes: vec![EvalMode::Reconstruction],
        streaming: false,
    };
    let mut checkpoints = BTreeMap::new();
    for &(k_in, k_out) in &grid.blocks {
        for &seed in &grid.seeds {
            for &model in &grid.models {
                let mut kv = KvMap::new("acceptance");
                kv.set("k", k_out);
                kv.set("seed", seed);
                let ckpt = ModelCheckpoint::train(model, &kv, &train, stats.clone()).map_err(|e| e.to_string())?;
                let key = RunKey {
                    dataset: "switching".into(),
                    model,
                    k_in,
                    k_out,
                    seed,
                };
                checkpoints.insert(key, ckpt);
            }
        }
    }
    let results = run_experiment(&grid, &[eval], &checkpoints).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for &(_, k) in &grid.blocks {
        let med = |m: ModelKind| {
            let v: Vec<f64> = results.iter().filter(|r| r.model == m && r.k_out == k).map(|r| r.mse).collect();
            median(&v).unwrap()
        };
        let (rnn, vae, vrnn) = (med(ModelKind::Rnn), med(ModelKind::Vae), med(ModelKind::Vrnn));
        lines.push(format!("k={k}: vrnn {vrnn:.4} rnn {rnn:.4} vae {vae:.4}"));
        if !(vrnn < rnn && vrnn < vae) {
            failures.push(format!("k={k}: vrnn {vrnn:.4} is not the minimum (rnn {rnn:.4}, vae {vae:.4})"));
        }
    }
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(lines.join("; "))
}

fn metric_identities() -> Check {
    let stream = |f: &dyn Fn(usize, usize) -> f64| -> Vec<FrameVector> {
        (0..12).map(|t| std::array::from_fn(|i| f(t, i))).collect()
    };
    let a = stream(&|t, i| (t as f64 * 0.37 + i as f64 * 0.11).sin());
    let b = stream(&|t, i| (t as f64 * 0.21 - i as f64).cos() * 1.5);
    ensure(keypoint_mse(&a, &a).unwrap() == 0.0, "mse(a, a) != 0")?;
    for delta in [0.1, 0.25, 1.0] {
        let shifted: Vec<FrameVector> = a.iter().map(|v| v.map(|x| x + delta)).collect();
        let mse = keypoint_mse(&a, &shifted).unwrap();
        ensure((mse - delta * delta).abs() <= 1e-12, format!("offset {delta}: mse {mse}"))?;
    }
    ensure(frechet_keypoint_distance(&a, &a).unwrap() == 0.0, "fkd(a, a) != 0")?;
    let feats: Vec<FkdFeature> = (0..15)
        .map(|t| std::array::from_fn(|i| ((t * 5 + i * 7) % 13) as f64 * 0.1))
        .collect();
    for d in [0.2, 0.5, 1.3] {
        let moved: Vec<FkdFeature> = feats.iter().map(|f| f.map(|x| x + d)).collect();
        let fkd = frechet_from_features(&feats, &moved).unwrap();
        ensure((fkd - 120.0 * d * d).abs() <= 1e-9, format!("shift {d}: fkd {fkd}"))?;
    }
    ensure(keypoint_mse(&a, &b).unwrap() == keypoint_mse(&b, &a).unwrap(), "mse not symmetric")?;
    let (ab, ba) = (frechet_keypoint_distance(&a, &b).unwrap(), frechet_keypoint_distance(&b, &a).unwrap());
    ensure(ab == ba, format!("fkd not symmetric: {ab} vs {ba}"))?;
    Ok("mse and fkd identities hold".into())
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kpstream"))
        .args(args)
        .current_dir(dir)
        .env("KPSTREAM_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn collect_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproducibility() -> Check {
    let pipeline: [&[&str]; 6] = [
        &["generate", "--kind", "switching", "--sequences", "10", "--frames", "48", "--seed", "3", "--out", "data"],
        &["train", "--manifest", "data", "--model", "rnn", "--k", "4", "--steps", "20", "--out", "ckpt"],
        &["train", "--manifest", "data", "--model", "vrnn", "--k", "4", "--steps", "20", "--seeds", "1,2", "--jobs", "2", "--out", "ckpt"],
        &["simulate", "--manifest", "data", "--checkpoint", "ckpt", "--mode", "reconstruction,transfer", "--transcripts", "--out", "res"],
        &["simulate", "--manifest", "data", "--model", "persistence", "--k", "4", "--out", "res"],
        &["report", "--results", "res", "--out", "report"],
    ];
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for run in &runs {
        for args in pipeline {
            run_cli(run.path(), args)?;
        }
    }
    let (a, b) = (collect_files(runs[0].path()), collect_files(runs[1].path()));
    ensure(a.keys().eq(b.keys()), "runs wrote different file sets")?;
    for (name, bytes) in &a {
        ensure(&b[name] == bytes, format!("{name} differs between runs"))?;
    }
    Ok(format!("{} output files byte-identical across reruns", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("gradient correctness", gradient_correctness),
        ("gaussian identities", gaussian_identities),
        ("scheduler arithmetic", scheduler_arithmetic),
        ("wire codec", wire_codec),
        ("oracle end-to-end", oracle_end_to_end),
        ("learning sanity", learning_sanity),
        ("ranking on switching data", ranking_on_switching),
        ("metric identities", metric_identities),
        ("reproducibility", reproducibility),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} {name}: PASS ({secs:.1}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({secs:.1}s) {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
