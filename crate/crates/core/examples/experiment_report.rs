//! A small grid (baselines plus a briefly trained RNN over two seeds) written
//! as report.csv and per-frame traces.
//!
//!     cargo run --release --example experiment_report -- /tmp/kp-report

use std::collections::BTreeMap;

use kpstream::eval::{emit_report, run_experiment, EvalDataset, EvalMode, ExperimentGrid, RunKey};
use kpstream::keypoint::synth::{synth_periodic, SynthParams};
use kpstream::keypoint::NormalizationStats;
use kpstream::kv::KvMap;
use kpstream::predictor::{ModelCheckpoint, ModelKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "kp-report".into());
    let seqs = synth_periodic(2, 10, 60, 25.0, &SynthParams::default())?;
    let (train, test) = seqs.split_at(8);
    let stats = NormalizationStats::fit(train, "periodic/train")?;
    let grid = ExperimentGrid {
        datasets: vec!["periodic".into()],
        models: vec![ModelKind::Rnn, ModelKind::Persistence, ModelKind::Oracle],
        blocks: vec![(5, 5)],
        seeds: vec![0, 1],
        modes: vec![EvalMode::Reconstruction],
        streaming: false,
    };
    let mut checkpoints = BTreeMap::new();
    for seed in [0, 1] {
        let mut kv = KvMap::new("example");
        kv.set("k", 5);
        kv.set("steps", 60);
        kv.set("seed", seed);
        let key = RunKey {
            dataset: "periodic".into(),
            model: ModelKind::Rnn,
            k_in: 5,
            k_out: 5,
            seed,
        };
        checkpoints.insert(key, ModelCheckpoint::train(ModelKind::Rnn, &kv, train, stats.clone())?);
    }
    let data = EvalDataset {
        name: "periodic".into(),
        stats,
        test: test.to_vec(),
    };
    let results = run_experiment(&grid, &[data], &checkpoints)?;
    for r in &results {
        println!("{:<12} seed {} mse {:.4} fkd {:.4}", r.model.as_str(), r.seed, r.mse, r.fkd);
    }
    let emitted = emit_report(&results, &dir)?;
    println!("{}", std::fs::read_to_string(emitted.report)?);
    Ok(())
}
