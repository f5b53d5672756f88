use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{GeneratorKind, RunConfig};
use crate::error::{Error, Result};
use crate::eval::report::{aggregate, format_report, format_trace, parse_report, parse_trace, AggregateRow, TRACE_SUFFIX};
use crate::eval::{emit_report, run_cell, run_stem, CellOutcome, EvalDataset, EvalMode, MetricResult, ResultRow, RunKey};
use crate::keypoint::synth::{synth_periodic, synth_switching, SwitchingParams, SynthParams};
use crate::keypoint::{DatasetManifest, KeypointSequence, Split, FRAME_DIM};
use crate::keypoint::manifest::MANIFEST_FILE;
use crate::predictor::{ModelCheckpoint, CHECKPOINT_EXTENSION};
use crate::protocol::{bandwidth_summary, TransmissionReport};

pub const RESULT_SUFFIX: &str = ".result.csv";
pub const SESSIONS_SUFFIX: &str = ".sessions.csv";
pub const LOSS_SUFFIX: &str = ".loss.csv";
pub const TRANSCRIPT_EXTENSION: &str = "kpwire";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `manifest` may name the manifest file or the dataset directory.
fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let p = cfg.require_path("manifest")?;
    DatasetManifest::load(if p.is_dir() { p.join(MANIFEST_FILE) } else { p })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub manifest: PathBuf,
    pub train: usize,
    pub test: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub text: String,
}

/// Writes a synthetic dataset (sequence files plus manifest) into `out`.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    let kind: GeneratorKind = cfg.get("kind").unwrap_or("periodic").parse()?;
    let seeds = cfg.seeds()?;
    let [seed] = seeds[..] else {
        return Err(Error::InvalidArgument("generate takes exactly one seed".into()));
    };
    let n: usize = cfg.parse_or("sequences", 20)?;
    let frames: usize = cfg.parse_or("frames", 120)?;
    let fps: f64 = cfg.parse_or("fps", 25.0)?;
    let name = cfg.get("name").unwrap_or(kind.as_str()).to_string();
    let split_seed: u64 = cfg.parse_or("split_seed", seed)?;

    let sequences: Vec<KeypointSequence> = match kind {
        GeneratorKind::Periodic => synth_periodic(seed, n, frames, fps, &SynthParams::default())?,
        GeneratorKind::Static => synth_periodic(seed, n, frames, fps, &SynthParams::static_pose())?,
        GeneratorKind::Switching => {
            let d = SwitchingParams::default();
            let params = SwitchingParams {
                num_regimes: cfg.parse_or("regimes", d.num_regimes)?,
                switch_prob: cfg.parse_or("switch_prob", d.switch_prob)?,
                noise_std: cfg.parse_or("noise_std", d.noise_std)?,
                motion: d.motion,
            };
            synth_switching(seed, n, frames, fps, &params)?.sequences
        }
    };
    cfg.write_resolved("generate")?;
    let (manifest, seqs) =
        DatasetManifest::write_dataset(&cfg.out, &name, sequences, Some(kind.as_str()), Some(seed), split_seed)?;

    let train = seqs.iter().filter(|s| s.split == Split::Train).count();
    let lens = seqs.iter().map(KeypointSequence::len);
    let (min_len, max_len) = (lens.clone().min().unwrap_or(0), lens.max().unwrap_or(0));
    let mut text = String::new();
    writeln!(text, "dataset {name}: {} sequences ({train} train, {} test)", seqs.len(), seqs.len() - train).ok();
    writeln!(text, "frames per sequence: {min_len}..={max_len}").ok();
    writeln!(text, "training-split statistics per dimension:").ok();
    writeln!(text, "{:>4} {:>12} {:>12}", "dim", "mean", "std").ok();
    for i in 0..FRAME_DIM {
        writeln!(text, "{i:>4} {:>12.6} {:>12.6}", manifest.stats.mean[i], manifest.stats.std[i]).ok();
    }
    Ok(GenerateSummary {
        manifest: cfg.out.join(MANIFEST_FILE),
        train,
        test: seqs.len() - train,
        min_len,
        max_len,
        text,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRun {
    pub key: RunKey,
    pub checkpoint: PathBuf,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trains one checkpoint per configured block size and seed.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TrainedRun>> {
    let manifest = load_manifest(cfg)?;
    let model = cfg
        .model()?
        .ok_or_else(|| Error::InvalidArgument("missing required setting `model`".into()))?;
    if !model.is_trained() {
        return Err(Error::InvalidArgument(format!("{model} has nothing to train")));
    }
    let blocks = cfg.blocks()?.unwrap_or_else(|| vec![(5, 5)]);
    let seeds = cfg.seeds()?;
    let train = manifest.load_split(Split::Train)?;
    cfg.write_resolved("train")?;

    let name = &manifest.name;
    let runs: Vec<RunKey> = blocks
        .iter()
        .flat_map(|&(k_in, k_out)| {
            seeds.iter().map(move |&seed| RunKey {
                dataset: name.clone(),
                model,
                k_in,
                k_out,
                seed,
            })
        })
        .collect();
    let trained: Vec<(RunKey, ModelCheckpoint)> = runs
        .par_iter()
        .map(|key| {
            let mut kv = cfg.kv().clone();
            kv.set("k", key.k_out);
            kv.set("k_in", key.k_in);
            kv.set("k_out", key.k_out);
            kv.set("seed", key.seed);
            log::info!("training {} k={}/{} seed {}", key.model, key.k_in, key.k_out, key.seed);
            let ckpt = ModelCheckpoint::train(model, &kv, &train, manifest.stats.clone())?;
            Ok((key.clone(), ckpt))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(trained.len());
    for (key, ckpt) in trained {
        let stem = run_stem(&key.dataset, key.model, key.k_in, key.k_out, key.seed, EvalMode::Reconstruction);
        let path = cfg.out.join(format!("{stem}.{CHECKPOINT_EXTENSION}"));
        ckpt.save(&path)?;
        let history = ckpt.loss_history();
        let mut loss = String::from("step,loss\n");
        for (i, l) in history.iter().enumerate() {
            writeln!(loss, "{i},{l}").ok();
        }
        write(&cfg.out.join(format!("{stem}{LOSS_SUFFIX}")), loss)?;
        out.push(TrainedRun {
            key,
            checkpoint: path,
            initial_loss: history.first().copied().unwrap_or(f64::NAN),
            final_loss: history.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok(out)
}

/// One evaluated (model, block, seed, mode) run of [`cmd_simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub stem: String,
    pub mode: EvalMode,
    pub result: Option<MetricResult>,
    pub reports: Vec<TransmissionReport>,
}

fn checkpoint_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == CHECKPOINT_EXTENSION))
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(Error::InvalidArgument(format!("no .{CHECKPOINT_EXTENSION} files in {}", path.display())));
    }
    Ok(found)
}

fn format_sessions(reports: &[TransmissionReport]) -> String {
    let mut s = String::from(
        "sequence,frames,frames_sent,frames_predicted,bytes_sent,bytes_baseline,bandwidth_ratio,savings_factor,mean_mse\n",
    );
    for r in reports {
        let mse = r.mean_mse().map_or_else(String::new, |m| m.to_string());
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.source_id,
            r.len,
            r.frames_sent,
            r.frames_predicted,
            r.bytes_sent,
            r.bytes_baseline,
            r.bandwidth_ratio,
            r.savings_factor(),
            mse
        )
        .ok();
    }
    s
}

/// Runs the test split of the manifest through the transmission simulator
/// with each configured checkpoint (or the `oracle`/`persistence` baseline).
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<SimulatedRun>> {
    let manifest = load_manifest(cfg)?;
    let data = EvalDataset::from_manifest(&manifest)?;
    let modes = cfg.modes()?;
    let streaming = cfg.flag("streaming")?;
    let transcripts = cfg.flag("transcripts")?;
    let blocks = cfg.blocks()?;

    let mut jobs: Vec<(RunKey, Option<ModelCheckpoint>)> = Vec::new();
    if let Some(path) = cfg.get("checkpoint") {
        for p in checkpoint_paths(Path::new(path))? {
            let ckpt = ModelCheckpoint::load(&p)?;
            if ckpt.dataset() != manifest.name {
                log::warn!(
                    "{} was normalized on `{}` but is simulated on `{}`",
                    p.display(),
                    ckpt.dataset(),
                    manifest.name
                );
            }
            for (k_in, k_out) in blocks.clone().unwrap_or_else(|| vec![ckpt.block()]) {
                if let Some(max) = ckpt.predictor().max_horizon() {
                    if max < k_out {
                        return Err(Error::InvalidArgument(format!(
                            "{} predicts at most {max} frames ahead; k = {k_out} is too long",
                            p.display()
                        )));
                    }
                }
                let key = RunKey {
                    dataset: manifest.name.clone(),
                    model: ckpt.kind(),
                    k_in,
                    k_out,
                    seed: ckpt.train_seed(),
                };
                jobs.push((key, Some(ckpt.clone())));
            }
        }
    } else {
        let model = cfg.model()?.ok_or_else(|| {
            Error::InvalidArgument("simulate needs `checkpoint` or a baseline `model`".into())
        })?;
        if model.is_trained() {
            return Err(Error::InvalidArgument(format!("{model} needs a `checkpoint`")));
        }
        for (k_in, k_out) in blocks.unwrap_or_else(|| vec![(5, 5)]) {
            for seed in cfg.seeds()? {
                let key = RunKey {
                    dataset: manifest.name.clone(),
                    model,
                    k_in,
                    k_out,
                    seed,
                };
                jobs.push((key, None));
            }
        }
    }
    cfg.write_resolved("simulate")?;

    let cells: Vec<(RunKey, EvalMode)> = jobs
        .iter()
        .flat_map(|(key, _)| modes.iter().map(move |&m| (key.clone(), m)))
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .enumerate()
        .map(|(i, (key, mode))| {
            let ckpt = jobs[i / modes.len()].1.as_ref();
            run_cell(&data, key, *mode, ckpt.map(ModelCheckpoint::predictor), streaming, transcripts)
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::with_capacity(cells.len());
    for ((key, mode), outcome) in cells.iter().zip(outcomes) {
        let stem = run_stem(&key.dataset, key.model, key.k_in, key.k_out, key.seed, *mode);
        let reports: Vec<TransmissionReport> = outcome.sessions.iter().map(|s| s.report.clone()).collect();
        write(&cfg.out.join(format!("{stem}{SESSIONS_SUFFIX}")), format_sessions(&reports))?;
        if transcripts {
            for (seq, s) in data.test.iter().zip(&outcome.sessions) {
                if let Some(t) = &s.transcript {
                    let name = format!("{}.{TRANSCRIPT_EXTENSION}", seq.source_id);
                    write(&cfg.out.join("transcripts").join(&stem).join(name), t)?;
                }
            }
        }
        match &outcome.result {
            Some(r) => {
                write(&cfg.out.join(format!("{stem}{RESULT_SUFFIX}")), format_report(&[ResultRow::from(r)])?)?;
                write(&cfg.out.join(format!("{stem}{TRACE_SUFFIX}")), format_trace(&r.trace))?;
            }
            None => log::warn!(
                "{stem}: no frames predicted; every test sequence is shorter than k_in + k_out = {}",
                key.k_in + key.k_out
            ),
        }
        runs.push(SimulatedRun {
            stem,
            mode: *mode,
            result: outcome.result,
            reports,
        });
    }
    Ok(runs)
}

/// Renders [`bandwidth_summary`] over the sessions of `runs`. Byte counts do
/// not depend on the mode, so each session is counted once.
pub fn format_bandwidth(runs: &[SimulatedRun]) -> String {
    let first = runs.first().map(|r| r.mode);
    let all: Vec<TransmissionReport> = runs
        .iter()
        .filter(|r| Some(r.mode) == first)
        .flat_map(|r| r.reports.iter().cloned())
        .collect();
    let mut s = format!(
        "{:<12} {:>5} {:>5} {:>8} {:>10} {:>8} {:>14}\n",
        "model", "k_in", "k_out", "sessions", "bandwidth", "savings", "predicted_mse"
    );
    for row in bandwidth_summary(&all) {
        let mse = row.mean_predicted_mse.map_or_else(|| "-".to_string(), |m| format!("{m:.6}"));
        writeln!(
            s,
            "{:<12} {:>5} {:>5} {:>8} {:>10.4} {:>8.4} {:>14}",
            row.model.as_str(),
            row.k_in,
            row.k_out,
            row.sessions,
            row.mean_bandwidth_ratio,
            row.mean_savings_factor,
            mse
        )
        .ok();
    }
    s
}

/// Collects every `*.result.csv` (with its trace) under the results
/// directory and writes the combined report into `out`.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<AggregateRow>> {
    let dir = cfg.get("results").map_or_else(|| cfg.out.clone(), PathBuf::from);
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(RESULT_SUFFIX)))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no *{RESULT_SUFFIX} files in {}", dir.display())));
    }
    let mut results = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
        for row in parse_report(&text, f)?.rows {
            let stem = run_stem(&row.dataset, row.model, row.k_in, row.k_out, row.seed, row.mode);
            let tpath = dir.join(format!("{stem}{TRACE_SUFFIX}"));
            let trace = match std::fs::read_to_string(&tpath) {
                Ok(t) => parse_trace(&t, &tpath)?,
                Err(e) => return Err(Error::io(&tpath, e)),
            };
            results.push(row.with_trace(trace));
        }
    }
    cfg.write_resolved("report")?;
    emit_report(&results, &cfg.out)?;
    let rows: Vec<ResultRow> = results.iter().map(ResultRow::from).collect();
    Ok(aggregate(&rows))
}

pub fn format_aggregate(rows: &[AggregateRow]) -> String {
    let mut s = format!(
        "{:<14} {:<15} {:>5} {:>5} {:<12} {:>5} {:>12} {:>12} {:>10} {:>8}\n",
        "dataset", "mode", "k_in", "k_out", "model", "seeds", "median_mse", "median_fkd", "bandwidth", "savings"
    );
    for a in rows {
        writeln!(
            s,
            "{:<14} {:<15} {:>5} {:>5} {:<12} {:>5} {:>12.6} {:>12.6} {:>10.4} {:>8.4}",
            a.dataset,
            a.mode.as_str(),
            a.k_in,
            a.k_out,
            a.model.as_str(),
            a.seeds,
            a.median_mse,
            a.median_fkd,
            a.median_bandwidth_ratio,
            a.median_savings_factor
        )
        .ok();
    }
    s
}
