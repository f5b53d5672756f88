//! Command-line front end. Every subcommand resolves a [`RunConfig`] from
//! `--config`, named flags and `--set key=value` overrides (later wins), and
//! writes the resolved settings next to its outputs.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_generate, cmd_report, cmd_simulate, cmd_train, format_aggregate, format_bandwidth, GenerateSummary,
    SimulatedRun, TrainedRun, LOSS_SUFFIX, RESULT_SUFFIX, SESSIONS_SUFFIX, TRANSCRIPT_EXTENSION,
};
pub use config::{GeneratorKind, RunConfig};

use crate::error::{Error, Result};
use crate::kv::KvMap;

/// Environment variable holding the log filter (`info` when unset).
pub const LOG_ENV: &str = "KPSTREAM_LOG";

#[derive(Debug, Parser)]
#[command(name = "kpstream", version, about = "Keypoint-stream forecasting and predictive transmission")]
pub struct Cli {
    /// `key=value` settings file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for generation, training or baselines.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Extra setting; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its manifest.
    Generate {
        /// periodic, switching or static.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        sequences: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        regimes: Option<usize>,
        #[arg(long)]
        switch_prob: Option<f64>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        name: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a forecaster on the training split of a manifest.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// rnn, vae or vrnn.
        #[arg(long)]
        model: Option<String>,
        /// Block size, or a comma-separated list.
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        k_in: Option<usize>,
        #[arg(long)]
        k_out: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Comma-separated training seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Stream the test split through the sender/receiver simulator.
    Simulate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// A checkpoint file or a directory of them.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Baseline to run instead of a checkpoint: oracle or persistence.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        k_in: Option<usize>,
        #[arg(long)]
        k_out: Option<usize>,
        /// reconstruction, transfer, or both comma-separated.
        #[arg(long)]
        mode: Option<String>,
        /// Keep the receiver's predictor state across blocks.
        #[arg(long)]
        streaming: bool,
        /// Write the encoded byte stream of each session.
        #[arg(long)]
        transcripts: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Collect simulate results into report.csv and traces/.
    Report {
        /// Directory holding `*.result.csv` files [default: the output directory].
        #[arg(long)]
        results: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn put<T: ToString>(kv: &mut KvMap, key: &str, v: Option<T>) {
    if let Some(v) = v {
        kv.set(key, v.to_string());
    }
}

fn path(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

impl Cli {
    /// Flags of the chosen subcommand as a settings layer.
    pub fn overrides(&self) -> Result<KvMap> {
        let mut kv = KvMap::new("command line");
        let common = match &self.command {
            Command::Generate {
                kind,
                sequences,
                frames,
                fps,
                regimes,
                switch_prob,
                noise_std,
                name,
                common,
            } => {
                put(&mut kv, "kind", kind.clone());
                put(&mut kv, "sequences", *sequences);
                put(&mut kv, "frames", *frames);
                put(&mut kv, "fps", *fps);
                put(&mut kv, "regimes", *regimes);
                put(&mut kv, "switch_prob", *switch_prob);
                put(&mut kv, "noise_std", *noise_std);
                put(&mut kv, "name", name.clone());
                common
            }
            Command::Train {
                manifest,
                model,
                k,
                k_in,
                k_out,
                steps,
                lr,
                seeds,
                common,
            } => {
                put(&mut kv, "manifest", path(manifest.clone()));
                put(&mut kv, "model", model.clone());
                put(&mut kv, "k", k.clone());
                put(&mut kv, "k_in", *k_in);
                put(&mut kv, "k_out", *k_out);
                put(&mut kv, "steps", *steps);
                put(&mut kv, "lr", *lr);
                put(&mut kv, "seeds", seeds.clone());
                common
            }
            Command::Simulate {
                manifest,
                checkpoint,
                model,
                k,
                k_in,
                k_out,
                mode,
                streaming,
                transcripts,
                common,
            } => {
                put(&mut kv, "manifest", path(manifest.clone()));
                put(&mut kv, "checkpoint", path(checkpoint.clone()));
                put(&mut kv, "model", model.clone());
                put(&mut kv, "k", k.clone());
                put(&mut kv, "k_in", *k_in);
                put(&mut kv, "k_out", *k_out);
                put(&mut kv, "mode", mode.clone());
                if *streaming {
                    kv.set("streaming", true);
                }
                if *transcripts {
                    kv.set("transcripts", true);
                }
                common
            }
            Command::Report { results, common } => {
                put(&mut kv, "results", path(results.clone()));
                common
            }
        };
        for item in &common.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{item}`")))?;
            kv.set(k.trim(), v.trim());
        }
        // A global seed replaces any seed list from the config file.
        if let Some(seed) = self.seed {
            kv.set("seed", seed);
            kv.set("seeds", seed);
        }
        put(&mut kv, "out", path(self.out.clone()));
        Ok(kv)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.overrides()?)
    }
}

/// Runs the parsed command on a pool of `--jobs` threads and returns what it
/// prints on success.
pub fn run(cli: &Cli) -> Result<String> {
    if cli.jobs == 0 {
        return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
    }
    let cfg = cli.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Generate { .. } => Ok(cmd_generate(&cfg)?.text),
        Command::Train { .. } => {
            let mut s = String::new();
            for r in cmd_train(&cfg)? {
                s += &format!(
                    "{} k={}/{} seed {}: loss {:.6} -> {:.6} ({})\n",
                    r.key.model,
                    r.key.k_in,
                    r.key.k_out,
                    r.key.seed,
                    r.initial_loss,
                    r.final_loss,
                    r.checkpoint.display()
                );
            }
            Ok(s)
        }
        Command::Simulate { .. } => Ok(format_bandwidth(&cmd_simulate(&cfg)?)),
        Command::Report { .. } => Ok(format_aggregate(&cmd_report(&cfg)?)),
    })
}

/// Process exit code for an error: 2 for bad input, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}
