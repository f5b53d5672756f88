//! Shared minibatch training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::keypoint::{KeypointSequence, NormalizationStats};
use crate::kv::KvMap;
use crate::numeric::{adam_step, AdamConfig, Gradients, ParamStore};

// Window sampling draws from a stream separate from initialization.
const SAMPLE_STREAM: u64 = 0x7a11_5a3b_1e00_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 500,
            batch_size: 16,
            lr: 1e-3,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            clip_norm: self.clip_norm,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidArgument(format!("clip_norm {c} must be positive")));
            }
        }
        Ok(())
    }

    pub(crate) fn write_kv(&self, kv: &mut KvMap) {
        kv.set("steps", self.steps);
        kv.set("batch_size", self.batch_size);
        kv.set("lr", self.lr);
        kv.set(
            "clip_norm",
            self.clip_norm.map_or_else(|| "none".to_string(), |c| c.to_string()),
        );
        kv.set("seed", self.seed);
    }

    pub(crate) fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = TrainOptions::default();
        let clip_norm = match kv.get("clip_norm") {
            None => d.clip_norm,
            Some("none") => None,
            Some(_) => kv.parse_value("clip_norm")?,
        };
        let opts = TrainOptions {
            steps: kv.parse_or("steps", d.steps)?,
            batch_size: kv.parse_or("batch_size", d.batch_size)?,
            lr: kv.parse_or("lr", d.lr)?,
            clip_norm,
            seed: kv.parse_or("seed", d.seed)?,
        };
        opts.validate()?;
        Ok(opts)
    }
}

/// Normalized training sequences as plain vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub sequences: Vec<Vec<Vec<f64>>>,
}

impl TrainingSet {
    pub fn from_sequences(seqs: &[KeypointSequence], stats: &NormalizationStats) -> Result<Self> {
        let sequences = seqs
            .iter()
            .map(|s| {
                s.frames
                    .iter()
                    .map(|f| stats.normalize(&f.flatten()).map(|v| v.to_vec()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_vectors(sequences)
    }

    /// Sequences of equal-width vectors of any width.
    pub fn from_vectors(sequences: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if sequences.iter().all(Vec::is_empty) {
            return Err(Error::EmptyDataset("no training frames".into()));
        }
        let dim = sequences.iter().flatten().next().map_or(0, Vec::len);
        for v in sequences.iter().flatten() {
            crate::error::ensure_dim("training frame", dim, v.len())?;
        }
        Ok(TrainingSet { sequences })
    }

    pub fn dim(&self) -> usize {
        self.sequences.iter().flatten().next().map_or(0, Vec::len)
    }

    pub fn min_len(&self) -> usize {
        self.sequences.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Fails unless every sequence has at least `len` frames.
    pub(crate) fn require_len(&self, len: usize, what: &str) -> Result<()> {
        if let Some((i, s)) = self.sequences.iter().enumerate().find(|(_, s)| s.len() < len) {
            return Err(Error::InvalidArgument(format!(
                "sequence {i} has {} frames; {what} needs at least {len}",
                s.len()
            )));
        }
        Ok(())
    }

    /// Uniform over every `(sequence, start)` with `start + len <= T`.
    pub(crate) fn sample_window(&self, rng: &mut impl Rng, len: usize) -> (usize, usize) {
        let total: usize = self.sequences.iter().map(|s| s.len() + 1 - len).sum();
        let mut pick = rng.random_range(0..total);
        for (i, s) in self.sequences.iter().enumerate() {
            let n = s.len() + 1 - len;
            if pick < n {
                return (i, pick);
            }
            pick -= n;
        }
        unreachable!("window index within total")
    }

    pub(crate) fn window(&self, seq: usize, start: usize, len: usize) -> &[Vec<f64>] {
        &self.sequences[seq][start..start + len]
    }
}

/// Runs `opts.steps` Adam steps on the batch-mean of `loss`. `draw` builds
/// one sample from the sampling stream; samples in a batch are evaluated in
/// parallel and reduced in a fixed order, so the result does not depend on
/// the thread count. Returns the per-step mean loss.
pub(crate) fn run_training<S, D, F>(
    params: &mut ParamStore,
    opts: &TrainOptions,
    mut draw: D,
    loss: F,
) -> Result<Vec<f64>>
where
    S: Send + Sync,
    D: FnMut(&mut ChaCha8Rng) -> S,
    F: Fn(&ParamStore, &S) -> Result<(f64, Gradients)> + Sync,
{
    opts.validate()?;
    let adam = opts.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ SAMPLE_STREAM);
    let mut history = Vec::with_capacity(opts.steps);
    let scale = 1.0 / opts.batch_size as f64;
    for step in 0..opts.steps {
        let batch: Vec<S> = (0..opts.batch_size).map(|_| draw(&mut rng)).collect();
        let results: Vec<Result<(f64, Gradients)>> = {
            let frozen: &ParamStore = params;
            batch.par_iter().map(|s| loss(frozen, s)).collect()
        };
        params.zero_grad();
        let mut total = 0.0;
        for r in results {
            let (l, g) = r?;
            total += l;
            params.accumulate(&g)?;
        }
        let mean = total * scale;
        if !mean.is_finite() {
            return Err(Error::Diverged { step });
        }
        params.scale_grads(scale);
        adam_step(params, &adam).map_err(|e| match e {
            Error::NonFiniteGradient(_) => Error::Diverged { step },
            other => other,
        })?;
        history.push(mean);
        if step % 100 == 0 {
            log::debug!("step {step}: loss {mean:.6}");
        }
    }
    Ok(history)
}
