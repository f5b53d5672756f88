//! Forecasters that fill in skipped frames.
//!
//! All predictors work in keypoint space through [`Predictor`]; the trained
//! models normalize internally with the statistics stored in their checkpoint.

mod baseline;
mod checkpoint;
pub mod rnn;
mod train;
pub mod vae;
pub mod vrnn;

pub use baseline::{OraclePredictor, PersistencePredictor};
pub use checkpoint::{ModelCheckpoint, CHECKPOINT_EXTENSION};
pub use rnn::{rnn_predict_block, rnn_train, RnnConfig, RnnModel, RnnState};
pub use train::{TrainOptions, TrainingSet};
pub use vae::{vae_predict_block, vae_train, VaeConfig, VaeModel};
pub use vrnn::{vrnn_predict_block, vrnn_train, VrnnConfig, VrnnModel, VrnnState};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::keypoint::FrameVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Rnn,
    Vae,
    Vrnn,
    /// Repeats the last context frame.
    Persistence,
    /// Replays ground truth.
    Oracle,
}

impl ModelKind {
    pub const TRAINED: [ModelKind; 3] = [ModelKind::Rnn, ModelKind::Vae, ModelKind::Vrnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rnn => "rnn",
            ModelKind::Vae => "vae",
            ModelKind::Vrnn => "vrnn",
            ModelKind::Persistence => "persistence",
            ModelKind::Oracle => "oracle",
        }
    }

    pub fn is_trained(self) -> bool {
        matches!(self, ModelKind::Rnn | ModelKind::Vae | ModelKind::Vrnn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(ModelKind::Rnn),
            "vae" => Ok(ModelKind::Vae),
            "vrnn" => Ok(ModelKind::Vrnn),
            "persistence" => Ok(ModelKind::Persistence),
            "oracle" => Ok(ModelKind::Oracle),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind `{other}` (expected rnn, vae, vrnn, persistence or oracle)"
            ))),
        }
    }
}

/// How the variational models draw latents at inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictMode {
    /// Means everywhere; deterministic.
    #[default]
    Mean,
    /// Reparameterized latent samples from a seeded stream.
    Sample { seed: u64 },
}

/// A block forecaster in keypoint space.
pub trait Predictor: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Predicts frames `start..start + horizon` from `context`, the frames
    /// immediately before `start`.
    fn predict_block(
        &self,
        context: &[FrameVector],
        start: usize,
        horizon: usize,
    ) -> Result<Vec<FrameVector>>;

    /// Longest horizon the model supports, if limited.
    fn max_horizon(&self) -> Option<usize> {
        None
    }

    /// State for persistent-state streaming. Non-recurrent models fall back to
    /// per-block prediction over the last `context_len` frames seen.
    fn stream(&self, context_len: usize) -> Box<dyn StreamPredictor + '_> {
        Box::new(ContextWindow::new(self, context_len))
    }
}

/// A predictor that carries state across a whole session.
pub trait StreamPredictor {
    /// Folds in a received frame.
    fn observe(&mut self, frame: &FrameVector) -> Result<()>;

    /// Predicts the next `horizon` frames and advances through them.
    fn predict(&mut self, start: usize, horizon: usize) -> Result<Vec<FrameVector>>;
}

struct ContextWindow<'a, P: ?Sized> {
    predictor: &'a P,
    context_len: usize,
    history: Vec<FrameVector>,
}

impl<'a, P: Predictor + ?Sized> ContextWindow<'a, P> {
    fn new(predictor: &'a P, context_len: usize) -> Self {
        ContextWindow {
            predictor,
            context_len,
            history: Vec::new(),
        }
    }
}

impl<P: Predictor + ?Sized> StreamPredictor for ContextWindow<'_, P> {
    fn observe(&mut self, frame: &FrameVector) -> Result<()> {
        self.history.push(*frame);
        Ok(())
    }

    fn predict(&mut self, start: usize, horizon: usize) -> Result<Vec<FrameVector>> {
        let from = self.history.len().saturating_sub(self.context_len);
        let out = self
            .predictor
            .predict_block(&self.history[from..], start, horizon)?;
        self.history.extend_from_slice(&out);
        Ok(out)
    }
}

pub(crate) fn require_context(context: &[FrameVector]) -> Result<()> {
    if context.is_empty() {
        return Err(Error::InvalidArgument("prediction context is empty".into()));
    }
    Ok(())
}
