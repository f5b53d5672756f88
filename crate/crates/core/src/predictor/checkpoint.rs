use std::path::Path;

use super::{
    ModelKind, Predictor, RnnConfig, RnnModel, TrainingSet, VaeConfig, VaeModel, VrnnConfig,
    VrnnModel,
};
use crate::error::{Error, Result};
use crate::keypoint::{KeypointSequence, NormalizationStats, FRAME_DIM};
use crate::kv::KvMap;
use crate::numeric::{CheckpointFile, ParamStore, Tensor2};

pub const CHECKPOINT_EXTENSION: &str = "kpck";

/// A trained model together with its normalization and loss history.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelCheckpoint {
    Rnn(RnnModel),
    Vae(VaeModel),
    Vrnn(VrnnModel),
}

impl ModelCheckpoint {
    /// Trains a model of `kind` configured by `config` (missing keys take
    /// their defaults) on `sequences`, normalized with `stats`.
    pub fn train(
        kind: ModelKind,
        config: &KvMap,
        sequences: &[KeypointSequence],
        stats: NormalizationStats,
    ) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::EmptyDataset(format!("no training sequences for {kind}")));
        }
        let data = TrainingSet::from_sequences(sequences, &stats)?;
        Ok(match kind {
            ModelKind::Rnn => {
                let mut m = RnnModel::new(RnnConfig::from_kv(config)?, stats)?;
                m.fit(&data)?;
                ModelCheckpoint::Rnn(m)
            }
            ModelKind::Vae => {
                let mut m = VaeModel::new(VaeConfig::from_kv(config)?, stats)?;
                m.fit(&data)?;
                ModelCheckpoint::Vae(m)
            }
            ModelKind::Vrnn => {
                let mut m = VrnnModel::new(VrnnConfig::from_kv(config)?, stats)?;
                m.fit(&data)?;
                ModelCheckpoint::Vrnn(m)
            }
            other => {
                return Err(Error::InvalidArgument(format!("{other} is not a trainable model")));
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelCheckpoint::Rnn(_) => ModelKind::Rnn,
            ModelCheckpoint::Vae(_) => ModelKind::Vae,
            ModelCheckpoint::Vrnn(_) => ModelKind::Vrnn,
        }
    }

    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            ModelCheckpoint::Rnn(m) => m,
            ModelCheckpoint::Vae(m) => m,
            ModelCheckpoint::Vrnn(m) => m,
        }
    }

    pub fn stats(&self) -> &NormalizationStats {
        match self {
            ModelCheckpoint::Rnn(m) => &m.stats,
            ModelCheckpoint::Vae(m) => &m.stats,
            ModelCheckpoint::Vrnn(m) => &m.stats,
        }
    }

    pub fn loss_history(&self) -> &[f64] {
        match self {
            ModelCheckpoint::Rnn(m) => &m.loss_history,
            ModelCheckpoint::Vae(m) => &m.loss_history,
            ModelCheckpoint::Vrnn(m) => &m.loss_history,
        }
    }

    /// `(k_in, k_out)` the model was trained for; the VAE's lag range bounds
    /// both.
    pub fn block(&self) -> (usize, usize) {
        match self {
            ModelCheckpoint::Rnn(m) => (m.config.k_in, m.config.k_out),
            ModelCheckpoint::Vae(m) => (m.config.max_lag, m.config.max_lag),
            ModelCheckpoint::Vrnn(m) => (m.config.k_in, m.config.k_out),
        }
    }

    pub fn train_seed(&self) -> u64 {
        match self {
            ModelCheckpoint::Rnn(m) => m.config.train.seed,
            ModelCheckpoint::Vae(m) => m.config.train.seed,
            ModelCheckpoint::Vrnn(m) => m.config.train.seed,
        }
    }

    /// Dataset the normalization was fitted on, from `<dataset>/<split>`.
    pub fn dataset(&self) -> &str {
        let over = &self.stats().computed_over;
        over.split_once('/').map_or(over.as_str(), |(d, _)| d)
    }

    pub fn to_file(&self) -> CheckpointFile {
        match self {
            ModelCheckpoint::Rnn(m) => m.to_checkpoint(),
            ModelCheckpoint::Vae(m) => m.to_checkpoint(),
            ModelCheckpoint::Vrnn(m) => m.to_checkpoint(),
        }
    }

    pub fn from_file(file: &CheckpointFile) -> Result<Self> {
        match &file.kind {
            b"RNN1" => RnnModel::from_checkpoint(file).map(ModelCheckpoint::Rnn),
            b"VAE1" => VaeModel::from_checkpoint(file).map(ModelCheckpoint::Vae),
            b"VRN1" => VrnnModel::from_checkpoint(file).map(ModelCheckpoint::Vrnn),
            other => Err(Error::Checkpoint(format!(
                "unknown model kind tag {:?}",
                String::from_utf8_lossy(other)
            ))),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.to_file().encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::from_file(&CheckpointFile::decode(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(&CheckpointFile::load(path)?)
    }
}

pub(crate) fn write_common(
    file: &mut CheckpointFile,
    stats: &NormalizationStats,
    history: &[f64],
    params: &ParamStore,
) {
    file.config.set("norm.computed_over", &stats.computed_over);
    file.push("norm.mean", Tensor2::column(stats.mean.to_vec()).expect("non-empty"));
    file.push("norm.std", Tensor2::column(stats.std.to_vec()).expect("non-empty"));
    if !history.is_empty() {
        file.push("loss_history", Tensor2::column(history.to_vec()).expect("non-empty"));
    }
    file.push_params("param/", params);
}

pub(crate) fn read_common(file: &CheckpointFile) -> Result<(NormalizationStats, Vec<f64>)> {
    let read60 = |name: &str| -> Result<[f64; FRAME_DIM]> {
        file.require(name)?
            .data()
            .try_into()
            .map_err(|_| Error::Checkpoint(format!("section `{name}` must hold {FRAME_DIM} values")))
    };
    let stats = NormalizationStats {
        mean: read60("norm.mean")?,
        std: read60("norm.std")?,
        computed_over: file.config.get("norm.computed_over").unwrap_or("").to_string(),
    };
    stats.validate()?;
    // an untrained model has no history section
    let history = file
        .section("loss_history")
        .map(|t| t.data().to_vec())
        .unwrap_or_default();
    Ok((stats, history))
}
