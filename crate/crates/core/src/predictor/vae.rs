//! Lag-conditioned VAE: encode `x_t`, decode `x_{t+lag}` for `lag` in `1..=k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::checkpoint::{read_common, write_common};
use super::rnn::{denormalize, join_usize};
use super::train::{run_training, TrainOptions, TrainingSet};
use super::{require_context, ModelKind, PredictMode, Predictor};
use crate::error::{ensure_dim, Error, Result};
use crate::keypoint::{FrameVector, KeypointSequence, NormalizationStats, FRAME_DIM};
use crate::kv::KvMap;
use crate::numeric::{
    CheckpointFile, DiagGaussian, GaussianHead, Gradients, ParamInit, ParamStore, Tape, Var,
};

pub const KIND_TAG: [u8; 4] = *b"VAE1";

/// Decoder log-variance never goes below this.
pub const DECODER_LOG_VAR_FLOOR: f64 = -10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Largest lag the decoder is conditioned on.
    pub max_lag: usize,
    /// KL weight.
    pub beta: f64,
    /// Train to reconstruct the input at lag 1 instead of forecasting.
    pub autoencode: bool,
    pub train: TrainOptions,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            input_dim: FRAME_DIM,
            latent_dim: 16,
            encoder_hidden: vec![128],
            decoder_hidden: vec![128],
            max_lag: 5,
            beta: 1.0,
            autoencode: false,
            train: TrainOptions::default(),
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.latent_dim == 0
            || self.encoder_hidden.contains(&0)
            || self.decoder_hidden.contains(&0)
        {
            return Err(Error::InvalidArgument("vae dimensions must be positive".into()));
        }
        if self.max_lag == 0 {
            return Err(Error::InvalidArgument("vae max_lag must be at least 1".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("vae beta {} must be >= 0", self.beta)));
        }
        self.train.validate()
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new("vae config");
        kv.set("input_dim", self.input_dim);
        kv.set("latent_dim", self.latent_dim);
        kv.set("encoder_hidden", join_usize(&self.encoder_hidden));
        kv.set("decoder_hidden", join_usize(&self.decoder_hidden));
        kv.set("max_lag", self.max_lag);
        kv.set("beta", self.beta);
        kv.set("autoencode", self.autoencode);
        self.train.write_kv(&mut kv);
        kv
    }

    /// Missing keys take their defaults; `k` is accepted for `max_lag`.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = VaeConfig::default();
        let k: Option<usize> = match kv.parse_value("k_out")? {
            Some(k) => Some(k),
            None => kv.parse_value("k")?,
        };
        let cfg = VaeConfig {
            input_dim: kv.parse_or("input_dim", d.input_dim)?,
            latent_dim: kv.parse_or("latent_dim", d.latent_dim)?,
            encoder_hidden: kv.parse_list("encoder_hidden")?.unwrap_or(d.encoder_hidden),
            decoder_hidden: kv.parse_list("decoder_hidden")?.unwrap_or(d.decoder_hidden),
            max_lag: kv.parse_or("max_lag", k.unwrap_or(d.max_lag))?,
            beta: kv.parse_or("beta", d.beta)?,
            autoencode: kv.parse_or("autoencode", d.autoencode)?,
            train: TrainOptions::from_kv(kv)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct VaeNet {
    encoder: GaussianHead,
    decoder: GaussianHead,
    latent_dim: usize,
    max_lag: usize,
}

impl VaeNet {
    fn encode(&self, tape: &mut Tape<'_>, x: Var) -> (Var, Var) {
        self.encoder.forward(tape, x)
    }

    fn decode(&self, tape: &mut Tape<'_>, z: Var, lag: usize) -> (Var, Var) {
        let mut code = vec![0.0; self.max_lag];
        code[lag - 1] = 1.0;
        let code = tape.input(&code);
        let input = tape.concat(&[z, code]);
        self.decoder.forward(tape, input)
    }

    /// NLL of the target under the lag decoder plus `beta` times the KL of the
    /// posterior from the unit prior.
    #[allow(clippy::too_many_arguments)]
    fn loss(
        &self,
        tape: &mut Tape<'_>,
        x_in: Var,
        target: Var,
        lag: usize,
        eps: &[f64],
        beta: f64,
    ) -> (Var, Var) {
        let (q_mean, q_lv) = self.encode(tape, x_in);
        let z = tape.reparameterize(q_mean, q_lv, eps);
        let (x_mean, x_lv) = self.decode(tape, z, lag);
        let nll = tape.gaussian_nll(target, x_mean, x_lv);
        let zero = tape.constant(0.0, self.latent_dim);
        let kl = tape.gaussian_kl(q_mean, q_lv, zero, zero);
        let weighted = tape.scale(kl, beta);
        (tape.add(nll, weighted), kl)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub params: ParamStore,
    pub stats: NormalizationStats,
    pub loss_history: Vec<f64>,
    pub mode: PredictMode,
    net: VaeNet,
}

/// One training example: encode `input`, decode `target` at `lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub lag: usize,
    pub eps: Vec<f64>,
}

impl VaeModel {
    pub fn new(config: VaeConfig, stats: NormalizationStats) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
        let mut init = ParamInit::new(&mut params, &mut rng);
        let encoder = GaussianHead::new(
            &mut init,
            "vae.enc",
            config.input_dim,
            &config.encoder_hidden,
            config.latent_dim,
            None,
        )?;
        let decoder = GaussianHead::new(
            &mut init,
            "vae.dec",
            config.latent_dim + config.max_lag,
            &config.decoder_hidden,
            config.input_dim,
            Some(DECODER_LOG_VAR_FLOOR),
        )?;
        let net = VaeNet {
            encoder,
            decoder,
            latent_dim: config.latent_dim,
            max_lag: config.max_lag,
        };
        Ok(VaeModel {
            config,
            params,
            stats,
            loss_history: Vec::new(),
            mode: PredictMode::Mean,
            net,
        })
    }

    pub fn with_mode(mut self, mode: PredictMode) -> Self {
        self.mode = mode;
        self
    }

    fn check_lag(&self, lag: usize) -> Result<()> {
        if lag == 0 || lag > self.config.max_lag {
            return Err(Error::InvalidArgument(format!(
                "lag {lag} outside 1..={}",
                self.config.max_lag
            )));
        }
        Ok(())
    }

    /// Posterior `q(z | x)` for a normalized frame.
    pub fn encode(&self, x: &[f64]) -> Result<DiagGaussian> {
        ensure_dim("vae_encode input", self.config.input_dim, x.len())?;
        let mut tape = Tape::new(&self.params);
        let xv = tape.input(x);
        let (m, lv) = self.net.encode(&mut tape, xv);
        DiagGaussian::new(tape.value(m).to_vec(), tape.value(lv).to_vec())
    }

    /// Emission `p(x_{t+lag} | z)`.
    pub fn decode(&self, z: &[f64], lag: usize) -> Result<DiagGaussian> {
        ensure_dim("vae_decode latent", self.config.latent_dim, z.len())?;
        self.check_lag(lag)?;
        let mut tape = Tape::new(&self.params);
        let zv = tape.input(z);
        let (m, lv) = self.net.decode(&mut tape, zv, lag);
        DiagGaussian::new(tape.value(m).to_vec(), tape.value(lv).to_vec())
    }

    /// Single-sample negative ELBO with the given noise; returns
    /// `(loss, kl)`.
    pub fn loss(&self, sample: &VaeSample) -> Result<(f64, f64)> {
        let mut tape = Tape::new(&self.params);
        let (loss, kl) = self.record_loss(&mut tape, sample)?;
        Ok((tape.scalar(loss), tape.scalar(kl)))
    }

    /// Loss and its gradient under `params` (which must share this model's
    /// layout).
    pub fn loss_and_grad(&self, params: &ParamStore, sample: &VaeSample) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new(params);
        let (loss, _) = self.record_loss(&mut tape, sample)?;
        Ok((tape.scalar(loss), tape.backward(loss)?))
    }

    fn record_loss(&self, tape: &mut Tape<'_>, s: &VaeSample) -> Result<(Var, Var)> {
        ensure_dim("vae_loss input", self.config.input_dim, s.input.len())?;
        ensure_dim("vae_loss target", self.config.input_dim, s.target.len())?;
        ensure_dim("vae_loss eps", self.config.latent_dim, s.eps.len())?;
        self.check_lag(s.lag)?;
        let x = tape.input(&s.input);
        let target = tape.input(&s.target);
        Ok(self.net.loss(tape, x, target, s.lag, &s.eps, self.config.beta))
    }

    /// Decoder means for lags `1..=horizon` from one normalized frame.
    pub fn predict_normalized(&self, x: &[f64], horizon: usize, mode: PredictMode) -> Result<Vec<Vec<f64>>> {
        if horizon > self.config.max_lag {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} exceeds the model's max lag {}",
                self.config.max_lag
            )));
        }
        let q = self.encode(x)?;
        let z = match mode {
            PredictMode::Mean => q.mean.clone(),
            PredictMode::Sample { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let eps: Vec<f64> = (0..q.dim()).map(|_| rng.sample(StandardNormal)).collect();
                q.reparameterize(&eps)?
            }
        };
        (1..=horizon)
            .map(|lag| self.decode(&z, lag).map(|g| g.mean))
            .collect()
    }

    /// Trains on `(t, lag)` pairs with `lag` uniform in `1..=max_lag`.
    pub fn fit(&mut self, data: &TrainingSet) -> Result<()> {
        ensure_dim("vae training data", self.config.input_dim, data.dim())?;
        let k = self.config.max_lag;
        if !self.config.autoencode && k >= data.min_len() {
            return Err(Error::InvalidArgument(format!(
                "max lag {k} must be below the shortest sequence length {}",
                data.min_len()
            )));
        }
        let autoencode = self.config.autoencode;
        let latent = self.config.latent_dim;
        let probe = self.clone();
        let history = run_training(
            &mut self.params,
            &probe.config.train,
            |rng| {
                let lag = if autoencode { 1 } else { rng.random_range(1..=k) };
                let span = if autoencode { 1 } else { lag + 1 };
                let (s, t) = data.sample_window(rng, span);
                let w = data.window(s, t, span);
                VaeSample {
                    input: w[0].clone(),
                    target: w[span - 1].clone(),
                    lag,
                    eps: (0..latent).map(|_| rng.sample(StandardNormal)).collect(),
                }
            },
            |p, s| probe.loss_and_grad(p, s),
        )?;
        self.loss_history.extend(history);
        Ok(())
    }

    pub(crate) fn to_checkpoint(&self) -> CheckpointFile {
        let mut file = CheckpointFile::new(KIND_TAG, self.config.to_kv());
        write_common(&mut file, &self.stats, &self.loss_history, &self.params);
        file
    }

    pub(crate) fn from_checkpoint(file: &CheckpointFile) -> Result<Self> {
        let config = VaeConfig::from_kv(&file.config)?;
        let (stats, history) = read_common(file)?;
        let mut model = VaeModel::new(config, stats)?;
        file.load_params("param/", &mut model.params)?;
        model.loss_history = history;
        Ok(model)
    }
}

pub fn vae_train(dataset: &[KeypointSequence], config: VaeConfig) -> Result<VaeModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("vae training set has no sequences".into()));
    }
    let stats = NormalizationStats::fit(dataset, "vae training split")?;
    let data = TrainingSet::from_sequences(dataset, &stats)?;
    let mut model = VaeModel::new(config, stats)?;
    model.fit(&data)?;
    Ok(model)
}

/// Forecasts `horizon` frames from the last context frame alone.
pub fn vae_predict_block(
    model: &VaeModel,
    context: &[FrameVector],
    horizon: usize,
) -> Result<Vec<FrameVector>> {
    model.predict_block(context, context.len(), horizon)
}

impl Predictor for VaeModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Vae
    }

    fn predict_block(
        &self,
        context: &[FrameVector],
        start: usize,
        horizon: usize,
    ) -> Result<Vec<FrameVector>> {
        require_context(context)?;
        ensure_dim("vae model width", FRAME_DIM, self.config.input_dim)?;
        let x = self.stats.normalize(&context[context.len() - 1])?;
        let mode = match self.mode {
            PredictMode::Sample { seed } => PredictMode::Sample {
                seed: seed ^ start as u64,
            },
            m => m,
        };
        let out = self.predict_normalized(&x, horizon, mode)?;
        out.iter().map(|y| denormalize(&self.stats, y)).collect()
    }

    fn max_horizon(&self) -> Option<usize> {
        Some(self.config.max_lag)
    }
}
