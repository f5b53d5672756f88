//! Variational recurrent forecaster: a conditional prior, posterior and
//! emission that all read the previous hidden state, and a recurrence over
//! both the frame and latent features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::checkpoint::{read_common, write_common};
use super::rnn::{denormalize, join_usize, normalize_all};
use super::train::{run_training, TrainOptions, TrainingSet};
use super::{require_context, ModelKind, PredictMode, Predictor, StreamPredictor};
use crate::error::{ensure_dim, Error, Result};
use crate::keypoint::{FrameVector, KeypointSequence, NormalizationStats, FRAME_DIM};
use crate::kv::KvMap;
use crate::numeric::{
    Activation, CellKind, CheckpointFile, DiagGaussian, GaussianHead, Gradients, Mlp, ParamInit,
    ParamStore, RecurrentCell, Tape, Var,
};

pub const KIND_TAG: [u8; 4] = *b"VRN1";

pub const DECODER_LOG_VAR_FLOOR: f64 = -10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VrnnConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Output width of the frame and latent feature networks.
    pub feature_dim: usize,
    /// Hidden widths shared by every feature, prior, encoder and decoder net.
    pub phi_hidden: Vec<usize>,
    pub cell: CellKind,
    pub k_in: usize,
    pub k_out: usize,
    pub train: TrainOptions,
}

impl Default for VrnnConfig {
    fn default() -> Self {
        VrnnConfig {
            input_dim: FRAME_DIM,
            hidden_dim: 128,
            latent_dim: 32,
            feature_dim: 64,
            phi_hidden: vec![64],
            cell: CellKind::Gated,
            k_in: 5,
            k_out: 5,
            train: TrainOptions::default(),
        }
    }
}

impl VrnnConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.input_dim, self.hidden_dim, self.latent_dim, self.feature_dim].contains(&0)
            || self.phi_hidden.contains(&0)
        {
            return Err(Error::InvalidArgument("vrnn dimensions must be positive".into()));
        }
        if self.k_in == 0 || self.k_out == 0 {
            return Err(Error::InvalidArgument("vrnn k_in and k_out must be positive".into()));
        }
        self.train.validate()
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new("vrnn config");
        kv.set("input_dim", self.input_dim);
        kv.set("hidden_dim", self.hidden_dim);
        kv.set("latent_dim", self.latent_dim);
        kv.set("feature_dim", self.feature_dim);
        kv.set("phi_hidden", join_usize(&self.phi_hidden));
        kv.set("cell", self.cell);
        kv.set("k_in", self.k_in);
        kv.set("k_out", self.k_out);
        self.train.write_kv(&mut kv);
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = VrnnConfig::default();
        let k: Option<usize> = kv.parse_value("k")?;
        let cfg = VrnnConfig {
            input_dim: kv.parse_or("input_dim", d.input_dim)?,
            hidden_dim: kv.parse_or("hidden_dim", d.hidden_dim)?,
            latent_dim: kv.parse_or("latent_dim", d.latent_dim)?,
            feature_dim: kv.parse_or("feature_dim", d.feature_dim)?,
            phi_hidden: kv.parse_list("phi_hidden")?.unwrap_or(d.phi_hidden),
            cell: kv.parse_or("cell", d.cell)?,
            k_in: kv.parse_or("k_in", k.unwrap_or(d.k_in))?,
            k_out: kv.parse_or("k_out", k.unwrap_or(d.k_out))?,
            train: TrainOptions::from_kv(kv)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VrnnState {
    pub h: Vec<f64>,
}

impl VrnnState {
    pub fn zeros(hidden_dim: usize) -> Self {
        VrnnState {
            h: vec![0.0; hidden_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct VrnnNet {
    phi_x: Mlp,
    phi_z: Mlp,
    prior: GaussianHead,
    encoder: GaussianHead,
    decoder: GaussianHead,
    cell: RecurrentCell,
}

impl VrnnNet {
    fn posterior(&self, tape: &mut Tape<'_>, fx: Var, h: Var) -> (Var, Var) {
        let input = tape.concat(&[fx, h]);
        self.encoder.forward(tape, input)
    }

    fn emission(&self, tape: &mut Tape<'_>, fz: Var, h: Var) -> (Var, Var) {
        let input = tape.concat(&[fz, h]);
        self.decoder.forward(tape, input)
    }

    fn recur(&self, tape: &mut Tape<'_>, fx: Var, fz: Var, h: Var) -> Var {
        let input = tape.concat(&[fx, fz]);
        self.cell.step(tape, input, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VrnnModel {
    pub config: VrnnConfig,
    pub params: ParamStore,
    pub stats: NormalizationStats,
    pub loss_history: Vec<f64>,
    pub mode: PredictMode,
    net: VrnnNet,
}

/// Per-timestep terms of the sequence loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub kl: f64,
    pub nll: f64,
}

impl VrnnModel {
    pub fn new(config: VrnnConfig, stats: NormalizationStats) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
        let mut init = ParamInit::new(&mut params, &mut rng);
        let c = &config;
        let tanh = Activation::Tanh;
        let net = VrnnNet {
            phi_x: Mlp::new(&mut init, "vrnn.phi_x", c.input_dim, &c.phi_hidden, c.feature_dim, tanh, tanh)?,
            phi_z: Mlp::new(&mut init, "vrnn.phi_z", c.latent_dim, &c.phi_hidden, c.feature_dim, tanh, tanh)?,
            prior: GaussianHead::new(&mut init, "vrnn.prior", c.hidden_dim, &c.phi_hidden, c.latent_dim, None)?,
            encoder: GaussianHead::new(
                &mut init,
                "vrnn.enc",
                c.feature_dim + c.hidden_dim,
                &c.phi_hidden,
                c.latent_dim,
                None,
            )?,
            decoder: GaussianHead::new(
                &mut init,
                "vrnn.dec",
                c.feature_dim + c.hidden_dim,
                &c.phi_hidden,
                c.input_dim,
                Some(DECODER_LOG_VAR_FLOOR),
            )?,
            cell: RecurrentCell::new(&mut init, "vrnn.rnn", c.cell, 2 * c.feature_dim, c.hidden_dim)?,
        };
        Ok(VrnnModel {
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

    fn check_state(&self, state: &VrnnState) -> Result<()> {
        ensure_dim("vrnn state", self.config.hidden_dim, state.h.len())
    }

    /// Conditional prior `p(z_t | h_{t-1})`.
    pub fn prior(&self, state: &VrnnState) -> Result<DiagGaussian> {
        self.check_state(state)?;
        let mut tape = Tape::new(&self.params);
        let h = tape.input(&state.h);
        let (m, lv) = self.net.prior.forward(&mut tape, h);
        DiagGaussian::new(tape.value(m).to_vec(), tape.value(lv).to_vec())
    }

    /// Approximate posterior `q(z_t | x_t, h_{t-1})`.
    pub fn posterior(&self, state: &VrnnState, x: &[f64]) -> Result<DiagGaussian> {
        self.check_state(state)?;
        ensure_dim("vrnn_posterior input", self.config.input_dim, x.len())?;
        let mut tape = Tape::new(&self.params);
        let h = tape.input(&state.h);
        let xv = tape.input(x);
        let fx = self.net.phi_x.forward(&mut tape, xv);
        let (m, lv) = self.net.posterior(&mut tape, fx, h);
        DiagGaussian::new(tape.value(m).to_vec(), tape.value(lv).to_vec())
    }

    /// Emission `p(x_t | z_t, h_{t-1})`.
    pub fn generate(&self, state: &VrnnState, z: &[f64]) -> Result<DiagGaussian> {
        self.check_state(state)?;
        ensure_dim("vrnn_generate latent", self.config.latent_dim, z.len())?;
        let mut tape = Tape::new(&self.params);
        let h = tape.input(&state.h);
        let zv = tape.input(z);
        let fz = self.net.phi_z.forward(&mut tape, zv);
        let (m, lv) = self.net.emission(&mut tape, fz, h);
        DiagGaussian::new(tape.value(m).to_vec(), tape.value(lv).to_vec())
    }

    /// `h_t = f(phi_x(x_t), phi_z(z_t), h_{t-1})`.
    pub fn recur(&self, state: &VrnnState, x: &[f64], z: &[f64]) -> Result<VrnnState> {
        self.check_state(state)?;
        ensure_dim("vrnn_recur input", self.config.input_dim, x.len())?;
        ensure_dim("vrnn_recur latent", self.config.latent_dim, z.len())?;
        let mut tape = Tape::new(&self.params);
        let h = tape.input(&state.h);
        let xv = tape.input(x);
        let zv = tape.input(z);
        let fx = self.net.phi_x.forward(&mut tape, xv);
        let fz = self.net.phi_z.forward(&mut tape, zv);
        let next = self.net.recur(&mut tape, fx, fz, h);
        Ok(VrnnState {
            h: tape.value(next).to_vec(),
        })
    }

    fn check_sequence(&self, seq: &[Vec<f64>], eps: &[Vec<f64>]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::InvalidArgument("vrnn loss over an empty sequence".into()));
        }
        if seq.len() != eps.len() {
            return Err(Error::InvalidArgument(format!(
                "{} frames but {} eps draws",
                seq.len(),
                eps.len()
            )));
        }
        for (x, e) in seq.iter().zip(eps) {
            ensure_dim("vrnn_loss frame", self.config.input_dim, x.len())?;
            ensure_dim("vrnn_loss eps", self.config.latent_dim, e.len())?;
        }
        Ok(())
    }

    fn record_loss(&self, tape: &mut Tape<'_>, seq: &[Vec<f64>], eps: &[Vec<f64>]) -> Vec<(Var, Var)> {
        let net = &self.net;
        let mut h = tape.constant(0.0, self.config.hidden_dim);
        let mut terms = Vec::with_capacity(seq.len());
        for (x, e) in seq.iter().zip(eps) {
            let xv = tape.input(x);
            let fx = net.phi_x.forward(tape, xv);
            let (pm, plv) = net.prior.forward(tape, h);
            let (qm, qlv) = net.posterior(tape, fx, h);
            let z = tape.reparameterize(qm, qlv, e);
            let fz = net.phi_z.forward(tape, z);
            let (xm, xlv) = net.emission(tape, fz, h);
            let kl = tape.gaussian_kl(qm, qlv, pm, plv);
            let nll = tape.gaussian_nll(xv, xm, xlv);
            terms.push((kl, nll));
            h = net.recur(tape, fx, fz, h);
        }
        terms
    }

    /// Per-step KL and NLL of the single-sample sequence loss.
    pub fn loss_terms(&self, seq: &[Vec<f64>], eps: &[Vec<f64>]) -> Result<Vec<StepLoss>> {
        self.check_sequence(seq, eps)?;
        let mut tape = Tape::new(&self.params);
        Ok(self
            .record_loss(&mut tape, seq, eps)
            .into_iter()
            .map(|(kl, nll)| StepLoss {
                kl: tape.scalar(kl),
                nll: tape.scalar(nll),
            })
            .collect())
    }

    /// Sum over timesteps of `KL(q_t || p_t) + NLL(x_t)`.
    pub fn loss(&self, seq: &[Vec<f64>], eps: &[Vec<f64>]) -> Result<f64> {
        Ok(self.loss_terms(seq, eps)?.iter().map(|s| s.kl + s.nll).sum())
    }

    pub fn loss_and_grad(
        &self,
        params: &ParamStore,
        seq: &[Vec<f64>],
        eps: &[Vec<f64>],
    ) -> Result<(f64, Gradients)> {
        self.check_sequence(seq, eps)?;
        let mut tape = Tape::new(params);
        let terms: Vec<Var> = self
            .record_loss(&mut tape, seq, eps)
            .into_iter()
            .flat_map(|(kl, nll)| [kl, nll])
            .collect();
        let loss = tape.add_all(&terms);
        Ok((tape.scalar(loss), tape.backward(loss)?))
    }

    /// Warm up on posterior means, then roll out from the prior.
    pub fn predict_normalized(
        &self,
        context: &[Vec<f64>],
        horizon: usize,
        mode: PredictMode,
    ) -> Result<Vec<Vec<f64>>> {
        if context.is_empty() {
            return Err(Error::InvalidArgument("prediction context is empty".into()));
        }
        for x in context {
            ensure_dim("vrnn context frame", self.config.input_dim, x.len())?;
        }
        let mut rng = match mode {
            PredictMode::Mean => None,
            PredictMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        let mut tape = Tape::new(&self.params);
        let mut h = tape.constant(0.0, self.config.hidden_dim);
        for x in context {
            h = self.warm_step(&mut tape, x, h);
        }
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let (y, next) = self.rollout_step(&mut tape, h, rng.as_mut());
            out.push(y);
            h = next;
        }
        Ok(out)
    }

    fn warm_step(&self, tape: &mut Tape<'_>, x: &[f64], h: Var) -> Var {
        let xv = tape.input(x);
        let fx = self.net.phi_x.forward(tape, xv);
        let (qm, _) = self.net.posterior(tape, fx, h);
        let fz = self.net.phi_z.forward(tape, qm);
        self.net.recur(tape, fx, fz, h)
    }

    fn rollout_step(&self, tape: &mut Tape<'_>, h: Var, rng: Option<&mut ChaCha8Rng>) -> (Vec<f64>, Var) {
        let (pm, plv) = self.net.prior.forward(tape, h);
        let z = match rng {
            None => pm,
            Some(rng) => {
                let eps: Vec<f64> = (0..self.config.latent_dim)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                tape.reparameterize(pm, plv, &eps)
            }
        };
        let fz = self.net.phi_z.forward(tape, z);
        let (xm, _) = self.net.emission(tape, fz, h);
        let fx = self.net.phi_x.forward(tape, xm);
        let next = self.net.recur(tape, fx, fz, h);
        (tape.value(xm).to_vec(), next)
    }

    /// Trains on teacher-forced windows of `k_in + k_out` frames.
    pub fn fit(&mut self, data: &TrainingSet) -> Result<()> {
        ensure_dim("vrnn training data", self.config.input_dim, data.dim())?;
        let len = self.config.k_in + self.config.k_out;
        data.require_len(len, "a vrnn training window")?;
        let latent = self.config.latent_dim;
        let probe = self.clone();
        let history = run_training(
            &mut self.params,
            &probe.config.train,
            |rng| {
                let (s, t) = data.sample_window(rng, len);
                let eps: Vec<Vec<f64>> = (0..len)
                    .map(|_| (0..latent).map(|_| rng.sample(StandardNormal)).collect())
                    .collect();
                (s, t, eps)
            },
            |p, (s, t, eps)| probe.loss_and_grad(p, data.window(*s, *t, len), eps),
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
        let config = VrnnConfig::from_kv(&file.config)?;
        let (stats, history) = read_common(file)?;
        let mut model = VrnnModel::new(config, stats)?;
        file.load_params("param/", &mut model.params)?;
        model.loss_history = history;
        Ok(model)
    }
}

pub fn vrnn_train(dataset: &[KeypointSequence], config: VrnnConfig) -> Result<VrnnModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("vrnn training set has no sequences".into()));
    }
    let stats = NormalizationStats::fit(dataset, "vrnn training split")?;
    let data = TrainingSet::from_sequences(dataset, &stats)?;
    let mut model = VrnnModel::new(config, stats)?;
    model.fit(&data)?;
    Ok(model)
}

pub fn vrnn_predict_block(
    model: &VrnnModel,
    context: &[FrameVector],
    horizon: usize,
    mode: PredictMode,
) -> Result<Vec<FrameVector>> {
    require_context(context)?;
    ensure_dim("vrnn model width", FRAME_DIM, model.config.input_dim)?;
    let ctx = normalize_all(&model.stats, context)?;
    let out = model.predict_normalized(&ctx, horizon, mode)?;
    out.iter().map(|y| denormalize(&model.stats, y)).collect()
}

impl Predictor for VrnnModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Vrnn
    }

    fn predict_block(
        &self,
        context: &[FrameVector],
        start: usize,
        horizon: usize,
    ) -> Result<Vec<FrameVector>> {
        let mode = match self.mode {
            PredictMode::Sample { seed } => PredictMode::Sample {
                seed: seed ^ start as u64,
            },
            m => m,
        };
        vrnn_predict_block(self, context, horizon, mode)
    }

    fn stream(&self, _context_len: usize) -> Box<dyn StreamPredictor + '_> {
        Box::new(VrnnStream {
            model: self,
            h: vec![0.0; self.config.hidden_dim],
        })
    }
}

struct VrnnStream<'a> {
    model: &'a VrnnModel,
    h: Vec<f64>,
}

impl StreamPredictor for VrnnStream<'_> {
    fn observe(&mut self, frame: &FrameVector) -> Result<()> {
        let x = self.model.stats.normalize(frame)?;
        let mut tape = Tape::new(&self.model.params);
        let h = tape.input(&self.h);
        let next = self.model.warm_step(&mut tape, &x, h);
        self.h = tape.value(next).to_vec();
        Ok(())
    }

    fn predict(&mut self, start: usize, horizon: usize) -> Result<Vec<FrameVector>> {
        let mut rng = match self.model.mode {
            PredictMode::Mean => None,
            PredictMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed ^ start as u64)),
        };
        let mut tape = Tape::new(&self.model.params);
        let mut h = tape.input(&self.h);
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let (y, next) = self.model.rollout_step(&mut tape, h, rng.as_mut());
            out.push(denormalize(&self.model.stats, &y)?);
            h = next;
        }
        self.h = tape.value(h).to_vec();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{grad_check, DEFAULT_STEP};

    fn tiny(cell: CellKind) -> VrnnModel {
        let cfg = VrnnConfig {
            input_dim: 6,
            hidden_dim: 8,
            latent_dim: 4,
            feature_dim: 5,
            phi_hidden: vec![5],
            cell,
            k_in: 3,
            k_out: 2,
            ..VrnnConfig::default()
        };
        VrnnModel::new(cfg, NormalizationStats::identity()).unwrap()
    }

    fn zero_prefix(m: &mut VrnnModel, prefix: &str) {
        let ids: Vec<_> = m
            .params
            .ids()
            .filter(|&id| m.params.name(id).starts_with(prefix))
            .collect();
        for id in ids {
            m.params.value_mut(id).fill(0.0);
        }
    }

    fn seq(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn zero_nets_give_unit_gaussians_and_bias_emission() {
        let mut m = tiny(CellKind::Gated);
        zero_prefix(&mut m, "vrnn.prior");
        zero_prefix(&mut m, "vrnn.enc");
        zero_prefix(&mut m, "vrnn.dec");
        let s = VrnnState { h: vec![0.5; 8] };
        assert_eq!(m.prior(&s).unwrap(), DiagGaussian::standard(4));
        assert_eq!(m.posterior(&s, &[0.3; 6]).unwrap(), DiagGaussian::standard(4));
        let bias = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        m.params.get_mut("vrnn.dec.mean.bias").unwrap().data_mut().copy_from_slice(&bias);
        assert_eq!(m.generate(&s, &[1.0, -2.0, 0.0, 3.0]).unwrap().mean, bias.to_vec());

        // both unit Gaussians: zero KL at every step
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = seq(&mut rng, 5, 6);
        let eps = seq(&mut rng, 5, 4);
        assert!(m.loss_terms(&x, &eps).unwrap().iter().all(|t| t.kl == 0.0));
    }

    #[test]
    fn zero_simple_cell_keeps_zero_state() {
        let mut m = tiny(CellKind::SimpleTanh);
        zero_prefix(&mut m, "vrnn.rnn");
        let s = m.recur(&VrnnState::zeros(8), &[0.7; 6], &[0.2; 4]).unwrap();
        assert_eq!(s.h, vec![0.0; 8]);
    }

    #[test]
    fn wiring_reads_only_the_documented_inputs() {
        let m = tiny(CellKind::Gated);
        let s1 = VrnnState { h: vec![0.1; 8] };
        let s2 = VrnnState { h: vec![-0.4; 8] };
        let (x1, x2) = ([0.2; 6], [-0.6; 6]);
        let (z1, z2) = ([0.5; 4], [-1.0; 4]);

        // prior reads h only
        assert_ne!(m.prior(&s1).unwrap(), m.prior(&s2).unwrap());
        // posterior reads x and h
        assert_ne!(m.posterior(&s1, &x1).unwrap(), m.posterior(&s1, &x2).unwrap());
        assert_ne!(m.posterior(&s1, &x1).unwrap(), m.posterior(&s2, &x1).unwrap());
        // emission reads z and h
        assert_ne!(m.generate(&s1, &z1).unwrap(), m.generate(&s1, &z2).unwrap());
        assert_ne!(m.generate(&s1, &z1).unwrap(), m.generate(&s2, &z1).unwrap());
        // recurrence reads x, z and h
        let base = m.recur(&s1, &x1, &z1).unwrap();
        assert_ne!(base, m.recur(&s1, &x2, &z1).unwrap());
        assert_ne!(base, m.recur(&s1, &x1, &z2).unwrap());
        assert_ne!(base, m.recur(&s2, &x1, &z1).unwrap());

        // severing the frame path makes the recurrence ignore x
        let mut cut = m.clone();
        zero_prefix(&mut cut, "vrnn.phi_x");
        assert_eq!(cut.recur(&s1, &x1, &z1).unwrap(), cut.recur(&s1, &x2, &z1).unwrap());
        assert_ne!(cut.recur(&s1, &x1, &z1).unwrap(), cut.recur(&s1, &x1, &z2).unwrap());
        let mut cut = m.clone();
        zero_prefix(&mut cut, "vrnn.phi_z");
        assert_eq!(cut.recur(&s1, &x1, &z1).unwrap(), cut.recur(&s1, &x1, &z2).unwrap());
        assert_ne!(cut.recur(&s1, &x1, &z1).unwrap(), cut.recur(&s1, &x2, &z1).unwrap());
    }

    #[test]
    fn posterior_hand_fixture() {
        let cfg = VrnnConfig {
            input_dim: 1,
            hidden_dim: 1,
            latent_dim: 1,
            feature_dim: 1,
            phi_hidden: vec![],
            cell: CellKind::SimpleTanh,
            ..VrnnConfig::default()
        };
        let mut m = VrnnModel::new(cfg, NormalizationStats::identity()).unwrap();
        let ids: Vec<_> = m.params.ids().collect();
        for id in ids {
            m.params.value_mut(id).fill(0.0);
        }
        let mut set = |name: &str, v: &[f64]| {
            m.params.get_mut(name).unwrap().data_mut().copy_from_slice(v);
        };
        // phi_x(x) = tanh(2x); enc input [phi_x, h]
        set("vrnn.phi_x.0.weight", &[2.0]);
        set("vrnn.enc.mean.weight", &[1.0, 3.0]);
        set("vrnn.enc.log_var.weight", &[0.0, -1.0]);
        set("vrnn.enc.log_var.bias", &[0.25]);
        let q = m.posterior(&VrnnState { h: vec![0.5] }, &[0.1]).unwrap();
        assert_eq!(q.mean, vec![0.2f64.tanh() + 1.5]);
        assert_eq!(q.log_var, vec![-0.5 + 0.25]);
    }

    #[test]
    fn single_step_loss_is_vae_style() {
        let m = tiny(CellKind::Gated);
        let x = vec![vec![0.3, -0.1, 0.4, 0.0, 0.9, -0.5]];
        let eps = vec![vec![0.2, -0.3, 0.1, 0.5]];
        let h0 = VrnnState::zeros(8);
        let q = m.posterior(&h0, &x[0]).unwrap();
        let p = m.prior(&h0).unwrap();
        let z = q.reparameterize(&eps[0]).unwrap();
        let g = m.generate(&h0, &z).unwrap();
        let expect = crate::numeric::gaussian_kl(&q, &p).unwrap()
            + crate::numeric::gaussian_nll(&x[0], &g).unwrap();
        assert!((m.loss(&x, &eps).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn loss_is_causal_and_kl_nonnegative() {
        let m = tiny(CellKind::Gated);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = seq(&mut rng, 5, 6);
        let eps = seq(&mut rng, 5, 4);
        let base = m.loss_terms(&x, &eps).unwrap();
        assert!(base.iter().all(|t| t.kl >= 0.0));
        let mut changed = x.clone();
        changed[3] = vec![2.0; 6];
        let after = m.loss_terms(&changed, &eps).unwrap();
        assert_eq!(base[..3], after[..3]);
        assert_ne!(base[3], after[3]);
        assert!(m.loss(&x, &eps[..4]).is_err());
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        for cell in [CellKind::Gated, CellKind::SimpleTanh] {
            let mut m = tiny(cell);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let x = seq(&mut rng, 5, 6);
            let eps = seq(&mut rng, 5, 4);
            let probe = m.clone();
            let report = grad_check(
                &mut m.params,
                |p| probe.loss_and_grad(p, &x, &eps),
                usize::MAX,
                0,
                DEFAULT_STEP,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{cell}: {:?}", report.worst());
        }
    }

    #[test]
    fn mean_rollout_is_deterministic_and_streaming_matches() {
        let m = tiny(CellKind::Gated);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ctx = seq(&mut rng, 3, 6);
        let a = m.predict_normalized(&ctx, 2, PredictMode::Mean).unwrap();
        assert_eq!(a, m.predict_normalized(&ctx, 2, PredictMode::Mean).unwrap());

        // k = 1: one prior mean, one emission mean
        let mut s = VrnnState::zeros(8);
        for x in &ctx {
            let z = m.posterior(&s, x).unwrap().mean;
            s = m.recur(&s, x, &z).unwrap();
        }
        let z = m.prior(&s).unwrap().mean;
        let y = m.generate(&s, &z).unwrap().mean;
        assert_eq!(a[0], y);
        let s2 = m.recur(&s, &y, &z).unwrap();
        let z2 = m.prior(&s2).unwrap().mean;
        assert_eq!(a[1], m.generate(&s2, &z2).unwrap().mean);

        let s1 = m.predict_normalized(&ctx, 2, PredictMode::Sample { seed: 1 }).unwrap();
        assert_eq!(s1, m.predict_normalized(&ctx, 2, PredictMode::Sample { seed: 1 }).unwrap());
        assert_ne!(s1, a);
    }
}
