//! Deterministic recurrent forecaster trained on closed-loop block MSE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{read_common, write_common};
use super::train::{run_training, TrainOptions, TrainingSet};
use super::{require_context, ModelKind, Predictor, StreamPredictor};
use crate::error::{ensure_dim, Error, Result};
use crate::keypoint::{FrameVector, KeypointSequence, NormalizationStats, FRAME_DIM};
use crate::kv::KvMap;
use crate::numeric::{
    Activation, CellKind, CheckpointFile, Gradients, Mlp, ParamInit, ParamStore, RecurrentCell,
    Tape, Var,
};

pub const KIND_TAG: [u8; 4] = *b"RNN1";

#[derive(Debug, Clone, PartialEq)]
pub struct RnnConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub cell: CellKind,
    /// Hidden widths of the output head.
    pub head_hidden: Vec<usize>,
    /// Training windows are `k_in` teacher-forced frames then `k_out`
    /// closed-loop frames.
    pub k_in: usize,
    pub k_out: usize,
    pub train: TrainOptions,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            input_dim: FRAME_DIM,
            hidden_dim: 128,
            cell: CellKind::Gated,
            head_hidden: vec![128],
            k_in: 5,
            k_out: 5,
            train: TrainOptions::default(),
        }
    }
}

impl RnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.head_hidden.contains(&0) {
            return Err(Error::InvalidArgument("rnn dimensions must be positive".into()));
        }
        if self.k_in == 0 || self.k_out == 0 {
            return Err(Error::InvalidArgument("rnn k_in and k_out must be positive".into()));
        }
        self.train.validate()
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new("rnn config");
        kv.set("input_dim", self.input_dim);
        kv.set("hidden_dim", self.hidden_dim);
        kv.set("cell", self.cell);
        kv.set("head_hidden", join_usize(&self.head_hidden));
        kv.set("k_in", self.k_in);
        kv.set("k_out", self.k_out);
        self.train.write_kv(&mut kv);
        kv
    }

    /// Missing keys take their defaults.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = RnnConfig::default();
        let k: Option<usize> = kv.parse_value("k")?;
        let cfg = RnnConfig {
            input_dim: kv.parse_or("input_dim", d.input_dim)?,
            hidden_dim: kv.parse_or("hidden_dim", d.hidden_dim)?,
            cell: kv.parse_or("cell", d.cell)?,
            head_hidden: kv.parse_list("head_hidden")?.unwrap_or(d.head_hidden),
            k_in: kv.parse_or("k_in", k.unwrap_or(d.k_in))?,
            k_out: kv.parse_or("k_out", k.unwrap_or(d.k_out))?,
            train: TrainOptions::from_kv(kv)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn join_usize(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Hidden state `h_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnState {
    pub h: Vec<f64>,
}

impl RnnState {
    pub fn zeros(hidden_dim: usize) -> Self {
        RnnState {
            h: vec![0.0; hidden_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RnnNet {
    cell: RecurrentCell,
    head: Mlp,
}

impl RnnNet {
    fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Var {
        self.cell.step(tape, x, h)
    }

    fn emit(&self, tape: &mut Tape<'_>, h: Var) -> Var {
        self.head.forward(tape, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub config: RnnConfig,
    pub params: ParamStore,
    pub stats: NormalizationStats,
    pub loss_history: Vec<f64>,
    net: RnnNet,
}

impl RnnModel {
    /// Freshly initialized from `config.train.seed`.
    pub fn new(config: RnnConfig, stats: NormalizationStats) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
        let mut init = ParamInit::new(&mut params, &mut rng);
        let cell = RecurrentCell::new(&mut init, "rnn", config.cell, config.input_dim, config.hidden_dim)?;
        let head = Mlp::new(
            &mut init,
            "rnn.head",
            config.hidden_dim,
            &config.head_hidden,
            config.input_dim,
            Activation::Tanh,
            Activation::Identity,
        )?;
        Ok(RnnModel {
            config,
            params,
            stats,
            loss_history: Vec::new(),
            net: RnnNet { cell, head },
        })
    }

    /// `h_t = f(x_t, h_{t-1})` on a normalized input.
    pub fn step(&self, state: &RnnState, x: &[f64]) -> Result<RnnState> {
        ensure_dim("rnn_step input", self.config.input_dim, x.len())?;
        ensure_dim("rnn_step state", self.config.hidden_dim, state.h.len())?;
        let mut tape = Tape::new(&self.params);
        let xv = tape.input(x);
        let hv = tape.input(&state.h);
        let h = self.net.step(&mut tape, xv, hv);
        Ok(RnnState {
            h: tape.value(h).to_vec(),
        })
    }

    /// Point prediction `g(h_t)` of the next normalized frame.
    pub fn output(&self, state: &RnnState) -> Result<Vec<f64>> {
        ensure_dim("rnn_output state", self.config.hidden_dim, state.h.len())?;
        let mut tape = Tape::new(&self.params);
        let hv = tape.input(&state.h);
        let y = self.net.emit(&mut tape, hv);
        Ok(tape.value(y).to_vec())
    }

    /// Mean over the window's `len - 1` one-step predictions of
    /// `||x_hat - x||^2 / dim`. The first `k_in` inputs are ground truth; after
    /// that each prediction is fed back.
    pub fn window_loss(&self, params: &ParamStore, window: &[Vec<f64>]) -> Result<(f64, Gradients)> {
        window_loss(&self.net, &self.config, params, window, self.config.k_in)
    }

    /// Closed-loop rollout from normalized context.
    pub fn predict_normalized(&self, context: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
        if context.is_empty() {
            return Err(Error::InvalidArgument("prediction context is empty".into()));
        }
        for x in context {
            ensure_dim("rnn context frame", self.config.input_dim, x.len())?;
        }
        let mut tape = Tape::new(&self.params);
        let mut h = tape.constant(0.0, self.config.hidden_dim);
        for x in context {
            let xv = tape.input(x);
            h = self.net.step(&mut tape, xv, h);
        }
        let mut out = Vec::with_capacity(horizon);
        for i in 0..horizon {
            let y = self.net.emit(&mut tape, h);
            out.push(tape.value(y).to_vec());
            if i + 1 < horizon {
                h = self.net.step(&mut tape, y, h);
            }
        }
        Ok(out)
    }

    /// Trains in place on normalized data; appends to `loss_history`.
    pub fn fit(&mut self, data: &TrainingSet) -> Result<()> {
        ensure_dim("rnn training data", self.config.input_dim, data.dim())?;
        let len = self.config.k_in + self.config.k_out;
        data.require_len(len, "an rnn training window")?;
        let net = self.net.clone();
        let cfg = self.config.clone();
        let history = run_training(
            &mut self.params,
            &cfg.train,
            |rng| data.sample_window(rng, len),
            |p, &(s, t)| window_loss(&net, &cfg, p, data.window(s, t, len), cfg.k_in),
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
        let config = RnnConfig::from_kv(&file.config)?;
        let (stats, history) = read_common(file)?;
        let mut model = RnnModel::new(config, stats)?;
        file.load_params("param/", &mut model.params)?;
        model.loss_history = history;
        Ok(model)
    }
}

fn window_loss(
    net: &RnnNet,
    cfg: &RnnConfig,
    params: &ParamStore,
    window: &[Vec<f64>],
    k_in: usize,
) -> Result<(f64, Gradients)> {
    if window.len() < 2 {
        return Err(Error::InvalidArgument("rnn loss window needs at least 2 frames".into()));
    }
    for x in window {
        ensure_dim("rnn window frame", cfg.input_dim, x.len())?;
    }
    let mut tape = Tape::new(params);
    let mut h = tape.constant(0.0, cfg.hidden_dim);
    let mut fed_back: Option<Var> = None;
    let mut terms = Vec::with_capacity(window.len() - 1);
    for t in 0..window.len() - 1 {
        let x = match fed_back {
            Some(y) if t >= k_in => y,
            _ => tape.input(&window[t]),
        };
        h = net.step(&mut tape, x, h);
        let y = net.emit(&mut tape, h);
        let target = tape.input(&window[t + 1]);
        terms.push(tape.mean_squared_error(y, target));
        fed_back = Some(y);
    }
    let total = tape.add_all(&terms);
    let loss = tape.scale(total, 1.0 / terms.len() as f64);
    Ok((tape.scalar(loss), tape.backward(loss)?))
}

/// Fits normalization on `dataset` and trains a fresh model.
pub fn rnn_train(dataset: &[KeypointSequence], config: RnnConfig) -> Result<RnnModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("rnn training set has no sequences".into()));
    }
    let stats = NormalizationStats::fit(dataset, "rnn training split")?;
    let data = TrainingSet::from_sequences(dataset, &stats)?;
    let mut model = RnnModel::new(config, stats)?;
    model.fit(&data)?;
    Ok(model)
}

/// Warm up on `context` from the zero state, then roll out `horizon` frames.
pub fn rnn_predict_block(
    model: &RnnModel,
    context: &[FrameVector],
    horizon: usize,
) -> Result<Vec<FrameVector>> {
    model.predict_block(context, context.len(), horizon)
}

impl Predictor for RnnModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Rnn
    }

    fn predict_block(
        &self,
        context: &[FrameVector],
        _start: usize,
        horizon: usize,
    ) -> Result<Vec<FrameVector>> {
        require_context(context)?;
        ensure_dim("rnn model width", FRAME_DIM, self.config.input_dim)?;
        let ctx = normalize_all(&self.stats, context)?;
        let out = self.predict_normalized(&ctx, horizon)?;
        out.iter().map(|y| denormalize(&self.stats, y)).collect()
    }

    fn stream(&self, _context_len: usize) -> Box<dyn StreamPredictor + '_> {
        Box::new(RnnStream {
            model: self,
            state: RnnState::zeros(self.config.hidden_dim),
        })
    }
}

struct RnnStream<'a> {
    model: &'a RnnModel,
    state: RnnState,
}

impl StreamPredictor for RnnStream<'_> {
    fn observe(&mut self, frame: &FrameVector) -> Result<()> {
        let x = self.model.stats.normalize(frame)?;
        self.state = self.model.step(&self.state, &x)?;
        Ok(())
    }

    fn predict(&mut self, _start: usize, horizon: usize) -> Result<Vec<FrameVector>> {
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let y = self.model.output(&self.state)?;
            self.state = self.model.step(&self.state, &y)?;
            out.push(denormalize(&self.model.stats, &y)?);
        }
        Ok(out)
    }
}

pub(crate) fn normalize_all(stats: &NormalizationStats, frames: &[FrameVector]) -> Result<Vec<Vec<f64>>> {
    frames
        .iter()
        .map(|f| stats.normalize(f).map(|v| v.to_vec()))
        .collect()
}

pub(crate) fn denormalize(stats: &NormalizationStats, y: &[f64]) -> Result<FrameVector> {
    let out = stats.denormalize_slice(y)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "model prediction".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{grad_check, DEFAULT_STEP};
    use rand::Rng;

    fn small(cell: CellKind) -> RnnModel {
        let cfg = RnnConfig {
            input_dim: 2,
            hidden_dim: 3,
            cell,
            head_hidden: vec![],
            k_in: 2,
            k_out: 2,
            ..RnnConfig::default()
        };
        RnnModel::new(cfg, NormalizationStats::identity()).unwrap()
    }

    fn set(model: &mut RnnModel, name: &str, values: &[f64]) {
        model.params.get_mut(name).unwrap().data_mut().copy_from_slice(values);
    }

    fn zero_all(model: &mut RnnModel) {
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            model.params.value_mut(id).fill(0.0);
        }
    }

    #[test]
    fn zero_simple_cell_gives_zero_state() {
        let mut m = small(CellKind::SimpleTanh);
        zero_all(&mut m);
        let s = m.step(&RnnState::zeros(3), &[4.0, -7.0]).unwrap();
        assert_eq!(s.h, vec![0.0; 3]);
    }

    #[test]
    fn bias_only_cell_gives_tanh_bias() {
        let mut m = small(CellKind::SimpleTanh);
        zero_all(&mut m);
        set(&mut m, "rnn.cell.bias", &[0.5, -1.0, 2.0]);
        for x in [[0.0, 0.0], [3.0, -9.0]] {
            let s = m.step(&RnnState { h: vec![0.3, 0.1, -0.2] }, &x).unwrap();
            let expect = [0.5f64.tanh(), (-1.0f64).tanh(), 2.0f64.tanh()];
            assert_eq!(s.h, expect);
        }
    }

    #[test]
    fn bias_only_head_outputs_bias() {
        let mut m = small(CellKind::Gated);
        zero_all(&mut m);
        set(&mut m, "rnn.head.0.bias", &[0.25, -0.75]);
        let y = m.output(&RnnState { h: vec![1.0, 2.0, 3.0] }).unwrap();
        assert_eq!(y, vec![0.25, -0.75]);
    }

    #[test]
    fn hand_fixture() {
        // simple cell, 2-dim input, 3-dim state, linear head
        let mut m = small(CellKind::SimpleTanh);
        zero_all(&mut m);
        set(&mut m, "rnn.cell.w_input", &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
        set(&mut m, "rnn.cell.w_hidden", &[0.0; 9]);
        set(&mut m, "rnn.head.0.weight", &[1.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
        let s = m.step(&RnnState::zeros(3), &[0.2, -0.4]).unwrap();
        let h = [0.2f64.tanh(), (-0.4f64).tanh(), (-0.1f64).tanh()];
        assert_eq!(s.h, h);
        let y = m.output(&s).unwrap();
        assert_eq!(y, vec![h[0], h[1] + 2.0 * h[2]]);
    }

    #[test]
    fn streaming_equals_batch_and_is_causal() {
        let m = small(CellKind::Gated);
        let xs = [[0.1, 0.2], [-0.3, 0.5], [0.9, -0.1]];
        let mut s = RnnState::zeros(3);
        let mut states = Vec::new();
        for x in &xs {
            s = m.step(&s, x).unwrap();
            states.push(s.clone());
        }
        let ctx: Vec<Vec<f64>> = xs.iter().map(|x| x.to_vec()).collect();
        let batch = m.predict_normalized(&ctx, 1).unwrap();
        assert_eq!(batch[0], m.output(&states[2]).unwrap());

        // changing x_2 leaves the state after step 1 untouched
        let mut s2 = RnnState::zeros(3);
        for x in &[[0.1, 0.2], [-0.3, 0.5]] {
            s2 = m.step(&s2, x).unwrap();
        }
        assert_eq!(s2, states[1]);
    }

    #[test]
    fn horizon_one_is_single_step_from_one_frame() {
        let m = small(CellKind::Gated);
        let s = m.step(&RnnState::zeros(3), &[0.4, -0.2]).unwrap();
        let y = m.predict_normalized(&[vec![0.4, -0.2]], 1).unwrap();
        assert_eq!(y, vec![m.output(&s).unwrap()]);
    }

    #[test]
    fn rejects_bad_dims() {
        let m = small(CellKind::Gated);
        assert!(matches!(
            m.step(&RnnState::zeros(3), &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.predict_normalized(&[], 2).is_err());
    }

    #[test]
    fn window_loss_gradients_match_finite_differences() {
        for cell in [CellKind::Gated, CellKind::SimpleTanh] {
            let cfg = RnnConfig {
                input_dim: 6,
                hidden_dim: 8,
                cell,
                head_hidden: vec![8],
                k_in: 3,
                k_out: 2,
                ..RnnConfig::default()
            };
            let mut m = RnnModel::new(cfg, NormalizationStats::identity()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let window: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let probe = m.clone();
            let report = grad_check(
                &mut m.params,
                |p| probe.window_loss(p, &window),
                usize::MAX,
                0,
                DEFAULT_STEP,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{cell}: {:?}", report.worst());
        }
    }

    #[test]
    fn config_round_trips() {
        let cfg = RnnConfig {
            head_hidden: vec![],
            cell: CellKind::SimpleTanh,
            ..RnnConfig::default()
        };
        assert_eq!(RnnConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }
}
