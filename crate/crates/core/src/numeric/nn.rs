//! Layers built on the tape: dense layers, MLPs, Gaussian heads and the two
//! recurrent cells.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::params::{ParamId, ParamInit, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor2;
use crate::error::{ensure_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape<'_>, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng>(
        init: &mut ParamInit<'_, R>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        Ok(Dense {
            weight: init.weight(&format!("{name}.weight"), out_dim, in_dim)?,
            bias: init.bias(&format!("{name}.bias"), out_dim)?,
            activation,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let z = tape.affine(self.weight, Some(self.bias), x);
        self.activation.apply(tape, z)
    }
}

/// A stack of dense layers. `hidden` widths all use `hidden_activation`; the
/// last layer uses `output_activation`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new<R: Rng>(
        init: &mut ParamInit<'_, R>,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Dense::new(init, &format!("{name}.{i}"), prev, h, hidden_activation)?);
            prev = h;
        }
        layers.push(Dense::new(
            init,
            &format!("{name}.{}", hidden.len()),
            prev,
            out_dim,
            output_activation,
        )?);
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        self.layers.iter().fold(x, |h, layer| layer.forward(tape, h))
    }
}

/// A plain-value dense layer for [`mlp_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Evaluates `layers` on `x`, checking every shape along the chain.
pub fn mlp_forward(layers: &[DenseLayer], x: &[f64]) -> Result<Vec<f64>> {
    let mut store = ParamStore::new();
    let mut dims = x.len();
    let mut ids = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        ensure_dim("mlp layer input", layer.weight.cols(), dims)?;
        ensure_dim("mlp layer bias", layer.weight.rows(), layer.bias.len())?;
        dims = layer.weight.rows();
        let w = store.add(format!("{i}.weight"), layer.weight.clone())?;
        let b = store.add(format!("{i}.bias"), Tensor2::column(layer.bias.clone())?)?;
        ids.push((w, b, layer.activation));
    }
    let mut tape = Tape::new(&store);
    let mut h = tape.input(x);
    for (w, b, act) in ids {
        h = tape.affine(w, Some(b), h);
        h = act.apply(&mut tape, h);
    }
    Ok(tape.value(h).to_vec())
}

/// A trunk MLP followed by linear mean and log-variance heads.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub trunk: Option<Mlp>,
    pub mean: Dense,
    pub log_var: Dense,
    pub log_var_floor: Option<f64>,
}

impl GaussianHead {
    /// `hidden` empty means the heads read the input directly.
    pub fn new<R: Rng>(
        init: &mut ParamInit<'_, R>,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        log_var_floor: Option<f64>,
    ) -> Result<Self> {
        let (trunk, feat) = match hidden.split_last() {
            None => (None, in_dim),
            Some((&last, rest)) => (
                Some(Mlp::new(
                    init,
                    &format!("{name}.trunk"),
                    in_dim,
                    rest,
                    last,
                    Activation::Tanh,
                    Activation::Tanh,
                )?),
                last,
            ),
        };
        Ok(GaussianHead {
            trunk,
            mean: Dense::new(init, &format!("{name}.mean"), feat, out_dim, Activation::Identity)?,
            log_var: Dense::new(init, &format!("{name}.log_var"), feat, out_dim, Activation::Identity)?,
            log_var_floor,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.trunk.as_ref().map_or(self.mean.in_dim, Mlp::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.mean.out_dim
    }

    /// Returns `(mean, log_var)` nodes.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> (Var, Var) {
        let h = match &self.trunk {
            Some(t) => t.forward(tape, x),
            None => x,
        };
        let mean = self.mean.forward(tape, h);
        let mut log_var = self.log_var.forward(tape, h);
        if let Some(floor) = self.log_var_floor {
            log_var = tape.clamp_min(log_var, floor);
        }
        (mean, log_var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// GRU-style update and reset gates.
    Gated,
    /// `h' = tanh(W_x x + W_h h + b)`.
    SimpleTanh,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Gated => "gated",
            CellKind::SimpleTanh => "simple-tanh",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gated" | "gru" => Ok(CellKind::Gated),
            "simple-tanh" | "simple" | "tanh" => Ok(CellKind::SimpleTanh),
            other => Err(Error::InvalidArgument(format!("unknown cell kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Gate {
    input: ParamId,
    hidden: ParamId,
    bias: ParamId,
}

impl Gate {
    fn new<R: Rng>(init: &mut ParamInit<'_, R>, name: &str, in_dim: usize, hidden: usize) -> Result<Self> {
        Ok(Gate {
            input: init.weight(&format!("{name}.w_input"), hidden, in_dim)?,
            hidden: init.weight(&format!("{name}.w_hidden"), hidden, hidden)?,
            bias: init.bias(&format!("{name}.bias"), hidden)?,
        })
    }

    fn preactivation(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Var {
        let a = tape.affine(self.input, Some(self.bias), x);
        let b = tape.affine(self.hidden, None, h);
        tape.add(a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecurrentCell {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    gates: Vec<Gate>,
}

impl RecurrentCell {
    pub fn new<R: Rng>(
        init: &mut ParamInit<'_, R>,
        name: &str,
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Result<Self> {
        let gates = match kind {
            CellKind::SimpleTanh => vec![Gate::new(init, &format!("{name}.cell"), input_dim, hidden_dim)?],
            CellKind::Gated => vec![
                Gate::new(init, &format!("{name}.reset"), input_dim, hidden_dim)?,
                Gate::new(init, &format!("{name}.update"), input_dim, hidden_dim)?,
                Gate::new(init, &format!("{name}.candidate"), input_dim, hidden_dim)?,
            ],
        };
        Ok(RecurrentCell {
            kind,
            input_dim,
            hidden_dim,
            gates,
        })
    }

    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Var {
        match self.kind {
            CellKind::SimpleTanh => {
                let pre = self.gates[0].preactivation(tape, x, h);
                tape.tanh(pre)
            }
            CellKind::Gated => {
                let (reset, update, cand) = (&self.gates[0], &self.gates[1], &self.gates[2]);
                let r_pre = reset.preactivation(tape, x, h);
                let r = tape.sigmoid(r_pre);
                let u_pre = update.preactivation(tape, x, h);
                let u = tape.sigmoid(u_pre);
                let cx = tape.affine(cand.input, Some(cand.bias), x);
                let ch = tape.affine(cand.hidden, None, h);
                let gated = tape.mul(r, ch);
                let n_pre = tape.add(cx, gated);
                let n = tape.tanh(n_pre);
                let keep = tape.mul(u, h);
                let one_minus_u = tape.one_minus(u);
                let fresh = tape.mul(one_minus_u, n);
                tape.add(fresh, keep)
            }
        }
    }
}
