//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] records operations during a forward pass over a borrowed
//! [`ParamStore`]. Weight matrices are read in place by [`Tape::affine`] and
//! never copied onto the tape. [`Tape::backward`] walks the record in reverse
//! and returns [`Gradients`] for every parameter that fed the loss.
//!
//! Shape errors inside the tape are programming errors and panic; the public
//! model operations validate their inputs before recording.

use std::f64::consts::PI;

use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Affine {
        weight: ParamId,
        bias: Option<ParamId>,
        x: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    ClampMin(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Sum(Var),
    SumSquares(Var),
    MeanSquaredError(Var, Var),
    Reparameterize {
        mean: Var,
        log_var: Var,
        eps: Vec<f64>,
    },
    GaussianNll {
        x: Var,
        mean: Var,
        log_var: Var,
    },
    GaussianKl {
        q_mean: Var,
        q_log_var: Var,
        p_mean: Var,
        p_log_var: Var,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        assert_eq!(value.len(), 1, "node is not a scalar");
        value[0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf.
    pub fn input(&mut self, values: &[f64]) -> Var {
        self.push(values.to_vec(), Op::Input)
    }

    pub fn constant(&mut self, value: f64, dim: usize) -> Var {
        self.push(vec![value; dim], Op::Input)
    }

    /// The flattened parameter tensor as a vector node.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.value(id).data().to_vec();
        self.push(value, Op::Param(id))
    }

    /// `weight * x + bias`.
    pub fn affine(&mut self, weight: ParamId, bias: Option<ParamId>, x: Var) -> Var {
        let w = self.params.value(weight);
        let xv = &self.nodes[x.0].value;
        assert_eq!(w.cols(), xv.len(), "affine: weight cols vs input");
        let mut out: Vec<f64> = w
            .data()
            .chunks_exact(w.cols())
            .map(|row| dot(row, xv))
            .collect();
        if let Some(b) = bias {
            let bv = self.params.value(b).data();
            assert_eq!(bv.len(), out.len(), "affine: bias length");
            for (o, bi) in out.iter_mut().zip(bv) {
                *o += bi;
            }
        }
        self.push(out, Op::Affine { weight, bias, x })
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise op on mismatched lengths");
        let out = av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect();
        self.push(out, op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.nodes[a.0].value.iter().map(|x| f(*x)).collect();
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    /// `max(a, floor)` elementwise; no gradient flows where the floor binds.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.map(a, |x| x.max(floor), Op::ClampMin(a, floor))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::with_capacity(parts.iter().map(|p| self.dim(*p)).sum());
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, offset: usize, len: usize) -> Var {
        let out = self.nodes[a.0].value[offset..offset + len].to_vec();
        self.push(out, Op::Slice(a, offset))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![s], Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().map(|x| x * x).sum();
        self.push(vec![s], Op::SumSquares(a))
    }

    /// Adds a list of scalars (or equal-length vectors).
    pub fn add_all(&mut self, terms: &[Var]) -> Var {
        assert!(!terms.is_empty(), "add_all of nothing");
        terms[1..].iter().fold(terms[0], |acc, &t| self.add(acc, t))
    }

    /// Mean over entries of `(a - b)^2`.
    pub fn mean_squared_error(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "mse on mismatched lengths");
        let n = av.len() as f64;
        let s = av.iter().zip(bv).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
        self.push(vec![s], Op::MeanSquaredError(a, b))
    }

    /// `mean + exp(0.5 log_var) * eps` with `eps` held constant.
    pub fn reparameterize(&mut self, mean: Var, log_var: Var, eps: &[f64]) -> Var {
        let (m, lv) = (&self.nodes[mean.0].value, &self.nodes[log_var.0].value);
        assert_eq!(m.len(), lv.len());
        assert_eq!(m.len(), eps.len(), "reparameterize: eps length");
        let out = (0..m.len())
            .map(|i| m[i] + (0.5 * lv[i]).exp() * eps[i])
            .collect();
        self.push(
            out,
            Op::Reparameterize {
                mean,
                log_var,
                eps: eps.to_vec(),
            },
        )
    }

    /// Scalar negative log-likelihood of `x` under `N(mean, exp(log_var))`.
    pub fn gaussian_nll(&mut self, x: Var, mean: Var, log_var: Var) -> Var {
        let (xv, m, lv) = (
            &self.nodes[x.0].value,
            &self.nodes[mean.0].value,
            &self.nodes[log_var.0].value,
        );
        assert!(xv.len() == m.len() && m.len() == lv.len(), "nll lengths");
        let ln_2pi = (2.0 * PI).ln();
        let s = (0..xv.len())
            .map(|i| {
                let d = xv[i] - m[i];
                0.5 * (ln_2pi + lv[i] + d * d * (-lv[i]).exp())
            })
            .sum();
        self.push(vec![s], Op::GaussianNll { x, mean, log_var })
    }

    /// Scalar closed-form `KL(q || p)`.
    pub fn gaussian_kl(&mut self, q_mean: Var, q_log_var: Var, p_mean: Var, p_log_var: Var) -> Var {
        let qm = &self.nodes[q_mean.0].value;
        let qlv = &self.nodes[q_log_var.0].value;
        let pm = &self.nodes[p_mean.0].value;
        let plv = &self.nodes[p_log_var.0].value;
        assert!(qm.len() == qlv.len() && qm.len() == pm.len() && pm.len() == plv.len());
        let s = (0..qm.len())
            .map(|i| {
                let d = qm[i] - pm[i];
                0.5 * (plv[i] - qlv[i] + (qlv[i] - plv[i]).exp() + d * d * (-plv[i]).exp() - 1.0)
            })
            .sum();
        self.push(
            vec![s],
            Op::GaussianKl {
                q_mean,
                q_log_var,
                p_mean,
                p_log_var,
            },
        )
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::NoForwardPass);
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::NoForwardPass);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::dim("backward loss", 1, self.nodes[loss.0].value.len()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::empty(self.params.len());

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    for (d, s) in out.slot(*id, g.len()).iter_mut().zip(&g) {
                        *d += s;
                    }
                }
                Op::Affine { weight, bias, x } => {
                    let w = self.params.value(*weight);
                    let cols = w.cols();
                    let xv = &self.nodes[x.0].value;
                    {
                        let gw = out.slot(*weight, w.len());
                        for (r, gr) in g.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            let row = &mut gw[r * cols..(r + 1) * cols];
                            for (dst, xc) in row.iter_mut().zip(xv) {
                                *dst += gr * xc;
                            }
                        }
                    }
                    if let Some(b) = bias {
                        for (d, s) in out.slot(*b, g.len()).iter_mut().zip(&g) {
                            *d += s;
                        }
                    }
                    let gx = acc(&mut grads, *x, cols);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        let row = &w.data()[r * cols..(r + 1) * cols];
                        for (dst, wc) in gx.iter_mut().zip(row) {
                            *dst += gr * wc;
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut grads, *b, g.len()), &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut grads, *b, g.len()), &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                    let gb = acc(&mut grads, *b, g.len());
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
                Op::Scale(a, c) => add_into(acc(&mut grads, *a, g.len()), &g, *c),
                Op::OneMinus(a) => add_into(acc(&mut grads, *a, g.len()), &g, -1.0),
                Op::Tanh(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Relu(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        if y[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                }
                Op::Exp(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i];
                    }
                }
                Op::ClampMin(a, floor) => {
                    let xv = &self.nodes[a.0].value;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        if xv[i] > *floor {
                            ga[i] += g[i];
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        add_into(acc(&mut grads, *p, len), &g[offset..offset + len], 1.0);
                        offset += len;
                    }
                }
                Op::Slice(a, offset) => {
                    let len = self.nodes[a.0].value.len();
                    let ga = acc(&mut grads, *a, len);
                    add_into(&mut ga[*offset..*offset + g.len()], &g, 1.0);
                }
                Op::Sum(a) => {
                    let len = self.nodes[a.0].value.len();
                    acc(&mut grads, *a, len).iter_mut().for_each(|d| *d += g[0]);
                }
                Op::SumSquares(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga = acc(&mut grads, *a, av.len());
                    for i in 0..av.len() {
                        ga[i] += 2.0 * av[i] * g[0];
                    }
                }
                Op::MeanSquaredError(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let n = av.len();
                    let c = 2.0 * g[0] / n as f64;
                    let diff: Vec<f64> = av.iter().zip(bv).map(|(x, y)| x - y).collect();
                    add_into(acc(&mut grads, *a, n), &diff, c);
                    add_into(acc(&mut grads, *b, n), &diff, -c);
                }
                Op::Reparameterize { mean, log_var, eps } => {
                    let lv = &self.nodes[log_var.0].value;
                    add_into(acc(&mut grads, *mean, g.len()), &g, 1.0);
                    let glv = acc(&mut grads, *log_var, g.len());
                    for i in 0..g.len() {
                        glv[i] += g[i] * 0.5 * (0.5 * lv[i]).exp() * eps[i];
                    }
                }
                Op::GaussianNll { x, mean, log_var } => {
                    let xv = &self.nodes[x.0].value;
                    let m = &self.nodes[mean.0].value;
                    let lv = &self.nodes[log_var.0].value;
                    let n = xv.len();
                    let scaled: Vec<f64> = (0..n).map(|i| (xv[i] - m[i]) * (-lv[i]).exp()).collect();
                    add_into(acc(&mut grads, *x, n), &scaled, g[0]);
                    add_into(acc(&mut grads, *mean, n), &scaled, -g[0]);
                    let glv = acc(&mut grads, *log_var, n);
                    for i in 0..n {
                        let d = xv[i] - m[i];
                        glv[i] += g[0] * 0.5 * (1.0 - d * d * (-lv[i]).exp());
                    }
                }
                Op::GaussianKl {
                    q_mean,
                    q_log_var,
                    p_mean,
                    p_log_var,
                } => {
                    let qm = &self.nodes[q_mean.0].value;
                    let qlv = &self.nodes[q_log_var.0].value;
                    let pm = &self.nodes[p_mean.0].value;
                    let plv = &self.nodes[p_log_var.0].value;
                    let n = qm.len();
                    let inv_pv: Vec<f64> = plv.iter().map(|v| (-v).exp()).collect();
                    let ratio: Vec<f64> = (0..n).map(|i| (qlv[i] - plv[i]).exp()).collect();
                    let dmean: Vec<f64> = (0..n).map(|i| (qm[i] - pm[i]) * inv_pv[i]).collect();
                    add_into(acc(&mut grads, *q_mean, n), &dmean, g[0]);
                    add_into(acc(&mut grads, *p_mean, n), &dmean, -g[0]);
                    let gq = acc(&mut grads, *q_log_var, n);
                    for i in 0..n {
                        gq[i] += g[0] * 0.5 * (ratio[i] - 1.0);
                    }
                    let gp = acc(&mut grads, *p_log_var, n);
                    for i in 0..n {
                        let d = qm[i] - pm[i];
                        gp[i] += g[0] * 0.5 * (1.0 - ratio[i] - d * d * inv_pv[i]);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn add_into(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// Eight independent partial sums let the compiler vectorize; the summation
// order is fixed, so results stay reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[f64; 8] = x.try_into().expect("chunk of 8");
        let y: &[f64; 8] = y.try_into().expect("chunk of 8");
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
        + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
        + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::tensor::Tensor2;

    fn store_with(values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let n = values.len();
        let id = s.add("p", Tensor2::from_vec(n, 1, values).unwrap()).unwrap();
        (s, id)
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_params() {
        let (s, id) = store_with(vec![0.5, -2.0, 3.0]);
        let mut t = Tape::new(&s);
        let p = t.param(id);
        let loss = t.sum_squares(p);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(id, &s), vec![1.0, -4.0, 6.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let (s, id) = store_with(vec![1.0, 2.0]);
        let mut t = Tape::new(&s);
        let c = t.constant(3.0, 1);
        let g = t.backward(c).unwrap();
        assert_eq!(g.get(id, &s), vec![0.0, 0.0]);
    }

    #[test]
    fn backward_requires_forward() {
        let s = ParamStore::new();
        let t = Tape::new(&s);
        assert!(matches!(t.backward(Var(0)), Err(Error::NoForwardPass)));
    }

    #[test]
    fn accumulation_across_calls() {
        let (mut s, id) = store_with(vec![1.0, -1.0]);
        for _ in 0..2 {
            let g = {
                let mut t = Tape::new(&s);
                let p = t.param(id);
                let loss = t.sum(p);
                t.backward(loss).unwrap()
            };
            s.accumulate(&g).unwrap();
        }
        assert_eq!(s.grad(id).data(), &[2.0, 2.0]);
        s.zero_grad();
        assert_eq!(s.grad(id).data(), &[0.0, 0.0]);
    }

    #[test]
    fn shared_node_gradients_add() {
        // loss = sum(p * p) through Mul with both operands the same node
        let (s, id) = store_with(vec![3.0]);
        let mut t = Tape::new(&s);
        let p = t.param(id);
        let sq = t.mul(p, p);
        let loss = t.sum(sq);
        assert_eq!(t.backward(loss).unwrap().get(id, &s), vec![6.0]);
    }
}
