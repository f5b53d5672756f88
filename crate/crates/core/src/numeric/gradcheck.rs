//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamId, ParamStore};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&Probe> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `loss`'s analytic gradient with `(L(p+h) - L(p-h)) / 2h` at
/// `probes` parameter entries drawn uniformly over all scalars. When `probes`
/// is at least the parameter count every entry is checked.
///
/// `loss` must be deterministic; parameter values are restored afterwards.
pub fn grad_check<F>(
    params: &mut ParamStore,
    loss: F,
    probes: usize,
    seed: u64,
    step: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, Gradients)>,
{
    let (_, grads) = loss(params)?;
    let mut index: Vec<(ParamId, usize)> = params
        .ids()
        .flat_map(|id| (0..params.value(id).len()).map(move |i| (id, i)))
        .collect();
    if probes < index.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index = (0..probes)
            .map(|_| index[rng.random_range(0..index.len())])
            .collect();
    }

    let mut out = Vec::with_capacity(index.len());
    let mut max_rel_error: f64 = 0.0;
    for (id, i) in index {
        let original = params.value(id).data()[i];
        params.value_mut(id).data_mut()[i] = original + step;
        let plus = loss(params)?.0;
        params.value_mut(id).data_mut()[i] = original - step;
        let minus = loss(params)?.0;
        params.value_mut(id).data_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads.entry(id, i);
        let rel_error = relative_error(analytic, numeric);
        max_rel_error = max_rel_error.max(rel_error);
        out.push(Probe {
            param: params.name(id).to_string(),
            index: i,
            analytic,
            numeric,
            rel_error,
        });
    }
    Ok(GradCheckReport {
        max_rel_error,
        probes: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::tape::Tape;
    use crate::numeric::tensor::Tensor2;

    #[test]
    fn linear_least_squares_is_exact() {
        // loss = mean((W x + b - y)^2)
        let mut s = ParamStore::new();
        let w = s
            .add("w", Tensor2::from_vec(2, 3, vec![0.3, -0.2, 0.5, 1.1, 0.4, -0.7]).unwrap())
            .unwrap();
        let b = s.add("b", Tensor2::column(vec![0.1, -0.3]).unwrap()).unwrap();
        let loss = |p: &ParamStore| {
            let mut t = Tape::new(p);
            let x = t.input(&[1.0, -2.0, 0.5]);
            let y = t.input(&[0.2, 0.9]);
            let pred = t.affine(w, Some(b), x);
            let l = t.mean_squared_error(pred, y);
            Ok((t.scalar(l), t.backward(l)?))
        };
        let report = grad_check(&mut s, loss, usize::MAX, 0, DEFAULT_STEP).unwrap();
        assert_eq!(report.probes.len(), 8);
        assert!(report.max_rel_error < 1e-8, "{:?}", report.worst());
    }

    #[test]
    fn every_tape_op_passes() {
        let mut s = ParamStore::new();
        let a = s
            .add("a", Tensor2::column(vec![0.3, -0.6, 0.9, 0.2]).unwrap())
            .unwrap();
        let b = s
            .add("b", Tensor2::column(vec![-0.4, 0.1, 0.7, -0.5]).unwrap())
            .unwrap();
        let loss = |p: &ParamStore| {
            let mut t = Tape::new(p);
            let av = t.param(a);
            let bv = t.param(b);
            let th = t.tanh(av);
            let sg = t.sigmoid(bv);
            let e = t.exp(bv);
            let r = t.relu(av);
            let m = t.mul(th, sg);
            let om = t.one_minus(m);
            let sc = t.scale(om, 1.7);
            let cl = t.clamp_min(bv, -0.45);
            let cat = t.concat(&[sc, e]);
            let sl = t.slice(cat, 2, 4);
            let d = t.sub(sl, r);
            let z = t.reparameterize(av, bv, &[0.3, -1.2, 0.8, 0.1]);
            let nll = t.gaussian_nll(d, z, cl);
            let kl = t.gaussian_kl(av, bv, th, sg);
            let ss = t.sum_squares(d);
            let mse = t.mean_squared_error(z, e);
            let s2 = t.sum(th);
            let total = t.add_all(&[nll, kl, ss, mse, s2]);
            Ok((t.scalar(total), t.backward(total)?))
        };
        let report = grad_check(&mut s, loss, usize::MAX, 0, DEFAULT_STEP).unwrap();
        assert!(report.max_rel_error < 1e-6, "{:?}", report.worst());
    }
}
