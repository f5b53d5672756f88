use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm cap applied before the update; `None` disables it.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

/// One bias-corrected Adam update from the gradients stored in `params`.
/// Gradient buffers are left untouched; callers zero them between steps.
pub fn adam_step(params: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    for id in params.ids() {
        if !params.grad(id).is_finite() {
            return Err(Error::NonFiniteGradient(params.name(id).to_string()));
        }
    }
    let scale = match cfg.clip_norm {
        Some(cap) => {
            let norm = params.grad_norm();
            if norm > cap {
                cap / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };

    let (steps, slots) = params.optimizer_parts();
    *steps += 1;
    let t = *steps as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for slot in slots {
        for i in 0..slot.value.len() {
            let g = slot.grad[i] * scale;
            let m = cfg.beta1 * slot.first_moment[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * slot.second_moment[i] + (1.0 - cfg.beta2) * g * g;
            slot.first_moment[i] = m;
            slot.second_moment[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            slot.value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::tape::Tape;
    use crate::numeric::tensor::Tensor2;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor2::column(vec![v]).unwrap()).unwrap();
        s
    }

    fn set_grad(s: &mut ParamStore, g: f64) {
        let id = s.id("p").unwrap();
        s.zero_grad();
        let grads = {
            let mut t = Tape::new(s);
            let p = t.param(id);
            let l = t.scale(p, g);
            let l = t.sum(l);
            t.backward(l).unwrap()
        };
        s.accumulate(&grads).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(0.7);
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.get("p").unwrap().data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar_store(1.0);
        set_grad(&mut s, 1.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        adam_step(&mut s, &cfg).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((s.get("p").unwrap().data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn clipping_caps_global_norm() {
        // step 1: g = 1e6 clipped to 5; step 2: g = 1
        let mut s = scalar_store(0.0);
        set_grad(&mut s, 1e6);
        let cfg = AdamConfig::default();
        adam_step(&mut s, &cfg).unwrap();
        set_grad(&mut s, 1.0);
        adam_step(&mut s, &cfg).unwrap();

        let expected_after = |g1: f64| {
            let (b1, b2) = (cfg.beta1, cfg.beta2);
            let m1 = (1.0 - b1) * g1;
            let v1 = (1.0 - b2) * g1 * g1;
            let p1 = -cfg.lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + cfg.eps);
            let m2 = b1 * m1 + (1.0 - b1);
            let v2 = b2 * v1 + (1.0 - b2);
            p1 - cfg.lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + cfg.eps)
        };
        let got = s.get("p").unwrap().data()[0];
        assert!((got - expected_after(5.0)).abs() < 1e-15);
        assert!((got - expected_after(1e6)).abs() > 1e-5);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = scalar_store(0.0);
        set_grad(&mut s, f64::NAN);
        match adam_step(&mut s, &AdamConfig::default()) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "p"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identical_runs_have_identical_trajectories() {
        let run = || {
            let mut s = scalar_store(2.0);
            let mut traj = Vec::new();
            for _ in 0..50 {
                let p = s.get("p").unwrap().data()[0];
                set_grad(&mut s, 2.0 * p);
                adam_step(&mut s, &AdamConfig::default()).unwrap();
                traj.push(s.get("p").unwrap().data()[0].to_bits());
            }
            traj
        };
        assert_eq!(run(), run());
    }
}
