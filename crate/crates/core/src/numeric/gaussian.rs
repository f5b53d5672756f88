//! Diagonal Gaussians stored as `(mean, log_var)`.

use std::f64::consts::PI;

use crate::error::{ensure_dim, Error, Result};

/// `0.5 * ln(2 pi)`, the per-dimension NLL of a unit Gaussian at its mean.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        ensure_dim("gaussian log_var", mean.len(), log_var.len())?;
        if mean.iter().chain(&log_var).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "gaussian parameters".into(),
            });
        }
        Ok(DiagGaussian { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|lv| lv.exp()).collect()
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    /// `mean + exp(0.5 log_var) * eps`.
    pub fn reparameterize(&self, eps: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("reparameterize eps", self.dim(), eps.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_var)
            .zip(eps)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect())
    }

    /// Log density at `x`.
    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        gaussian_nll(x, self).map(|nll| -nll)
    }
}

/// Closed-form `KL(q || p)` between diagonal Gaussians.
pub fn gaussian_kl(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    ensure_dim("gaussian_kl", q.dim(), p.dim())?;
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let dm = q.mean[i] - p.mean[i];
        let ratio = (q.log_var[i] - p.log_var[i]).exp();
        kl += 0.5 * (p.log_var[i] - q.log_var[i] + ratio + dm * dm * (-p.log_var[i]).exp() - 1.0);
    }
    Ok(kl)
}

/// Negative log-likelihood of `x` under `g`.
pub fn gaussian_nll(x: &[f64], g: &DiagGaussian) -> Result<f64> {
    ensure_dim("gaussian_nll", g.dim(), x.len())?;
    let mut nll = 0.0;
    for i in 0..x.len() {
        let d = x[i] - g.mean[i];
        nll += 0.5 * ((2.0 * PI).ln() + g.log_var[i] + d * d * (-g.log_var[i]).exp());
    }
    Ok(nll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn g(mean: &[f64], var: &[f64]) -> DiagGaussian {
        DiagGaussian::new(mean.to_vec(), var.iter().map(|v| v.ln()).collect()).unwrap()
    }

    #[test]
    fn reparameterize_examples() {
        let q = g(&[1.0, 2.0], &[0.25, 4.0]);
        assert_eq!(q.reparameterize(&[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        let out = q.reparameterize(&[1.0, -1.0]).unwrap();
        assert!((out[0] - 1.5).abs() < 1e-15 && out[1].abs() < 1e-15);
        let unit = DiagGaussian::standard(3);
        assert_eq!(unit.reparameterize(&[0.3, -2.0, 1.0]).unwrap(), vec![0.3, -2.0, 1.0]);
        assert!(unit.reparameterize(&[0.0]).is_err());
    }

    #[test]
    fn kl_closed_forms() {
        let p = DiagGaussian::standard(1);
        assert!((gaussian_kl(&g(&[1.0], &[1.0]), &p).unwrap() - 0.5).abs() < 1e-12);
        let expected = 0.5 * (4.0 - 1.0 - 4f64.ln());
        assert!((gaussian_kl(&g(&[0.0], &[4.0]), &p).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.806853).abs() < 1e-6);
        let q = g(&[0.3, -1.0], &[0.5, 2.0]);
        assert_eq!(gaussian_kl(&q, &q).unwrap(), 0.0);
        assert!(gaussian_kl(&q, &p).is_err());
    }

    #[test]
    fn nll_closed_forms() {
        let unit = DiagGaussian::standard(1);
        assert!((gaussian_nll(&[0.0], &unit).unwrap() - 0.918939).abs() < 1e-6);
        assert!((gaussian_nll(&[1.0], &unit).unwrap() - 1.418939).abs() < 1e-6);
        let q = g(&[0.1, 0.2, -0.4], &[0.3, 1.5, 2.0]);
        let x = [0.7, -0.1, 0.0];
        let sum: f64 = (0..3)
            .map(|i| gaussian_nll(&x[i..=i], &g(&q.mean[i..=i], &q.variance()[i..=i])).unwrap())
            .sum();
        assert!((gaussian_nll(&x, &q).unwrap() - sum).abs() < 1e-12);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let q = g(&[0.4, -0.3, 1.0], &[0.6, 1.4, 0.8]);
        let p = g(&[0.0, 0.2, 0.5], &[1.0, 0.7, 1.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let eps: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let z = q.reparameterize(&eps).unwrap();
            acc += q.log_prob(&z).unwrap() - p.log_prob(&z).unwrap();
        }
        let mc = acc / n as f64;
        assert!((mc - gaussian_kl(&q, &p).unwrap()).abs() < 2e-2);
    }
}
