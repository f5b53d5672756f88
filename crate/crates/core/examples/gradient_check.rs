//! Finite-difference check of the VRNN's analytic gradient with frozen noise.

use kpstream::keypoint::NormalizationStats;
use kpstream::numeric::{grad_check, CellKind, DEFAULT_STEP};
use kpstream::predictor::{VrnnConfig, VrnnModel};

fn main() -> kpstream::Result<()> {
    let config = VrnnConfig {
        input_dim: 6,
        hidden_dim: 8,
        latent_dim: 4,
        cell: CellKind::SimpleTanh,
        ..VrnnConfig::default()
    };
    let mut model = VrnnModel::new(config, NormalizationStats::identity())?;
    let seq: Vec<Vec<f64>> = (0..5).map(|t| (0..6).map(|i| ((t * 6 + i) as f64 * 0.7).sin()).collect()).collect();
    let eps: Vec<Vec<f64>> = (0..5).map(|t| (0..4).map(|i| ((t + i) as f64).cos()).collect()).collect();
    let probe = model.clone();
    let report = grad_check(&mut model.params, |p| probe.loss_and_grad(p, &seq, &eps), 200, 0, DEFAULT_STEP)?;
    let worst = report.worst().expect("at least one probe");
    println!("max relative error {:.2e} over {} probes", report.max_rel_error, report.probes.len());
    println!("worst: {}[{}] analytic {:.6e} numeric {:.6e}", worst.param, worst.index, worst.analytic, worst.numeric);
    Ok(())
}
