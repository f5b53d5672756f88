//! Trains the lag-conditioned VAE and shows how its prediction depends only
//! on the last observed frame.

use kpstream::keypoint::synth::{synth_periodic, SynthParams};
use kpstream::predictor::{vae_predict_block, vae_train, TrainOptions, VaeConfig};

fn main() -> kpstream::Result<()> {
    let seqs = synth_periodic(5, 10, 80, 25.0, &SynthParams::default())?;
    let config = VaeConfig {
        max_lag: 5,
        train: TrainOptions { steps: 300, ..TrainOptions::default() },
        ..VaeConfig::default()
    };
    let model = vae_train(&seqs, config)?;
    let h = &model.loss_history;
    println!("negative ELBO {:.3} -> {:.3}", h[0], h[h.len() - 1]);

    let v = seqs[0].vectors();
    let short = vae_predict_block(&model, &v[19..20], 5)?;
    let long = vae_predict_block(&model, &v[10..20], 5)?;
    assert_eq!(short, long);
    for (lag, frame) in short.iter().enumerate() {
        println!("lag {}: keypoint 0 at ({:.3}, {:.3})", lag + 1, frame[0], frame[1]);
    }
    Ok(())
}
