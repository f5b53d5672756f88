//! Trains the variational recurrent network on switching motion and rolls
//! one block out from its prior, with means and with sampled latents.

use kpstream::keypoint::synth::{synth_switching, SwitchingParams};
use kpstream::predictor::{vrnn_predict_block, vrnn_train, PredictMode, TrainOptions, VrnnConfig};

fn main() -> kpstream::Result<()> {
    let data = synth_switching(11, 10, 80, 25.0, &SwitchingParams::default())?;
    let config = VrnnConfig {
        k_in: 5,
        k_out: 5,
        train: TrainOptions { steps: 150, ..TrainOptions::default() },
        ..VrnnConfig::default()
    };
    let model = vrnn_train(&data.sequences, config)?;
    let h = &model.loss_history;
    println!("negative ELBO {:.2} -> {:.2}", h[0], h[h.len() - 1]);

    let context = &data.sequences[0].vectors()[30..35];
    let mean = vrnn_predict_block(&model, context, 5, PredictMode::Mean)?;
    let sampled = vrnn_predict_block(&model, context, 5, PredictMode::Sample { seed: 1 })?;
    for (m, s) in mean.iter().zip(&sampled) {
        println!("x0 mean {:+.3}  sampled {:+.3}", m[0], s[0]);
    }
    Ok(())
}
