//! Trains the recurrent forecaster on periodic motion and compares one
//! predicted block with the persistence baseline.

use kpstream::eval::keypoint_mse;
use kpstream::keypoint::synth::{synth_periodic, SynthParams};
use kpstream::predictor::{rnn_predict_block, rnn_train, RnnConfig, TrainOptions};

fn main() -> kpstream::Result<()> {
    let seqs = synth_periodic(3, 12, 100, 25.0, &SynthParams::default())?;
    let (train, held_out) = seqs.split_at(10);
    let config = RnnConfig {
        k_in: 6,
        k_out: 6,
        train: TrainOptions { steps: 200, ..TrainOptions::default() },
        ..RnnConfig::default()
    };
    let model = rnn_train(train, config)?;
    let h = &model.loss_history;
    println!("loss {:.4} -> {:.4} over {} steps", h[0], h[h.len() - 1], h.len());

    let v = held_out[0].vectors();
    let (context, truth) = (&v[40..46], &v[46..52]);
    let pred = rnn_predict_block(&model, context, 6)?;
    let norm = |xs: &[_]| xs.iter().map(|x| model.stats.normalize(x)).collect::<kpstream::Result<Vec<_>>>();
    println!("rnn block mse         {:.4}", keypoint_mse(&norm(&pred)?, &norm(truth)?)?);
    println!("persistence block mse {:.4}", keypoint_mse(&norm(&[context[5]; 6])?, &norm(truth)?)?);
    Ok(())
}
