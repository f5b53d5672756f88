//! One sender/receiver session over the in-memory channel, then a replay of
//! the recorded byte stream.

use kpstream::keypoint::synth::{synth_periodic, SynthParams};
use kpstream::keypoint::NormalizationStats;
use kpstream::predictor::PersistencePredictor;
use kpstream::protocol::{replay_transcript, simulate_session, SessionOptions};

fn main() -> kpstream::Result<()> {
    let seqs = synth_periodic(1, 4, 40, 25.0, &SynthParams::default())?;
    let stats = NormalizationStats::fit(&seqs, "example")?;
    let opts = SessionOptions {
        keep_transcript: true,
        ..SessionOptions::new(5)
    };
    let out = simulate_session(&seqs[0], &PersistencePredictor, &opts, &stats)?;
    let r = &out.report;
    println!("{} bytes of {} ({:.4})", r.bytes_sent, r.bytes_baseline, r.bandwidth_ratio);
    for e in r.frame_errors.iter().take(5) {
        println!("frame {:2}: mse {:.5}", e.frame, e.mse);
    }

    let transcript = out.transcript.expect("transcript was requested");
    let replayed = replay_transcript(&transcript, &PersistencePredictor, &opts)?;
    assert_eq!(replayed, out.reconstruction.vectors());
    println!("replayed {} frames from the transcript", replayed.len());
    Ok(())
}
