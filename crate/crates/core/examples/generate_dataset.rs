//! Writes a small switching-regime dataset and prints what the manifest holds.
//!
//!     cargo run --example generate_dataset -- /tmp/kp-data

use kpstream::keypoint::synth::{synth_switching, SwitchingParams};
use kpstream::keypoint::{DatasetManifest, Split};

fn main() -> kpstream::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "kp-data".into());
    let data = synth_switching(7, 12, 90, 25.0, &SwitchingParams::default())?;
    for n in 0..3 {
        println!("{}: {} regime switches", data.sequences[n].source_id, data.switch_count(n));
    }
    let (manifest, seqs) =
        DatasetManifest::write_dataset(&dir, "switching", data.sequences, Some("switching"), Some(7), 7)?;
    let train = seqs.iter().filter(|s| s.split == Split::Train).count();
    println!("wrote {} sequences to {dir} ({train} train)", manifest.entries.len());
    println!("x of keypoint 0: mean {:.4}, std {:.4}", manifest.stats.mean[0], manifest.stats.std[0]);
    Ok(())
}
