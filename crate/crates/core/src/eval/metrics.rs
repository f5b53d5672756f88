use crate::error::{Error, Result};
use crate::keypoint::{FrameVector, FRAME_DIM};

/// Per-frame feature width for the Fréchet keypoint distance: the 60 values
/// followed by their 60 first differences.
pub const FKD_FEATURES: usize = 2 * FRAME_DIM;

pub type FkdFeature = [f64; FKD_FEATURES];

/// Mean squared difference over the 60 dimensions of one frame.
pub fn frame_mse(a: &FrameVector, b: &FrameVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / FRAME_DIM as f64
}

/// Mean over frames and dimensions of the squared difference. Pass
/// normalized vectors to get the error in normalized keypoint space.
pub fn keypoint_mse(pred: &[FrameVector], truth: &[FrameVector]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot compare {} predicted frames against {} true frames",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let sum: f64 = pred.iter().zip(truth).map(|(a, b)| frame_mse(a, b)).sum();
    Ok(sum / pred.len() as f64)
}

/// Values plus first differences for every frame of `stream`; the difference
/// at the first frame is zero.
pub fn fkd_features(stream: &[FrameVector]) -> Vec<FkdFeature> {
    stream
        .iter()
        .enumerate()
        .map(|(t, v)| {
            let mut f = [0.0; FKD_FEATURES];
            f[..FRAME_DIM].copy_from_slice(v);
            if t > 0 {
                for (d, (x, p)) in f[FRAME_DIM..].iter_mut().zip(v.iter().zip(&stream[t - 1])) {
                    *d = x - p;
                }
            }
            f
        })
        .collect()
}

/// Diagonal Gaussian fit (mean, population variance) of feature rows.
pub fn diag_gaussian(features: &[FkdFeature]) -> Result<(FkdFeature, FkdFeature)> {
    if features.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Fréchet distance needs at least 2 frames, got {}",
            features.len()
        )));
    }
    let n = features.len() as f64;
    let mut mean = [0.0; FKD_FEATURES];
    for f in features {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; FKD_FEATURES];
    for f in features {
        for ((v, x), m) in var.iter_mut().zip(f).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    Ok((mean, var))
}

/// `|mu_a - mu_b|^2 + sum_i (sqrt(v_a,i) - sqrt(v_b,i))^2` between diagonal
/// Gaussian fits of two feature sets.
pub fn frechet_from_features(a: &[FkdFeature], b: &[FkdFeature]) -> Result<f64> {
    let (ma, va) = diag_gaussian(a)?;
    let (mb, vb) = diag_gaussian(b)?;
    let mean_term: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
    let var_term: f64 = va
        .iter()
        .zip(&vb)
        .map(|(x, y)| {
            let d = x.sqrt() - y.sqrt();
            d * d
        })
        .sum();
    Ok(mean_term + var_term)
}

/// Fréchet keypoint distance between two frame streams. A keypoint-space
/// stand-in for video-level FVD.
pub fn frechet_keypoint_distance(a: &[FrameVector], b: &[FrameVector]) -> Result<f64> {
    frechet_from_features(&fkd_features(a), &fkd_features(b))
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}
