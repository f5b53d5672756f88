use super::{FrameVector, KeypointSequence, FRAME_DIM};
use crate::error::{Error, Result};

/// Smallest standard deviation kept per dimension.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension z-score statistics, fitted on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: FrameVector,
    pub std: FrameVector,
    pub computed_over: String,
}

impl NormalizationStats {
    /// Zero mean, unit std: normalization is the identity.
    pub fn identity() -> Self {
        NormalizationStats {
            mean: [0.0; FRAME_DIM],
            std: [1.0; FRAME_DIM],
            computed_over: "identity".into(),
        }
    }

    /// Population mean/std over every frame of `sequences`, std floored at
    /// [`STD_FLOOR`].
    pub fn fit<'a>(
        sequences: impl IntoIterator<Item = &'a KeypointSequence>,
        computed_over: impl Into<String>,
    ) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0; FRAME_DIM];
        let mut vectors = Vec::new();
        for seq in sequences {
            for frame in &seq.frames {
                let v = frame.flatten();
                for (s, x) in sum.iter_mut().zip(v.iter()) {
                    *s += x;
                }
                vectors.push(v);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyDataset(
                "cannot fit normalization stats on zero frames".into(),
            ));
        }
        let n = count as f64;
        let mean = sum.map(|s| s / n);
        let mut var = [0.0; FRAME_DIM];
        for v in &vectors {
            for i in 0..FRAME_DIM {
                let d = v[i] - mean[i];
                var[i] += d * d;
            }
        }
        let std = var.map(|s| (s / n).sqrt().max(STD_FLOOR));
        Ok(NormalizationStats {
            mean,
            std,
            computed_over: computed_over.into(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .std
            .iter()
            .position(|s| !(s.is_finite() && *s >= STD_FLOOR))
        {
            return Err(Error::InvalidArgument(format!(
                "normalization std[{i}] = {} is below the floor {STD_FLOOR}",
                self.std[i]
            )));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite {
                context: "normalization mean".into(),
            });
        }
        Ok(())
    }

    pub fn normalize(&self, v: &FrameVector) -> Result<FrameVector> {
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("normalize input at position {i}"),
            });
        }
        let mut out = [0.0; FRAME_DIM];
        for i in 0..FRAME_DIM {
            out[i] = (v[i] - self.mean[i]) / self.std[i];
        }
        Ok(out)
    }

    pub fn denormalize(&self, v: &FrameVector) -> FrameVector {
        let mut out = [0.0; FRAME_DIM];
        for i in 0..FRAME_DIM {
            out[i] = v[i] * self.std[i] + self.mean[i];
        }
        out
    }

    pub(crate) fn denormalize_slice(&self, v: &[f64]) -> Result<FrameVector> {
        let arr: &FrameVector = v
            .try_into()
            .map_err(|_| Error::dim("denormalize", FRAME_DIM, v.len()))?;
        Ok(self.denormalize(arr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoint::KeypointFrame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(mean: f64, std: f64) -> NormalizationStats {
        NormalizationStats {
            mean: [mean; FRAME_DIM],
            std: [std; FRAME_DIM],
            computed_over: "test".into(),
        }
    }

    #[test]
    fn mean_maps_to_zero() {
        let s = stats(0.3, 1.7);
        assert_eq!(s.normalize(&[0.3; FRAME_DIM]).unwrap(), [0.0; FRAME_DIM]);
    }

    #[test]
    fn scales_by_std() {
        let s = stats(0.0, 2.0);
        assert_eq!(s.normalize(&[2.0; FRAME_DIM]).unwrap(), [1.0; FRAME_DIM]);
    }

    #[test]
    fn rejects_non_finite() {
        let mut v = [0.0; FRAME_DIM];
        v[17] = f64::INFINITY;
        assert!(matches!(
            stats(0.0, 1.0).normalize(&v),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn round_trip_relative_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = stats(0.0, 1.0);
        for i in 0..FRAME_DIM {
            s.mean[i] = rng.random_range(-2.0..2.0);
            s.std[i] = rng.random_range(1e-3..5.0);
        }
        for _ in 0..1000 {
            let mut v = [0.0; FRAME_DIM];
            for x in v.iter_mut() {
                *x = rng.random_range(-10.0..10.0);
            }
            let back = s.denormalize(&s.normalize(&v).unwrap());
            for i in 0..FRAME_DIM {
                let rel = (back[i] - v[i]).abs() / v[i].abs().max(1e-300);
                assert!(rel < 1e-9, "dim {i}: {} vs {}", back[i], v[i]);
            }
        }
    }

    #[test]
    fn constant_data_floors_std() {
        let seq = KeypointSequence::new(vec![KeypointFrame::default(); 5], 25.0, "c").unwrap();
        let s = NormalizationStats::fit([&seq], "c").unwrap();
        assert!(s.std.iter().all(|&x| x == STD_FLOOR));
        s.validate().unwrap();
    }
}
