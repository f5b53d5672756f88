use super::{require_context, ModelKind, Predictor};
use crate::error::{Error, Result};
use crate::keypoint::FrameVector;

#[derive(Debug, Clone, Copy, Default)]
pub struct PersistencePredictor;

impl Predictor for PersistencePredictor {
    fn kind(&self) -> ModelKind {
        ModelKind::Persistence
    }

    fn predict_block(
        &self,
        context: &[FrameVector],
        _start: usize,
        horizon: usize,
    ) -> Result<Vec<FrameVector>> {
        require_context(context)?;
        Ok(vec![context[context.len() - 1]; horizon])
    }
}

/// Replays a known ground-truth stream; the reference for an error-free
/// receiver.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    truth: Vec<FrameVector>,
}

impl OraclePredictor {
    pub fn new(truth: Vec<FrameVector>) -> Self {
        OraclePredictor { truth }
    }
}

impl Predictor for OraclePredictor {
    fn kind(&self) -> ModelKind {
        ModelKind::Oracle
    }

    fn predict_block(
        &self,
        _context: &[FrameVector],
        start: usize,
        horizon: usize,
    ) -> Result<Vec<FrameVector>> {
        let end = start + horizon;
        if end > self.truth.len() {
            return Err(Error::InvalidArgument(format!(
                "oracle asked for frames {start}..{end} of a {}-frame stream",
                self.truth.len()
            )));
        }
        Ok(self.truth[start..end].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoint::FRAME_DIM;

    #[test]
    fn persistence_repeats_last_frame() {
        let a = [1.0; FRAME_DIM];
        let b = [2.0; FRAME_DIM];
        let out = PersistencePredictor.predict_block(&[a, b], 2, 3).unwrap();
        assert_eq!(out, vec![b; 3]);
        assert!(PersistencePredictor.predict_block(&[], 0, 1).is_err());
    }

    #[test]
    fn oracle_replays_truth() {
        let truth: Vec<FrameVector> = (0..5).map(|i| [i as f64; FRAME_DIM]).collect();
        let o = OraclePredictor::new(truth.clone());
        assert_eq!(o.predict_block(&[], 2, 2).unwrap(), truth[2..4].to_vec());
        assert!(o.predict_block(&[], 4, 2).is_err());
    }
}
