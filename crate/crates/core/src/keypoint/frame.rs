use crate::error::{Error, Result};

pub const NUM_KEYPOINTS: usize = 10;
/// Width of the coordinate block at the front of a flattened frame.
pub const COORD_DIMS: usize = 2 * NUM_KEYPOINTS;
pub const FRAME_DIM: usize = COORD_DIMS + 4 * NUM_KEYPOINTS;

pub type FrameVector = [f64; FRAME_DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointFrame {
    /// `(x, y)` per keypoint, normalized image coordinates.
    pub coords: [[f64; 2]; NUM_KEYPOINTS],
    /// Row-major 2x2 Jacobian per keypoint: `jacobians[i][row][col]`.
    pub jacobians: [[[f64; 2]; 2]; NUM_KEYPOINTS],
}

impl Default for KeypointFrame {
    /// All keypoints at the origin with identity Jacobians.
    fn default() -> Self {
        KeypointFrame {
            coords: [[0.0; 2]; NUM_KEYPOINTS],
            jacobians: [[[1.0, 0.0], [0.0, 1.0]]; NUM_KEYPOINTS],
        }
    }
}

impl KeypointFrame {
    pub fn flatten(&self) -> FrameVector {
        let mut out = [0.0; FRAME_DIM];
        for (i, c) in self.coords.iter().enumerate() {
            out[2 * i] = c[0];
            out[2 * i + 1] = c[1];
        }
        for (i, j) in self.jacobians.iter().enumerate() {
            let base = COORD_DIMS + 4 * i;
            out[base] = j[0][0];
            out[base + 1] = j[0][1];
            out[base + 2] = j[1][0];
            out[base + 3] = j[1][1];
        }
        out
    }

    pub fn unflatten(v: &FrameVector) -> Self {
        let mut frame = KeypointFrame::default();
        for i in 0..NUM_KEYPOINTS {
            frame.coords[i] = [v[2 * i], v[2 * i + 1]];
            let base = COORD_DIMS + 4 * i;
            frame.jacobians[i] = [[v[base], v[base + 1]], [v[base + 2], v[base + 3]]];
        }
        frame
    }

    /// Builds a frame from a slice that must hold exactly [`FRAME_DIM`] values.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let v: &FrameVector = values
            .try_into()
            .map_err(|_| Error::dim("keypoint frame", FRAME_DIM, values.len()))?;
        Ok(Self::unflatten(v))
    }

    /// `index` is only used to label errors.
    pub fn validate(&self, index: usize) -> Result<()> {
        match self.flatten().iter().position(|v| !v.is_finite()) {
            Some(position) => Err(Error::FrameNonFinite {
                frame: index,
                position,
            }),
            None => Ok(()),
        }
    }
}
