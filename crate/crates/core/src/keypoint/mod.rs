//! Keypoint frames and sequences.
//!
//! A frame carries 10 keypoints, each a 2D coordinate plus the 2x2 Jacobian of
//! the local affine motion around it. Models and the wire format work on the
//! flat 60-vector produced by [`KeypointFrame::flatten`]:
//!
//! ```text
//! [ x0 y0 x1 y1 ... x9 y9 | J0(0,0) J0(0,1) J0(1,0) J0(1,1) ... J9(1,1) ]
//!   0                  19   20                                        59
//! ```

mod frame;
pub mod io;
pub mod manifest;
mod normalize;
pub mod synth;

pub use frame::{FrameVector, KeypointFrame, COORD_DIMS, FRAME_DIM, NUM_KEYPOINTS};
pub use manifest::DatasetManifest;
pub use normalize::{NormalizationStats, STD_FLOOR};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// An ordered run of frames from one video.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSequence {
    pub frames: Vec<KeypointFrame>,
    pub fps: f64,
    pub source_id: String,
    pub split: Split,
}

impl KeypointSequence {
    pub fn new(frames: Vec<KeypointFrame>, fps: f64, source_id: impl Into<String>) -> Result<Self> {
        let seq = KeypointSequence {
            frames,
            fps,
            source_id: source_id.into(),
            split: Split::Train,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Checks length, fps, source id and per-frame finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "sequence `{}` has no frames",
                self.source_id
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sequence `{}` has invalid fps {}",
                self.source_id, self.fps
            )));
        }
        validate_source_id(&self.source_id)?;
        for (index, frame) in self.frames.iter().enumerate() {
            frame.validate(index)?;
        }
        Ok(())
    }

    pub fn vectors(&self) -> Vec<FrameVector> {
        self.frames.iter().map(KeypointFrame::flatten).collect()
    }
}

pub(crate) fn validate_source_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!(
            "source id `{id}` must be non-empty and contain no whitespace"
        )));
    }
    Ok(())
}
