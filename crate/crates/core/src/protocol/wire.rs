//! Byte layout of one frame on the channel, little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "KPS1"
//! 4       1     kind: 0 = KEY, 1 = SKIP
//! 5       8     session id (u64)
//! 13      4     frame index (u32)
//! 17      240   KEY only: 60 x f32 payload
//! ```

use thiserror::Error;

use crate::keypoint::{FrameVector, FRAME_DIM};

pub const WIRE_MAGIC: [u8; 4] = *b"KPS1";
pub const HEADER_BYTES: usize = 17;
pub const SKIP_FRAME_BYTES: usize = HEADER_BYTES;
pub const KEY_FRAME_BYTES: usize = HEADER_BYTES + 4 * FRAME_DIM;

const KIND_KEY: u8 = 0;
const KIND_SKIP: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WireKind {
    Key,
    Skip,
}

#[derive(Debug, Clone, Copy)]
pub enum WireBody {
    /// A transmitted frame at single precision.
    Key([f32; FRAME_DIM]),
    /// Marks a frame the receiver must predict.
    Skip,
}

// Bitwise so that every decodable payload, NaN included, compares equal to
// itself after a round trip.
impl PartialEq for WireBody {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (WireBody::Key(a), WireBody::Key(b)) => {
                a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (WireBody::Skip, WireBody::Skip) => true,
            _ => false,
        }
    }
}

impl Eq for WireBody {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireFrame {
    pub session: u64,
    pub index: u32,
    pub body: WireBody,
}

impl WireFrame {
    /// A KEY frame carrying `values` rounded to single precision.
    pub fn key(session: u64, index: u32, values: &FrameVector) -> Self {
        WireFrame {
            session,
            index,
            body: WireBody::Key(values.map(|v| v as f32)),
        }
    }

    pub fn skip(session: u64, index: u32) -> Self {
        WireFrame {
            session,
            index,
            body: WireBody::Skip,
        }
    }

    pub fn kind(&self) -> WireKind {
        match self.body {
            WireBody::Key(_) => WireKind::Key,
            WireBody::Skip => WireKind::Skip,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self.body {
            WireBody::Key(_) => KEY_FRAME_BYTES,
            WireBody::Skip => SKIP_FRAME_BYTES,
        }
    }

    /// The payload widened back to double precision.
    pub fn values(&self) -> Option<FrameVector> {
        match &self.body {
            WireBody::Key(p) => Some(p.map(f64::from)),
            WireBody::Skip => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),

    #[error("unknown frame kind {0}")]
    UnknownKind(u8),

    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
}

pub fn encode_frame(frame: &WireFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.encoded_len());
    encode_into(frame, &mut out);
    out
}

/// Appends the encoding of `frame` to `out`.
pub fn encode_into(frame: &WireFrame, out: &mut Vec<u8>) {
    out.extend_from_slice(&WIRE_MAGIC);
    out.push(match frame.body {
        WireBody::Key(_) => KIND_KEY,
        WireBody::Skip => KIND_SKIP,
    });
    out.extend_from_slice(&frame.session.to_le_bytes());
    out.extend_from_slice(&frame.index.to_le_bytes());
    if let WireBody::Key(p) = &frame.body {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Decodes exactly one frame; extra bytes are an error.
pub fn decode_frame(bytes: &[u8]) -> Result<WireFrame, DecodeError> {
    let (frame, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - used));
    }
    Ok(frame)
}

/// Decodes the frame at the start of `bytes` and returns it with the number
/// of bytes it occupied.
pub fn decode_prefix(bytes: &[u8]) -> Result<(WireFrame, usize), DecodeError> {
    let need = |needed: usize| {
        if bytes.len() < needed {
            Err(DecodeError::Truncated {
                needed,
                available: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(4)?;
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != WIRE_MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    need(5)?;
    let kind = bytes[4];
    if kind != KIND_KEY && kind != KIND_SKIP {
        return Err(DecodeError::UnknownKind(kind));
    }
    need(HEADER_BYTES)?;
    let session = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes"));
    let index = u32::from_le_bytes(bytes[13..17].try_into().expect("4 bytes"));
    if kind == KIND_SKIP {
        return Ok((WireFrame::skip(session, index), SKIP_FRAME_BYTES));
    }
    need(KEY_FRAME_BYTES)?;
    let mut payload = [0f32; FRAME_DIM];
    for (v, chunk) in payload
        .iter_mut()
        .zip(bytes[HEADER_BYTES..KEY_FRAME_BYTES].chunks_exact(4))
    {
        *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
    }
    let frame = WireFrame {
        session,
        index,
        body: WireBody::Key(payload),
    };
    Ok((frame, KEY_FRAME_BYTES))
}

/// Splits a concatenation of encoded frames, such as a session transcript.
pub fn decode_stream(mut bytes: &[u8]) -> Result<Vec<WireFrame>, DecodeError> {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (f, used) = decode_prefix(bytes)?;
        frames.push(f);
        bytes = &bytes[used..];
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_frame() -> WireFrame {
        let mut v = [0.0; FRAME_DIM];
        for (i, x) in v.iter_mut().enumerate() {
            *x = i as f64 * 0.25 - 3.0;
        }
        WireFrame::key(0xdead_beef_0000_0001, 42, &v)
    }

    #[test]
    fn frame_sizes() {
        assert_eq!(encode_frame(&WireFrame::skip(1, 2)).len(), 17);
        assert_eq!(encode_frame(&key_frame()).len(), 257);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_frame(&WireFrame::skip(0x0102_0304_0506_0708, 0x0a0b_0c0d));
        assert_eq!(
            bytes,
            [
                b'K', b'P', b'S', b'1', 1, 8, 7, 6, 5, 4, 3, 2, 1, 0x0d, 0x0c, 0x0b, 0x0a
            ]
        );
        let key = encode_frame(&key_frame());
        assert_eq!(key[4], 0);
        assert_eq!(&key[17..21], &(-3.0f32).to_le_bytes());
    }

    #[test]
    fn round_trip() {
        for f in [key_frame(), WireFrame::skip(9, 0)] {
            let bytes = encode_frame(&f);
            assert_eq!(decode_frame(&bytes).unwrap(), f);
        }
    }

    #[test]
    fn typed_errors() {
        let good = encode_frame(&key_frame());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_frame(&bad), Err(DecodeError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 7;
        assert_eq!(decode_frame(&bad), Err(DecodeError::UnknownKind(7)));
        assert_eq!(
            decode_frame(&good[..100]),
            Err(DecodeError::Truncated { needed: 257, available: 100 })
        );
        assert!(matches!(decode_frame(&good[..2]), Err(DecodeError::Truncated { .. })));
        let mut long = good.clone();
        long.push(0);
        assert_eq!(decode_frame(&long), Err(DecodeError::TrailingBytes(1)));
    }

    #[test]
    fn stream_splits_concatenation() {
        let frames = [key_frame(), WireFrame::skip(1, 43), WireFrame::skip(1, 44)];
        let mut bytes = Vec::new();
        for f in &frames {
            encode_into(f, &mut bytes);
        }
        assert_eq!(decode_stream(&bytes).unwrap(), frames);
    }

    #[test]
    fn nan_payload_survives_bitwise() {
        let mut p = [0f32; FRAME_DIM];
        p[3] = f32::from_bits(0x7fc0_1234);
        let f = WireFrame { session: 0, index: 0, body: WireBody::Key(p) };
        let back = decode_frame(&encode_frame(&f)).unwrap();
        assert_eq!(back, f);
        assert_ne!(back, WireFrame { body: WireBody::Key([0.0; FRAME_DIM]), ..f });
    }
}
