//! Block-alternating send/predict transmission.
//!
//! The sender transmits `k_in` frames, then skips `k_out` frames that the
//! receiver fills in with a predictor, and repeats while a full cycle fits.
//! Frames travel as [`WireFrame`]s over an in-order lossless [`Channel`].

mod schedule;
mod session;
pub mod wire;

pub use schedule::{schedule_blocks, schedule_blocks_asym, BlockSchedule, Span, SpanKind};
pub use session::{
    bandwidth_summary, replay_transcript, simulate_session, BandwidthRow, Channel, FrameError,
    Receiver, Sender, SessionOptions, SessionOutcome, TransmissionReport,
};
pub use wire::{
    decode_frame, decode_stream, encode_frame, DecodeError, WireBody, WireFrame, WireKind,
    KEY_FRAME_BYTES, SKIP_FRAME_BYTES,
};
