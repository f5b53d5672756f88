use std::collections::{BTreeMap, VecDeque};

use super::schedule::{schedule_blocks_asym, BlockSchedule, SpanKind};
use super::wire::{decode_prefix, decode_stream, encode_into, WireBody, WireFrame, KEY_FRAME_BYTES};
use crate::error::{Error, Result};
use crate::eval::frame_mse;
use crate::keypoint::{FrameVector, KeypointFrame, KeypointSequence, NormalizationStats};
use crate::predictor::{ModelKind, Predictor, StreamPredictor};

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOptions {
    pub k_in: usize,
    pub k_out: usize,
    pub session_id: u64,
    /// Carry recurrent state across the whole session instead of restarting
    /// from the preceding `k_in` frames at every predicted block.
    pub streaming: bool,
    pub keep_transcript: bool,
}

impl SessionOptions {
    pub fn new(k: usize) -> Self {
        SessionOptions {
            k_in: k,
            k_out: k,
            session_id: 0,
            streaming: false,
            keep_transcript: false,
        }
    }
}

/// In-order, lossless byte pipe between sender and receiver.
#[derive(Debug, Default)]
pub struct Channel {
    buffer: VecDeque<u8>,
    bytes_carried: usize,
    transcript: Option<Vec<u8>>,
}

impl Channel {
    pub fn new(keep_transcript: bool) -> Self {
        Channel {
            transcript: keep_transcript.then(Vec::new),
            ..Channel::default()
        }
    }

    pub fn send(&mut self, bytes: &[u8]) {
        self.buffer.extend(bytes);
        self.bytes_carried += bytes.len();
        if let Some(t) = &mut self.transcript {
            t.extend_from_slice(bytes);
        }
    }

    /// Next complete frame, if one has fully arrived.
    pub fn receive(&mut self) -> Result<Option<WireFrame>> {
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let bytes = self.buffer.make_contiguous();
        match decode_prefix(bytes) {
            Ok((frame, used)) => {
                self.buffer.drain(..used);
                Ok(Some(frame))
            }
            Err(super::DecodeError::Truncated { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn bytes_carried(&self) -> usize {
        self.bytes_carried
    }

    pub fn into_transcript(self) -> Option<Vec<u8>> {
        self.transcript
    }
}

/// Walks the schedule and emits one wire frame per source frame.
pub struct Sender<'a> {
    session: u64,
    frames: &'a [FrameVector],
    schedule: &'a BlockSchedule,
    next: usize,
}

impl<'a> Sender<'a> {
    pub fn new(session: u64, frames: &'a [FrameVector], schedule: &'a BlockSchedule) -> Result<Self> {
        if frames.len() != schedule.len {
            return Err(Error::Protocol(format!(
                "schedule covers {} frames but the sequence has {}",
                schedule.len,
                frames.len()
            )));
        }
        if u32::try_from(frames.len()).is_err() {
            return Err(Error::Protocol("sequence too long for 32-bit frame indices".into()));
        }
        Ok(Sender {
            session,
            frames,
            schedule,
            next: 0,
        })
    }

    pub fn is_done(&self) -> bool {
        self.next == self.frames.len()
    }

    /// Emits the next frame. Returns false once everything has been sent.
    pub fn step(&mut self, channel: &mut Channel) -> bool {
        let t = self.next;
        let Some(kind) = self.schedule.kind_at(t) else {
            return false;
        };
        let index = t as u32;
        let frame = match kind {
            SpanKind::Send => WireFrame::key(self.session, index, &self.frames[t]),
            SpanKind::Predict => WireFrame::skip(self.session, index),
        };
        let mut bytes = Vec::with_capacity(KEY_FRAME_BYTES);
        encode_into(&frame, &mut bytes);
        channel.send(&bytes);
        self.next += 1;
        true
    }
}

/// Rebuilds the stream from KEY payloads and predictions. The receiver knows
/// the session parameters and therefore the schedule; it only ever reads
/// frames it has already received or predicted.
pub struct Receiver<'p> {
    session: u64,
    schedule: BlockSchedule,
    predictor: &'p dyn Predictor,
    stream: Option<Box<dyn StreamPredictor + 'p>>,
    frames: Vec<FrameVector>,
    pending: VecDeque<FrameVector>,
    keys: usize,
    skips: usize,
}

impl<'p> Receiver<'p> {
    pub fn new(
        session: u64,
        schedule: BlockSchedule,
        predictor: &'p dyn Predictor,
        streaming: bool,
    ) -> Self {
        let stream = streaming.then(|| predictor.stream(schedule.k_in));
        Receiver {
            session,
            frames: Vec::with_capacity(schedule.len),
            schedule,
            predictor,
            stream,
            pending: VecDeque::new(),
            keys: 0,
            skips: 0,
        }
    }

    pub fn accept(&mut self, frame: WireFrame) -> Result<()> {
        if frame.session != self.session {
            return Err(Error::Protocol(format!(
                "frame for session {} arrived on session {}",
                frame.session, self.session
            )));
        }
        let t = self.frames.len();
        if frame.index as usize != t {
            return Err(Error::Protocol(format!(
                "expected frame {t}, got frame {}",
                frame.index
            )));
        }
        let expected = self.schedule.kind_at(t).ok_or_else(|| {
            Error::Protocol(format!("frame {t} is past the end of the schedule"))
        })?;
        match (expected, frame.body) {
            (SpanKind::Send, WireBody::Key(_)) => {
                let v = frame.values().expect("key frame");
                if let Some(s) = &mut self.stream {
                    s.observe(&v)?;
                }
                self.frames.push(v);
                self.keys += 1;
            }
            (SpanKind::Predict, WireBody::Skip) => {
                if self.pending.is_empty() {
                    self.predict_block(t)?;
                }
                let v = self.pending.pop_front().expect("block predicted");
                self.frames.push(v);
                self.skips += 1;
            }
            (kind, _) => {
                return Err(Error::Protocol(format!(
                    "frame {t}: schedule expects a {kind} span but a {:?} frame arrived",
                    frame.kind()
                )));
            }
        }
        Ok(())
    }

    fn predict_block(&mut self, start: usize) -> Result<()> {
        let k_out = self.schedule.k_out;
        let block = match &mut self.stream {
            Some(s) => s.predict(start, k_out)?,
            None => {
                let from = start - self.schedule.k_in;
                self.predictor
                    .predict_block(&self.frames[from..start], start, k_out)?
            }
        };
        if block.len() != k_out {
            return Err(Error::Protocol(format!(
                "predictor returned {} frames for a block of {k_out}",
                block.len()
            )));
        }
        if block.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("prediction for frames {start}..{}", start + k_out),
            });
        }
        self.pending.extend(block);
        Ok(())
    }

    pub fn frames(&self) -> &[FrameVector] {
        &self.frames
    }

    pub fn is_complete(&self) -> bool {
        self.frames.len() == self.schedule.len
    }

    pub fn into_frames(self) -> Vec<FrameVector> {
        self.frames
    }
}

/// Squared error of one predicted frame in normalized space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameError {
    pub frame: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionReport {
    pub source_id: String,
    pub model: ModelKind,
    pub k_in: usize,
    pub k_out: usize,
    pub len: usize,
    pub frames_sent: usize,
    pub frames_predicted: usize,
    pub bytes_sent: usize,
    pub bytes_baseline: usize,
    pub bandwidth_ratio: f64,
    pub frame_errors: Vec<FrameError>,
}

impl TransmissionReport {
    pub fn savings_factor(&self) -> f64 {
        self.len as f64 / self.frames_sent as f64
    }

    pub fn sent_fraction(&self) -> f64 {
        self.frames_sent as f64 / self.len as f64
    }

    /// Mean over predicted frames; `None` when nothing was predicted.
    pub fn mean_mse(&self) -> Option<f64> {
        if self.frame_errors.is_empty() {
            return None;
        }
        let sum: f64 = self.frame_errors.iter().map(|e| e.mse).sum();
        Some(sum / self.frame_errors.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub reconstruction: KeypointSequence,
    pub report: TransmissionReport,
    /// Every byte that crossed the channel, when requested.
    pub transcript: Option<Vec<u8>>,
}

/// Streams `sequence` through a sender, the channel and a receiver that fills
/// skipped frames with `predictor`. Per-frame errors are measured after
/// normalizing with `stats`.
pub fn simulate_session(
    sequence: &KeypointSequence,
    predictor: &dyn Predictor,
    opts: &SessionOptions,
    stats: &NormalizationStats,
) -> Result<SessionOutcome> {
    if let Some(max) = predictor.max_horizon() {
        if max < opts.k_out {
            return Err(Error::InvalidArgument(format!(
                "{} predicts at most {max} frames ahead but blocks are {} frames",
                predictor.kind(),
                opts.k_out
            )));
        }
    }
    let truth = sequence.vectors();
    let schedule = schedule_blocks_asym(truth.len(), opts.k_in, opts.k_out)?;
    let mut channel = Channel::new(opts.keep_transcript);
    let mut sender = Sender::new(opts.session_id, &truth, &schedule)?;
    let mut receiver = Receiver::new(opts.session_id, schedule.clone(), predictor, opts.streaming);
    while sender.step(&mut channel) {
        while let Some(frame) = channel.receive()? {
            receiver.accept(frame)?;
        }
    }
    if !receiver.is_complete() {
        return Err(Error::Protocol(format!(
            "receiver holds {} of {} frames after the session",
            receiver.frames().len(),
            schedule.len
        )));
    }

    let received = receiver.into_frames();
    let frame_errors = schedule
        .predicted_frames()
        .map(|t| {
            Ok(FrameError {
                frame: t,
                mse: frame_mse(&stats.normalize(&received[t])?, &stats.normalize(&truth[t])?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes_sent = channel.bytes_carried();
    let bytes_baseline = truth.len() * KEY_FRAME_BYTES;
    let report = TransmissionReport {
        source_id: sequence.source_id.clone(),
        model: predictor.kind(),
        k_in: opts.k_in,
        k_out: opts.k_out,
        len: truth.len(),
        frames_sent: receiver_count(&schedule, SpanKind::Send),
        frames_predicted: receiver_count(&schedule, SpanKind::Predict),
        bytes_sent,
        bytes_baseline,
        bandwidth_ratio: bytes_sent as f64 / bytes_baseline as f64,
        frame_errors,
    };
    let reconstruction = KeypointSequence {
        frames: received.iter().map(KeypointFrame::unflatten).collect(),
        fps: sequence.fps,
        source_id: sequence.source_id.clone(),
        split: sequence.split,
    };
    Ok(SessionOutcome {
        reconstruction,
        report,
        transcript: channel.into_transcript(),
    })
}

fn receiver_count(schedule: &BlockSchedule, kind: SpanKind) -> usize {
    match kind {
        SpanKind::Send => schedule.frames_sent(),
        SpanKind::Predict => schedule.frames_predicted(),
    }
}

/// Feeds a recorded transcript through a fresh receiver and returns the
/// frames it reconstructs.
pub fn replay_transcript(
    transcript: &[u8],
    predictor: &dyn Predictor,
    opts: &SessionOptions,
) -> Result<Vec<FrameVector>> {
    let frames = decode_stream(transcript)?;
    let schedule = schedule_blocks_asym(frames.len(), opts.k_in, opts.k_out)?;
    let mut receiver = Receiver::new(opts.session_id, schedule, predictor, opts.streaming);
    for f in frames {
        receiver.accept(f)?;
    }
    Ok(receiver.into_frames())
}

/// One row of [`bandwidth_summary`].
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthRow {
    pub model: ModelKind,
    pub k_in: usize,
    pub k_out: usize,
    pub sessions: usize,
    pub mean_bandwidth_ratio: f64,
    /// Pooled over every predicted frame; `None` if nothing was predicted.
    pub mean_predicted_mse: Option<f64>,
    pub mean_savings_factor: f64,
}

/// Per model and block size: mean byte ratio, mean predicted-frame error and
/// mean frame-count savings.
pub fn bandwidth_summary(reports: &[TransmissionReport]) -> Vec<BandwidthRow> {
    let mut groups: BTreeMap<(ModelKind, usize, usize), Vec<&TransmissionReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.model, r.k_in, r.k_out)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((model, k_in, k_out), rs)| {
            let n = rs.len() as f64;
            let errors: Vec<f64> = rs.iter().flat_map(|r| r.frame_errors.iter().map(|e| e.mse)).collect();
            BandwidthRow {
                model,
                k_in,
                k_out,
                sessions: rs.len(),
                mean_bandwidth_ratio: rs.iter().map(|r| r.bandwidth_ratio).sum::<f64>() / n,
                mean_predicted_mse: (!errors.is_empty())
                    .then(|| errors.iter().sum::<f64>() / errors.len() as f64),
                mean_savings_factor: rs.iter().map(|r| r.savings_factor()).sum::<f64>() / n,
            }
        })
        .collect()
}
